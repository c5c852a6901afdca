#include "mslu/eval/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "mslu/error.hpp"

namespace mslu::eval {

std::vector<float> mean_embedding(const decoder::RepresentationSequence& repr) {
  if (repr.length == 0 || repr.vectors.size() != repr.length * repr.width) {
    throw ShapeError("mean_embedding: empty or inconsistent sequence");
  }
  std::vector<double> acc(repr.width, 0.0);
  for (std::size_t t = 0; t < repr.length; ++t) {
    for (std::size_t k = 0; k < repr.width; ++k) acc[k] += repr.vectors[t * repr.width + k];
  }
  std::vector<float> out(repr.width);
  for (std::size_t k = 0; k < repr.width; ++k) out[k] = static_cast<float>(acc[k] / double(repr.length));
  return out;
}

void export_embeddings(const std::filesystem::path& archive, const std::filesystem::path& index,
                       const std::vector<EmbeddingRecord>& records) {
  train::Archive ar;
  Json items = Json::object();
  for (const auto& r : records) {
    if (items.contains(r.id)) throw DataError("export_embeddings: duplicate utterance id " + r.id);
    auto v = mean_embedding(*r.repr);
    const std::size_t n = v.size();
    items[r.id] = {{"layer", r.repr->layer},
                   {"shape", {n}},
                   {"token_string", r.token_string},
                   {"intent", r.intent}};
    ar.put(r.id, {n}, std::move(v));
  }
  ar.meta = {{"kind", "embeddings"}, {"count", records.size()}};
  write_archive(archive, ar);
  Json j{{"schema_version", kReportSchemaVersion}, {"archive", archive.filename().string()}, {"items", items}};
  std::ofstream f(index);
  f << j.dump(2) << "\n";
  if (!f) throw Error("cannot write " + index.string());
}

AttentionReport attention_report(const slu::SluHead<float>& head, const decoder::RepresentationSequence& repr,
                                 const ctc::Vocabulary& vocab, const slu::IntentSchema& schema,
                                 const std::string& utterance) {
  nn::NoGradGuard guard;
  const auto batch = slu::collate_representations<float>({&repr});
  const auto out = head(batch.x, batch.valid, {});

  AttentionReport r;
  r.utterance = utterance;
  r.layer = repr.layer;
  for (std::size_t t = 0; t < repr.length; ++t) {
    r.tokens.push_back(t < repr.tokens.size() ? vocab.symbol(repr.tokens[t]) : "frame" + std::to_string(t));
  }
  for (const auto& w : out.weights) {
    const std::size_t heads = w.dim(1), L = w.dim(3);
    std::vector<std::vector<double>> layer(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < repr.length && t < L; ++t) layer[h].push_back(w.data()[h * L + t]);
    }
    r.weights.push_back(std::move(layer));
  }
  r.prediction = command_name(slu::enforce_structure_logits(out.logits.data(), schema).command);
  return r;
}

Json to_json(const AttentionReport& report) {
  Json j{{"schema_version", kReportSchemaVersion},
         {"utterance", report.utterance},
         {"layer", report.layer},
         {"tokens", report.tokens},
         {"prediction", report.prediction},
         {"layers", Json::array()}};
  for (const auto& layer : report.weights) j["layers"].push_back({{"heads", layer}});
  return j;
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string attention_svg(const AttentionReport& report) {
  constexpr int cell = 36, left = 90, top = 70;
  std::size_t rows = 0;
  for (const auto& layer : report.weights) rows += layer.size();
  const std::size_t cols = report.tokens.size();
  const int width = left + int(cols) * cell + 20;
  const int height = top + int(rows) * cell + 40;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
                  std::to_string(height) + "\" font-family=\"monospace\" font-size=\"11\">\n";
  s += "<title>" + escape_xml(report.utterance + " -> " + report.prediction) + "</title>\n";
  s += "<text x=\"4\" y=\"14\">" + escape_xml(report.utterance + "  predicted: " + report.prediction) + "</text>\n";
  for (std::size_t t = 0; t < cols; ++t) {
    const int x = left + int(t) * cell + cell / 2;
    s += "<text class=\"token\" x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top - 8) +
         "\" text-anchor=\"start\" transform=\"rotate(-45 " + std::to_string(x) + " " + std::to_string(top - 8) +
         ")\">" + escape_xml(report.tokens[t]) + "</text>\n";
  }
  std::size_t row = 0;
  for (std::size_t l = 0; l < report.weights.size(); ++l) {
    for (std::size_t h = 0; h < report.weights[l].size(); ++h, ++row) {
      const int y = top + int(row) * cell;
      s += "<text x=\"4\" y=\"" + std::to_string(y + cell / 2 + 4) + "\">layer " + std::to_string(l) + " head " +
           std::to_string(h) + "</text>\n";
      for (std::size_t t = 0; t < report.weights[l][h].size(); ++t) {
        const double w = report.weights[l][h][t];
        const int shade = 255 - int(std::lround(std::clamp(w, 0.0, 1.0) * 255.0));
        s += "<rect x=\"" + std::to_string(left + int(t) * cell) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             std::to_string(cell) + "\" height=\"" + std::to_string(cell) + "\" fill=\"rgb(" + std::to_string(shade) +
             "," + std::to_string(shade) + ",255)\" stroke=\"#ccc\"><title>" + fmt("%.4f", w) + "</title></rect>\n";
      }
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace mslu::eval
