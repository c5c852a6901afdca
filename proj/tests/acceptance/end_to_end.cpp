#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <span>
#include <cstdio>

#include "acceptance.hpp"
#include "mslu/cli/commands.hpp"
#include "mslu/eval/curve.hpp"
#include "mslu/features/manifest.hpp"
#include "mslu/slu/schema.hpp"
#include "mslu/train/checkpoint.hpp"
#include "mslu/train/trainer.hpp"

namespace mslu::acceptance {

namespace fs = std::filesystem;
using train::Json;

namespace {

// Calibration run: valid TER 0.000, frozen accuracy 1.000, random backbone
// 0.025. Thresholds sit 5 points on the lenient side of those values.
constexpr double kMaxValidTer = 0.05;
constexpr double kMinFrozenAccuracy = 0.95;
constexpr double kMaxRandomAccuracy = 0.075;
constexpr double kFinetuneSlack = 0.005;

constexpr std::uint64_t kSeed = 2026;
constexpr std::size_t kCorpus = 2400, kValid = 200, kTest = 200;
constexpr std::size_t kPerClass = 10;

fs::path grammar_path() { return fs::path(MSLU_SOURCE_DIR) / "data" / "grammars" / "grabo_like.txt"; }

cli::RunConfig pipeline_config() {
  cli::RunConfig c;
  c.seed = kSeed;
  c.model.enc_layers = 4;
  c.model.dec_layers = 3;
  c.model.d_model = 128;
  c.model.heads = 4;
  c.model.ffn = 512;
  c.pretrain.epochs = 10;
  c.pretrain.batch_size = 32;
  c.pretrain.accum_steps = 1;
  c.pretrain.peak_lr = 0.0015;
  c.pretrain.warmup_steps = 300;
  return c;
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  return Json::parse(in);
}

std::vector<Json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  std::vector<Json> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(Json::parse(line));
  }
  return out;
}

std::uint64_t fnv1a(std::span<const float> v) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* p = reinterpret_cast<const unsigned char*>(v.data());
  for (std::size_t i = 0; i < v.size_bytes(); ++i) h = (h ^ p[i]) * 1099511628211ull;
  return h;
}

std::map<std::string, std::uint64_t> hashes(const train::Checkpoint& c) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& p : c.speech->model.parameters()) out[p.name] = fnv1a(p.tensor.data());
  for (const auto& p : c.slu->head.parameters()) out["slu." + p.name] = fnv1a(p.tensor.data());
  return out;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

// Block index of "decoder.N.*", or -1.
int decoder_block(const std::string& name) {
  if (!starts_with(name, "decoder.")) return -1;
  const auto rest = name.substr(8);
  const auto dot = rest.find('.');
  if (dot == std::string::npos || dot == 0) return -1;
  for (std::size_t i = 0; i < dot; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(rest[i]))) return -1;
  }
  return std::stoi(rest.substr(0, dot));
}

Outcome hash_contract(const fs::path& work, const fs::path& subset,
                      const train::Checkpoint& pretrained, const cli::Session& base) {
  encoder::ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 6;
  cfg.d_model = 64;
  cfg.heads = 4;
  cfg.ffn = 128;
  const auto& ps = *pretrained.speech;
  train::Checkpoint start;
  start.speech = train::make_speech_bundle(cfg, ps.vocab, ps.features, ps.stats, kSeed + 6);
  slu::SluConfig hc;
  hc.input_dim = cfg.d_model;
  hc.bits = pretrained.slu->schema.size();
  start.slu = train::SluBundle{slu::SluHead<float>(hc, kSeed + 7), pretrained.slu->schema, {}};
  train::save_checkpoint(work / "six_layer.ckpt", start);

  cli::Session s = base;
  s.config.finetune.epochs = 3;
  s.config.finetune.peak_lr = 1e-3;
  cli::FinetuneArgs fa;
  fa.train = subset;
  fa.checkpoint = work / "six_layer.ckpt";
  fa.out = work / "finetune_six";
  fa.unfreeze = "decoder_last4";
  fa.overwrite = true;
  const auto dir = cli::cmd_finetune(fa, s);
  const auto before = hashes(start);
  const auto after = hashes(train::load_checkpoint(dir / "finetuned.ckpt"));

  std::set<int> changed_blocks;
  std::size_t changed = 0, outside = 0, head_changed = 0, head_total = 0;
  std::string first_outside;
  for (const auto& [name, h] : before) {
    const bool differs = after.at(name) != h;
    const int block = decoder_block(name);
    const bool is_head = starts_with(name, "slu.");
    head_total += is_head;
    if (!differs) continue;
    ++changed;
    head_changed += is_head;
    if (block >= 2 && block <= 5) {
      changed_blocks.insert(block);
    } else if (!is_head) {
      ++outside;
      if (first_outside.empty()) first_outside = name;
    }
  }
  // The representation is read at decoder.4, so block 5 receives no gradient.
  const bool blocks_ok = changed_blocks.count(2) && changed_blocks.count(3) && changed_blocks.count(4);
  const bool pass = outside == 0 && blocks_ok && head_changed == head_total;
  std::string blocks;
  for (int b : changed_blocks) blocks += (blocks.empty() ? "" : ",") + std::to_string(b);
  return {pass, "6-layer decoder: changed " + std::to_string(changed) + "/" + std::to_string(before.size()) +
                    " tensors, decoder blocks {" + blocks + "}, SLU head " + std::to_string(head_changed) + "/" +
                    std::to_string(head_total) + ", outside the allowed set " + std::to_string(outside) +
                    (first_outside.empty() ? "" : " (" + first_outside + ")")};
}

}  // namespace

EndToEnd end_to_end(const fs::path& work, bool verbose) {
  EndToEnd out;
  fs::remove_all(work);
  fs::create_directories(work);
  cli::Session s;
  s.config = pipeline_config();
  s.config.validate();
  s.threads = 1;
  s.log = verbose ? &std::cerr : nullptr;
  s.invocation = "acceptance";
  const auto t0 = std::chrono::steady_clock::now();

  cli::SynthArgs sa;
  sa.grammar = grammar_path();
  sa.out = work / "corpus";
  sa.n = kCorpus;
  sa.valid = kValid;
  sa.test = kTest;
  sa.overwrite = true;
  const auto corpus = cli::cmd_synth(sa, s);

  cli::PretrainArgs pa;
  pa.train = corpus / "train.jsonl";
  pa.valid = corpus / "valid.jsonl";
  pa.out = work / "pretrain";
  pa.overwrite = true;
  const auto pre = cli::cmd_pretrain(pa, s);
  double best_ter = INFINITY;
  std::size_t epochs = 0;
  for (const auto& m : read_jsonl(pre / "metrics.jsonl")) {
    best_ter = std::min(best_ter, m.at("ter").get<double>());
    ++epochs;
  }

  // The same labelled subset serves the frozen, random-backbone and finetuned runs.
  const auto schema = slu::schema_from_grammar(features::load_grammar(grammar_path()));
  const auto entries = features::read_manifest(corpus / "train.jsonl");
  std::vector<slu::Multihot> labels;
  for (const auto& e : entries) labels.push_back(slu::encode_intent(e.intent, schema));
  auto rng = train::substream(kSeed, train::kData, kPerClass);
  std::vector<features::ManifestEntry> picked;
  for (auto i : eval::sample_per_class(labels, schema, kPerClass, rng, true)) picked.push_back(entries[i]);
  const auto subset = corpus / "train_subset.jsonl";
  features::write_manifest(subset, picked);

  auto slu_run = [&](const fs::path& ckpt, const std::string& name) {
    cli::SluArgs a;
    a.train = subset;
    a.checkpoint = ckpt;
    a.schema = grammar_path();
    a.out = work / name;
    a.valid = corpus / "valid.jsonl";
    a.test = corpus / "test.jsonl";
    a.overwrite = true;
    return cli::cmd_train_slu(a, s);
  };
  const auto frozen_dir = slu_run(pre / "best.ckpt", "slu_frozen");
  const auto frozen = read_json(frozen_dir / "report.json");
  const double frozen_acc = frozen.at("accuracy").get<double>();
  const double test_ter = frozen.at("ter").get<double>();

  auto random = train::load_checkpoint(pre / "best.ckpt");
  random.speech->model =
      decoder::SpeechModel<float>(random.speech->model.config, train::substream(kSeed, train::kInit, 99)());
  train::save_checkpoint(work / "random_backbone.ckpt", random);
  const double random_acc =
      read_json(slu_run(work / "random_backbone.ckpt", "slu_random") / "report.json").at("accuracy").get<double>();

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.synthetic = {best_ter < kMaxValidTer && frozen_acc >= kMinFrozenAccuracy && random_acc <= kMaxRandomAccuracy,
                   std::to_string(sa.n - sa.valid - sa.test) + " training utterances, " + std::to_string(epochs) +
                       " epochs: valid TER " + fmt(best_ter) + " (< " + fmt(kMaxValidTer, 2) + "), test TER " +
                       fmt(test_ter) + "; " + std::to_string(picked.size()) + " SLU examples: pretrained " +
                       fmt(frozen_acc) + " (>= " + fmt(kMinFrozenAccuracy, 2) + "), random backbone " +
                       fmt(random_acc) + " (<= " + fmt(kMaxRandomAccuracy, 3) + "), " + fmt(secs, 0) + " s"};

  cli::FinetuneArgs fa;
  fa.train = subset;
  fa.checkpoint = frozen_dir / "slu.ckpt";
  fa.out = work / "finetune";
  fa.valid = corpus / "valid.jsonl";
  fa.test = corpus / "test.jsonl";
  fa.unfreeze = "decoder_last4";
  fa.overwrite = true;
  const double tuned_acc = read_json(cli::cmd_finetune(fa, s) / "report.json").at("accuracy").get<double>();
  const auto contract = hash_contract(work, subset, train::load_checkpoint(frozen_dir / "slu.ckpt"), s);
  out.finetune = {contract.pass && tuned_acc >= frozen_acc - kFinetuneSlack,
                  contract.detail + "; tiny model test accuracy finetuned " + fmt(tuned_acc) + " vs frozen " +
                      fmt(frozen_acc) + " (slack " + fmt(kFinetuneSlack, 3) + ")"};

  cli::CurveArgs ca;
  ca.train = corpus / "train.jsonl";
  ca.test = corpus / "test.jsonl";
  ca.checkpoint = frozen_dir / "slu.ckpt";
  ca.out = work / "curve";
  ca.overwrite = true;
  const auto curve_dir = cli::cmd_curve(ca, s);
  std::set<std::pair<std::size_t, std::size_t>> cells;
  {
    std::ifstream in(curve_dir / "curve.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::size_t size = 0, repeat = 0;
      if (std::sscanf(line.c_str(), "%zu,%zu,", &size, &repeat) == 2) cells.insert({size, repeat});
    }
  }
  const auto& cc = s.config.curve;
  bool complete = cells.size() == cc.sizes.size() * cc.repeats;
  for (auto size : cc.sizes) {
    for (std::size_t r = 0; r < cc.repeats; ++r) complete = complete && cells.count({size, r});
  }
  std::map<std::size_t, std::pair<double, double>> points;
  bool std_reported = true;
  const auto curve_json = read_json(curve_dir / "curve.json");
  for (const auto& p : curve_json.at("points")) {
    std_reported = std_reported && p.contains("std_micro_f1") && std::isfinite(p.at("std_micro_f1").get<double>());
    points[p.at("size").get<std::size_t>()] = {p.at("mean_micro_f1").get<double>(),
                                               p.at("std_micro_f1").get<double>()};
  }
  const auto lo = points.count(1) ? points[1] : std::pair<double, double>{NAN, NAN};
  const auto hi = points.count(16) ? points[16] : std::pair<double, double>{NAN, NAN};
  std::string table;
  for (const auto& [size, ms] : points) {
    table += (table.empty() ? "" : ", ") + std::to_string(size) + ": " + fmt(ms.first, 3) + " +- " + fmt(ms.second, 3);
  }
  out.curve = {complete && std_reported && hi.first > lo.first,
               std::to_string(cells.size()) + "/" + std::to_string(cc.sizes.size() * cc.repeats) +
                   " CSV rows; mean micro-F1 +- std per size {" + table + "}"};
  return out;
}

}  // namespace mslu::acceptance
