#include "mslu/train/checkpoint.hpp"

#include <cmath>

#include "mslu/error.hpp"

namespace mslu::train {

SpeechBundle make_speech_bundle(encoder::ModelConfig cfg, ctc::Vocabulary vocab,
                                const features::FeatureConfig& features, features::FeatureStats stats,
                                std::uint64_t seed) {
  cfg.vocab = vocab.size();
  cfg.mel_bins = static_cast<std::size_t>(features.mel_bins);
  return {decoder::SpeechModel<float>(cfg, seed), std::move(vocab), features, std::move(stats)};
}

OptimizerState capture(Adam& adam) {
  OptimizerState s;
  s.steps = adam.steps();
  for (const auto& p : adam.parameters()) s.names.push_back(p.name);
  s.m = adam.first_moments();
  s.v = adam.second_moments();
  return s;
}

void restore(Adam& adam, const OptimizerState& state) {
  const auto& params = adam.parameters();
  if (state.names.size() != params.size()) throw FormatError("optimizer state: parameter count differs");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.names[k] != params[k].name || state.m[k].size() != params[k].tensor.size()) {
      throw FormatError("optimizer state: mismatch at " + params[k].name);
    }
  }
  adam.first_moments() = state.m;
  adam.second_moments() = state.v;
  adam.set_steps(state.steps);
}

Json to_json(const slu::IntentSchema& schema) {
  Json bits = Json::array();
  for (const auto& b : schema.bits) {
    bits.push_back({{"kind", b.kind == slu::LabelBit::Kind::Action ? "action" : "value"},
                    {"slot", b.slot},
                    {"value", b.value}});
  }
  Json commands = Json::array();
  for (const auto& c : schema.commands) commands.push_back({{"action", c.action}, {"args", c.args}});
  return {{"bits", bits}, {"commands", commands}};
}

slu::IntentSchema schema_from_json(const Json& j) {
  slu::IntentSchema s;
  try {
    for (const auto& b : j.at("bits")) {
      const auto kind = b.at("kind").get<std::string>();
      if (kind != "action" && kind != "value") throw FormatError("schema: bad bit kind '" + kind + "'");
      s.bits.push_back({kind == "action" ? slu::LabelBit::Kind::Action : slu::LabelBit::Kind::Value,
                        b.at("slot").get<std::string>(), b.at("value").get<std::string>()});
    }
    for (const auto& c : j.at("commands")) {
      s.commands.push_back({c.at("action").get<std::string>(), c.at("args").get<std::map<std::string, std::string>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("schema: ") + e.what());
  }
  std::vector<slu::Multihot> vectors;
  for (const auto& c : s.commands) vectors.push_back(slu::encode_intent(c, s));
  s.valid_set = std::move(vectors);
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return s;
}

namespace {

Json state_json(const TrainState& s) {
  return {{"epoch", s.epoch},
          {"step", s.step},
          {"best", std::isnan(s.best) ? Json(nullptr) : Json(s.best)},
          {"best_epoch", s.best_epoch},
          {"since_best", s.since_best}};
}

TrainState state_from_json(const Json& j) {
  TrainState s;
  s.epoch = j.at("epoch").get<std::size_t>();
  s.step = j.at("step").get<std::size_t>();
  s.best = j.at("best").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("best").get<double>();
  s.best_epoch = j.at("best_epoch").get<std::size_t>();
  s.since_best = j.at("since_best").get<std::size_t>();
  return s;
}

const std::string kOptimPrefix = "optimizer.";

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  Archive a;
  a.meta["train"] = to_json(c.train);
  a.meta["state"] = state_json(c.state);
  a.meta["metrics"] = c.metrics;
  if (c.speech) {
    const auto& s = *c.speech;
    a.meta["model"] = to_json(s.model.config);
    a.meta["vocab"] = s.vocab.symbols();
    a.meta["features"] = to_json(s.features);
    store_parameters(a, s.model.parameters());
    if (!s.stats.empty()) {
      a.put("features.mean", {s.stats.mean.size()}, s.stats.mean);
      a.put("features.stddev", {s.stats.stddev.size()}, s.stats.stddev);
    }
  }
  if (c.slu) {
    a.meta["slu"] = to_json(c.slu->head.config);
    a.meta["schema"] = to_json(c.slu->schema);
    a.meta["representation"] = to_json(c.slu->extract);
    store_parameters(a, c.slu->head.parameters());
  }
  if (!c.optimizer.empty()) {
    a.meta["optimizer"] = {{"steps", c.optimizer.steps}, {"parameters", c.optimizer.names}};
    for (std::size_t k = 0; k < c.optimizer.names.size(); ++k) {
      const auto& n = c.optimizer.names[k];
      a.put(kOptimPrefix + "m." + n, {c.optimizer.m[k].size()}, c.optimizer.m[k]);
      a.put(kOptimPrefix + "v." + n, {c.optimizer.v[k].size()}, c.optimizer.v[k]);
    }
  }
  write_archive(path, a);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Archive a = read_archive(path);
  Checkpoint c;
  const std::string where = path.string() + ": ";
  try {
    from_json(a.meta.at("train"), c.train);
    c.state = state_from_json(a.meta.at("state"));
    c.metrics = a.meta.value("metrics", Json::object());
    std::size_t expected = 0;
    if (a.meta.contains("model")) {
      encoder::ModelConfig cfg;
      from_json(a.meta.at("model"), cfg);
      features::FeatureConfig fc;
      from_json(a.meta.at("features"), fc);
      auto vocab = ctc::Vocabulary::from_symbols(a.meta.at("vocab").get<std::vector<std::string>>());
      if (vocab.size() != cfg.vocab) throw FormatError(where + "vocabulary size differs from model config");
      features::FeatureStats stats;
      if (a.has("features.mean")) {
        stats.mean = a.get("features.mean").values;
        stats.stddev = a.get("features.stddev").values;
        expected += 2;
      }
      SpeechBundle s{decoder::SpeechModel<float>(cfg, 0), std::move(vocab), fc, std::move(stats)};
      const auto params = s.model.parameters();
      load_parameters(a, params);
      expected += params.size();
      c.speech = std::move(s);
    }
    if (a.meta.contains("slu")) {
      slu::SluConfig sc;
      from_json(a.meta.at("slu"), sc);
      SluBundle b{slu::SluHead<float>(sc, 0), schema_from_json(a.meta.at("schema")), {}};
      from_json(a.meta.at("representation"), b.extract);
      if (b.schema.size() != sc.bits) throw FormatError(where + "schema size differs from head output width");
      const auto params = b.head.parameters();
      load_parameters(a, params);
      expected += params.size();
      c.slu = std::move(b);
    }
    if (a.meta.contains("optimizer")) {
      c.optimizer.steps = a.meta.at("optimizer").at("steps").get<std::size_t>();
      c.optimizer.names = a.meta.at("optimizer").at("parameters").get<std::vector<std::string>>();
      for (const auto& n : c.optimizer.names) {
        c.optimizer.m.push_back(a.get(kOptimPrefix + "m." + n).values);
        c.optimizer.v.push_back(a.get(kOptimPrefix + "v." + n).values);
      }
      expected += 2 * c.optimizer.names.size();
    }
    if (expected != a.tensors.size()) throw FormatError(where + "unexpected extra tensors");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(where + e.what());
  }
  return c;
}

}  // namespace mslu::train
