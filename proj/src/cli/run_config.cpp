#include "mslu/cli/run_config.hpp"

#include <fstream>

#include "mslu/error.hpp"

namespace mslu::cli {

train::TrainConfig RunConfig::stage(const train::TrainConfig& c) const {
  auto out = c;
  out.seed = seed;
  return out;
}

void RunConfig::validate() const {
  model.validate();
  stage(pretrain).validate();
  stage(slu).validate();
  stage(finetune).validate();
  if (curve.sizes.empty() || curve.repeats == 0) throw ConfigError("curve: need at least one size and one repeat");
  for (auto s : curve.sizes) {
    if (s == 0) throw ConfigError("curve: sizes must be positive");
  }
  if (synth.speakers < 1 || !(synth.token_duration_ms > 0.0)) throw ConfigError("synth: bad speakers or duration");
  if (representation.threshold < 0.0 || representation.threshold > 1.0) {
    throw ConfigError("representation.threshold must lie in [0, 1]");
  }
}

namespace {

Json stage_json(const train::TrainConfig& c) {
  auto j = train::to_json(c);
  j.erase("seed");
  return j;
}

Json model_json(const encoder::ModelConfig& c) {
  auto j = train::to_json(c);
  j.erase("vocab");
  j.erase("mel_bins");
  return j;
}

Json head_json(const slu::SluConfig& c) {
  auto j = train::to_json(c);
  j.erase("input_dim");
  j.erase("bits");
  return j;
}

void check_keys(const Json& j, const Json& reference, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!reference.contains(k)) throw ConfigError("unknown config key " + where + "." + k);
  }
}

template <typename C, typename ToJson>
void read_section(const Json& doc, const char* key, C& target, ToJson reduced) {
  if (!doc.contains(key)) return;
  check_keys(doc[key], reduced(target), key);
  train::from_json(doc[key], target);
}

}  // namespace

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["features"] = train::to_json(c.features);
  j["model"] = model_json(c.model);
  j["pretrain"] = stage_json(c.pretrain);
  j["slu"] = stage_json(c.slu);
  j["finetune"] = stage_json(c.finetune);
  j["head"] = head_json(c.head);
  j["representation"] = train::to_json(c.representation);
  j["unfreeze"] = c.unfreeze;
  j["curve"] = {{"sizes", c.curve.sizes}, {"repeats", c.curve.repeats}, {"per_combination", c.curve.per_combination}};
  j["synth"] = {{"token_duration_ms", c.synth.token_duration_ms},
                {"noise_snr_db", c.synth.noise_snr_db},
                {"speakers", c.synth.speakers}};
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  const auto reference = to_json(c);
  check_keys(j, reference, "config");
  try {
    if (j.contains("seed")) {
      if (!j["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
      c.seed = j["seed"].get<std::uint64_t>();
    }
    read_section(j, "features", c.features, [](const auto& x) { return train::to_json(x); });
    read_section(j, "model", c.model, model_json);
    read_section(j, "pretrain", c.pretrain, stage_json);
    read_section(j, "slu", c.slu, stage_json);
    read_section(j, "finetune", c.finetune, stage_json);
    read_section(j, "head", c.head, head_json);
    read_section(j, "representation", c.representation, [](const auto& x) { return train::to_json(x); });
    if (j.contains("unfreeze")) {
      if (!j["unfreeze"].is_string()) throw ConfigError("unfreeze must be a string");
      c.unfreeze = j["unfreeze"].get<std::string>();
    }
    if (j.contains("curve")) {
      const auto& cj = j["curve"];
      check_keys(cj, reference["curve"], "curve");
      if (cj.contains("sizes")) {
        if (!cj["sizes"].is_array()) throw ConfigError("curve.sizes must be a list");
        c.curve.sizes.clear();
        for (const auto& s : cj["sizes"]) {
          if (!s.is_number_unsigned()) throw ConfigError("curve.sizes must hold non-negative integers");
          c.curve.sizes.push_back(s.get<std::size_t>());
        }
      }
      if (cj.contains("repeats")) {
        if (!cj["repeats"].is_number_unsigned()) throw ConfigError("curve.repeats must be a non-negative integer");
        c.curve.repeats = cj["repeats"].get<std::size_t>();
      }
      if (cj.contains("per_combination")) {
        if (!cj["per_combination"].is_boolean()) throw ConfigError("curve.per_combination must be a boolean");
        c.curve.per_combination = cj["per_combination"].get<bool>();
      }
    }
    if (j.contains("synth")) {
      const auto& sj = j["synth"];
      check_keys(sj, reference["synth"], "synth");
      if (sj.contains("token_duration_ms")) c.synth.token_duration_ms = sj["token_duration_ms"].get<double>();
      if (sj.contains("noise_snr_db")) c.synth.noise_snr_db = sj["noise_snr_db"].get<double>();
      if (sj.contains("speakers")) {
        if (!sj["speakers"].is_number_integer()) throw ConfigError("synth.speakers must be an integer");
        c.synth.speakers = sj["speakers"].get<int>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void apply_override(Json& doc, const std::string& path, const std::string& value) {
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty() || !node->is_object() || !node->contains(key)) throw ConfigError("unknown config key " + path);
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("config key " + path + " is a section, not a value");
  Json parsed = Json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? Json(value) : parsed;
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  Json doc = to_json(RunConfig{});
  if (file) {
    std::ifstream f(*file);
    if (!f) throw ConfigError("cannot open config " + file->string());
    Json user = Json::parse(f, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config " + file->string() + " is not valid JSON");
    doc = to_json(run_config_from_json(user));
  }
  for (const auto& [k, v] : overrides) apply_override(doc, k, v);
  return run_config_from_json(doc);
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos || item.size() > 18) {
      throw ConfigError("bad size list '" + text + "'");
    }
    out.push_back(std::stoull(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace mslu::cli
