#include "mslu/train/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "mslu/error.hpp"
#include "mslu/train/optim.hpp"

namespace mslu::train {

void TrainConfig::validate() const {
  const auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("train config: ") + what);
  };
  need(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
  need(epochs >= 1, "epochs must be >= 1");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(accum_steps >= 1, "accum_steps must be >= 1");
  need(peak_lr > 0.0 && std::isfinite(peak_lr), "peak_lr must be positive");
  need(warmup_steps >= 1, "warmup_steps must be >= 1");
  need(schedule == "noam" || schedule == "constant", "schedule must be noam or constant");
  need(smoothing >= 0.0 && smoothing < 1.0, "smoothing must lie in [0, 1)");
  need(early_stop_patience >= 1, "early_stop_patience must be >= 1");
  need(clip_norm >= 0.0, "clip_norm must be >= 0");
}

double TrainConfig::learning_rate(std::size_t step) const {
  return schedule == "constant" ? peak_lr : noam_lr(step, warmup_steps, peak_lr);
}

TrainConfig pretrain_defaults() { return {}; }

TrainConfig slu_defaults() {
  TrainConfig c;
  c.epochs = 200;
  c.batch_size = 512;
  c.accum_steps = 1;
  c.peak_lr = 0.005;
  c.schedule = "constant";
  c.freeze = {"encoder", "ctc", "decoder"};
  return c;
}

TrainConfig finetune_defaults() {
  TrainConfig c = slu_defaults();
  c.epochs = 20;
  c.batch_size = 32;
  c.peak_lr = 1e-4;
  c.freeze.clear();
  return c;
}

namespace {

// Reads known keys and remembers them so leftovers can be reported.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename V>
  Reader& get(const char* key, V& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      if constexpr (std::is_unsigned_v<V> && !std::is_same_v<V, bool>) {
        if (!it->is_number_integer() || (!it->is_number_unsigned() && it->template get<long long>() < 0)) {
          throw ConfigError("");
        }
      } else if constexpr (std::is_same_v<V, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      }
      out = it->template get<V>();
    } catch (const std::exception&) {
      throw ConfigError(where_ + "." + key + ": invalid value " + it->dump());
    }
    return *this;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

Json to_json(const TrainConfig& c) {
  return {{"rho", c.rho},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"accum_steps", c.accum_steps},
          {"peak_lr", c.peak_lr},
          {"warmup_steps", c.warmup_steps},
          {"schedule", c.schedule},
          {"smoothing", c.smoothing},
          {"seed", c.seed},
          {"freeze", c.freeze},
          {"early_stop_patience", c.early_stop_patience},
          {"clip_norm", c.clip_norm}};
}

void from_json(const Json& j, TrainConfig& c) {
  Reader r(j, "train");
  r.get("rho", c.rho)
      .get("epochs", c.epochs)
      .get("batch_size", c.batch_size)
      .get("accum_steps", c.accum_steps)
      .get("peak_lr", c.peak_lr)
      .get("warmup_steps", c.warmup_steps)
      .get("schedule", c.schedule)
      .get("smoothing", c.smoothing)
      .get("seed", c.seed)
      .get("freeze", c.freeze)
      .get("early_stop_patience", c.early_stop_patience)
      .get("clip_norm", c.clip_norm)
      .finish();
}

Json to_json(const encoder::ModelConfig& c) {
  return {{"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
          {"heads", c.heads},           {"d_model", c.d_model},
          {"ffn", c.ffn},               {"dropout", c.dropout},
          {"vocab", c.vocab},           {"mel_bins", c.mel_bins},
          {"conv_channels1", c.conv_channels1}, {"conv_channels2", c.conv_channels2},
          {"post_norm", c.post_norm}};
}

void from_json(const Json& j, encoder::ModelConfig& c) {
  Reader r(j, "model");
  r.get("enc_layers", c.enc_layers)
      .get("dec_layers", c.dec_layers)
      .get("heads", c.heads)
      .get("d_model", c.d_model)
      .get("ffn", c.ffn)
      .get("dropout", c.dropout)
      .get("vocab", c.vocab)
      .get("mel_bins", c.mel_bins)
      .get("conv_channels1", c.conv_channels1)
      .get("conv_channels2", c.conv_channels2)
      .get("post_norm", c.post_norm)
      .finish();
}

Json to_json(const features::FeatureConfig& c) {
  return {{"mel_bins", c.mel_bins},
          {"frame_length_ms", c.frame_length_ms},
          {"frame_shift_ms", c.frame_shift_ms},
          {"sample_rate_hz", c.sample_rate_hz}};
}

void from_json(const Json& j, features::FeatureConfig& c) {
  Reader r(j, "features");
  r.get("mel_bins", c.mel_bins)
      .get("frame_length_ms", c.frame_length_ms)
      .get("frame_shift_ms", c.frame_shift_ms)
      .get("sample_rate_hz", c.sample_rate_hz)
      .finish();
}

Json to_json(const slu::SluConfig& c) {
  return {{"input_dim", c.input_dim}, {"d", c.d},           {"heads", c.heads},
          {"layers", c.layers},       {"ffn", c.ffn},       {"hidden", c.hidden},
          {"bits", c.bits},           {"dropout", c.dropout}};
}

void from_json(const Json& j, slu::SluConfig& c) {
  Reader r(j, "slu");
  r.get("input_dim", c.input_dim)
      .get("d", c.d)
      .get("heads", c.heads)
      .get("layers", c.layers)
      .get("ffn", c.ffn)
      .get("hidden", c.hidden)
      .get("bits", c.bits)
      .get("dropout", c.dropout)
      .finish();
}

Json to_json(const decoder::ExtractOptions& c) {
  return {{"layer", c.layer}, {"refine", c.refine}, {"threshold", c.threshold}, {"max_iter", c.max_iter}};
}

void from_json(const Json& j, decoder::ExtractOptions& c) {
  Reader r(j, "representation");
  r.get("layer", c.layer).get("refine", c.refine).get("threshold", c.threshold).get("max_iter", c.max_iter).finish();
}

bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes) {
    if (name == p || name.rfind(p + ".", 0) == 0) return true;
  }
  return false;
}

std::vector<std::string> unfreeze_prefixes(const std::string& spec, const encoder::ModelConfig& cfg,
                                           bool allow_encoder) {
  std::vector<std::string> out{"slu"};
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item == "slu") continue;
    if (item == "encoder") {
      if (!allow_encoder) throw ConfigError("unfreezing the encoder needs the explicit override flag");
      out.push_back("encoder");
    } else if (item == "ctc" || item == "decoder") {
      out.push_back(item);
    } else if (item.rfind("decoder_last", 0) == 0) {
      const std::string k = item.substr(12);
      if (k.empty() || k.find_first_not_of("0123456789") != std::string::npos || std::stoul(k) == 0) {
        throw ConfigError("unfreeze: bad item '" + item + "'");
      }
      const std::size_t n = std::min<std::size_t>(std::stoul(k), cfg.dec_layers);
      for (std::size_t i = cfg.dec_layers - n; i < cfg.dec_layers; ++i) out.push_back("decoder." + std::to_string(i));
    } else {
      throw ConfigError("unfreeze: unknown item '" + item + "'");
    }
  }
  return out;
}

}  // namespace mslu::train
