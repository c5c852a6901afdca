#include "mslu/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "mslu/ctc/ctc.hpp"
#include "mslu/decoder/mlm.hpp"
#include "mslu/error.hpp"
#include "mslu/eval/metrics.hpp"

namespace mslu::train {

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a, std::uint64_t b) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(purpose), lo(a), hi(a), lo(b), hi(b)};
  return std::mt19937_64(seq);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::vector<float>> snapshot(const nn::ParameterList<float>& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore_values(const nn::ParameterList<float>& params, const std::vector<std::vector<float>>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto dst = nn::Tensor<float>(params[k].tensor).data();
    std::copy(values[k].begin(), values[k].end(), dst.begin());
  }
}

// Toggles requires_grad for the lifetime of the guard.
class FreezeGuard {
 public:
  FreezeGuard(const nn::ParameterList<float>& params, const std::function<bool(const std::string&)>& trainable)
      : params_(params) {
    for (const auto& p : params_) {
      saved_.push_back(p.tensor.requires_grad());
      nn::Tensor<float>(p.tensor).set_requires_grad(trainable(p.name));
    }
  }
  ~FreezeGuard() {
    for (std::size_t k = 0; k < params_.size(); ++k) nn::Tensor<float>(params_[k].tensor).set_requires_grad(saved_[k]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  nn::ParameterList<float> params_;
  std::vector<bool> saved_;
};

nn::ParameterList<float> select(const nn::ParameterList<float>& params,
                                const std::function<bool(const std::string&)>& keep) {
  nn::ParameterList<float> out;
  for (const auto& p : params) {
    if (keep(p.name)) out.push_back(p);
  }
  return out;
}

// Batches of `batch` indices; the last may be short.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch) {
    out.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch));
  }
  return out;
}

std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64 rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

std::vector<Transcription> greedy_transcripts(const decoder::SpeechModel<float>& model,
                                              const std::vector<Utterance>& utterances, std::size_t batch) {
  nn::NoGradGuard guard;
  std::vector<Transcription> out;
  out.reserve(utterances.size());
  std::vector<std::size_t> all(utterances.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (const auto& idx : make_batches(all, batch)) {
    const auto fb = decoder::collate<float>(feature_views(utterances, idx));
    const auto enc = model.encode(fb.features, fb.lengths, {});
    const auto lp = model.ctc_log_probs(enc);
    const std::size_t T = lp.dim(1), V = lp.dim(2);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      auto h = ctc::greedy_decode<float>(lp.data().subspan(b * T * V, enc.lengths[b] * V), enc.lengths[b], V);
      out.push_back({std::move(h.tokens), std::move(h.confidence)});
    }
  }
  return out;
}

double validation_ter(const SpeechBundle& bundle, const std::vector<Utterance>& utterances) {
  const auto hyps = greedy_transcripts(bundle.model, utterances);
  std::vector<std::vector<int>> h;
  for (const auto& t : hyps) h.push_back(t.tokens);
  return eval::token_error_rate(h, encode_transcripts(utterances, bundle.vocab));
}

std::vector<decoder::RepresentationSequence> extract_all(const decoder::SpeechModel<float>& model,
                                                         const std::vector<Utterance>& utterances,
                                                         const decoder::ExtractOptions& options, std::size_t batch) {
  std::vector<decoder::RepresentationSequence> out;
  out.reserve(utterances.size());
  std::vector<std::size_t> all(utterances.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (const auto& idx : make_batches(all, batch)) {
    for (auto& r : decoder::extract_representations(model, feature_views(utterances, idx), options)) {
      out.push_back(std::move(r));
    }
  }
  return out;
}

AccumulatedLoss accumulate_pretrain_gradients(const decoder::SpeechModel<float>& model,
                                              const std::vector<Utterance>& train,
                                              const std::vector<std::vector<int>>& targets,
                                              const std::vector<std::vector<std::size_t>>& micro_batches,
                                              const TrainConfig& config, std::size_t epoch, std::size_t step,
                                              const std::function<void(std::size_t, double)>& on_batch) {
  AccumulatedLoss acc;
  const float weight = 1.0f / float(micro_batches.size());
  for (std::size_t k = 0; k < micro_batches.size(); ++k) {
    const auto& idx = micro_batches[k];
    auto drop_rng = substream(config.seed, kDropout, step, k);
    const nn::ForwardContext ctx{true, &drop_rng};
    const auto fb = decoder::collate<float>(feature_views(train, idx));
    const auto enc = model.encode(fb.features, fb.lengths, ctx);

    std::vector<std::vector<int>> gold, inputs;
    std::vector<std::vector<std::size_t>> positions;
    for (auto i : idx) {
      auto rng = substream(config.seed, kMasking, epoch, i);
      auto sample = decoder::mlm_corrupt(targets[i], rng);
      gold.push_back(targets[i]);
      inputs.push_back(std::move(sample.input));
      positions.push_back(std::move(sample.positions));
    }
    ctc::CtcBatchInfo info;
    const auto l_ctc = ctc::ctc_batch_loss(model.ctc_log_probs(enc), enc.lengths, gold, &info);
    std::size_t L = 0;
    const auto ids = decoder::pad_tokens(inputs, L);
    const auto dec = model.decode_forward(ids, idx.size(), L, enc, ctx);
    const auto l_mlm = decoder::mlm_loss(dec.logits, gold, positions, config.smoothing);
    const auto loss = hybrid_loss(l_ctc, l_mlm, config.rho);
    nn::Tensor<float> scaled = nn::scale(loss, weight);
    scaled.backward();

    acc.loss += loss.item();
    acc.ctc_loss += l_ctc.item();
    acc.mlm_loss += l_mlm.item();
    acc.ctc_skipped += info.skipped;
    if (on_batch) on_batch(step, loss.item());
  }
  return acc;
}

PretrainResult pretrain(Checkpoint start, const std::vector<Utterance>& train, const std::vector<Utterance>& valid,
                        const TrainConfig& config, const PretrainOptions& options) {
  config.validate();
  if (!start.speech) throw ConfigError("pretrain: start checkpoint has no speech model");
  if (train.empty()) throw DataError("pretrain: empty training set");
  SpeechBundle& bundle = *start.speech;
  const auto& model = bundle.model;
  if (model.config.vocab != bundle.vocab.size()) throw DataError("pretrain: vocabulary size differs from model");

  const auto targets = encode_transcripts(train, bundle.vocab);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (int id : targets[i]) {
      if (id == ctc::Vocabulary::kUnk) throw DataError("pretrain: utterance " + train[i].id + " has out-of-vocabulary words");
    }
    if (targets[i].empty()) throw DataError("pretrain: utterance " + train[i].id + " has an empty transcript");
  }
  const auto& valid_set = valid.empty() ? train : valid;

  const auto params = model.parameters();
  const auto trainable = [&](const std::string& n) { return !has_prefix(n, config.freeze); };
  FreezeGuard freeze(params, trainable);
  Adam adam(select(params, trainable));
  if (!start.optimizer.empty()) restore(adam, start.optimizer);

  TrainState state = start.state;
  auto best_values = snapshot(params);
  if (options.resume_best && options.resume_best->speech) {
    best_values = snapshot(options.resume_best->speech->model.parameters());
  }

  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);
  PretrainResult result;
  for (std::size_t epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    EpochMetrics m;
    m.epoch = epoch;
    const auto batches = make_batches(shuffled(train.size(), substream(config.seed, kData, epoch)), config.batch_size);
    std::size_t micro = 0;
    for (std::size_t g = 0; g < batches.size(); g += config.accum_steps) {
      const std::size_t group = std::min(config.accum_steps, batches.size() - g);
      adam.zero_grad();
      const std::vector<std::vector<std::size_t>> group_batches(batches.begin() + g, batches.begin() + g + group);
      const auto acc = accumulate_pretrain_gradients(model, train, targets, group_batches, config, epoch,
                                                     state.step + 1, options.on_batch);
      m.loss += acc.loss;
      m.ctc_loss += acc.ctc_loss;
      m.mlm_loss += acc.mlm_loss;
      m.ctc_skipped += acc.ctc_skipped;
      micro += group;
      if (config.clip_norm > 0.0) clip_grad_norm(adam.parameters(), config.clip_norm);
      const double lr = config.learning_rate(state.step + 1);
      if (adam.step(lr)) {
        ++state.step;
        m.lr = lr;
      } else {
        ++m.steps_skipped;
      }
    }
    adam.zero_grad();
    m.loss /= double(micro);
    m.ctc_loss /= double(micro);
    m.mlm_loss /= double(micro);
    m.step = state.step;
    m.ter = validation_ter(bundle, valid_set);
    m.improved = std::isnan(state.best) || m.ter < state.best;
    if (m.improved) {
      best_values = snapshot(params);
      state.best = m.ter;
      state.best_epoch = epoch;
      state.since_best = 0;
    } else {
      ++state.since_best;
    }
    state.epoch = epoch;
    m.seconds = seconds_since(t0);

    if (!options.out_dir.empty()) {
      Checkpoint last{start.speech, std::nullopt, config, state, capture(adam), {{"ter", m.ter}, {"loss", m.loss}}};
      save_checkpoint(options.out_dir / "last.ckpt", last);
      if (m.improved) {
        Checkpoint best{start.speech, std::nullopt, config, state, {}, {{"ter", m.ter}}};
        save_checkpoint(options.out_dir / "best.ckpt", best);
      }
    }
    result.history.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
    if (state.since_best >= config.early_stop_patience) break;
  }

  restore_values(params, best_values);
  result.best = Checkpoint{start.speech, std::nullopt, config, state, {}, {{"ter", state.best}}};
  return result;
}

namespace {

using LogitsFn = std::function<nn::Tensor<float>(const std::vector<std::size_t>&, const nn::ForwardContext&)>;
// Returns (accuracy, mean BCE) on the selection set.
using ValidateFn = std::function<std::pair<double, double>()>;

double mean_bce(std::span<const float> logits, const std::vector<slu::Multihot>& targets) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& t : targets) {
    for (auto bit : t) {
      const double z = logits[n++];
      total += std::max(z, 0.0) - bit * z + std::log1p(std::exp(-std::abs(z)));
    }
  }
  return total / double(n);
}

std::pair<double, double> score(const std::vector<float>& logits, const std::vector<slu::Multihot>& targets,
                                const slu::IntentSchema& schema) {
  const std::size_t n = schema.size();
  std::vector<slu::Multihot> preds;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    preds.push_back(slu::enforce_structure_logits(std::span(logits).subspan(i * n, n), schema).multihot);
  }
  return {eval::intent_accuracy(preds, targets), mean_bce(logits, targets)};
}

SluTrainResult run_slu_training(const nn::ParameterList<float>& trainable, const std::vector<slu::Multihot>& targets,
                                const LogitsFn& forward, const ValidateFn& validate, const TrainConfig& config,
                                const std::function<void(const SluEpoch&)>& on_epoch) {
  config.validate();
  if (targets.empty()) throw DataError("slu training: empty training set");
  Adam adam(trainable);
  SluTrainResult result;
  std::tie(result.best_accuracy, result.best_loss) = validate();
  auto best_values = snapshot(trainable);
  double lowest_loss = result.best_loss;
  std::size_t since_best = 0, step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    SluEpoch e;
    e.epoch = epoch;
    const auto batches =
        make_batches(shuffled(targets.size(), substream(config.seed, kData, epoch)), config.batch_size);
    std::size_t micro = 0;
    for (std::size_t g = 0; g < batches.size(); g += config.accum_steps) {
      const std::size_t group = std::min(config.accum_steps, batches.size() - g);
      adam.zero_grad();
      for (std::size_t k = 0; k < group; ++k) {
        const auto& idx = batches[g + k];
        auto drop_rng = substream(config.seed, kDropout, step + 1, k);
        const auto logits = forward(idx, {true, &drop_rng});
        std::vector<std::uint8_t> t;
        for (auto i : idx) t.insert(t.end(), targets[i].begin(), targets[i].end());
        const auto loss = slu::bce_loss(logits, t);
        nn::Tensor<float> scaled = nn::scale(loss, 1.0f / float(group));
        scaled.backward();
        e.loss += loss.item();
        ++micro;
      }
      if (config.clip_norm > 0.0) clip_grad_norm(adam.parameters(), config.clip_norm);
      if (adam.step(config.learning_rate(step + 1))) {
        ++step;
      } else {
        ++result.steps_skipped;
      }
    }
    adam.zero_grad();
    e.loss /= double(micro);
    std::tie(e.valid_accuracy, e.valid_loss) = validate();
    e.improved = e.valid_accuracy > result.best_accuracy ||
                 (e.valid_accuracy == result.best_accuracy && e.valid_loss < result.best_loss);
    // Patience runs out only when neither the selection score nor the loss moves.
    const bool progress = e.improved || e.valid_loss < lowest_loss;
    lowest_loss = std::min(lowest_loss, e.valid_loss);
    if (e.improved) {
      result.best_accuracy = e.valid_accuracy;
      result.best_loss = e.valid_loss;
      result.best_epoch = epoch;
      best_values = snapshot(trainable);
    }
    since_best = progress ? 0 : since_best + 1;
    e.seconds = seconds_since(t0);
    result.history.push_back(e);
    if (on_epoch) on_epoch(e);
    if (since_best >= config.early_stop_patience) break;
  }
  restore_values(trainable, best_values);
  return result;
}

std::vector<const decoder::RepresentationSequence*> reprs_of(const std::vector<SluExample>& ex) {
  std::vector<const decoder::RepresentationSequence*> out;
  for (const auto& e : ex) out.push_back(e.repr);
  return out;
}

std::vector<slu::Multihot> targets_of(const auto& ex) {
  std::vector<slu::Multihot> out;
  for (const auto& e : ex) out.push_back(e.target);
  return out;
}

std::vector<float> head_logits(const slu::SluHead<float>& head,
                               const std::vector<const decoder::RepresentationSequence*>& items, std::size_t batch) {
  std::vector<float> out;
  for (std::size_t i = 0; i < items.size(); i += batch) {
    const std::vector<const decoder::RepresentationSequence*> part(items.begin() + i,
                                                                  items.begin() + std::min(items.size(), i + batch));
    const auto z = slu::intent_forward(head, part);
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

}  // namespace

SluTrainResult train_slu(slu::SluHead<float>& head, const std::vector<SluExample>& train,
                         const std::vector<SluExample>& valid, const slu::IntentSchema& schema,
                         const TrainConfig& config, const std::function<void(const SluEpoch&)>& on_epoch) {
  if (head.config.bits != schema.size()) throw DataError("train_slu: head output width differs from schema");
  for (const auto* set : {&train, &valid}) {
    for (const auto& e : *set) {
      if (e.target.size() != schema.size() || schema.find(e.target) == slu::kNotFound) {
        throw DataError("train_slu: label is not a valid combination of the schema");
      }
    }
  }
  const auto& sel = valid.empty() ? train : valid;
  const auto sel_reprs = reprs_of(sel);
  const auto sel_targets = targets_of(sel);
  const LogitsFn forward = [&](const std::vector<std::size_t>& idx, const nn::ForwardContext& ctx) {
    std::vector<const decoder::RepresentationSequence*> items;
    for (auto i : idx) items.push_back(train[i].repr);
    const auto batch = slu::collate_representations<float>(items);
    return head(batch.x, batch.valid, ctx).logits;
  };
  const ValidateFn validate = [&] { return score(head_logits(head, sel_reprs, 256), sel_targets, schema); };
  return run_slu_training(head.parameters(), targets_of(train), forward, validate, config, on_epoch);
}

std::vector<slu::IntentLabel> predict_intents(const slu::SluHead<float>& head,
                                              const std::vector<const decoder::RepresentationSequence*>& items,
                                              const slu::IntentSchema& schema, std::size_t batch) {
  const auto logits = head_logits(head, items, batch);
  const std::size_t n = schema.size();
  std::vector<slu::IntentLabel> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.push_back(slu::enforce_structure_logits(std::span(logits).subspan(i * n, n), schema));
  }
  return out;
}

std::vector<FinetuneExample> prepare_finetune(const decoder::SpeechModel<float>& model,
                                              const std::vector<Utterance>& utterances,
                                              const slu::IntentSchema& schema, double threshold, std::size_t batch) {
  nn::NoGradGuard guard;
  std::vector<FinetuneExample> out;
  std::vector<std::size_t> all(utterances.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (const auto& idx : make_batches(all, batch)) {
    const auto fb = decoder::collate<float>(feature_views(utterances, idx));
    const auto enc = model.encode(fb.features, fb.lengths, {});
    const auto templates = decoder::build_templates(model, enc, threshold);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      FinetuneExample e;
      e.enc = {decoder::item_rows(enc.h_enc, b, enc.lengths[b]), enc.lengths[b]};
      e.tokens = templates[b].hyp.tokens;
      e.target = slu::encode_intent(utterances[idx[b]].intent, schema);
      e.features = &utterances[idx[b]].features;
      out.push_back(std::move(e));
    }
  }
  return out;
}

namespace {

nn::Tensor<float> finetune_logits(const decoder::SpeechModel<float>& model, const slu::SluHead<float>& head,
                                  const decoder::LayerId& layer, const std::vector<FinetuneExample>& items,
                                  const std::vector<std::size_t>& idx, bool run_encoder,
                                  const nn::ForwardContext& ctx) {
  encoder::EncoderOutput<float> enc;
  if (run_encoder) {
    std::vector<const features::FeatureSequence*> feats;
    for (auto i : idx) feats.push_back(items[i].features);
    const auto fb = decoder::collate<float>(feats);
    enc = model.encode(fb.features, fb.lengths, ctx);
  } else {
    std::vector<const decoder::EncodingCache*> caches;
    for (auto i : idx) caches.push_back(&items[i].enc);
    enc = decoder::batch_encodings(caches, model.config.d_model);
  }
  std::vector<std::vector<int>> seqs;
  for (auto i : idx) seqs.push_back(items[i].tokens);
  std::size_t L = 0;
  const auto ids = decoder::pad_tokens(seqs, L);
  const auto dec = model.decode_forward(ids, idx.size(), L, enc, ctx);
  return head(dec.layer_states[layer.index], dec.valid, ctx).logits;
}

}  // namespace

std::vector<slu::IntentLabel> finetune_predict(const decoder::SpeechModel<float>& model,
                                               const slu::SluHead<float>& head, const std::string& layer,
                                               const std::vector<FinetuneExample>& items,
                                               const slu::IntentSchema& schema, bool run_encoder,
                                               std::size_t batch) {
  nn::NoGradGuard guard;
  const auto id = decoder::parse_layer(layer, model.config);
  if (id.encoder) throw ConfigError("finetune: representation layer must be a decoder layer");
  std::vector<std::size_t> all(items.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<slu::IntentLabel> out;
  const std::size_t n = schema.size();
  for (const auto& idx : make_batches(all, batch)) {
    const auto z = finetune_logits(model, head, id, items, idx, run_encoder, {});
    for (std::size_t b = 0; b < idx.size(); ++b) out.push_back(slu::enforce_structure_logits(z.data().subspan(b * n, n), schema));
  }
  return out;
}

SluTrainResult finetune(decoder::SpeechModel<float>& model, slu::SluHead<float>& head, const std::string& layer,
                        const std::vector<FinetuneExample>& train, const std::vector<FinetuneExample>& valid,
                        const slu::IntentSchema& schema, const TrainConfig& config,
                        const std::vector<std::string>& trainable,
                        const std::function<void(const SluEpoch&)>& on_epoch) {
  const auto id = decoder::parse_layer(layer, model.config);
  if (id.encoder) throw ConfigError("finetune: representation layer must be a decoder layer");
  if (head.config.bits != schema.size()) throw DataError("finetune: head output width differs from schema");
  if (head.config.input_dim != model.config.d_model) throw DataError("finetune: head input width differs from model");

  auto params = model.parameters();
  const auto head_params = head.parameters();
  params.insert(params.end(), head_params.begin(), head_params.end());
  const auto keep = [&](const std::string& n) { return has_prefix(n, trainable); };
  FreezeGuard freeze(params, keep);
  const bool run_encoder = has_prefix("encoder.0", trainable) || has_prefix("encoder.frontend", trainable);

  const auto& sel = valid.empty() ? train : valid;
  const auto sel_targets = targets_of(sel);
  const LogitsFn forward = [&](const std::vector<std::size_t>& idx, const nn::ForwardContext& ctx) {
    return finetune_logits(model, head, id, train, idx, run_encoder, ctx);
  };
  const ValidateFn validate = [&] {
    std::vector<float> logits;
    nn::NoGradGuard guard;
    std::vector<std::size_t> all(sel.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (const auto& idx : make_batches(all, 64)) {
      const auto z = finetune_logits(model, head, id, sel, idx, run_encoder, {});
      logits.insert(logits.end(), z.data().begin(), z.data().end());
    }
    return score(logits, sel_targets, schema);
  };
  return run_slu_training(select(params, keep), targets_of(train), forward, validate, config, on_epoch);
}

}  // namespace mslu::train
