#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "mslu/ctc/ctc.hpp"
#include "mslu/error.hpp"
#include "mslu/features/grammar.hpp"
#include "mslu/train/archive.hpp"
#include "mslu/train/checkpoint.hpp"
#include "mslu/train/config.hpp"
#include "mslu/train/optim.hpp"
#include "mslu/train/trainer.hpp"
#include "test_util.hpp"

namespace mslu::train {
namespace {

encoder::ModelConfig micro_config(std::size_t dec_layers = 3) {
  encoder::ModelConfig c;
  c.enc_layers = 2;
  c.dec_layers = dec_layers;
  c.heads = 2;
  c.d_model = 16;
  c.ffn = 32;
  c.dropout = 0.0;
  c.mel_bins = 8;
  c.conv_channels1 = 3;
  c.conv_channels2 = 4;
  return c;
}

const slu::IntentSchema& grabo() {
  static const slu::IntentSchema s = slu::schema_from_grammar(features::load_grammar(test::grammar_path()));
  return s;
}

// Random features whose statistics depend on the first word, so a tiny model
// has something to pick up; transcripts and intents from the grammar.
std::vector<Utterance> toy_corpus(std::size_t n, std::uint64_t seed) {
  const auto grammar = features::load_grammar(test::grammar_path());
  const auto commands = grammar.combinations();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise;
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < n; ++i) {
    Utterance u;
    u.id = "toy" + std::to_string(i);
    u.intent = commands[rng() % commands.size()];
    u.words = grammar.expand(u.intent, 0);
    u.features.bins = 8;
    u.features.frames = 16 * u.words.size();
    u.features.values.resize(u.features.frames * 8);
    for (std::size_t t = 0; t < u.features.frames; ++t) {
      const std::size_t w = std::hash<std::string>{}(u.words[t / 16]) % 8;
      for (std::size_t f = 0; f < 8; ++f) u.features.values[t * 8 + f] = noise(rng) * 0.3f + (f == w ? 2.0f : 0.0f);
    }
    out.push_back(std::move(u));
  }
  return out;
}

ctc::Vocabulary toy_vocab() {
  return ctc::Vocabulary::from_tokens(features::load_grammar(test::grammar_path()).terminals());
}

Checkpoint fresh_checkpoint(const encoder::ModelConfig& cfg, std::uint64_t seed = 1) {
  features::FeatureConfig fc;
  fc.mel_bins = 8;
  Checkpoint c;
  c.speech = make_speech_bundle(cfg, toy_vocab(), fc, {}, seed);
  return c;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 4;
  c.accum_steps = 1;
  c.peak_lr = 1e-3;
  c.schedule = "constant";
  c.seed = 5;
  return c;
}

bool any_prefix_changed(const std::map<std::string, std::uint64_t>& a, const std::map<std::string, std::uint64_t>& b,
                        const std::string& prefix) {
  for (const auto& [name, h] : a) {
    if (has_prefix(name, {prefix}) && b.at(name) != h) return true;
  }
  return false;
}

TEST(Schedule, NoamSpotValues) {
  EXPECT_NEAR(noam_lr(25000), 0.4, 1e-12);
  EXPECT_NEAR(noam_lr(12500), 0.2, 1e-12);
  EXPECT_NEAR(noam_lr(100000), 0.2, 1e-12);
  EXPECT_NEAR(noam_lr(1, 4, 1.0), 0.25, 1e-12);
  EXPECT_THROW(noam_lr(0), ConfigError);
}

TEST(Schedule, NoamPeaksAtWarmup) {
  double prev = 0.0;
  for (std::size_t s = 1; s <= 100; ++s) {
    const double lr = noam_lr(s, 50, 1.0);
    if (s <= 50) {
      EXPECT_GT(lr, prev);
    } else {
      EXPECT_LT(lr, prev);
    }
    prev = lr;
  }
}

TEST(HybridLoss, SpotValues) {
  EXPECT_DOUBLE_EQ(hybrid_loss(2.0, 1.0, 0.3), 1.3);
  EXPECT_DOUBLE_EQ(hybrid_loss(2.0, 1.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(hybrid_loss(2.0, 1.0, 0.0), 1.0);
  EXPECT_THROW(hybrid_loss(2.0, 1.0, 1.5), ConfigError);
  EXPECT_THROW(hybrid_loss(2.0, 1.0, -0.1), ConfigError);
  const auto t = hybrid_loss(nn::Tensor<float>::scalar(2.0f), nn::Tensor<float>::scalar(1.0f), 0.3);
  EXPECT_NEAR(t.item(), 1.3, 1e-6);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  auto w = nn::Tensor<float>::from({3}, {1.0f, 1.0f, 1.0f}, true);
  Adam adam({{"w", w}});
  w.grad();
  nn::Node<float>* n = w.node();
  n->grad = {0.5f, -3.0f, 0.0f};
  ASSERT_TRUE(adam.step(0.01));
  EXPECT_NEAR(w.data()[0], 0.99f, 1e-6);
  EXPECT_NEAR(w.data()[1], 1.01f, 1e-6);
  EXPECT_EQ(w.data()[2], 1.0f);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, NonFiniteGradientSkipsStep) {
  auto w = nn::Tensor<float>::from({2}, {1.0f, 2.0f}, true);
  auto u = nn::Tensor<float>::from({1}, {3.0f}, true);
  Adam adam({{"w", w}, {"u", u}});
  w.node()->grad = {0.5f, NAN};
  u.node()->grad = {1.0f};
  EXPECT_FALSE(adam.step(0.1));
  EXPECT_EQ(w.data()[0], 1.0f);
  EXPECT_EQ(u.data()[0], 3.0f);
  EXPECT_EQ(adam.steps(), 0u);
}

TEST(Adam, ClipGradNorm) {
  auto w = nn::Tensor<float>::from({2}, {0.0f, 0.0f}, true);
  w.node()->grad = {3.0f, 4.0f};
  EXPECT_NEAR(clip_grad_norm({{"w", w}}, 1.0), 5.0, 1e-6);
  EXPECT_NEAR(w.grad()[0], 0.6f, 1e-6);
  EXPECT_NEAR(w.grad()[1], 0.8f, 1e-6);
}

TEST(Archive, RoundTrip) {
  test::TempDir dir("archive");
  Archive a;
  a.meta["answer"] = 42;
  a.put("b", {2, 3}, {1, 2, 3, 4, 5, 6});
  a.put("a", {1}, {-0.5f});
  write_archive(dir / "x.ckpt", a);
  const auto r = read_archive(dir / "x.ckpt");
  EXPECT_EQ(r.meta["answer"], 42);
  EXPECT_EQ(r.get("b").shape, (nn::Shape{2, 3}));
  EXPECT_EQ(r.get("b").values, (std::vector<float>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(r.get("a").values, (std::vector<float>{-0.5f}));
  EXPECT_THROW(r.get("c"), DataError);
}

TEST(Archive, RejectsBadFiles) {
  test::TempDir dir("archive_bad");
  EXPECT_THROW(read_archive(dir / "missing.ckpt"), DataError);
  {
    std::ofstream(dir / "junk.ckpt") << "not an archive at all";
  }
  EXPECT_THROW(read_archive(dir / "junk.ckpt"), FormatError);

  Archive a;
  a.put("w", {4}, {1, 2, 3, 4});
  write_archive(dir / "ok.ckpt", a);
  const auto size = std::filesystem::file_size(dir / "ok.ckpt");
  std::filesystem::resize_file(dir / "ok.ckpt", size - 4);
  EXPECT_THROW(read_archive(dir / "ok.ckpt"), FormatError);
}

TEST(Archive, LoadParametersChecksShapes) {
  auto w = nn::Tensor<float>::from({2}, {1, 2}, true);
  Archive a;
  a.put("w", {3}, {1, 2, 3});
  EXPECT_THROW(load_parameters(a, {{"w", w}}), FormatError);
  EXPECT_THROW(load_parameters(Archive{}, {{"w", w}}), FormatError);
}

TEST(Config, StrictJson) {
  TrainConfig c;
  from_json(Json{{"rho", 0.5}, {"epochs", 3}}, c);
  EXPECT_EQ(c.rho, 0.5);
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_THROW(from_json(Json{{"rhoo", 0.5}}, c), ConfigError);
  EXPECT_THROW(from_json(Json{{"epochs", -1}}, c), ConfigError);
  EXPECT_THROW(from_json(Json{{"epochs", "many"}}, c), ConfigError);
  encoder::ModelConfig m;
  EXPECT_THROW(from_json(Json{{"post_norm", 1}}, m), ConfigError);
  TrainConfig back;
  from_json(to_json(c), back);
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(pretrain_defaults().rho, 0.3);
}

TEST(Config, UnfreezePrefixes) {
  const auto cfg = micro_config(6);
  EXPECT_EQ(unfreeze_prefixes("decoder_last4", cfg, false),
            (std::vector<std::string>{"slu", "decoder.2", "decoder.3", "decoder.4", "decoder.5"}));
  EXPECT_EQ(unfreeze_prefixes("decoder_last9", micro_config(3), false),
            (std::vector<std::string>{"slu", "decoder.0", "decoder.1", "decoder.2"}));
  EXPECT_THROW(unfreeze_prefixes("encoder", cfg, false), ConfigError);
  EXPECT_EQ(unfreeze_prefixes("encoder", cfg, true), (std::vector<std::string>{"slu", "encoder"}));
  EXPECT_THROW(unfreeze_prefixes("decoder_lastx", cfg, false), ConfigError);
  EXPECT_TRUE(has_prefix("decoder.2.ffn.expand.weight", {"decoder.2"}));
  EXPECT_FALSE(has_prefix("decoder.20.ffn.expand.weight", {"decoder.2"}));
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  test::TempDir dir("ckpt");
  auto c = fresh_checkpoint(micro_config());
  c.speech->stats.mean.assign(8, 0.5f);
  c.speech->stats.stddev.assign(8, 2.0f);
  slu::SluConfig sc;
  sc.input_dim = 16;
  sc.d = 8;
  sc.heads = 2;
  sc.ffn = 16;
  sc.hidden = 16;
  sc.bits = grabo().size();
  c.slu = SluBundle{slu::SluHead<float>(sc, 3), grabo(), {}};
  c.state.epoch = 4;
  c.state.best = 0.25;
  Adam adam(c.slu->head.parameters());
  for (const auto& p : adam.parameters()) nn::Tensor<float>(p.tensor).node()->grad.assign(p.tensor.size(), 0.1f);
  adam.step(0.01);
  c.optimizer = capture(adam);
  save_checkpoint(dir / "c.ckpt", c);

  const auto r = load_checkpoint(dir / "c.ckpt");
  ASSERT_TRUE(r.speech && r.slu);
  EXPECT_EQ(parameter_hashes(r.speech->model.parameters()), parameter_hashes(c.speech->model.parameters()));
  EXPECT_EQ(parameter_hashes(r.slu->head.parameters()), parameter_hashes(c.slu->head.parameters()));
  EXPECT_EQ(r.speech->vocab.symbols(), c.speech->vocab.symbols());
  EXPECT_EQ(r.speech->stats.stddev, c.speech->stats.stddev);
  EXPECT_EQ(r.slu->schema.valid_set, grabo().valid_set);
  EXPECT_EQ(r.state.epoch, 4u);
  EXPECT_EQ(r.state.best, 0.25);
  EXPECT_EQ(r.optimizer.steps, 1u);
  EXPECT_EQ(r.optimizer.m, c.optimizer.m);
  EXPECT_EQ(r.optimizer.v, c.optimizer.v);
}

TEST(Pretrain, GradientAccumulationMatchesLargeBatch) {
  const auto data = toy_corpus(16, 3);
  const auto vocab = toy_vocab();
  const auto targets = encode_transcripts(data, vocab);
  auto cfg = quick_config();
  auto c = fresh_checkpoint(micro_config());
  const auto& model = c.speech->model;
  const auto params = model.parameters();

  std::vector<std::size_t> all(16);
  std::iota(all.begin(), all.end(), std::size_t{0});
  accumulate_pretrain_gradients(model, data, targets, {all}, cfg, 1, 1);
  std::vector<std::vector<float>> big;
  for (const auto& p : params) big.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
  for (const auto& p : params) nn::Tensor<float>(p.tensor).zero_grad();

  std::vector<std::vector<std::size_t>> micro;
  for (std::size_t i = 0; i < 16; i += 2) micro.push_back({all[i], all[i + 1]});
  accumulate_pretrain_gradients(model, data, targets, micro, cfg, 1, 1);
  double max_diff = 0.0, max_abs = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto g = params[k].tensor.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      max_diff = std::max(max_diff, double(std::abs(g[i] - big[k][i])));
      max_abs = std::max(max_abs, double(std::abs(big[k][i])));
    }
  }
  EXPECT_GT(max_abs, 1e-3);
  EXPECT_LT(max_diff, 1e-5) << "max |g| " << max_abs;
}

// Expected CTC loss per target token under uniform frame posteriors:
// (T' log V - log #alignments) / |target|.
double uniform_ctc(std::size_t frames, std::size_t V, const std::vector<int>& target) {
  const std::size_t S = 2 * target.size() + 1;
  std::vector<double> a(S, 0.0);
  a[0] = 1.0;
  if (S > 1) a[1] = 1.0;
  for (std::size_t t = 1; t < frames; ++t) {
    std::vector<double> b(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      b[s] = a[s] + (s > 0 ? a[s - 1] : 0.0);
      if (s > 1 && s % 2 == 1 && target[s / 2] != target[s / 2 - 1]) b[s] += a[s - 2];
    }
    a = b;
  }
  const double paths = a[S - 1] + (S > 1 ? a[S - 2] : 0.0);
  return (double(frames) * std::log(double(V)) - std::log(paths)) / double(target.size());
}

TEST(Pretrain, FirstBatchLossNearUniformExpectation) {
  const auto data = toy_corpus(8, 4);
  const auto vocab = toy_vocab();
  const auto targets = encode_transcripts(data, vocab);
  auto cfg = quick_config();
  auto c = fresh_checkpoint(micro_config());
  std::vector<std::size_t> all(8);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto acc = accumulate_pretrain_gradients(c.speech->model, data, targets, {all}, cfg, 1, 1);
  double ctc = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    ctc += uniform_ctc(nn::subsampled_length(data[i].features.frames), vocab.size(), targets[i]);
  }
  const double expected = 0.3 * ctc / 8.0 + 0.7 * std::log(double(vocab.size()));
  EXPECT_NEAR(acc.loss / expected, 1.0, 0.2) << acc.loss << " vs " << expected;
}

TEST(Pretrain, FrozenPrefixesNeverChange) {
  const auto data = toy_corpus(8, 5);
  auto cfg = quick_config();
  cfg.freeze = {"encoder", "ctc"};
  auto c = fresh_checkpoint(micro_config());
  const auto before = parameter_hashes(c.speech->model.parameters());
  auto r = pretrain(c, data, data, cfg);
  const auto after = parameter_hashes(r.best.speech->model.parameters());
  EXPECT_FALSE(any_prefix_changed(before, after, "encoder"));
  EXPECT_FALSE(any_prefix_changed(before, after, "ctc"));
  EXPECT_TRUE(any_prefix_changed(before, after, "decoder"));
  // Training leaves every parameter trainable again afterwards.
  for (const auto& p : c.speech->model.parameters()) EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
}

TEST(Pretrain, DeterministicUnderFixedSeed) {
  const auto data = toy_corpus(8, 6);
  auto cfg = quick_config();
  cfg.epochs = 2;
  auto model_cfg = micro_config();
  model_cfg.dropout = 0.1;
  std::vector<double> la, lb;
  PretrainOptions oa, ob;
  oa.on_batch = [&](std::size_t, double l) { la.push_back(l); };
  ob.on_batch = [&](std::size_t, double l) { lb.push_back(l); };
  auto a = pretrain(fresh_checkpoint(model_cfg), data, data, cfg, oa);
  auto b = pretrain(fresh_checkpoint(model_cfg), data, data, cfg, ob);
  EXPECT_EQ(la, lb);
  EXPECT_EQ(parameter_hashes(a.best.speech->model.parameters()), parameter_hashes(b.best.speech->model.parameters()));
  ASSERT_EQ(a.history.size(), b.history.size());
  EXPECT_EQ(a.history.back().loss, b.history.back().loss);
}

TEST(Pretrain, ResumeReproducesNextStepLoss) {
  test::TempDir dir("resume");
  const auto data = toy_corpus(8, 7);
  auto cfg = quick_config();
  cfg.epochs = 2;
  auto model_cfg = micro_config();
  model_cfg.dropout = 0.1;

  std::vector<std::pair<std::size_t, double>> full;
  PretrainOptions o1;
  o1.on_batch = [&](std::size_t s, double l) { full.emplace_back(s, l); };
  pretrain(fresh_checkpoint(model_cfg), data, data, cfg, o1);

  auto first = cfg;
  first.epochs = 1;
  PretrainOptions o2;
  o2.out_dir = dir.path();
  pretrain(fresh_checkpoint(model_cfg), data, data, first, o2);

  const auto last = load_checkpoint(dir / "last.ckpt");
  const auto best = load_checkpoint(dir / "best.ckpt");
  EXPECT_EQ(last.state.epoch, 1u);
  std::vector<std::pair<std::size_t, double>> resumed;
  PretrainOptions o3;
  o3.on_batch = [&](std::size_t s, double l) { resumed.emplace_back(s, l); };
  o3.resume_best = &best;
  auto r = pretrain(last, data, data, cfg, o3);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.history[0].epoch, 2u);
  ASSERT_EQ(resumed.size(), 2u);
  ASSERT_EQ(full.size(), 4u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(resumed[i].first, full[2 + i].first);
    EXPECT_NEAR(resumed[i].second, full[2 + i].second, 1e-6);
  }
}

TEST(Pretrain, RejectsEmptyAndUnknownWords) {
  auto cfg = quick_config();
  EXPECT_THROW(pretrain(fresh_checkpoint(micro_config()), {}, {}, cfg), DataError);
  auto data = toy_corpus(2, 8);
  data[0].words = {"zebra"};
  EXPECT_THROW(pretrain(fresh_checkpoint(micro_config()), data, data, cfg), DataError);
}

slu::SluConfig head_config(std::size_t input_dim) {
  slu::SluConfig sc;
  sc.input_dim = input_dim;
  sc.d = 16;
  sc.heads = 2;
  sc.ffn = 32;
  sc.hidden = 32;
  sc.bits = grabo().size();
  sc.dropout = 0.0;
  return sc;
}

TEST(TrainSlu, ExtractionLeavesBackboneUnchanged) {
  const auto data = toy_corpus(4, 9);
  auto c = fresh_checkpoint(micro_config());
  const auto before = parameter_hashes(c.speech->model.parameters());
  const auto reprs = extract_all(c.speech->model, data, {});
  ASSERT_EQ(reprs.size(), data.size());
  for (const auto& r : reprs) EXPECT_EQ(r.width, 16u);
  EXPECT_EQ(parameter_hashes(c.speech->model.parameters()), before);
}

TEST(TrainSlu, OverfitsEightExamples) {
  std::mt19937_64 rng(9);
  std::normal_distribution<float> nd;
  std::vector<decoder::RepresentationSequence> reprs(8);
  std::vector<SluExample> ex;
  for (std::size_t i = 0; i < reprs.size(); ++i) {
    reprs[i].length = 2 + i % 3;
    reprs[i].width = 16;
    reprs[i].vectors.resize(reprs[i].length * 16);
    for (auto& v : reprs[i].vectors) v = nd(rng);
    ex.push_back({&reprs[i], grabo().valid_set[(5 * i) % grabo().valid_set.size()]});
  }
  slu::SluHead<float> head(head_config(16), 2);
  auto cfg = slu_defaults();
  cfg.epochs = 300;
  cfg.early_stop_patience = 300;
  cfg.peak_lr = 0.003;
  const auto r = train_slu(head, ex, {}, grabo(), cfg);
  EXPECT_EQ(r.best_accuracy, 1.0);
  std::vector<const decoder::RepresentationSequence*> items;
  for (const auto& r2 : reprs) items.push_back(&r2);
  const auto preds = predict_intents(head, items, grabo());
  for (std::size_t i = 0; i < ex.size(); ++i) EXPECT_EQ(preds[i].multihot, ex[i].target);
}

TEST(TrainSlu, EarlyStoppingKeepsBestAndIsDeterministic) {
  const auto data = toy_corpus(12, 10);
  auto c = fresh_checkpoint(micro_config());
  const auto reprs = extract_all(c.speech->model, data, {});
  std::vector<SluExample> train, valid;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (i < 8 ? train : valid).push_back({&reprs[i], slu::encode_intent(data[i].intent, grabo())});
  }
  auto cfg = slu_defaults();
  cfg.epochs = 30;
  cfg.early_stop_patience = 5;
  slu::SluHead<float> a(head_config(16), 4), b(head_config(16), 4);
  const auto ra = train_slu(a, train, valid, grabo(), cfg);
  const auto rb = train_slu(b, train, valid, grabo(), cfg);
  EXPECT_EQ(parameter_hashes(a.parameters()), parameter_hashes(b.parameters()));
  double best_acc = -1.0, best_loss = 0.0;
  for (const auto& e : ra.history) {
    if (e.improved) {
      EXPECT_TRUE(e.valid_accuracy > best_acc || (e.valid_accuracy == best_acc && e.valid_loss < best_loss));
      best_acc = e.valid_accuracy;
      best_loss = e.valid_loss;
    }
    EXPECT_LE(e.valid_accuracy, ra.best_accuracy);
  }
  EXPECT_LE(ra.history.size(), 30u);
}

TEST(TrainSlu, RejectsLabelsOutsideSchema) {
  decoder::RepresentationSequence r;
  r.length = 1;
  r.width = 16;
  r.vectors.assign(16, 0.0f);
  slu::SluHead<float> head(head_config(16), 1);
  std::vector<SluExample> ex{{&r, slu::Multihot(grabo().size(), 0)}};
  EXPECT_THROW(train_slu(head, ex, {}, grabo(), slu_defaults()), DataError);
}

TEST(Finetune, LastFourDecoderLayersOnly) {
  const auto data = toy_corpus(8, 11);
  auto c = fresh_checkpoint(micro_config(6));
  auto& model = c.speech->model;
  slu::SluHead<float> head(head_config(16), 3);
  const auto examples = prepare_finetune(model, data, grabo());
  const auto before = parameter_hashes(model.parameters());
  const auto head_before = parameter_hashes(head.parameters());

  auto cfg = finetune_defaults();
  cfg.epochs = 2;
  cfg.peak_lr = 1e-3;
  cfg.batch_size = 4;
  const auto trainable = unfreeze_prefixes("decoder_last4", model.config, false);
  // Validation on a selection set that always improves keeps the trained values.
  finetune(model, head, "decoder.4", examples, {}, grabo(), cfg, trainable);
  cfg.early_stop_patience = 100;
  const auto after = parameter_hashes(model.parameters());

  for (const char* frozen : {"encoder", "ctc", "decoder.embed", "decoder.0", "decoder.1", "decoder.norm",
                             "decoder.output"}) {
    EXPECT_FALSE(any_prefix_changed(before, after, frozen)) << frozen;
  }
  // decoder.5 sits above the representation layer and receives no gradient.
  EXPECT_FALSE(any_prefix_changed(before, after, "decoder.5"));
  const bool head_changed = parameter_hashes(head.parameters()) != head_before;
  const bool dec_changed = any_prefix_changed(before, after, "decoder.2") &&
                           any_prefix_changed(before, after, "decoder.3") &&
                           any_prefix_changed(before, after, "decoder.4");
  // Either the run improved on the start (and kept the update) or it kept the start.
  EXPECT_EQ(head_changed, dec_changed);
}

TEST(Finetune, MatchesFrozenPathBeforeTraining) {
  const auto data = toy_corpus(6, 12);
  auto c = fresh_checkpoint(micro_config());
  slu::SluHead<float> head(head_config(16), 3);
  const auto examples = prepare_finetune(c.speech->model, data, grabo());
  decoder::ExtractOptions opt;
  opt.layer = "decoder.1";
  const auto reprs = extract_all(c.speech->model, data, opt);
  std::vector<const decoder::RepresentationSequence*> items;
  for (const auto& r : reprs) items.push_back(&r);
  const auto frozen = predict_intents(head, items, grabo());
  const auto tuned = finetune_predict(c.speech->model, head, "decoder.1", examples, grabo());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(frozen[i].index, tuned[i].index);
    EXPECT_EQ(examples[i].tokens, reprs[i].tokens);
  }
}

}  // namespace
}  // namespace mslu::train
