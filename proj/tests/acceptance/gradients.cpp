#include <chrono>
#include <functional>
#include <random>

#include "acceptance.hpp"
#include "mslu/ctc/ctc.hpp"
#include "mslu/ctc/vocabulary.hpp"
#include "mslu/decoder/mlm.hpp"
#include "mslu/decoder/speech_model.hpp"
#include "mslu/nn/grad_check.hpp"
#include "mslu/nn/ops.hpp"
#include "mslu/slu/head.hpp"

namespace mslu::acceptance {

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kStep = 1e-5;

using nn::Tensor;
using Params = nn::ParameterList<double>;

Tensor<double> random_tensor(nn::Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> dist(0.0, 1.0);
  nn::Buffer<double> v(nn::numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor<double>::from(std::move(shape), std::move(v), grad);
}

// Fixed random projection so the checked scalar is not a plain sum.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return nn::sum(nn::mul(y, random_tensor(y.shape(), rng, false)));
}

struct Case {
  std::string name;
  std::function<Tensor<double>()> loss;
  Params inputs;
  std::size_t max_coordinates = 0;
};

features::FeatureSequence random_features(std::size_t T, std::size_t F, std::mt19937_64& rng) {
  std::normal_distribution<float> dist;
  features::FeatureSequence f;
  f.frames = T;
  f.bins = F;
  f.values.resize(T * F);
  for (auto& v : f.values) v = dist(rng);
  return f;
}

}  // namespace

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  std::vector<Case> cases;

  {
    auto x = random_tensor({4, 5}, rng), w = random_tensor({3, 5}, rng), b = random_tensor({3}, rng);
    cases.push_back({"linear", [=] { return project(nn::linear(x, w, b), 1); }, {{"x", x}, {"w", w}, {"b", b}}});
  }
  {
    auto x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    cases.push_back(
        {"layer_norm", [=] { return project(nn::layer_norm(x, g, b, 1e-5), 2); }, {{"x", x}, {"gain", g}, {"bias", b}}});
  }
  {
    auto mha = std::make_shared<nn::MultiHeadAttention<double>>(8, 2, rng);
    auto q = random_tensor({2, 3, 8}, rng), kv = random_tensor({2, 4, 8}, rng);
    Params p{{"query_in", q}, {"kv_in", kv}};
    mha->collect("attn", p);
    const std::vector<std::uint8_t> valid{1, 1, 1, 1, 1, 1, 0, 0};
    cases.push_back({"attention", [=] { return project((*mha)(q, kv, valid).output, 3); }, p});
  }
  {
    auto ffn = std::make_shared<nn::FeedForward<double>>(4, 8, 0.0, rng);
    auto x = random_tensor({3, 4}, rng);
    Params p{{"x", x}};
    ffn->collect("ffn", p);
    cases.push_back({"ffn", [=] { return project((*ffn)(x, {}), 4); }, p});
  }
  {
    auto fe = std::make_shared<nn::ConvFrontend<double>>(6, 2, 3, 4, rng);
    auto x = random_tensor({2, 7, 6}, rng);
    Params p{{"features", x}};
    fe->collect("conv", p);
    cases.push_back({"conv_frontend", [=] { return project((*fe)(x, {7, 5}).x, 5); }, p});
  }
  {
    auto logits = random_tensor({2, 5, 4}, rng);
    cases.push_back({"ctc_loss",
                     [=] { return ctc::ctc_batch_loss(nn::log_softmax(logits), {5, 3}, {{1, 3, 3}, {2}}); },
                     {{"logits", logits}}});
  }
  {
    auto logits = random_tensor({2, 4, 6}, rng);
    cases.push_back({"mlm_loss",
                     [=] { return decoder::mlm_loss(logits, {{1, 2, 3, 4}, {5, 0}}, {{1, 3}, {0}}, 0.1); },
                     {{"logits", logits}}});
  }
  {
    auto logits = random_tensor({3, 4}, rng);
    const std::vector<std::uint8_t> t{1, 0, 0, 1, 0, 0, 1, 1, 1, 0, 1, 0};
    cases.push_back({"bce_loss", [=] { return slu::bce_loss(logits, t); }, {{"logits", logits}}});
  }
  {
    // Encoder, CTC head, decoder and an SLU head on the penultimate decoder
    // layer, trained jointly on the hybrid loss plus the intent loss.
    encoder::ModelConfig cfg;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    cfg.heads = 2;
    cfg.d_model = 16;
    cfg.ffn = 32;
    cfg.dropout = 0.0;
    cfg.vocab = 9;
    cfg.mel_bins = 6;
    cfg.conv_channels1 = 2;
    cfg.conv_channels2 = 3;
    auto model = std::make_shared<decoder::SpeechModel<double>>(cfg, 7);
    slu::SluConfig sc;
    sc.input_dim = 16;
    sc.d = 8;
    sc.heads = 2;
    sc.layers = 1;
    sc.ffn = 16;
    sc.hidden = 16;
    sc.bits = 4;
    sc.dropout = 0.0;
    auto head = std::make_shared<slu::SluHead<double>>(sc, 8);
    auto f1 = std::make_shared<features::FeatureSequence>(random_features(13, cfg.mel_bins, rng));
    auto f2 = std::make_shared<features::FeatureSequence>(random_features(9, cfg.mel_bins, rng));
    const std::vector<std::vector<int>> targets{{5, 6, 7}, {8, 5}};
    const std::vector<int> ids{ctc::Vocabulary::kMask, 6, ctc::Vocabulary::kMask, 8, ctc::Vocabulary::kMask,
                               ctc::Vocabulary::kPad};
    const std::vector<std::uint8_t> intent{1, 0, 1, 0, 0, 1, 0, 1};
    const std::size_t penultimate = cfg.dec_layers - 2;
    Params p = model->parameters();
    for (auto& np : head->parameters()) p.push_back({"slu." + np.name, np.tensor});
    cases.push_back({"microstack",
                     [=] {
                       auto fb = decoder::collate<double>({f1.get(), f2.get()});
                       auto enc = model->encode(fb.features, fb.lengths, {});
                       auto l_ctc = ctc::ctc_batch_loss(model->ctc_log_probs(enc), enc.lengths, targets);
                       auto dec = model->decode_forward(ids, 2, 3, enc, {});
                       auto l_mlm = decoder::mlm_loss(dec.logits, targets, {{0, 2}, {0}});
                       auto hybrid = nn::add(nn::scale(l_ctc, 0.3), nn::scale(l_mlm, 0.7));
                       auto logits = (*head)(dec.layer_states[penultimate], dec.valid, {}).logits;
                       return nn::add(hybrid, slu::bce_loss(logits, intent));
                     },
                     p, 6});
  }

  double worst = 0.0;
  std::string per_case;
  for (const auto& c : cases) {
    nn::GradCheckOptions opt;
    opt.step = kStep;
    opt.max_coordinates = c.max_coordinates;
    opt.seed = 9;
    const auto report = nn::grad_check(c.loss, c.inputs, opt);
    worst = std::max(worst, report.max_relative_error);
    per_case += (per_case.empty() ? "" : ", ") + c.name + " " + sci(report.max_relative_error);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < kGradTolerance && secs < kGradSeconds,
          "max relative error " + sci(worst) + " (" + per_case + "), " + fmt(secs, 1) + " s"};
}

}  // namespace mslu::acceptance
