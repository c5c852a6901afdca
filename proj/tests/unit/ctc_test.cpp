#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mslu/ctc/ctc.hpp"
#include "mslu/ctc/vocabulary.hpp"
#include "mslu/error.hpp"
#include "mslu/nn/grad_check.hpp"
#include "mslu/nn/ops.hpp"

namespace mslu::ctc {
namespace {

// Reference collapse written from the rule text: walk runs, keep one symbol
// per run, discard the symbols that never surface.
std::vector<int> oracle_collapse(const std::vector<int>& path) {
  std::vector<int> runs;
  for (int k : path)
    if (runs.empty() || runs.back() != k) runs.push_back(k);
  std::vector<int> out;
  for (int k : runs)
    if (k != 0 && k != Vocabulary::kPad && k != Vocabulary::kMask) out.push_back(k);
  return out;
}

// For the brute-force oracle only blank (0) is special.
std::vector<int> blank_collapse(const std::vector<int>& path) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != 0) out.push_back(k);
    prev = k;
  }
  return out;
}

double brute_force_prob(const std::vector<double>& probs, std::size_t T, std::size_t V,
                        const std::vector<int>& target) {
  double total = 0;
  std::vector<int> path(T, 0);
  std::size_t count = 1;
  for (std::size_t t = 0; t < T; ++t) count *= V;
  for (std::size_t code = 0; code < count; ++code) {
    std::size_t c = code;
    double p = 1;
    for (std::size_t t = 0; t < T; ++t) {
      path[t] = static_cast<int>(c % V);
      c /= V;
      p *= probs[t * V + path[t]];
    }
    if (blank_collapse(path) == target) total += p;
  }
  return total;
}

std::vector<double> random_posterior(std::size_t T, std::size_t V, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.5);
  std::vector<double> lp(T * V);
  for (std::size_t t = 0; t < T; ++t) {
    double m = -1e300, s = 0;
    for (std::size_t k = 0; k < V; ++k) m = std::max(m, lp[t * V + k] = dist(rng));
    for (std::size_t k = 0; k < V; ++k) s += std::exp(lp[t * V + k] - m);
    for (std::size_t k = 0; k < V; ++k) lp[t * V + k] -= m + std::log(s);
  }
  return lp;
}

std::vector<double> exp_all(const std::vector<double>& lp) {
  std::vector<double> p(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) p[i] = std::exp(lp[i]);
  return p;
}

TEST(CtcLoss, SingleFrame) {
  std::vector<double> lp = {std::log(0.2), std::log(0.5), std::log(0.3)};
  auto r = ctc_loss<double>(lp, 1, 3, std::vector<int>{1});
  EXPECT_NEAR(r.loss, -std::log(0.5), 1e-12);
}

TEST(CtcLoss, TwoFramesThreePaths) {
  std::vector<double> p = {0.3, 0.5, 0.2, 0.6, 0.1, 0.3};
  std::vector<double> lp;
  for (double v : p) lp.push_back(std::log(v));
  auto r = ctc_loss<double>(lp, 2, 3, std::vector<int>{1});
  EXPECT_NEAR(r.loss, -std::log(0.5 * 0.1 + 0.5 * 0.6 + 0.3 * 0.1), 1e-12);
}

TEST(CtcLoss, RepeatedTargetNeedsBlank) {
  std::mt19937_64 rng(1);
  auto lp = random_posterior(3, 3, rng);
  auto r = ctc_loss<double>(lp, 3, 3, std::vector<int>{1, 1});
  // Only a,-,a collapses to [a,a] in three frames.
  EXPECT_NEAR(r.loss, -(lp[1] + lp[3] + lp[7]), 1e-12);
  EXPECT_NEAR(r.loss, -std::log(brute_force_prob(exp_all(lp), 3, 3, {1, 1})), 1e-12);
}

TEST(CtcLoss, MatchesBruteForceOnRandomInstances) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + rng() % 7, V = 2 + rng() % 3, L = 1 + rng() % 4;
    std::vector<int> target(L);
    for (auto& k : target) k = 1 + static_cast<int>(rng() % (V - 1));
    auto lp = random_posterior(T, V, rng);
    auto r = ctc_loss<double>(lp, T, V, target);
    if (T < min_frames(target)) {
      EXPECT_FALSE(r.feasible);
      EXPECT_TRUE(std::isinf(r.loss));
      for (double g : r.grad) EXPECT_EQ(g, 0.0);
      EXPECT_EQ(brute_force_prob(exp_all(lp), T, V, target), 0.0);
      continue;
    }
    EXPECT_NEAR(r.loss, -std::log(brute_force_prob(exp_all(lp), T, V, target)), 1e-6);
  }
}

TEST(CtcLoss, LatticeIsComplete) {
  std::mt19937_64 rng(3);
  auto lp = random_posterior(3, 3, rng);
  const auto p = exp_all(lp);
  double mass = p[0] * p[3] * p[6];  // all-blank path, empty target
  std::vector<std::vector<int>> targets;
  for (int a = 1; a < 3; ++a) {
    targets.push_back({a});
    for (int b = 1; b < 3; ++b) {
      targets.push_back({a, b});
      for (int c = 1; c < 3; ++c) targets.push_back({a, b, c});
    }
  }
  for (const auto& t : targets) {
    auto r = ctc_loss<double>(lp, 3, 3, t);
    if (r.feasible) mass += std::exp(-r.loss);
  }
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(CtcLoss, OccupancyGradientSumsToMinusOnePerFrame) {
  std::mt19937_64 rng(4);
  auto lp = random_posterior(6, 4, rng);
  auto r = ctc_loss<double>(lp, 6, 4, std::vector<int>{1, 2, 2});
  for (std::size_t t = 0; t < 6; ++t) {
    double s = 0;
    for (std::size_t k = 0; k < 4; ++k) s += r.grad[t * 4 + k];
    EXPECT_NEAR(s, -1.0, 1e-12);
  }
}

TEST(CtcLoss, Errors) {
  std::vector<double> lp(6, std::log(1.0 / 3));
  EXPECT_THROW(ctc_loss<double>(lp, 2, 3, std::vector<int>{}), ShapeError);
  EXPECT_THROW(ctc_loss<double>(lp, 2, 3, std::vector<int>{0}), ShapeError);
  EXPECT_THROW(ctc_loss<double>(lp, 2, 3, std::vector<int>{3}), ShapeError);
}

TEST(CtcBatchLoss, GradientCheckThroughLogSoftmax) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> dist;
  std::vector<double> v(2 * 5 * 4);
  for (auto& x : v) x = dist(rng);
  auto logits = nn::Tensor<double>::from({2, 5, 4}, v, true);
  std::vector<std::size_t> lengths{5, 3};
  std::vector<std::vector<int>> targets{{1, 3, 3}, {2}};
  auto report = nn::grad_check(
      [&] { return ctc_batch_loss(nn::log_softmax(logits), lengths, targets); }, {{"logits", logits}});
  EXPECT_LT(report.max_relative_error, 1e-4) << report.summary();
}

TEST(CtcBatchLoss, LengthNormalizedMeanSkippingInfeasible) {
  std::mt19937_64 rng(6);
  auto a = random_posterior(4, 3, rng);
  auto b = random_posterior(4, 3, rng);
  std::vector<double> both(a);
  both.insert(both.end(), b.begin(), b.end());
  std::vector<double> c(b);
  both.insert(both.end(), c.begin(), c.end());
  auto lp = nn::Tensor<double>::from({3, 4, 3}, both, true);
  CtcBatchInfo info;
  std::vector<std::vector<int>> targets{{1, 2}, {2}, {1, 1, 1}};
  auto loss = ctc_batch_loss(lp, {4, 4, 2}, targets, &info);
  const double la = ctc_loss<double>(a, 4, 3, targets[0]).loss;
  const double lb = ctc_loss<double>(b, 4, 3, targets[1]).loss;
  EXPECT_NEAR(loss.item(), (la / 2 + lb / 1) / 2, 1e-12);
  EXPECT_EQ(info.skipped, 1u);
  EXPECT_FALSE(info.feasible[2]);
  loss.backward();
  for (std::size_t i = 24; i < 36; ++i) EXPECT_EQ(lp.grad()[i], 0.0);
}

TEST(Collapse, RuleExamples) {
  const int a = 5, b = 6, _ = Vocabulary::kBlank;
  EXPECT_TRUE(collapse(std::vector<int>{_, _, _}).empty());
  EXPECT_EQ(collapse(std::vector<int>{a, a, _, a, b, b}), (std::vector<int>{a, a, b}));
}

TEST(Collapse, RandomSequencesMatchOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<int> path(rng() % 12);
    for (auto& k : path) k = static_cast<int>(rng() % 7);
    auto out = collapse(path);
    EXPECT_EQ(out, oracle_collapse(path));
    // A collapsed output can hold adjacent repeats (a,-,a -> a,a), so
    // idempotence is checked on its shortest alignment path, and literally
    // whenever the output has no adjacent repeats.
    EXPECT_EQ(collapse(canonical_path(out)), out);
    EXPECT_EQ(canonical_path(out).size(), min_frames(out));
    if (std::adjacent_find(out.begin(), out.end()) == out.end()) {
      EXPECT_EQ(collapse(out), out);
    }
    for (int k : out) EXPECT_FALSE(Vocabulary::is_silent(k));
  }
}

TEST(GreedyDecode, ConfidenceIsMaxOverMergedFrames) {
  // vocab: blank, unk, pad, mask, a=4, b=5
  auto row = [](std::vector<double> p) {
    for (auto& x : p) x = std::log(x);
    return p;
  };
  std::vector<double> lp;
  for (auto r : {row({0.1, 0.1, 0.1, 0.1, 0.6, 0.0001}), row({0.05, 0.01, 0.01, 0.02, 0.9, 0.01}),
                 row({0.7, 0.1, 0.1, 0.05, 0.04, 0.01}), row({0.1, 0.02, 0.02, 0.01, 0.05, 0.8})})
    lp.insert(lp.end(), r.begin(), r.end());
  auto h = greedy_decode<double>(lp, 4, 6);
  EXPECT_EQ(h.tokens, (std::vector<int>{4, 5}));
  EXPECT_NEAR(h.confidence[0], 0.9, 1e-12);
  EXPECT_NEAR(h.confidence[1], 0.8, 1e-12);
}

TEST(GreedyDecode, RandomPosteriorsAgreeWithOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng() % 10, V = 7;
    auto lp = random_posterior(T, V, rng);
    auto h = greedy_decode<double>(lp, T, V);
    // Oracle: frame argmax over emittable ids, then runs with max probability.
    std::vector<int> path(T);
    std::vector<double> prob(T);
    for (std::size_t t = 0; t < T; ++t) {
      int best = 0;
      for (int k = 0; k < static_cast<int>(V); ++k)
        if (k != Vocabulary::kPad && k != Vocabulary::kMask && lp[t * V + k] > lp[t * V + best]) best = k;
      path[t] = best;
      prob[t] = std::exp(lp[t * V + best]);
    }
    std::vector<int> tokens;
    std::vector<double> conf;
    for (std::size_t t = 0; t < T; ++t) {
      if (path[t] == 0) continue;
      if (t > 0 && path[t] == path[t - 1]) {
        conf.back() = std::max(conf.back(), prob[t]);
      } else {
        tokens.push_back(path[t]);
        conf.push_back(prob[t]);
      }
    }
    EXPECT_EQ(h.tokens, tokens);
    EXPECT_EQ(h.tokens, oracle_collapse(path));
    ASSERT_EQ(h.confidence.size(), conf.size());
    for (std::size_t i = 0; i < conf.size(); ++i) EXPECT_DOUBLE_EQ(h.confidence[i], conf[i]);
  }
}

TEST(MaskLowConfidence, Examples) {
  auto none = mask_low_confidence({4, 5, 6}, {1.0, 1.0, 1.0});
  EXPECT_EQ(none.mask_count(), 0u);
  auto one = mask_low_confidence({4, 5, 6}, {0.95, 0.9, 0.89});
  EXPECT_EQ(one.tokens, (std::vector<int>{4, 5, Vocabulary::kMask}));
  EXPECT_TRUE(one.is_masked[2]);
  EXPECT_EQ(one.confidence[2], 0.89);
  EXPECT_TRUE(mask_low_confidence({}, {}).tokens.empty());
  EXPECT_THROW(mask_low_confidence({4}, {0.5}, 1.5), ShapeError);
  EXPECT_THROW(mask_low_confidence({4}, {}), ShapeError);
}

TEST(Vocabulary, ReservedLayoutAndLookup) {
  auto v = Vocabulary::from_corpus({{"turn", "left"}, {"turn", "right"}});
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.symbol(0), "<blank>");
  EXPECT_EQ(v.id("left"), 4);
  EXPECT_EQ(v.id("zebra"), Vocabulary::kUnk);
  EXPECT_EQ(v.decode(v.encode({"turn", "right"})), (std::vector<std::string>{"turn", "right"}));
  EXPECT_EQ(Vocabulary::from_symbols(v.symbols()).symbols(), v.symbols());
  EXPECT_THROW(Vocabulary::from_tokens({"<mask>"}), DataError);
  EXPECT_THROW(v.symbol(7), ShapeError);
}

}  // namespace
}  // namespace mslu::ctc
