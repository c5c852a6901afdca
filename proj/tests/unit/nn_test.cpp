#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mslu/nn/grad_check.hpp"
#include "mslu/nn/layers.hpp"
#include "mslu/nn/ops.hpp"

namespace mslu::nn {
namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor<double>::from(std::move(shape), std::move(v), grad);
}

// Fixed random projection so that the checked loss is not a plain sum.
Tensor<double> weighted_loss(const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(y.shape(), rng, false);
  return sum(mul(y, w));
}

TEST(Linear, IdentityWeightIsIdentity) {
  auto x = Tensor<double>::from({1, 2}, {3.0, -4.0});
  auto w = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto b = Tensor<double>::zeros({2});
  auto y = linear(x, w, b);
  EXPECT_DOUBLE_EQ(y.data()[0], 3.0);
  EXPECT_DOUBLE_EQ(y.data()[1], -4.0);
}

TEST(Linear, HandArithmetic) {
  auto x = Tensor<double>::from({2}, {1.0, 2.0});
  auto w = Tensor<double>::from({2, 2}, {1, 1, 0, 1});
  auto b = Tensor<double>::from({2}, {0.5, 0.0});
  auto y = linear(x, w, b);
  EXPECT_DOUBLE_EQ(y.data()[0], 3.5);
  EXPECT_DOUBLE_EQ(y.data()[1], 2.0);
}

TEST(Linear, ShapeMismatchThrows) {
  auto x = Tensor<double>::zeros({3});
  auto w = Tensor<double>::zeros({2, 2});
  EXPECT_THROW(linear(x, w, Tensor<double>()), ShapeError);
}

TEST(Linear, GradientOfSumMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto x = random_tensor({4, 5}, rng);
  auto w = random_tensor({3, 5}, rng);
  auto b = random_tensor({3}, rng);
  auto report = grad_check([&] { return sum(linear(x, w, b)); }, {{"x", x}, {"w", w}, {"b", b}});
  EXPECT_LT(report.max_relative_error, 1e-4) << report.summary();
}

TEST(LayerNorm, ConstantVectorMapsToZero) {
  auto x = Tensor<double>::full({1, 4}, 2.5);
  LayerNorm<double> ln(4);
  auto y = ln(x);
  for (double v : y.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(LayerNorm, TwoPointSymmetry) {
  auto x = Tensor<double>::from({2}, {1.0, 3.0});
  LayerNorm<double> ln(2);
  auto y = ln(x);
  // var = 1 so eps shifts the result by ~eps/2.
  EXPECT_NEAR(y.data()[0], -1.0, 1e-5);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-5);
}

TEST(LayerNorm, GradientCheck) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({3, 6}, rng);
  auto g = random_tensor({6}, rng);
  auto b = random_tensor({6}, rng);
  auto report = grad_check([&] { return weighted_loss(layer_norm(x, g, b), 7); },
                           {{"x", x}, {"gain", g}, {"bias", b}});
  EXPECT_LT(report.max_relative_error, 1e-4) << report.summary();
}

TEST(Softmax, UniformInput) {
  auto y = softmax(Tensor<double>::full({5}, 0.3));
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.2);
}

TEST(Softmax, ClosedForm) {
  auto y = softmax(Tensor<double>::from({2}, {0.0, std::log(3.0)}));
  EXPECT_NEAR(y.data()[0], 0.25, 1e-15);
  EXPECT_NEAR(y.data()[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  auto a = softmax(Tensor<float>::from({3}, {1.0f, 2.0f, -0.5f}));
  auto b = softmax(Tensor<float>::from({3}, {101.0f, 102.0f, 99.5f}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-7);
}

TEST(Softmax, LargeInputsStayFinite) {
  auto y = log_softmax(Tensor<float>::from({3}, {1e30f, -1e30f, 0.0f}));
  for (float v : y.data()) EXPECT_FALSE(std::isnan(v));
}

TEST(Softmax, GradientChecks) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({3, 4}, rng);
  auto r1 = grad_check([&] { return weighted_loss(softmax(x), 9); }, {{"x", x}});
  auto r2 = grad_check([&] { return weighted_loss(log_softmax(x), 9); }, {{"x", x}});
  EXPECT_LT(r1.max_relative_error, 1e-4);
  EXPECT_LT(r2.max_relative_error, 1e-4);
}

TEST(Attention, SingleKeyGetsAllWeight) {
  std::mt19937_64 rng(4);
  MultiHeadAttention<double> mha(8, 2, rng);
  auto q = random_tensor({1, 3, 8}, rng, false);
  auto kv = random_tensor({1, 1, 8}, rng, false);
  std::vector<std::uint8_t> valid{1};
  auto res = mha(q, kv, valid);
  for (double w : res.weights.data()) EXPECT_EQ(w, 1.0);
  // Output is the projected value for every query.
  auto expected = mha.output(mha.value(kv));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      EXPECT_NEAR(res.output.data()[i * 8 + j], expected.data()[j], 1e-12);
}

TEST(Attention, IdenticalKeysSplitEvenly) {
  std::mt19937_64 rng(5);
  MultiHeadAttention<double> mha(8, 4, rng);
  auto q = random_tensor({1, 2, 8}, rng, false);
  auto row = random_tensor({1, 1, 8}, rng, false);
  std::vector<double> two(16);
  std::copy(row.data().begin(), row.data().end(), two.begin());
  std::copy(row.data().begin(), row.data().end(), two.begin() + 8);
  auto kv = Tensor<double>::from({1, 2, 8}, two);
  std::vector<std::uint8_t> valid{1, 1};
  auto res = mha(q, kv, valid);
  for (double w : res.weights.data()) EXPECT_NEAR(w, 0.5, 1e-12);
}

TEST(Attention, MaskedPadPositionDoesNotChangeOutput) {
  std::mt19937_64 rng(6);
  MultiHeadAttention<double> mha(8, 2, rng);
  auto q = random_tensor({1, 3, 8}, rng, false);
  auto kv = random_tensor({1, 4, 8}, rng, false);
  std::vector<double> padded(kv.data().begin(), kv.data().end());
  for (int i = 0; i < 8; ++i) padded.push_back(123.0);
  auto kv_pad = Tensor<double>::from({1, 5, 8}, padded);
  auto a = mha(q, kv, std::vector<std::uint8_t>{1, 1, 1, 1});
  auto b = mha(q, kv_pad, std::vector<std::uint8_t>{1, 1, 1, 1, 0});
  for (std::size_t i = 0; i < a.output.size(); ++i)
    EXPECT_NEAR(a.output.data()[i], b.output.data()[i], 1e-6);
  // Masked key has weight exactly zero; rows sum to one.
  for (std::size_t r = 0; r < 2 * 3; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) s += b.weights.data()[r * 5 + j];
    EXPECT_NEAR(s, 1.0, 1e-6);
    EXPECT_EQ(b.weights.data()[r * 5 + 4], 0.0);
  }
}

TEST(Attention, ContractErrors) {
  std::mt19937_64 rng(7);
  EXPECT_THROW(MultiHeadAttention<double>(6, 4, rng), ShapeError);
  MultiHeadAttention<double> mha(8, 2, rng);
  auto x = random_tensor({1, 2, 8}, rng, false);
  EXPECT_THROW(mha(x, x, std::vector<std::uint8_t>{1}), ShapeError);
}

TEST(Attention, GradientCheck) {
  std::mt19937_64 rng(8);
  auto q = random_tensor({2, 3, 6}, rng);
  auto k = random_tensor({2, 4, 6}, rng);
  auto v = random_tensor({2, 4, 6}, rng);
  std::vector<std::uint8_t> valid{1, 1, 1, 1, 1, 1, 0, 0};
  auto report = grad_check(
      [&] { return weighted_loss(scaled_dot_attention(q, k, v, valid, 3).output, 11); },
      {{"q", q}, {"k", k}, {"v", v}});
  EXPECT_LT(report.max_relative_error, 1e-4) << report.summary();
}

TEST(FeedForward, ZeroWeightsGiveSecondBias) {
  std::mt19937_64 rng(9);
  FeedForward<double> ffn(4, 8, 0.0, rng);
  std::fill(ffn.expand.weight.data().begin(), ffn.expand.weight.data().end(), 0.0);
  std::fill(ffn.contract.weight.data().begin(), ffn.contract.weight.data().end(), 0.0);
  auto y = ffn(random_tensor({3, 4}, rng, false), {});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_EQ(y.data()[r * 4 + j], ffn.contract.bias.data()[j]);
}

TEST(FeedForward, NegativePreactivationsGetNoGradient) {
  auto x = Tensor<double>::from({3}, {-1.0, 2.0, -0.5}, true);
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
  EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(FeedForward, GradientCheck) {
  std::mt19937_64 rng(10);
  FeedForward<double> ffn(5, 7, 0.0, rng);
  auto x = random_tensor({4, 5}, rng);
  ParameterList<double> params{{"x", x}};
  ffn.collect("ffn", params);
  auto report = grad_check([&] { return weighted_loss(ffn(x, {}), 13); }, params);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.summary();
}

TEST(ConvFrontend, SubsamplesTimeByFour) {
  std::mt19937_64 rng(11);
  ConvFrontend<float> fe(80, 4, 4, 256, rng);
  std::vector<float> feats(2 * 100 * 80, 0.5f);
  auto x = Tensor<float>::from({2, 100, 80}, feats);
  auto out = fe(x, {100, 7});
  EXPECT_EQ(out.x.shape(), (Shape{2, 25, 256}));
  EXPECT_EQ(out.lengths[0], 25u);
  EXPECT_EQ(out.lengths[1], 2u);
  EXPECT_EQ(subsampled_length(7), 2u);
}

TEST(ConvFrontend, GradientCheck) {
  std::mt19937_64 rng(12);
  ConvFrontend<double> fe(6, 2, 3, 4, rng);
  auto x = random_tensor({2, 7, 6}, rng);
  ParameterList<double> params{{"x", x}};
  fe.collect("fe", params);
  auto report = grad_check([&] { return weighted_loss(fe(x, {7, 5}).x, 17); }, params);
  EXPECT_LT(report.max_relative_error, 1e-4) << report.summary();
}

TEST(Dropout, EvalModeAndZeroRateAreIdentity) {
  std::mt19937_64 rng(13);
  auto x = random_tensor({10}, rng, false);
  auto e = dropout(x, 0.3, false, rng);
  auto z = dropout(x, 0.0, true, rng);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(e.data()[i], x.data()[i]);
    EXPECT_EQ(z.data()[i], x.data()[i]);
  }
  EXPECT_THROW(dropout(x, 1.0, true, rng), ShapeError);
  EXPECT_THROW(dropout(x, -0.1, true, rng), ShapeError);
}

TEST(Dropout, TrainModePreservesMean) {
  std::mt19937_64 rng(14);
  auto x = Tensor<float>::full({100000}, 1.0f);
  auto y = dropout(x, 0.1, true, rng);
  double mean = 0;
  for (float v : y.data()) mean += v;
  mean /= 100000.0;
  EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(Dropout, DeterministicGivenSeed) {
  std::mt19937_64 a(15), b(15);
  auto x = Tensor<float>::full({64}, 1.0f);
  auto ya = dropout(x, 0.5, true, a);
  auto yb = dropout(x, 0.5, true, b);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(ya.data()[i], yb.data()[i]);
}

TEST(Embedding, LookupAndScatter) {
  auto table = Tensor<double>::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  std::vector<int> ids{0, 2, 2};
  auto y = embedding<double>(ids, {3}, table);
  EXPECT_EQ(y.data()[0], 1.0);
  EXPECT_EQ(y.data()[1], 2.0);
  sum(y).backward();
  EXPECT_EQ(table.grad()[0], 1.0);
  EXPECT_EQ(table.grad()[2], 0.0);
  EXPECT_EQ(table.grad()[4], 2.0);
  std::vector<int> bad{3};
  EXPECT_THROW(embedding<double>(bad, {1}, table), ShapeError);
}

TEST(Graph, GradientsAccumulateAcrossBackwardCalls) {
  auto w = Tensor<double>::from({2}, {1.0, 2.0}, true);
  sum(scale(w, 3.0)).backward();
  sum(scale(w, 3.0)).backward();
  EXPECT_EQ(w.grad()[0], 6.0);
  w.zero_grad();
  EXPECT_EQ(w.grad()[1], 0.0);
}

TEST(Graph, NoGradGuardSkipsRecording) {
  auto w = Tensor<double>::from({2}, {1.0, 2.0}, true);
  NoGradGuard guard;
  auto y = sum(w);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Graph, ForwardIsBitIdenticalAcrossRuns) {
  std::mt19937_64 r1(16), r2(16);
  MultiHeadAttention<float> a(16, 4, r1), b(16, 4, r2);
  std::mt19937_64 rng(17);
  std::normal_distribution<float> dist;
  std::vector<float> v(2 * 5 * 16);
  for (auto& x : v) x = dist(rng);
  auto x = Tensor<float>::from({2, 5, 16}, v);
  std::vector<std::uint8_t> valid(10, 1);
  auto ya = a(x, x, valid).output;
  auto yb = b(x, x, valid).output;
  for (std::size_t i = 0; i < ya.size(); ++i) EXPECT_EQ(ya.data()[i], yb.data()[i]);
}

}  // namespace
}  // namespace mslu::nn
