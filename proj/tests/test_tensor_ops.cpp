#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "sparsect/half.hpp"
#include "sparsect/ops.hpp"
#include "sparsect/precision.hpp"
#include "sparsect/tensor.hpp"

using namespace sparsect;

namespace {

template <class T>
double max_rel(const Tensor<T>& a, const Tensor<T>& b) {
  double d = 0, r = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(double(a[i]) - double(b[i])));
    r = std::max(r, std::abs(double(b[i])));
  }
  return r > 0 ? d / r : d;
}

ops::BatchNormStats<float>* const kNoStats = nullptr;

Tensor<float> t2(std::vector<float> v, std::int64_t h, std::int64_t w) { return Tensor<float>(Shape{1, 1, h, w}, v); }

}  // namespace

// --- binary16 -----------------------------------------------------------------

TEST(Half, EveryFiniteEncodingRoundTrips) {
  for (int bits = 0; bits < 0x10000; ++bits) {
    const auto h = static_cast<std::uint16_t>(bits);
    if (((bits >> 10) & 0x1f) == 0x1f) continue;
    const float f = half::decode(h);
    ASSERT_EQ(half::encode(f), h) << "bits " << bits;
    ASSERT_TRUE(half::representable(f));
  }
}

TEST(Half, RandomValuesMatchEnumerationOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> mag(-16.0f, 15.9f);
  for (int i = 0; i < 300; ++i) {
    const float v = std::ldexp(std::uniform_real_distribution<float>(-1, 1)(rng), static_cast<int>(mag(rng)));
    ASSERT_EQ(half::quantize(v), oracle::nearest_half(v)) << v;
  }
}

TEST(Half, TiesAndOverflow) {
  // 1 + 2^-11 sits halfway between 1 and the next half; ties go to even.
  EXPECT_EQ(half::quantize(1.0f + std::ldexp(1.0f, -11)), 1.0f);
  EXPECT_EQ(half::quantize(1.0f + 3 * std::ldexp(1.0f, -11)), 1.0f + std::ldexp(1.0f, -9));
  EXPECT_EQ(half::quantize(65504.0f), 65504.0f);
  EXPECT_TRUE(std::isinf(half::quantize(65520.0f)));
  EXPECT_EQ(half::quantize(std::ldexp(1.0f, -24)), std::ldexp(1.0f, -24));
  EXPECT_EQ(half::quantize(std::ldexp(1.0f, -26)), 0.0f);
  EXPECT_TRUE(std::isnan(half::quantize(std::numeric_limits<float>::quiet_NaN())));
}

// --- tensor / policy ------------------------------------------------------------

TEST(Tensor, PayloadMustMatchShape) {
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, {1, 2, 3}), DimensionError);
  Tensor<float> t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_THROW(t.reshaped(Shape{7}), DimensionError);
}

TEST(Tensor, ToHalfPayloadIsRepresentable) {
  std::mt19937_64 rng(1);
  auto t = to_half(oracle::random_tensor<float>(Shape{64}, rng, -100, 100));
  EXPECT_EQ(t.dtype(), DType::FP16E);
  for (float v : t.data()) EXPECT_TRUE(half::representable(v));
}

TEST(ApplyPolicy, O0CopiesMasterBitwise) {
  std::mt19937_64 rng(2);
  Parameter<float> p(oracle::random_tensor<float>(Shape{3, 4}, rng));
  apply_policy(p, PrecisionPolicy::o0());
  EXPECT_EQ(p.compute, p.master);
  EXPECT_EQ(p.grad.shape(), p.master.shape());
}

TEST(ApplyPolicy, O2RoundsToNearestHalf) {
  Parameter<float> p(Tensor<float>(Shape{3}, {1.0f, 0.1f, -3.14159f}));
  apply_policy(p, PrecisionPolicy::o2());
  EXPECT_EQ(p.compute[0], 1.0f);
  EXPECT_EQ(p.compute[1], oracle::nearest_half(0.1f));
  EXPECT_EQ(p.compute[1], 0.0999755859375f);
  EXPECT_EQ(p.compute[2], oracle::nearest_half(-3.14159f));
  EXPECT_EQ(p.master[1], 0.1f);
}

TEST(Policy, O0ScaleIsIdentityAndO2RequiresExemptBn) {
  PrecisionPolicy p = PrecisionPolicy::o0();
  p.loss_scale = 512;
  EXPECT_EQ(p.effective_scale(), 1.0);
  PrecisionPolicy q = PrecisionPolicy::o2();
  q.bn_exempt = false;
  EXPECT_THROW(q.validate(), ParameterError);
  EXPECT_THROW(parse_opt_level("O1"), ParameterError);
}

TEST(LossScaler, DynamicHalvesAndGrows) {
  LossScaler s(PrecisionPolicy::o2(1024, true), 3);
  EXPECT_FALSE(s.update(true));
  EXPECT_EQ(s.scale(), 512);
  EXPECT_TRUE(s.update(false));
  EXPECT_TRUE(s.update(false));
  EXPECT_TRUE(s.update(false));
  EXPECT_EQ(s.scale(), 1024);
  EXPECT_EQ(s.skipped(), 1);
  LossScaler fixed(PrecisionPolicy::o2(1024, false));
  EXPECT_FALSE(fixed.update(true));
  EXPECT_EQ(fixed.scale(), 1024);
}

// --- conv2d ---------------------------------------------------------------------

TEST(Conv2d, OnesKernelSumsFour) {
  auto y = ops::conv2d(Tensor<float>::filled(Shape{1, 1, 3, 3}, 1), Tensor<float>::filled(Shape{1, 1, 2, 2}, 1),
                       Tensor<float>(Shape{1}), 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (float v : y.data()) EXPECT_EQ(v, 4.0f);
}

TEST(Conv2d, DiagonalKernel) {
  auto y = ops::conv2d(t2({1, 2, 3, 4}, 2, 2), t2({1, 0, 0, 1}, 2, 2), Tensor<float>(Shape{1}), 1, 0);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_EQ(y[0], 5.0f);
}

TEST(Conv2d, MatchesNaiveLoopOracle) {
  std::mt19937_64 rng(3);
  for (int stride : {1, 2}) {
    auto x = oracle::random_tensor<float>(Shape{2, 3, 8, 8}, rng);
    auto w = oracle::random_tensor<float>(Shape{4, 3, 3, 3}, rng);
    auto b = oracle::random_tensor<float>(Shape{4}, rng);
    EXPECT_LT(max_rel(ops::conv2d(x, w, b, stride, 1), oracle::conv2d(x, w, b, stride, 1)), 1e-6);
  }
  auto x = oracle::random_tensor<float>(Shape{2, 5, 6, 6}, rng);
  auto w = oracle::random_tensor<float>(Shape{3, 5, 1, 1}, rng);
  auto b = oracle::random_tensor<float>(Shape{3}, rng);
  EXPECT_LT(max_rel(ops::conv2d(x, w, b, 1, 0), oracle::conv2d(x, w, b, 1, 0)), 1e-6);
}

TEST(Conv2d, Errors) {
  Tensor<float> x(Shape{1, 2, 4, 4});
  EXPECT_THROW(ops::conv2d(x, Tensor<float>(Shape{1, 3, 3, 3}), Tensor<float>(Shape{1}), 1, 1), DimensionError);
  EXPECT_THROW(ops::conv2d(x, Tensor<float>(Shape{1, 2, 7, 7}), Tensor<float>(Shape{1}), 1, 0), DimensionError);
  x[3] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(ops::conv2d(x, Tensor<float>(Shape{1, 2, 3, 3}), Tensor<float>(Shape{1}), 1, 1), NumericError);
}

TEST(Conv2d, BackwardMatchesAdjointOfOracle) {
  // <conv(x), dy> is linear in x and w, so its gradients are exact.
  std::mt19937_64 rng(4);
  auto x = oracle::random_tensor<double>(Shape{2, 3, 5, 5}, rng);
  auto w = oracle::random_tensor<double>(Shape{2, 3, 3, 3}, rng);
  Tensor<double> b(Shape{2});
  auto dy = oracle::random_tensor<double>(Shape{2, 2, 5, 5}, rng);
  auto g = ops::conv2d_backward(x, w, dy, 1, 1);
  for (std::size_t i = 0; i < w.size(); i += 7) {
    Tensor<double> e(w.shape());
    e[i] = 1;
    EXPECT_NEAR(g.dw[i], dot(oracle::conv2d(x, e, b, 1, 1), dy), 1e-10);
  }
  for (std::size_t i = 0; i < x.size(); i += 11) {
    Tensor<double> e(x.shape());
    e[i] = 1;
    EXPECT_NEAR(g.dx[i], dot(oracle::conv2d(e, w, b, 1, 1), dy), 1e-10);
  }
  double s0 = 0;
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t i = 0; i < 25; ++i) s0 += dy.at(n, 0, i / 5, i % 5);
  EXPECT_NEAR(g.db[0], s0, 1e-10);
}

// --- conv_transpose2d -----------------------------------------------------------

TEST(ConvTranspose2d, SingleStamp) {
  auto k = t2({1, 2, 3, 4}, 2, 2).reshaped(Shape{1, 1, 2, 2});
  auto y = ops::conv_transpose2d(t2({2.5f}, 1, 1), k, Tensor<float>(Shape{1}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], 2.5f * k[i]);
}

TEST(ConvTranspose2d, DisjointStamps) {
  auto y = ops::conv_transpose2d(Tensor<float>::filled(Shape{1, 1, 2, 2}, 1), Tensor<float>::filled(Shape{1, 1, 2, 2}, 1),
                                 Tensor<float>(Shape{1}), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  for (float v : y.data()) EXPECT_EQ(v, 1.0f);
}

TEST(ConvTranspose2d, MatchesScatterOracle) {
  std::mt19937_64 rng(5);
  for (int stride : {1, 2, 3}) {
    auto x = oracle::random_tensor<float>(Shape{2, 3, 4, 5}, rng);
    auto w = oracle::random_tensor<float>(Shape{3, 2, 3, 2}, rng);
    auto b = oracle::random_tensor<float>(Shape{2}, rng);
    EXPECT_LT(max_rel(ops::conv_transpose2d(x, w, b, stride), oracle::conv_transpose2d(x, w, b, stride)), 1e-6);
  }
}

TEST(ConvTranspose2d, AdjointOfConv2d) {
  // conv2d with weight [Cout,Cin,k,k] is adjoint to conv_transpose2d with the
  // same array read as [Cin_t=Cout, Cout_t=Cin, k, k].
  std::mt19937_64 rng(6);
  struct G {
    std::int64_t h, k;
    int s;
  };
  for (G g : {G{8, 2, 2}, G{7, 3, 1}, G{9, 3, 2}, G{6, 1, 1}}) {
    const std::int64_t oh = (g.h - g.k) / g.s + 1;
    const std::int64_t h = (oh - 1) * g.s + g.k;  // sizes for which both maps are exact
    auto x = oracle::random_tensor<float>(Shape{2, 3, h, h}, rng);
    auto w = oracle::random_tensor<float>(Shape{4, 3, g.k, g.k}, rng);
    auto y = oracle::random_tensor<float>(Shape{2, 4, oh, oh}, rng);
    const double lhs = dot(ops::conv2d(x, w, Tensor<float>(Shape{4}), g.s, 0), y);
    const double rhs = dot(x, ops::conv_transpose2d(y, w, Tensor<float>(Shape{3}), g.s));
    EXPECT_LT(std::abs(lhs - rhs) / std::abs(lhs), 1e-5);
  }
}

// --- maxpool --------------------------------------------------------------------

TEST(MaxPool, WindowMax) {
  auto r = ops::maxpool2d(t2({1, 2, 3, 4}, 2, 2));
  ASSERT_EQ(r.y.size(), 1u);
  EXPECT_EQ(r.y[0], 4.0f);
  auto c = ops::maxpool2d(Tensor<float>::filled(Shape{1, 2, 4, 6}, 3.5f));
  EXPECT_EQ(c.y.shape(), (Shape{1, 2, 2, 3}));
  for (float v : c.y.data()) EXPECT_EQ(v, 3.5f);
}

TEST(MaxPool, MatchesWindowScanOracleExactly) {
  std::mt19937_64 rng(8);
  auto x = oracle::random_tensor<float>(Shape{1, 2, 8, 8}, rng);
  EXPECT_EQ(ops::maxpool2d(x).y, oracle::maxpool2d(x, 2, 2));
}

TEST(MaxPool, RoutesGradientToArgmax) {
  auto x = t2({1, 9, 3, 4, 5, 6, 7, 8, 2, 0, 1, 1, 3, 2, 2, 0}, 4, 4);
  auto r = ops::maxpool2d(x);
  auto dx = ops::maxpool2d_backward(x.shape(), r.argmax, Tensor<float>::filled(r.y.shape(), 1));
  EXPECT_EQ(dx, t2({0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0}, 4, 4));
}

TEST(MaxPool, IndivisibleDimsThrow) {
  EXPECT_THROW(ops::maxpool2d(Tensor<float>(Shape{1, 1, 5, 4})), DimensionError);
}

// --- batch norm -----------------------------------------------------------------

TEST(BatchNorm, ConstantChannelNormalisesToZero) {
  auto ones = Tensor<float>::filled(Shape{1}, 1);
  auto r = ops::batchnorm2d(Tensor<float>::filled(Shape{2, 1, 3, 3}, 7.0f), ones, Tensor<float>(Shape{1}), 1e-5,
                            ops::Mode::train, kNoStats);
  for (float v : r.y.data()) EXPECT_EQ(v, 0.0f);
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentity) {
  std::mt19937_64 rng(9);
  auto x = oracle::random_tensor<float>(Shape{2, 3, 4, 4}, rng);
  ops::BatchNormStats<float> st(3);
  auto r = ops::batchnorm2d(x, Tensor<float>::filled(Shape{3}, 1), Tensor<float>(Shape{3}), 1e-5, ops::Mode::eval, &st);
  EXPECT_LT(max_rel(r.y, x), 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r.y[i], x[i], 1e-5);
}

TEST(BatchNorm, MatchesDirectFormula) {
  std::mt19937_64 rng(10);
  auto x = oracle::random_tensor<float>(Shape{4, 3, 5, 5}, rng, -2, 3);
  std::vector<double> gamma{0.5, 1.5, -1.0}, beta{0.1, -0.2, 0.3};
  Tensor<float> g(Shape{3}, {0.5f, 1.5f, -1.0f}), b(Shape{3}, {0.1f, -0.2f, 0.3f});
  ops::BatchNormStats<float> st(3);
  auto r = ops::batchnorm2d(x, g, b, 1e-5, ops::Mode::train, &st);
  auto ref = oracle::batchnorm_train(x, gamma, beta, 1e-5);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(r.y[i], ref[i], 1e-5);
  // running stats: momentum 0.1 towards batch mean / unbiased variance
  double mean = 0, ss = 0;
  for (std::int64_t n = 0; n < 4; ++n)
    for (std::int64_t i = 0; i < 25; ++i) mean += x.at(n, 1, i / 5, i % 5);
  mean /= 100;
  for (std::int64_t n = 0; n < 4; ++n)
    for (std::int64_t i = 0; i < 25; ++i) ss += std::pow(x.at(n, 1, i / 5, i % 5) - mean, 2);
  EXPECT_NEAR(st.running_mean[1], 0.1 * mean, 1e-6);
  EXPECT_NEAR(st.running_var[1], 0.9 + 0.1 * ss / 99, 1e-6);
}

TEST(BatchNorm, Errors) {
  Tensor<float> x(Shape{1, 2, 2, 2});
  auto g = Tensor<float>::filled(Shape{2}, 1);
  EXPECT_THROW(ops::batchnorm2d(x, g, Tensor<float>(Shape{2}), 0.0, ops::Mode::train, kNoStats), ParameterError);
  EXPECT_THROW(ops::batchnorm2d(x, Tensor<float>(Shape{3}), Tensor<float>(Shape{2}), 1e-5, ops::Mode::train, kNoStats),
               DimensionError);
}

// --- elementwise / concat / loss --------------------------------------------------

TEST(Elementwise, ScalarSemantics) {
  auto r = ops::relu(Tensor<float>(Shape{2}, {-1.0f, 2.0f}));
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 2.0f);
  EXPECT_EQ(ops::sigmoid(Tensor<float>(Shape{1}, {0.0f}))[0], 0.5f);
  EXPECT_EQ(ops::add(Tensor<float>(Shape{1}, {1.5f}), Tensor<float>(Shape{1}, {2.0f}))[0], 3.5f);
  EXPECT_EQ(ops::scale(Tensor<float>(Shape{1}, {1.5f}), 4.0f)[0], 6.0f);
  EXPECT_EQ(ops::relu_backward(Tensor<float>(Shape{1}, {-0.5f}), Tensor<float>(Shape{1}, {3.0f}))[0], 0.0f);
}

TEST(Elementwise, MulBroadcastsSingleChannelMap) {
  std::mt19937_64 rng(11);
  auto a = oracle::random_tensor<float>(Shape{1, 8, 4, 4}, rng);
  auto m = oracle::random_tensor<float>(Shape{1, 1, 4, 4}, rng);
  auto y = ops::mul(a, m);
  EXPECT_EQ(y.shape(), a.shape());
  for (std::int64_t c : {0, 3, 7})
    for (std::int64_t i : {0, 5, 15}) EXPECT_EQ(y.at(0, c, i / 4, i % 4), a.at(0, c, i / 4, i % 4) * m.at(0, 0, i / 4, i % 4));
  EXPECT_THROW(ops::mul(a, Tensor<float>(Shape{1, 2, 4, 4})), DimensionError);
  EXPECT_THROW(ops::add(a, m), DimensionError);
}

TEST(Concat, ChannelLayoutAndRoundTrip) {
  auto y = ops::concat_channels(Tensor<float>(Shape{1, 1, 2, 2}), Tensor<float>::filled(Shape{1, 1, 2, 2}, 1));
  for (std::int64_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y.at(0, 0, i / 2, i % 2), 0.0f);
    EXPECT_EQ(y.at(0, 1, i / 2, i % 2), 1.0f);
  }
  std::mt19937_64 rng(12);
  auto a = oracle::random_tensor<float>(Shape{1, 32, 64, 64}, rng);
  auto b = oracle::random_tensor<float>(Shape{1, 32, 64, 64}, rng);
  auto c = ops::concat_channels(a, b);
  EXPECT_EQ(c.shape(), (Shape{1, 64, 64, 64}));
  auto [a2, b2] = ops::split_channels(c, 32);
  EXPECT_EQ(a2, a);
  EXPECT_EQ(b2, b);
  EXPECT_THROW(ops::concat_channels(a, Tensor<float>(Shape{1, 1, 32, 64})), DimensionError);
}

TEST(MseLoss, ValuesAndOracle) {
  std::mt19937_64 rng(13);
  auto a = oracle::random_tensor<float>(Shape{2, 3, 7, 7}, rng);
  auto b = oracle::random_tensor<float>(Shape{2, 3, 7, 7}, rng);
  EXPECT_EQ(ops::mse_loss(a, a), 0.0);
  EXPECT_EQ(ops::mse_loss(Tensor<float>(Shape{1}, {0.0f}), Tensor<float>(Shape{1}, {2.0f})), 4.0);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  EXPECT_LT(std::abs(ops::mse_loss(a, b) - s / a.size()) / (s / a.size()), 1e-7);
  EXPECT_THROW(ops::mse_loss(a, Tensor<float>(Shape{3})), DimensionError);
}
