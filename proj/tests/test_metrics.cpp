#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sparsect/metrics.hpp"

using namespace sparsect;

namespace {

Image8 constant(std::int64_t h, std::int64_t w, std::uint8_t v) {
  return Image8{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h * w), v)};
}

}  // namespace

TEST(Metrics, MatchDirectOraclesOnRandomPairs) {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 50; ++k) {
    const std::int64_t h = 16 + static_cast<std::int64_t>(rng() % 24), w = 16 + static_cast<std::int64_t>(rng() % 24);
    auto a = oracle::random_image(h, w, rng), b = oracle::random_image(h, w, rng);
    // correlate half the pairs so SSIM is not always near zero
    if (k % 2)
      for (std::size_t i = 0; i < b.pixels.size(); ++i) b.pixels[i] = static_cast<std::uint8_t>((a.pixels[i] * 3 + b.pixels[i]) / 4);
    EXPECT_NEAR(psnr(a, b), oracle::psnr(a, b), 1e-9) << k;
    EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-6) << k;
  }
}

TEST(Psnr, ClosedForms) {
  auto a = constant(20, 20, 100), b = constant(20, 20, 101), c = constant(20, 20, 102);
  EXPECT_NEAR(psnr(a, b), 48.1308, 5e-5);
  EXPECT_NEAR(psnr(a, b) - psnr(a, c), 20 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(psnr(a, b) - psnr(a, c), 6.0206, 5e-5);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_GT(psnr(a, a), 0);
  // MSE 56.1 lands in the regime of a 30.66 dB training score
  EXPECT_NEAR(10 * std::log10(255.0 * 255.0 / 56.1), 30.64, 5e-3);
}

TEST(Psnr, StrictlyDecreasesWithDifference) {
  auto a = constant(8, 8, 0);
  double prev = std::numeric_limits<double>::infinity();
  for (int d = 1; d < 256; d += 17) {
    const double p = psnr(a, constant(8, 8, static_cast<std::uint8_t>(d)));
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, ConstantImagesClosedForm) {
  auto a = constant(16, 16, 100), b = constant(16, 16, 200);
  EXPECT_NEAR(ssim(a, b), 40006.5025 / 50006.5025, 1e-12);
  EXPECT_NEAR(ssim(a, b), 0.80003, 5e-6);
  EXPECT_NEAR(ssim(a, b, MetricParams::blocks()), 0.80003, 5e-6);
  EXPECT_DOUBLE_EQ(ssim(a, a), 1.0);
}

TEST(Metrics, Symmetric) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 5; ++k) {
    auto a = oracle::random_image(24, 24, rng), b = oracle::random_image(24, 24, rng);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-15);
    EXPECT_NEAR(ssim(a, b, MetricParams::blocks()), ssim(b, a, MetricParams::blocks()), 1e-15);
  }
}

TEST(Metrics, Errors) {
  auto a = constant(16, 16, 1), b = constant(16, 12, 1);
  EXPECT_THROW(psnr(a, b), DimensionError);
  EXPECT_THROW(ssim(a, b), DimensionError);
  EXPECT_THROW(ssim(constant(8, 8, 0), constant(8, 8, 0)), ParameterError);
  MetricParams p;
  p.bits = 9;
  EXPECT_THROW(psnr(a, a, p), ParameterError);
}

TEST(Quantize, LevelsAndClamping) {
  EXPECT_EQ(quantize_level(0.0), 0);
  EXPECT_EQ(quantize_level(1.0), 255);
  EXPECT_EQ(quantize_level(-0.3), 0);
  EXPECT_EQ(quantize_level(1.7), 255);
  for (int k = 0; k < 256; ++k) EXPECT_EQ(quantize_level(k / 255.0), k);
  EXPECT_EQ(quantize_level(0.5), 128);  // 127.5 rounds to even
  EXPECT_EQ(quantize_level(0.3, 0.3, 0.3), 0);
  Tensor<float> t(Shape{1, 1, 2, 3});
  t[4] = 1.0f;
  auto img = quantize_image(t);
  EXPECT_EQ(img.height, 2);
  EXPECT_EQ(img.width, 3);
  EXPECT_EQ(img(1, 1), 255);
  EXPECT_THROW(quantize_image(Tensor<float>(Shape{2, 1, 2, 2})), DimensionError);
}

TEST(Report, SplitScoresAndSentinel) {
  std::vector<Image8> labels{constant(16, 16, 7), constant(16, 16, 90)};
  auto s = score_split(labels, labels);
  EXPECT_TRUE(std::isinf(s.psnr));
  EXPECT_NEAR(s.ssim, 1.0, 1e-12);
  EXPECT_EQ(s.images, 2u);
  std::vector<Image8> pred{constant(16, 16, 8), constant(16, 16, 92)};
  auto t = score_split(pred, labels);
  EXPECT_NEAR(t.psnr, (48.1308036 + 42.1102037) / 2, 1e-6);
  EXPECT_THROW(score_split({}, {}), ParameterError);
  EXPECT_THROW(score_split(pred, {labels[0]}), DimensionError);
}

TEST(Report, TableLayout) {
  EvalReport r;
  r.rows.push_back({"ResAttUnet(O2)", {SplitScore{30.5, 0.9, 16}, SplitScore{25.25, 0.8, 2}, SplitScore{24.125, 0.75, 2}}});
  r.rows.push_back({"Unet(O2)", {SplitScore{std::numeric_limits<double>::infinity(), 1, 1}, {}, {}}});
  const auto text = render_table(r);
  std::istringstream in(text);
  std::string l1, l2, l3, l4;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  std::getline(in, l4);
  EXPECT_EQ(l1.rfind("Model", 0), 0u);
  EXPECT_LT(l1.find("PSNR"), l1.find("SSIM"));
  // two copies of the split headings, PSNR block first
  const auto first = l2.find("Training set");
  EXPECT_NE(l2.find("Training set", first + 1), std::string::npos);
  EXPECT_LT(l2.find("Validation set"), l2.find("Test set"));
  EXPECT_EQ(l3.rfind("ResAttUnet(O2)", 0), 0u);
  for (const char* v : {"30.5000", "25.2500", "24.1250", "0.9000", "0.8000", "0.7500"}) EXPECT_NE(l3.find(v), std::string::npos) << v;
  EXPECT_LT(l3.find("24.1250"), l3.find("0.9000"));
  EXPECT_NE(l4.find("inf"), std::string::npos);
  EXPECT_EQ(r.find("Unet(O2)"), &r.rows[1]);
  EXPECT_EQ(r.find("nope"), nullptr);
}

TEST(Report, ResourceRowSavings) {
  ResourceRow row{"ResAttUnet", 1000, 680, 10.0, 7.5};
  EXPECT_NEAR(row.memory_saving(), 0.32, 1e-12);
  EXPECT_NEAR(row.time_saving(), 0.25, 1e-12);
  EvalReport r;
  r.resources.push_back(row);
  EXPECT_NE(render_table(r).find("32.00%"), std::string::npos);
}
