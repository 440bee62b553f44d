#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "sparsect/phantom.hpp"
#include "sparsect/projector.hpp"

using namespace sparsect;

namespace {

Tensor<float> disk(std::int64_t S, double cx, double cy, double r) { return render_foam(S, cx, cy, r, 1.0, {}, 4); }

// Chord length 2*sqrt(r^2 - s^2) averaged over the detector bin [s - 1/2, s + 1/2].
double bin_chord(double s, double r) {
  auto F = [r](double u) {
    u = std::clamp(u, -r, r);
    return u * std::sqrt(r * r - u * u) + r * r * std::asin(u / r);
  };
  return F(s + 0.5) - F(s - 0.5);
}

double centroid(const Sinogram& s, std::int64_t row) {
  double m = 0, w = 0;
  for (std::int64_t d = 0; d < s.detector_count(); ++d) {
    const double v = s.data[static_cast<std::size_t>(row * s.detector_count() + d)];
    m += v * double(d);
    w += v;
  }
  return m / w;
}

}  // namespace

TEST(Radon, DiskMatchesChordLength) {
  const std::int64_t S = 256;
  const double r = 0.4 * S;
  auto sino = radon_forward(disk(S, S / 2.0, S / 2.0, r), {0.0, 0.3, M_PI / 4, 1.7, 3.0});
  for (std::int64_t a = 0; a < sino.angle_count(); ++a) {
    double err = 0;
    for (std::int64_t d = 0; d < S; ++d) {
      const double s = double(d) - (S - 1) / 2.0;
      err = std::max(err, std::abs(sino.data[static_cast<std::size_t>(a * S + d)] - bin_chord(s, r)));
    }
    EXPECT_LT(err, 0.03 * 2 * r) << "angle " << sino.angles[static_cast<std::size_t>(a)];
  }
}

TEST(Radon, DiskRowsAreRotationallySymmetric) {
  const std::int64_t S = 256;
  auto sino = radon_forward(disk(S, S / 2.0, S / 2.0, 0.4 * S), uniform_angles(36));
  double ref = 0;
  for (std::int64_t d = 0; d < S; ++d) ref += std::pow(double(sino.data[static_cast<std::size_t>(d)]), 2);
  for (std::int64_t a = 1; a < 36; ++a) {
    double diff = 0;
    for (std::int64_t d = 0; d < S; ++d)
      diff += std::pow(double(sino.data[static_cast<std::size_t>(a * S + d)]) - sino.data[static_cast<std::size_t>(d)], 2);
    EXPECT_LT(std::sqrt(diff / ref), 0.01) << "angle " << a;
  }
}

TEST(Radon, MassIsConservedAtEveryAngle) {
  auto p = generate_phantom(PhantomConfig::for_size(128), 11);
  double mass = 0;
  for (float v : p.image.data()) mass += v;
  auto sino = radon_forward(p.image, uniform_angles(360));
  for (std::int64_t a = 0; a < 360; ++a) {
    double row = 0;
    for (std::int64_t d = 0; d < 128; ++d) row += sino.data[static_cast<std::size_t>(a * 128 + d)];
    EXPECT_NEAR(row, mass, 0.01 * mass) << "angle " << a;
  }
}

TEST(Radon, LinearAndZeroPreserving) {
  auto x = generate_phantom(PhantomConfig::for_size(64), 1).image;
  auto y = generate_phantom(PhantomConfig::for_size(64), 2).image;
  Tensor<float> z(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = 2.5f * x[i] - 0.75f * y[i];
  auto angles = uniform_angles(30);
  auto sx = radon_forward(x, angles), sy = radon_forward(y, angles), sz = radon_forward(z, angles);
  double d = 0, r = 0;
  for (std::size_t i = 0; i < sz.data.size(); ++i) {
    d = std::max(d, std::abs(double(sz.data[i]) - (2.5 * sx.data[i] - 0.75 * sy.data[i])));
    r = std::max(r, std::abs(double(sz.data[i])));
  }
  EXPECT_LT(d / r, 1e-5);
  auto s0 = radon_forward(Tensor<float>(Shape{1, 1, 64, 64}), angles);
  for (float v : s0.data.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Radon, ShiftMovesThetaZeroProjection) {
  auto base = radon_forward(disk(128, 64, 64, 6), {0.0});
  for (double dx : {3.0, 7.5, -10.0}) {
    auto moved = radon_forward(disk(128, 64 + dx, 64, 6), {0.0});
    EXPECT_NEAR(centroid(moved, 0) - centroid(base, 0), dx, 0.5);
  }
}

TEST(Radon, Errors) {
  Tensor<float> img(Shape{1, 1, 8, 8});
  EXPECT_THROW(radon_forward(img, {}), ParameterError);
  EXPECT_THROW(radon_forward(img, {M_PI}), ParameterError);
  EXPECT_THROW(radon_forward(Tensor<float>(Shape{1, 1, 8, 6}), {0.0}), DimensionError);
}

TEST(UniformAngles, Values) {
  auto a = uniform_angles(4);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0], 0.0);
  EXPECT_DOUBLE_EQ(a[1], M_PI / 4);
  EXPECT_DOUBLE_EQ(a[2], M_PI / 2);
  EXPECT_DOUBLE_EQ(a[3], 3 * M_PI / 4);
  EXPECT_EQ(uniform_angles(1), std::vector<double>{0.0});
  auto b = uniform_angles(360);
  for (std::size_t k = 1; k < b.size(); ++k) EXPECT_NEAR(b[k] - b[k - 1], M_PI / 360, 1e-15);
  EXPECT_THROW(uniform_angles(0), ParameterError);
  EXPECT_THROW(uniform_angles(-3), ParameterError);
}

TEST(Subsample, ThousandByTwenty) {
  auto idx = subsample_indices(1000, 20);
  ASSERT_EQ(idx.size(), 50u);
  for (std::size_t k = 0; k < 50; ++k) EXPECT_EQ(idx[k], static_cast<std::int64_t>(20 * k));
  EXPECT_EQ(idx.back(), 980);
}

TEST(Subsample, RowsAnglesAndIdentity) {
  auto p = generate_phantom(PhantomConfig::for_size(64), 4);
  auto s = radon_forward(p.image, uniform_angles(360));
  auto t = subsample(s, 20);
  ASSERT_EQ(t.angle_count(), 18);
  for (std::int64_t k = 0; k < 18; ++k) {
    EXPECT_DOUBLE_EQ(t.angles[static_cast<std::size_t>(k)], double(k * 20) * M_PI / 360);
    for (std::int64_t d = 0; d < 64; ++d)
      EXPECT_EQ(t.data[static_cast<std::size_t>(k * 64 + d)], s.data[static_cast<std::size_t>(k * 20 * 64 + d)]);
  }
  auto same = subsample(s, 1);
  EXPECT_EQ(same.data, s.data);
  EXPECT_EQ(same.angles, s.angles);
  EXPECT_THROW(subsample(s, 361), ParameterError);
  EXPECT_THROW(subsample(s, 0), ParameterError);
}
