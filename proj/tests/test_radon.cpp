#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "test_support.hpp"

using namespace cellmotif;
using namespace cmtest;

namespace {

constexpr double kPi = std::numbers::pi;

Image blob(int n, double sigma) {
  const double c = (n - 1) / 2.0;
  return make_image(n, n, [&](double x, double y) {
    return std::exp(-((x - c) * (x - c) + (y - c) * (y - c)) / (2 * sigma * sigma));
  });
}

// Two stripe families (normals at theta and theta + 70 deg) centred on the image centre.
Image stripes(int n, double theta_deg) {
  const double c = (n - 1) / 2.0;
  const double a = theta_deg * kPi / 180.0, b = (theta_deg + 70.0) * kPi / 180.0;
  return make_image(n, n, [&](double x, double y) {
    const double u = (x - c) * std::cos(a) + (y - c) * std::sin(a);
    const double v = (x - c) * std::cos(b) + (y - c) * std::sin(b);
    return std::cos(2 * kPi * u / 9.0) + 0.6 * std::cos(2 * kPi * v / 13.0);
  });
}

}  // namespace

TEST(RadonLine, ConstantImage) {
  const Image img(32, 32, 0.7);
  for (double d : {0.0, 17.5, 90.0, 133.0})
    for (double p : {-14.5, -3.0, 0.0, 9.2}) EXPECT_NEAR(radon_line(img, d, p), 0.7, 1e-12);
}

TEST(RadonLine, ZeroImage) { EXPECT_EQ(radon_line(Image(24, 24, 0.0), 40.0, 2.0), 0.0); }

TEST(RadonLine, OffsetOutsideDiscRejected) {
  const Image img(32, 32, 1.0);  // R = 15
  EXPECT_THROW(radon_line(img, 0.0, 15.0), ContractViolation);
  EXPECT_NO_THROW(radon_line(img, 0.0, 14.9));
}

TEST(RadonLine, RadiallySymmetricImageIsAngleIndependent) {
  const Image img = blob(48, 6.0);
  for (double p : {-12.0, -4.0, 0.0, 3.0, 15.0}) {
    EXPECT_NEAR(radon_line(img, 0.0, p), radon_line(img, 90.0, p), 1e-6);
    EXPECT_NEAR(radon_line(img, 30.0, p), radon_line(img, 120.0, p), 1e-6);
  }
}

TEST(RadonLine, MatchesBruteForceOracle) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ang(0.0, 180.0);
  for (int n : {16, 23, 32}) {
    const Image img = random_image(n, n, static_cast<std::uint64_t>(n));
    const double R = n / 2.0 - 1.0;
    std::uniform_real_distribution<double> off(-R + 0.01, R - 0.01);
    for (int k = 0; k < 40; ++k) {
      const double d = ang(rng), p = off(rng);
      EXPECT_NEAR(radon_line(img, d, p), radon_oracle(img, d, p), 1e-6) << "n=" << n << " d=" << d << " p=" << p;
    }
  }
}

TEST(RadonLine, NonSquareImageUsesInscribedDisc) {
  const Image img = random_image(30, 20, 3);  // R = 9
  EXPECT_NEAR(radon_line(img, 25.0, 4.0), radon_oracle(img, 25.0, 4.0), 1e-6);
  EXPECT_THROW(radon_line(img, 0.0, 9.0), ContractViolation);
}

TEST(Psd, ConstantImageIsZero) {
  const PsdProfile psd = compute_psd(Image(40, 40, 0.3));
  ASSERT_EQ(psd.values.size(), 360u);
  for (double v : psd.values) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Psd, AnglesAreUniform) {
  const PsdProfile psd = compute_psd(random_image(24, 24, 1), 2.0);
  ASSERT_EQ(psd.angles_deg.size(), 90u);
  for (std::size_t k = 0; k < psd.angles_deg.size(); ++k) EXPECT_DOUBLE_EQ(psd.angles_deg[k], 2.0 * k);
}

TEST(Psd, TooSmallImageRejected) { EXPECT_THROW(compute_psd(Image(19, 40, 1.0)), ContractViolation); }

TEST(Psd, StripesPeakWhereLinesRunAlongThem) {
  // Intensity varies along x1 only; lines parallel to the stripes run along x2 (delta = 90).
  const Image img = make_image(64, 64, [](double x, double) { return std::sin(2 * kPi * x / 7.0); });
  const PsdProfile psd = compute_psd(img);
  const auto peak = std::max_element(psd.values.begin(), psd.values.end()) - psd.values.begin();
  EXPECT_DOUBLE_EQ(psd.angles_deg[peak], 90.0);
  // Value at the peak agrees with the brute-force projections.
  std::vector<double> a;
  for (double p : radon_offsets(img)) a.push_back(radon_oracle(img, 90.0, p));
  double mean = 0, var = 0;
  for (double v : a) mean += v;
  mean /= a.size();
  for (double v : a) var += (v - mean) * (v - mean);
  EXPECT_NEAR(psd.values[peak], std::sqrt(var / a.size()), 1e-6);
}

TEST(Psd, RotationShiftsTheProfile) {
  const PsdProfile base = compute_psd(stripes(96, 0.0));
  const PsdProfile rot = compute_psd(stripes(96, 30.0));
  const double peak = *std::max_element(base.values.begin(), base.values.end());
  const std::size_t n = base.values.size();
  for (std::size_t k = 0; k < n; ++k) {
    // Rotating the stripe normals by +30 deg moves the lines from delta to delta - 30.
    EXPECT_NEAR(rot.values[k], base.values[(k + 60) % n], 0.1 * peak) << "delta=" << base.angles_deg[k];
  }
}

TEST(Psd, AffineIntensityChange) {
  Image img = stripes(48, 10.0);
  const PsdProfile a = compute_psd(img);
  for (double& v : img.pixels()) v = 3.0 * v + 2.0;
  const PsdProfile b = compute_psd(img);
  for (std::size_t k = 0; k < a.values.size(); ++k) EXPECT_NEAR(b.values[k], 3.0 * a.values[k], 1e-9);
  const DirectionSet da = find_peak_directions(a), db = find_peak_directions(b);
  EXPECT_EQ(da.peak_index, db.peak_index);
}

TEST(PeakDirections, ConstantProfileIsEmpty) {
  PsdProfile p;
  p.angles_deg.resize(360);
  p.values.assign(360, 1.0);
  EXPECT_TRUE(find_peak_directions(p).alphas.empty());
}

TEST(PeakDirections, SpikeAtNinetyGivesAlphaZero) {
  PsdProfile p;
  for (int k = 0; k < 360; ++k) p.angles_deg.push_back(0.5 * k);
  p.values.assign(360, 1.0);
  p.values[180] = 10.0;
  const DirectionSet d = find_peak_directions(p);
  ASSERT_EQ(d.alphas.size(), 1u);
  EXPECT_NEAR(d.alphas[0], 0.0, 1e-12);
}

TEST(PeakDirections, CircularAndPlateauHandling) {
  PsdProfile p;
  for (int k = 0; k < 360; ++k) p.angles_deg.push_back(0.5 * k);
  p.values.assign(360, 1.0);
  p.values[0] = 9.0;  // neighbours are 359 and 1 on the circle
  p.values[200] = 9.0;
  p.values[201] = 9.0;  // plateau: leftmost index
  const DirectionSet d = find_peak_directions(p);
  ASSERT_EQ(d.peak_index.size(), 2u);
  EXPECT_EQ(d.peak_index[0], 0u);
  EXPECT_EQ(d.peak_index[1], 200u);

  // Circular shift of the profile shifts the peaks.
  PsdProfile q = p;
  std::rotate(q.values.begin(), q.values.begin() + 50, q.values.end());
  const DirectionSet e = find_peak_directions(q);
  std::vector<std::size_t> expect{150u, 310u};
  EXPECT_EQ(e.peak_index, expect);
}

TEST(PeakDirections, SquareLatticeHasTwoPerpendicularDirections) {
  const UnitCell cell{{16.0, 0.0}, {0.0, 16.0}};
  MotifParams mp;
  mp.atoms.push_back({{8.0, 8.0}, {2.5, 2.5}, 1.0, 0.0});
  const Image img = generate(cell, mp, 256, 256);
  const DirectionSet d = find_peak_directions(compute_psd(img));
  ASSERT_EQ(d.alphas.size(), 2u);
  double diff = std::abs(d.alphas[0] - d.alphas[1]) * 180.0 / kPi;
  EXPECT_NEAR(diff, 90.0, 1.0);
}
