#pragma once

// Normalized Radon transform on the inscribed disc, its projective standard
// deviation (psd) over projection angles, and the periodicity directions at psd peaks.
//
// Angle convention: for projection angle delta the integration lines run along
// d = (cos delta, -sin delta) and the projection axis is n = (sin delta, cos delta).
// A peak at delta therefore marks dense rows along d, which is e_alpha for
// alpha = delta + pi/2 with e_alpha = (sin alpha, cos alpha).

#include <cmath>
#include <numbers>
#include <ostream>
#include <vector>

#include "cellmotif/errors.hpp"
#include "cellmotif/image.hpp"
#include "cellmotif/parallel.hpp"

namespace cellmotif {

struct PsdProfile {
  double step_deg = 0.5;
  std::vector<double> angles_deg;
  std::vector<double> values;
};

struct DirectionSet {
  std::vector<double> alphas;           // radians in [0, pi)
  std::vector<std::size_t> peak_index;  // index of the psd peak for each alpha
};

/// Disc used for the projections: centred in the image, radius min(w,h)/2 - 1.
struct RadonDisc {
  Vec2 center;
  double radius = 0.0;

  explicit RadonDisc(const Image& img)
      : center{(img.width() - 1) / 2.0, (img.height() - 1) / 2.0},
        radius(std::min(img.width(), img.height()) / 2.0 - 1.0) {}

  double chord(double p) const noexcept {
    const double q = radius * radius - p * p;
    return q > 0.0 ? 2.0 * std::sqrt(q) : 0.0;
  }
};

namespace detail {

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Mean of bilinear samples at the midpoints of ceil(L) equal sub-segments of the chord,
// i.e. the midpoint-rule line integral divided by the chord length L.
inline double radon_line_unchecked(const Image& img, const RadonDisc& disc, double cos_d,
                                   double sin_d, double p) {
  const double len = disc.chord(p);
  if (len <= 0.0) return 0.0;
  const int m = std::max(1, static_cast<int>(std::ceil(len)));
  const double step = len / m;
  const double d1 = cos_d, d2 = -sin_d;
  const double base1 = disc.center.x1 + p * sin_d - 0.5 * len * d1;
  const double base2 = disc.center.x2 + p * cos_d - 0.5 * len * d2;
  double acc = 0.0;
  for (int k = 0; k < m; ++k) {
    const double s = (k + 0.5) * step;
    acc += bilinear(img, base1 + s * d1, base2 + s * d2);
  }
  return acc / m;
}

}  // namespace detail

/// A_delta(p): line integral of the disc-masked image over the line with angle
/// `delta_deg` and signed offset p, divided by the chord length of the disc.
inline double radon_line(const Image& img, double delta_deg, double p) {
  const RadonDisc disc(img);
  if (disc.radius <= 0.0) throw ContractViolation("radon_line: image too small for a disc");
  if (std::abs(p) >= disc.radius) throw ContractViolation("radon_line: |p| must be below the disc radius");
  const double t = detail::deg2rad(delta_deg);
  return detail::radon_line_unchecked(img, disc, std::cos(t), std::sin(t), p);
}

/// Integer offsets p with |p| < R at which the projections are sampled.
inline std::vector<double> radon_offsets(const Image& img) {
  const RadonDisc disc(img);
  std::vector<double> ps;
  const int pmax = static_cast<int>(std::ceil(disc.radius)) - 1;
  for (int p = -pmax; p <= pmax; ++p)
    if (std::abs(static_cast<double>(p)) < disc.radius) ps.push_back(p);
  return ps;
}

/// psd(delta) = sqrt(mean_p (A_delta(p) - mu_delta)^2) for delta = 0, step, ... < 180.
inline PsdProfile compute_psd(const Image& img, double step_deg = 0.5) {
  if (std::min(img.width(), img.height()) < 20)
    throw ContractViolation("compute_psd: image must be at least 20 pixels in each direction");
  if (!(step_deg > 0.0) || step_deg > 90.0) throw ContractViolation("compute_psd: invalid angle step");
  const RadonDisc disc(img);
  const std::vector<double> ps = radon_offsets(img);
  const auto count = static_cast<std::size_t>(std::llround(180.0 / step_deg));

  PsdProfile out;
  out.step_deg = step_deg;
  out.angles_deg.resize(count);
  out.values.resize(count);
  parallel_for(count, [&](std::size_t k) {
    const double delta = static_cast<double>(k) * step_deg;
    const double t = detail::deg2rad(delta);
    const double c = std::cos(t), s = std::sin(t);
    std::vector<double> proj(ps.size());
    double mean = 0.0;
    for (std::size_t q = 0; q < ps.size(); ++q) {
      proj[q] = detail::radon_line_unchecked(img, disc, c, s, ps[q]);
      mean += proj[q];
    }
    mean /= static_cast<double>(ps.size());
    double var = 0.0;
    for (double a : proj) var += (a - mean) * (a - mean);
    out.angles_deg[k] = delta;
    out.values[k] = std::sqrt(var / static_cast<double>(ps.size()));
  });
  return out;
}

/// Circular local maxima of the psd whose excess over the profile mean exceeds
/// `threshold` standard deviations of the profile. Plateaus report their leftmost index.
inline DirectionSet find_peak_directions(const PsdProfile& psd, double threshold = 2.5) {
  const auto& v = psd.values;
  const std::size_t n = v.size();
  if (n == 0) throw ContractViolation("find_peak_directions: empty profile");
  DirectionSet out;
  if (n < 3) return out;

  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sigma = std::sqrt(var / static_cast<double>(n));

  for (std::size_t i = 0; i < n; ++i) {
    const double prev = v[(i + n - 1) % n];
    if (!(v[i] > prev)) continue;
    std::size_t j = (i + 1) % n;
    std::size_t steps = 0;
    while (v[j] == v[i] && steps < n) {
      j = (j + 1) % n;
      ++steps;
    }
    if (!(v[j] < v[i])) continue;
    if (v[i] - mean > threshold * sigma) {
      const double delta = detail::deg2rad(psd.angles_deg[i]);
      double alpha = std::fmod(delta + std::numbers::pi / 2.0, std::numbers::pi);
      if (alpha < 0.0) alpha += std::numbers::pi;
      out.alphas.push_back(alpha);
      out.peak_index.push_back(i);
    }
  }
  return out;
}

inline void write_psd_csv(const PsdProfile& psd, std::ostream& os) {
  os << "angle_deg,psd\n";
  os.precision(17);
  for (std::size_t k = 0; k < psd.values.size(); ++k)
    os << psd.angles_deg[k] << ',' << psd.values[k] << '\n';
}

}  // namespace cellmotif
