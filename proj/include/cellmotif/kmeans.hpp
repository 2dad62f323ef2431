#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "cellmotif/errors.hpp"
#include "cellmotif/lattice.hpp"

namespace cellmotif {

struct KMeans1D {
  std::vector<double> centers;
  std::vector<int> labels;
  double within_ss = 0.0;  // within-cluster sum of squares
};

/// Lloyd iterations on scalars, seeded at the (i + 0.5)/k quantiles of the sorted data.
inline KMeans1D kmeans_1d(std::span<const double> values, int k, int max_iterations = 100) {
  const std::size_t n = values.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) throw ContractViolation("kmeans_1d: need 1 <= k <= n");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  KMeans1D r;
  r.centers.resize(k);
  for (int i = 0; i < k; ++i) {
    const double q = (i + 0.5) / k * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(q));
    const std::size_t hi = std::min(lo + 1, n - 1);
    r.centers[i] = sorted[lo] + (q - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  }
  r.labels.assign(n, -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t p = 0; p < n; ++p) {
      int best = 0;
      double bd = std::abs(values[p] - r.centers[0]);
      for (int c = 1; c < k; ++c) {
        const double dd = std::abs(values[p] - r.centers[c]);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (r.labels[p] != best) {
        r.labels[p] = best;
        changed = true;
      }
    }
    std::vector<double> sum(k, 0.0);
    std::vector<int> cnt(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      sum[r.labels[p]] += values[p];
      ++cnt[r.labels[p]];
    }
    for (int c = 0; c < k; ++c)
      if (cnt[c] > 0) r.centers[c] = sum[c] / cnt[c];
    if (!changed) break;
  }
  r.within_ss = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double dd = values[p] - r.centers[r.labels[p]];
    r.within_ss += dd * dd;
  }
  return r;
}

/// AIC of a 1-D k-means fit: n ln(W/n + eps) + 4k (centre and share per cluster).
inline double kmeans_aic(std::size_t n, double within_ss, int k, double eps) {
  return static_cast<double>(n) * std::log(within_ss / static_cast<double>(n) + eps) + 4.0 * k;
}

struct AicClustering {
  KMeans1D fit;
  int k = 1;
  std::vector<double> aic;  // aic[k-1] for every k tried
};

/// Chooses the cluster count in 1..min(max_k, n) with the lowest AIC (ties: fewer clusters).
inline AicClustering cluster_by_aic(std::span<const double> values, int max_k = 5, double eps = 1e-12) {
  if (values.empty()) throw ContractViolation("cluster_by_aic: no values");
  AicClustering best;
  const int kmax = std::min<int>(max_k, static_cast<int>(values.size()));
  double best_aic = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= kmax; ++k) {
    KMeans1D fit = kmeans_1d(values, k);
    const double a = kmeans_aic(values.size(), fit.within_ss, k, eps);
    best.aic.push_back(a);
    if (a < best_aic) {
      best_aic = a;
      best.fit = std::move(fit);
      best.k = k;
    }
  }
  return best;
}

struct PeriodicKMeans {
  std::vector<Vec2> centers;  // inside the cell parallelogram
  std::vector<int> labels;
  double inertia = 0.0;
};

namespace detail {

// Shortest lattice-equivalent displacement (Euclidean metric).
inline Vec2 min_image(const CrystalFrame& frame, const Vec2& delta) {
  CrystalPoint a = frame.to_crystal(delta);
  a.a1 -= std::round(a.a1);
  a.a2 -= std::round(a.a2);
  const Vec2 base = frame.to_euclidean(a);
  const UnitCell& c = frame.cell();
  Vec2 best = base;
  double bd = dot(base, base);
  for (int z1 = -1; z1 <= 1; ++z1)
    for (int z2 = -1; z2 <= 1; ++z2) {
      const Vec2 cand = base + static_cast<double>(z1) * c.v1 + static_cast<double>(z2) * c.v2;
      const double dd = dot(cand, cand);
      if (dd < bd - 1e-15) {
        bd = dd;
        best = cand;
      }
    }
  return best;
}

inline PeriodicKMeans lloyd_periodic(std::span<const Vec2> pts, std::vector<Vec2> centers,
                                     const CrystalFrame& frame, int max_iterations) {
  const std::size_t n = pts.size();
  const std::size_t k = centers.size();
  PeriodicKMeans r;
  r.labels.assign(n, -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t p = 0; p < n; ++p) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const Vec2 dlt = min_image(frame, pts[p] - centers[c]);
        const double dd = dot(dlt, dlt);
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(c);
        }
      }
      if (r.labels[p] != best) {
        r.labels[p] = best;
        changed = true;
      }
    }
    std::vector<Vec2> shift(k);
    std::vector<int> cnt(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      const int c = r.labels[p];
      shift[c] += min_image(frame, pts[p] - centers[c]);
      ++cnt[c];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (cnt[c] > 0) centers[c] = project_ec(frame, centers[c] + (1.0 / cnt[c]) * shift[c]);
    if (!changed && it > 0) break;
  }
  r.inertia = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const Vec2 dlt = min_image(frame, pts[p] - centers[r.labels[p]]);
    r.inertia += dot(dlt, dlt);
  }
  r.centers = std::move(centers);
  return r;
}

}  // namespace detail

/// k-means of points in the cell parallelogram, with distances measured modulo the
/// lattice. Seeds: points sorted by angle about their centroid, taken at stride n/k.
/// `restarts` extra runs from seeded random picks are kept only if they lower the inertia.
inline PeriodicKMeans kmeans_periodic(std::span<const Vec2> pts, int k, const UnitCell& cell,
                                      int restarts = 0, std::uint64_t seed = 0,
                                      int max_iterations = 100) {
  if (k < 1 || static_cast<std::size_t>(k) > pts.size())
    throw ContractViolation("kmeans_periodic: need 1 <= k <= number of points");
  const CrystalFrame frame(cell);
  const std::size_t n = pts.size();

  Vec2 centroid;
  for (const Vec2& p : pts) centroid += p;
  centroid *= 1.0 / static_cast<double>(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> angle(n);
  for (std::size_t p = 0; p < n; ++p)
    angle[p] = std::atan2(pts[p].x2 - centroid.x2, pts[p].x1 - centroid.x1);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return angle[a] < angle[b]; });
  std::vector<Vec2> seeds(k);
  for (int c = 0; c < k; ++c) seeds[c] = pts[order[static_cast<std::size_t>(c) * n / k]];

  PeriodicKMeans best = detail::lloyd_periodic(pts, seeds, frame, max_iterations);
  std::mt19937_64 rng(seed);
  for (int r = 0; r < restarts; ++r) {
    std::vector<std::size_t> pick(n);
    std::iota(pick.begin(), pick.end(), 0);
    for (int c = 0; c < k; ++c) {
      std::uniform_int_distribution<std::size_t> u(static_cast<std::size_t>(c), n - 1);
      std::swap(pick[c], pick[u(rng)]);
      seeds[c] = pts[pick[c]];
    }
    PeriodicKMeans cand = detail::lloyd_periodic(pts, seeds, frame, max_iterations);
    if (cand.inertia < best.inertia * (1.0 - 1e-12)) best = std::move(cand);
  }
  return best;
}

}  // namespace cellmotif
