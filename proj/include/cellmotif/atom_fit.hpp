#pragma once

// Motif as l Gaussian bumps plus a background, periodized over the 3x3 block of
// neighbouring cells, fitted to the image with the lattice vectors held fixed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cellmotif/errors.hpp"
#include "cellmotif/image.hpp"
#include "cellmotif/kmeans.hpp"
#include "cellmotif/lattice.hpp"
#include "cellmotif/optimize.hpp"
#include "cellmotif/parallel.hpp"

namespace cellmotif {

struct AtomParams {
  Vec2 mu;                // centre, pixels, inside the cell parallelogram
  Vec2 sigma{1.0, 1.0};   // standard deviations along x1 and x2
  double h = 1.0;         // height
  double r = 0.0;         // correlation coefficient in (-1, 1)

  bool valid() const noexcept {
    return sigma.x1 > 0.0 && sigma.x2 > 0.0 && h >= 0.0 && r > -1.0 && r < 1.0 &&
           std::isfinite(mu.x1) && std::isfinite(mu.x2) && std::isfinite(h);
  }
};

struct MotifParams {
  std::vector<AtomParams> atoms;
  double b = 0.0;  // background intensity
};

/// h exp(-(a^2 + c^2 - 2 r a c) / (2 (1 - r^2))), a = (x1-mu1)/sigma1, c = (x2-mu2)/sigma2.
inline double gauss_bump(const AtomParams& p, const Vec2& x) noexcept {
  const double a = (x.x1 - p.mu.x1) / p.sigma.x1;
  const double c = (x.x2 - p.mu.x2) / p.sigma.x2;
  return p.h * std::exp(-(a * a + c * c - 2.0 * p.r * a * c) / (2.0 * (1.0 - p.r * p.r)));
}

/// Sum of all bumps over the nine shifts z1 v1 + z2 v2, z in {-1,0,1}^2, plus b.
inline double periodized_model(const MotifParams& mp, const UnitCell& cell, const Vec2& x) noexcept {
  double s = mp.b;
  for (int z1 = -1; z1 <= 1; ++z1)
    for (int z2 = -1; z2 <= 1; ++z2) {
      const Vec2 y = x + static_cast<double>(z1) * cell.v1 + static_cast<double>(z2) * cell.v2;
      for (const auto& a : mp.atoms) s += gauss_bump(a, y);
    }
  return s;
}

/// Model image rho(P_EC(x)) on a w x h pixel grid.
inline Image model_image(const MotifParams& mp, const UnitCell& cell, int w, int h) {
  const CrystalFrame frame(cell);
  Image out(w, h);
  parallel_for(static_cast<std::size_t>(h), [&](std::size_t j) {
    for (int i = 0; i < w; ++i)
      out(i, static_cast<int>(j)) =
          periodized_model(mp, cell, project_ec(frame, {static_cast<double>(i), static_cast<double>(j)}));
  });
  return out;
}

/// d/d(mu1, mu2, sigma1, sigma2, h, r) per atom, and d/db.
struct AtomsGradient {
  std::vector<std::array<double, 6>> atoms;
  double b = 0.0;
};

namespace detail {

// Bumps with exponent above this bound contribute below exp(-40) relative and are skipped.
// The exponent is at least max(a^2, c^2)/2, so |a| > sqrt(80) already exceeds it.
inline constexpr double kBumpCutoff = 8.9443;

struct AtomTerms {
  double mu1, mu2, is1, is2, h, r, k;  // k = 1 / (1 - r^2)
};

inline std::vector<AtomTerms> atom_terms(const MotifParams& mp) {
  std::vector<AtomTerms> t;
  t.reserve(mp.atoms.size());
  for (const auto& a : mp.atoms)
    t.push_back({a.mu.x1, a.mu.x2, 1.0 / a.sigma.x1, 1.0 / a.sigma.x2, a.h, a.r, 1.0 / (1.0 - a.r * a.r)});
  return t;
}

// Pixel positions projected into the cell, computed once per (image, cell).
struct ProjectedPixels {
  int width = 0, height = 0;
  std::vector<Vec2> y;
  std::array<Vec2, 9> shifts{};

  ProjectedPixels(const Image& img, const UnitCell& cell) : width(img.width()), height(img.height()) {
    const CrystalFrame frame(cell);
    y.resize(img.size());
    for (int j = 0; j < height; ++j)
      for (int i = 0; i < width; ++i)
        y[static_cast<std::size_t>(j) * width + i] =
            project_ec(frame, {static_cast<double>(i), static_cast<double>(j)});
    int s = 0;
    for (int z1 = -1; z1 <= 1; ++z1)
      for (int z2 = -1; z2 <= 1; ++z2)
        shifts[s++] = static_cast<double>(z1) * cell.v1 + static_cast<double>(z2) * cell.v2;
  }
};

// Energy over all pixels; when grad is non-null the natural-parameter gradient is
// accumulated per row and combined in row order.
inline double atoms_energy_impl(const MotifParams& mp, const ProjectedPixels& px, std::span<const double> f,
                                AtomsGradient* grad) {
  const auto terms = atom_terms(mp);
  const std::size_t l = terms.size();
  const std::size_t rows = static_cast<std::size_t>(px.height);
  const std::size_t stride = 6 * l + 1;
  std::vector<double> row_grad(grad ? rows * stride : 0, 0.0);
  std::vector<double> row_energy(rows, 0.0);

  parallel_for(rows, [&](std::size_t j) {
    double* gr = grad ? row_grad.data() + j * stride : nullptr;
    std::vector<double> dmodel(grad ? stride : 0);
    double e = 0.0;
    for (int i = 0; i < px.width; ++i) {
      const std::size_t p = j * static_cast<std::size_t>(px.width) + static_cast<std::size_t>(i);
      const Vec2 y = px.y[p];
      double model = mp.b;
      if (grad) std::fill(dmodel.begin(), dmodel.end(), 0.0);
      for (std::size_t c = 0; c < l; ++c) {
        const AtomTerms& t = terms[c];
        for (const Vec2& s : px.shifts) {
          const double a = (y.x1 + s.x1 - t.mu1) * t.is1;
          const double q = (y.x2 + s.x2 - t.mu2) * t.is2;
          if (std::abs(a) > kBumpCutoff || std::abs(q) > kBumpCutoff) continue;
          const double ex = std::exp(-0.5 * t.k * (a * a + q * q - 2.0 * t.r * a * q));
          const double g = t.h * ex;
          model += g;
          if (!grad) continue;
          double* d = dmodel.data() + 6 * c;
          const double pa = t.k * (a - t.r * q);
          const double pq = t.k * (q - t.r * a);
          d[0] += g * pa * t.is1;
          d[1] += g * pq * t.is2;
          d[2] += g * pa * a * t.is1;
          d[3] += g * pq * q * t.is2;
          d[4] += ex;
          d[5] += g * (a * q * t.k - t.r * t.k * t.k * (a * a + q * q - 2.0 * t.r * a * q));
        }
      }
      const double res = f[p] - model;
      e += res * res;
      if (grad) {
        for (std::size_t k = 0; k < 6 * l; ++k) gr[k] -= 2.0 * res * dmodel[k];
        gr[6 * l] -= 2.0 * res;
      }
    }
    row_energy[j] = e;
  });

  double energy = 0.0;
  for (double e : row_energy) energy += e;
  if (grad) {
    grad->atoms.assign(l, {});
    grad->b = 0.0;
    for (std::size_t j = 0; j < rows; ++j) {
      const double* gr = row_grad.data() + j * stride;
      for (std::size_t c = 0; c < l; ++c)
        for (int k = 0; k < 6; ++k) grad->atoms[c][k] += gr[6 * c + k];
      grad->b += gr[6 * l];
    }
  }
  return energy;
}

}  // namespace detail

/// Atom-model energy sum_x (f(x) - rho(P_EC(x)))^2 over all pixels.
inline double atoms_energy(const MotifParams& mp, const UnitCell& cell, const Image& img) {
  return detail::atoms_energy_impl(mp, detail::ProjectedPixels(img, cell), img.pixels(), nullptr);
}

/// Energy and its gradient in (mu, sigma, h, r) per atom and b.
inline double atoms_energy_gradient(const MotifParams& mp, const UnitCell& cell, const Image& img,
                                    AtomsGradient& grad) {
  return detail::atoms_energy_impl(mp, detail::ProjectedPixels(img, cell), img.pixels(), &grad);
}

// ---------------------------------------------------------------------------
// Initial guess

struct BumpFit {
  AtomParams atom;
  double offset = 0.0;
};

struct InitOptions {
  double background_percentile = 0.10;
  double peak_fraction = 0.2;      // maxima must exceed b0 + fraction * (max - b0)
  double window_widths = 1.5;      // fit window radius in units of the estimated width (2 sigma)
  double merge_radius = 1.5;       // px; fitted centres closer than this (mod lattice) form one column
  double min_column_support = 0.2; // columns need this fraction of the largest column's detections
  int kmeans_restarts = 0;
  std::uint64_t seed = 0;
  int lm_iterations = 100;
};

struct InitDiagnostics {
  std::size_t maxima = 0;
  std::vector<BumpFit> fits;
  std::vector<Vec2> projected;
  std::size_t columns = 0;
};

namespace detail {

inline double percentile(std::span<const double> v, double q) {
  std::vector<double> s(v.begin(), v.end());
  const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(s.size() - 1)));
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k), s.end());
  return s[k];
}

// Strict 8-neighbour maxima above `threshold`, excluding the border.
inline std::vector<std::array<int, 2>> local_maxima(const Image& img, double threshold) {
  std::vector<std::array<int, 2>> out;
  for (int j = 1; j + 1 < img.height(); ++j)
    for (int i = 1; i + 1 < img.width(); ++i) {
      const double v = img(i, j);
      if (!(v > threshold)) continue;
      bool is_max = true;
      for (int dj = -1; dj <= 1 && is_max; ++dj)
        for (int di = -1; di <= 1; ++di)
          if ((di || dj) && !(v > img(i + di, j + dj))) {
            is_max = false;
            break;
          }
      if (is_max) out.push_back({i, j});
    }
  return out;
}

// Mean distance from (i,j) to the half-maximum level along the four axis directions. A walk
// that meets a rising profile (a neighbouring bump) before the half level stops at the minimum.
inline double half_max_radius(const Image& img, int i, int j, double base) {
  const double half = base + 0.5 * (img(i, j) - base);
  const std::array<std::array<int, 2>, 4> dirs{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  double sum = 0.0;
  int n = 0;
  for (const auto& d : dirs) {
    double prev = img(i, j);
    for (int k = 1;; ++k) {
      const int x = i + k * d[0], y = j + k * d[1];
      if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) break;
      const double v = img(x, y);
      if (v <= half) {
        sum += (k - 1) + (prev - half) / (prev - v);
        ++n;
        break;
      }
      if (v > prev) {
        // Extrapolate the slope seen so far down to the half level.
        const double drop = (img(i, j) - prev) / static_cast<double>(k - 1 > 0 ? k - 1 : 1);
        sum += drop > 0.0 ? (img(i, j) - half) / drop : static_cast<double>(k - 1);
        ++n;
        break;
      }
      prev = v;
    }
  }
  return n ? sum / n : 1.0;
}

// Maximum position refined by a parabola through the three samples along each axis.
inline Vec2 subpixel_peak(const Image& img, int i, int j) {
  auto offset = [](double l, double c, double r) {
    const double den = l - 2.0 * c + r;
    return den < 0.0 ? std::clamp(0.5 * (l - r) / den, -0.5, 0.5) : 0.0;
  };
  return {i + offset(img(i - 1, j), img(i, j), img(i + 1, j)), j + offset(img(i, j - 1), img(i, j), img(i, j + 1))};
}

inline double median(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  if (v.size() % 2) return v[m];
  const double hi = v[m];
  return 0.5 * (*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)) + hi);
}

// Gaussian plus offset; parameters (mu1, mu2, sigma1, sigma2, h, r, offset).
using Vec7 = Eigen::Matrix<double, 7, 1>;

inline double bump_residuals(const Vec7& p, const std::vector<Vec2>& xs, const std::vector<double>& fs,
                             Eigen::Matrix<double, 7, 7>* jtj, Vec7* jtr) {
  const AtomParams a{{p[0], p[1]}, {p[2], p[3]}, p[4], p[5]};
  const double k = 1.0 / (1.0 - a.r * a.r);
  double e = 0.0;
  if (jtj) {
    jtj->setZero();
    jtr->setZero();
  }
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const double u = (xs[n].x1 - a.mu.x1) / a.sigma.x1;
    const double q = (xs[n].x2 - a.mu.x2) / a.sigma.x2;
    const double ex = std::exp(-0.5 * k * (u * u + q * q - 2.0 * a.r * u * q));
    const double g = a.h * ex;
    const double res = fs[n] - g - p[6];
    e += res * res;
    if (!jtj) continue;
    const double pa = k * (u - a.r * q), pq = k * (q - a.r * u);
    Vec7 d;
    d << g * pa / a.sigma.x1, g * pq / a.sigma.x2, g * pa * u / a.sigma.x1, g * pq * q / a.sigma.x2, ex,
        g * (u * q * k - a.r * k * k * (u * u + q * q - 2.0 * a.r * u * q)), 1.0;
    *jtj += d * d.transpose();
    *jtr += d * res;
  }
  return e;
}

inline void clamp_bump(Vec7& p) {
  p[2] = std::max(p[2], 0.3);
  p[3] = std::max(p[3], 0.3);
  p[4] = std::max(p[4], 0.0);
  p[5] = std::clamp(p[5], -0.95, 0.95);
}

// Levenberg-Marquardt fit of one bump in the window of radius `rad` around (i,j).
inline std::optional<BumpFit> fit_bump(const Image& img, int i, int j, int rad, double sigma_est, double base,
                                       int iterations) {
  std::vector<Vec2> xs;
  std::vector<double> fs;
  for (int y = std::max(0, j - rad); y <= std::min(img.height() - 1, j + rad); ++y)
    for (int x = std::max(0, i - rad); x <= std::min(img.width() - 1, i + rad); ++x) {
      xs.push_back({static_cast<double>(x), static_cast<double>(y)});
      fs.push_back(img(x, y));
    }
  if (xs.size() < 9) return std::nullopt;

  Vec7 p;
  p << static_cast<double>(i), static_cast<double>(j), sigma_est, sigma_est, img(i, j) - base, 0.0, base;
  clamp_bump(p);

  Eigen::Matrix<double, 7, 7> jtj;
  Vec7 jtr;
  double e = bump_residuals(p, xs, fs, &jtj, &jtr);
  double lambda = 1e-3;
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, 7, 7> a = jtj;
    for (int k = 0; k < 7; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
    Vec7 trial = p + a.ldlt().solve(jtr);
    clamp_bump(trial);
    const double et = bump_residuals(trial, xs, fs, nullptr, nullptr);
    if (std::isfinite(et) && et < e) {
      const double gain = e - et;
      p = trial;
      e = bump_residuals(p, xs, fs, &jtj, &jtr);
      lambda = std::max(lambda * 0.1, 1e-12);
      if (gain <= 1e-12 * std::max(e, 1e-300)) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  if (!p.allFinite()) return std::nullopt;
  const Vec2 centre{p[0], p[1]};
  // A centre far from its maximum means the window was dominated by a neighbour.
  if (norm(centre - Vec2{static_cast<double>(i), static_cast<double>(j)}) > std::min<double>(rad, sigma_est + 1.0))
    return std::nullopt;
  if (p[2] > 2.0 * rad || p[3] > 2.0 * rad || !(p[4] > 0.0)) return std::nullopt;
  return BumpFit{AtomParams{centre, {p[2], p[3]}, p[4], p[5]}, p[6]};
}

// Groups lattice-equivalent points closer than `radius`; returns group sizes and representatives.
inline std::vector<std::pair<std::size_t, Vec2>> column_groups(const std::vector<Vec2>& pts,
                                                               const CrystalFrame& frame, double radius) {
  std::vector<std::pair<std::size_t, Vec2>> groups;  // (count, running mean)
  for (const Vec2& p : pts) {
    bool placed = false;
    for (auto& [n, c] : groups) {
      const Vec2 d = min_image(frame, p - c);
      if (norm(d) < radius) {
        c = project_ec(frame, c + (1.0 / static_cast<double>(n + 1)) * d);
        ++n;
        placed = true;
        break;
      }
    }
    if (!placed) groups.push_back({1, p});
  }
  std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  return groups;
}

}  // namespace detail

/// Initial atom parameters from the denoised reconstruction: locate every visible bump,
/// project the centres into the cell, cluster them into l columns; widths, heights and
/// correlations start at their medians over all bump fits and the background at 0.
inline MotifParams init_guess(const Image& recon, const UnitCell& cell, int l, const InitOptions& opt = {},
                              InitDiagnostics* diag = nullptr) {
  if (l < 1) throw ContractViolation("init_guess: l must be >= 1");
  const CrystalFrame frame(cell);
  const double b0 = detail::percentile(recon.pixels(), opt.background_percentile);
  const double hi = recon.min_max().second;
  const auto maxima = detail::local_maxima(recon, b0 + opt.peak_fraction * (hi - b0));

  std::vector<BumpFit> fits;
  for (const auto& [i, j] : maxima) {
    const double sigma_est = detail::half_max_radius(recon, i, j, b0) / std::sqrt(2.0 * std::log(2.0));
    const int rad = std::max(2, static_cast<int>(std::ceil(opt.window_widths * 2.0 * sigma_est)));
    // Positions come from the maxima; a windowed fit is biased by neighbouring bumps and only
    // supplies the shape. Maxima without a usable fit keep the half-maximum estimates.
    BumpFit b{AtomParams{{}, {sigma_est, sigma_est}, recon(i, j) - b0, 0.0}, b0};
    if (auto f = detail::fit_bump(recon, i, j, rad, sigma_est, b0, opt.lm_iterations)) b = *f;
    b.atom.mu = detail::subpixel_peak(recon, i, j);
    fits.push_back(b);
  }
  std::vector<Vec2> projected;
  projected.reserve(fits.size());
  for (const auto& f : fits) projected.push_back(project_ec(frame, f.atom.mu));

  const auto groups = detail::column_groups(projected, frame, opt.merge_radius);
  std::size_t columns = 0;
  for (const auto& g : groups)
    if (static_cast<double>(g.first) >= opt.min_column_support * static_cast<double>(groups.front().first)) ++columns;
  if (diag) {
    diag->maxima = maxima.size();
    diag->fits = fits;
    diag->projected = projected;
    diag->columns = columns;
  }
  if (columns < static_cast<std::size_t>(l))
    throw MotifUnderdetermined("found " + std::to_string(columns) + " < " + std::to_string(l) + " columns");

  PeriodicKMeans km = kmeans_periodic(projected, l, cell, opt.kmeans_restarts, opt.seed);
  {
    // Deterministic alternative start at the l best-supported columns.
    std::vector<Vec2> seeds;
    for (int c = 0; c < l; ++c) seeds.push_back(groups[static_cast<std::size_t>(c)].second);
    PeriodicKMeans alt = detail::lloyd_periodic(projected, seeds, frame, 100);
    if (alt.inertia < km.inertia * (1.0 - 1e-12)) km = std::move(alt);
  }

  std::vector<double> s1, s2, hs, rs;
  for (const auto& f : fits) {
    s1.push_back(f.atom.sigma.x1);
    s2.push_back(f.atom.sigma.x2);
    hs.push_back(f.atom.h);
    rs.push_back(f.atom.r);
  }
  const AtomParams shape{{}, {detail::median(s1), detail::median(s2)}, detail::median(hs), detail::median(rs)};
  MotifParams mp;
  for (const Vec2& c : km.centers) mp.atoms.push_back({c, shape.sigma, shape.h, shape.r});
  mp.b = 0.0;
  return mp;
}

// ---------------------------------------------------------------------------
// Minimisation

struct AtomFitOptions {
  CgOptions cg{.max_iterations = 3000, .rel_tolerance = 1e-12};
  bool precondition = true;  // rescale variables by the Gauss-Newton diagonal at the start
};

struct AtomFitResult {
  MotifParams params;
  CgResult cg;
};

namespace detail {

// Optimiser variables per atom: (mu1, mu2, log sigma1, log sigma2, log h, atanh r), then b;
// each divided by a fixed scale.
class AtomsObjective {
 public:
  AtomsObjective(const Image& img, const UnitCell& cell, std::size_t atoms)
      : img_(img), frame_(cell), px_(img, cell), scale_(6 * atoms + 1, 1.0) {}

  std::vector<double> encode(const MotifParams& mp) const {
    std::vector<double> x(scale_.size());
    for (std::size_t c = 0; c < mp.atoms.size(); ++c) {
      const auto& a = mp.atoms[c];
      const std::array<double, 6> nat{a.mu.x1, a.mu.x2, std::log(a.sigma.x1), std::log(a.sigma.x2),
                                      std::log(a.h), std::atanh(a.r)};
      for (int k = 0; k < 6; ++k) x[6 * c + k] = nat[k] / scale_[6 * c + k];
    }
    x.back() = mp.b / scale_.back();
    return x;
  }

  MotifParams decode(std::span<const double> x) const {
    MotifParams mp;
    const std::size_t l = (x.size() - 1) / 6;
    for (std::size_t c = 0; c < l; ++c) {
      auto v = [&](int k) { return x[6 * c + k] * scale_[6 * c + k]; };
      mp.atoms.push_back({{v(0), v(1)}, {std::exp(v(2)), std::exp(v(3))}, std::exp(v(4)), std::tanh(v(5))});
    }
    mp.b = x.back() * scale_.back();
    return mp;
  }

  double value(std::span<const double> x) const {
    const MotifParams mp = decode(x);
    if (!usable(mp)) return std::numeric_limits<double>::infinity();
    return atoms_energy_impl(mp, px_, img_.pixels(), nullptr);
  }

  double value_and_gradient(std::span<const double> x, std::span<double> g) const {
    const MotifParams mp = decode(x);
    if (!usable(mp)) return std::numeric_limits<double>::infinity();
    AtomsGradient nat;
    const double e = atoms_energy_impl(mp, px_, img_.pixels(), &nat);
    for (std::size_t c = 0; c < mp.atoms.size(); ++c) {
      const auto& a = mp.atoms[c];
      const auto& d = nat.atoms[c];
      const std::array<double, 6> chain{1.0, 1.0, a.sigma.x1, a.sigma.x2, a.h, 1.0 - a.r * a.r};
      for (int k = 0; k < 6; ++k) g[6 * c + k] = d[k] * chain[k] * scale_[6 * c + k];
    }
    g.back() = nat.b * scale_.back();
    return e;
  }

  // Keeps every centre inside the cell parallelogram.
  void post_step(std::span<double> x) const {
    const std::size_t l = (x.size() - 1) / 6;
    for (std::size_t c = 0; c < l; ++c) {
      const Vec2 mu{x[6 * c] * scale_[6 * c], x[6 * c + 1] * scale_[6 * c + 1]};
      const Vec2 w = project_ec(frame_, mu);
      x[6 * c] = w.x1 / scale_[6 * c];
      x[6 * c + 1] = w.x2 / scale_[6 * c + 1];
    }
  }

  // Scales variables so that the Gauss-Newton Hessian has a unit diagonal at mp.
  void precondition(const MotifParams& mp) {
    std::fill(scale_.begin(), scale_.end(), 1.0);
    const std::size_t n = scale_.size();
    std::vector<double> diag(n, 0.0);
    const std::vector<double> x0 = encode(mp);
    // Column norms of the residual Jacobian in the reparameterised variables.
    const auto terms = atom_terms(mp);
    for (std::size_t p = 0; p < px_.y.size(); ++p) {
      const Vec2 y = px_.y[p];
      std::vector<double> d(n, 0.0);
      for (std::size_t c = 0; c < terms.size(); ++c) {
        const AtomTerms& t = terms[c];
        for (const Vec2& s : px_.shifts) {
          const double a = (y.x1 + s.x1 - t.mu1) * t.is1;
          const double q = (y.x2 + s.x2 - t.mu2) * t.is2;
          if (std::abs(a) > kBumpCutoff || std::abs(q) > kBumpCutoff) continue;
          const double Q = a * a + q * q - 2.0 * t.r * a * q;
          const double g = t.h * std::exp(-0.5 * t.k * Q);
          const double pa = t.k * (a - t.r * q), pq = t.k * (q - t.r * a);
          d[6 * c] += g * pa * t.is1;
          d[6 * c + 1] += g * pq * t.is2;
          d[6 * c + 2] += g * pa * a;
          d[6 * c + 3] += g * pq * q;
          d[6 * c + 4] += g;
          d[6 * c + 5] += g * (a * q * t.k - t.r * t.k * t.k * Q) * (1.0 - t.r * t.r);
        }
      }
      d[n - 1] = 1.0;
      for (std::size_t k = 0; k < n; ++k) diag[k] += d[k] * d[k];
    }
    for (std::size_t k = 0; k < n; ++k) scale_[k] = diag[k] > 0.0 ? 1.0 / std::sqrt(2.0 * diag[k]) : 1.0;
  }

 private:
  static bool usable(const MotifParams& mp) {
    for (const auto& a : mp.atoms)
      if (!(a.sigma.x1 > 1e-6 && a.sigma.x2 > 1e-6 && std::abs(a.r) < 1.0 - 1e-12 && std::isfinite(a.h) &&
            std::isfinite(a.sigma.x1) && std::isfinite(a.sigma.x2)))
        return false;
    return true;
  }

  const Image& img_;
  CrystalFrame frame_;
  ProjectedPixels px_;
  std::vector<double> scale_;
};

}  // namespace detail

/// Minimises the atom-model energy over all atom parameters and b with v fixed.
inline AtomFitResult minimize_atoms(const Image& img, const UnitCell& cell, const MotifParams& init,
                                    const AtomFitOptions& opt = {}) {
  if (init.atoms.empty()) throw ContractViolation("minimize_atoms: need at least one atom");
  for (const auto& a : init.atoms)
    if (!a.valid() || !(a.h > 0.0)) throw ContractViolation("minimize_atoms: invalid initial atom");
  detail::AtomsObjective obj(img, cell, init.atoms.size());
  MotifParams start = init;
  const CrystalFrame frame(cell);
  for (auto& a : start.atoms) a.mu = project_ec(frame, a.mu);
  if (opt.precondition) obj.precondition(start);

  AtomFitResult out;
  out.cg = minimize_fletcher_reeves(obj, obj.encode(start), opt.cg);
  if (out.cg.stop == CgStop::kNonFinite)
    throw Divergence("atom fit energy became non-finite after " + std::to_string(out.cg.iterations) +
                     " iterations");
  out.params = obj.decode(out.cg.x);
  for (auto& a : out.params.atoms) a.mu = project_ec(frame, a.mu);
  return out;
}

}  // namespace cellmotif
