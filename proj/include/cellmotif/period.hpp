#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cellmotif/errors.hpp"
#include "cellmotif/image.hpp"
#include "cellmotif/kmeans.hpp"
#include "cellmotif/lattice.hpp"
#include "cellmotif/optimize.hpp"
#include "cellmotif/parallel.hpp"
#include "cellmotif/radon_psd.hpp"

namespace cellmotif {

struct PeriodCandidate {
  double alpha = 0.0;  // radians
  double t = 0.0;      // pixels
  double energy = 0.0;
};

/// e_alpha = (sin alpha, cos alpha).
inline Vec2 direction_vector(double alpha) { return {std::sin(alpha), std::cos(alpha)}; }
inline Vec2 candidate_vector(const PeriodCandidate& c) { return c.t * direction_vector(c.alpha); }

struct PeriodOptions {
  double min_period = UnitCell::kMinLength;
  double golden_tolerance = 1e-3;
  int max_clusters = 5;
  // Resolution floor of the AIC, relative to the mean directional energy.
  double aic_epsilon = 1e-6;
  // Candidates with energy > filter_factor * (lowest + floor) are dropped, where the floor is
  // the larger of filter_epsilon * range^2 and filter_relative * (typical directional energy).
  double filter_factor = 10.0;
  double filter_epsilon = 1e-9;
  double filter_relative = 1e-3;
  double tie_tolerance = 1e-2;   // pixels; lengths closer than this count as equal
  double colinear_degrees = 3.0;
  // Half-width (radians) of the direction refinement around the chosen candidate; 0 disables it.
  double direction_window = 0.5 * std::numbers::pi / 180.0;
  double direction_tolerance = 1e-5;  // radians
};

/// Integration domain for the directional energy: [w/4, 3w/4 - 1] x [h/4, 3h/4 - 1].
inline Domain directional_domain(const Image& img) {
  const double w = img.width(), h = img.height();
  return {w / 4.0, 3.0 * w / 4.0 - 1.0, h / 4.0, 3.0 * h / 4.0 - 1.0};
}

inline double max_period(const Image& img) { return std::min(img.width(), img.height()) / 4.0; }

/// E_alpha(t) = sum over the restricted domain of (f(x + t e_alpha) - f(x))^2.
inline double directional_energy(const Image& img, double alpha, double t) {
  if (t < 0.0 || t > max_period(img) + 1e-9)
    throw ContractViolation("directional_energy: t outside [0, min(w,h)/4]");
  return integrate_sq_diff(img, directional_domain(img), t * direction_vector(alpha));
}

/// Diagnostics of the period search along one direction.
struct DirectionSearch {
  double alpha = 0.0;
  std::vector<double> t_grid;
  std::vector<double> energy_grid;
  std::vector<PeriodCandidate> minimizers;
  std::vector<int> cluster_of;  // per minimiser
  std::vector<double> cluster_centers;
  std::vector<double> aic;
  int chosen_cluster = -1;
  std::optional<PeriodCandidate> candidate;
};

/// Resolves the direction below the psd angle increment: alternating golden-section
/// searches over alpha (within the window) and t. Keeps the result only if it lowers the energy.
inline void refine_direction(const Image& img, PeriodCandidate& cand, const PeriodOptions& opt) {
  const Domain dom = directional_domain(img);
  const double tmax = max_period(img);
  PeriodCandidate c = cand;
  for (int round = 0; round < 2; ++round) {
    auto along = [&](double a) { return integrate_sq_diff(img, dom, c.t * direction_vector(a)); };
    c.alpha = golden_section_minimize(along, c.alpha - opt.direction_window, c.alpha + opt.direction_window,
                                      opt.direction_tolerance);
    auto at = [&](double t) { return directional_energy(img, c.alpha, t); };
    c.t = golden_section_minimize(at, std::max(c.t - 0.5, opt.min_period), std::min(c.t + 0.5, tmax),
                                  opt.golden_tolerance);
  }
  c.energy = directional_energy(img, c.alpha, c.t);
  if (!(c.energy < cand.energy)) return;
  // Back into [0, pi); the flipped vector spans the same lattice line.
  c.alpha = std::fmod(c.alpha, std::numbers::pi);
  if (c.alpha < 0.0) c.alpha += std::numbers::pi;
  cand = c;
}

/// Samples E_alpha on the unit t-grid, refines discrete local minimisers by golden
/// section, clusters their energies (k-means, AIC-selected count) and keeps the
/// shortest minimiser of the lowest-energy cluster.
inline DirectionSearch find_period_candidates(const Image& img, double alpha,
                                              const PeriodOptions& opt = {}) {
  const double tmax = max_period(img);
  const int last = static_cast<int>(std::floor(tmax + 1e-9));
  if (last - static_cast<int>(std::ceil(opt.min_period)) + 1 < 3)
    throw ContractViolation("find_period_candidates: t-range [5, min(w,h)/4] has fewer than 3 samples");

  DirectionSearch out;
  out.alpha = alpha;
  for (int t = 0; t <= last; ++t) {
    out.t_grid.push_back(t);
    out.energy_grid.push_back(directional_energy(img, alpha, t));
  }
  const auto& e = out.energy_grid;
  const int n = static_cast<int>(e.size());
  for (int i = 1; i + 1 < n; ++i) {
    if (out.t_grid[i] < opt.min_period) continue;
    if (!(e[i] < e[i - 1])) continue;
    int j = i + 1;
    while (j < n && e[j] == e[i]) ++j;
    if (j >= n || !(e[j] > e[i])) continue;
    const double lo = std::max(out.t_grid[i] - 1.0, opt.min_period);
    const double hi = std::min(out.t_grid[i] + 1.0, tmax);
    auto energy_at = [&](double t) { return directional_energy(img, alpha, t); };
    double t_best = golden_section_minimize(energy_at, lo, hi, opt.golden_tolerance);
    double e_best = energy_at(t_best);
    if (e[i] <= e_best) {
      t_best = out.t_grid[i];
      e_best = e[i];
    }
    out.minimizers.push_back({alpha, t_best, e_best});
  }
  if (out.minimizers.empty()) return out;

  double scale = 0.0;
  for (double v : e) scale += v;
  scale /= static_cast<double>(n);
  std::vector<double> normalized;
  for (const auto& m : out.minimizers) normalized.push_back(scale > 0.0 ? m.energy / scale : 0.0);
  const AicClustering cl = cluster_by_aic(normalized, opt.max_clusters, opt.aic_epsilon);
  out.cluster_of = cl.fit.labels;
  out.cluster_centers = cl.fit.centers;
  out.aic = cl.aic;
  out.chosen_cluster = static_cast<int>(
      std::min_element(cl.fit.centers.begin(), cl.fit.centers.end()) - cl.fit.centers.begin());
  for (std::size_t m = 0; m < out.minimizers.size(); ++m) {
    if (out.cluster_of[m] != out.chosen_cluster) continue;
    if (!out.candidate || out.minimizers[m].t < out.candidate->t) out.candidate = out.minimizers[m];
  }
  if (out.candidate && opt.direction_window > 0.0) refine_direction(img, *out.candidate, opt);
  return out;
}

namespace detail {

// Angle in [0, pi/2] between the lines spanned by a and b.
inline double line_angle(const Vec2& a, const Vec2& b) {
  const double c = std::abs(dot(a, b)) / (norm(a) * norm(b));
  return std::acos(std::min(1.0, c));
}

}  // namespace detail

/// Picks v1 as the shortest eligible candidate (ties: smallest angle to the x1-axis) and
/// v2 as the shortest eligible one not colinear with v1 (ties: smallest angle to v1).
/// Eligible: energy <= filter_factor * (lowest energy + floor). `energy_scale` is the typical
/// directional energy away from a period (mean over the t-grids); it sets the floor for images
/// whose best candidate is exact up to rounding, where interpolation error alone separates
/// integer from non-integer lattice vectors.
inline UnitCell select_initial_vectors(std::vector<PeriodCandidate> cands, const PeriodOptions& opt = {},
                                       double intensity_range = 1.0, double energy_scale = 0.0) {
  if (cands.empty()) throw InsufficientPeriodicity("no period candidates");
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& c : cands) lowest = std::min(lowest, c.energy);
  const double floor = std::max(opt.filter_epsilon * intensity_range * intensity_range,
                                opt.filter_relative * energy_scale);
  const double cutoff = opt.filter_factor * (lowest + floor);
  std::erase_if(cands, [&](const PeriodCandidate& c) { return c.energy > cutoff; });

  const Vec2 x1_axis{1.0, 0.0};
  // Order-independent: sort on the full key.
  std::sort(cands.begin(), cands.end(), [](const PeriodCandidate& a, const PeriodCandidate& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.alpha != b.alpha) return a.alpha < b.alpha;
    return a.energy < b.energy;
  });

  auto pick = [&](auto&& eligible, auto&& tie_angle) -> std::optional<PeriodCandidate> {
    std::optional<PeriodCandidate> best;
    double shortest = 0.0;
    for (const auto& c : cands) {
      if (!eligible(c)) continue;
      if (!best) {
        best = c;
        shortest = c.t;
        continue;
      }
      if (c.t > shortest + opt.tie_tolerance) break;
      if (tie_angle(c) < tie_angle(*best) - 1e-12) best = c;
    }
    return best;
  };

  const auto first = pick([](const PeriodCandidate&) { return true; },
                          [&](const PeriodCandidate& c) { return detail::line_angle(direction_vector(c.alpha), x1_axis); });
  if (!first) throw InsufficientPeriodicity("no candidate passed the energy filter");
  const Vec2 e1 = direction_vector(first->alpha);
  const double min_sin = std::sin(opt.colinear_degrees * std::numbers::pi / 180.0);
  const auto second = pick(
      [&](const PeriodCandidate& c) { return std::abs(cross(e1, direction_vector(c.alpha))) > min_sin; },
      [&](const PeriodCandidate& c) { return detail::line_angle(direction_vector(c.alpha), e1); });
  if (!second) throw InsufficientPeriodicity("fewer than two non-colinear periodicity directions");

  UnitCell cell{candidate_vector(*first), candidate_vector(*second)};
  if (dot(cell.v1, cell.v2) < 0.0) cell.v2 = -cell.v2;
  return cell;
}

/// Integration domain of the refinement energy: [d, w-1-d] x [d, h-1-d] with
/// d = max(|v1|_inf, |v2|_inf, |v1+v2|_inf + 3).
inline Domain refinement_domain(const Image& img, const UnitCell& init) {
  const double d = std::max({norm_inf(init.v1), norm_inf(init.v2), norm_inf(init.v1 + init.v2) + 3.0});
  return {d, img.width() - 1.0 - d, d, img.height() - 1.0 - d};
}

struct RefinementResult {
  UnitCell cell;
  std::vector<double> trace;  // refinement energy per accepted iterate, trace[0] = initial
  int iterations = 0;
  int increases = 0;
};

struct RefineOptions {
  int max_iterations = 50;
  int max_halvings = 30;
  double rel_tolerance = 1e-10;
  double gradient_step = 0.5;
};

namespace detail {

inline constexpr std::array<std::array<int, 2>, 3> kRefinementShifts{{{1, 0}, {0, 1}, {1, 1}}};

struct NormalEquations {
  Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
  Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
  double energy = 0.0;
  bool valid = true;
};

// Residuals r = f(x) - f(x + z1 v1 + z2 v2) over the grid of `dom` for the three shifts.
// With `with_jacobian`, accumulates J^T J and J^T r (dr/dv_c = -z_c grad f(x + shift)).
inline NormalEquations refinement_system(const Image& img, const Domain& dom, const UnitCell& v,
                                         bool with_jacobian, double grad_step) {
  NormalEquations out;
  std::array<Vec2, 3> shift;
  for (std::size_t s = 0; s < 3; ++s) {
    shift[s] = static_cast<double>(kRefinementShifts[s][0]) * v.v1 +
               static_cast<double>(kRefinementShifts[s][1]) * v.v2;
    if (!dom.shifted(shift[s]).inside(img)) {
      out.valid = false;
      out.energy = std::numeric_limits<double>::infinity();
      return out;
    }
  }
  const int n1 = dom.count1();
  const int n2 = dom.count2();
  std::vector<NormalEquations> rows(static_cast<std::size_t>(n2));
  parallel_for(rows.size(), [&](std::size_t row) {
    NormalEquations& acc = rows[row];
    const double x2 = dom.x2_min + static_cast<double>(row);
    for (int k = 0; k < n1; ++k) {
      const double x1 = dom.x1_min + k;
      const double f0 = bilinear(img, x1, x2);
      for (std::size_t s = 0; s < 3; ++s) {
        const Vec2 y{x1 + shift[s].x1, x2 + shift[s].x2};
        const double r = f0 - bilinear(img, y.x1, y.x2);
        acc.energy += r * r;
        if (!with_jacobian) continue;
        const Vec2 g = sample_gradient(img, y, grad_step);
        const double z1 = kRefinementShifts[s][0], z2 = kRefinementShifts[s][1];
        const Eigen::Vector4d j(-z1 * g.x1, -z1 * g.x2, -z2 * g.x1, -z2 * g.x2);
        acc.jtj.noalias() += j * j.transpose();
        acc.jtr.noalias() += j * r;
      }
    }
  });
  for (const auto& r : rows) {
    out.energy += r.energy;
    if (with_jacobian) {
      out.jtj += r.jtj;
      out.jtr += r.jtr;
    }
  }
  return out;
}

}  // namespace detail

/// Refinement energy sum_z sum_x (f(x) - f(x + z1 v1 + z2 v2))^2 on `dom`.
inline double refinement_energy(const Image& img, const Domain& dom, const UnitCell& v) {
  return detail::refinement_system(img, dom, v, false, 0.5).energy;
}

/// Damped Gauss-Newton on the refinement energy. The Gauss-Newton step is halved
/// until the residual decreases (at most max_halvings times).
inline RefinementResult refine_vectors(const Image& img, const UnitCell& init, const RefineOptions& opt = {}) {
  if (!init.non_colinear()) throw ContractViolation("refine_vectors: initial vectors are colinear");
  const Domain dom = refinement_domain(img, init);
  if (!dom.valid() || !dom.inside(img)) throw ImageTooSmall("image too small for refinement");

  RefinementResult res;
  res.cell = init;
  auto sys = detail::refinement_system(img, dom, init, true, opt.gradient_step);
  if (!sys.valid) throw ImageTooSmall("image too small for refinement");
  double energy = sys.energy;
  res.trace.push_back(energy);

  for (int it = 0; it < opt.max_iterations; ++it) {
    if (energy == 0.0 || sys.jtr.isZero(0.0)) break;
    const Eigen::LDLT<Eigen::Matrix4d> ldlt(sys.jtj);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::Vector4d step = ldlt.solve(-sys.jtr);
    if (!step.allFinite()) break;

    double tau = 1.0;
    bool accepted = false;
    UnitCell trial;
    double e_trial = energy;
    for (int h = 0; h <= opt.max_halvings; ++h, tau *= 0.5) {
      trial.v1 = res.cell.v1 + Vec2{tau * step[0], tau * step[1]};
      trial.v2 = res.cell.v2 + Vec2{tau * step[2], tau * step[3]};
      e_trial = refinement_energy(img, dom, trial);
      if (e_trial < energy) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const double decrease = energy - e_trial;
    res.cell = trial;
    if (e_trial > energy) ++res.increases;
    energy = e_trial;
    res.trace.push_back(energy);
    res.iterations = it + 1;
    if (decrease < opt.rel_tolerance * (energy + decrease)) break;
    sys = detail::refinement_system(img, dom, res.cell, true, opt.gradient_step);
  }
  return res;
}

struct Stage1Options {
  double angle_step_deg = 0.5;
  double psd_threshold = 2.5;
  PeriodOptions period;
  RefineOptions refine;
};

struct Stage1Result {
  PsdProfile psd;
  DirectionSet directions;
  std::vector<DirectionSearch> searches;
  UnitCell initial;
  RefinementResult refined;
};

/// Unit cell extraction: psd peak directions, per-direction fundamental periods,
/// shortest non-colinear pair, Gauss-Newton refinement.
inline Stage1Result extract_unit_cell(const Image& img, const Stage1Options& opt = {}) {
  if (std::min(img.width(), img.height()) < 28)
    throw ImageTooSmall("need at least 28 pixels per axis for the period search");
  Stage1Result out;
  out.psd = compute_psd(img, opt.angle_step_deg);
  out.directions = find_peak_directions(out.psd, opt.psd_threshold);
  PeriodOptions popt = opt.period;
  if (popt.direction_window > 0.0) popt.direction_window = detail::deg2rad(opt.angle_step_deg);
  if (out.directions.alphas.empty()) {
    // Without a psd peak, tell structure coarser than a quarter of the image (directional
    // energy rising over the whole t range) from an image without periodicity.
    const auto [lo, hi] = img.min_max();
    if (hi > lo) {
      const auto top = std::max_element(out.psd.values.begin(), out.psd.values.end()) - out.psd.values.begin();
      const double alpha = std::fmod(detail::deg2rad(out.psd.angles_deg[static_cast<std::size_t>(top)]) +
                                         std::numbers::pi / 2.0, std::numbers::pi);
      if (find_period_candidates(img, alpha, popt).minimizers.empty())
        throw ImageTooSmall("no psd peak and no period below min(w,h)/4; the image must span at least four "
                            "unit cells per axis");
    }
    throw InsufficientPeriodicity("no psd peak above threshold");
  }

  out.searches.resize(out.directions.alphas.size());
  parallel_for(out.searches.size(), [&](std::size_t k) {
    out.searches[k] = find_period_candidates(img, out.directions.alphas[k], popt);
  });
  std::vector<PeriodCandidate> cands;
  std::size_t without_period = 0;
  for (const auto& s : out.searches) {
    if (s.candidate) cands.push_back(*s.candidate);
    else ++without_period;
  }
  if (cands.size() < 2 && without_period > 0)
    throw ImageTooSmall("no fundamental period below min(w,h)/4 along " + std::to_string(without_period) +
                        " periodic direction(s); the image must span at least four unit cells per axis");
  double scale = 0.0;
  for (const auto& sr : out.searches) {
    double m = 0.0;
    for (double e : sr.energy_grid) m += e;
    scale += m / static_cast<double>(sr.energy_grid.size());
  }
  scale /= static_cast<double>(out.searches.size());
  const auto [lo, hi] = img.min_max();
  out.initial = select_initial_vectors(cands, popt, hi - lo, scale);
  out.refined = refine_vectors(img, out.initial, opt.refine);
  if (!out.refined.cell.valid())
    throw InsufficientPeriodicity("refined vectors degenerate");
  return out;
}

}  // namespace cellmotif
