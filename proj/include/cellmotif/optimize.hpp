#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace cellmotif {

/// Objective for the descent methods: value and value-with-gradient.
template <class F>
concept DifferentiableObjective = requires(F& f, std::span<const double> x, std::span<double> g) {
  { f.value(x) } -> std::convertible_to<double>;
  { f.value_and_gradient(x, g) } -> std::convertible_to<double>;
};

/// Optional trust check: reject a trial point outright (treated like a failed Armijo test).
template <class F>
concept HasAdmissible = requires(F& f, std::span<const double> a, std::span<const double> b) {
  { f.admissible(a, b) } -> std::convertible_to<bool>;
};

/// Optional in-place normalisation applied after every accepted step.
template <class F>
concept HasPostStep = requires(F& f, std::span<double> x) { f.post_step(x); };

struct CgOptions {
  int max_iterations = 500;
  double rel_tolerance = 1e-9;  // stop when (E_old - E_new) < rel_tolerance * E_old
  int restart_every = 50;
  double armijo_slope = 1e-4;
  double backtrack = 0.5;
  double widen = 2.0;
  double initial_step = 1.0;
  int max_backtracks = 60;
  int max_widenings = 30;
};

enum class CgStop { kConverged, kMaxIterations, kStalled, kZeroGradient, kNonFinite };

struct CgResult {
  std::vector<double> x;
  double energy = 0.0;
  int iterations = 0;
  CgStop stop = CgStop::kConverged;
  /// Energy after each accepted step; trace[0] is the starting energy.
  std::vector<double> trace;
  /// Steps at which the accepted energy exceeded the previous one (must stay empty).
  int increases = 0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace detail

/// Nonlinear Fletcher-Reeves conjugate gradients with Armijo step size control.
/// A trial step that satisfies the Armijo condition on the first try is widened
/// while the energy keeps decreasing; otherwise it is backtracked.
template <DifferentiableObjective F>
CgResult minimize_fletcher_reeves(F& f, std::vector<double> x, const CgOptions& opt = {}) {
  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), d(n), trial(n), g_trial(n);
  CgResult res;
  double energy = f.value_and_gradient(x, g);
  res.trace.push_back(energy);
  if (!std::isfinite(energy)) {
    res.stop = CgStop::kNonFinite;
    res.x = std::move(x);
    res.energy = energy;
    return res;
  }
  for (std::size_t k = 0; k < n; ++k) d[k] = -g[k];
  double gg = detail::dot(g, g);
  double tau = opt.initial_step;
  int since_restart = 0;

  auto trial_energy = [&](double step) {
    for (std::size_t k = 0; k < n; ++k) trial[k] = x[k] + step * d[k];
    if constexpr (HasAdmissible<F>) {
      if (!f.admissible(std::span<const double>(x), std::span<const double>(trial)))
        return std::numeric_limits<double>::infinity();
    }
    const double e = f.value(trial);
    return std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
  };

  res.stop = CgStop::kMaxIterations;
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (gg == 0.0) {
      res.stop = CgStop::kZeroGradient;
      break;
    }
    double slope = detail::dot(g, d);
    if (!(slope < 0.0) || since_restart >= opt.restart_every) {
      for (std::size_t k = 0; k < n; ++k) d[k] = -g[k];
      slope = -gg;
      since_restart = 0;
    }

    // Armijo line search with widening.
    bool accepted = false;
    double step = tau;
    double e_step = trial_energy(step);
    auto armijo = [&](double e, double s) { return e <= energy + opt.armijo_slope * s * slope; };
    if (armijo(e_step, step)) {
      accepted = true;
      for (int w = 0; w < opt.max_widenings; ++w) {
        const double wider = step * opt.widen;
        const double e_wide = trial_energy(wider);
        if (!(armijo(e_wide, wider) && e_wide < e_step)) break;
        step = wider;
        e_step = e_wide;
      }
    } else {
      for (int b = 0; b < opt.max_backtracks; ++b) {
        step *= opt.backtrack;
        e_step = trial_energy(step);
        if (armijo(e_step, step)) {
          accepted = true;
          break;
        }
      }
    }

    if (!accepted) {
      if (since_restart == 0) {
        res.stop = CgStop::kStalled;
        break;
      }
      // Conjugate direction failed; retry along steepest descent.
      since_restart = opt.restart_every;
      tau = opt.initial_step;
      continue;
    }

    std::vector<double> x_prev = x;
    for (std::size_t k = 0; k < n; ++k) x[k] += step * d[k];
    if constexpr (HasPostStep<F>) f.post_step(std::span<double>(x));
    const double e_new = f.value_and_gradient(x, g_new);
    if (!std::isfinite(e_new)) {
      res.stop = CgStop::kNonFinite;
      energy = e_new;
      break;
    }
    if (e_new > energy) {
      // Only reachable through rounding (re-evaluation after post_step); keep the previous iterate.
      x.swap(x_prev);
      res.stop = CgStop::kStalled;
      break;
    }
    res.trace.push_back(e_new);
    res.iterations = it + 1;
    tau = step;

    const double decrease = energy - e_new;
    energy = e_new;
    const double gg_new = detail::dot(g_new, g_new);
    const double beta = gg > 0.0 ? gg_new / gg : 0.0;
    for (std::size_t k = 0; k < n; ++k) d[k] = -g_new[k] + beta * d[k];
    g.swap(g_new);
    gg = gg_new;
    ++since_restart;

    if (decrease <= opt.rel_tolerance * std::abs(energy + decrease)) {
      res.stop = CgStop::kConverged;
      break;
    }
  }
  res.x = std::move(x);
  res.energy = energy;
  return res;
}

/// Golden-section search for a minimiser of f on [lo, hi] to interval width `tol`.
template <class Fn>
double golden_section_minimize(Fn&& f, double lo, double hi, double tol = 1e-3) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

}  // namespace cellmotif
