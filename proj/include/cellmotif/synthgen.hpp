#pragma once

// Synthetic crystal images from a unit cell and atom parameters, with reproducible noise.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "cellmotif/atom_fit.hpp"
#include "cellmotif/errors.hpp"
#include "cellmotif/image.hpp"

namespace cellmotif {

enum class NoiseKind { kNone, kGaussian, kPoisson };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  /// Gaussian: standard deviation as a fraction of the clean intensity range.
  /// Poisson: counts per unit intensity (larger means less noise).
  double level = 0.0;
  std::uint64_t seed = 0;
};

/// Identifier of the noise generator, recorded in ground-truth metadata.
inline constexpr std::string_view kNoiseAlgorithm = "splitmix64-counter/box-muller/ptrs-v1";

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in (0, 1) from (seed, pixel, counter); independent of evaluation order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t pixel) noexcept
      : key_(splitmix64(splitmix64(seed) ^ (pixel * 0xd1342543de82ef95ULL))) {}

  double uniform() noexcept {
    const std::uint64_t bits = splitmix64(key_ ^ splitmix64(counter_++));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() noexcept {
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Knuth's product method for small means, Hoermann's PTRS otherwise.
  std::uint64_t poisson(double lambda) noexcept {
    if (!(lambda > 0.0)) return 0;
    if (lambda < 10.0) {
      const double limit = std::exp(-lambda);
      double prod = uniform();
      std::uint64_t k = 0;
      while (prod > limit) {
        ++k;
        prod *= uniform();
      }
      return k;
    }
    const double slam = std::sqrt(lambda), loglam = std::log(lambda);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform() - 0.5;
      const double v = uniform();
      const double us = 0.5 - std::abs(u);
      const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
      if (k < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
          -lambda + k * loglam - std::lgamma(k + 1.0))
        return static_cast<std::uint64_t>(k);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace detail

/// Adds noise to a clean image. Every pixel draws from its own counter stream, so the
/// result is bit-identical for a given seed regardless of thread count.
inline Image add_noise(const Image& clean, const NoiseSpec& noise) {
  if (!(noise.level >= 0.0)) throw ContractViolation("add_noise: level must be >= 0");
  if (noise.kind == NoiseKind::kNone || noise.level == 0.0) return clean;
  Image out = clean;
  const auto [lo, hi] = clean.min_max();
  const double range = hi > lo ? hi - lo : 1.0;
  const int w = clean.width();
  parallel_for(static_cast<std::size_t>(clean.height()), [&](std::size_t j) {
    for (int i = 0; i < w; ++i) {
      const std::uint64_t p = j * static_cast<std::uint64_t>(w) + static_cast<std::uint64_t>(i);
      detail::CounterRng rng(noise.seed, p);
      double& v = out(i, static_cast<int>(j));
      if (noise.kind == NoiseKind::kGaussian) {
        v += noise.level * range * rng.normal();
      } else {
        v = static_cast<double>(rng.poisson(std::max(v, 0.0) * noise.level)) / noise.level;
      }
    }
  });
  return out;
}

/// Image with pixel (i, j) = rho(P_EC((i, j))) plus noise.
inline Image generate(const UnitCell& cell, const MotifParams& mp, int w, int h, const NoiseSpec& noise = {}) {
  if (!cell.non_colinear()) throw ContractViolation("generate: unit cell vectors are colinear");
  for (const auto& a : mp.atoms)
    if (!a.valid()) throw ContractViolation("generate: invalid atom parameters");
  return add_noise(model_image(mp, cell, w, h), noise);
}

}  // namespace cellmotif
