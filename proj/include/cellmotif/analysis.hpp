#pragma once

// Geometry on extracted motifs: rotation into the v1 = x1 frame, labelled triple-layer
// spacings and aggregation over images.

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "cellmotif/atom_fit.hpp"
#include "cellmotif/errors.hpp"
#include "cellmotif/lattice.hpp"

namespace cellmotif {

/// Atom index -> label, e.g. {0: "Nb4", 1: "Nb/Co", 2: "Nb5"}.
struct LabelMap {
  std::map<std::size_t, std::string> assignments;

  /// Index of the unique atom carrying `label`.
  std::size_t find(const std::string& label) const {
    std::optional<std::size_t> hit;
    for (const auto& [idx, name] : assignments) {
      if (name != label) continue;
      if (hit) throw LabelError("label \"" + label + "\" is assigned to more than one atom");
      hit = idx;
    }
    if (!hit) throw LabelError("missing label \"" + label + "\"");
    return *hit;
  }
};

struct TripleLabels {
  std::string lower = "Nb4";
  std::string middle = "Nb/Co";
  std::string upper = "Nb5";
};

struct SpacingResult {
  double d_upper = 0.0;  // pm
  double d_lower = 0.0;  // pm
  double mean = 0.0;     // (d_upper + d_lower) / 2
  double spread = 0.0;   // |d_upper - d_lower| / 2
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

/// Rigid rotation taking v1 to (|v1|, 0). Centres rotate about the origin and each
/// atom's covariance [[s1^2, r s1 s2], [r s1 s2, s2^2]] is rotated accordingly.
inline std::pair<UnitCell, MotifParams> align_to_x1(const UnitCell& cell, const MotifParams& mp) {
  if (!cell.non_colinear()) throw ContractViolation("align_to_x1: degenerate unit cell");
  const double len = norm(cell.v1);
  const double c = cell.v1.x1 / len, s = -cell.v1.x2 / len;  // rotation by -angle(v1)
  auto rot = [c, s](const Vec2& x) { return Vec2{c * x.x1 - s * x.x2, s * x.x1 + c * x.x2}; };

  UnitCell out_cell{rot(cell.v1), rot(cell.v2)};
  out_cell.v1 = {len, 0.0};
  MotifParams out = mp;
  for (auto& a : out.atoms) {
    a.mu = rot(a.mu);
    const double s11 = a.sigma.x1 * a.sigma.x1, s22 = a.sigma.x2 * a.sigma.x2;
    const double s12 = a.r * a.sigma.x1 * a.sigma.x2;
    // R S R^T with R = [[c, -s], [s, c]].
    const double t11 = c * c * s11 - 2.0 * c * s * s12 + s * s * s22;
    const double t22 = s * s * s11 + 2.0 * c * s * s12 + c * c * s22;
    const double t12 = c * s * (s11 - s22) + (c * c - s * s) * s12;
    a.sigma = {std::sqrt(t11), std::sqrt(t22)};
    a.r = t12 / (a.sigma.x1 * a.sigma.x2);
  }
  return {out_cell, out};
}

/// Vertical gaps between the labelled layers of an aligned motif, in picometres.
inline SpacingResult triple_layer_spacing(const MotifParams& aligned, const LabelMap& labels,
                                          std::optional<double> scale_pm_per_px,
                                          const TripleLabels& names = {}) {
  if (!scale_pm_per_px) throw ExtractionError(ExitCode::kUsage, "pixel calibration required");
  const double scale = *scale_pm_per_px;
  if (!(scale > 0.0)) throw ContractViolation("triple_layer_spacing: scale must be positive");
  auto x2 = [&](const std::string& name) {
    const std::size_t idx = labels.find(name);
    if (idx >= aligned.atoms.size())
      throw LabelError("label \"" + name + "\" refers to atom " + std::to_string(idx) + " but the motif has " +
                       std::to_string(aligned.atoms.size()) + " atoms");
    return aligned.atoms[idx].mu.x2;
  };
  const double lower = x2(names.lower), middle = x2(names.middle), upper = x2(names.upper);
  SpacingResult r;
  r.d_upper = (upper - middle) * scale;
  r.d_lower = (middle - lower) * scale;
  r.mean = 0.5 * (r.d_upper + r.d_lower);
  r.spread = 0.5 * std::abs(r.d_upper - r.d_lower);
  return r;
}

/// Mean and population standard deviation.
inline Aggregate aggregate_spacings(std::span<const double> means) {
  if (means.empty()) throw ContractViolation("aggregate_spacings: no values");
  const double n = static_cast<double>(means.size());
  double m = 0.0;
  for (double v : means) m += v;
  m /= n;
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m);
  return {m, std::sqrt(var / n)};
}

}  // namespace cellmotif
