#pragma once

#include <cmath>

#include "cellmotif/errors.hpp"
#include "cellmotif/vec2.hpp"

namespace cellmotif {

/// Primitive lattice vectors in pixel coordinates.
struct UnitCell {
  Vec2 v1;
  Vec2 v2;

  double det() const noexcept { return cross(v1, v2); }
  bool non_colinear() const noexcept { return std::abs(det()) > 1e-6; }
  /// Minimum primitive vector length accepted by the extraction.
  static constexpr double kMinLength = 5.0;
  bool valid() const noexcept {
    return non_colinear() && norm(v1) >= kMinLength && norm(v2) >= kMinLength;
  }
  friend bool operator==(const UnitCell&, const UnitCell&) = default;
};

/// Coordinates (a1, a2) in the basis (v1, v2). The unit cell is [0,1)^2.
struct CrystalPoint {
  double a1 = 0.0;
  double a2 = 0.0;
  friend bool operator==(const CrystalPoint&, const CrystalPoint&) = default;
};

/// x = [v1 v2] a.
inline Vec2 to_euclidean(const UnitCell& cell, const CrystalPoint& a) {
  return {cell.v1.x1 * a.a1 + cell.v2.x1 * a.a2, cell.v1.x2 * a.a1 + cell.v2.x2 * a.a2};
}

/// Inverse basis map, cached for repeated use in pixel loops.
class CrystalFrame {
 public:
  explicit CrystalFrame(const UnitCell& cell) : cell_(cell) {
    const double d = cell.det();
    if (!(std::abs(d) > 1e-6)) throw ContractViolation("unit cell is singular (|det| <= 1e-6)");
    // [v1 v2]^-1 = 1/det * [[v2.x2, -v2.x1], [-v1.x2, v1.x1]]
    i11_ = cell.v2.x2 / d;
    i12_ = -cell.v2.x1 / d;
    i21_ = -cell.v1.x2 / d;
    i22_ = cell.v1.x1 / d;
  }

  const UnitCell& cell() const noexcept { return cell_; }

  CrystalPoint to_crystal(const Vec2& x) const noexcept {
    return {i11_ * x.x1 + i12_ * x.x2, i21_ * x.x1 + i22_ * x.x2};
  }
  Vec2 to_euclidean(const CrystalPoint& a) const noexcept { return cellmotif::to_euclidean(cell_, a); }

  /// Rows of the inverse basis matrix; (T^-1)^T g = (g . row1, g . row2) columns.
  double inv(int r, int c) const noexcept {
    return r == 0 ? (c == 0 ? i11_ : i12_) : (c == 0 ? i21_ : i22_);
  }

 private:
  UnitCell cell_;
  double i11_, i12_, i21_, i22_;
};

inline CrystalPoint to_crystal(const UnitCell& cell, const Vec2& x) {
  return CrystalFrame(cell).to_crystal(x);
}

/// Fractional part in [0, 1). Values within 1e-12 below an integer snap to 0.
inline double fractional(double a) noexcept {
  double r = a - std::floor(a);
  if (r >= 1.0 - 1e-12) r = 0.0;
  return r;
}

/// Projection onto the unit square in crystal coordinates.
inline CrystalPoint project_cc(const CrystalPoint& a) noexcept {
  return {fractional(a.a1), fractional(a.a2)};
}

/// Euclidean point -> crystal coordinates in [0,1)^2.
inline CrystalPoint project_etoc(const CrystalFrame& frame, const Vec2& x) noexcept {
  return project_cc(frame.to_crystal(x));
}
inline CrystalPoint project_etoc(const UnitCell& cell, const Vec2& x) {
  return project_etoc(CrystalFrame(cell), x);
}

/// Projection onto the cell parallelogram {s v1 + t v2 : s, t in [0,1)}.
inline Vec2 project_ec(const CrystalFrame& frame, const Vec2& x) noexcept {
  return frame.to_euclidean(project_etoc(frame, x));
}
inline Vec2 project_ec(const UnitCell& cell, const Vec2& x) { return project_ec(CrystalFrame(cell), x); }

}  // namespace cellmotif
