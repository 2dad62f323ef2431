#pragma once

#include <algorithm>
#include <cmath>

namespace cellmotif {

/// Point or displacement in pixel coordinates; x1 is the column axis, x2 the row axis.
struct Vec2 {
  double x1 = 0.0;
  double x2 = 0.0;

  constexpr Vec2& operator+=(const Vec2& o) {
    x1 += o.x1;
    x2 += o.x2;
    return *this;
  }
  constexpr Vec2& operator-=(const Vec2& o) {
    x1 -= o.x1;
    x2 -= o.x2;
    return *this;
  }
  constexpr Vec2& operator*=(double s) {
    x1 *= s;
    x2 *= s;
    return *this;
  }
  friend constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
  friend constexpr Vec2 operator-(const Vec2& a) { return {-a.x1, -a.x2}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
  friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x1 * b.x1 + a.x2 * b.x2; }
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x1 * b.x2 - a.x2 * b.x1; }
inline double norm(const Vec2& a) { return std::hypot(a.x1, a.x2); }
inline double norm_inf(const Vec2& a) { return std::max(std::abs(a.x1), std::abs(a.x2)); }

}  // namespace cellmotif
