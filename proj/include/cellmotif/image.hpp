#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cellmotif/errors.hpp"
#include "cellmotif/parallel.hpp"
#include "cellmotif/vec2.hpp"

namespace cellmotif {

/// Grayscale image on the pixel domain [0, w-1] x [0, h-1]. Pixel (i, j) sits at
/// x = (i, j): i is the column (x1), j the row (x2). Storage is row-major.
class Image {
 public:
  Image() = default;

  Image(int width, int height, double fill = 0.0)
      : width_(width), height_(height),
        pixels_(checked_size(width, height), fill) {}

  Image(int width, int height, std::vector<double> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != checked_size(width, height))
      throw ContractViolation("Image: pixel count does not match width*height");
    for (double v : pixels_)
      if (!std::isfinite(v)) throw ContractViolation("Image: non-finite intensity");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  double operator()(int i, int j) const { return pixels_[index(i, j)]; }
  double& operator()(int i, int j) { return pixels_[index(i, j)]; }

  std::span<const double> pixels() const noexcept { return pixels_; }
  std::span<double> pixels() noexcept { return pixels_; }

  /// Physical calibration in picometres per pixel, when known.
  const std::optional<double>& scale() const noexcept { return scale_; }
  void set_scale(std::optional<double> pm_per_px) { scale_ = pm_per_px; }

  bool contains(const Vec2& x, double tol = 1e-9) const noexcept {
    return x.x1 >= -tol && x.x2 >= -tol && x.x1 <= width_ - 1 + tol &&
           x.x2 <= height_ - 1 + tol;
  }

  std::pair<double, double> min_max() const {
    const auto [lo, hi] = std::minmax_element(pixels_.begin(), pixels_.end());
    return {*lo, *hi};
  }

 private:
  static std::size_t checked_size(int w, int h) {
    if (w < 1 || h < 1) throw ContractViolation("Image: width and height must be >= 1");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(i);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> pixels_;
  std::optional<double> scale_;
};

/// Axis-aligned rectangle in pixel coordinates.
struct Domain {
  double x1_min = 0.0;
  double x1_max = 0.0;
  double x2_min = 0.0;
  double x2_max = 0.0;

  bool valid() const noexcept { return x1_min <= x1_max && x2_min <= x2_max; }
  Domain shifted(const Vec2& s) const noexcept {
    return {x1_min + s.x1, x1_max + s.x1, x2_min + s.x2, x2_max + s.x2};
  }
  bool inside(const Image& img, double tol = 1e-9) const noexcept {
    return valid() && img.contains({x1_min, x2_min}, tol) && img.contains({x1_max, x2_max}, tol);
  }
  /// Number of unit-spaced grid points along each axis: x_min + k, k = 0..floor(x_max - x_min).
  int count1() const noexcept { return static_cast<int>(std::floor(x1_max - x1_min + 1e-9)) + 1; }
  int count2() const noexcept { return static_cast<int>(std::floor(x2_max - x2_min + 1e-9)) + 1; }

  static Domain of(const Image& img) {
    return {0.0, img.width() - 1.0, 0.0, img.height() - 1.0};
  }
};

namespace detail {

// Bilinear interpolation without the domain check; x is clamped to the image.
inline double bilinear(const Image& img, double x1, double x2) noexcept {
  const int w = img.width();
  const int h = img.height();
  x1 = std::clamp(x1, 0.0, w - 1.0);
  x2 = std::clamp(x2, 0.0, h - 1.0);
  int i0 = static_cast<int>(x1);
  int j0 = static_cast<int>(x2);
  if (i0 > w - 2) i0 = std::max(0, w - 2);
  if (j0 > h - 2) j0 = std::max(0, h - 2);
  const double fx = w > 1 ? x1 - i0 : 0.0;
  const double fy = h > 1 ? x2 - j0 : 0.0;
  const int i1 = w > 1 ? i0 + 1 : i0;
  const int j1 = h > 1 ? j0 + 1 : j0;
  const double a = img(i0, j0);
  const double b = img(i1, j0);
  const double c = img(i0, j1);
  const double d = img(i1, j1);
  return (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d);
}

}  // namespace detail

/// Bilinear sample of the image at continuous pixel coordinates. Exact at grid points.
inline double sample(const Image& img, const Vec2& x) {
  if (!img.contains(x)) throw ContractViolation("sample: point outside the image domain");
  return detail::bilinear(img, x.x1, x.x2);
}

/// Central-difference gradient of the bilinear interpolant with step `step`, falling
/// back to one-sided differences at the image border.
inline Vec2 sample_gradient(const Image& img, const Vec2& x, double step = 0.5) {
  const double w1 = img.width() - 1.0;
  const double w2 = img.height() - 1.0;
  const double a1 = std::max(0.0, x.x1 - step), b1 = std::min(w1, x.x1 + step);
  const double a2 = std::max(0.0, x.x2 - step), b2 = std::min(w2, x.x2 + step);
  Vec2 g;
  if (b1 > a1)
    g.x1 = (detail::bilinear(img, b1, x.x2) - detail::bilinear(img, a1, x.x2)) / (b1 - a1);
  if (b2 > a2)
    g.x2 = (detail::bilinear(img, x.x1, b2) - detail::bilinear(img, x.x1, a2)) / (b2 - a2);
  return g;
}

/// Sum over the unit-spaced grid of `dom` of (f(x + shift) - f(x))^2, each grid
/// point weighted by one pixel area. Rows are reduced in index order.
inline double integrate_sq_diff(const Image& img, const Domain& dom, const Vec2& shift) {
  if (!dom.inside(img)) throw ContractViolation("integrate_sq_diff: domain outside image");
  if (!dom.shifted(shift).inside(img))
    throw ContractViolation("integrate_sq_diff: shifted domain escapes the image");
  const int n1 = dom.count1();
  const int n2 = dom.count2();
  return ordered_row_sum(static_cast<std::size_t>(n2), [&](std::size_t row) {
    const double x2 = dom.x2_min + static_cast<double>(row);
    double acc = 0.0;
    for (int k = 0; k < n1; ++k) {
      const double x1 = dom.x1_min + k;
      const double d = detail::bilinear(img, x1 + shift.x1, x2 + shift.x2) -
                       detail::bilinear(img, x1, x2);
      acc += d * d;
    }
    return acc;
  });
}

/// Affinely maps intensities onto [0, 1]. Constant images map to 0.
inline void normalize_min_max(Image& img) {
  const auto [lo, hi] = img.min_max();
  const double range = hi - lo;
  for (double& v : img.pixels()) v = range > 0.0 ? (v - lo) / range : 0.0;
}

}  // namespace cellmotif
