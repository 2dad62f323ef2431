#pragma once

// Motif as an image u on the crystal-space unit square, fitted to the input by
// minimising sum_x (f(x) - u(P_E->C[v](x)))^2, first in u and then jointly in (u, v).

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "cellmotif/errors.hpp"
#include "cellmotif/image.hpp"
#include "cellmotif/lattice.hpp"
#include "cellmotif/optimize.hpp"

namespace cellmotif {

/// Samples of u at (i/n1, j/n2), stored at values[i * n2 + j]. Interpolation wraps
/// around in both directions.
class MotifGrid {
 public:
  MotifGrid() = default;
  MotifGrid(int n1, int n2, double fill = 0.0) : n1_(n1), n2_(n2) {
    if (n1 < 2 || n2 < 2) throw ContractViolation("MotifGrid: resolution must be at least 2x2");
    values_.assign(static_cast<std::size_t>(n1) * n2, fill);
  }
  MotifGrid(int n1, int n2, std::vector<double> values) : MotifGrid(n1, n2) {
    if (values.size() != values_.size()) throw ContractViolation("MotifGrid: value count mismatch");
    values_ = std::move(values);
  }

  int n1() const noexcept { return n1_; }
  int n2() const noexcept { return n2_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator()(int i, int j) const noexcept { return values_[index(i, j)]; }
  double& operator()(int i, int j) noexcept { return values_[index(i, j)]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(n2_) + static_cast<std::size_t>(j);
  }

  /// Grid as an image: rows follow s (the v1 axis), columns follow t (the v2 axis).
  Image as_image() const { return Image(n2_, n1_, values_); }

 private:
  int n1_ = 0;
  int n2_ = 0;
  std::vector<double> values_;
};

/// Bilinear stencil of a point on the periodically extended grid.
struct MotifStencil {
  std::array<std::size_t, 4> idx{};  // (i0,j0), (i1,j0), (i0,j1), (i1,j1)
  std::array<double, 4> w{};
  double fx = 0.0, fy = 0.0;
};

inline MotifStencil motif_stencil(int n1, int n2, const CrystalPoint& st) {
  const double x = st.a1 * n1;
  const double y = st.a2 * n2;
  int i0 = static_cast<int>(std::floor(x));
  int j0 = static_cast<int>(std::floor(y));
  MotifStencil s;
  s.fx = x - i0;
  s.fy = y - j0;
  i0 = ((i0 % n1) + n1) % n1;
  j0 = ((j0 % n2) + n2) % n2;
  const int i1 = (i0 + 1) % n1;
  const int j1 = (j0 + 1) % n2;
  auto at = [n2](int i, int j) { return static_cast<std::size_t>(i) * n2 + j; };
  s.idx = {at(i0, j0), at(i1, j0), at(i0, j1), at(i1, j1)};
  s.w = {(1 - s.fx) * (1 - s.fy), s.fx * (1 - s.fy), (1 - s.fx) * s.fy, s.fx * s.fy};
  return s;
}

/// u(s, t) by bilinear interpolation on the grid extended with a copy of its first row and column.
inline double periodic_sample(const MotifGrid& u, const CrystalPoint& st) {
  const MotifStencil s = motif_stencil(u.n1(), u.n2(), st);
  const auto v = u.values();
  return s.w[0] * v[s.idx[0]] + s.w[1] * v[s.idx[1]] + s.w[2] * v[s.idx[2]] + s.w[3] * v[s.idx[3]];
}

/// (du/ds, du/dt) of the bilinear interpolant.
inline std::array<double, 2> periodic_gradient(const MotifGrid& u, const MotifStencil& s) {
  const auto v = u.values();
  const double u00 = v[s.idx[0]], u10 = v[s.idx[1]], u01 = v[s.idx[2]], u11 = v[s.idx[3]];
  return {u.n1() * ((1 - s.fy) * (u10 - u00) + s.fy * (u11 - u01)),
          u.n2() * ((1 - s.fx) * (u01 - u00) + s.fx * (u11 - u10))};
}

/// Grid resolution used when none is given: clamp(round(1.5 max(|v1|,|v2|)), 16, 128).
inline int default_motif_resolution(const UnitCell& cell) {
  const double longest = std::max(norm(cell.v1), norm(cell.v2));
  return std::clamp(static_cast<int>(std::lround(1.5 * longest)), 16, 128);
}

/// Pixels entering the motif energy: those whose 4-neighbourhood lies inside the image.
struct PixelSet {
  std::vector<Vec2> x;
  std::vector<double> f;

  static PixelSet interior(const Image& img) {
    PixelSet p;
    for (int j = 1; j + 1 < img.height(); ++j)
      for (int i = 1; i + 1 < img.width(); ++i) {
        p.x.push_back({static_cast<double>(i), static_cast<double>(j)});
        p.f.push_back(img(i, j));
      }
    return p;
  }
};

struct MotifEnergyGradient {
  double energy = 0.0;
  std::vector<double> grad_u;
  std::array<double, 4> grad_v{};  // d/d(v1.x1, v1.x2, v2.x1, v2.x2)
};

namespace detail {

inline double motif_energy_impl(const PixelSet& px, const MotifGrid& u, const UnitCell& cell,
                                std::span<double> grad_u, std::array<double, 4>* grad_v) {
  const CrystalFrame frame(cell);
  if (!grad_u.empty()) std::fill(grad_u.begin(), grad_u.end(), 0.0);
  std::array<double, 4> gv{};
  double energy = 0.0;
  const auto vals = u.values();
  for (std::size_t p = 0; p < px.x.size(); ++p) {
    const CrystalPoint a = frame.to_crystal(px.x[p]);
    const MotifStencil s = motif_stencil(u.n1(), u.n2(), project_cc(a));
    const double model = s.w[0] * vals[s.idx[0]] + s.w[1] * vals[s.idx[1]] +
                         s.w[2] * vals[s.idx[2]] + s.w[3] * vals[s.idx[3]];
    const double r = px.f[p] - model;
    energy += r * r;
    if (!grad_u.empty())
      for (int k = 0; k < 4; ++k) grad_u[s.idx[k]] -= 2.0 * r * s.w[k];
    if (grad_v) {
      const auto du = periodic_gradient(u, s);
      // q = T^-T grad u; dE/dv_c = sum 2 r a_c q.
      const double q1 = frame.inv(0, 0) * du[0] + frame.inv(1, 0) * du[1];
      const double q2 = frame.inv(0, 1) * du[0] + frame.inv(1, 1) * du[1];
      gv[0] += 2.0 * r * a.a1 * q1;
      gv[1] += 2.0 * r * a.a1 * q2;
      gv[2] += 2.0 * r * a.a2 * q1;
      gv[3] += 2.0 * r * a.a2 * q2;
    }
  }
  if (grad_v) *grad_v = gv;
  return energy;
}

}  // namespace detail

/// Motif image energy over the interior pixels.
inline double motif_energy(const MotifGrid& u, const UnitCell& cell, const Image& img) {
  return detail::motif_energy_impl(PixelSet::interior(img), u, cell, {}, nullptr);
}

/// Motif image energy with its gradient in the grid values and in the lattice vectors.
inline MotifEnergyGradient motif_energy_gradient(const MotifGrid& u, const UnitCell& cell, const Image& img) {
  MotifEnergyGradient out;
  out.grad_u.assign(u.size(), 0.0);
  out.energy = detail::motif_energy_impl(PixelSet::interior(img), u, cell, out.grad_u, &out.grad_v);
  return out;
}

struct MotifFit {
  MotifGrid u;
  UnitCell cell;
  CgResult cg;
};

struct MotifOptions {
  CgOptions cg{};
  double max_v_step = 0.5;  // pixels per component and iteration in the joint fit
};

namespace detail {

// u-only objective; the sampling stencils are fixed because v is.
class MotifUObjective {
 public:
  MotifUObjective(const PixelSet& px, const UnitCell& cell, int n1, int n2) : f_(px.f) {
    const CrystalFrame frame(cell);
    st_.reserve(px.x.size());
    for (const Vec2& x : px.x) st_.push_back(motif_stencil(n1, n2, project_etoc(frame, x)));
  }

  double value(std::span<const double> u) const {
    double e = 0.0;
    for (std::size_t p = 0; p < st_.size(); ++p) {
      const double r = f_[p] - eval(st_[p], u);
      e += r * r;
    }
    return e;
  }

  double value_and_gradient(std::span<const double> u, std::span<double> g) const {
    std::fill(g.begin(), g.end(), 0.0);
    double e = 0.0;
    for (std::size_t p = 0; p < st_.size(); ++p) {
      const MotifStencil& s = st_[p];
      const double r = f_[p] - eval(s, u);
      e += r * r;
      for (int k = 0; k < 4; ++k) g[s.idx[k]] -= 2.0 * r * s.w[k];
    }
    return e;
  }

 private:
  static double eval(const MotifStencil& s, std::span<const double> u) {
    return s.w[0] * u[s.idx[0]] + s.w[1] * u[s.idx[1]] + s.w[2] * u[s.idx[2]] + s.w[3] * u[s.idx[3]];
  }
  std::vector<MotifStencil> st_;
  const std::vector<double>& f_;
};

// Joint objective in (u, y) with v = v0 + scale * y.
class MotifUVObjective {
 public:
  MotifUVObjective(const PixelSet& px, const UnitCell& v0, int n1, int n2, double scale, double max_step)
      : px_(px), v0_(v0), n1_(n1), n2_(n2), scale_(scale), max_step_(max_step) {}

  UnitCell cell_of(std::span<const double> x) const {
    const std::size_t m = static_cast<std::size_t>(n1_) * n2_;
    return {v0_.v1 + Vec2{scale_ * x[m], scale_ * x[m + 1]},
            v0_.v2 + Vec2{scale_ * x[m + 2], scale_ * x[m + 3]}};
  }

  double value(std::span<const double> x) const {
    const UnitCell c = cell_of(x);
    if (!c.non_colinear()) return std::numeric_limits<double>::infinity();
    return motif_energy_impl(px_, grid_of(x), c, {}, nullptr);
  }

  double value_and_gradient(std::span<const double> x, std::span<double> g) const {
    const std::size_t m = static_cast<std::size_t>(n1_) * n2_;
    const UnitCell c = cell_of(x);
    if (!c.non_colinear()) return std::numeric_limits<double>::infinity();
    std::array<double, 4> gv{};
    const double e = motif_energy_impl(px_, grid_of(x), c, g.subspan(0, m), &gv);
    for (int k = 0; k < 4; ++k) g[m + k] = scale_ * gv[k];
    return e;
  }

  bool admissible(std::span<const double> from, std::span<const double> to) const {
    const std::size_t m = static_cast<std::size_t>(n1_) * n2_;
    for (std::size_t k = 0; k < 4; ++k)
      if (std::abs(scale_ * (to[m + k] - from[m + k])) > max_step_) return false;
    return true;
  }

 private:
  MotifGrid grid_of(std::span<const double> x) const {
    const std::size_t m = static_cast<std::size_t>(n1_) * n2_;
    return MotifGrid(n1_, n2_, std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(m)));
  }
  const PixelSet& px_;
  UnitCell v0_;
  int n1_, n2_;
  double scale_, max_step_;
};

}  // namespace detail

/// Minimises the motif energy over u with v fixed, starting from u = 0.
inline MotifFit minimize_u(const Image& img, const UnitCell& cell, int n1, int n2, const MotifOptions& opt = {}) {
  const PixelSet px = PixelSet::interior(img);
  detail::MotifUObjective obj(px, cell, n1, n2);
  CgOptions cg = opt.cg;
  cg.restart_every = std::max(n1 * n2, 50);
  MotifFit fit;
  fit.cg = minimize_fletcher_reeves(obj, std::vector<double>(static_cast<std::size_t>(n1) * n2, 0.0), cg);
  fit.u = MotifGrid(n1, n2, fit.cg.x);
  fit.cell = cell;
  return fit;
}

/// Joint minimisation over (u, v) from (u0, cell). The v-gradient is scaled by
/// max(|v1|,|v2|)^2 / (n1 n2); steps moving a v component by more than
/// max_v_step pixels are rejected.
inline MotifFit minimize_uv(const Image& img, const UnitCell& cell, const MotifGrid& u0, const MotifOptions& opt = {}) {
  const PixelSet px = PixelSet::interior(img);
  const int n1 = u0.n1(), n2 = u0.n2();
  const double longest = std::max(norm(cell.v1), norm(cell.v2));
  const double scale = std::sqrt(longest * longest / (static_cast<double>(n1) * n2));
  detail::MotifUVObjective obj(px, cell, n1, n2, scale, opt.max_v_step);
  std::vector<double> x(u0.values().begin(), u0.values().end());
  x.resize(x.size() + 4, 0.0);
  CgOptions cg = opt.cg;
  cg.restart_every = std::max(n1 * n2, 50);
  MotifFit fit;
  fit.cg = minimize_fletcher_reeves(obj, std::move(x), cg);
  fit.cell = obj.cell_of(fit.cg.x);
  fit.cg.x.resize(static_cast<std::size_t>(n1) * n2);
  fit.u = MotifGrid(n1, n2, fit.cg.x);
  return fit;
}

/// Denoised reconstruction u(P_E->C[v](x)) on a w x h pixel grid.
inline Image reconstruct(const MotifGrid& u, const UnitCell& cell, int w, int h) {
  const CrystalFrame frame(cell);
  Image out(w, h);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i)
      out(i, j) = periodic_sample(u, project_etoc(frame, {static_cast<double>(i), static_cast<double>(j)}));
  return out;
}

}  // namespace cellmotif
