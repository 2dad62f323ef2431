// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "test_support.hpp"

using namespace cellmotif;
using namespace cmtest;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared end-to-end runs on the 512 x 512 reference lattice.

struct EndToEnd {
  Image clean;
  Image input;
  PipelineResult result;
  double stage12_seconds = 0.0;
  double total_seconds = 0.0;
};

EndToEnd run_reference(double noise) {
  EndToEnd e;
  e.clean = generate(reference_cell(), reference_motif(), 512, 512);
  e.input = noise > 0.0 ? add_noise(e.clean, {NoiseKind::kGaussian, noise, 2024}) : e.clean;
  PipelineOptions opt;
  opt.atoms = 3;
  const auto t0 = Clock::now();
  opt.log = [&](const std::string& s) {
    if (s.rfind("stage 3: initial", 0) == 0) e.stage12_seconds = seconds_since(t0);
  };
  e.result = run_pipeline(e.input, opt);
  e.total_seconds = seconds_since(t0);
  return e;
}

const EndToEnd& noiseless() {
  static const EndToEnd e = run_reference(0.0);
  return e;
}
const EndToEnd& noisy() {
  static const EndToEnd e = run_reference(0.05);
  return e;
}

// ---------------------------------------------------------------------------

Verdict aggregation() {
  Verdict v;
  const std::vector<double> means{32.6, 34.55, 34, 31.22, 31.46, 32.66, 32.65, 27.51, 30.39};
  const auto t0 = Clock::now();
  const Aggregate a = aggregate_spacings(means);
  const double dt = seconds_since(t0);
  v.check(std::lround(a.mean * 100) == 3189, fmt("mean %.4f", a.mean));
  v.check(std::lround(a.std * 100) == 198, fmt("std %.4f", a.std));
  v.check(dt < 1e-3, fmt("runtime %.6f s", dt));
  v.detail = v.pass ? fmt("%.2f +- %.2f pm in %.1e s", a.mean, a.std, dt) : v.detail;
  return v;
}

Verdict unit_cell_round_trip() {
  Verdict v;
  double errs[2];
  int k = 0;
  for (const EndToEnd* e : {&noiseless(), &noisy()}) {
    const LatticeMatch m = match_lattice(reference_cell(), e->result.motif_uv.cell);
    const double tol = k == 0 ? 0.1 : 0.3;
    v.check(m.equivalent, k == 0 ? "noiseless basis not lattice-equivalent" : "noisy basis not lattice-equivalent");
    v.check(m.max_error <= tol, fmt("max component error %.4f > %.1f px", m.max_error, tol));
    v.check(e->stage12_seconds < 60.0, fmt("stage 1+2 runtime %.1f s", e->stage12_seconds));
    errs[k++] = m.max_error;
  }
  if (v.pass)
    v.detail = fmt("max error %.2e px (noiseless), %.2e px (5%% noise); ", errs[0], errs[1]) +
               fmt("stage 1+2 %.1f s / %.1f s", noiseless().stage12_seconds, noisy().stage12_seconds);
  return v;
}

Verdict motif_round_trip() {
  Verdict v;
  const MotifParams truth = reference_motif();
  const UnitCell cell = reference_cell();
  const auto [lo, hi] = noiseless().clean.min_max();
  double dmu = 0, dsig = 0, dh = 0, dr = 0, dmu_noisy = 0;
  {
    const MotifParams& found = noiseless().result.atoms.params;
    v.check(found.atoms.size() == 3, "atom count");
    for (const auto& [t, f] : match_atoms(truth, found, cell)) {
      const AtomParams& a = found.atoms[f];
      const AtomParams& b = truth.atoms[t];
      dmu = std::max(dmu, norm(lattice_delta(cell, a.mu, b.mu)));
      dsig = std::max({dsig, std::abs(a.sigma.x1 / b.sigma.x1 - 1), std::abs(a.sigma.x2 / b.sigma.x2 - 1)});
      dh = std::max(dh, std::abs(a.h / b.h - 1));
      dr = std::max(dr, std::abs(a.r - b.r));
    }
    const double db = std::abs(found.b - truth.b) / (hi - lo);
    v.check(dmu <= 0.05, fmt("mu error %.4f px", dmu));
    v.check(dsig <= 0.02, fmt("sigma error %.4f", dsig));
    v.check(dh <= 0.02, fmt("h error %.4f", dh));
    v.check(dr <= 0.02, fmt("r error %.4f", dr));
    v.check(db <= 1e-3, fmt("b error %.2e of range", db));
    v.check(noiseless().total_seconds < 120.0, fmt("runtime %.1f s", noiseless().total_seconds));
  }
  {
    const MotifParams& found = noisy().result.atoms.params;
    for (const auto& [t, f] : match_atoms(truth, found, cell))
      dmu_noisy = std::max(dmu_noisy, norm(lattice_delta(cell, found.atoms[f].mu, truth.atoms[t].mu)));
    v.check(dmu_noisy <= 0.1, fmt("noisy mu error %.4f px", dmu_noisy));
    v.check(noisy().total_seconds < 120.0, fmt("noisy runtime %.1f s", noisy().total_seconds));
  }
  if (v.pass)
    v.detail = fmt("mu %.1e px, sigma %.1e, h %.1e rel; ", dmu, dsig, dh) + fmt("r %.1e; noisy mu %.3f px; ", dr, dmu_noisy) +
               fmt("runtime %.1f s / %.1f s", noiseless().total_seconds, noisy().total_seconds);
  return v;
}

Verdict denoising() {
  Verdict v;
  const EndToEnd& e = noisy();
  const double rec = mse(e.result.reconstruction, e.clean);
  const double raw = mse(e.input, e.clean);
  v.check(rec <= raw / 5.0, fmt("MSE ratio %.2f < 5", raw / rec));
  if (v.pass) v.detail = fmt("MSE %.2e vs noisy %.2e (ratio %.1f)", rec, raw, raw / rec);
  return v;
}

// Max over components of |analytic - central difference| / max |analytic|.
Verdict gradients() {
  Verdict v;
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double worst_u = 0.0, worst_v = 0.0, worst_atoms = 0.0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    // Motif image energy: gradients in u and in v.
    const UnitCell cell{{9.0 + 3 * uni(rng), 2 * uni(rng) - 1}, {2 * uni(rng) - 1, 9.0 + 3 * uni(rng)}};
    MotifGrid u(8, 8);
    for (double& x : u.values()) x = uni(rng);
    const Image img = random_image(32, 32, 1000 + trial);
    const MotifEnergyGradient g = motif_energy_gradient(u, cell, img);
    double gu = 0.0, eu = 0.0;
    for (double x : g.grad_u) gu = std::max(gu, std::abs(x));
    for (std::size_t k = 0; k < u.size(); ++k) {
      MotifGrid up = u, dn = u;
      up.values()[k] += 1e-4;
      dn.values()[k] -= 1e-4;
      const double fd = (motif_energy(up, cell, img) - motif_energy(dn, cell, img)) / 2e-4;
      eu = std::max(eu, std::abs(fd - g.grad_u[k]));
    }
    worst_u = std::max(worst_u, eu / gu);
    double gv = 0.0, ev = 0.0;
    for (double x : g.grad_v) gv = std::max(gv, std::abs(x));
    for (int c = 0; c < 4; ++c) {
      UnitCell up = cell, dn = cell;
      double& pu = c == 0 ? up.v1.x1 : c == 1 ? up.v1.x2 : c == 2 ? up.v2.x1 : up.v2.x2;
      double& pd = c == 0 ? dn.v1.x1 : c == 1 ? dn.v1.x2 : c == 2 ? dn.v2.x1 : dn.v2.x2;
      pu += 1e-6;
      pd -= 1e-6;
      const double fd = (motif_energy(u, up, img) - motif_energy(u, dn, img)) / 2e-6;
      ev = std::max(ev, std::abs(fd - g.grad_v[c]));
    }
    worst_v = std::max(worst_v, ev / gv);

    // Atom-model energy: gradient in every atom parameter and b.
    const UnitCell acell{{12.0 + 3 * uni(rng), uni(rng)}, {-uni(rng), 12.0 + 3 * uni(rng)}};
    MotifParams mp;
    mp.b = 0.1 * uni(rng);
    for (int a = 0; a < 2; ++a)
      mp.atoms.push_back({to_euclidean(acell, {uni(rng), uni(rng)}),
                          {1.2 + 1.5 * uni(rng), 1.2 + 1.5 * uni(rng)},
                          0.3 + 0.7 * uni(rng),
                          uni(rng) - 0.5});
    const Image aimg = random_image(32, 32, 2000 + trial);
    AtomsGradient ag;
    atoms_energy_gradient(mp, acell, aimg, ag);
    std::vector<double> analytic, numeric;
    const double h = 1e-5;
    for (std::size_t a = 0; a < 2; ++a)
      for (int c = 0; c < 6; ++c) {
        MotifParams up = mp, dn = mp;
        auto field = [c](AtomParams& p) -> double& {
          switch (c) {
            case 0: return p.mu.x1;
            case 1: return p.mu.x2;
            case 2: return p.sigma.x1;
            case 3: return p.sigma.x2;
            case 4: return p.h;
            default: return p.r;
          }
        };
        field(up.atoms[a]) += h;
        field(dn.atoms[a]) -= h;
        analytic.push_back(ag.atoms[a][static_cast<std::size_t>(c)]);
        numeric.push_back((atoms_energy(up, acell, aimg) - atoms_energy(dn, acell, aimg)) / (2 * h));
      }
    MotifParams up = mp, dn = mp;
    up.b += h;
    dn.b -= h;
    analytic.push_back(ag.b);
    numeric.push_back((atoms_energy(up, acell, aimg) - atoms_energy(dn, acell, aimg)) / (2 * h));
    double ga = 0.0, ea = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      ga = std::max(ga, std::abs(analytic[k]));
      ea = std::max(ea, std::abs(analytic[k] - numeric[k]));
    }
    worst_atoms = std::max(worst_atoms, ea / ga);
  }
  v.check(worst_u <= 1e-4, fmt("motif u-gradient rel error %.2e", worst_u));
  v.check(worst_v <= 1e-4, fmt("motif v-gradient rel error %.2e", worst_v));
  v.check(worst_atoms <= 1e-4, fmt("atom gradient rel error %.2e", worst_atoms));
  if (v.pass)
    v.detail = fmt("%.0f trials each; worst rel error u %.1e, v %.1e, ", trials, worst_u, worst_v) +
               fmt("atoms %.1e", worst_atoms);
  return v;
}

bool non_increasing(const std::vector<double>& t) {
  for (std::size_t k = 1; k < t.size(); ++k)
    if (t[k] > t[k - 1]) return false;
  return true;
}

Verdict monotonicity() {
  Verdict v;
  std::size_t steps = 0;
  for (const EndToEnd* e : {&noiseless(), &noisy()}) {
    const PipelineResult& r = e->result;
    v.check(r.stage1 && non_increasing(r.stage1->refined.trace) && r.stage1->refined.increases == 0,
            "refinement residual increased");
    v.check(non_increasing(r.motif_u.cg.trace) && r.motif_u.cg.increases == 0, "motif u energy increased");
    v.check(non_increasing(r.motif_uv.cg.trace) && r.motif_uv.cg.increases == 0, "motif uv energy increased");
    v.check(non_increasing(r.atoms.cg.trace) && r.atoms.cg.increases == 0, "atom energy increased");
    steps += r.stage1->refined.trace.size() + r.motif_u.cg.trace.size() + r.motif_uv.cg.trace.size() +
             r.atoms.cg.trace.size();
  }
  if (v.pass) v.detail = fmt("%.0f logged iterates, none increasing", static_cast<double>(steps));
  return v;
}

Verdict oracle_equivalence() {
  Verdict v;
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double radon = 0.0, sqd = 0.0, atoms = 0.0;
  for (int n : {16, 20, 24, 28, 32}) {
    const Image img = random_image(n, n, static_cast<std::uint64_t>(n) * 7);
    const double R = n / 2.0 - 1.0;
    for (int k = 0; k < 50; ++k) {
      const double d = 180.0 * uni(rng), p = (2 * uni(rng) - 1) * (R - 0.01);
      radon = std::max(radon, std::abs(radon_line(img, d, p) - radon_oracle(img, d, p)));
    }
    for (int k = 0; k < 20; ++k) {
      const double lo = n / 4.0, hi = 3.0 * n / 4.0 - 1.0;
      const Domain dom{lo, hi, lo, hi};
      const Vec2 shift{(2 * uni(rng) - 1) * (lo - 0.01), (2 * uni(rng) - 1) * (lo - 0.01)};
      sqd = std::max(sqd, std::abs(integrate_sq_diff(img, dom, shift) - naive_sq_diff(img, dom, shift)));
    }
    for (int k = 0; k < 5; ++k) {
      const UnitCell cell{{7.0 + 6 * uni(rng), uni(rng)}, {-uni(rng), 7.0 + 6 * uni(rng)}};
      MotifParams mp;
      mp.b = 0.1 * uni(rng);
      for (int a = 0; a < 3; ++a)
        mp.atoms.push_back({to_euclidean(cell, {uni(rng), uni(rng)}), {1 + uni(rng), 1 + uni(rng)}, uni(rng),
                            0.8 * uni(rng) - 0.4});
      double ref = 0.0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) ref += std::pow(img(i, j) - brute_model(mp, cell, {double(i), double(j)}), 2);
      atoms = std::max(atoms, std::abs(atoms_energy(mp, cell, img) - ref));
    }
  }
  v.check(radon <= 1e-6, fmt("radon_line deviation %.2e", radon));
  v.check(sqd <= 1e-6, fmt("integrate_sq_diff deviation %.2e", sqd));
  v.check(atoms <= 1e-6, fmt("atoms_energy deviation %.2e", atoms));
  if (v.pass) v.detail = fmt("max abs deviation radon %.1e, sq-diff %.1e, atoms %.1e", radon, sqd, atoms);
  return v;
}

Verdict geometry() {
  Verdict v;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-500, 500);
  std::uniform_int_distribution<int> z(-25, 25);
  const UnitCell cell = reference_cell();
  const CrystalFrame frame(cell);
  double idem = 0.0, shift = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vec2 x{u(rng), u(rng)};
    const Vec2 p = project_ec(frame, x);
    idem = std::max(idem, norm_inf(project_ec(frame, p) - p));
    const CrystalPoint c = project_cc(frame.to_crystal(x));
    const CrystalPoint cc = project_cc(c);
    idem = std::max({idem, std::abs(cc.a1 - c.a1), std::abs(cc.a2 - c.a2)});
    const Vec2 moved = x + static_cast<double>(z(rng)) * cell.v1 + static_cast<double>(z(rng)) * cell.v2;
    shift = std::max(shift, norm_inf(lattice_delta(cell, project_ec(frame, moved), p)));
  }
  MotifGrid g(12, 9);
  std::uniform_real_distribution<double> w(0.0, 1.0);
  for (double& x : g.values()) x = w(rng);
  double seam = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double t = w(rng);
    seam = std::max(seam, std::abs(periodic_sample(g, {1.0 - 1e-10, t}) - periodic_sample(g, {0.0, t})));
    seam = std::max(seam, std::abs(periodic_sample(g, {t, 1.0 - 1e-10}) - periodic_sample(g, {t, 0.0})));
  }
  v.check(idem <= 1e-9, fmt("idempotence deviation %.2e", idem));
  v.check(shift <= 1e-9, fmt("lattice-shift deviation %.2e", shift));
  v.check(seam <= 1e-6, fmt("seam jump %.2e", seam));
  if (v.pass) v.detail = fmt("idempotence %.1e, shift invariance %.1e, seam %.1e", idem, shift, seam);
  return v;
}

Verdict failure_modes() {
  Verdict v;
  auto code_of = [](const std::function<void()>& fn) -> int {
    try {
      fn();
    } catch (const ExtractionError& e) {
      return static_cast<int>(e.code());
    } catch (...) {
      return -1;
    }
    return 0;
  };
  PipelineOptions one;
  one.atoms = 1;
  const int constant = code_of([&] { run_pipeline(Image(128, 128, 0.5), one); });
  MotifParams big;
  big.atoms.push_back({{20.0, 20.0}, {4.0, 4.0}, 1.0, 0.0});
  const Image small = generate({{40.0, 0.0}, {0.0, 40.0}}, big, 64, 64);
  const int too_small = code_of([&] { run_pipeline(small, one); });
  MotifParams single;
  single.atoms.push_back({{8.0, 8.0}, {2.0, 2.0}, 1.0, 0.0});
  const Image lattice = generate({{16.0, 0.0}, {0.0, 16.0}}, single, 128, 128);
  PipelineOptions three;
  three.atoms = 3;
  const int under = code_of([&] { run_pipeline(lattice, three); });
  v.check(constant == static_cast<int>(ExitCode::kInsufficientPeriodicity), fmt("constant image -> %.0f", constant));
  v.check(too_small == static_cast<int>(ExitCode::kImageTooSmall), fmt("sub-4-cell image -> %.0f", too_small));
  v.check(under == static_cast<int>(ExitCode::kMotifUnderdetermined), fmt("too many atoms -> %.0f", under));
  v.check(constant != too_small && too_small != under && constant != under, "exit codes not distinct");
  if (v.pass)
    v.detail = fmt("insufficient periodicity %.0f, image too small %.0f, motif underdetermined %.0f", constant,
                   too_small, under);
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"aggregation of nine spacings", aggregation},
      {"unit cell round trip", unit_cell_round_trip},
      {"motif round trip", motif_round_trip},
      {"denoising", denoising},
      {"gradient correctness", gradients},
      {"descent monotonicity", monotonicity},
      {"oracle equivalence", oracle_equivalence},
      {"geometry properties", geometry},
      {"failure modes", failure_modes},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %zu (%s): %s - %s\n", k + 1, criteria[k].first, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
