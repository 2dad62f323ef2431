// Generates a small synthetic crystal, runs the full extraction and compares with the truth.
//
//   demo_roundtrip [noise_level]

#include <cstdio>
#include <cstdlib>

#include "cellmotif/cellmotif.hpp"

using namespace cellmotif;

int main(int argc, char** argv) {
  const double noise_level = argc > 1 ? std::atof(argv[1]) : 0.0;

  const UnitCell truth_cell{{18.0, 1.5}, {-2.0, 21.0}};
  MotifParams truth;
  truth.b = 0.1;
  truth.atoms.push_back({to_euclidean(truth_cell, {0.3, 0.3}), {2.0, 2.2}, 0.8, 0.1});
  truth.atoms.push_back({to_euclidean(truth_cell, {0.7, 0.65}), {1.8, 1.8}, 0.5, 0.0});

  NoiseSpec noise;
  noise.kind = noise_level > 0.0 ? NoiseKind::kGaussian : NoiseKind::kNone;
  noise.level = noise_level;
  noise.seed = 7;
  const Image img = generate(truth_cell, truth, 256, 256, noise);

  PipelineOptions opt;
  opt.atoms = 2;
  opt.log = [](const std::string& s) { std::fprintf(stderr, "  %s\n", s.c_str()); };
  try {
    const PipelineResult r = run_pipeline(img, opt);
    const UnitCell& c = r.motif_uv.cell;
    std::printf("truth v1 = (%.3f, %.3f)  v2 = (%.3f, %.3f)\n", truth_cell.v1.x1, truth_cell.v1.x2,
                truth_cell.v2.x1, truth_cell.v2.x2);
    std::printf("found v1 = (%.3f, %.3f)  v2 = (%.3f, %.3f)\n", c.v1.x1, c.v1.x2, c.v2.x1, c.v2.x2);
    for (const auto& a : r.atoms.params.atoms) {
      const CrystalPoint s = to_crystal(c, a.mu);
      std::printf("atom at crystal (%.3f, %.3f): sigma = (%.3f, %.3f) h = %.3f r = %.3f\n", s.a1, s.a2,
                  a.sigma.x1, a.sigma.x2, a.h, a.r);
    }
    std::printf("background %.4f, atom energy %.6g\n", r.atoms.params.b, r.atoms_energy);
  } catch (const ExtractionError& e) {
    std::fprintf(stderr, "extraction failed: %s\n", e.what());
    return static_cast<int>(e.code());
  }
  return 0;
}
