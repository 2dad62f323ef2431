#pragma once

// End-to-end motif extraction: unit cell -> motif image -> atom initialisation -> atom fit.

#include <functional>
#include <optional>
#include <string>

#include "cellmotif/atom_fit.hpp"
#include "cellmotif/errors.hpp"
#include "cellmotif/image.hpp"
#include "cellmotif/motif_image.hpp"
#include "cellmotif/period.hpp"

namespace cellmotif {

struct PipelineOptions {
  int atoms = 1;                       // l, atoms per unit cell
  std::optional<int> motif_resolution; // n1 = n2; default from the cell size
  Stage1Options stage1;
  MotifOptions motif;
  InitOptions init;
  AtomFitOptions atom_fit;
  /// Resume points: a known cell skips stage 1, a known motif (with its cell) skips stage 2.
  std::optional<UnitCell> given_cell;
  std::optional<std::pair<MotifGrid, UnitCell>> given_motif;
  std::function<void(const std::string&)> log;
};

struct PipelineResult {
  std::optional<Stage1Result> stage1;  // absent when resumed past stage 1
  UnitCell cell_stage1;                // v^1
  MotifFit motif_u;                    // u^1 (v fixed); empty when resumed past stage 2
  MotifFit motif_uv;                   // (u^2, v^2)
  Image reconstruction;                // u^2 o P_E->C[v^2]
  InitDiagnostics init_diag;
  MotifParams init;
  AtomFitResult atoms;                 // Theta^2, b^1
  Image model;                         // rho o P_EC[v^2]
  double motif_energy = 0.0;
  double atoms_energy = 0.0;
};

inline PipelineResult run_pipeline(const Image& img, const PipelineOptions& opt) {
  if (opt.atoms < 1) throw ContractViolation("run_pipeline: atoms per cell must be >= 1");
  auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };
  PipelineResult out;

  if (opt.given_motif) {
    out.cell_stage1 = opt.given_motif->second;
    out.motif_uv.u = opt.given_motif->first;
    out.motif_uv.cell = opt.given_motif->second;
    log("stage 1-2: resumed from saved motif");
  } else {
    if (opt.given_cell) {
      out.cell_stage1 = *opt.given_cell;
      log("stage 1: resumed from saved unit cell");
    } else {
      log("stage 1: unit cell extraction");
      out.stage1 = extract_unit_cell(img, opt.stage1);
      out.cell_stage1 = out.stage1->refined.cell;
    }
    const int n = opt.motif_resolution.value_or(default_motif_resolution(out.cell_stage1));
    log("stage 2: motif image " + std::to_string(n) + "x" + std::to_string(n) + ", u only");
    out.motif_u = minimize_u(img, out.cell_stage1, n, n, opt.motif);
    log("stage 2: motif image, joint (u, v)");
    out.motif_uv = minimize_uv(img, out.cell_stage1, out.motif_u.u, opt.motif);
  }
  const UnitCell& cell = out.motif_uv.cell;
  if (!cell.valid()) throw InsufficientPeriodicity("motif refinement produced a degenerate cell");
  out.motif_energy = motif_energy(out.motif_uv.u, cell, img);
  out.reconstruction = reconstruct(out.motif_uv.u, cell, img.width(), img.height());

  log("stage 3: initial atoms from the reconstruction");
  out.init = init_guess(out.reconstruction, cell, opt.atoms, opt.init, &out.init_diag);
  log("stage 3: atom fit");
  out.atoms = minimize_atoms(img, cell, out.init, opt.atom_fit);
  out.atoms_energy = out.atoms.cg.energy;
  out.model = model_image(out.atoms.params, cell, img.width(), img.height());
  return out;
}

}  // namespace cellmotif
