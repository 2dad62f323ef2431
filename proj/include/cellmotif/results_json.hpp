#pragma once

// JSON forms of cells, atom lists, label maps and pipeline results.
//
// Results schema (schema_version 1):
//   schema_version, input{path, width, height}, atoms_per_cell,
//   unit_cell{v1, v2, initial{v1, v2}, stage1{v1, v2}},
//   motif{n1, n2, energy, iterations}, atoms[{index, mu, mu_crystal, sigma, h, r}],
//   background, energies{motif_image, atoms}, diagnostics{...}, artifacts{name: file}.
// Vectors are [x1, x2] arrays in pixels; doubles round-trip exactly.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "cellmotif/analysis.hpp"
#include "cellmotif/atom_fit.hpp"
#include "cellmotif/errors.hpp"
#include "cellmotif/lattice.hpp"
#include "cellmotif/pipeline.hpp"
#include "cellmotif/synthgen.hpp"

namespace cellmotif {

using json = nlohmann::ordered_json;

inline constexpr int kResultsSchemaVersion = 1;

inline json to_json(const Vec2& v) { return json::array({v.x1, v.x2}); }

inline Vec2 vec2_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw IoError("expected a [x1, x2] array, got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>()};
}

inline json to_json(const UnitCell& c) { return json{{"v1", to_json(c.v1)}, {"v2", to_json(c.v2)}}; }

inline UnitCell cell_from_json(const json& j) { return {vec2_from_json(j.at("v1")), vec2_from_json(j.at("v2"))}; }

inline json to_json(const AtomParams& a) {
  return json{{"mu", to_json(a.mu)}, {"sigma", to_json(a.sigma)}, {"h", a.h}, {"r", a.r}};
}

inline AtomParams atom_from_json(const json& j) {
  AtomParams a;
  a.mu = vec2_from_json(j.at("mu"));
  a.sigma = vec2_from_json(j.at("sigma"));
  a.h = j.at("h").get<double>();
  a.r = j.value("r", 0.0);
  if (!a.valid()) throw IoError("invalid atom parameters: " + j.dump());
  return a;
}

/// {"atoms": [...], "background": b}, or a bare atom array (background 0).
inline MotifParams motif_params_from_json(const json& j) {
  MotifParams mp;
  const json& list = j.is_array() ? j : j.at("atoms");
  for (const auto& a : list) mp.atoms.push_back(atom_from_json(a));
  if (j.is_object()) mp.b = j.value("background", 0.0);
  return mp;
}

/// {"0": "Nb4", "1": "Nb/Co", ...}; keys are atom indices.
inline LabelMap labels_from_json(const json& j) {
  if (!j.is_object()) throw LabelError("label file must be a JSON object mapping atom index to label");
  LabelMap m;
  for (const auto& [key, value] : j.items()) {
    std::size_t pos = 0;
    unsigned long idx = 0;
    try {
      idx = std::stoul(key, &pos);
    } catch (...) {
      pos = 0;
    }
    if (pos != key.size() || key.empty()) throw LabelError("label key \"" + key + "\" is not an atom index");
    if (!value.is_string()) throw LabelError("label for atom " + key + " is not a string");
    m.assignments[idx] = value.get<std::string>();
  }
  return m;
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline const char* noise_name(NoiseKind k) {
  switch (k) {
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kPoisson: return "poisson";
    default: return "none";
  }
}

/// Ground truth written next to synthetic images.
inline json truth_json(const UnitCell& cell, const MotifParams& mp, int w, int h, const NoiseSpec& noise) {
  json atoms = json::array();
  for (const auto& a : mp.atoms) atoms.push_back(to_json(a));
  return json{{"schema_version", kResultsSchemaVersion},
              {"width", w},
              {"height", h},
              {"unit_cell", to_json(cell)},
              {"atoms", atoms},
              {"background", mp.b},
              {"noise",
               {{"kind", noise_name(noise.kind)},
                {"level", noise.level},
                {"seed", noise.seed},
                {"algorithm", std::string(kNoiseAlgorithm)}}}};
}

inline json results_json(const PipelineResult& r, const std::string& input, int w, int h, int l,
                         const std::map<std::string, std::string>& artifacts) {
  const UnitCell& cell = r.motif_uv.cell;
  const CrystalFrame frame(cell);
  json atoms = json::array();
  for (std::size_t c = 0; c < r.atoms.params.atoms.size(); ++c) {
    const auto& a = r.atoms.params.atoms[c];
    const CrystalPoint s = frame.to_crystal(a.mu);
    json aj = to_json(a);
    aj["mu_crystal"] = json::array({s.a1, s.a2});
    json out{{"index", c}};
    out.update(aj);
    atoms.push_back(out);
  }
  json unit_cell = to_json(cell);
  if (r.stage1) unit_cell["initial"] = to_json(r.stage1->initial);
  unit_cell["stage1"] = to_json(r.cell_stage1);

  json diag{{"init_maxima", r.init_diag.maxima},
            {"init_fits", r.init_diag.fits.size()},
            {"init_columns", r.init_diag.columns},
            {"motif_u_iterations", r.motif_u.cg.iterations},
            {"motif_uv_iterations", r.motif_uv.cg.iterations},
            {"atoms_iterations", r.atoms.cg.iterations}};
  if (r.stage1) {
    json dirs = json::array();
    for (std::size_t k = 0; k < r.stage1->directions.alphas.size(); ++k) {
      json d{{"alpha_rad", r.stage1->directions.alphas[k]}};
      if (const auto& c = r.stage1->searches[k].candidate) d["period_px"] = c->t;
      dirs.push_back(d);
    }
    diag["directions"] = dirs;
    diag["refinement_iterations"] = r.stage1->refined.iterations;
  }

  json files = json::object();
  for (const auto& [k, v] : artifacts) files[k] = v;
  return json{{"schema_version", kResultsSchemaVersion},
              {"input", {{"path", input}, {"width", w}, {"height", h}}},
              {"atoms_per_cell", l},
              {"unit_cell", unit_cell},
              {"motif", {{"n1", r.motif_uv.u.n1()}, {"n2", r.motif_uv.u.n2()}}},
              {"atoms", atoms},
              {"background", r.atoms.params.b},
              {"energies", {{"motif_image", r.motif_energy}, {"atoms", r.atoms_energy}}},
              {"diagnostics", diag},
              {"artifacts", files}};
}

}  // namespace cellmotif
