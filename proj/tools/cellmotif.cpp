// cellmotif command line: extract, synth, spacing, psd.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cellmotif/cellmotif.hpp"

namespace fs = std::filesystem;
using namespace cellmotif;

namespace {

Vec2 parse_vec2(const std::string& s) {
  std::stringstream ss(s);
  double a = 0, b = 0;
  char comma = 0;
  if (!(ss >> a >> comma >> b) || comma != ',' || !ss.eof())
    throw CLI::ValidationError("vector", "expected \"x1,x2\", got \"" + s + "\"");
  return {a, b};
}

// "mu1,mu2,s1,s2,h[,r]"
AtomParams parse_atom(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
  if (v.size() != 5 && v.size() != 6)
    throw CLI::ValidationError("--atom", "expected mu1,mu2,sigma1,sigma2,h[,r], got \"" + s + "\"");
  AtomParams a{{v[0], v[1]}, {v[2], v[3]}, v[4], v.size() == 6 ? v[5] : 0.0};
  if (!a.valid()) throw CLI::ValidationError("--atom", "invalid atom \"" + s + "\"");
  return a;
}

void write_trace(const std::vector<double>& trace, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "iteration,energy\n";
  for (std::size_t k = 0; k < trace.size(); ++k) out << k << ',' << trace[k] << '\n';
}

void write_atoms_csv(const MotifParams& mp, const UnitCell& cell, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "index,mu1,mu2,s,t,sigma1,sigma2,h,r\n";
  const CrystalFrame frame(cell);
  for (std::size_t c = 0; c < mp.atoms.size(); ++c) {
    const auto& a = mp.atoms[c];
    const CrystalPoint st = frame.to_crystal(a.mu);
    out << c << ',' << a.mu.x1 << ',' << a.mu.x2 << ',' << st.a1 << ',' << st.a2 << ',' << a.sigma.x1 << ','
        << a.sigma.x2 << ',' << a.h << ',' << a.r << '\n';
  }
  out << "# background," << mp.b << '\n';
}

void save_pair(const Image& img, const fs::path& dir, const std::string& stem,
               std::map<std::string, std::string>& artifacts, const std::string& key) {
  save_image(img, dir / (stem + ".png"));
  save_image(img, dir / (stem + ".raw"));
  artifacts[key + "_png"] = stem + ".png";
  artifacts[key + "_raw"] = stem + ".raw";
}

struct ExtractArgs {
  std::string input;
  int atoms = 1;
  std::string out_dir = "cellmotif_out";
  std::optional<int> motif_resolution;
  double filter_factor = 10.0;
  double psd_threshold = 2.5;
  double angle_step = 0.5;
  std::optional<double> scale;
  std::string labels;
  std::uint64_t seed = 0;
  int start_stage = 1;
  std::string resume;
  bool no_normalize = false;
  bool quiet = false;
};

SpacingResult spacing_for(const UnitCell& cell, const MotifParams& mp, const LabelMap& labels,
                          std::optional<double> scale) {
  const auto [aligned_cell, aligned] = align_to_x1(cell, mp);
  return triple_layer_spacing(aligned, labels, scale);
}

json spacing_json(const SpacingResult& s) {
  return json{{"d_upper_pm", s.d_upper}, {"d_lower_pm", s.d_lower}, {"mean_pm", s.mean}, {"spread_pm", s.spread}};
}

int run_extract(const ExtractArgs& a) {
  Image img = load_image(a.input, !a.no_normalize);
  if (a.scale) img.set_scale(a.scale);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);

  PipelineOptions opt;
  opt.atoms = a.atoms;
  opt.motif_resolution = a.motif_resolution;
  opt.stage1.angle_step_deg = a.angle_step;
  opt.stage1.psd_threshold = a.psd_threshold;
  opt.stage1.period.filter_factor = a.filter_factor;
  opt.init.seed = a.seed;
  if (!a.quiet) opt.log = [](const std::string& s) { std::cerr << "[cellmotif] " << s << '\n'; };

  if (a.start_stage > 1) {
    if (a.resume.empty()) throw CLI::ValidationError("--resume", "required when --start-stage > 1");
    const fs::path prev(a.resume);
    const json r = read_json(prev);
    if (a.start_stage == 2) {
      opt.given_cell = cell_from_json(r.at("unit_cell").at("stage1"));
    } else {
      const auto& files = r.at("artifacts");
      const Image u = load_image(prev.parent_path() / files.at("motif_raw").get<std::string>(), false);
      opt.given_motif = std::make_pair(MotifGrid(u.height(), u.width(), std::vector<double>(u.pixels().begin(), u.pixels().end())),
                                       cell_from_json(r.at("unit_cell")));
    }
  }

  const PipelineResult res = run_pipeline(img, opt);
  std::map<std::string, std::string> artifacts;
  const UnitCell& cell = res.motif_uv.cell;

  if (res.stage1) {
    std::ofstream psd(dir / "psd.csv");
    write_psd_csv(res.stage1->psd, psd);
    artifacts["psd_csv"] = "psd.csv";
    write_trace(res.stage1->refined.trace, dir / "refinement_trace.csv");
    artifacts["refinement_trace_csv"] = "refinement_trace.csv";
  }
  if (!res.motif_u.cg.trace.empty()) {
    write_trace(res.motif_u.cg.trace, dir / "motif_u_trace.csv");
    artifacts["motif_u_trace_csv"] = "motif_u_trace.csv";
    write_trace(res.motif_uv.cg.trace, dir / "motif_uv_trace.csv");
    artifacts["motif_uv_trace_csv"] = "motif_uv_trace.csv";
  }
  write_trace(res.atoms.cg.trace, dir / "atoms_trace.csv");
  artifacts["atoms_trace_csv"] = "atoms_trace.csv";
  save_pair(res.motif_uv.u.as_image(), dir, "motif", artifacts, "motif");
  save_pair(res.reconstruction, dir, "reconstruction", artifacts, "reconstruction");
  save_pair(res.model, dir, "model", artifacts, "model");
  write_atoms_csv(res.atoms.params, cell, dir / "atoms.csv");
  artifacts["atoms_csv"] = "atoms.csv";

  std::optional<SpacingResult> spacing;
  if (!a.labels.empty()) {
    spacing = spacing_for(cell, res.atoms.params, labels_from_json(read_json(a.labels)), a.scale);
    write_json(spacing_json(*spacing), dir / "spacing.json");
    artifacts["spacing_json"] = "spacing.json";
  }

  json out = results_json(res, a.input, img.width(), img.height(), a.atoms, artifacts);
  if (a.scale) out["calibration"] = {{"scale_pm_per_px", *a.scale}};
  write_json(out, dir / "results.json");

  std::printf("v1 = (%.4f, %.4f)  v2 = (%.4f, %.4f)\n", cell.v1.x1, cell.v1.x2, cell.v2.x1, cell.v2.x2);
  for (std::size_t c = 0; c < res.atoms.params.atoms.size(); ++c) {
    const auto& at = res.atoms.params.atoms[c];
    std::printf("atom %zu: mu = (%.4f, %.4f) sigma = (%.4f, %.4f) h = %.4f r = %.4f\n", c, at.mu.x1, at.mu.x2,
                at.sigma.x1, at.sigma.x2, at.h, at.r);
  }
  std::printf("background = %.6f\n", res.atoms.params.b);
  if (spacing) std::printf("triple layer spacing = %.2f +- %.2f pm\n", spacing->mean, spacing->spread);
  std::printf("results: %s\n", (dir / "results.json").string().c_str());
  return 0;
}

struct SynthArgs {
  std::string v1 = "20,2", v2 = "-3,24";
  std::vector<std::string> atom_specs;
  std::string atoms_json;
  std::optional<double> background;
  int width = 512, height = 512;
  std::string noise = "none";
  double level = 0.0;
  std::uint64_t seed = 0;
  std::string out = "synthetic.png";
  std::string truth;
};

int run_synth(const SynthArgs& a) {
  const UnitCell cell{parse_vec2(a.v1), parse_vec2(a.v2)};
  if (!cell.non_colinear()) throw CLI::ValidationError("--v1/--v2", "vectors are colinear");
  MotifParams mp;
  if (!a.atoms_json.empty()) mp = motif_params_from_json(read_json(a.atoms_json));
  for (const auto& s : a.atom_specs) mp.atoms.push_back(parse_atom(s));
  if (a.background) mp.b = *a.background;
  NoiseSpec noise;
  noise.kind = a.noise == "gaussian" ? NoiseKind::kGaussian : a.noise == "poisson" ? NoiseKind::kPoisson : NoiseKind::kNone;
  noise.level = a.level;
  noise.seed = a.seed;
  const Image img = generate(cell, mp, a.width, a.height, noise);
  save_image(img, a.out);
  const fs::path truth = a.truth.empty() ? fs::path(a.out).replace_extension(".truth.json") : fs::path(a.truth);
  write_json(truth_json(cell, mp, a.width, a.height, noise), truth);
  std::printf("wrote %s and %s\n", a.out.c_str(), truth.string().c_str());
  return 0;
}

struct SpacingArgs {
  std::vector<std::string> results;
  std::string labels;
  std::optional<double> scale;
  std::string out;
  std::string csv;
};

int run_spacing(const SpacingArgs& a) {
  const LabelMap labels = labels_from_json(read_json(a.labels));
  std::vector<double> means;
  json per_image = json::array();
  std::ostringstream csv;
  csv.precision(17);
  csv << "results,d_upper_pm,d_lower_pm,mean_pm,spread_pm\n";
  for (const auto& path : a.results) {
    const json r = read_json(path);
    std::optional<double> scale = a.scale;
    if (!scale && r.contains("calibration")) scale = r["calibration"].at("scale_pm_per_px").get<double>();
    MotifParams mp;
    for (const auto& at : r.at("atoms")) mp.atoms.push_back(atom_from_json(at));
    mp.b = r.value("background", 0.0);
    const SpacingResult s = spacing_for(cell_from_json(r.at("unit_cell")), mp, labels, scale);
    means.push_back(s.mean);
    json sj = spacing_json(s);
    sj["results"] = path;
    per_image.push_back(sj);
    csv << path << ',' << s.d_upper << ',' << s.d_lower << ',' << s.mean << ',' << s.spread << '\n';
    std::printf("%s: %.2f +- %.2f pm\n", path.c_str(), s.mean, s.spread);
  }
  const Aggregate agg = aggregate_spacings(means);
  std::printf("aggregate over %zu image(s): %.2f +- %.2f pm\n", means.size(), agg.mean, agg.std);
  if (!a.out.empty())
    write_json(json{{"schema_version", kResultsSchemaVersion},
                    {"images", per_image},
                    {"aggregate", {{"mean_pm", agg.mean}, {"std_pm", agg.std}, {"count", means.size()}}}},
               a.out);
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw IoError("cannot write " + a.csv);
    out << csv.str();
  }
  return 0;
}

struct PsdArgs {
  std::string input;
  double angle_step = 0.5;
  double threshold = 2.5;
  std::string out;
};

int run_psd(const PsdArgs& a) {
  const Image img = load_image(a.input);
  const PsdProfile psd = compute_psd(img, a.angle_step);
  if (a.out.empty()) {
    write_psd_csv(psd, std::cout);
  } else {
    std::ofstream out(a.out);
    if (!out) throw IoError("cannot write " + a.out);
    write_psd_csv(psd, out);
  }
  const DirectionSet dirs = find_peak_directions(psd, a.threshold);
  for (std::size_t k = 0; k < dirs.alphas.size(); ++k)
    std::fprintf(stderr, "peak at delta = %.2f deg (alpha = %.2f deg)\n", psd.angles_deg[dirs.peak_index[k]],
                 dirs.alphas[k] * 180.0 / std::numbers::pi);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unit cell and motif extraction from crystalline images"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "cellmotif 0.1.0");

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Extract unit cell, motif image and atoms from an image");
  extract->add_option("input", ex.input, "Input image (.png, .tif, .raw)")->required()->check(CLI::ExistingFile);
  extract->add_option("-l,--atoms", ex.atoms, "Atoms per unit cell")->required()->check(CLI::PositiveNumber);
  extract->add_option("-o,--out", ex.out_dir, "Output directory");
  extract->add_option("--motif-resolution", ex.motif_resolution, "Motif grid size n (n x n)")->check(CLI::Range(2, 1024));
  extract->add_option("--filter-factor", ex.filter_factor, "Direction energy filter factor")->check(CLI::PositiveNumber);
  extract->add_option("--psd-threshold", ex.psd_threshold, "psd peak threshold in standard deviations")
      ->check(CLI::PositiveNumber);
  extract->add_option("--angle-step", ex.angle_step, "Projection angle step in degrees")->check(CLI::Range(0.01, 90.0));
  extract->add_option("--scale-pm-per-px", ex.scale, "Pixel calibration in pm/px")->check(CLI::PositiveNumber);
  extract->add_option("--labels", ex.labels, "Label JSON (atom index -> label) for the spacing report")
      ->check(CLI::ExistingFile);
  extract->add_option("--seed", ex.seed, "Seed for randomized k-means restarts");
  extract->add_option("--start-stage", ex.start_stage, "1: full run, 2: reuse stage-1 cell, 3: reuse motif")
      ->check(CLI::Range(1, 3));
  extract->add_option("--resume", ex.resume, "results.json of an earlier run")->check(CLI::ExistingFile);
  extract->add_flag("--no-normalize", ex.no_normalize, "Keep raw intensities instead of mapping to [0, 1]");
  extract->add_flag("-q,--quiet", ex.quiet, "No progress messages");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic crystal image and its ground truth");
  synth->add_option("--v1", sy.v1, "First lattice vector \"x1,x2\"");
  synth->add_option("--v2", sy.v2, "Second lattice vector \"x1,x2\"");
  synth->add_option("--atom", sy.atom_specs, "Atom \"mu1,mu2,sigma1,sigma2,h[,r]\" (repeatable)");
  synth->add_option("--atoms-json", sy.atoms_json, "Atom list JSON")->check(CLI::ExistingFile);
  synth->add_option("--background", sy.background, "Background intensity (overrides the atom file)");
  synth->add_option("--width", sy.width, "Width in pixels")->check(CLI::Range(1, 1 << 15));
  synth->add_option("--height", sy.height, "Height in pixels")->check(CLI::Range(1, 1 << 15));
  synth->add_option("--noise", sy.noise, "none | gaussian | poisson")
      ->check(CLI::IsMember({"none", "gaussian", "poisson"}));
  synth->add_option("--noise-level", sy.level, "Gaussian: std / range; Poisson: counts per unit")
      ->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sy.seed, "Noise seed");
  synth->add_option("-o,--out", sy.out, "Output image (.png, .tif, .raw)");
  synth->add_option("--truth", sy.truth, "Ground-truth JSON path (default: output path with extension .truth.json)");

  SpacingArgs sp;
  auto* spacing = app.add_subcommand("spacing", "Triple-layer spacing report over results files");
  spacing->add_option("results", sp.results, "results.json files")->required()->check(CLI::ExistingFile);
  spacing->add_option("--labels", sp.labels, "Label JSON (atom index -> label)")->required()->check(CLI::ExistingFile);
  spacing->add_option("--scale-pm-per-px", sp.scale, "Pixel calibration in pm/px")->check(CLI::PositiveNumber);
  spacing->add_option("-o,--out", sp.out, "Report JSON");
  spacing->add_option("--csv", sp.csv, "Report CSV");

  PsdArgs ps;
  auto* psd = app.add_subcommand("psd", "Projective standard deviation profile of an image");
  psd->add_option("input", ps.input, "Input image")->required()->check(CLI::ExistingFile);
  psd->add_option("--angle-step", ps.angle_step, "Angle step in degrees")->check(CLI::Range(0.01, 90.0));
  psd->add_option("--threshold", ps.threshold, "Peak threshold in standard deviations")->check(CLI::PositiveNumber);
  psd->add_option("-o,--out", ps.out, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (*extract) return run_extract(ex);
    if (*synth) return run_synth(sy);
    if (*spacing) return run_spacing(sp);
    if (*psd) return run_psd(ps);
  } catch (const ExtractionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.code());
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kUsage);
  } catch (const json::exception& e) {
    std::fprintf(stderr, "error: malformed JSON input: %s\n", e.what());
    return static_cast<int>(ExitCode::kIoError);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(ExitCode::kFailure);
  }
  return static_cast<int>(ExitCode::kUsage);
}
