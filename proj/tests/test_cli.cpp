#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "test_support.hpp"

using namespace cellmotif;
using namespace cmtest;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "cellmotif_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(CELLMOTIF_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Reference image written once through the library, extracted once through the CLI.
const fs::path& reference_input() {
  static const fs::path p = [] {
    const fs::path out = work_dir() / "ref.raw";
    save_image(generate(reference_cell(), reference_motif(), 160, 160), out);
    return out;
  }();
  return p;
}

const fs::path& reference_run() {
  static const fs::path dir = [] {
    const fs::path d = work_dir() / "run_a";
    const int code = run("extract " + reference_input().string() + " -l 3 -q -o " + d.string());
    EXPECT_EQ(code, 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("extract"), 2);
  EXPECT_EQ(run("extract " + reference_input().string() + " -l 0"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, ConstantImageIsInsufficientPeriodicity) {
  const fs::path p = work_dir() / "constant.raw";
  save_image(Image(64, 64, 0.5), p);
  EXPECT_EQ(run("extract " + p.string() + " -l 1 -q -o " + (work_dir() / "c").string()), 3);
}

TEST(Cli, FewCellsIsImageTooSmall) {
  const fs::path p = work_dir() / "small.raw";
  MotifParams mp;
  mp.atoms.push_back({{20.0, 20.0}, {4.0, 4.0}, 1.0, 0.0});
  save_image(generate({{40.0, 0.0}, {0.0, 40.0}}, mp, 64, 64), p);
  EXPECT_EQ(run("extract " + p.string() + " -l 1 -q -o " + (work_dir() / "s").string()), 4);
}

TEST(Cli, TooManyAtomsIsUnderdetermined) {
  EXPECT_EQ(run("extract " + reference_input().string() + " -l 6 -q -o " + (work_dir() / "u").string()), 5);
}

TEST(Cli, MissingInputIsUsageAndBadFileIsIoError) {
  EXPECT_EQ(run("extract " + (work_dir() / "nope.png").string() + " -l 1"), 2);
  const fs::path bad = work_dir() / "bad.raw";
  write_text(bad, "xyz");
  EXPECT_EQ(run("extract " + bad.string() + " -l 1 -q -o " + (work_dir() / "b").string()), 8);
}

TEST(Cli, ResultsReferenceExistingArtifacts) {
  const fs::path dir = reference_run();
  const json r = json::parse(slurp(dir / "results.json"));
  EXPECT_EQ(r.at("schema_version").get<int>(), kResultsSchemaVersion);
  EXPECT_EQ(r.at("atoms").size(), 3u);
  for (const auto& [key, name] : r.at("artifacts").items()) EXPECT_TRUE(fs::exists(dir / name.get<std::string>())) << key;
  const UnitCell found = cell_from_json(r.at("unit_cell"));
  const LatticeMatch m = match_lattice(reference_cell(), found);
  EXPECT_TRUE(m.equivalent);
  EXPECT_LT(m.max_error, 0.1);
}

TEST(Cli, ResultsJsonIsDeterministicAndLossless) {
  const fs::path a = reference_run();
  const fs::path b = work_dir() / "run_b";
  ASSERT_EQ(run("extract " + reference_input().string() + " -l 3 -q -o " + b.string()), 0);
  EXPECT_EQ(slurp(a / "results.json"), slurp(b / "results.json"));
  const json r = json::parse(slurp(a / "results.json"));
  const UnitCell c = cell_from_json(r.at("unit_cell"));
  // 17 significant digits: re-serialising the parsed value reproduces it bit for bit.
  EXPECT_EQ(json::parse(json(c.v1.x1).dump()).get<double>(), c.v1.x1);
}

TEST(Cli, SynthWritesImageAndTruth) {
  const fs::path img = work_dir() / "synth.png";
  ASSERT_EQ(run("synth --v1 18,1 --v2 -2,21 --atom 5,6,2,2,1 --atom 12,15,1.5,1.5,0.5,0.1 --width 96 --height 80 "
                "--noise gaussian --noise-level 0.05 --seed 4 -o " + img.string()),
            0);
  const Image back = load_image(img);
  EXPECT_EQ(back.width(), 96);
  EXPECT_EQ(back.height(), 80);
  const json t = json::parse(slurp(fs::path(img).replace_extension(".truth.json")));
  EXPECT_EQ(t.at("atoms").size(), 2u);
  EXPECT_EQ(run("synth --v1 10,0 --v2 20,0 --atom 5,6,2,2,1 -o " + (work_dir() / "x.png").string()), 2);
}

TEST(Cli, SpacingAggregatesNineImageSeries) {
  const std::vector<double> means{32.6, 34.55, 34, 31.22, 31.46, 32.66, 32.65, 27.51, 30.39};
  const double scale = 10.0;
  std::string files;
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double gap = means[k] / scale;
    json r;
    r["schema_version"] = kResultsSchemaVersion;
    r["unit_cell"] = {{"v1", {20.0, 0.0}}, {"v2", {0.0, 30.0}}};
    r["atoms"] = json::array();
    for (double y : {2.0, 2.0 + gap, 2.0 + 2.0 * gap})
      r["atoms"].push_back({{"mu", {5.0, y}}, {"sigma", {1.5, 1.5}}, {"h", 1.0}, {"r", 0.0}});
    const fs::path p = work_dir() / ("series_" + std::to_string(k) + ".json");
    write_text(p, r.dump());
    files += " " + p.string();
  }
  const fs::path labels = work_dir() / "labels.json";
  write_text(labels, R"({"0": "Nb4", "1": "Nb/Co", "2": "Nb5"})");
  const fs::path report = work_dir() / "report.json";
  ASSERT_EQ(run("spacing" + files + " --labels " + labels.string() + " --scale-pm-per-px 10 -o " + report.string()), 0);
  const json rep = json::parse(slurp(report));
  EXPECT_NEAR(rep["aggregate"]["mean_pm"].get<double>(), 31.89, 0.005);
  EXPECT_NEAR(rep["aggregate"]["std_pm"].get<double>(), 1.98, 0.005);

  // A single file aggregates to its own mean with zero spread.
  const fs::path one = work_dir() / "one.json";
  ASSERT_EQ(run("spacing " + (work_dir() / "series_0.json").string() + " --labels " + labels.string() +
                " --scale-pm-per-px 10 -o " + one.string()),
            0);
  const json single = json::parse(slurp(one));
  EXPECT_NEAR(single["aggregate"]["mean_pm"].get<double>(), 32.6, 1e-9);
  EXPECT_EQ(single["aggregate"]["std_pm"].get<double>(), 0.0);

  // Missing label and missing calibration.
  const fs::path partial = work_dir() / "partial.json";
  write_text(partial, R"({"0": "Nb4", "1": "Nb/Co"})");
  EXPECT_EQ(run("spacing" + files + " --labels " + partial.string() + " --scale-pm-per-px 10"), 7);
  EXPECT_EQ(run("spacing" + files + " --labels " + labels.string()), 2);
}

TEST(Cli, PsdWritesProfile) {
  const fs::path out = work_dir() / "psd.csv";
  ASSERT_EQ(run("psd " + reference_input().string() + " -o " + out.string()), 0);
  std::ifstream in(out);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 361);  // header + 360 angles
}
