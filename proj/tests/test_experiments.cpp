#include <batchlens/experiments.hpp>
#include <batchlens/io.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

using namespace batchlens;
namespace fs = std::filesystem;

namespace {

struct Args {
  std::vector<std::string> store;
  std::vector<const char*> ptrs;
  explicit Args(std::initializer_list<std::string> items) : store{"batchlens"} {
    store.insert(store.end(), items.begin(), items.end());
    for (const std::string& s : store) ptrs.push_back(s.c_str());
  }
  int argc() const { return static_cast<int>(ptrs.size()); }
  const char* const* argv() const { return ptrs.data(); }
};

struct Cli {
  int code = -1;
  std::string out, err;
};

Cli run(std::initializer_list<std::string> items) {
  Args a(items);
  std::ostringstream out, err;
  Cli r;
  r.code = run_cli(a.argc(), a.argv(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("batchlens_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrajectoryRecord sample_record() {
  TrajectoryRecord r;
  r.t = 3;
  r.phi = 0.5;
  r.psi = 0.125;
  r.r = 0.1;
  r.norm_sq = 0.625;
  r.loss = 0.3;
  r.i_star = 1;
  r.batch_hit = true;
  r.delta_r = -0.25;
  r.coords = {0.5, -0.25};
  return r;
}

}  // namespace

TEST(ParseArgs, Fig2Defaults) {
  Args a({"fig2", "--out-dir=out"});
  const ParseResult p = parse_args(a.argc(), a.argv());
  EXPECT_FALSE(p.help);
  EXPECT_EQ(p.config.preset, "fig2");
  EXPECT_EQ(p.config.n, 2u);
  EXPECT_EQ(p.config.m, 2u);
  EXPECT_EQ(p.config.eta, 0.125);
  EXPECT_EQ(p.config.out_dir, "out");
}

TEST(ParseArgs, EnsembleOverrides) {
  Args a({"sgd-ensemble", "--m=8", "--n=10", "--b=1", "--seeds=100"});
  const ParseResult p = parse_args(a.argc(), a.argv());
  EXPECT_EQ(p.config.preset, "sgd-ensemble");
  EXPECT_EQ(p.config.m, 8u);
  EXPECT_EQ(p.config.n, 10u);
  EXPECT_EQ(p.config.b, 1u);
  EXPECT_EQ(p.config.seeds, 100u);
  const ordered_json echo = config_echo(p.config);
  EXPECT_EQ(echo["m"], 8);
  EXPECT_FALSE(echo.contains("out_dir"));
}

TEST(ParseArgs, UnderscoreAliases) {
  Args a({"sgd-ensemble", "--sigma_init=0.3", "--out_dir=x"});
  const ParseResult p = parse_args(a.argc(), a.argv());
  EXPECT_EQ(p.config.sigma_init, 0.3);
  EXPECT_EQ(p.config.out_dir, "x");
}

TEST(ParseArgs, UsageErrors) {
  const std::vector<std::vector<std::string>> bad = {
      {"fig2", "--eta=abc"},        {"nope"},  {"fig2", "--grid=3"},          {"sgd-ensemble", "--m=12"},
      {"sgd-ensemble", "--b=8"},    {},        {"cossim-stats", "--sizes=8,x"}, {"fig2", "--activation=tanh"},
      {"sharpness", "--samples=10"}};
  for (const auto& items : bad) {
    std::vector<const char*> argv{"batchlens"};
    for (const std::string& s : items) argv.push_back(s.c_str());
    EXPECT_THROW(parse_args(static_cast<int>(argv.size()), argv.data()), UsageError) << (items.empty() ? "" : items[0]);
  }
}

TEST(ParseArgs, BadValueNamesKeyAndExitsTwo) {
  const Cli r = run({"fig2", "--eta=abc"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--eta"), std::string::npos) << r.err;
}

TEST(ParseArgs, HelpListsPresets) {
  const Cli r = run({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  for (const PresetInfo& p : presets()) EXPECT_NE(r.out.find(p.name), std::string::npos) << p.name;
  const Cli sub = run({"sharpness", "--help"});
  EXPECT_EQ(sub.code, kExitOk);
  EXPECT_NE(sub.out.find("--samples"), std::string::npos);
}

TEST(Csv, HeaderAndEmpty) {
  std::ostringstream out;
  write_csv(out, std::span<const TrajectoryRecord>{});
  EXPECT_EQ(out.str(), "t,phi,psi,r,norm_sq,loss,i_star,batch_hit,delta_r\n");
  std::ostringstream with;
  write_csv(with, std::span<const TrajectoryRecord>{}, 3);
  EXPECT_EQ(with.str(), "t,phi,psi,r,norm_sq,loss,i_star,batch_hit,delta_r,c_1,c_2,c_3\n");
}

TEST(Csv, RowFormatting) {
  std::vector<TrajectoryRecord> recs{sample_record()};
  std::ostringstream out;
  write_csv(out, recs, 2);
  EXPECT_EQ(out.str(),
            "t,phi,psi,r,norm_sq,loss,i_star,batch_hit,delta_r,c_1,c_2\n"
            "3,0.5,0.125,0.1,0.625,0.3,2,1,-0.25,0.5,-0.25\n");
}

TEST(Csv, InfiniteRatio) {
  TrajectoryRecord r = sample_record();
  r.r = kInfiniteR;
  r.delta_r = kInfiniteR;
  std::vector<TrajectoryRecord> recs{r};
  std::ostringstream out;
  write_csv(out, recs);
  EXPECT_NE(out.str().find(",inf,"), std::string::npos) << out.str();
}

TEST(Csv, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5e-17}) {
    const std::string s = format_double(x);
    EXPECT_EQ(std::stod(s), x);
  }
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
}

TEST(Manifest, RoundTrip) {
  RunManifest m;
  m.preset = "sgd-ensemble";
  m.config["n"] = 10;
  m.config["eta"] = 0.2;
  m.seeds = {0, 1};
  RunEntry e;
  e.label = "sgd";
  e.seed = 1;
  e.limit = "-a_3";
  e.steps = 1234;
  e.converged = true;
  e.phi = 0.9999999999;
  e.psi = 1e-40;
  e.r = kInfiniteR;
  e.loss = 0.4375;
  e.norm_sq = 1.0000000001;
  m.runs.push_back(e);
  RunEntry broken;
  broken.label = "sgd";
  broken.seed = 0;
  broken.r = std::numeric_limits<double>::quiet_NaN();
  broken.error = "diverged at step 17";
  m.runs.push_back(broken);
  m.checks.push_back({"limit_is_datapoint", true, ""});
  m.checks.push_back({"norm_floor", false, "1 of 2 runs fail"});
  m.results["median"] = 0.25;

  const std::string text = dump_manifest(m);
  const RunManifest back = parse_manifest(text);
  EXPECT_TRUE(back == m);
  EXPECT_EQ(dump_manifest(back), text);
  EXPECT_FALSE(back.all_passed());
  // Stable key order, schema version first.
  EXPECT_EQ(text.find("\"schema_version\""), text.find('"'));
}

TEST(Manifest, RejectsMalformedText) {
  EXPECT_ANY_THROW(parse_manifest("{not json"));
}

TEST(Presets, Fig2WritesFilesAndPasses) {
  const fs::path dir = scratch_dir("fig2");
  const Cli r = run({"fig2", "--out-dir=" + dir.string()});
  EXPECT_EQ(r.code, kExitOk) << r.out << r.err;
  for (const char* f : {"gd.csv", "sgd_b1.csv", "summary.json", "checks.json", "timing.json"}) {
    EXPECT_TRUE(fs::exists(dir / "fig2" / f)) << f;
  }
  const std::string gd = slurp(dir / "fig2" / "gd.csv");
  EXPECT_EQ(gd.rfind("t,phi,psi,r,norm_sq,loss,i_star,batch_hit,delta_r\n", 0), 0u);
  const RunManifest m = parse_manifest(slurp(dir / "fig2" / "summary.json"));
  EXPECT_EQ(m.preset, "fig2");
  EXPECT_TRUE(m.all_passed());
  EXPECT_NE(r.out.find("PASS gd_limit_is_normalized_projection"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Presets, OutputsAreDeterministic) {
  const fs::path a = scratch_dir("det_a");
  const fs::path b = scratch_dir("det_b");
  ASSERT_EQ(run({"sgd-ensemble", "--seeds=6", "--out-dir=" + a.string()}).code, kExitOk);
  ASSERT_EQ(run({"sgd-ensemble", "--seeds=6", "--parallel=3", "--out-dir=" + b.string()}).code, kExitOk);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a / "sgd-ensemble")) {
    const std::string name = entry.path().filename().string();
    if (name == "timing.json") continue;
    EXPECT_EQ(slurp(entry.path()), slurp(b / "sgd-ensemble" / name)) << name;
    ++compared;
  }
  EXPECT_EQ(compared, 6u + 2u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Presets, ReluEnsembleSetsAsideInertInits) {
  // Seed 74 draws an init with every in-span coordinate negative.
  const fs::path dir = scratch_dir("relu");
  const Cli r = run({"sgd-ensemble", "--activation=relu", "--out-dir=" + dir.string()});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_NE(r.out.find("PASS empty_positive_set_is_stationary (1 such inits, 0 moved)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("PASS limit_in_positive_set (0 of 99 runs fail)"), std::string::npos) << r.out;
  fs::remove_all(dir);
}

TEST(Presets, FailedCheckExitsOne) {
  // The drift bound as stated is not met by these runs (see the README).
  const fs::path dir = scratch_dir("rw");
  const Cli r = run({"rw-stats", "--seeds=4", "--out-dir=" + dir.string()});
  EXPECT_EQ(r.code, kExitCheckFailed) << r.out;
  EXPECT_NE(r.out.find("FAIL drift_lower_bound"), std::string::npos) << r.out;
  fs::remove_all(dir);
}

TEST(Presets, UnwritableOutputExitsThree) {
  const fs::path dir = scratch_dir("io");
  fs::create_directories(dir);
  std::ofstream(dir / "blocker") << "x";
  const Cli r = run({"landscape-grid", "--grid=11", "--out-dir=" + (dir / "blocker").string()});
  EXPECT_EQ(r.code, kExitIo) << r.err;
  fs::remove_all(dir);
}

TEST(Presets, EnvironmentSetsDefaultOutDir) {
  const fs::path dir = scratch_dir("env");
  ::setenv("BATCHLENS_OUT", dir.string().c_str(), 1);
  Args a({"landscape-grid"});
  const ParseResult p = parse_args(a.argc(), a.argv());
  ::unsetenv("BATCHLENS_OUT");
  EXPECT_EQ(p.config.out_dir, dir.string());
  Args d({"landscape-grid"});
  EXPECT_EQ(parse_args(d.argc(), d.argv()).config.out_dir, "out");
}

TEST(Presets, LandscapeGridShape) {
  const fs::path dir = scratch_dir("grid");
  const Cli r = run({"landscape-grid", "--grid=21", "--out-dir=" + dir.string()});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  std::ifstream in(dir / "landscape-grid" / "landscape.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 21u * 21u + 1u);
  fs::remove_all(dir);
}
