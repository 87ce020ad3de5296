#ifndef BATCHLENS_EXPERIMENTS_HPP
#define BATCHLENS_EXPERIMENTS_HPP

// Command-line presets. Each preset runs a fixed experiment, writes CSV and
// JSON into <out_dir>/<preset>/, and reports named boolean checks.

#include <batchlens/activation.hpp>
#include <batchlens/audit.hpp>
#include <batchlens/basis_data.hpp>
#include <batchlens/csgd.hpp>
#include <batchlens/dynamics.hpp>
#include <batchlens/ensembles.hpp>
#include <batchlens/io.hpp>
#include <batchlens/landscape.hpp>
#include <batchlens/observables.hpp>
#include <batchlens/parallel.hpp>
#include <batchlens/walk_stats.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace batchlens {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitIo = 3 };

class UsageError : public Error {
 public:
  using Error::Error;
};

struct ExperimentConfig {
  std::string preset;
  std::size_t n = 2;
  std::size_t m = 2;
  std::size_t b = 1;
  double eta = 0.125;
  std::string strategy = "uniform";
  std::string activation = "linear";
  std::size_t seeds = 1;
  std::size_t horizon = 200000;
  double sigma_init = 0.5;
  std::string out_dir = "out";
  std::size_t grid = 101;
  std::size_t stride = 1;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
  bool dump_coords = false;
  std::size_t samples = 100000;
  double h = 1e-4;
  std::string sizes = "64,256,1024";
  int schema_version = kSchemaVersion;
  std::vector<std::string> keys;  // keys accepted by the preset, in echo order
};

struct PresetInfo {
  std::string name;
  std::string description;
  std::vector<std::string> keys;
  std::function<void(ExperimentConfig&)> defaults;
};

inline std::string default_out_dir() {
  const char* env = std::getenv("BATCHLENS_OUT");
  return env && *env ? std::string(env) : std::string("out");
}

inline const std::vector<PresetInfo>& presets() {
  static const std::vector<PresetInfo> table = {
      {"fig2", "GD and SGD (b=1) from w0=(0.1,0.08) on the 2-d standard basis",
       {"eta", "activation", "seed", "horizon", "stride", "dump-coords", "out-dir"},
       [](ExperimentConfig& c) {
         c.n = c.m = 2;
         c.eta = 0.125;
       }},
      {"landscape-grid", "relu loss on a grid over [0,1.2]^2 with m=n=2", {"grid", "out-dir"},
       [](ExperimentConfig& c) {
         c.n = c.m = 2;
         c.grid = 101;
       }},
      {"sgd-ensemble", "seed ensemble of minibatch SGD runs",
       {"n", "m", "b", "eta", "strategy", "activation", "seeds", "horizon", "sigma-init", "seed", "parallel", "stride",
        "dump-coords", "out-dir"},
       [](ExperimentConfig& c) {
         c.n = 10;
         c.m = 8;
         c.b = 1;
         c.eta = 0.2;
         c.seeds = 100;
       }},
      {"rw-stats", "increment statistics of the log-ratio process",
       {"n", "m", "b", "eta", "seeds", "horizon", "sigma-init", "seed", "parallel", "out-dir"},
       [](ExperimentConfig& c) {
         c.n = 10;
         c.m = 8;
         c.b = 1;
         c.eta = 0.2;
         c.seeds = 100;
       }},
      {"csgd-scan", "cyclic SGD with m=n=2: potential scan and convergence runs",
       {"grid", "eta", "seeds", "horizon", "seed", "parallel", "out-dir"},
       [](ExperimentConfig& c) {
         c.n = c.m = 2;
         c.grid = 256;
         c.eta = 0.25;
         c.seeds = 50;
       }},
      {"cossim-stats", "cosine similarity of GD and SGD limits with m=n",
       {"sizes", "b", "eta", "seeds", "horizon", "sigma-init", "seed", "parallel", "out-dir"},
       [](ExperimentConfig& c) {
         c.b = 1;
         c.eta = 0.2;
         c.seeds = 50;
         c.horizon = 20000000;
       }},
      {"sharpness", "curvature at the GD and SGD minima (m=n=2 and m=8, n=10, |S|=4)",
       {"samples", "fd-step", "seed", "parallel", "out-dir"}, [](ExperimentConfig&) {}},
  };
  return table;
}

inline const PresetInfo& find_preset(const std::string& name) {
  for (const PresetInfo& p : presets()) {
    if (p.name == name) return p;
  }
  throw UsageError("unknown preset '" + name + "'");
}

inline std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t value = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size() || value == 0) {
      throw UsageError("--sizes: '" + text + "' is not a comma-separated list of positive integers");
    }
    out.push_back(value);
  }
  if (out.empty()) throw UsageError("--sizes: empty list");
  return out;
}

inline BatchStrategy parse_strategy(const std::string& name, std::size_t b) {
  if (name == "full") return BatchStrategy::full();
  if (name == "uniform") return BatchStrategy::uniform(b);
  if (name == "cyclic") return BatchStrategy::cyclic();
  throw UsageError("--strategy: expected full, uniform or cyclic, got '" + name + "'");
}

namespace detail {

inline void add_option(CLI::App& app, const std::string& key, ExperimentConfig& c) {
  if (key == "n") app.add_option("--n", c.n, "ambient dimension");
  else if (key == "m") app.add_option("--m", c.m, "number of training points");
  else if (key == "b") app.add_option("--b", c.b, "minibatch size");
  else if (key == "eta") app.add_option("--eta", c.eta, "step size");
  else if (key == "strategy") app.add_option("--strategy", c.strategy, "uniform | cyclic");
  else if (key == "activation") app.add_option("--activation", c.activation, "linear | relu");
  else if (key == "seeds") app.add_option("--seeds", c.seeds, "number of seeds");
  else if (key == "horizon") app.add_option("--horizon", c.horizon, "maximum number of steps per run");
  else if (key == "sigma-init") app.add_option("--sigma-init,--sigma_init", c.sigma_init, "initialization scale");
  else if (key == "out-dir") app.add_option("--out-dir,--out_dir", c.out_dir, "output directory (default $BATCHLENS_OUT or ./out)");
  else if (key == "grid") app.add_option("--grid", c.grid, "grid points per axis");
  else if (key == "stride") app.add_option("--stride", c.stride, "record every k-th step");
  else if (key == "seed") app.add_option("--seed", c.seed, "base seed");
  else if (key == "parallel") app.add_option("--parallel", c.parallel, "worker threads");
  else if (key == "dump-coords") app.add_flag("--dump-coords,--dump_coords", c.dump_coords, "add c_1..c_n columns");
  else if (key == "samples") app.add_option("--samples", c.samples, "Monte Carlo samples for the trace");
  else if (key == "fd-step") app.add_option("--fd-step,--fd_step", c.h, "finite-difference step");
  else if (key == "sizes") app.add_option("--sizes", c.sizes, "comma-separated list of n (m = n)");
  else throw std::logic_error("no option for key " + key);
}

inline bool has_key(const ExperimentConfig& c, const std::string& key) {
  return std::find(c.keys.begin(), c.keys.end(), key) != c.keys.end();
}

inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw UsageError(msg); };
  if (has_key(c, "eta") && !(c.eta > 0.0 && c.eta < 1.0)) fail("--eta must lie in (0, 1)");
  if (has_key(c, "sigma-init") && !(c.sigma_init > 0.0 && c.sigma_init < 1.0)) fail("--sigma-init must lie in (0, 1)");
  if (has_key(c, "n") && c.n == 0) fail("--n must be positive");
  if (has_key(c, "m") && (c.m < 2 || c.m > c.n)) fail("--m must satisfy 2 <= m <= n");
  if (has_key(c, "seeds") && c.seeds == 0) fail("--seeds must be positive");
  if (has_key(c, "horizon") && c.horizon == 0) fail("--horizon must be positive");
  if (has_key(c, "stride") && c.stride == 0) fail("--stride must be positive");
  if (has_key(c, "parallel") && c.parallel == 0) fail("--parallel must be positive");
  if (has_key(c, "fd-step") && !(c.h > 0.0)) fail("--fd-step must be positive");
  if (has_key(c, "samples") && c.samples < 1000) fail("--samples must be at least 1000");
  if (has_key(c, "activation")) {
    try {
      (void)parse_activation(c.activation);
    } catch (const Error&) {
      fail("--activation: expected linear or relu, got '" + c.activation + "'");
    }
  }
  if (c.preset == "landscape-grid" && c.grid < 2) fail("--grid must be at least 2");
  if (c.preset == "csgd-scan" && c.grid < 16) fail("--grid must be at least 16");
  if (c.preset == "sgd-ensemble") {
    if (c.strategy != "uniform" && c.strategy != "cyclic") fail("--strategy: expected uniform or cyclic");
    if (c.strategy == "uniform" && (c.b == 0 || c.b >= c.m)) fail("--b must satisfy 1 <= b < m");
  }
  if (c.preset == "rw-stats" && (c.b == 0 || c.b >= c.m)) fail("--b must satisfy 1 <= b < m");
  if (c.preset == "cossim-stats") {
    for (std::size_t n : parse_sizes(c.sizes)) {
      if (n < 2) fail("--sizes entries must be at least 2");
      if (c.b == 0 || c.b >= n) fail("--b must satisfy 1 <= b < n for every size");
    }
  }
}

}  // namespace detail

struct ParseResult {
  ExperimentConfig config;
  bool help = false;
  std::string help_text;
};

inline std::string usage_text() {
  std::ostringstream out;
  out << "usage: batchlens <preset> [--key=value]...\n\npresets:\n";
  for (const PresetInfo& p : presets()) {
    out << "  " << p.name << "\n      " << p.description << "\n      keys:";
    for (const std::string& k : p.keys) out << " --" << k;
    out << "\n";
  }
  out << "\nexit codes: 0 all checks passed, 1 a check failed, 2 usage error, 3 I/O error\n";
  return out.str();
}

/// Throws UsageError on any parse or validation failure.
inline ParseResult parse_args(int argc, const char* const* argv) {
  std::vector<ExperimentConfig> configs;
  configs.reserve(presets().size());
  CLI::App app{"single-neuron autoencoder experiments", "batchlens"};
  app.require_subcommand(0, 1);
  app.set_help_flag("-h,--help", "list presets and parameters");
  std::vector<CLI::App*> subs;
  for (const PresetInfo& p : presets()) {
    ExperimentConfig& c = configs.emplace_back();
    c.preset = p.name;
    c.keys = p.keys;
    c.out_dir = default_out_dir();
    p.defaults(c);
    CLI::App* sub = app.add_subcommand(p.name, p.description);
    for (const std::string& key : p.keys) detail::add_option(*sub, key, c);
    subs.push_back(sub);
  }

  ParseResult result;
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    result.help = true;
    result.help_text = usage_text();
    for (CLI::App* sub : subs) {
      if (sub->parsed()) result.help_text = sub->help();
    }
    return result;
  } catch (const CLI::CallForAllHelp&) {
    result.help = true;
    result.help_text = usage_text();
    return result;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) {
      result.config = configs[i];
      detail::validate(result.config);
      return result;
    }
  }
  if (argc <= 1) throw UsageError("no preset given");
  throw UsageError("unknown preset '" + std::string(argv[1]) + "'");
}

inline ordered_json config_echo(const ExperimentConfig& c) {
  ordered_json j;
  j["preset"] = c.preset;
  for (const std::string& key : c.keys) {
    if (key == "n") j["n"] = c.n;
    else if (key == "m") j["m"] = c.m;
    else if (key == "b") j["b"] = c.b;
    else if (key == "eta") j["eta"] = c.eta;
    else if (key == "strategy") j["strategy"] = c.strategy;
    else if (key == "activation") j["activation"] = c.activation;
    else if (key == "seeds") j["seeds"] = c.seeds;
    else if (key == "horizon") j["horizon"] = c.horizon;
    else if (key == "sigma-init") j["sigma_init"] = c.sigma_init;
    else if (key == "grid") j["grid"] = c.grid;
    else if (key == "stride") j["stride"] = c.stride;
    else if (key == "seed") j["seed"] = c.seed;
    else if (key == "dump-coords") j["dump_coords"] = c.dump_coords;
    else if (key == "samples") j["samples"] = c.samples;
    else if (key == "fd-step") j["fd_step"] = c.h;
    else if (key == "sizes") j["sizes"] = parse_sizes(c.sizes);
    // out-dir and parallel affect where and how fast, not what; they are
    // left out so that outputs do not depend on them.
  }
  return j;
}

namespace detail {

struct PresetRun {
  RunManifest manifest;
  std::vector<std::pair<std::string, std::string>> files;  // name relative to the preset dir, contents
};

inline void check(RunManifest& m, const std::string& name, bool passed, const std::string& detail = {}) {
  m.checks.push_back({name, passed, detail});
}

inline RunEntry entry_from(const std::string& label, std::uint64_t seed, const TrainingResult& res) {
  RunEntry e;
  e.label = label;
  e.seed = seed;
  e.limit = to_string(res.summary.limit);
  e.steps = res.summary.steps;
  e.converged = res.summary.converged;
  const TrajectoryRecord& last = res.trajectory.back();
  e.phi = last.phi;
  e.psi = last.psi;
  e.r = last.r;
  e.loss = last.loss;
  e.norm_sq = last.norm_sq;
  return e;
}

inline std::string csv_text(std::span<const TrajectoryRecord> records, std::size_t n_coords) {
  std::ostringstream out;
  write_csv(out, records, n_coords);
  return out.str();
}

inline ordered_json json_vec(std::span<const double> v) {
  ordered_json j = ordered_json::array();
  for (double x : v) j.push_back(json_number(x));
  return j;
}

inline std::string seed_file(const std::string& stem, std::uint64_t seed) {
  return stem + "_seed" + std::to_string(seed) + ".csv";
}

inline PresetRun run_fig2(const ExperimentConfig& c) {
  PresetRun out;
  RunManifest& m = out.manifest;
  const OrthoDataset data = make_standard_dataset(2, 2);
  const Vec w0{0.1, 0.08};
  const Activation act = parse_activation(c.activation);

  TrainConfig cfg;
  cfg.activation = act;
  cfg.eta = c.eta;
  cfg.max_steps = c.horizon;
  cfg.seed = c.seed;
  cfg.record_stride = c.stride;
  cfg.keep_coords = true;

  cfg.strategy = BatchStrategy::full();
  const TrainingResult gd = run_training(data, w0, cfg);
  cfg.strategy = BatchStrategy::uniform(1);
  const TrainingResult sgd = run_training(data, w0, cfg);
  m.seeds = {c.seed};
  m.runs.push_back(entry_from("gd", c.seed, gd));
  m.runs.push_back(entry_from("sgd_b1", c.seed, sgd));

  const std::size_t n_coords = c.dump_coords ? 2 : 0;
  out.files.emplace_back("gd.csv", csv_text(gd.trajectory, n_coords));
  out.files.emplace_back("sgd_b1.csv", csv_text(sgd.trajectory, n_coords));

  const Vec predicted = predicted_gd_limit(data, w0, act);
  const Vec gd_final = to_ambient(data, gd.final_state);
  const double gd_err = detail::max_abs_diff(gd_final, predicted);
  std::vector<Vec> snaps;
  for (const TrajectoryRecord& rec : gd.trajectory) snaps.push_back(rec.coords);
  const double inv = gd_invariant_residual(snaps, 2);

  check(m, "gd_limit_is_normalized_projection", gd.summary.converged && gd_err < 1e-6,
        "max error " + format_double(gd_err));
  check(m, "gd_invariant", inv < 1e-10, "residual " + format_double(inv));
  const LimitLabel sl = sgd.summary.limit;
  const bool sgd_ok = sl.kind == LimitLabel::Kind::datapoint &&
                      sl.sign == (w0[sl.index] > 0.0 ? 1 : -1);
  check(m, "sgd_limit_is_signed_datapoint", sgd_ok, to_string(sl));

  m.results["predicted_gd_limit"] = json_vec(predicted);
  m.results["gd_final"] = json_vec(gd_final);
  m.results["gd_invariant_residual"] = json_number(inv);
  m.results["sgd_final"] = json_vec(to_ambient(data, sgd.final_state));
  return out;
}

inline PresetRun run_landscape_grid(const ExperimentConfig& c) {
  PresetRun out;
  RunManifest& m = out.manifest;
  const OrthoDataset data = make_standard_dataset(2, 2);
  const std::size_t g = c.grid;
  const double spacing = 1.2 / static_cast<double>(g - 1);
  std::ostringstream csv;
  csv << "w1,w2,loss\n";
  double best = std::numeric_limits<double>::infinity();
  Vec best_w(2, 0.0);
  double floor_violation = 0.0;
  const double target = global_min_value(2);
  Vec w(2);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      w[0] = spacing * static_cast<double>(i);
      w[1] = spacing * static_cast<double>(j);
      const double loss = objective_loss(data, w, Activation::relu);
      csv << format_double(w[0]) << ',' << format_double(w[1]) << ',' << format_double(loss) << '\n';
      floor_violation = std::max(floor_violation, target - loss);
      if (loss < best) {
        best = loss;
        best_w = w;
      }
    }
  }
  out.files.emplace_back("landscape.csv", csv.str());
  const double radius = norm(best_w);
  check(m, "grid_min_matches_global_min", std::abs(best - target) <= 1e-3, "grid min " + format_double(best));
  check(m, "grid_argmin_on_unit_circle", std::abs(radius - 1.0) <= spacing,
        "argmin radius " + format_double(radius));
  check(m, "no_value_below_global_min", floor_violation <= 1e-12, "max shortfall " + format_double(floor_violation));
  m.results["grid_min"] = json_number(best);
  m.results["argmin"] = json_vec(best_w);
  m.results["global_min_value"] = json_number(target);
  return out;
}

struct EnsembleRun {
  std::uint64_t seed = 0;
  Vec w0;
  std::optional<TrainingResult> result;
  std::string error;
};

inline std::vector<EnsembleRun> run_ensemble(const OrthoDataset& data, const ExperimentConfig& c,
                                             const BatchStrategy& strategy, Activation act, bool keep_coords) {
  std::vector<EnsembleRun> runs(c.seeds);
  parallel_for(c.seeds, c.parallel, [&](std::size_t k) {
    EnsembleRun& r = runs[k];
    r.seed = c.seed + k;
    r.w0 = gaussian_init_in_ball(data.n(), c.sigma_init, r.seed);
    TrainConfig cfg;
    cfg.activation = act;
    cfg.eta = c.eta;
    cfg.strategy = strategy;
    cfg.max_steps = c.horizon;
    cfg.seed = r.seed;
    cfg.record_stride = c.stride;
    cfg.keep_coords = keep_coords;
    try {
      r.result = run_training(data, r.w0, cfg);
    } catch (const DivergenceError& e) {
      r.error = e.what();
    }
  });
  return runs;
}

inline PresetRun run_sgd_ensemble(const ExperimentConfig& c) {
  PresetRun out;
  RunManifest& m = out.manifest;
  const OrthoDataset data = make_standard_dataset(c.n, c.m);
  const Activation act = parse_activation(c.activation);
  const BatchStrategy strategy = parse_strategy(c.strategy, c.b);
  const std::vector<EnsembleRun> runs = run_ensemble(data, c, strategy, act, true);

  std::size_t failures[6] = {};  // datapoint, sign, support, magnitude, psi, norm
  std::size_t audit_failures = 0;
  // Relu inits with no positive in-span coordinate have zero output and zero
  // gradient; they are excluded from the limit checks and must not move.
  std::size_t inert = 0;
  std::size_t inert_moved = 0;
  for (const EnsembleRun& r : runs) {
    m.seeds.push_back(r.seed);
    if (!r.result) {
      RunEntry e;
      e.label = "seed" + std::to_string(r.seed);
      e.seed = r.seed;
      e.error = r.error;
      m.runs.push_back(e);
      for (std::size_t& f : failures) ++f;
      ++audit_failures;
      continue;
    }
    const TrainingResult& res = *r.result;
    m.runs.push_back(entry_from("seed" + std::to_string(r.seed), r.seed, res));
    out.files.emplace_back(seed_file("run", r.seed), csv_text(res.trajectory, c.dump_coords ? c.n : 0));

    const LimitLabel& lab = res.summary.limit;
    const NeuronState c0 = to_coords(data, r.w0);
    if (!audit_bounds(res.trajectory, c.eta).all_ok(false)) ++audit_failures;
    if (act == Activation::relu && positive_set(c0, c.m).empty()) {
      ++inert;
      if (res.final_state.coords != c0.coords) ++inert_moved;
      continue;
    }
    const bool is_dp = lab.kind == LimitLabel::Kind::datapoint && lab.index < c.m;
    if (!is_dp) ++failures[0];
    if (!is_dp || lab.sign != (c0.coords[lab.index] > 0.0 ? 1 : -1)) ++failures[1];
    if (act == Activation::relu && (!is_dp || !(c0.coords[lab.index] > 0.0))) ++failures[2];
    const TrajectoryRecord& last = res.trajectory.back();
    const double top = is_dp ? std::abs(res.final_state.coords[lab.index]) : 0.0;
    if (!(top >= 1.0 - 1e-6)) ++failures[3];
    if (!(last.psi < 1e-8)) ++failures[4];
    if (!(last.norm_sq >= 1.0 - 1e-6)) ++failures[5];
  }
  const std::size_t eligible = c.seeds - inert;
  auto count = [&](std::size_t k) { return std::to_string(failures[k]) + " of " + std::to_string(eligible) + " runs fail"; };
  check(m, "limit_is_datapoint", failures[0] == 0, count(0));
  check(m, "limit_sign_matches_init", failures[1] == 0, count(1));
  if (act == Activation::relu) check(m, "limit_in_positive_set", failures[2] == 0, count(2));
  check(m, "limit_coordinate_magnitude", failures[3] == 0, count(3));
  check(m, "off_span_mass_vanishes", failures[4] == 0, count(4));
  check(m, "norm_floor", failures[5] == 0, count(5));
  check(m, "bounded_iterates", audit_failures == 0,
        std::to_string(audit_failures) + " of " + std::to_string(c.seeds) + " runs fail");
  if (act == Activation::relu) {
    check(m, "empty_positive_set_is_stationary", inert_moved == 0,
          std::to_string(inert) + " such inits, " + std::to_string(inert_moved) + " moved");
  }
  return out;
}

inline PresetRun run_rw_stats(const ExperimentConfig& c) {
  PresetRun out;
  RunManifest& m = out.manifest;
  const OrthoDataset data = make_standard_dataset(c.n, c.m);
  const std::vector<EnsembleRun> runs = run_ensemble(data, c, BatchStrategy::uniform(c.b), Activation::linear, false);

  std::vector<IncrementStats> parts;
  std::ostringstream csv;
  csv << "seed,steps,n_hit,n_miss,mean_dr,min_dr_hit,max_abs_dr,truncated\n";
  std::size_t errors = 0;
  for (const EnsembleRun& r : runs) {
    m.seeds.push_back(r.seed);
    if (!r.result) {
      ++errors;
      RunEntry e;
      e.label = "seed" + std::to_string(r.seed);
      e.seed = r.seed;
      e.error = r.error;
      m.runs.push_back(e);
      continue;
    }
    const TrainingResult& res = *r.result;
    m.runs.push_back(entry_from("seed" + std::to_string(r.seed), r.seed, res));
    try {
      const IncrementStats s = increment_stats(res.trajectory, c.eta, c.m, c.b, res.summary.steps / 2);
      csv << r.seed << ',' << res.summary.steps << ',' << s.n_hit << ',' << s.n_miss << ','
          << format_double(s.mean_dr_all) << ',' << format_double(s.min_dr_hit) << ','
          << format_double(s.max_abs_dr) << ',' << (s.truncated ? 1 : 0) << '\n';
      parts.push_back(s);
    } catch (const InvalidWindow&) {
      ++errors;
    }
  }
  out.files.emplace_back("rw_stats.csv", csv.str());

  // Full-batch control from the same initializations.
  double control_max = 0.0;
  for (const EnsembleRun& r : runs) {
    TrainConfig cfg;
    cfg.eta = c.eta;
    cfg.strategy = BatchStrategy::full();
    cfg.max_steps = c.horizon;
    const TrainingResult res = run_training(data, r.w0, cfg);
    for (const TrajectoryRecord& rec : res.trajectory) control_max = std::max(control_max, std::abs(rec.delta_r));
  }

  check(m, "all_runs_usable", errors == 0, std::to_string(errors) + " runs without a usable window");
  if (!parts.empty()) {
    const IncrementStats p = pool(parts);
    const double hit_floor = p.bounds.hit - 1e-10;
    check(m, "hit_step_lower_bound", p.n_hit == 0 || p.min_dr_hit >= hit_floor,
          "min hit increment " + format_double(p.min_dr_hit) + " vs bound " + format_double(p.bounds.hit));
    check(m, "bounded_increments", p.max_abs_dr <= p.bounds.k + 1e-10,
          "max |increment| " + format_double(p.max_abs_dr) + " vs bound " + format_double(p.bounds.k));
    const double threshold = p.bounds.drift - 3.0 * p.se_all;
    check(m, "drift_lower_bound", p.mean_dr_all >= threshold,
          "mean " + format_double(p.mean_dr_all) + " vs bound " + format_double(p.bounds.drift) + " - 3 se " +
              format_double(3.0 * p.se_all));
    m.results["pooled"] = {{"n_hit", p.n_hit},
                           {"n_miss", p.n_miss},
                           {"mean_dr", json_number(p.mean_dr_all)},
                           {"se", json_number(p.se_all)},
                           {"mean_dr_hit", json_number(p.mean_dr_hit)},
                           {"mean_dr_miss", json_number(p.mean_dr_miss)},
                           {"min_dr_hit", json_number(p.min_dr_hit)},
                           {"max_abs_dr", json_number(p.max_abs_dr)}};
    m.results["bounds"] = {{"drift", json_number(p.bounds.drift)},
                           {"hit", json_number(p.bounds.hit)},
                           {"beta", json_number(p.bounds.beta)},
                           {"gamma", json_number(p.bounds.gamma)},
                           {"k", json_number(p.bounds.k)}};
  }
  check(m, "full_batch_control", control_max < 1e-12, "max |increment| " + format_double(control_max));
  m.results["full_batch_max_abs_dr"] = json_number(control_max);
  return out;
}

inline PresetRun run_csgd_scan(const ExperimentConfig& c) {
  PresetRun out;
  RunManifest& m = out.manifest;
  const CsgdScanReport scan = csgd_region_scan(c.grid, c.eta);
  const OrthoDataset data = make_standard_dataset(2, 2);

  struct Slot {
    double y0 = 0.0, z0 = 0.0;
    std::optional<TrainingResult> result;
    std::string error;
  };
  std::vector<Slot> slots(c.seeds);
  parallel_for(c.seeds, c.parallel, [&](std::size_t k) {
    Slot& s = slots[k];
    std::tie(s.y0, s.z0) = csgd_init(c.seed + k);
    TrainConfig cfg;
    cfg.eta = c.eta;
    cfg.strategy = BatchStrategy::cyclic();
    cfg.max_steps = c.horizon;
    cfg.record_stride = c.horizon;
    try {
      s.result = run_training(data, Vec{s.y0, s.z0}, cfg);
    } catch (const DivergenceError& e) {
      s.error = e.what();
    }
  });

  std::ostringstream csv;
  csv << "seed,y0,z0,steps,limit,final_y,final_z\n";
  std::size_t misses = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const Slot& s = slots[k];
    const std::uint64_t seed = c.seed + k;
    m.seeds.push_back(seed);
    if (!s.result) {
      ++misses;
      RunEntry e;
      e.label = "seed" + std::to_string(seed);
      e.seed = seed;
      e.error = s.error;
      m.runs.push_back(e);
      continue;
    }
    const TrainingResult& res = *s.result;
    m.runs.push_back(entry_from("seed" + std::to_string(seed), seed, res));
    const Vec& fc = res.final_state.coords;
    const double err = std::max(std::abs(fc[0] - 1.0), std::abs(fc[1]));
    if (!(err < 1e-6)) ++misses;
    csv << seed << ',' << format_double(s.y0) << ',' << format_double(s.z0) << ',' << res.summary.steps << ','
        << to_string(res.summary.limit) << ',' << format_double(fc[0]) << ',' << format_double(fc[1]) << '\n';
  }
  out.files.emplace_back("csgd_runs.csv", csv.str());

  check(m, "potential_decreases", scan.potential_violations == 0,
        std::to_string(scan.potential_violations) + " of " + std::to_string(scan.points_checked) + " grid points");
  check(m, "region_invariant", scan.invariance_violations == 0,
        std::to_string(scan.invariance_violations) + " of " + std::to_string(scan.points_checked) + " grid points");
  check(m, "runs_converge_to_a1", misses == 0, std::to_string(misses) + " of " + std::to_string(c.seeds) + " runs miss");
  m.results["scan"] = {{"grid_size", scan.grid_size},
                       {"points_checked", scan.points_checked},
                       {"potential_violations", scan.potential_violations},
                       {"invariance_violations", scan.invariance_violations},
                       {"max_potential_change", json_number(scan.max_potential_change)}};
  return out;
}

inline PresetRun run_cossim_stats(const ExperimentConfig& c) {
  PresetRun out;
  RunManifest& m = out.manifest;
  const std::vector<std::size_t> sizes = parse_sizes(c.sizes);
  for (std::size_t k = 0; k < c.seeds; ++k) m.seeds.push_back(c.seed + k);

  std::ostringstream csv;
  csv << "n,strategy,seed,cossim_data,cossim_init,final_cossim_data,steps\n";
  std::vector<std::pair<std::size_t, double>> gd_medians;
  ordered_json per_size = ordered_json::array();
  for (std::size_t n : sizes) {
    const std::vector<BatchStrategy> strategies{BatchStrategy::full(), BatchStrategy::uniform(c.b)};
    CossimOptions opts;
    opts.base_seed = c.seed;
    opts.workers = c.parallel;
    opts.max_steps = c.horizon;
    const std::vector<CossimRow> rows = cossim_statistics(n, n, c.sigma_init, c.eta, strategies, c.seeds, opts);
    const CossimRow& gd = rows[0];
    const CossimRow& sgd = rows[1];
    for (const CossimRow& row : rows) {
      const std::string name = row.strategy.kind == BatchStrategy::Kind::full ? "gd" : "sgd";
      for (std::size_t k = 0; k < row.seeds; ++k) {
        csv << n << ',' << name << ',' << (c.seed + k) << ',' << format_double(row.cossim_data[k]) << ','
            << format_double(row.cossim_init[k]) << ',' << format_double(row.final_cossim_data[k]) << ','
            << row.steps[k] << '\n';
      }
    }
    const double nd = static_cast<double>(n);
    const double sgd_ceiling = 2.0 * std::sqrt(std::log(nd) / nd);
    const bool exact = std::all_of(sgd.cossim_data.begin(), sgd.cossim_data.end(), [](double x) { return x == 1.0; });
    const std::string tag = "_n" + std::to_string(n);
    check(m, "runs_converged" + tag, gd.converged == c.seeds && sgd.converged == c.seeds,
          "gd " + std::to_string(gd.converged) + ", sgd " + std::to_string(sgd.converged) + " of " +
              std::to_string(c.seeds));
    check(m, "sgd_cossim_data_is_one" + tag, exact, "min " + format_double(sgd.min_cossim_data));
    check(m, "sgd_median_cossim_init_small" + tag, sgd.median_cossim_init <= sgd_ceiling,
          format_double(sgd.median_cossim_init) + " vs " + format_double(sgd_ceiling));
    check(m, "gd_median_cossim_init_large" + tag, gd.median_cossim_init >= 0.5,
          format_double(gd.median_cossim_init));
    gd_medians.emplace_back(n, gd.median_cossim_data);
    per_size.push_back({{"n", n},
                        {"gd_median_cossim_data", json_number(gd.median_cossim_data)},
                        {"gd_median_cossim_init", json_number(gd.median_cossim_init)},
                        {"sgd_median_cossim_data", json_number(sgd.median_cossim_data)},
                        {"sgd_median_cossim_init", json_number(sgd.median_cossim_init)},
                        {"sgd_min_final_cossim_data", json_number(sgd.min_final_cossim_data)}});
  }
  out.files.emplace_back("cossim.csv", csv.str());
  m.results["sizes"] = std::move(per_size);

  auto median_at = [&](std::size_t n) -> std::optional<double> {
    for (const auto& [size, med] : gd_medians) {
      if (size == n) return med;
    }
    return std::nullopt;
  };
  const auto lo = median_at(64);
  const auto hi = median_at(1024);
  if (lo && hi) {
    const double observed = *hi / *lo;
    const double predicted = std::sqrt(std::log(1024.0) / 1024.0) / std::sqrt(std::log(64.0) / 64.0);
    const double factor = observed / predicted;
    check(m, "gd_cossim_data_scaling", factor >= 0.5 && factor <= 2.0,
          "observed ratio " + format_double(observed) + ", predicted " + format_double(predicted));
    m.results["gd_scaling"] = {{"observed", json_number(observed)}, {"predicted", json_number(predicted)}};
  }
  return out;
}

struct SharpnessCase {
  std::size_t n, m, support;
  double trace_sgd, trace_gd;  // expected closed-form values
};

inline PresetRun run_sharpness(const ExperimentConfig& c) {
  PresetRun out;
  RunManifest& m = out.manifest;
  m.seeds = {c.seed};
  const std::vector<SharpnessCase> cases{{2, 2, 2, 2.25, 2.0}, {10, 8, 4, 1.1875, 1.0}};
  std::ostringstream csv;
  csv << "n,m,point,s_size,max_curv_analytic,max_curv_numeric,max_curv_sampled,curv_at_w,trace_analytic,"
         "trace_mc,trace_mc_se\n";
  for (const SharpnessCase& sc : cases) {
    const OrthoDataset data = make_standard_dataset(sc.n, sc.m);
    Vec w_sgd(sc.n, 0.0);
    w_sgd[0] = 1.0;
    Vec w_gd(sc.n, 0.0);
    for (std::size_t i = 0; i < sc.support; ++i) w_gd[i] = 1.0 / std::sqrt(static_cast<double>(sc.support));
    const std::string tag = "_m" + std::to_string(sc.m) + "_n" + std::to_string(sc.n);
    double traces[2] = {};
    int idx = 0;
    for (const auto& [name, w] : {std::pair<std::string, const Vec&>{"sgd", w_sgd}, {"gd", w_gd}}) {
      const SharpnessReport rep = sharpness_report(data, w, c.samples, c.h, c.seed, 10000, c.parallel);
      const double at_w = curvature_analytic(data, w, w);
      const double expected_trace = name == "sgd" ? sc.trace_sgd : sc.trace_gd;
      traces[idx++] = rep.trace_analytic;
      csv << sc.n << ',' << sc.m << ',' << name << ',' << rep.s_size << ',' << format_double(rep.max_curv_analytic)
          << ',' << format_double(rep.max_curv_numeric) << ',' << format_double(rep.max_curv_sampled) << ','
          << format_double(at_w) << ',' << format_double(rep.trace_analytic) << ',' << format_double(rep.trace_mc)
          << ',' << format_double(rep.trace_mc_se) << '\n';
      const std::string t = "_" + name + tag;
      check(m, "numeric_max_curvature" + t, std::abs(rep.max_curv_numeric - rep.max_curv_analytic) <= 1e-3,
            format_double(rep.max_curv_numeric) + " vs " + format_double(rep.max_curv_analytic));
      check(m, "curvature_at_w_is_max" + t, std::abs(at_w - rep.max_curv_analytic) <= 1e-6, format_double(at_w));
      check(m, "sampled_curvature_below_max" + t, rep.max_curv_sampled <= rep.max_curv_analytic + 1e-6,
            format_double(rep.max_curv_sampled));
      check(m, "trace_formula" + t, std::abs(rep.trace_analytic - expected_trace) <= 1e-12,
            format_double(rep.trace_analytic));
      check(m, "trace_monte_carlo" + t, std::abs(rep.trace_mc - rep.trace_analytic) <= 3.0 * rep.trace_mc_se,
            format_double(rep.trace_mc) + " +- " + format_double(rep.trace_mc_se));
    }
    check(m, "sgd_point_sharper" + tag, traces[0] > traces[1],
          format_double(traces[0]) + " vs " + format_double(traces[1]));
  }
  out.files.emplace_back("sharpness.csv", csv.str());
  return out;
}

}  // namespace detail

struct PresetOutcome {
  RunManifest manifest;
  std::filesystem::path dir;
  double wall_seconds = 0.0;
};

/// Runs a preset and writes its files. Throws IoError when writing fails.
inline PresetOutcome run_preset(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  detail::PresetRun run;
  const std::string& p = config.preset;
  if (p == "fig2") run = detail::run_fig2(config);
  else if (p == "landscape-grid") run = detail::run_landscape_grid(config);
  else if (p == "sgd-ensemble") run = detail::run_sgd_ensemble(config);
  else if (p == "rw-stats") run = detail::run_rw_stats(config);
  else if (p == "csgd-scan") run = detail::run_csgd_scan(config);
  else if (p == "cossim-stats") run = detail::run_cossim_stats(config);
  else if (p == "sharpness") run = detail::run_sharpness(config);
  else throw UsageError("unknown preset '" + p + "'");

  run.manifest.preset = p;
  run.manifest.schema_version = config.schema_version;
  run.manifest.config = config_echo(config);

  PresetOutcome outcome;
  outcome.dir = std::filesystem::path(config.out_dir) / p;
  for (const auto& [name, text] : run.files) write_text_file(outcome.dir / name, text);
  emit_json(run.manifest, outcome.dir / "summary.json");
  write_text_file(outcome.dir / "checks.json", dump_checks(run.manifest));
  outcome.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ordered_json timing;
  timing["preset"] = p;
  timing["wall_seconds"] = outcome.wall_seconds;
  write_text_file(outcome.dir / "timing.json", timing.dump(2) + "\n");
  outcome.manifest = std::move(run.manifest);
  return outcome;
}

/// Whole command-line program; returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  ParseResult parsed;
  try {
    parsed = parse_args(argc, argv);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\nrun 'batchlens --help' for the list of presets and keys\n";
    return kExitUsage;
  }
  if (parsed.help) {
    out << parsed.help_text;
    return kExitOk;
  }
  try {
    const PresetOutcome res = run_preset(parsed.config);
    for (const CheckResult& c : res.manifest.checks) {
      out << (c.passed ? "PASS " : "FAIL ") << c.name;
      if (!c.detail.empty()) out << " (" << c.detail << ")";
      out << "\n";
    }
    out << "wrote " << res.dir.string() << " in " << format_double(std::round(res.wall_seconds * 1000.0) / 1000.0)
        << " s\n";
    return res.manifest.all_passed() ? kExitOk : kExitCheckFailed;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace batchlens

#endif  // BATCHLENS_EXPERIMENTS_HPP
