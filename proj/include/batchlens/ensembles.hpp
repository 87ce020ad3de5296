#ifndef BATCHLENS_ENSEMBLES_HPP
#define BATCHLENS_ENSEMBLES_HPP

// Seed ensembles at large n: a scaled-coordinate SGD integrator that costs
// O(b) per step, and the cosine-similarity statistics of GD and SGD limits.

#include <batchlens/basis_data.hpp>
#include <batchlens/dynamics.hpp>
#include <batchlens/observables.hpp>
#include <batchlens/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace batchlens {

struct ScaledRunResult {
  NeuronState final_state;
  TrainingSummary summary;
};

/// Same recursion and batch sequence as run_training, but coordinates are
/// stored as c = s * d so the out-of-batch factor only touches the scalar s.
/// Convergence is tested every `check_every` steps (0 picks max(64, n)).
/// Trajectories are not recorded. Requires a positive out-of-batch factor,
/// which holds whenever |w_0| < 1 and eta <= 1/5.
inline ScaledRunResult run_training_scaled(const OrthoDataset& data, std::span<const double> w0,
                                           const TrainConfig& config, std::size_t check_every = 0) {
  config.validate();
  require_same_size(w0.size(), data.n(), "run_training_scaled");
  const std::size_t n = data.n();
  const std::size_t m = data.m();
  if (check_every == 0) check_every = std::max<std::size_t>(64, n);

  Vec d = to_coords(data, w0).coords;
  double scale = 1.0;
  double d_sq = norm_sq(d);

  Vec predicted;
  Vec predicted_coords;
  try {
    predicted = predicted_gd_limit(data, w0, config.activation);
    predicted_coords = to_coords(data, predicted).coords;
  } catch (const DegenerateError&) {
    predicted.clear();
  }
  const double prefilter = config.conv_tol * std::sqrt(static_cast<double>(n));

  NeuronState view;
  auto materialize = [&]() {
    for (double& x : d) x *= scale;
    scale = 1.0;
    d_sq = norm_sq(d);
  };
  auto classify = [&]() {
    LimitLabel dp = detail::match_datapoint(d, m, config.conv_tol);
    if (dp.converged() || predicted.empty()) return dp;
    double dist_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = d[i] - predicted_coords[i];
      dist_sq += diff * diff;
    }
    if (!(std::sqrt(dist_sq) < prefilter)) return LimitLabel::none();
    view.coords = d;
    return classify_limit(view, data, predicted, config.conv_tol);
  };

  BatchSampler sampler(config.strategy, m, config.seed);
  LimitLabel label = classify();
  std::size_t t = 0;
  while (!label.converged() && t < config.max_steps) {
    const Batch raw = sampler.next(t);
    const Batch applied = effective_batch(raw, d, config.activation);
    ++t;
    if (!applied.empty()) {
      const double s2 = scale * scale;
      double u = 0.0;
      for (std::size_t i : applied) u += d[i] * d[i];
      u *= s2;
      const double a_factor = 1.0 + config.eta * (2.0 - u - s2 * d_sq);
      const double b_factor = 1.0 - config.eta * u;
      if (!(b_factor > 0.0)) throw NumericError("run_training_scaled: out-of-batch factor is not positive");
      const double ratio = a_factor / b_factor;
      for (std::size_t i : applied) {
        const double old = d[i];
        d[i] = old * ratio;
        d_sq += d[i] * d[i] - old * old;
      }
      scale *= b_factor;
    }
    if (scale < 1e-150 || t % check_every == 0 || t == config.max_steps) {
      materialize();
      if (!std::isfinite(d_sq)) throw DivergenceError(t);
      label = classify();
    }
  }
  materialize();

  ScaledRunResult out;
  out.final_state.coords = std::move(d);
  out.summary.steps = t;
  out.summary.converged = label.converged();
  out.summary.limit = label;
  return out;
}

struct CossimRow {
  BatchStrategy strategy;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t seeds = 0;
  std::size_t converged = 0;
  double median_cossim_data = 0.0;  // median of cossim(limit, D)
  double median_cossim_init = 0.0;  // median of cossim(limit, w0)
  double min_cossim_data = 0.0;
  double min_final_cossim_data = 0.0;  // same as min_cossim_data, on the last iterate
  std::vector<double> cossim_data;
  std::vector<double> cossim_init;
  std::vector<double> final_cossim_data;
  std::vector<std::size_t> steps;
};

inline double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t k = values.size() / 2;
  return values.size() % 2 ? values[k] : 0.5 * (values[k - 1] + values[k]);
}

struct CossimOptions {
  std::uint64_t base_seed = 0;
  std::size_t workers = 1;
  std::size_t max_steps = 20'000'000;
  double conv_tol = 1e-9;
};

/// Seed ensemble on the standard n-dimensional dataset with m points and
/// w0 ~ N(0, sigma_init^2 / n). A run that ends at a datapoint label uses the
/// exact point s * a_i as its limit; otherwise the last iterate is used.
inline std::vector<CossimRow> cossim_statistics(std::size_t n, std::size_t m, double sigma_init, double eta,
                                                std::span<const BatchStrategy> strategies, std::size_t n_seeds,
                                                const CossimOptions& opts = {}) {
  if (m > n || 4 * m < n) throw InvalidParameter("cossim_statistics needs n/4 <= m <= n");
  if (!(sigma_init > 0.0 && sigma_init < 1.0)) throw InvalidParameter("cossim_statistics needs 0 < sigma_init < 1");
  if (n_seeds == 0) throw InvalidParameter("n_seeds must be positive");
  const OrthoDataset data = make_standard_dataset(n, m);

  std::vector<CossimRow> rows;
  for (const BatchStrategy& strategy : strategies) {
    strategy.validate(m);
    CossimRow row;
    row.strategy = strategy;
    row.n = n;
    row.m = m;
    row.seeds = n_seeds;
    row.cossim_data.assign(n_seeds, 0.0);
    row.cossim_init.assign(n_seeds, 0.0);
    row.final_cossim_data.assign(n_seeds, 0.0);
    row.steps.assign(n_seeds, 0);
    std::vector<char> converged(n_seeds, 0);

    parallel_for(n_seeds, opts.workers, [&](std::size_t k) {
      const std::uint64_t seed = opts.base_seed + k;
      const Vec w0 = gaussian_init(n, sigma_init, seed);
      TrainConfig cfg;
      cfg.eta = eta;
      cfg.strategy = strategy;
      cfg.max_steps = opts.max_steps;
      cfg.conv_tol = opts.conv_tol;
      cfg.seed = seed;
      cfg.record_stride = opts.max_steps;

      NeuronState final_state;
      TrainingSummary summary;
      if (strategy.kind == BatchStrategy::Kind::full) {
        TrainingResult res = run_training(data, w0, cfg);
        final_state = std::move(res.final_state);
        summary = res.summary;
      } else {
        ScaledRunResult res = run_training_scaled(data, w0, cfg);
        final_state = std::move(res.final_state);
        summary = res.summary;
      }

      const Vec last = to_ambient(data, final_state);
      Vec limit = last;
      if (summary.limit.kind == LimitLabel::Kind::datapoint) {
        NeuronState point{Vec(n, 0.0)};
        point.coords[summary.limit.index] = static_cast<double>(summary.limit.sign);
        limit = to_ambient(data, point);
      }
      row.cossim_data[k] = cossim_dataset(limit, data);
      row.cossim_init[k] = cossim(limit, w0);
      row.final_cossim_data[k] = cossim_dataset(last, data);
      row.steps[k] = summary.steps;
      converged[k] = summary.converged ? 1 : 0;
    });

    row.converged = static_cast<std::size_t>(std::count(converged.begin(), converged.end(), 1));
    row.median_cossim_data = median(row.cossim_data);
    row.median_cossim_init = median(row.cossim_init);
    row.min_cossim_data = *std::min_element(row.cossim_data.begin(), row.cossim_data.end());
    row.min_final_cossim_data = *std::min_element(row.final_cossim_data.begin(), row.final_cossim_data.end());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace batchlens

#endif  // BATCHLENS_ENSEMBLES_HPP
