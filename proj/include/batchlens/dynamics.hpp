#ifndef BATCHLENS_DYNAMICS_HPP
#define BATCHLENS_DYNAMICS_HPP

// Mini-batch gradient dynamics of the weight-tied single-neuron autoencoder
// f(x; w) = w * phi(<w, x>) trained on an orthonormal dataset.
//
// In data coordinates one step with batch B multiplies every in-batch
// coordinate by A = 1 + eta (2 - u - |w|^2) and every other coordinate by
// B = 1 - eta u, where u = sum_{i in B} c(i)^2. The ambient form is kept
// alongside as an independent route for cross-checking.

#include <batchlens/activation.hpp>
#include <batchlens/basis_data.hpp>
#include <batchlens/errors.hpp>
#include <batchlens/observables.hpp>
#include <batchlens/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace batchlens {

/// 0-based datapoint indices, sorted ascending.
using Batch = std::vector<std::size_t>;

struct BatchStrategy {
  enum class Kind { full, uniform, cyclic };
  Kind kind = Kind::full;
  std::size_t b = 0;  // only meaningful for uniform

  static BatchStrategy full() { return {Kind::full, 0}; }
  static BatchStrategy uniform(std::size_t b) { return {Kind::uniform, b}; }
  static BatchStrategy cyclic() { return {Kind::cyclic, 1}; }

  std::size_t batch_size(std::size_t m) const noexcept {
    switch (kind) {
      case Kind::full:
        return m;
      case Kind::uniform:
        return b;
      case Kind::cyclic:
        break;
    }
    return 1;
  }

  void validate(std::size_t m) const {
    if (kind == Kind::uniform && (b < 1 || b >= m)) {
      throw InvalidParameter("uniform batches need 1 <= b < m, got b=" + std::to_string(b) +
                             ", m=" + std::to_string(m));
    }
    if (m == 0) throw InvalidParameter("m must be positive");
  }

  bool operator==(const BatchStrategy&) const = default;
};

inline std::string to_string(const BatchStrategy& s) {
  switch (s.kind) {
    case BatchStrategy::Kind::full:
      return "full";
    case BatchStrategy::Kind::uniform:
      return "uniform(b=" + std::to_string(s.b) + ")";
    case BatchStrategy::Kind::cyclic:
      break;
  }
  return "cyclic";
}

struct TrainConfig {
  Activation activation = Activation::linear;
  double eta = 0.125;
  BatchStrategy strategy = BatchStrategy::full();
  std::size_t max_steps = 200000;
  double conv_tol = 1e-9;
  std::uint64_t seed = 0;
  std::size_t record_stride = 1;
  bool keep_coords = false;  // store a coordinate snapshot in every record

  /// eta above 1/5 is allowed but leaves the regime covered by the convergence theorems.
  bool outside_theorem_regime() const noexcept { return eta > 0.2; }

  void validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidParameter("eta must be positive");
    if (!(conv_tol > 0.0)) throw InvalidParameter("conv_tol must be positive");
    if (max_steps == 0) throw InvalidParameter("max_steps must be positive");
    if (record_stride == 0) throw InvalidParameter("record_stride must be positive");
  }
};

struct StepFactors {
  double u = 0.0;         // |Pi_B(w)|^2
  double a_factor = 1.0;  // in-batch multiplier
  double b_factor = 1.0;  // out-of-batch multiplier
};

struct TrajectoryRecord {
  std::size_t t = 0;
  double phi = 0.0;
  double psi = 0.0;
  double r = 0.0;  // NaN when undefined (m < 2 or zero in-span mass)
  double norm_sq = 0.0;
  double loss = 0.0;
  std::size_t i_star = 0;
  bool batch_hit = false;  // i*_{t-1} was in the batch that produced this state
  double delta_r = 0.0;    // R_t - R_{t-1}; 0 at t = 0
  Vec coords;              // filled only with TrainConfig::keep_coords
};

// ---------------------------------------------------------------------------
// Ambient-space model

inline Vec forward(std::span<const double> w, std::span<const double> x, Activation act) {
  require_same_size(w.size(), x.size(), "forward");
  const double s = activate(act, dot(w, x));
  Vec out(w.begin(), w.end());
  for (double& v : out) v *= s;
  return out;
}

/// phi'(<w,x>) [x w^T + <w,x> I] (f(x;w) - x).
inline Vec pointwise_gradient(std::span<const double> w, std::span<const double> x, Activation act) {
  require_same_size(w.size(), x.size(), "pointwise_gradient");
  const double z = dot(w, x);
  const double d = activate_derivative(act, z);
  Vec g(w.size(), 0.0);
  if (d == 0.0) return g;
  const double phi = activate(act, z);
  Vec resid(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) resid[k] = w[k] * phi - x[k];
  const double w_dot_r = dot(w, resid);
  for (std::size_t k = 0; k < w.size(); ++k) g[k] = d * (x[k] * w_dot_r + z * resid[k]);
  return g;
}

/// (1/m) sum_{i<m} 1/2 |a_i - f(a_i; w)|^2, evaluated in ambient space.
inline double objective_loss(const OrthoDataset& data, std::span<const double> w, Activation act) {
  require_same_size(w.size(), data.n(), "objective_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < data.m(); ++i) {
    const auto a = data.column(i);
    const double s = activate(act, dot(w, a));
    double sq = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double d = a[k] - w[k] * s;
      sq += d * d;
    }
    total += 0.5 * sq;
  }
  return total / static_cast<double>(data.m());
}

/// Same objective computed from data coordinates: each term is
/// 1/2 (1 - 2 c phi(c) + |w|^2 phi(c)^2).
inline double loss_from_coords(std::span<const double> coords, std::size_t m, Activation act) {
  const double nsq = norm_sq(coords);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double p = activate(act, coords[i]);
    total += 0.5 * (1.0 - 2.0 * coords[i] * p + nsq * p * p);
  }
  return total / static_cast<double>(m);
}

// ---------------------------------------------------------------------------
// Batch selection

namespace detail {

inline Batch full_batch(std::size_t m) {
  Batch b(m);
  std::iota(b.begin(), b.end(), std::size_t{0});
  return b;
}

// Partial Fisher-Yates: the first k slots of `scratch` become a uniform
// k-subset. Works from any permutation left behind by earlier draws.
inline Batch draw_subset(std::vector<std::size_t>& scratch, std::size_t k, Rng& rng) {
  const std::size_t m = scratch.size();
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, m - 1);
    std::swap(scratch[i], scratch[pick(rng)]);
  }
  Batch out(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Batch B_t for step t. Cyclic selects {t mod m}; uniform draws a size-b
/// subset without replacement from a fresh index array.
inline Batch next_batch(const BatchStrategy& strategy, std::size_t m, std::size_t t, Rng& rng) {
  strategy.validate(m);
  switch (strategy.kind) {
    case BatchStrategy::Kind::full:
      return detail::full_batch(m);
    case BatchStrategy::Kind::cyclic:
      return Batch{t % m};
    case BatchStrategy::Kind::uniform:
      break;
  }
  std::vector<std::size_t> scratch = detail::full_batch(m);
  return detail::draw_subset(scratch, strategy.b, rng);
}

/// Stateful sampler used by the training loop; keeps its index scratch
/// between draws so a uniform draw costs O(b).
class BatchSampler {
 public:
  BatchSampler(BatchStrategy strategy, std::size_t m, std::uint64_t seed)
      : strategy_(strategy), m_(m), rng_(make_rng(seed, Stream::batch)), scratch_(detail::full_batch(m)) {
    strategy_.validate(m);
  }

  Batch next(std::size_t t) {
    switch (strategy_.kind) {
      case BatchStrategy::Kind::full:
        return scratch_full();
      case BatchStrategy::Kind::cyclic:
        return Batch{t % m_};
      case BatchStrategy::Kind::uniform:
        break;
    }
    return detail::draw_subset(scratch_, strategy_.b, rng_);
  }

 private:
  Batch scratch_full() const { return detail::full_batch(m_); }

  BatchStrategy strategy_;
  std::size_t m_;
  Rng rng_;
  std::vector<std::size_t> scratch_;
};

/// B_t intersected with the current positive set for relu; unchanged for linear.
inline Batch effective_batch(const Batch& batch, std::span<const double> coords, Activation act) {
  if (act == Activation::linear) return batch;
  Batch out;
  out.reserve(batch.size());
  for (std::size_t i : batch) {
    if (coords[i] > 0.0) out.push_back(i);
  }
  return out;
}

inline Batch effective_batch(const Batch& batch, const NeuronState& state, Activation act) {
  return effective_batch(batch, state.coords, act);
}

// ---------------------------------------------------------------------------
// Coordinate-form step

/// In-place coordinate update. `norm_sq_w` must equal |w|^2 for the current
/// coordinates. An empty batch leaves the coordinates untouched.
inline StepFactors step_coords_inplace(std::span<double> coords, const Batch& batch, double eta,
                                       double norm_sq_w) {
  if (batch.empty()) return {0.0, 1.0, 1.0};
  double u = 0.0;
  for (std::size_t i : batch) u += coords[i] * coords[i];
  StepFactors f;
  f.u = u;
  f.a_factor = 1.0 + eta * (2.0 - u - norm_sq_w);
  f.b_factor = 1.0 - eta * u;

  // Batches are small relative to n in the stochastic regimes; save the
  // in-batch values, scale everything by B, then rewrite the batch with A.
  thread_local std::vector<double> saved;
  saved.resize(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) saved[k] = coords[batch[k]];
  for (double& c : coords) c *= f.b_factor;
  for (std::size_t k = 0; k < batch.size(); ++k) coords[batch[k]] = saved[k] * f.a_factor;
  return f;
}

inline std::pair<NeuronState, StepFactors> step_coords(const NeuronState& state, const Batch& batch,
                                                       double eta) {
  for (std::size_t i : batch) {
    if (i >= state.size()) throw DimensionError("step_coords: batch index out of range");
  }
  NeuronState next = state;
  const StepFactors f = step_coords_inplace(next.coords, batch, eta, norm_sq(state.coords));
  return {std::move(next), f};
}

/// w - eta * sum_{i in batch} grad l(w; a_i), computed with ambient gradients.
inline Vec step_ambient(const OrthoDataset& data, std::span<const double> w, const Batch& batch,
                        double eta, Activation act) {
  require_same_size(w.size(), data.n(), "step_ambient");
  Vec total(w.size(), 0.0);
  for (std::size_t i : batch) {
    if (i >= data.m()) throw DimensionError("step_ambient: batch index outside the dataset");
    const Vec g = pointwise_gradient(w, data.column(i), act);
    for (std::size_t k = 0; k < w.size(); ++k) total[k] += g[k];
  }
  Vec next(w.begin(), w.end());
  for (std::size_t k = 0; k < w.size(); ++k) next[k] -= eta * total[k];
  return next;
}

/// Closed-form full-batch recursion of (Phi, Psi).
inline std::pair<double, double> gd_two_dim_step(double phi, double psi, double eta) {
  const double g = 2.0 - 2.0 * phi - psi;
  const double next_phi = phi + 2.0 * eta * phi * g + eta * eta * phi * g * g;
  const double next_psi = psi - 2.0 * eta * phi * psi + eta * eta * phi * phi * psi;
  return {next_phi, next_psi};
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainingSummary {
  std::size_t steps = 0;
  bool converged = false;
  LimitLabel limit;
};

struct TrainingResult {
  std::vector<TrajectoryRecord> trajectory;
  NeuronState final_state;
  TrainingSummary summary;
  Batch last_applied;  // effective batch of the final step
};

/// Produces the raw batch B_t for step t.
using BatchSource = std::function<Batch(std::size_t t)>;

/// Observer invoked with (t, effective batch) for every step taken.
using BatchObserver = std::function<void(std::size_t, const Batch&)>;

namespace detail {

inline double safe_log_ratio(std::span<const double> coords, std::size_t m, std::size_t& i_star) {
  if (m < 2) {
    i_star = 0;
    return std::numeric_limits<double>::quiet_NaN();
  }
  bool any = false;
  for (std::size_t i = 0; i < m; ++i) any = any || coords[i] != 0.0;
  if (!any) {
    i_star = 0;
    return std::numeric_limits<double>::quiet_NaN();
  }
  const LogRatio lr = log_ratio(coords, m);
  i_star = lr.i_star;
  return lr.r;
}

inline bool finite_all(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace detail

/// Runs the training loop with an explicit batch source. The effective batch
/// (relu intersection) is applied on top of whatever the source returns.
inline TrainingResult run_training_with(const OrthoDataset& data, std::span<const double> w0,
                                        const TrainConfig& config, const BatchSource& source,
                                        const BatchObserver& observer = {}) {
  config.validate();
  require_same_size(w0.size(), data.n(), "run_training");
  if (!detail::finite_all(w0)) throw InvalidInput("run_training: w0 is not finite");

  const std::size_t m = data.m();
  const std::size_t n = data.n();
  NeuronState state = to_coords(data, w0);

  Vec predicted;
  Vec predicted_coords;
  try {
    predicted = predicted_gd_limit(data, w0, config.activation);
    predicted_coords = to_coords(data, predicted).coords;
  } catch (const DegenerateError&) {
    predicted.clear();
  }
  const double prefilter = config.conv_tol * std::sqrt(static_cast<double>(n));

  TrainingResult result;
  auto make_record = [&](std::size_t t, double nsq, double r, std::size_t i_star, bool hit, double dr) {
    TrajectoryRecord rec;
    rec.t = t;
    const PhiPsi pp = phi_psi(state.coords, m);
    rec.phi = pp.phi;
    rec.psi = pp.psi;
    rec.r = r;
    rec.norm_sq = nsq;
    rec.loss = loss_from_coords(state.coords, m, config.activation);
    rec.i_star = i_star;
    rec.batch_hit = hit;
    rec.delta_r = dr;
    if (config.keep_coords) rec.coords = state.coords;
    return rec;
  };

  auto classify = [&]() {
    LimitLabel dp = detail::match_datapoint(state.coords, m, config.conv_tol);
    if (dp.converged() || predicted.empty()) return dp;
    double dist_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = state.coords[i] - predicted_coords[i];
      dist_sq += d * d;
    }
    if (!(std::sqrt(dist_sq) < prefilter)) return LimitLabel::none();
    return classify_limit(state, data, predicted, config.conv_tol);
  };

  double nsq = norm_sq(state.coords);
  std::size_t i_star = 0;
  double r = detail::safe_log_ratio(state.coords, m, i_star);
  result.trajectory.push_back(make_record(0, nsq, r, i_star, false, 0.0));

  LimitLabel label = classify();
  std::size_t t = 0;
  Batch applied;
  while (!label.converged() && t < config.max_steps) {
    const Batch raw = source(t);
    applied = effective_batch(raw, state.coords, config.activation);
    if (observer) observer(t, applied);
    const bool hit = std::binary_search(applied.begin(), applied.end(), i_star);

    step_coords_inplace(state.coords, applied, config.eta, nsq);
    ++t;
    nsq = norm_sq(state.coords);
    if (!std::isfinite(nsq)) throw DivergenceError(t);

    std::size_t next_star = 0;
    const double next_r = detail::safe_log_ratio(state.coords, m, next_star);
    const double dr = next_r - r;
    label = classify();
    if (t % config.record_stride == 0 || label.converged() || t == config.max_steps) {
      result.trajectory.push_back(make_record(t, nsq, next_r, next_star, hit, dr));
    }
    r = next_r;
    i_star = next_star;
  }

  result.summary.steps = t;
  result.summary.converged = label.converged();
  result.summary.limit = label;
  result.final_state = std::move(state);
  result.last_applied = std::move(applied);
  return result;
}

/// Trains from w0 with the batches prescribed by config.strategy.
inline TrainingResult run_training(const OrthoDataset& data, std::span<const double> w0,
                                   const TrainConfig& config, const BatchObserver& observer = {}) {
  auto sampler = std::make_shared<BatchSampler>(config.strategy, data.m(), config.seed);
  return run_training_with(
      data, w0, config, [sampler](std::size_t t) { return sampler->next(t); }, observer);
}

}  // namespace batchlens

#endif  // BATCHLENS_DYNAMICS_HPP
