#ifndef BATCHLENS_WALK_STATS_HPP
#define BATCHLENS_WALK_STATS_HPP

// Increment statistics of the log-ratio process R_t over a late-time window,
// together with the theoretical drift, hit-step and bounded-increment
// constants they are compared against.

#include <batchlens/dynamics.hpp>
#include <batchlens/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace batchlens {

struct WalkBounds {
  double drift = 0.0;  // eta b (m-b)^2 / (2 m (m-1)^2)
  double hit = 0.0;    // log(1 + 19 eta / 20)
  double beta = 0.0;   // 1 - 2 eta
  double gamma = 0.0;  // (1 - 2 eta) / (1 + 2 eta)
  double k = 0.0;      // max(|log(gamma beta^2)|, |log(1 / beta^2)|)
};

inline WalkBounds walk_bounds(double eta, std::size_t m, std::size_t b) {
  if (m < 2) throw InvalidParameter("walk_bounds needs m >= 2");
  const double md = static_cast<double>(m);
  const double bd = static_cast<double>(b);
  WalkBounds w;
  w.drift = eta * bd * (md - bd) * (md - bd) / (2.0 * md * (md - 1.0) * (md - 1.0));
  w.hit = std::log(1.0 + 0.95 * eta);
  w.beta = 1.0 - 2.0 * eta;
  w.gamma = (1.0 - 2.0 * eta) / (1.0 + 2.0 * eta);
  w.k = std::max(std::abs(std::log(w.gamma * w.beta * w.beta)), std::abs(std::log(1.0 / (w.beta * w.beta))));
  return w;
}

struct IncrementStats {
  std::size_t n_hit = 0;
  std::size_t n_miss = 0;
  double mean_dr_hit = 0.0;
  double mean_dr_miss = 0.0;
  double mean_dr_all = 0.0;
  double se_all = 0.0;
  double max_abs_dr = 0.0;
  double min_dr_hit = std::numeric_limits<double>::infinity();
  std::size_t window_start = 0;
  std::size_t window_end = 0;  // one past the last step included
  bool truncated = false;      // window was cut at the first R = +inf

  // Raw sums, kept so that several runs can be pooled exactly.
  double sum_hit = 0.0;
  double sum_miss = 0.0;
  double sum_sq = 0.0;

  WalkBounds bounds;

  std::size_t count() const noexcept { return n_hit + n_miss; }
};

namespace detail {

inline void finalize(IncrementStats& s) {
  const double n = static_cast<double>(s.count());
  s.mean_dr_hit = s.n_hit ? s.sum_hit / static_cast<double>(s.n_hit) : 0.0;
  s.mean_dr_miss = s.n_miss ? s.sum_miss / static_cast<double>(s.n_miss) : 0.0;
  s.mean_dr_all = (s.sum_hit + s.sum_miss) / n;
  if (s.count() > 1) {
    const double var = std::max(0.0, (s.sum_sq - n * s.mean_dr_all * s.mean_dr_all) / (n - 1.0));
    s.se_all = std::sqrt(var / n);
  } else {
    s.se_all = 0.0;
  }
}

}  // namespace detail

/// Aggregates delta_r over records with window_start <= t, stopping before
/// the first record whose R is +inf.
inline IncrementStats increment_stats(std::span<const TrajectoryRecord> trajectory, double eta, std::size_t m,
                                      std::size_t b, std::size_t window_start) {
  IncrementStats s;
  s.bounds = walk_bounds(eta, m, b);
  s.window_start = window_start;
  s.window_end = window_start;
  for (const TrajectoryRecord& rec : trajectory) {
    if (rec.t == 0 || rec.t < window_start) continue;
    if (std::isinf(rec.r)) {
      s.truncated = true;
      break;
    }
    const double dr = rec.delta_r;
    if (rec.batch_hit) {
      ++s.n_hit;
      s.sum_hit += dr;
      s.min_dr_hit = std::min(s.min_dr_hit, dr);
    } else {
      ++s.n_miss;
      s.sum_miss += dr;
    }
    s.sum_sq += dr * dr;
    s.max_abs_dr = std::max(s.max_abs_dr, std::abs(dr));
    s.window_end = rec.t + 1;
  }
  if (s.count() == 0) throw InvalidWindow("increment_stats: empty window");
  detail::finalize(s);
  return s;
}

/// Pools several windows as if they were one sample of increments.
inline IncrementStats pool(std::span<const IncrementStats> parts) {
  if (parts.empty()) throw InvalidWindow("pool: nothing to pool");
  IncrementStats s;
  s.bounds = parts.front().bounds;
  s.window_start = parts.front().window_start;
  for (const IncrementStats& p : parts) {
    s.n_hit += p.n_hit;
    s.n_miss += p.n_miss;
    s.sum_hit += p.sum_hit;
    s.sum_miss += p.sum_miss;
    s.sum_sq += p.sum_sq;
    s.max_abs_dr = std::max(s.max_abs_dr, p.max_abs_dr);
    s.min_dr_hit = std::min(s.min_dr_hit, p.min_dr_hit);
    s.truncated = s.truncated || p.truncated;
    s.window_start = std::min(s.window_start, p.window_start);
    s.window_end = std::max(s.window_end, p.window_end);
  }
  detail::finalize(s);
  return s;
}

}  // namespace batchlens

#endif  // BATCHLENS_WALK_STATS_HPP
