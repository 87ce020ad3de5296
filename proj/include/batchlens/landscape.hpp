#ifndef BATCHLENS_LANDSCAPE_HPP
#define BATCHLENS_LANDSCAPE_HPP

// ReLU loss landscape: the rewritten objective, membership in the set of
// global minima, one-sided finite differences, and curvature at minima.

#include <batchlens/basis_data.hpp>
#include <batchlens/errors.hpp>
#include <batchlens/parallel.hpp>
#include <batchlens/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace batchlens {

/// Coordinates with |c| at or below this are treated as sitting on a kink.
inline constexpr double kKinkTol = 1e-9;
inline constexpr double kMembershipTol = 1e-9;

/// L(w) = 1/2 + (1/m) sum_i relu(c_i)^2 (|w|^2 / 2 - 1).
inline double loss_rewritten(const OrthoDataset& data, std::span<const double> w) {
  require_same_size(w.size(), data.n(), "loss_rewritten");
  const double half_norm = 0.5 * norm_sq(w) - 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < data.m(); ++i) {
    const double c = std::max(0.0, dot(w, data.column(i)));
    acc += c * c;
  }
  return 0.5 + acc * half_norm / static_cast<double>(data.m());
}

inline double global_min_value(std::size_t m) {
  if (m == 0) throw InvalidParameter("global_min_value needs m >= 1");
  return static_cast<double>(m - 1) / (2.0 * static_cast<double>(m));
}

struct MinimaMembership {
  bool in_M = false;
  Vec coeffs;  // <w, a_i> for i < m
  double off_span_mass = 0.0;
  double sum_sq = 0.0;
  double min_coeff = 0.0;
};

inline MinimaMembership global_min_check(const OrthoDataset& data, std::span<const double> w, double tol) {
  if (!(tol > 0.0)) throw InvalidParameter("global_min_check: tol must be positive");
  const NeuronState c = to_coords(data, w);
  MinimaMembership out;
  out.coeffs.assign(c.coords.begin(), c.coords.begin() + static_cast<std::ptrdiff_t>(data.m()));
  out.min_coeff = std::numeric_limits<double>::infinity();
  for (double x : out.coeffs) {
    out.sum_sq += x * x;
    out.min_coeff = std::min(out.min_coeff, x);
  }
  for (std::size_t j = data.m(); j < data.n(); ++j) out.off_span_mass += c.coords[j] * c.coords[j];
  out.in_M = out.off_span_mass < tol && std::abs(out.sum_sq - 1.0) < tol && out.min_coeff > -tol;
  return out;
}

namespace detail {

inline void check_direction(std::span<const double> x, std::span<const double> v, double h) {
  require_same_size(x.size(), v.size(), "one-sided derivative");
  if (!(h > 0.0)) throw InvalidParameter("finite-difference step must be positive");
  if (!(norm_sq(v) > 0.0)) throw InvalidParameter("direction must be nonzero");
}

template <class F>
double eval_along(F& f, std::span<const double> x, std::span<const double> v, double t, Vec& buf) {
  for (std::size_t k = 0; k < x.size(); ++k) buf[k] = x[k] + t * v[k];
  const double y = f(std::span<const double>(buf));
  if (!std::isfinite(y)) throw NumericError("function value is not finite");
  return y;
}

}  // namespace detail

/// Forward difference with one Richardson step: 2 D(h/2) - D(h).
template <class F>
double one_sided_d1(F&& f, std::span<const double> x, std::span<const double> v, double h = 1e-4) {
  detail::check_direction(x, v, h);
  Vec buf(x.size());
  const double f0 = detail::eval_along(f, x, v, 0.0, buf);
  const double d_full = (detail::eval_along(f, x, v, h, buf) - f0) / h;
  const double d_half = (detail::eval_along(f, x, v, 0.5 * h, buf) - f0) / (0.5 * h);
  return 2.0 * d_half - d_full;
}

/// (f(x + 2hv) - 2 f(x + hv) + f(x)) / h^2.
template <class F>
double one_sided_d2(F&& f, std::span<const double> x, std::span<const double> v, double h = 1e-4) {
  detail::check_direction(x, v, h);
  Vec buf(x.size());
  const double f0 = detail::eval_along(f, x, v, 0.0, buf);
  const double f1 = detail::eval_along(f, x, v, h, buf);
  const double f2 = detail::eval_along(f, x, v, 2.0 * h, buf);
  return (f2 - 2.0 * f1 + f0) / (h * h);
}

namespace detail {

// Second one-sided derivative of L along v, from coordinates of w (c) and of
// v (alpha) in the full basis.
inline double curvature_from_coords(std::span<const double> c, std::span<const double> alpha, std::size_t m) {
  double w_sq = 0.0;
  double v_sq = 0.0;
  double wv = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    w_sq += c[j] * c[j];
    v_sq += alpha[j] * alpha[j];
    wv += c[j] * alpha[j];
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const bool kink = std::abs(c[i]) <= kKinkTol;
    const bool active = kink ? alpha[i] >= 0.0 : c[i] > 0.0;
    if (!active) continue;
    const double ci = kink ? 0.0 : c[i];
    acc += (w_sq - 2.0) * alpha[i] * alpha[i] + 4.0 * ci * alpha[i] * wv + ci * ci * v_sq;
  }
  return acc / static_cast<double>(m);
}

inline Vec require_minimum(const OrthoDataset& data, std::span<const double> w) {
  const MinimaMembership mm = global_min_check(data, w, kMembershipTol);
  if (!mm.in_M) throw InvalidPoint("point is not a global minimum of the relu loss");
  return to_coords(data, w).coords;
}

}  // namespace detail

/// (1/m) sum_i D^2_v f_i(w) at a global minimum w.
inline double curvature_analytic(const OrthoDataset& data, std::span<const double> w, std::span<const double> v) {
  require_same_size(v.size(), data.n(), "curvature_analytic");
  const Vec c = detail::require_minimum(data, w);
  const Vec alpha = to_coords(data, v).coords;
  return detail::curvature_from_coords(c, alpha, data.m());
}

struct SharpnessReport {
  double max_curv_analytic = 0.0;  // 4 / m
  double max_curv_numeric = 0.0;   // one_sided_d2 along w / |w|
  double max_curv_sampled = 0.0;   // largest analytic curvature over sampled unit directions
  std::size_t n_directions = 0;
  double trace_analytic = 0.0;  // (2n + 8 - m - |S|) / (2m)
  double trace_mc = 0.0;
  double trace_mc_se = 0.0;
  std::size_t n_samples = 0;
  std::size_t s_size = 0;
};

/// Monte Carlo sample k uses its own substream of `seed`, so the estimate is
/// the same for any worker count. Directions for max_curv_sampled come from a
/// separate stream.
inline SharpnessReport sharpness_report(const OrthoDataset& data, std::span<const double> w, std::size_t n_samples,
                                        double h, std::uint64_t seed, std::size_t n_directions = 10000,
                                        std::size_t workers = 1) {
  if (n_samples < 1000) throw InvalidParameter("sharpness_report needs n_samples >= 1000");
  const Vec c = detail::require_minimum(data, w);
  const std::size_t n = data.n();
  const std::size_t m = data.m();
  const double md = static_cast<double>(m);

  SharpnessReport rep;
  rep.n_samples = n_samples;
  rep.n_directions = n_directions;
  for (std::size_t i = 0; i < m; ++i) {
    if (c[i] > kKinkTol) ++rep.s_size;
  }
  rep.max_curv_analytic = 4.0 / md;
  rep.trace_analytic =
      (2.0 * static_cast<double>(n) + 8.0 - md - static_cast<double>(rep.s_size)) / (2.0 * md);

  const Vec unit_w = [&] {
    Vec u(w.begin(), w.end());
    const double len = norm(u);
    for (double& x : u) x /= len;
    return u;
  }();
  auto loss = [&data](std::span<const double> x) { return loss_rewritten(data, x); };
  rep.max_curv_numeric = one_sided_d2(loss, w, unit_w, h);

  // A standard Gaussian in ambient space has standard Gaussian coordinates in
  // any orthonormal basis, so samples are drawn directly as coordinates.
  std::vector<double> values(n_samples);
  const std::size_t chunk = 4096;
  const std::size_t n_chunks = (n_samples + chunk - 1) / chunk;
  parallel_for(n_chunks, workers, [&](std::size_t ch) {
    Vec alpha(n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t end = std::min(n_samples, (ch + 1) * chunk);
    for (std::size_t k = ch * chunk; k < end; ++k) {
      Rng rng = make_rng(seed, Stream::trace, k);
      for (double& a : alpha) a = gauss(rng);
      values[k] = detail::curvature_from_coords(c, alpha, m);
    }
  });
  double sum = 0.0;
  for (double x : values) sum += x;
  const double mean = sum / static_cast<double>(n_samples);
  double ss = 0.0;
  for (double x : values) ss += (x - mean) * (x - mean);
  rep.trace_mc = mean;
  rep.trace_mc_se = std::sqrt(ss / static_cast<double>(n_samples - 1) / static_cast<double>(n_samples));

  double best = -std::numeric_limits<double>::infinity();
  Rng dir_rng = make_rng(seed, Stream::landscape, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec alpha(n);
  for (std::size_t k = 0; k < n_directions; ++k) {
    double len_sq = 0.0;
    do {
      len_sq = 0.0;
      for (double& a : alpha) {
        a = gauss(dir_rng);
        len_sq += a * a;
      }
    } while (len_sq == 0.0);
    const double inv = 1.0 / std::sqrt(len_sq);
    for (double& a : alpha) a *= inv;
    best = std::max(best, detail::curvature_from_coords(c, alpha, m));
  }
  rep.max_curv_sampled = n_directions ? best : 0.0;
  return rep;
}

}  // namespace batchlens

#endif  // BATCHLENS_LANDSCAPE_HPP
