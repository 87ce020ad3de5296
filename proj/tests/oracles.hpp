#ifndef BATCHLENS_TESTS_ORACLES_HPP
#define BATCHLENS_TESTS_ORACLES_HPP

// Reference computations used by the tests. They work directly from the
// model definition (ambient vectors, explicit matrices, long double) and do
// not call into the library's coordinate formulas.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, square

inline long double dot(const Vec& a, const Vec& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return s;
}

inline Vec normalized(const Vec& v) {
  const long double len = std::sqrt(dot(v, v));
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i] / len);
  return out;
}

inline Vec unit(std::size_t n, std::size_t i) {
  Vec e(n, 0.0);
  e[i] = 1.0;
  return e;
}

/// Gradient of 1/2 |x - w phi(<w,x>)|^2 written out from the chain rule.
inline Vec pointwise_gradient(const Vec& w, const Vec& x, bool relu) {
  const long double z = dot(w, x);
  const std::size_t n = w.size();
  Vec g(n, 0.0);
  if (relu && !(z > 0.0L)) return g;
  // residual r = w z - x; gradient = z r + x <w, r>
  std::vector<long double> r(n);
  for (std::size_t k = 0; k < n; ++k) r[k] = w[k] * z - x[k];
  long double wr = 0.0L;
  for (std::size_t k = 0; k < n; ++k) wr += w[k] * r[k];
  for (std::size_t k = 0; k < n; ++k) g[k] = static_cast<double>(z * r[k] + x[k] * wr);
  return g;
}

/// One minibatch step in ambient space; columns[i] is a_i.
inline Vec ambient_step(const Vec& w, const std::vector<Vec>& columns, const std::vector<std::size_t>& batch,
                        double eta, bool relu) {
  Vec out = w;
  for (std::size_t i : batch) {
    const Vec g = pointwise_gradient(w, columns[i], relu);
    for (std::size_t k = 0; k < w.size(); ++k) out[k] -= eta * g[k];
  }
  return out;
}

inline long double loss(const Vec& w, const std::vector<Vec>& columns, std::size_t m, bool relu) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < m; ++i) {
    long double z = dot(w, columns[i]);
    if (relu) z = std::max(0.0L, z);
    long double sq = 0.0L;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const long double d = columns[i][k] - w[k] * z;
      sq += d * d;
    }
    total += 0.5L * sq;
  }
  return total / static_cast<long double>(m);
}

/// Hessian of g_i(w) = relu(<w,a>)^2 (|w|^2 / 2 - 1) on the active side, as an explicit matrix.
inline Mat term_hessian(const Vec& w, const Vec& a) {
  const std::size_t n = w.size();
  const long double c = dot(w, a);
  const long double wsq = dot(w, w);
  Mat h(n, Vec(n, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t s = 0; s < n; ++s) {
      long double v = (wsq - 2.0L) * a[r] * a[s] + 2.0L * c * (a[r] * w[s] + w[r] * a[s]);
      if (r == s) v += c * c;
      h[r][s] = static_cast<double>(v);
    }
  }
  return h;
}

inline long double quad_form(const Mat& h, const Vec& v) {
  long double s = 0.0L;
  for (std::size_t r = 0; r < v.size(); ++r) {
    for (std::size_t c = 0; c < v.size(); ++c) s += static_cast<long double>(v[r]) * h[r][c] * v[c];
  }
  return s;
}

/// Second one-sided derivative of the relu loss along v at w, term by term.
inline long double one_sided_curvature(const Vec& w, const Vec& v, const std::vector<Vec>& columns, std::size_t m,
                                       double kink_tol = 1e-9) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < m; ++i) {
    const long double c = dot(w, columns[i]);
    const long double alpha = dot(v, columns[i]);
    const bool active = std::abs(static_cast<double>(c)) <= kink_tol ? alpha >= 0.0L : c > 0.0L;
    if (!active) continue;
    Vec w_eff = w;
    if (std::abs(static_cast<double>(c)) <= kink_tol) {
      // Evaluate on the kink itself.
      for (std::size_t k = 0; k < w.size(); ++k) w_eff[k] = static_cast<double>(w[k] - c * columns[i][k]);
    }
    total += quad_form(term_hessian(w_eff, columns[i]), v);
  }
  return total / static_cast<long double>(m);
}

/// Classical Gram-Schmidt in long double; used only to compare subspaces.
inline long double max_gram_error(const std::vector<Vec>& columns) {
  long double worst = 0.0L;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      const long double target = i == j ? 1.0L : 0.0L;
      worst = std::max(worst, std::abs(dot(columns[i], columns[j]) - target));
    }
  }
  return worst;
}

struct PhiPsi {
  long double phi, psi;
};

/// Full-batch (Phi, Psi) recursion, evaluated in long double.
inline PhiPsi two_dim_step(long double phi, long double psi, long double eta) {
  const long double g = 2.0L - 2.0L * phi - psi;
  return {phi * (1.0L + eta * g) * (1.0L + eta * g), psi * (1.0L - eta * phi) * (1.0L - eta * phi)};
}

inline Vec random_gaussian(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace oracle

#endif  // BATCHLENS_TESTS_ORACLES_HPP
