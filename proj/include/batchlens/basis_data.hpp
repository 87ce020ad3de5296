#ifndef BATCHLENS_BASIS_DATA_HPP
#define BATCHLENS_BASIS_DATA_HPP

// Orthonormal datasets a_1..a_m completed to a basis a_1..a_n of R^n, and the
// change of variables between ambient weights w and data coordinates
// c(i) = <w, a_i>.

#include <batchlens/errors.hpp>
#include <batchlens/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace batchlens {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

enum class DatasetKind { standard, random };

class OrthoDataset {
 public:
  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return m_; }
  DatasetKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Column-major n-by-n basis; column i is a_{i+1}.
  std::span<const double> basis() const noexcept { return basis_; }

  std::span<const double> column(std::size_t i) const noexcept {
    return std::span<const double>(basis_).subspan(i * n_, n_);
  }

  double entry(std::size_t row, std::size_t col) const noexcept { return basis_[col * n_ + row]; }

  /// max |(B^T B - I)_{ij}|.
  double orthonormality_residual() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i; j < n_; ++j) {
        const double target = i == j ? 1.0 : 0.0;
        worst = std::max(worst, std::abs(dot(column(i), column(j)) - target));
      }
    }
    return worst;
  }

 private:
  OrthoDataset(std::size_t n, std::size_t m, DatasetKind kind, std::uint64_t seed, Vec basis)
      : n_(n), m_(m), kind_(kind), seed_(seed), basis_(std::move(basis)) {}

  friend OrthoDataset make_standard_dataset(std::size_t, std::size_t);
  friend OrthoDataset make_random_orthonormal_dataset(std::size_t, std::size_t, std::uint64_t);

  std::size_t n_;
  std::size_t m_;
  DatasetKind kind_;
  std::uint64_t seed_;
  Vec basis_;
};

struct NeuronState {
  Vec coords;

  std::size_t size() const noexcept { return coords.size(); }
  bool operator==(const NeuronState&) const = default;
};

namespace detail {

inline void check_dims(std::size_t n, std::size_t m) {
  if (n == 0 || m == 0 || m > n) {
    throw InvalidParameter("invalid dimensions: need 1 <= m <= n, got n=" + std::to_string(n) +
                           ", m=" + std::to_string(m));
  }
}

// Q factor of a column-major square matrix via Householder reflections, with
// columns flipped so that every diagonal entry of R is nonnegative.
inline Vec householder_q(Vec a, std::size_t n) {
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[c * n + r]; };
  std::vector<Vec> reflectors(n);
  Vec r_diag(n, 0.0);

  for (std::size_t k = 0; k < n; ++k) {
    double col_norm_sq = 0.0;
    for (std::size_t r = k; r < n; ++r) col_norm_sq += at(r, k) * at(r, k);
    const double col_norm = std::sqrt(col_norm_sq);
    if (col_norm == 0.0) continue;

    const double x0 = at(k, k);
    const double alpha = x0 >= 0.0 ? -col_norm : col_norm;
    Vec v(n - k);
    for (std::size_t r = k; r < n; ++r) v[r - k] = at(r, k);
    v[0] -= alpha;
    const double v_norm = std::sqrt(norm_sq(v));
    if (v_norm == 0.0) {
      r_diag[k] = alpha;
      continue;
    }
    for (double& x : v) x /= v_norm;

    for (std::size_t c = k; c < n; ++c) {
      double s = 0.0;
      for (std::size_t r = k; r < n; ++r) s += v[r - k] * at(r, c);
      for (std::size_t r = k; r < n; ++r) at(r, c) -= 2.0 * s * v[r - k];
    }
    r_diag[k] = at(k, k);
    reflectors[k] = std::move(v);
  }

  // Q = H_0 H_1 ... H_{n-1} applied to the identity, rightmost first.
  Vec q(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) q[i * n + i] = 1.0;
  for (std::size_t kk = n; kk-- > 0;) {
    const Vec& v = reflectors[kk];
    if (v.empty()) continue;
    for (std::size_t c = 0; c < n; ++c) {
      double s = 0.0;
      for (std::size_t r = kk; r < n; ++r) s += v[r - kk] * q[c * n + r];
      for (std::size_t r = kk; r < n; ++r) q[c * n + r] -= 2.0 * s * v[r - kk];
    }
  }

  for (std::size_t c = 0; c < n; ++c) {
    if (r_diag[c] < 0.0) {
      for (std::size_t r = 0; r < n; ++r) q[c * n + r] = -q[c * n + r];
    }
  }
  return q;
}

}  // namespace detail

inline OrthoDataset make_standard_dataset(std::size_t n, std::size_t m) {
  detail::check_dims(n, m);
  Vec basis(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) basis[i * n + i] = 1.0;
  return OrthoDataset(n, m, DatasetKind::standard, 0, std::move(basis));
}

/// Basis is the orthonormal factor of a seeded standard Gaussian matrix.
inline OrthoDataset make_random_orthonormal_dataset(std::size_t n, std::size_t m,
                                                    std::uint64_t seed) {
  detail::check_dims(n, m);
  Rng rng = make_rng(seed, Stream::basis);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec g(n * n);
  for (double& x : g) x = normal(rng);
  return OrthoDataset(n, m, DatasetKind::random, seed, detail::householder_q(std::move(g), n));
}

inline NeuronState to_coords(const OrthoDataset& data, std::span<const double> w) {
  require_same_size(w.size(), data.n(), "to_coords");
  NeuronState state{Vec(data.n())};
  for (std::size_t i = 0; i < data.n(); ++i) state.coords[i] = dot(w, data.column(i));
  return state;
}

inline Vec to_ambient(const OrthoDataset& data, const NeuronState& state) {
  require_same_size(state.size(), data.n(), "to_ambient");
  const std::size_t n = data.n();
  Vec w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double c = state.coords[i];
    if (c == 0.0) continue;
    const auto col = data.column(i);
    for (std::size_t r = 0; r < n; ++r) w[r] += c * col[r];
  }
  return w;
}

namespace detail {

inline Vec gaussian_draw(std::size_t n, double sigma_init, std::uint64_t seed, std::uint64_t index) {
  if (!(sigma_init > 0.0) || !std::isfinite(sigma_init)) {
    throw InvalidParameter("sigma_init must be positive");
  }
  if (n == 0) throw InvalidParameter("n must be positive");
  Rng rng = make_rng(seed, Stream::init, index);
  std::normal_distribution<double> normal(0.0, sigma_init / std::sqrt(static_cast<double>(n)));
  Vec w(n);
  for (double& x : w) x = normal(rng);
  return w;
}

}  // namespace detail

/// Draws w_0 ~ N(0, (sigma_init^2 / n) I_n).
inline Vec gaussian_init(std::size_t n, double sigma_init, std::uint64_t seed) {
  return detail::gaussian_draw(n, sigma_init, seed, 0);
}

/// gaussian_init, redrawn on successive substreams of `seed` until |w| < 1.
/// The first draw coincides with gaussian_init(n, sigma_init, seed).
inline Vec gaussian_init_in_ball(std::size_t n, double sigma_init, std::uint64_t seed) {
  for (std::uint64_t k = 0;; ++k) {
    Vec w = detail::gaussian_draw(n, sigma_init, seed, k);
    if (norm_sq(w) < 1.0) return w;
  }
}

}  // namespace batchlens

#endif  // BATCHLENS_BASIS_DATA_HPP
