#ifndef BATCHLENS_OBSERVABLES_HPP
#define BATCHLENS_OBSERVABLES_HPP

// Scalar summaries of a neuron state: in-span and off-span mass, the log-ratio
// alignment process, cosine similarities, the positive set, the predicted
// full-batch limit, and limit classification.

#include <batchlens/activation.hpp>
#include <batchlens/basis_data.hpp>
#include <batchlens/errors.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace batchlens {

struct PhiPsi {
  double phi = 0.0;  // sum_{i<m} c(i)^2
  double psi = 0.0;  // sum_{j>=m} c(j)^2
};

inline PhiPsi phi_psi(std::span<const double> coords, std::size_t m) {
  if (m > coords.size()) throw DimensionError("phi_psi: m exceeds state dimension");
  PhiPsi out;
  for (std::size_t i = 0; i < m; ++i) out.phi += coords[i] * coords[i];
  for (std::size_t j = m; j < coords.size(); ++j) out.psi += coords[j] * coords[j];
  return out;
}

inline PhiPsi phi_psi(const NeuronState& state, std::size_t m) { return phi_psi(state.coords, m); }

struct LogRatio {
  double r = 0.0;  // +inf once every other in-span coordinate is exactly zero
  std::size_t i_star = 0;
};

inline constexpr double kInfiniteR = std::numeric_limits<double>::infinity();

/// R = log(|c(i*)| / sum_{l != i*, l < m} |c(l)|) with i* the smallest index
/// maximizing |c(i)| over i < m.
inline LogRatio log_ratio(std::span<const double> coords, std::size_t m) {
  if (m < 2) throw InvalidParameter("log_ratio needs m >= 2");
  if (m > coords.size()) throw DimensionError("log_ratio: m exceeds state dimension");
  std::size_t best = 0;
  double best_abs = std::abs(coords[0]);
  for (std::size_t i = 1; i < m; ++i) {
    const double a = std::abs(coords[i]);
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  if (best_abs == 0.0) throw InvalidInput("log_ratio: all in-span coordinates are zero");
  double rest = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (i != best) rest += std::abs(coords[i]);
  }
  if (rest == 0.0) return {kInfiniteR, best};
  return {std::log(best_abs) - std::log(rest), best};
}

inline LogRatio log_ratio(const NeuronState& state, std::size_t m) { return log_ratio(state.coords, m); }

inline double cossim(std::span<const double> w, std::span<const double> x) {
  require_same_size(w.size(), x.size(), "cossim");
  const double nw = norm(w);
  const double nx = norm(x);
  if (nw == 0.0 || nx == 0.0) throw InvalidInput("cossim of a zero vector");
  return std::min(1.0, std::abs(dot(w, x)) / (nw * nx));
}

/// Maximum cosine similarity between w and the training points a_1..a_m.
inline double cossim_dataset(std::span<const double> w, const OrthoDataset& data) {
  require_same_size(w.size(), data.n(), "cossim_dataset");
  const double nw = norm(w);
  if (nw == 0.0) throw InvalidInput("cossim of a zero vector");
  double best = 0.0;
  for (std::size_t i = 0; i < data.m(); ++i) best = std::max(best, std::abs(dot(w, data.column(i))));
  return std::min(1.0, best / nw);
}

/// Indices i < m with c(i) > 0 (zeros excluded).
inline std::vector<std::size_t> positive_set(std::span<const double> coords, std::size_t m) {
  if (m > coords.size()) throw DimensionError("positive_set: m exceeds state dimension");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m; ++i) {
    if (coords[i] > 0.0) out.push_back(i);
  }
  return out;
}

inline std::vector<std::size_t> positive_set(const NeuronState& state, std::size_t m) {
  return positive_set(state.coords, m);
}

/// Normalized projection of w0 onto span{a_i : i in S}, S = [m] for linear
/// and S = positive set for relu.
inline Vec predicted_gd_limit(const OrthoDataset& data, std::span<const double> w0, Activation act) {
  NeuronState c0 = to_coords(data, w0);
  NeuronState proj{Vec(data.n(), 0.0)};
  for (std::size_t i = 0; i < data.m(); ++i) {
    if (act == Activation::linear || c0.coords[i] > 0.0) proj.coords[i] = c0.coords[i];
  }
  const double len = norm(proj.coords);
  if (len == 0.0) throw DegenerateError("predicted_gd_limit: projection of w0 is zero");
  for (double& c : proj.coords) c /= len;
  return to_ambient(data, proj);
}

struct LimitLabel {
  enum class Kind { datapoint, gd_mixture, not_converged };
  Kind kind = Kind::not_converged;
  std::size_t index = 0;  // 0-based datapoint index, valid for Kind::datapoint
  int sign = 0;           // +1 or -1 for Kind::datapoint

  bool converged() const noexcept { return kind != Kind::not_converged; }
  bool operator==(const LimitLabel&) const = default;

  static LimitLabel datapoint(std::size_t i, int s) { return {Kind::datapoint, i, s}; }
  static LimitLabel mixture() { return {Kind::gd_mixture, 0, 0}; }
  static LimitLabel none() { return {}; }
};

/// Text form used in manifests: "+a_3", "-a_1" (1-based), "gd_mixture", "not_converged".
inline std::string to_string(const LimitLabel& label) {
  switch (label.kind) {
    case LimitLabel::Kind::datapoint:
      return std::string(label.sign > 0 ? "+" : "-") + "a_" + std::to_string(label.index + 1);
    case LimitLabel::Kind::gd_mixture:
      return "gd_mixture";
    case LimitLabel::Kind::not_converged:
      break;
  }
  return "not_converged";
}

inline LimitLabel parse_limit_label(const std::string& s) {
  if (s == "gd_mixture") return LimitLabel::mixture();
  if (s == "not_converged") return LimitLabel::none();
  if (s.size() > 3 && (s[0] == '+' || s[0] == '-') && s.compare(1, 2, "a_") == 0) {
    const std::size_t idx = std::stoul(s.substr(3));
    if (idx == 0) throw InvalidInput("limit label index must be >= 1");
    return LimitLabel::datapoint(idx - 1, s[0] == '+' ? 1 : -1);
  }
  throw InvalidInput("unrecognized limit label '" + s + "'");
}

namespace detail {

// Datapoint test in coordinates: |c(i) - s| < tol and every other |c(j)| < tol.
inline LimitLabel match_datapoint(std::span<const double> coords, std::size_t m, double tol) {
  std::size_t best = 0;
  double best_abs = -1.0;
  for (std::size_t j = 0; j < coords.size(); ++j) {
    const double a = std::abs(coords[j]);
    if (a > best_abs) {
      best_abs = a;
      best = j;
    }
  }
  if (best >= m) return LimitLabel::none();
  const int s = coords[best] > 0.0 ? 1 : -1;
  if (!(std::abs(coords[best] - s) < tol)) return LimitLabel::none();
  for (std::size_t j = 0; j < coords.size(); ++j) {
    if (j != best && !(std::abs(coords[j]) < tol)) return LimitLabel::none();
  }
  return LimitLabel::datapoint(best, s);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace detail

/// Classifies a state as a signed datapoint, the predicted full-batch point,
/// or neither. An empty `predicted` skips the full-batch comparison.
inline LimitLabel classify_limit(const NeuronState& state, const OrthoDataset& data,
                                 std::span<const double> predicted, double tol) {
  if (!(tol > 0.0)) throw InvalidParameter("classify_limit: tol must be positive");
  require_same_size(state.size(), data.n(), "classify_limit");
  if (tol < 0.5) {
    const LimitLabel dp = detail::match_datapoint(state.coords, data.m(), tol);
    if (dp.converged()) return dp;
  } else {
    for (std::size_t i = 0; i < data.m(); ++i) {
      for (int s : {1, -1}) {
        double worst = 0.0;
        for (std::size_t j = 0; j < state.size(); ++j) {
          const double target = j == i ? static_cast<double>(s) : 0.0;
          worst = std::max(worst, std::abs(state.coords[j] - target));
        }
        if (worst < tol) return LimitLabel::datapoint(i, s);
      }
    }
  }
  if (!predicted.empty()) {
    require_same_size(predicted.size(), data.n(), "classify_limit predicted");
    const Vec w = to_ambient(data, state);
    if (detail::max_abs_diff(w, predicted) < tol) {
      // With a single positive coordinate the full-batch point is itself a datapoint.
      const LimitLabel same = detail::match_datapoint(to_coords(data, predicted).coords, data.m(), 1e-12);
      return same.converged() ? same : LimitLabel::mixture();
    }
  }
  return LimitLabel::none();
}

/// max over snapshots t and i < m with c_0(i) != 0 of
/// |c_t(i) - c_0(i) sqrt(Phi_t / Phi_0)|.
inline double gd_invariant_residual(std::span<const Vec> snapshots, std::size_t m) {
  if (snapshots.empty()) return 0.0;
  const Vec& c0 = snapshots.front();
  const double phi0 = phi_psi(c0, m).phi;
  if (phi0 == 0.0) throw DegenerateError("gd_invariant_residual: Phi_0 is zero");
  double worst = 0.0;
  for (const Vec& ct : snapshots) {
    const double scale = std::sqrt(phi_psi(ct, m).phi / phi0);
    for (std::size_t i = 0; i < m; ++i) {
      if (c0[i] == 0.0) continue;
      worst = std::max(worst, std::abs(ct[i] - c0[i] * scale));
    }
  }
  return worst;
}

}  // namespace batchlens

#endif  // BATCHLENS_OBSERVABLES_HPP
