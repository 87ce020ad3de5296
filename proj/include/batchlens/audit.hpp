#ifndef BATCHLENS_AUDIT_HPP
#define BATCHLENS_AUDIT_HPP

// Trajectory-wide bound checks: iterate norm, coordinate magnitude, sign
// stability, monotone off-span mass, the in-span mass floor, and (for full
// batches) N_t = Phi_t + (5/8) Psi_t staying below one.

#include <batchlens/dynamics.hpp>
#include <batchlens/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

namespace batchlens {

struct BoundsAudit {
  std::size_t records = 0;
  double max_norm_sq = 0.0;
  double norm_sq_limit = 0.0;  // 1 + eta / 4
  double max_abs_coord = 0.0;
  std::size_t sign_flips = 0;
  std::size_t psi_increases = 0;
  double min_phi_margin = 0.0;  // min_t Phi_t - min(Phi_0, 1 - Psi_0)
  double max_n_value = 0.0;     // max_t Phi_t + (5/8) Psi_t

  bool norm_ok() const noexcept { return max_norm_sq <= norm_sq_limit + 1e-12; }
  bool coords_ok() const noexcept { return max_abs_coord < 1.0 + 1e-12; }
  bool signs_ok() const noexcept { return sign_flips == 0; }
  bool psi_ok() const noexcept { return psi_increases == 0; }
  bool phi_ok() const noexcept { return min_phi_margin >= -1e-12; }
  /// N_t tends to 1 from below, so the last iterates can round up to 1.
  bool n_ok() const noexcept { return max_n_value < 1.0 + 1e-12; }
  /// The N_t bound is only claimed for full batches.
  bool all_ok(bool full_batch) const noexcept {
    return norm_ok() && coords_ok() && signs_ok() && psi_ok() && phi_ok() && (!full_batch || n_ok());
  }
};

/// Needs records produced with keep_coords; the first record must be t = 0.
/// `effective` lists the coordinates a relu run can update (its initial
/// positive set). When given, N_t is measured on that reduced problem: Phi
/// over those coordinates, Psi over all the others.
inline BoundsAudit audit_bounds(std::span<const TrajectoryRecord> trajectory, double eta,
                                std::span<const std::size_t> effective = {}) {
  if (trajectory.empty() || trajectory.front().t != 0) throw InvalidInput("audit_bounds needs the t = 0 record");
  const TrajectoryRecord& first = trajectory.front();
  if (first.coords.empty()) throw InvalidInput("audit_bounds needs recorded coordinates");
  BoundsAudit a;
  a.records = trajectory.size();
  a.norm_sq_limit = 1.0 + eta / 4.0;
  const double phi_floor = std::min(first.phi, 1.0 - first.psi);
  a.min_phi_margin = first.phi - phi_floor;
  double prev_psi = first.psi;
  for (const TrajectoryRecord& rec : trajectory) {
    require_same_size(rec.coords.size(), first.coords.size(), "audit_bounds");
    a.max_norm_sq = std::max(a.max_norm_sq, rec.norm_sq);
    for (std::size_t i = 0; i < rec.coords.size(); ++i) {
      a.max_abs_coord = std::max(a.max_abs_coord, std::abs(rec.coords[i]));
      const double c0 = first.coords[i];
      const double ct = rec.coords[i];
      if ((c0 > 0.0 && !(ct > 0.0)) || (c0 < 0.0 && !(ct < 0.0)) || (c0 == 0.0 && ct != 0.0)) ++a.sign_flips;
    }
    if (rec.psi > prev_psi) ++a.psi_increases;
    prev_psi = rec.psi;
    a.min_phi_margin = std::min(a.min_phi_margin, rec.phi - phi_floor);
    double phi_n = rec.phi;
    double psi_n = rec.psi;
    if (!effective.empty()) {
      phi_n = 0.0;
      for (std::size_t i : effective) phi_n += rec.coords.at(i) * rec.coords.at(i);
      psi_n = rec.norm_sq - phi_n;
    }
    a.max_n_value = std::max(a.max_n_value, phi_n + 0.625 * psi_n);
  }
  return a;
}

}  // namespace batchlens

#endif  // BATCHLENS_AUDIT_HPP
