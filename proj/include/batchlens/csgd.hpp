#ifndef BATCHLENS_CSGD_HPP
#define BATCHLENS_CSGD_HPP

// Two-dimensional cyclic SGD (m = n = 2): the epoch map F that applies the
// a_1 step followed by the a_2 step to (y, z) = (<w,a_1>, <w,a_2>), the
// alignment potential V = z / y, and a grid scan of the region
// {y >= z > 0, y^2 + z^2 <= 1 + eta/4} for V-decrease and invariance.

#include <batchlens/errors.hpp>
#include <batchlens/random.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

namespace batchlens {

inline std::pair<double, double> csgd_epoch_map(double y, double z, double eta) {
  const double y1 = y * (1.0 + eta * (2.0 - 2.0 * y * y - z * z));
  const double z1 = z * (1.0 - eta * y * y);
  const double y2 = y1 * (1.0 - eta * z1 * z1);
  const double z2 = z1 * (1.0 + eta * (2.0 - 2.0 * z1 * z1 - y1 * y1));
  return {y2, z2};
}

inline double csgd_potential(double y, double z) {
  if (!(y > 0.0)) throw InvalidInput("csgd_potential needs y > 0");
  return z / y;
}

inline bool in_csgd_region(double y, double z, double eta) {
  return y >= z && z > 0.0 && y * y + z * z <= 1.0 + eta / 4.0;
}

struct CsgdScanReport {
  std::size_t grid_size = 0;
  double eta = 0.0;
  std::size_t points_checked = 0;
  std::size_t potential_violations = 0;   // V(F(p)) >= V(p)
  std::size_t invariance_violations = 0;  // F(p) left the region
  double max_potential_change = -std::numeric_limits<double>::infinity();  // closest to zero from below
  double worst_y = 0.0;
  double worst_z = 0.0;

  bool clean() const noexcept { return potential_violations == 0 && invariance_violations == 0; }
};

/// Grid y, z in {k / (grid_size + 1) : k = 1..grid_size}, restricted to the region.
inline CsgdScanReport csgd_region_scan(std::size_t grid_size, double eta) {
  if (grid_size < 16) throw InvalidParameter("csgd_region_scan needs grid_size >= 16");
  if (!(eta > 0.0)) throw InvalidParameter("eta must be positive");
  CsgdScanReport rep;
  rep.grid_size = grid_size;
  rep.eta = eta;
  const double h = 1.0 / static_cast<double>(grid_size + 1);
  for (std::size_t iy = 1; iy <= grid_size; ++iy) {
    const double y = h * static_cast<double>(iy);
    for (std::size_t iz = 1; iz <= iy; ++iz) {
      const double z = h * static_cast<double>(iz);
      if (!in_csgd_region(y, z, eta)) continue;
      ++rep.points_checked;
      const auto [fy, fz] = csgd_epoch_map(y, z, eta);
      const bool inside = in_csgd_region(fy, fz, eta);
      if (!inside) ++rep.invariance_violations;
      const double change = fy > 0.0 ? csgd_potential(fy, fz) - csgd_potential(y, z)
                                     : std::numeric_limits<double>::infinity();
      if (!(change < 0.0)) ++rep.potential_violations;
      if (change > rep.max_potential_change) {
        rep.max_potential_change = change;
        rep.worst_y = y;
        rep.worst_z = z;
      }
    }
  }
  return rep;
}

/// Initial (y, z) drawn uniformly from {y >= z > 0, y^2 + z^2 < 1}.
inline std::pair<double, double> csgd_init(std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::init);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (;;) {
    double y = unif(rng);
    double z = unif(rng);
    if (y < z) std::swap(y, z);
    if (z > 0.0 && y * y + z * z < 1.0) return {y, z};
  }
}

}  // namespace batchlens

#endif  // BATCHLENS_CSGD_HPP
