#include <batchlens/basis_data.hpp>
#include <batchlens/dynamics.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace batchlens;

namespace {

std::vector<oracle::Vec> columns_of(const OrthoDataset& d) {
  std::vector<oracle::Vec> cols;
  for (std::size_t i = 0; i < d.n(); ++i) {
    auto c = d.column(i);
    cols.emplace_back(c.begin(), c.end());
  }
  return cols;
}

}  // namespace

TEST(StandardDataset, TwoByTwoIsIdentity) {
  const OrthoDataset d = make_standard_dataset(2, 2);
  EXPECT_EQ(d.n(), 2u);
  EXPECT_EQ(d.m(), 2u);
  EXPECT_EQ(d.kind(), DatasetKind::standard);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(d.entry(r, c), r == c ? 1.0 : 0.0);
  }
}

TEST(StandardDataset, SmallestCase) {
  const OrthoDataset d = make_standard_dataset(1, 1);
  ASSERT_EQ(d.basis().size(), 1u);
  EXPECT_EQ(d.basis()[0], 1.0);
}

TEST(StandardDataset, ResidualIsExactlyZero) {
  const OrthoDataset d = make_standard_dataset(5, 3);
  EXPECT_EQ(d.m(), 3u);
  EXPECT_EQ(d.orthonormality_residual(), 0.0);
}

TEST(StandardDataset, RejectsBadDimensions) {
  EXPECT_THROW(make_standard_dataset(2, 3), InvalidParameter);
  EXPECT_THROW(make_standard_dataset(3, 0), InvalidParameter);
  EXPECT_THROW(make_random_orthonormal_dataset(2, 3, 1), InvalidParameter);
}

TEST(RandomDataset, DeterministicForSeed) {
  const OrthoDataset a = make_random_orthonormal_dataset(4, 2, 7);
  const OrthoDataset b = make_random_orthonormal_dataset(4, 2, 7);
  ASSERT_EQ(a.basis().size(), b.basis().size());
  for (std::size_t k = 0; k < a.basis().size(); ++k) EXPECT_EQ(a.basis()[k], b.basis()[k]);
  const OrthoDataset c = make_random_orthonormal_dataset(4, 2, 8);
  EXPECT_NE(a.basis()[0], c.basis()[0]);
}

TEST(RandomDataset, OrthonormalWithinTolerance) {
  const OrthoDataset d = make_random_orthonormal_dataset(3, 3, 1);
  EXPECT_LT(d.orthonormality_residual(), 1e-12);
  EXPECT_LT(static_cast<double>(oracle::max_gram_error(columns_of(d))), 1e-12);
}

TEST(RandomDataset, PairwiseDotsSmall) {
  const OrthoDataset d = make_random_orthonormal_dataset(8, 4, 2);
  const auto cols = columns_of(d);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(static_cast<double>(oracle::dot(cols[i], cols[i])), 1.0, 1e-12);
    for (std::size_t j = i + 1; j < 8; ++j) EXPECT_LT(std::abs(static_cast<double>(oracle::dot(cols[i], cols[j]))), 1e-12);
  }
}

TEST(RandomDataset, PropertyOverManySizes) {
  for (std::size_t n = 1; n <= 24; ++n) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const OrthoDataset d = make_random_orthonormal_dataset(n, (n + 1) / 2, seed);
      EXPECT_LT(static_cast<double>(oracle::max_gram_error(columns_of(d))), 1e-12) << "n=" << n;
    }
  }
}

TEST(Coords, IdentityBasis) {
  const OrthoDataset d = make_standard_dataset(2, 2);
  const Vec w{0.1, 0.08};
  const NeuronState s = to_coords(d, w);
  EXPECT_EQ(s.coords, w);
}

TEST(Coords, ZeroVector) {
  const OrthoDataset d = make_random_orthonormal_dataset(6, 3, 4);
  const NeuronState s = to_coords(d, Vec(6, 0.0));
  for (double c : s.coords) EXPECT_EQ(c, 0.0);
}

TEST(Coords, BasisColumnMapsToUnitVector) {
  const OrthoDataset d = make_random_orthonormal_dataset(5, 3, 7);
  const auto col = d.column(1);
  const NeuronState s = to_coords(d, Vec(col.begin(), col.end()));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(s.coords[i], i == 1 ? 1.0 : 0.0, 1e-12);
}

TEST(Coords, DimensionMismatchThrows) {
  const OrthoDataset d = make_standard_dataset(3, 2);
  EXPECT_THROW(to_coords(d, Vec(2, 0.0)), DimensionError);
  EXPECT_THROW(to_ambient(d, NeuronState{Vec(4, 0.0)}), DimensionError);
}

TEST(Ambient, StandardBasis) {
  const OrthoDataset d = make_standard_dataset(2, 2);
  EXPECT_EQ(to_ambient(d, NeuronState{{0.0, 1.0}}), (Vec{0.0, 1.0}));
}

TEST(Ambient, UnitCoordinatesGiveColumns) {
  const OrthoDataset d = make_random_orthonormal_dataset(4, 2, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    Vec e(4, 0.0);
    e[i] = 1.0;
    const Vec w = to_ambient(d, NeuronState{e});
    for (std::size_t r = 0; r < 4; ++r) EXPECT_NEAR(w[r], d.entry(r, i), 1e-12);
  }
}

TEST(Ambient, NormPreserved) {
  const OrthoDataset d = make_random_orthonormal_dataset(2, 2, 9);
  const Vec w = to_ambient(d, NeuronState{{0.6, 0.8}});
  EXPECT_NEAR(std::sqrt(static_cast<double>(oracle::dot(w, w))), 1.0, 1e-12);
}

TEST(Ambient, RoundTripBothWays) {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 1 + seed % 9;
    const OrthoDataset d = make_random_orthonormal_dataset(n, 1, seed);
    const Vec c = oracle::random_gaussian(n, rng);
    const NeuronState back = to_coords(d, to_ambient(d, NeuronState{c}));
    const Vec w = oracle::random_gaussian(n, rng);
    const Vec w_back = to_ambient(d, to_coords(d, w));
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(back.coords[i], c[i], 1e-12);
      EXPECT_NEAR(w_back[i], w[i], 1e-12);
    }
  }
}

TEST(GaussianInit, SecondMomentMatches) {
  // E|w|^2 = sigma^2; per-seed value has variance 2 sigma^4 / n.
  const std::size_t n = 400;
  const double sigma = 0.5;
  double sum = 0.0, sum_sq = 0.0;
  const int seeds = 1000;
  for (int s = 0; s < seeds; ++s) {
    const Vec w = gaussian_init(n, sigma, static_cast<std::uint64_t>(3 + s));
    const double v = static_cast<double>(oracle::dot(w, w));
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / seeds;
  const double var = (sum_sq - seeds * mean * mean) / (seeds - 1);
  EXPECT_LT(std::abs(mean - 0.25), 3.0 * std::sqrt(var / seeds));
}

TEST(GaussianInit, Deterministic) {
  EXPECT_EQ(gaussian_init(12, 0.3, 99), gaussian_init(12, 0.3, 99));
  EXPECT_NE(gaussian_init(12, 0.3, 99), gaussian_init(12, 0.3, 100));
}

TEST(GaussianInit, NormFlagAgreesWithDirectNorm) {
  const Vec w = gaussian_init(4, 0.9, 11);
  double sq = 0.0;
  for (double x : w) sq += x * x;
  EXPECT_EQ(norm(w) < 1.0, std::sqrt(sq) < 1.0);
}

TEST(GaussianInit, RejectsNonPositiveSigma) {
  EXPECT_THROW(gaussian_init(3, 0.0, 1), InvalidParameter);
  EXPECT_THROW(gaussian_init(3, -1.0, 1), InvalidParameter);
}

TEST(GaussianInit, BallVariantStaysInsideAndExtendsFirstDraw) {
  EXPECT_EQ(gaussian_init_in_ball(10, 0.5, 4), gaussian_init(10, 0.5, 4));
  for (std::uint64_t s = 0; s < 50; ++s) EXPECT_LT(norm(gaussian_init_in_ball(2, 0.95, s)), 1.0);
}

TEST(OrthogonalInvariance, GdTrajectoryMatchesStandardBasis) {
  const std::size_t n = 7, m = 4;
  const OrthoDataset rnd = make_random_orthonormal_dataset(n, m, 21);
  const OrthoDataset std_d = make_standard_dataset(n, m);
  const Vec w0 = gaussian_init_in_ball(n, 0.6, 5);
  const Vec c0 = to_coords(rnd, w0).coords;
  TrainConfig cfg;
  cfg.eta = 0.15;
  cfg.strategy = BatchStrategy::full();
  cfg.keep_coords = true;
  const TrainingResult a = run_training(rnd, w0, cfg);
  const TrainingResult b = run_training(std_d, c0, cfg);
  // Rounding in the two bases can move the stopping step by a few iterations.
  ASSERT_TRUE(a.summary.converged && b.summary.converged);
  EXPECT_EQ(a.summary.limit.kind, b.summary.limit.kind);
  const std::size_t len = std::min(a.trajectory.size(), b.trajectory.size());
  EXPECT_LT(std::max(a.trajectory.size(), b.trajectory.size()) - len, 10u);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a.trajectory[t].coords[i], b.trajectory[t].coords[i], 1e-10);
  }
}
