#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "channel_axes/error.hpp"
#include "channel_axes/parallel.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/stats.hpp"
#include "test_util.hpp"

using namespace channel_axes;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// ARI from the contingency table by direct pair counting.
double ari_oracle(const Partition& a, const Partition& b) {
  const auto n = a.size();
  auto choose2 = [](double k) { return k * (k - 1) / 2; };
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < n; ++i) {
    table[{a[i], b[i]}] += 1;
    rows[a[i]] += 1;
    cols[b[i]] += 1;
  }
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : table) index += choose2(v);
  for (const auto& [k, v] : rows) sa += choose2(v);
  for (const auto& [k, v] : cols) sb += choose2(v);
  const double expected = sa * sb / choose2(static_cast<double>(n));
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// O(n^2) Kendall tau-b by explicit pair enumeration.
double kendall_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double concordant = 0, discordant = 0, tx = 0, ty = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    for (Eigen::Index j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        tx += 1;
      } else if (dy == 0) {
        ty += 1;
      } else if (dx * dy > 0) {
        concordant += 1;
      } else {
        discordant += 1;
      }
    }
  }
  return (concordant - discordant) /
         std::sqrt((concordant + discordant + tx) * (concordant + discordant + ty));
}

}  // namespace

TEST(Correlation, KendallHandExample) {
  EXPECT_NEAR(kendall_tau_b(vec({1, 2, 3, 4}), vec({1, 3, 2, 4})), 2.0 / 3.0, 1e-12);
}

TEST(Correlation, KendallMatchesPairEnumerationWithTies) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(30), y(30);
    for (int i = 0; i < 30; ++i) {
      x[i] = static_cast<double>(rng.index(6));
      y[i] = static_cast<double>(rng.index(5)) + 0.3 * x[i];
    }
    EXPECT_NEAR(kendall_tau_b(x, y), kendall_oracle(x, y), 1e-12);
  }
}

TEST(Correlation, SpearmanIsPearsonOfRanks) {
  const Eigen::VectorXd x = test_util::gaussian_matrix(50, 1, 2).col(0);
  const Eigen::VectorXd y = x.array().cube().matrix() + test_util::gaussian_matrix(50, 1, 3).col(0);
  EXPECT_NEAR(spearman(x, y), test_util::pearson(average_ranks(x), average_ranks(y)), 1e-12);
  EXPECT_NEAR(spearman(x, x.array().exp().matrix()), 1.0, 1e-12);
}

TEST(Correlation, AverageRanksWithTies) {
  const auto r = average_ranks(vec({10, 20, 10, 30}));
  EXPECT_DOUBLE_EQ(r[0], 1.5);
  EXPECT_DOUBLE_EQ(r[1], 3.0);
  EXPECT_DOUBLE_EQ(r[2], 1.5);
  EXPECT_DOUBLE_EQ(r[3], 4.0);
}

TEST(Correlation, DegenerateAndInvalidInputs) {
  EXPECT_THROW(correlation(vec({1, 1, 1}), vec({1, 2, 3})), DegenerateDataError);
  EXPECT_THROW(correlation(vec({1, 2}), vec({1, 2})), ValidationError);
  EXPECT_THROW(correlation(vec({1, 2, 3}), vec({1, 2})), ValidationError);
  EXPECT_THROW(correlation(vec({1, NAN, 3}), vec({1, 2, 3})), ValidationError);
}

TEST(Quantiles, MedianAndInterpolation) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.25), 2.5);
  EXPECT_DOUBLE_EQ(quantile({5, 1, 3}, 1.0), 5.0);
}

TEST(Ari, HandCases) {
  EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 1, 1}, {5, 5, 2, 2}), 1.0);
  EXPECT_NEAR(adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}), -0.5, 1e-12);
  EXPECT_NEAR(adjusted_rand_index({0, 0, 0, 1, 1, 1}, {0, 0, 1, 1, 2, 2}),
              ari_oracle({0, 0, 0, 1, 1, 1}, {0, 0, 1, 1, 2, 2}), 1e-12);
}

TEST(Ari, MatchesPairCountingOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.index(40);
    Partition a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(rng.index(4));
      b[i] = rng.uniform() < 0.5 ? a[i] : static_cast<int>(rng.index(3));
    }
    EXPECT_NEAR(adjusted_rand_index(a, b), ari_oracle(a, b), 1e-12);
  }
}

TEST(Ari, InvariantToLabelPermutationAndSymmetric) {
  Rng rng(3);
  Partition a(40), b(40);
  for (int i = 0; i < 40; ++i) {
    a[i] = static_cast<int>(rng.index(3));
    b[i] = static_cast<int>(rng.index(4));
  }
  Partition relabeled = a;
  for (auto& v : relabeled) v = (v + 7) * 3;
  EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(relabeled, b), 1e-12);
  EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(b, a), 1e-12);
  EXPECT_EQ(canonical_partition({7, 7, 2, 9, 2}), (Partition{0, 0, 1, 2, 1}));
}

TEST(Ari, PermutationNullIsCenteredNearZero) {
  Rng rng(8);
  Partition a(120), b(120);
  for (int i = 0; i < 120; ++i) {
    a[i] = static_cast<int>(rng.index(3));
    b[i] = static_cast<int>(rng.index(3));
  }
  const auto null = permutation_null_ari(a, b, 1000, 5);
  EXPECT_LT(std::abs(null.null_mean), 0.01);
  EXPECT_GT(null.null_p95, 0.0);
  EXPECT_GE(null.p_value, 0.0);
  EXPECT_LE(null.p_value, 1.0);
  const auto identical = permutation_null_ari(a, a, 200, 5);
  EXPECT_DOUBLE_EQ(identical.observed, 1.0);
  EXPECT_LT(identical.p_value, 0.01);
  EXPECT_THROW(permutation_null_ari(a, b, 10, 5), ValidationError);
}

TEST(Ari, PermutationNullIndependentOfWorkerCount) {
  Partition a(60), b(60);
  for (int i = 0; i < 60; ++i) {
    a[i] = i % 3;
    b[i] = (i / 7) % 3;
  }
  set_default_workers(1);
  const auto one = permutation_null_ari(a, b, 300, 11);
  set_default_workers(4);
  const auto four = permutation_null_ari(a, b, 300, 11);
  set_default_workers(0);
  EXPECT_EQ(one.null_mean, four.null_mean);
  EXPECT_EQ(one.null_p95, four.null_p95);
  EXPECT_EQ(one.p_value, four.p_value);
}

TEST(KMeans, RecoversSeparatedBlobs) {
  Eigen::MatrixXd pts(90, 2);
  Rng rng(2);
  for (int i = 0; i < 90; ++i) {
    const int c = i / 30;
    pts(i, 0) = 10.0 * c + 0.3 * rng.normal();
    pts(i, 1) = -5.0 * c + 0.3 * rng.normal();
  }
  const auto res = kmeans(pts, 3, 10, 1);
  Partition truth(90);
  for (int i = 0; i < 90; ++i) truth[i] = i / 30;
  EXPECT_DOUBLE_EQ(adjusted_rand_index(res.labels, truth), 1.0);
}

TEST(KMeans, SingleClusterInertiaIsTotalScatter) {
  const Eigen::MatrixXd pts = test_util::gaussian_matrix(40, 3, 9);
  const auto res = kmeans(pts, 1, 3, 2);
  const Eigen::RowVectorXd mean = pts.colwise().mean();
  const double scatter = (pts.rowwise() - mean).squaredNorm();
  EXPECT_NEAR(res.inertia, scatter, 1e-9 * scatter);
}

TEST(KMeans, InertiaTraceIsNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::MatrixXd pts = test_util::gaussian_matrix(80, 2, seed);
    const auto res = kmeans(pts, 4, 5, seed);
    ASSERT_FALSE(res.inertia_trace.empty());
    for (std::size_t i = 1; i < res.inertia_trace.size(); ++i) {
      EXPECT_LE(res.inertia_trace[i], res.inertia_trace[i - 1] + 1e-9);
    }
    EXPECT_NEAR(res.inertia_trace.back(), res.inertia, 1e-9);
  }
}

TEST(KMeans, DeterministicInSeed) {
  const Eigen::MatrixXd pts = test_util::gaussian_matrix(60, 2, 4);
  const auto a = kmeans(pts, 3, 10, 7);
  const auto b = kmeans(pts, 3, 10, 7);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(Bootstrap, ConstantDeltasGiveDegenerateInterval) {
  const auto ci = bootstrap_mean_diff({{3, 1}, {4, 2}, {5, 3}}, 500, 1);
  EXPECT_DOUBLE_EQ(ci.mean_delta, 2.0);
  EXPECT_DOUBLE_EQ(ci.ci95_lo, 2.0);
  EXPECT_DOUBLE_EQ(ci.ci95_hi, 2.0);
}

TEST(Bootstrap, SymmetricDeltasStraddleZero) {
  const auto ci = bootstrap_mean_diff({{1, 0}, {0, 1}}, 2000, 3);
  EXPECT_DOUBLE_EQ(ci.mean_delta, 0.0);
  EXPECT_DOUBLE_EQ(ci.ci95_lo, -1.0);
  EXPECT_DOUBLE_EQ(ci.ci95_hi, 1.0);
}

TEST(Bootstrap, IntervalContainsMean) {
  Rng rng(12);
  std::vector<std::pair<double, double>> paired;
  for (int i = 0; i < 25; ++i) paired.emplace_back(rng.normal() + 0.5, rng.normal());
  const auto ci = bootstrap_mean_diff(paired, 2000, 4);
  EXPECT_LT(ci.ci95_lo, ci.mean_delta);
  EXPECT_GT(ci.ci95_hi, ci.mean_delta);
  EXPECT_THROW(bootstrap_mean_diff({{1, 0}}, 100, 1), ValidationError);
}

TEST(Wilson, KnownInterval) {
  const auto [lo, hi] = wilson_ci(84, 100);
  EXPECT_NEAR(lo, 0.756, 5e-4);
  EXPECT_NEAR(hi, 0.899, 5e-4);
}

TEST(Wilson, BoundaryCounts) {
  const auto [lo0, hi0] = wilson_ci(0, 10);
  EXPECT_DOUBLE_EQ(lo0, 0.0);
  EXPECT_GT(hi0, 0.0);
  EXPECT_LT(hi0, 1.0);
  const auto [lo1, hi1] = wilson_ci(10, 10);
  EXPECT_DOUBLE_EQ(hi1, 1.0);
  EXPECT_NEAR(lo1, 1.0 - hi0, 1e-12);
  EXPECT_THROW(wilson_ci(3, 2), ValidationError);
}

TEST(ZScore, ConstantVectorMapsToZero) {
  EXPECT_EQ(zscore(vec({2, 2, 2})), Eigen::VectorXd::Zero(3));
  const auto z = zscore(vec({1, 2, 3}));
  EXPECT_DOUBLE_EQ(z[0], -1.0);
  EXPECT_DOUBLE_EQ(z[2], 1.0);
}
