#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace channel_axes {

enum class CorrelationMethod { kPearson, kSpearman, kKendall };

// Throws DegenerateDataError("degenerate input") on zero variance and
// ValidationError on length mismatch, n < 3 or non-finite entries.
double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                   CorrelationMethod method = CorrelationMethod::kPearson);
double spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
double kendall_tau_b(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Average ranks (1-based) with ties averaged.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& x);

// (x - mean) / sd with sample sd; a constant vector maps to zeros.
Eigen::VectorXd zscore(const Eigen::VectorXd& x);

double median(std::vector<double> values);
// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

using Partition = std::vector<int>;

// Relabels to dense ids 0..k-1 in order of first appearance.
Partition canonical_partition(const Partition& labels);

double adjusted_rand_index(const Partition& a, const Partition& b);

struct PermutationNull {
  double observed = 0.0;
  double null_mean = 0.0;
  double null_p95 = 0.0;
  double p_value = 0.0;
  int n_perm = 0;
};

PermutationNull permutation_null_ari(const Partition& a, const Partition& b, int n_perm,
                                     std::uint64_t seed);

struct KMeansResult {
  Partition labels;
  Eigen::MatrixXd centers;  // [k, d]
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // best run, one entry per Lloyd iteration
};

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int n_init, std::uint64_t seed,
                    int max_iter = 300);

struct BootstrapInterval {
  double mean_delta = 0.0;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
};

BootstrapInterval bootstrap_mean_diff(const std::vector<std::pair<double, double>>& paired,
                                      int n_boot, std::uint64_t seed);

std::pair<double, double> wilson_ci(std::int64_t successes, std::int64_t trials, double z = 1.96);

}  // namespace channel_axes
