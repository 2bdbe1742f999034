#include "channel_axes/pid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "channel_axes/error.hpp"
#include "channel_axes/rng.hpp"

namespace channel_axes {

PidAtoms mmi_pid(double i1, double i2, double i_joint) {
  if (i1 < 0 || i2 < 0) throw ValidationError("mmi_pid: negative mutual information");
  PidAtoms a;
  const double hi = std::max(i1, i2);
  if (i_joint < hi) {
    i_joint = hi;
    a.clamped = true;
  }
  a.red = std::min(i1, i2);
  a.uniq1 = i1 - a.red;
  a.uniq2 = i2 - a.red;
  a.syn = i_joint - a.uniq1 - a.uniq2 - a.red;
  return a;
}

namespace {

constexpr double kS2Tolerance = 1e-9;

std::int64_t choose3(std::int64_t n) { return n < 3 ? 0 : n * (n - 1) * (n - 2) / 6; }

}  // namespace

TripletExcess triplet_excess(const Eigen::MatrixXd& corr, const Eigen::VectorXd& rho_t,
                             const std::vector<bool>& excluded, const TripletConfig& config) {
  const auto n = static_cast<int>(corr.rows());
  if (n < 3) throw ValidationError("triplet_excess: need N >= 3 channels");
  if (config.top_k < 3) throw ValidationError("triplet_excess: top_k must be >= 3");
  if (config.max_triples < 1) throw ValidationError("triplet_excess: max_triples must be >= 1");

  std::vector<int> pool;
  for (int i = 0; i < n; ++i) {
    if (excluded.empty() || !excluded[i]) pool.push_back(i);
  }
  std::vector<double> single(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) single[i] = gaussian_mi_from_corr(rho_t[i], config.clip);
  std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) { return single[a] > single[b]; });
  if (static_cast<int>(pool.size()) > config.top_k) pool.resize(static_cast<std::size_t>(config.top_k));
  std::sort(pool.begin(), pool.end());
  const auto k = static_cast<int>(pool.size());
  if (k < 3) throw DegenerateDataError("triplet_excess: fewer than 3 usable channels");

  TripletExcess out;
  if (choose3(k) <= config.max_triples) {
    out.enumerated = true;
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b)
        for (int c = b + 1; c < k; ++c) out.triples.push_back({pool[a], pool[b], pool[c]});
  } else {
    Rng rng(config.seed, 0x7219);
    std::set<std::array<int, 3>> seen;
    while (static_cast<int>(seen.size()) < config.max_triples) {
      std::array<int, 3> t{};
      t[0] = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
      do t[1] = static_cast<int>(rng.index(static_cast<std::size_t>(k))); while (t[1] == t[0]);
      do t[2] = static_cast<int>(rng.index(static_cast<std::size_t>(k))); while (t[2] == t[0] || t[2] == t[1]);
      std::sort(t.begin(), t.end());
      seen.insert({pool[t[0]], pool[t[1]], pool[t[2]]});
    }
    out.triples.assign(seen.begin(), seen.end());
  }
  out.n_triples = static_cast<int>(out.triples.size());

  double sum_s3 = 0, sum_s2 = 0;
  for (const auto& t : out.triples) {
    const double best_single = std::max({single[t[0]], single[t[1]], single[t[2]]});
    const double best_pair = std::max({joint_task_mi(corr, rho_t, {t[0], t[1]}, config.clip, config.ridge),
                                       joint_task_mi(corr, rho_t, {t[0], t[2]}, config.clip, config.ridge),
                                       joint_task_mi(corr, rho_t, {t[1], t[2]}, config.clip, config.ridge)});
    const double triple = joint_task_mi(corr, rho_t, {t[0], t[1], t[2]}, config.clip, config.ridge);
    const double s2 = best_pair - best_single;
    if (s2 <= kS2Tolerance) continue;
    sum_s3 += std::max(0.0, triple - best_pair);
    sum_s2 += s2;
    ++out.n_used;
  }
  if (out.n_used > 0) {
    out.mean_s3 = sum_s3 / out.n_used;
    out.mean_s2 = sum_s2 / out.n_used;
    out.s3_over_s2 = out.mean_s3 / out.mean_s2;
  }
  return out;
}

TripletExcess triplet_excess(const Eigen::MatrixXd& pooled, const Eigen::VectorXd& target,
                             const TripletConfig& config) {
  std::vector<bool> zero_variance;
  const Eigen::MatrixXd corr = correlation_matrix(pooled, &zero_variance);
  Eigen::VectorXd rho_t = column_target_correlation(pooled, target);
  for (Eigen::Index i = 0; i < rho_t.size(); ++i) {
    if (zero_variance[i]) rho_t[i] = 0.0;
  }
  return triplet_excess(corr, rho_t, zero_variance, config);
}

}  // namespace channel_axes
