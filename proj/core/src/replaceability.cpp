#include "channel_axes/replaceability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "channel_axes/error.hpp"
#include "channel_axes/gaussian_mi.hpp"
#include "channel_axes/parallel.hpp"
#include "channel_axes/stats.hpp"

namespace channel_axes {

double peer_explanation(int i, const std::vector<int>& peers, const Eigen::MatrixXd& corr) {
  if (peers.empty()) return 0.0;
  const auto k = static_cast<Eigen::Index>(peers.size());
  Eigen::MatrixXd sub(k, k);
  Eigen::VectorXd r(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    if (peers[a] == i) throw ValidationError("peer_explanation: channel is in its own peer set");
    r[a] = corr(i, peers[a]);
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = corr(peers[a], peers[b]);
  }
  sub.diagonal().array() += kPeerRegularization;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sub);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 0.0) {
    std::ostringstream msg;
    msg << "peer_explanation: peer correlation block is singular (rcond estimate " << ldlt.rcond()
        << ")";
    throw DegenerateDataError(msg.str());
  }
  const double e = r.dot(ldlt.solve(r));
  return std::clamp(e, 0.0, 1.0);
}

std::string_view to_string(HullStatus status) {
  switch (status) {
    case HullStatus::kSingleton: return "singleton";
    case HullStatus::kCompact: return "compact";
    case HullStatus::kSaturated: return "saturated";
    case HullStatus::kIrreplaceable: return "irreplaceable";
  }
  return "?";
}

Hull greedy_hull(int i, const Eigen::MatrixXd& corr, const HullConfig& config,
                 const std::vector<bool>& excluded) {
  const auto n = static_cast<int>(corr.rows());
  if (n < 2) throw ValidationError("greedy_hull: need N >= 2 channels");
  if (config.cap < 1 || config.pool_size < 1) throw ValidationError("greedy_hull: cap and pool_size must be >= 1");
  Hull hull;
  hull.channel = i;
  std::vector<int> pool;
  for (int j = 0; j < n; ++j) {
    if (j != i && (excluded.empty() || !excluded[j])) pool.push_back(j);
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [&](int a, int b) { return std::abs(corr(i, a)) > std::abs(corr(i, b)); });
  if (static_cast<int>(pool.size()) > config.pool_size) pool.resize(static_cast<std::size_t>(config.pool_size));
  std::sort(pool.begin(), pool.end());
  hull.pool_size = static_cast<int>(pool.size());
  hull.e_full = peer_explanation(i, pool, corr);
  if (hull.e_full < config.irreplaceable_floor) {
    hull.status = HullStatus::kIrreplaceable;
    return hull;
  }
  const double goal = (1.0 - config.eps) * hull.e_full;
  std::vector<int> remaining = pool;
  double current = 0.0;
  while (!remaining.empty() && static_cast<int>(hull.members.size()) < config.cap && current < goal) {
    std::size_t best = 0;
    double best_e = -1.0;
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      std::vector<int> trial = hull.members;
      trial.push_back(remaining[k]);
      const double e = peer_explanation(i, trial, corr);
      if (e > best_e) {
        best_e = e;
        best = k;
      }
    }
    hull.members.push_back(remaining[best]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
    current = std::max(current, best_e);
    hull.e_trace.push_back(current);
  }
  const auto size = static_cast<int>(hull.members.size());
  if (size >= config.cap) {
    hull.status = HullStatus::kSaturated;
  } else if (size == 1) {
    hull.status = HullStatus::kSingleton;
  } else {
    hull.status = HullStatus::kCompact;
  }
  return hull;
}

std::vector<Hull> layer_hulls(const Eigen::MatrixXd& corr, const HullConfig& config,
                              const std::vector<bool>& excluded) {
  const auto n = static_cast<std::size_t>(corr.rows());
  std::vector<Hull> hulls(n);
  parallel_for(n, [&](std::size_t i) {
    if (!excluded.empty() && excluded[i]) {
      hulls[i].channel = static_cast<int>(i);
      hulls[i].status = HullStatus::kIrreplaceable;
      return;
    }
    hulls[i] = greedy_hull(static_cast<int>(i), corr, config, excluded);
  });
  return hulls;
}

HullSummary hull_summary(const std::vector<Hull>& hulls) {
  HullSummary s;
  double size_sum = 0;
  int singleton = 0, saturated = 0;
  for (const auto& h : hulls) {
    if (h.status == HullStatus::kIrreplaceable) {
      ++s.n_irreplaceable;
      continue;
    }
    ++s.n_hulls;
    size_sum += static_cast<double>(h.members.size());
    if (h.status == HullStatus::kSingleton) ++singleton;
    if (h.status == HullStatus::kSaturated) ++saturated;
  }
  if (s.n_hulls > 0) {
    s.mean_size = size_sum / s.n_hulls;
    s.frac_singleton = static_cast<double>(singleton) / s.n_hulls;
    s.frac_saturated = static_cast<double>(saturated) / s.n_hulls;
  }
  return s;
}

CompactScores compact_scores(const Eigen::VectorXd& i_x, const std::vector<Hull>& hulls) {
  if (static_cast<Eigen::Index>(hulls.size()) != i_x.size()) {
    throw ValidationError("compact_scores: hull count does not match metric length");
  }
  CompactScores out;
  out.compact = Eigen::VectorXd::Zero(i_x.size());
  for (std::size_t i = 0; i < hulls.size(); ++i) {
    const auto& h = hulls[i];
    if (h.status == HullStatus::kIrreplaceable) continue;
    out.compact[static_cast<Eigen::Index>(i)] =
        h.e_full / std::max<double>(1.0, static_cast<double>(h.members.size()));
  }
  out.local_compact = zscore(-i_x) + zscore(out.compact);
  return out;
}

Eigen::VectorXd PeerReconstruction::reconstruct(const Eigen::MatrixXd& acts) const {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(acts.rows(), target_mean);
  for (std::size_t k = 0; k < peers.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    if (peer_sd[kk] <= 0) continue;
    out += (target_sd * weights[kk] / peer_sd[kk]) * (acts.col(peers[k]).array() - peer_mean[kk]).matrix();
  }
  return out;
}

PeerReconstruction peer_reconstruction(int i, const Eigen::MatrixXd& fit_acts, int k, double ridge,
                                       const std::vector<bool>& excluded) {
  const auto n = static_cast<int>(fit_acts.cols());
  const auto rows = fit_acts.rows();
  if (n < 2) throw ValidationError("peer_reconstruction: need N >= 2 channels");
  if (rows < 3) throw ValidationError("peer_reconstruction: need >= 3 fit rows");
  PeerReconstruction rec;
  rec.channel = i;

  std::vector<bool> zero_variance;
  const Eigen::MatrixXd z = standardize_columns(fit_acts, &zero_variance);
  std::vector<int> pool;
  for (int j = 0; j < n; ++j) {
    if (j != i && !zero_variance[j] && (excluded.empty() || !excluded[j])) pool.push_back(j);
  }
  const double denom = static_cast<double>(rows - 1);
  std::vector<double> abs_rho(static_cast<std::size_t>(n), 0.0);
  for (int j : pool) abs_rho[j] = std::abs(z.col(i).dot(z.col(j)) / denom);
  std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) { return abs_rho[a] > abs_rho[b]; });
  if (static_cast<int>(pool.size()) < k) rec.shrunk = true;
  if (static_cast<int>(pool.size()) > k) pool.resize(static_cast<std::size_t>(k));
  rec.peers = pool;

  const Eigen::VectorXd y = fit_acts.col(i);
  rec.target_mean = y.mean();
  rec.target_sd = std::sqrt((y.array() - rec.target_mean).square().sum() / denom);
  const auto m = static_cast<Eigen::Index>(pool.size());
  rec.peer_mean.resize(m);
  rec.peer_sd.resize(m);
  Eigen::MatrixXd zp(rows, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::VectorXd col = fit_acts.col(pool[a]);
    rec.peer_mean[a] = col.mean();
    rec.peer_sd[a] = std::sqrt((col.array() - rec.peer_mean[a]).square().sum() / denom);
    zp.col(a) = z.col(pool[a]);
  }
  if (m == 0 || zero_variance[i]) {
    rec.weights = Eigen::VectorXd::Zero(m);
    return rec;
  }
  Eigen::MatrixXd gram = zp.transpose() * zp / denom;
  gram.diagonal().array() += ridge;
  const Eigen::VectorXd rhs = zp.transpose() * z.col(i) / denom;
  rec.weights = gram.ldlt().solve(rhs);
  const Eigen::VectorXd resid = z.col(i) - zp * rec.weights;
  rec.r2_fit = std::clamp(1.0 - resid.squaredNorm() / z.col(i).squaredNorm(), 0.0, 1.0);
  return rec;
}

}  // namespace channel_axes
