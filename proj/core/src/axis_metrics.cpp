#include "channel_axes/axis_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "channel_axes/error.hpp"
#include "channel_axes/parallel.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/stats.hpp"

namespace channel_axes {

InputCapture input_capture(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& patches,
                           double eps_cov) {
  const auto p = patches.rows();
  if (p < 2) throw ValidationError("input_capture: need P >= 2 patches");
  if (weights.cols() != patches.cols()) {
    throw ValidationError("input_capture: weight fan-in " + std::to_string(weights.cols()) +
                          " != patch width " + std::to_string(patches.cols()));
  }
  if (!weights.allFinite()) throw ValidationError("input_capture: non-finite weights");
  const auto n = weights.rows();

  const Eigen::RowVectorXd mean = patches.colwise().mean();
  const Eigen::MatrixXd centered = patches.rowwise() - mean;
  const Eigen::MatrixXd proj = centered * weights.transpose();  // [P, N]

  InputCapture out;
  out.w_norm_sq = weights.rowwise().squaredNorm();
  out.s = proj.colwise().squaredNorm().transpose() / static_cast<double>(p - 1);
  if (eps_cov > 0) out.s += eps_cov * out.w_norm_sq;
  out.zero_weight.assign(static_cast<std::size_t>(n), false);
  out.rq = Eigen::VectorXd::Zero(n);
  std::vector<double> positive;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (out.w_norm_sq[i] == 0.0) {
      out.zero_weight[i] = true;
      out.s[i] = 0.0;
      continue;
    }
    out.rq[i] = out.s[i] / out.w_norm_sq[i];
    if (out.s[i] > 0) positive.push_back(out.s[i]);
  }
  if (positive.empty()) throw DegenerateDataError("degenerate layer: zero signal power");
  out.sigma0_sq = median(positive);
  out.i_x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!out.zero_weight[i]) out.i_x[i] = 0.5 * std::log1p(out.s[i] / out.sigma0_sq);
  }
  return out;
}

PeerOverlap peer_overlap(const Eigen::MatrixXd& acts, double clip, const std::vector<bool>& excluded) {
  const auto n = acts.cols();
  if (n < 2) throw ValidationError("peer_overlap: need N >= 2 channels");
  if (acts.rows() < 3) throw ValidationError("peer_overlap: need >= 3 sample rows");
  PeerOverlap out;
  out.corr = correlation_matrix(acts, &out.zero_variance);
  std::vector<bool> skip = out.zero_variance;
  for (std::size_t i = 0; i < excluded.size() && i < skip.size(); ++i) skip[i] = skip[i] || excluded[i];
  out.r_bar_x = Eigen::VectorXd::Zero(n);
  out.no_peers.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (skip[i]) continue;
    double sum = 0;
    int count = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i || skip[j]) continue;
      sum += gaussian_mi_from_corr(out.corr(i, j), clip);
      ++count;
    }
    if (count == 0) {
      out.no_peers[i] = true;
    } else {
      out.r_bar_x[i] = sum / count;
    }
  }
  return out;
}

TargetKind parse_target_kind(std::string_view text) {
  if (text == "gt_margin") return TargetKind::kGtMargin;
  if (text == "pred_margin") return TargetKind::kPredMargin;
  if (text == "correct_logit") return TargetKind::kCorrectLogit;
  if (text == "pred_logit") return TargetKind::kPredLogit;
  if (text == "neg_loss") return TargetKind::kNegLoss;
  if (text == "ovr_label") return TargetKind::kOvrLabel;
  throw ValidationError("unknown target kind '" + std::string(text) + "'");
}

std::string_view to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::kGtMargin: return "gt_margin";
    case TargetKind::kPredMargin: return "pred_margin";
    case TargetKind::kCorrectLogit: return "correct_logit";
    case TargetKind::kPredLogit: return "pred_logit";
    case TargetKind::kNegLoss: return "neg_loss";
    case TargetKind::kOvrLabel: return "ovr_label";
  }
  return "?";
}

namespace {

Eigen::Index argmax_row(const Eigen::MatrixXd& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(r, c) > m(r, best)) best = c;
  }
  return best;
}

double margin(const Eigen::MatrixXd& logits, Eigen::Index r, Eigen::Index cls) {
  double other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    if (c != cls) other = std::max(other, logits(r, c));
  }
  return logits(r, cls) - other;
}

}  // namespace

Eigen::VectorXd task_targets(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                             const Eigen::VectorXd& loss, TargetKind kind, int ovr_class) {
  const auto b = logits.rows();
  const auto classes = logits.cols();
  if (classes < 2) throw ValidationError("task_targets: need >= 2 classes");
  if (static_cast<Eigen::Index>(labels.size()) != b) {
    throw ValidationError("task_targets: labels length does not match logits rows");
  }
  for (int l : labels) {
    if (l < 0 || l >= classes) throw ValidationError("task_targets: label out of range");
  }
  if (kind == TargetKind::kNegLoss && loss.size() != b) {
    throw ValidationError("task_targets: neg_loss needs a loss vector of length B");
  }
  Eigen::VectorXd t(b);
  for (Eigen::Index r = 0; r < b; ++r) {
    const Eigen::Index z = labels[r];
    switch (kind) {
      case TargetKind::kGtMargin: t[r] = margin(logits, r, z); break;
      case TargetKind::kPredMargin: t[r] = margin(logits, r, argmax_row(logits, r)); break;
      case TargetKind::kCorrectLogit: t[r] = logits(r, z); break;
      case TargetKind::kPredLogit: t[r] = logits(r, argmax_row(logits, r)); break;
      case TargetKind::kNegLoss: t[r] = -loss[r]; break;
      case TargetKind::kOvrLabel: t[r] = z == ovr_class ? 1.0 : -1.0; break;
    }
  }
  return t;
}

TaskMi task_mi(const Eigen::MatrixXd& pooled, const Eigen::VectorXd& target, double clip) {
  if (pooled.rows() < 3) throw ValidationError("task_mi: need B >= 3");
  TaskMi out;
  out.rho_t = column_target_correlation(pooled, target);
  standardize_columns(pooled, &out.zero_variance);
  out.i_ty = Eigen::VectorXd::Zero(pooled.cols());
  for (Eigen::Index i = 0; i < pooled.cols(); ++i) {
    if (out.zero_variance[i]) {
      out.rho_t[i] = 0.0;
      continue;
    }
    out.i_ty[i] = gaussian_mi_from_corr(out.rho_t[i], clip);
  }
  return out;
}

PartnerRule parse_partner_rule(std::string_view text) {
  if (text == "top_task") return PartnerRule::kTopTask;
  if (text == "top_joint") return PartnerRule::kTopJoint;
  if (text == "top_synergy") return PartnerRule::kTopSynergy;
  if (text == "random_top_pool") return PartnerRule::kRandomTopPool;
  throw ValidationError("unknown partner rule '" + std::string(text) + "'");
}

std::string_view to_string(PartnerRule rule) {
  switch (rule) {
    case PartnerRule::kTopTask: return "top_task";
    case PartnerRule::kTopJoint: return "top_joint";
    case PartnerRule::kTopSynergy: return "top_synergy";
    case PartnerRule::kRandomTopPool: return "random_top_pool";
  }
  return "?";
}

namespace {

// Indices sorted by descending key, ties to the lower index.
std::vector<int> rank_desc(const std::vector<int>& candidates, const std::vector<double>& key) {
  std::vector<int> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] > key[b]; });
  std::vector<int> out;
  out.reserve(order.size());
  for (int k : order) out.push_back(candidates[k]);
  return out;
}

double pair_joint_mi(const Eigen::MatrixXd& corr, const Eigen::VectorXd& rho_t, int i, int j,
                     double clip, double ridge) {
  return joint_task_mi(corr, rho_t, {i, j}, clip, ridge);
}

}  // namespace

RedundancySynergy target_redundancy_synergy(const Eigen::MatrixXd& corr,
                                            const Eigen::VectorXd& rho_t,
                                            const std::vector<bool>& excluded,
                                            const PartnerConfig& config) {
  const auto n = static_cast<int>(corr.rows());
  if (n < 2) throw ValidationError("target_redundancy_synergy: need N >= 2 channels");
  if (config.m < 1) throw ValidationError("target_redundancy_synergy: m must be >= 1");
  auto is_excluded = [&](int i) { return !excluded.empty() && excluded[i]; };

  Eigen::VectorXd single(n);
  for (int i = 0; i < n; ++i) single[i] = is_excluded(i) ? 0.0 : gaussian_mi_from_corr(rho_t[i], config.clip);

  RedundancySynergy out;
  out.red_t = Eigen::VectorXd::Zero(n);
  out.syn = Eigen::VectorXd::Zero(n);
  out.partners.assign(static_cast<std::size_t>(n), {});

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t idx) {
    const int i = static_cast<int>(idx);
    if (is_excluded(i)) return;
    std::vector<int> pool;
    for (int j = 0; j < n; ++j) {
      if (j != i && !is_excluded(j)) pool.push_back(j);
    }
    if (pool.empty()) return;
    const auto m = std::min<std::size_t>(static_cast<std::size_t>(config.m), pool.size());

    std::vector<double> joint(pool.size());
    for (std::size_t k = 0; k < pool.size(); ++k) {
      joint[k] = pair_joint_mi(corr, rho_t, i, pool[k], config.clip, config.ridge);
    }
    std::vector<double> key(pool.size());
    std::vector<int> chosen;
    switch (config.rule) {
      case PartnerRule::kTopTask:
      case PartnerRule::kRandomTopPool:
        for (std::size_t k = 0; k < pool.size(); ++k) key[k] = single[pool[k]];
        break;
      case PartnerRule::kTopJoint:
        key = joint;
        break;
      case PartnerRule::kTopSynergy:
        for (std::size_t k = 0; k < pool.size(); ++k) {
          key[k] = joint[k] - std::max(single[i], single[pool[k]]);
        }
        break;
    }
    std::vector<int> ranked = rank_desc(pool, key);
    if (config.rule == PartnerRule::kRandomTopPool) {
      ranked.resize(std::min(ranked.size(), 2 * m));
      Rng rng(config.seed, idx);
      rng.shuffle(ranked);
    }
    chosen.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(m));

    double red = 0, syn = 0;
    for (int j : chosen) {
      red += std::min(single[i], single[j]);
      syn += pair_joint_mi(corr, rho_t, i, j, config.clip, config.ridge) - std::max(single[i], single[j]);
    }
    out.red_t[i] = red / static_cast<double>(chosen.size());
    out.syn[i] = syn / static_cast<double>(chosen.size());
    out.partners[idx] = std::move(chosen);
  });
  return out;
}

RedundancySynergy target_redundancy_synergy(const Eigen::MatrixXd& pooled,
                                            const Eigen::VectorXd& target,
                                            const PartnerConfig& config) {
  if (pooled.cols() < 2) throw ValidationError("target_redundancy_synergy: need N >= 2 channels");
  const TaskMi t = task_mi(pooled, target, config.clip);
  const Eigen::MatrixXd corr = correlation_matrix(pooled, nullptr);
  return target_redundancy_synergy(corr, t.rho_t, t.zero_variance, config);
}

Eigen::MatrixXd pair_synergy_matrix(const Eigen::MatrixXd& corr, const Eigen::VectorXd& rho_t,
                                    const std::vector<bool>& excluded, double clip, double ridge) {
  const auto n = corr.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  auto skip = [&](Eigen::Index i) { return !excluded.empty() && excluded[i]; };
  for (Eigen::Index i = 0; i < n; ++i) {
    if (skip(i)) continue;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (skip(j)) continue;
      const double joint = pair_joint_mi(corr, rho_t, static_cast<int>(i), static_cast<int>(j), clip, ridge);
      const double best = std::max(gaussian_mi_from_corr(rho_t[i], clip), gaussian_mi_from_corr(rho_t[j], clip));
      out(i, j) = out(j, i) = joint - best;
    }
  }
  return out;
}

bool LayerMetrics::is_excluded(int i) const {
  return std::binary_search(excluded.begin(), excluded.end(), i);
}

std::vector<bool> LayerMetrics::excluded_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(num_channels), false);
  for (int i : excluded) mask[i] = true;
  return mask;
}

const LayerMetrics& ChannelMetricTable::layer(std::string_view name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l;
  }
  throw ValidationError("metric table has no layer '" + std::string(name) + "'");
}

LayerMetrics compute_layer_metrics(const LayerRecord& layer,
                                   const std::map<std::string, Eigen::VectorXd>& targets,
                                   const MetricsConfig& config) {
  if (config.targets.empty()) throw ValidationError("metrics: at least one target is required");
  LayerMetrics out;
  out.name = layer.name;
  out.relative_depth = layer.relative_depth;
  out.num_channels = layer.num_channels;
  const auto n = layer.num_channels;

  const Eigen::MatrixXd weights = to_matrix(layer.weight);
  const Eigen::MatrixXd patches = to_matrix(layer.input_patches);
  const Eigen::MatrixXd pooled = to_matrix(layer.pooled_acts);
  InputCapture ic = input_capture(weights, patches, config.eps_cov);
  out.s = ic.s;
  out.rq = ic.rq;
  out.i_x = ic.i_x;
  out.w_norm_sq = ic.w_norm_sq;
  out.sigma0_sq = ic.sigma0_sq;

  std::vector<bool> pooled_zero;
  out.pooled_corr = correlation_matrix(pooled, &pooled_zero);
  std::vector<bool> excluded(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) excluded[i] = ic.zero_weight[i] || pooled_zero[i];

  if (layer.spatial_acts) {
    PeerOverlap po = peer_overlap(to_matrix(*layer.spatial_acts), config.partner.clip, excluded);
    for (Eigen::Index i = 0; i < n; ++i) excluded[i] = excluded[i] || po.zero_variance[i];
    out.corr = std::move(po.corr);
    out.r_bar_x = std::move(po.r_bar_x);
  } else {
    PeerOverlap po = peer_overlap(pooled, config.partner.clip, excluded);
    out.corr = std::move(po.corr);
    out.r_bar_x = std::move(po.r_bar_x);
    out.peer_from_pooled = true;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (excluded[i]) {
      out.i_x[i] = 0.0;
      out.r_bar_x[i] = 0.0;
    }
  }

  for (const auto& name : config.targets) {
    auto it = targets.find(name);
    if (it == targets.end()) {
      throw ValidationError("bundle has no target '" + name + "' (field 'targets')");
    }
    TaskMi t = task_mi(pooled, it->second, config.partner.clip);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (excluded[i]) {
        t.i_ty[i] = 0.0;
        t.rho_t[i] = 0.0;
      }
    }
    out.i_ty[name] = t.i_ty;
    out.rho_t[name] = t.rho_t;
  }
  out.primary_target = config.targets.front();
  const auto& primary = out.rho_t.at(out.primary_target);
  PartnerConfig pc = config.partner;
  RedundancySynergy rs = target_redundancy_synergy(out.pooled_corr, primary, excluded, pc);
  out.red_t = std::move(rs.red_t);
  out.syn = std::move(rs.syn);
  out.partners = std::move(rs.partners);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (excluded[i]) out.excluded.push_back(static_cast<int>(i));
  }
  return out;
}

ChannelMetricTable compute_metrics(const TensorBundle& bundle, const MetricsConfig& config) {
  std::map<std::string, Eigen::VectorXd> targets;
  for (const auto& name : config.targets) targets[name] = to_vector(bundle.target(name));
  ChannelMetricTable table;
  table.target_names = config.targets;
  table.layers.resize(bundle.layers.size());
  // Layers run sequentially; the per-channel partner loop inside is parallel.
  for (std::size_t l = 0; l < bundle.layers.size(); ++l) {
    MetricsConfig cfg = config;
    cfg.partner.seed = derive_seed(config.partner.seed, l);
    table.layers[l] = compute_layer_metrics(bundle.layers[l], targets, cfg);
  }
  return table;
}

}  // namespace channel_axes
