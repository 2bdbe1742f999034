#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "channel_axes/bundle.hpp"
#include "channel_axes/gaussian_mi.hpp"

namespace channel_axes {

struct InputCapture {
  Eigen::VectorXd s;   // w_i' Sigma_X w_i
  Eigen::VectorXd rq;  // s_i / |w_i|^2 (0 for zero rows)
  Eigen::VectorXd i_x; // 1/2 ln(1 + s_i / sigma0^2), nats
  Eigen::VectorXd w_norm_sq;
  double sigma0_sq = 0.0;
  std::vector<bool> zero_weight;
};

// Sigma_X is the centered sample covariance (1/(P-1)) of the patches; it is
// never formed explicitly. eps_cov adds eps_cov * I to Sigma_X.
InputCapture input_capture(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& patches,
                           double eps_cov = 0.0);

struct PeerOverlap {
  Eigen::MatrixXd corr;     // [N, N], unclipped Pearson, unit diagonal
  Eigen::VectorXd r_bar_x;  // mean g(rho_ij) over usable peers
  std::vector<bool> zero_variance;
  std::vector<bool> no_peers;
};

// `excluded` marks channels to leave out of every peer mean (in addition to
// zero-variance columns). May be empty.
PeerOverlap peer_overlap(const Eigen::MatrixXd& acts, double clip = kDefaultCorrClip,
                         const std::vector<bool>& excluded = {});

enum class TargetKind { kGtMargin, kPredMargin, kCorrectLogit, kPredLogit, kNegLoss, kOvrLabel };

TargetKind parse_target_kind(std::string_view text);
std::string_view to_string(TargetKind kind);

// logits [B, C], labels [B], loss [B] (may be empty unless kind = neg_loss).
Eigen::VectorXd task_targets(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                             const Eigen::VectorXd& loss, TargetKind kind, int ovr_class = 0);

struct TaskMi {
  Eigen::VectorXd rho_t;  // corr(Y_i, T), 0 for excluded channels
  Eigen::VectorXd i_ty;   // nats
  std::vector<bool> zero_variance;
};

TaskMi task_mi(const Eigen::MatrixXd& pooled, const Eigen::VectorXd& target,
               double clip = kDefaultCorrClip);

enum class PartnerRule { kTopTask, kTopJoint, kTopSynergy, kRandomTopPool };

PartnerRule parse_partner_rule(std::string_view text);
std::string_view to_string(PartnerRule rule);

struct RedundancySynergy {
  Eigen::VectorXd red_t;
  Eigen::VectorXd syn;
  std::vector<std::vector<int>> partners;
};

struct PartnerConfig {
  int m = 10;
  PartnerRule rule = PartnerRule::kTopTask;
  double ridge = kDefaultRidge;
  double clip = kDefaultCorrClip;
  std::uint64_t seed = 0;
};

// Works from the pooled correlation matrix and target correlations.
// Excluded channels never act as partners and get Red_T = Syn = 0.
RedundancySynergy target_redundancy_synergy(const Eigen::MatrixXd& corr,
                                            const Eigen::VectorXd& rho_t,
                                            const std::vector<bool>& excluded,
                                            const PartnerConfig& config);

RedundancySynergy target_redundancy_synergy(const Eigen::MatrixXd& pooled,
                                            const Eigen::VectorXd& target,
                                            const PartnerConfig& config);

// I(T; [Y_i, Y_j]) - max(I_i, I_j) for every pair; excluded rows/cols are 0.
Eigen::MatrixXd pair_synergy_matrix(const Eigen::MatrixXd& corr, const Eigen::VectorXd& rho_t,
                                    const std::vector<bool>& excluded, double clip = kDefaultCorrClip,
                                    double ridge = kDefaultRidge);

struct LayerMetrics {
  std::string name;
  double relative_depth = 0.0;
  std::int64_t num_channels = 0;
  Eigen::VectorXd s, rq, i_x, w_norm_sq;
  double sigma0_sq = 0.0;
  Eigen::MatrixXd corr;  // peer correlation (spatial if present, else pooled)
  Eigen::VectorXd r_bar_x;
  bool peer_from_pooled = false;  // spatial_acts absent
  Eigen::MatrixXd pooled_corr;
  std::string primary_target;  // drives Red_T / Syn
  std::map<std::string, Eigen::VectorXd> i_ty;
  std::map<std::string, Eigen::VectorXd> rho_t;
  Eigen::VectorXd red_t, syn;
  std::vector<std::vector<int>> partners;
  std::vector<int> excluded;  // sorted channel indices

  bool is_excluded(int i) const;
  std::vector<bool> excluded_mask() const;
};

struct MetricsConfig {
  std::vector<std::string> targets{"gt_margin"};  // first one drives Red_T / Syn
  PartnerConfig partner;
  double eps_cov = 0.0;
};

struct ChannelMetricTable {
  std::vector<std::string> target_names;
  std::vector<LayerMetrics> layers;

  const LayerMetrics& layer(std::string_view name) const;
};

LayerMetrics compute_layer_metrics(const LayerRecord& layer,
                                   const std::map<std::string, Eigen::VectorXd>& targets,
                                   const MetricsConfig& config);

ChannelMetricTable compute_metrics(const TensorBundle& bundle, const MetricsConfig& config);

}  // namespace channel_axes
