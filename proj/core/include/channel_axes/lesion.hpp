#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "channel_axes/linear_gaussian.hpp"

namespace channel_axes {

struct LesionRecord {
  int layer = 0;
  int channel = 0;
  double delta_loss = 0.0;
  double peer_r2 = 0.0;
  double delta_loss_replaced = 0.0;
  std::optional<double> recovery;  // defined when delta_loss > 0
  double task_mi = 0.0;
  double i_x = 0.0;
};

// (delta_loss - delta_loss_replaced) / delta_loss, or empty when
// delta_loss <= threshold.
std::optional<double> recovery_fraction(double delta_loss, double delta_loss_replaced,
                                        double threshold = 0.0);

struct LesionConfig {
  std::int64_t samples = 10000;  // first 80% fit the peer ridge, last 20% evaluate
  double fit_fraction = 0.8;
  int peers = 8;
  double ridge = 1e-3;
  std::vector<double> thresholds{1e-4, 1e-3, 5e-3};
  std::uint64_t seed = 0;
};

struct LesionThresholdSummary {
  double threshold = 0.0;
  int n = 0;
  double median_recovery = 0.0;
  double frac_peer_helps = 0.0;  // recovery > 0
  // Spearman vs recovery; empty when undefined.
  std::optional<double> rho_peer_r2, rho_task_mi, rho_i_x;
};

struct LesionResult {
  std::vector<LesionRecord> records;
  std::vector<LesionThresholdSummary> summary;
};

// Zeroes each listed channel of `model` on held-out samples, then replaces it
// by its peer reconstruction. Loss is the mean squared error of the model's
// fixed readout.
LesionResult lesion_experiment(const LinearGaussianModel& model, const std::vector<int>& channels,
                               const LesionConfig& config, int layer_id = 0);

std::vector<LesionThresholdSummary> summarize_lesions(const std::vector<LesionRecord>& records,
                                                      const std::vector<double>& thresholds);

struct ResidualCorrelation {
  std::string predictor;
  std::optional<double> rho;
  int n = 0;
};

struct MatchedTaskResult {
  std::vector<ResidualCorrelation> residual;  // peer_r2, task_mi, i_x
  std::int64_t wins = 0;
  std::int64_t pairs = 0;
  double win_rate = 0.0;
  std::pair<double, double> win_ci{0.0, 0.0};
  int bins_used = 0;
  int bins_skipped = 0;
};

// Records are binned by task-MI quantile within each layer; predictors and
// recovery are rank-residualized within bins and pooled.
MatchedTaskResult matched_task_analysis(const std::vector<LesionRecord>& records, int n_bins = 5,
                                        double threshold = 0.0);

}  // namespace channel_axes
