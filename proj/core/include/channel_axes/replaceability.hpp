#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace channel_axes {

inline constexpr double kPeerRegularization = 1e-6;

// E_i(S) = rho_iS' (R_SS + 1e-6 I)^{-1} rho_iS on the correlation matrix,
// clipped to [0, 1].
double peer_explanation(int i, const std::vector<int>& peers, const Eigen::MatrixXd& corr);

enum class HullStatus { kSingleton, kCompact, kSaturated, kIrreplaceable };
std::string_view to_string(HullStatus status);

struct Hull {
  int channel = 0;
  std::vector<int> members;     // in greedy order
  std::vector<double> e_trace;  // E after each addition
  double e_full = 0.0;          // E over the whole candidate pool
  HullStatus status = HullStatus::kIrreplaceable;
  int pool_size = 0;
};

struct HullConfig {
  double eps = 0.05;
  int cap = 10;
  int pool_size = 32;
  double irreplaceable_floor = 0.01;
};

// Candidate pool = top pool_size peers by |rho| (excluded channels skipped).
Hull greedy_hull(int i, const Eigen::MatrixXd& corr, const HullConfig& config = {},
                 const std::vector<bool>& excluded = {});

std::vector<Hull> layer_hulls(const Eigen::MatrixXd& corr, const HullConfig& config = {},
                              const std::vector<bool>& excluded = {});

struct HullSummary {
  double mean_size = 0.0;
  double frac_singleton = 0.0;
  double frac_saturated = 0.0;
  int n_hulls = 0;          // non-irreplaceable
  int n_irreplaceable = 0;
};

HullSummary hull_summary(const std::vector<Hull>& hulls);

struct CompactScores {
  Eigen::VectorXd compact;        // E_full / max(1, |H|)
  Eigen::VectorXd local_compact;  // z(-I_X) + z(compact), within layer
};

CompactScores compact_scores(const Eigen::VectorXd& i_x, const std::vector<Hull>& hulls);

struct PeerReconstruction {
  int channel = 0;
  std::vector<int> peers;
  bool shrunk = false;  // fewer than k peers available
  Eigen::VectorXd weights;  // on standardized peers
  Eigen::VectorXd peer_mean, peer_sd;
  double target_mean = 0.0, target_sd = 0.0;
  double r2_fit = 0.0;

  // Rebuilds channel values (original scale) from rows of `acts`.
  Eigen::VectorXd reconstruct(const Eigen::MatrixXd& acts) const;
};

// Ridge regression of channel i on its top-k peers (by |rho| on the fit
// rows) over standardized activations.
PeerReconstruction peer_reconstruction(int i, const Eigen::MatrixXd& fit_acts, int k = 8,
                                       double ridge = 1e-3,
                                       const std::vector<bool>& excluded = {});

}  // namespace channel_axes
