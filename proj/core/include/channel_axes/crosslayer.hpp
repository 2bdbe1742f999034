#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "channel_axes/axis_metrics.hpp"
#include "channel_axes/bundle.hpp"

namespace channel_axes {

// Frobenius norms ||W_ji|| of each (destination, source) kernel slice of a
// flattened consumer weight [N_dst, N_src * kh * kw].
Eigen::MatrixXd routing_norms(const Eigen::MatrixXd& consumer_weight, Eigen::Index n_src,
                              Eigen::Index kh, Eigen::Index kw);

struct RoutedSummary {
  Eigen::VectorXd values;     // [N_dst]
  std::vector<bool> defined;  // false when all incoming norms are zero
};

// m_bar(j) = sum_i ||W_ji|| m(i) / sum_i ||W_ji||.
RoutedSummary routed_source_summary(const Eigen::MatrixXd& norms, const Eigen::VectorXd& m_src);

inline constexpr std::array<const char*, 4> kAxisMetricNames{"I_X", "R_bar_X", "I_TY", "Syn"};

struct PropagationMatrix {
  std::string source;
  std::string destination;
  // entries(s, d) = Spearman(m_bar_s, m_d); NaN when undefined.
  Eigen::Matrix4d entries = Eigen::Matrix4d::Constant(std::nan(""));
  int n_destinations = 0;  // destinations with a defined routed summary
  std::optional<double> local_local, target_target, cross;
};

std::array<Eigen::VectorXd, 4> axis_metric_vectors(const LayerMetrics& metrics);

PropagationMatrix propagation_matrix(const TensorBundle& bundle, const ChannelMetricTable& metrics,
                                     const std::string& source, const std::string& destination);

// Every producer -> consumer edge of the bundle graph.
std::vector<PropagationMatrix> propagation_matrices(const TensorBundle& bundle,
                                                    const ChannelMetricTable& metrics);

}  // namespace channel_axes
