#pragma once

#include <string_view>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "channel_axes/axis_metrics.hpp"
#include "channel_axes/stats.hpp"

namespace channel_axes {

enum class GraphKind { kRedundancy, kSynergy };
std::string_view to_string(GraphKind kind);

struct WeightedEdge {
  int i = 0;
  int j = 0;  // i < j
  double weight = 0.0;
  bool operator==(const WeightedEdge&) const = default;
};

struct AxisGraph {
  int n = 0;
  std::vector<WeightedEdge> edges;
  GraphKind kind = GraphKind::kRedundancy;
  int positive_pairs = 0;
};

// Keeps the ceil(top_frac * #positive pairs) largest strictly positive
// upper-triangle weights; ties at the cutoff go to the smaller (i, j).
AxisGraph top_fraction_graph(const Eigen::MatrixXd& pair_weights, double top_frac, GraphKind kind,
                             const std::vector<bool>& excluded = {});

// R graph: g(rho_ij) on the peer correlation. S graph: all-pairs target excess.
AxisGraph build_graph(const LayerMetrics& metrics, GraphKind kind, double top_frac = 0.10,
                      double clip = kDefaultCorrClip, double ridge = kDefaultRidge);

double modularity(const AxisGraph& g, const Partition& communities);

struct ModularityResult {
  double q = 0.0;
  Partition communities;
};

// Clauset-Newman-Moore agglomeration with lexicographic tie-breaking.
ModularityResult greedy_modularity(const AxisGraph& g);

struct LayerModularity {
  double q_r = 0.0;
  double q_s = 0.0;
  double gap = 0.0;  // q_r - q_s
  int edges_r = 0;
  int edges_s = 0;
};

LayerModularity compare_graphs(const LayerMetrics& metrics, double top_frac = 0.10,
                               double clip = kDefaultCorrClip, double ridge = kDefaultRidge);

}  // namespace channel_axes
