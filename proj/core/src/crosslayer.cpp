#include "channel_axes/crosslayer.hpp"

#include <cmath>

#include "channel_axes/error.hpp"
#include "channel_axes/stats.hpp"

namespace channel_axes {

Eigen::MatrixXd routing_norms(const Eigen::MatrixXd& consumer_weight, Eigen::Index n_src,
                              Eigen::Index kh, Eigen::Index kw) {
  const Eigen::Index slice = kh * kw;
  if (slice < 1 || consumer_weight.cols() != n_src * slice) {
    throw ValidationError("crosslayer: consumer fan-in " + std::to_string(consumer_weight.cols()) +
                          " != N_src * kh * kw = " + std::to_string(n_src * slice));
  }
  Eigen::MatrixXd norms(consumer_weight.rows(), n_src);
  for (Eigen::Index j = 0; j < consumer_weight.rows(); ++j) {
    for (Eigen::Index i = 0; i < n_src; ++i) {
      norms(j, i) = consumer_weight.row(j).segment(i * slice, slice).norm();
    }
  }
  return norms;
}

RoutedSummary routed_source_summary(const Eigen::MatrixXd& norms, const Eigen::VectorXd& m_src) {
  if (norms.cols() != m_src.size()) throw ValidationError("routed_source_summary: source count mismatch");
  if (!norms.allFinite()) throw ValidationError("routed_source_summary: non-finite norms");
  RoutedSummary out;
  out.values = Eigen::VectorXd::Zero(norms.rows());
  out.defined.assign(static_cast<std::size_t>(norms.rows()), false);
  for (Eigen::Index j = 0; j < norms.rows(); ++j) {
    const double total = norms.row(j).sum();
    if (total <= 0) continue;
    out.values[j] = norms.row(j).dot(m_src) / total;
    out.defined[j] = true;
  }
  return out;
}

std::array<Eigen::VectorXd, 4> axis_metric_vectors(const LayerMetrics& metrics) {
  return {metrics.i_x, metrics.r_bar_x, metrics.i_ty.at(metrics.primary_target), metrics.syn};
}

namespace {

std::optional<double> block_mean(const Eigen::Matrix4d& e, const std::vector<std::pair<int, int>>& cells) {
  double sum = 0;
  int n = 0;
  for (auto [s, d] : cells) {
    if (std::isnan(e(s, d))) continue;
    sum += e(s, d);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

PropagationMatrix propagation_matrix(const TensorBundle& bundle, const ChannelMetricTable& metrics,
                                     const std::string& source, const std::string& destination) {
  bool adjacent = false;
  for (const auto& [p, c] : bundle.graph.edges) {
    if (p == source && c == destination) adjacent = true;
  }
  if (!adjacent) {
    throw ValidationError("crosslayer: layers '" + source + "' -> '" + destination +
                          "' are not adjacent in the graph");
  }
  const LayerRecord& src = bundle.layer(source);
  const LayerRecord& dst = bundle.layer(destination);
  const LayerMetrics& msrc = metrics.layer(source);
  const LayerMetrics& mdst = metrics.layer(destination);

  Eigen::MatrixXd norms;
  const Eigen::MatrixXd w = to_matrix(dst.weight);
  if (bundle.graph.kind_of(destination) == LayerKind::kDepthwise) {
    norms = Eigen::MatrixXd::Zero(dst.num_channels, src.num_channels);
    for (Eigen::Index j = 0; j < dst.num_channels; ++j) norms(j, j) = w.row(j).norm();
  } else {
    norms = routing_norms(w, src.num_channels, dst.kernel_size[0], dst.kernel_size[1]);
  }

  PropagationMatrix out;
  out.source = source;
  out.destination = destination;
  const auto src_m = axis_metric_vectors(msrc);
  const auto dst_m = axis_metric_vectors(mdst);
  const std::vector<bool> dst_excluded = mdst.excluded_mask();
  for (int s = 0; s < 4; ++s) {
    const RoutedSummary routed = routed_source_summary(norms, src_m[s]);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index j = 0; j < dst.num_channels; ++j) {
      if (routed.defined[j] && !dst_excluded[j]) keep.push_back(j);
    }
    out.n_destinations = static_cast<int>(keep.size());
    if (keep.size() < 3) continue;
    Eigen::VectorXd xs(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) xs[static_cast<Eigen::Index>(k)] = routed.values[keep[k]];
    for (int d = 0; d < 4; ++d) {
      Eigen::VectorXd ys(xs.size());
      for (std::size_t k = 0; k < keep.size(); ++k) ys[static_cast<Eigen::Index>(k)] = dst_m[d][keep[k]];
      try {
        out.entries(s, d) = spearman(xs, ys);
      } catch (const DegenerateDataError&) {
        out.entries(s, d) = std::nan("");
      }
    }
  }
  out.local_local = block_mean(out.entries, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  out.target_target = block_mean(out.entries, {{2, 2}, {2, 3}, {3, 2}, {3, 3}});
  out.cross = block_mean(out.entries, {{0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 0}, {2, 1}, {3, 0}, {3, 1}});
  return out;
}

std::vector<PropagationMatrix> propagation_matrices(const TensorBundle& bundle,
                                                    const ChannelMetricTable& metrics) {
  std::vector<PropagationMatrix> out;
  for (const auto& [p, c] : bundle.graph.edges) out.push_back(propagation_matrix(bundle, metrics, p, c));
  return out;
}

}  // namespace channel_axes
