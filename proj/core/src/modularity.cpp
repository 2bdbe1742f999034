#include "channel_axes/modularity.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "channel_axes/error.hpp"

namespace channel_axes {

std::string_view to_string(GraphKind kind) {
  return kind == GraphKind::kRedundancy ? "R" : "S";
}

AxisGraph top_fraction_graph(const Eigen::MatrixXd& pair_weights, double top_frac, GraphKind kind,
                             const std::vector<bool>& excluded) {
  if (!(top_frac > 0 && top_frac <= 1)) throw ValidationError("build_graph: top_frac must lie in (0, 1]");
  AxisGraph g;
  g.kind = kind;
  g.n = static_cast<int>(pair_weights.rows());
  std::vector<WeightedEdge> positive;
  for (int i = 0; i < g.n; ++i) {
    if (!excluded.empty() && excluded[i]) continue;
    for (int j = i + 1; j < g.n; ++j) {
      if (!excluded.empty() && excluded[j]) continue;
      const double w = pair_weights(i, j);
      if (w > 0 && std::isfinite(w)) positive.push_back({i, j, w});
    }
  }
  g.positive_pairs = static_cast<int>(positive.size());
  std::stable_sort(positive.begin(), positive.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  const auto keep = static_cast<std::size_t>(
      std::ceil(top_frac * static_cast<double>(positive.size()) - 1e-9));
  positive.resize(std::min(keep, positive.size()));
  std::sort(positive.begin(), positive.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  g.edges = std::move(positive);
  return g;
}

AxisGraph build_graph(const LayerMetrics& metrics, GraphKind kind, double top_frac, double clip,
                      double ridge) {
  const auto n = metrics.num_channels;
  const std::vector<bool> excluded = metrics.excluded_mask();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  if (kind == GraphKind::kRedundancy) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        w(i, j) = w(j, i) = gaussian_mi_from_corr(metrics.corr(i, j), clip);
      }
    }
  } else {
    if (metrics.rho_t.empty()) throw ValidationError("build_graph: metrics carry no target correlations");
    const auto& primary = metrics.rho_t.at(metrics.primary_target);
    w = pair_synergy_matrix(metrics.pooled_corr, primary, excluded, clip, ridge);
  }
  return top_fraction_graph(w, top_frac, kind, excluded);
}

double modularity(const AxisGraph& g, const Partition& communities) {
  if (static_cast<int>(communities.size()) != g.n) throw ValidationError("modularity: partition size mismatch");
  double total = 0;
  for (const auto& e : g.edges) total += e.weight;
  if (total <= 0) return 0.0;
  std::map<int, double> inside, degree;
  for (const auto& e : g.edges) {
    if (communities[e.i] == communities[e.j]) inside[communities[e.i]] += e.weight;
    degree[communities[e.i]] += e.weight;
    degree[communities[e.j]] += e.weight;
  }
  double q = 0;
  for (const auto& [c, d] : degree) {
    const double a = d / (2 * total);
    const double e = (inside.count(c) ? inside[c] : 0.0) / total;
    q += e - a * a;
  }
  return q;
}

ModularityResult greedy_modularity(const AxisGraph& g) {
  ModularityResult out;
  out.communities.resize(static_cast<std::size_t>(g.n));
  for (int i = 0; i < g.n; ++i) out.communities[i] = i;
  double total = 0;
  for (const auto& e : g.edges) total += e.weight;
  if (total <= 0 || g.n == 0) {
    out.q = 0.0;
    return out;
  }
  // Community c is identified by its smallest member; e[c][d] = w(c,d)/(2m).
  std::vector<std::map<int, double>> e(static_cast<std::size_t>(g.n));
  std::vector<double> a(static_cast<std::size_t>(g.n), 0.0);
  std::vector<bool> alive(static_cast<std::size_t>(g.n), true);
  for (const auto& edge : g.edges) {
    e[edge.i][edge.j] += edge.weight / (2 * total);
    e[edge.j][edge.i] += edge.weight / (2 * total);
    a[edge.i] += edge.weight / (2 * total);
    a[edge.j] += edge.weight / (2 * total);
  }
  std::vector<int> owner(static_cast<std::size_t>(g.n));
  for (int i = 0; i < g.n; ++i) owner[i] = i;

  while (true) {
    int best_c = -1, best_d = -1;
    double best_dq = 0.0;
    for (int c = 0; c < g.n; ++c) {
      if (!alive[c]) continue;
      for (const auto& [d, ecd] : e[c]) {
        if (d <= c) continue;
        const double dq = 2 * (ecd - a[c] * a[d]);
        if (dq > best_dq + 1e-15) {
          best_dq = dq;
          best_c = c;
          best_d = d;
        }
      }
    }
    if (best_c < 0) break;
    // Merge d into c (c < d keeps the smallest-member id).
    for (const auto& [k, w] : e[best_d]) {
      if (k == best_c) continue;
      e[best_c][k] += w;
      e[k][best_c] += w;
      e[k].erase(best_d);
    }
    e[best_c].erase(best_d);
    e[best_d].clear();
    a[best_c] += a[best_d];
    a[best_d] = 0;
    alive[best_d] = false;
    for (int i = 0; i < g.n; ++i) {
      if (owner[i] == best_d) owner[i] = best_c;
    }
  }
  out.communities = canonical_partition(owner);
  out.q = modularity(g, out.communities);
  return out;
}

LayerModularity compare_graphs(const LayerMetrics& metrics, double top_frac, double clip, double ridge) {
  LayerModularity out;
  const AxisGraph r = build_graph(metrics, GraphKind::kRedundancy, top_frac, clip, ridge);
  const AxisGraph s = build_graph(metrics, GraphKind::kSynergy, top_frac, clip, ridge);
  out.q_r = greedy_modularity(r).q;
  out.q_s = greedy_modularity(s).q;
  out.gap = out.q_r - out.q_s;
  out.edges_r = static_cast<int>(r.edges.size());
  out.edges_s = static_cast<int>(s.edges.size());
  return out;
}

}  // namespace channel_axes
