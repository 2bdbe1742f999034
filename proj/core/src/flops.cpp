#include <algorithm>
#include <map>
#include <set>

#include "channel_axes/error.hpp"
#include "channel_axes/pruning.hpp"

namespace channel_axes {

std::size_t Architecture::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name == name) return i;
  }
  throw ValidationError("architecture has no layer '" + name + "'");
}

Architecture architecture_of(const TensorBundle& bundle) {
  Architecture arch;
  arch.graph = bundle.graph;
  for (const auto& l : bundle.layers) {
    LayerShape s;
    s.name = l.name;
    s.kind = bundle.graph.kind_of(l.name);
    s.channels = l.num_channels;
    s.fan_in = l.fan_in();
    s.kh = l.kernel_size[0];
    s.kw = l.kernel_size[1];
    const auto hw = bundle.graph.spatial_size_of(l.name);
    s.h = hw[0];
    s.w = hw[1];
    arch.layers.push_back(s);
  }
  return arch;
}

namespace {

std::vector<std::size_t> topological_order(const Architecture& arch) {
  const auto n = arch.layers.size();
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<std::size_t>> out(n);
  for (const auto& [p, c] : arch.graph.edges) {
    const auto pi = arch.index_of(p);
    const auto ci = arch.index_of(c);
    out[pi].push_back(ci);
    ++indegree[ci];
  }
  std::vector<std::size_t> order;
  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) ready.insert(i);
  }
  while (!ready.empty()) {
    const auto i = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(i);
    for (auto c : out[i]) {
      if (--indegree[c] == 0) ready.insert(c);
    }
  }
  if (order.size() != n) throw ValidationError("non-DAG graph (cycle detected)");
  return order;
}

std::int64_t count_true(const std::vector<bool>& v) { return std::count(v.begin(), v.end(), true); }

struct Cost {
  std::vector<double> per_layer;
  double total = 0;
};

Cost layer_costs(const Architecture& arch, const std::vector<std::vector<bool>>& keep) {
  const auto n = arch.layers.size();
  std::map<std::string, int> group_of;
  for (std::size_t g = 0; g < arch.graph.coupling_groups.size(); ++g) {
    for (const auto& name : arch.graph.coupling_groups[g]) group_of[name] = static_cast<int>(g);
  }
  std::vector<std::vector<bool>> effective(n);
  Cost cost;
  cost.per_layer.assign(n, 0.0);
  for (auto l : topological_order(arch)) {
    const auto& shape = arch.layers[l];
    const auto producers = arch.graph.producers_of(shape.name);
    effective[l] = keep[l];

    // Input channels actually present: producers of one coupling group share
    // a single (summed) tensor.
    double c_in = 0;
    std::set<int> seen_groups;
    for (const auto& p : producers) {
      auto g = group_of.find(p);
      if (g != group_of.end()) {
        if (!seen_groups.insert(g->second).second) continue;
      }
      c_in += static_cast<double>(count_true(effective[arch.index_of(p)]));
    }
    const double spatial = static_cast<double>(shape.kh * shape.kw * shape.h * shape.w);
    switch (shape.kind) {
      case LayerKind::kStandard: {
        if (producers.empty()) c_in = static_cast<double>(shape.fan_in / (shape.kh * shape.kw));
        cost.per_layer[l] = c_in * static_cast<double>(count_true(keep[l])) * spatial;
        break;
      }
      case LayerKind::kDepthwise: {
        for (const auto& p : producers) {
          const auto& pk = effective[arch.index_of(p)];
          if (pk.size() != effective[l].size()) {
            throw ValidationError("depthwise layer '" + shape.name + "': producer '" + p +
                                  "' channel count differs");
          }
          for (std::size_t c = 0; c < pk.size(); ++c) effective[l][c] = effective[l][c] && pk[c];
        }
        cost.per_layer[l] = static_cast<double>(count_true(effective[l])) * spatial;
        break;
      }
      case LayerKind::kLinear: {
        if (producers.empty()) c_in = static_cast<double>(shape.fan_in);
        cost.per_layer[l] = c_in * static_cast<double>(count_true(keep[l]));
        break;
      }
    }
    cost.total += cost.per_layer[l];
  }
  return cost;
}

}  // namespace

FlopsReport flops(const Architecture& arch, const PruneMask& mask) {
  if (mask.keep.size() != arch.layers.size()) {
    throw ValidationError("flops: mask covers " + std::to_string(mask.keep.size()) + " layers, architecture has " +
                          std::to_string(arch.layers.size()));
  }
  std::vector<std::vector<bool>> keep(arch.layers.size());
  for (std::size_t m = 0; m < mask.keep.size(); ++m) {
    const auto l = mask.layers.empty() ? m : arch.index_of(mask.layers[m]);
    if (static_cast<std::int64_t>(mask.keep[m].size()) != arch.layers[l].channels) {
      throw ValidationError("flops: mask for layer '" + arch.layers[l].name + "' has wrong length");
    }
    keep[l] = mask.keep[m];
  }
  std::vector<std::vector<bool>> all;
  for (const auto& l : arch.layers) all.emplace_back(static_cast<std::size_t>(l.channels), true);
  const Cost pruned = layer_costs(arch, keep);
  const Cost full = layer_costs(arch, all);
  FlopsReport r;
  r.per_layer = pruned.per_layer;
  r.per_layer_unpruned = full.per_layer;
  r.total = pruned.total;
  r.total_unpruned = full.total;
  r.fraction_pruned = full.total > 0 ? 1.0 - pruned.total / full.total : 0.0;
  return r;
}

}  // namespace channel_axes
