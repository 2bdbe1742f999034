#include <algorithm>
#include <cmath>
#include <numeric>

#include "channel_axes/error.hpp"
#include "channel_axes/pruning.hpp"

namespace channel_axes {

namespace {

struct Unit {
  int group = 0;
  int channel = 0;
  double score = 0.0;
  int forced = 0;
};

struct Groups {
  std::vector<std::vector<std::size_t>> members;  // group -> layer indices
  std::vector<std::int64_t> channels;             // group -> N
};

Groups build_groups(const Architecture& arch) {
  Groups g;
  std::vector<int> group_of(arch.layers.size(), -1);
  for (const auto& cg : arch.graph.coupling_groups) {
    std::vector<std::size_t> members;
    for (const auto& name : cg) members.push_back(arch.index_of(name));
    std::sort(members.begin(), members.end());
    const int id = static_cast<int>(g.members.size());
    for (auto m : members) group_of[m] = id;
    g.members.push_back(members);
    g.channels.push_back(arch.layers[members.front()].channels);
  }
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    if (group_of[l] >= 0) continue;
    group_of[l] = static_cast<int>(g.members.size());
    g.members.push_back({l});
    g.channels.push_back(arch.layers[l].channels);
  }
  // Order groups by their first layer so ties resolve in layer order.
  std::vector<std::size_t> order(g.members.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return g.members[a].front() < g.members[b].front(); });
  Groups sorted;
  for (auto o : order) {
    sorted.members.push_back(g.members[o]);
    sorted.channels.push_back(g.channels[o]);
  }
  return sorted;
}

std::vector<std::size_t> table_index(const Architecture& arch, const ScoreTable& scores) {
  if (scores.layers.size() != arch.layers.size()) {
    throw ValidationError("score table '" + scores.method + "' covers " + std::to_string(scores.layers.size()) +
                          " layers, architecture has " + std::to_string(arch.layers.size()));
  }
  std::vector<std::size_t> idx(arch.layers.size());
  for (std::size_t t = 0; t < scores.layers.size(); ++t) {
    const auto l = arch.index_of(scores.layers[t]);
    if (scores.scores[t].size() != arch.layers[l].channels) {
      throw ValidationError("score table '" + scores.method + "' layer '" + scores.layers[t] +
                            "': score length does not match channel count");
    }
    idx[l] = t;
  }
  return idx;
}

std::vector<Unit> build_units(const Architecture& arch, const Groups& groups, const ScoreTable& scores) {
  const auto idx = table_index(arch, scores);
  std::vector<Unit> units;
  for (std::size_t g = 0; g < groups.members.size(); ++g) {
    for (std::int64_t c = 0; c < groups.channels[g]; ++c) {
      Unit u;
      u.group = static_cast<int>(g);
      u.channel = static_cast<int>(c);
      bool any_keep = false, all_drop = true;
      for (auto l : groups.members[g]) {
        const auto t = idx[l];
        u.score += scores.scores[t][c];
        const int f = scores.forced.empty() ? 0 : scores.forced[t][c];
        any_keep = any_keep || f > 0;
        all_drop = all_drop && f < 0;
      }
      u.score /= static_cast<double>(groups.members[g].size());
      u.forced = any_keep ? 1 : (all_drop ? -1 : 0);
      units.push_back(u);
    }
  }
  std::stable_sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) {
    if (a.forced != b.forced) return a.forced < b.forced;
    if (a.score != b.score) return a.score < b.score;
    if (a.group != b.group) return a.group < b.group;
    return a.channel < b.channel;
  });
  return units;
}

void check_sparsity(double sparsity) {
  if (!(sparsity > 0 && sparsity < 1)) throw ValidationError("sparsity must lie in (0, 1)");
}

PruneMask finish(const Architecture& arch, const Groups& groups, const std::vector<std::vector<bool>>& group_keep,
                 double sparsity, std::int64_t target) {
  PruneMask mask = PruneMask::full(arch);
  mask.sparsity_nominal = sparsity;
  std::int64_t removed = 0, total = 0;
  for (const auto& l : arch.layers) total += l.channels;
  for (std::size_t g = 0; g < groups.members.size(); ++g) {
    for (auto l : groups.members[g]) {
      mask.keep[l] = group_keep[g];
      removed += std::count(group_keep[g].begin(), group_keep[g].end(), false);
    }
  }
  mask.sparsity_achieved = static_cast<double>(removed) / static_cast<double>(total);
  mask.min_keep_bound = removed < target;
  mask.flops_fraction_pruned = flops(arch, mask).fraction_pruned;
  return mask;
}

}  // namespace

PruneMask PruneMask::full(const Architecture& arch) {
  PruneMask m;
  for (const auto& l : arch.layers) {
    m.layers.push_back(l.name);
    m.keep.emplace_back(static_cast<std::size_t>(l.channels), true);
  }
  return m;
}

PruneMask global_threshold_mask(const Architecture& arch, const ScoreTable& scores, double sparsity,
                                const MaskOptions& options) {
  check_sparsity(sparsity);
  if (options.min_keep < 1) throw ValidationError("min_keep must be >= 1");
  const Groups groups = build_groups(arch);
  const auto units = build_units(arch, groups, scores);
  std::int64_t total = 0;
  for (const auto& l : arch.layers) total += l.channels;
  const auto target = static_cast<std::int64_t>(std::llround(sparsity * static_cast<double>(total)));

  std::vector<std::vector<bool>> keep;
  std::vector<std::int64_t> kept;
  for (std::size_t g = 0; g < groups.members.size(); ++g) {
    keep.emplace_back(static_cast<std::size_t>(groups.channels[g]), true);
    kept.push_back(groups.channels[g]);
  }
  std::int64_t removed = 0;
  for (const auto& u : units) {
    if (removed >= target) break;
    if (u.forced > 0) continue;
    if (kept[u.group] - 1 < options.min_keep) continue;
    keep[u.group][u.channel] = false;
    --kept[u.group];
    removed += static_cast<std::int64_t>(groups.members[u.group].size());
  }
  return finish(arch, groups, keep, sparsity, target);
}

PruneMask hybrid_mask(const Architecture& arch, const ScoreTable& allocation, const ScoreTable& selection,
                      double sparsity, const MaskOptions& options) {
  const PruneMask alloc = global_threshold_mask(arch, allocation, sparsity, options);
  const Groups groups = build_groups(arch);
  const auto units = build_units(arch, groups, selection);
  std::int64_t total = 0;
  for (const auto& l : arch.layers) total += l.channels;
  const auto target = static_cast<std::int64_t>(std::llround(sparsity * static_cast<double>(total)));

  std::vector<std::vector<bool>> keep;
  std::vector<std::int64_t> quota;
  for (std::size_t g = 0; g < groups.members.size(); ++g) {
    keep.emplace_back(static_cast<std::size_t>(groups.channels[g]), true);
    const auto& k = alloc.keep[groups.members[g].front()];
    quota.push_back(std::count(k.begin(), k.end(), false));
  }
  // Units are already in ascending selection order; forced-keep units last.
  for (const auto& u : units) {
    if (quota[u.group] == 0 || u.forced > 0) continue;
    keep[u.group][u.channel] = false;
    --quota[u.group];
  }
  return finish(arch, groups, keep, sparsity, target);
}

}  // namespace channel_axes
