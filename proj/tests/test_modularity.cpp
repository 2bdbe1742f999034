#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "channel_axes/modularity.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/synth.hpp"
#include "test_util.hpp"

using namespace channel_axes;

namespace {

AxisGraph make_graph(int n, std::vector<WeightedEdge> edges) {
  AxisGraph g;
  g.n = n;
  g.edges = std::move(edges);
  g.positive_pairs = static_cast<int>(g.edges.size());
  return g;
}

AxisGraph two_triangles() {
  return make_graph(6, {{0, 1, 1}, {0, 2, 1}, {1, 2, 1}, {3, 4, 1}, {3, 5, 1}, {4, 5, 1}});
}

// Q = (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j) from the dense adjacency.
double modularity_oracle(const AxisGraph& g, const Partition& c) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g.n, g.n);
  for (const auto& e : g.edges) a(e.i, e.j) = a(e.j, e.i) = e.weight;
  const Eigen::VectorXd k = a.rowwise().sum();
  const double two_m = k.sum();
  if (two_m == 0) return 0.0;
  double q = 0;
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.n; ++j) {
      if (c[i] == c[j]) q += a(i, j) - k[i] * k[j] / two_m;
    }
  }
  return q / two_m;
}

// Exhaustive maximum over all set partitions (restricted growth strings).
double brute_force_max_q(const AxisGraph& g) {
  Partition labels(static_cast<std::size_t>(g.n), 0);
  double best = -1.0;
  std::function<void(int, int)> rec = [&](int pos, int used) {
    if (pos == g.n) {
      best = std::max(best, modularity_oracle(g, labels));
      return;
    }
    for (int c = 0; c <= used; ++c) {
      labels[pos] = c;
      rec(pos + 1, std::max(used, c + 1));
    }
  };
  labels[0] = 0;
  rec(1, 1);
  return best;
}

AxisGraph random_graph(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<WeightedEdge> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (rng.uniform() < 0.35) edges.push_back({i, j, rng.uniform(0.1, 2.0)});
    }
  }
  return make_graph(n, edges);
}

}  // namespace

TEST(Modularity, TwoTriangles) {
  const auto g = two_triangles();
  const auto res = greedy_modularity(g);
  EXPECT_NEAR(res.q, 0.5, 1e-12);
  EXPECT_NEAR(brute_force_max_q(g), 0.5, 1e-12);
  EXPECT_EQ(canonical_partition(res.communities), (Partition{0, 0, 0, 1, 1, 1}));
}

TEST(Modularity, AllInOneCommunityIsZero) {
  const auto g = two_triangles();
  EXPECT_NEAR(modularity(g, Partition(6, 0)), 0.0, 1e-12);
  EXPECT_EQ(greedy_modularity(make_graph(4, {})).q, 0.0);
}

TEST(Modularity, MatchesAdjacencyOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = random_graph(9, seed);
    Rng rng(seed + 100);
    Partition c(9);
    for (auto& v : c) v = static_cast<int>(rng.index(3));
    EXPECT_NEAR(modularity(g, c), modularity_oracle(g, c), 1e-12);
  }
}

TEST(Modularity, GreedyNeverExceedsExhaustiveMaximum) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const int n = 5 + static_cast<int>(seed % 4);
    const auto g = random_graph(n, 500 + seed);
    const auto res = greedy_modularity(g);
    const double exact = brute_force_max_q(g);
    EXPECT_LE(res.q, exact + 1e-12);
    EXPECT_GE(res.q, 0.0);
    EXPECT_NEAR(res.q, modularity_oracle(g, res.communities), 1e-12);
  }
}

TEST(Modularity, InvariantToWeightScaling) {
  const auto g = random_graph(10, 77);
  auto scaled = g;
  for (auto& e : scaled.edges) e.weight *= 37.5;
  const auto a = greedy_modularity(g);
  const auto b = greedy_modularity(scaled);
  EXPECT_NEAR(a.q, b.q, 1e-12);
  EXPECT_EQ(canonical_partition(a.communities), canonical_partition(b.communities));
}

TEST(TopFractionGraph, KeepsCeilOfPositivePairs) {
  // 15 nodes: 105 pairs, make exactly 100 positive.
  const int n = 15;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  int count = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double v = count < 100 ? 1.0 + count : -1.0;
      w(i, j) = w(j, i) = v;
      ++count;
    }
  }
  const auto g = top_fraction_graph(w, 0.10, GraphKind::kRedundancy);
  EXPECT_EQ(g.positive_pairs, 100);
  ASSERT_EQ(g.edges.size(), 10u);
  for (const auto& e : g.edges) {
    EXPECT_LT(e.i, e.j);
    EXPECT_GE(e.weight, 91.0);
  }
}

TEST(TopFractionGraph, TiesBrokenLexicographically) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(5, 5, 1.0);
  const auto g = top_fraction_graph(w, 0.2, GraphKind::kSynergy);
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.edges[0], (WeightedEdge{0, 1, 1.0}));
  EXPECT_EQ(g.edges[1], (WeightedEdge{0, 2, 1.0}));
}

TEST(TopFractionGraph, NonPositiveWeightsGiveEmptyGraph) {
  const Eigen::MatrixXd w = -Eigen::MatrixXd::Ones(4, 4);
  const auto g = top_fraction_graph(w, 0.1, GraphKind::kSynergy);
  EXPECT_TRUE(g.edges.empty());
  EXPECT_EQ(greedy_modularity(g).q, 0.0);
}

TEST(BuildGraph, DuplicatePairIsStrongestRedundancyEdge) {
  SynthSpec spec;
  spec.channels = {20};
  spec.input_dim = 16;
  spec.batch = 2000;
  spec.patches = 2000;
  spec.duplication_plan = {{0, 4, {11}, {}}};
  spec.seed = 2;
  const auto bundle = synth_bundle(spec).bundle;
  const auto table = compute_metrics(bundle, MetricsConfig{});
  const auto g = build_graph(table.layers[0], GraphKind::kRedundancy);
  ASSERT_FALSE(g.edges.empty());
  const auto best = std::max_element(g.edges.begin(), g.edges.end(),
                                     [](const auto& a, const auto& b) { return a.weight < b.weight; });
  EXPECT_EQ(best->i, 4);
  EXPECT_EQ(best->j, 11);
  const auto cmp = compare_graphs(table.layers[0]);
  EXPECT_NEAR(cmp.gap, cmp.q_r - cmp.q_s, 1e-15);
  EXPECT_EQ(cmp.edges_r, static_cast<int>(g.edges.size()));
}
