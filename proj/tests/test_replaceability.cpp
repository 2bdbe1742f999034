#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "channel_axes/error.hpp"
#include "channel_axes/lesion.hpp"
#include "channel_axes/replaceability.hpp"
#include "channel_axes/rng.hpp"
#include "channel_axes/synth.hpp"
#include "test_util.hpp"

using namespace channel_axes;

namespace {

// ch0 = (ch1 + ch2)/sqrt(2) with ch1, ch2 uncorrelated, plus `extra`
// independent channels.
Eigen::MatrixXd planted_corr(int extra = 0) {
  const int n = 3 + extra;
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(n, n);
  c(0, 1) = c(1, 0) = c(0, 2) = c(2, 0) = 1.0 / std::sqrt(2.0);
  return c;
}

// Direct normal-equation evaluation of the regularized quadratic form.
double explanation_oracle(int i, const std::vector<int>& s, const Eigen::MatrixXd& corr) {
  const auto k = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd r(k, k);
  Eigen::VectorXd rho(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    rho[a] = corr(i, s[a]);
    for (Eigen::Index b = 0; b < k; ++b) r(a, b) = corr(s[a], s[b]);
  }
  r.diagonal().array() += 1e-6;
  const double e = rho.dot(r.inverse() * rho);
  return std::clamp(e, 0.0, 1.0);
}

Hull make_hull(double e_full, int size, HullStatus status) {
  Hull h;
  h.e_full = e_full;
  h.status = status;
  for (int k = 0; k < size; ++k) h.members.push_back(k + 1);
  return h;
}

}  // namespace

TEST(PeerExplanation, PlantedSumOfTwo) {
  const auto c = planted_corr();
  EXPECT_NEAR(peer_explanation(0, {1}, c), 0.5, 1e-6);
  EXPECT_NEAR(peer_explanation(0, {1, 2}, c), 1.0, 1e-5);
  EXPECT_NEAR(peer_explanation(1, {2}, c), 0.0, 1e-12);
}

TEST(PeerExplanation, DuplicateAndIndependent) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(3, 3);
  c(0, 1) = c(1, 0) = 1.0;
  EXPECT_NEAR(peer_explanation(0, {1}, c), 1.0, 1e-5);
  EXPECT_NEAR(peer_explanation(0, {2}, c), 0.0, 1e-12);
}

TEST(PeerExplanation, MatchesNormalEquations) {
  const auto corr = test_util::random_correlation(10, 3, 4);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int i = static_cast<int>(rng.index(10));
    std::vector<int> s;
    for (int j = 0; j < 10; ++j) {
      if (j != i && rng.uniform() < 0.4) s.push_back(j);
    }
    if (s.empty()) continue;
    EXPECT_NEAR(peer_explanation(i, s, corr), explanation_oracle(i, s, corr), 1e-9);
  }
}

TEST(PeerExplanation, MonotoneInPeerSet) {
  const auto corr = test_util::random_correlation(12, 4, 6);
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int i = static_cast<int>(rng.index(12));
    std::vector<int> small, large;
    for (int j = 0; j < 12; ++j) {
      if (j == i) continue;
      const double u = rng.uniform();
      if (u < 0.3) small.push_back(j);
      if (u < 0.7) large.push_back(j);
    }
    if (small.empty()) continue;
    EXPECT_GE(peer_explanation(i, large, corr), peer_explanation(i, small, corr) - 1e-6);
  }
}

TEST(GreedyHull, PlantedCases) {
  const auto c = planted_corr(3);
  const auto h = greedy_hull(0, c);
  std::vector<int> members = h.members;
  std::sort(members.begin(), members.end());
  EXPECT_EQ(members, (std::vector<int>{1, 2}));
  EXPECT_EQ(h.status, HullStatus::kCompact);
  ASSERT_EQ(h.e_trace.size(), 2u);
  EXPECT_NEAR(h.e_trace[0], 0.5, 1e-6);

  Eigen::MatrixXd dup = Eigen::MatrixXd::Identity(4, 4);
  dup(2, 3) = dup(3, 2) = 1.0;
  const auto hd = greedy_hull(2, dup);
  EXPECT_EQ(hd.members, (std::vector<int>{3}));
  EXPECT_EQ(hd.status, HullStatus::kSingleton);

  const auto hi = greedy_hull(0, Eigen::MatrixXd::Identity(5, 5));
  EXPECT_EQ(hi.status, HullStatus::kIrreplaceable);
  EXPECT_TRUE(hi.members.empty());
  EXPECT_THROW(greedy_hull(0, Eigen::MatrixXd::Identity(1, 1)), ValidationError);
}

TEST(GreedyHull, TraceIsNonDecreasingAndCapped) {
  const auto corr = test_util::random_correlation(30, 12, 8);
  HullConfig cfg;
  cfg.eps = 0.001;
  cfg.cap = 5;
  for (const auto& h : layer_hulls(corr, cfg)) {
    EXPECT_LE(h.members.size(), 5u);
    for (std::size_t k = 1; k < h.e_trace.size(); ++k) {
      EXPECT_GE(h.e_trace[k], h.e_trace[k - 1] - 1e-12);
    }
    for (double e : h.e_trace) {
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, 1.0);
    }
    if (h.members.size() == 5u) {
      EXPECT_EQ(h.status, HullStatus::kSaturated);
    }
  }
}

TEST(GreedyHull, ExcludedChannelsNeverJoin) {
  const auto c = planted_corr(2);
  std::vector<bool> excluded(5, false);
  excluded[2] = true;
  const auto h = greedy_hull(0, c, HullConfig{}, excluded);
  for (int m : h.members) EXPECT_NE(m, 2);
}

// Greedy hulls are near-minimal: at most one more member than the smallest
// subset that reaches the same explanation target.
TEST(GreedyHull, NearOptimalAgainstBruteForce) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const int n = 10;
    const auto corr = test_util::random_correlation(n, 3, 100 + seed);
    HullConfig cfg;
    for (const auto& h : layer_hulls(corr, cfg)) {
      if (h.status == HullStatus::kIrreplaceable || h.status == HullStatus::kSaturated) continue;
      std::vector<int> peers;
      for (int j = 0; j < n; ++j) {
        if (j != h.channel) peers.push_back(j);
      }
      const double target = (1.0 - cfg.eps) * h.e_full;
      std::size_t best = peers.size();
      for (unsigned mask = 1; mask < (1u << peers.size()); ++mask) {
        std::vector<int> s;
        for (std::size_t b = 0; b < peers.size(); ++b) {
          if (mask & (1u << b)) s.push_back(peers[b]);
        }
        if (s.size() >= best) continue;
        if (explanation_oracle(h.channel, s, corr) >= target - 1e-9) best = s.size();
      }
      EXPECT_LE(h.members.size(), best + 1) << "seed " << seed << " channel " << h.channel;
    }
  }
}

TEST(HullSummary, Aggregates) {
  std::vector<Hull> hulls{make_hull(1, 1, HullStatus::kSingleton), make_hull(1, 1, HullStatus::kSingleton),
                          make_hull(1, 10, HullStatus::kSaturated), make_hull(1, 10, HullStatus::kSaturated),
                          make_hull(0.001, 0, HullStatus::kIrreplaceable)};
  const auto s = hull_summary(hulls);
  EXPECT_DOUBLE_EQ(s.mean_size, 5.5);
  EXPECT_DOUBLE_EQ(s.frac_singleton, 0.5);
  EXPECT_DOUBLE_EQ(s.frac_saturated, 0.5);
  EXPECT_EQ(s.n_hulls, 4);
  EXPECT_EQ(s.n_irreplaceable, 1);
  const auto all_single = hull_summary({make_hull(1, 1, HullStatus::kSingleton)});
  EXPECT_DOUBLE_EQ(all_single.mean_size, 1.0);
  EXPECT_DOUBLE_EQ(all_single.frac_singleton, 1.0);
}

TEST(CompactScores, Arithmetic) {
  std::vector<Hull> hulls{make_hull(1.0, 1, HullStatus::kSingleton), make_hull(0.8, 4, HullStatus::kCompact),
                          make_hull(0.0, 0, HullStatus::kIrreplaceable)};
  Eigen::VectorXd i_x(3);
  i_x << 0.1, 0.5, 0.9;
  const auto cs = compact_scores(i_x, hulls);
  EXPECT_DOUBLE_EQ(cs.compact[0], 1.0);
  EXPECT_DOUBLE_EQ(cs.compact[1], 0.2);
  EXPECT_DOUBLE_EQ(cs.compact[2], 0.0);
  // z(-I_X) + z(compact), each with sample sd.
  auto z = [](Eigen::VectorXd v) {
    const double m = v.mean();
    const double sd = std::sqrt((v.array() - m).square().sum() / (v.size() - 1));
    return Eigen::VectorXd((v.array() - m) / sd);
  };
  const Eigen::VectorXd expected = z(-i_x) + z(cs.compact);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(cs.local_compact[k], expected[k], 1e-12);
}

TEST(PeerReconstruction, SumOfTwoWeights) {
  const Eigen::Index n = 4000;
  Eigen::MatrixXd base = test_util::gaussian_matrix(n, 2, 9);
  base = base.rowwise() - base.colwise().mean();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(base);
  const Eigen::MatrixXd q = std::sqrt(double(n - 1)) * (qr.householderQ() * Eigen::MatrixXd::Identity(n, 2));
  Eigen::MatrixXd acts(n, 3);
  acts.col(0) = (q.col(0) + q.col(1)) / std::sqrt(2.0);
  acts.col(1) = q.col(0);
  acts.col(2) = q.col(1);
  const auto pr = peer_reconstruction(0, acts, 8, 1e-9);
  EXPECT_TRUE(pr.shrunk);
  ASSERT_EQ(pr.weights.size(), 2);
  EXPECT_NEAR(pr.weights[0], 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(pr.weights[1], 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(pr.r2_fit, 1.0, 1e-6);
  EXPECT_LT((pr.reconstruct(acts) - acts.col(0)).norm() / acts.col(0).norm(), 1e-5);
}

TEST(PeerReconstruction, IndependentPeersExplainNothing) {
  const Eigen::MatrixXd acts = test_util::gaussian_matrix(5000, 6, 10);
  const auto pr = peer_reconstruction(0, acts, 4);
  EXPECT_EQ(pr.peers.size(), 4u);
  EXPECT_FALSE(pr.shrunk);
  EXPECT_LT(pr.r2_fit, 0.01);
}

TEST(Lesion, RecoveryArithmetic) {
  EXPECT_NEAR(*recovery_fraction(0.10, 0.03), 0.7, 1e-12);
  EXPECT_FALSE(recovery_fraction(0.0, 0.0).has_value());
  EXPECT_FALSE(recovery_fraction(1e-5, 0.0, 1e-4).has_value());
}

namespace {

SynthSpec lesion_spec() {
  SynthSpec spec;
  spec.channels = {16};
  spec.input_dim = 20;
  spec.batch = 500;
  spec.patches = 500;
  spec.structure = ChannelStructure::kOrthogonal;
  spec.duplication_plan = {{0, 5, {2}, {}}};
  spec.zero_readout = {{0, 9}};
  spec.seed = 12;
  return spec;
}

}  // namespace

TEST(Lesion, PlantedDuplicateRecoversFully) {
  const auto model = synth_model(lesion_spec());
  LesionConfig cfg;
  cfg.samples = 10000;
  const auto res = lesion_experiment(model.layers[0], {5, 9}, cfg);
  const auto& dup = res.records[0];
  ASSERT_TRUE(dup.recovery.has_value()) << dup.delta_loss;
  EXPECT_GE(*dup.recovery, 0.99);
  EXPECT_NEAR(dup.peer_r2, 1.0, 1e-3);
  EXPECT_LE(std::abs(res.records[1].delta_loss), 1e-12);
  EXPECT_FALSE(res.records[1].recovery.has_value());
}

TEST(Lesion, IsolatedChannelDoesNotRecover) {
  auto spec = lesion_spec();
  spec.duplication_plan.clear();
  const auto model = synth_model(spec);
  LesionConfig cfg;
  cfg.samples = 10000;
  std::vector<int> channels(16);
  for (int c = 0; c < 16; ++c) channels[c] = c;
  const auto res = lesion_experiment(model.layers[0], channels, cfg);
  for (const auto& r : res.records) {
    if (!r.recovery || r.delta_loss < 1e-2) continue;
    EXPECT_LT(std::abs(*r.recovery), 0.1) << r.channel;
  }
}

TEST(Lesion, DeterministicInSeeds) {
  const auto model = synth_model(lesion_spec());
  LesionConfig cfg;
  cfg.samples = 2000;
  cfg.seed = 4;
  const auto a = lesion_experiment(model.layers[0], {0, 1, 5}, cfg);
  const auto b = lesion_experiment(model.layers[0], {0, 1, 5}, cfg);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    EXPECT_EQ(a.records[k].delta_loss, b.records[k].delta_loss);
    EXPECT_EQ(a.records[k].delta_loss_replaced, b.records[k].delta_loss_replaced);
  }
}

TEST(MatchedTask, RecoveryDrivenByPeerR2) {
  Rng rng(21);
  std::vector<LesionRecord> records;
  for (int k = 0; k < 400; ++k) {
    LesionRecord r;
    r.channel = k;
    r.task_mi = rng.uniform();
    r.i_x = rng.uniform();
    r.peer_r2 = rng.uniform();
    r.delta_loss = 1.0;
    r.delta_loss_replaced = 1.0 - r.peer_r2 * r.peer_r2;
    r.recovery = recovery_fraction(r.delta_loss, r.delta_loss_replaced);
    records.push_back(r);
  }
  const auto m = matched_task_analysis(records, 5);
  ASSERT_EQ(m.residual.size(), 3u);
  EXPECT_EQ(m.residual[0].predictor, "peer_r2");
  EXPECT_GT(*m.residual[0].rho, 0.99);
  EXPECT_LT(std::abs(*m.residual[1].rho), 0.15);
  EXPECT_LT(std::abs(*m.residual[2].rho), 0.15);
  EXPECT_DOUBLE_EQ(m.win_rate, 1.0);
  EXPECT_EQ(m.bins_used, 5);
}

TEST(MatchedTask, IndependentRecoveryStaysInNullBand) {
  Rng rng(22);
  std::vector<LesionRecord> records;
  for (int k = 0; k < 400; ++k) {
    LesionRecord r;
    r.layer = k % 2;
    r.task_mi = rng.uniform();
    r.i_x = rng.uniform();
    r.peer_r2 = rng.uniform();
    r.delta_loss = 1.0;
    r.delta_loss_replaced = rng.uniform();
    records.push_back(r);
  }
  const auto m = matched_task_analysis(records, 5);
  for (const auto& rc : m.residual) EXPECT_LT(std::abs(*rc.rho), 0.15) << rc.predictor;
  EXPECT_GT(m.win_rate, 0.4);
  EXPECT_LT(m.win_rate, 0.6);
  EXPECT_LE(m.win_ci.first, m.win_rate);
  EXPECT_GE(m.win_ci.second, m.win_rate);
}
