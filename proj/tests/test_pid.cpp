#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "channel_axes/error.hpp"
#include "channel_axes/pid.hpp"
#include "channel_axes/rng.hpp"
#include "test_util.hpp"

using namespace channel_axes;

namespace {

double mi_r2(double r2) { return -0.5 * std::log(1.0 - r2); }

Eigen::VectorXd gaussian_column(Eigen::Index n, std::uint64_t seed) {
  return test_util::gaussian_matrix(n, 1, seed).col(0);
}

}  // namespace

TEST(MmiPid, HandExample) {
  const auto a = mmi_pid(0.2, 0.5, 0.6);
  EXPECT_NEAR(a.red, 0.2, 1e-12);
  EXPECT_NEAR(a.uniq1, 0.0, 1e-12);
  EXPECT_NEAR(a.uniq2, 0.3, 1e-12);
  EXPECT_NEAR(a.syn, 0.1, 1e-12);
  EXPECT_FALSE(a.clamped);
}

TEST(MmiPid, DegenerateCases) {
  const auto zero = mmi_pid(0, 0, 0);
  EXPECT_EQ(zero.red, 0.0);
  EXPECT_EQ(zero.syn, 0.0);
  const auto same = mmi_pid(0.3, 0.3, 0.3);
  EXPECT_DOUBLE_EQ(same.red, 0.3);
  EXPECT_DOUBLE_EQ(same.uniq1, 0.0);
  EXPECT_DOUBLE_EQ(same.uniq2, 0.0);
  EXPECT_NEAR(same.syn, 0.0, 1e-15);
  EXPECT_THROW(mmi_pid(-0.1, 0.2, 0.3), ValidationError);
}

TEST(MmiPid, JointBelowMaxIsClamped) {
  const auto a = mmi_pid(0.2, 0.5, 0.4);
  EXPECT_TRUE(a.clamped);
  EXPECT_NEAR(a.red + a.uniq1 + a.uniq2 + a.syn, 0.5, 1e-12);
  EXPECT_NEAR(a.syn, 0.0, 1e-12);
}

TEST(MmiPid, AtomsReconstructJointAndAreSymmetric) {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const double i1 = rng.uniform(0, 2), i2 = rng.uniform(0, 2);
    const double joint = std::max(i1, i2) + rng.uniform(0, 1);
    const auto a = mmi_pid(i1, i2, joint);
    const auto b = mmi_pid(i2, i1, joint);
    EXPECT_NEAR(a.red + a.uniq1 + a.uniq2 + a.syn, joint, 1e-9);
    EXPECT_DOUBLE_EQ(a.red, std::min(i1, i2));
    EXPECT_DOUBLE_EQ(std::min(a.uniq1, a.uniq2), 0.0);
    EXPECT_DOUBLE_EQ(a.red, b.red);
    EXPECT_DOUBLE_EQ(a.syn, b.syn);
    EXPECT_DOUBLE_EQ(a.uniq1, b.uniq2);
    EXPECT_DOUBLE_EQ(a.uniq2, b.uniq1);
  }
}

TEST(TripletExcess, ThreeWaySumPopulation) {
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(3, 1.0 / std::sqrt(6.0));
  const auto te = triplet_excess(Eigen::MatrixXd::Identity(3, 3), rho,
                                 std::vector<bool>(3, false), TripletConfig{});
  const double s3 = mi_r2(3.0 / 6.0) - mi_r2(2.0 / 6.0);
  const double s2 = mi_r2(2.0 / 6.0) - mi_r2(1.0 / 6.0);
  ASSERT_TRUE(te.s3_over_s2.has_value());
  EXPECT_EQ(te.n_triples, 1);
  EXPECT_NEAR(te.mean_s3, s3, 1e-9);
  EXPECT_NEAR(te.mean_s2, s2, 1e-9);
  EXPECT_NEAR(*te.s3_over_s2, s3 / s2, 1e-8);
}

TEST(TripletExcess, ThreeWaySumFromSamples) {
  const Eigen::Index b = 100000;
  const Eigen::MatrixXd z = test_util::gaussian_matrix(b, 4, 3);
  const Eigen::MatrixXd pooled = z.leftCols(3);
  const Eigen::VectorXd t = z.col(0) + z.col(1) + z.col(2) + std::sqrt(3.0) * z.col(3);
  const auto te = triplet_excess(pooled, t, TripletConfig{});
  EXPECT_NEAR(te.mean_s3, mi_r2(0.5) - mi_r2(2.0 / 6.0), 0.01);
  EXPECT_GT(te.mean_s3, 0.0);
}

TEST(TripletExcess, SingleDriverHasNoExcess) {
  const Eigen::MatrixXd z = test_util::gaussian_matrix(20000, 5, 4);
  const Eigen::VectorXd t = 2.0 * z.col(0) + 0.3 * gaussian_column(20000, 5);
  const auto te = triplet_excess(z, t, TripletConfig{});
  ASSERT_TRUE(te.s3_over_s2.has_value());
  EXPECT_LT(te.mean_s3, 0.002);
  EXPECT_LT(*te.s3_over_s2, 0.25);
}

TEST(TripletExcess, MissingRatioWhenNoPairExcess) {
  Eigen::MatrixXd corr = Eigen::MatrixXd::Ones(3, 3);
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(3, 0.5);
  const auto te = triplet_excess(corr, rho, std::vector<bool>(3, false), TripletConfig{});
  EXPECT_FALSE(te.s3_over_s2.has_value());
  EXPECT_EQ(te.n_used, 0);
}

TEST(TripletExcess, SubsampleIsSubsetOfEnumeration) {
  const Eigen::MatrixXd corr = test_util::random_correlation(10, 3, 8);
  Eigen::VectorXd rho(10);
  for (int i = 0; i < 10; ++i) rho[i] = 0.05 + 0.03 * i;
  TripletConfig full;
  full.top_k = 10;
  const auto all = triplet_excess(corr, rho, std::vector<bool>(10, false), full);
  EXPECT_TRUE(all.enumerated);
  EXPECT_EQ(all.n_triples, 120);
  TripletConfig sub = full;
  sub.max_triples = 40;
  sub.seed = 9;
  const auto part = triplet_excess(corr, rho, std::vector<bool>(10, false), sub);
  const auto again = triplet_excess(corr, rho, std::vector<bool>(10, false), sub);
  EXPECT_FALSE(part.enumerated);
  EXPECT_EQ(part.n_triples, 40);
  EXPECT_EQ(part.triples, again.triples);
  const std::set<std::array<int, 3>> universe(all.triples.begin(), all.triples.end());
  for (const auto& t : part.triples) EXPECT_TRUE(universe.count(t));
}

TEST(TripletExcess, InvariantToChannelOrderUnderFullEnumeration) {
  const int n = 8;
  const Eigen::MatrixXd corr = test_util::random_correlation(n, 3, 10);
  Eigen::VectorXd rho(n);
  for (int i = 0; i < n; ++i) rho[i] = 0.1 + 0.04 * ((i * 5) % n);
  std::vector<int> perm{3, 7, 0, 5, 1, 6, 2, 4};
  Eigen::MatrixXd pc(n, n);
  Eigen::VectorXd pr(n);
  for (int a = 0; a < n; ++a) {
    pr[a] = rho[perm[a]];
    for (int b = 0; b < n; ++b) pc(a, b) = corr(perm[a], perm[b]);
  }
  TripletConfig cfg;
  cfg.top_k = n;
  const auto x = triplet_excess(corr, rho, std::vector<bool>(n, false), cfg);
  const auto y = triplet_excess(pc, pr, std::vector<bool>(n, false), cfg);
  ASSERT_TRUE(x.s3_over_s2 && y.s3_over_s2);
  EXPECT_NEAR(*x.s3_over_s2, *y.s3_over_s2, 1e-9);
}

TEST(Ksg, GaussianPairMatchesClosedForm) {
  const Eigen::Index n = 10000;
  const Eigen::VectorXd x = gaussian_column(n, 11);
  const Eigen::VectorXd y = 0.9 * x + std::sqrt(1 - 0.81) * gaussian_column(n, 12);
  EXPECT_NEAR(ksg_mi(x, y), 0.8303, 0.05);
}

TEST(Ksg, IndependentSamplesNearZero) {
  const Eigen::Index n = 10000;
  EXPECT_LE(std::abs(ksg_mi(gaussian_column(n, 13), gaussian_column(n, 14))), 0.02);
}

TEST(Ksg, IdenticalSamplesGiveLargeValue) {
  const Eigen::VectorXd x = gaussian_column(2000, 15);
  EXPECT_GT(ksg_mi(x, x), 3.0);
}

TEST(Ksg, InvariantToMonotoneTransform) {
  const Eigen::Index n = 5000;
  const Eigen::VectorXd x = gaussian_column(n, 16);
  const Eigen::VectorXd y = 0.6 * x + 0.8 * gaussian_column(n, 17);
  const double base = ksg_mi(x, y);
  const double transformed = ksg_mi(x.array().exp().matrix(), y.array().cube().matrix());
  EXPECT_NEAR(base, transformed, 0.03);
}

TEST(Ksg, RejectsTooFewSamples) {
  EXPECT_THROW(ksg_mi(gaussian_column(8, 1), gaussian_column(8, 2), 4), ValidationError);
}
