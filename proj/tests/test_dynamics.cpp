#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "channel_axes/dynamics.hpp"
#include "channel_axes/error.hpp"
#include "test_util.hpp"

using namespace channel_axes;

namespace {

struct Draw {
  Eigen::MatrixXd sigma;
  Eigen::VectorXd w, c;
  double sigma0_sq = 0.0;
  double sigma_t_sq = 0.0;
};

Draw random_draw(std::uint64_t seed, int f = 6) {
  Draw d;
  const Eigen::MatrixXd a = test_util::gaussian_matrix(f, f, seed, 1);
  d.sigma = a * a.transpose() / f + 0.1 * Eigen::MatrixXd::Identity(f, f);
  d.w = test_util::gaussian_matrix(f, 1, seed, 2).col(0);
  d.c = 0.5 * test_util::gaussian_matrix(f, 1, seed, 3).col(0);
  d.sigma0_sq = 0.2 + 0.1 * static_cast<double>(seed % 5);
  d.sigma_t_sq = d.c.dot(d.sigma.ldlt().solve(d.c)) + 1.0;
  return d;
}

Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& fn,
                                   const Eigen::VectorXd& w, double h = 1e-5) {
  Eigen::VectorXd g(w.size());
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    Eigen::VectorXd up = w, down = w;
    up[k] += h;
    down[k] -= h;
    g[k] = (fn(up) - fn(down)) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(Gradients, InputCaptureClosedForm) {
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(4, 0);
  const auto g = grad_ix(e1, Eigen::MatrixXd::Identity(4, 4), 1.0);
  EXPECT_TRUE(g.isApprox(0.5 * e1, 1e-15));
  EXPECT_EQ(grad_ix(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Identity(4, 4), 1.0),
            Eigen::VectorXd::Zero(4));
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto d = random_draw(seed);
    const auto gx = grad_ix(d.w, d.sigma, d.sigma0_sq);
    const auto fx = central_difference(
        [&](const Eigen::VectorXd& v) { return channel_input_capture(v, d.sigma, d.sigma0_sq); }, d.w);
    EXPECT_LE((gx - fx).norm() / gx.norm(), 1e-5) << seed;
    const auto gt = grad_it(d.w, d.sigma, d.c, d.sigma0_sq, d.sigma_t_sq);
    const auto ft = central_difference(
        [&](const Eigen::VectorXd& v) { return channel_task_mi(v, d.sigma, d.c, d.sigma0_sq, d.sigma_t_sq); },
        d.w);
    EXPECT_LE((gt.full_grad - ft).norm() / gt.full_grad.norm(), 1e-5) << seed;
    EXPECT_TRUE(gt.full_grad.isApprox(gt.scalar * gt.direction));
  }
}

TEST(Gradients, ZeroTaskCovarianceAlongWeight) {
  const auto d = random_draw(3);
  Eigen::VectorXd c = d.c - (d.c.dot(d.w) / d.w.squaredNorm()) * d.w;
  const auto gt = grad_it(d.w, d.sigma, c, d.sigma0_sq, d.sigma_t_sq);
  EXPECT_NEAR(gt.full_grad.norm(), 0.0, 1e-15);
  EXPECT_TRUE(gt.direction.isApprox(c, 1e-12));
}

TEST(Gradients, DegenerateTaskCorrelation) {
  const Eigen::VectorXd w = Eigen::VectorXd::Unit(2, 0);
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2);
  // T = Y exactly: c = Sigma w, sigma_T^2 = s + sigma0^2.
  EXPECT_THROW(grad_it(w, sigma, w, 1e-9, 1.0 + 1e-9), DegenerateDataError);
}

TEST(Gradients, InnerProductIdentityAndCancellation) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto d = random_draw(seed);
    const auto gx = grad_ix(d.w, d.sigma, d.sigma0_sq);
    const auto gt = grad_it(d.w, d.sigma, d.c, d.sigma0_sq, d.sigma_t_sq);
    const double denom = d.w.dot(d.sigma * d.w) + d.sigma0_sq;
    EXPECT_NEAR(gx.dot(gt.direction) * denom, gradient_inner_product(d.w, d.sigma, d.c, d.sigma0_sq),
                1e-10 * (1 + std::abs(gradient_inner_product(d.w, d.sigma, d.c, d.sigma0_sq))));

    const Eigen::VectorXd c = cancelling_task_cov(d.w, d.sigma, d.c, d.sigma0_sq);
    EXPECT_NEAR(gradient_inner_product(d.w, d.sigma, c, d.sigma0_sq), 0.0, 1e-12);
    const double st = c.dot(d.sigma.ldlt().solve(c)) + 1.0;
    const auto gc = grad_it(d.w, d.sigma, c, d.sigma0_sq, st);
    const auto cs = cosine(gx, gc.full_grad);
    if (cs) EXPECT_LE(std::abs(*cs), 1e-9) << seed;
  }
}

TEST(Cosine, BasicCases) {
  Eigen::VectorXd a(3);
  a << 1, 2, 3;
  EXPECT_NEAR(*cosine(a, a), 1.0, 1e-15);
  EXPECT_NEAR(*cosine(a, -a), -1.0, 1e-15);
  EXPECT_FALSE(cosine(a, Eigen::VectorXd::Zero(3)).has_value());
}

TEST(Cosine, DiagnosticsCountZeroGradients) {
  const auto d = random_draw(5);
  Eigen::MatrixXd w(2, d.w.size());
  w.row(0) = d.w.transpose();
  w.row(1) = d.w.transpose();
  Eigen::MatrixXd loss_grad = Eigen::MatrixXd::Zero(2, d.w.size());
  loss_grad.row(0) = -grad_ix(d.w, d.sigma, d.sigma0_sq).transpose();
  const auto cd = cosine_diagnostics(w, d.sigma, d.c, d.sigma0_sq, d.sigma_t_sq, loss_grad);
  EXPECT_EQ(cd.excluded, 1);
  ASSERT_TRUE(cd.cos_update_ix[0].has_value());
  EXPECT_NEAR(*cd.cos_update_ix[0], 1.0, 1e-12);
  EXPECT_FALSE(cd.cos_update_ix[1].has_value());
}

namespace {

TrajectoryConfig small_config(std::uint64_t seed) {
  TrajectoryConfig c;
  c.input_dim = 12;
  c.channels = 20;
  c.steps = 60;
  c.record_every = 10;
  c.samples = 800;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Trajectory, ZeroLearningRateIsStationary) {
  auto c = small_config(1);
  c.lr = 0.0;
  const auto t = simulate_training(c);
  ASSERT_EQ(t.points.size(), 7u);
  for (const auto& p : t.points) {
    EXPECT_EQ(p.loss, t.points[0].loss);
    EXPECT_EQ(p.coupling, t.points[0].coupling);
    EXPECT_EQ(p.mean_i_x, t.points[0].mean_i_x);
    EXPECT_EQ(p.mean_i_ty, t.points[0].mean_i_ty);
    EXPECT_EQ(p.cos_update_it, t.points[0].cos_update_it);
  }
}

TEST(Trajectory, BitReproducible) {
  const auto a = simulate_training(small_config(2));
  const auto b = simulate_training(small_config(2));
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    EXPECT_EQ(a.points[k].loss, b.points[k].loss);
    EXPECT_EQ(a.points[k].coupling, b.points[k].coupling);
    EXPECT_EQ(a.i_x[k], b.i_x[k]);
  }
}

TEST(Trajectory, LossDecreasesAndFinalRankPersistenceIsOne) {
  const auto t = simulate_training(small_config(3));
  EXPECT_LT(t.points.back().loss, t.points.front().loss);
  EXPECT_NEAR(t.points.back().rank_persistence_ix, 1.0, 1e-12);
  EXPECT_NEAR(t.points.back().rank_persistence_ty, 1.0, 1e-12);
}

TEST(Trajectory, PermutedTargetLeavesInputCaptureAndDropsCoupling) {
  auto c = small_config(4);
  const auto plain = simulate_training(c);
  c.permuted_target = true;
  const auto perm = simulate_training(c);
  double coupling = 0.0, permuted = 0.0;
  for (std::size_t k = 0; k < plain.points.size(); ++k) {
    EXPECT_EQ(plain.i_x[k], perm.i_x[k]);
    EXPECT_LT(perm.points[k].permuted_mean_i_ty, plain.points[k].mean_i_ty);
    coupling += plain.points[k].coupling;
    permuted += perm.points[k].permuted_coupling;
  }
  EXPECT_LT(permuted, coupling);
}

TEST(Trajectory, PermutedCouplingDropsWithSpreadRows) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto c = small_config(seed);
    c.init_noise = 0.5;
    c.permuted_target = true;
    const auto t = simulate_training(c);
    for (const auto& p : t.points) EXPECT_LT(p.permuted_coupling, p.coupling) << seed;
  }
}

TEST(Trajectory, AlignedInitStartsCoupledThenDecouples) {
  const auto t = simulate_training(TrajectoryConfig{});
  EXPECT_GE(t.points.front().coupling, 0.6);
  EXPECT_LT(t.points.back().coupling, t.points.front().coupling);
}

TEST(Trajectory, RejectsInvalidConfig) {
  auto c = small_config(0);
  c.channels = 2;
  EXPECT_THROW(simulate_training(c), ValidationError);
  c = small_config(0);
  c.lr = 50.0;
  EXPECT_THROW(simulate_training(c), DegenerateDataError);
}
