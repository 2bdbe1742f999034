#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace channel_axes {

// Population channel quantities for Y = w'X + eps, eps ~ N(0, sigma0_sq).
double channel_input_capture(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x, double sigma0_sq);
double channel_task_mi(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x, const Eigen::VectorXd& c,
                       double sigma0_sq, double sigma_t_sq);

// d I_X / d w = Sigma_X w / (sigma0^2 + s).
Eigen::VectorXd grad_ix(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x, double sigma0_sq);

struct TaskGradient {
  Eigen::VectorXd direction;  // c - (b/D) Sigma_X w
  double scalar = 0.0;        // b / ((1 - rho^2) D sigma_T^2)
  Eigen::VectorXd full_grad;  // scalar * direction
  double rho_sq = 0.0;
};

// Throws DegenerateDataError("degenerate task correlation") when rho^2 >= 1 - clip.
TaskGradient grad_it(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x, const Eigen::VectorXd& c,
                     double sigma0_sq, double sigma_t_sq, double clip = 1e-6);

// w' Sigma_X c - (b/D) w' Sigma_X^2 w; zero exactly when grad_ix is
// orthogonal to the task-gradient direction.
double gradient_inner_product(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x,
                              const Eigen::VectorXd& c, double sigma0_sq);

// Projects c0 so that gradient_inner_product(w, ., c, .) == 0.
Eigen::VectorXd cancelling_task_cov(const Eigen::VectorXd& w, const Eigen::MatrixXd& sigma_x,
                                    const Eigen::VectorXd& c0, double sigma0_sq);

// Cosine of two vectors; empty when either has zero norm.
std::optional<double> cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct CosineDiagnostics {
  std::vector<std::optional<double>> cos_ix_it, cos_update_ix, cos_update_it;  // per channel
  double mean_ix_it = 0.0, mean_update_ix = 0.0, mean_update_it = 0.0;
  int excluded = 0;  // channels with a zero-norm gradient
};

// loss_grad holds dL/dw_i as rows [N, F]; the update is its negative.
CosineDiagnostics cosine_diagnostics(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& sigma_x,
                                     const Eigen::VectorXd& c, double sigma0_sq, double sigma_t_sq,
                                     const Eigen::MatrixXd& loss_grad);

enum class InitAlignment { kAligned, kResidual };

struct TrajectoryConfig {
  int input_dim = 32;
  int channels = 64;
  int steps = 400;
  double lr = 0.05;
  std::uint64_t seed = 0;
  InitAlignment alignment = InitAlignment::kAligned;
  int record_every = 20;
  std::int64_t samples = 4000;
  double sigma0_sq = 0.1;
  double target_noise = 0.5;
  double spectrum_decay = 4.0;    // Sigma_X eigenvalues exp(-decay k / F)
  double target_alignment = 0.3;  // weight of the top eigendirections in beta
  int aligned_rank = 4;           // eigenvectors spanned by the aligned init
  double init_noise = 0.05;       // isotropic per-row spread around the aligned direction
  double readout_init = 1.0;      // readout entries ~ N(0, readout_init^2 / N)
  bool remedian_sigma0 = false;   // re-estimate sigma0^2 as median s each record
  bool permuted_target = false;   // also measure I(T;Y) against a shuffled T
};

struct TrajectoryPoint {
  int step = 0;
  double loss = 0.0;
  double coupling = 0.0;  // Spearman(I_X, I_TY) over channels
  double cos_ix_it = 0.0, cos_update_ix = 0.0, cos_update_it = 0.0;
  double mean_i_x = 0.0, mean_i_ty = 0.0;
  double rank_persistence_ix = 0.0, rank_persistence_ty = 0.0;  // vs final step
  double delta_coupling = 0.0;  // vs previous record
  double permuted_coupling = 0.0;
  double permuted_mean_i_ty = 0.0;
};

struct TrajectoryTrace {
  TrajectoryConfig config;
  std::vector<TrajectoryPoint> points;
  std::vector<Eigen::VectorXd> i_x, i_ty;  // per recorded step
};

// Gradient descent on L = E[(T - a' Y)^2] over the readout a and weights W,
// using the empirical moments of a fixed sampled dataset.
TrajectoryTrace simulate_training(const TrajectoryConfig& config);

}  // namespace channel_axes
