#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace channel_axes {

// Linear-Gaussian channel layer:
//   X ~ N(0, sigma_x),  Y = weights * X + noise_mix * eps,  eps ~ N(0, sigma0_sq I)
// with a scalar task variable T jointly Gaussian with X through
// task_cov = cov(X, T) and target_var = Var(T).
//
// noise_mix is the identity for independent channels; a derived channel
// (exact duplicate or linear combination of other channels) carries the
// same combination of their noise terms, so it is an exact linear function
// of its sources.
struct LinearGaussianModel {
  Eigen::MatrixXd sigma_x;    // [F, F]
  Eigen::MatrixXd weights;    // [N, F]
  Eigen::MatrixXd noise_mix;  // [N, N]
  Eigen::VectorXd task_cov;   // [F]
  double sigma0_sq = 1.0;
  double target_var = 1.0;
  Eigen::VectorXd readout;    // [N] linear head predicting T from Y
  double target_noise = 0.0;  // Var(T | X)

  Eigen::Index num_channels() const { return weights.rows(); }
  Eigen::Index input_dim() const { return weights.cols(); }

  Eigen::MatrixXd output_cov() const;          // Cov(Y)
  Eigen::VectorXd output_target_cov() const;   // Cov(Y, T)
  Eigen::VectorXd signal_power() const;        // s_i = w_i^T Sigma_X w_i
  Eigen::VectorXd task_correlation() const;    // corr(Y_i, T)

  // Population least-squares readout of T from Y (pseudo-inverse).
  Eigen::VectorXd least_squares_readout() const;

  // Population mean-squared error of readout' Y against T.
  double readout_mse(const Eigen::VectorXd& readout_weights) const;

  void validate() const;  // throws ValidationError
};

// Joint samples (X, Y, T) drawn from one layer model.
struct LayerSample {
  Eigen::MatrixXd inputs;   // [n, F]
  Eigen::MatrixXd outputs;  // [n, N]
  Eigen::VectorXd target;   // [n]
};

LayerSample sample_layer(const LinearGaussianModel& model, std::int64_t n, std::uint64_t seed);

// A chain of layers, each expressed in its own input coordinates: layer l+1's
// input is layer l's output. The readout of the last layer is the network head.
struct SyntheticModel {
  std::vector<LinearGaussianModel> layers;
  Eigen::VectorXd input_task_weights;  // beta: T = beta' X0 + eta
};

}  // namespace channel_axes
