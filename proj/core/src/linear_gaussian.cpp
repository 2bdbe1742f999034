#include "channel_axes/linear_gaussian.hpp"

#include <cmath>

#include "channel_axes/error.hpp"
#include "channel_axes/rng.hpp"

namespace channel_axes {

Eigen::MatrixXd LinearGaussianModel::output_cov() const {
  return weights * sigma_x * weights.transpose() +
         sigma0_sq * noise_mix * noise_mix.transpose();
}

Eigen::VectorXd LinearGaussianModel::output_target_cov() const { return weights * task_cov; }

Eigen::VectorXd LinearGaussianModel::signal_power() const {
  return ((weights * sigma_x).array() * weights.array()).rowwise().sum();
}

Eigen::VectorXd LinearGaussianModel::task_correlation() const {
  const Eigen::VectorXd var = output_cov().diagonal();
  const Eigen::VectorXd cov = output_target_cov();
  Eigen::VectorXd rho(cov.size());
  for (Eigen::Index i = 0; i < cov.size(); ++i) {
    rho[i] = var[i] > 0 ? cov[i] / std::sqrt(var[i] * target_var) : 0.0;
  }
  return rho;
}

Eigen::VectorXd LinearGaussianModel::least_squares_readout() const {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(output_cov());
  cod.setThreshold(1e-10);
  return cod.solve(output_target_cov());
}

double LinearGaussianModel::readout_mse(const Eigen::VectorXd& r) const {
  return target_var - 2.0 * r.dot(output_target_cov()) + r.dot(output_cov() * r);
}

void LinearGaussianModel::validate() const {
  const auto f = input_dim();
  const auto n = num_channels();
  if (sigma_x.rows() != f || sigma_x.cols() != f) {
    throw ValidationError("LinearGaussianModel: sigma_x must be F x F");
  }
  if (noise_mix.rows() != n || noise_mix.cols() != n) {
    throw ValidationError("LinearGaussianModel: noise_mix must be N x N");
  }
  if (task_cov.size() != f) throw ValidationError("LinearGaussianModel: task_cov must have F entries");
  if (readout.size() != n) throw ValidationError("LinearGaussianModel: readout must have N entries");
  if ((sigma_x - sigma_x.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1 + sigma_x.cwiseAbs().maxCoeff())) {
    throw ValidationError("LinearGaussianModel: sigma_x not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_x);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-9 * scale) {
    throw ValidationError("LinearGaussianModel: sigma_x not positive semidefinite");
  }
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(sigma_x);
  cod.setThreshold(1e-10);
  const double explained = task_cov.dot(cod.solve(task_cov));
  if (target_var + 1e-9 * (1 + target_var) < explained) {
    throw ValidationError("LinearGaussianModel: target_var < c' Sigma_X^-1 c (invalid joint covariance)");
  }
}

LayerSample sample_layer(const LinearGaussianModel& model, std::int64_t n, std::uint64_t seed) {
  const auto f = model.input_dim();
  const auto channels = model.num_channels();
  Rng rng(seed, 0x5a3e);

  // Symmetric square root handles semidefinite covariances.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.sigma_x);
  const Eigen::VectorXd root_vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd root = eig.eigenvectors() * root_vals.asDiagonal();

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(model.sigma_x);
  cod.setThreshold(1e-10);
  const Eigen::VectorXd beta = cod.solve(model.task_cov);
  const double residual_var = std::max(0.0, model.target_var - model.task_cov.dot(beta));

  LayerSample out;
  out.inputs.resize(n, f);
  out.outputs.resize(n, channels);
  out.target.resize(n);
  Eigen::VectorXd z(f);
  Eigen::VectorXd eps(channels);
  const double noise_sd = std::sqrt(model.sigma0_sq);
  for (std::int64_t r = 0; r < n; ++r) {
    for (Eigen::Index k = 0; k < f; ++k) z[k] = rng.normal();
    const Eigen::VectorXd x = root * z;
    for (Eigen::Index k = 0; k < channels; ++k) eps[k] = noise_sd * rng.normal();
    out.inputs.row(r) = x.transpose();
    out.outputs.row(r) = (model.weights * x + model.noise_mix * eps).transpose();
    out.target[r] = beta.dot(x) + std::sqrt(residual_var) * rng.normal();
  }
  return out;
}

}  // namespace channel_axes
