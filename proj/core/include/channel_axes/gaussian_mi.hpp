#pragma once

#include <vector>

#include <Eigen/Dense>

namespace channel_axes {

inline constexpr double kDefaultCorrClip = 1e-6;
inline constexpr double kDefaultRidge = 1e-12;

double clip_correlation(double rho, double clip = kDefaultCorrClip);

// Gaussian MI of a correlated pair: -1/2 ln(1 - rho^2), rho clipped to 1 - clip.
double gaussian_mi_from_corr(double rho, double clip = kDefaultCorrClip);

// Gaussian MI from a coefficient of determination, R^2 capped at (1 - clip)^2.
double gaussian_mi_from_r2(double r2, double clip = kDefaultCorrClip);

// R^2 of regressing a standardized target on standardized predictors given
// their correlation matrix and target correlations:
//   r' (R + ridge I)^{-1} r.
double joint_r2(const Eigen::MatrixXd& predictor_corr, const Eigen::VectorXd& target_corr,
                double ridge = kDefaultRidge);

// I(T; [Y_S]) for the subset `members` of a layer.
double joint_task_mi(const Eigen::MatrixXd& corr, const Eigen::VectorXd& rho_t,
                     const std::vector<int>& members, double clip = kDefaultCorrClip,
                     double ridge = kDefaultRidge);

// Column standardization (sample sd). Zero-variance columns become zero and
// are reported through `zero_variance`.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x, std::vector<bool>* zero_variance);

// Pearson correlation matrix of the columns; zero-variance columns get a
// zero row/column with a unit diagonal.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& x, std::vector<bool>* zero_variance);

// Pearson correlation of every column with `target`.
Eigen::VectorXd column_target_correlation(const Eigen::MatrixXd& x, const Eigen::VectorXd& target);

}  // namespace channel_axes
