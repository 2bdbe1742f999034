#include "channel_axes/gaussian_mi.hpp"

#include <algorithm>
#include <cmath>

#include "channel_axes/error.hpp"

namespace channel_axes {

namespace {

bool is_constant(const Eigen::VectorXd& centered, double scale) {
  const auto n = static_cast<double>(centered.size());
  return centered.squaredNorm() <= 1e-24 * n * std::max(1.0, scale * scale);
}

}  // namespace

double clip_correlation(double rho, double clip) {
  const double bound = 1.0 - clip;
  return std::clamp(rho, -bound, bound);
}

double gaussian_mi_from_corr(double rho, double clip) {
  const double r = clip_correlation(rho, clip);
  return -0.5 * std::log1p(-r * r);
}

double gaussian_mi_from_r2(double r2, double clip) {
  const double cap = (1.0 - clip) * (1.0 - clip);
  const double v = std::clamp(r2, 0.0, cap);
  return -0.5 * std::log1p(-v);
}

double joint_r2(const Eigen::MatrixXd& predictor_corr, const Eigen::VectorXd& target_corr,
                double ridge) {
  const auto k = predictor_corr.rows();
  if (k == 0) return 0.0;
  if (k == 1) {
    return target_corr[0] * target_corr[0] / (predictor_corr(0, 0) + ridge);
  }
  Eigen::MatrixXd a = predictor_corr;
  a.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  Eigen::VectorXd solved = ldlt.solve(target_corr);
  if (ldlt.info() != Eigen::Success || !solved.allFinite()) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    solved = cod.solve(target_corr);
  }
  return target_corr.dot(solved);
}

double joint_task_mi(const Eigen::MatrixXd& corr, const Eigen::VectorXd& rho_t,
                     const std::vector<int>& members, double clip, double ridge) {
  const auto k = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd sub(k, k);
  Eigen::VectorXd r(k);
  for (Eigen::Index a = 0; a < k; ++a) {
    r[a] = rho_t[members[a]];
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = corr(members[a], members[b]);
  }
  return gaussian_mi_from_r2(joint_r2(sub, r, ridge), clip);
}

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& x, std::vector<bool>* zero_variance) {
  const auto n = x.rows();
  if (n < 2) throw ValidationError("standardize_columns: need >= 2 rows");
  Eigen::MatrixXd out(n, x.cols());
  if (zero_variance) zero_variance->assign(static_cast<std::size_t>(x.cols()), false);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::VectorXd c = x.col(j).array() - x.col(j).mean();
    const double scale = x.col(j).cwiseAbs().maxCoeff();
    if (is_constant(c, scale)) {
      out.col(j).setZero();
      if (zero_variance) (*zero_variance)[j] = true;
      continue;
    }
    out.col(j) = c / std::sqrt(c.squaredNorm() / static_cast<double>(n - 1));
  }
  return out;
}

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& x, std::vector<bool>* zero_variance) {
  std::vector<bool> zv;
  const Eigen::MatrixXd z = standardize_columns(x, &zv);
  Eigen::MatrixXd corr = (z.transpose() * z) / static_cast<double>(x.rows() - 1);
  for (Eigen::Index i = 0; i < corr.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = std::clamp(0.5 * (corr(i, j) + corr(j, i)), -1.0, 1.0);
      corr(i, j) = corr(j, i) = v;
    }
    corr(i, i) = 1.0;
  }
  if (zero_variance) *zero_variance = zv;
  return corr;
}

Eigen::VectorXd column_target_correlation(const Eigen::MatrixXd& x, const Eigen::VectorXd& target) {
  if (x.rows() != target.size()) {
    throw ValidationError("target length " + std::to_string(target.size()) +
                          " does not match sample count " + std::to_string(x.rows()));
  }
  const Eigen::VectorXd tc = target.array() - target.mean();
  if (is_constant(tc, target.cwiseAbs().maxCoeff())) {
    throw DegenerateDataError("degenerate target: zero variance");
  }
  std::vector<bool> zv;
  const Eigen::MatrixXd z = standardize_columns(x, &zv);
  const Eigen::VectorXd tz = tc / std::sqrt(tc.squaredNorm() / static_cast<double>(x.rows() - 1));
  Eigen::VectorXd rho = (z.transpose() * tz) / static_cast<double>(x.rows() - 1);
  return rho.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace channel_axes
