#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "channel_axes/rng.hpp"

namespace test_util {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("channel_axes_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                       std::uint64_t stream = 0) {
  channel_axes::Rng rng(seed, stream);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Plain two-pass sample Pearson correlation.
inline double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double mx = x.mean(), my = y.mean();
  double sxy = 0, sxx = 0, syy = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double g_of_rho(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

// Random SPD correlation matrix from a factor model.
inline Eigen::MatrixXd random_correlation(int n, int factors, std::uint64_t seed) {
  const Eigen::MatrixXd f = gaussian_matrix(n, factors, seed, 11);
  Eigen::MatrixXd cov = f * f.transpose();
  channel_axes::Rng rng(seed, 12);
  for (int i = 0; i < n; ++i) cov(i, i) += 0.05 + rng.uniform();
  const Eigen::VectorXd d = cov.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * cov * d.asDiagonal();
}

}  // namespace test_util
