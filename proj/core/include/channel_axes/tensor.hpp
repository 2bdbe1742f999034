#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace channel_axes {

// Dense float32 tensor, row-major. Matches the on-disk .f32 layout exactly.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<std::int64_t> shape_in, std::vector<float> data_in);

  static std::int64_t element_count(const std::vector<std::int64_t>& shape);
  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::size_t rank() const { return shape.size(); }
  std::int64_t dim(std::size_t axis) const { return shape.at(axis); }

  bool operator==(const Tensor&) const = default;
};

std::string shape_string(const std::vector<std::int64_t>& shape);

// 2-D tensor -> double matrix (and back). Vectors are treated as [n] -> n x 1.
Eigen::MatrixXd to_matrix(const Tensor& t);
Eigen::VectorXd to_vector(const Tensor& t);
Tensor from_matrix(const Eigen::MatrixXd& m);
Tensor from_vector(const Eigen::VectorXd& v);

}  // namespace channel_axes
