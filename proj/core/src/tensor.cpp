#include "channel_axes/tensor.hpp"

#include <sstream>

#include "channel_axes/error.hpp"

namespace channel_axes {

Tensor::Tensor(std::vector<std::int64_t> shape_in, std::vector<float> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (element_count(shape) != static_cast<std::int64_t>(data.size())) {
    throw ValidationError("tensor data size " + std::to_string(data.size()) +
                          " does not match shape " + shape_string(shape));
  }
}

std::int64_t Tensor::element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
  if (t.rank() == 1) return to_vector(t);
  if (t.rank() != 2) {
    throw ValidationError("expected a 2-D tensor, got shape " + shape_string(t.shape));
  }
  const auto rows = t.shape[0];
  const auto cols = t.shape[1];
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      view(t.data.data(), rows, cols);
  return view.cast<double>();
}

Eigen::VectorXd to_vector(const Tensor& t) {
  if (t.rank() != 1) {
    throw ValidationError("expected a 1-D tensor, got shape " + shape_string(t.shape));
  }
  Eigen::Map<const Eigen::VectorXf> view(t.data.data(), t.shape[0]);
  return view.cast<double>();
}

Tensor from_matrix(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  t.data.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      view(t.data.data(), m.rows(), m.cols());
  view = m.cast<float>();
  return t;
}

Tensor from_vector(const Eigen::VectorXd& v) {
  Tensor t;
  t.shape = {v.size()};
  t.data.resize(static_cast<std::size_t>(v.size()));
  Eigen::Map<Eigen::VectorXf>(t.data.data(), v.size()) = v.cast<float>();
  return t;
}

}  // namespace channel_axes
