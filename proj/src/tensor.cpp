#include "pointcat/tensor.hpp"

#include <sstream>
#include <utility>

namespace pointcat {

std::string shape_string(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

Index shape_size(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw Error("tensor: negative dimension in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<Index> shape) {
  return full(std::move(shape), 0.0);
}

Tensor Tensor::full(std::vector<Index> shape, double value) {
  Tensor t;
  const Index n = shape_size(shape);
  t.shape_ = std::move(shape);
  t.data_ = Eigen::ArrayXd::Constant(n, value);
  return t;
}

Tensor Tensor::from_values(std::vector<Index> shape, std::vector<double> values) {
  const Index n = shape_size(shape);
  if (n != static_cast<Index>(values.size())) {
    throw Error("tensor: shape " + shape_string(shape) + " holds " + std::to_string(n) +
                " values, got " + std::to_string(values.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = Eigen::Map<const Eigen::ArrayXd>(values.data(), n);
  return t;
}

Tensor Tensor::scalar(double value) {
  return full({}, value);
}

Index Tensor::last_dim() const {
  return shape_.empty() ? 1 : shape_.back();
}

Index Tensor::folded_rows() const {
  const Index last = last_dim();
  return last == 0 ? 0 : size() / last;
}

MatrixMap Tensor::matrix(Index rows, Index cols) {
  if (rows * cols != size()) {
    throw Error("tensor: cannot view " + shape_str() + " as " + std::to_string(rows) + "x" +
                std::to_string(cols));
  }
  return {data_.data(), rows, cols};
}

ConstMatrixMap Tensor::matrix(Index rows, Index cols) const {
  if (rows * cols != size()) {
    throw Error("tensor: cannot view " + shape_str() + " as " + std::to_string(rows) + "x" +
                std::to_string(cols));
  }
  return {data_.data(), rows, cols};
}

double Tensor::value() const {
  if (size() != 1) throw Error("tensor: value() on non-scalar shape " + shape_str());
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<Index> new_shape) const {
  if (shape_size(new_shape) != size()) {
    throw Error("tensor: reshape from " + shape_str() + " to " + shape_string(new_shape) +
                " changes element count");
  }
  Tensor t = *this;
  t.shape_ = std::move(new_shape);
  return t;
}

}  // namespace pointcat
