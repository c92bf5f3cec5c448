#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace pointcat {

using Index = Eigen::Index;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;

/// Error type thrown by every rejected operation in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(const std::vector<Index>& shape);

/// Dense row-major double-precision tensor with dynamic rank.
///
/// Rank 0 is a scalar (size 1). The flat buffer can be viewed as an Eigen
/// matrix with any factorization of its size; matrix() folds all leading
/// dimensions against the last one, which is the layout every per-row
/// operation in the library works on.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<Index> shape);
  static Tensor full(std::vector<Index> shape, double value);
  static Tensor from_values(std::vector<Index> shape, std::vector<double> values);
  static Tensor scalar(double value);

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index i) const { return shape_.at(static_cast<std::size_t>(i)); }
  Index size() const { return data_.size(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  ArrayMap array() { return {data_.data(), data_.size()}; }
  ConstArrayMap array() const { return {data_.data(), data_.size()}; }

  /// Last dimension (1 for scalars); folded_rows() * last_dim() == size().
  Index last_dim() const;
  Index folded_rows() const;

  MatrixMap matrix() { return {data_.data(), folded_rows(), last_dim()}; }
  ConstMatrixMap matrix() const { return {data_.data(), folded_rows(), last_dim()}; }
  MatrixMap matrix(Index rows, Index cols);
  ConstMatrixMap matrix(Index rows, Index cols) const;

  /// Value of a single-element tensor.
  double value() const;

  double operator[](Index i) const { return data_[i]; }
  double& operator[](Index i) { return data_[i]; }

  bool all_finite() const { return data_.allFinite(); }
  std::string shape_str() const { return shape_string(shape_); }

  Tensor reshaped(std::vector<Index> new_shape) const;

 private:
  std::vector<Index> shape_;
  Eigen::ArrayXd data_;
};

}  // namespace pointcat
