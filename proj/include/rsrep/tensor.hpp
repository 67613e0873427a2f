#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rsrep {

/// Dense row-major array of doubles. Image batches use NCHW layout and
/// embedding batches use N x D.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Element (row, col) of a rank-2 tensor.
  double& at(int row, int col) { return data_[static_cast<std::size_t>(row) * shape_[1] + col]; }
  double at(int row, int col) const { return data_[static_cast<std::size_t>(row) * shape_[1] + col]; }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);

  /// Rows [begin, end) along the leading axis.
  Tensor slice_rows(int begin, int end) const;
  Tensor reshaped(std::vector<int> shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<int>& shape);

/// Throws DimensionError unless `t` has exactly `expected` shape.
void expect_shape(const Tensor& t, const std::vector<int>& expected, const char* what);

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

}  // namespace rsrep
