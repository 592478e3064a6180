#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/StdVector>

namespace mfeit::ad {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
/// Storage aligned like Eigen's own allocations, so vectorised reductions see the same
/// peeling on every buffer and results are reproducible run to run.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, const std::vector<double>& data);
  Tensor(std::vector<int> shape, Storage data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor ones(std::vector<int> shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor({1}, v); }
  static Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double stddev = 1.0);
  static Tensor uniform(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi);
  static Tensor like(const Tensor& other, double fill = 0.0) { return Tensor(other.shape_, fill); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i < 0 ? i + rank() : i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Storage& values() { return data_; }
  const Storage& values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  /// 4-D accessor (n, c, h, w).
  double& at(int n, int c, int h, int w);
  double at(int n, int c, int h, int w) const;

  /// Views of the flat data as a rows x cols row-major matrix.
  MatrixMap matrix(int rows, int cols);
  ConstMatrixMap matrix(int rows, int cols) const;
  Eigen::Map<Eigen::ArrayXd> array() { return {data_.data(), static_cast<Eigen::Index>(data_.size())}; }
  Eigen::Map<const Eigen::ArrayXd> array() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

  Tensor reshaped(std::vector<int> shape) const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_string() const;

 private:
  std::vector<int> shape_;
  Storage data_;
};

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

}  // namespace mfeit::ad
