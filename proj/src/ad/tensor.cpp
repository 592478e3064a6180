#include "mfeit/ad/tensor.hpp"

#include <cmath>
#include <sstream>

#include "mfeit/error.hpp"

namespace mfeit::ad {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("negative tensor dimension in " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? "x" : "") << shape[i];
  s << ']';
  return s.str();
}

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<int> shape, const std::vector<double>& data)
    : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}

Tensor::Tensor(std::vector<int> shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                      ad::shape_string(shape_));
  }
}

Tensor Tensor::randn(std::vector<int> shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, stddev);
  for (auto& v : t.data_) v = d(rng);
  return t;
}

Tensor Tensor::uniform(std::vector<int> shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data_) v = d(rng);
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ConfigError("item() on a tensor of shape " + shape_string());
  return data_[0];
}

double& Tensor::at(int n, int c, int h, int w) {
  return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

double Tensor::at(int n, int c, int h, int w) const {
  return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

MatrixMap Tensor::matrix(int rows, int cols) {
  if (static_cast<std::size_t>(rows) * cols != data_.size()) throw ConfigError("matrix view does not cover tensor");
  return {data_.data(), rows, cols};
}

ConstMatrixMap Tensor::matrix(int rows, int cols) const {
  if (static_cast<std::size_t>(rows) * cols != data_.size()) throw ConfigError("matrix view does not cover tensor");
  return {data_.data(), rows, cols};
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string() + " to " + ad::shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const { return ad::shape_string(shape_); }

}  // namespace mfeit::ad
