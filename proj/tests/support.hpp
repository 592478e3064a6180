#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mfeit/ad/ops.hpp"
#include "mfeit/data/dataset.hpp"
#include "mfeit/fem/pixel_grid.hpp"
#include "mfeit/net/train.hpp"

namespace testing {

using mfeit::ad::Tape;
using mfeit::ad::Tensor;
using mfeit::ad::Var;

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(shape), rng, lo, hi);
}

/// Scalar loss built from fresh leaves on a fresh tape.
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_loss(const LossFn& f, const std::vector<Tensor>& inputs, bool training = true) {
  Tape tape(training);
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.input(t, false));
  return f(tape, leaves).value()[0];
}

/// Largest normwise relative error ||g_ad - g_fd|| / ||g_fd|| over the inputs, central differences.
inline double gradient_error(const LossFn& f, std::vector<Tensor> inputs, double h = 1e-6, bool training = true) {
  std::vector<Tensor> analytic;
  {
    Tape tape(training);
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.input(t, true));
    Var loss = f(tape, leaves);
    tape.backward(loss);
    for (const auto& v : leaves) analytic.push_back(tape.grad(v.id));
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + h;
      const double up = eval_loss(f, inputs, training);
      inputs[k][i] = x0 - h;
      const double down = eval_loss(f, inputs, training);
      inputs[k][i] = x0;
      const double fd = (up - down) / (2.0 * h);
      diff += (analytic[k][i] - fd) * (analytic[k][i] - fd);
      ref += fd * fd;
    }
    if (ref == 0.0) {
      worst = std::max(worst, std::sqrt(diff));
    } else {
      worst = std::max(worst, std::sqrt(diff / ref));
    }
  }
  return worst;
}

/// Projects a tensor-valued op onto a fixed random direction so it can be gradient checked.
inline LossFn project(std::function<Var(Tape&, const std::vector<Var>&)> op, std::uint64_t seed = 99) {
  return [op, seed](Tape& t, const std::vector<Var>& in) {
    Var y = op(t, in);
    std::mt19937_64 rng(seed);
    Var w = t.constant(Tensor::uniform(y.value().shape(), rng, -1.0, 1.0));
    return mfeit::ad::sum(mfeit::ad::mul(y, w));
  };
}

/// Six-loop cross-correlation oracle.
inline Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* bias, int stride, int pad) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor y({n, o, oh, ow});
  for (int b = 0; b < n; ++b)
    for (int q = 0; q < o; ++q)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = bias ? (*bias)[q] : 0.0;
          for (int ci = 0; ci < c; ++ci)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int yy = i * stride - pad + u, xx = j * stride - pad + v;
                if (yy >= 0 && yy < h && xx >= 0 && xx < wd) s += w.at(q, ci, u, v) * x.at(b, ci, yy, xx);
              }
          y.at(b, q, i, j) = s;
        }
  return y;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Gaussian A scaled to unit spectral size, roughly.
inline Eigen::MatrixXd random_sensitivity(int m, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(m + n)));
  Eigen::MatrixXd A(m, n);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
  return A;
}

/// Non-positive blob images with B = A X.
inline std::vector<mfeit::data::MfSample> synthetic_samples(const Eigen::MatrixXd& A, const mfeit::fem::PixelGrid& grid,
                                                            int count, int l, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-0.6, 0.6), amp(0.2, 0.9), rad(0.2, 0.5);
  std::vector<mfeit::data::MfSample> out;
  for (int s = 0; s < count; ++s) {
    mfeit::data::MfSample smp;
    smp.X = Eigen::MatrixXd::Zero(grid.n(), l);
    const double cx = uni(rng), cy = uni(rng), r = rad(rng), a = amp(rng);
    for (int i = 0; i < grid.n(); ++i) {
      const auto p = grid.center(i);
      if (std::hypot(p.x - cx, p.y - cy) > r) continue;
      for (int f = 0; f < l; ++f) smp.X(i, f) = -a * (1.0 - 0.15 * f);
    }
    smp.B = A * smp.X;
    out.push_back(std::move(smp));
  }
  return out;
}

/// Largest per-parameter normwise relative error of the analytic stage loss gradient
/// against central differences over every parameter entry.
inline double net_gradient_error(mfeit::net::MmvNet& net, mfeit::net::Stage stage, int blocks,
                                 const std::vector<mfeit::data::MfSample>& samples, double h = 1e-6,
                                 std::string* worst_name = nullptr) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  auto loss = [&] {
    Tape tape(true);
    return mfeit::net::stage_loss(net, tape, stage, blocks, samples, idx).value()[0];
  };
  net.params().zero_grad();
  {
    Tape tape(true);
    tape.backward(mfeit::net::stage_loss(net, tape, stage, blocks, samples, idx));
  }
  double worst = 0.0;
  for (const auto& p : net.params().params()) {
    const Tensor analytic = p->grad;
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double x0 = p->value[i];
      p->value[i] = x0 + h;
      const double up = loss();
      p->value[i] = x0 - h;
      const double down = loss();
      p->value[i] = x0;
      const double fd = (up - down) / (2.0 * h);
      diff += (analytic[i] - fd) * (analytic[i] - fd);
      ref += fd * fd;
    }
    const double err = ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
    if (err > worst) {
      worst = err;
      if (worst_name) *worst_name = p->name;
    }
  }
  net.params().zero_grad();
  return worst;
}

}  // namespace testing
