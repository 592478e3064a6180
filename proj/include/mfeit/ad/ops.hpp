#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mfeit/ad/tape.hpp"

namespace mfeit::ad {

// Elementwise, same shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// s is a one-element tensor broadcast over x.
Var scale(Var s, Var x);
Var scale(Var x, double s);
Var add_scalar(Var x, double c);

/// log(1 + e^x) without overflow; the value used by the softplus op.
inline double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Var relu(Var x);
Var elu(Var x, double alpha = 1.0);
Var sigmoid(Var x);
Var tanh(Var x);
Var softplus(Var x);

/// Sum of all elements, shape [1].
Var sum(Var x);
/// sum((pred - target)^2) / n_samples.
Var mse_loss(Var pred, Var target, int n_samples);

/// Layout-preserving reshape.
Var reshape(Var x, std::vector<int> shape);

/// 2-D matrix product with optional transposes.
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
/// Batched product over the leading dimension of two 3-D tensors.
Var bmm(Var a, Var b, bool trans_a = false, bool trans_b = false);

/// Softmax over the last dimension (row-max subtracted).
Var softmax(Var x);

/// Concatenate / slice along dimension 1 of N x C x H x W tensors.
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(Var x, int begin, int count);

/// Cross-correlation. x: N x C x H x W, w: O x C x kh x kw, bias (optional): O.
Var conv2d(Var x, Var w, Var bias, int stride = 1, int padding = 0);
/// Adjoint of conv2d (no padding). x: N x Cin x H x W, w: Cin x Cout x kh x kw, bias (optional): Cout.
Var conv_transpose2d(Var x, Var w, Var bias, int stride = 2);

struct BatchNormStats {
  Tensor* running_mean = nullptr;  // C
  Tensor* running_var = nullptr;   // C
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalisation over (N, H, W). Training tapes use batch statistics
/// (biased variance) and update the running estimates; other tapes use the running estimates.
Var batchnorm2d(Var x, Var gamma, Var beta, const BatchNormStats& stats);

}  // namespace mfeit::ad
