#include "mfeit/ad/ops.hpp"

#include <cmath>
#include <string>

#include "mfeit/error.hpp"

namespace mfeit::ad {

namespace {

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.tape != b.tape) throw ConfigError(std::string(op) + ": operands on different tapes");
  if (!a.value().same_shape(b.value())) {
    throw ConfigError(std::string(op) + ": shape mismatch " + a.value().shape_string() + " vs " +
                      b.value().shape_string());
  }
}

void accumulate(Tape& t, int id, const Eigen::ArrayXd& g) {
  if (t.requires_grad(id)) t.grad(id).array() += g;
}

// Elementwise unary op given f(x) and f'(x, y) with y = f(x).
template <typename F, typename D>
Var unary(Var x, F f, D df) {
  const Tensor& xv = x.value();
  Tensor y = Tensor::like(xv);
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  const int xi = x.id;
  return x.tape->push(std::move(y), {x}, [xi, df](Tape& t, int self) {
    const Tensor& xv = t.value(xi);
    const Tensor& yv = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor y = a.value();
  y.array() += b.value().array();
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {a, b}, [ai, bi](Tape& t, int self) {
    accumulate(t, ai, t.grad(self).array());
    accumulate(t, bi, t.grad(self).array());
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor y = a.value();
  y.array() -= b.value().array();
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {a, b}, [ai, bi](Tape& t, int self) {
    accumulate(t, ai, t.grad(self).array());
    accumulate(t, bi, -t.grad(self).array());
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor y = a.value();
  y.array() *= b.value().array();
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {a, b}, [ai, bi](Tape& t, int self) {
    const auto g = t.grad(self).array();
    if (t.requires_grad(ai)) t.grad(ai).array() += g * t.value(bi).array();
    if (t.requires_grad(bi)) t.grad(bi).array() += g * t.value(ai).array();
  });
}

Var scale(Var s, Var x) {
  if (s.value().size() != 1) throw ConfigError("scale: factor must have one element, got " + s.value().shape_string());
  Tensor y = x.value();
  const double sv = s.value()[0];
  y.array() *= sv;
  const int si = s.id, xi = x.id;
  return x.tape->push(std::move(y), {s, x}, [si, xi](Tape& t, int self) {
    const auto g = t.grad(self).array();
    if (t.requires_grad(si)) t.grad(si)[0] += (g * t.value(xi).array()).sum();
    if (t.requires_grad(xi)) t.grad(xi).array() += t.value(si)[0] * g;
  });
}

Var scale(Var x, double s) {
  Tensor y = x.value();
  y.array() *= s;
  const int xi = x.id;
  return x.tape->push(std::move(y), {x}, [xi, s](Tape& t, int self) { t.grad(xi).array() += s * t.grad(self).array(); });
}

Var add_scalar(Var x, double c) {
  Tensor y = x.value();
  y.array() += c;
  const int xi = x.id;
  return x.tape->push(std::move(y), {x}, [xi](Tape& t, int self) { t.grad(xi).array() += t.grad(self).array(); });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var elu(Var x, double alpha) {
  return unary(
      x, [alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); },
      [alpha](double v, double y) { return v > 0.0 ? 1.0 : y + alpha; });
}

Var sigmoid(Var x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var softplus(Var x) {
  return unary(
      x, [](double v) { return softplus_value(v); },
      [](double v, double) { return stable_sigmoid(v); });
}

Var sum(Var x) {
  const int xi = x.id;
  return x.tape->push(Tensor::scalar(x.value().array().sum()), {x},
                      [xi](Tape& t, int self) { t.grad(xi).array() += t.grad(self)[0]; });
}

Var mse_loss(Var pred, Var target, int n_samples) {
  require_same(pred, target, "mse_loss");
  if (n_samples < 1) throw ConfigError("mse_loss: sample count must be positive");
  const double inv = 1.0 / n_samples;
  const double loss = (pred.value().array() - target.value().array()).square().sum() * inv;
  const int pi = pred.id, ti = target.id;
  return pred.tape->push(Tensor::scalar(loss), {pred, target}, [pi, ti, inv](Tape& t, int self) {
    const double g = t.grad(self)[0];
    const Eigen::ArrayXd d = (t.value(pi).array() - t.value(ti).array()) * (2.0 * inv * g);
    accumulate(t, pi, d);
    accumulate(t, ti, -d);
  });
}

Var reshape(Var x, std::vector<int> shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  const int xi = x.id;
  return x.tape->push(std::move(y), {x}, [xi](Tape& t, int self) { t.grad(xi).array() += t.grad(self).array(); });
}

namespace {

struct GemmDims {
  int rows, inner, cols;
};

GemmDims gemm_dims(const std::vector<int>& sa, const std::vector<int>& sb, bool ta, bool tb, const char* op) {
  const int ar = sa[sa.size() - 2], ac = sa.back();
  const int br = sb[sb.size() - 2], bc = sb.back();
  const int rows = ta ? ac : ar, inner_a = ta ? ar : ac;
  const int inner_b = tb ? bc : br, cols = tb ? br : bc;
  if (inner_a != inner_b) {
    throw ConfigError(std::string(op) + ": inner dimensions differ (" + shape_string(sa) + (ta ? "^T" : "") + " x " +
                      shape_string(sb) + (tb ? "^T" : "") + ")");
  }
  return {rows, inner_a, cols};
}

// c (+)= op(a) * op(b) on one batch slice.
void gemm(const double* a, int ar, int ac, bool ta, const double* b, int br, int bc, bool tb, double* c, int cr, int cc,
          bool accumulate_into) {
  ConstMatrixMap A(a, ar, ac), B(b, br, bc);
  MatrixMap C(c, cr, cc);
  if (!accumulate_into) C.setZero();
  if (!ta && !tb) C.noalias() += A * B;
  else if (ta && !tb) C.noalias() += A.transpose() * B;
  else if (!ta && tb) C.noalias() += A * B.transpose();
  else C.noalias() += A.transpose() * B.transpose();
}

Var batched_product(Var a, Var b, bool ta, bool tb, bool batched) {
  const auto& sa = a.value().shape();
  const auto& sb = b.value().shape();
  const int rank = batched ? 3 : 2;
  const char* op = batched ? "bmm" : "matmul";
  if (a.value().rank() != rank || b.value().rank() != rank) {
    throw ConfigError(std::string(op) + ": expected rank-" + std::to_string(rank) + " operands, got " +
                      shape_string(sa) + " and " + shape_string(sb));
  }
  const int batch = batched ? sa[0] : 1;
  if (batched && sb[0] != batch) throw ConfigError("bmm: batch sizes differ " + shape_string(sa) + " vs " + shape_string(sb));
  const auto d = gemm_dims(sa, sb, ta, tb, op);
  const int ar = sa[rank - 2], ac = sa[rank - 1], br = sb[rank - 2], bc = sb[rank - 1];
  std::vector<int> out_shape = batched ? std::vector<int>{batch, d.rows, d.cols} : std::vector<int>{d.rows, d.cols};
  Tensor y(out_shape);
  const std::size_t sa_n = static_cast<std::size_t>(ar) * ac, sb_n = static_cast<std::size_t>(br) * bc,
                    sy_n = static_cast<std::size_t>(d.rows) * d.cols;
  for (int i = 0; i < batch; ++i) {
    gemm(a.value().data() + i * sa_n, ar, ac, ta, b.value().data() + i * sb_n, br, bc, tb, y.data() + i * sy_n, d.rows,
         d.cols, false);
  }
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), {a, b}, [=](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    for (int i = 0; i < batch; ++i) {
      const double* gi = g.data() + i * sy_n;
      if (t.requires_grad(ai)) {
        double* ga = t.grad(ai).data() + i * sa_n;
        // C = op(A) op(B): dA = dC op(B)^T, or op(B) dC^T when A is transposed.
        if (!ta) gemm(gi, d.rows, d.cols, false, bv.data() + i * sb_n, br, bc, !tb, ga, ar, ac, true);
        else gemm(bv.data() + i * sb_n, br, bc, tb, gi, d.rows, d.cols, true, ga, ar, ac, true);
      }
      if (t.requires_grad(bi)) {
        double* gb = t.grad(bi).data() + i * sb_n;
        if (!tb) gemm(av.data() + i * sa_n, ar, ac, !ta, gi, d.rows, d.cols, false, gb, br, bc, true);
        else gemm(gi, d.rows, d.cols, true, av.data() + i * sa_n, ar, ac, ta, gb, br, bc, true);
      }
    }
  });
}

}  // namespace

Var matmul(Var a, Var b, bool trans_a, bool trans_b) { return batched_product(a, b, trans_a, trans_b, false); }

Var bmm(Var a, Var b, bool trans_a, bool trans_b) { return batched_product(a, b, trans_a, trans_b, true); }

Var softmax(Var x) {
  const Tensor& xv = x.value();
  const int cols = xv.dim(-1);
  const int rows = static_cast<int>(xv.size() / cols);
  Tensor y = Tensor::like(xv);
  auto X = xv.matrix(rows, cols);
  auto Y = y.matrix(rows, cols);
  for (int r = 0; r < rows; ++r) {
    Y.row(r) = (X.row(r).array() - X.row(r).maxCoeff()).exp();
    Y.row(r) /= Y.row(r).sum();
  }
  const int xi = x.id;
  return x.tape->push(std::move(y), {x}, [xi, rows, cols](Tape& t, int self) {
    auto Y = t.value(self).matrix(rows, cols);
    auto G = t.grad(self).matrix(rows, cols);
    auto GX = t.grad(xi).matrix(rows, cols);
    for (int r = 0; r < rows; ++r) {
      const double dot = Y.row(r).dot(G.row(r));
      GX.row(r).array() += Y.row(r).array() * (G.row(r).array() - dot);
    }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw ConfigError("concat_channels: no operands");
  const auto& s0 = xs[0].value().shape();
  if (s0.size() != 4) throw ConfigError("concat_channels: expected N x C x H x W, got " + shape_string(s0));
  const int n = s0[0], h = s0[2], w = s0[3];
  std::vector<int> channels;
  int total = 0;
  for (const auto& x : xs) {
    const auto& s = x.value().shape();
    if (s.size() != 4 || s[0] != n || s[2] != h || s[3] != w) {
      throw ConfigError("concat_channels: " + shape_string(s) + " incompatible with " + shape_string(s0));
    }
    channels.push_back(s[1]);
    total += s[1];
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y({n, total, h, w});
  for (int b = 0; b < n; ++b) {
    int offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double* src = xs[k].value().data() + static_cast<std::size_t>(b) * channels[k] * plane;
      std::copy(src, src + channels[k] * plane, y.data() + (static_cast<std::size_t>(b) * total + offset) * plane);
      offset += channels[k];
    }
  }
  std::vector<int> ids;
  for (const auto& x : xs) ids.push_back(x.id);
  return xs[0].tape->push(std::move(y), xs, [ids, channels, n, total, plane](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (int b = 0; b < n; ++b) {
      int offset = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (t.requires_grad(ids[k])) {
          const double* src = g.data() + (static_cast<std::size_t>(b) * total + offset) * plane;
          double* dst = t.grad(ids[k]).data() + static_cast<std::size_t>(b) * channels[k] * plane;
          for (std::size_t i = 0; i < channels[k] * plane; ++i) dst[i] += src[i];
        }
        offset += channels[k];
      }
    }
  });
}

Var slice_channels(Var x, int begin, int count) {
  const auto& s = x.value().shape();
  if (s.size() != 4) throw ConfigError("slice_channels: expected N x C x H x W, got " + shape_string(s));
  if (begin < 0 || count < 1 || begin + count > s[1]) {
    throw ConfigError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                      ") outside " + std::to_string(s[1]) + " channels");
  }
  const int n = s[0], c = s[1];
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  Tensor y({n, count, s[2], s[3]});
  for (int b = 0; b < n; ++b) {
    const double* src = x.value().data() + (static_cast<std::size_t>(b) * c + begin) * plane;
    std::copy(src, src + count * plane, y.data() + static_cast<std::size_t>(b) * count * plane);
  }
  const int xi = x.id;
  return x.tape->push(std::move(y), {x}, [xi, n, c, begin, count, plane](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (int b = 0; b < n; ++b) {
      const double* src = g.data() + static_cast<std::size_t>(b) * count * plane;
      double* dst = gx.data() + (static_cast<std::size_t>(b) * c + begin) * plane;
      for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
    }
  });
}

Var batchnorm2d(Var x, Var gamma, Var beta, const BatchNormStats& stats) {
  const auto& s = x.value().shape();
  if (s.size() != 4) throw ConfigError("batchnorm2d: expected N x C x H x W, got " + shape_string(s));
  const int n = s[0], c = s[1];
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  if (gamma.value().size() != static_cast<std::size_t>(c) || beta.value().size() != static_cast<std::size_t>(c)) {
    throw ConfigError("batchnorm2d: scale/shift must have " + std::to_string(c) + " entries");
  }
  if (!stats.running_mean || !stats.running_var) throw ConfigError("batchnorm2d: running statistics missing");
  const bool train = x.tape->training();
  const std::size_t count = static_cast<std::size_t>(n) * plane;
  if (train && count == 0) throw ConfigError("batchnorm2d: empty batch in training mode");

  std::vector<double> mean(c), inv_std(c);
  const Tensor& xv = x.value();
  for (int ch = 0; ch < c; ++ch) {
    if (train) {
      double m = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = xv.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = xv.data() + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      v /= static_cast<double>(count);
      mean[ch] = m;
      inv_std[ch] = 1.0 / std::sqrt(v + stats.eps);
      const double unbiased = count > 1 ? v * static_cast<double>(count) / static_cast<double>(count - 1) : v;
      (*stats.running_mean)[ch] = (1.0 - stats.momentum) * (*stats.running_mean)[ch] + stats.momentum * m;
      (*stats.running_var)[ch] = (1.0 - stats.momentum) * (*stats.running_var)[ch] + stats.momentum * unbiased;
    } else {
      mean[ch] = (*stats.running_mean)[ch];
      inv_std[ch] = 1.0 / std::sqrt((*stats.running_var)[ch] + stats.eps);
    }
  }
  Tensor y = Tensor::like(xv);
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      const double g = gamma.value()[ch] * inv_std[ch];
      const double sh = beta.value()[ch] - g * mean[ch];
      for (std::size_t i = 0; i < plane; ++i) y[off + i] = g * xv[off + i] + sh;
    }
  }
  const int xi = x.id, gi = gamma.id, bi = beta.id;
  return x.tape->push(std::move(y), {x, gamma, beta},
                      [=](Tape& t, int self) {
                        const Tensor& xv = t.value(xi);
                        const Tensor& gv = t.value(gi);
                        const Tensor& g = t.grad(self);
                        for (int ch = 0; ch < c; ++ch) {
                          double sum_g = 0.0, sum_gx = 0.0;
                          for (int b = 0; b < n; ++b) {
                            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
                            for (std::size_t i = 0; i < plane; ++i) {
                              sum_g += g[off + i];
                              sum_gx += g[off + i] * (xv[off + i] - mean[ch]) * inv_std[ch];
                            }
                          }
                          if (t.requires_grad(gi)) t.grad(gi)[ch] += sum_gx;
                          if (t.requires_grad(bi)) t.grad(bi)[ch] += sum_g;
                          if (!t.requires_grad(xi)) continue;
                          Tensor& gx = t.grad(xi);
                          const double k = gv[ch] * inv_std[ch];
                          const double inv_count = 1.0 / static_cast<double>(count);
                          for (int b = 0; b < n; ++b) {
                            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
                            for (std::size_t i = 0; i < plane; ++i) {
                              if (train) {
                                const double xhat = (xv[off + i] - mean[ch]) * inv_std[ch];
                                gx[off + i] += k * (g[off + i] - inv_count * sum_g - xhat * inv_count * sum_gx);
                              } else {
                                gx[off + i] += k * g[off + i];
                              }
                            }
                          }
                        }
                      });
}

}  // namespace mfeit::ad
