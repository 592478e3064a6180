#include <string>

#include "mfeit/ad/ops.hpp"
#include "mfeit/error.hpp"

namespace mfeit::ad {

namespace {

struct Geometry {
  int channels, height, width;  // image side
  int kh, kw, stride, pad;
  int out_h, out_w;             // patch grid
  int rows() const { return channels * kh * kw; }
  int cols() const { return out_h * out_w; }
};

// Image (channels x height x width) -> patch matrix (channels*kh*kw x out_h*out_w).
void im2col(const double* img, const Geometry& g, double* cols) {
  const int nc = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        double* row = cols + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * nc;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = img + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix < 0 || ix >= g.width) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds patches back into the image.
void col2im(const double* cols, const Geometry& g, double* img) {
  const int nc = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kh; ++ki) {
      for (int kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * nc;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.height) continue;
          double* dst = img + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          const double* src = row + oy * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void check_bias(const Var& bias, int channels, const char* op) {
  if (bias.valid() && bias.value().size() != static_cast<std::size_t>(channels)) {
    throw ConfigError(std::string(op) + ": bias has " + std::to_string(bias.value().size()) + " entries, expected " +
                      std::to_string(channels));
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var bias, int stride, int padding) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 4 || ws.size() != 4) {
    throw ConfigError("conv2d: expected 4-D input and kernel, got " + shape_string(xs) + " and " + shape_string(ws));
  }
  if (ws[1] != xs[1]) {
    throw ConfigError("conv2d: kernel " + shape_string(ws) + " expects " + std::to_string(ws[1]) +
                      " input channels, input " + shape_string(xs) + " has " + std::to_string(xs[1]));
  }
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");
  const int n = xs[0], o = ws[0];
  Geometry g{xs[1], xs[2], xs[3], ws[2], ws[3], stride, padding, 0, 0};
  if (g.height + 2 * padding < g.kh || g.width + 2 * padding < g.kw) {
    throw ConfigError("conv2d: kernel " + shape_string(ws) + " larger than padded input " + shape_string(xs));
  }
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;
  check_bias(bias, o, "conv2d");

  const int kr = g.rows(), kc = g.cols();
  const std::size_t in_plane = static_cast<std::size_t>(g.channels) * g.height * g.width;
  const std::size_t out_plane = static_cast<std::size_t>(o) * kc;
  Tensor y({n, o, g.out_h, g.out_w});
  RowMatrix cols(kr, kc);
  auto W = w.value().matrix(o, kr);
  for (int b = 0; b < n; ++b) {
    im2col(x.value().data() + b * in_plane, g, cols.data());
    MatrixMap Y(y.data() + b * out_plane, o, kc);
    Y.noalias() = W * cols;
    if (bias.valid()) {
      for (int k = 0; k < o; ++k) Y.row(k).array() += bias.value()[k];
    }
  }
  std::vector<Var> parents{x, w};
  if (bias.valid()) parents.push_back(bias);
  const int xi = x.id, wi = w.id, bi = bias.valid() ? bias.id : -1;
  return x.tape->push(std::move(y), parents, [=](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const bool need_x = t.requires_grad(xi), need_w = t.requires_grad(wi);
    const bool need_b = bi >= 0 && t.requires_grad(bi);
    auto W = t.value(wi).matrix(o, kr);
    RowMatrix cols(kr, kc);
    for (int b = 0; b < n; ++b) {
      ConstMatrixMap G(gy.data() + b * out_plane, o, kc);
      if (need_w) {
        im2col(t.value(xi).data() + b * in_plane, g, cols.data());
        t.grad(wi).matrix(o, kr).noalias() += G * cols.transpose();
      }
      if (need_b) {
        Tensor& gb = t.grad(bi);
        for (int k = 0; k < o; ++k) gb[k] += G.row(k).sum();
      }
      if (need_x) {
        cols.noalias() = W.transpose() * G;
        col2im(cols.data(), g, t.grad(xi).data() + b * in_plane);
      }
    }
  });
}

Var conv_transpose2d(Var x, Var w, Var bias, int stride) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 4 || ws.size() != 4) {
    throw ConfigError("conv_transpose2d: expected 4-D input and kernel, got " + shape_string(xs) + " and " +
                      shape_string(ws));
  }
  if (ws[0] != xs[1]) {
    throw ConfigError("conv_transpose2d: kernel " + shape_string(ws) + " expects " + std::to_string(ws[0]) +
                      " input channels, input " + shape_string(xs) + " has " + std::to_string(xs[1]));
  }
  if (stride < 1) throw ConfigError("conv_transpose2d: stride must be >= 1");
  const int n = xs[0], cin = xs[1], h = xs[2], wd = xs[3], cout = ws[1];
  // Output geometry seen as the input of the matching forward convolution.
  Geometry g{cout, (h - 1) * stride + ws[2], (wd - 1) * stride + ws[3], ws[2], ws[3], stride, 0, h, wd};
  check_bias(bias, cout, "conv_transpose2d");

  const int kr = g.rows(), kc = g.cols();  // cout*kh*kw, h*w
  const std::size_t in_plane = static_cast<std::size_t>(cin) * kc;
  const std::size_t out_plane = static_cast<std::size_t>(cout) * g.height * g.width;
  Tensor y({n, cout, g.height, g.width});
  RowMatrix cols(kr, kc);
  auto W = w.value().matrix(cin, kr);
  for (int b = 0; b < n; ++b) {
    ConstMatrixMap X(x.value().data() + b * in_plane, cin, kc);
    cols.noalias() = W.transpose() * X;
    col2im(cols.data(), g, y.data() + b * out_plane);
    if (bias.valid()) {
      const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;
      for (int k = 0; k < cout; ++k) {
        double* p = y.data() + b * out_plane + k * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] += bias.value()[k];
      }
    }
  }
  std::vector<Var> parents{x, w};
  if (bias.valid()) parents.push_back(bias);
  const int xi = x.id, wi = w.id, bi = bias.valid() ? bias.id : -1;
  return x.tape->push(std::move(y), parents, [=](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const bool need_x = t.requires_grad(xi), need_w = t.requires_grad(wi);
    const bool need_b = bi >= 0 && t.requires_grad(bi);
    auto W = t.value(wi).matrix(cin, kr);
    RowMatrix cols(kr, kc);
    const std::size_t plane = static_cast<std::size_t>(g.height) * g.width;
    for (int b = 0; b < n; ++b) {
      im2col(gy.data() + b * out_plane, g, cols.data());
      if (need_x) t.grad(xi).matrix(n * cin, kc).middleRows(b * cin, cin).noalias() += W * cols;
      if (need_w) {
        ConstMatrixMap X(t.value(xi).data() + b * in_plane, cin, kc);
        t.grad(wi).matrix(cin, kr).noalias() += X * cols.transpose();
      }
      if (need_b) {
        Tensor& gb = t.grad(bi);
        for (int k = 0; k < cout; ++k) {
          const double* p = gy.data() + b * out_plane + k * plane;
          double s = 0.0;
          for (std::size_t i = 0; i < plane; ++i) s += p[i];
          gb[k] += s;
        }
      }
    }
  });
}

}  // namespace mfeit::ad
