#include "mfeit/net/mmv_net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"
#include "mfeit/ad/checkpoint.hpp"
#include "mfeit/admm/laplacian.hpp"
#include "mfeit/error.hpp"

namespace mfeit::net {

using ad::Tape;
using ad::Tensor;
using ad::Var;
using CMap = Eigen::Map<const Eigen::MatrixXd>;
using Map = Eigen::Map<Eigen::MatrixXd>;

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::both: return "both";
    case Arch::ssa_only: return "ssa_only";
    case Arch::lstm_only: return "lstm_only";
    case Arch::identity: return "identity";
  }
  return "both";
}

Arch parse_arch(const std::string& name) {
  if (name == "both") return Arch::both;
  if (name == "ssa_only") return Arch::ssa_only;
  if (name == "lstm_only") return Arch::lstm_only;
  if (name == "identity") return Arch::identity;
  throw ConfigError("unknown architecture '" + name + "' (expected both, ssa_only, lstm_only or identity)");
}

void NetConfig::validate(int height, int width) const {
  if (channels < 2 || channels % 2 != 0) throw ConfigError("SSA channel count C must be even and >= 2");
  if (hidden < 1) throw ConfigError("ConvLSTM hidden channel count G must be >= 1");
  if (blocks < 0) throw ConfigError("block count K_s must be >= 0");
  if (gn_lambda < 0.0) throw ConfigError("gn_lambda must be non-negative");
  const bool uses_ssa = arch == Arch::both || arch == Arch::ssa_only;
  if (uses_ssa && (height % 4 != 0 || width % 4 != 0)) {
    throw ConfigError("SSA needs H and W divisible by 4, got " + std::to_string(height) + "x" + std::to_string(width));
  }
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw ConfigError("softplus_inverse needs a positive value");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

Eigen::MatrixXd sign_convention(const Eigen::MatrixXd& x, SignDirection) { return -x; }

Tensor to_frames(const std::vector<const Eigen::MatrixXd*>& columns) {
  if (columns.empty()) throw ConfigError("to_frames: empty batch");
  const auto rows = columns[0]->rows();
  const auto cols = columns[0]->cols();
  Tensor t({static_cast<int>(columns.size() * cols), static_cast<int>(rows)});
  for (std::size_t s = 0; s < columns.size(); ++s) {
    if (columns[s]->rows() != rows || columns[s]->cols() != cols) throw ConfigError("to_frames: ragged batch");
    std::memcpy(t.data() + s * rows * cols, columns[s]->data(), sizeof(double) * rows * cols);
  }
  return t;
}

Eigen::MatrixXd frame_block(const Tensor& frames, int sample, int l) {
  const int n = frames.dim(1);
  return CMap(frames.data() + static_cast<std::size_t>(sample) * l * n, n, l);
}

Var embed_to_grid(Var frames, const fem::PixelGrid& grid, int l) {
  const Tensor& f = frames.value();
  const int n = grid.n();
  if (f.rank() != 2 || f.dim(1) != n || f.dim(0) % l != 0) {
    throw ConfigError("embed_to_grid: frames " + f.shape_string() + " incompatible with n=" + std::to_string(n) +
                      ", l=" + std::to_string(l));
  }
  const int rows = f.dim(0);
  const int hw = grid.height() * grid.width();
  std::vector<int> cells(n);
  for (int i = 0; i < n; ++i) cells[i] = grid.cell_of(i);
  Tensor g({rows / l, l, grid.height(), grid.width()});
  for (int r = 0; r < rows; ++r) {
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(r) * hw + cells[i]] = f[static_cast<std::size_t>(r) * n + i];
  }
  const int fi = frames.id;
  return frames.tape->push(std::move(g), {frames}, [fi, cells, rows, n, hw](Tape& t, int self) {
    const Tensor& gg = t.grad(self);
    Tensor& gf = t.grad(fi);
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < n; ++i) gf[static_cast<std::size_t>(r) * n + i] += gg[static_cast<std::size_t>(r) * hw + cells[i]];
    }
  });
}

Var extract_from_grid(Var grid_tensor, const fem::PixelGrid& grid) {
  const Tensor& g = grid_tensor.value();
  if (g.rank() != 4 || g.dim(2) != grid.height() || g.dim(3) != grid.width()) {
    throw ConfigError("extract_from_grid: tensor " + g.shape_string() + " does not match a " +
                      std::to_string(grid.height()) + "x" + std::to_string(grid.width()) + " grid");
  }
  const int rows = g.dim(0) * g.dim(1);
  const int n = grid.n();
  const int hw = grid.height() * grid.width();
  std::vector<int> cells(n);
  for (int i = 0; i < n; ++i) cells[i] = grid.cell_of(i);
  Tensor f({rows, n});
  for (int r = 0; r < rows; ++r) {
    for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(r) * n + i] = g[static_cast<std::size_t>(r) * hw + cells[i]];
  }
  const int gi = grid_tensor.id;
  return grid_tensor.tape->push(std::move(f), {grid_tensor}, [gi, cells, rows, n, hw](Tape& t, int self) {
    const Tensor& gf = t.grad(self);
    Tensor& gg = t.grad(gi);
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < n; ++i) gg[static_cast<std::size_t>(r) * hw + cells[i]] += gf[static_cast<std::size_t>(r) * n + i];
    }
  });
}

namespace {

void check_frames(const Var& v, int rows, int cols, const char* what) {
  const Tensor& t = v.value();
  if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
    throw ConfigError(std::string(what) + " has shape " + t.shape_string() + ", expected [" + std::to_string(rows) +
                      "x" + std::to_string(cols) + "]");
  }
}

Tensor from_matrix(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<int>(m.cols()), static_cast<int>(m.rows())});
  std::memcpy(t.data(), m.data(), sizeof(double) * m.size());
  return t;
}

Eigen::MatrixXd as_matrix(const Tensor& t) { return CMap(t.data(), t.dim(1), t.dim(0)); }

double dot(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a.array() * b.array()).sum(); }

}  // namespace

Var net_x_update(Var X, Var Z, Var L1, Var L2, Var eta, Var beta1, Var beta2, const Eigen::MatrixXd& A, const Tensor& B) {
  const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
  const int rows = X.value().dim(0);
  check_frames(X, rows, n, "X");
  check_frames(Z, rows, n, "Z");
  check_frames(L1, rows, n, "L1");
  check_frames(L2, rows, m, "L2");
  if (B.rank() != 2 || B.dim(0) != rows || B.dim(1) != m) throw ConfigError("B frames have shape " + B.shape_string());

  admm::AdmmState s{as_matrix(X.value()), as_matrix(Z.value()), as_matrix(L1.value()), as_matrix(L2.value())};
  const Eigen::MatrixXd b = as_matrix(B);
  const admm::LinearizedModel model{A, b};
  const double e = eta.value()[0], b1 = beta1.value()[0], b2 = beta2.value()[0];
  Tensor out = from_matrix(admm::x_update_gd(s, model, e, b1, b2));

  const int xi = X.id, zi = Z.id, l1i = L1.id, l2i = L2.id, ei = eta.id, b1i = beta1.id, b2i = beta2.id;
  const Eigen::MatrixXd* a_ptr = &A;
  return X.tape->push(std::move(out), {X, Z, L1, L2, eta, beta1, beta2}, [=](Tape& t, int self) {
    const Eigen::MatrixXd& A = *a_ptr;
    const Eigen::MatrixXd g = as_matrix(t.grad(self));
    const double e = t.value(ei)[0], b1 = t.value(b1i)[0], b2 = t.value(b2i)[0];
    const Eigen::MatrixXd ag = A * g;
    auto add_to = [&](int id, const Eigen::MatrixXd& d) {
      if (t.requires_grad(id)) Map(t.grad(id).data(), d.rows(), d.cols()) += d;
    };
    add_to(xi, g - e * (b1 * g + b2 * (A.transpose() * ag)));
    add_to(zi, (e * b1) * g);
    add_to(l1i, -e * g);
    add_to(l2i, e * ag);
    const bool need_scalars = t.requires_grad(ei) || t.requires_grad(b1i) || t.requires_grad(b2i);
    if (!need_scalars) return;
    const Eigen::MatrixXd x = as_matrix(t.value(xi)), z = as_matrix(t.value(zi));
    const Eigen::MatrixXd l1 = as_matrix(t.value(l1i)), l2 = as_matrix(t.value(l2i));
    const Eigen::MatrixXd ax_b = A * x - b;
    const Eigen::MatrixXd G = b1 * (x - z) + l1 + A.transpose() * (b2 * ax_b - l2);
    if (t.requires_grad(ei)) t.grad(ei)[0] -= dot(G, g);
    if (t.requires_grad(b1i)) t.grad(b1i)[0] -= e * dot(x - z, g);
    if (t.requires_grad(b2i)) t.grad(b2i)[0] -= e * dot(ax_b, ag);
  });
}

Var net_lambda1_update(Var L1, Var X, Var Z, Var c1) {
  const int rows = X.value().dim(0), n = X.value().dim(1);
  check_frames(L1, rows, n, "L1");
  check_frames(Z, rows, n, "Z");
  Tensor out = from_matrix(
      admm::lambda1_step(as_matrix(L1.value()), as_matrix(X.value()), as_matrix(Z.value()), c1.value()[0]));
  const int li = L1.id, xi = X.id, zi = Z.id, ci = c1.id;
  return X.tape->push(std::move(out), {L1, X, Z, c1}, [=](Tape& t, int self) {
    const auto g = t.grad(self).array();
    const double c = t.value(ci)[0];
    if (t.requires_grad(li)) t.grad(li).array() += g;
    if (t.requires_grad(xi)) t.grad(xi).array() += c * g;
    if (t.requires_grad(zi)) t.grad(zi).array() -= c * g;
    if (t.requires_grad(ci)) t.grad(ci)[0] += ((t.value(xi).array() - t.value(zi).array()) * g).sum();
  });
}

Var net_lambda2_update(Var L2, Var X, Var c2, const Eigen::MatrixXd& A, const Tensor& B) {
  const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
  const int rows = X.value().dim(0);
  check_frames(X, rows, n, "X");
  check_frames(L2, rows, m, "L2");
  const Eigen::MatrixXd b = as_matrix(B);
  Tensor out = from_matrix(admm::lambda2_step(as_matrix(L2.value()), A, b, as_matrix(X.value()), c2.value()[0]));
  const int li = L2.id, xi = X.id, ci = c2.id;
  const Eigen::MatrixXd* a_ptr = &A;
  return X.tape->push(std::move(out), {L2, X, c2}, [=](Tape& t, int self) {
    const Eigen::MatrixXd& A = *a_ptr;
    const Eigen::MatrixXd g = as_matrix(t.grad(self));
    const double c = t.value(ci)[0];
    if (t.requires_grad(li)) t.grad(li).array() += t.grad(self).array();
    if (t.requires_grad(xi)) Map(t.grad(xi).data(), n, rows) -= c * (A.transpose() * g);
    if (t.requires_grad(ci)) t.grad(ci)[0] += dot(b - A * as_matrix(t.value(xi)), g);
  });
}

MmvNet::MmvNet(NetConfig config, fem::PixelGrid grid, Eigen::MatrixXd A, int l)
    : config_(config), grid_(std::move(grid)), a_(std::move(A)), l_(l) {
  config_.validate(grid_.height(), grid_.width());
  if (a_.cols() != grid_.n()) throw ConfigError("A has " + std::to_string(a_.cols()) + " columns, grid has n=" +
                                                std::to_string(grid_.n()));
  if (l_ < 1) throw ConfigError("frequency count l must be >= 1");
  const auto L = admm::laplacian(grid_);
  const double lambda = config_.gn_lambda > 0.0 ? config_.gn_lambda : admm::default_gn_lambda(a_, L);
  gn_ = std::make_shared<const admm::GaussNewton>(a_, L, lambda);
  build_parameters();
}

void MmvNet::build_parameters() {
  std::mt19937_64 rng(config_.seed);
  auto conv_param = [&](const std::string& name, int out, int in, int k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    params_.add(name + ".w", Tensor::uniform({out, in, k, k}, rng, -bound, bound));
    params_.add(name + ".b", Tensor::zeros({out}));
  };
  auto deconv_param = [&](const std::string& name, int in, int out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * 4));
    params_.add(name + ".w", Tensor::uniform({in, out, 2, 2}, rng, -bound, bound));
    params_.add(name + ".b", Tensor::zeros({out}));
  };
  stat_blocks_ = std::max(1, config_.blocks);
  auto bn_param = [&](const std::string& name, int c) {
    params_.add(name + ".gamma", Tensor::ones({c}));
    params_.add(name + ".beta", Tensor::zeros({c}));
    for (int k = 0; k < stat_blocks_; ++k) {
      params_.add_buffer(stats_name(name, k, "running_mean"), Tensor::zeros({c}));
      params_.add_buffer(stats_name(name, k, "running_var"), Tensor::ones({c}));
    }
    bn_layers_.push_back(name);
  };

  const double s = admm::spectral_norm_estimate(a_);
  params_.add("eta", Tensor::scalar(softplus_inverse(1.0 / (1.0 + s * s))));
  for (const char* name : {"beta1", "beta2", "c1", "c2"}) params_.add(name, Tensor::scalar(softplus_inverse(1.0)));
  params_.add("a1", Tensor::scalar(1.0));
  params_.add("a2", Tensor::scalar(1.0));

  const int c = config_.channels, g = config_.hidden;
  if (config_.arch == Arch::both || config_.arch == Arch::ssa_only) {
    conv_param("ssa.enc0", 1, l_, 3);
    conv_param("ssa.enc1", c / 2, 1, 2);
    bn_param("ssa.enc1.bn", c / 2);
    conv_param("ssa.enc2", c, c / 2, 2);
    bn_param("ssa.enc2.bn", c);
    for (const char* name : {"ssa.q", "ssa.k", "ssa.v"}) conv_param(name, c, c, 3);
    deconv_param("ssa.dec1", c, c / 2);
    bn_param("ssa.dec1.bn", c / 2);
    deconv_param("ssa.dec2", c / 2, l_);
    bn_param("ssa.dec2.bn", l_);
    params_.add_buffer("ssa.bn.primed_blocks", Tensor::scalar(1.0));
  }
  if (config_.arch == Arch::both || config_.arch == Arch::lstm_only) {
    conv_param("lstm.l1", 4 * g, 1 + g, 3);
    conv_param("lstm.l2", 4 * g, 2 * g, 3);
    conv_param("lstm.head", 1, g, 1);
    // Forget gates start open.
    for (const char* name : {"lstm.l1.b", "lstm.l2.b"}) {
      Tensor& b = params_.param(name).value;
      for (int k = g; k < 2 * g; ++k) b[k] = 1.0;
    }
  }
}

BlockScalars MmvNet::scalars() const {
  auto sp = [&](const char* name) { return ad::softplus_value(params_.param(name).value[0]); };
  return {sp("eta"), sp("beta1"), sp("beta2"), sp("c1"), sp("c2"), params_.param("a1").value[0],
          params_.param("a2").value[0]};
}

void MmvNet::set_scalars(const BlockScalars& s) {
  params_.param("eta").value[0] = softplus_inverse(s.eta);
  params_.param("beta1").value[0] = softplus_inverse(s.beta1);
  params_.param("beta2").value[0] = softplus_inverse(s.beta2);
  params_.param("c1").value[0] = softplus_inverse(s.c1);
  params_.param("c2").value[0] = softplus_inverse(s.c2);
  params_.param("a1").value[0] = s.a1;
  params_.param("a2").value[0] = s.a2;
}

Tensor MmvNet::initial_frames(const Tensor& b) const {
  if (b.rank() != 2 || b.dim(1) != a_.rows()) throw ConfigError("measurement frames have shape " + b.shape_string());
  return from_matrix(gn_->solve(as_matrix(b)));
}

Var MmvNet::positive(Tape& tape, const std::string& name) { return ad::softplus(tape.param(params_.param(name))); }

Var MmvNet::conv(Tape& tape, const std::string& name, Var x, int stride, int padding) {
  return ad::conv2d(x, tape.param(params_.param(name + ".w")), tape.param(params_.param(name + ".b")), stride, padding);
}

Var MmvNet::deconv(Tape& tape, const std::string& name, Var x) {
  return ad::conv_transpose2d(x, tape.param(params_.param(name + ".w")), tape.param(params_.param(name + ".b")), 2);
}

void MmvNet::set_blocks(int blocks) {
  if (blocks < 0) throw ConfigError("block count K_s must be >= 0");
  config_.blocks = blocks;
}

std::string MmvNet::stats_name(const std::string& layer, int block, const char* what) {
  return layer + ".b" + std::to_string(block) + "." + what;
}

void MmvNet::prime_statistics(int block) {
  Tensor& primed = params_.buffer("ssa.bn.primed_blocks");
  const int done = static_cast<int>(primed[0]);
  if (block < done) return;
  // A block reached for the first time starts from its predecessor's statistics.
  for (const auto& layer : bn_layers_) {
    for (const char* what : {"running_mean", "running_var"}) {
      const Tensor source = params_.buffer(stats_name(layer, done - 1, what));
      for (int k = done; k <= block; ++k) params_.buffer(stats_name(layer, k, what)) = source;
    }
  }
  primed[0] = block + 1;
}

Var MmvNet::bn_elu(Tape& tape, const std::string& name, Var x, int block) {
  const int k = std::min(block, stat_blocks_ - 1);
  if (tape.training()) prime_statistics(k);
  ad::BatchNormStats stats{&params_.buffer(stats_name(name, k, "running_mean")),
                           &params_.buffer(stats_name(name, k, "running_var"))};
  return ad::elu(ad::batchnorm2d(x, tape.param(params_.param(name + ".gamma")),
                                 tape.param(params_.param(name + ".beta")), stats));
}

Var MmvNet::mask_tensor(Tape& tape, int batch, int channels) {
  const int hw = grid_.height() * grid_.width();
  Tensor m({batch, channels, grid_.height(), grid_.width()});
  for (int p = 0; p < batch * channels; ++p) {
    for (int i = 0; i < grid_.n(); ++i) m[static_cast<std::size_t>(p) * hw + grid_.cell_of(i)] = 1.0;
  }
  return tape.constant(std::move(m));
}

Var MmvNet::ssa_forward(Tape& tape, Var u, Var* attention, int block) {
  const int batch = u.value().dim(0);
  const int c = config_.channels;
  const int h4 = grid_.height() / 4, w4 = grid_.width() / 4, p = h4 * w4;
  Var e = conv(tape, "ssa.enc0", u, 1, 1);
  e = bn_elu(tape, "ssa.enc1.bn", conv(tape, "ssa.enc1", e, 2, 0), block);
  e = bn_elu(tape, "ssa.enc2.bn", conv(tape, "ssa.enc2", e, 2, 0), block);
  Var q = ad::reshape(conv(tape, "ssa.q", e, 1, 1), {batch, c, p});
  Var k = ad::reshape(conv(tape, "ssa.k", e, 1, 1), {batch, c, p});
  Var v = ad::reshape(conv(tape, "ssa.v", e, 1, 1), {batch, c, p});
  Var logits = ad::bmm(k, q, true, false);
  if (config_.attention_scaling) logits = ad::scale(logits, 1.0 / std::sqrt(static_cast<double>(c)));
  Var s = ad::softmax(logits);
  if (attention) *attention = s;
  Var o = ad::reshape(ad::bmm(v, s), {batch, c, h4, w4});
  Var r = ad::add(e, o);
  r = bn_elu(tape, "ssa.dec1.bn", deconv(tape, "ssa.dec1", r), block);
  r = bn_elu(tape, "ssa.dec2.bn", deconv(tape, "ssa.dec2", r), block);
  return ad::mul(r, mask_tensor(tape, batch, l_));
}

Var MmvNet::convlstm_forward(Tape& tape, Var r) {
  const int batch = r.value().dim(0);
  const int g = config_.hidden;
  const int h = grid_.height(), w = grid_.width();
  Var zeros = tape.constant(Tensor::zeros({batch, g, h, w}));
  Var h1 = zeros, c1 = zeros, h2 = zeros, c2 = zeros;
  auto cell = [&](const std::string& name, Var x, Var& hs, Var& cs) {
    Var gates = conv(tape, name, ad::concat_channels({x, hs}), 1, 1);
    Var i = ad::sigmoid(ad::slice_channels(gates, 0, g));
    Var f = ad::sigmoid(ad::slice_channels(gates, g, g));
    Var o = ad::sigmoid(ad::slice_channels(gates, 2 * g, g));
    Var cand = ad::tanh(ad::slice_channels(gates, 3 * g, g));
    cs = ad::add(ad::mul(f, cs), ad::mul(i, cand));
    hs = ad::mul(o, ad::tanh(cs));
  };
  std::vector<Var> frames;
  for (int f = 0; f < l_; ++f) {
    cell("lstm.l1", ad::slice_channels(r, f, 1), h1, c1);
    cell("lstm.l2", h1, h2, c2);
    frames.push_back(ad::relu(conv(tape, "lstm.head", h2, 1, 0)));
  }
  return ad::mul(ad::concat_channels(frames), mask_tensor(tape, batch, l_));
}

Var MmvNet::z_update(Tape& tape, Var X, Var L1, int block) {
  Var u = ad::add(ad::scale(tape.param(params_.param("a1")), X), ad::scale(tape.param(params_.param("a2")), L1));
  if (config_.arch == Arch::identity) return u;
  Var grid_u = embed_to_grid(u, grid_, l_);
  Var out;
  switch (config_.arch) {
    case Arch::both: out = convlstm_forward(tape, ssa_forward(tape, grid_u, nullptr, block)); break;
    case Arch::ssa_only: out = ad::relu(ssa_forward(tape, grid_u, nullptr, block)); break;
    case Arch::lstm_only: out = convlstm_forward(tape, grid_u); break;
    case Arch::identity: break;
  }
  return extract_from_grid(out, grid_);
}

MmvNet::State MmvNet::block(Tape& tape, const State& s, const Tensor& b, int index) {
  State next;
  next.X = net_x_update(s.X, s.Z, s.L1, s.L2, positive(tape, "eta"), positive(tape, "beta1"), positive(tape, "beta2"),
                        a_, b);
  next.Z = z_update(tape, next.X, s.L1, index);
  next.L1 = net_lambda1_update(s.L1, next.X, next.Z, positive(tape, "c1"));
  next.L2 = net_lambda2_update(s.L2, next.X, positive(tape, "c2"), a_, b);
  return next;
}

Var MmvNet::forward(Tape& tape, const Tensor& b, int blocks, std::vector<Var>* intermediates) {
  if (blocks < 0) throw ConfigError("block count must be >= 0");
  const int rows = b.dim(0), n = grid_.n(), m = static_cast<int>(a_.rows());
  if (rows % l_ != 0) throw ConfigError("measurement frame count is not a multiple of l");
  State s;
  s.X = tape.constant(initial_frames(b));
  s.Z = tape.constant(Tensor::zeros({rows, n}));
  s.L1 = tape.constant(Tensor::zeros({rows, n}));
  s.L2 = tape.constant(Tensor::zeros({rows, m}));
  for (int k = 0; k < blocks; ++k) {
    s = block(tape, s, b, k);
    if (intermediates) intermediates->push_back(s.Z);
  }
  return s.Z;
}

Var MmvNet::one_shot(Tape& tape, const Tensor& b) {
  const int rows = b.dim(0);
  Var x0 = tape.constant(initial_frames(b));
  Var l1 = tape.constant(Tensor::zeros({rows, grid_.n()}));
  return z_update(tape, x0, l1);
}

Eigen::MatrixXd MmvNet::reconstruct(const Eigen::MatrixXd& B, int blocks, std::vector<Eigen::MatrixXd>* intermediates) {
  if (B.rows() != a_.rows() || B.cols() != l_) throw ConfigError("B must be m x l");
  if (blocks < 0) blocks = config_.blocks;
  const Eigen::MatrixXd b_net = config_.sign_convention ? sign_convention(B, SignDirection::to_network) : B;
  Tape tape(false);
  std::vector<Var> inter;
  Var z = forward(tape, to_frames({&b_net}), blocks, intermediates ? &inter : nullptr);
  auto back = [&](const Tensor& t) {
    const Eigen::MatrixXd zm = frame_block(t, 0, l_);
    return config_.sign_convention ? sign_convention(zm, SignDirection::from_network) : zm;
  };
  if (intermediates) {
    intermediates->clear();
    for (const auto& v : inter) intermediates->push_back(back(v.value()));
  }
  return back(z.value());
}

std::filesystem::path MmvNet::sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void MmvNet::save(const std::filesystem::path& path) const {
  ad::save_checkpoint(path, params_);
  nlohmann::json j{
      {"K_s", config_.blocks},
      {"C", config_.channels},
      {"G", config_.hidden},
      {"H", grid_.height()},
      {"W", grid_.width()},
      {"n", grid_.n()},
      {"m", a_.rows()},
      {"l", l_},
      {"arch", arch_name(config_.arch)},
      {"sign_convention", config_.sign_convention},
      {"attention_scaling", config_.attention_scaling},
      {"gn_lambda", config_.gn_lambda},
      {"seed", config_.seed},
      {"parameter_count", parameter_count()},
  };
  std::ofstream out(sidecar_path(path));
  if (!out) throw IoError("cannot write '" + sidecar_path(path).string() + "'");
  out << j.dump(2) << '\n';
}

MmvNet MmvNet::load(const std::filesystem::path& path, const fem::PixelGrid& grid, const Eigen::MatrixXd& A) {
  const auto side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw IoError("missing checkpoint sidecar '" + side.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed sidecar '" + side.string() + "': " + e.what());
  }
  NetConfig c;
  int l = 0;
  try {
    c.blocks = j.at("K_s").get<int>();
    c.channels = j.at("C").get<int>();
    c.hidden = j.at("G").get<int>();
    c.arch = parse_arch(j.at("arch").get<std::string>());
    c.sign_convention = j.at("sign_convention").get<bool>();
    c.attention_scaling = j.at("attention_scaling").get<bool>();
    c.gn_lambda = j.at("gn_lambda").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    l = j.at("l").get<int>();
    if (j.at("H").get<int>() != grid.height() || j.at("W").get<int>() != grid.width()) {
      throw ConfigError("checkpoint grid " + std::to_string(j.at("H").get<int>()) + "x" +
                        std::to_string(j.at("W").get<int>()) + " does not match the dataset grid");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("sidecar '" + side.string() + "' is missing a field: " + e.what());
  }
  MmvNet net(c, grid, A, l);
  ad::load_checkpoint(path, net.params_);
  return net;
}

}  // namespace mfeit::net
