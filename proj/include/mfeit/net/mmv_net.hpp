#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfeit/ad/ops.hpp"
#include "mfeit/admm/admm.hpp"
#include "mfeit/fem/pixel_grid.hpp"

namespace mfeit::net {

enum class Arch {
  both,       // SSA followed by ConvLSTM
  ssa_only,   // SSA output through ReLU
  lstm_only,  // ConvLSTM on the combined input
  identity,   // Z = a1 X + a2 L1
};

std::string arch_name(Arch arch);
Arch parse_arch(const std::string& name);

struct NetConfig {
  int channels = 16;        // C, SSA feature width
  int hidden = 8;           // G, ConvLSTM hidden channels
  int blocks = 7;           // K_s
  Arch arch = Arch::both;
  bool attention_scaling = false;  // divide K^T Q by sqrt(C)
  bool sign_convention = true;     // network works on -X
  double gn_lambda = 0.0;          // 0 selects the default for A
  std::uint64_t seed = 1;

  void validate(int height, int width) const;
};

/// Effective (post-softplus) scalar coefficients of a block.
struct BlockScalars {
  double eta, beta1, beta2, c1, c2, a1, a2;
};

double softplus_inverse(double y);

enum class SignDirection { to_network, from_network };

/// Negation used to make the ReLU head able to represent the (non-positive) targets.
Eigen::MatrixXd sign_convention(const Eigen::MatrixXd& x, SignDirection direction);

/// Samples are laid out as "frames": a tensor [N*l, n] whose row s*l + f is
/// frequency f of sample s. The same memory is an n x (N*l) column-major matrix.
ad::Tensor to_frames(const std::vector<const Eigen::MatrixXd*>& columns);
Eigen::MatrixXd frame_block(const ad::Tensor& frames, int sample, int l);

/// Scatter frames [N*l, n] to N x l x H x W (zeros outside the mask) and back.
ad::Var embed_to_grid(ad::Var frames, const fem::PixelGrid& grid, int l);
ad::Var extract_from_grid(ad::Var grid_tensor, const fem::PixelGrid& grid);

/// X - eta G on frames, with the arithmetic of admm::x_update_gd.
ad::Var net_x_update(ad::Var X, ad::Var Z, ad::Var L1, ad::Var L2, ad::Var eta, ad::Var beta1, ad::Var beta2,
                     const Eigen::MatrixXd& A, const ad::Tensor& B);
/// L1 + c1 (X - Z) and L2 + c2 (B - AX), with the arithmetic of admm::multiplier_step.
ad::Var net_lambda1_update(ad::Var L1, ad::Var X, ad::Var Z, ad::Var c1);
ad::Var net_lambda2_update(ad::Var L2, ad::Var X, ad::Var c2, const Eigen::MatrixXd& A, const ad::Tensor& B);

/// The unrolled network; one shared parameter set for all blocks.
class MmvNet {
 public:
  MmvNet(NetConfig config, fem::PixelGrid grid, Eigen::MatrixXd A, int l);

  const NetConfig& config() const { return config_; }
  /// Changes the unroll depth used by default; blocks past the trained depth reuse the last block's statistics.
  void set_blocks(int blocks);
  const fem::PixelGrid& grid() const { return grid_; }
  const Eigen::MatrixXd& A() const { return a_; }
  int l() const { return l_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }
  std::size_t parameter_count() const { return params_.parameter_count(); }
  BlockScalars scalars() const;
  /// Sets the raw scalars so the effective values equal s (a1, a2 are stored raw).
  void set_scalars(const BlockScalars& s);

  /// Gauss-Newton initial frames for measurement frames b [N*l, m].
  ad::Tensor initial_frames(const ad::Tensor& b) const;

  struct State {
    ad::Var X, Z, L1, L2;
  };
  /// Learned Z-update: U = a1 X + a2 L1 on the grid, then SSA / ConvLSTM per the architecture.
  /// block selects the batch-norm running statistics.
  ad::Var z_update(ad::Tape& tape, ad::Var X, ad::Var L1, int block = 0);
  /// One block {X, Z, multipliers}; index is its position in the unroll.
  State block(ad::Tape& tape, const State& s, const ad::Tensor& b, int index = 0);
  /// K blocks from X = GN(b), Z = L1 = L2 = 0; returns Z^(K) frames (network sign domain).
  ad::Var forward(ad::Tape& tape, const ad::Tensor& b, int blocks, std::vector<ad::Var>* intermediates = nullptr);
  /// Z-update applied once to (X^(0), L1 = 0), the stage-A mapping.
  ad::Var one_shot(ad::Tape& tape, const ad::Tensor& b);

  /// SSA and ConvLSTM sub-networks on N x l x H x W tensors.
  ad::Var ssa_forward(ad::Tape& tape, ad::Var u, ad::Var* attention = nullptr, int block = 0);
  ad::Var convlstm_forward(ad::Tape& tape, ad::Var r);

  /// Inference on one sample in the metric sign domain (n x l); frozen parameters, running BN statistics.
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& B, int blocks = -1,
                              std::vector<Eigen::MatrixXd>* intermediates = nullptr);

  /// Checkpoint plus JSON sidecar (path + ".json").
  void save(const std::filesystem::path& path) const;
  static MmvNet load(const std::filesystem::path& path, const fem::PixelGrid& grid, const Eigen::MatrixXd& A);
  static std::filesystem::path sidecar_path(const std::filesystem::path& path);

 private:
  void build_parameters();
  ad::Var conv(ad::Tape& tape, const std::string& name, ad::Var x, int stride, int padding);
  ad::Var deconv(ad::Tape& tape, const std::string& name, ad::Var x);
  ad::Var bn_elu(ad::Tape& tape, const std::string& name, ad::Var x, int block);
  static std::string stats_name(const std::string& layer, int block, const char* what);
  void prime_statistics(int block);
  ad::Var positive(ad::Tape& tape, const std::string& name);
  ad::Var mask_tensor(ad::Tape& tape, int batch, int channels);

  NetConfig config_;
  fem::PixelGrid grid_;
  Eigen::MatrixXd a_;
  int l_;
  ad::ParameterSet params_;
  int stat_blocks_ = 1;                 // blocks with their own batch-norm running statistics
  std::vector<std::string> bn_layers_;
  std::shared_ptr<const admm::GaussNewton> gn_;
};

}  // namespace mfeit::net
