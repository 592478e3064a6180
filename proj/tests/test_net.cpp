#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "mfeit/error.hpp"
#include "mfeit/net/mmv_net.hpp"
#include "mfeit/net/train.hpp"
#include "support.hpp"

using namespace mfeit;
using namespace mfeit::net;
using Eigen::MatrixXd;

namespace {

constexpr int kL = 4;

struct Fixture {
  fem::PixelGrid grid = fem::build_pixel_grid(8, 8);
  MatrixXd A = testing::random_sensitivity(20, grid.n(), 11);

  MmvNet make(Arch arch = Arch::both, int blocks = 2) const {
    NetConfig c;
    c.arch = arch;
    c.blocks = blocks;
    return MmvNet(c, grid, A, kL);
  }
};

MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

bool outside_mask_is_zero(const ad::Tensor& t, const fem::PixelGrid& grid) {
  const int hw = grid.height() * grid.width();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!grid.mask()[i % hw] && t[i] != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("frames: layout, grid embedding and masking") {
  const Fixture fx;
  const MatrixXd a = random_matrix(fx.grid.n(), kL, 1), b = random_matrix(fx.grid.n(), kL, 2);
  const auto frames = to_frames({&a, &b});
  CHECK(frames.shape() == std::vector<int>{2 * kL, fx.grid.n()});
  CHECK((frame_block(frames, 1, kL) - b).norm() == 0.0);
  CHECK(frames[static_cast<std::size_t>(kL) * fx.grid.n() + 3] == b(3, 0));

  ad::Tape t(false);
  auto g = embed_to_grid(t.constant(frames), fx.grid, kL);
  CHECK(g.value().shape() == std::vector<int>{2, kL, 8, 8});
  CHECK(outside_mask_is_zero(g.value(), fx.grid));
  const int cell = fx.grid.cell_of(5);
  CHECK(g.value().at(1, 2, cell / 8, cell % 8) == b(5, 2));
  auto back = extract_from_grid(g, fx.grid);
  CHECK(testing::max_abs_diff(back.value(), frames) == 0.0);

  const MatrixXd wrong(3, kL);
  CHECK_THROWS_AS(to_frames({&a, &wrong}), ConfigError);
}

TEST_CASE("sign convention is a negation and an involution") {
  const MatrixXd x = random_matrix(5, 3, 3);
  CHECK((sign_convention(x, SignDirection::to_network) + x).norm() == 0.0);
  CHECK((sign_convention(sign_convention(x, SignDirection::to_network), SignDirection::from_network) - x).norm() == 0.0);
}

TEST_CASE("parameters: count, sharing across blocks and scalar pinning") {
  const Fixture fx;
  auto net = fx.make(Arch::both, 7);
  CHECK(net.parameter_count() == 15569);
  CHECK(net.parameter_count() < 20000);
  CHECK(fx.make(Arch::both, 1).parameter_count() == net.parameter_count());
  CHECK(fx.make(Arch::identity).parameter_count() == 7);

  const BlockScalars pinned{0.05, 0.7, 1.3, 0.6, 0.9, 1.0, 0.0};
  net.set_scalars(pinned);
  const auto s = net.scalars();
  CHECK(s.eta == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(s.c2 == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s.a2 == 0.0);

  NetConfig bad;
  bad.channels = 3;
  CHECK_THROWS_AS(MmvNet(bad, fx.grid, fx.A, kL), ConfigError);
  CHECK_THROWS_AS(MmvNet(NetConfig{}, fem::build_pixel_grid(10, 10), testing::random_sensitivity(20, 5, 1), kL),
                  ConfigError);
}

TEST_CASE("block: identity Z-update reproduces one classical iteration bitwise") {
  const Fixture fx;
  auto net = fx.make(Arch::identity, 1);
  net.set_scalars({0.05, 0.7, 1.3, 0.6, 0.9, 1.0, 0.0});
  const auto sc = net.scalars();

  const int n = fx.grid.n(), m = 20;
  admm::AdmmState s{random_matrix(n, kL, 4), random_matrix(n, kL, 5), random_matrix(n, kL, 6), random_matrix(m, kL, 7)};
  const MatrixXd B = random_matrix(m, kL, 8);

  ad::Tape tape(false);
  MmvNet::State in{tape.constant(to_frames({&s.X})), tape.constant(to_frames({&s.Z})), tape.constant(to_frames({&s.L1})),
                   tape.constant(to_frames({&s.L2}))};
  const auto out = net.block(tape, in, to_frames({&B}));

  const admm::LinearizedModel model{fx.A, B};
  admm::AdmmState next = s;
  next.X = admm::x_update_gd(s, model, sc.eta, sc.beta1, sc.beta2);
  next.Z = next.X;
  const auto [l1, l2] = admm::multiplier_step(next, model, sc.c1, sc.c2);

  CHECK((frame_block(out.X.value(), 0, kL) - next.X).cwiseAbs().maxCoeff() == 0.0);
  CHECK((frame_block(out.Z.value(), 0, kL) - next.Z).cwiseAbs().maxCoeff() == 0.0);
  CHECK((frame_block(out.L1.value(), 0, kL) - l1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((frame_block(out.L2.value(), 0, kL) - l2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: zero data, zero blocks and masked outputs") {
  const Fixture fx;
  auto net = fx.make(Arch::both, 3);
  const MatrixXd zero = MatrixXd::Zero(20, kL);
  CHECK(net.reconstruct(zero).norm() == 0.0);
  CHECK(fx.make(Arch::identity).reconstruct(zero).norm() == 0.0);

  const MatrixXd B = random_matrix(20, kL, 9);
  ad::Tape t(false);
  const auto z0 = net.forward(t, to_frames({&B}), 0);
  CHECK(z0.value().array().abs().maxCoeff() == 0.0);

  std::vector<MatrixXd> inter;
  const MatrixXd z = net.reconstruct(B, 3, &inter);
  CHECK(inter.size() == 3);
  CHECK((inter.back() - z).norm() == 0.0);
  CHECK(z.allFinite());
  CHECK(z.maxCoeff() <= 0.0);

  CHECK_THROWS_AS(net.reconstruct(MatrixXd::Zero(19, kL)), ConfigError);
  CHECK_THROWS_AS(net.forward(t, to_frames({&B}), -1), ConfigError);
}

TEST_CASE("sub-networks: attention rows are distributions, ConvLSTM output is nonnegative and masked") {
  const Fixture fx;
  auto net = fx.make(Arch::both);
  std::mt19937_64 rng(10);
  ad::Tape t(true);
  auto u = embed_to_grid(t.constant(testing::random_tensor({2 * kL, fx.grid.n()}, rng)), fx.grid, kL);
  ad::Var attention;
  const auto r = net.ssa_forward(t, u, &attention);
  const auto& s = attention.value();
  const int p = s.dim(-1);
  CHECK(p == 4);
  for (std::size_t row = 0; row < s.size() / p; ++row) {
    double sum = 0.0;
    for (int j = 0; j < p; ++j) sum += s[row * p + j];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(outside_mask_is_zero(r.value(), fx.grid));
  const auto h = net.convlstm_forward(t, r);
  CHECK(h.value().shape() == std::vector<int>{2, kL, 8, 8});
  CHECK(h.value().array().minCoeff() >= 0.0);
  CHECK(outside_mask_is_zero(h.value(), fx.grid));
}

TEST_CASE("gradients: end-to-end directional check") {
  const Fixture fx;
  auto net = fx.make(Arch::both, 2);
  const auto samples = testing::synthetic_samples(fx.A, fx.grid, 2, kL, 12);
  const std::vector<std::size_t> idx{0, 1};
  net.params().zero_grad();
  {
    ad::Tape tape(true);
    tape.backward(stage_loss(net, tape, Stage::c, 2, samples, idx));
  }
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  std::vector<ad::Tensor> dir;
  double analytic = 0.0;
  for (const auto& p : net.params().params()) {
    dir.push_back(ad::Tensor::like(p->value));
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      dir.back()[i] = nd(rng);
      analytic += dir.back()[i] * p->grad[i];
    }
  }
  auto shifted = [&](double eps) {
    const auto& ps = net.params().params();
    for (std::size_t k = 0; k < ps.size(); ++k) ps[k]->value.array() += eps * dir[k].array();
    ad::Tape tape(true);
    const double v = stage_loss(net, tape, Stage::c, 2, samples, idx).value()[0];
    for (std::size_t k = 0; k < ps.size(); ++k) ps[k]->value.array() -= eps * dir[k].array();
    return v;
  };
  const double h = 1e-6;
  const double fd = (shifted(h) - shifted(-h)) / (2 * h);
  CHECK(std::abs(fd - analytic) / std::abs(fd) < 1e-4);
  for (const auto& p : net.params().params()) CHECK(p->grad.all_finite());
}

TEST_CASE("gradients: stage A leaves the iteration scalars untouched") {
  const Fixture fx;
  auto net = fx.make(Arch::both, 2);
  const auto samples = testing::synthetic_samples(fx.A, fx.grid, 2, kL, 14);
  net.params().zero_grad();
  ad::Tape tape(true);
  tape.backward(stage_loss(net, tape, Stage::a, 2, samples, {0, 1}));
  for (const char* name : {"eta", "beta1", "beta2", "c1", "c2"}) CHECK(net.params().param(name).grad[0] == 0.0);
  CHECK(net.params().param("a1").grad[0] != 0.0);
  CHECK(net.params().param("ssa.q.w").grad.array().abs().maxCoeff() > 0.0);
}

TEST_CASE("training: deterministic loss curve and checkpoint round trip") {
  const Fixture fx;
  const auto samples = testing::synthetic_samples(fx.A, fx.grid, 6, kL, 15);
  const std::vector<data::MfSample> train(samples.begin(), samples.begin() + 4), val(samples.begin() + 4, samples.end());
  TrainConfig cfg;
  cfg.batch = 2;
  cfg.lr = 1e-2;
  auto run = [&] {
    auto net = fx.make(Arch::both, 2);
    return std::pair{train_stage(net, Stage::a, 3, 2, train, val, cfg), net.reconstruct(samples[0].B)};
  };
  const auto [log1, z1] = run();
  const auto [log2, z2] = run();
  REQUIRE(log1.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(log1[e].train_loss == log2[e].train_loss);
    CHECK(log1[e].val_rmse == log2[e].val_rmse);
    CHECK(log1[e].stage == Stage::a);
    CHECK(log1[e].epoch == static_cast<int>(e) + 1);
  }
  CHECK((z1 - z2).norm() == 0.0);

  auto net = fx.make(Arch::both, 2);
  train_stage(net, Stage::b, 2, 2, train, val, cfg);
  const auto path = std::filesystem::temp_directory_path() / "mfeit_test_net.ckpt";
  net.save(path);
  auto back = MmvNet::load(path, fx.grid, fx.A);
  CHECK(back.config().blocks == 2);
  CHECK(back.parameter_count() == net.parameter_count());
  for (const auto& p : net.params().params()) {
    const auto& q = back.params().param(p->name).value;
    for (std::size_t i = 0; i < q.size(); ++i) REQUIRE(q[i] == static_cast<double>(static_cast<float>(p->value[i])));
  }
  CHECK((back.reconstruct(samples[0].B) - net.reconstruct(samples[0].B)).cwiseAbs().maxCoeff() < 1e-4);
  CHECK_THROWS_AS(MmvNet::load(path, fem::build_pixel_grid(12, 12), fx.A), ConfigError);
  std::filesystem::remove(path);
  std::filesystem::remove(MmvNet::sidecar_path(path));
  CHECK_THROWS_AS(MmvNet::load(path, fx.grid, fx.A), IoError);
}
