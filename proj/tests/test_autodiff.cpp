#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "mfeit/ad/adam.hpp"
#include "mfeit/ad/checkpoint.hpp"
#include "mfeit/ad/ops.hpp"
#include "mfeit/error.hpp"
#include "support.hpp"

using namespace mfeit;
using namespace mfeit::ad;
using testing::gradient_error;
using testing::project;
using testing::random_tensor;

TEST_CASE("tensor: shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.dim(-1) == 4);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), ConfigError);
  CHECK(t.reshaped({6, 4}).shape() == std::vector<int>{6, 4});
  CHECK_THROWS_AS(t.reshaped({5, 5}), ConfigError);
}

TEST_CASE("conv2d: identity, window sum and naive oracle") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 3, 5, 6}, rng);
  {
    Tape t(false);
    Tensor w({3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 1.0;
    const auto y = conv2d(t.constant(x), t.constant(w), Var{}, 1, 0).value();
    CHECK(testing::max_abs_diff(y, x) == 0.0);
  }
  {
    Tape t(false);
    const auto y = conv2d(t.constant(Tensor::ones({1, 1, 5, 5})), t.constant(Tensor::ones({1, 1, 3, 3})), Var{}, 1, 1)
                       .value();
    CHECK(y.at(0, 0, 2, 2) == 9.0);
    CHECK(y.at(0, 0, 0, 0) == 4.0);
  }
  for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, {2, 0, 2}, {1, 0, 1}, {2, 1, 3}}) {
    Tape t(false);
    const Tensor w = random_tensor({4, 3, k, k}, rng), b = random_tensor({4}, rng);
    const auto y = conv2d(t.constant(x), t.constant(w), t.constant(b), stride, pad).value();
    const auto oracle = testing::naive_conv(x, w, &b, stride, pad);
    REQUIRE(y.shape() == oracle.shape());
    CHECK(testing::max_abs_diff(y, oracle) < 1e-10);
  }
  Tape t(false);
  CHECK_THROWS_AS(conv2d(t.constant(x), t.constant(Tensor({4, 2, 3, 3})), Var{}, 1, 1), ConfigError);
  CHECK_THROWS_AS(conv2d(t.constant(x), t.constant(Tensor({4, 3, 9, 9})), Var{}, 1, 0), ConfigError);
}

TEST_CASE("conv_transpose2d: adjoint identity, geometry and delta response") {
  std::mt19937_64 rng(2);
  const Tensor w = random_tensor({3, 2, 2, 2}, rng);  // Cin=3 -> Cout=2
  const Tensor x = random_tensor({2, 3, 4, 5}, rng);
  const Tensor y = random_tensor({2, 2, 8, 10}, rng);
  Tape t(false);
  const auto up = conv_transpose2d(t.constant(x), t.constant(w), Var{}, 2).value();
  CHECK(up.shape() == std::vector<int>{2, 2, 8, 10});
  // The forward convolution with the same kernel viewed as O=Cin, C=Cout.
  const auto down = conv2d(t.constant(y), t.constant(w), Var{}, 2, 0).value();
  CHECK(std::abs(testing::dot(up, y) - testing::dot(x, down)) < 1e-10);

  Tensor delta({1, 3, 3, 3});
  delta.at(0, 1, 1, 2) = 1.0;
  const auto stamp = conv_transpose2d(t.constant(delta), t.constant(w.reshaped({3, 2, 2, 2})), Var{}, 2).value();
  double off = 0.0;
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        const bool inside = i / 2 == 1 && j / 2 == 2;
        const double expect = inside ? w.at(1, o, i % 2, j % 2) : 0.0;
        off = std::max(off, std::abs(stamp.at(0, o, i, j) - expect));
      }
  CHECK(off == 0.0);
}

TEST_CASE("batchnorm: batch statistics, running statistics and eval mode") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({4, 2, 3, 3}, rng, -2.0, 5.0);
  Tensor rm({2}), rv({2}, 1.0);
  BatchNormStats stats{&rm, &rv};
  Tape t(true);
  const auto y = batchnorm2d(t.constant(x), t.constant(Tensor::ones({2})), t.constant(Tensor::zeros({2})), stats).value();
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0, xm = 0.0, xv = 0.0;
    const int count = 4 * 9;
    for (int b = 0; b < 4; ++b)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          mean += y.at(b, c, i, j);
          xm += x.at(b, c, i, j);
        }
    mean /= count;
    xm /= count;
    for (int b = 0; b < 4; ++b)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          var += std::pow(y.at(b, c, i, j) - mean, 2);
          xv += std::pow(x.at(b, c, i, j) - xm, 2);
        }
    var /= count;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(rm[c] == doctest::Approx(0.1 * xm));
    CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * xv / (count - 1)));
  }
  Tensor em({2}), ev({2}, 1.0);
  BatchNormStats frozen{&em, &ev};
  Tape e(false);
  const auto z = batchnorm2d(e.constant(x), e.constant(Tensor::ones({2})), e.constant(Tensor::zeros({2})), frozen).value();
  CHECK(testing::max_abs_diff(z, x) < 1e-4);
  CHECK(em[0] == 0.0);
}

TEST_CASE("activations: values") {
  Tape t(false);
  Tensor x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  const auto r = relu(t.constant(x)).value();
  CHECK(r[0] == 0.0);
  CHECK(r[2] == 2.0);
  const auto e = elu(t.constant(x)).value();
  CHECK(e[1] == 0.0);
  CHECK(e[0] == doctest::Approx(std::exp(-1.0) - 1.0));
  const auto s = sigmoid(t.constant(Tensor({2}, std::vector<double>{-800.0, 800.0}))).value();
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 1.0);
  CHECK(softplus_value(-800.0) == 0.0);
  CHECK(softplus_value(800.0) == 800.0);
  const auto th = ad::tanh(t.constant(x)).value();
  CHECK(th[2] == doctest::Approx(std::tanh(2.0)));
}

TEST_CASE("softmax: normalization, uniform rows and shift invariance") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({2, 3, 5}, rng, -3, 3);
  Tape t(false);
  const auto s = softmax(t.constant(x)).value();
  for (int r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 5; ++c) sum += s[r * 5 + c];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  Tensor shifted = x;
  for (int c = 0; c < 5; ++c) shifted[c] += 7.5;
  const auto s2 = softmax(t.constant(shifted)).value();
  CHECK(testing::max_abs_diff(s, s2) < 1e-12);
  const auto u = softmax(t.constant(Tensor({1, 4}, 3.0))).value();
  CHECK(u[2] == doctest::Approx(0.25));
}

TEST_CASE("matmul and bmm: oracle, identity and transposes") {
  std::mt19937_64 rng(5);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape t(false);
  const auto c = matmul(t.constant(a), t.constant(b)).value();
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a[i * 4 + k] * b[k * 2 + j];
      worst = std::max(worst, std::abs(s - c[i * 2 + j]));
    }
  CHECK(worst < 1e-10);
  Tensor eye({4, 4});
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  CHECK(testing::max_abs_diff(matmul(t.constant(a), t.constant(eye)).value(), a) == 0.0);
  const auto ct = matmul(t.constant(b), t.constant(a), true, true).value();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(std::abs(ct[i * 3 + j] - c[j * 2 + i]) < 1e-12);
  const Tensor ba = random_tensor({2, 3, 4}, rng), bb = random_tensor({2, 3, 5}, rng);
  const auto bc = bmm(t.constant(ba), t.constant(bb), true, false).value();
  CHECK(bc.shape() == std::vector<int>{2, 4, 5});
  CHECK_THROWS_AS(matmul(t.constant(a), t.constant(a)), ConfigError);
}

TEST_CASE("mse loss and elementwise shape checks") {
  Tape t(false);
  const Tensor p({2, 3}, 1.0), q({2, 3}, 0.0);
  CHECK(mse_loss(t.constant(p), t.constant(p), 2).value()[0] == 0.0);
  CHECK(mse_loss(t.constant(p), t.constant(q), 1).value()[0] == 6.0);
  CHECK(mse_loss(t.constant(p), t.constant(q), 2).value()[0] == 3.0);
  CHECK_THROWS_AS(add(t.constant(p), t.constant(Tensor({3, 2}))), ConfigError);
  CHECK_THROWS_AS(mse_loss(t.constant(p), t.constant(Tensor({6})), 1), ConfigError);
}

TEST_CASE("gradient checks: smooth ops") {
  std::mt19937_64 rng(6);
  const Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  const Tensor s = random_tensor({1}, rng);
  CHECK(gradient_error(project([](Tape&, auto& v) { return add(v[0], v[1]); }), {a, b}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return sub(v[0], v[1]); }), {a, b}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return mul(v[0], v[1]); }), {a, b}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return scale(v[0], v[1]); }), {s, a}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return scale(v[0], -1.7); }), {a}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return add_scalar(v[0], 0.3); }), {a}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return sigmoid(v[0]); }), {a}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return ad::tanh(v[0]); }), {a}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return softplus(v[0]); }), {a}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return reshape(v[0], {3, 2}); }), {a}) < 1e-6);
  CHECK(gradient_error([](Tape&, auto& v) { return sum(v[0]); }, {a}) < 1e-6);
  CHECK(gradient_error([](Tape&, auto& v) { return mse_loss(v[0], v[1], 3); }, {a, b}) < 1e-6);

  const Tensor m1 = random_tensor({3, 4}, rng), m2 = random_tensor({4, 2}, rng), m3 = random_tensor({3, 2}, rng);
  CHECK(gradient_error(project([](Tape&, auto& v) { return matmul(v[0], v[1]); }), {m1, m2}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return matmul(v[0], v[1], true, false); }), {m1, m3}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return matmul(v[1], v[0], false, true); }), {m2, m3}) < 1e-6);
  const Tensor b1 = random_tensor({2, 3, 4}, rng), b2 = random_tensor({2, 3, 5}, rng);
  CHECK(gradient_error(project([](Tape&, auto& v) { return bmm(v[0], v[1], true, false); }), {b1, b2}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return softmax(v[0]); }), {b1}) < 1e-6);

  const Tensor c1 = random_tensor({2, 2, 3, 3}, rng), c2 = random_tensor({2, 1, 3, 3}, rng);
  CHECK(gradient_error(project([](Tape&, auto& v) { return concat_channels({v[0], v[1]}); }), {c1, c2}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return slice_channels(v[0], 1, 1); }), {c1}) < 1e-6);
}

TEST_CASE("gradient checks: convolutions and batchnorm") {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({2, 3, 6, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4}, rng);
  CHECK(gradient_error(project([](Tape&, auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); }), {x, w, b}) < 1e-6);
  const Tensor w2 = random_tensor({2, 3, 2, 2}, rng);
  CHECK(gradient_error(project([](Tape&, auto& v) { return conv2d(v[0], v[1], Var{}, 2, 0); }), {x, w2}) < 1e-6);
  const Tensor wt = random_tensor({3, 2, 2, 2}, rng), bt = random_tensor({2}, rng);
  CHECK(gradient_error(project([](Tape&, auto& v) { return conv_transpose2d(v[0], v[1], v[2], 2); }), {x, wt, bt}) <
        1e-6);

  const Tensor g = random_tensor({3}, rng, 0.5, 1.5), beta = random_tensor({3}, rng);
  auto bn = [](Tape&, auto& v) {
    static Tensor rm({3}), rv({3}, 1.0);
    return batchnorm2d(v[0], v[1], v[2], BatchNormStats{&rm, &rv});
  };
  CHECK(gradient_error(project(bn), {x, g, beta}, 1e-5, true) < 1e-4);
  CHECK(gradient_error(project(bn), {x, g, beta}, 1e-5, false) < 1e-6);
}

TEST_CASE("gradient checks: kinked activations away from the kink") {
  std::mt19937_64 rng(8);
  Tensor x = random_tensor({3, 4}, rng, 0.1, 1.0);
  for (std::size_t i = 0; i < x.size(); i += 2) x[i] = -x[i];
  CHECK(gradient_error(project([](Tape&, auto& v) { return relu(v[0]); }), {x}) < 1e-6);
  CHECK(gradient_error(project([](Tape&, auto& v) { return elu(v[0]); }), {x}) < 1e-6);
}

TEST_CASE("backward: simple losses, untouched parameters and reuse") {
  ParameterSet ps;
  auto& theta = ps.add("theta", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
  auto& idle = ps.add("idle", Tensor({2}, 1.0));
  {
    Tape t;
    Var loss = sum(t.param(theta));
    t.backward(loss);
    CHECK((theta.grad.array() == 1.0).all());
    CHECK((idle.grad.array() == 0.0).all());
    CHECK_THROWS_AS(t.backward(loss), ConfigError);
  }
  ps.zero_grad();
  {
    Tape t;
    Var p = t.param(theta);
    CHECK(t.param(theta).id == p.id);
    t.backward(sum(mul(p, p)));
    for (int i = 0; i < 3; ++i) CHECK(theta.grad[i] == 2 * theta.value[i]);
  }
  Tape t;
  CHECK_THROWS_AS(t.backward(t.param(theta)), ConfigError);
  CHECK_THROWS_AS(ps.add("theta", Tensor({1})), ConfigError);
}

TEST_CASE("adam: zero gradient, first step and a quadratic bowl") {
  ParameterSet ps;
  auto& p = ps.add("p", Tensor({2}, std::vector<double>{1.0, -1.0}));
  Adam adam({1e-2});
  adam.step(ps);
  CHECK(p.value[0] == 1.0);
  CHECK(adam.steps() == 1);

  Adam fresh({1e-2});
  p.grad[0] = 3.0;
  p.grad[1] = -0.2;
  fresh.step(ps);
  CHECK(p.value[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-1.0 + 1e-2).epsilon(1e-6));
  CHECK(p.grad[0] == 0.0);

  double prev = 1e9;
  Adam bowl({1e-2});
  for (int i = 0; i < 100; ++i) {
    Tape t;
    Var v = t.param(p);
    Var loss = sum(mul(v, v));
    const double value = loss.value()[0];
    CHECK(value < prev);
    prev = value;
    t.backward(loss);
    bowl.step(ps);
  }
}

TEST_CASE("checkpoint: round trip, mismatches and corruption") {
  ParameterSet ps;
  ps.add("a.w", Tensor({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6.5}));
  ps.add("b", Tensor({1}, 0.25));
  ps.add_buffer("a.running_var", Tensor({2}, 1.5));
  const auto path = std::filesystem::temp_directory_path() / "mfeit_test.ckpt";
  save_checkpoint(path, ps);

  ParameterSet back;
  back.add("a.w", Tensor({2, 3}));
  back.add("b", Tensor({1}));
  back.add_buffer("a.running_var", Tensor({2}));
  load_checkpoint(path, back);
  CHECK(back.param("a.w").value[5] == 6.5);
  CHECK(back.buffer("a.running_var")[1] == 1.5);

  ParameterSet wrong;
  wrong.add("a.w", Tensor({3, 2}));
  wrong.add("b", Tensor({1}));
  wrong.add_buffer("a.running_var", Tensor({2}));
  CHECK_THROWS_AS(load_checkpoint(path, wrong), IoError);

  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), {}};
  in.close();
  bytes[bytes.size() / 2] ^= 1;
  std::ofstream(path, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(load_checkpoint(path, back), IoError);
  std::filesystem::remove(path);
}
