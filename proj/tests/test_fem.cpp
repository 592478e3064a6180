#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "mfeit/data/phantom.hpp"
#include "mfeit/error.hpp"
#include "mfeit/fem/forward.hpp"
#include "mfeit/fem/mesh.hpp"
#include "mfeit/fem/pixel_grid.hpp"
#include "mfeit/fem/protocol.hpp"
#include "mfeit/fem/sensitivity.hpp"

using namespace mfeit;
using namespace mfeit::fem;

namespace {

std::vector<double> uniform_sigma(const TriMesh& mesh, double s) { return std::vector<double>(mesh.element_count(), s); }

// Transfer impedance: drive pair d, read on pair p.
double transfer(const ForwardModel& model, const ForwardModel::System& sys, int d, int p, int ne) {
  const auto u = sys.solve({d, (d + 1) % ne}).node_potentials;
  const auto e = model.electrode_potentials(u);
  return e[p] - e[(p + 1) % ne];
}

}  // namespace

TEST_CASE("mesh: rotational replication and orientation") {
  SensorGeometry g;
  for (int level = 1; level <= 3; ++level) {
    const auto mesh = build_disc_mesh(g, level);
    CHECK(mesh.element_count() % 16 == 0);
    for (std::size_t e = 0; e < mesh.element_count(); ++e) REQUIRE(mesh.signed_area(e) > 0.0);
  }
  const auto l3 = build_disc_mesh(g, 3);
  CHECK(l3.node_count() == 1313);
  CHECK(l3.element_count() == 2464);
  const auto l4 = build_disc_mesh(g, 4);
  CHECK(l4.element_count() == 9696);
}

TEST_CASE("mesh: total area converges to the disc") {
  SensorGeometry g;
  const auto mesh = build_disc_mesh(g, 4);
  double area = 0.0;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) area += mesh.signed_area(e);
  CHECK(area == doctest::Approx(std::numbers::pi).epsilon(2e-3));
}

TEST_CASE("mesh: rotation by one pitch maps nodes onto nodes") {
  SensorGeometry g;
  const auto mesh = build_disc_mesh(g, 2);
  const double a = 2.0 * std::numbers::pi / 16.0;
  for (const auto& p : mesh.nodes) {
    const Point q{std::cos(a) * p.x - std::sin(a) * p.y, std::sin(a) * p.x + std::cos(a) * p.y};
    double best = 1e9;
    for (const auto& r : mesh.nodes) best = std::min(best, std::hypot(q.x - r.x, q.y - r.y));
    REQUIRE(best < 1e-12);
  }
}

TEST_CASE("mesh: overlapping electrodes are rejected") {
  SensorGeometry g;
  g.electrode_coverage = 1.0;
  CHECK_THROWS_AS(build_disc_mesh(g, 2), ConfigError);
  CHECK_THROWS_AS(build_disc_mesh(SensorGeometry{}, 0), ConfigError);
}

TEST_CASE("protocol: adjacent channel counts") {
  const auto p16 = adjacent_protocol(16);
  CHECK(p16.m() == 104);
  CHECK(p16.raw_count == 208);
  const auto p8 = adjacent_protocol(8);
  CHECK(p8.m() == 20);
  CHECK(p8.raw_count == 40);
  for (int d = 0; d < 16; ++d) {
    for (const auto& m : p16.measures[d]) {
      const std::set<int> drive{p16.drives[d].source, p16.drives[d].sink};
      CHECK_FALSE(drive.count(m.plus));
      CHECK_FALSE(drive.count(m.minus));
      CHECK((m.plus + 1) % 16 == m.minus);
    }
  }
}

TEST_CASE("forward: reciprocity, scaling and gauge on the homogeneous disc") {
  SensorGeometry g;
  ForwardModel model(build_disc_mesh(g, 3));
  const auto sigma = uniform_sigma(model.mesh(), 1.0);
  const auto sys = model.assemble(sigma);
  double worst = 0.0;
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) {
      if (j == i || (j + 1) % 16 == i || (i + 1) % 16 == j) continue;
      const double zij = transfer(model, sys, i, j, 16), zji = transfer(model, sys, j, i, 16);
      worst = std::max(worst, std::abs(zij - zji) / std::max(std::abs(zij), std::abs(zji)));
    }
  }
  CHECK(worst < 1e-8);

  const auto u = sys.solve({0, 1}).node_potentials;
  CHECK(std::abs(u.mean()) < 1e-12);

  const auto protocol = adjacent_protocol(16);
  const auto f1 = model.frame(sigma, protocol);
  const auto f2 = model.frame(uniform_sigma(model.mesh(), 2.0), protocol);
  CHECK((f2 - 0.5 * f1).norm() < 1e-12 * f1.norm());
}

TEST_CASE("forward: homogeneous frame is invariant under cyclic electrode shifts") {
  SensorGeometry g;
  const auto protocol = adjacent_protocol(16);
  ForwardModel model(build_disc_mesh(g, 3));
  const auto f = model.frame(uniform_sigma(model.mesh(), 2.0), protocol);
  double worst = 0.0;
  for (int shift = 1; shift < 16; ++shift) {
    for (int k = 0; k < protocol.m(); ++k) worst = std::max(worst, std::abs(f[protocol.rotated_channel(k, shift)] - f[k]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("forward: homogeneous potentials are antisymmetric about the drive bisector") {
  SensorGeometry g;
  ForwardModel model(build_disc_mesh(g, 3));
  const auto sys = model.assemble(uniform_sigma(model.mesh(), 1.0));
  const auto u = sys.solve({0, 1}).node_potentials;
  // Bisector of electrodes 0 and 1 lies at half a pitch.
  const double phi = std::numbers::pi / 16.0;
  const auto& nodes = model.mesh().nodes;
  double worst = 0.0;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const double c = std::cos(2 * phi), s = std::sin(2 * phi);
    const Point r{c * nodes[a].x + s * nodes[a].y, s * nodes[a].x - c * nodes[a].y};
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      if (std::hypot(nodes[b].x - r.x, nodes[b].y - r.y) < 1e-10) {
        worst = std::max(worst, std::abs(u[a] + u[b]));
        break;
      }
    }
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("forward: mesh self-convergence between levels 3 and 4") {
  SensorGeometry g;
  const auto protocol = adjacent_protocol(16);
  const auto m3 = build_disc_mesh(g, 3), m4 = build_disc_mesh(g, 4);
  const auto f3 = forward_frame(m3, uniform_sigma(m3, 2.0), protocol);
  const auto f4 = forward_frame(m4, uniform_sigma(m4, 2.0), protocol);
  CHECK((f3 - f4).norm() / f4.norm() < 0.01);
}

TEST_CASE("forward: non-positive conductivity is rejected") {
  const auto mesh = build_disc_mesh(SensorGeometry{}, 2);
  ForwardModel model(mesh);
  auto sigma = uniform_sigma(mesh, 1.0);
  sigma[3] = 0.0;
  CHECK_THROWS_AS(model.assemble(sigma), ConfigError);
}

TEST_CASE("forward: a conductive inclusion at electrode 0 peaks on a channel touching electrodes 0 or 1") {
  SensorGeometry g;
  const auto protocol = adjacent_protocol(16);
  const auto mesh = build_disc_mesh(g, 4);
  ForwardModel model(mesh);
  const auto ref = model.frame(uniform_sigma(mesh, 2.0), protocol);
  auto sigma = uniform_sigma(mesh, 2.0);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto c = mesh.centroid(e);
    if (std::hypot(c.x - 0.85, c.y - 0.0) < 0.1) sigma[e] = 8.0;
  }
  const auto b = data::normalize_voltage(model.frame(sigma, protocol), ref);
  Eigen::Index k;
  b.cwiseAbs().maxCoeff(&k);
  const auto ch = protocol.channels[k];
  const std::set<int> touched{ch.drive, (ch.drive + 1) % 16, ch.pair, (ch.pair + 1) % 16};
  CHECK((touched.count(0) || touched.count(1)));
}

TEST_CASE("pixel grid: canonical counts and index maps") {
  const auto g64 = build_pixel_grid(64, 64);
  CHECK(g64.n() == 3228);
  const auto g32 = build_pixel_grid(32, 32);
  CHECK(g32.n() == 812);
  for (const auto* g : {&g64, &g32}) {
    int count = 0;
    for (auto v : g->mask()) count += v;
    CHECK(count == g->n());
    for (int i = 0; i < g->n(); ++i) REQUIRE(g->index_of(g->cell_of(i)) == i);
  }
  const auto tiny = PixelGrid::from_mask(2, 2, {0, 0, 0, 0});
  CHECK(tiny.n() == 0);
  const auto full = PixelGrid::from_mask(2, 2, {1, 1, 1, 1});
  CHECK(full.n() == 4);
}

TEST_CASE("pixel grid: row-major order over masked cells") {
  const auto g = build_pixel_grid(16, 16);
  for (int i = 1; i < g.n(); ++i) CHECK(g.cell_of(i) > g.cell_of(i - 1));
  CHECK(g.center(0).y > g.center(g.n() - 1).y);
}

TEST_CASE("sensitivity: entries match finite differences of the normalized forward map") {
  SensorGeometry g;
  const auto protocol = adjacent_protocol(16);
  const auto mesh = build_disc_mesh(g, 3);
  const auto grid = build_pixel_grid(16, 16);
  const double sigma0 = 2.0;
  const auto a = sensitivity_matrix(mesh, sigma0, protocol, grid);
  CHECK(a.m() == 104);
  CHECK(a.n() == grid.n());
  CHECK(a.entries.allFinite());

  ForwardModel model(mesh);
  const auto ref = model.frame(uniform_sigma(mesh, sigma0), protocol);
  const auto owner = element_pixels(mesh, grid);
  std::mt19937_64 rng(11);
  const double h = 1e-3;
  double worst = 0.0;
  for (int t = 0; t < 6; ++t) {
    const int j = static_cast<int>(rng() % grid.n());
    auto up = uniform_sigma(mesh, sigma0), down = up;
    for (std::size_t e = 0; e < owner.size(); ++e) {
      if (owner[e] == j) {
        up[e] = sigma0 * (1 + h);
        down[e] = sigma0 * (1 - h);
      }
    }
    const Eigen::VectorXd fd = (data::normalize_voltage(model.frame(up, protocol), ref) -
                                data::normalize_voltage(model.frame(down, protocol), ref)) / (2 * h);
    for (int s = 0; s < 4; ++s) {
      const int k = static_cast<int>(rng() % protocol.m());
      worst = std::max(worst, std::abs(a.entries(k, j) - fd[k]) / std::abs(fd[k]));
    }
  }
  CHECK(worst < 1e-2);
}

TEST_CASE("sensitivity: uniform perturbation is predicted by the row sums") {
  SensorGeometry g;
  const auto protocol = adjacent_protocol(16);
  const auto mesh = build_disc_mesh(g, 3);
  const auto grid = build_pixel_grid(32, 32);
  const auto a = sensitivity_matrix(mesh, 2.0, protocol, grid);
  ForwardModel model(mesh);
  const auto ref = model.frame(uniform_sigma(mesh, 2.0), protocol);
  const double delta = 0.01;
  const auto owner = element_pixels(mesh, grid);
  auto sigma = uniform_sigma(mesh, 2.0);
  for (std::size_t e = 0; e < owner.size(); ++e) {
    if (owner[e] >= 0) sigma[e] *= 1 + delta;
  }
  const Eigen::VectorXd b = data::normalize_voltage(model.frame(sigma, protocol), ref);
  const Eigen::VectorXd pred = a.entries * Eigen::VectorXd::Constant(grid.n(), delta);
  CHECK((pred - b).norm() / b.norm() < 0.05);
}

TEST_CASE("sensitivity: covariance under a quarter turn") {
  SensorGeometry g;
  const auto protocol = adjacent_protocol(16);
  const auto grid = build_pixel_grid(16, 16);
  const auto a = sensitivity_matrix(build_disc_mesh(g, 3), 2.0, protocol, grid);
  std::mt19937_64 rng(5);
  Eigen::VectorXd x = Eigen::VectorXd::Random(grid.n());
  // Rotating the image by +90 degrees moves pixel (r, c) to (W-1-c, r) and shifts electrodes by 4.
  Eigen::VectorXd xr(grid.n());
  const int w = grid.width();
  for (int i = 0; i < grid.n(); ++i) {
    const int r = grid.cell_of(i) / w, c = grid.cell_of(i) % w;
    const int cell = (w - 1 - c) * w + r;
    REQUIRE(grid.index_of(cell) >= 0);
    xr[grid.index_of(cell)] = x[i];
  }
  const Eigen::VectorXd b = a.entries * x, br = a.entries * xr;
  double worst = 0.0;
  for (int k = 0; k < protocol.m(); ++k) worst = std::max(worst, std::abs(br[protocol.rotated_channel(k, 4)] - b[k]));
  CHECK(worst < 1e-6 * b.cwiseAbs().maxCoeff());
}

TEST_CASE("sensitivity: standalone file round trip") {
  const auto protocol = adjacent_protocol(16);
  const auto grid = build_pixel_grid(8, 8);
  const auto a = sensitivity_matrix(build_disc_mesh(SensorGeometry{}, 2), 2.0, protocol, grid);
  const auto path = std::filesystem::temp_directory_path() / "mfeit_test_sens.bin";
  write_sensitivity(path, a);
  const auto b = read_sensitivity(path);
  CHECK(b.grid == grid);
  CHECK((b.entries - a.entries.cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}
