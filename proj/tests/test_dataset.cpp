#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mfeit/data/dataset.hpp"
#include "mfeit/data/phantom.hpp"
#include "mfeit/error.hpp"

using namespace mfeit;
using namespace mfeit::data;

namespace {

DatasetConfig small_config() {
  DatasetConfig c;
  c.jacobian_level = 2;
  c.forward_level = 3;
  c.height = 16;
  c.width = 16;
  c.n_train = 4;
  c.n_val = 2;
  c.n_test = 2;
  return c;
}

void spit(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("groups: canonical table") {
  const auto g = ConductivityGroups::canonical();
  CHECK(g.groups() == 3);
  CHECK(g.l() == 4);
  CHECK(g.background == 2.0);
  for (int r = 0; r < 3; ++r) {
    for (int f = 1; f < 4; ++f) CHECK(g.value(r, f) > g.value(r, f - 1));
    for (int f = 0; f < 4; ++f) CHECK(g.value(r, f) < g.background);
  }
}

TEST_CASE("phantoms: geometric validity over 10000 draws") {
  fem::SensorGeometry geo;
  PhantomConfig cfg;
  std::array<int, 4> counts{};
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto p = sample_phantom(s, geo, cfg);
    REQUIRE(phantom_is_valid(p, geo, cfg));
    counts[p.inclusions.size()]++;
  }
  CHECK(counts[0] == 0);
  CHECK(counts[1] > 2000);
  CHECK(counts[3] > counts[2]);
  CHECK(counts[2] > counts[1]);
}

TEST_CASE("phantoms: forced counts, distinct groups and determinism") {
  fem::SensorGeometry geo;
  PhantomConfig one;
  one.forced_count = 1;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto p = sample_phantom(s, geo, one);
    REQUIRE(p.inclusions.size() == 1);
    const double d = 2 * p.inclusions[0].radius / (2 * geo.radius);
    CHECK(d >= 0.05);
    CHECK(d <= 0.3);
  }
  PhantomConfig three;
  three.forced_count = 3;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto p = sample_phantom(s, geo, three);
    std::set<int> groups;
    for (const auto& inc : p.inclusions) groups.insert(inc.group);
    CHECK(groups == std::set<int>{0, 1, 2});
  }
  const auto a = sample_phantom(42, geo), b = sample_phantom(42, geo);
  REQUIRE(a.inclusions.size() == b.inclusions.size());
  for (std::size_t i = 0; i < a.inclusions.size(); ++i) {
    CHECK(a.inclusions[i].center.x == b.inclusions[i].center.x);
    CHECK(a.inclusions[i].radius == b.inclusions[i].radius);
    CHECK(a.inclusions[i].group == b.inclusions[i].group);
  }
}

TEST_CASE("phantoms: rasterization uses the group table") {
  const auto grid = fem::build_pixel_grid(32, 32);
  const auto groups = ConductivityGroups::canonical();
  const auto empty = rasterize_phantom(Phantom{}, grid, groups, 0);
  CHECK((empty.array() == 2.0).all());
  Phantom p;
  p.inclusions.push_back({{0.0, 0.0}, 0.3, 0});
  const auto f1 = rasterize_phantom(p, grid, groups, 0);
  CHECK(f1.minCoeff() == 0.01);
  p.inclusions[0].group = 2;
  const auto f4 = rasterize_phantom(p, grid, groups, 3);
  CHECK(f4.minCoeff() == 1.4);
}

TEST_CASE("normalization formulas") {
  Eigen::VectorXd ref(2), mea(2);
  ref << 1.0, 1.0;
  mea << 1.1, 0.9;
  const auto b = normalize_voltage(mea, ref);
  CHECK(b[0] == doctest::Approx(0.1));
  CHECK(b[1] == doctest::Approx(-0.1));
  CHECK(normalize_voltage(ref, ref).norm() == 0.0);
  CHECK((normalize_voltage(2 * ref, ref).array() == 1.0).all());
  Eigen::VectorXd zero_ref(2);
  zero_ref << 1.0, 0.0;
  CHECK_THROWS_AS(normalize_voltage(mea, zero_ref), NumericalError);

  Eigen::VectorXd s(3);
  s << 2.0, 0.01, 1.0;
  const auto x = normalize_conductivity(s, 2.0);
  CHECK(x[0] == 0.0);
  CHECK(x[1] == doctest::Approx(-0.995));
  CHECK(x[2] == doctest::Approx(-0.5));
}

TEST_CASE("simulation: empty phantom, bounds and frequency trend") {
  auto cfg = small_config();
  FemContext ctx(cfg);
  const auto empty = simulate_sample(Phantom{}, ctx);
  CHECK(empty.B.norm() == 0.0);
  CHECK(empty.X.norm() == 0.0);

  fem::SensorGeometry geo;
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = sample_phantom(s, geo);
    const auto smp = simulate_sample(p, ctx);
    CHECK(smp.B.rows() == 104);
    CHECK(smp.B.cols() == 4);
    CHECK(smp.X.rows() == ctx.grid().n());
    CHECK(smp.B.allFinite());
    CHECK(smp.X.maxCoeff() <= 0.0);
    CHECK(smp.X.minCoeff() >= -0.995);
    for (Eigen::Index i = 0; i < smp.X.rows(); ++i) {
      if (smp.X(i, 0) == 0.0) continue;
      for (int f = 1; f < 4; ++f) CHECK(smp.X(i, f) > smp.X(i, f - 1));
    }
  }
}

TEST_CASE("simulation: linearization error of a single small inclusion") {
  DatasetConfig cfg;
  cfg.n_train = cfg.n_val = cfg.n_test = 1;
  FemContext ctx(cfg);
  Phantom p;
  p.inclusions.push_back({{0.3, -0.2}, 0.1, 2});
  const auto s = simulate_sample(p, ctx);
  // The raster must carry the disc's area, otherwise pixelisation dominates the residual.
  const double cell = ctx.grid().cell_size();
  const double pixels = static_cast<double>((s.X.col(0).array() != 0.0).count());
  CHECK(std::abs(pixels * cell * cell - M_PI * 0.01) < cell * cell);
  const double rel = (ctx.sensitivity().entries * s.X - s.B).norm() / s.B.norm();
  CHECK(rel < 0.35);
}

TEST_CASE("simulation: frequency-difference mode references one frequency") {
  auto cfg = small_config();
  cfg.normalization = Normalization::frequency_difference;
  cfg.fd_reference = 1;
  FemContext ctx(cfg);
  const auto s = simulate_sample(sample_phantom(3, fem::SensorGeometry{}), ctx);
  CHECK(s.B.col(1).norm() == 0.0);
  CHECK(s.B.col(0).norm() > 0.0);
}

TEST_CASE("dataset: counts, determinism and round trip") {
  const auto cfg = small_config();
  const auto ds = generate_dataset(cfg, 9);
  CHECK(ds.train.size() == 4);
  CHECK(ds.val.size() == 2);
  CHECK(ds.test.size() == 2);
  CHECK(ds.l() == 4);
  CHECK(ds.m() == 104);
  CHECK(ds.split("validation").size() == 2);
  CHECK_THROWS_AS(ds.split("holdout"), ConfigError);

  const auto again = generate_dataset(cfg, 9);
  CHECK(encode_dataset(ds) == encode_dataset(again));
  const auto other = generate_dataset(cfg, 10);
  CHECK(encode_dataset(ds) != encode_dataset(other));

  const auto path = std::filesystem::temp_directory_path() / "mfeit_test_ds.bin";
  write_dataset(path, ds);
  const auto back = read_dataset(path);
  CHECK(back.grid == ds.grid);
  CHECK((back.A.entries - ds.A.entries).cwiseAbs().maxCoeff() == 0.0);
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    const auto& mine = *split;
    const auto& theirs = split == &ds.train ? back.train : split == &ds.val ? back.val : back.test;
    REQUIRE(mine.size() == theirs.size());
    for (std::size_t i = 0; i < mine.size(); ++i) {
      CHECK((mine[i].B - theirs[i].B).cwiseAbs().maxCoeff() == 0.0);
      CHECK((mine[i].X - theirs[i].X).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  CHECK(encode_dataset(back) == encode_dataset(ds));
  std::filesystem::remove(path);
}

TEST_CASE("dataset: samples do not depend on split sizes") {
  auto cfg = small_config();
  const auto a = generate_dataset(cfg, 3);
  cfg.n_test = 5;
  const auto b = generate_dataset(cfg, 3);
  CHECK((a.train[1].B - b.train[1].B).norm() == 0.0);
  CHECK(sample_seed(3, 0) != sample_seed(3, 1));
  CHECK(sample_seed(3, 0) != sample_seed(4, 0));
}

TEST_CASE("dataset: malformed containers are rejected") {
  auto cfg = small_config();
  cfg.n_train = 1;
  cfg.n_val = cfg.n_test = 0;
  const auto ds = generate_dataset(cfg, 1);
  const auto dir = std::filesystem::temp_directory_path();
  const auto good = encode_dataset(ds);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  spit(dir / "mfeit_bad_magic.bin", bad_magic);
  CHECK_THROWS_AS(read_dataset(dir / "mfeit_bad_magic.bin"), IoError);

  auto truncated = good;
  truncated.resize(truncated.size() - 9);
  spit(dir / "mfeit_truncated.bin", truncated);
  CHECK_THROWS_AS(read_dataset(dir / "mfeit_truncated.bin"), IoError);

  auto flipped = good;
  flipped[flipped.size() / 2] ^= 0x40;
  spit(dir / "mfeit_flipped.bin", flipped);
  CHECK_THROWS_AS(read_dataset(dir / "mfeit_flipped.bin"), IoError);

  CHECK_THROWS_AS(read_dataset(dir / "mfeit_does_not_exist.bin"), IoError);
  for (const char* f : {"mfeit_bad_magic.bin", "mfeit_truncated.bin", "mfeit_flipped.bin"}) std::filesystem::remove(dir / f);
}

TEST_CASE("dataset: invalid configs are rejected") {
  auto cfg = small_config();
  cfg.height = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.forward_level = cfg.jacobian_level;
  CHECK_NOTHROW(cfg.validate());
  cfg.n_train = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
