#include "mfeit/data/dataset.hpp"

#include <fstream>
#include <string>

#include "json.hpp"
#include "mfeit/error.hpp"
#include "mfeit/io/binary.hpp"
#include "mfeit/parallel.hpp"

namespace mfeit::data {

namespace {

constexpr char kMagic[] = "MFEIT001";
constexpr std::uint32_t kVersion = 1;
constexpr int kStoredGroups = 3;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void round_to_float(Eigen::MatrixXd& m) {
  m = m.cast<float>().cast<double>();
}

// Column-major storage already is frequency-major: column f is contiguous.
void put_matrix(io::ByteWriter& w, const Eigen::MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) w.f32(static_cast<float>(m(r, c)));
  }
}

Eigen::MatrixXd get_matrix(io::ByteReader& r, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, c) = r.f32();
  }
  return m;
}

}  // namespace

const std::vector<MfSample>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val" || name == "validation") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed) {
  FemContext ctx(config);
  Dataset ds;
  ds.config = config;
  ds.seed = seed;
  ds.grid = ctx.grid();
  ds.A = ctx.sensitivity();
  round_to_float(ds.A.entries);
  ds.groups = config.groups;
  round_to_float(ds.groups.table);
  ds.groups.background = static_cast<float>(ds.groups.background);

  const std::size_t total = static_cast<std::size_t>(config.n_train) + config.n_val + config.n_test;
  std::vector<MfSample> all(total);
  parallel_for(total, [&](std::size_t i) {
    const Phantom ph = sample_phantom(sample_seed(seed, i), config.sensor, config.phantom);
    MfSample s = simulate_sample(ph, ctx);
    round_to_float(s.B);
    round_to_float(s.X);
    all[i] = std::move(s);
  });
  auto it = std::make_move_iterator(all.begin());
  ds.train.assign(it, it + config.n_train);
  it += config.n_train;
  ds.val.assign(it, it + config.n_val);
  it += config.n_val;
  ds.test.assign(it, it + config.n_test);
  return ds;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  if (ds.groups.groups() != kStoredGroups) throw ConfigError("the container stores exactly 3 conductivity groups");
  const int m = ds.m();
  const int n = ds.n();
  const int l = ds.l();
  if (ds.A.n() != n) throw ConfigError("sensitivity matrix and grid disagree on n");
  io::ByteWriter w;
  w.magic(kMagic);
  for (std::uint32_t v : {kVersion, static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(n),
                          static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(ds.grid.height()),
                          static_cast<std::uint32_t>(ds.grid.width()), static_cast<std::uint32_t>(ds.train.size()),
                          static_cast<std::uint32_t>(ds.val.size()), static_cast<std::uint32_t>(ds.test.size())}) {
    w.u32(v);
  }
  w.bytes(ds.grid.mask());
  for (Eigen::Index k = 0; k < m; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) w.f32(static_cast<float>(ds.A.entries(k, j)));
  }
  for (int g = 0; g < kStoredGroups; ++g) {
    for (int f = 0; f < l; ++f) w.f32(static_cast<float>(ds.groups.value(g, f)));
  }
  w.f32(static_cast<float>(ds.groups.background));
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& s : *split) {
      if (s.B.rows() != m || s.B.cols() != l || s.X.rows() != n || s.X.cols() != l) {
        throw ConfigError("sample shape does not match the dataset header");
      }
      put_matrix(w, s.B);
      put_matrix(w, s.X);
    }
  }
  w.checksum();
  return w.buffer();
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const auto bytes = encode_dataset(dataset);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto r = io::ByteReader::load(path);
  r.expect_magic(kMagic);
  const std::size_t version_at = r.offset();
  const auto version = r.u32();
  if (version != kVersion) {
    throw IoError("unsupported container version " + std::to_string(version) + " at offset " +
                  std::to_string(version_at));
  }
  const auto m = r.u32();
  const auto n = r.u32();
  const auto l = r.u32();
  const auto h = r.u32();
  const auto w = r.u32();
  const auto n_train = r.u32();
  const auto n_val = r.u32();
  const auto n_test = r.u32();
  if (h == 0 || w == 0 || h > 4096 || w > 4096 || l == 0 || l > 64 || m == 0) {
    throw IoError("implausible header fields before offset " + std::to_string(r.offset()));
  }
  // Body length must match the header exactly: mask + A + groups + samples + checksum.
  const std::uint64_t floats = static_cast<std::uint64_t>(m) * n + kStoredGroups * l + 1 +
                               (static_cast<std::uint64_t>(n_train) + n_val + n_test) * (m + n) * l;
  const std::uint64_t expected = r.offset() + static_cast<std::uint64_t>(h) * w + 4 * floats + 8;
  if (expected != r.size()) {
    throw IoError("container length " + std::to_string(r.size()) + " disagrees with header (expected " +
                  std::to_string(expected) + ") at offset " + std::to_string(r.offset()));
  }

  Dataset ds;
  const std::size_t mask_at = r.offset();
  ds.grid = fem::PixelGrid::from_mask(static_cast<int>(h), static_cast<int>(w), r.bytes(static_cast<std::size_t>(h) * w));
  if (static_cast<std::uint32_t>(ds.grid.n()) != n) {
    throw IoError("mask at offset " + std::to_string(mask_at) + " has " + std::to_string(ds.grid.n()) +
                  " cells, header says n=" + std::to_string(n));
  }
  ds.A.grid = ds.grid;
  ds.A.entries.resize(m, n);
  for (std::uint32_t k = 0; k < m; ++k) {
    for (std::uint32_t j = 0; j < n; ++j) ds.A.entries(k, j) = r.f32();
  }
  ds.groups.table.resize(kStoredGroups, l);
  for (int g = 0; g < kStoredGroups; ++g) {
    for (std::uint32_t f = 0; f < l; ++f) ds.groups.table(g, f) = r.f32();
  }
  ds.groups.background = r.f32();
  ds.A.background_sigma = ds.groups.background;
  for (auto [split, count] : {std::pair{&ds.train, n_train}, {&ds.val, n_val}, {&ds.test, n_test}}) {
    split->resize(count);
    for (auto& s : *split) {
      s.B = get_matrix(r, m, l);
      s.X = get_matrix(r, n, l);
    }
  }
  r.verify_checksum();
  r.expect_end();

  ds.config.height = static_cast<int>(h);
  ds.config.width = static_cast<int>(w);
  ds.config.n_train = static_cast<int>(n_train);
  ds.config.n_val = static_cast<int>(n_val);
  ds.config.n_test = static_cast<int>(n_test);
  ds.config.groups = ds.groups;
  return ds;
}

void write_manifest(const std::filesystem::path& path, const Dataset& ds) {
  const auto& c = ds.config;
  nlohmann::json j;
  j["format"] = kMagic;
  j["version"] = kVersion;
  j["seed"] = ds.seed;
  j["m"] = ds.m();
  j["n"] = ds.n();
  j["l"] = ds.l();
  j["config"] = {
      {"sensor", {{"radius", c.sensor.radius}, {"n_electrodes", c.sensor.n_electrodes},
                  {"electrode_coverage", c.sensor.electrode_coverage}}},
      {"jacobian_level", c.jacobian_level},
      {"forward_level", c.forward_level},
      {"height", c.height},
      {"width", c.width},
      {"n_train", c.n_train},
      {"n_val", c.n_val},
      {"n_test", c.n_test},
      {"normalization", c.normalization == Normalization::time_difference ? "td" : "fd"},
      {"fd_reference", c.fd_reference},
      {"phantom", {{"count_weights", c.phantom.count_weights}, {"forced_count", c.phantom.forced_count},
                   {"min_diameter", c.phantom.min_diameter}, {"max_diameter", c.phantom.max_diameter},
                   {"max_attempts", c.phantom.max_attempts}}},
  };
  nlohmann::json table = nlohmann::json::array();
  for (int g = 0; g < ds.groups.groups(); ++g) {
    std::vector<double> row(ds.groups.l());
    for (int f = 0; f < ds.groups.l(); ++f) row[f] = ds.groups.value(g, f);
    table.push_back(row);
  }
  j["config"]["groups"] = table;
  j["config"]["background_sigma"] = ds.groups.background;
  j["seed_rule"] = "splitmix64 hash of (seed, global sample index); indices run train, val, test";
  j["value_precision"] = "float32";
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace mfeit::data
