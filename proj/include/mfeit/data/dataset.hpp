#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfeit/data/phantom.hpp"
#include "mfeit/fem/forward.hpp"
#include "mfeit/fem/sensitivity.hpp"

namespace mfeit::data {

enum class Normalization {
  time_difference,       // reference = homogeneous background at the same frequency
  frequency_difference,  // reference = the same phantom at a reference frequency
};

struct DatasetConfig {
  fem::SensorGeometry sensor;
  int jacobian_level = 4;
  int forward_level = 5;  // one level above the Jacobian mesh
  int height = 32;
  int width = 32;
  int n_train = 200;
  int n_val = 40;
  int n_test = 40;
  PhantomConfig phantom;
  ConductivityGroups groups = ConductivityGroups::canonical();
  Normalization normalization = Normalization::time_difference;
  int fd_reference = 0;  // frequency index used as reference in FD mode

  void validate() const;
  /// The 64x64 / 8,700 / 1,900 / 1,814 layout.
  static DatasetConfig paper_scale();
};

/// One phantom: B (m x l) normalised voltage change and X (n x l) normalised conductivity change.
struct MfSample {
  Eigen::MatrixXd B;
  Eigen::MatrixXd X;
  Phantom phantom;  // empty when read back from a container
};

/// Meshes, protocol, pixel grid, sensitivity matrix and reference frames, built once.
class FemContext {
 public:
  explicit FemContext(const DatasetConfig& config);

  const DatasetConfig& config() const { return config_; }
  const fem::StimProtocol& protocol() const { return protocol_; }
  const fem::PixelGrid& grid() const { return grid_; }
  const fem::SensitivityMatrix& sensitivity() const { return a_; }
  const fem::ForwardModel& forward_model() const { return *forward_; }
  const Eigen::VectorXd& reference_frame() const { return v_ref_; }

 private:
  DatasetConfig config_;
  fem::StimProtocol protocol_;
  fem::PixelGrid grid_;
  fem::SensitivityMatrix a_;
  std::unique_ptr<fem::ForwardModel> forward_;
  Eigen::VectorXd v_ref_;  // homogeneous frame on the forward mesh
};

/// Simulates every frequency of one phantom on the forward mesh and normalises it.
MfSample simulate_sample(const Phantom& phantom, const FemContext& context);

struct Dataset {
  std::vector<MfSample> train;
  std::vector<MfSample> val;
  std::vector<MfSample> test;
  fem::PixelGrid grid;
  fem::SensitivityMatrix A;
  ConductivityGroups groups;
  std::uint64_t seed = 0;
  DatasetConfig config;

  int m() const { return static_cast<int>(A.m()); }
  int n() const { return grid.n(); }
  int l() const { return groups.l(); }
  const std::vector<MfSample>& split(const std::string& name) const;
};

/// Per-sample seed; generation order cannot change sample content.
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index);

/// All stored values (A, B, X, groups) are rounded to float32 so a write/read round trip is exact.
Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed);

/// Little-endian "MFEIT001" container with trailing FNV-1a checksum.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);

/// Sidecar JSON next to the container: seed, config echo and creation parameters.
void write_manifest(const std::filesystem::path& path, const Dataset& dataset);

}  // namespace mfeit::data
