#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "mfeit/admm/admm.hpp"
#include "mfeit/data/dataset.hpp"
#include "mfeit/net/mmv_net.hpp"
#include "mfeit/net/train.hpp"

namespace mfeit::cli {

struct EvalSettings {
  std::vector<double> snrs{45.0, 40.0, 35.0, 30.0};
  std::uint64_t noise_seed = 7;
  std::vector<int> iter_sweep{5, 6, 7, 8, 9};
};

/// Every configurable knob of a run. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  data::DatasetConfig dataset;
  admm::AdmmParams admm;
  net::NetConfig net;
  net::TrainConfig train;
  EvalSettings eval;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;
};

}  // namespace mfeit::cli
