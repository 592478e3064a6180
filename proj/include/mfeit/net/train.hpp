#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mfeit/data/dataset.hpp"
#include "mfeit/net/mmv_net.hpp"

namespace mfeit::net {

enum class Stage { a, b, c };
char stage_letter(Stage stage);

struct TrainConfig {
  int batch = 6;
  double lr = 1e-3;
  int epochs_a = 50;
  int epochs_b = 30;
  int epochs_c = 100;
  int blocks = 7;  // K_s for stage C
  std::uint64_t seed = 1;
  bool keep_best = true;  // restore the best-validation parameters at the end of each stage

  void validate() const;
};

struct EpochLog {
  Stage stage = Stage::a;
  int epoch = 0;
  double train_loss = 0.0;  // mean over batches of the per-sample summed squared error
  double val_loss = 0.0;
  double val_rmse = 0.0;    // mean per-frequency RMSE, metric sign domain
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Batched training loss for one stage on samples idx (network sign domain).
ad::Var stage_loss(MmvNet& net, ad::Tape& tape, Stage stage, int blocks, const std::vector<data::MfSample>& samples,
                   const std::vector<std::size_t>& idx);

/// Validation loss and RMSE of the current parameters (evaluation-mode tape).
std::pair<double, double> validate(MmvNet& net, Stage stage, int blocks, const std::vector<data::MfSample>& samples,
                                   int batch = 6);

/// Runs one stage for the given epochs with a fresh Adam state.
std::vector<EpochLog> train_stage(MmvNet& net, Stage stage, int epochs, int blocks,
                                  const std::vector<data::MfSample>& train, const std::vector<data::MfSample>& val,
                                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Stage A (Z-update only, one shot), stage B (K_s = 1) and stage C (full K_s).
std::vector<EpochLog> train(MmvNet& net, const std::vector<data::MfSample>& train,
                            const std::vector<data::MfSample>& val, const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

/// stage,epoch,train_loss,val_loss,val_rmse
void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace mfeit::net
