#include "mfeit/net/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "mfeit/ad/adam.hpp"
#include "mfeit/error.hpp"

namespace mfeit::net {

char stage_letter(Stage stage) {
  switch (stage) {
    case Stage::a: return 'A';
    case Stage::b: return 'B';
    case Stage::c: return 'C';
  }
  return '?';
}

void TrainConfig::validate() const {
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (epochs_a < 0 || epochs_b < 0 || epochs_c < 0) throw ConfigError("epoch counts must be non-negative");
  if (blocks < 1) throw ConfigError("K_s must be >= 1");
}

namespace {

struct Batch {
  ad::Tensor b;       // network-domain measurement frames
  ad::Tensor target;  // network-domain ground-truth frames
};

Batch make_batch(const MmvNet& net, const std::vector<data::MfSample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<Eigen::MatrixXd> bs, xs;
  bs.reserve(idx.size());
  xs.reserve(idx.size());
  const bool flip = net.config().sign_convention;
  for (std::size_t i : idx) {
    const auto& s = samples.at(i);
    bs.push_back(flip ? sign_convention(s.B, SignDirection::to_network) : s.B);
    xs.push_back(flip ? sign_convention(s.X, SignDirection::to_network) : s.X);
  }
  std::vector<const Eigen::MatrixXd*> pb, px;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    pb.push_back(&bs[k]);
    px.push_back(&xs[k]);
  }
  return {to_frames(pb), to_frames(px)};
}

ad::Var prediction(MmvNet& net, ad::Tape& tape, Stage stage, int blocks, const ad::Tensor& b) {
  switch (stage) {
    case Stage::a: return net.one_shot(tape, b);
    case Stage::b: return net.forward(tape, b, 1);
    case Stage::c: return net.forward(tape, b, blocks);
  }
  return {};
}

}  // namespace

ad::Var stage_loss(MmvNet& net, ad::Tape& tape, Stage stage, int blocks, const std::vector<data::MfSample>& samples,
                   const std::vector<std::size_t>& idx) {
  const Batch batch = make_batch(net, samples, idx);
  ad::Var z = prediction(net, tape, stage, blocks, batch.b);
  return ad::mse_loss(z, tape.constant(batch.target), static_cast<int>(idx.size()));
}

std::pair<double, double> validate(MmvNet& net, Stage stage, int blocks, const std::vector<data::MfSample>& samples,
                                   int batch) {
  if (samples.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double loss = 0.0, rmse = 0.0;
  const int l = net.l();
  const bool flip = net.config().sign_convention;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + batch); ++i) idx.push_back(i);
    ad::Tape tape(false);
    const Batch bt = make_batch(net, samples, idx);
    ad::Var z = prediction(net, tape, stage, blocks, bt.b);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Eigen::MatrixXd zk = frame_block(z.value(), static_cast<int>(k), l);
      if (flip) zk = sign_convention(zk, SignDirection::from_network);
      const Eigen::MatrixXd& gt = samples[idx[k]].X;
      loss += (zk - gt).squaredNorm();
      rmse += admm::mean_column_rmse(zk, gt);
    }
  }
  const double count = static_cast<double>(samples.size());
  return {loss / count, rmse / count};
}

std::vector<EpochLog> train_stage(MmvNet& net, Stage stage, int epochs, int blocks,
                                  const std::vector<data::MfSample>& train, const std::vector<data::MfSample>& val,
                                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw ConfigError("training split is empty");
  ad::Adam adam({config.lr});
  std::mt19937_64 rng(config.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<unsigned>(stage) + 1)));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> log;
  double best = std::numeric_limits<double>::infinity();
  ad::ParameterSet best_params;
  net.params().zero_grad();
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + std::min(order.size(), start + config.batch));
      ad::Tape tape(true);
      ad::Var loss = stage_loss(net, tape, stage, blocks, train, idx);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError(std::string("non-finite loss in stage ") + stage_letter(stage) + ", epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batches + 1));
      }
      tape.backward(loss);
      adam.step(net.params());
      total += value;
      ++batches;
    }
    EpochLog entry{stage, epoch, total / batches, 0.0, 0.0};
    std::tie(entry.val_loss, entry.val_rmse) = validate(net, stage, blocks, val, config.batch);
    const double score = val.empty() ? entry.train_loss : entry.val_loss;
    if (config.keep_best && score < best) {
      best = score;
      best_params = net.params();
    }
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  if (config.keep_best && !best_params.params().empty()) {
    net.params() = best_params;
    net.params().zero_grad();
  }
  return log;
}

std::vector<EpochLog> train(MmvNet& net, const std::vector<data::MfSample>& train_set,
                            const std::vector<data::MfSample>& val, const TrainConfig& config,
                            const EpochCallback& on_epoch) {
  config.validate();
  std::vector<EpochLog> log;
  for (auto [stage, epochs, blocks] : {std::tuple{Stage::a, config.epochs_a, 1}, {Stage::b, config.epochs_b, 1},
                                       {Stage::c, config.epochs_c, config.blocks}}) {
    auto part = train_stage(net, stage, epochs, blocks, train_set, val, config, on_epoch);
    log.insert(log.end(), part.begin(), part.end());
  }
  return log;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(10);
  out << "stage,epoch,train_loss,val_loss,val_rmse\n";
  for (const auto& e : log) {
    out << stage_letter(e.stage) << ',' << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_rmse
        << '\n';
  }
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace mfeit::net
