#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mfeit/admm/admm.hpp"
#include "mfeit/data/dataset.hpp"
#include "mfeit/eval/metrics.hpp"
#include "mfeit/eval/noise.hpp"
#include "mfeit/net/mmv_net.hpp"

namespace mfeit::eval {

enum class Method { gn, admm, net };
std::string method_name(Method method);
Method parse_method(const std::string& name);

/// Per-frequency metrics averaged over the samples of a split.
struct MethodMetrics {
  std::string method;
  std::vector<double> psnr, ssim, rmse;
  double average_psnr() const;
  double average_ssim() const;
  double average_rmse() const;
};

struct MetricReport {
  std::vector<MethodMetrics> methods;
  const MethodMetrics& at(const std::string& method) const;
};

struct ConvergencePoint {
  std::string method;
  int iteration = 0;
  double rmse = 0.0;  // mean over samples of the average per-frequency RMSE
};

struct NoisePoint {
  std::string method;
  double snr_db = 0.0;
  double psnr = 0.0;  // average PSNR over samples and frequencies
};

/// Reconstruction by any of the three methods on a fixed grid and sensitivity matrix.
class Evaluator {
 public:
  /// admm_params.iterations is the classical K; the Gauss-Newton factor is computed once.
  Evaluator(const fem::PixelGrid& grid, const Eigen::MatrixXd& A, admm::AdmmParams admm_params = {},
            net::MmvNet* net = nullptr);

  const admm::AdmmParams& admm_params() const { return admm_; }
  Eigen::MatrixXd gn(const Eigen::MatrixXd& B) const;
  /// ADMM from the Gauss-Newton start; history carries per-iteration RMSE when truth is given.
  admm::AdmmResult admm(const Eigen::MatrixXd& B, const Eigen::MatrixXd* truth = nullptr) const;
  Eigen::MatrixXd reconstruct(Method method, const Eigen::MatrixXd& B);

  /// Metrics over samples; the optional noise is applied to B with a per-sample seed.
  MethodMetrics evaluate(Method method, const std::vector<data::MfSample>& samples,
                         const std::optional<NoiseSpec>& noise = std::nullopt);
  /// Per-iteration RMSE: ADMM over its K iterations, the network over blocks 1..K_s.
  std::vector<ConvergencePoint> convergence(Method method, const std::vector<data::MfSample>& samples);
  std::vector<NoisePoint> noise_sweep(Method method, const std::vector<data::MfSample>& samples,
                                      const std::vector<double>& snrs, std::uint64_t seed);

 private:
  net::MmvNet& require_net();

  const fem::PixelGrid& grid_;
  const Eigen::MatrixXd& a_;
  admm::AdmmParams admm_;
  net::MmvNet* net_;
  std::unique_ptr<admm::GaussNewton> gn_;
};

/// Metrics of one prediction against its truth (n x l, metric sign domain).
MethodMetrics score(const std::string& label, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt,
                    const fem::PixelGrid& grid);

/// method,freq,psnr,ssim,rmse with one row per frequency (freq 1..l) plus an "avg" row per method.
void write_metrics_csv(const std::filesystem::path& path, const MetricReport& report);
/// method,iteration,rmse
void write_convergence_csv(const std::filesystem::path& path, const std::vector<ConvergencePoint>& points);
/// method,snr_db,psnr
void write_noise_csv(const std::filesystem::path& path, const std::vector<NoisePoint>& points);

}  // namespace mfeit::eval
