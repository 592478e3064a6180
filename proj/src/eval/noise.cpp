#include "mfeit/eval/noise.hpp"

#include <cmath>
#include <random>

#include "mfeit/error.hpp"

namespace mfeit::eval {

Eigen::MatrixXd add_noise(const Eigen::MatrixXd& B, const NoiseSpec& spec) {
  if (std::isnan(spec.snr_db) || spec.snr_db == -std::numeric_limits<double>::infinity()) {
    throw ConfigError("SNR must be a number above -inf");
  }
  if (std::isinf(spec.snr_db) || B.size() == 0) return B;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out = B;
  const double scale = std::pow(10.0, -spec.snr_db / 20.0) / std::sqrt(static_cast<double>(B.rows()));
  for (Eigen::Index f = 0; f < B.cols(); ++f) {
    const double sd = B.col(f).norm() * scale;
    for (Eigen::Index i = 0; i < B.rows(); ++i) out(i, f) += sd * normal(rng);
  }
  return out;
}

}  // namespace mfeit::eval
