#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace mfeit::eval {

struct NoiseSpec {
  double snr_db = 40.0;
  std::uint64_t seed = 0;
};

/// Adds white Gaussian noise to each column b with std ||b|| / sqrt(m) * 10^(-snr/20).
/// An infinite SNR returns B unchanged.
Eigen::MatrixXd add_noise(const Eigen::MatrixXd& B, const NoiseSpec& spec);

}  // namespace mfeit::eval
