#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "mfeit/fem/pixel_grid.hpp"

namespace mfeit::eval {

/// PSNR reported when the squared error is exactly zero.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

/// Per-frequency values and their arithmetic mean.
struct PerFrequency {
  std::vector<double> values;
  double average = 0.0;
};

PerFrequency rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt);
PerFrequency psnr(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt, double peak = 1.0);

/// 10 log10(peak^2 / mse), kInfinitePsnr for mse == 0.
double psnr_from_mse(double mse, double peak = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over the windows lying entirely inside the grid mask.
/// pred and gt are n x l in the grid's vector order.
PerFrequency ssim(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt, const fem::PixelGrid& grid,
                  const SsimOptions& options = {});

/// Single frame on an H x W row-major raster; only windows with every pixel masked are averaged.
double ssim_frame(const std::vector<double>& a, const std::vector<double>& b, int height, int width,
                  const std::vector<std::uint8_t>& mask, const SsimOptions& options = {});

/// Scatter a masked vector into an H x W row-major raster (zeros outside the mask).
std::vector<double> embed(const Eigen::VectorXd& values, const fem::PixelGrid& grid);

}  // namespace mfeit::eval
