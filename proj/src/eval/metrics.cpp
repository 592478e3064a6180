#include "mfeit/eval/metrics.hpp"

#include <cmath>
#include <numeric>

#include "mfeit/error.hpp"

namespace mfeit::eval {

namespace {

void check_shapes(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw ConfigError("metric shape mismatch: " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                      " vs " + std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
  }
  if (pred.rows() == 0 || pred.cols() == 0) throw ConfigError("metrics need a non-empty image");
}

PerFrequency finish(std::vector<double> values) {
  PerFrequency out;
  out.average = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  out.values = std::move(values);
  return out;
}

std::vector<double> column_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt) {
  check_shapes(pred, gt);
  std::vector<double> mse(pred.cols());
  for (Eigen::Index f = 0; f < pred.cols(); ++f) {
    mse[f] = (pred.col(f) - gt.col(f)).squaredNorm() / static_cast<double>(pred.rows());
  }
  return mse;
}

std::vector<double> gaussian_window(const SsimOptions& o) {
  std::vector<double> w(static_cast<std::size_t>(o.window) * o.window);
  const double c = (o.window - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < o.window; ++i) {
    for (int j = 0; j < o.window; ++j) {
      const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
      total += w[i * o.window + j] = std::exp(-d2 / (2.0 * o.sigma * o.sigma));
    }
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

PerFrequency rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt) {
  auto mse = column_mse(pred, gt);
  for (double& v : mse) v = std::sqrt(v);
  return finish(std::move(mse));
}

PerFrequency psnr(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt, double peak) {
  if (!(peak > 0.0)) throw ConfigError("PSNR peak must be positive");
  auto mse = column_mse(pred, gt);
  for (double& v : mse) v = psnr_from_mse(v, peak);
  return finish(std::move(mse));
}

std::vector<double> embed(const Eigen::VectorXd& values, const fem::PixelGrid& grid) {
  if (values.size() != grid.n()) throw ConfigError("image length does not match the grid");
  std::vector<double> out(static_cast<std::size_t>(grid.height()) * grid.width(), 0.0);
  for (int i = 0; i < grid.n(); ++i) out[grid.cell_of(i)] = values[i];
  return out;
}

double ssim_frame(const std::vector<double>& a, const std::vector<double>& b, int height, int width,
                  const std::vector<std::uint8_t>& mask, const SsimOptions& o) {
  const std::size_t cells = static_cast<std::size_t>(height) * width;
  if (a.size() != cells || b.size() != cells || mask.size() != cells) throw ConfigError("SSIM raster size mismatch");
  if (o.window < 1 || height < o.window || width < o.window) {
    throw ConfigError("SSIM needs a grid of at least " + std::to_string(o.window) + "x" + std::to_string(o.window));
  }
  const auto w = gaussian_window(o);
  const double c1 = std::pow(o.k1 * o.dynamic_range, 2);
  const double c2 = std::pow(o.k2 * o.dynamic_range, 2);
  double total = 0.0;
  int windows = 0;
  for (int r0 = 0; r0 + o.window <= height; ++r0) {
    for (int q0 = 0; q0 + o.window <= width; ++q0) {
      bool inside = true;
      for (int i = 0; i < o.window && inside; ++i) {
        for (int j = 0; j < o.window; ++j) {
          if (!mask[(r0 + i) * width + q0 + j]) {
            inside = false;
            break;
          }
        }
      }
      if (!inside) continue;
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < o.window; ++i) {
        for (int j = 0; j < o.window; ++j) {
          const std::size_t p = (r0 + i) * width + q0 + j;
          const double g = w[i * o.window + j];
          mx += g * a[p];
          my += g * b[p];
        }
      }
      for (int i = 0; i < o.window; ++i) {
        for (int j = 0; j < o.window; ++j) {
          const std::size_t p = (r0 + i) * width + q0 + j;
          const double g = w[i * o.window + j];
          const double dx = a[p] - mx, dy = b[p] - my;
          sxx += g * dx * dx;
          syy += g * dy * dy;
          sxy += g * dx * dy;
        }
      }
      total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      ++windows;
    }
  }
  if (windows == 0) throw ConfigError("no SSIM window fits entirely inside the mask");
  return total / windows;
}

PerFrequency ssim(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt, const fem::PixelGrid& grid,
                  const SsimOptions& options) {
  check_shapes(pred, gt);
  if (pred.rows() != grid.n()) throw ConfigError("image length does not match the grid");
  std::vector<double> values(pred.cols());
  for (Eigen::Index f = 0; f < pred.cols(); ++f) {
    values[f] = ssim_frame(embed(pred.col(f), grid), embed(gt.col(f), grid), grid.height(), grid.width(),
                           grid.mask(), options);
  }
  return finish(std::move(values));
}

}  // namespace mfeit::eval
