#include "mfeit/fem/pixel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mfeit/error.hpp"

namespace mfeit::fem {

PixelGrid PixelGrid::from_mask(int height, int width, std::vector<std::uint8_t> mask, double radius) {
  if (height <= 0 || width <= 0) throw ConfigError("grid dimensions must be positive");
  if (mask.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw ConfigError("mask has " + std::to_string(mask.size()) + " cells, expected " + std::to_string(height * width));
  }
  PixelGrid g;
  g.height_ = height;
  g.width_ = width;
  g.radius_ = radius;
  g.mask_ = std::move(mask);
  g.index_of_cell_.assign(g.mask_.size(), -1);
  for (std::size_t c = 0; c < g.mask_.size(); ++c) {
    if (g.mask_[c] > 1) throw ConfigError("mask values must be 0 or 1");
    if (g.mask_[c]) {
      g.index_of_cell_[c] = static_cast<int>(g.cells_.size());
      g.cells_.push_back(static_cast<int>(c));
    }
  }
  return g;
}

double PixelGrid::cell_size() const { return 2.0 * radius_ / std::max(height_, width_); }

Point PixelGrid::cell_center(int cell) const {
  const int row = cell / width_;
  const int col = cell % width_;
  const double h = cell_size();
  return {(col + 0.5 - 0.5 * width_) * h, (0.5 * height_ - row - 0.5) * h};
}

int PixelGrid::locate(const Point& p) const {
  const double h = cell_size();
  const double fc = p.x / h + 0.5 * width_;
  const double fr = 0.5 * height_ - p.y / h;
  if (fc < 0.0 || fr < 0.0) return -1;
  const int col = static_cast<int>(std::floor(fc));
  const int row = static_cast<int>(std::floor(fr));
  if (col >= width_ || row >= height_) return -1;
  return index_of_cell_[row * width_ + col];
}

PixelGrid build_pixel_grid(int height, int width, double radius) {
  if (height < 8 || width < 8) {
    throw ConfigError("pixel grid must be at least 8x8, got " + std::to_string(height) + "x" + std::to_string(width));
  }
  const double r = PixelGrid::kInclusionRadius * 0.5 * std::min(height, width);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const double dy = i + 0.5 - 0.5 * height;
      const double dx = j + 0.5 - 0.5 * width;
      mask[static_cast<std::size_t>(i) * width + j] = (dx * dx + dy * dy <= r * r) ? 1 : 0;
    }
  }
  return PixelGrid::from_mask(height, width, std::move(mask), radius);
}

}  // namespace mfeit::fem
