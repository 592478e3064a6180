#pragma once

#include <cstdint>
#include <vector>

#include "mfeit/fem/mesh.hpp"

namespace mfeit::fem {

/// Square image grid laid over [-R, R]^2 with a disc mask.
///
/// Masked cells are vectorised row-major (row 0 at the top, +y up). That
/// order is the only pixel order used anywhere in the project.
class PixelGrid {
 public:
  /// Cell kept iff its centre lies within kInclusionRadius * min(H, W) / 2 cells of the grid centre.
  /// 1.0 yields exactly 3228 cells on a 64x64 grid.
  static constexpr double kInclusionRadius = 1.0;

  PixelGrid() = default;

  /// Arbitrary mask (e.g. read back from a file); any size, including degenerate ones.
  static PixelGrid from_mask(int height, int width, std::vector<std::uint8_t> mask, double radius = 1.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int n() const { return static_cast<int>(cells_.size()); }
  double radius() const { return radius_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  int cell_of(int index) const { return cells_[index]; }        // vector index -> row*W + col
  int index_of(int cell) const { return index_of_cell_[cell]; }  // -1 outside mask
  Point cell_center(int cell) const;
  Point center(int index) const { return cell_center(cells_[index]); }
  double cell_size() const;

  /// Vector index of the masked cell containing p, or -1.
  int locate(const Point& p) const;

  bool operator==(const PixelGrid& other) const {
    return height_ == other.height_ && width_ == other.width_ && mask_ == other.mask_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  double radius_ = 1.0;
  std::vector<std::uint8_t> mask_;
  std::vector<int> cells_;
  std::vector<int> index_of_cell_;
};

PixelGrid build_pixel_grid(int height, int width, double radius = 1.0);

}  // namespace mfeit::fem
