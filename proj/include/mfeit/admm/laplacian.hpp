#pragma once

#include <Eigen/Sparse>

#include "mfeit/fem/pixel_grid.hpp"

namespace mfeit::admm {

/// 5-point Laplacian over masked pixels. Neighbours outside the mask are
/// dropped and the diagonal counts only the neighbours that remain, so
/// constants are in the null space and L is symmetric.
Eigen::SparseMatrix<double> laplacian(const fem::PixelGrid& grid);

}  // namespace mfeit::admm
