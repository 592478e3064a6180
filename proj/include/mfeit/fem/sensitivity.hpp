#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "mfeit/fem/forward.hpp"
#include "mfeit/fem/pixel_grid.hpp"

namespace mfeit::fem {

/// Linearised map from normalised pixel conductivity change
/// X = (sigma - sigma_ref) / sigma_ref to normalised voltage change
/// B = (V - V_ref) / V_ref.
struct SensitivityMatrix {
  Eigen::MatrixXd entries;          // m x n
  PixelGrid grid;
  double background_sigma = 1.0;    // S/m
  Eigen::VectorXd reference_frame;  // homogeneous V_ref (empty when loaded from file)

  Eigen::Index m() const { return entries.rows(); }
  Eigen::Index n() const { return entries.cols(); }
};

/// Pixel (vector index) owning each element by centroid membership; -1 outside the mask.
std::vector<int> element_pixels(const TriMesh& mesh, const PixelGrid& grid);

/// Per-element sensitivities dV_k/dsigma_e = -int_e grad u_drive . grad u_meas (m x n_elements),
/// with all fields computed at the homogeneous conductivity.
Eigen::MatrixXd element_sensitivities(const ForwardModel& model, double background_sigma, const StimProtocol& protocol,
                                      Eigen::VectorXd* reference_frame = nullptr);

/// Adjoint-method sensitivity matrix on the pixel grid, scaled to normalised quantities.
SensitivityMatrix sensitivity_matrix(const TriMesh& mesh, double background_sigma, const StimProtocol& protocol,
                                     const PixelGrid& grid);

/// Standalone "MFEITA01" file (float32 entries).
void write_sensitivity(const std::filesystem::path& path, const SensitivityMatrix& a);
SensitivityMatrix read_sensitivity(const std::filesystem::path& path);

}  // namespace mfeit::fem
