#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mfeit/fem/mesh.hpp"
#include "mfeit/fem/pixel_grid.hpp"

namespace mfeit::data {

/// Inclusion conductivities per group (rows) and frequency (columns), S/m.
struct ConductivityGroups {
  Eigen::MatrixXd table;      // groups x l
  double background = 2.0;    // frequency independent

  /// The three groups used for the simulated tissue phantoms, f1..f4.
  static ConductivityGroups canonical();

  int groups() const { return static_cast<int>(table.rows()); }
  int l() const { return static_cast<int>(table.cols()); }
  double value(int group, int freq) const { return table(group, freq); }
  void validate() const;
};

struct Inclusion {
  fem::Point center;
  double radius = 0.0;
  int group = 0;
};

struct Phantom {
  std::vector<Inclusion> inclusions;

  /// Group index at p (topmost inclusion), or -1 for background.
  int group_at(const fem::Point& p) const;
};

struct PhantomConfig {
  /// Relative frequency of 1, 2 and 3 inclusions.
  std::array<double, 3> count_weights{3000.0, 4000.0, 5414.0};
  int forced_count = 0;  // 1..3 overrides the weights
  double min_diameter = 0.05;  // fraction of sensor diameter
  double max_diameter = 0.3;
  int max_attempts = 10000;
  int n_groups = 3;
};

/// Draws a phantom: count from the weights, distinct groups without
/// replacement, then rejection sampling (uniform centre over the disc, uniform
/// diameter) until every inclusion is inside the disc and disjoint from the others.
Phantom sample_phantom(std::uint64_t seed, const fem::SensorGeometry& geometry, const PhantomConfig& config = {});

/// Checks count, diameter bounds, containment, disjointness and distinct groups.
bool phantom_is_valid(const Phantom& phantom, const fem::SensorGeometry& geometry, const PhantomConfig& config = {});

/// Pixel conductivities at one frequency (pixel centre rule), canonical vector order.
Eigen::VectorXd rasterize_phantom(const Phantom& phantom, const fem::PixelGrid& grid, const ConductivityGroups& groups,
                                  int freq);

/// Element conductivities at one frequency (element centroid rule).
std::vector<double> element_conductivity(const Phantom& phantom, const fem::TriMesh& mesh,
                                         const ConductivityGroups& groups, int freq);

/// (V_mea - V_ref) / V_ref, elementwise.
Eigen::VectorXd normalize_voltage(const Eigen::VectorXd& v_mea, const Eigen::VectorXd& v_ref);

/// (sigma_mea - sigma_ref) / sigma_ref, elementwise.
Eigen::VectorXd normalize_conductivity(const Eigen::VectorXd& sigma_mea, double sigma_ref);

}  // namespace mfeit::data
