#pragma once

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mfeit/fem/mesh.hpp"
#include "mfeit/fem/protocol.hpp"

namespace mfeit::fem {

struct FieldSolution {
  Eigen::VectorXd node_potentials;  // zero-mean gauge
  int drive_index = -1;
};

/// P1 finite-element model of div(sigma grad u) = 0 on the sensor disc with the
/// gap electrode model: unit current spread uniformly over the source electrode
/// arc, minus one over the sink arc, no flux elsewhere.
class ForwardModel {
 public:
  explicit ForwardModel(TriMesh mesh);

  const TriMesh& mesh() const { return mesh_; }

  /// Stiffness matrix for one conductivity, factored once and shared by all drives.
  class System {
   public:
    FieldSolution solve(const Drive& drive, int drive_index = -1) const;
    /// Potential field for an arbitrary boundary current pattern (one entry per electrode, summing to zero).
    Eigen::VectorXd solve_pattern(std::span<const double> currents) const;

   private:
    friend class ForwardModel;
    struct Impl;
    std::shared_ptr<const Impl> impl_;
  };

  /// Assembles and factors the system. Every conductivity must be positive.
  System assemble(std::span<const double> element_sigma) const;

  /// Electrode voltages: current-density weighted average of u over each electrode.
  Eigen::VectorXd electrode_potentials(const Eigen::VectorXd& u) const;

  /// Retained differential voltages in protocol order.
  Eigen::VectorXd frame(std::span<const double> element_sigma, const StimProtocol& protocol) const;

  /// Field for every drive of the protocol, in drive order.
  std::vector<FieldSolution> drive_fields(std::span<const double> element_sigma, const StimProtocol& protocol) const;

  /// Constant gradient of a P1 field on one element.
  Eigen::Vector2d gradient(std::size_t element, const Eigen::VectorXd& u) const;

  double area(std::size_t element) const { return area_[element]; }

  /// Load vector entries (node, weight) for a unit current on electrode e; weights sum to 1.
  const std::vector<std::pair<int, double>>& electrode_load(int e) const { return loads_[e]; }

 private:
  TriMesh mesh_;
  std::vector<double> area_;
  std::vector<std::array<Eigen::Vector2d, 3>> grads_;  // basis gradients per element
  std::vector<std::vector<std::pair<int, double>>> loads_;
};

FieldSolution forward_solve(const TriMesh& mesh, std::span<const double> element_sigma, const Drive& drive);

Eigen::VectorXd forward_frame(const TriMesh& mesh, std::span<const double> element_sigma, const StimProtocol& protocol);

}  // namespace mfeit::fem
