#pragma once

#include <array>
#include <vector>

namespace mfeit::fem {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Circular sensor with equal, equally spaced boundary electrodes.
/// Electrode 0 is centred at angle 0; indices increase counter-clockwise.
struct SensorGeometry {
  double radius = 1.0;
  int n_electrodes = 16;
  double electrode_coverage = 0.5;  ///< fraction of each electrode pitch covered by metal

  void validate() const;
  double pitch() const;              ///< angular distance between electrode centres
  double electrode_center(int e) const;
  double electrode_half_width() const;
};

/// Part of one boundary edge that lies under an electrode, in edge parameter space.
struct ElectrodeSegment {
  int edge = 0;
  double t0 = 0.0;
  double t1 = 1.0;
};

struct BoundaryEdge {
  int a = 0;  // node indices, counter-clockwise
  int b = 0;
  double theta_a = 0.0;  // polar angle of a; theta_b = theta_a + arc
  double arc = 0.0;
};

struct TriMesh {
  SensorGeometry geometry;
  int refinement_level = 1;
  int rings = 0;
  std::vector<Point> nodes;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::vector<BoundaryEdge> boundary;         // partitions the rim, counter-clockwise from angle 0
  std::vector<std::vector<ElectrodeSegment>> electrodes;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t element_count() const { return triangles.size(); }
  double signed_area(std::size_t element) const;
  Point centroid(std::size_t element) const;
};

/// Rotationally symmetric triangulation of the sensor disc.
///
/// The disc is cut into concentric rings (4 * 2^(level-1) of them). One half
/// electrode pitch is triangulated and then mirrored and replicated around the
/// circle, so the mesh is invariant under rotation by one electrode pitch and
/// under reflection about every electrode centre and every inter-electrode
/// bisector. The centre node has index 0.
TriMesh build_disc_mesh(const SensorGeometry& geometry, int refinement_level);

}  // namespace mfeit::fem
