#include "mfeit/fem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mfeit/error.hpp"

namespace mfeit::fem {

namespace {

// Angular intervals per half pitch relative to the radial spacing. Values above
// one put more nodes around the rim, where the electrode edges sit.
constexpr double kAngularRefinement = 1.5;

int intervals_on_ring(int ring, int n_electrodes) {
  if (ring == 0) return 0;
  const double half_pitch = std::numbers::pi / n_electrodes;
  return std::max(1, static_cast<int>(std::lround(ring * half_pitch * kAngularRefinement)));
}

struct TemplateNode {
  int ring;
  int pos;  // 0..intervals on that ring, measured from the half-sector start
};

}  // namespace

void SensorGeometry::validate() const {
  if (!(radius > 0.0)) throw ConfigError("sensor radius must be positive");
  if (n_electrodes < 4) throw ConfigError("need at least 4 electrodes, got " + std::to_string(n_electrodes));
  if (!(electrode_coverage > 0.0 && electrode_coverage < 1.0)) {
    throw ConfigError("electrode coverage must lie in (0, 1) so electrodes do not overlap; got " +
                      std::to_string(electrode_coverage));
  }
}

double SensorGeometry::pitch() const { return 2.0 * std::numbers::pi / n_electrodes; }
double SensorGeometry::electrode_center(int e) const { return e * pitch(); }
double SensorGeometry::electrode_half_width() const { return 0.5 * electrode_coverage * pitch(); }

double TriMesh::signed_area(std::size_t element) const {
  const auto& t = triangles[element];
  const Point& a = nodes[t[0]];
  const Point& b = nodes[t[1]];
  const Point& c = nodes[t[2]];
  return 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
}

Point TriMesh::centroid(std::size_t element) const {
  const auto& t = triangles[element];
  return {(nodes[t[0]].x + nodes[t[1]].x + nodes[t[2]].x) / 3.0,
          (nodes[t[0]].y + nodes[t[1]].y + nodes[t[2]].y) / 3.0};
}

TriMesh build_disc_mesh(const SensorGeometry& geometry, int refinement_level) {
  geometry.validate();
  if (refinement_level < 1) throw ConfigError("refinement level must be >= 1");
  if (refinement_level > 8) throw ConfigError("refinement level above 8 is not supported");

  TriMesh mesh;
  mesh.geometry = geometry;
  mesh.refinement_level = refinement_level;
  const int rings = 4 << (refinement_level - 1);
  mesh.rings = rings;
  const int n_half = 2 * geometry.n_electrodes;

  std::vector<int> intervals(rings + 1);
  std::vector<int> ring_offset(rings + 1);
  mesh.nodes.push_back({0.0, 0.0});
  for (int k = 1; k <= rings; ++k) {
    intervals[k] = intervals_on_ring(k, geometry.n_electrodes);
    ring_offset[k] = static_cast<int>(mesh.nodes.size());
    const int count = n_half * intervals[k];
    const double r = geometry.radius * k / rings;
    for (int t = 0; t < count; ++t) {
      const double theta = 2.0 * std::numbers::pi * t / count;
      mesh.nodes.push_back({r * std::cos(theta), r * std::sin(theta)});
    }
  }

  // Triangulate one half-sector [0, pitch/2] in (ring, position) coordinates.
  std::vector<std::array<TemplateNode, 3>> tmpl;
  for (int k = 1; k <= rings; ++k) {
    const int mo = intervals[k];
    if (k == 1) {
      for (int p = 0; p < mo; ++p) tmpl.push_back({{{0, 0}, {1, p}, {1, p + 1}}});
      continue;
    }
    const int mi = intervals[k - 1];
    int i = 0;
    int o = 0;
    while (i < mi || o < mo) {
      bool advance_outer;
      if (i == mi) {
        advance_outer = true;
      } else if (o == mo) {
        advance_outer = false;
      } else {
        // Merge by angular fraction; integer cross-multiplication keeps ties exact.
        advance_outer = static_cast<long>(o + 1) * mi <= static_cast<long>(i + 1) * mo;
      }
      if (advance_outer) {
        tmpl.push_back({{{k - 1, i}, {k, o}, {k, o + 1}}});
        ++o;
      } else {
        tmpl.push_back({{{k - 1, i}, {k, o}, {k - 1, i + 1}}});
        ++i;
      }
    }
  }

  auto global_index = [&](const TemplateNode& tn, int half) {
    if (tn.ring == 0) return 0;
    const int m = intervals[tn.ring];
    const int count = n_half * m;
    const int t = (half % 2 == 0) ? half * m + tn.pos : (half + 1) * m - tn.pos;
    return ring_offset[tn.ring] + (t % count);
  };

  for (int half = 0; half < n_half; ++half) {
    for (const auto& tri : tmpl) {
      std::array<int, 3> g{global_index(tri[0], half), global_index(tri[1], half), global_index(tri[2], half)};
      mesh.triangles.push_back(g);
      if (mesh.signed_area(mesh.triangles.size() - 1) < 0.0) std::swap(mesh.triangles.back()[1], mesh.triangles.back()[2]);
    }
  }
  for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
    if (!(mesh.signed_area(e) > 0.0)) throw NumericalError("degenerate triangle generated at element " + std::to_string(e));
  }

  // Rim edges and the electrode segments lying on them.
  const int rim = n_half * intervals[rings];
  const double arc = 2.0 * std::numbers::pi / rim;
  for (int t = 0; t < rim; ++t) {
    mesh.boundary.push_back({ring_offset[rings] + t, ring_offset[rings] + (t + 1) % rim, t * arc, arc});
  }
  mesh.electrodes.resize(geometry.n_electrodes);
  const double hw = geometry.electrode_half_width();
  for (int e = 0; e < geometry.n_electrodes; ++e) {
    for (int shift = -1; shift <= 1; ++shift) {
      const double lo = geometry.electrode_center(e) - hw + shift * 2.0 * std::numbers::pi;
      const double hi = geometry.electrode_center(e) + hw + shift * 2.0 * std::numbers::pi;
      for (int t = 0; t < rim; ++t) {
        const auto& edge = mesh.boundary[t];
        const double t0 = std::clamp((lo - edge.theta_a) / edge.arc, 0.0, 1.0);
        const double t1 = std::clamp((hi - edge.theta_a) / edge.arc, 0.0, 1.0);
        if (t1 > t0) mesh.electrodes[e].push_back({t, t0, t1});
      }
    }
  }
  return mesh;
}

}  // namespace mfeit::fem
