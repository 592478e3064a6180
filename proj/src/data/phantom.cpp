#include "mfeit/data/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "mfeit/error.hpp"

namespace mfeit::data {

ConductivityGroups ConductivityGroups::canonical() {
  ConductivityGroups g;
  g.table.resize(3, 4);
  g.table << 0.01, 0.6, 1.2, 1.8,  //
      0.4, 0.6, 0.8, 1.0,          //
      0.8, 1.0, 1.2, 1.4;
  g.background = 2.0;
  return g;
}

void ConductivityGroups::validate() const {
  if (table.rows() < 1 || table.cols() < 1) throw ConfigError("conductivity table is empty");
  if (!(background > 0.0)) throw ConfigError("background conductivity must be positive");
  for (Eigen::Index g = 0; g < table.rows(); ++g) {
    for (Eigen::Index f = 0; f < table.cols(); ++f) {
      if (!(table(g, f) > 0.0)) throw ConfigError("group conductivities must be positive");
      if (f > 0 && !(table(g, f) > table(g, f - 1))) {
        throw ConfigError("group " + std::to_string(g) + " is not strictly increasing with frequency");
      }
    }
  }
}

int Phantom::group_at(const fem::Point& p) const {
  int group = -1;
  for (const auto& inc : inclusions) {
    const double dx = p.x - inc.center.x;
    const double dy = p.y - inc.center.y;
    if (dx * dx + dy * dy <= inc.radius * inc.radius) group = inc.group;
  }
  return group;
}

Phantom sample_phantom(std::uint64_t seed, const fem::SensorGeometry& geometry, const PhantomConfig& config) {
  std::mt19937_64 rng(seed);
  int count = config.forced_count;
  if (count == 0) {
    std::discrete_distribution<int> pick(config.count_weights.begin(), config.count_weights.end());
    count = pick(rng) + 1;
  }
  if (count < 1 || count > 3 || count > config.n_groups) {
    throw ConfigError("inclusion count must lie in 1..3 and not exceed the group count");
  }
  std::vector<int> groups(config.n_groups);
  std::iota(groups.begin(), groups.end(), 0);
  std::shuffle(groups.begin(), groups.end(), rng);

  const double big_r = geometry.radius;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> diameter(config.min_diameter * 2.0 * big_r, config.max_diameter * 2.0 * big_r);

  Phantom ph;
  int attempts = 0;
  while (static_cast<int>(ph.inclusions.size()) < count) {
    if (++attempts > config.max_attempts) {
      throw NumericalError("phantom rejection budget of " + std::to_string(config.max_attempts) +
                           " attempts exhausted (seed " + std::to_string(seed) + ")");
    }
    const double r = 0.5 * diameter(rng);
    // Uniform over the disc area.
    const double rho = big_r * std::sqrt(unit(rng));
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    const fem::Point c{rho * std::cos(phi), rho * std::sin(phi)};
    if (std::hypot(c.x, c.y) + r > big_r) continue;
    bool clash = false;
    for (const auto& other : ph.inclusions) {
      if (std::hypot(c.x - other.center.x, c.y - other.center.y) < r + other.radius) {
        clash = true;
        break;
      }
    }
    if (clash) continue;
    ph.inclusions.push_back({c, r, groups[ph.inclusions.size()]});
  }
  return ph;
}

bool phantom_is_valid(const Phantom& phantom, const fem::SensorGeometry& geometry, const PhantomConfig& config) {
  const auto& inc = phantom.inclusions;
  if (inc.empty() || inc.size() > 3) return false;
  const double d = 2.0 * geometry.radius;
  for (std::size_t i = 0; i < inc.size(); ++i) {
    const double di = 2.0 * inc[i].radius;
    if (di < config.min_diameter * d || di > config.max_diameter * d) return false;
    if (std::hypot(inc[i].center.x, inc[i].center.y) + inc[i].radius > geometry.radius) return false;
    if (inc[i].group < 0 || inc[i].group >= config.n_groups) return false;
    for (std::size_t j = 0; j < i; ++j) {
      if (inc[i].group == inc[j].group) return false;
      if (std::hypot(inc[i].center.x - inc[j].center.x, inc[i].center.y - inc[j].center.y) <
          inc[i].radius + inc[j].radius) {
        return false;
      }
    }
  }
  return true;
}

Eigen::VectorXd rasterize_phantom(const Phantom& phantom, const fem::PixelGrid& grid, const ConductivityGroups& groups,
                                  int freq) {
  if (freq < 0 || freq >= groups.l()) throw ConfigError("frequency index " + std::to_string(freq) + " out of range");
  Eigen::VectorXd sigma(grid.n());
  for (int i = 0; i < grid.n(); ++i) {
    const int g = phantom.group_at(grid.center(i));
    sigma(i) = g < 0 ? groups.background : groups.value(g, freq);
  }
  return sigma;
}

std::vector<double> element_conductivity(const Phantom& phantom, const fem::TriMesh& mesh,
                                         const ConductivityGroups& groups, int freq) {
  if (freq < 0 || freq >= groups.l()) throw ConfigError("frequency index " + std::to_string(freq) + " out of range");
  std::vector<double> sigma(mesh.element_count());
  for (std::size_t e = 0; e < sigma.size(); ++e) {
    const int g = phantom.group_at(mesh.centroid(e));
    sigma[e] = g < 0 ? groups.background : groups.value(g, freq);
  }
  return sigma;
}

Eigen::VectorXd normalize_voltage(const Eigen::VectorXd& v_mea, const Eigen::VectorXd& v_ref) {
  if (v_mea.size() != v_ref.size()) throw ConfigError("voltage frames differ in length");
  for (Eigen::Index k = 0; k < v_ref.size(); ++k) {
    if (v_ref(k) == 0.0) throw NumericalError("reference voltage of channel " + std::to_string(k) + " is zero");
  }
  return ((v_mea - v_ref).array() / v_ref.array()).matrix();
}

Eigen::VectorXd normalize_conductivity(const Eigen::VectorXd& sigma_mea, double sigma_ref) {
  if (!(sigma_ref > 0.0)) throw ConfigError("reference conductivity must be positive");
  return ((sigma_mea.array() - sigma_ref) / sigma_ref).matrix();
}

}  // namespace mfeit::data
