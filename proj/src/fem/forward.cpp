#include "mfeit/fem/forward.hpp"

#include <cmath>
#include <string>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "mfeit/error.hpp"

namespace mfeit::fem {

// Node 0 (the disc centre, fixed by every symmetry of the mesh) is grounded to
// remove the constant null space; solutions are then shifted to zero mean.
struct ForwardModel::System::Impl {
  const ForwardModel* model = nullptr;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  Eigen::Index n_nodes = 0;

  Eigen::VectorXd solve_rhs(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd reduced = solver.solve(rhs.tail(n_nodes - 1));
    if (solver.info() != Eigen::Success) throw NumericalError("forward solve failed");
    Eigen::VectorXd u(n_nodes);
    u(0) = 0.0;
    u.tail(n_nodes - 1) = reduced;
    u.array() -= u.mean();
    return u;
  }
};

ForwardModel::ForwardModel(TriMesh mesh) : mesh_(std::move(mesh)) {
  const std::size_t ne = mesh_.element_count();
  area_.resize(ne);
  grads_.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& t = mesh_.triangles[e];
    const Point& p0 = mesh_.nodes[t[0]];
    const Point& p1 = mesh_.nodes[t[1]];
    const Point& p2 = mesh_.nodes[t[2]];
    const double a2 = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    if (!(a2 > 0.0)) throw NumericalError("element " + std::to_string(e) + " has non-positive area");
    area_[e] = 0.5 * a2;
    grads_[e][0] = Eigen::Vector2d(p1.y - p2.y, p2.x - p1.x) / a2;
    grads_[e][1] = Eigen::Vector2d(p2.y - p0.y, p0.x - p2.x) / a2;
    grads_[e][2] = Eigen::Vector2d(p0.y - p1.y, p1.x - p0.x) / a2;
  }

  loads_.resize(mesh_.electrodes.size());
  for (std::size_t el = 0; el < mesh_.electrodes.size(); ++el) {
    double total = 0.0;
    std::vector<std::pair<int, double>> raw;
    for (const auto& seg : mesh_.electrodes[el]) {
      const auto& edge = mesh_.boundary[seg.edge];
      const Point& a = mesh_.nodes[edge.a];
      const Point& b = mesh_.nodes[edge.b];
      const double len = std::hypot(b.x - a.x, b.y - a.y);
      const double span = seg.t1 - seg.t0;
      const double int_t = 0.5 * (seg.t1 * seg.t1 - seg.t0 * seg.t0);
      raw.emplace_back(edge.a, len * (span - int_t));
      raw.emplace_back(edge.b, len * int_t);
      total += len * span;
    }
    if (!(total > 0.0)) throw NumericalError("electrode " + std::to_string(el) + " covers no boundary edge");
    for (auto& [node, w] : raw) {
      w /= total;
      bool merged = false;
      for (auto& [n2, w2] : loads_[el]) {
        if (n2 == node) {
          w2 += w;
          merged = true;
          break;
        }
      }
      if (!merged) loads_[el].emplace_back(node, w);
    }
  }
}

ForwardModel::System ForwardModel::assemble(std::span<const double> element_sigma) const {
  const std::size_t ne = mesh_.element_count();
  if (element_sigma.size() != ne) {
    throw ConfigError("conductivity vector has " + std::to_string(element_sigma.size()) + " entries, mesh has " +
                      std::to_string(ne) + " elements");
  }
  const auto nn = static_cast<Eigen::Index>(mesh_.node_count());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(ne * 9);
  for (std::size_t e = 0; e < ne; ++e) {
    const double s = element_sigma[e];
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ConfigError("element conductivity must be positive and finite (element " + std::to_string(e) + ")");
    }
    const auto& t = mesh_.triangles[e];
    for (int i = 0; i < 3; ++i) {
      if (t[i] == 0) continue;
      for (int j = 0; j < 3; ++j) {
        if (t[j] == 0) continue;
        trip.emplace_back(t[i] - 1, t[j] - 1, s * area_[e] * grads_[e][i].dot(grads_[e][j]));
      }
    }
  }
  Eigen::SparseMatrix<double> k(nn - 1, nn - 1);
  k.setFromTriplets(trip.begin(), trip.end());

  auto impl = std::make_shared<System::Impl>();
  impl->model = this;
  impl->n_nodes = nn;
  impl->solver.compute(k);
  if (impl->solver.info() != Eigen::Success) throw NumericalError("stiffness matrix is singular (degenerate mesh?)");
  const auto& d = impl->solver.vectorD();
  if (!(d.minCoeff() > 0.0)) throw NumericalError("stiffness matrix is not positive definite (degenerate mesh?)");
  System sys;
  sys.impl_ = std::move(impl);
  return sys;
}

Eigen::VectorXd ForwardModel::System::solve_pattern(std::span<const double> currents) const {
  const ForwardModel& model = *impl_->model;
  if (currents.size() != model.loads_.size()) throw ConfigError("current pattern length differs from electrode count");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(impl_->n_nodes);
  for (std::size_t el = 0; el < currents.size(); ++el) {
    if (currents[el] == 0.0) continue;
    for (const auto& [node, w] : model.loads_[el]) rhs(node) += currents[el] * w;
  }
  return impl_->solve_rhs(rhs);
}

FieldSolution ForwardModel::System::solve(const Drive& drive, int drive_index) const {
  std::vector<double> currents(impl_->model->loads_.size(), 0.0);
  currents.at(drive.source) += 1.0;
  currents.at(drive.sink) -= 1.0;
  return {solve_pattern(currents), drive_index};
}

Eigen::VectorXd ForwardModel::electrode_potentials(const Eigen::VectorXd& u) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(loads_.size()));
  for (std::size_t el = 0; el < loads_.size(); ++el) {
    double acc = 0.0;
    for (const auto& [node, w] : loads_[el]) acc += w * u(node);
    v(static_cast<Eigen::Index>(el)) = acc;
  }
  return v;
}

std::vector<FieldSolution> ForwardModel::drive_fields(std::span<const double> element_sigma,
                                                      const StimProtocol& protocol) const {
  if (protocol.n_electrodes != static_cast<int>(loads_.size())) {
    throw ConfigError("protocol has " + std::to_string(protocol.n_electrodes) + " electrodes, mesh has " +
                      std::to_string(loads_.size()));
  }
  const System sys = assemble(element_sigma);
  std::vector<FieldSolution> fields;
  fields.reserve(protocol.drives.size());
  for (std::size_t d = 0; d < protocol.drives.size(); ++d) fields.push_back(sys.solve(protocol.drives[d], static_cast<int>(d)));
  return fields;
}

Eigen::VectorXd ForwardModel::frame(std::span<const double> element_sigma, const StimProtocol& protocol) const {
  const auto fields = drive_fields(element_sigma, protocol);
  std::vector<Eigen::VectorXd> ev;
  ev.reserve(fields.size());
  for (const auto& f : fields) ev.push_back(electrode_potentials(f.node_potentials));
  Eigen::VectorXd v(protocol.m());
  const int n = protocol.n_electrodes;
  for (int k = 0; k < protocol.m(); ++k) {
    const auto& ch = protocol.channels[k];
    v(k) = ev[ch.drive](ch.pair) - ev[ch.drive]((ch.pair + 1) % n);
  }
  return v;
}

Eigen::Vector2d ForwardModel::gradient(std::size_t element, const Eigen::VectorXd& u) const {
  const auto& t = mesh_.triangles[element];
  return grads_[element][0] * u(t[0]) + grads_[element][1] * u(t[1]) + grads_[element][2] * u(t[2]);
}

FieldSolution forward_solve(const TriMesh& mesh, std::span<const double> element_sigma, const Drive& drive) {
  ForwardModel model(mesh);
  return model.assemble(element_sigma).solve(drive);
}

Eigen::VectorXd forward_frame(const TriMesh& mesh, std::span<const double> element_sigma, const StimProtocol& protocol) {
  return ForwardModel(mesh).frame(element_sigma, protocol);
}

}  // namespace mfeit::fem
