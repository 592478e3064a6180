#include "mfeit/fem/sensitivity.hpp"

#include <cmath>
#include <string>

#include "mfeit/error.hpp"
#include "mfeit/io/binary.hpp"

namespace mfeit::fem {

std::vector<int> element_pixels(const TriMesh& mesh, const PixelGrid& grid) {
  std::vector<int> owner(mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) owner[e] = grid.locate(mesh.centroid(e));
  return owner;
}

Eigen::MatrixXd element_sensitivities(const ForwardModel& model, double background_sigma, const StimProtocol& protocol,
                                      Eigen::VectorXd* reference_frame) {
  if (!(background_sigma > 0.0)) throw ConfigError("background conductivity must be positive");
  const std::size_t ne = model.mesh().element_count();
  const std::vector<double> sigma(ne, background_sigma);
  const auto fields = model.drive_fields(sigma, protocol);

  // Measurement pair j driven with unit current is exactly drive j's field.
  const auto nd = fields.size();
  Eigen::MatrixXd gx(static_cast<Eigen::Index>(nd), static_cast<Eigen::Index>(ne));
  Eigen::MatrixXd gy(static_cast<Eigen::Index>(nd), static_cast<Eigen::Index>(ne));
  for (std::size_t d = 0; d < nd; ++d) {
    for (std::size_t e = 0; e < ne; ++e) {
      const Eigen::Vector2d g = model.gradient(e, fields[d].node_potentials);
      gx(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(e)) = g.x();
      gy(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(e)) = g.y();
    }
  }
  Eigen::MatrixXd s(protocol.m(), static_cast<Eigen::Index>(ne));
  for (int k = 0; k < protocol.m(); ++k) {
    const auto& ch = protocol.channels[k];
    for (std::size_t e = 0; e < ne; ++e) {
      const auto ei = static_cast<Eigen::Index>(e);
      s(k, ei) = -model.area(e) * (gx(ch.drive, ei) * gx(ch.pair, ei) + gy(ch.drive, ei) * gy(ch.pair, ei));
    }
  }
  if (reference_frame) {
    const int n = protocol.n_electrodes;
    std::vector<Eigen::VectorXd> ev;
    for (const auto& f : fields) ev.push_back(model.electrode_potentials(f.node_potentials));
    reference_frame->resize(protocol.m());
    for (int k = 0; k < protocol.m(); ++k) {
      const auto& ch = protocol.channels[k];
      (*reference_frame)(k) = ev[ch.drive](ch.pair) - ev[ch.drive]((ch.pair + 1) % n);
    }
  }
  return s;
}

SensitivityMatrix sensitivity_matrix(const TriMesh& mesh, double background_sigma, const StimProtocol& protocol,
                                     const PixelGrid& grid) {
  ForwardModel model(mesh);
  Eigen::VectorXd vref;
  const Eigen::MatrixXd s = element_sensitivities(model, background_sigma, protocol, &vref);
  for (int k = 0; k < protocol.m(); ++k) {
    if (vref(k) == 0.0 || !std::isfinite(vref(k))) {
      throw NumericalError("reference voltage of channel " + std::to_string(k) + " is zero");
    }
  }
  const std::vector<int> owner = element_pixels(mesh, grid);
  SensitivityMatrix a;
  a.grid = grid;
  a.background_sigma = background_sigma;
  a.reference_frame = vref;
  a.entries = Eigen::MatrixXd::Zero(protocol.m(), grid.n());
  for (std::size_t e = 0; e < owner.size(); ++e) {
    if (owner[e] < 0) continue;
    a.entries.col(owner[e]) += s.col(static_cast<Eigen::Index>(e));
  }
  // dB_k/dX_j = sigma_ref / V_ref[k] * dV_k/dsigma_j
  for (int k = 0; k < protocol.m(); ++k) a.entries.row(k) *= background_sigma / vref(k);
  if (!a.entries.allFinite()) throw NumericalError("sensitivity matrix has non-finite entries");
  return a;
}

void write_sensitivity(const std::filesystem::path& path, const SensitivityMatrix& a) {
  io::ByteWriter w;
  w.magic("MFEITA01");
  w.u32(static_cast<std::uint32_t>(a.m()));
  w.u32(static_cast<std::uint32_t>(a.n()));
  w.u32(static_cast<std::uint32_t>(a.grid.height()));
  w.u32(static_cast<std::uint32_t>(a.grid.width()));
  w.bytes(a.grid.mask());
  for (Eigen::Index k = 0; k < a.m(); ++k) {
    for (Eigen::Index j = 0; j < a.n(); ++j) w.f32(static_cast<float>(a.entries(k, j)));
  }
  w.save(path);
}

SensitivityMatrix read_sensitivity(const std::filesystem::path& path) {
  auto r = io::ByteReader::load(path);
  r.expect_magic("MFEITA01");
  const auto m = r.u32();
  const auto n = r.u32();
  const auto h = r.u32();
  const auto w = r.u32();
  if (h == 0 || w == 0 || h > 4096 || w > 4096) throw IoError("implausible grid size in '" + path.string() + "'");
  SensitivityMatrix a;
  a.grid = PixelGrid::from_mask(static_cast<int>(h), static_cast<int>(w), r.bytes(static_cast<std::size_t>(h) * w));
  if (static_cast<std::uint32_t>(a.grid.n()) != n) {
    throw IoError("mask count " + std::to_string(a.grid.n()) + " disagrees with n=" + std::to_string(n));
  }
  a.entries.resize(m, n);
  for (std::uint32_t k = 0; k < m; ++k) {
    for (std::uint32_t j = 0; j < n; ++j) a.entries(k, j) = r.f32();
  }
  r.expect_end();
  return a;
}

}  // namespace mfeit::fem
