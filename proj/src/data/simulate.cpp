#include <string>

#include "mfeit/data/dataset.hpp"
#include "mfeit/error.hpp"

namespace mfeit::data {

void DatasetConfig::validate() const {
  sensor.validate();
  groups.validate();
  if (jacobian_level < 1 || forward_level < 1) throw ConfigError("mesh refinement levels must be >= 1");
  if (height < 8 || width < 8) throw ConfigError("grid must be at least 8x8");
  if (n_train < 0 || n_val < 0 || n_test < 0) throw ConfigError("split sizes must be non-negative");
  if (phantom.max_attempts < 1) throw ConfigError("phantom attempt budget must be positive");
  if (!(phantom.min_diameter > 0.0 && phantom.min_diameter <= phantom.max_diameter && phantom.max_diameter < 1.0)) {
    throw ConfigError("phantom diameter bounds must satisfy 0 < min <= max < 1");
  }
  if (phantom.n_groups != groups.groups()) throw ConfigError("phantom group count differs from the conductivity table");
  if (fd_reference < 0 || fd_reference >= groups.l()) throw ConfigError("fd_reference out of range");
}

DatasetConfig DatasetConfig::paper_scale() {
  DatasetConfig c;
  c.height = 64;
  c.width = 64;
  c.jacobian_level = 5;
  c.forward_level = 6;
  c.n_train = 8700;
  c.n_val = 1900;
  c.n_test = 1814;
  return c;
}

FemContext::FemContext(const DatasetConfig& config) : config_(config) {
  config_.validate();
  protocol_ = fem::adjacent_protocol(config_.sensor.n_electrodes);
  grid_ = fem::build_pixel_grid(config_.height, config_.width, config_.sensor.radius);
  a_ = fem::sensitivity_matrix(fem::build_disc_mesh(config_.sensor, config_.jacobian_level), config_.groups.background,
                               protocol_, grid_);
  forward_ = std::make_unique<fem::ForwardModel>(fem::build_disc_mesh(config_.sensor, config_.forward_level));
  const std::vector<double> homogeneous(forward_->mesh().element_count(), config_.groups.background);
  v_ref_ = forward_->frame(homogeneous, protocol_);
}

MfSample simulate_sample(const Phantom& phantom, const FemContext& context) {
  const auto& cfg = context.config();
  const int l = cfg.groups.l();
  const int m = context.protocol().m();
  const int n = context.grid().n();
  MfSample s;
  s.phantom = phantom;
  s.B.resize(m, l);
  s.X.resize(n, l);
  std::vector<Eigen::VectorXd> frames(l);
  for (int f = 0; f < l; ++f) {
    if (phantom.inclusions.empty()) {
      frames[f] = context.reference_frame();
    } else {
      const auto sigma = element_conductivity(phantom, context.forward_model().mesh(), cfg.groups, f);
      frames[f] = context.forward_model().frame(sigma, context.protocol());
    }
    s.X.col(f) = normalize_conductivity(rasterize_phantom(phantom, context.grid(), cfg.groups, f), cfg.groups.background);
  }
  for (int f = 0; f < l; ++f) {
    const Eigen::VectorXd& ref =
        cfg.normalization == Normalization::time_difference ? context.reference_frame() : frames[cfg.fd_reference];
    s.B.col(f) = normalize_voltage(frames[f], ref);
  }
  if (!s.B.allFinite() || !s.X.allFinite()) throw NumericalError("simulated sample has non-finite entries");
  return s;
}

}  // namespace mfeit::data
