#include "mfeit/eval/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "mfeit/admm/laplacian.hpp"
#include "mfeit/error.hpp"
#include "mfeit/parallel.hpp"

namespace mfeit::eval {

std::string method_name(Method method) {
  switch (method) {
    case Method::gn: return "gn";
    case Method::admm: return "admm";
    case Method::net: return "net";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "gn") return Method::gn;
  if (name == "admm") return Method::admm;
  if (name == "net") return Method::net;
  throw ConfigError("unknown method '" + name + "' (expected gn, admm or net)");
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(10);
  return out;
}

void close_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace

double MethodMetrics::average_psnr() const { return mean(psnr); }
double MethodMetrics::average_ssim() const { return mean(ssim); }
double MethodMetrics::average_rmse() const { return mean(rmse); }

const MethodMetrics& MetricReport::at(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return m;
  }
  throw ConfigError("report has no method '" + method + "'");
}

MethodMetrics score(const std::string& label, const Eigen::MatrixXd& pred, const Eigen::MatrixXd& gt,
                    const fem::PixelGrid& grid) {
  return {label, psnr(pred, gt).values, ssim(pred, gt, grid).values, rmse(pred, gt).values};
}

Evaluator::Evaluator(const fem::PixelGrid& grid, const Eigen::MatrixXd& A, admm::AdmmParams admm_params,
                     net::MmvNet* net)
    : grid_(grid), a_(A), admm_(admm_params.resolved(A, &grid)), net_(net) {
  if (A.cols() != grid.n()) throw ConfigError("sensitivity matrix does not match the grid");
  gn_ = std::make_unique<admm::GaussNewton>(A, admm::laplacian(grid), admm_.gn_lambda);
}

Eigen::MatrixXd Evaluator::gn(const Eigen::MatrixXd& B) const { return gn_->solve(B); }

admm::AdmmResult Evaluator::admm(const Eigen::MatrixXd& B, const Eigen::MatrixXd* truth) const {
  const admm::LinearizedModel model{a_, B};
  const Eigen::MatrixXd x0 =
      admm_.init == admm::Init::gauss_newton ? gn(B) : Eigen::MatrixXd::Zero(a_.cols(), B.cols());
  return admm::solve(model, admm_, x0, truth);
}

net::MmvNet& Evaluator::require_net() {
  if (!net_) throw ConfigError("method 'net' needs a trained checkpoint");
  return *net_;
}

Eigen::MatrixXd Evaluator::reconstruct(Method method, const Eigen::MatrixXd& B) {
  switch (method) {
    case Method::gn: return gn(B);
    case Method::admm: return admm(B).state.Z;
    case Method::net: return require_net().reconstruct(B);
  }
  return {};
}

MethodMetrics Evaluator::evaluate(Method method, const std::vector<data::MfSample>& samples,
                                  const std::optional<NoiseSpec>& noise) {
  if (samples.empty()) throw ConfigError("cannot evaluate an empty split");
  if (method == Method::net) require_net();
  std::vector<MethodMetrics> per(samples.size());
  auto run = [&](std::size_t i) {
    const auto& s = samples[i];
    Eigen::MatrixXd B = s.B;
    if (noise) B = add_noise(B, {noise->snr_db, data::sample_seed(noise->seed, i)});
    per[i] = score(method_name(method), reconstruct(method, B), s.X, grid_);
  };
  if (method == Method::net) {
    for (std::size_t i = 0; i < samples.size(); ++i) run(i);
  } else {
    parallel_for(samples.size(), run);
  }
  MethodMetrics out{method_name(method), {}, {}, {}};
  const std::size_t l = per.front().psnr.size();
  out.psnr.assign(l, 0.0);
  out.ssim.assign(l, 0.0);
  out.rmse.assign(l, 0.0);
  for (const auto& p : per) {
    for (std::size_t f = 0; f < l; ++f) {
      out.psnr[f] += p.psnr[f];
      out.ssim[f] += p.ssim[f];
      out.rmse[f] += p.rmse[f];
    }
  }
  const double count = static_cast<double>(samples.size());
  for (std::size_t f = 0; f < l; ++f) {
    out.psnr[f] /= count;
    out.ssim[f] /= count;
    out.rmse[f] /= count;
  }
  return out;
}

std::vector<ConvergencePoint> Evaluator::convergence(Method method, const std::vector<data::MfSample>& samples) {
  if (samples.empty()) throw ConfigError("cannot evaluate an empty split");
  if (method == Method::gn) throw ConfigError("the Gauss-Newton initializer has no iterations");
  const int k = method == Method::admm ? admm_.iterations : require_net().config().blocks;
  std::vector<std::vector<double>> curves(samples.size());
  auto run = [&](std::size_t i) {
    const auto& s = samples[i];
    auto& curve = curves[i];
    if (method == Method::admm) {
      for (const auto& rec : admm(s.B, &s.X).history) curve.push_back(rec.rmse);
    } else {
      std::vector<Eigen::MatrixXd> inter;
      net_->reconstruct(s.B, k, &inter);
      for (const auto& z : inter) curve.push_back(rmse(z, s.X).average);
    }
  };
  if (method == Method::net) {
    for (std::size_t i = 0; i < samples.size(); ++i) run(i);
  } else {
    parallel_for(samples.size(), run);
  }
  std::vector<ConvergencePoint> out;
  for (int it = 0; it < k; ++it) {
    double total = 0.0;
    for (const auto& c : curves) total += c.at(it);
    out.push_back({method_name(method), it + 1, total / static_cast<double>(samples.size())});
  }
  return out;
}

std::vector<NoisePoint> Evaluator::noise_sweep(Method method, const std::vector<data::MfSample>& samples,
                                               const std::vector<double>& snrs, std::uint64_t seed) {
  std::vector<NoisePoint> out;
  for (double snr : snrs) {
    out.push_back({method_name(method), snr, evaluate(method, samples, NoiseSpec{snr, seed}).average_psnr()});
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricReport& report) {
  auto out = open_csv(path);
  out << "method,freq,psnr,ssim,rmse\n";
  for (const auto& m : report.methods) {
    for (std::size_t f = 0; f < m.psnr.size(); ++f) {
      out << m.method << ',' << f + 1 << ',' << m.psnr[f] << ',' << m.ssim[f] << ',' << m.rmse[f] << '\n';
    }
    out << m.method << ",avg," << m.average_psnr() << ',' << m.average_ssim() << ',' << m.average_rmse() << '\n';
  }
  close_csv(out, path);
}

void write_convergence_csv(const std::filesystem::path& path, const std::vector<ConvergencePoint>& points) {
  auto out = open_csv(path);
  out << "method,iteration,rmse\n";
  for (const auto& p : points) out << p.method << ',' << p.iteration << ',' << p.rmse << '\n';
  close_csv(out, path);
}

void write_noise_csv(const std::filesystem::path& path, const std::vector<NoisePoint>& points) {
  auto out = open_csv(path);
  out << "method,snr_db,psnr\n";
  for (const auto& p : points) out << p.method << ',' << p.snr_db << ',' << p.psnr << '\n';
  close_csv(out, path);
}

}  // namespace mfeit::eval
