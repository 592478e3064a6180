#include "mfeit/admm/admm.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <string>

#include "mfeit/admm/laplacian.hpp"
#include "mfeit/error.hpp"

namespace mfeit::admm {

void LinearizedModel::validate() const {
  if (A.rows() != B.rows()) {
    throw ConfigError("A has " + std::to_string(A.rows()) + " rows but B has " + std::to_string(B.rows()));
  }
  if (A.size() == 0 || B.cols() == 0) throw ConfigError("empty linearised model");
  if (!A.allFinite() || !B.allFinite()) throw NumericalError("linearised model has non-finite entries");
}

AdmmParams AdmmParams::resolved(const Eigen::MatrixXd& A, const fem::PixelGrid* grid) const {
  AdmmParams p = *this;
  if (p.w.size() == 0) p.w = Eigen::VectorXd::Ones(A.cols());
  if (p.eta == 0.0) {
    const double s = spectral_norm_estimate(A);
    p.eta = 1.0 / (p.beta1 + p.beta2 * s * s);
  }
  if (p.gn_lambda == 0.0 && grid) p.gn_lambda = default_gn_lambda(A, laplacian(*grid));
  p.validate(A.cols());
  return p;
}

void AdmmParams::validate(Eigen::Index n) const {
  if (!(beta1 > 0.0 && beta2 > 0.0)) throw ConfigError("ADMM penalties beta1, beta2 must be positive");
  if (!(gamma1 > 0.0 && gamma2 > 0.0)) throw ConfigError("ADMM step lengths gamma1, gamma2 must be positive");
  if (!(eta > 0.0)) throw ConfigError("ADMM gradient step eta must be positive");
  if (iterations < 1) throw ConfigError("ADMM iteration budget must be at least 1");
  if (gn_lambda < 0.0) throw ConfigError("Gauss-Newton lambda must be positive");
  if (w.size() != 0) {
    if (w.size() != n) throw ConfigError("weight vector has length " + std::to_string(w.size()) + ", expected n");
    if (!(w.array() > 0.0).all()) throw ConfigError("row weights must be positive");
  }
}

AdmmState AdmmState::zeros(Eigen::Index m, Eigen::Index n, Eigen::Index l) {
  return {Eigen::MatrixXd::Zero(n, l), Eigen::MatrixXd::Zero(n, l), Eigen::MatrixXd::Zero(n, l),
          Eigen::MatrixXd::Zero(m, l)};
}

bool AdmmState::all_finite() const { return X.allFinite() && Z.allFinite() && L1.allFinite() && L2.allFinite(); }

double spectral_norm_estimate(const Eigen::MatrixXd& A, int iterations) {
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(A.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd u = A.transpose() * (A * v);
    const double norm = u.norm();
    if (norm == 0.0) return 0.0;
    sigma = std::sqrt(norm);
    v = u / norm;
  }
  return sigma;
}

double default_gn_lambda(const Eigen::MatrixXd& A, const Eigen::SparseMatrix<double>& L) {
  const double ta = A.squaredNorm();
  const double tl = L.squaredNorm();
  if (!(tl > 0.0)) throw NumericalError("Laplacian is zero; cannot scale the Gauss-Newton prior");
  return 1e-2 * ta / tl;
}

GaussNewton::GaussNewton(const Eigen::MatrixXd& A, const Eigen::SparseMatrix<double>& L, double lambda)
    : at_(A.transpose()), lambda_(lambda) {
  if (L.rows() != A.cols() || L.cols() != A.cols()) throw ConfigError("Laplacian size does not match A");
  if (lambda < 0.0 || !std::isfinite(lambda)) throw ConfigError("Gauss-Newton lambda must be positive");
  const Eigen::MatrixXd ltl = Eigen::MatrixXd(L.transpose() * L);
  system_ = at_ * A + lambda * ltl;
  llt_.compute(system_);
  if (llt_.info() != Eigen::Success) {
    throw NumericalError("Gauss-Newton system is not positive definite (lambda=" + std::to_string(lambda) + ")");
  }
  // A semidefinite system can factor with round-off sized pivots; treat those as singular too.
  const Eigen::VectorXd d = llt_.matrixLLT().diagonal();
  if (d.minCoeff() <= 1e-7 * d.maxCoeff()) {
    throw NumericalError("Gauss-Newton system is numerically singular (lambda=" + std::to_string(lambda) + ")");
  }
}

Eigen::MatrixXd GaussNewton::solve(const Eigen::MatrixXd& B) const {
  if (B.rows() != at_.cols()) throw ConfigError("B row count does not match A");
  return llt_.solve(at_ * B);
}

Eigen::MatrixXd gn_init(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double lambda,
                        const Eigen::SparseMatrix<double>& L) {
  return GaussNewton(A, L, lambda).solve(B);
}

double weighted_l21(const Eigen::MatrixXd& X, const Eigen::VectorXd& w) {
  if (w.size() == 0) return X.rowwise().norm().sum();
  if (w.size() != X.rows()) throw ConfigError("weight vector length does not match row count");
  return w.dot(X.rowwise().norm());
}

double x_subproblem_objective(const AdmmState& s, const LinearizedModel& model, const AdmmParams& p) {
  const Eigen::MatrixXd d = s.X - s.Z;
  const Eigen::MatrixXd r = model.B - model.A * s.X;
  return (s.L1.array() * d.array()).sum() + 0.5 * p.beta1 * d.squaredNorm() + (s.L2.array() * r.array()).sum() +
         0.5 * p.beta2 * r.squaredNorm();
}

Eigen::MatrixXd admm_gradient(const AdmmState& s, const LinearizedModel& model, double beta1, double beta2) {
  const auto& A = model.A;
  const Eigen::MatrixXd ax_b = A * s.X - model.B;
  return beta1 * (s.X - s.Z) + s.L1 + A.transpose() * (beta2 * ax_b - s.L2);
}

Eigen::MatrixXd admm_gradient(const AdmmState& s, const LinearizedModel& model, const AdmmParams& p) {
  return admm_gradient(s, model, p.beta1, p.beta2);
}

Eigen::MatrixXd x_update_gd(const AdmmState& s, const LinearizedModel& model, double eta, double beta1, double beta2) {
  return s.X - eta * admm_gradient(s, model, beta1, beta2);
}

Eigen::MatrixXd x_update_gd(const AdmmState& s, const LinearizedModel& model, const AdmmParams& p) {
  return x_update_gd(s, model, p.eta, p.beta1, p.beta2);
}

ClosedFormXUpdate::ClosedFormXUpdate(const Eigen::MatrixXd& A, double beta1, double beta2)
    : beta1_(beta1), beta2_(beta2) {
  if (A.cols() > kClosedFormLimit) {
    throw ConfigError("closed-form X-update refused: n=" + std::to_string(A.cols()) + " exceeds " +
                      std::to_string(kClosedFormLimit));
  }
  Eigen::MatrixXd sys = beta2 * (A.transpose() * A);
  sys.diagonal().array() += beta1;
  llt_.compute(sys);
  if (llt_.info() != Eigen::Success) throw NumericalError("closed-form X-update system is not positive definite");
}

Eigen::MatrixXd ClosedFormXUpdate::operator()(const AdmmState& s, const LinearizedModel& model) const {
  const Eigen::MatrixXd rhs = beta1_ * s.Z - s.L1 + model.A.transpose() * (beta2_ * model.B + s.L2);
  return llt_.solve(rhs);
}

Eigen::MatrixXd x_update_closed_form(const AdmmState& s, const LinearizedModel& model, const AdmmParams& p) {
  return ClosedFormXUpdate(model.A, p.beta1, p.beta2)(s, model);
}

Eigen::MatrixXd row_shrink(const Eigen::MatrixXd& U, const Eigen::VectorXd& t) {
  if (t.size() != U.rows()) throw ConfigError("threshold vector length does not match row count");
  Eigen::MatrixXd Z(U.rows(), U.cols());
  for (Eigen::Index i = 0; i < U.rows(); ++i) {
    if (t(i) < 0.0) throw ConfigError("shrinkage thresholds must be non-negative");
    const double norm = U.row(i).norm();
    if (norm <= t(i) || norm == 0.0) {
      Z.row(i).setZero();
    } else {
      Z.row(i) = ((norm - t(i)) / norm) * U.row(i);
    }
  }
  return Z;
}

Eigen::MatrixXd z_update(const AdmmState& s, const AdmmParams& p) {
  const Eigen::VectorXd w = p.w.size() ? p.w : Eigen::VectorXd::Ones(s.X.rows());
  return row_shrink(s.X + s.L1 / p.beta1, w / p.beta1);
}

Eigen::MatrixXd lambda1_step(const Eigen::MatrixXd& L1, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double c1) {
  return L1 + c1 * (X - Z);
}

Eigen::MatrixXd lambda2_step(const Eigen::MatrixXd& L2, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const Eigen::MatrixXd& X, double c2) {
  const Eigen::MatrixXd ax = A * X;
  return L2 + c2 * (B - ax);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> multiplier_step(const AdmmState& s, const LinearizedModel& model, double c1,
                                                            double c2) {
  return {lambda1_step(s.L1, s.X, s.Z, c1), lambda2_step(s.L2, model.A, model.B, s.X, c2)};
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> multiplier_updates(const AdmmState& s, const LinearizedModel& model,
                                                               const AdmmParams& p) {
  return multiplier_step(s, model, p.gamma1 * p.beta1, p.gamma2 * p.beta2);
}

double mean_column_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) throw ConfigError("RMSE shape mismatch");
  const Eigen::Index n = pred.rows();
  return ((pred - truth).colwise().squaredNorm().array() / static_cast<double>(n)).sqrt().mean();
}

AdmmResult solve(const LinearizedModel& model, const AdmmParams& params, const Eigen::MatrixXd& x0,
                 const Eigen::MatrixXd* ground_truth) {
  model.validate();
  const AdmmParams p = params.resolved(model.A);
  if (x0.rows() != model.n() || x0.cols() != model.l()) throw ConfigError("initial X has the wrong shape");
  if (ground_truth && (ground_truth->rows() != model.n() || ground_truth->cols() != model.l())) {
    throw ConfigError("ground truth has the wrong shape");
  }
  std::unique_ptr<ClosedFormXUpdate> closed;
  if (p.x_update == XUpdate::closed_form) closed = std::make_unique<ClosedFormXUpdate>(model.A, p.beta1, p.beta2);

  AdmmResult result;
  AdmmState& s = result.state;
  s = AdmmState::zeros(model.m(), model.n(), model.l());
  s.X = x0;
  result.history.reserve(p.iterations);
  for (int k = 1; k <= p.iterations; ++k) {
    s.X = closed ? (*closed)(s, model) : x_update_gd(s, model, p);
    s.Z = z_update(s, p);
    auto [l1, l2] = multiplier_updates(s, model, p);
    s.L1 = std::move(l1);
    s.L2 = std::move(l2);
    if (!s.all_finite()) throw NumericalError("ADMM iterate became non-finite at iteration " + std::to_string(k));
    IterationRecord rec;
    rec.iteration = k;
    rec.primal_residual = (s.X - s.Z).norm();
    rec.data_residual = (model.A * s.X - model.B).norm();
    rec.objective = weighted_l21(s.Z, p.w);
    rec.rmse = ground_truth ? mean_column_rmse(s.Z, *ground_truth) : std::numeric_limits<double>::quiet_NaN();
    result.history.push_back(rec);
  }
  return result;
}

AdmmResult solve(const LinearizedModel& model, const AdmmParams& params, const fem::PixelGrid& grid,
                 const Eigen::MatrixXd* ground_truth) {
  model.validate();
  if (grid.n() != model.n()) throw ConfigError("pixel grid does not match the columns of A");
  if (params.init == Init::zeros) {
    return solve(model, params, Eigen::MatrixXd::Zero(model.n(), model.l()), ground_truth);
  }
  const AdmmParams p = params.resolved(model.A, &grid);
  const Eigen::MatrixXd x0 = gn_init(model.A, model.B, p.gn_lambda, laplacian(grid));
  return solve(model, p, x0, ground_truth);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(10);
  out << "iteration,primal_residual,data_residual,objective,rmse\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << r.primal_residual << ',' << r.data_residual << ',' << r.objective << ',';
    if (!std::isnan(r.rmse)) out << r.rmse;
    out << '\n';
  }
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace mfeit::admm
