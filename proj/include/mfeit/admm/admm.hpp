#pragma once

#include <filesystem>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mfeit/fem/pixel_grid.hpp"

namespace mfeit::admm {

/// A X = B with A (m x n) and B (m x l). Holds references; both must outlive the model.
struct LinearizedModel {
  const Eigen::MatrixXd& A;
  const Eigen::MatrixXd& B;

  Eigen::Index m() const { return A.rows(); }
  Eigen::Index n() const { return A.cols(); }
  Eigen::Index l() const { return B.cols(); }
  void validate() const;
};

enum class XUpdate { gradient, closed_form };
enum class Init { gauss_newton, zeros };

struct AdmmParams {
  double beta1 = 1.0;
  double beta2 = 1.0;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double eta = 0.0;     // 0 selects 1 / (beta1 + beta2 * ||A||_2^2)
  Eigen::VectorXd w;    // empty selects w_i = 1
  int iterations = 100;
  XUpdate x_update = XUpdate::gradient;
  Init init = Init::gauss_newton;
  double gn_lambda = 0.0;  // 0 selects default_gn_lambda

  /// Copy with eta, w and gn_lambda filled in for this A; throws ConfigError if anything is non-positive.
  AdmmParams resolved(const Eigen::MatrixXd& A, const fem::PixelGrid* grid = nullptr) const;
  void validate(Eigen::Index n) const;
};

struct AdmmState {
  Eigen::MatrixXd X;   // n x l
  Eigen::MatrixXd Z;   // n x l
  Eigen::MatrixXd L1;  // n x l
  Eigen::MatrixXd L2;  // m x l

  static AdmmState zeros(Eigen::Index m, Eigen::Index n, Eigen::Index l);
  bool all_finite() const;
};

/// Largest singular value of A by power iteration on A^T A (fixed start vector).
double spectral_norm_estimate(const Eigen::MatrixXd& A, int iterations = 50);

/// 1e-2 * trace(A^T A) / trace(L^T L).
double default_gn_lambda(const Eigen::MatrixXd& A, const Eigen::SparseMatrix<double>& L);

/// Cached Cholesky factor of A^T A + lambda L^T L.
class GaussNewton {
 public:
  GaussNewton(const Eigen::MatrixXd& A, const Eigen::SparseMatrix<double>& L, double lambda);
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  const Eigen::MatrixXd& system() const { return system_; }
  double lambda() const { return lambda_; }

 private:
  Eigen::MatrixXd at_;  // A^T
  double lambda_;
  Eigen::MatrixXd system_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// X0 = (A^T A + lambda L^T L)^{-1} A^T B.
Eigen::MatrixXd gn_init(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double lambda,
                        const Eigen::SparseMatrix<double>& L);

/// sum_i w_i ||X_i||_2 (w empty means all ones).
double weighted_l21(const Eigen::MatrixXd& X, const Eigen::VectorXd& w);

/// X-dependent part of the augmented Lagrangian at fixed (Z, L1, L2):
/// <L1, X - Z> + beta1/2 ||X - Z||^2 + <L2, B - AX> + beta2/2 ||B - AX||^2.
double x_subproblem_objective(const AdmmState& state, const LinearizedModel& model, const AdmmParams& params);

/// G = beta1 X + beta2 A^T(AX) - (beta1 Z - L1 + beta2 A^T B + A^T L2).
Eigen::MatrixXd admm_gradient(const AdmmState& state, const LinearizedModel& model, double beta1, double beta2);
Eigen::MatrixXd admm_gradient(const AdmmState& state, const LinearizedModel& model, const AdmmParams& params);

/// X - eta G.
Eigen::MatrixXd x_update_gd(const AdmmState& state, const LinearizedModel& model, double eta, double beta1,
                            double beta2);
Eigen::MatrixXd x_update_gd(const AdmmState& state, const LinearizedModel& model, const AdmmParams& params);

/// Exact minimiser of the X sub-problem; refuses n > kClosedFormLimit.
class ClosedFormXUpdate {
 public:
  static constexpr Eigen::Index kClosedFormLimit = 4096;
  ClosedFormXUpdate(const Eigen::MatrixXd& A, double beta1, double beta2);
  Eigen::MatrixXd operator()(const AdmmState& state, const LinearizedModel& model) const;

 private:
  double beta1_;
  double beta2_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};
Eigen::MatrixXd x_update_closed_form(const AdmmState& state, const LinearizedModel& model, const AdmmParams& params);

/// Row-wise group soft threshold: Z_i = max(||U_i|| - t_i, 0) U_i / ||U_i||.
Eigen::MatrixXd row_shrink(const Eigen::MatrixXd& U, const Eigen::VectorXd& t);

/// row_shrink(X + L1/beta1, w/beta1).
Eigen::MatrixXd z_update(const AdmmState& state, const AdmmParams& params);

/// L1 + c1 (X - Z).
Eigen::MatrixXd lambda1_step(const Eigen::MatrixXd& L1, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, double c1);
/// L2 + c2 (B - AX).
Eigen::MatrixXd lambda2_step(const Eigen::MatrixXd& L2, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                             const Eigen::MatrixXd& X, double c2);

/// L1 + c1 (X - Z) and L2 + c2 (B - AX).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> multiplier_step(const AdmmState& state, const LinearizedModel& model,
                                                            double c1, double c2);
/// multiplier_step with c1 = gamma1 beta1, c2 = gamma2 beta2.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> multiplier_updates(const AdmmState& state, const LinearizedModel& model,
                                                               const AdmmParams& params);

struct IterationRecord {
  int iteration = 0;
  double primal_residual = 0.0;  // ||X - Z||_F
  double data_residual = 0.0;    // ||AX - B||_F
  double objective = 0.0;        // weighted l2,1 of Z
  double rmse = 0.0;             // mean per-frequency RMSE of Z vs truth; NaN without truth
};

struct AdmmResult {
  AdmmState state;
  std::vector<IterationRecord> history;
  const Eigen::MatrixXd& image() const { return state.Z; }
};

/// K iterations of {X, Z, multipliers} from X = x0 and Z = L1 = L2 = 0.
AdmmResult solve(const LinearizedModel& model, const AdmmParams& params, const Eigen::MatrixXd& x0,
                 const Eigen::MatrixXd* ground_truth = nullptr);

/// Same, with x0 from gn_init (grid Laplacian) or zeros according to params.init.
AdmmResult solve(const LinearizedModel& model, const AdmmParams& params, const fem::PixelGrid& grid,
                 const Eigen::MatrixXd* ground_truth = nullptr);

/// iteration,primal_residual,data_residual,objective,rmse
void write_history_csv(const std::filesystem::path& path, const std::vector<IterationRecord>& history);

/// Mean over columns of sqrt(mean squared error of the column).
double mean_column_rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

}  // namespace mfeit::admm
