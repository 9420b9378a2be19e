#pragma once

// Resolvents Q = (I_p - X D Y^T / n)^{-1}, their deterministic equivalent
// through the delta fixed point, leave-one-out identities and the robust
// regression fixed point.
//
// Sign convention: with Q defined as above, Sherman-Morrison gives
//   Q = Q_{-i} + (1/n) D_i Q_{-i} x_i y_i^T Q_{-i} / (1 - D_i Delta_i)
//   Q x_i = Q_{-i} x_i / (1 - D_i Delta_i)
// and the deterministic equivalent uses E[D_i / (1 - delta_i D_i)].

#include <optional>
#include <vector>

#include "conclab/generators.hpp"
#include "conclab/linalg.hpp"
#include "json.hpp"

namespace conclab {

struct ResolventSpec {
  Eigen::MatrixXd X;  // p x n
  Eigen::MatrixXd Y;  // p x n
  Eigen::VectorXd D;  // n diagonal entries
  double kappa = 0.0;    // max(||X||, ||Y||) / sqrt n, measured
  double kappa_D = 0.0;  // max |D_i|, measured
  double epsilon = 0.0;

  // Measures kappa, kappa_D and rejects kappa^2 kappa_D > 1 - epsilon.
  static ResolventSpec make(Eigen::MatrixXd X, Eigen::MatrixXd Y, Eigen::VectorXd D, double epsilon);

  int p() const noexcept { return static_cast<int>(X.rows()); }
  int n() const noexcept { return static_cast<int>(X.cols()); }
  double margin() const noexcept { return kappa * kappa * kappa_D; }
};

// kappa^2 kappa_D for the given draw, without constructing a spec.
double admissibility_measure(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const Eigen::VectorXd& D);

struct Resolvent {
  Eigen::MatrixXd Q;
  double residual = 0.0;  // ||(I - X D Y^T / n) Q - I||_F
  double norm = 0.0;      // ||Q||
  double bound = 0.0;     // 1 / epsilon
  int refinements = 0;

  bool within_bound() const noexcept { return norm <= bound * (1 + 1e-12); }
};

Resolvent resolvent(const ResolventSpec& spec);

// Expectations E[D_i / (1 - delta_i D_i)] are sample averages over the rows
// of `d_samples` (T x n; one row for deterministic D).
Eigen::VectorXd resolvent_weights(const Eigen::VectorXd& delta, const RowMatrix& d_samples);

// (I_p - (1/n) sum_i e_i Sigma_i)^{-1}; `sigma` holds either one matrix shared
// by all columns or n of them.
Eigen::MatrixXd q_tilde(const Eigen::VectorXd& delta, const RowMatrix& d_samples,
                        const std::vector<Eigen::MatrixXd>& sigma);

struct FixedPointOptions {
  double tol = 1e-10;
  int max_iter = 500;
  double omega = 1.0;
};

struct FixedPointState {
  Eigen::VectorXd delta;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_trace;

  nlohmann::json to_json() const;
};

// delta_i = (1/n) tr(Sigma_i Q_tilde^delta), by damped Picard iteration from
// delta = 0 with step halving whenever the residual would increase.
FixedPointState solve_delta(const std::vector<Eigen::MatrixXd>& sigma, int n, const RowMatrix& d_samples,
                            const FixedPointOptions& opts = {});

// Random diagonal D: a constant, i.i.d. uniform on two atoms, or
// scale * fn(x_i[coordinate]) read off the columns of X.
struct DiagonalModel {
  enum class Kind { constant, two_point, coordinate_fn };

  Kind kind = Kind::constant;
  double d1 = 0.0;          // constant value, or first atom
  double d2 = 0.0;          // second atom (two_point)
  double scale = 1.0;       // coordinate_fn: D_i = scale * fn(x_i[coordinate])
  ScalarFn fn = ScalarFn::clip;
  int coordinate = 0;

  static DiagonalModel constant(double d);
  static DiagonalModel two_point(double d1, double d2);
  static DiagonalModel coordinate_fn(ScalarFn fn, double scale, int coordinate = 0);

  bool deterministic() const noexcept { return kind == Kind::constant; }
  // Draw for one trial; two_point uses `eng`, coordinate_fn reads X.
  Eigen::VectorXd draw(const Eigen::MatrixXd& X, Engine& eng) const;

  nlohmann::json to_json() const;
  static DiagonalModel from_json(const nlohmann::json& j);
};

// Samples of D for the expectations in q_tilde: exact atoms for constant and
// two-point models, `aux_draws` auxiliary draws otherwise.
RowMatrix diagonal_samples(const DiagonalModel& dm, const MatrixModel& mm, int aux_draws, std::uint64_t master_seed,
                           std::uint32_t stream);

// Sigma_i = E[x_i y_i^T] for the column coupling: analytic for gaussian
// columns, else estimated from `aux_draws` draws.
struct SigmaEstimate {
  std::vector<Eigen::MatrixXd> sigma;  // one shared matrix
  bool analytic = true;
  double standard_error = 0.0;  // Frobenius norm of the entrywise standard errors
};
SigmaEstimate column_covariance(const MatrixModel& mm, int aux_draws, std::uint64_t master_seed,
                                std::uint32_t stream);

struct MonteCarloEQ {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd standard_error;
  int accepted = 0;
  int rejected = 0;
  double max_residual = 0.0;
  bool all_within_bound = true;

  double rejection_rate() const noexcept {
    return accepted + rejected ? static_cast<double>(rejected) / (accepted + rejected) : 0.0;
  }
};

// Entrywise mean of Q over `trials` admissible draws; throws
// AdmissibilityError when more than 1% of the draws are rejected.
MonteCarloEQ monte_carlo_EQ(const MatrixModel& mm, const DiagonalModel& dm, int trials, double epsilon,
                            std::uint64_t master_seed, std::uint32_t stream = 0);

struct LeaveOneOut {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd Q_minus_i;
  double Delta_i = 0.0;
  double pivot = 0.0;           // 1 - D_i Delta_i
  double identity_error = 0.0;  // relative error of the rank-one update
  double action_error = 0.0;    // relative error of Q x_i = Q_{-i} x_i / pivot
};

LeaveOneOut leave_one_out(const ResolventSpec& spec, int i);

// f(t) = amplitude * tanh(t + offset), or a constant.
struct RobustLink {
  enum class Kind { tanh, constant };

  Kind kind = Kind::tanh;
  double amplitude = 0.2;
  double offset = 0.0;

  double f(double t) const noexcept;
  double fprime(double t) const noexcept;
  double sup_f() const noexcept;
  double sup_fprime() const noexcept;
  double sup_fsecond() const noexcept;

  nlohmann::json to_json() const;
  static RobustLink from_json(const nlohmann::json& j);
};

struct RobustOptions {
  double epsilon = 0.1;  // required margin (1/n)||f'|| ||X||^2 <= 1 - epsilon
  double tol = 1e-12;
  int max_iter = 1000;
  bool leave_one_out = true;
};

struct RobustResult {
  Eigen::VectorXd beta;
  Eigen::VectorXd D;  // f'(x_i^T beta)
  int iterations = 0;
  double contraction_bound = 0.0;  // (1/n) ||f'||_inf ||X||^2
  double max_rate = 0.0;           // max_k ||b_{k+1} - b_k|| / ||b_k - b_{k-1}||
  std::vector<double> step_norms;
  Eigen::VectorXd coupling_norms;  // ||D_{-i} - D^{(i)}_{-i}||_F for each i
  double max_coupling = 0.0;
};

RobustResult robust_beta(const Eigen::MatrixXd& X, const RobustLink& link, const RobustOptions& opts = {});

struct XDYMeanReport {
  int p = 0;
  int n = 0;
  int trials = 0;
  double difference = 0.0;      // ||E_hat[X D Y^T] - E_hat[X E_hat[D] Y^T]||_F
  double standard_error = 0.0;  // Frobenius norm of the entrywise standard errors
  double ratio_to_n = 0.0;

  nlohmann::json to_json() const;
};

XDYMeanReport estimate_XDY_mean(const MatrixModel& mm, const DiagonalModel& dm, int trials,
                                std::uint64_t master_seed, std::uint32_t stream = 0);

}  // namespace conclab
