#pragma once

// Statistics computed trial by trial on ensembles: Hadamard and matrix-product
// chains, bilinear forms, X D Y^T functionals and the diagonal semi-norm.
// Scalar results are SampleEnsembles of width 1.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "conclab/generators.hpp"
#include "conclab/linalg.hpp"
#include "conclab/profile.hpp"

namespace conclab {

// A Lipschitz statistic f : E -> R together with its Lipschitz constant.
struct Observation {
  enum class Kind { linear, linear_matrix, norm_of, distance_to_set, custom };

  Kind kind = Kind::linear;
  Eigen::VectorXd u;       // linear
  Eigen::MatrixXd A;       // linear_matrix (Frobenius pairing tr(A^T M))
  SpaceKind norm = SpaceKind::euclidean;  // norm_of
  double radius = 0.0;     // distance_to_set: distance to the centred ball of this radius
  std::string name;        // custom
  std::function<double(std::span<const double>)> fn;  // custom
  double lipschitz_constant = 1.0;

  static Observation linear(Eigen::VectorXd u);
  static Observation linear_matrix(Eigen::MatrixXd A);
  // norm_of on matrix draws uses the ensemble shape; on vectors only linf and
  // euclidean make sense.
  static Observation norm_of(SpaceKind kind);
  static Observation distance_to_ball(double radius);
  static Observation custom(std::string name, double lipschitz,
                            std::function<double(std::span<const double>)> fn);

  double evaluate(std::span<const double> z, const std::optional<MatrixShape>& shape = {}) const;
  std::string label() const;
  nlohmann::json to_json() const;
};

// Trial alignment for multi-input operations. Deterministic ensembles align
// with anything of the same N; random ones must share the master seed and
// either come from one matrix-model draw (same group) or use identical or
// disjoint stream sets.
void check_aligned(const std::vector<const SampleEnsemble*>& ensembles);

// Provenance of an ensemble computed from the given (aligned) inputs.
Provenance combined_provenance(const std::vector<const SampleEnsemble*>& ensembles);

SampleEnsemble observe(const SampleEnsemble& ens, const Observation& obs);

SampleEnsemble hadamard_chain(const std::vector<SampleEnsemble>& factors);

// Per-trial product M_1 ... M_m of matrix draws.
SampleEnsemble matrix_chain(const std::vector<SampleEnsemble>& factors);

// Per-trial transpose of matrix draws.
SampleEnsemble transpose(const SampleEnsemble& m);

// Vectors: x^T A y per trial. Matrices: <B, Y^T A X> = tr(B^T Y^T A X); B
// defaults to the identity, giving tr(Y^T A X).
SampleEnsemble bilinear_form(const SampleEnsemble& x, const Eigen::MatrixXd& A, const SampleEnsemble& y);
SampleEnsemble bilinear_form(const SampleEnsemble& x, const Eigen::MatrixXd& A, const SampleEnsemble& y,
                             const Eigen::MatrixXd& B);

// X D Y^T u per trial; D holds the n diagonal entries per trial.
SampleEnsemble xdy_action(const SampleEnsemble& x, const SampleEnsemble& d, const SampleEnsemble& y,
                          const Eigen::VectorXd& u);

enum class PairingMode { frobenius, nuclear };

struct PairingResult {
  SampleEnsemble values;
  std::vector<std::string> warnings;
};

// tr(A X D Y^T) per trial. Under frobenius mode A should satisfy
// ||A||_F <= 1, under nuclear mode ||A||_* <= 1; a violation is a warning.
PairingResult trace_pairing(const Eigen::MatrixXd& A, const SampleEnsemble& x, const SampleEnsemble& d,
                            const SampleEnsemble& y, PairingMode mode);

struct DiagStat {
  SampleEnsemble values;  // ||Y^T A X||_d per trial
  double mean = 0.0;
  double normalization = 1.0;  // factor applied to A to get ||A||_F <= 1
};

DiagStat ydax_diag_stat(const SampleEnsemble& x, const SampleEnsemble& y, const Eigen::MatrixXd& A);

// Single-column CSV with the statistic's name as header.
void export_scalar_csv(const SampleEnsemble& values, const std::filesystem::path& path,
                       const std::string& statistic);

}  // namespace conclab
