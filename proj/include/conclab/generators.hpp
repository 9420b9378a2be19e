#pragma once

// Reproducible samplers for the fundamental concentrated-vector families and
// their Lipschitz images.
//
// Declared profiles (default constants C = 2, c = sqrt(2)):
//   gaussian, sphere (radius sqrt p), ball (radius sqrt p), cube [0, sqrt p]^p  -> E_2(1)
//   laplace (i.i.d. density e^{-|x|}/2)                                        -> E_1(1)
//   lq_ball(q) (uniform on the unit ||.||_q ball)                             -> E_q(p^{-1/q})
// plus two fixtures used to probe estimators: `replicated` (X, ..., X) with X
// scalar normal, which is E_2(sqrt p) and NOT concentrated, and `zero`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "conclab/linalg.hpp"
#include "conclab/profile.hpp"
#include "conclab/rng.hpp"
#include "json.hpp"

namespace conclab {

enum class VectorKind { gaussian, sphere, ball, cube, laplace, lq_ball, replicated, zero, concat };

VectorKind parse_vector_kind(std::string_view name);
std::string_view to_string(VectorKind kind);

// Scalar 1-Lipschitz functions applied coordinatewise.
enum class ScalarFn { tanh, sin, abs, relu, clip };

ScalarFn parse_scalar_fn(std::string_view name);
std::string_view to_string(ScalarFn fn);
double apply_scalar_fn(ScalarFn fn, double x);

class LipschitzTransform {
 public:
  struct Affine {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
  };
  struct Coordinatewise {
    ScalarFn fn;
  };
  struct Scaling {
    double lambda;
  };

  static LipschitzTransform affine(Eigen::MatrixXd A, Eigen::VectorXd b);
  static LipschitzTransform coordinatewise(ScalarFn fn);
  static LipschitzTransform scaling(double lambda);

  // Upper bound on the Lipschitz constant; exact spectral norm for affine maps.
  double lipschitz_constant() const noexcept { return lipschitz_; }
  int output_dim(int input_dim) const;
  void apply(std::span<const double> in, std::span<double> out) const;

  const std::variant<Affine, Coordinatewise, Scaling>& map() const noexcept { return map_; }

  nlohmann::json to_json() const;
  static LipschitzTransform from_json(const nlohmann::json& j);

 private:
  LipschitzTransform(std::variant<Affine, Coordinatewise, Scaling> map, double lipschitz)
      : map_(std::move(map)), lipschitz_(lipschitz) {}

  std::variant<Affine, Coordinatewise, Scaling> map_;
  double lipschitz_;
};

struct VectorModel {
  VectorKind kind = VectorKind::gaussian;
  int dim = 1;
  double q = 2.0;  // lq_ball only
  std::optional<LipschitzTransform> transform;
  std::vector<VectorModel> parts;  // concat only

  static VectorModel of(VectorKind kind, int dim);
  static VectorModel lq_ball(int dim, double q);

  VectorModel with_transform(LipschitzTransform t) const;

  // Dimension before the transform (sum of parts for concat).
  int base_dim() const;
  int output_dim() const;
  ConcentrationProfile declared_profile() const;

  void validate() const;
  nlohmann::json to_json() const;
  static VectorModel from_json(const nlohmann::json& j);
};

// Product model on E_1 x ... x E_k with the l-infinity joint norm; the
// declared profile is the union of the parts' regimes.
VectorModel concat(const std::vector<VectorModel>& models);

// Where an ensemble's randomness came from. Ensembles with the same `group`
// come from one matrix model draw; otherwise stream sets must be identical
// (the same vector reused) or disjoint (independent).
struct Provenance {
  std::uint64_t master_seed = 0;
  std::vector<std::uint32_t> streams;  // sorted; empty = deterministic
  std::uint64_t group = 0;             // 0 = none
  std::string rule{kSeedRule};

  bool deterministic() const noexcept { return streams.empty(); }
  nlohmann::json to_json() const;
  static Provenance from_json(const nlohmann::json& j);
};

struct MatrixShape {
  int rows = 0;
  int cols = 0;
};

// N realizations; row i of `data` is trial i. Matrix draws are flattened
// row-major: entry (r, c) of a rows x cols draw sits at column r * cols + c.
struct SampleEnsemble {
  RowMatrix data;
  nlohmann::json model;
  Provenance provenance;
  std::optional<MatrixShape> shape;

  Eigen::Index trials() const noexcept { return data.rows(); }
  Eigen::Index width() const noexcept { return data.cols(); }

  Eigen::MatrixXd matrix(Eigen::Index trial) const;

  // Deterministic ensemble repeating one value per trial.
  static SampleEnsemble constant(Eigen::Index trials, const Eigen::VectorXd& row);
  static SampleEnsemble constant_matrix(Eigen::Index trials, const Eigen::MatrixXd& m);
};

// Draw trial `trial` of `model` into out (size model.output_dim()).
void draw_vector(const VectorModel& model, std::uint64_t master_seed, std::uint32_t stream,
                 std::uint64_t trial, std::uint64_t column, std::span<double> out);

SampleEnsemble sample(const VectorModel& model, Eigen::Index N, std::uint64_t master_seed,
                      std::uint32_t stream = 0);

enum class Coupling {
  none,          // X only
  independent,   // y_i drawn from its own stream
  identical,     // y_i = x_i
  gaussian_mix,  // y_i = (x_i + g_i) / sqrt 2, g_i fresh standard gaussian
};

Coupling parse_coupling(std::string_view name);
std::string_view to_string(Coupling c);

// p x n random matrices with independent columns. X uses seed stream `stream`,
// the Y side (when coupled) additionally uses `stream + 1`.
struct MatrixModel {
  int p = 1;
  int n = 1;
  std::vector<VectorModel> columns;  // one model for all columns, or n models
  Coupling coupling = Coupling::none;

  static MatrixModel iid(int p, int n, const VectorModel& column, Coupling coupling = Coupling::none);

  const VectorModel& column(int i) const;
  void validate() const;
  nlohmann::json to_json() const;
  static MatrixModel from_json(const nlohmann::json& j);
};

struct MatrixDraws {
  SampleEnsemble x;
  std::optional<SampleEnsemble> y;
};

// One trial of a matrix model, written into x (and y if coupled).
void draw_matrix(const MatrixModel& model, std::uint64_t master_seed, std::uint32_t stream,
                 std::uint64_t trial, Eigen::MatrixXd& x, Eigen::MatrixXd* y);

MatrixDraws sample_matrix(const MatrixModel& model, Eigen::Index N, std::uint64_t master_seed,
                          std::uint32_t stream = 0);

// Binary container: "CLABENS1", u64 LE header length, JSON header, then
// trials * width little-endian IEEE-754 doubles, row-major.
void save_ensemble(const SampleEnsemble& ens, const std::filesystem::path& path);
SampleEnsemble load_ensemble(const std::filesystem::path& path);

// RFC 4180 CSV with a header row (c0, c1, ... or the given column names).
void export_csv(const SampleEnsemble& ens, const std::filesystem::path& path,
                const std::vector<std::string>& column_names = {});

}  // namespace conclab
