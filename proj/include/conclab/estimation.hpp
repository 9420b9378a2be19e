#pragma once

// Empirical concentration functions, tail-exponent fits and checks of
// samples against declared concentration profiles.

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "conclab/generators.hpp"
#include "conclab/profile.hpp"
#include "json.hpp"

namespace conclab {

enum class CenterKind { median, mean, independent_copy };

CenterKind parse_center_kind(std::string_view name);
std::string_view to_string(CenterKind kind);

// Default grid: `points` log-spaced values from the lo_quantile to the
// (1 - 1/(2N)) quantile of |v - center|. An explicit grid overrides both.
struct TailGridSpec {
  int points = 256;
  double lo_quantile = 0.5;
  std::optional<double> hi_quantile;
  std::vector<double> explicit_grid;
};

// DKW half-width sqrt(ln(2/delta) / (2N)).
double dkw_band(Eigen::Index N, double delta);

struct EmpiricalTail {
  std::vector<double> t;
  std::vector<double> alpha;  // P_hat(|v - center| >= t)
  double center = 0.0;
  CenterKind center_kind = CenterKind::median;
  Eigen::Index N = 0;  // sample count actually used (halved for independent_copy)
  double delta = 0.05;
  double band = 0.0;

  nlohmann::json to_json() const;
  // Columns t, alpha_hat, band_lo, band_hi.
  void to_csv(const std::filesystem::path& path) const;
};

EmpiricalTail empirical_tail(std::span<const double> values, CenterKind center = CenterKind::median,
                             const TailGridSpec& grid = {}, double delta = 0.05);

// Sorted |v - center| for the given centring (pairs differenced for
// independent_copy), plus the center used.
struct Deviations {
  std::vector<double> sorted;
  double center = 0.0;
};
Deviations deviations(std::span<const double> values, CenterKind center);

double median(std::span<const double> values);

struct FitOptions {
  double alpha_lo = 1e-3;
  double alpha_hi = 1e-1;
  double C = 1.0;        // outer constant assumed by the fit
  bool free_C = false;   // choose C in [1, 20] maximizing r2 instead
  int min_points = 5;
  double t_min = 0.0;    // restrict the fit to t in [t_min, t_max]
  double t_max = std::numeric_limits<double>::infinity();
};

struct TailFit {
  double q_hat = 0.0;
  double scale_hat = 0.0;  // c * sigma estimate
  double C = 1.0;
  double alpha_lo = 0.0;
  double alpha_hi = 0.0;
  double t_lo = 0.0;
  double t_hi = 0.0;
  int points = 0;
  double r2 = 0.0;

  nlohmann::json to_json() const;
};

// Least squares of log(-log(alpha_hat / C)) on log t over grid points with
// alpha_lo < alpha_hat < alpha_hi.
TailFit fit_tail_exponent(const EmpiricalTail& tail, const FitOptions& opts = {});

// Max over observation columns of the empirical standard deviation.
struct DiameterReport {
  double diameter = 0.0;
  std::vector<double> stds;
  std::vector<std::string> labels;

  nlohmann::json to_json() const;
};
DiameterReport observable_diameter(const SampleEnsemble& observed, std::vector<std::string> labels = {});

struct MomentCheck {
  double r = 0.0;
  double empirical = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct ProfileCheckOptions {
  CenterKind center = CenterKind::median;
  double delta = 0.05;
  TailGridSpec grid;
  std::vector<double> moment_orders{1, 2, 4, 6};
  std::optional<FitOptions> fit = FitOptions{};
};

struct ProfileCheck {
  explicit ProfileCheck(ConcentrationProfile p) : profile(std::move(p)) {}

  ConcentrationProfile profile;  // already scaled by the Lipschitz constant
  double lipschitz_constant = 1.0;
  EmpiricalTail tail;
  double envelope_fraction = 0.0;  // grid points with alpha_hat - band <= bound
  double worst_excess = 0.0;       // max(alpha_hat - band - bound), <= 0 when all hold
  double worst_t = 0.0;
  std::vector<MomentCheck> moments;
  std::optional<TailFit> fit;
  std::string fit_error;
  double leading_exponent = 0.0;
  double trailing_exponent = 0.0;

  bool envelope_pass() const noexcept { return envelope_fraction == 1.0; }
  bool moments_pass() const noexcept;
  bool pass() const noexcept { return envelope_pass() && moments_pass(); }

  nlohmann::json to_json() const;
};

// Empirical r-th absolute moment about the mean.
double centered_moment(std::span<const double> values, double r);

ProfileCheck check_profile(std::span<const double> values, const ConcentrationProfile& profile,
                           double lipschitz_constant = 1.0, const ProfileCheckOptions& opts = {});

// One dimension of a norm-degree scaling study.
struct NormSample {
  int p = 1;
  int n = 1;
  double mean_norm = 0.0;  // empirical E||Z - E_hat Z||
  Eigen::Index trials = 0;
};

struct NormCheck {
  SpaceKind kind = SpaceKind::euclidean;
  double q = 2.0;
  double sigma = 1.0;
  std::vector<NormSample> samples;
  std::vector<double> eta;
  std::vector<double> constants;  // mean_norm / (eta^{1/q} sigma)
  double fitted_constant = 0.0;   // geometric mean of constants
  double stability = 0.0;         // max / min of constants

  nlohmann::json to_json() const;
};

NormCheck norm_expectation_check(SpaceKind kind, std::vector<NormSample> samples, double q = 2.0,
                                 double sigma = 1.0);

// E_hat ||Z - E_hat Z|| on a stored ensemble in the given norm.
double mean_centered_norm(const SampleEnsemble& ens, SpaceKind kind);

}  // namespace conclab
