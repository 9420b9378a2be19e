#pragma once

// Multi-regime exponential concentration envelopes.
//
// A profile is the envelope
//
//   alpha(t) = min(1, C * max_l exp(-(t / (c * scale_l))^exponent_l))
//
// i.e. a maximum of E_{q_l}(sigma_l) decays. Regimes are kept sorted by
// strictly decreasing exponent; the first regime governs small t (the
// observable diameter), the last one governs the far tail.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace conclab {

inline constexpr double kDefaultOuterConstant = 2.0;          // C
inline const double kDefaultInnerConstant = std::sqrt(2.0);  // c

struct Regime {
  double exponent;
  double scale;

  bool operator==(const Regime&) const = default;
};

struct ProfileConstants {
  double C = kDefaultOuterConstant;
  double c = kDefaultInnerConstant;

  bool operator==(const ProfileConstants&) const = default;
};

enum class Normalization {
  merge_and_prune,  // merge duplicate exponents and drop dominated regimes
  merge_only,       // merge duplicate exponents only
};

class ConcentrationProfile {
 public:
  ConcentrationProfile(std::vector<Regime> regimes, ProfileConstants constants = {},
                       Normalization norm = Normalization::merge_and_prune);

  const std::vector<Regime>& regimes() const noexcept { return regimes_; }
  std::size_t size() const noexcept { return regimes_.size(); }
  double C() const noexcept { return constants_.C; }
  double c() const noexcept { return constants_.c; }
  ProfileConstants constants() const noexcept { return constants_; }

  // Profile of lambda * f(Z) given this profile for f(Z): every scale times lambda.
  ConcentrationProfile scaled(double lambda) const;
  ConcentrationProfile with_constants(ProfileConstants constants) const;

  // Union of regimes (independent concatenation); constants of *this are kept.
  ConcentrationProfile merged_with(const ConcentrationProfile& other) const;

  nlohmann::json to_json() const;
  static ConcentrationProfile from_json(const nlohmann::json& j);

  bool operator==(const ConcentrationProfile&) const = default;

 private:
  std::vector<Regime> regimes_;
  ProfileConstants constants_;
};

// Hypotheses of the generalized product theorem: m factors, joint
// observable diameter sigma, mu_i >= E ||Z_i||'_i.
struct ProductSpec {
  int m = 1;
  double q = 2.0;
  double sigma = 1.0;
  std::vector<double> mu;

  void validate() const;
};

// nu^{(k)}: product of the k largest entries of nu (1 for k = 0).
double nu_superscript(std::span<const double> nu, int k);

// Regimes {(q/l, sigma^l mu^{(m-l)}) : l = 1..m}, normalized.
ConcentrationProfile product_profile(const ProductSpec& spec, ProfileConstants constants = {},
                                     Normalization norm = Normalization::merge_and_prune);

// (t_1, ..., t_{m+1}) with t_1 = 0, t_i = mu^{(m-i)} mu_(i)^i, t_{m+1} = +inf.
// Regime l of the unpruned product profile attains the maximum of the
// envelope for t in [c t_l, c t_{l+1}].
std::vector<double> breakpoints(const ProductSpec& spec);

double tail_bound(const ConcentrationProfile& profile, double t);

// Index of the regime attaining the envelope maximum at t (first on ties).
std::size_t dominant_regime(const ConcentrationProfile& profile, double t);

// C * max_l (r / q_l)^{r / q_l} (c * scale_l)^r.
double moment_bound(const ConcentrationProfile& profile, double r);

// X^T A X  in  E_2(K^2 ||A||_F) + E_1(K^2 ||A||).
ConcentrationProfile hanson_wright_profile(double frobenius, double spectral, double K,
                                           ProfileConstants constants = {});

struct ProfileWithWarnings {
  ConcentrationProfile profile;
  std::vector<std::string> warnings;
};

// Product profile for a large number of factors: every scale times kappa^m.
// Reports (does not reject) a violated log(m)^{1/q} <= mu_(1)/sigma.
ProfileWithWarnings high_order_profile(const ProductSpec& spec, double kappa,
                                       ProfileConstants constants = {});

// Z^{⊙m} for a single factor with E||Z|| <= mu0:
// E_q(m sigma ((1+eps) mu0)^{m-1}) + E_{q/m}((kappa sigma)^m).
ConcentrationProfile power_profile(int m, double q, double sigma, double mu0, double eps,
                                   double kappa, ProfileConstants constants = {});

enum class SpaceKind { linf, euclidean, spectral, frobenius, nuclear, diag_seminorm };

SpaceKind parse_space_kind(std::string_view name);
std::string_view to_string(SpaceKind kind);

// Norm degree eta of the given normed space (n is ignored for R^p).
double norm_degree(SpaceKind kind, int p, int n = 1);

}  // namespace conclab
