#include "conclab/profile.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <stdexcept>

#include "conclab/errors.hpp"

namespace conclab {

namespace {

void check_regime(const Regime& r) {
  if (!(r.exponent > 0.0) || !std::isfinite(r.exponent)) {
    throw std::out_of_range("regime exponent must be positive and finite");
  }
  if (!(r.scale > 0.0) || !std::isfinite(r.scale)) {
    throw std::out_of_range("regime scale must be positive and finite");
  }
}

// Regime l contributes exp(-g_l(t)) with log g_l = e_l (log t - log(c s_l)).
// In u = log t these are lines; the envelope maximum is attained on their
// lower envelope. Lines are sorted by decreasing slope.
double crossing(const Regime& a, const Regime& b) {
  const double ba = std::log(a.scale);
  const double bb = std::log(b.scale);
  return (a.exponent * ba - b.exponent * bb) / (a.exponent - b.exponent);
}

std::vector<Regime> lower_envelope(const std::vector<Regime>& sorted) {
  std::vector<Regime> hull;
  for (const Regime& r : sorted) {
    while (hull.size() >= 2) {
      const Regime& a = hull[hull.size() - 2];
      const Regime& b = hull.back();
      const double left = crossing(a, b);
      const double right = crossing(b, r);
      // b is on the envelope only on [left, right]; a touching point does
      // not change the maximum.
      if (right <= left + 1e-9 * (1.0 + std::abs(left))) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(r);
  }
  return hull;
}

}  // namespace

ConcentrationProfile::ConcentrationProfile(std::vector<Regime> regimes, ProfileConstants constants,
                                           Normalization norm)
    : constants_(constants) {
  if (regimes.empty()) {
    throw std::invalid_argument("a concentration profile needs at least one regime");
  }
  if (!(constants.C >= 1.0) || !std::isfinite(constants.C)) {
    throw std::out_of_range("outer constant C must be >= 1");
  }
  if (!(constants.c > 0.0) || !std::isfinite(constants.c)) {
    throw std::out_of_range("inner constant c must be positive");
  }
  for (const Regime& r : regimes) check_regime(r);

  std::sort(regimes.begin(), regimes.end(), [](const Regime& a, const Regime& b) {
    return a.exponent > b.exponent || (a.exponent == b.exponent && a.scale > b.scale);
  });
  std::vector<Regime> merged;
  for (const Regime& r : regimes) {
    if (!merged.empty() && merged.back().exponent == r.exponent) continue;  // larger scale first
    merged.push_back(r);
  }
  regimes_ = norm == Normalization::merge_and_prune ? lower_envelope(merged) : std::move(merged);
}

ConcentrationProfile ConcentrationProfile::scaled(double lambda) const {
  if (!(lambda > 0.0)) throw std::out_of_range("profile scaling factor must be positive");
  std::vector<Regime> r = regimes_;
  for (auto& reg : r) reg.scale *= lambda;
  return ConcentrationProfile(std::move(r), constants_, Normalization::merge_only);
}

ConcentrationProfile ConcentrationProfile::with_constants(ProfileConstants constants) const {
  return ConcentrationProfile(regimes_, constants, Normalization::merge_only);
}

ConcentrationProfile ConcentrationProfile::merged_with(const ConcentrationProfile& other) const {
  std::vector<Regime> r = regimes_;
  r.insert(r.end(), other.regimes_.begin(), other.regimes_.end());
  return ConcentrationProfile(std::move(r), constants_);
}

nlohmann::json ConcentrationProfile::to_json() const {
  nlohmann::json regs = nlohmann::json::array();
  for (const Regime& r : regimes_) {
    regs.push_back({{"exponent", r.exponent}, {"scale", r.scale}});
  }
  return {{"regimes", regs}, {"C", constants_.C}, {"c", constants_.c}};
}

ConcentrationProfile ConcentrationProfile::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("profile must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "regimes" && key != "C" && key != "c") {
      throw ConfigError("unknown profile key '" + key + "'");
    }
  }
  std::vector<Regime> regimes;
  for (const auto& r : j.at("regimes")) {
    for (const auto& [key, _] : r.items()) {
      if (key != "exponent" && key != "scale") throw ConfigError("unknown regime key '" + key + "'");
    }
    regimes.push_back({r.at("exponent").get<double>(), r.at("scale").get<double>()});
  }
  ProfileConstants k;
  if (j.contains("C")) k.C = j.at("C").get<double>();
  if (j.contains("c")) k.c = j.at("c").get<double>();
  return ConcentrationProfile(std::move(regimes), k, Normalization::merge_only);
}

void ProductSpec::validate() const {
  if (m < 1) throw std::out_of_range("product needs m >= 1 factors");
  if (!(q > 0.0)) throw std::out_of_range("q must be positive");
  if (!(sigma > 0.0)) throw std::out_of_range("sigma must be positive");
  if (static_cast<int>(mu.size()) != m) {
    throw std::invalid_argument("mu must have exactly m entries");
  }
  for (double v : mu) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::out_of_range("every mu_i must be positive");
  }
}

double nu_superscript(std::span<const double> nu, int k) {
  if (k < 0 || k > static_cast<int>(nu.size())) {
    throw std::out_of_range("nu_superscript: k must lie in [0, m]");
  }
  std::vector<double> sorted(nu.begin(), nu.end());
  for (double v : sorted) {
    if (!(v >= 0.0)) throw std::out_of_range("nu_superscript: entries must be nonnegative");
  }
  std::partial_sort(sorted.begin(), sorted.begin() + k, sorted.end(), std::greater<>());
  double prod = 1.0;
  for (int i = 0; i < k; ++i) prod *= sorted[i];
  return prod;
}

ConcentrationProfile product_profile(const ProductSpec& spec, ProfileConstants constants,
                                     Normalization norm) {
  spec.validate();
  std::vector<Regime> regimes;
  regimes.reserve(spec.m);
  for (int l = 1; l <= spec.m; ++l) {
    regimes.push_back({spec.q / l, std::pow(spec.sigma, l) * nu_superscript(spec.mu, spec.m - l)});
  }
  return ConcentrationProfile(std::move(regimes), constants, norm);
}

std::vector<double> breakpoints(const ProductSpec& spec) {
  spec.validate();
  const int m = spec.m;
  std::vector<double> asc = spec.mu;
  std::sort(asc.begin(), asc.end());
  std::vector<double> t(m + 1);
  t[0] = 0.0;
  t[m] = std::numeric_limits<double>::infinity();
  for (int i = 2; i <= m; ++i) {
    // mu^{(m-i)} is the product of the m - i largest, i.e. mu_(i+1) ... mu_(m).
    double top = 1.0;
    for (int j = i; j < m; ++j) top *= asc[j];
    t[i - 1] = top * std::pow(asc[i - 1], i);
  }
  return t;
}

namespace {

double min_rate(const ConcentrationProfile& profile, double t, std::size_t* arg) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_i = 0;
  const auto& regs = profile.regimes();
  for (std::size_t i = 0; i < regs.size(); ++i) {
    const double g = std::pow(t / (profile.c() * regs[i].scale), regs[i].exponent);
    if (g < best) {
      best = g;
      best_i = i;
    }
  }
  if (arg) *arg = best_i;
  return best;
}

}  // namespace

double tail_bound(const ConcentrationProfile& profile, double t) {
  if (!(t >= 0.0)) throw std::out_of_range("tail_bound: t must be nonnegative");
  const double g = min_rate(profile, t, nullptr);
  return std::min(1.0, profile.C() * std::exp(-g));
}

std::size_t dominant_regime(const ConcentrationProfile& profile, double t) {
  if (!(t >= 0.0)) throw std::out_of_range("dominant_regime: t must be nonnegative");
  std::size_t arg = 0;
  min_rate(profile, t, &arg);
  return arg;
}

double moment_bound(const ConcentrationProfile& profile, double r) {
  if (!(r > 0.0)) throw std::out_of_range("moment_bound: r must be positive");
  double best = -std::numeric_limits<double>::infinity();
  for (const Regime& reg : profile.regimes()) {
    const double a = r / reg.exponent;
    best = std::max(best, a * std::log(a) + r * std::log(profile.c() * reg.scale));
  }
  return profile.C() * std::exp(best);
}

ConcentrationProfile hanson_wright_profile(double frobenius, double spectral, double K,
                                           ProfileConstants constants) {
  if (frobenius < 0.0 || spectral < 0.0) {
    throw std::out_of_range("hanson_wright_profile: norms must be nonnegative");
  }
  if (!(K > 0.0)) throw std::out_of_range("hanson_wright_profile: K must be positive");
  if (spectral > frobenius * (1.0 + 1e-9) + 1e-300) {
    throw std::invalid_argument("hanson_wright_profile: spectral norm exceeds Frobenius norm");
  }
  const double k2 = K * K;
  return ConcentrationProfile({{2.0, k2 * frobenius}, {1.0, k2 * spectral}}, constants);
}

ProfileWithWarnings high_order_profile(const ProductSpec& spec, double kappa,
                                       ProfileConstants constants) {
  if (!(kappa > 0.0)) throw std::out_of_range("high_order_profile: kappa must be positive");
  spec.validate();
  const double factor = std::pow(kappa, spec.m);
  std::vector<Regime> regimes;
  for (int l = 1; l <= spec.m; ++l) {
    regimes.push_back(
        {spec.q / l, factor * std::pow(spec.sigma, l) * nu_superscript(spec.mu, spec.m - l)});
  }
  ProfileWithWarnings out{ConcentrationProfile(std::move(regimes), constants), {}};
  const double mu_min = *std::min_element(spec.mu.begin(), spec.mu.end());
  const double lhs = std::pow(std::log(static_cast<double>(spec.m)), 1.0 / spec.q);
  if (lhs > mu_min / spec.sigma) {
    out.warnings.push_back("log(m)^(1/q) = " + std::to_string(lhs) + " exceeds mu_(1)/sigma = " +
                           std::to_string(mu_min / spec.sigma));
  }
  return out;
}

ConcentrationProfile power_profile(int m, double q, double sigma, double mu0, double eps,
                                   double kappa, ProfileConstants constants) {
  if (m < 1 || !(q > 0.0) || !(sigma > 0.0) || !(mu0 > 0.0) || !(eps >= 0.0) || !(kappa > 0.0)) {
    throw std::out_of_range("power_profile: invalid parameters");
  }
  return ConcentrationProfile(
      {{q, m * sigma * std::pow((1.0 + eps) * mu0, m - 1)}, {q / m, std::pow(kappa * sigma, m)}},
      constants);
}

SpaceKind parse_space_kind(std::string_view name) {
  if (name == "linf") return SpaceKind::linf;
  if (name == "euclidean") return SpaceKind::euclidean;
  if (name == "spectral") return SpaceKind::spectral;
  if (name == "frobenius") return SpaceKind::frobenius;
  if (name == "nuclear") return SpaceKind::nuclear;
  if (name == "diag" || name == "diag_seminorm") return SpaceKind::diag_seminorm;
  throw std::domain_error("unknown space kind '" + std::string(name) + "'");
}

std::string_view to_string(SpaceKind kind) {
  switch (kind) {
    case SpaceKind::linf: return "linf";
    case SpaceKind::euclidean: return "euclidean";
    case SpaceKind::spectral: return "spectral";
    case SpaceKind::frobenius: return "frobenius";
    case SpaceKind::nuclear: return "nuclear";
    case SpaceKind::diag_seminorm: return "diag";
  }
  throw std::domain_error("unknown space kind");
}

double norm_degree(SpaceKind kind, int p, int n) {
  if (p < 1 || n < 1) throw std::out_of_range("norm_degree: dimensions must be >= 1");
  const double dp = p;
  const double dn = n;
  switch (kind) {
    case SpaceKind::linf: return std::log(dp);
    case SpaceKind::euclidean: return dp;
    case SpaceKind::spectral: return dn + dp;
    case SpaceKind::frobenius: return dn * dp;
    case SpaceKind::nuclear: return dn * dp;
    case SpaceKind::diag_seminorm:
      // square M_n; a lone dimension may be passed as p
      if (n != 1 && p != n) throw ShapeError("norm_degree: diagonal semi-norm needs square matrices");
      return dp;
  }
  throw std::domain_error("unknown space kind");
}

}  // namespace conclab
