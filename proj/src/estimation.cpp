#include "conclab/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "conclab/errors.hpp"
#include "conclab/linalg.hpp"

namespace conclab {

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double ss_res = std::max(0.0, syy - f.slope * sxy);
  f.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return f;
}

// Empirical quantile with linear interpolation on sorted data.
double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * (static_cast<double>(s.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - lo) * (s[hi] - s[lo]);
}

std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> g(points);
  if (points == 1) {
    g[0] = hi;
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < points; ++i) g[i] = std::exp(a + (b - a) * i / (points - 1));
  return g;
}

}  // namespace

CenterKind parse_center_kind(std::string_view name) {
  if (name == "median") return CenterKind::median;
  if (name == "mean") return CenterKind::mean;
  if (name == "independent_copy") return CenterKind::independent_copy;
  throw std::domain_error("unknown center kind '" + std::string(name) + "'");
}

std::string_view to_string(CenterKind kind) {
  switch (kind) {
    case CenterKind::median: return "median";
    case CenterKind::mean: return "mean";
    case CenterKind::independent_copy: return "independent_copy";
  }
  return "?";
}

double dkw_band(Eigen::Index N, double delta) {
  if (N < 1) throw InsufficientDataError("DKW band needs N >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw std::out_of_range("DKW confidence delta must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(N)));
}

double median(std::span<const double> values) {
  if (values.empty()) throw InsufficientDataError("median of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

Deviations deviations(std::span<const double> values, CenterKind center) {
  if (values.size() < 2) throw InsufficientDataError("empirical tail needs at least 2 values");
  Deviations d;
  if (center == CenterKind::independent_copy) {
    d.sorted.resize(values.size() / 2);
    for (std::size_t i = 0; i < d.sorted.size(); ++i) d.sorted[i] = std::abs(values[2 * i] - values[2 * i + 1]);
  } else {
    d.center = center == CenterKind::median
                   ? median(values)
                   : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    d.sorted.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) d.sorted[i] = std::abs(values[i] - d.center);
  }
  std::sort(d.sorted.begin(), d.sorted.end());
  return d;
}

EmpiricalTail empirical_tail(std::span<const double> values, CenterKind center, const TailGridSpec& grid,
                             double delta) {
  const Deviations dev = deviations(values, center);
  const auto& s = dev.sorted;
  EmpiricalTail tail;
  tail.center = dev.center;
  tail.center_kind = center;
  tail.N = static_cast<Eigen::Index>(s.size());
  tail.delta = delta;
  tail.band = dkw_band(tail.N, delta);

  if (!grid.explicit_grid.empty()) {
    tail.t = grid.explicit_grid;
    if (!std::is_sorted(tail.t.begin(), tail.t.end()) || tail.t.front() < 0.0) {
      throw std::invalid_argument("explicit t grid must be nonnegative and increasing");
    }
  } else {
    if (grid.points < 1) throw std::out_of_range("t grid needs at least one point");
    const double hq = grid.hi_quantile.value_or(1.0 - 1.0 / (2.0 * static_cast<double>(s.size())));
    double hi = quantile_sorted(s, hq);
    double lo = quantile_sorted(s, grid.lo_quantile);
    if (!(hi > 0.0)) {
      // degenerate (constant) data: nothing deviates, probe a generic range
      lo = 1e-6;
      hi = 1.0;
    } else if (!(lo > 0.0) || lo >= hi) {
      const auto pos = std::upper_bound(s.begin(), s.end(), 0.0);
      lo = pos != s.end() && *pos < hi ? *pos : hi / 10.0;
    }
    tail.t = log_grid(lo, hi, grid.points);
  }
  tail.alpha.resize(tail.t.size());
  const double n = static_cast<double>(s.size());
  for (std::size_t k = 0; k < tail.t.size(); ++k) {
    const auto first = std::lower_bound(s.begin(), s.end(), tail.t[k]);
    tail.alpha[k] = static_cast<double>(s.end() - first) / n;
  }
  return tail;
}

nlohmann::json EmpiricalTail::to_json() const {
  return {{"center", center}, {"center_kind", to_string(center_kind)}, {"N", N},
          {"delta", delta},   {"dkw_band", band},                      {"t", t},
          {"alpha_hat", alpha}};
}

void EmpiricalTail::to_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "t,alpha_hat,band_lo,band_hi\r\n";
  char buf[128];
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\r\n", t[k], alpha[k], std::max(0.0, alpha[k] - band),
                  std::min(1.0, alpha[k] + band));
    os << buf;
  }
}

TailFit fit_tail_exponent(const EmpiricalTail& tail, const FitOptions& opts) {
  if (!(opts.alpha_lo > 0.0 && opts.alpha_lo < opts.alpha_hi && opts.alpha_hi <= 1.0)) {
    throw std::out_of_range("fit window must satisfy 0 < alpha_lo < alpha_hi <= 1");
  }
  if (!(opts.C >= 1.0)) throw std::out_of_range("fit constant C must be >= 1");
  std::vector<double> lt, la;
  for (std::size_t k = 0; k < tail.t.size(); ++k) {
    const double t = tail.t[k], a = tail.alpha[k];
    if (t > 0.0 && t >= opts.t_min && t <= opts.t_max && a > opts.alpha_lo && a < opts.alpha_hi) {
      lt.push_back(std::log(t));
      la.push_back(std::log(a));
    }
  }
  if (static_cast<int>(lt.size()) < std::max(2, opts.min_points)) {
    throw FitWindowError("tail fit window holds " + std::to_string(lt.size()) + " grid points, need " +
                         std::to_string(std::max(2, opts.min_points)));
  }
  auto fit_with = [&](double C) {
    std::vector<double> y(la.size());
    const double lc = std::log(C);
    for (std::size_t i = 0; i < la.size(); ++i) y[i] = std::log(lc - la[i]);  // log(-log(a / C))
    return least_squares(lt, y);
  };
  double best_C = opts.C;
  LineFit best = fit_with(best_C);
  if (opts.free_C) {
    for (int k = 0; k <= 400; ++k) {
      const double C = std::exp(std::log(20.0) * k / 400.0);
      const LineFit f = fit_with(C);
      if (f.r2 > best.r2) {
        best = f;
        best_C = C;
      }
    }
  }
  TailFit out;
  out.q_hat = best.slope;
  out.scale_hat = out.q_hat > 0.0 ? std::exp(-best.intercept / out.q_hat) : 0.0;
  out.C = best_C;
  out.alpha_lo = opts.alpha_lo;
  out.alpha_hi = opts.alpha_hi;
  out.t_lo = std::exp(*std::min_element(lt.begin(), lt.end()));
  out.t_hi = std::exp(*std::max_element(lt.begin(), lt.end()));
  out.points = static_cast<int>(lt.size());
  out.r2 = best.r2;
  return out;
}

nlohmann::json TailFit::to_json() const {
  return {{"q_hat", q_hat},     {"scale_hat", scale_hat}, {"C", C},       {"alpha_window", {alpha_lo, alpha_hi}},
          {"t_window", {t_lo, t_hi}}, {"points", points}, {"r2", r2}};
}

DiameterReport observable_diameter(const SampleEnsemble& observed, std::vector<std::string> labels) {
  if (observed.trials() < 2) throw InsufficientDataError("observable diameter needs at least 2 trials");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != observed.width()) {
    throw ShapeError("observable_diameter: one label per observation column");
  }
  DiameterReport rep;
  rep.labels = std::move(labels);
  const double n = static_cast<double>(observed.trials());
  for (Eigen::Index c = 0; c < observed.width(); ++c) {
    const auto col = observed.data.col(c);
    const double m = col.mean();
    const double sd = std::sqrt((col.array() - m).square().sum() / (n - 1.0));
    rep.stds.push_back(sd);
    rep.diameter = std::max(rep.diameter, sd);
  }
  return rep;
}

nlohmann::json DiameterReport::to_json() const {
  return {{"diameter", diameter}, {"stds", stds}, {"labels", labels}};
}

double centered_moment(std::span<const double> values, double r) {
  if (values.empty()) throw InsufficientDataError("moment of an empty sample");
  const double n = static_cast<double>(values.size());
  const double m = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double acc = 0.0;
  for (double v : values) acc += std::pow(std::abs(v - m), r);
  return acc / n;
}

bool ProfileCheck::moments_pass() const noexcept {
  return std::all_of(moments.begin(), moments.end(), [](const MomentCheck& m) { return m.pass; });
}

ProfileCheck check_profile(std::span<const double> values, const ConcentrationProfile& profile,
                           double lipschitz_constant, const ProfileCheckOptions& opts) {
  if (!(lipschitz_constant > 0.0)) throw std::out_of_range("lipschitz constant must be > 0");
  ProfileCheck res(profile.scaled(lipschitz_constant));
  res.lipschitz_constant = lipschitz_constant;
  res.tail = empirical_tail(values, opts.center, opts.grid, opts.delta);
  std::size_t ok = 0;
  res.worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < res.tail.t.size(); ++k) {
    const double excess = res.tail.alpha[k] - res.tail.band - tail_bound(res.profile, res.tail.t[k]);
    if (excess <= 0.0) ++ok;
    if (excess > res.worst_excess) {
      res.worst_excess = excess;
      res.worst_t = res.tail.t[k];
    }
  }
  res.envelope_fraction = res.tail.t.empty() ? 1.0 : static_cast<double>(ok) / res.tail.t.size();
  for (double r : opts.moment_orders) {
    MomentCheck m;
    m.r = r;
    m.empirical = centered_moment(values, r);
    m.bound = moment_bound(res.profile, r);
    m.pass = m.empirical <= m.bound;
    res.moments.push_back(m);
  }
  res.leading_exponent = res.profile.regimes().front().exponent;
  res.trailing_exponent = res.profile.regimes().back().exponent;
  if (opts.fit) {
    try {
      res.fit = fit_tail_exponent(res.tail, *opts.fit);
    } catch (const FitWindowError& e) {
      res.fit_error = e.what();
    }
  }
  return res;
}

nlohmann::json ProfileCheck::to_json() const {
  nlohmann::json mom = nlohmann::json::array();
  for (const auto& m : moments) {
    mom.push_back({{"r", m.r}, {"empirical", m.empirical}, {"bound", m.bound}, {"pass", m.pass}});
  }
  nlohmann::json j{{"profile", profile.to_json()},
                   {"lipschitz_constant", lipschitz_constant},
                   {"envelope_fraction", envelope_fraction},
                   {"worst_excess", worst_excess},
                   {"worst_t", worst_t},
                   {"dkw_band", tail.band},
                   {"N", tail.N},
                   {"moments", mom},
                   {"leading_exponent", leading_exponent},
                   {"trailing_exponent", trailing_exponent},
                   {"envelope_pass", envelope_pass()},
                   {"moments_pass", moments_pass()},
                   {"pass", pass()}};
  if (fit) j["fit"] = fit->to_json();
  if (!fit_error.empty()) j["fit_error"] = fit_error;
  return j;
}

NormCheck norm_expectation_check(SpaceKind kind, std::vector<NormSample> samples, double q, double sigma) {
  if (samples.size() < 3) throw InsufficientDataError("norm expectation check needs at least 3 dimensions");
  if (!(q > 0.0 && sigma > 0.0)) throw std::out_of_range("q and sigma must be > 0");
  NormCheck nc;
  nc.kind = kind;
  nc.q = q;
  nc.sigma = sigma;
  double log_sum = 0.0;
  for (const auto& s : samples) {
    const double eta = norm_degree(kind, s.p, s.n);
    nc.eta.push_back(eta);
    const double c = s.mean_norm / (std::pow(eta, 1.0 / q) * sigma);
    nc.constants.push_back(c);
    log_sum += std::log(c);
  }
  nc.samples = std::move(samples);
  nc.fitted_constant = std::exp(log_sum / nc.constants.size());
  const auto [mn, mx] = std::minmax_element(nc.constants.begin(), nc.constants.end());
  nc.stability = *mx / *mn;
  return nc;
}

nlohmann::json NormCheck::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    s.push_back({{"p", samples[i].p},
                 {"n", samples[i].n},
                 {"trials", samples[i].trials},
                 {"mean_norm", samples[i].mean_norm},
                 {"eta", eta[i]},
                 {"constant", constants[i]}});
  }
  return {{"norm", to_string(kind)}, {"q", q}, {"sigma", sigma}, {"samples", s},
          {"fitted_constant", fitted_constant}, {"stability", stability}};
}

double mean_centered_norm(const SampleEnsemble& ens, SpaceKind kind) {
  if (ens.trials() < 2) throw InsufficientDataError("mean_centered_norm needs at least 2 trials");
  const bool matrix_norm = kind == SpaceKind::spectral || kind == SpaceKind::nuclear || kind == SpaceKind::diag_seminorm;
  if (matrix_norm && !ens.shape) throw ShapeError("matrix norm on a vector ensemble");
  if (kind == SpaceKind::diag_seminorm && ens.shape->rows != ens.shape->cols) {
    throw ShapeError("diag semi-norm needs square draws");
  }
  const Eigen::RowVectorXd mean = ens.data.colwise().mean();
  double acc = 0.0;
#pragma omp parallel for reduction(+ : acc) schedule(static)
  for (Eigen::Index t = 0; t < ens.trials(); ++t) {
    const Eigen::RowVectorXd z = ens.data.row(t) - mean;
    switch (kind) {
      case SpaceKind::linf: acc += z.cwiseAbs().maxCoeff(); break;
      case SpaceKind::euclidean:
      case SpaceKind::frobenius: acc += z.norm(); break;
      default: {
        const Eigen::MatrixXd m = Eigen::Map<const RowMatrix>(z.data(), ens.shape->rows, ens.shape->cols);
        acc += kind == SpaceKind::spectral ? spectral_norm(m)
               : kind == SpaceKind::nuclear ? nuclear_norm(m)
                                            : diag_seminorm(m);
      }
    }
  }
  return acc / static_cast<double>(ens.trials());
}

}  // namespace conclab
