#include "conclab/experiment.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "conclab/errors.hpp"
#include "conclab/generators.hpp"
#include "conclab/observables.hpp"
#include "conclab/profile.hpp"
#include "conclab/rmt.hpp"

namespace conclab {

namespace {

using nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams. Matrix models also consume stream + 1 and stream + 2.
constexpr std::uint32_t kDataStream = 1;
constexpr std::uint32_t kDirectionStream = 1000;
constexpr std::uint32_t kAuxStream = 2000;

constexpr struct {
  ExperimentKind kind;
  std::string_view name;
} kKindNames[] = {
    {ExperimentKind::tail, "tail"},
    {ExperimentKind::diameter, "diameter"},
    {ExperimentKind::product, "product"},
    {ExperimentKind::hanson_wright, "hanson_wright"},
    {ExperimentKind::xdy, "xdy"},
    {ExperimentKind::norm_degree, "norm_degree"},
    {ExperimentKind::resolvent, "resolvent"},
    {ExperimentKind::robust, "robust"},
    {ExperimentKind::moments, "moments"},
};

void require_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

// Strict view of one parameter object.
class Params {
 public:
  Params(const json& j, std::initializer_list<std::string_view> allowed, std::string where)
      : j_(j.is_null() ? empty_ : j), where_(std::move(where)) {
    require_keys(j_, allowed, where_);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& at(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError("missing key '" + key + "' in " + where_);
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key, T def) const {
    if (!j_.contains(key)) return def;
    return as<T>(key);
  }

  template <class T>
  T as(const std::string& key) const {
    try {
      return at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + key + "' in " + where_ + ": " + e.what());
    }
  }

  std::string where(const std::string& key) const { return where_ + "." + key; }

 private:
  static inline const json empty_ = json::object();
  const json& j_;
  std::string where_;
};

// Library parsers throw a mix of ConfigError, invalid_argument and json errors.
template <class F>
auto parse_with(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::optional<ProfileConstants> parse_constants(const Params& P) {
  if (!P.has("constants")) return std::nullopt;
  Params c(P.at("constants"), {"C", "c"}, P.where("constants"));
  ProfileConstants k;
  k.C = c.get("C", k.C);
  k.c = c.get("c", k.c);
  if (!(k.C >= 1.0 && k.c > 0.0)) throw ConfigError("constants need C >= 1 and c > 0");
  return k;
}

FitOptions parse_fit(const Params& P) {
  FitOptions f;
  if (!P.has("fit")) return f;
  Params q(P.at("fit"), {"alpha_lo", "alpha_hi", "C", "free_C", "min_points", "t_min", "t_max"}, P.where("fit"));
  f.alpha_lo = q.get("alpha_lo", f.alpha_lo);
  f.alpha_hi = q.get("alpha_hi", f.alpha_hi);
  f.C = q.get("C", f.C);
  f.free_C = q.get("free_C", f.free_C);
  f.min_points = q.get("min_points", f.min_points);
  f.t_min = q.get("t_min", f.t_min);
  f.t_max = q.get("t_max", f.t_max);
  if (!(0.0 < f.alpha_lo && f.alpha_lo < f.alpha_hi && f.alpha_hi < 1.0)) {
    throw ConfigError("fit window needs 0 < alpha_lo < alpha_hi < 1");
  }
  return f;
}

VectorModel parse_model(const Params& P, const std::string& key = "model") {
  return parse_with(P.where(key), [&] {
    VectorModel m = VectorModel::from_json(P.at(key));
    m.validate();
    return m;
  });
}

VectorModel resized(const VectorModel& m, int dim) {
  if (m.output_dim() == dim) return m;
  if (m.kind == VectorKind::concat || m.transform) {
    throw ConfigError("dims cannot resize concatenated or transformed models");
  }
  VectorModel r = m;
  r.dim = dim;
  parse_with("model", [&] { r.validate(); return 0; });
  return r;
}

Eigen::Index positive_count(const Params& P, const std::string& key, long long def) {
  const long long v = P.get<long long>(key, def);
  if (v < 2) throw ConfigError(P.where(key) + " must be at least 2");
  return static_cast<Eigen::Index>(v);
}

std::vector<int> positive_list(const Params& P, const std::string& key, std::vector<int> def) {
  std::vector<int> v = P.get<std::vector<int>>(key, std::move(def));
  if (v.empty()) throw ConfigError(P.where(key) + " must not be empty");
  for (int x : v) {
    if (x < 1) throw ConfigError(P.where(key) + " entries must be positive");
  }
  return v;
}

double sample_std(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (v.size() - 1.0));
}

double ratio_max_min(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo > 0.0 ? *hi / *lo : kNaN;
}

std::string suffix(const char* tag, long long v) { return std::string("_") + tag + std::to_string(v); }

// Scalar observations evaluated while streaming trials, so that no N x p
// ensemble is ever stored.
struct ObservationSet {
  std::vector<std::string> labels;
  Eigen::MatrixXd U;  // unit directions as columns
  std::vector<int> coordinates;
  bool norm = false;
  bool normalized_sum = false;
  bool product = false;

  int count() const {
    return static_cast<int>(U.cols() + coordinates.size()) + norm + normalized_sum + product;
  }
};

ObservationSet make_observations(int dim, int unit_linear, std::vector<int> coords, bool norm, bool normalized_sum,
                                 std::uint64_t seed) {
  ObservationSet o;
  o.U.resize(dim, unit_linear);
  for (int k = 0; k < unit_linear; ++k) {
    Engine eng = make_engine(seed, kDirectionStream, static_cast<std::uint64_t>(dim), static_cast<std::uint64_t>(k));
    o.U.col(k) = random_unit_vector(dim, eng);
    o.labels.push_back("u" + std::to_string(k));
  }
  for (int c : coords) {
    if (c < 0 || c >= dim) throw ConfigError("coordinate " + std::to_string(c) + " out of range");
    o.labels.push_back("x" + std::to_string(c));
  }
  o.coordinates = std::move(coords);
  o.norm = norm;
  if (norm) o.labels.push_back("norm");
  o.normalized_sum = normalized_sum;
  if (normalized_sum) o.labels.push_back("normalized_sum");
  if (o.count() == 0) throw ConfigError("no observations requested");
  return o;
}

RowMatrix observe_stream(const VectorModel& model, Eigen::Index N, std::uint64_t seed, std::uint32_t stream,
                         const ObservationSet& obs) {
  const int d = model.output_dim();
  const int K = obs.count();
  RowMatrix out(N, K);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
#pragma omp parallel
  {
    Eigen::VectorXd z(d);
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < N; ++i) {
      draw_vector(model, seed, stream, static_cast<std::uint64_t>(i), 0, std::span<double>(z.data(), d));
      int k = 0;
      for (Eigen::Index j = 0; j < obs.U.cols(); ++j) out(i, k++) = obs.U.col(j).dot(z);
      for (int c : obs.coordinates) out(i, k++) = z[c];
      if (obs.norm) out(i, k++) = z.norm();
      if (obs.normalized_sum) out(i, k++) = z.sum() * inv_sqrt_d;
      if (obs.product) out(i, k++) = z.prod();
    }
  }
  return out;
}

SampleEnsemble as_ensemble(RowMatrix data) {
  SampleEnsemble e;
  e.data = std::move(data);
  return e;
}

std::span<const double> column_span(const Eigen::VectorXd& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

ProfileCheckOptions parse_check_options(const Params& P) {
  ProfileCheckOptions o;
  o.center = parse_with(P.where("center"), [&] { return parse_center_kind(P.get<std::string>("center", "median")); });
  o.delta = P.get("delta", o.delta);
  if (!(o.delta > 0.0 && o.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  o.grid.points = P.get("grid_points", o.grid.points);
  if (o.grid.points < 2) throw ConfigError("grid_points must be at least 2");
  o.moment_orders = P.get("moment_orders", o.moment_orders);
  o.fit = parse_fit(P);
  return o;
}

double moment_ratio_max(const ProfileCheck& pc) {
  double r = 0.0;
  for (const auto& m : pc.moments) r = std::max(r, m.empirical / m.bound);
  return r;
}

// ---------------------------------------------------------------------------

void run_tail(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params,
           {"model", "dims", "N", "unit_linear", "coordinates", "norm", "center", "delta", "grid_points", "fit",
            "profile", "constants", "moment_orders"},
           "params");
  const VectorModel base = parse_model(P);
  const std::vector<int> dims = positive_list(P, "dims", {base.output_dim()});
  const Eigen::Index N = positive_count(P, "N", 100000);
  const int unit_linear = P.get("unit_linear", 4);
  const auto coords = P.get<std::vector<int>>("coordinates", {});
  const bool norm = P.get("norm", false);
  const ProfileCheckOptions opts = parse_check_options(P);
  const auto constants = parse_constants(P);
  std::optional<ConcentrationProfile> declared;
  if (P.has("profile")) {
    declared = parse_with(P.where("profile"), [&] { return ConcentrationProfile::from_json(P.at("profile")); });
  }

  std::vector<double> q_hats, envelope, diameters, moments;
  int fit_failures = 0;
  for (std::size_t di = 0; di < dims.size(); ++di) {
    const VectorModel m = resized(base, dims[di]);
    ConcentrationProfile prof = declared ? *declared : m.declared_profile();
    if (constants) prof = prof.with_constants(*constants);
    const ObservationSet obs = make_observations(m.output_dim(), unit_linear, coords, norm, false, cfg.seed);
    const RowMatrix v = observe_stream(m, N, cfg.seed, kDataStream + 3 * static_cast<std::uint32_t>(di), obs);
    const std::string sp = suffix("p", dims[di]);

    const SampleEnsemble ens = as_ensemble(v);
    const DiameterReport diam = observable_diameter(ens, obs.labels);
    rep.metrics["diameter" + sp] = diam.diameter;
    diameters.push_back(diam.diameter);

    json per_obs = json::object();
    for (int k = 0; k < obs.count(); ++k) {
      const Eigen::VectorXd col = v.col(k);
      const ProfileCheck pc = check_profile(column_span(col), prof, 1.0, opts);
      const std::string key = sp + "_" + obs.labels[k];
      per_obs[obs.labels[k]] = pc.to_json();
      per_obs[obs.labels[k]]["std"] = diam.stds[k];
      rep.tails.emplace_back("tail" + key, pc.tail);
      envelope.push_back(pc.envelope_fraction);
      moments.push_back(moment_ratio_max(pc));
      rep.metrics["envelope_fraction" + key] = pc.envelope_fraction;
      if (pc.fit) {
        rep.metrics["q_hat" + key] = pc.fit->q_hat;
        q_hats.push_back(pc.fit->q_hat);
      } else {
        rep.metrics["q_hat" + key] = kNaN;
        ++fit_failures;
      }
    }
    rep.results["p" + std::to_string(dims[di])] = {{"model", m.to_json()},
                                                    {"profile", prof.to_json()},
                                                    {"diameter", diam.to_json()},
                                                    {"observations", per_obs}};
  }
  const auto mn = [](const std::vector<double>& v) { return v.empty() ? kNaN : *std::min_element(v.begin(), v.end()); };
  const auto mx = [](const std::vector<double>& v) { return v.empty() ? kNaN : *std::max_element(v.begin(), v.end()); };
  rep.metrics["q_hat_min"] = fit_failures ? kNaN : mn(q_hats);
  rep.metrics["q_hat_max"] = fit_failures ? kNaN : mx(q_hats);
  rep.metrics["envelope_fraction_min"] = mn(envelope);
  rep.metrics["diameter_min"] = mn(diameters);
  rep.metrics["diameter_max"] = mx(diameters);
  rep.metrics["moment_ratio_max"] = mx(moments);
  rep.metrics["fit_failures"] = fit_failures;
  rep.results["N"] = N;
}

void run_diameter(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params, {"model", "dims", "N", "unit_linear", "normalized_sum", "norm"}, "params");
  const VectorModel base = parse_model(P);
  const std::vector<int> dims = positive_list(P, "dims", {base.output_dim()});
  const Eigen::Index N = positive_count(P, "N", 10000);
  const int unit_linear = P.get("unit_linear", 4);
  const bool norm = P.get("norm", true);
  const bool nsum = P.get("normalized_sum", true);

  for (std::size_t di = 0; di < dims.size(); ++di) {
    const VectorModel m = resized(base, dims[di]);
    const ObservationSet obs = make_observations(m.output_dim(), unit_linear, {}, norm, nsum, cfg.seed);
    const SampleEnsemble ens =
        as_ensemble(observe_stream(m, N, cfg.seed, kDataStream + 3 * static_cast<std::uint32_t>(di), obs));
    const DiameterReport diam = observable_diameter(ens, obs.labels);
    const std::string sp = suffix("p", dims[di]);
    rep.metrics["diameter" + sp] = diam.diameter;
    if (nsum) {
      const double s = diam.stds.back();
      rep.metrics["normalized_sum_std" + sp] = s;
      rep.metrics["normalized_sum_std_over_sqrt_p" + sp] = s / std::sqrt(static_cast<double>(m.output_dim()));
    }
    rep.results["p" + std::to_string(dims[di])] = {{"model", m.to_json()}, {"diameter", diam.to_json()}};
  }
  rep.results["N"] = N;
}

void run_hadamard(const ExperimentConfig& cfg, const Params& P, ExperimentReport& rep) {
  const std::vector<int> ms = positive_list(P, "m_values", {2, 3});
  const Eigen::Index N = positive_count(P, "N", 1000000);
  const ProfileCheckOptions opts = parse_check_options(P);
  const ProfileConstants constants = parse_constants(P).value_or(ProfileConstants{});

  for (std::size_t mi = 0; mi < ms.size(); ++mi) {
    const int m = ms[mi];
    // m independent standard gaussian scalars per trial, multiplied together
    const VectorModel factors = VectorModel::of(VectorKind::gaussian, m);
    ObservationSet obs;
    obs.U.resize(m, 0);
    obs.product = true;
    obs.labels = {"product"};
    const RowMatrix v = observe_stream(factors, N, cfg.seed, kDataStream + 3 * static_cast<std::uint32_t>(mi), obs);
    ProductSpec spec{m, 2.0, 1.0, std::vector<double>(m, 1.0)};
    const ConcentrationProfile prof = product_profile(spec, constants);
    const Eigen::VectorXd col = v.col(0);
    const ProfileCheck pc = check_profile(column_span(col), prof, 1.0, opts);
    const std::string sm = suffix("m", m);
    rep.metrics["q_hat" + sm] = pc.fit ? pc.fit->q_hat : kNaN;
    rep.metrics["envelope_fraction" + sm] = pc.envelope_fraction;
    rep.metrics["moment_ratio_max" + sm] = moment_ratio_max(pc);
    rep.results["m" + std::to_string(m)] = pc.to_json();
    rep.tails.emplace_back("tail" + sm, pc.tail);
  }
  rep.results["N"] = N;
}

// Linear observations tr(A S) of S = X X^T / n with ||A||_F = 1.
void run_covariance(const ExperimentConfig& cfg, const Params& P, ExperimentReport& rep) {
  const std::vector<int> ns = positive_list(P, "dims", {128, 256, 512});
  const double ratio = P.get("ratio", 1.0);
  const Eigen::Index T = positive_count(P, "trials", 400);
  if (!(ratio > 0.0)) throw ConfigError("ratio must be > 0");

  const char* names[] = {"trace", "rank_one", "symmetric"};
  std::vector<double> scaled[3];
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    const int n = ns[ni];
    const int p = std::max(1, static_cast<int>(std::lround(ratio * n)));
    Engine eng = make_engine(cfg.seed, kDirectionStream, static_cast<std::uint64_t>(n));
    const Eigen::VectorXd u = random_unit_vector(p, eng);
    Eigen::MatrixXd G = gaussian_matrix(p, p, eng);
    Eigen::MatrixXd A = (G + G.transpose()) / 2.0;
    A /= A.norm();
    const MatrixModel mm = MatrixModel::iid(p, n, VectorModel::of(VectorKind::gaussian, p));
    const std::uint32_t stream = kDataStream + 3 * static_cast<std::uint32_t>(ni);
    RowMatrix v(T, 3);
#pragma omp parallel
    {
      Eigen::MatrixXd X;
#pragma omp for schedule(static)
      for (Eigen::Index t = 0; t < T; ++t) {
        draw_matrix(mm, cfg.seed, stream, static_cast<std::uint64_t>(t), X, nullptr);
        v(t, 0) = X.squaredNorm() / (n * std::sqrt(static_cast<double>(p)));
        v(t, 1) = (X.transpose() * u).squaredNorm() / n;
        v(t, 2) = (A * X).cwiseProduct(X).sum() / n;
      }
    }
    json per = json::object();
    for (int k = 0; k < 3; ++k) {
      const double s = sample_std(v.col(k)) * std::sqrt(static_cast<double>(n));
      scaled[k].push_back(s);
      rep.metrics[std::string("std_sqrt_n_") + names[k] + suffix("n", n)] = s;
      per[names[k]] = {{"mean", v.col(k).mean()}, {"std_sqrt_n", s}};
    }
    rep.results["n" + std::to_string(n)] = {{"p", p}, {"observations", per}};
  }
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double s = ratio_max_min(scaled[k]);
    rep.metrics[std::string("stability_") + names[k]] = s;
    worst = std::max(worst, s);
  }
  rep.metrics["stability_max"] = worst;
  rep.results["trials"] = T;
}

void run_product(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params,
           {"mode", "m_values", "N", "center", "delta", "grid_points", "fit", "constants", "moment_orders", "dims",
            "ratio", "trials"},
           "params");
  const std::string mode = P.get<std::string>("mode", "hadamard");
  if (mode == "hadamard") {
    run_hadamard(cfg, P, rep);
  } else if (mode == "covariance") {
    run_covariance(cfg, P, rep);
  } else {
    throw ConfigError("unknown product mode '" + mode + "'");
  }
  rep.results["mode"] = mode;
}

void run_hanson_wright(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params,
           {"p", "N", "matrices", "chunk", "constants", "center", "delta", "grid_points", "fit", "moment_orders"},
           "params");
  const int p = P.get("p", 500);
  const Eigen::Index N = positive_count(P, "N", 100000);
  const int M = P.get("matrices", 20);
  const Eigen::Index chunk = positive_count(P, "chunk", 5000);
  const ProfileConstants constants = parse_constants(P).value_or(ProfileConstants{4.0, 4.0});
  const ProfileCheckOptions opts = parse_check_options(P);
  if (p < 1 || M < 0) throw ConfigError("hanson_wright needs p >= 1 and matrices >= 0");

  // A_0 .. A_{M-1} random gaussian, A_M = identity
  std::vector<Eigen::MatrixXd> As;
  for (int k = 0; k < M; ++k) {
    Engine eng = make_engine(cfg.seed, kDirectionStream, static_cast<std::uint64_t>(k));
    As.push_back(gaussian_matrix(p, p, eng));
  }
  const VectorModel g = VectorModel::of(VectorKind::gaussian, p);
  Eigen::MatrixXd values(N, M + 1);
  Eigen::MatrixXd X, Y;
  for (Eigen::Index s = 0; s < N; s += chunk) {
    const Eigen::Index B = std::min(chunk, N - s);
    X.resize(p, B);
    Y.resize(p, B);
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < B; ++j) {
      const auto t = static_cast<std::uint64_t>(s + j);
      draw_vector(g, cfg.seed, kDataStream, t, 0, std::span<double>(X.col(j).data(), p));
      draw_vector(g, cfg.seed, kDataStream + 1, t, 0, std::span<double>(Y.col(j).data(), p));
    }
    for (int k = 0; k < M; ++k) {
      values.col(k).segment(s, B) = X.cwiseProduct(As[k] * Y).colwise().sum().transpose();
    }
    values.col(M).segment(s, B) = X.cwiseProduct(Y).colwise().sum().transpose();
  }

  std::vector<double> var_ratios;
  double env_min = 1.0, mom_max = 0.0;
  json per = json::array();
  for (int k = 0; k <= M; ++k) {
    const bool identity = k == M;
    const double frob = identity ? std::sqrt(static_cast<double>(p)) : As[k].norm();
    const double spec = identity ? 1.0 : spectral_norm(As[k]);
    const Eigen::VectorXd col = values.col(k);
    const double sd = sample_std(col);
    const double vr = sd * sd / (frob * frob);
    const ConcentrationProfile prof = hanson_wright_profile(frob, spec, 1.0, constants);
    ProfileCheckOptions o = opts;
    if (!identity) o.fit.reset();
    const ProfileCheck pc = check_profile(column_span(col), prof, 1.0, o);
    env_min = std::min(env_min, pc.envelope_fraction);
    mom_max = std::max(mom_max, moment_ratio_max(pc));
    json entry{{"matrix", identity ? "identity" : "gaussian_" + std::to_string(k)},
               {"frobenius", frob},
               {"spectral", spec},
               {"variance_ratio", vr},
               {"check", pc.to_json()}};
    if (identity) {
      rep.metrics["var_ratio_identity"] = vr;
      rep.metrics["bulk_q_hat_identity"] = pc.fit ? pc.fit->q_hat : kNaN;
      // far tail: beyond the crossover c ||A||_F^2 / ||A|| where the E_1
      // regime of the profile takes over
      const double t_star = constants.c * frob * frob / spec;
      FitOptions far = opts.fit.value_or(FitOptions{});
      far.t_min = t_star;
      std::size_t beyond = 0;
      for (double t : pc.tail.t) beyond += t >= t_star;
      double q_far = kNaN;
      std::string far_error;
      try {
        q_far = fit_tail_exponent(pc.tail, far).q_hat;
      } catch (const FitWindowError& e) {
        far_error = e.what();
      }
      rep.metrics["far_tail_q_hat"] = q_far;
      rep.metrics["far_tail_grid_points"] = static_cast<double>(beyond);
      rep.metrics["far_tail_crossover"] = t_star;
      rep.metrics["max_abs_deviation_identity"] = pc.tail.t.empty() ? 0.0 : pc.tail.t.back();
      entry["far_tail"] = {{"crossover", t_star}, {"grid_points_beyond", beyond}, {"q_hat", q_far}};
      if (!far_error.empty()) entry["far_tail"]["error"] = far_error;
      rep.tails.emplace_back("tail_identity", pc.tail);
    } else {
      var_ratios.push_back(vr);
    }
    per.push_back(std::move(entry));
  }
  rep.metrics["var_ratio_min"] = var_ratios.empty() ? kNaN : *std::min_element(var_ratios.begin(), var_ratios.end());
  rep.metrics["var_ratio_max"] = var_ratios.empty() ? kNaN : *std::max_element(var_ratios.begin(), var_ratios.end());
  rep.metrics["envelope_fraction_min"] = env_min;
  rep.metrics["moment_ratio_max"] = mom_max;
  rep.results = {{"p", p}, {"N", N}, {"constants", {{"C", constants.C}, {"c", constants.c}}}, {"matrices", per}};
}

void run_xdy(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params, {"mode", "dims", "ratio", "trials", "unit_linear", "diagonal", "coupling"}, "params");
  const std::string mode = P.get<std::string>("mode", "action");
  const std::vector<int> ns = positive_list(P, "dims", {64, 128, 256});
  const double ratio = P.get("ratio", 1.0);
  const Eigen::Index T = positive_count(P, "trials", 2000);
  const Coupling coupling =
      parse_with(P.where("coupling"), [&] { return parse_coupling(P.get<std::string>("coupling", "independent")); });
  if (coupling == Coupling::none) throw ConfigError("xdy needs a coupled matrix model");
  const DiagonalModel dm = P.has("diagonal")
                               ? parse_with(P.where("diagonal"), [&] { return DiagonalModel::from_json(P.at("diagonal")); })
                               : (mode == "action" ? DiagonalModel::two_point(-1.0, 1.0)
                                                   : DiagonalModel::coordinate_fn(ScalarFn::relu, 1.0, 0));
  std::vector<double> stat;
  if (mode == "action") {
    // X D Y^T u for a fixed unit u, projected on random unit directions
    const int K = P.get("unit_linear", 4);
    if (K < 1) throw ConfigError("unit_linear must be >= 1");
    for (std::size_t ni = 0; ni < ns.size(); ++ni) {
      const int n = ns[ni];
      const int p = std::max(1, static_cast<int>(std::lround(ratio * n)));
      const MatrixModel mm = MatrixModel::iid(p, n, VectorModel::of(VectorKind::gaussian, p), coupling);
      const ObservationSet obs = make_observations(p, K + 1, {}, false, false, cfg.seed);
      const Eigen::VectorXd u = obs.U.col(K);
      const std::uint32_t stream = kDataStream + 3 * static_cast<std::uint32_t>(ni);
      RowMatrix v(T, K);
#pragma omp parallel
      {
        Eigen::MatrixXd X, Y;
#pragma omp for schedule(static)
        for (Eigen::Index t = 0; t < T; ++t) {
          draw_matrix(mm, cfg.seed, stream, static_cast<std::uint64_t>(t), X, &Y);
          Engine eng = make_engine(cfg.seed, stream + 2, static_cast<std::uint64_t>(t));
          const Eigen::VectorXd D = dm.draw(X, eng);
          const Eigen::VectorXd w = X * D.cwiseProduct(Y.transpose() * u);
          v.row(t) = (obs.U.leftCols(K).transpose() * w).transpose();
        }
      }
      const DiameterReport diam = observable_diameter(as_ensemble(v), std::vector<std::string>(obs.labels.begin(), obs.labels.begin() + K));
      const double scale = std::sqrt((p + n) * std::log(static_cast<double>(n)));
      const double c = diam.diameter / scale;
      stat.push_back(c);
      rep.metrics["diameter" + suffix("n", n)] = diam.diameter;
      rep.metrics["constant" + suffix("n", n)] = c;
      rep.results["n" + std::to_string(n)] = {{"p", p}, {"diameter", diam.to_json()}, {"reference_scale", scale}};
    }
    rep.metrics["constant_stability"] = ratio_max_min(stat);
  } else if (mode == "mean") {
    for (std::size_t ni = 0; ni < ns.size(); ++ni) {
      const int n = ns[ni];
      const int p = std::max(1, static_cast<int>(std::lround(ratio * n)));
      const MatrixModel mm = MatrixModel::iid(p, n, VectorModel::of(VectorKind::gaussian, p), coupling);
      const XDYMeanReport r =
          estimate_XDY_mean(mm, dm, static_cast<int>(T), cfg.seed, kDataStream + 3 * static_cast<std::uint32_t>(ni));
      stat.push_back(r.ratio_to_n);
      rep.metrics["ratio_to_n" + suffix("n", n)] = r.ratio_to_n;
      rep.results["n" + std::to_string(n)] = r.to_json();
    }
    rep.metrics["ratio_stability"] = ratio_max_min(stat);
  } else {
    throw ConfigError("unknown xdy mode '" + mode + "'");
  }
  rep.results["mode"] = mode;
  rep.results["diagonal"] = dm.to_json();
  rep.results["trials"] = T;
}

void run_norm_degree(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params, {"cases", "trials", "gamma_dim", "gamma_trials"}, "params");
  const Eigen::Index T = positive_count(P, "trials", 200);
  const json default_cases = json::parse(R"([
    {"norm": "euclidean", "dims": [[64], [256], [1024]]},
    {"norm": "linf", "dims": [[256], [1024], [4096]]},
    {"norm": "spectral", "dims": [[50, 50], [100, 100], [200, 200]]},
    {"norm": "frobenius", "dims": [[16, 16], [32, 32], [64, 64]]},
    {"norm": "diag_seminorm", "dims": [[16], [64], [256]]}
  ])");
  const json cases = P.has("cases") ? P.at("cases") : default_cases;
  if (!cases.is_array() || cases.empty()) throw ConfigError("params.cases must be a non-empty array");

  json per = json::array();
  double worst = 0.0;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    Params C(cases[ci], {"norm", "dims"}, "params.cases[" + std::to_string(ci) + "]");
    const SpaceKind kind = parse_with(C.where("norm"), [&] { return parse_space_kind(C.as<std::string>("norm")); });
    const auto dims = C.as<std::vector<std::vector<int>>>("dims");
    const bool vector_space = kind == SpaceKind::linf || kind == SpaceKind::euclidean;
    std::vector<NormSample> samples;
    for (std::size_t di = 0; di < dims.size(); ++di) {
      const auto& d = dims[di];
      if (d.empty() || d.size() > 2 || d[0] < 1 || (d.size() == 2 && d[1] < 1)) {
        throw ConfigError("norm_degree dims entries are [p] or [p, n] with positive sizes");
      }
      NormSample s;
      s.p = d[0];
      s.n = vector_space ? 1 : (d.size() == 2 ? d[1] : d[0]);
      if (kind == SpaceKind::diag_seminorm) s.n = s.p;
      const auto stream = static_cast<std::uint32_t>(10 + 16 * ci + 3 * di);
      if (vector_space) {
        const SampleEnsemble e = sample(VectorModel::of(VectorKind::gaussian, s.p), T, cfg.seed, stream);
        s.mean_norm = mean_centered_norm(e, kind);
      } else {
        const MatrixModel mm = MatrixModel::iid(s.p, s.n, VectorModel::of(VectorKind::gaussian, s.p));
        s.mean_norm = mean_centered_norm(sample_matrix(mm, T, cfg.seed, stream).x, kind);
      }
      s.trials = T;
      samples.push_back(s);
    }
    const NormCheck nc = parse_with("norm_degree", [&] { return norm_expectation_check(kind, samples); });
    const std::string name(to_string(kind));
    rep.metrics["stability_" + name] = nc.stability;
    rep.metrics["constant_" + name] = nc.fitted_constant;
    worst = std::max(worst, nc.stability);
    per.push_back(nc.to_json());
  }
  rep.metrics["stability_max"] = worst;

  // E||Z|| for a standard gaussian against sqrt 2 Gamma((p+1)/2) / Gamma(p/2)
  const int gp = P.get("gamma_dim", 256);
  const Eigen::Index gT = positive_count(P, "gamma_trials", 4000);
  if (gp < 1) throw ConfigError("gamma_dim must be positive");
  const SampleEnsemble e = sample(VectorModel::of(VectorKind::gaussian, gp), gT, cfg.seed, 9);
  const double mean = e.data.rowwise().norm().mean();
  const double exact = std::sqrt(2.0) * std::exp(std::lgamma((gp + 1) / 2.0) - std::lgamma(gp / 2.0));
  rep.metrics["gamma_rel_error"] = std::abs(mean - exact) / exact;
  rep.results = {{"trials", T},
                 {"cases", per},
                 {"gamma", {{"p", gp}, {"trials", gT}, {"empirical", mean}, {"exact", exact}}}};
}

struct EquivalentRun {
  int p = 0;
  int n = 0;
  FixedPointState fp;
  Eigen::MatrixXd Qt;
  MonteCarloEQ mc;
  double error = 0.0;
  double rel_error = 0.0;
};

void run_resolvent_equivalent(const ExperimentConfig& cfg, const Params& P, ExperimentReport& rep) {
  const int p0 = P.get("p", 100);
  const int n0 = P.get("n", 400);
  const int T = P.get("trials", 200);
  const double eps = P.get("epsilon", 0.15);
  const int aux = P.get("aux_draws", 10000);
  const bool isotropic = P.get("isotropic", true);
  if (p0 < 1 || n0 < 1 || T < 1 || !(eps > 0.0 && eps < 1.0)) throw ConfigError("bad resolvent sizes or epsilon");
  const std::vector<int> scaling = P.get<std::vector<int>>("scaling_n", {});
  DiagonalModel dm = DiagonalModel::constant(P.get("d", 0.3));
  if (P.has("diagonal")) {
    if (P.has("d")) throw ConfigError("give either params.d or params.diagonal");
    dm = parse_with(P.where("diagonal"), [&] { return DiagonalModel::from_json(P.at("diagonal")); });
  }
  std::optional<VectorModel> column;
  if (P.has("columns")) column = parse_model(P, "columns");
  if (isotropic && column) throw ConfigError("isotropic runs use gaussian columns; drop params.columns");
  const Coupling coupling = parse_with(P.where("coupling"), [&] {
    return parse_coupling(P.get<std::string>("coupling", isotropic ? "identical" : "independent"));
  });
  if (isotropic && coupling != Coupling::identical) throw ConfigError("isotropic runs use identical coupling");
  FixedPointOptions fpo;
  if (P.has("fixed_point")) {
    Params F(P.at("fixed_point"), {"tol", "max_iter", "omega"}, P.where("fixed_point"));
    fpo.tol = F.get("tol", fpo.tol);
    fpo.max_iter = F.get("max_iter", fpo.max_iter);
    fpo.omega = F.get("omega", fpo.omega);
  }

  std::vector<int> ns{n0};
  for (int n : scaling) {
    if (n < 1) throw ConfigError("scaling_n entries must be positive");
    if (std::find(ns.begin(), ns.end(), n) == ns.end()) ns.push_back(n);
  }
  const double aspect = static_cast<double>(p0) / n0;

  std::vector<double> per_log;
  json runs = json::array();
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    EquivalentRun r;
    r.n = ns[ni];
    r.p = ni == 0 ? p0 : std::max(1, static_cast<int>(std::lround(aspect * r.n)));
    VectorModel col = column ? resized(*column, r.p) : VectorModel::of(VectorKind::gaussian, r.p);
    const MatrixModel mm = MatrixModel::iid(r.p, r.n, col, coupling);
    const std::uint32_t stream = kDataStream + 3 * static_cast<std::uint32_t>(ni);
    const SigmaEstimate sig = column_covariance(mm, aux, cfg.seed, kAuxStream + 3 * static_cast<std::uint32_t>(ni));
    const RowMatrix ds = diagonal_samples(dm, mm, aux, cfg.seed, kAuxStream + 100 + 3 * static_cast<std::uint32_t>(ni));
    r.fp = solve_delta(sig.sigma, r.n, ds, fpo);
    if (!r.fp.converged) {
      throw ConvergenceError("delta fixed point did not converge at n = " + std::to_string(r.n), r.fp.residual_trace);
    }
    r.Qt = q_tilde(r.fp.delta, ds, sig.sigma);
    r.mc = monte_carlo_EQ(mm, dm, T, eps, cfg.seed, stream);
    r.error = (r.mc.mean - r.Qt).norm();
    r.rel_error = r.error / r.Qt.norm();
    const double per_log_n = r.error / std::log(static_cast<double>(r.n));
    json entry{{"p", r.p},
               {"n", r.n},
               {"fixed_point", r.fp.to_json()},
               {"sigma_analytic", sig.analytic},
               {"sigma_standard_error", sig.standard_error},
               {"accepted", r.mc.accepted},
               {"rejected", r.mc.rejected},
               {"max_residual", r.mc.max_residual},
               {"all_within_bound", r.mc.all_within_bound},
               {"mc_standard_error", r.mc.standard_error.norm()},
               {"error", r.error},
               {"rel_error", r.rel_error},
               {"error_over_log_n", per_log_n}};
    if (ni == 0) {
      rep.metrics["rel_error"] = r.rel_error;
      rep.metrics["rejection_rate"] = r.mc.rejection_rate();
      rep.metrics["norm_bound_violations"] = r.mc.all_within_bound ? 0.0 : 1.0;
      rep.metrics["fixed_point_iterations"] = r.fp.iterations;
      if (isotropic && dm.deterministic()) {
        // closed form: d delta^2 - (1 - d + c d) delta + c = 0, smaller root
        const double c = static_cast<double>(r.p) / r.n, d = dm.d1;
        double delta;
        if (d == 0.0) {
          delta = c;
        } else {
          const double b = 1.0 - d + c * d;
          const double disc = b * b - 4.0 * d * c;
          if (disc < 0.0) throw AdmissibilityError("no real fixed point for this (p/n, d)", disc);
          delta = 2.0 * c / (b + std::sqrt(disc));
        }
        const double scale = 1.0 / (1.0 - d / (1.0 - delta * d));
        const Eigen::MatrixXd oracle = scale * Eigen::MatrixXd::Identity(r.p, r.p);
        rep.metrics["qtilde_oracle_error"] = (r.Qt - oracle).cwiseAbs().maxCoeff();
        rep.metrics["delta_oracle_error"] = (r.fp.delta.array() - delta).abs().maxCoeff();
        entry["oracle"] = {{"delta", delta}, {"qtilde_diagonal", scale}};
      }
    }
    if (std::find(scaling.begin(), scaling.end(), r.n) != scaling.end()) {
      per_log.push_back(per_log_n);
      rep.metrics["error_over_log_n" + suffix("n", r.n)] = per_log_n;
    }
    runs.push_back(std::move(entry));
  }
  if (!scaling.empty()) rep.metrics["log_n_stability"] = ratio_max_min(per_log);
  rep.results = {{"mode", "deterministic_equivalent"},
                 {"diagonal", dm.to_json()},
                 {"coupling", to_string(coupling)},
                 {"epsilon", eps},
                 {"trials", T},
                 {"runs", runs}};
}

void run_resolvent_schur(const ExperimentConfig& cfg, const Params& P, ExperimentReport& rep) {
  const int p = P.get("p", 20);
  const int n = P.get("n", 50);
  const int draws = P.get("draws", 1000);
  const double eps = P.get("epsilon", 0.2);
  if (p < 1 || n < 1 || draws < 1 || !(eps > 0.0 && eps < 1.0)) throw ConfigError("bad schur sizes or epsilon");
  const DiagonalModel dm =
      P.has("diagonal") ? parse_with(P.where("diagonal"), [&] { return DiagonalModel::from_json(P.at("diagonal")); })
                        : DiagonalModel::two_point(-0.25, 0.25);
  const Coupling coupling =
      parse_with(P.where("coupling"), [&] { return parse_coupling(P.get<std::string>("coupling", "independent")); });
  const MatrixModel mm = MatrixModel::iid(p, n, VectorModel::of(VectorKind::gaussian, p), coupling);

  int accepted = 0, rejected = 0, violations = 0;
  double id_max = 0.0, act_max = 0.0, norm_ratio = 0.0, min_pivot = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd X, Y;
  // keep drawing until `draws` admissible draws were seen
  for (int k = 0; accepted < draws; ++k) {
    if (rejected > draws) throw AdmissibilityError("more rejected than admissible draws", rejected);
    draw_matrix(mm, cfg.seed, kDataStream, static_cast<std::uint64_t>(k), X, &Y);
    Engine eng = make_engine(cfg.seed, kDataStream + 2, static_cast<std::uint64_t>(k));
    Eigen::VectorXd D = dm.draw(X, eng);
    if (admissibility_measure(X, Y, D) > 1.0 - eps) {
      ++rejected;
      continue;
    }
    const ResolventSpec spec = ResolventSpec::make(X, Y, std::move(D), eps);
    const LeaveOneOut loo = leave_one_out(spec, accepted % n);
    const Resolvent r = resolvent(spec);
    id_max = std::max(id_max, loo.identity_error);
    act_max = std::max(act_max, loo.action_error);
    norm_ratio = std::max(norm_ratio, r.norm * eps);
    min_pivot = std::min(min_pivot, std::abs(loo.pivot));
    violations += !r.within_bound();
    ++accepted;
  }
  rep.metrics["identity_error_max"] = id_max;
  rep.metrics["action_error_max"] = act_max;
  rep.metrics["norm_bound_violations"] = violations;
  rep.metrics["norm_over_bound_max"] = norm_ratio;
  rep.metrics["accepted"] = accepted;
  rep.metrics["rejected"] = rejected;
  rep.results = {{"mode", "schur"},
                 {"p", p},
                 {"n", n},
                 {"epsilon", eps},
                 {"diagonal", dm.to_json()},
                 {"coupling", to_string(coupling)},
                 {"min_abs_pivot", accepted ? min_pivot : kNaN}};
}

void run_resolvent(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params,
           {"mode", "p", "n", "d", "diagonal", "trials", "epsilon", "aux_draws", "isotropic", "columns", "coupling",
            "scaling_n", "fixed_point", "draws"},
           "params");
  const std::string mode = P.get<std::string>("mode", "deterministic_equivalent");
  if (mode == "deterministic_equivalent") {
    run_resolvent_equivalent(cfg, P, rep);
  } else if (mode == "schur") {
    run_resolvent_schur(cfg, P, rep);
  } else {
    throw ConfigError("unknown resolvent mode '" + mode + "'");
  }
}

void run_robust(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params, {"p", "n_values", "link", "epsilon", "tol", "max_iter"}, "params");
  const int p = P.get("p", 50);
  const std::vector<int> ns = positive_list(P, "n_values", {200, 400, 800});
  RobustLink link;
  link.offset = 1.0;
  if (P.has("link")) link = parse_with(P.where("link"), [&] { return RobustLink::from_json(P.at("link")); });
  RobustOptions ro;
  ro.epsilon = P.get("epsilon", ro.epsilon);
  ro.tol = P.get("tol", ro.tol);
  ro.max_iter = P.get("max_iter", ro.max_iter);
  if (p < 1 || !(ro.epsilon > 0.0 && ro.epsilon < 1.0)) throw ConfigError("bad robust p or epsilon");

  std::vector<double> couplings;
  double margin = std::numeric_limits<double>::infinity();
  json runs = json::array();
  for (std::size_t ni = 0; ni < ns.size(); ++ni) {
    const int n = ns[ni];
    const MatrixModel mm = MatrixModel::iid(p, n, VectorModel::of(VectorKind::gaussian, p));
    Eigen::MatrixXd X;
    draw_matrix(mm, cfg.seed, kDataStream + 3 * static_cast<std::uint32_t>(ni), 0, X, nullptr);
    const RobustResult r = robust_beta(X, link, ro);
    if (r.iterations >= ro.max_iter) {
      throw ConvergenceError("robust iteration hit max_iter at n = " + std::to_string(n), r.step_norms);
    }
    couplings.push_back(r.max_coupling);
    margin = std::min(margin, 1.0 - ro.epsilon - r.max_rate);
    rep.metrics["max_rate" + suffix("n", n)] = r.max_rate;
    rep.metrics["coupling" + suffix("n", n)] = r.max_coupling;
    runs.push_back({{"n", n},
                    {"iterations", r.iterations},
                    {"contraction_bound", r.contraction_bound},
                    {"max_rate", r.max_rate},
                    {"max_coupling", r.max_coupling},
                    {"beta_norm", r.beta.norm()}});
  }
  rep.metrics["rate_margin_min"] = margin;
  rep.metrics["coupling_stability"] = ratio_max_min(couplings);
  rep.results = {{"p", p}, {"link", link.to_json()}, {"epsilon", ro.epsilon}, {"runs", runs}};
}

void run_moments(const ExperimentConfig& cfg, ExperimentReport& rep) {
  Params P(cfg.params, {"cases", "N", "orders", "constants"}, "params");
  const Eigen::Index N = positive_count(P, "N", 100000);
  const std::vector<double> orders = P.get<std::vector<double>>("orders", {2, 4, 6});
  const ProfileConstants constants = parse_constants(P).value_or(ProfileConstants{4.0, 4.0});
  const json default_cases = json::parse(R"([
    {"name": "gaussian", "model": {"kind": "gaussian", "dim": 16}, "observation": "coordinate"},
    {"name": "laplace", "model": {"kind": "laplace", "dim": 16}, "observation": "coordinate"},
    {"name": "product2", "model": {"kind": "gaussian", "dim": 2}, "observation": "product"}
  ])");
  const json cases = P.has("cases") ? P.at("cases") : default_cases;
  if (!cases.is_array() || cases.empty()) throw ConfigError("params.cases must be a non-empty array");

  double worst = 0.0;
  json per = json::object();
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    Params C(cases[ci], {"name", "model", "observation"}, "params.cases[" + std::to_string(ci) + "]");
    const std::string name = C.as<std::string>("name");
    const VectorModel m = parse_model(C);
    const std::string kind = C.get<std::string>("observation", "coordinate");
    ObservationSet obs;
    ConcentrationProfile prof = m.declared_profile();
    if (kind == "coordinate") {
      obs = make_observations(m.output_dim(), 0, {0}, false, false, cfg.seed);
    } else if (kind == "unit_linear") {
      obs = make_observations(m.output_dim(), 1, {}, false, false, cfg.seed);
    } else if (kind == "product") {
      if (m.kind != VectorKind::gaussian || m.transform) throw ConfigError("product observations need gaussian factors");
      obs.U.resize(m.output_dim(), 0);
      obs.product = true;
      obs.labels = {"product"};
      prof = product_profile(ProductSpec{m.output_dim(), 2.0, 1.0, std::vector<double>(m.output_dim(), 1.0)});
    } else {
      throw ConfigError("unknown observation '" + kind + "' in " + C.where("observation"));
    }
    prof = prof.with_constants(constants);
    const RowMatrix v = observe_stream(m, N, cfg.seed, kDataStream + 3 * static_cast<std::uint32_t>(ci), obs);
    const Eigen::VectorXd col = v.col(0);
    json rows = json::array();
    double ratio = 0.0;
    for (double r : orders) {
      const double emp = centered_moment(column_span(col), r);
      const double bound = moment_bound(prof, r);
      ratio = std::max(ratio, emp / bound);
      rows.push_back({{"r", r}, {"empirical", emp}, {"bound", bound}});
    }
    rep.metrics["ratio_max_" + name] = ratio;
    worst = std::max(worst, ratio);
    per[name] = {{"model", m.to_json()}, {"observation", kind}, {"profile", prof.to_json()}, {"moments", rows}};
  }
  rep.metrics["ratio_max"] = worst;
  rep.results = {{"N", N}, {"cases", per}};
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

}  // namespace

ExperimentKind parse_experiment_kind(std::string_view name) {
  for (const auto& e : kKindNames) {
    if (e.name == name) return e.kind;
  }
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

std::string_view to_string(ExperimentKind kind) {
  for (const auto& e : kKindNames) {
    if (e.kind == kind) return e.name;
  }
  throw std::domain_error("unnamed experiment kind");
}

bool Tolerance::admits(double v) const noexcept {
  if (std::isnan(v)) return false;
  return (!min || v >= *min) && (!max || v <= *max);
}

json Tolerance::to_json() const {
  json j = json::object();
  if (min) j["min"] = *min;
  if (max) j["max"] = *max;
  return j;
}

Tolerance Tolerance::from_json(const json& j) {
  Params P(j, {"min", "max"}, "tolerance");
  Tolerance t;
  if (P.has("min")) t.min = P.as<double>("min");
  if (P.has("max")) t.max = P.as<double>("max");
  if (!t.min && !t.max) throw ConfigError("tolerance needs min or max");
  return t;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  Params P(j, {"experiment", "seed", "params", "output", "reference", "tolerances"}, "config");
  ExperimentConfig c;
  c.experiment = parse_experiment_kind(P.as<std::string>("experiment"));
  c.seed = P.get<std::uint64_t>("seed", 0);
  c.params = P.get<json>("params", json::object());
  if (!c.params.is_object()) throw ConfigError("config.params must be a JSON object");
  c.output = P.get<std::string>("output", "");
  c.reference = P.get<std::string>("reference", "");
  if (P.has("tolerances")) {
    const json& t = P.at("tolerances");
    if (!t.is_object()) throw ConfigError("config.tolerances must be a JSON object");
    for (const auto& [metric, tol] : t.items()) {
      try {
        c.tolerances[metric] = Tolerance::from_json(tol);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (tolerances." + metric + ")");
      }
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json j{{"experiment", to_string(experiment)}, {"seed", seed}, {"params", params}};
  if (!output.empty()) j["output"] = output;
  if (!reference.empty()) j["reference"] = reference;
  if (!tolerances.empty()) {
    json t = json::object();
    for (const auto& [k, v] : tolerances) t[k] = v.to_json();
    j["tolerances"] = t;
  }
  return j;
}

std::string ExperimentReport::status() const {
  switch (exit_code) {
    case kExitPass: return "PASS";
    case kExitFail: return "FAIL";
    case kExitNumerical: return "ERROR";
    default: return "CONFIG";
  }
}

json ExperimentReport::to_json() const {
  json metrics_j = json::object();
  for (const auto& [k, v] : metrics) metrics_j[k] = std::isfinite(v) ? json(v) : json(nullptr);
  json checks_j = json::array();
  for (const auto& c : checks) {
    checks_j.push_back({{"metric", c.metric},
                        {"tolerance", c.tolerance.to_json()},
                        {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                        {"pass", c.pass}});
  }
  json j{{"experiment", to_string(config.experiment)},
         {"seed", config.seed},
         {"config", config.to_json()},
         {"status", status()},
         {"exit_code", exit_code},
         {"metrics", metrics_j},
         {"checks", checks_j},
         {"results", results}};
  if (!error.empty()) j["error"] = error;
  return j;
}

std::string ExperimentReport::to_markdown() const {
  std::ostringstream os;
  os << "# " << to_string(config.experiment) << " — " << status() << "\n\n";
  if (!config.reference.empty()) os << config.reference << "\n\n";
  os << "seed: " << config.seed << "\n\n";
  if (!error.empty()) os << "error: " << error << "\n\n";
  if (!checks.empty()) {
    os << "| check | value | min | max | result |\n|---|---|---|---|---|\n";
    for (const auto& c : checks) {
      os << "| " << c.metric << " | " << format_double(c.value) << " | "
         << (c.tolerance.min ? format_double(*c.tolerance.min) : "") << " | "
         << (c.tolerance.max ? format_double(*c.tolerance.max) : "") << " | " << (c.pass ? "PASS" : "FAIL")
         << " |\n";
    }
    os << "\n";
  }
  os << "| metric | value |\n|---|---|\n";
  for (const auto& [k, v] : metrics) os << "| " << k << " | " << format_double(v) << " |\n";
  return os.str();
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  ExperimentReport rep;
  rep.config = config;
  const auto start = std::chrono::steady_clock::now();
  try {
    switch (config.experiment) {
      case ExperimentKind::tail: run_tail(config, rep); break;
      case ExperimentKind::diameter: run_diameter(config, rep); break;
      case ExperimentKind::product: run_product(config, rep); break;
      case ExperimentKind::hanson_wright: run_hanson_wright(config, rep); break;
      case ExperimentKind::xdy: run_xdy(config, rep); break;
      case ExperimentKind::norm_degree: run_norm_degree(config, rep); break;
      case ExperimentKind::resolvent: run_resolvent(config, rep); break;
      case ExperimentKind::robust: run_robust(config, rep); break;
      case ExperimentKind::moments: run_moments(config, rep); break;
    }
  } catch (const ConvergenceError& e) {
    rep.error = e.what();
    rep.exit_code = kExitNumerical;
  } catch (const AdmissibilityError& e) {
    rep.error = e.what();
    rep.exit_code = kExitNumerical;
  } catch (const SingularMatrixError& e) {
    rep.error = e.what();
    rep.exit_code = kExitNumerical;
  } catch (const DegeneratePivotError& e) {
    rep.error = e.what();
    rep.exit_code = kExitNumerical;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  } catch (const std::out_of_range& e) {
    throw ConfigError(e.what());
  }

  if (rep.exit_code == kExitPass) {
    for (const auto& [metric, tol] : config.tolerances) {
      const auto it = rep.metrics.find(metric);
      if (it == rep.metrics.end()) {
        throw ConfigError("unknown key '" + metric + "' in tolerances: " + std::string(to_string(config.experiment)) +
                          " produces no such metric");
      }
      rep.checks.push_back({metric, tol, it->second, tol.admits(it->second)});
    }
    const bool ok = std::all_of(rep.checks.begin(), rep.checks.end(), [](const CheckResult& c) { return c.pass; });
    rep.exit_code = ok ? kExitPass : kExitFail;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rep.metadata = {{"tool", "conclab"},
                  {"wall_seconds", secs},
                  {"threads", omp_get_max_threads()},
                  {"finished_utc", utc_now()}};
  return rep;
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir, const std::string& stem,
                  const std::string& format) {
  if (format != "json" && format != "csv" && format != "md") throw ConfigError("unknown format '" + format + "'");
  std::filesystem::create_directories(dir);
  write_text(dir / (stem + ".json"), report.to_json().dump(2) + "\n");
  write_text(dir / (stem + ".meta.json"), report.metadata.dump(2) + "\n");
  if (format == "md") write_text(dir / (stem + ".md"), report.to_markdown());
  if (format == "csv") {
    std::ostringstream os;
    os << "metric,value\r\n";
    for (const auto& [k, v] : report.metrics) {
      os << k << ',';
      if (std::isfinite(v)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
      }
      os << "\r\n";
    }
    write_text(dir / (stem + ".metrics.csv"), os.str());
    for (const auto& [name, tail] : report.tails) tail.to_csv(dir / (stem + "." + name + ".csv"));
  }
}

std::string SuiteSummary::to_markdown() const {
  std::ostringstream os;
  os << "| config | experiment | reference | status |\n|---|---|---|---|\n";
  for (const auto& e : entries) {
    os << "| " << e.config << " | " << e.experiment << " | " << e.reference << " | " << e.status << " |\n";
  }
  os << "\noverall exit code: " << exit_code << "\n";
  return os.str();
}

SuiteSummary reproduce_all(const std::filesystem::path& suite, const std::filesystem::path& out,
                           const std::string& format, std::optional<std::uint64_t> seed) {
  if (!std::filesystem::is_directory(suite)) throw ConfigError("suite directory " + suite.string() + " not found");
  std::vector<std::filesystem::path> configs;
  for (const auto& e : std::filesystem::directory_iterator(suite)) {
    if (e.is_regular_file() && e.path().extension() == ".json") configs.push_back(e.path());
  }
  std::sort(configs.begin(), configs.end());

  SuiteSummary summary;
  for (const auto& path : configs) {
    SuiteEntry entry;
    entry.config = path.filename().string();
    try {
      ExperimentConfig cfg = ExperimentConfig::load(path);
      if (seed) cfg.seed = *seed;
      entry.experiment = std::string(to_string(cfg.experiment));
      entry.reference = cfg.reference;
      const ExperimentReport rep = run_experiment(cfg);
      write_report(rep, out, path.stem().string(), format);
      entry.status = rep.status();
      entry.exit_code = rep.exit_code;
      entry.checks = rep.checks;
    } catch (const ConfigError& e) {
      entry.status = std::string("CONFIG: ") + e.what();
      entry.exit_code = kExitConfig;
    }
    summary.exit_code = std::max(summary.exit_code, entry.exit_code);
    summary.entries.push_back(std::move(entry));
  }
  std::filesystem::create_directories(out);
  write_text(out / "summary.md", summary.to_markdown());
  return summary;
}

}  // namespace conclab
