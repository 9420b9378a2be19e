#include "conclab/rmt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "conclab/errors.hpp"

namespace conclab {

namespace {

Eigen::MatrixXd xdy_over_n(const Eigen::MatrixXd& X, const Eigen::VectorXd& D, const Eigen::MatrixXd& Y) {
  return X * D.asDiagonal() * Y.transpose() / static_cast<double>(X.cols());
}

bool plain_gaussian(const VectorModel& m) { return m.kind == VectorKind::gaussian && !m.transform; }

}  // namespace

// ---------------------------------------------------------------------------
// Resolvent

double admissibility_measure(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const Eigen::VectorXd& D) {
  const double sn = std::sqrt(static_cast<double>(X.cols()));
  const double kappa = std::max(spectral_norm(X), spectral_norm(Y)) / sn;
  const double kd = D.size() ? D.cwiseAbs().maxCoeff() : 0.0;
  return kappa * kappa * kd;
}

ResolventSpec ResolventSpec::make(Eigen::MatrixXd X, Eigen::MatrixXd Y, Eigen::VectorXd D, double epsilon) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols() || D.size() != X.cols() || X.size() == 0) {
    throw ShapeError("resolvent spec: X, Y must be p x n and D must have n entries");
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::out_of_range("resolvent spec: epsilon must lie in (0, 1)");
  ResolventSpec s;
  const double sn = std::sqrt(static_cast<double>(X.cols()));
  s.kappa = std::max(spectral_norm(X), spectral_norm(Y)) / sn;
  s.kappa_D = D.cwiseAbs().maxCoeff();
  s.epsilon = epsilon;
  s.X = std::move(X);
  s.Y = std::move(Y);
  s.D = std::move(D);
  if (s.margin() > 1.0 - epsilon) {
    throw AdmissibilityError("kappa^2 kappa_D = " + std::to_string(s.margin()) + " exceeds 1 - epsilon = " +
                                 std::to_string(1.0 - epsilon) + " (||XDY^T/n|| = " +
                                 std::to_string(spectral_norm(xdy_over_n(s.X, s.D, s.Y))) + ")",
                             s.margin());
  }
  return s;
}

Resolvent resolvent(const ResolventSpec& spec) {
  const int p = spec.p();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd M = I - xdy_over_n(spec.X, spec.D, spec.Y);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  Resolvent r;
  r.Q = lu.solve(I);
  const double target = 1e-8 * std::sqrt(static_cast<double>(p));
  r.residual = (M * r.Q - I).norm();
  // iterative refinement on the residual
  while (r.residual > target && r.refinements < 5) {
    r.Q += lu.solve(I - M * r.Q);
    r.residual = (M * r.Q - I).norm();
    ++r.refinements;
  }
  if (!(r.residual <= target)) {
    throw SingularMatrixError("resolvent residual " + std::to_string(r.residual) + " above tolerance",
                              smallest_singular_value(M));
  }
  r.norm = spectral_norm(r.Q);
  r.bound = 1.0 / spec.epsilon;
  return r;
}

// ---------------------------------------------------------------------------
// Deterministic equivalent

Eigen::VectorXd resolvent_weights(const Eigen::VectorXd& delta, const RowMatrix& d_samples) {
  if (d_samples.cols() != delta.size() || d_samples.rows() < 1) {
    throw ShapeError("resolvent_weights: D samples must be T x n with T >= 1");
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(delta.size());
  for (Eigen::Index t = 0; t < d_samples.rows(); ++t) {
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      const double d = d_samples(t, i);
      const double den = 1.0 - delta(i) * d;
      if (!(den > 0.0)) {
        throw std::domain_error("1 - delta_i D_i = " + std::to_string(den) + " is not positive");
      }
      e(i) += d / den;
    }
  }
  return e / static_cast<double>(d_samples.rows());
}

Eigen::MatrixXd q_tilde(const Eigen::VectorXd& delta, const RowMatrix& d_samples,
                        const std::vector<Eigen::MatrixXd>& sigma) {
  const Eigen::Index n = delta.size();
  if (sigma.empty() || (sigma.size() != 1 && static_cast<Eigen::Index>(sigma.size()) != n)) {
    throw ShapeError("q_tilde: sigma must hold 1 or n matrices");
  }
  const Eigen::Index p = sigma.front().rows();
  for (const auto& s : sigma) {
    if (s.rows() != p || s.cols() != p) throw ShapeError("q_tilde: sigma matrices must be p x p");
  }
  const Eigen::VectorXd e = resolvent_weights(delta, d_samples);
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(p, p);
  if (sigma.size() == 1) {
    M -= (e.sum() / static_cast<double>(n)) * sigma.front();
  } else {
    for (Eigen::Index i = 0; i < n; ++i) M -= (e(i) / static_cast<double>(n)) * sigma[i];
  }
  const double smin = smallest_singular_value(M);
  if (smin < 1e-12) throw SingularMatrixError("q_tilde: I - (1/n) sum e_i Sigma_i is singular", smin);
  return M.partialPivLu().solve(Eigen::MatrixXd::Identity(p, p));
}

nlohmann::json FixedPointState::to_json() const {
  return {{"delta_mean", delta.size() ? delta.mean() : 0.0},
          {"delta_min", delta.size() ? delta.minCoeff() : 0.0},
          {"delta_max", delta.size() ? delta.maxCoeff() : 0.0},
          {"residual", residual},
          {"iterations", iterations},
          {"converged", converged},
          {"residual_trace", residual_trace}};
}

FixedPointState solve_delta(const std::vector<Eigen::MatrixXd>& sigma, int n, const RowMatrix& d_samples,
                            const FixedPointOptions& opts) {
  if (n < 1) throw std::out_of_range("solve_delta: n must be >= 1");
  if (!(opts.omega > 0.0 && opts.omega <= 1.0)) throw std::out_of_range("solve_delta: omega must lie in (0, 1]");
  const double dn = static_cast<double>(n);
  auto image = [&](const Eigen::VectorXd& delta) {
    const Eigen::MatrixXd Qt = q_tilde(delta, d_samples, sigma);
    Eigen::VectorXd out(n);
    if (sigma.size() == 1) {
      out.setConstant((sigma.front().cwiseProduct(Qt.transpose())).sum() / dn);
    } else {
      for (int i = 0; i < n; ++i) out(i) = (sigma[i].cwiseProduct(Qt.transpose())).sum() / dn;
    }
    return out;
  };

  FixedPointState st;
  st.delta = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd F = image(st.delta);
  st.residual = (st.delta - F).cwiseAbs().maxCoeff();
  st.residual_trace.push_back(st.residual);
  while (st.residual > opts.tol && st.iterations < opts.max_iter) {
    double omega = opts.omega;
    for (;;) {
      Eigen::VectorXd cand = ((1.0 - omega) * st.delta + omega * F).cwiseMax(0.0);
      bool ok = true;
      Eigen::VectorXd Fc;
      double rc = std::numeric_limits<double>::infinity();
      try {
        Fc = image(cand);
        rc = (cand - Fc).cwiseAbs().maxCoeff();
      } catch (const std::domain_error&) {
        ok = false;
      } catch (const SingularMatrixError&) {
        ok = false;
      }
      if ((ok && rc < st.residual) || omega < 1e-6) {
        if (!ok) {
          throw ConvergenceError("solve_delta left the admissible region", st.residual_trace);
        }
        st.delta = std::move(cand);
        F = std::move(Fc);
        st.residual = rc;
        break;
      }
      omega /= 2.0;
    }
    ++st.iterations;
    st.residual_trace.push_back(st.residual);
  }
  st.converged = st.residual <= opts.tol;
  return st;
}

// ---------------------------------------------------------------------------
// Random diagonals and column covariances

DiagonalModel DiagonalModel::constant(double d) {
  DiagonalModel m;
  m.kind = Kind::constant;
  m.d1 = d;
  return m;
}

DiagonalModel DiagonalModel::two_point(double d1, double d2) {
  DiagonalModel m;
  m.kind = Kind::two_point;
  m.d1 = d1;
  m.d2 = d2;
  return m;
}

DiagonalModel DiagonalModel::coordinate_fn(ScalarFn fn, double scale, int coordinate) {
  if (coordinate < 0) throw std::out_of_range("coordinate must be >= 0");
  DiagonalModel m;
  m.kind = Kind::coordinate_fn;
  m.fn = fn;
  m.scale = scale;
  m.coordinate = coordinate;
  return m;
}

Eigen::VectorXd DiagonalModel::draw(const Eigen::MatrixXd& X, Engine& eng) const {
  const Eigen::Index n = X.cols();
  switch (kind) {
    case Kind::constant:
      return Eigen::VectorXd::Constant(n, d1);
    case Kind::two_point: {
      std::bernoulli_distribution coin(0.5);
      Eigen::VectorXd d(n);
      for (auto& v : d) v = coin(eng) ? d2 : d1;
      return d;
    }
    case Kind::coordinate_fn: {
      if (coordinate >= X.rows()) throw ShapeError("diagonal model reads a coordinate beyond p");
      Eigen::VectorXd d(n);
      for (Eigen::Index i = 0; i < n; ++i) d(i) = scale * apply_scalar_fn(fn, X(coordinate, i));
      return d;
    }
  }
  throw std::logic_error("unknown diagonal model");
}

nlohmann::json DiagonalModel::to_json() const {
  switch (kind) {
    case Kind::constant: return {{"kind", "constant"}, {"d", d1}};
    case Kind::two_point: return {{"kind", "two_point"}, {"d1", d1}, {"d2", d2}};
    case Kind::coordinate_fn:
      return {{"kind", "coordinate_fn"}, {"fn", to_string(fn)}, {"scale", scale}, {"coordinate", coordinate}};
  }
  return {};
}

DiagonalModel DiagonalModel::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("diagonal model must be an object");
  const std::string kind = j.at("kind").get<std::string>();
  auto allow = [&](std::initializer_list<std::string_view> keys) {
    for (const auto& [k, _] : j.items()) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown diagonal model key '" + k + "'");
    }
  };
  if (kind == "constant") {
    allow({"kind", "d"});
    return constant(j.at("d").get<double>());
  }
  if (kind == "two_point") {
    allow({"kind", "d1", "d2"});
    return two_point(j.at("d1").get<double>(), j.at("d2").get<double>());
  }
  if (kind == "coordinate_fn") {
    allow({"kind", "fn", "scale", "coordinate"});
    return coordinate_fn(parse_scalar_fn(j.at("fn").get<std::string>()), j.value("scale", 1.0),
                         j.value("coordinate", 0));
  }
  throw ConfigError("unknown diagonal model kind '" + kind + "'");
}

RowMatrix diagonal_samples(const DiagonalModel& dm, const MatrixModel& mm, int aux_draws, std::uint64_t master_seed,
                           std::uint32_t stream) {
  switch (dm.kind) {
    case DiagonalModel::Kind::constant:
      return RowMatrix::Constant(1, mm.n, dm.d1);
    case DiagonalModel::Kind::two_point: {
      RowMatrix s(2, mm.n);
      s.row(0).setConstant(dm.d1);
      s.row(1).setConstant(dm.d2);
      return s;
    }
    case DiagonalModel::Kind::coordinate_fn: {
      if (aux_draws < 1) throw std::out_of_range("aux_draws must be >= 1");
      RowMatrix s(aux_draws, mm.n);
      Eigen::MatrixXd X;
      Engine unused(0);
      for (int t = 0; t < aux_draws; ++t) {
        draw_matrix(mm, master_seed, stream, static_cast<std::uint64_t>(t), X, nullptr);
        s.row(t) = dm.draw(X, unused).transpose();
      }
      return s;
    }
  }
  throw std::logic_error("unknown diagonal model");
}

SigmaEstimate column_covariance(const MatrixModel& mm, int aux_draws, std::uint64_t master_seed,
                                std::uint32_t stream) {
  if (mm.coupling == Coupling::none) throw std::invalid_argument("column covariance needs a coupled matrix model");
  const int p = mm.p;
  SigmaEstimate est;
  const bool gaussian = std::all_of(mm.columns.begin(), mm.columns.end(), plain_gaussian);
  if (gaussian) {
    const double s = mm.coupling == Coupling::identical      ? 1.0
                     : mm.coupling == Coupling::gaussian_mix ? 1.0 / std::sqrt(2.0)
                                                             : 0.0;
    est.sigma = {s * Eigen::MatrixXd::Identity(p, p)};
    return est;
  }
  if (mm.columns.size() != 1) throw std::invalid_argument("estimated column covariance needs i.i.d. columns");
  if (aux_draws < 2) throw std::out_of_range("aux_draws must be >= 2");
  // draws of (x_1, y_1) from a single-column copy of the model
  MatrixModel one = mm;
  one.n = 1;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, p), sq = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd x, y;
  for (int t = 0; t < aux_draws; ++t) {
    draw_matrix(one, master_seed, stream, static_cast<std::uint64_t>(t), x, &y);
    const Eigen::MatrixXd xy = x.col(0) * y.col(0).transpose();
    sum += xy;
    sq += xy.cwiseProduct(xy);
  }
  const double T = aux_draws;
  const Eigen::MatrixXd mean = sum / T;
  const Eigen::MatrixXd var = ((sq / T - mean.cwiseProduct(mean)) * (T / (T - 1))).cwiseMax(0.0);
  est.sigma = {mean};
  est.analytic = false;
  est.standard_error = std::sqrt(var.sum() / T);
  return est;
}

MonteCarloEQ monte_carlo_EQ(const MatrixModel& mm, const DiagonalModel& dm, int trials, double epsilon,
                            std::uint64_t master_seed, std::uint32_t stream) {
  if (trials < 1) throw std::out_of_range("monte_carlo_EQ needs at least one trial");
  if (mm.coupling == Coupling::none) throw std::invalid_argument("monte_carlo_EQ needs a coupled matrix model");
  const int p = mm.p;
  MonteCarloEQ out;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, p), sq = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd X, Y;
  const int max_rejections = trials / 100;
  for (std::uint64_t t = 0; out.accepted < trials; ++t) {
    draw_matrix(mm, master_seed, stream, t, X, &Y);
    Engine eng = make_engine(master_seed, stream + 2, t);
    Eigen::VectorXd D = dm.draw(X, eng);
    if (admissibility_measure(X, Y, D) > 1.0 - epsilon) {
      if (++out.rejected > max_rejections) {
        throw AdmissibilityError("rejection rate above 1% (" + std::to_string(out.rejected) + " rejected, " +
                                     std::to_string(out.accepted) + " accepted)",
                                 static_cast<double>(out.rejected) / (out.rejected + out.accepted));
      }
      continue;
    }
    const Resolvent r = resolvent(ResolventSpec::make(X, Y, std::move(D), epsilon));
    sum += r.Q;
    sq += r.Q.cwiseProduct(r.Q);
    out.max_residual = std::max(out.max_residual, r.residual);
    out.all_within_bound = out.all_within_bound && r.within_bound();
    ++out.accepted;
  }
  const double T = out.accepted;
  out.mean = sum / T;
  if (out.accepted > 1) {
    const Eigen::MatrixXd var = ((sq / T - out.mean.cwiseProduct(out.mean)) * (T / (T - 1))).cwiseMax(0.0);
    out.standard_error = (var / T).cwiseSqrt();
  } else {
    out.standard_error = Eigen::MatrixXd::Zero(p, p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-out

LeaveOneOut leave_one_out(const ResolventSpec& spec, int i) {
  if (i < 0 || i >= spec.n()) throw std::out_of_range("leave_one_out: column index out of range");
  const double n = spec.n();
  LeaveOneOut r;
  ResolventSpec minus = spec;
  minus.X.col(i).setZero();
  minus.Y.col(i).setZero();
  r.Q_minus_i = resolvent(minus).Q;
  const auto xi = spec.X.col(i);
  const auto yi = spec.Y.col(i);
  const Eigen::VectorXd qx = r.Q_minus_i * xi;
  r.Delta_i = yi.dot(qx) / n;
  r.pivot = 1.0 - spec.D(i) * r.Delta_i;
  // a vanishing pivot means I - X D Y^T / n itself is singular
  if (std::abs(r.pivot) < 1e-10) throw DegeneratePivotError("1 - D_i Delta_i vanishes", r.pivot);
  r.Q = resolvent(spec).Q;
  const Eigen::RowVectorXd yq = yi.transpose() * r.Q_minus_i;
  const Eigen::MatrixXd rebuilt = r.Q_minus_i + (spec.D(i) / (n * r.pivot)) * qx * yq;
  r.identity_error = (rebuilt - r.Q).norm() / r.Q.norm();
  const Eigen::VectorXd lhs = r.Q * xi;
  const double scale = lhs.norm();
  r.action_error = scale > 0.0 ? (lhs - qx / r.pivot).norm() / scale : (qx / r.pivot).norm();
  return r;
}

// ---------------------------------------------------------------------------
// Robust regression

double RobustLink::f(double t) const noexcept {
  return kind == Kind::constant ? amplitude : amplitude * std::tanh(t + offset);
}

double RobustLink::fprime(double t) const noexcept {
  if (kind == Kind::constant) return 0.0;
  const double c = std::cosh(t + offset);
  return amplitude / (c * c);
}

double RobustLink::sup_f() const noexcept { return std::abs(amplitude); }
double RobustLink::sup_fprime() const noexcept { return kind == Kind::constant ? 0.0 : std::abs(amplitude); }
// |d^2/dt^2 tanh| peaks at 4 / (3 sqrt 3)
double RobustLink::sup_fsecond() const noexcept {
  return kind == Kind::constant ? 0.0 : std::abs(amplitude) * 4.0 / (3.0 * std::sqrt(3.0));
}

nlohmann::json RobustLink::to_json() const {
  if (kind == Kind::constant) return {{"kind", "constant"}, {"value", amplitude}};
  return {{"kind", "tanh"}, {"amplitude", amplitude}, {"offset", offset}};
}

RobustLink RobustLink::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("link must be an object");
  RobustLink l;
  const std::string kind = j.at("kind").get<std::string>();
  for (const auto& [k, _] : j.items()) {
    const bool ok = k == "kind" || (kind == "constant" ? k == "value" : (k == "amplitude" || k == "offset"));
    if (!ok) throw ConfigError("unknown link key '" + k + "'");
  }
  if (kind == "constant") {
    l.kind = Kind::constant;
    l.amplitude = j.at("value").get<double>();
  } else if (kind == "tanh") {
    l.amplitude = j.value("amplitude", 0.2);
    l.offset = j.value("offset", 0.0);
  } else {
    throw ConfigError("unknown link kind '" + kind + "'");
  }
  return l;
}

namespace {

// beta <- (1/n) sum_{j != skip} f(x_j^T beta) x_j until the step is below tol.
struct Iteration {
  Eigen::VectorXd beta;
  std::vector<double> steps;
  int iterations = 0;
};

Iteration iterate_beta(const Eigen::MatrixXd& X, const RobustLink& link, Eigen::VectorXd beta, int skip,
                       const RobustOptions& opts) {
  const double n = X.cols();
  Iteration it;
  for (;;) {
    Eigen::VectorXd s = X.transpose() * beta;
    for (Eigen::Index j = 0; j < s.size(); ++j) s(j) = j == skip ? 0.0 : link.f(s(j));
    Eigen::VectorXd next = X * s / n;
    const double step = (next - beta).norm();
    it.steps.push_back(step);
    beta = std::move(next);
    ++it.iterations;
    if (step <= opts.tol * (1.0 + beta.norm())) break;
    if (it.iterations >= opts.max_iter) {
      throw ConvergenceError("robust fixed point did not converge in " + std::to_string(opts.max_iter) +
                                 " iterations",
                             it.steps);
    }
  }
  it.beta = std::move(beta);
  return it;
}

}  // namespace

RobustResult robust_beta(const Eigen::MatrixXd& X, const RobustLink& link, const RobustOptions& opts) {
  if (X.size() == 0) throw ShapeError("robust_beta: empty design");
  const double n = X.cols();
  RobustResult res;
  const double xn = spectral_norm(X);
  res.contraction_bound = link.sup_fprime() * xn * xn / n;
  if (res.contraction_bound > 1.0 - opts.epsilon) {
    throw AdmissibilityError("contraction margin violated: (1/n)||f'|| ||X||^2 = " +
                                 std::to_string(res.contraction_bound),
                             res.contraction_bound);
  }
  Iteration it = iterate_beta(X, link, Eigen::VectorXd::Zero(X.rows()), -1, opts);
  res.beta = std::move(it.beta);
  res.iterations = it.iterations;
  res.step_norms = std::move(it.steps);
  for (std::size_t k = 1; k < res.step_norms.size(); ++k) {
    // ratios of steps at rounding level carry no information
    if (res.step_norms[k - 1] > 1e-13 * (1.0 + res.beta.norm())) {
      res.max_rate = std::max(res.max_rate, res.step_norms[k] / res.step_norms[k - 1]);
    }
  }
  const Eigen::VectorXd s = X.transpose() * res.beta;
  res.D = s.unaryExpr([&](double v) { return link.fprime(v); });
  if (!opts.leave_one_out) return res;

  const Eigen::Index nn = X.cols();
  res.coupling_norms.resize(nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    const Iteration loo = iterate_beta(X, link, res.beta, static_cast<int>(i), opts);
    const Eigen::VectorXd si = X.transpose() * loo.beta;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < nn; ++j) {
      if (j == i) continue;
      const double diff = res.D(j) - link.fprime(si(j));
      acc += diff * diff;
    }
    res.coupling_norms(i) = std::sqrt(acc);
  }
  res.max_coupling = res.coupling_norms.maxCoeff();
  return res;
}

// ---------------------------------------------------------------------------
// E[X D Y^T] against E[X E[D] Y^T]

nlohmann::json XDYMeanReport::to_json() const {
  return {{"p", p},
          {"n", n},
          {"trials", trials},
          {"difference", difference},
          {"standard_error", standard_error},
          {"ratio_to_n", ratio_to_n}};
}

XDYMeanReport estimate_XDY_mean(const MatrixModel& mm, const DiagonalModel& dm, int trials,
                                std::uint64_t master_seed, std::uint32_t stream) {
  if (trials < 2) throw std::out_of_range("estimate_XDY_mean needs at least 2 trials");
  if (mm.coupling == Coupling::none) throw std::invalid_argument("estimate_XDY_mean needs a coupled matrix model");
  const int p = mm.p, n = mm.n;
  Eigen::MatrixXd X, Y;
  // pass 1: E_hat[D]
  RowMatrix Ds(trials, n);
  for (int t = 0; t < trials; ++t) {
    draw_matrix(mm, master_seed, stream, static_cast<std::uint64_t>(t), X, &Y);
    Engine eng = make_engine(master_seed, stream + 2, static_cast<std::uint64_t>(t));
    Ds.row(t) = dm.draw(X, eng).transpose();
  }
  const Eigen::VectorXd ED = Ds.colwise().mean().transpose();
  // pass 2: per-trial X (D - E_hat[D]) Y^T
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, p), sq = Eigen::MatrixXd::Zero(p, p);
  for (int t = 0; t < trials; ++t) {
    draw_matrix(mm, master_seed, stream, static_cast<std::uint64_t>(t), X, &Y);
    const Eigen::VectorXd dd = Ds.row(t).transpose() - ED;
    const Eigen::MatrixXd diff = X * dd.asDiagonal() * Y.transpose();
    sum += diff;
    sq += diff.cwiseProduct(diff);
  }
  const double T = trials;
  const Eigen::MatrixXd mean = sum / T;
  const Eigen::MatrixXd var = ((sq / T - mean.cwiseProduct(mean)) * (T / (T - 1))).cwiseMax(0.0);
  XDYMeanReport rep;
  rep.p = p;
  rep.n = n;
  rep.trials = trials;
  rep.difference = mean.norm();
  rep.standard_error = std::sqrt(var.sum() / T);
  rep.ratio_to_n = rep.difference / n;
  return rep;
}

}  // namespace conclab
