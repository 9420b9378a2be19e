#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "conclab/errors.hpp"
#include "conclab/estimation.hpp"
#include "conclab/observables.hpp"
#include "oracles.hpp"

using namespace conclab;

namespace {

std::vector<double> column(const SampleEnsemble& e, Eigen::Index c = 0) {
  return std::vector<double>(e.data.col(c).begin(), e.data.col(c).end());
}

std::vector<double> normal_values(Eigen::Index N, std::uint64_t seed) {
  return column(sample(VectorModel::of(VectorKind::gaussian, 1), N, seed));
}

EmpiricalTail synthetic(const std::function<double(double)>& alpha, double lo, double hi, int points = 256) {
  EmpiricalTail t;
  t.N = 1000000;
  for (int i = 0; i < points; ++i) {
    const double x = lo * std::pow(hi / lo, i / (points - 1.0));
    t.t.push_back(x);
    t.alpha.push_back(alpha(x));
  }
  return t;
}

}  // namespace

TEST_CASE("DKW band formula") {
  CHECK(dkw_band(100000, 0.05) == doctest::Approx(std::sqrt(std::log(40.0) / 200000.0)));
  CHECK(dkw_band(400, 0.1) == doctest::Approx(dkw_band(100, 0.1) / 2).epsilon(1e-14));
  CHECK_THROWS_AS(dkw_band(0, 0.1), InsufficientDataError);
  CHECK_THROWS_AS(dkw_band(10, 1.5), std::out_of_range);
}

TEST_CASE("empirical tail on constant data") {
  const std::vector<double> v(500, 3.25);
  const auto tail = empirical_tail(v);
  CHECK(tail.center == 3.25);
  for (std::size_t k = 0; k < tail.t.size(); ++k) {
    CHECK(tail.t[k] > 0.0);
    CHECK(tail.alpha[k] == 0.0);
  }
  CHECK_THROWS_AS(empirical_tail(std::vector<double>{1.0}), InsufficientDataError);
}

TEST_CASE("empirical tail of a standard normal at t = 1") {
  const auto v = normal_values(100000, 1);
  TailGridSpec g;
  g.explicit_grid = {1.0};
  const auto tail = empirical_tail(v, CenterKind::mean, g);
  CHECK(oracles::normal_two_sided_tail(1.0) == doctest::Approx(0.31731050786291415).epsilon(1e-14));
  CHECK(std::abs(tail.alpha[0] - oracles::normal_two_sided_tail(1.0)) <= tail.band);
}

TEST_CASE("empirical tail counts exactly and is monotone") {
  std::mt19937_64 eng(2);
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> v(777);
  for (auto& x : v) x = ex(eng);
  const auto tail = empirical_tail(v, CenterKind::median);
  CHECK(tail.t.size() == 256);
  CHECK(std::is_sorted(tail.t.begin(), tail.t.end()));
  const double m = median(v);
  for (std::size_t k = 0; k < tail.t.size(); ++k) {
    std::size_t count = 0;
    for (double x : v) count += std::abs(x - m) >= tail.t[k];
    CHECK(tail.alpha[k] == static_cast<double>(count) / v.size());
    if (k) CHECK(tail.alpha[k] <= tail.alpha[k - 1]);
  }
  CHECK(tail.alpha.front() <= 1.0);
  // the grid starts at the median deviation and ends at the (1 - 1/(2N)) quantile
  CHECK(tail.alpha.front() == doctest::Approx(0.5).epsilon(0.01));
  CHECK(tail.alpha.back() > 0.0);
}

TEST_CASE("the three centers agree on concentrated data") {
  const auto v = normal_values(100000, 3);
  TailGridSpec g;
  for (int i = 1; i <= 40; ++i) g.explicit_grid.push_back(0.1 * i);
  const auto med = empirical_tail(v, CenterKind::median, g);
  const auto mean = empirical_tail(v, CenterKind::mean, g);
  CHECK(std::abs(med.center - mean.center) < 0.02);
  for (std::size_t k = 0; k < g.explicit_grid.size(); ++k) {
    CHECK(std::abs(med.alpha[k] - mean.alpha[k]) <= 2 * med.band);
  }
  // |X - X'| >= 2t forces one of X, X' at distance >= t from the median
  TailGridSpec g2;
  for (double t : g.explicit_grid) g2.explicit_grid.push_back(2 * t);
  const auto ic = empirical_tail(v, CenterKind::independent_copy, g2);
  CHECK(ic.N == 50000);
  for (std::size_t k = 0; k < g.explicit_grid.size(); ++k) {
    CHECK(ic.alpha[k] <= 2 * med.alpha[k] + ic.band + med.band);
  }
}

TEST_CASE("tail fit inverts noiseless single-regime envelopes") {
  for (double q : {0.5, 1.0, 2.0, 4.0}) {
    for (double s : {0.3, 1.0, 2.5}) {
      const double lo = s * std::pow(-std::log(0.2), 1 / q), hi = s * std::pow(-std::log(1e-4), 1 / q);
      const auto tail = synthetic([&](double t) { return std::exp(-std::pow(t / s, q)); }, lo, hi);
      const auto fit = fit_tail_exponent(tail);
      CHECK(fit.q_hat == doctest::Approx(q).epsilon(1e-6));
      CHECK(fit.scale_hat == doctest::Approx(s).epsilon(1e-6));
      CHECK(fit.r2 == doctest::Approx(1.0));
      CHECK(fit.points >= 5);
    }
  }
  // with C = 2 the inversion needs the matching fit constant
  const auto tail2 = synthetic([](double t) { return 2 * std::exp(-t * t); }, 1.0, 3.0);
  FitOptions o;
  o.C = 2.0;
  CHECK(fit_tail_exponent(tail2, o).q_hat == doctest::Approx(2.0).epsilon(1e-6));
  o.free_C = true;
  o.C = 1.0;
  const auto free = fit_tail_exponent(tail2, o);
  CHECK(free.C == doctest::Approx(2.0).epsilon(0.01));
  CHECK(free.q_hat == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("tail fit errors") {
  const auto tail = synthetic([](double t) { return std::exp(-t); }, 0.01, 0.1);  // alpha > 0.9
  CHECK_THROWS_AS(fit_tail_exponent(tail), FitWindowError);
  FitOptions bad;
  bad.alpha_lo = 0.5;
  bad.alpha_hi = 0.1;
  CHECK_THROWS_AS(fit_tail_exponent(tail, bad), std::out_of_range);
}

TEST_CASE("gaussian tail fit matches the fit of the exact normal tail") {
  // The exact normal tail is not of the form exp(-(t/s)^2) on this window;
  // fitting the erfc oracle gives the value Monte Carlo must reproduce.
  const auto exact = synthetic([](double t) { return oracles::normal_two_sided_tail(t); }, 1.0, 3.6);
  const double q_exact = fit_tail_exponent(exact).q_hat;
  CHECK(q_exact > 1.5);
  CHECK(q_exact < 1.65);
  const auto v = normal_values(100000, 4);
  const auto fit = fit_tail_exponent(empirical_tail(v, CenterKind::median));
  CHECK(std::abs(fit.q_hat - q_exact) < 0.1);
}

TEST_CASE("laplace coordinate tail exponent") {
  const auto e = sample(VectorModel::of(VectorKind::laplace, 1), 100000, 5);
  const auto fit = fit_tail_exponent(empirical_tail(column(e), CenterKind::median));
  CHECK(fit.q_hat >= 0.8);
  CHECK(fit.q_hat <= 1.2);
}

TEST_CASE("gaussian product tail exponent") {
  const Eigen::Index N = 200000;
  const auto a = sample(VectorModel::of(VectorKind::gaussian, 1), N, 6, 0);
  const auto b = sample(VectorModel::of(VectorKind::gaussian, 1), N, 6, 1);
  const auto pr = hadamard_chain({a, b});
  const auto tail = empirical_tail(column(pr), CenterKind::median);
  const double q = fit_tail_exponent(tail).q_hat;
  const auto exact = synthetic([](double t) { return oracles::gaussian_product_tail(t); }, 0.5, 8.0, 128);
  CHECK(std::abs(q - fit_tail_exponent(exact).q_hat) < 0.1);
  CHECK(q >= 0.8);
  CHECK(q <= 1.2);
}

TEST_CASE("observable diameter") {
  std::mt19937_64 eng(9);
  auto unit_forms = [&](int p, int K) {
    std::vector<Observation> obs;
    for (int k = 0; k < K; ++k) obs.push_back(Observation::linear(random_unit_vector(p, eng)));
    obs.push_back(Observation::norm_of(SpaceKind::euclidean));
    return obs;
  };
  auto observe_all = [](const SampleEnsemble& e, const std::vector<Observation>& obs) {
    SampleEnsemble out;
    out.data.resize(e.trials(), static_cast<Eigen::Index>(obs.size()));
    for (std::size_t k = 0; k < obs.size(); ++k) out.data.col(k) = observe(e, obs[k]).data.col(0);
    return out;
  };
  for (int p : {64, 1024}) {
    const auto e = sample(VectorModel::of(VectorKind::gaussian, p), 20000, 10);
    const auto rep = observable_diameter(observe_all(e, unit_forms(p, 8)));
    CHECK(rep.diameter >= 0.9);
    CHECK(rep.diameter <= 1.1);
    CHECK(rep.stds.back() == doctest::Approx(std::sqrt(0.5)).epsilon(0.05));
  }
  const int p = 256;
  const auto rep_e = sample(VectorModel::of(VectorKind::replicated, p), 5000, 11);
  const auto sum = observe(rep_e, Observation::linear(Eigen::VectorXd::Ones(p) / std::sqrt(p)));
  CHECK(observable_diameter(sum).diameter == doctest::Approx(std::sqrt(p)).epsilon(0.05));
  const auto z = sample(VectorModel::of(VectorKind::zero, 5), 100, 1);
  CHECK(observable_diameter(observe_all(z, unit_forms(5, 3))).diameter == 0.0);
}

TEST_CASE("check_profile") {
  const auto v = normal_values(100000, 12);
  const ConcentrationProfile gauss({{2.0, 1.0}});
  const auto ok = check_profile(v, gauss);
  CHECK(ok.envelope_pass());
  CHECK(ok.moments_pass());
  CHECK(ok.pass());
  CHECK(ok.leading_exponent == 2.0);
  REQUIRE(ok.fit);

  const auto bad = check_profile(v, ConcentrationProfile({{2.0, 0.1}}));
  CHECK_FALSE(bad.envelope_pass());
  CHECK(bad.worst_excess > 0.0);

  // monotone in scale: enlarging the scale never flips PASS to FAIL
  bool was_pass = false;
  for (double s = 0.05; s < 3.0; s *= 1.25) {
    const bool p = check_profile(v, ConcentrationProfile({{2.0, s}})).pass();
    CHECK((!was_pass || p));
    was_pass = was_pass || p;
  }
  CHECK(was_pass);

  // Lipschitz scaling: 3 * g against (2, 1) with lambda = 3
  std::vector<double> v3(v);
  for (auto& x : v3) x *= 3;
  CHECK(check_profile(v3, gauss, 3.0).pass());

  // m = 2 product against the product profile
  const auto a = sample(VectorModel::of(VectorKind::gaussian, 1), 100000, 13, 0);
  const auto b = sample(VectorModel::of(VectorKind::gaussian, 1), 100000, 13, 1);
  const auto prof = product_profile(ProductSpec{2, 2.0, 1.0, {1.0, 1.0}});
  const auto pc = check_profile(column(hadamard_chain({a, b})), prof);
  CHECK(pc.pass());
  CHECK(pc.trailing_exponent == 1.0);
  REQUIRE(pc.fit);
  CHECK(pc.fit->q_hat == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("centered moments") {
  CHECK(centered_moment(std::vector<double>{1, 3}, 2) == 1.0);
  const auto v = normal_values(200000, 14);
  CHECK(centered_moment(v, 4) == doctest::Approx(3.0).epsilon(0.03));
}

TEST_CASE("norm expectation checks") {
  std::vector<NormSample> euclid;
  for (int p : {16, 64, 256}) {
    const auto e = sample(VectorModel::of(VectorKind::gaussian, p), 4000, 15);
    euclid.push_back({p, 1, mean_centered_norm(e, SpaceKind::euclidean), e.trials()});
  }
  const auto nc = norm_expectation_check(SpaceKind::euclidean, euclid);
  CHECK(nc.stability < 1.1);
  CHECK(nc.fitted_constant == doctest::Approx(1.0).epsilon(0.05));
  // E||Z|| against the gamma-ratio oracle at p = 256
  const auto e256 = sample(VectorModel::of(VectorKind::gaussian, 256), 4000, 16);
  CHECK(e256.data.rowwise().norm().mean() == doctest::Approx(oracles::gaussian_norm_mean(256)).epsilon(0.01));
  CHECK_THROWS_AS(norm_expectation_check(SpaceKind::euclidean, {euclid[0], euclid[1]}), InsufficientDataError);

  // l-infinity: E||Z||_inf / sqrt(2 log p) at p = 4096
  const auto e4096 = sample(VectorModel::of(VectorKind::gaussian, 4096), 300, 17);
  const double linf = e4096.data.cwiseAbs().rowwise().maxCoeff().mean() / std::sqrt(2 * std::log(4096.0));
  CHECK(linf >= 0.85);
  CHECK(linf <= 1.1);

  // spectral: E||X|| / (sqrt p + sqrt n) at p = n = 200
  const auto m = sample_matrix(MatrixModel::iid(200, 200, VectorModel::of(VectorKind::gaussian, 200)), 10, 18);
  double acc = 0.0;
  for (Eigen::Index t = 0; t < m.x.trials(); ++t) acc += spectral_norm(m.x.matrix(t));
  const double ratio = acc / m.x.trials() / (2 * std::sqrt(200.0));
  CHECK(ratio >= 0.9);
  CHECK(ratio <= 1.05);

  CHECK_THROWS_AS(mean_centered_norm(e256, SpaceKind::spectral), ShapeError);
}
