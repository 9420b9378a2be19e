#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <bit>
#include <cstring>
#include <random>

#include "conclab/errors.hpp"
#include "conclab/profile.hpp"
#include "oracles.hpp"

using namespace conclab;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo * std::pow(hi / lo, double(i) / (n - 1));
  return g;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST_CASE("nu_superscript examples") {
  const std::vector<double> a{2, 3, 5};
  CHECK(nu_superscript(a, 2) == 15.0);
  const std::vector<double> eq(4, 1.7);
  for (int k = 0; k <= 4; ++k) CHECK(nu_superscript(eq, k) == doctest::Approx(std::pow(1.7, k)));
  const std::vector<double> b{1, 2, 3, 4};
  CHECK(nu_superscript(b, 3) == oracles::brute_force_nu(b, 3));
  CHECK(nu_superscript(b, 3) == 24.0);
  CHECK(nu_superscript(b, 0) == 1.0);
  CHECK_THROWS_AS(nu_superscript(b, 5), std::out_of_range);
  CHECK_THROWS_AS(nu_superscript(b, -1), std::out_of_range);
}

TEST_CASE("nu_superscript matches subset enumeration and telescopes") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  std::uniform_int_distribution<int> md(1, 8);
  for (int trial = 0; trial < 2000; ++trial) {
    const int m = md(rng);
    std::vector<double> nu(m);
    for (auto& v : nu) v = u(rng);
    std::vector<double> asc = nu;
    std::sort(asc.begin(), asc.end());
    for (int k = 0; k <= m; ++k) {
      REQUIRE(nu_superscript(nu, k) == doctest::Approx(oracles::brute_force_nu(nu, k)).epsilon(1e-14));
      if (k < m) {
        // nu^{(k+1)} = nu^{(k)} * mu_(m-k) with mu sorted ascending (1-based)
        REQUIRE(nu_superscript(nu, k + 1) ==
                doctest::Approx(nu_superscript(nu, k) * asc[m - k - 1]).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("product_profile examples") {
  SUBCASE("two equal factors give E_q(sigma mu0) + E_{q/2}(sigma^2)") {
    const double mu0 = 3.5;
    auto prof = product_profile({2, 2.0, 1.0, {mu0, mu0}});
    REQUIRE(prof.size() == 2);
    CHECK(prof.regimes()[0] == Regime{2.0, mu0});
    CHECK(prof.regimes()[1] == Regime{1.0, 1.0});
  }
  SUBCASE("m factors with mu = sqrt(p) sigma") {
    const int m = 4;
    const double p = 100, sigma = 0.7;
    auto prof = product_profile({m, 2.0, sigma, std::vector<double>(m, std::sqrt(p) * sigma)});
    REQUIRE(prof.size() == 2);
    CHECK(prof.regimes().front().exponent == 2.0);
    CHECK(prof.regimes().front().scale ==
          doctest::Approx(std::pow(p, (m - 1) / 2.0) * std::pow(sigma, m)));
    CHECK(prof.regimes().back().exponent == doctest::Approx(2.0 / m));
    CHECK(prof.regimes().back().scale == doctest::Approx(std::pow(sigma, m)));
  }
  SUBCASE("single factor is Lipschitz stability") {
    auto prof = product_profile({1, 1.5, 0.3, {42.0}});
    REQUIRE(prof.size() == 1);
    CHECK(prof.regimes()[0] == Regime{1.5, 0.3});
  }
  CHECK_THROWS(product_profile({2, 2.0, 1.0, {1.0}}));
  CHECK_THROWS(product_profile({2, 2.0, 1.0, {1.0, -1.0}}));
  CHECK_THROWS(product_profile({0, 2.0, 1.0, {}}));
}

TEST_CASE("breakpoints examples") {
  auto eq = breakpoints({4, 2.0, 1.0, {1.5, 1.5, 1.5, 1.5}});
  REQUIRE(eq.size() == 5);
  CHECK(eq[0] == 0.0);
  for (int i = 1; i < 4; ++i) CHECK(eq[i] == doctest::Approx(std::pow(1.5, 4)));
  CHECK(std::isinf(eq[4]));

  auto one = breakpoints({1, 2.0, 1.0, {3.0}});
  REQUIRE(one.size() == 2);
  CHECK(one[0] == 0.0);
  CHECK(std::isinf(one[1]));

  auto three = breakpoints({3, 2.0, 1.0, {4.0, 1.0, 2.0}});
  REQUIRE(three.size() == 4);
  CHECK(three[1] == 16.0);
  CHECK(three[2] == 64.0);

  // Cross-check: the dominating regime switches exactly at c * t_i.
  auto prof = product_profile({3, 2.0, 1.0, {1.0, 2.0, 4.0}}, {2.0, 1.0}, Normalization::merge_only);
  CHECK(dominant_regime(prof, 15.9) == 0);
  CHECK(dominant_regime(prof, 16.1) == 1);
  CHECK(dominant_regime(prof, 63.9) == 1);
  CHECK(dominant_regime(prof, 64.1) == 2);
}

TEST_CASE("breakpoint dominance on random distinct-mu specs") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.2, 6.0);
  std::uniform_int_distribution<int> md(1, 7);
  for (int trial = 0; trial < 300; ++trial) {
    ProductSpec spec{md(rng), u(rng), u(rng), {}};
    for (int i = 0; i < spec.m; ++i) spec.mu.push_back(u(rng));
    const double c = trial % 2 ? 1.0 : std::sqrt(2.0);
    auto prof = product_profile(spec, {2.0, c}, Normalization::merge_only);
    auto bp = breakpoints(spec);
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
      REQUIRE(bp[i] <= bp[i + 1]);
      const double lo = c * bp[i];
      const double hi = c * bp[i + 1];
      std::vector<double> ts;
      if (i == 0) ts = {hi * 1e-3, hi * 0.5, hi * (1 - 1e-6)};
      else if (std::isinf(hi)) ts = {lo * (1 + 1e-6), lo * 2, lo * 1e3};
      else ts = {lo * (1 + 1e-6), std::sqrt(lo * hi), hi * (1 - 1e-6)};
      for (double t : ts) {
        const auto& regs = prof.regimes();
        const double own = std::pow(t / (c * regs[i].scale), regs[i].exponent);
        for (std::size_t j = 0; j < regs.size(); ++j) {
          const double other = std::pow(t / (c * regs[j].scale), regs[j].exponent);
          REQUIRE(own <= other * (1 + 1e-12));
        }
      }
    }
  }
}

TEST_CASE("tail_bound examples and monotonicity") {
  ConcentrationProfile gauss({{2.0, 1.0}}, {2.0, std::sqrt(2.0)});
  CHECK(tail_bound(gauss, 0.0) == 1.0);
  CHECK(tail_bound(gauss, 2.0) == doctest::Approx(2.0 * std::exp(-2.0)));
  CHECK(tail_bound(gauss, 2.0) == doctest::Approx(0.2707).epsilon(1e-3));
  CHECK_THROWS_AS(tail_bound(gauss, -1.0), std::out_of_range);

  // Two regimes: exactly one switch from the high to the low exponent.
  auto two = product_profile({2, 2.0, 1.0, {3.0, 3.0}});
  int switches = 0;
  std::size_t prev = dominant_regime(two, 1e-6);
  CHECK(prev == 0);
  double last = 1.0;
  for (double t : log_grid(1e-6, 1e4, 4000)) {
    const std::size_t d = dominant_regime(two, t);
    if (d != prev) ++switches;
    prev = d;
    const double v = tail_bound(two, t);
    CHECK(v <= last);
    CHECK(v <= 1.0);
    last = v;
  }
  CHECK(switches == 1);
  CHECK(prev == 1);
  CHECK(tail_bound(two, 1e6) < 1e-100);
}

TEST_CASE("tail_bound at zero is clamped") {
  std::vector<Regime> r{{3.0, 1.0}, {2.0, 2.0}, {0.5, 0.1}};
  ConcentrationProfile p(r, {5.0, 1.0});
  CHECK(tail_bound(p, 0.0) == 1.0);
}

TEST_CASE("moment_bound examples") {
  ConcentrationProfile unit({{2.0, 1.0}}, {1.0, 1.0});
  CHECK(moment_bound(unit, 2.0) == doctest::Approx(1.0));

  const double c = 1.3, sigma = 0.8;
  ConcentrationProfile g({{2.0, sigma}}, {1.0, c});
  CHECK(moment_bound(g, 4.0) == doctest::Approx(4.0 * std::pow(c * sigma, 4)));

  // Exact gaussian fourth moment 3 against the default constants.
  ConcentrationProfile def({{2.0, 1.0}});
  CHECK(moment_bound(def, 4.0) == doctest::Approx(2.0 * 4.0 * 4.0));
  CHECK(3.0 <= moment_bound(def, 4.0));
  CHECK_THROWS_AS(moment_bound(def, 0.0), std::out_of_range);
}

TEST_CASE("moment_bound is log-convex in r") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.3, 4.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Regime> regs;
    for (int i = 0; i < 4; ++i) regs.push_back({u(rng), u(rng)});
    ConcentrationProfile p(regs, {2.0, 1.5}, Normalization::merge_only);
    const double h = 0.05;
    for (double r = 0.2; r < 12.0; r += 0.1) {
      const double second = std::log(moment_bound(p, r + h)) - 2 * std::log(moment_bound(p, r)) +
                            std::log(moment_bound(p, r - h));
      REQUIRE(second >= -1e-9);
    }
  }
}

TEST_CASE("hanson_wright_profile") {
  const int p = 49;
  auto hw = hanson_wright_profile(std::sqrt(double(p)), 1.0, 1.0);
  REQUIRE(hw.size() == 2);
  CHECK(hw.regimes()[0] == Regime{2.0, 7.0});
  CHECK(hw.regimes()[1] == Regime{1.0, 1.0});

  auto rank1 = hanson_wright_profile(2.5, 2.5, 1.0);
  REQUIRE(rank1.size() == 2);
  CHECK(rank1.regimes()[0].scale == rank1.regimes()[1].scale);

  // ||I_4||_F computed directly.
  double fro = 0;
  for (int i = 0; i < 4; ++i) fro += 1.0;
  auto i4 = hanson_wright_profile(std::sqrt(fro), 1.0, 1.0);
  CHECK(i4.regimes()[0] == Regime{2.0, 2.0});
  CHECK(i4.regimes()[1] == Regime{1.0, 1.0});

  auto k2 = hanson_wright_profile(3.0, 1.0, 2.0);
  CHECK(k2.regimes()[0].scale == 12.0);
  CHECK_THROWS_AS(hanson_wright_profile(-1.0, 0.5, 1.0), std::out_of_range);
  CHECK_THROWS_AS(hanson_wright_profile(1.0, -0.5, 1.0), std::out_of_range);
}

TEST_CASE("high_order_profile") {
  ProductSpec spec{3, 2.0, 0.5, {2.0, 3.0, 5.0}};
  auto base = product_profile(spec);
  auto same = high_order_profile(spec, 1.0);
  CHECK(same.profile == base);
  CHECK(same.warnings.empty());

  ProductSpec two{2, 2.0, 1.0, {2.0, 3.0}};
  auto b2 = product_profile(two);
  auto k2 = high_order_profile(two, 2.0);
  REQUIRE(k2.profile.size() == b2.size());
  for (std::size_t i = 0; i < b2.size(); ++i) {
    CHECK(k2.profile.regimes()[i].scale == doctest::Approx(4.0 * b2.regimes()[i].scale));
  }

  // log(8)^(1/2) ~ 1.44 > mu_(1)/sigma = 1: reported, not rejected.
  ProductSpec bad{8, 2.0, 1.0, std::vector<double>(8, 1.0)};
  auto w = high_order_profile(bad, 1.0);
  CHECK(w.warnings.size() == 1);

  auto pw = power_profile(3, 2.0, 0.5, 4.0, 0.1, 1.2);
  REQUIRE(pw.size() == 2);
  CHECK(pw.regimes()[0].scale == doctest::Approx(3 * 0.5 * std::pow(1.1 * 4.0, 2)));
  CHECK(pw.regimes()[1].exponent == doctest::Approx(2.0 / 3));
  CHECK(pw.regimes()[1].scale == doctest::Approx(std::pow(1.2 * 0.5, 3)));
}

TEST_CASE("norm_degree") {
  CHECK(norm_degree(SpaceKind::euclidean, 100) == 100.0);
  CHECK(norm_degree(SpaceKind::spectral, 50, 200) == 250.0);
  CHECK(norm_degree(SpaceKind::diag_seminorm, 30) == 30.0);
  CHECK(norm_degree(SpaceKind::diag_seminorm, 30, 30) == 30.0);
  CHECK(norm_degree(SpaceKind::linf, 1000) == doctest::Approx(std::log(1000.0)));
  CHECK(norm_degree(SpaceKind::frobenius, 3, 7) == 21.0);
  CHECK(norm_degree(SpaceKind::nuclear, 3, 7) == 21.0);
  CHECK(parse_space_kind("spectral") == SpaceKind::spectral);
  CHECK_THROWS_AS(parse_space_kind("operator"), std::domain_error);
  CHECK_THROWS_AS(norm_degree(SpaceKind::diag_seminorm, 3, 4), ShapeError);
}

TEST_CASE("equal mu collapses to two regimes without changing the envelope") {
  for (int m = 2; m <= 7; ++m) {
    ProductSpec spec{m, 2.0, 0.9, std::vector<double>(m, 2.3)};
    auto pruned = product_profile(spec);
    auto raw = product_profile(spec, {}, Normalization::merge_only);
    REQUIRE(pruned.size() == 2);
    CHECK(pruned.regimes()[0].exponent == 2.0);
    CHECK(pruned.regimes()[1].exponent == doctest::Approx(2.0 / m));
    CHECK(raw.size() == static_cast<std::size_t>(m));
    for (double t : log_grid(1e-4, 1e6, 1024)) {
      REQUIRE(std::abs(tail_bound(pruned, t) - tail_bound(raw, t)) <= 1e-12);
    }
  }
}

TEST_CASE("pruning never changes the envelope") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Regime> regs;
    const int k = 1 + trial % 6;
    for (int i = 0; i < k; ++i) regs.push_back({u(rng), u(rng)});
    ConcentrationProfile raw(regs, {}, Normalization::merge_only);
    ConcentrationProfile pruned(regs);
    CHECK(pruned.size() <= raw.size());
    for (double t : log_grid(1e-4, 1e4, 1024)) {
      REQUIRE(std::abs(tail_bound(pruned, t) - tail_bound(raw, t)) <= 1e-12);
    }
  }
}

TEST_CASE("duplicate exponents merge to the larger scale") {
  ConcentrationProfile p({{2.0, 1.0}, {2.0, 3.0}, {1.0, 0.5}}, {}, Normalization::merge_only);
  REQUIRE(p.size() == 2);
  CHECK(p.regimes()[0] == Regime{2.0, 3.0});
  CHECK_THROWS(ConcentrationProfile({}));
  CHECK_THROWS(ConcentrationProfile({{0.0, 1.0}}));
  CHECK_THROWS(ConcentrationProfile({{1.0, 1.0}}, {0.5, 1.0}));
}

TEST_CASE("profile JSON round trip is bit-stable") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(1e-3, 1e3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Regime> regs;
    for (int i = 0; i < 1 + trial % 5; ++i) regs.push_back({u(rng), u(rng)});
    ConcentrationProfile p(regs, {1.0 + u(rng), u(rng)});
    const std::string text = p.to_json().dump();
    auto back = ConcentrationProfile::from_json(nlohmann::json::parse(text));
    REQUIRE(back.size() == p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(bit_equal(back.regimes()[i].exponent, p.regimes()[i].exponent));
      CHECK(bit_equal(back.regimes()[i].scale, p.regimes()[i].scale));
    }
    CHECK(bit_equal(back.C(), p.C()));
    CHECK(bit_equal(back.c(), p.c()));
  }
  CHECK_THROWS_AS(ConcentrationProfile::from_json({{"regimes", nlohmann::json::array()}, {"x", 1}}),
                  ConfigError);
}
