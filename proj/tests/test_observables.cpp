#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>
#include <random>
#include <sstream>

#include "conclab/errors.hpp"
#include "conclab/observables.hpp"
#include "oracles.hpp"

using namespace conclab;

namespace {

SampleEnsemble gauss(int p, Eigen::Index N, std::uint32_t stream, std::uint64_t seed = 5) {
  return sample(VectorModel::of(VectorKind::gaussian, p), N, seed, stream);
}

double variance(const SampleEnsemble& s) {
  const auto c = s.data.col(0).array() - s.data.col(0).mean();
  return c.square().sum() / (s.trials() - 1);
}

// E[(x^T A y)^2] for independent standard normal x, y in R^3 by tensor
// Gauss-Hermite quadrature over all six coordinates.
double hermite_second_moment(const Eigen::Matrix3d& A) {
  const oracles::HermiteRule rule;
  double acc = 0.0;
  int idx[6];
  for (int k = 0; k < 729; ++k) {
    int r = k;
    double w = 1.0;
    for (int j = 0; j < 6; ++j) {
      idx[j] = r % 3;
      r /= 3;
      w *= rule.weights[idx[j]];
    }
    Eigen::Vector3d x(rule.nodes[idx[0]], rule.nodes[idx[1]], rule.nodes[idx[2]]);
    Eigen::Vector3d y(rule.nodes[idx[3]], rule.nodes[idx[4]], rule.nodes[idx[5]]);
    const double v = x.dot(A * y);
    acc += w * v * v;
  }
  return acc;
}

}  // namespace

TEST_CASE("observations evaluate and report Lipschitz constants") {
  const auto lin = Observation::linear(Eigen::Vector3d(3, 0, 4));
  CHECK(lin.lipschitz_constant == 5.0);
  std::vector<double> z{1, 2, 3};
  CHECK(lin.evaluate(z) == 15.0);
  CHECK(Observation::norm_of(SpaceKind::linf).evaluate(z) == 3.0);
  CHECK(Observation::distance_to_ball(1.0).evaluate(z) == doctest::Approx(std::sqrt(14.0) - 1));

  Eigen::Matrix2d A;
  A << 1, 2, 2, 4;
  const auto lm = Observation::linear_matrix(A);
  CHECK(lm.lipschitz_constant == doctest::Approx(5.0));
  std::vector<double> m{1, 0, 0, 1};
  CHECK(lm.evaluate(m, MatrixShape{2, 2}) == 5.0);
  CHECK(Observation::norm_of(SpaceKind::diag_seminorm).evaluate(std::vector<double>{1, 9, 9, 2}, MatrixShape{2, 2}) ==
        doctest::Approx(std::sqrt(5.0)));
  CHECK_THROWS_AS(lin.evaluate(std::vector<double>{1, 2}), ShapeError);
  CHECK_THROWS_AS(Observation::norm_of(SpaceKind::spectral).evaluate(z), ShapeError);
}

TEST_CASE("alignment rules") {
  const auto a = gauss(3, 10, 0);
  const auto b = gauss(3, 10, 1);
  CHECK_NOTHROW(check_aligned({&a, &b}));
  CHECK_NOTHROW(check_aligned({&a, &a}));
  const auto other_seed = gauss(3, 10, 1, 6);
  CHECK_THROWS_AS(check_aligned({&a, &other_seed}), AlignmentError);
  const auto shorter = gauss(3, 9, 1);
  CHECK_THROWS_AS(check_aligned({&a, &shorter}), AlignmentError);
  const auto h = hadamard_chain({a, b});  // streams {0, 1}
  CHECK_THROWS_AS(check_aligned({&h, &a}), AlignmentError);
  const auto c = SampleEnsemble::constant(10, Eigen::Vector3d::Ones());
  CHECK_NOTHROW(check_aligned({&c, &other_seed}));
  // one matrix-model draw: same group even though streams overlap
  const auto mix = sample_matrix(MatrixModel::iid(3, 2, VectorModel::of(VectorKind::gaussian, 3),
                                                  Coupling::gaussian_mix), 10, 5);
  CHECK_NOTHROW(check_aligned({&mix.x, &*mix.y}));
}

TEST_CASE("hadamard_chain") {
  const auto x = gauss(6, 50, 0);
  const auto ones = SampleEnsemble::constant(50, Eigen::VectorXd::Ones(6));
  CHECK(hadamard_chain({x, ones}).data == x.data);
  CHECK(hadamard_chain({hadamard_chain({x, ones}), ones}).data == x.data);
  CHECK_THROWS_AS(hadamard_chain({x, gauss(5, 50, 1)}), ShapeError);

  // variation bound: ||x . y - x' . y|| <= ||y||_inf ||x - x'||
  const auto y = gauss(6, 50, 1);
  const auto x2 = gauss(6, 50, 2);
  const auto a = hadamard_chain({x, y});
  const auto b = hadamard_chain({x2, y});
  for (Eigen::Index t = 0; t < 50; ++t) {
    CHECK((a.data.row(t) - b.data.row(t)).norm() <=
          y.data.row(t).cwiseAbs().maxCoeff() * (x.data.row(t) - x2.data.row(t)).norm() * (1 + 1e-12));
  }
}

TEST_CASE("scalar gaussian product tail matches the Bessel oracle") {
  const Eigen::Index N = 200000;
  const auto g1 = gauss(1, N, 0);
  const auto g2 = gauss(1, N, 1);
  const auto pr = hadamard_chain({g1, g2});
  for (double t : {0.5, 1.0, 2.0, 4.0}) {
    const double emp = (pr.data.col(0).array().abs() >= t).cast<double>().mean();
    const double ref = oracles::gaussian_product_tail(t);
    CHECK(std::abs(emp - ref) < 5 * std::sqrt(ref * (1 - ref) / N) + 1e-5);
  }
}

TEST_CASE("matrix_chain") {
  const auto col = VectorModel::of(VectorKind::gaussian, 3);
  const auto d = sample_matrix(MatrixModel::iid(3, 3, col), 20, 1);
  CHECK(matrix_chain({d.x}).data == d.x.data);
  const auto I = SampleEnsemble::constant_matrix(20, Eigen::Matrix3d::Identity());
  CHECK(matrix_chain({d.x, I}).data == d.x.data);
  CHECK(matrix_chain({matrix_chain({d.x, I}), I}).data == d.x.data);
  const auto sq = matrix_chain({d.x, transpose(d.x)});
  const Eigen::MatrixXd m = d.x.matrix(3);
  CHECK((sq.matrix(3) - m * m.transpose()).norm() < 1e-12);
  const auto wide = SampleEnsemble::constant_matrix(20, Eigen::MatrixXd::Ones(2, 4));
  CHECK_THROWS_AS(matrix_chain({d.x, wide}), ShapeError);

  // variation bound: ||M1 (M2 - M2') || <= ||M1|| ||M2 - M2'||_F
  const auto e = sample_matrix(MatrixModel::iid(3, 3, col), 20, 1, 4);
  const auto a = matrix_chain({d.x, e.x});
  const auto b = matrix_chain({d.x, I});
  for (Eigen::Index t = 0; t < 20; ++t) {
    CHECK((a.matrix(t) - b.matrix(t)).norm() <=
          spectral_norm(d.x.matrix(t)) * (e.x.matrix(t) - Eigen::Matrix3d::Identity()).norm() * (1 + 1e-12));
  }
}

TEST_CASE("bilinear_form: variance oracle and symmetry") {
  const Eigen::Index N = 100000;
  Eigen::Matrix3d A;
  A << 1, -2, 0.5, 0, 3, 1, 2, 0, -1;
  CHECK(hermite_second_moment(A) == doctest::Approx(A.squaredNorm()).epsilon(1e-12));
  const auto x = gauss(3, N, 0);
  const auto y = gauss(3, N, 1);
  const auto v = bilinear_form(x, A, y);
  CHECK(std::abs(variance(v) / hermite_second_moment(A) - 1) < 5 / std::sqrt(double(N)) * 2);

  const auto w = bilinear_form(y, A.transpose(), x);
  CHECK((v.data - w.data).cwiseAbs().maxCoeff() <= 1e-12 * v.data.cwiseAbs().maxCoeff());
  CHECK(bilinear_form(x, Eigen::Matrix3d::Zero(), y).data.isZero(0.0));
  CHECK_THROWS_AS(bilinear_form(x, Eigen::MatrixXd::Zero(2, 3), y), ShapeError);
}

TEST_CASE("chi-square centring of x^T x") {
  const auto x = gauss(10, 1000, 0);
  const auto v = bilinear_form(x, Eigen::MatrixXd::Identity(10, 10), x);
  CHECK((v.data.col(0) - x.data.rowwise().squaredNorm()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("xdy_action") {
  const auto col = VectorModel::of(VectorKind::gaussian, 4);
  const auto m = sample_matrix(MatrixModel::iid(4, 3, col, Coupling::independent), 30, 2);
  const Eigen::Vector4d u = Eigen::Vector4d(1, 2, 2, 0) / 3.0;
  const auto zero_d = SampleEnsemble::constant(30, Eigen::Vector3d::Zero());
  CHECK(xdy_action(m.x, zero_d, *m.y, u).data.isZero(0.0));

  const auto d = sample(VectorModel::of(VectorKind::laplace, 3), 30, 2, 7);
  const auto r = xdy_action(m.x, d, *m.y, u);
  for (Eigen::Index t = 0; t < 30; ++t) {
    const Eigen::VectorXd ref = m.x.matrix(t) * d.data.row(t).transpose().asDiagonal() * m.y->matrix(t).transpose() * u;
    CHECK((r.data.row(t).transpose() - ref).norm() < 1e-12 * (1 + ref.norm()));
  }

  // n = 1, D = I, y_1 = u: X d_1 (y_1^T u)
  Eigen::Vector4d e1 = Eigen::Vector4d::UnitX();
  const auto x1 = sample_matrix(MatrixModel::iid(4, 1, col), 5, 3);
  const auto y1 = SampleEnsemble::constant_matrix(5, e1);
  const auto one = SampleEnsemble::constant(5, Eigen::VectorXd::Ones(1));
  const auto r1 = xdy_action(x1.x, one, y1, e1);
  CHECK(r1.data == x1.x.data);
  CHECK_THROWS_AS(xdy_action(m.x, d, *m.y, Eigen::Vector4d(2, 0, 0, 0)), std::out_of_range);
}

TEST_CASE("trace_pairing") {
  const auto col = VectorModel::of(VectorKind::gaussian, 4);
  const auto m = sample_matrix(MatrixModel::iid(4, 6, col, Coupling::independent), 40000, 3);
  Eigen::Matrix4d A = Eigen::Matrix4d::Zero();
  A(0, 1) = 0.6;
  A(2, 2) = 0.8;
  const auto ones = SampleEnsemble::constant(40000, Eigen::VectorXd::Ones(6));
  const auto res = trace_pairing(A, m.x, ones, *m.y, PairingMode::frobenius);
  CHECK(res.warnings.empty());
  // n independent terms x_i^T A y_i: variance n ||A||_F^2
  CHECK(variance(res.values) == doctest::Approx(6.0 * A.squaredNorm()).epsilon(0.05));

  // consistency with bilinear_form: tr(A X Y^T) = tr(Y^T A X)
  const auto bf = bilinear_form(m.x, A, *m.y);
  CHECK((bf.data - res.values.data).cwiseAbs().maxCoeff() <= 1e-10 * (1 + bf.data.cwiseAbs().maxCoeff()));

  CHECK(trace_pairing(2 * A, m.x, ones, *m.y, PairingMode::frobenius).warnings.size() == 1);
  CHECK(trace_pairing(A, m.x, ones, *m.y, PairingMode::nuclear).warnings.size() == 1);  // ||A||_* = 1.4

  // A = e1 e1^T, D = sqrt(n) E_11: sqrt(n) x_11 y_11
  Eigen::Matrix4d E = Eigen::Matrix4d::Zero();
  E(0, 0) = 1;
  Eigen::VectorXd dv = Eigen::VectorXd::Zero(6);
  dv(0) = std::sqrt(6.0);
  const auto res2 = trace_pairing(E, m.x, SampleEnsemble::constant(40000, dv), *m.y, PairingMode::nuclear);
  CHECK(res2.values.data(7, 0) == doctest::Approx(std::sqrt(6.0) * m.x.data(7, 0) * m.y->data(7, 0)));

  const auto zx = SampleEnsemble::constant_matrix(40000, Eigen::MatrixXd::Zero(4, 6));
  CHECK(trace_pairing(A, zx, ones, *m.y, PairingMode::frobenius).values.data.isZero(0.0));
}

TEST_CASE("diag semi-norm and ydax statistic") {
  CHECK(diag_seminorm(Eigen::MatrixXd::Identity(9, 9)) == 3.0);
  Eigen::Matrix2d M;
  M << 1, 9, 9, 2;
  CHECK(diag_seminorm(M) == doctest::Approx(std::sqrt(5.0)));
  CHECK_THROWS_AS(diag_seminorm(Eigen::MatrixXd::Ones(2, 3)), ShapeError);
  std::mt19937_64 eng(3);
  std::normal_distribution<double> g;
  for (int k = 0; k < 200; ++k) {
    Eigen::MatrixXd R(5, 5);
    for (auto& v : R.reshaped()) v = g(eng);
    CHECK(diag_seminorm(R) <= R.norm());
    const Eigen::VectorXd dd = R.diagonal();
    CHECK(diag_seminorm(Eigen::MatrixXd(dd.asDiagonal())) == doctest::Approx(dd.norm()));
  }

  const auto col = VectorModel::of(VectorKind::gaussian, 5);
  const auto m1 = sample_matrix(MatrixModel::iid(5, 1, col, Coupling::independent), 50, 4);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(5, 5) / std::sqrt(5.0);
  const auto st = ydax_diag_stat(m1.x, *m1.y, A);
  const auto hw = bilinear_form(*m1.y, A, m1.x);
  CHECK((st.values.data.col(0) - hw.data.col(0).cwiseAbs()).cwiseAbs().maxCoeff() < 1e-12);
  const auto big = ydax_diag_stat(m1.x, *m1.y, 10 * A);
  CHECK(big.normalization == doctest::Approx(0.1));
  CHECK((big.values.data - st.values.data).cwiseAbs().maxCoeff() < 1e-12);

  // E||Y^T A X||_d ~ sqrt(n) for A = I/sqrt(p)
  double c[2];
  int k = 0;
  for (int n : {64, 256}) {
    const auto mm = sample_matrix(MatrixModel::iid(20, n, VectorModel::of(VectorKind::gaussian, 20),
                                                   Coupling::independent), 200, 8);
    c[k++] = ydax_diag_stat(mm.x, *mm.y, Eigen::MatrixXd::Identity(20, 20) / std::sqrt(20.0)).mean / std::sqrt(n);
  }
  CHECK(c[0] / c[1] == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("scalar csv export") {
  const auto s = SampleEnsemble::constant(2, Eigen::VectorXd::Constant(1, 0.5));
  const auto path = std::filesystem::temp_directory_path() / "conclab_obs.csv";
  export_scalar_csv(s, path, "stat");
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  CHECK(ss.str() == "stat\r\n0.5\r\n0.5\r\n");
  std::filesystem::remove(path);
}
