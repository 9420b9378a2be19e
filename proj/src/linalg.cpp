#include "conclab/linalg.hpp"

#include <random>

#include "conclab/errors.hpp"

namespace conclab {

double spectral_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(0);
}

double nuclear_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues().sum();
}

double smallest_singular_value(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

double diag_seminorm(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ShapeError("diag_seminorm: matrix must be square");
  return m.diagonal().norm();
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Engine& eng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(rows, cols);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = g(eng);
  }
  return a;
}

Eigen::VectorXd random_unit_vector(int dim, Engine& eng) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(dim);
  do {
    for (auto& x : v) x = g(eng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

}  // namespace conclab
