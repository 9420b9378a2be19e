#pragma once

#include <Eigen/Dense>

#include "conclab/rng.hpp"

namespace conclab {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double spectral_norm(const Eigen::MatrixXd& a);
double nuclear_norm(const Eigen::MatrixXd& a);
double smallest_singular_value(const Eigen::MatrixXd& a);

// Euclidean norm of the diagonal of a square matrix.
double diag_seminorm(const Eigen::MatrixXd& m);

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Engine& eng);
Eigen::VectorXd random_unit_vector(int dim, Engine& eng);

}  // namespace conclab
