#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace mspat {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace mspat
