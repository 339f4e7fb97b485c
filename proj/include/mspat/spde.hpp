#pragma once

#include "mspat/geometry.hpp"
#include "mspat/types.hpp"

namespace mspat::spde {

// Piecewise-linear finite element matrices on a mesh. C is the row-sum lumped
// mass matrix (diagonal), C_full the consistent one, G the stiffness matrix.
struct FemMatrices {
  SpMat C;
  SpMat C_full;
  SpMat G;
};

// Matern field parameters, smoothness fixed at nu = 1 (alpha = 2 in d = 2).
// kappa * range = sqrt(8 * nu) by construction.
struct MaternParams {
  double range = 1.0;
  double sigma = 1.0;
  double nu = 1.0;
  double kappa = 0.0;
  double tau = 0.0;
};

// Penalized-complexity prior: P(range < r0) = p_r, P(sigma > sigma0) = p_sigma.
struct PcPriorSpec {
  double r0 = 1.0;
  double p_r = 0.5;
  double sigma0 = 1.0;
  double p_sigma = 0.5;
};

FemMatrices fem_matrices(const geom::Mesh& mesh);

MaternParams range_sigma_to_kappa_tau(double range, double sigma);

// Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^-1 G), lumped C.
SpMat matern_precision(const FemMatrices& fem, const MaternParams& p);

double matern_covariance(double d, const MaternParams& p);

double pc_lambda_range(const PcPriorSpec& spec);
double pc_lambda_sigma(const PcPriorSpec& spec);

// log pi(range) + log pi(sigma) in natural coordinates.
double pc_prior_log_density(const MaternParams& p, const PcPriorSpec& spec);

// Same prior expressed in theta = (log range, log sigma), Jacobian included.
double pc_prior_log_density_theta(double log_range, double log_sigma,
                                  const PcPriorSpec& spec);

}  // namespace mspat::spde
