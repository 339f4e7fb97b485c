#include "mspat/spde.hpp"

#include <cmath>
#include <vector>

namespace mspat::spde {

FemMatrices fem_matrices(const geom::Mesh& mesh) {
  const int n = mesh.n_vertices();
  std::vector<Triplet> c_full, g;
  Vec lumped = Vec::Zero(n);

  for (const auto& t : mesh.triangles) {
    const geom::Point a = mesh.vertices[t[0]];
    const geom::Point b = mesh.vertices[t[1]];
    const geom::Point c = mesh.vertices[t[2]];
    const double two_area = geom::cross(b - a, c - a);
    if (two_area <= 1e-14)
      throw invalid_geometry("mesh has a zero-area or inverted triangle");
    const double area = 0.5 * two_area;

    // Consistent mass: area/12 * [[2,1,1],[1,2,1],[1,1,2]].
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j)
        c_full.emplace_back(t[i], t[j], area / 12.0 * (i == j ? 2.0 : 1.0));
      lumped[t[i]] += area / 3.0;
    }

    // Stiffness from edge vectors opposite each vertex.
    const geom::Point e[3] = {c - b, a - c, b - a};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        g.emplace_back(t[i], t[j], geom::dot(e[i], e[j]) / (4.0 * area));
  }

  FemMatrices fem;
  fem.C_full.resize(n, n);
  fem.C_full.setFromTriplets(c_full.begin(), c_full.end());
  fem.G.resize(n, n);
  fem.G.setFromTriplets(g.begin(), g.end());
  fem.C.resize(n, n);
  std::vector<Triplet> cd;
  for (int i = 0; i < n; ++i) cd.emplace_back(i, i, lumped[i]);
  fem.C.setFromTriplets(cd.begin(), cd.end());
  return fem;
}

MaternParams range_sigma_to_kappa_tau(double range, double sigma) {
  if (range <= 0 || sigma <= 0)
    throw data_error("matern range and sigma must be positive");
  MaternParams p;
  p.range = range;
  p.sigma = sigma;
  p.nu = 1.0;
  p.kappa = std::sqrt(8.0 * p.nu) / range;
  // tau^2 = Gamma(nu) / (Gamma(nu + 1) 4 pi kappa^(2 nu) sigma^2), d = 2.
  p.tau = 1.0 / (2.0 * std::sqrt(M_PI) * p.kappa * sigma);
  return p;
}

SpMat matern_precision(const FemMatrices& fem, const MaternParams& p) {
  if (p.kappa <= 0 || p.tau <= 0)
    throw data_error("matern kappa and tau must be positive");
  const int n = fem.C.rows();
  SpMat cinv(n, n);
  std::vector<Triplet> ct;
  for (int i = 0; i < n; ++i) ct.emplace_back(i, i, 1.0 / fem.C.coeff(i, i));
  cinv.setFromTriplets(ct.begin(), ct.end());

  const double k2 = p.kappa * p.kappa;
  SpMat q = k2 * k2 * fem.C + 2.0 * k2 * fem.G + SpMat(fem.G * cinv * fem.G);
  q *= p.tau * p.tau;
  // Symmetrize away assembly round-off.
  SpMat qt = SpMat(q.transpose());
  q = 0.5 * (q + qt);
  return q;
}

double matern_covariance(double d, const MaternParams& p) {
  if (d < 0) throw data_error("distance must be non-negative");
  if (d == 0.0) return p.sigma * p.sigma;
  const double kd = p.kappa * d;
  return p.sigma * p.sigma / (std::tgamma(p.nu) * std::pow(2.0, p.nu - 1.0)) *
         std::pow(kd, p.nu) * std::cyl_bessel_k(p.nu, kd);
}

double pc_lambda_range(const PcPriorSpec& spec) {
  // d = 2: lambda_r = -log(p_r) * r0^(d/2).
  return -std::log(spec.p_r) * spec.r0;
}

double pc_lambda_sigma(const PcPriorSpec& spec) {
  return -std::log(spec.p_sigma) / spec.sigma0;
}

double pc_prior_log_density(const MaternParams& p, const PcPriorSpec& spec) {
  if (spec.r0 <= 0 || spec.sigma0 <= 0 || spec.p_r <= 0 || spec.p_r >= 1 ||
      spec.p_sigma <= 0 || spec.p_sigma >= 1)
    throw data_error("invalid PC prior specification");
  const double lr = pc_lambda_range(spec);
  const double ls = pc_lambda_sigma(spec);
  // pi(r) = lambda_r r^-2 exp(-lambda_r / r); pi(sigma) = lambda_s exp(-lambda_s sigma).
  const double log_pr = std::log(lr) - 2.0 * std::log(p.range) - lr / p.range;
  const double log_ps = std::log(ls) - ls * p.sigma;
  return log_pr + log_ps;
}

double pc_prior_log_density_theta(double log_range, double log_sigma,
                                  const PcPriorSpec& spec) {
  MaternParams p = range_sigma_to_kappa_tau(std::exp(log_range), std::exp(log_sigma));
  return pc_prior_log_density(p, spec) + log_range + log_sigma;
}

}  // namespace mspat::spde
