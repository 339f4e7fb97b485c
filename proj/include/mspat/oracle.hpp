#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mspat/lgm.hpp"
#include "mspat/types.hpp"

namespace mspat::oracle {

// Dense all-Gaussian model for brute-force posterior checks. Rows without an
// observed value are treated as unobserved (zero weight).
struct DenseModel {
  Mat prior_precision;
  Mat Z;
  std::vector<std::optional<double>> y;
  Vec obs_precision;  // per-row Gaussian precision
  Mat constraints;    // k x n, constraint values all zero
};

struct GaussianPosterior {
  Vec mean;
  Mat covariance;
};

GaussianPosterior exact_gaussian_posterior(const DenseModel& dm);

struct Quad1D {
  double log_normalizer = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

// Simpson quadrature of exp(logf) on [lo, hi]; n is the number of nodes.
Quad1D quadrature_1d(const std::function<double(double)>& logf, double lo, double hi,
                     int n);

struct McmcResult {
  Vec latent_mean, latent_mcse, latent_ess;
  Vec hyper_mean, hyper_mcse, hyper_ess;  // theta (log) scale
  double acceptance_rate = 0.0;
  bool acceptance_warning = false;
  Mat samples;  // kept draws x (n_latent + n_hyper), latent first
};

// Component-wise adaptive random-walk Metropolis on the joint (x, theta)
// posterior of a small latent model. Sum-to-zero constraints are handled by
// reparameterization; models with SPDE effects are out of scope.
McmcResult mh_sample(const lgm::LatentModel& model, int iterations, std::uint64_t seed);

void write_chain_csv(const McmcResult& result, const std::string& path);

}  // namespace mspat::oracle
