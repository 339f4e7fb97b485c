#pragma once

#include <string>
#include <vector>

#include "mspat/lgm.hpp"

namespace mspat::inference {

struct FitOptions {
  double newton_tol = 1e-8;
  int newton_max_iter = 50;
  int max_step_halvings = 30;
  double nm_tol = 1e-5;
  int nm_max_eval = 500;
  double fd_step = 1e-3;
  double prune_rel = 1e-5;  // drop grid points below prune_rel of the modal weight
  int threads = 1;
  Vec init_theta;  // empty: engine default
};

struct GaussianApprox {
  Vec mode;      // constrained posterior mode of the latent field
  SpMat Qc;      // Q_prior + Z^T W Z at the mode
  double log_like = 0.0;
  Vec grad_at_mode;  // gradient of the penalized log-likelihood at the mode
  int newton_iters = 0;
};

struct HyperGrid {
  std::vector<Vec> points;
  Vec log_weights;  // normalized mixture weights (log scale)
  Vec mode;
  Mat curvature;  // Hessian of -log posterior at the mode
  bool axis_fallback = false;
  double log_posterior_at_mode = 0.0;
};

struct HyperSummary {
  std::string name;
  double mean = 0.0;  // natural scale (exp of theta component)
  double sd = 0.0;
  double mode_theta = 0.0;
};

struct FitResult {
  Vec latent_mean, latent_sd;
  Vec predictor_mean, predictor_sd;
  std::vector<HyperSummary> hyper_summaries;
  double log_marginal_likelihood = 0.0;
  HyperGrid grid;
  std::vector<stack::TagRange> row_tags;
};

GaussianApprox gaussian_approx(const lgm::LatentModel& model, const Vec& theta,
                               const FitOptions& opts = {});

double log_posterior_hyper(const lgm::LatentModel& model, const Vec& theta,
                           const FitOptions& opts = {});

HyperGrid explore_hyper(const lgm::LatentModel& model, const Vec& init,
                        const FitOptions& opts = {});

FitResult fit(const lgm::LatentModel& model, const FitOptions& opts = {});

std::pair<Vec, Vec> predict_rows(const FitResult& result, const std::string& tag);

// Marginal variances of Qc^-1 by Takahashi-style partial inversion on the
// Cholesky pattern. Exposed for cross-checking against per-column solves.
Vec takahashi_diag(const SpMat& Q);

}  // namespace mspat::inference
