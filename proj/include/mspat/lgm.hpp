#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mspat/areal.hpp"
#include "mspat/spde.hpp"
#include "mspat/stack.hpp"

namespace mspat::lgm {

enum class EffectKind { intercept, covariate, spde, besag, iid, copy };

struct EffectSpec {
  std::string name;
  EffectKind kind = EffectKind::intercept;
  int dim = 1;  // latent dimension: 1 per intercept/covariate column, N_v, n

  // spde
  std::shared_ptr<const spde::FemMatrices> fem;
  spde::PcPriorSpec pc;

  // besag
  areal::AdjacencyGraph graph;

  // copy: aliases the target's latent columns at fixed unit scale
  std::string copy_of;

  static EffectSpec intercept(std::string name, int dim = 1);
  static EffectSpec covariate(std::string name);
  static EffectSpec spde_field(std::string name, std::shared_ptr<const spde::FemMatrices> fem,
                               spde::PcPriorSpec pc);
  static EffectSpec besag_field(std::string name, areal::AdjacencyGraph graph);
  static EffectSpec iid_field(std::string name, int n);
  static EffectSpec copy(std::string name, std::string target);
};

struct FamilySpec {
  stack::Family family = stack::Family::gaussian;
  // gaussian observation precision: either fixed or estimated with an
  // exponential PC-style prior on the observation sd.
  bool fixed_precision = false;
  double precision = 1.0;  // used when fixed
  double pc_sigma0 = 1.0;
  double pc_p_sigma = 0.05;

  static FamilySpec poisson();
  static FamilySpec gaussian_fixed(double precision);
  static FamilySpec gaussian_estimated(double sigma0 = 1.0, double p_sigma = 0.05);
};

enum class HyperKind { spde_log_range, spde_log_sigma, log_tau, log_obs_precision };

struct HyperInfo {
  std::string name;
  HyperKind kind;
  int effect_index = -1;   // for effect-attached hypers
  int family_column = -1;  // for observation precisions
};

struct LatentModel {
  stack::StackedData stk;
  std::vector<EffectSpec> effects;
  std::vector<FamilySpec> families;

  SpMat Z;                   // R x n_latent observation matrix
  std::vector<int> offsets;  // latent column offset per effect (copies alias)
  int n_latent = 0;

  Mat constraints;  // k x n_latent, constraint values are all zero
  std::vector<HyperInfo> hypers;
  double diffuse_precision = 1e-6;

  // Per-row view of the stack: the single observed value and its column.
  std::vector<stack::Cell> y;
  std::vector<int> y_col;
  Vec exposure;

  int n_hyper() const { return static_cast<int>(hypers.size()); }
};

LatentModel assemble(const stack::StackedData& stk, const std::vector<EffectSpec>& effects,
                     const std::vector<FamilySpec>& families);

// Block-diagonal joint prior precision at hyperparameter vector theta.
SpMat prior_precision(const LatentModel& model, const Vec& theta);

// Sum of per-block log-priors in theta coordinates, Jacobians included.
double log_hyper_prior(const LatentModel& model, const Vec& theta);

}  // namespace mspat::lgm
