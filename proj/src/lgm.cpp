#include "mspat/lgm.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace mspat::lgm {

EffectSpec EffectSpec::intercept(std::string name, int dim) {
  EffectSpec e;
  e.name = std::move(name);
  e.kind = EffectKind::intercept;
  e.dim = dim;
  return e;
}

EffectSpec EffectSpec::covariate(std::string name) {
  EffectSpec e;
  e.name = std::move(name);
  e.kind = EffectKind::covariate;
  e.dim = 1;
  return e;
}

EffectSpec EffectSpec::spde_field(std::string name,
                                  std::shared_ptr<const spde::FemMatrices> fem,
                                  spde::PcPriorSpec pc) {
  EffectSpec e;
  e.name = std::move(name);
  e.kind = EffectKind::spde;
  e.fem = std::move(fem);
  e.pc = pc;
  e.dim = static_cast<int>(e.fem->C.rows());
  return e;
}

EffectSpec EffectSpec::besag_field(std::string name, areal::AdjacencyGraph graph) {
  EffectSpec e;
  e.name = std::move(name);
  e.kind = EffectKind::besag;
  e.dim = graph.n;
  e.graph = std::move(graph);
  return e;
}

EffectSpec EffectSpec::iid_field(std::string name, int n) {
  EffectSpec e;
  e.name = std::move(name);
  e.kind = EffectKind::iid;
  e.dim = n;
  return e;
}

EffectSpec EffectSpec::copy(std::string name, std::string target) {
  EffectSpec e;
  e.name = std::move(name);
  e.kind = EffectKind::copy;
  e.copy_of = std::move(target);
  e.dim = 0;  // resolved at assembly
  return e;
}

FamilySpec FamilySpec::poisson() {
  FamilySpec f;
  f.family = stack::Family::poisson;
  return f;
}

FamilySpec FamilySpec::gaussian_fixed(double precision) {
  FamilySpec f;
  f.family = stack::Family::gaussian;
  f.fixed_precision = true;
  f.precision = precision;
  return f;
}

FamilySpec FamilySpec::gaussian_estimated(double sigma0, double p_sigma) {
  FamilySpec f;
  f.family = stack::Family::gaussian;
  f.fixed_precision = false;
  f.pc_sigma0 = sigma0;
  f.pc_p_sigma = p_sigma;
  return f;
}

LatentModel assemble(const stack::StackedData& stk, const std::vector<EffectSpec>& effects,
                     const std::vector<FamilySpec>& families) {
  LatentModel m;
  m.stk = stk;
  m.effects = effects;
  m.families = families;

  if (static_cast<int>(families.size()) != stk.cols())
    throw structural_error("family count does not match response columns");

  // Latent layout: non-copy effects own consecutive column blocks.
  auto effect_index = [&](const std::string& name) -> int {
    for (size_t i = 0; i < effects.size(); ++i)
      if (effects[i].name == name) return static_cast<int>(i);
    return -1;
  };

  m.offsets.assign(effects.size(), -1);
  int off = 0;
  for (size_t i = 0; i < effects.size(); ++i) {
    if (effects[i].kind == EffectKind::copy) continue;
    m.offsets[i] = off;
    off += effects[i].dim;
  }
  m.n_latent = off;
  for (size_t i = 0; i < effects.size(); ++i) {
    EffectSpec& e = m.effects[i];
    if (e.kind != EffectKind::copy) continue;
    const int t = effect_index(e.copy_of);
    if (t < 0)
      throw structural_error("copy effect '" + e.name + "' targets unknown effect '" +
                             e.copy_of + "'");
    if (effects[t].kind == EffectKind::copy)
      throw structural_error("copy effect '" + e.name + "' targets another copy");
    m.offsets[i] = m.offsets[t];
    e.dim = effects[t].dim;
  }

  // Observation matrix: each stack block placed at its effect's offset.
  // Copy effects route through the target's columns at unit scale.
  std::vector<Triplet> zt;
  for (const auto& b : stk.blocks) {
    const int i = effect_index(b.name);
    if (i < 0) throw structural_error("stack block '" + b.name + "' matches no effect");
    if (b.matrix.cols() != m.effects[i].dim)
      throw structural_error("block '" + b.name + "' latent dimension mismatch");
    const int o = m.offsets[i];
    for (int k = 0; k < b.matrix.outerSize(); ++k)
      for (SpMat::InnerIterator it(b.matrix, k); it; ++it)
        zt.emplace_back(static_cast<int>(it.row()), o + static_cast<int>(it.col()),
                        it.value());
  }
  for (size_t i = 0; i < effects.size(); ++i)
    if (!stk.find_block(m.effects[i].name))
      throw structural_error("effect '" + m.effects[i].name + "' has no stack block");
  m.Z.resize(stk.rows(), m.n_latent);
  m.Z.setFromTriplets(zt.begin(), zt.end());

  // Hyperparameters in effect order, then estimated observation precisions.
  for (size_t i = 0; i < effects.size(); ++i) {
    const EffectSpec& e = m.effects[i];
    if (e.kind == EffectKind::spde) {
      m.hypers.push_back({e.name + ".log_range", HyperKind::spde_log_range,
                          static_cast<int>(i), -1});
      m.hypers.push_back({e.name + ".log_sigma", HyperKind::spde_log_sigma,
                          static_cast<int>(i), -1});
    } else if (e.kind == EffectKind::besag || e.kind == EffectKind::iid) {
      m.hypers.push_back({e.name + ".log_tau", HyperKind::log_tau, static_cast<int>(i), -1});
    }
  }
  for (size_t k = 0; k < families.size(); ++k) {
    const FamilySpec& f = families[k];
    if (f.family == stack::Family::gaussian && !f.fixed_precision)
      m.hypers.push_back({"obs" + std::to_string(k + 1) + ".log_prec",
                          HyperKind::log_obs_precision, -1, static_cast<int>(k)});
  }

  // Sum-to-zero constraints: per besag connected component, and per spde
  // field whenever the model carries a free intercept.
  bool has_intercept = false;
  for (const auto& e : m.effects)
    if (e.kind == EffectKind::intercept) has_intercept = true;

  std::vector<Vec> rows;
  for (size_t i = 0; i < effects.size(); ++i) {
    const EffectSpec& e = m.effects[i];
    if (e.kind == EffectKind::besag) {
      const std::vector<int> comp = areal::connected_components(e.graph);
      const int ncomp = 1 + *std::max_element(comp.begin(), comp.end());
      for (int c = 0; c < ncomp; ++c) {
        Vec row = Vec::Zero(m.n_latent);
        for (int a = 0; a < e.graph.n; ++a)
          if (comp[a] == c) row[m.offsets[i] + a] = 1.0;
        rows.push_back(row);
      }
    } else if (e.kind == EffectKind::spde && has_intercept) {
      Vec row = Vec::Zero(m.n_latent);
      row.segment(m.offsets[i], e.dim).setOnes();
      rows.push_back(row);
    }
  }
  m.constraints.resize(static_cast<int>(rows.size()), m.n_latent);
  for (size_t r = 0; r < rows.size(); ++r) m.constraints.row(r) = rows[r];
  if (!rows.empty()) {
    Eigen::FullPivLU<Mat> lu(m.constraints);
    if (lu.rank() < m.constraints.rows())
      throw structural_error("constraint rows are rank deficient");
  }

  // Per-row observation view; enforce one-hot and family/column consistency.
  m.y.resize(stk.rows());
  m.y_col.assign(stk.rows(), -1);
  m.exposure = stk.exposure;
  for (int r = 0; r < stk.rows(); ++r) {
    for (int k = 0; k < stk.cols(); ++k) {
      if (!stk.response[r][k].has_value()) continue;
      if (m.y[r].has_value())
        throw structural_error("response row " + std::to_string(r) +
                               " has more than one value");
      m.y[r] = stk.response[r][k];
      m.y_col[r] = k;
    }
  }
  return m;
}

SpMat prior_precision(const LatentModel& model, const Vec& theta) {
  if (theta.size() != model.n_hyper())
    throw structural_error("theta dimension does not match hyper list");

  std::vector<Triplet> t;
  int h = 0;
  for (size_t i = 0; i < model.effects.size(); ++i) {
    const EffectSpec& e = model.effects[i];
    const int o = model.offsets[i];
    switch (e.kind) {
      case EffectKind::copy:
        break;
      case EffectKind::intercept:
      case EffectKind::covariate:
        for (int j = 0; j < e.dim; ++j)
          t.emplace_back(o + j, o + j, model.diffuse_precision);
        break;
      case EffectKind::spde: {
        const double r = std::exp(theta[h++]);
        const double s = std::exp(theta[h++]);
        const SpMat q = spde::matern_precision(*e.fem, spde::range_sigma_to_kappa_tau(r, s));
        for (int k = 0; k < q.outerSize(); ++k)
          for (SpMat::InnerIterator it(q, k); it; ++it)
            t.emplace_back(o + static_cast<int>(it.row()), o + static_cast<int>(it.col()),
                           it.value());
        break;
      }
      case EffectKind::besag: {
        const double tau = std::exp(theta[h++]);
        const SpMat q = areal::besag_precision(e.graph, tau);
        for (int k = 0; k < q.outerSize(); ++k)
          for (SpMat::InnerIterator it(q, k); it; ++it)
            t.emplace_back(o + static_cast<int>(it.row()), o + static_cast<int>(it.col()),
                           it.value());
        // Factorization jitter; the sum-to-zero constraint carries the
        // statistical meaning.
        for (int j = 0; j < e.dim; ++j) t.emplace_back(o + j, o + j, 1e-5 * tau);
        break;
      }
      case EffectKind::iid: {
        const double tau = std::exp(theta[h++]);
        for (int j = 0; j < e.dim; ++j) t.emplace_back(o + j, o + j, tau);
        break;
      }
    }
  }

  SpMat q(model.n_latent, model.n_latent);
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

double log_hyper_prior(const LatentModel& model, const Vec& theta) {
  if (theta.size() != model.n_hyper())
    throw structural_error("theta dimension does not match hyper list");
  double lp = 0.0;
  for (int h = 0; h < model.n_hyper(); ++h) {
    const HyperInfo& info = model.hypers[h];
    switch (info.kind) {
      case HyperKind::spde_log_range:
        lp += spde::pc_prior_log_density_theta(theta[h], theta[h + 1],
                                               model.effects[info.effect_index].pc);
        break;
      case HyperKind::spde_log_sigma:
        break;  // handled with the paired log_range component
      case HyperKind::log_tau:
        // Flat prior on sigma = tau^(-1/2): pi(tau) = (1/2) tau^(-3/2),
        // expressed in theta = log tau with its Jacobian.
        lp += -0.5 * theta[h] - std::log(2.0);
        break;
      case HyperKind::log_obs_precision: {
        const FamilySpec& f = model.families[info.family_column];
        const double lambda = -std::log(f.pc_p_sigma) / f.pc_sigma0;
        const double sd = std::exp(-0.5 * theta[h]);
        lp += std::log(lambda) - lambda * sd + std::log(0.5 * sd);
        break;
      }
    }
  }
  return lp;
}

}  // namespace mspat::lgm
