#include "mspat/oracle.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <random>

#include "mspat/errors.hpp"

namespace mspat::oracle {

GaussianPosterior exact_gaussian_posterior(const DenseModel& dm) {
  const int n = static_cast<int>(dm.prior_precision.rows());
  if (n > 2000) throw structural_error("dense oracle limited to dimension 2000");
  if (dm.Z.cols() != n || dm.prior_precision.cols() != n)
    throw structural_error("dense model dimensions are inconsistent");
  const int R = static_cast<int>(dm.Z.rows());
  if (static_cast<int>(dm.y.size()) != R || dm.obs_precision.size() != R)
    throw structural_error("dense model row data are inconsistent");

  Vec w = Vec::Zero(R), yv = Vec::Zero(R);
  for (int r = 0; r < R; ++r)
    if (dm.y[r].has_value()) {
      w[r] = dm.obs_precision[r];
      yv[r] = *dm.y[r];
    }

  const Mat q = dm.prior_precision + dm.Z.transpose() * w.asDiagonal() * dm.Z;
  Eigen::LDLT<Mat> fact(q);
  if (fact.info() != Eigen::Success)
    throw numerical_error("dense posterior precision is not positive definite");

  GaussianPosterior post;
  post.mean = fact.solve(dm.Z.transpose() * (w.asDiagonal() * yv));
  post.covariance = fact.solve(Mat::Identity(n, n));

  const int k = static_cast<int>(dm.constraints.rows());
  if (k > 0) {
    const Mat& A = dm.constraints;
    const Mat B = post.covariance * A.transpose();
    const Eigen::LDLT<Mat> s(A * B);
    post.mean -= B * s.solve(A * post.mean);
    post.covariance -= B * s.solve(B.transpose());
  }
  return post;
}

Quad1D quadrature_1d(const std::function<double(double)>& logf, double lo, double hi,
                     int n) {
  if (n < 3) throw structural_error("quadrature needs at least 3 nodes");
  if (n % 2 == 0) ++n;  // Simpson wants an odd node count
  const double h = (hi - lo) / (n - 1);

  Vec x(n), f(n), c(n);
  for (int i = 0; i < n; ++i) {
    x[i] = lo + i * h;
    f[i] = logf(x[i]);
    c[i] = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
  }
  const double m = f.maxCoeff();
  double z = 0.0, s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = c[i] * std::exp(f[i] - m);
    z += t;
    s1 += t * x[i];
    s2 += t * x[i] * x[i];
  }
  Quad1D out;
  out.log_normalizer = m + std::log(z * h / 3.0);
  out.mean = s1 / z;
  out.variance = s2 / z - out.mean * out.mean;
  return out;
}

namespace {

struct PriorBlock {
  bool tau_scaled = false;  // precision is tau * q1
  int offset = 0, dim = 0, hyper = -1;
  Mat q1;               // base precision at tau = 1 (tau blocks only)
  double half_free = 0;  // (dim - constraints in block) / 2
};

struct Reparam {
  std::vector<int> free_index;              // z slot -> latent index
  std::vector<std::pair<int, std::vector<int>>> dependent;  // latent index -> donors
  int n_latent = 0;

  Vec expand(const Vec& z) const {
    Vec x = Vec::Zero(n_latent);
    for (size_t i = 0; i < free_index.size(); ++i) x[free_index[i]] = z[i];
    for (const auto& [d, donors] : dependent) {
      double s = 0.0;
      for (int j : donors) s += x[j];
      x[d] = -s;
    }
    return x;
  }
};

Reparam build_reparam(const lgm::LatentModel& model) {
  Reparam rp;
  rp.n_latent = model.n_latent;
  std::vector<bool> dep(model.n_latent, false);
  for (int r = 0; r < model.constraints.rows(); ++r) {
    std::vector<int> members;
    for (int j = 0; j < model.n_latent; ++j) {
      const double v = model.constraints(r, j);
      if (v == 0.0) continue;
      if (v != 1.0)
        throw structural_error("sampler supports indicator constraints only");
      members.push_back(j);
    }
    if (members.size() < 2)
      throw structural_error("degenerate constraint row in sampler");
    const int d = members.back();
    members.pop_back();
    dep[d] = true;
    rp.dependent.emplace_back(d, members);
  }
  for (int j = 0; j < model.n_latent; ++j)
    if (!dep[j]) rp.free_index.push_back(j);
  return rp;
}

std::vector<PriorBlock> build_blocks(const lgm::LatentModel& model) {
  auto hyper_of_effect = [&](int e) {
    for (int h = 0; h < model.n_hyper(); ++h)
      if (model.hypers[h].kind == lgm::HyperKind::log_tau &&
          model.hypers[h].effect_index == e)
        return h;
    throw structural_error("sampler found no tau hyper for effect");
  };
  auto constraints_in = [&](int offset, int dim) {
    int k = 0;
    for (int r = 0; r < model.constraints.rows(); ++r) {
      bool inside = false;
      for (int j = offset; j < offset + dim; ++j)
        if (model.constraints(r, j) != 0.0) inside = true;
      if (inside) ++k;
    }
    return k;
  };

  std::vector<PriorBlock> blocks;
  for (size_t e = 0; e < model.effects.size(); ++e) {
    const lgm::EffectSpec& ef = model.effects[e];
    PriorBlock b;
    b.offset = model.offsets[e];
    b.dim = ef.dim;
    switch (ef.kind) {
      case lgm::EffectKind::copy:
        continue;
      case lgm::EffectKind::intercept:
      case lgm::EffectKind::covariate:
        b.tau_scaled = false;
        break;
      case lgm::EffectKind::iid:
        b.tau_scaled = true;
        b.hyper = hyper_of_effect(static_cast<int>(e));
        b.q1 = Mat::Identity(b.dim, b.dim);
        b.half_free = 0.5 * b.dim;
        break;
      case lgm::EffectKind::besag: {
        b.tau_scaled = true;
        b.hyper = hyper_of_effect(static_cast<int>(e));
        b.q1 = 1e-5 * Mat::Identity(b.dim, b.dim);
        for (int a = 0; a < ef.graph.n; ++a)
          for (int nb : ef.graph.neighbors[a]) {
            b.q1(a, a) += 1.0;
            b.q1(a, nb) -= 1.0;
          }
        b.half_free = 0.5 * (b.dim - constraints_in(b.offset, b.dim));
        break;
      }
      case lgm::EffectKind::spde:
        throw structural_error("sampler does not support SPDE effects");
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

double log_target(const lgm::LatentModel& model, const std::vector<PriorBlock>& blocks,
                  const Reparam& rp, const Vec& z, const Vec& theta) {
  const Vec x = rp.expand(z);
  const Vec eta = model.Z * x;
  double lp = 0.0;

  for (int r = 0; r < model.stk.rows(); ++r) {
    if (!model.y[r].has_value()) continue;
    const double y = *model.y[r];
    const lgm::FamilySpec& f = model.families[model.y_col[r]];
    if (f.family == stack::Family::poisson) {
      const double e = model.exposure[r];
      lp += y * eta[r] - (e > 0.0 ? e * std::exp(eta[r]) : 0.0);
    } else {
      double prec = f.precision;
      if (!f.fixed_precision) {
        for (int h = 0; h < model.n_hyper(); ++h)
          if (model.hypers[h].kind == lgm::HyperKind::log_obs_precision &&
              model.hypers[h].family_column == model.y_col[r])
            prec = std::exp(theta[h]);
      }
      const double res = y - eta[r];
      lp += 0.5 * std::log(prec) - 0.5 * prec * res * res;
    }
  }

  for (const PriorBlock& b : blocks) {
    const Vec seg = x.segment(b.offset, b.dim);
    if (b.tau_scaled) {
      const double th = theta[b.hyper];
      lp += b.half_free * th - 0.5 * std::exp(th) * seg.dot(b.q1 * seg);
    } else {
      lp += -0.5 * model.diffuse_precision * seg.squaredNorm();
    }
  }

  for (int h = 0; h < model.n_hyper(); ++h) {
    switch (model.hypers[h].kind) {
      case lgm::HyperKind::log_tau:
        lp += -0.5 * theta[h] - std::log(2.0);
        break;
      case lgm::HyperKind::log_obs_precision: {
        const lgm::FamilySpec& f = model.families[model.hypers[h].family_column];
        const double lambda = -std::log(f.pc_p_sigma) / f.pc_sigma0;
        const double sd = std::exp(-0.5 * theta[h]);
        lp += std::log(lambda) - lambda * sd + std::log(0.5 * sd);
        break;
      }
      default:
        throw structural_error("sampler does not support SPDE hyperparameters");
    }
  }
  return lp;
}

void batch_stats(const Mat& samples, int col, double& mean, double& mcse, double& ess) {
  const int m = static_cast<int>(samples.rows());
  mean = samples.col(col).mean();
  const int nb = std::max(2, static_cast<int>(std::sqrt(static_cast<double>(m))));
  const int bs = m / nb;
  Vec bm(nb);
  for (int b = 0; b < nb; ++b) bm[b] = samples.col(col).segment(b * bs, bs).mean();
  const double bvar = (bm.array() - bm.mean()).square().sum() / (nb - 1);
  mcse = std::sqrt(bvar / nb);
  const double svar =
      (samples.col(col).array() - mean).square().sum() / std::max(1, m - 1);
  ess = mcse > 0.0 ? svar / (mcse * mcse) : static_cast<double>(m);
}

}  // namespace

McmcResult mh_sample(const lgm::LatentModel& model, int iterations, std::uint64_t seed) {
  if (model.n_latent > 200) throw structural_error("sampler limited to 200 latent dims");
  if (iterations < 100) throw structural_error("sampler needs at least 100 iterations");

  const Reparam rp = build_reparam(model);
  const std::vector<PriorBlock> blocks = build_blocks(model);
  const int nz = static_cast<int>(rp.free_index.size());
  const int p = model.n_hyper();
  const int dim = nz + p;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Vec z = Vec::Zero(nz), theta = Vec::Zero(p);
  double cur = log_target(model, blocks, rp, z, theta);
  Vec scale = Vec::Constant(dim, 0.5);

  const int adapt_end = iterations / 5;
  const int burn = iterations / 4;
  const int adapt_window = 50;
  std::vector<int> window_acc(dim, 0);
  long post_acc = 0, post_prop = 0;

  McmcResult res;
  res.samples.resize(iterations - burn, model.n_latent + p);

  for (int it = 0; it < iterations; ++it) {
    for (int c = 0; c < dim; ++c) {
      Vec zp = z, tp = theta;
      if (c < nz)
        zp[c] += scale[c] * normal(rng);
      else
        tp[c - nz] += scale[c] * normal(rng);
      const double cand = log_target(model, blocks, rp, zp, tp);
      const bool accept = std::log(unif(rng)) < cand - cur;
      if (accept) {
        z = zp;
        theta = tp;
        cur = cand;
        ++window_acc[c];
        if (it >= adapt_end) ++post_acc;
      }
      if (it >= adapt_end) ++post_prop;
    }
    if (it < adapt_end && (it + 1) % adapt_window == 0) {
      const double delta = std::min(0.1, 1.0 / std::sqrt(1.0 + it / adapt_window));
      for (int c = 0; c < dim; ++c) {
        const double rate = static_cast<double>(window_acc[c]) / adapt_window;
        scale[c] *= std::exp(rate > 0.44 ? delta : -delta);
        window_acc[c] = 0;
      }
    }
    if (it >= burn) {
      const Vec x = rp.expand(z);
      res.samples.row(it - burn).head(model.n_latent) = x.transpose();
      if (p > 0) res.samples.row(it - burn).tail(p) = theta.transpose();
    }
  }

  res.acceptance_rate = post_prop > 0 ? static_cast<double>(post_acc) / post_prop : 0.0;
  res.acceptance_warning = res.acceptance_rate < 0.1 || res.acceptance_rate > 0.6;

  res.latent_mean.resize(model.n_latent);
  res.latent_mcse.resize(model.n_latent);
  res.latent_ess.resize(model.n_latent);
  for (int j = 0; j < model.n_latent; ++j)
    batch_stats(res.samples, j, res.latent_mean[j], res.latent_mcse[j],
                res.latent_ess[j]);
  res.hyper_mean.resize(p);
  res.hyper_mcse.resize(p);
  res.hyper_ess.resize(p);
  for (int h = 0; h < p; ++h)
    batch_stats(res.samples, model.n_latent + h, res.hyper_mean[h], res.hyper_mcse[h],
                res.hyper_ess[h]);
  return res;
}

void write_chain_csv(const McmcResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open chain output file: " + path);
  const int n = static_cast<int>(result.latent_mean.size());
  const int p = static_cast<int>(result.hyper_mean.size());
  for (int j = 0; j < n; ++j) out << (j ? "," : "") << "x" << (j + 1);
  for (int h = 0; h < p; ++h) out << ",theta" << (h + 1);
  out << "\n";
  out.precision(17);
  for (int r = 0; r < result.samples.rows(); ++r) {
    for (int c = 0; c < result.samples.cols(); ++c)
      out << (c ? "," : "") << result.samples(r, c);
    out << "\n";
  }
  if (!out) throw io_error("failed writing chain output file: " + path);
}

}  // namespace mspat::oracle
