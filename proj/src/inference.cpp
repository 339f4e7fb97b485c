#include "mspat/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>
#include <unordered_map>

namespace mspat::inference {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

using Solver = Eigen::SimplicialLLT<SpMat>;

// Per-row likelihood terms. Poisson rows use the exposure as a multiplicative
// offset; zero-exposure rows (observed LGCP points) contribute y * eta only.
struct RowLik {
  double ll = 0.0;
  double grad = 0.0;
  double weight = 0.0;  // negative second derivative, >= 0
};

RowLik row_likelihood(const lgm::LatentModel& model, int r, double eta,
                      const Vec& theta) {
  RowLik out;
  if (!model.y[r].has_value()) return out;
  const double y = *model.y[r];
  const int col = model.y_col[r];
  const lgm::FamilySpec& f = model.families[col];
  if (f.family == stack::Family::poisson) {
    const double e = model.exposure[r];
    const double mu = e > 0.0 ? e * std::exp(eta) : 0.0;
    out.ll = y * eta - mu - std::lgamma(y + 1.0);
    if (e > 0.0) out.ll += y * std::log(e);
    out.grad = y - mu;
    out.weight = mu;
  } else {
    double prec = f.precision;
    if (!f.fixed_precision) {
      // Find this column's observation-precision hyper.
      for (int h = 0; h < model.n_hyper(); ++h)
        if (model.hypers[h].kind == lgm::HyperKind::log_obs_precision &&
            model.hypers[h].family_column == col)
          prec = std::exp(theta[h]);
    }
    const double res = y - eta;
    out.ll = 0.5 * (std::log(prec) - kLog2Pi) - 0.5 * prec * res * res;
    out.grad = prec * res;
    out.weight = prec;
  }
  return out;
}

double penalized_loglik(const lgm::LatentModel& model, const SpMat& q_prior,
                        const Vec& x, const Vec& theta, double* loglik_out = nullptr) {
  const Vec eta = model.Z * x;
  double ll = 0.0;
  for (int r = 0; r < model.stk.rows(); ++r)
    ll += row_likelihood(model, r, eta[r], theta).ll;
  if (loglik_out) *loglik_out = ll;
  return ll - 0.5 * x.dot(q_prior * x);
}

double log_det_from_factor(const Solver& solver) {
  return 2.0 * solver.matrixL().nestedExpression().diagonal().array().log().sum();
}

// Runs fn(i) for i in [0, n) over a fixed static partition; results must be
// written into pre-sized slots so the reduction order stays deterministic.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i; (i = next.fetch_add(1)) < n;) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct NelderMeadResult {
  Vec x;
  double f;
  int evals = 0;
};

NelderMeadResult nelder_mead(const std::function<double(const Vec&)>& f, const Vec& init,
                             double tol, int max_eval) {
  const int p = static_cast<int>(init.size());
  std::vector<std::pair<double, Vec>> simplex;
  int evals = 0;
  auto eval = [&](const Vec& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
  };
  simplex.emplace_back(eval(init), init);
  for (int m = 0; m < p; ++m) {
    Vec x = init;
    x[m] += 0.5;
    simplex.emplace_back(eval(x), x);
  }
  auto order = [&] {
    std::sort(simplex.begin(), simplex.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
  };
  order();

  while (evals < max_eval) {
    if (std::abs(simplex.front().first - simplex.back().first) < tol)
      return {simplex.front().second, simplex.front().first, evals};
    Vec centroid = Vec::Zero(p);
    for (int m = 0; m < p; ++m) centroid += simplex[m].second;
    centroid /= p;
    const Vec& worst = simplex.back().second;

    const Vec refl = centroid + (centroid - worst);
    const double f_refl = eval(refl);
    if (f_refl > simplex.front().first) {
      const Vec expand = centroid + 2.0 * (centroid - worst);
      const double f_exp = eval(expand);
      simplex.back() = f_exp > f_refl ? std::make_pair(f_exp, expand)
                                      : std::make_pair(f_refl, refl);
    } else if (f_refl > simplex[p - 1].first) {
      simplex.back() = {f_refl, refl};
    } else {
      const Vec contract = centroid + 0.5 * (worst - centroid);
      const double f_con = eval(contract);
      if (f_con > simplex.back().first) {
        simplex.back() = {f_con, contract};
      } else {
        for (int m = 1; m <= p; ++m) {
          simplex[m].second =
              simplex[0].second + 0.5 * (simplex[m].second - simplex[0].second);
          simplex[m].first = eval(simplex[m].second);
        }
      }
    }
    order();
  }
  throw numerical_error(
      "hyperparameter optimizer did not converge within " + std::to_string(max_eval) +
      " evaluations; best log-posterior " + std::to_string(simplex.front().first));
}

}  // namespace

GaussianApprox gaussian_approx(const lgm::LatentModel& model, const Vec& theta,
                               const FitOptions& opts) {
  const SpMat q_prior = lgm::prior_precision(model, theta);
  const int n = model.n_latent;
  const int k = static_cast<int>(model.constraints.rows());
  const Mat& A = model.constraints;

  Vec x = Vec::Zero(n);
  double f_cur = penalized_loglik(model, q_prior, x, theta);
  Solver solver;
  SpMat q_cond;
  int iter = 0;
  double dx = std::numeric_limits<double>::infinity();

  for (iter = 1; iter <= opts.newton_max_iter; ++iter) {
    const Vec eta = model.Z * x;
    Vec g(model.stk.rows()), w(model.stk.rows());
    for (int r = 0; r < model.stk.rows(); ++r) {
      const RowLik rl = row_likelihood(model, r, eta[r], theta);
      g[r] = rl.grad;
      w[r] = rl.weight;
    }
    q_cond = q_prior + SpMat(model.Z.transpose() * w.asDiagonal() * model.Z);
    solver.compute(q_cond);
    if (solver.info() != Eigen::Success)
      throw numerical_error(
          "conditional precision is not positive definite; consider a diagonal "
          "jitter or reviewing the priors");

    const Vec b = model.Z.transpose() * (w.asDiagonal() * eta + g);
    Vec x_new = solver.solve(b);
    if (k > 0) {
      // Conditioning by kriging keeps every accepted iterate on Ax = 0.
      const Mat B = solver.solve(A.transpose());
      const Mat S = A * B;
      x_new -= B * S.ldlt().solve(A * x_new);
    }

    const Vec step = x_new - x;
    dx = step.lpNorm<Eigen::Infinity>();
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_step_halvings; ++h, alpha *= 0.5) {
      const Vec cand = x + alpha * step;
      const double f_cand = penalized_loglik(model, q_prior, cand, theta);
      if (f_cand >= f_cur - 1e-12 * (1.0 + std::abs(f_cur))) {
        x = cand;
        f_cur = f_cand;
        dx *= alpha;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw numerical_error("Newton step failed to improve the objective at iteration " +
                            std::to_string(iter));
    if (dx < opts.newton_tol) break;
  }
  if (dx >= opts.newton_tol)
    throw numerical_error("Gaussian approximation did not converge in " +
                          std::to_string(opts.newton_max_iter) +
                          " Newton iterations; last step " + std::to_string(dx));

  // Final curvature and gradient at the mode.
  const Vec eta = model.Z * x;
  Vec g(model.stk.rows()), w(model.stk.rows());
  double ll = 0.0;
  for (int r = 0; r < model.stk.rows(); ++r) {
    const RowLik rl = row_likelihood(model, r, eta[r], theta);
    g[r] = rl.grad;
    w[r] = rl.weight;
    ll += rl.ll;
  }
  GaussianApprox out;
  out.mode = x;
  out.Qc = q_prior + SpMat(model.Z.transpose() * w.asDiagonal() * model.Z);
  out.log_like = ll;
  out.grad_at_mode = model.Z.transpose() * g - q_prior * x;
  out.newton_iters = iter;
  return out;
}

double log_posterior_hyper(const lgm::LatentModel& model, const Vec& theta,
                           const FitOptions& opts) {
  const GaussianApprox ga = gaussian_approx(model, theta, opts);
  const SpMat q_prior = lgm::prior_precision(model, theta);
  const int n = model.n_latent;
  const int k = static_cast<int>(model.constraints.rows());
  const Mat& A = model.constraints;

  Solver prior_f(q_prior);
  if (prior_f.info() != Eigen::Success)
    throw numerical_error("prior precision is not positive definite");
  Solver cond_f(ga.Qc);
  if (cond_f.info() != Eigen::Success)
    throw numerical_error("conditional precision is not positive definite");

  const double logdet_prior = log_det_from_factor(prior_f);
  const double logdet_cond = log_det_from_factor(cond_f);

  // log prior density of the latent mode, conditioned on the constraints.
  double lp_latent = -0.5 * ga.mode.dot(q_prior * ga.mode) + 0.5 * logdet_prior -
                     0.5 * n * kLog2Pi;
  // log density of the Gaussian approximation at the mode, same conditioning.
  const Vec shift = cond_f.solve(ga.grad_at_mode);
  double lp_gauss = 0.5 * logdet_cond - 0.5 * n * kLog2Pi -
                    0.5 * ga.grad_at_mode.dot(shift);
  if (k > 0) {
    auto logdet_dense = [](const Mat& s) {
      Eigen::LLT<Mat> llt(s);
      if (llt.info() != Eigen::Success)
        throw numerical_error("constraint covariance is not positive definite");
      return 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    };
    const Mat Sp = A * prior_f.solve(A.transpose());
    const Mat Sc = A * cond_f.solve(A.transpose());
    lp_latent += 0.5 * k * kLog2Pi + 0.5 * logdet_dense(Sp);
    // Unconstrained mean of the Gaussian approximation around the mode.
    const Vec mean_g = ga.mode + shift;
    const Vec am = A * mean_g;
    lp_gauss += 0.5 * k * kLog2Pi + 0.5 * logdet_dense(Sc) +
                0.5 * am.dot(Sc.ldlt().solve(am));
  }

  return ga.log_like + lp_latent + lgm::log_hyper_prior(model, theta) - lp_gauss;
}

HyperGrid explore_hyper(const lgm::LatentModel& model, const Vec& init,
                        const FitOptions& opts) {
  const int p = model.n_hyper();
  HyperGrid grid;
  if (p == 0) {
    grid.points.push_back(Vec());
    grid.log_weights = Vec::Zero(1);
    grid.mode = Vec();
    grid.curvature = Mat();
    grid.log_posterior_at_mode = log_posterior_hyper(model, Vec(), opts);
    return grid;
  }
  if (init.size() != p || !init.allFinite())
    throw structural_error("explore_hyper needs a finite initial theta");

  auto lp = [&](const Vec& th) { return log_posterior_hyper(model, th, opts); };
  const NelderMeadResult nm = nelder_mead(lp, init, opts.nm_tol, opts.nm_max_eval);
  Vec mode = nm.x;
  double lp_mode = nm.f;

  // Central finite-difference Hessian of -log posterior.
  const double h = opts.fd_step;
  Mat hess(p, p);
  std::vector<double> f_plus(p), f_minus(p);
  for (int m = 0; m < p; ++m) {
    Vec tp = mode, tm = mode;
    tp[m] += h;
    tm[m] -= h;
    f_plus[m] = lp(tp);
    f_minus[m] = lp(tm);
    hess(m, m) = -(f_plus[m] - 2.0 * lp_mode + f_minus[m]) / (h * h);
  }
  for (int a = 0; a < p; ++a)
    for (int b = a + 1; b < p; ++b) {
      Vec tpp = mode, tpm = mode, tmp = mode, tmm = mode;
      tpp[a] += h;
      tpp[b] += h;
      tpm[a] += h;
      tpm[b] -= h;
      tmp[a] -= h;
      tmp[b] += h;
      tmm[a] -= h;
      tmm[b] -= h;
      const double v = -(lp(tpp) - lp(tpm) - lp(tmp) + lp(tmm)) / (4.0 * h * h);
      hess(a, b) = hess(b, a) = v;
    }
  grid.curvature = hess;

  // Exploration directions: Hessian eigenvectors, or plain axes when the
  // Hessian is not positive definite.
  Mat dirs(p, p);
  Vec scales(p);
  Eigen::SelfAdjointEigenSolver<Mat> es(hess);
  if (es.eigenvalues().minCoeff() > 0) {
    dirs = es.eigenvectors();
    scales = es.eigenvalues().cwiseInverse().cwiseSqrt();
  } else {
    grid.axis_fallback = true;
    dirs = Mat::Identity(p, p);
    for (int m = 0; m < p; ++m)
      scales[m] = 1.0 / std::sqrt(std::max(std::abs(hess(m, m)), 1e-6));
  }

  const std::vector<double> zs = {0.0, 1.0, -1.0, 2.0, -2.0};
  std::vector<Vec> points;
  if (p <= 2) {
    // Full tensor grid over z in {0, +-1, +-2} per direction.
    const int total = static_cast<int>(std::pow(zs.size(), p));
    for (int c = 0; c < total; ++c) {
      int rem = c;
      Vec th = mode;
      for (int m = 0; m < p; ++m) {
        th += zs[rem % zs.size()] * scales[m] * dirs.col(m);
        rem /= static_cast<int>(zs.size());
      }
      points.push_back(th);
    }
  } else {
    points.push_back(mode);
    for (int m = 0; m < p; ++m)
      for (double z : {1.0, -1.0, 2.0, -2.0})
        points.push_back(mode + z * scales[m] * dirs.col(m));
  }

  Vec lps(points.size());
  parallel_for(static_cast<int>(points.size()), opts.threads, [&](int i) {
    lps[i] = (points[i] - mode).lpNorm<Eigen::Infinity>() == 0.0 ? lp_mode
                                                                 : lp(points[i]);
  });

  // The stored mode must attain the maximum over evaluated points.
  int best = 0;
  for (int i = 1; i < lps.size(); ++i)
    if (lps[i] > lps[best]) best = i;
  if (lps[best] > lp_mode) {
    mode = points[best];
    lp_mode = lps[best];
  }

  std::vector<Vec> kept;
  std::vector<double> kept_lp;
  const double floor = lp_mode + std::log(opts.prune_rel);
  for (size_t i = 0; i < points.size(); ++i)
    if (lps[i] >= floor) {
      kept.push_back(points[i]);
      kept_lp.push_back(lps[i]);
    }

  double lse = 0.0;
  for (double v : kept_lp) lse += std::exp(v - lp_mode);
  lse = lp_mode + std::log(lse);
  grid.points = std::move(kept);
  grid.log_weights.resize(static_cast<int>(kept_lp.size()));
  for (size_t i = 0; i < kept_lp.size(); ++i)
    grid.log_weights[static_cast<int>(i)] = kept_lp[i] - lse;
  grid.mode = mode;
  grid.log_posterior_at_mode = lp_mode;
  return grid;
}

namespace {

// Marginal variances of the latent field at one hyper point, with the
// kriging correction for linear constraints.
struct PointMoments {
  Vec mode;
  Vec latent_var;
  Vec pred_mean;
  Vec pred_var;
};

PointMoments point_moments(const lgm::LatentModel& model, const Vec& theta,
                           const FitOptions& opts) {
  const GaussianApprox ga = gaussian_approx(model, theta, opts);
  const int n = model.n_latent;
  const int k = static_cast<int>(model.constraints.rows());
  Solver solver(ga.Qc);
  if (solver.info() != Eigen::Success)
    throw numerical_error("conditional precision is not positive definite");

  Mat B;        // Qc^-1 A^T
  Eigen::LDLT<Mat> s_fact;
  if (k > 0) {
    B = solver.solve(model.constraints.transpose());
    s_fact.compute(model.constraints * B);
  }

  PointMoments pm;
  pm.mode = ga.mode;
  pm.latent_var.resize(n);
  if (n <= 5000) {
    for (int i = 0; i < n; ++i) {
      Vec e = Vec::Zero(n);
      e[i] = 1.0;
      const Vec col = solver.solve(e);
      double v = col[i];
      if (k > 0) {
        const Vec bi = B.row(i).transpose();
        v -= bi.dot(s_fact.solve(bi));
      }
      pm.latent_var[i] = std::max(v, 0.0);
    }
  } else {
    const Vec diag = takahashi_diag(ga.Qc);
    for (int i = 0; i < n; ++i) {
      double v = diag[i];
      if (k > 0) {
        const Vec bi = B.row(i).transpose();
        v -= bi.dot(s_fact.solve(bi));
      }
      pm.latent_var[i] = std::max(v, 0.0);
    }
  }

  const int R = model.stk.rows();
  pm.pred_mean = model.Z * ga.mode;
  pm.pred_var.resize(R);
  for (int r = 0; r < R; ++r) {
    const Vec z = model.Z.row(r).transpose();
    const Vec v = solver.solve(z);
    double var = z.dot(v);
    if (k > 0) {
      const Vec bz = B.transpose() * z;
      var -= bz.dot(s_fact.solve(bz));
    }
    pm.pred_var[r] = std::max(var, 0.0);
  }
  return pm;
}

}  // namespace

FitResult fit(const lgm::LatentModel& model, const FitOptions& opts) {
  const int p = model.n_hyper();

  // Default start: prior-scale guesses per hyper kind.
  Vec init = opts.init_theta;
  if (init.size() != p) {
    init.resize(p);
    for (int h = 0; h < p; ++h) {
      const lgm::HyperInfo& info = model.hypers[h];
      switch (info.kind) {
        case lgm::HyperKind::spde_log_range:
          init[h] = std::log(0.5 * model.effects[info.effect_index].pc.r0);
          break;
        case lgm::HyperKind::spde_log_sigma:
          init[h] = std::log(0.5 * model.effects[info.effect_index].pc.sigma0);
          break;
        default:
          init[h] = 0.0;
      }
    }
  }

  FitResult res;
  res.grid = explore_hyper(model, init, opts);
  const int G = static_cast<int>(res.grid.points.size());

  std::vector<PointMoments> pts(G);
  parallel_for(G, opts.threads, [&](int g) {
    pts[g] = point_moments(model, res.grid.points[g], opts);
  });

  const int n = model.n_latent;
  const int R = model.stk.rows();
  const Vec w = res.grid.log_weights.array().exp();

  res.latent_mean = Vec::Zero(n);
  res.predictor_mean = Vec::Zero(R);
  for (int g = 0; g < G; ++g) {
    res.latent_mean += w[g] * pts[g].mode;
    res.predictor_mean += w[g] * pts[g].pred_mean;
  }
  Vec lat_var = Vec::Zero(n), pred_var = Vec::Zero(R);
  for (int g = 0; g < G; ++g) {
    lat_var += w[g] * (pts[g].latent_var +
                       (pts[g].mode - res.latent_mean).cwiseAbs2().matrix());
    pred_var += w[g] * (pts[g].pred_var +
                        (pts[g].pred_mean - res.predictor_mean).cwiseAbs2().matrix());
  }
  res.latent_sd = lat_var.cwiseMax(0.0).cwiseSqrt();
  res.predictor_sd = pred_var.cwiseMax(0.0).cwiseSqrt();
  res.row_tags = model.stk.row_tags;

  // Laplace estimate of the log marginal likelihood.
  if (p == 0) {
    res.log_marginal_likelihood = res.grid.log_posterior_at_mode;
  } else {
    Eigen::LLT<Mat> hllt(res.grid.curvature);
    double logdet_h;
    if (hllt.info() == Eigen::Success) {
      logdet_h = 2.0 * Mat(hllt.matrixL()).diagonal().array().log().sum();
    } else {
      logdet_h = res.grid.curvature.diagonal().array().abs().max(1e-12).log().sum();
    }
    res.log_marginal_likelihood =
        res.grid.log_posterior_at_mode + 0.5 * p * kLog2Pi - 0.5 * logdet_h;
  }

  // Hyperparameter summaries from a per-component conditional-profile sweep.
  if (p > 0) {
    Mat hinv;
    Eigen::LLT<Mat> hllt(res.grid.curvature);
    if (hllt.info() == Eigen::Success) {
      hinv = hllt.solve(Mat::Identity(p, p));
    } else {
      hinv = Mat::Zero(p, p);
      for (int m = 0; m < p; ++m)
        hinv(m, m) = 1.0 / std::max(std::abs(res.grid.curvature(m, m)), 1e-6);
    }
    const int n_q = 21;
    res.hyper_summaries.resize(p);
    for (int m = 0; m < p; ++m) {
      const double sm = std::sqrt(std::max(hinv(m, m), 1e-12));
      Vec vals(n_q), lps(n_q);
      std::vector<Vec> thetas(n_q);
      for (int q = 0; q < n_q; ++q) {
        const double dz = -3.5 + 7.0 * q / (n_q - 1);
        Vec th = res.grid.mode;
        th[m] += dz * sm;
        // Conditional mode of the remaining components under the local
        // Gaussian model: theta_o = mode_o - Hoo^-1 Hom * (dz * sm).
        if (p > 1) {
          Mat hoo(p - 1, p - 1);
          Vec hom(p - 1);
          int ai = 0;
          for (int a = 0; a < p; ++a) {
            if (a == m) continue;
            int bi = 0;
            for (int b = 0; b < p; ++b) {
              if (b == m) continue;
              hoo(ai, bi++) = res.grid.curvature(a, b);
            }
            hom[ai++] = res.grid.curvature(a, m);
          }
          const Vec adj = hoo.ldlt().solve(hom * (dz * sm));
          ai = 0;
          for (int a = 0; a < p; ++a)
            if (a != m) th[a] = res.grid.mode[a] - adj[ai++];
        }
        thetas[q] = th;
        vals[q] = th[m];
      }
      parallel_for(n_q, opts.threads, [&](int q) {
        lps[q] = log_posterior_hyper(model, thetas[q], opts);
      });
      const double mx = lps.maxCoeff();
      Vec wq = (lps.array() - mx).exp();
      wq /= wq.sum();
      double mean = 0.0, m2 = 0.0;
      for (int q = 0; q < n_q; ++q) {
        const double nat = std::exp(vals[q]);
        mean += wq[q] * nat;
        m2 += wq[q] * nat * nat;
      }
      res.hyper_summaries[m] = {model.hypers[m].name, mean,
                                std::sqrt(std::max(0.0, m2 - mean * mean)),
                                res.grid.mode[m]};
    }
  }
  return res;
}

std::pair<Vec, Vec> predict_rows(const FitResult& result, const std::string& tag) {
  for (const auto& t : result.row_tags) {
    if (t.tag != tag) continue;
    const int len = t.end - t.begin;
    return {result.predictor_mean.segment(t.begin, len),
            result.predictor_sd.segment(t.begin, len)};
  }
  throw structural_error("unknown row tag: " + tag);
}

Vec takahashi_diag(const SpMat& Q) {
  Solver solver(Q);
  if (solver.info() != Eigen::Success)
    throw numerical_error("takahashi_diag: matrix is not positive definite");
  const SpMat L = solver.matrixL();
  const int n = static_cast<int>(L.rows());

  // Covariance entries on the Cholesky pattern, keyed by (row, col), row >= col.
  std::unordered_map<long long, double> sigma;
  sigma.reserve(static_cast<size_t>(L.nonZeros()) * 2);
  auto key = [n](int r, int c) { return static_cast<long long>(r) * n + c; };
  auto get = [&](int r, int c) {
    if (r < c) std::swap(r, c);
    const auto it = sigma.find(key(r, c));
    return it == sigma.end() ? 0.0 : it->second;
  };

  for (int j = n - 1; j >= 0; --j) {
    const double ljj = L.coeff(j, j);
    // Row indices of column j below the diagonal.
    std::vector<std::pair<int, double>> below;
    for (SpMat::InnerIterator it(L, j); it; ++it)
      if (it.row() > j) below.emplace_back(static_cast<int>(it.row()), it.value());

    // Off-diagonal entries, furthest row first.
    for (auto rit = below.rbegin(); rit != below.rend(); ++rit) {
      const int i = rit->first;
      double s = 0.0;
      for (const auto& [kk, lkj] : below) s += lkj * get(kk, i);
      sigma[key(i, j)] = -s / ljj;
    }
    double s = 0.0;
    for (const auto& [kk, lkj] : below) s += lkj * get(kk, j);
    sigma[key(j, j)] = 1.0 / (ljj * ljj) - s / ljj;
  }

  const auto& perm = solver.permutationP().indices();
  Vec diag(n);
  for (int i = 0; i < n; ++i) diag[i] = sigma[key(perm[i], perm[i])];
  return diag;
}

}  // namespace mspat::inference

