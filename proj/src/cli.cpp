#include "mspat/cli.hpp"

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <thread>

#include "mspat/csv.hpp"
#include "mspat/inference.hpp"
#include "mspat/lgm.hpp"

namespace mspat::cli {

namespace {

namespace fs = std::filesystem;

template <typename F>
int guarded(F&& f) {
  try {
    f();
    return 0;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    // parse, config, data and geometry problems all map to 3.
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

std::string ensure_outdir(const config::ModelConfig* cfg, const GlobalOptions& opts) {
  std::string dir = !opts.output_dir.empty() ? opts.output_dir
                    : cfg                    ? cfg->output_dir
                                             : std::string(".");
  if (dir.empty()) dir = ".";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory: " + dir);
  return dir;
}

int pick_threads(const config::ModelConfig& cfg, const GlobalOptions& opts) {
  if (opts.threads > 0) return opts.threads;
  if (cfg.fit.threads > 0) return cfg.fit.threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::uint64_t pick_seed(const config::ModelConfig& cfg, const GlobalOptions& opts) {
  return opts.seed.value_or(cfg.fit.seed);
}

std::vector<lgm::FamilySpec> family_specs(const config::ModelConfig& cfg) {
  std::vector<lgm::FamilySpec> out;
  for (const auto& f : cfg.families) {
    if (f.poisson)
      out.push_back(lgm::FamilySpec::poisson());
    else if (f.fixed_precision)
      out.push_back(lgm::FamilySpec::gaussian_fixed(f.precision));
    else
      out.push_back(lgm::FamilySpec::gaussian_estimated(f.sigma0, f.p_sigma));
  }
  return out;
}

// Response columns of a table: everything except coordinates, ids and columns
// claimed as covariates.
std::vector<int> response_columns(const csv::Table& t, const config::ModelConfig& cfg) {
  std::vector<int> cols;
  for (int c = 0; c < t.n_cols(); ++c) {
    const std::string& h = t.header[c];
    if (h == "id" || h == "x" || h == "y") continue;
    bool claimed = false;
    for (const auto& e : cfg.effects)
      if (e.kind == "covariate" && e.covariate == h) claimed = true;
    if (!claimed) cols.push_back(c);
  }
  const int K = static_cast<int>(cfg.families.size());
  if (static_cast<int>(cols.size()) < K)
    throw data_error("observations file has " + std::to_string(cols.size()) +
                     " response columns, config declares " + std::to_string(K) +
                     " families");
  cols.resize(K);
  return cols;
}

lgm::LatentModel build_areal_model(const config::ModelConfig& cfg) {
  const areal::AdjacencyGraph graph =
      areal::read_graph_file(config::resolve(cfg, cfg.graph));
  const csv::Table obs_t = csv::read_file(config::resolve(cfg, cfg.observations));
  const csv::Table exp_t = csv::read_file(config::resolve(cfg, cfg.expected));
  const int n = graph.n;
  const int K = static_cast<int>(cfg.families.size());
  if (obs_t.n_rows() != n || exp_t.n_rows() != n)
    throw data_error("observations/expected row count does not match the graph (" +
                     std::to_string(n) + " areas)");
  const std::vector<int> ocols = response_columns(obs_t, cfg);
  const std::vector<int> ecols = response_columns(exp_t, cfg);

  Mat obs(n, K), expd(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) {
      obs(i, k) = obs_t.number(i, ocols[k]);
      expd(i, k) = exp_t.number(i, ecols[k]);
    }
  stack::StackedData s = stack::stack_areal(obs, expd);

  std::vector<lgm::EffectSpec> effects;
  for (const auto& e : cfg.effects) {
    if (e.kind == "intercept") {
      if (e.column == 0) {
        if (e.name != "rf") s.alias_block("rf", e.name);
        effects.push_back(lgm::EffectSpec::intercept(e.name, K));
      } else {
        std::vector<Triplet> t;
        for (int i = 0; i < n; ++i) t.emplace_back((e.column - 1) * n + i, 0, 1.0);
        SpMat m(s.rows(), 1);
        m.setFromTriplets(t.begin(), t.end());
        s.add_block(e.name, std::move(m));
        effects.push_back(lgm::EffectSpec::intercept(e.name, 1));
      }
    } else if (e.kind == "besag" || e.kind == "iid" || e.kind == "copy") {
      if (e.column < 1)
        throw parse_error("effect '" + e.name + "' needs a response column");
      const std::string sel = "sel." + std::to_string(e.column);
      if (e.name != sel) s.alias_block(sel, e.name);
      if (e.kind == "besag")
        effects.push_back(lgm::EffectSpec::besag_field(e.name, graph));
      else if (e.kind == "iid")
        effects.push_back(lgm::EffectSpec::iid_field(e.name, n));
      else
        effects.push_back(lgm::EffectSpec::copy(e.name, e.target));
    } else if (e.kind == "covariate") {
      if (e.column < 1)
        throw parse_error("covariate '" + e.name + "' needs a response column");
      const int c = obs_t.column(e.covariate);
      std::vector<Triplet> t;
      for (int i = 0; i < n; ++i) {
        const double v = obs_t.number(i, c);
        if (v != 0.0) t.emplace_back((e.column - 1) * n + i, 0, v);
      }
      SpMat m(s.rows(), 1);
      m.setFromTriplets(t.begin(), t.end());
      s.add_block(e.name, std::move(m));
      effects.push_back(lgm::EffectSpec::covariate(e.name));
    } else {
      throw parse_error("effect kind '" + e.kind + "' is not available for areal data");
    }
  }

  // Drop canonical selector blocks that no effect uses.
  std::erase_if(s.blocks, [&](const stack::ProjectorBlock& b) {
    if (b.name != "rf" && b.name.rfind("sel.", 0) != 0) return false;
    for (const auto& e : effects)
      if (e.name == b.name) return false;
    return true;
  });
  return lgm::assemble(s, effects, family_specs(cfg));
}

lgm::LatentModel build_geostat_model(const config::ModelConfig& cfg) {
  const geom::Polygon poly = geom::read_rings_file(config::resolve(cfg, cfg.boundary));
  const csv::Table obs_t = csv::read_file(config::resolve(cfg, cfg.observations));
  const int xcol = obs_t.column("x"), ycol = obs_t.column("y");
  const int n = obs_t.n_rows();
  const int K = static_cast<int>(cfg.families.size());
  if (cfg.mesh.max_edge_inner <= 0)
    throw parse_error("geostat models need [mesh] max_edge_inner");

  std::vector<geom::Point> pts(n);
  for (int i = 0; i < n; ++i) pts[i] = {obs_t.number(i, xcol), obs_t.number(i, ycol)};
  const geom::Mesh mesh =
      geom::build_mesh(poly, pts, cfg.mesh.max_edge_inner, cfg.mesh.max_edge_outer,
                       cfg.mesh.cutoff, cfg.mesh.offset);
  const auto fem = std::make_shared<spde::FemMatrices>(spde::fem_matrices(mesh));
  const geom::Projector A = geom::projector_matrix(mesh, pts);
  const std::vector<int> vcols = response_columns(obs_t, cfg);

  std::vector<stack::StackedData> parts;
  for (int k = 0; k < K; ++k) {
    std::vector<stack::Cell> values(n);
    for (int i = 0; i < n; ++i) values[i] = obs_t.maybe_number(i, vcols[k]);
    std::vector<stack::EffectBlockDesc> descs;
    for (const auto& e : cfg.effects) {
      if (e.column != 0 && e.column != k + 1) continue;
      if (e.kind == "spde" || e.kind == "copy") {
        descs.push_back({e.name, stack::EffectBlockDesc::mesh, {}});
      } else if (e.kind == "intercept") {
        descs.push_back({e.name, stack::EffectBlockDesc::intercept, {}});
      } else if (e.kind == "covariate") {
        const int c = obs_t.column(e.covariate);
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = obs_t.number(i, c);
        descs.push_back({e.name, stack::EffectBlockDesc::covariate, v});
      } else {
        throw parse_error("effect kind '" + e.kind +
                          "' is not available for geostat data");
      }
    }
    parts.push_back(stack::stack_geostat(values, k, K, A, descs, obs_t.header[vcols[k]]));
  }

  std::vector<lgm::EffectSpec> effects;
  for (const auto& e : cfg.effects) {
    if (e.kind == "intercept")
      effects.push_back(lgm::EffectSpec::intercept(e.name, 1));
    else if (e.kind == "covariate")
      effects.push_back(lgm::EffectSpec::covariate(e.name));
    else if (e.kind == "spde")
      effects.push_back(lgm::EffectSpec::spde_field(
          e.name, fem, {e.r0, e.p_r, e.pc_sigma0, e.pc_p_sigma}));
    else
      effects.push_back(lgm::EffectSpec::copy(e.name, e.target));
  }
  return lgm::assemble(stack::join_stacks(parts), effects, family_specs(cfg));
}

lgm::LatentModel build_lgcp_model(const config::ModelConfig& cfg) {
  if (cfg.families.size() != 1 || !cfg.families[0].poisson)
    throw parse_error("lgcp models need exactly one poisson family");
  if (cfg.points.empty()) throw parse_error("lgcp fit needs a points path");
  if (cfg.mesh.max_edge_inner <= 0)
    throw parse_error("lgcp models need [mesh] max_edge_inner");

  const geom::Polygon poly = geom::read_rings_file(config::resolve(cfg, cfg.boundary));
  const geom::Mesh mesh = geom::build_mesh(poly, {}, cfg.mesh.max_edge_inner,
                                           cfg.mesh.max_edge_outer, cfg.mesh.cutoff,
                                           cfg.mesh.offset);
  const Vec w = geom::dual_weights(mesh, poly);

  const csv::Table pt = csv::read_file(config::resolve(cfg, cfg.points));
  const int xcol = pt.column("x"), ycol = pt.column("y");
  std::vector<geom::Point> pts(pt.n_rows());
  for (int i = 0; i < pt.n_rows(); ++i)
    pts[i] = {pt.number(i, xcol), pt.number(i, ycol)};
  const geom::Projector A = geom::projector_matrix(mesh, pts);

  const auto fem = std::make_shared<spde::FemMatrices>(spde::fem_matrices(mesh));
  std::vector<stack::EffectBlockDesc> descs;
  std::vector<lgm::EffectSpec> effects;
  for (const auto& e : cfg.effects) {
    if (e.kind == "intercept") {
      descs.push_back({e.name, stack::EffectBlockDesc::intercept, {}});
      effects.push_back(lgm::EffectSpec::intercept(e.name, 1));
    } else if (e.kind == "spde") {
      descs.push_back({e.name, stack::EffectBlockDesc::mesh, {}});
      effects.push_back(lgm::EffectSpec::spde_field(
          e.name, fem, {e.r0, e.p_r, e.pc_sigma0, e.pc_p_sigma}));
    } else {
      throw parse_error("effect kind '" + e.kind + "' is not available for lgcp data");
    }
  }
  const auto s = stack::stack_point_pattern(w, A, 0, 1, descs, "points");
  return lgm::assemble(s, effects, family_specs(cfg));
}

lgm::LatentModel build_model(const config::ModelConfig& cfg) {
  switch (cfg.kind) {
    case config::DataKind::areal:
      return build_areal_model(cfg);
    case config::DataKind::geostat:
      return build_geostat_model(cfg);
    case config::DataKind::lgcp:
      return build_lgcp_model(cfg);
  }
  throw structural_error("unreachable data kind");
}

void write_fit_outputs(const lgm::LatentModel& model, const inference::FitResult& res,
                       const std::string& dir) {
  std::vector<std::vector<std::string>> rows;
  for (size_t e = 0; e < model.effects.size(); ++e) {
    const lgm::EffectSpec& ef = model.effects[e];
    if (ef.kind == lgm::EffectKind::copy) continue;  // aliases its target
    for (int j = 0; j < ef.dim; ++j) {
      const int idx = model.offsets[e] + j;
      rows.push_back({ef.name, std::to_string(j + 1),
                      csv::format(res.latent_mean[idx]),
                      csv::format(res.latent_sd[idx])});
    }
  }
  csv::write_file(dir + "/summary.csv", {"effect", "index", "mean", "sd"}, rows);

  rows.clear();
  for (const auto& t : res.row_tags)
    for (int r = t.begin; r < t.end; ++r)
      rows.push_back({t.tag, std::to_string(r - t.begin + 1),
                      csv::format(res.predictor_mean[r]),
                      csv::format(res.predictor_sd[r])});
  csv::write_file(dir + "/predictors.csv", {"tag", "row", "mean", "sd"}, rows);

  rows.clear();
  for (const auto& h : res.hyper_summaries)
    rows.push_back({h.name, csv::format(h.mean), csv::format(h.sd),
                    csv::format(h.mode_theta)});
  csv::write_file(dir + "/hyper.csv", {"name", "mean", "sd", "mode_theta"}, rows);

  std::ofstream mlik(dir + "/mlik.txt");
  if (!mlik) throw io_error("cannot open output file: " + dir + "/mlik.txt");
  mlik << csv::format(res.log_marginal_likelihood) << "\n";
}

// Zero-mean draw from N(0, Q^-1) with per-component sum-to-zero projection
// for intrinsic blocks.
Vec draw_besag(const areal::AdjacencyGraph& g, double tau, std::mt19937_64& rng) {
  Mat q = Mat(areal::besag_precision(g, tau)) + 1e-5 * tau * Mat::Identity(g.n, g.n);
  const Eigen::LLT<Mat> llt(q);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec z(g.n);
  for (int i = 0; i < g.n; ++i) z[i] = normal(rng);
  Vec x = llt.matrixU().solve(z);
  const std::vector<int> comp = areal::connected_components(g);
  const int ncomp = 1 + *std::max_element(comp.begin(), comp.end());
  for (int c = 0; c < ncomp; ++c) {
    double sum = 0.0;
    int cnt = 0;
    for (int i = 0; i < g.n; ++i)
      if (comp[i] == c) {
        sum += x[i];
        ++cnt;
      }
    for (int i = 0; i < g.n; ++i)
      if (comp[i] == c) x[i] -= sum / cnt;
  }
  return x;
}

void simulate_areal(const config::ModelConfig& cfg, std::uint64_t seed,
                    const std::string& dir) {
  const areal::AdjacencyGraph graph =
      areal::read_graph_file(config::resolve(cfg, cfg.graph));
  const csv::Table exp_t = csv::read_file(config::resolve(cfg, cfg.expected));
  const int n = graph.n;
  const int K = static_cast<int>(cfg.families.size());
  if (exp_t.n_rows() != n)
    throw data_error("expected counts row count does not match the graph");
  const std::vector<int> ecols = response_columns(exp_t, cfg);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Latent truth per effect, copies aliasing their target.
  std::vector<Vec> draws(cfg.effects.size());
  std::vector<std::string> names;
  for (size_t e = 0; e < cfg.effects.size(); ++e) {
    const config::EffectConfig& ec = cfg.effects[e];
    if (ec.kind == "intercept") {
      if (!ec.value)
        throw parse_error("simulate needs a value for intercept '" + ec.name + "'");
      draws[e] = Vec::Constant(1, *ec.value);
    } else if (ec.kind == "besag") {
      if (!ec.tau) throw parse_error("simulate needs tau for besag '" + ec.name + "'");
      draws[e] = draw_besag(graph, *ec.tau, rng);
    } else if (ec.kind == "iid") {
      if (!ec.tau) throw parse_error("simulate needs tau for iid '" + ec.name + "'");
      draws[e].resize(n);
      for (int i = 0; i < n; ++i) draws[e][i] = normal(rng) / std::sqrt(*ec.tau);
    } else if (ec.kind == "copy") {
      for (size_t t = 0; t < cfg.effects.size(); ++t)
        if (cfg.effects[t].name == ec.target) draws[e] = draws[t];
      if (draws[e].size() == 0)
        throw parse_error("copy effect '" + ec.name + "' targets an effect declared later");
    } else {
      throw parse_error("effect kind '" + ec.kind + "' is not supported by areal simulate");
    }
  }

  Mat eta = Mat::Zero(n, K);
  for (size_t e = 0; e < cfg.effects.size(); ++e) {
    const config::EffectConfig& ec = cfg.effects[e];
    if (ec.kind == "intercept" && ec.column == 0)
      eta.array() += draws[e][0];
    else if (ec.kind == "intercept")
      eta.col(ec.column - 1).array() += draws[e][0];
    else
      eta.col(ec.column - 1) += draws[e];
  }

  std::vector<std::vector<std::string>> rows(n);
  for (int i = 0; i < n; ++i) {
    rows[i].push_back(std::to_string(i + 1));
    for (int k = 0; k < K; ++k) {
      const config::FamilyConfig& f = cfg.families[k];
      if (f.poisson) {
        const double mu = exp_t.number(i, ecols[k]) * std::exp(eta(i, k));
        std::poisson_distribution<long> pois(mu);
        rows[i].push_back(std::to_string(pois(rng)));
      } else {
        if (!f.fixed_precision)
          throw parse_error("gaussian simulate needs a fixed precision");
        rows[i].push_back(
            csv::format(eta(i, k) + normal(rng) / std::sqrt(f.precision)));
      }
    }
  }
  std::vector<std::string> header = {"id"};
  for (int k = 1; k <= K; ++k) header.push_back("y" + std::to_string(k));
  csv::write_file(dir + "/observations.csv", header, rows);

  std::vector<std::vector<std::string>> truth;
  for (size_t e = 0; e < cfg.effects.size(); ++e)
    for (int j = 0; j < draws[e].size(); ++j)
      truth.push_back({cfg.effects[e].name, std::to_string(j + 1),
                       csv::format(draws[e][j])});
  csv::write_file(dir + "/truth.csv", {"effect", "index", "value"}, truth);
}

void simulate_lgcp(const config::ModelConfig& cfg, std::uint64_t seed,
                   const std::string& dir) {
  const geom::Polygon poly = geom::read_rings_file(config::resolve(cfg, cfg.boundary));
  if (cfg.effects.size() != 1 || cfg.effects[0].kind != "intercept" ||
      !cfg.effects[0].value)
    throw parse_error(
        "lgcp simulate supports a single intercept effect with a value "
        "(constant intensity)");
  const double lambda = std::exp(*cfg.effects[0].value);
  const double area = geom::polygon_area(poly);

  std::mt19937_64 rng(seed);
  std::poisson_distribution<long> pois(lambda * area);
  const long count = pois(rng);

  double x0 = poly.outer[0].x, x1 = x0, y0 = poly.outer[0].y, y1 = y0;
  for (const auto& p : poly.outer) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1);
  std::vector<std::vector<std::string>> rows;
  while (static_cast<long>(rows.size()) < count) {
    const geom::Point p = {ux(rng), uy(rng)};
    if (geom::point_in_polygon(poly, p))
      rows.push_back({csv::format(p.x), csv::format(p.y)});
  }
  csv::write_file(dir + "/points.csv", {"x", "y"}, rows);
}

}  // namespace

int cmd_mesh(const std::string& boundary_path, double max_edge_inner,
             double max_edge_outer, double cutoff, double offset,
             const GlobalOptions& opts) {
  return guarded([&] {
    const geom::Polygon poly = geom::read_rings_file(boundary_path);
    const geom::Mesh mesh =
        geom::build_mesh(poly, {}, max_edge_inner, max_edge_outer, cutoff, offset);
    const std::string dir = ensure_outdir(nullptr, opts);
    const std::string path = dir + "/mesh.txt";
    std::ofstream out(path);
    if (!out) throw io_error("cannot open output file: " + path);
    geom::write_mesh(mesh, out);
    if (!out) throw io_error("failed writing output file: " + path);
    std::cout << "mesh: " << mesh.n_vertices() << " vertices, "
              << mesh.triangles.size() << " triangles -> " << path << "\n";
  });
}

int cmd_fit(const std::string& config_path, const GlobalOptions& opts) {
  return guarded([&] {
    const config::ModelConfig cfg = config::load(config_path);
    const std::string dir = ensure_outdir(&cfg, opts);
    const std::uint64_t seed = pick_seed(cfg, opts);
    std::cout << "seed: " << seed << "\n";

    const lgm::LatentModel model = build_model(cfg);
    inference::FitOptions fo;
    fo.threads = pick_threads(cfg, opts);
    if (opts.verbose)
      std::cout << "model: " << model.n_latent << " latent, " << model.n_hyper()
                << " hyper, " << model.stk.rows() << " rows, threads "
                << fo.threads << "\n";
    const inference::FitResult res = inference::fit(model, fo);
    write_fit_outputs(model, res, dir);
    std::cout << "fit: wrote " << dir << "/summary.csv, predictors.csv, hyper.csv, mlik.txt\n";
  });
}

int cmd_simulate(const std::string& config_path, const GlobalOptions& opts) {
  return guarded([&] {
    const config::ModelConfig cfg = config::load(config_path);
    const std::string dir = ensure_outdir(&cfg, opts);
    const std::uint64_t seed = pick_seed(cfg, opts);
    std::cout << "seed: " << seed << "\n";
    switch (cfg.kind) {
      case config::DataKind::areal:
        simulate_areal(cfg, seed, dir);
        std::cout << "simulate: wrote " << dir << "/observations.csv, truth.csv\n";
        break;
      case config::DataKind::lgcp:
        simulate_lgcp(cfg, seed, dir);
        std::cout << "simulate: wrote " << dir << "/points.csv\n";
        break;
      case config::DataKind::geostat:
        throw parse_error("geostat simulate is not supported");
    }
  });
}

const char* version_string() { return "mspat 0.1.0"; }

}  // namespace mspat::cli
