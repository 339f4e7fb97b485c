#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "mspat/lgm.hpp"
#include "mspat/oracle.hpp"
#include "test_helpers.hpp"

using namespace mspat;
using stack::Cell;

namespace {

areal::AdjacencyGraph cycle_graph(int n) {
  areal::AdjacencyGraph g;
  g.n = n;
  g.neighbors.resize(n);
  for (int i = 0; i < n; ++i) {
    g.neighbors[i].push_back((i + 1) % n);
    g.neighbors[i].push_back((i + n - 1) % n);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  return g;
}

// The three-disease lattice layout: shared spatial term copied into every
// disease, plus disease-specific spatial terms for the second and third.
lgm::LatentModel lattice_model(int n) {
  Mat obs = Mat::Constant(n, 3, 2.0);
  Mat expected = Mat::Constant(n, 3, 1.0);
  stack::StackedData s = stack::stack_areal(obs, expected);
  s.alias_block("sel.1", "copy1");
  s.alias_block("sel.2", "copy2");
  s.alias_block("sel.3", "copy3");
  s.alias_block("sel.2", "spatial2");
  s.alias_block("sel.3", "spatial3");
  s.blocks.erase(s.blocks.begin() + 1, s.blocks.begin() + 4);  // drop raw selectors

  const areal::AdjacencyGraph g = cycle_graph(n);
  const std::vector<lgm::EffectSpec> effects = {
      lgm::EffectSpec::intercept("rf", 3),
      lgm::EffectSpec::besag_field("copy1", g),
      lgm::EffectSpec::copy("copy2", "copy1"),
      lgm::EffectSpec::copy("copy3", "copy1"),
      lgm::EffectSpec::besag_field("spatial2", g),
      lgm::EffectSpec::besag_field("spatial3", g)};
  const std::vector<lgm::FamilySpec> fams(3, lgm::FamilySpec::poisson());
  return lgm::assemble(s, effects, fams);
}

}  // namespace

TEST_CASE("lattice model layout") {
  const int n = 4;
  const lgm::LatentModel m = lattice_model(n);
  CHECK(m.n_latent == 3 + 3 * n);
  CHECK(m.Z.rows() == 3 * n);
  CHECK(m.Z.nonZeros() == 8 * n);  // rf one-hot + five selector blocks

  // Disease-2 rows route through the shared columns and spatial2's columns.
  const int off_u = m.offsets[1];
  const int off_s2 = m.offsets[4];
  CHECK(m.offsets[2] == off_u);  // copies alias the target
  CHECK(m.offsets[3] == off_u);
  for (int i = 0; i < n; ++i) {
    const int r = n + i;
    CHECK(m.Z.coeff(r, 1) == 1.0);  // second intercept
    CHECK(m.Z.coeff(r, off_u + i) == 1.0);
    CHECK(m.Z.coeff(r, off_s2 + i) == 1.0);
  }

  // One tau hyper per besag block, in effect order.
  REQUIRE(m.n_hyper() == 3);
  CHECK(m.hypers[0].name == "copy1.log_tau");
  CHECK(m.hypers[1].name == "spatial2.log_tau");
  CHECK(m.hypers[2].name == "spatial3.log_tau");

  // One sum-to-zero constraint per besag block.
  REQUIRE(m.constraints.rows() == 3);
  CHECK(m.constraints.row(0).sum() == doctest::Approx(n));
  CHECK(m.constraints.row(0).segment(off_u, n).sum() == doctest::Approx(n));
}

TEST_CASE("assembly rejects broken wirings") {
  Mat obs = Mat::Constant(2, 1, 1.0);
  stack::StackedData s = stack::stack_areal(obs, Mat::Ones(2, 1));
  const areal::AdjacencyGraph g = cycle_graph(3);

  // Dangling copy target.
  CHECK_THROWS_AS(lgm::assemble(s,
                                {lgm::EffectSpec::intercept("rf", 1),
                                 lgm::EffectSpec::besag_field("sel.1", cycle_graph(2)),
                                 lgm::EffectSpec::copy("c", "missing")},
                                {lgm::FamilySpec::poisson()}),
                  structural_error);

  // Stack block without a matching effect.
  CHECK_THROWS_AS(lgm::assemble(s, {lgm::EffectSpec::intercept("rf", 1)},
                                {lgm::FamilySpec::poisson()}),
                  structural_error);

  // Effect without a stack block.
  stack::StackedData s2 = stack::stack_areal(obs, Mat::Ones(2, 1));
  s2.blocks.pop_back();
  CHECK_THROWS_AS(lgm::assemble(s2,
                                {lgm::EffectSpec::intercept("rf", 1),
                                 lgm::EffectSpec::iid_field("ghost", 2)},
                                {lgm::FamilySpec::poisson()}),
                  structural_error);

  // Family count must match response columns.
  CHECK_THROWS_AS(lgm::assemble(s,
                                {lgm::EffectSpec::intercept("rf", 1),
                                 lgm::EffectSpec::besag_field("sel.1", cycle_graph(2))},
                                {lgm::FamilySpec::poisson(), lgm::FamilySpec::poisson()}),
                  structural_error);

  // Latent dimension mismatch between block and effect.
  CHECK_THROWS_AS(lgm::assemble(s,
                                {lgm::EffectSpec::intercept("rf", 1),
                                 lgm::EffectSpec::besag_field("sel.1", g)},
                                {lgm::FamilySpec::poisson()}),
                  structural_error);
}

TEST_CASE("prior precision blocks delegate to the per-effect builders") {
  const int n = 4;
  const lgm::LatentModel m = lattice_model(n);
  const Vec theta = (Vec(3) << 0.3, -0.2, 1.1).finished();
  const Mat q = Mat(lgm::prior_precision(m, theta));

  // Intercepts get the diffuse precision.
  for (int j = 0; j < 3; ++j) CHECK(q(j, j) == m.diffuse_precision);

  const areal::AdjacencyGraph g = cycle_graph(n);
  const double taus[3] = {std::exp(0.3), std::exp(-0.2), std::exp(1.1)};
  const int offs[3] = {m.offsets[1], m.offsets[4], m.offsets[5]};
  for (int b = 0; b < 3; ++b) {
    const Mat want = Mat(areal::besag_precision(g, taus[b])) +
                     1e-5 * taus[b] * Mat::Identity(n, n);
    CHECK((q.block(offs[b], offs[b], n, n) - want).lpNorm<Eigen::Infinity>() < 1e-14);
  }

  // No cross-block nonzeros.
  CHECK(q.block(m.offsets[1], m.offsets[4], n, n).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(q.block(0, m.offsets[1], 3, n).lpNorm<Eigen::Infinity>() == 0.0);

  CHECK_THROWS_AS(lgm::prior_precision(m, Vec::Zero(2)), structural_error);
}

TEST_CASE("spde effect delegates precision and prior, constraint tied to intercept") {
  const geom::Mesh mesh = testutil::grid_mesh(0, 0, 3, 3, 0.4);
  const auto fem = std::make_shared<spde::FemMatrices>(spde::fem_matrices(mesh));
  spde::PcPriorSpec pc{2.0, 0.3, 1.5, 0.1};

  const geom::Projector A = geom::projector_matrix(mesh, {{0.5, 0.5}, {0.9, 0.3}});
  const auto mk = [&](bool with_intercept) {
    std::vector<stack::EffectBlockDesc> fx = {{"field", stack::EffectBlockDesc::mesh, {}}};
    if (with_intercept) fx.push_back({"alpha", stack::EffectBlockDesc::intercept, {}});
    const auto s = stack::stack_geostat({Cell(1.0), Cell(2.0)}, 0, 1, A, fx, "d");
    std::vector<lgm::EffectSpec> effects = {lgm::EffectSpec::spde_field("field", fem, pc)};
    if (with_intercept) effects.push_back(lgm::EffectSpec::intercept("alpha"));
    return lgm::assemble(s, effects, {lgm::FamilySpec::gaussian_fixed(1.0)});
  };

  const lgm::LatentModel with = mk(true), without = mk(false);
  CHECK(with.constraints.rows() == 1);
  CHECK(without.constraints.rows() == 0);
  REQUIRE(with.n_hyper() == 2);
  CHECK(with.hypers[0].name == "field.log_range");
  CHECK(with.hypers[1].name == "field.log_sigma");

  const Vec theta = (Vec(2) << std::log(0.8), std::log(1.4)).finished();
  const Mat q = Mat(lgm::prior_precision(with, theta));
  const Mat direct =
      Mat(spde::matern_precision(*fem, spde::range_sigma_to_kappa_tau(0.8, 1.4)));
  CHECK((q.topLeftCorner(direct.rows(), direct.cols()) - direct)
            .lpNorm<Eigen::Infinity>() < 1e-14);

  CHECK(lgm::log_hyper_prior(with, theta) ==
        doctest::Approx(spde::pc_prior_log_density_theta(theta[0], theta[1], pc))
            .epsilon(1e-12));
}

TEST_CASE("flat-sigma tau prior is the correct change of variables") {
  // Integrating any test function against the theta-scale density must equal
  // integrating it against the flat density on sigma = exp(-theta/2).
  auto f = [](double sigma) { return std::exp(-(sigma - 1.0) * (sigma - 1.0)); };
  const auto direct = oracle::quadrature_1d(
      [&](double s) { return std::log(f(s)); }, 1e-8, 40.0, 200001);
  const auto via_theta = oracle::quadrature_1d(
      [&](double th) {
        return std::log(f(std::exp(-0.5 * th))) - 0.5 * th - std::log(2.0);
      },
      -12.0, 60.0, 200001);
  CHECK(std::exp(via_theta.log_normalizer) ==
        doctest::Approx(std::exp(direct.log_normalizer)).epsilon(1e-6));

  const lgm::LatentModel m = lattice_model(3);
  const Vec theta = (Vec(3) << 0.7, 0.0, -1.3).finished();
  double want = 0.0;
  for (int h = 0; h < 3; ++h) want += -0.5 * theta[h] - std::log(2.0);
  CHECK(lgm::log_hyper_prior(m, theta) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("model without hypers has zero log prior") {
  Mat obs(2, 1);
  obs << 1.0, 2.0;
  stack::StackedData s = stack::stack_areal(obs, Mat::Ones(2, 1));
  s.blocks.pop_back();  // intercept-only model
  const lgm::LatentModel m = lgm::assemble(s, {lgm::EffectSpec::intercept("rf", 1)},
                                           {lgm::FamilySpec::gaussian_fixed(2.0)});
  CHECK(m.n_hyper() == 0);
  CHECK(lgm::log_hyper_prior(m, Vec()) == 0.0);
  const Mat q = Mat(lgm::prior_precision(m, Vec()));
  CHECK(q(0, 0) == m.diffuse_precision);
}

TEST_CASE("estimated gaussian precision appends an observation hyper") {
  Mat obs(2, 1);
  obs << 0.5, 1.5;
  stack::StackedData s = stack::stack_areal(obs, Mat::Ones(2, 1));
  s.blocks.pop_back();
  const lgm::LatentModel m =
      lgm::assemble(s, {lgm::EffectSpec::intercept("rf", 1)},
                    {lgm::FamilySpec::gaussian_estimated(2.0, 0.1)});
  REQUIRE(m.n_hyper() == 1);
  CHECK(m.hypers[0].name == "obs1.log_prec");

  // PC-exponential prior on the observation sd, theta = log precision.
  const double lambda = -std::log(0.1) / 2.0;
  const double th = 0.4;
  const double sd = std::exp(-0.5 * th);
  CHECK(lgm::log_hyper_prior(m, (Vec(1) << th).finished()) ==
        doctest::Approx(std::log(lambda) - lambda * sd + std::log(0.5 * sd))
            .epsilon(1e-12));
  // Normalizes to one over theta.
  const auto total = oracle::quadrature_1d(
      [&](double t) {
        const double s2 = std::exp(-0.5 * t);
        return std::log(lambda) - lambda * s2 + std::log(0.5 * s2);
      },
      -25.0, 60.0, 400001);
  CHECK(std::exp(total.log_normalizer) == doctest::Approx(1.0).epsilon(1e-6));
}
