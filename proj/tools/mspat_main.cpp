#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mspat/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multivariate spatial latent Gaussian models"};
  app.require_subcommand(1);
  app.fallthrough();

  mspat::cli::GlobalOptions opts;
  app.add_option("--output-dir", opts.output_dir, "Directory for output files");
  app.add_option("--threads", opts.threads, "Worker threads (0 = auto)");
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Random seed override");
  app.add_flag("--verbose", opts.verbose, "Print model details");

  std::string boundary, config_path;
  double max_edge_inner = 0.0, max_edge_outer = 0.0, cutoff = 0.0, offset = 0.0;

  CLI::App* mesh = app.add_subcommand("mesh", "Triangulate a boundary polygon");
  mesh->add_option("boundary", boundary, "Boundary rings file")->required();
  mesh->add_option("--max-edge", max_edge_inner, "Interior edge length bound")
      ->required();
  mesh->add_option("--max-edge-outer", max_edge_outer,
                   "Extension edge length bound (default: interior bound)");
  mesh->add_option("--cutoff", cutoff, "Minimum vertex separation");
  mesh->add_option("--offset", offset, "Outer extension width");

  CLI::App* fit = app.add_subcommand("fit", "Fit the model described by a config");
  fit->add_option("config", config_path, "Model config file")->required();

  CLI::App* sim =
      app.add_subcommand("simulate", "Draw synthetic data from a config with truth values");
  sim->add_option("config", config_path, "Model config file")->required();

  CLI::App* ver = app.add_subcommand("version", "Print the version string");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) opts.seed = seed;

  if (mesh->parsed())
    return mspat::cli::cmd_mesh(boundary, max_edge_inner,
                                max_edge_outer > 0 ? max_edge_outer : max_edge_inner,
                                cutoff, offset, opts);
  if (fit->parsed()) return mspat::cli::cmd_fit(config_path, opts);
  if (sim->parsed()) return mspat::cli::cmd_simulate(config_path, opts);
  if (ver->parsed()) {
    std::cout << mspat::cli::version_string() << "\n";
    return 0;
  }
  return 0;
}
