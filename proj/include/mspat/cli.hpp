#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mspat/config.hpp"

namespace mspat::cli {

// Command-line overrides applied on top of the config file.
struct GlobalOptions {
  std::string output_dir;  // empty: use config / current directory
  int threads = 0;         // 0: config value, then hardware concurrency
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

// All commands return a process exit code: 0 ok, 2 I/O failure,
// 3 config/parse failure, 4 numerical failure.
int cmd_mesh(const std::string& boundary_path, double max_edge_inner,
             double max_edge_outer, double cutoff, double offset,
             const GlobalOptions& opts);

int cmd_fit(const std::string& config_path, const GlobalOptions& opts);

int cmd_simulate(const std::string& config_path, const GlobalOptions& opts);

const char* version_string();

}  // namespace mspat::cli
