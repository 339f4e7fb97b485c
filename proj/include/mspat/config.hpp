#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mspat/errors.hpp"

namespace mspat::config {

// Flat INI-style text: [section] headers, key = value pairs, '#' comments.
struct Ini {
  struct Entry {
    std::string key, value;
    long line = 0;
  };
  struct Section {
    std::string name;
    long line = 0;
    std::vector<Entry> entries;

    const std::string* find(const std::string& key) const;
    std::string require(const std::string& key) const;  // parse_error if absent
  };
  std::vector<Section> sections;

  const Section* find(const std::string& name) const;
};

Ini parse_ini(std::istream& in);
Ini parse_ini_file(const std::string& path);

enum class DataKind { areal, geostat, lgcp };

struct FamilyConfig {
  bool poisson = true;
  bool fixed_precision = false;  // gaussian only
  double precision = 1.0;
  double sigma0 = 1.0;
  double p_sigma = 0.05;
};

struct EffectConfig {
  std::string name;
  std::string kind;      // intercept | covariate | besag | iid | spde | copy
  int column = 0;        // 1-based response column routing; 0 = every column
  std::string target;    // copy
  std::string covariate;  // observations column holding the covariate values
  // spde PC prior
  double r0 = 1.0, p_r = 0.5, pc_sigma0 = 1.0, pc_p_sigma = 0.5;
  // generative truth for simulate
  std::optional<double> value;  // intercept / covariate coefficient
  std::optional<double> tau;    // besag / iid
  std::optional<double> range, sigma;  // spde
};

struct MeshConfig {
  double max_edge_inner = 0.0;
  double max_edge_outer = 0.0;
  double cutoff = 0.0;
  double offset = 0.0;
};

struct FitOptionsConfig {
  std::uint64_t seed = 20240101;
  int threads = 0;  // 0 = hardware concurrency
};

struct ModelConfig {
  DataKind kind = DataKind::areal;
  std::string observations, expected, graph, boundary, points;
  std::vector<FamilyConfig> families;
  std::vector<EffectConfig> effects;
  MeshConfig mesh;
  FitOptionsConfig fit;
  std::string output_dir = ".";
  std::string base_dir;  // directory of the config file, for relative paths

  const EffectConfig* find_effect(const std::string& name) const;
};

// Parses and cross-validates a model config. Reference errors (unknown kinds,
// dangling copy targets, bad numbers) surface as parse_error.
ModelConfig load(const std::string& path);

// Resolves a possibly relative data path against the config file location.
std::string resolve(const ModelConfig& cfg, const std::string& path);

}  // namespace mspat::config
