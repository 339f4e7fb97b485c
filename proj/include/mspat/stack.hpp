#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mspat/geometry.hpp"
#include "mspat/types.hpp"

namespace mspat::stack {

// Explicit missing marker; a response cell is either a value or absent.
using Cell = std::optional<double>;

enum class Family { poisson, gaussian };

struct ProjectorBlock {
  std::string name;
  SpMat matrix;  // rows() == stack rows, cols() == latent dim of the effect
};

// Descriptor used when building stacks: a mesh effect projects through the
// barycentric matrix, a covariate contributes one column of per-row values,
// an intercept a column of ones.
struct EffectBlockDesc {
  enum Kind { mesh, covariate, intercept };
  std::string name;
  Kind kind = intercept;
  Vec values;  // covariate only
};

struct TagRange {
  std::string tag;
  int begin = 0;  // [begin, end)
  int end = 0;
};

struct StackedData {
  std::vector<std::vector<Cell>> response;  // R rows x K columns
  Vec exposure;                             // length R
  std::vector<ProjectorBlock> blocks;
  std::vector<TagRange> row_tags;

  int rows() const { return static_cast<int>(response.size()); }
  int cols() const { return response.empty() ? 0 : static_cast<int>(response[0].size()); }

  const ProjectorBlock* find_block(const std::string& name) const;
  TagRange tag_range(const std::string& tag) const;  // throws on unknown tag

  // Registers an additional name for an existing block's matrix, so several
  // model effects can route through the same selector.
  void alias_block(const std::string& existing, const std::string& alias);
  void add_block(std::string name, SpMat matrix);
};

// Areal layout: response[(d)*n + i, d] = obs(i, d), exposure is the
// column-major flatten of the expected counts. Emits an intercept selector
// block "rf" (R x D, one-hot by column) and per-column area selectors
// "sel.1" .. "sel.D" (R x n).
StackedData stack_areal(const Mat& obs, const Mat& expected);

// One geostatistical stack: n response rows in column `column` (0-based) of a
// K-column response. `values` may contain missing cells (prediction stacks).
StackedData stack_geostat(const std::vector<Cell>& values, int column, int n_columns,
                          const geom::Projector& A,
                          const std::vector<EffectBlockDesc>& effects,
                          const std::string& tag);

// LGCP pseudo-data layout: N_v zero rows weighted by the dual-cell areas,
// then one row of ones per observed point with zero exposure. Mesh effects
// project through [I_Nv ; A_points].
StackedData stack_point_pattern(const Vec& mesh_weights, const geom::Projector& A_points,
                                int pattern, int n_patterns,
                                const std::vector<EffectBlockDesc>& effects,
                                const std::string& tag);

StackedData join_stacks(const std::vector<StackedData>& stacks);

}  // namespace mspat::stack
