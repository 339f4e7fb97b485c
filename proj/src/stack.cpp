#include "mspat/stack.hpp"

#include <algorithm>

#include "mspat/errors.hpp"

namespace mspat::stack {

namespace {

void check_one_hot(const StackedData& s) {
  for (const auto& row : s.response) {
    int filled = 0;
    for (const Cell& c : row)
      if (c.has_value()) ++filled;
    if (filled > 1) throw structural_error("response row has more than one value");
  }
}

SpMat build_effect_block(const EffectBlockDesc& d, int rows, const SpMat* mesh_proj) {
  std::vector<Triplet> t;
  switch (d.kind) {
    case EffectBlockDesc::mesh:
      if (!mesh_proj) throw structural_error("mesh effect in a stack without a projector");
      return *mesh_proj;
    case EffectBlockDesc::intercept: {
      for (int r = 0; r < rows; ++r) t.emplace_back(r, 0, 1.0);
      break;
    }
    case EffectBlockDesc::covariate: {
      if (d.values.size() != rows)
        throw structural_error("covariate '" + d.name + "' length does not match rows");
      for (int r = 0; r < rows; ++r)
        if (d.values[r] != 0.0) t.emplace_back(r, 0, d.values[r]);
      break;
    }
  }
  SpMat m(rows, 1);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

const ProjectorBlock* StackedData::find_block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

TagRange StackedData::tag_range(const std::string& tag) const {
  for (const auto& t : row_tags)
    if (t.tag == tag) return t;
  throw structural_error("unknown row tag: " + tag);
}

void StackedData::alias_block(const std::string& existing, const std::string& alias) {
  const ProjectorBlock* b = find_block(existing);
  if (!b) throw structural_error("cannot alias unknown block: " + existing);
  if (find_block(alias)) throw structural_error("block name already used: " + alias);
  blocks.push_back({alias, b->matrix});
}

void StackedData::add_block(std::string name, SpMat matrix) {
  if (matrix.rows() != rows())
    throw structural_error("block '" + name + "' row count does not match stack");
  if (find_block(name)) throw structural_error("block name already used: " + name);
  blocks.push_back({std::move(name), std::move(matrix)});
}

StackedData stack_areal(const Mat& obs, const Mat& expected) {
  if (obs.rows() != expected.rows() || obs.cols() != expected.cols())
    throw data_error("observed and expected matrices must have the same shape");
  const int n = static_cast<int>(obs.rows());
  const int D = static_cast<int>(obs.cols());
  if ((expected.array() <= 0.0).any())
    throw data_error("expected counts must be positive");

  StackedData s;
  const int R = n * D;
  s.response.assign(R, std::vector<Cell>(D, std::nullopt));
  s.exposure.resize(R);
  for (int d = 0; d < D; ++d)
    for (int i = 0; i < n; ++i) {
      s.response[d * n + i][d] = obs(i, d);
      s.exposure[d * n + i] = expected(i, d);
    }

  std::vector<Triplet> rf;
  for (int d = 0; d < D; ++d)
    for (int i = 0; i < n; ++i) rf.emplace_back(d * n + i, d, 1.0);
  SpMat rf_m(R, D);
  rf_m.setFromTriplets(rf.begin(), rf.end());
  s.blocks.push_back({"rf", std::move(rf_m)});

  for (int d = 0; d < D; ++d) {
    std::vector<Triplet> sel;
    for (int i = 0; i < n; ++i) sel.emplace_back(d * n + i, i, 1.0);
    SpMat m(R, n);
    m.setFromTriplets(sel.begin(), sel.end());
    s.blocks.push_back({"sel." + std::to_string(d + 1), std::move(m)});
  }
  s.row_tags.push_back({"areal", 0, R});
  return s;
}

StackedData stack_geostat(const std::vector<Cell>& values, int column, int n_columns,
                          const geom::Projector& A,
                          const std::vector<EffectBlockDesc>& effects,
                          const std::string& tag) {
  const int n = static_cast<int>(values.size());
  if (column < 0 || column >= n_columns)
    throw structural_error("stack column index out of range");
  if (A.matrix.rows() != n)
    throw structural_error("projector row count does not match value count");

  StackedData s;
  s.response.assign(n, std::vector<Cell>(n_columns, std::nullopt));
  for (int i = 0; i < n; ++i) s.response[i][column] = values[i];
  s.exposure = Vec::Ones(n);

  for (const auto& d : effects)
    s.blocks.push_back({d.name, build_effect_block(d, n, &A.matrix)});
  s.row_tags.push_back({tag, 0, n});
  check_one_hot(s);
  return s;
}

StackedData stack_point_pattern(const Vec& mesh_weights, const geom::Projector& A_points,
                                int pattern, int n_patterns,
                                const std::vector<EffectBlockDesc>& effects,
                                const std::string& tag) {
  const int nv = static_cast<int>(mesh_weights.size());
  const int np = static_cast<int>(A_points.matrix.rows());
  if (pattern < 0 || pattern >= n_patterns)
    throw structural_error("point pattern index out of range");
  if (A_points.matrix.cols() != nv)
    throw structural_error("point projector column count does not match mesh weights");

  const int R = nv + np;
  StackedData s;
  s.response.assign(R, std::vector<Cell>(n_patterns, std::nullopt));
  for (int r = 0; r < nv; ++r) s.response[r][pattern] = 0.0;
  for (int r = nv; r < R; ++r) s.response[r][pattern] = 1.0;
  s.exposure = Vec::Zero(R);
  s.exposure.head(nv) = mesh_weights;

  // imat/lmat split: identity over mesh vertices stacked on the point rows.
  std::vector<Triplet> t;
  for (int v = 0; v < nv; ++v) t.emplace_back(v, v, 1.0);
  for (int k = 0; k < A_points.matrix.outerSize(); ++k)
    for (SpMat::InnerIterator it(A_points.matrix, k); it; ++it)
      t.emplace_back(nv + static_cast<int>(it.row()), static_cast<int>(it.col()),
                     it.value());
  SpMat proj(R, nv);
  proj.setFromTriplets(t.begin(), t.end());

  for (const auto& d : effects) {
    if (d.kind == EffectBlockDesc::mesh)
      s.blocks.push_back({d.name, proj});
    else
      s.blocks.push_back({d.name, build_effect_block(d, R, nullptr)});
  }
  s.row_tags.push_back({tag, 0, R});
  return s;
}

StackedData join_stacks(const std::vector<StackedData>& stacks) {
  if (stacks.empty()) throw structural_error("join_stacks needs at least one stack");
  const int K = stacks[0].cols();
  int R = 0;
  for (const auto& s : stacks) {
    if (s.cols() != K)
      throw structural_error("stacks have different response column counts");
    R += s.rows();
  }

  // Union of block names in first-seen order; dimensions must agree.
  std::vector<std::pair<std::string, int>> names;
  for (const auto& s : stacks)
    for (const auto& b : s.blocks) {
      auto it = std::find_if(names.begin(), names.end(),
                             [&](const auto& p) { return p.first == b.name; });
      if (it == names.end())
        names.emplace_back(b.name, static_cast<int>(b.matrix.cols()));
      else if (it->second != b.matrix.cols())
        throw structural_error("effect '" + b.name +
                               "' has inconsistent latent dimension across stacks");
    }

  StackedData out;
  out.response.reserve(R);
  out.exposure.resize(R);
  int offset = 0;
  for (const auto& s : stacks) {
    for (const auto& row : s.response) out.response.push_back(row);
    out.exposure.segment(offset, s.rows()) = s.exposure;
    for (const auto& t : s.row_tags)
      out.row_tags.push_back({t.tag, t.begin + offset, t.end + offset});
    offset += s.rows();
  }

  for (const auto& [name, dim] : names) {
    std::vector<Triplet> t;
    int roff = 0;
    for (const auto& s : stacks) {
      if (const ProjectorBlock* b = s.find_block(name)) {
        for (int k = 0; k < b->matrix.outerSize(); ++k)
          for (SpMat::InnerIterator it(b->matrix, k); it; ++it)
            t.emplace_back(roff + static_cast<int>(it.row()),
                           static_cast<int>(it.col()), it.value());
      }
      roff += s.rows();  // stacks lacking the block contribute zero rows
    }
    SpMat m(R, dim);
    m.setFromTriplets(t.begin(), t.end());
    out.blocks.push_back({name, std::move(m)});
  }
  check_one_hot(out);
  return out;
}

}  // namespace mspat::stack
