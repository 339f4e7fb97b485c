#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mspat/errors.hpp"
#include "mspat/types.hpp"

namespace mspat::areal {

// Symmetric neighbourhood structure over n areas, no self-loops.
struct AdjacencyGraph {
  int n = 0;
  std::vector<std::vector<int>> neighbors;
};

void validate_graph(const AdjacencyGraph& g);

// File format: line 1 is n; then per area "index #neighbors nbr1 ... nbrk",
// 1-based in the file.
AdjacencyGraph read_graph(std::istream& in);
AdjacencyGraph read_graph_file(const std::string& path);

// Q = tau (D - W); improper, rank n - #components.
SpMat besag_precision(const AdjacencyGraph& g, double tau);

SpMat iid_precision(int n, double tau);

// Component label per area, labels 0..k-1.
std::vector<int> connected_components(const AdjacencyGraph& g);

}  // namespace mspat::areal
