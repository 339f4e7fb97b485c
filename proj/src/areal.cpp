#include "mspat/areal.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mspat::areal {

void validate_graph(const AdjacencyGraph& g) {
  if (g.n <= 0) throw parse_error("graph must have at least one area");
  if (static_cast<int>(g.neighbors.size()) != g.n)
    throw parse_error("graph neighbor list count does not match n");
  for (int i = 0; i < g.n; ++i) {
    for (int j : g.neighbors[i]) {
      if (j < 0 || j >= g.n)
        throw parse_error("neighbor index out of range for area " + std::to_string(i + 1));
      if (j == i) throw parse_error("self-loop at area " + std::to_string(i + 1));
      const auto& back = g.neighbors[j];
      if (std::find(back.begin(), back.end(), i) == back.end())
        throw parse_error("asymmetric adjacency: " + std::to_string(i + 1) + " -> " +
                          std::to_string(j + 1) + " has no reverse edge");
    }
  }
}

AdjacencyGraph read_graph(std::istream& in) {
  std::string line;
  long line_no = 0;
  auto next_line = [&]() -> std::string {
    while (std::getline(in, line)) {
      ++line_no;
      std::string t = line;
      t.erase(0, t.find_first_not_of(" \t\r"));
      if (!t.empty() && t[0] != '#') return t;
    }
    return {};
  };

  const std::string header = next_line();
  if (header.empty()) throw parse_error("empty graph file");
  AdjacencyGraph g;
  {
    std::istringstream ss(header);
    if (!(ss >> g.n) || g.n <= 0) throw parse_error("bad area count", line_no);
  }
  g.neighbors.resize(g.n);
  std::vector<char> seen(g.n, 0);
  for (int r = 0; r < g.n; ++r) {
    const std::string rec = next_line();
    if (rec.empty()) throw parse_error("unexpected end of graph file", line_no);
    std::istringstream ss(rec);
    int idx = 0, count = 0;
    if (!(ss >> idx >> count) || idx < 1 || idx > g.n || count < 0)
      throw parse_error("bad area record", line_no);
    if (seen[idx - 1]) throw parse_error("duplicate area record", line_no);
    seen[idx - 1] = 1;
    for (int c = 0; c < count; ++c) {
      int nb;
      if (!(ss >> nb)) throw parse_error("missing neighbor index", line_no);
      if (nb < 1 || nb > g.n) throw parse_error("neighbor index out of range", line_no);
      g.neighbors[idx - 1].push_back(nb - 1);
    }
    std::sort(g.neighbors[idx - 1].begin(), g.neighbors[idx - 1].end());
  }
  validate_graph(g);
  return g;
}

AdjacencyGraph read_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open graph file: " + path);
  return read_graph(in);
}

SpMat besag_precision(const AdjacencyGraph& g, double tau) {
  if (tau <= 0) throw data_error("besag tau must be positive");
  std::vector<Triplet> t;
  for (int i = 0; i < g.n; ++i) {
    t.emplace_back(i, i, tau * static_cast<double>(g.neighbors[i].size()));
    for (int j : g.neighbors[i]) t.emplace_back(i, j, -tau);
  }
  SpMat q(g.n, g.n);
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

SpMat iid_precision(int n, double tau) {
  if (tau <= 0) throw data_error("iid tau must be positive");
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) t.emplace_back(i, i, tau);
  SpMat q(n, n);
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

std::vector<int> connected_components(const AdjacencyGraph& g) {
  std::vector<int> label(g.n, -1);
  int next = 0;
  std::vector<int> stack;
  for (int s = 0; s < g.n; ++s) {
    if (label[s] >= 0) continue;
    stack.push_back(s);
    label[s] = next;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : g.neighbors[v])
        if (label[w] < 0) {
          label[w] = next;
          stack.push_back(w);
        }
    }
    ++next;
  }
  return label;
}

}  // namespace mspat::areal
