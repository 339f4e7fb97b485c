#pragma once

#include <random>

#include "mspat/geometry.hpp"

namespace mspat::testutil {

inline geom::Polygon rectangle(double x0, double y0, double x1, double y1) {
  return {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, {}};
}

inline geom::Polygon unit_square() { return rectangle(0, 0, 1, 1); }

// Structured right-triangle mesh over [x0, x0+nx*h] x [y0, y0+ny*h].
inline geom::Mesh grid_mesh(double x0, double y0, int nx, int ny, double h) {
  geom::Mesh m;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) m.vertices.push_back({x0 + i * h, y0 + j * h});
  auto id = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  m.boundary_flags.assign(m.vertices.size(), 0);
  return m;
}

}  // namespace mspat::testutil
