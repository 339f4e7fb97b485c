#pragma once

#include <Eigen/Sparse>
#include <array>
#include <iosfwd>
#include <vector>

#include "mspat/errors.hpp"

namespace mspat::geom {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
double dist(Point a, Point b);

using Ring = std::vector<Point>;

// Simple polygon with optional holes. Outer ring stored counter-clockwise.
struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

// Triangulation of the (extended) domain. boundary_flags marks vertices that
// lie in the outer extension, outside the domain polygon proper.
struct Mesh {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<char> boundary_flags;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
};

// Sparse barycentric-weight matrix (n_locations x N_v). Rows of locations that
// fall outside every triangle are zero and flagged in out_of_domain.
struct Projector {
  Eigen::SparseMatrix<double> matrix;
  std::vector<char> out_of_domain;
};

double signed_area(const Ring& ring);
double polygon_area(const Polygon& p);
bool point_in_ring(const Ring& ring, Point p);
bool point_in_polygon(const Polygon& poly, Point p);
void validate_polygon(const Polygon& p);

// Area of the intersection of a convex ring with a simple polygon (holes
// subtracted). The convex ring is the clip region.
double intersection_area(const Polygon& subject, const Ring& convex_clip);

Mesh build_mesh(const Polygon& boundary, const std::vector<Point>& seed_points,
                double max_edge_inner, double max_edge_outer, double cutoff,
                double offset_outer);

Projector projector_matrix(const Mesh& mesh, const std::vector<Point>& locations);

// Voronoi-cell areas clipped to the domain, one weight per mesh vertex.
Eigen::VectorXd dual_weights(const Mesh& mesh, const Polygon& domain);

// Plain-text ring format: one "x y" pair per line, rings separated by blank
// lines, first ring is the outer boundary.
Polygon read_rings(std::istream& in);
Polygon read_rings_file(const std::string& path);

void write_mesh(const Mesh& mesh, std::ostream& out);
Mesh read_mesh(std::istream& in);

}  // namespace mspat::geom
