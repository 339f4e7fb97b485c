#include "mspat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mspat::geom {

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double signed_area(const Ring& ring) {
  double s = 0.0;
  const size_t n = ring.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& p = ring[i];
    const Point& q = ring[(i + 1) % n];
    s += p.x * q.y - q.x * p.y;
  }
  return 0.5 * s;
}

double polygon_area(const Polygon& p) {
  double a = std::abs(signed_area(p.outer));
  for (const Ring& h : p.holes) a -= std::abs(signed_area(h));
  return a;
}

bool point_in_ring(const Ring& ring, Point p) {
  // Crossing number; points on the edge count as inside.
  bool inside = false;
  const size_t n = ring.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = ring[j];
    const Point& b = ring[i];
    const double cr = cross(b - a, p - a);
    if (std::abs(cr) < 1e-12 * (1.0 + dist(a, b)) && dot(p - a, p - b) <= 1e-12)
      return true;  // on segment
    if ((b.y > p.y) != (a.y > p.y)) {
      const double xint = b.x + (p.y - b.y) * (a.x - b.x) / (a.y - b.y);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

bool point_in_polygon(const Polygon& poly, Point p) {
  if (!point_in_ring(poly.outer, p)) return false;
  for (const Ring& h : poly.holes)
    if (point_in_ring(h, p)) return false;
  return true;
}

namespace {

bool segments_intersect(Point a, Point b, Point c, Point d) {
  auto orient = [](Point p, Point q, Point r) {
    const double v = cross(q - p, r - p);
    return (v > 0) - (v < 0);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d);
  const int o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 != o2 && o3 != o4;
}

bool ring_is_simple(const Ring& ring) {
  const size_t n = ring.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // Skip adjacent segments (they share an endpoint).
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]))
        return false;
    }
  }
  return true;
}

Ring ccw(Ring r) {
  if (signed_area(r) < 0) std::reverse(r.begin(), r.end());
  return r;
}

// Sutherland-Hodgman step: keep the part of `subject` left of the directed
// line a -> b.
Ring clip_left(const Ring& subject, Point a, Point b) {
  Ring out;
  const size_t n = subject.size();
  if (n == 0) return out;
  const Point d = b - a;
  auto side = [&](Point p) { return cross(d, p - a); };
  for (size_t i = 0; i < n; ++i) {
    const Point cur = subject[i];
    const Point nxt = subject[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0) out.push_back(cur);
    if ((sc > 0 && sn < 0) || (sc < 0 && sn > 0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

Ring clip_by_convex(Ring subject, const Ring& convex_clip) {
  const size_t m = convex_clip.size();
  double scale = 0;
  for (const Point& p : convex_clip)
    scale = std::max({scale, std::abs(p.x), std::abs(p.y)});
  const double eps = 1e-12 * (1.0 + scale);
  for (size_t i = 0; i < m && !subject.empty(); ++i) {
    const Point a = convex_clip[i], b = convex_clip[(i + 1) % m];
    // A near-zero-length edge defines no half-plane, only rounding noise.
    if (dist(a, b) <= eps) continue;
    subject = clip_left(subject, a, b);
  }
  return subject;
}

Ring convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](Point a, Point b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](Point a, Point b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  const size_t n = pts.size();
  if (n < 3) throw invalid_geometry("convex hull needs >= 3 distinct points");
  std::vector<Point> h(2 * n);
  size_t k = 0;
  for (size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) k--;
    h[k++] = pts[i];
  }
  for (size_t i = n - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) k--;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

// Outward miter offset of a CCW convex ring.
Ring offset_convex(const Ring& hull, double d) {
  const size_t n = hull.size();
  Ring out(n);
  for (size_t i = 0; i < n; ++i) {
    const Point prev = hull[(i + n - 1) % n];
    const Point cur = hull[i];
    const Point next = hull[(i + 1) % n];
    // Offset lines of the two incident edges.
    auto normal = [](Point a, Point b) {
      Point e = b - a;
      const double len = std::hypot(e.x, e.y);
      return Point{e.y / len, -e.x / len};
    };
    const Point n1 = normal(prev, cur), n2 = normal(cur, next);
    const Point a1 = prev + d * n1, d1 = cur - prev;
    const Point a2 = cur + d * n2, d2 = next - cur;
    const double den = cross(d1, d2);
    if (std::abs(den) < 1e-14) {
      out[i] = cur + d * n1;  // collinear edges
    } else {
      const double t = cross(a2 - a1, d2) / den;
      out[i] = a1 + t * d1;
    }
  }
  return out;
}

struct Box {
  double xmin, ymin, xmax, ymax;
};

Box bounding_box(const Ring& ring) {
  Box b{std::numeric_limits<double>::max(), std::numeric_limits<double>::max(),
        std::numeric_limits<double>::lowest(), std::numeric_limits<double>::lowest()};
  for (const Point& p : ring) {
    b.xmin = std::min(b.xmin, p.x);
    b.ymin = std::min(b.ymin, p.y);
    b.xmax = std::max(b.xmax, p.x);
    b.ymax = std::max(b.ymax, p.y);
  }
  return b;
}

// Incremental Bowyer-Watson triangulation. Brute-force cavity search; fine at
// the mesh sizes this engine targets.
class Delaunay {
 public:
  Delaunay(const Box& b) {
    const double w = b.xmax - b.xmin, h = b.ymax - b.ymin;
    const double m = 10.0 * std::max({w, h, 1e-9});
    const double cx = 0.5 * (b.xmin + b.xmax), cy = 0.5 * (b.ymin + b.ymax);
    verts_ = {{cx - 2 * m, cy - m}, {cx + 2 * m, cy - m}, {cx, cy + 2 * m}};
    tris_.push_back({0, 1, 2});
    scale_ = std::max(w, h) + 1.0;
  }

  // Inserts p, or returns the index of an existing vertex within merge_tol.
  int insert(Point p, double merge_tol) {
    for (size_t v = 3; v < verts_.size(); ++v)
      if (dist(verts_[v], p) <= merge_tol) return static_cast<int>(v);

    std::vector<size_t> bad;
    for (size_t t = 0; t < tris_.size(); ++t)
      if (in_circumcircle(tris_[t], p)) bad.push_back(t);
    if (bad.empty()) return -1;  // outside super triangle; caller bug

    // Cavity boundary: edges of bad triangles used exactly once.
    struct Edge {
      int a, b;
    };
    std::vector<Edge> edges;
    for (size_t t : bad) {
      const auto& tr = tris_[t];
      for (int e = 0; e < 3; ++e) edges.push_back({tr[e], tr[(e + 1) % 3]});
    }
    std::vector<char> keep(edges.size(), 1);
    for (size_t i = 0; i < edges.size(); ++i)
      for (size_t j = i + 1; j < edges.size(); ++j)
        if (edges[i].a == edges[j].b && edges[i].b == edges[j].a)
          keep[i] = keep[j] = 0;

    std::sort(bad.rbegin(), bad.rend());
    for (size_t t : bad) {
      tris_[t] = tris_.back();
      tris_.pop_back();
    }
    const int pi = static_cast<int>(verts_.size());
    verts_.push_back(p);
    for (size_t i = 0; i < edges.size(); ++i)
      if (keep[i]) tris_.push_back({edges[i].a, edges[i].b, pi});
    return pi;
  }

  const std::vector<Point>& vertices() const { return verts_; }

  Mesh extract() const {
    Mesh m;
    std::vector<int> remap(verts_.size(), -1);
    for (size_t v = 3; v < verts_.size(); ++v) {
      remap[v] = static_cast<int>(m.vertices.size());
      m.vertices.push_back(verts_[v]);
    }
    for (const auto& t : tris_) {
      if (t[0] < 3 || t[1] < 3 || t[2] < 3) continue;
      std::array<int, 3> tr{remap[t[0]], remap[t[1]], remap[t[2]]};
      const Point a = m.vertices[tr[0]], b = m.vertices[tr[1]], c = m.vertices[tr[2]];
      if (cross(b - a, c - a) < 0) std::swap(tr[1], tr[2]);
      m.triangles.push_back(tr);
    }
    return m;
  }

 private:
  bool in_circumcircle(const std::array<int, 3>& t, Point p) const {
    Point a = verts_[t[0]], b = verts_[t[1]], c = verts_[t[2]];
    if (cross(b - a, c - a) < 0) std::swap(b, c);
    const double ax = a.x - p.x, ay = a.y - p.y;
    const double bx = b.x - p.x, by = b.y - p.y;
    const double cx = c.x - p.x, cy = c.y - p.y;
    const double det = (ax * ax + ay * ay) * (bx * cy - cx * by) -
                       (bx * bx + by * by) * (ax * cy - cx * ay) +
                       (cx * cx + cy * cy) * (ax * by - bx * ay);
    return det > 1e-12 * scale_ * scale_;
  }

  std::vector<Point> verts_;
  std::vector<std::array<int, 3>> tris_;
  double scale_;
};

void densify_into(const Ring& ring, double max_edge, std::vector<Point>& out) {
  const size_t n = ring.size();
  for (size_t i = 0; i < n; ++i) {
    const Point a = ring[i], b = ring[(i + 1) % n];
    const double len = dist(a, b);
    const int segs = std::max(1, static_cast<int>(std::ceil(len / max_edge)));
    for (int s = 0; s < segs; ++s) out.push_back(a + (double(s) / segs) * (b - a));
  }
}

double longest_edge(const Mesh& m, const std::array<int, 3>& t, int* which = nullptr) {
  double best = -1;
  for (int e = 0; e < 3; ++e) {
    const double d = dist(m.vertices[t[e]], m.vertices[t[(e + 1) % 3]]);
    if (d > best) {
      best = d;
      if (which) *which = e;
    }
  }
  return best;
}

}  // namespace

void validate_polygon(const Polygon& p) {
  auto check_ring = [](const Ring& r, const char* what) {
    if (r.size() < 3)
      throw invalid_geometry(std::string(what) + " has fewer than 3 vertices");
    if (std::abs(signed_area(r)) < 1e-14)
      throw invalid_geometry(std::string(what) + " has zero area");
    if (!ring_is_simple(r))
      throw invalid_geometry(std::string(what) + " is self-intersecting");
  };
  check_ring(p.outer, "outer ring");
  for (const Ring& h : p.holes) check_ring(h, "hole ring");
}

double intersection_area(const Polygon& subject, const Ring& convex_clip) {
  const Ring clip = ccw(convex_clip);
  double a = std::max(0.0, signed_area(clip_by_convex(ccw(subject.outer), clip)));
  for (const Ring& h : subject.holes)
    a -= std::max(0.0, signed_area(clip_by_convex(ccw(h), clip)));
  return std::max(0.0, a);
}

Mesh build_mesh(const Polygon& boundary, const std::vector<Point>& seed_points,
                double max_edge_inner, double max_edge_outer, double cutoff,
                double offset_outer) {
  validate_polygon(boundary);
  if (max_edge_inner <= 0) throw invalid_geometry("max_edge_inner must be > 0");
  if (cutoff < 0) throw invalid_geometry("cutoff must be >= 0");
  if (max_edge_outer <= 0) max_edge_outer = max_edge_inner;

  const Polygon domain{ccw(boundary.outer), boundary.holes};

  std::vector<Point> pts;
  densify_into(domain.outer, max_edge_inner, pts);
  for (const Ring& h : domain.holes) densify_into(h, max_edge_inner, pts);

  // Seeds merge with any vertex closer than cutoff; exact duplicates always merge.
  const double merge_eps = 1e-12 * (1.0 + std::abs(domain.outer[0].x));
  std::vector<Point> seeds_kept;
  for (const Point& s : seed_points) {
    bool merged = false;
    const double tol = std::max(cutoff, merge_eps);
    for (const Point& q : pts)
      if (dist(q, s) <= tol) {
        merged = true;
        break;
      }
    for (const Point& q : seeds_kept)
      if (dist(q, s) <= tol) {
        merged = true;
        break;
      }
    if (!merged) seeds_kept.push_back(s);
  }
  pts.insert(pts.end(), seeds_kept.begin(), seeds_kept.end());
  const size_t n_fixed = pts.size();

  // Outer extension ring: miter-offset convex hull of the boundary.
  if (offset_outer > 0) {
    Ring hull = convex_hull(pts);
    Ring ext = offset_convex(hull, offset_outer);
    densify_into(ext, max_edge_outer, pts);
  }

  // Structured interior fill, lightly jittered so regular grids do not produce
  // cocircular quadruples in the incircle test.
  Box bb = bounding_box(domain.outer);
  const double h = max_edge_inner / std::sqrt(2.0);
  size_t cell = 0;
  for (double y = bb.ymin + h; y < bb.ymax - 0.5 * h; y += h) {
    for (double x = bb.xmin + h; x < bb.xmax - 0.5 * h; x += h, ++cell) {
      const double jx = 1e-4 * h * std::sin(12.9898 * cell);
      const double jy = 1e-4 * h * std::sin(78.233 * cell);
      const Point p{x + jx, y + jy};
      if (!point_in_polygon(domain, p)) continue;
      bool clear = true;
      for (size_t i = 0; i < n_fixed && clear; ++i)
        if (dist(pts[i], p) < 0.45 * h) clear = false;
      if (clear) pts.push_back(p);
    }
  }

  Box all = bounding_box(pts);
  Delaunay dt(all);
  for (const Point& p : pts) dt.insert(p, merge_eps);

  // Longest-edge refinement of triangles inside the domain.
  for (int round = 0; round < 60; ++round) {
    Mesh cur = dt.extract();
    std::vector<Point> mids;
    for (const auto& t : cur.triangles) {
      const Point cen = (1.0 / 3.0) * (cur.vertices[t[0]] + cur.vertices[t[1]] +
                                       cur.vertices[t[2]]);
      if (!point_in_polygon(domain, cen)) continue;
      int e = 0;
      if (longest_edge(cur, t, &e) > max_edge_inner) {
        const Point a = cur.vertices[t[e]], b = cur.vertices[t[(e + 1) % 3]];
        mids.push_back(0.5 * (a + b));
      }
    }
    if (mids.empty()) break;
    for (const Point& m : mids) dt.insert(m, 1e-9 * max_edge_inner);
  }

  Mesh mesh = dt.extract();
  mesh.boundary_flags.resize(mesh.vertices.size());
  for (size_t v = 0; v < mesh.vertices.size(); ++v)
    mesh.boundary_flags[v] = point_in_polygon(domain, mesh.vertices[v]) ? 0 : 1;
  return mesh;
}

Projector projector_matrix(const Mesh& mesh, const std::vector<Point>& locations) {
  const int n = static_cast<int>(locations.size());
  Projector pr;
  pr.matrix.resize(n, mesh.n_vertices());
  pr.out_of_domain.assign(n, 0);
  std::vector<Eigen::Triplet<double>> trips;

  for (int i = 0; i < n; ++i) {
    const Point p = locations[i];
    bool found = false;
    for (const auto& t : mesh.triangles) {
      const Point a = mesh.vertices[t[0]], b = mesh.vertices[t[1]],
                  c = mesh.vertices[t[2]];
      const double det = cross(b - a, c - a);
      if (det <= 0) continue;
      double w1 = cross(b - p, c - p) / det;
      double w2 = cross(c - p, a - p) / det;
      double w3 = 1.0 - w1 - w2;
      const double tol = -1e-9;
      if (w1 < tol || w2 < tol || w3 < tol) continue;
      double w[3] = {std::max(w1, 0.0), std::max(w2, 0.0), std::max(w3, 0.0)};
      double sum = w[0] + w[1] + w[2];
      for (int k = 0; k < 3; ++k) {
        const double val = w[k] / sum;
        if (val > 1e-14) trips.emplace_back(i, t[k], val);
      }
      found = true;
      break;
    }
    if (!found) pr.out_of_domain[i] = 1;
  }
  pr.matrix.setFromTriplets(trips.begin(), trips.end());
  return pr;
}

Eigen::VectorXd dual_weights(const Mesh& mesh, const Polygon& domain) {
  validate_polygon(domain);
  const int n = mesh.n_vertices();
  Box bb = bounding_box(domain.outer);
  const double w = bb.xmax - bb.xmin, h = bb.ymax - bb.ymin;
  const double cx = 0.5 * (bb.xmin + bb.xmax), cy = 0.5 * (bb.ymin + bb.ymax);
  // Clip box at 2x the domain extent; unbounded Voronoi cells get truncated
  // here before polygon intersection.
  const Ring box = {{cx - w, cy - h}, {cx + w, cy - h}, {cx + w, cy + h}, {cx - w, cy + h}};

  Eigen::VectorXd weights(n);
  std::vector<int> order(n);
  for (int k = 0; k < n; ++k) {
    const Point vk = mesh.vertices[k];
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return dist(mesh.vertices[a], vk) < dist(mesh.vertices[b], vk);
    });
    Ring cell = box;
    for (int j : order) {
      if (j == k || cell.empty()) continue;
      const Point vj = mesh.vertices[j];
      const double dj = dist(vj, vk);
      if (dj < 1e-14) continue;
      // A bisector at distance dj/2 cannot cut a cell already inside radius dj/2.
      double rad = 0;
      for (const Point& q : cell) rad = std::max(rad, dist(q, vk));
      if (0.5 * dj > rad) break;
      const Point mid = 0.5 * (vk + vj);
      const Point dir{-(vj.y - vk.y), vj.x - vk.x};  // keep vk's side (left)
      cell = clip_left(cell, mid, mid + dir);
    }
    weights[k] = cell.empty() ? 0.0 : intersection_area(domain, cell);
  }
  return weights;
}

Polygon read_rings(std::istream& in) {
  Polygon poly;
  Ring cur;
  std::string line;
  long line_no = 0;
  auto flush = [&]() {
    if (cur.empty()) return;
    if (poly.outer.empty())
      poly.outer = cur;
    else
      poly.holes.push_back(cur);
    cur.clear();
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::string trimmed = line;
    trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
    if (trimmed.empty() || trimmed[0] == '#') {
      flush();
      continue;
    }
    std::istringstream ss(trimmed);
    double x, y;
    if (!(ss >> x >> y)) throw parse_error("expected 'x y' vertex pair", line_no);
    cur.push_back({x, y});
  }
  flush();
  if (poly.outer.empty()) throw parse_error("boundary file contains no vertices");
  validate_polygon(poly);
  if (signed_area(poly.outer) < 0) std::reverse(poly.outer.begin(), poly.outer.end());
  return poly;
}

Polygon read_rings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open boundary file: " + path);
  return read_rings(in);
}

void write_mesh(const Mesh& mesh, std::ostream& out) {
  out << "mesh " << mesh.vertices.size() << " " << mesh.triangles.size() << "\n";
  out.precision(17);
  for (size_t v = 0; v < mesh.vertices.size(); ++v)
    out << mesh.vertices[v].x << " " << mesh.vertices[v].y << " "
        << int(mesh.boundary_flags.empty() ? 0 : mesh.boundary_flags[v]) << "\n";
  for (const auto& t : mesh.triangles) out << t[0] << " " << t[1] << " " << t[2] << "\n";
}

Mesh read_mesh(std::istream& in) {
  std::string tag;
  size_t nv = 0, nt = 0;
  if (!(in >> tag >> nv >> nt) || tag != "mesh")
    throw parse_error("bad mesh header, expected 'mesh <nv> <nt>'");
  Mesh m;
  m.vertices.resize(nv);
  m.boundary_flags.resize(nv);
  for (size_t v = 0; v < nv; ++v) {
    int flag;
    if (!(in >> m.vertices[v].x >> m.vertices[v].y >> flag))
      throw parse_error("bad mesh vertex record");
    m.boundary_flags[v] = static_cast<char>(flag);
  }
  m.triangles.resize(nt);
  for (size_t t = 0; t < nt; ++t) {
    auto& tr = m.triangles[t];
    if (!(in >> tr[0] >> tr[1] >> tr[2])) throw parse_error("bad mesh triangle record");
    for (int k = 0; k < 3; ++k)
      if (tr[k] < 0 || tr[k] >= static_cast<int>(nv))
        throw parse_error("triangle index out of range");
  }
  return m;
}

}  // namespace mspat::geom
