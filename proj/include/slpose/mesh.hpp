// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// Triangle meshes: STL/OBJ loading, watertightness checking, procedural
// primitives used by the benchmark scene generator.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "slpose/core.hpp"
#include "slpose/geometry.hpp"

namespace slpose {

struct TriangleMesh {
  std::vector<Vec3> vertices;                 // mm, object frame
  std::vector<std::array<int, 3>> triangles;  // CCW = outward

  Vec3 triangle_normal(int t) const {
    const auto& tri = triangles[t];
    Vec3 n = (vertices[tri[1]] - vertices[tri[0]])
                 .cross(vertices[tri[2]] - vertices[tri[0]]);
    double len = n.norm();
    return len > 0 ? Vec3(n / len) : Vec3(0, 0, 1);
  }

  double triangle_area(int t) const {
    const auto& tri = triangles[t];
    return 0.5 * (vertices[tri[1]] - vertices[tri[0]])
                     .cross(vertices[tri[2]] - vertices[tri[0]])
                     .norm();
  }

  void bounding_box(Vec3& lo, Vec3& hi) const {
    lo = Vec3::Constant(std::numeric_limits<double>::max());
    hi = Vec3::Constant(std::numeric_limits<double>::lowest());
    for (const auto& v : vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& v : vertices) c += v;
    return vertices.empty() ? c : Vec3(c / double(vertices.size()));
  }

  /// Drop zero-area triangles and out-of-range indices.
  void clean(double area_eps = 1e-9) {
    std::vector<std::array<int, 3>> kept;
    kept.reserve(triangles.size());
    const int n = static_cast<int>(vertices.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      const auto& tri = triangles[t];
      if (tri[0] < 0 || tri[1] < 0 || tri[2] < 0 || tri[0] >= n ||
          tri[1] >= n || tri[2] >= n)
        continue;
      if (triangle_area(static_cast<int>(t)) <= area_eps) continue;
      kept.push_back(tri);
    }
    triangles = std::move(kept);
  }

  /// Undirected edges not shared by exactly two oppositely-wound triangles.
  std::vector<std::pair<int, int>> open_edges() const {
    std::map<std::pair<int, int>, int> count;  // (min,max) -> directed sum
    for (const auto& tri : triangles) {
      for (int e = 0; e < 3; ++e) {
        int a = tri[e], b = tri[(e + 1) % 3];
        auto key = std::minmax(a, b);
        count[{key.first, key.second}] += (a < b) ? 1 : -1;
      }
    }
    std::vector<std::pair<int, int>> open;
    for (const auto& [edge, c] : count)
      if (c != 0) open.push_back(edge);
    return open;
  }

  bool watertight() const { return open_edges().empty(); }
};

/// Area-weighted barycentric surface samples; returns points and normals.
inline void sample_surface(const TriangleMesh& mesh, int count,
                           std::uint64_t seed, std::vector<Vec3>& points,
                           std::vector<Vec3>& normals) {
  std::vector<double> cdf(mesh.triangles.size());
  double total = 0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(static_cast<int>(t));
    cdf[t] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  points.clear();
  normals.clear();
  for (int i = 0; i < count; ++i) {
    double r = uni(rng) * total;
    auto it = std::lower_bound(cdf.begin(), cdf.end(), r);
    int t = static_cast<int>(it - cdf.begin());
    if (t >= static_cast<int>(mesh.triangles.size()))
      t = static_cast<int>(mesh.triangles.size()) - 1;
    double u = uni(rng), v = uni(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const auto& tri = mesh.triangles[t];
    points.push_back(mesh.vertices[tri[0]] * (1 - u - v) +
                     mesh.vertices[tri[1]] * u + mesh.vertices[tri[2]] * v);
    normals.push_back(mesh.triangle_normal(t));
  }
}

// ── File I/O ─────────────────────────────────────────────────────────────

inline void weld_vertices(TriangleMesh& mesh);

inline TriangleMesh load_stl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_stl: cannot open " + path);
  // Sniff: ASCII files start with "solid" and contain "facet" early on.
  char head[512] = {};
  f.read(head, sizeof(head));
  std::size_t got = static_cast<std::size_t>(f.gcount());
  std::string prefix(head, got);
  bool ascii = prefix.rfind("solid", 0) == 0 &&
               prefix.find("facet") != std::string::npos;
  TriangleMesh mesh;
  auto add_vertex = [&](const Vec3& v) {
    mesh.vertices.push_back(v);
    return static_cast<int>(mesh.vertices.size()) - 1;
  };
  if (ascii) {
    f.clear();
    f.seekg(0);
    std::string tok;
    std::vector<Vec3> cur;
    while (f >> tok) {
      if (tok == "vertex") {
        Vec3 v;
        f >> v.x() >> v.y() >> v.z();
        cur.push_back(v);
        if (cur.size() == 3) {
          int a = add_vertex(cur[0]), b = add_vertex(cur[1]),
              c = add_vertex(cur[2]);
          mesh.triangles.push_back({a, b, c});
          cur.clear();
        }
      }
    }
  } else {
    f.clear();
    f.seekg(80);
    std::uint32_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 4);
    if (!f) throw DataError("load_stl: truncated binary STL " + path);
    for (std::uint32_t i = 0; i < n; ++i) {
      float rec[12];
      f.read(reinterpret_cast<char*>(rec), 48);
      char attr[2];
      f.read(attr, 2);
      if (!f) throw DataError("load_stl: truncated binary STL " + path);
      int a = add_vertex(Vec3(rec[3], rec[4], rec[5]));
      int b = add_vertex(Vec3(rec[6], rec[7], rec[8]));
      int c = add_vertex(Vec3(rec[9], rec[10], rec[11]));
      mesh.triangles.push_back({a, b, c});
    }
  }
  if (mesh.triangles.empty()) throw DataError("load_stl: no triangles in " + path);
  weld_vertices(mesh);
  mesh.clean();
  return mesh;
}

/// Merge exactly-coincident vertices (STL stores them per-facet).
inline void weld_vertices(TriangleMesh& mesh) {
  std::map<std::array<double, 3>, int> seen;
  std::vector<Vec3> verts;
  std::vector<int> remap(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    std::array<double, 3> key{v.x(), v.y(), v.z()};
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen[key] = static_cast<int>(verts.size());
      remap[i] = static_cast<int>(verts.size());
      verts.push_back(v);
    } else {
      remap[i] = it->second;
    }
  }
  for (auto& tri : mesh.triangles)
    tri = {remap[tri[0]], remap[tri[1]], remap[tri[2]]};
  mesh.vertices = std::move(verts);
}

inline void save_stl(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_stl: cannot open " + path);
  char header[80] = {};
  std::snprintf(header, sizeof(header), "slpose binary STL");
  f.write(header, 80);
  std::uint32_t n = static_cast<std::uint32_t>(mesh.triangles.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    Vec3 nrm = mesh.triangle_normal(static_cast<int>(t));
    float rec[12] = {
        float(nrm.x()), float(nrm.y()), float(nrm.z()), 0, 0, 0, 0, 0, 0, 0,
        0, 0};
    for (int v = 0; v < 3; ++v) {
      const Vec3& p = mesh.vertices[mesh.triangles[t][v]];
      rec[3 + 3 * v + 0] = float(p.x());
      rec[3 + 3 * v + 1] = float(p.y());
      rec[3 + 3 * v + 2] = float(p.z());
    }
    f.write(reinterpret_cast<const char*>(rec), 48);
    char attr[2] = {};
    f.write(attr, 2);
  }
}

/// OBJ with triangular faces only (v/f records; vt/vn indices ignored).
inline TriangleMesh load_obj(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("load_obj: cannot open " + path);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string fv;
      while (ss >> fv) {
        // "i", "i/j", "i/j/k", "i//k" — the leading index is the vertex.
        int i = std::stoi(fv.substr(0, fv.find('/')));
        if (i < 0) i = static_cast<int>(mesh.vertices.size()) + i + 1;
        idx.push_back(i - 1);
      }
      if (idx.size() != 3)
        throw DataError("load_obj: non-triangle face in " + path);
      mesh.triangles.push_back({idx[0], idx[1], idx[2]});
    }
  }
  if (mesh.triangles.empty()) throw DataError("load_obj: no faces in " + path);
  mesh.clean();
  return mesh;
}

inline TriangleMesh load_mesh(const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == "stl") return load_stl(path);
  if (ext == "obj") return load_obj(path);
  throw DataError("load_mesh: unsupported extension ." + ext + " for " + path);
}

// ── Procedural primitives ────────────────────────────────────────────────

inline TriangleMesh make_box(const Vec3& extents, const Vec3& center = Vec3::Zero()) {
  TriangleMesh m;
  const Vec3 h = extents * 0.5;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back(center + Vec3((i & 1) ? h.x() : -h.x(),
                                       (i & 2) ? h.y() : -h.y(),
                                       (i & 4) ? h.z() : -h.z()));
  const int F[12][3] = {{0, 2, 3}, {0, 3, 1},   // -z
                        {4, 5, 7}, {4, 7, 6},   // +z
                        {0, 1, 5}, {0, 5, 4},   // -y
                        {2, 6, 7}, {2, 7, 3},   // +y
                        {0, 4, 6}, {0, 6, 2},   // -x
                        {1, 3, 7}, {1, 7, 5}};  // +x
  for (auto& f : F) m.triangles.push_back({f[0], f[1], f[2]});
  return m;
}

inline TriangleMesh make_icosphere(double radius, int subdivisions = 2,
                                   const Vec3& center = Vec3::Zero()) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0},
                         {1, -phi, 0}, {0, -1, phi},  {0, 1, phi},
                         {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},
                         {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = mid.find({key.first, key.second});
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized() * v[a].norm());
      int idx = static_cast<int>(v.size()) - 1;
      mid[{key.first, key.second}] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(f.size() * 4);
    for (auto& tri : f) {
      int ab = midpoint(tri[0], tri[1]);
      int bc = midpoint(tri[1], tri[2]);
      int ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  TriangleMesh m;
  for (auto& p : v) m.vertices.push_back(center + p.normalized() * radius);
  m.triangles = std::move(f);
  return m;
}

namespace detail {

/// Ear-clipping triangulation of a simple CCW polygon (indices into pts).
inline std::vector<std::array<int, 3>> triangulate_polygon(
    const std::vector<Vec2>& pts) {
  const int n = static_cast<int>(pts.size());
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  auto cross2 = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) -
           (a.y() - o.y()) * (b.x() - o.x());
  };
  auto inside = [&](const Vec2& p, const Vec2& a, const Vec2& b,
                    const Vec2& c) {
    double d1 = cross2(a, b, p), d2 = cross2(b, c, p), d3 = cross2(c, a, p);
    bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
    bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
    return !(has_neg && has_pos);
  };
  std::vector<std::array<int, 3>> tris;
  int guard = 0;
  while (idx.size() > 3 && guard++ < 10000) {
    bool clipped = false;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      int ia = idx[(i + idx.size() - 1) % idx.size()];
      int ib = idx[i];
      int ic = idx[(i + 1) % idx.size()];
      if (cross2(pts[ia], pts[ib], pts[ic]) <= 1e-12) continue;  // reflex
      bool ear = true;
      for (int j : idx) {
        if (j == ia || j == ib || j == ic) continue;
        if (inside(pts[j], pts[ia], pts[ib], pts[ic])) {
          ear = false;
          break;
        }
      }
      if (!ear) continue;
      tris.push_back({ia, ib, ic});
      idx.erase(idx.begin() + static_cast<long>(i));
      clipped = true;
      break;
    }
    if (!clipped) throw DataError("triangulate_polygon: not a simple polygon");
  }
  if (idx.size() == 3) tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

}  // namespace detail

/// Extrude a simple CCW polygon (xy plane, mm) symmetrically along z.
inline TriangleMesh make_extrusion(const std::vector<Vec2>& polygon,
                                   double depth) {
  const int n = static_cast<int>(polygon.size());
  TriangleMesh m;
  const double hz = depth * 0.5;
  for (const auto& p : polygon) m.vertices.push_back(Vec3(p.x(), p.y(), -hz));
  for (const auto& p : polygon) m.vertices.push_back(Vec3(p.x(), p.y(), +hz));
  auto caps = detail::triangulate_polygon(polygon);
  for (auto& t : caps) {
    m.triangles.push_back({t[0], t[2], t[1]});              // -z cap, flipped
    m.triangles.push_back({n + t[0], n + t[1], n + t[2]});  // +z cap
  }
  for (int i = 0; i < n; ++i) {
    int j = (i + 1) % n;
    m.triangles.push_back({i, j, n + j});
    m.triangles.push_back({i, n + j, n + i});
  }
  return m;
}

/// Flat-faced L-profile solid with no rotational symmetry.
inline TriangleMesh make_l_bracket(double long_arm = 60, double short_arm = 40,
                                   double arm_width = 16, double depth = 20) {
  std::vector<Vec2> poly = {{0, 0},
                            {long_arm, 0},
                            {long_arm, arm_width},
                            {arm_width, arm_width},
                            {arm_width, short_arm},
                            {0, short_arm}};
  TriangleMesh m = make_extrusion(poly, depth);
  Vec3 c = m.centroid();
  for (auto& v : m.vertices) v -= c;
  return m;
}

/// Two plates meeting at 90 degrees; the inner corner is the groove.
inline TriangleMesh make_v_groove(double plate = 50, double thickness = 6,
                                  double depth = 60) {
  const double s = plate / std::sqrt(2.0);
  const double t = thickness * std::sqrt(2.0);
  std::vector<Vec2> poly = {{0, 0},      {s, s},      {s, s + t},
                            {0, t},      {-s, s + t}, {-s, s}};
  TriangleMesh m = make_extrusion(poly, depth);
  Vec3 c = m.centroid();
  for (auto& v : m.vertices) v -= c;
  return m;
}

/// W-profile extrusion (concave grooves on top), like a press-formed part.
inline TriangleMesh make_zigzag(double pitch = 18, int teeth = 3,
                                double tooth_height = 14,
                                double base_thickness = 5, double depth = 30) {
  std::vector<Vec2> poly;
  const double w = pitch * teeth;
  poly.push_back({0, 0});
  poly.push_back({w, 0});
  poly.push_back({w, base_thickness});
  for (int i = teeth; i-- > 0;) {
    double x1 = i * pitch, xm = x1 + pitch / 2;
    poly.push_back({x1 + pitch, base_thickness});
    poly.push_back({xm, base_thickness + tooth_height});
  }
  poly.push_back({0, base_thickness});
  // drop the duplicated corner at (w, base_thickness)
  poly.erase(poly.begin() + 2);
  TriangleMesh m = make_extrusion(poly, depth);
  Vec3 c = m.centroid();
  for (auto& v : m.vertices) v -= c;
  return m;
}

}  // namespace slpose
