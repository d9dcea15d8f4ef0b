// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// Axis-aligned BVH over mesh triangles: ray casting for the renderer and
// the SDF sign test, closest-point queries for SDF build and ICP.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "slpose/core.hpp"
#include "slpose/mesh.hpp"

namespace slpose {

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  int triangle = -1;
  bool valid() const { return triangle >= 0; }
};

struct ClosestPoint {
  Vec3 point = Vec3::Zero();
  double dist_sq = std::numeric_limits<double>::infinity();
  int triangle = -1;
};

class Bvh {
 public:
  Bvh() = default;

  explicit Bvh(const TriangleMesh& mesh) : mesh_(&mesh) {
    const int n = static_cast<int>(mesh.triangles.size());
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.resize(n);
    for (int t = 0; t < n; ++t) {
      const auto& tri = mesh.triangles[t];
      centroids_[t] = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] +
                       mesh.vertices[tri[2]]) /
                      3.0;
    }
    nodes_.reserve(static_cast<std::size_t>(2 * n));
    build(0, n);
  }

  /// Nearest intersection with t in (t_min, t_max).
  RayHit raycast(const Vec3& origin, const Vec3& dir, double t_min = 1e-6,
                 double t_max = std::numeric_limits<double>::infinity()) const {
    RayHit best;
    best.t = t_max;
    if (!nodes_.empty()) raycast_node(0, origin, dir, t_min, best);
    if (!best.valid()) best.t = std::numeric_limits<double>::infinity();
    return best;
  }

  /// True if anything intersects with t in (t_min, t_max); early-outs.
  bool occluded(const Vec3& origin, const Vec3& dir, double t_min,
                double t_max) const {
    if (nodes_.empty()) return false;
    return occluded_node(0, origin, dir, t_min, t_max);
  }

  ClosestPoint closest_point(const Vec3& p) const {
    ClosestPoint best;
    if (!nodes_.empty()) closest_node(0, p, best);
    return best;
  }

  /// Parity of intersections along +dir (used by the SDF sign test).
  int count_crossings(const Vec3& origin, const Vec3& dir) const {
    int count = 0;
    if (!nodes_.empty()) count_node(0, origin, dir, count);
    return count;
  }

  const TriangleMesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    Vec3 lo, hi;
    int left = -1;    // child index; -1 for leaf
    int right = -1;
    int first = 0;    // leaf: range into order_
    int count = 0;
  };

  static constexpr int kLeafSize = 4;

  int build(int first, int count) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::max());
    node.hi = Vec3::Constant(std::numeric_limits<double>::lowest());
    for (int i = first; i < first + count; ++i) {
      const auto& tri = mesh_->triangles[order_[i]];
      for (int v = 0; v < 3; ++v) {
        node.lo = node.lo.cwiseMin(mesh_->vertices[tri[v]]);
        node.hi = node.hi.cwiseMax(mesh_->vertices[tri[v]]);
      }
    }
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (count <= kLeafSize) {
      nodes_[self].first = first;
      nodes_[self].count = count;
      return self;
    }
    Vec3 ext = node.hi - node.lo;
    int axis = 0;
    if (ext.y() > ext.x()) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    int mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid,
                     order_.begin() + first + count, [&](int a, int b) {
                       return centroids_[a][axis] < centroids_[b][axis];
                     });
    int l = build(first, mid - first);
    int r = build(mid, first + count - mid);
    nodes_[self].left = l;
    nodes_[self].right = r;
    return self;
  }

  bool hit_box(const Node& n, const Vec3& o, const Vec3& d, double t_min,
               double t_max) const {
    for (int a = 0; a < 3; ++a) {
      const double inv = 1.0 / d[a];
      double t0 = (n.lo[a] - o[a]) * inv;
      double t1 = (n.hi[a] - o[a]) * inv;
      if (inv < 0) std::swap(t0, t1);
      t_min = std::max(t_min, t0);
      t_max = std::min(t_max, t1);
      if (t_max < t_min) return false;
    }
    return true;
  }

  /// Moller-Trumbore, two-sided.
  bool hit_triangle(int t, const Vec3& o, const Vec3& d, double t_min,
                    double t_max, double& t_out) const {
    const auto& tri = mesh_->triangles[t];
    const Vec3& v0 = mesh_->vertices[tri[0]];
    const Vec3 e1 = mesh_->vertices[tri[1]] - v0;
    const Vec3 e2 = mesh_->vertices[tri[2]] - v0;
    const Vec3 pv = d.cross(e2);
    const double det = e1.dot(pv);
    if (std::abs(det) < 1e-14) return false;
    const double inv_det = 1.0 / det;
    const Vec3 tv = o - v0;
    const double u = tv.dot(pv) * inv_det;
    if (u < 0.0 || u > 1.0) return false;
    const Vec3 qv = tv.cross(e1);
    const double v = d.dot(qv) * inv_det;
    if (v < 0.0 || u + v > 1.0) return false;
    const double th = e2.dot(qv) * inv_det;
    if (th <= t_min || th >= t_max) return false;
    t_out = th;
    return true;
  }

  void raycast_node(int ni, const Vec3& o, const Vec3& d, double t_min,
                    RayHit& best) const {
    const Node& n = nodes_[ni];
    if (!hit_box(n, o, d, t_min, best.t)) return;
    if (n.left < 0) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        double t;
        if (hit_triangle(order_[i], o, d, t_min, best.t, t)) {
          best.t = t;
          best.triangle = order_[i];
        }
      }
      return;
    }
    raycast_node(n.left, o, d, t_min, best);
    raycast_node(n.right, o, d, t_min, best);
  }

  bool occluded_node(int ni, const Vec3& o, const Vec3& d, double t_min,
                     double t_max) const {
    const Node& n = nodes_[ni];
    if (!hit_box(n, o, d, t_min, t_max)) return false;
    if (n.left < 0) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        double t;
        if (hit_triangle(order_[i], o, d, t_min, t_max, t)) return true;
      }
      return false;
    }
    return occluded_node(n.left, o, d, t_min, t_max) ||
           occluded_node(n.right, o, d, t_min, t_max);
  }

  void count_node(int ni, const Vec3& o, const Vec3& d, int& count) const {
    const Node& n = nodes_[ni];
    if (!hit_box(n, o, d, 1e-9, std::numeric_limits<double>::max())) return;
    if (n.left < 0) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        double t;
        if (hit_triangle(order_[i], o, d, 1e-9,
                         std::numeric_limits<double>::max(), t))
          ++count;
      }
      return;
    }
    count_node(n.left, o, d, count);
    count_node(n.right, o, d, count);
  }

  static double box_dist_sq(const Node& n, const Vec3& p) {
    double d = 0;
    for (int a = 0; a < 3; ++a) {
      double e = std::max({n.lo[a] - p[a], 0.0, p[a] - n.hi[a]});
      d += e * e;
    }
    return d;
  }

  /// Ericson-style closest point on a triangle.
  static Vec3 closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                  const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return a;
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return b;
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return c;
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
      return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
  }

  void closest_node(int ni, const Vec3& p, ClosestPoint& best) const {
    const Node& n = nodes_[ni];
    if (box_dist_sq(n, p) >= best.dist_sq) return;
    if (n.left < 0) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        const auto& tri = mesh_->triangles[order_[i]];
        Vec3 q = closest_on_triangle(p, mesh_->vertices[tri[0]],
                                     mesh_->vertices[tri[1]],
                                     mesh_->vertices[tri[2]]);
        double d = (q - p).squaredNorm();
        if (d < best.dist_sq) {
          best.dist_sq = d;
          best.point = q;
          best.triangle = order_[i];
        }
      }
      return;
    }
    // visit nearer child first
    double dl = box_dist_sq(nodes_[n.left], p);
    double dr = box_dist_sq(nodes_[n.right], p);
    if (dl < dr) {
      closest_node(n.left, p, best);
      closest_node(n.right, p, best);
    } else {
      closest_node(n.right, p, best);
      closest_node(n.left, p, best);
    }
  }

  const TriangleMesh* mesh_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Vec3> centroids_;
};

}  // namespace slpose
