// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// Dense voxelized signed distance field of a closed triangle mesh.
// Sign convention: negative inside, positive outside.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "slpose/bvh.hpp"
#include "slpose/core.hpp"
#include "slpose/mesh.hpp"
#include "slpose/parallel.hpp"

namespace slpose {

struct SdfGrid {
  Vec3 origin = Vec3::Zero();  // position of node (0,0,0), mm
  double voxel = 1.0;          // edge length, mm
  std::array<int, 3> dims = {0, 0, 0};
  std::vector<float> values;   // mm, signed; x-fastest

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  float at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 node_position(int i, int j, int k) const {
    return origin + voxel * Vec3(i, j, k);
  }
  Vec3 max_corner() const {
    return origin + voxel * Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1);
  }
};

/// Default resolution: bounding-box diagonal / 150, clamped to [0.25, 2] mm.
inline double default_voxel_size(const TriangleMesh& mesh) {
  Vec3 lo, hi;
  mesh.bounding_box(lo, hi);
  return std::clamp((hi - lo).norm() / 150.0, 0.25, 2.0);
}

/// Voxelize the signed distance of a watertight mesh. Distance magnitude
/// comes from exact closest-triangle queries; the sign from ray-parity
/// voting over three fixed near-axis directions (majority of three), which
/// tolerates single grazing hits on edges.
inline SdfGrid build_sdf(const TriangleMesh& mesh, double voxel,
                         int padding_voxels = 5) {
  if (!(voxel > 0)) throw InvalidInput("build_sdf: voxel size must be > 0");
  if (padding_voxels < 1) throw InvalidInput("build_sdf: padding must be >= 1");
  auto open = mesh.open_edges();
  if (!open.empty()) {
    std::ostringstream ss;
    ss << "build_sdf: mesh is not watertight; " << open.size()
       << " open edge(s):";
    for (std::size_t i = 0; i < std::min<std::size_t>(open.size(), 8); ++i)
      ss << " (" << open[i].first << "," << open[i].second << ")";
    throw DataError(ss.str());
  }

  Vec3 lo, hi;
  mesh.bounding_box(lo, hi);
  SdfGrid grid;
  grid.voxel = voxel;
  // Align so the bounding-box center sits at a cell center; symmetric
  // models then get a symmetric interpolation stencil at their center.
  const Vec3 center = 0.5 * (lo + hi);
  for (int a = 0; a < 3; ++a) {
    const double below = center[a] - (lo[a] - padding_voxels * voxel);
    const int n_lo = static_cast<int>(std::ceil(below / voxel - 0.5));
    grid.origin[a] = center[a] - (n_lo + 0.5) * voxel;
    const double above = (hi[a] + padding_voxels * voxel) - grid.origin[a];
    grid.dims[a] = n_lo + 1 + static_cast<int>(std::ceil(above / voxel)) + 1;
  }
  grid.values.resize(static_cast<std::size_t>(grid.dims[0]) * grid.dims[1] *
                     grid.dims[2]);

  Bvh bvh(mesh);
  // Slightly off-axis so rays cannot run inside axis-aligned faces.
  const Vec3 ray_dirs[3] = {Vec3(1.0, 0.03173, 0.01459).normalized(),
                            Vec3(0.02593, 1.0, 0.03701).normalized(),
                            Vec3(0.01931, 0.02447, 1.0).normalized()};

  const std::size_t per_slab =
      static_cast<std::size_t>(grid.dims[0]) * grid.dims[1];
  parallel_for(0, static_cast<std::size_t>(grid.dims[2]), [&](std::size_t k) {
    for (int j = 0; j < grid.dims[1]; ++j) {
      for (int i = 0; i < grid.dims[0]; ++i) {
        const Vec3 p = grid.node_position(i, j, static_cast<int>(k));
        const double dist = std::sqrt(bvh.closest_point(p).dist_sq);
        int inside_votes = 0;
        for (const auto& d : ray_dirs)
          if (bvh.count_crossings(p, d) % 2 == 1) ++inside_votes;
        grid.values[k * per_slab + static_cast<std::size_t>(j) * grid.dims[0] +
                    i] = static_cast<float>(inside_votes >= 2 ? -dist : dist);
      }
    }
  });
  return grid;
}

namespace detail {

struct CellCoords {
  int i0, j0, k0;
  double fx, fy, fz;  // fractions in [0,1]
};

inline CellCoords locate_clamped(const SdfGrid& g, const Vec3& p) {
  CellCoords c;
  const Vec3 q = (p - g.origin) / g.voxel;
  auto clamp_axis = [&](double v, int dim, int& i, double& f) {
    if (dim < 2) {
      i = 0;
      f = 0;
      return;
    }
    v = std::min(std::max(v, 0.0), static_cast<double>(dim - 1));
    i = std::min(static_cast<int>(v), dim - 2);
    f = v - i;
  };
  clamp_axis(q.x(), g.dims[0], c.i0, c.fx);
  clamp_axis(q.y(), g.dims[1], c.j0, c.fy);
  clamp_axis(q.z(), g.dims[2], c.k0, c.fz);
  return c;
}

inline double trilinear_value(const SdfGrid& g, const CellCoords& c) {
  auto v = [&](int di, int dj, int dk) {
    return static_cast<double>(g.at(c.i0 + di, c.j0 + dj, c.k0 + dk));
  };
  const double c00 = v(0, 0, 0) * (1 - c.fx) + v(1, 0, 0) * c.fx;
  const double c10 = v(0, 1, 0) * (1 - c.fx) + v(1, 1, 0) * c.fx;
  const double c01 = v(0, 0, 1) * (1 - c.fx) + v(1, 0, 1) * c.fx;
  const double c11 = v(0, 1, 1) * (1 - c.fx) + v(1, 1, 1) * c.fx;
  const double c0 = c00 * (1 - c.fy) + c10 * c.fy;
  const double c1 = c01 * (1 - c.fy) + c11 * c.fy;
  return c0 * (1 - c.fz) + c1 * c.fz;
}

/// Exact gradient of the trilinear interpolant within the cell.
inline Vec3 trilinear_gradient(const SdfGrid& g, const CellCoords& c) {
  auto v = [&](int di, int dj, int dk) {
    return static_cast<double>(g.at(c.i0 + di, c.j0 + dj, c.k0 + dk));
  };
  const double v000 = v(0, 0, 0), v100 = v(1, 0, 0), v010 = v(0, 1, 0),
               v110 = v(1, 1, 0), v001 = v(0, 0, 1), v101 = v(1, 0, 1),
               v011 = v(0, 1, 1), v111 = v(1, 1, 1);
  const double fx = c.fx, fy = c.fy, fz = c.fz;
  const double gx = (v100 - v000) * (1 - fy) * (1 - fz) +
                    (v110 - v010) * fy * (1 - fz) +
                    (v101 - v001) * (1 - fy) * fz + (v111 - v011) * fy * fz;
  const double gy = (v010 - v000) * (1 - fx) * (1 - fz) +
                    (v110 - v100) * fx * (1 - fz) +
                    (v011 - v001) * (1 - fx) * fz + (v111 - v101) * fx * fz;
  const double gz = (v001 - v000) * (1 - fx) * (1 - fy) +
                    (v101 - v100) * fx * (1 - fy) +
                    (v011 - v010) * (1 - fx) * fy + (v111 - v110) * fx * fy;
  return Vec3(gx, gy, gz) / g.voxel;
}

}  // namespace detail

/// Interpolated signed distance. Outside the grid box the value grows as
/// (distance to box) + (boundary value), so far points still feel a pull
/// toward the model during optimization.
inline double sample(const SdfGrid& grid, const Vec3& p) {
  const Vec3 lo = grid.origin;
  const Vec3 hi = grid.max_corner();
  const Vec3 q = p.cwiseMax(lo).cwiseMin(hi);
  const double outside = (p - q).norm();
  const double inside_val = detail::trilinear_value(grid, detail::locate_clamped(grid, q));
  return inside_val + outside;
}

/// Gradient of sample(). Inside the grid this is the exact derivative of
/// the trilinear interpolant; outside it combines the unit direction away
/// from the box with the boundary interpolant's tangential slope.
inline Vec3 gradient(const SdfGrid& grid, const Vec3& p) {
  const Vec3 lo = grid.origin;
  const Vec3 hi = grid.max_corner();
  const Vec3 q = p.cwiseMax(lo).cwiseMin(hi);
  Vec3 g = detail::trilinear_gradient(grid, detail::locate_clamped(grid, q));
  const double outside = (p - q).norm();
  if (outside > 1e-12) {
    for (int a = 0; a < 3; ++a)
      if (p[a] < lo[a] || p[a] > hi[a]) g[a] = 0.0;  // clamped axis
    g += (p - q) / outside;
  }
  return g;
}

// ── Grid cache ───────────────────────────────────────────────────────────

inline constexpr char kSdfMagic[8] = {'S', 'L', 'S', 'D', 'F', 'G', '0', '1'};

inline void save_grid(const std::string& path, const SdfGrid& grid) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("save_grid: cannot open " + path);
  f.write(kSdfMagic, 8);
  std::int32_t dims[3] = {grid.dims[0], grid.dims[1], grid.dims[2]};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  double voxel = grid.voxel;
  f.write(reinterpret_cast<const char*>(&voxel), sizeof(voxel));
  double origin[3] = {grid.origin.x(), grid.origin.y(), grid.origin.z()};
  f.write(reinterpret_cast<const char*>(origin), sizeof(origin));
  f.write(reinterpret_cast<const char*>(grid.values.data()),
          static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
  if (!f) throw DataError("save_grid: write failed for " + path);
}

inline SdfGrid load_grid(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("load_grid: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kSdfMagic, 8) != 0)
    throw DataError("load_grid: bad magic in " + path);
  SdfGrid grid;
  std::int32_t dims[3];
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  grid.dims = {dims[0], dims[1], dims[2]};
  f.read(reinterpret_cast<char*>(&grid.voxel), sizeof(double));
  double origin[3];
  f.read(reinterpret_cast<char*>(origin), sizeof(origin));
  grid.origin = Vec3(origin[0], origin[1], origin[2]);
  if (dims[0] < 2 || dims[1] < 2 || dims[2] < 2 || !(grid.voxel > 0))
    throw DataError("load_grid: corrupt header in " + path);
  const std::size_t n =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  grid.values.resize(n);
  f.read(reinterpret_cast<char*>(grid.values.data()),
         static_cast<std::streamsize>(n * sizeof(float)));
  if (!f) throw DataError("load_grid: truncated data in " + path);
  return grid;
}

}  // namespace slpose
