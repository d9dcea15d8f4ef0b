// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// Per-pixel depth uncertainty for pattern-projected stereo: disparity
// variance from the Fisher information of the photometric SSD error,
// propagated to depth through the disparity-depth Jacobian. The same code
// path scores real captures and rendered predictions.

#pragma once

#include <cmath>
#include <optional>

#include "slpose/core.hpp"
#include "slpose/geometry.hpp"
#include "slpose/image.hpp"
#include "slpose/parallel.hpp"

namespace slpose {

inline constexpr double kGradEnergyEps = 1e-12;

/// Sum over an odd patch of squared x-gradients (central differences of
/// bilinear lookups; centers may be fractional). nullopt when the stencil
/// leaves the image.
inline std::optional<double> patch_gradient_energy_x(
    const IntensityImage& img, double cx, double cy, int patch) {
  const int hw = patch / 2;
  if (cx - hw - 1 < 0 || cx + hw + 1 > img.width - 1 || cy - hw < 0 ||
      cy + hw > img.height - 1)
    return std::nullopt;
  double energy = 0;
  for (int dy = -hw; dy <= hw; ++dy) {
    for (int dx = -hw; dx <= hw; ++dx) {
      const double x = cx + dx, y = cy + dy;
      const double g =
          0.5 * (bilinear(img, x + 1, y) - bilinear(img, x - 1, y));
      energy += g * g;
    }
  }
  return energy;
}

/// Disparity variance sigma_d^2 = sigma_I^2 / sum(g_x^2), with the gradient
/// patch taken from the right image at (u_x - d, u_y). nullopt encodes an
/// unmatchable pixel (flat patch or window out of bounds).
inline std::optional<double> disparity_variance(const IntensityImage& left,
                                                const IntensityImage& right,
                                                double disparity,
                                                const Vec2& u, int patch,
                                                double sigma_img) {
  if (!(sigma_img > 0)) throw InvalidInput("disparity_variance: sigma_img <= 0");
  if (patch < 1 || patch % 2 == 0)
    throw InvalidInput("disparity_variance: patch must be odd and positive");
  if (u.x() < 0 || u.x() > left.width - 1 || u.y() < 0 ||
      u.y() > left.height - 1)
    return std::nullopt;
  auto energy =
      patch_gradient_energy_x(right, u.x() - disparity, u.y(), patch);
  if (!energy || *energy < kGradEnergyEps) return std::nullopt;
  return sigma_img * sigma_img / *energy;
}

/// Depth variance via the z = fx*b/d Jacobian: F = -z^2/(fx*b).
inline double depth_variance(double sigma_d_sq, double z,
                             const CameraModel& cam) {
  if (!(z > 0)) throw InvalidInput("depth_variance: non-positive depth");
  const double F = -(z * z) / (cam.fx * cam.baseline);
  return F * sigma_d_sq * F;
}

/// Left/right fusion: the worse (max) of the two; missing if either is.
inline std::optional<double> combined_depth_variance(
    std::optional<double> var_from_left, std::optional<double> var_from_right) {
  if (!var_from_left || !var_from_right) return std::nullopt;
  return std::max(*var_from_left, *var_from_right);
}

struct ScoreOptions {
  int patch = 7;
  double sigma_img = 0.01;
  /// When set, the map is treated as a prediction and pixels with
  /// sigma_z above this threshold (mm) are invalidated.
  std::optional<double> tau_sigma;
};

/// Fill per-pixel variance + validity of a depth map registered to the
/// left image. Per valid input pixel: disparity from depth, the left term
/// from I_L at u, the right term from I_R at (u_x - d, u_y), max of the
/// propagated pair. Pixels that cannot be scored are invalidated.
inline DepthMap score_depth_map(const IntensityImage& left,
                                const IntensityImage& right,
                                const DepthMap& depth, const CameraModel& cam,
                                const ScoreOptions& opts = {}) {
  DepthMap out = depth;
  const int w = depth.width(), h = depth.height();
  parallel_for(0, static_cast<std::size_t>(w) * h, [&](std::size_t idx) {
    const int x = static_cast<int>(idx % w);
    const int y = static_cast<int>(idx / w);
    if (!depth.valid.at(x, y)) return;
    const double z = depth.depth.at(x, y);
    if (!(z > 0)) {
      out.valid.at(x, y) = 0;
      return;
    }
    const double d = cam.fx * cam.baseline / z;
    const Vec2 u(x, y);
    auto e_left = patch_gradient_energy_x(left, u.x(), u.y(), opts.patch);
    auto e_right =
        patch_gradient_energy_x(right, u.x() - d, u.y(), opts.patch);
    std::optional<double> var_l, var_r;
    if (e_left && *e_left >= kGradEnergyEps)
      var_l = depth_variance(opts.sigma_img * opts.sigma_img / *e_left, z, cam);
    if (e_right && *e_right >= kGradEnergyEps)
      var_r = depth_variance(opts.sigma_img * opts.sigma_img / *e_right, z, cam);
    auto var = combined_depth_variance(var_l, var_r);
    if (!var || (opts.tau_sigma && std::sqrt(*var) > *opts.tau_sigma)) {
      out.valid.at(x, y) = 0;
      return;
    }
    out.variance.at(x, y) = static_cast<float>(*var);
  });
  return out;
}

}  // namespace slpose
