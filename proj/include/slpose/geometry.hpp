// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// SE(3)/se(3) algebra, pinhole stereo camera model, depth back-projection.
// Conventions: twists are [v; omega] (mm, radians); pose updates are
// left-multiplicative, T <- exp(delta) * T.

#pragma once

#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "slpose/core.hpp"

namespace slpose {

using Twist = Vec6;  // [v; omega]

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

/// Rigid transform. Stored as rotation matrix + translation; composition
/// re-orthonormalizes every 50 chained products to bound round-off drift.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return Pose{}; }

  Vec3 apply(const Vec3& p) const { return R * p + t; }
  Vec3 operator*(const Vec3& p) const { return apply(p); }

  Pose inverse() const { return Pose{R.transpose(), -(R.transpose() * t), 0}; }

  Pose compose(const Pose& rhs) const {
    Pose out{R * rhs.R, R * rhs.t + t, drift_ + rhs.drift_ + 1};
    if (out.drift_ >= 50) out.orthonormalize();
    return out;
  }
  Pose operator*(const Pose& rhs) const { return compose(rhs); }

  /// Project R back onto SO(3) (polar factor via SVD).
  void orthonormalize() {
    Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU(), v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    d(2, 2) = (u * v.transpose()).determinant() < 0 ? -1.0 : 1.0;
    R = u * d * v.transpose();
    drift_ = 0;
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = R;
    m.topRightCorner<3, 1>() = t;
    return m;
  }

  static Pose from_matrix(const Mat4& m) {
    return Pose{m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>(), 0};
  }

  Pose(Mat3 rotation, Vec3 translation, int drift = 0)
      : R(std::move(rotation)), t(std::move(translation)), drift_(drift) {}
  Pose() = default;

 private:
  int drift_ = 0;  // compositions since last orthonormalization
};

/// SE(3) exponential. Rodrigues for the rotation; closed-form V matrix for
/// the translation, with the series expansion below 1e-8 rotation angle.
inline Pose exp_map(const Twist& xi) {
  const Vec3 v = xi.head<3>();
  const Vec3 w = xi.tail<3>();
  const double theta = w.norm();
  const Mat3 what = skew(w);
  Mat3 rot, vmat;
  if (theta < 1e-8) {
    rot = Mat3::Identity() + what + 0.5 * what * what;
    vmat = Mat3::Identity() + 0.5 * what + what * what / 6.0;
  } else {
    const double s = std::sin(theta), c = std::cos(theta);
    const double t2 = theta * theta;
    rot = Mat3::Identity() + (s / theta) * what +
          ((1.0 - c) / t2) * what * what;
    vmat = Mat3::Identity() + ((1.0 - c) / t2) * what +
           ((theta - s) / (t2 * theta)) * what * what;
  }
  return Pose{rot, vmat * v, 0};
}

/// SO(3) principal logarithm, ||omega|| in [0, pi]. The angle-pi branch
/// extracts the axis from the largest diagonal entry of (R + I)/2.
inline Vec3 so3_log(const Mat3& R) {
  const double tr = R.trace();
  const double cos_theta = std::min(1.0, std::max(-1.0, (tr - 1.0) * 0.5));
  const double theta = std::acos(cos_theta);
  if (theta < 1e-10) {
    Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    return 0.5 * w;
  }
  if (theta > kPi - 1e-6) {
    // Near pi the antisymmetric part vanishes; use B = (R + I)/2 whose
    // diagonal carries axis_i^2 (up to the (1-cos) factor).
    Mat3 B = 0.5 * (R + Mat3::Identity());
    int k = 0;
    if (B(1, 1) > B(k, k)) k = 1;
    if (B(2, 2) > B(k, k)) k = 2;
    Vec3 axis;
    axis[k] = std::sqrt(std::max(0.0, B(k, k)));
    for (int i = 0; i < 3; ++i)
      if (i != k) axis[i] = B(k, i) / axis[k];
    axis.normalize();
    return theta * axis;
  }
  Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return (theta / (2.0 * std::sin(theta))) * w;
}

/// SE(3) principal logarithm; inverse of exp_map for ||omega|| < pi.
inline Twist log_map(const Pose& T) {
  const Vec3 w = so3_log(T.R);
  const double theta = w.norm();
  const Mat3 what = skew(w);
  Mat3 vinv;
  if (theta < 1e-8) {
    vinv = Mat3::Identity() - 0.5 * what + what * what / 12.0;
  } else {
    const double half = 0.5 * theta;
    const double cot_half = std::cos(half) / std::sin(half);
    vinv = Mat3::Identity() - 0.5 * what +
           ((1.0 - half * cot_half) / (theta * theta)) * what * what;
  }
  Twist xi;
  xi.head<3>() = vinv * T.t;
  xi.tail<3>() = w;
  return xi;
}

/// Rectified pinhole stereo rig: identical left/right intrinsics, right eye
/// offset by +baseline along camera x. Depth-disparity: z = fx * b / d.
struct CameraModel {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  double baseline = 0;  // mm

  void validate() const {
    if (!(fx > 0) || !(fy > 0) || !(baseline > 0))
      throw InvalidInput("CameraModel: fx, fy, baseline must be positive");
    if (!(cx >= 0 && cx < width) || !(cy >= 0 && cy < height))
      throw InvalidInput("CameraModel: principal point outside image");
  }
};

/// z * K^-1 * [u, 1]^T, camera frame, mm.
inline Vec3 backproject(const Vec2& u, double z, const CameraModel& cam) {
  if (!(z > 0)) throw InvalidInput("backproject: non-positive depth");
  return Vec3((u.x() - cam.cx) / cam.fx * z, (u.y() - cam.cy) / cam.fy * z, z);
}

/// Pinhole projection of a camera-frame point (p.z > 0 assumed).
inline Vec2 project(const Vec3& p, const CameraModel& cam) {
  return Vec2(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
}

inline std::vector<Vec3> transform_cloud(const std::vector<Vec3>& points,
                                         const Pose& T) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(T.apply(p));
  return out;
}

/// Rotation angle of R_a^T R_b in degrees.
inline double rotation_error_deg(const Mat3& Ra, const Mat3& Rb) {
  return rad2deg(so3_log(Ra.transpose() * Rb).norm());
}

}  // namespace slpose
