// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// Deterministic grayscale ray tracer for structured-light scene simulation
// and online measurement prediction: point-light direct illumination with
// a reduced principled BSDF, Whitted-style specular bounce chains for
// inter-reflection (multi-path vs single-path), projector-space binary
// pattern synthesis, and missing-depth prediction.

#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slpose/bvh.hpp"
#include "slpose/core.hpp"
#include "slpose/geometry.hpp"
#include "slpose/image.hpp"
#include "slpose/mesh.hpp"
#include "slpose/parallel.hpp"
#include "slpose/response.hpp"
#include "slpose/uncertainty.hpp"

namespace slpose {

/// Reduced principled BSDF: grayscale albedo + metallic/roughness/specular.
struct BsdfParams {
  double base_color = 0.5;
  double metallic = 0.0;
  double roughness = 0.5;
  double specular = 0.5;

  static constexpr double kRoughnessFloor = 0.02;

  BsdfParams clamped() const {
    auto c = [](double v) { return std::clamp(v, 0.0, 1.0); };
    return {c(base_color), c(metallic), c(roughness), c(specular)};
  }
};

/// Fresnel reflectance at normal incidence: dielectric 0.08 blended toward
/// the metal's albedo. The `specular` parameter scales the whole microfacet
/// lobe instead of entering F0; in a grayscale model an F0-resident
/// specular is exactly non-identifiable against (base_color, metallic).
inline double bsdf_f0(const BsdfParams& p) {
  return (1.0 - p.metallic) * 0.08 + p.metallic * p.base_color;
}

/// Reduced principled BRDF value (sr^-1): Lambertian diffuse plus a
/// specular-scaled GGX microfacet lobe (alpha = roughness^2,
/// height-correlated Smith masking, Schlick Fresnel). specular = 0
/// degenerates to an exact Lambertian.
inline double eval_bsdf(const BsdfParams& params, const Vec3& n,
                        const Vec3& w_in, const Vec3& w_out) {
  const double cos_i = n.dot(w_in);
  const double cos_o = n.dot(w_out);
  if (cos_i <= 0.0 || cos_o <= 0.0) return 0.0;
  const BsdfParams p = params.clamped();
  const double rough = std::max(p.roughness, BsdfParams::kRoughnessFloor);
  const double alpha = rough * rough;
  const double a2 = alpha * alpha;

  const Vec3 h = (w_in + w_out).normalized();
  const double nh = std::max(0.0, n.dot(h));
  const double d_denom = nh * nh * (a2 - 1.0) + 1.0;
  const double D = a2 / (kPi * d_denom * d_denom);

  const double g_i = cos_o * std::sqrt(a2 + (1.0 - a2) * cos_i * cos_i);
  const double g_o = cos_i * std::sqrt(a2 + (1.0 - a2) * cos_o * cos_o);
  const double G = (g_i + g_o) > 0 ? 2.0 * cos_i * cos_o / (g_i + g_o) : 0.0;

  const double f0 = bsdf_f0(p);
  const double hc = std::max(0.0, h.dot(w_in));
  const double F = f0 + (1.0 - f0) * std::pow(1.0 - hc, 5.0);

  const double spec = p.specular * D * G * F / (4.0 * cos_i * cos_o);
  const double diff =
      (1.0 - p.metallic) * (1.0 - p.specular * f0) * p.base_color / kPi;
  return diff + spec;
}

/// Weight of the deterministic mirror bounce at a surface interaction.
inline double specular_bounce_weight(const BsdfParams& params, double cos_i) {
  const BsdfParams p = params.clamped();
  const double f0 = bsdf_f0(p);
  const double F =
      f0 + (1.0 - f0) * std::pow(1.0 - std::clamp(cos_i, 0.0, 1.0), 5.0);
  return p.specular * F * (1.0 - std::max(p.roughness, BsdfParams::kRoughnessFloor));
}

struct PointLight {
  Vec3 position = Vec3::Zero();  // world, mm
  double intensity = 1.0;        // radiant intensity (per steradian)
  /// SLI rigs carry the projector with the camera; when set, the light
  /// sits at T_wc * rig_offset for whichever view is being rendered.
  bool attached_to_camera = false;
  Vec3 rig_offset = Vec3::Zero();  // camera frame, mm
};

/// Binary column-strip pattern in projector space. Strips are `strip_px`
/// projector columns wide; a seeded hash picks strong or weak per strip.
struct ProjectorPattern {
  int columns = 512;
  int strip_px = 2;
  double fov_deg = 60.0;
  double weak_scale = 0.25;  // weak light intensity as a fraction of strong
};

struct SceneObject {
  TriangleMesh mesh;
  Pose pose;  // T_wo: object -> world
  BsdfParams bsdf;
  std::string name;
};

struct SceneDescription {
  std::vector<SceneObject> objects;
  PointLight light;
  double ambient = 0.0;  // constant ambient radiance; negligible by default
  CameraModel camera;
  Pose camera_pose;  // T_wc: camera -> world
  ProjectorPattern pattern;
};

enum class RenderMode { kSinglePath, kMultiPath };

/// Thresholds of the missing-measurement prediction pipeline.
struct PredictionThresholds {
  double tau_intensity = 0.7;  // single/multi ratio below this => missing
  double tau_sigma = 2.0;      // predicted sigma_z above this (mm) => missing
  double sigma_img = 0.01;     // intensity noise std for Fisher scoring
  int patch = 7;
  std::uint64_t pattern_seed = 0;
  double exposure_dt = 1.0;    // seconds
};

/// Ray tracer over an immutable mesh set; poses, view, and light are
/// per-render state. BVHs are built once per object in the object frame.
class Raytracer {
 public:
  explicit Raytracer(const SceneDescription& scene) : scene_(scene) {
    bvhs_.reserve(scene_.objects.size());
    for (const auto& obj : scene_.objects)
      bvhs_.push_back(std::make_unique<Bvh>(obj.mesh));
  }

  const SceneDescription& scene() const { return scene_; }

  void set_object_pose(std::size_t index, const Pose& T_wo) {
    scene_.objects.at(index).pose = T_wo;
  }
  void set_object_bsdf(std::size_t index, const BsdfParams& bsdf) {
    scene_.objects.at(index).bsdf = bsdf;
  }
  void set_view(const Pose& T_wc) { scene_.camera_pose = T_wc; }
  void set_light_intensity(double intensity) {
    scene_.light.intensity = intensity;
  }

  /// World position of the projector/light for the current view.
  Vec3 light_position() const {
    return scene_.light.attached_to_camera
               ? scene_.camera_pose.apply(scene_.light.rig_offset)
               : scene_.light.position;
  }

  struct Hit {
    double t = 0;          // camera z-depth for primary rays
    int object = -1;
    int triangle = -1;
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::Zero();  // world, oriented against the ray
    bool valid() const { return object >= 0; }
  };

  Hit trace(const Vec3& origin, const Vec3& dir, double t_min = 1e-4) const {
    Hit hit;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < bvhs_.size(); ++i) {
      const Pose& T_wo = scene_.objects[i].pose;
      const Pose T_ow = T_wo.inverse();
      const Vec3 o_obj = T_ow.apply(origin);
      const Vec3 d_obj = T_ow.R * dir;
      RayHit rh = bvhs_[i]->raycast(o_obj, d_obj, t_min, best);
      if (rh.valid()) {
        best = rh.t;
        hit.t = rh.t;
        hit.object = static_cast<int>(i);
        hit.triangle = rh.triangle;
      }
    }
    if (hit.valid()) {
      hit.point = origin + hit.t * dir;
      const auto& obj = scene_.objects[hit.object];
      Vec3 n = obj.pose.R * obj.mesh.triangle_normal(hit.triangle);
      if (n.dot(dir) > 0) n = -n;
      hit.normal = n;
    }
    return hit;
  }

  bool occluded(const Vec3& from, const Vec3& to) const {
    const Vec3 d = to - from;
    const double dist = d.norm();
    if (dist < 1e-9) return false;
    const Vec3 dir = d / dist;
    for (std::size_t i = 0; i < bvhs_.size(); ++i) {
      const Pose T_ow = scene_.objects[i].pose.inverse();
      if (bvhs_[i]->occluded(T_ow.apply(from), T_ow.R * dir, 5e-3,
                             dist - 5e-3))
        return true;
    }
    return false;
  }

  /// Radiance leaving `hit` toward `w_out` (unit, away from surface).
  double shade(const Hit& hit, const Vec3& w_out, RenderMode mode,
               int bounces) const {
    const auto& obj = scene_.objects[hit.object];
    const Vec3 lp = light_position();
    const Vec3 to_light = lp - hit.point;
    const double dist = to_light.norm();
    double radiance = 0.0;
    if (dist > 1e-9) {
      const Vec3 w_in = to_light / dist;
      const double cos_i = hit.normal.dot(w_in);
      if (cos_i > 0 && !occluded(hit.point + 1e-3 * hit.normal, lp)) {
        const double irradiance =
            scene_.light.intensity / (dist * dist) * cos_i;
        radiance += eval_bsdf(obj.bsdf, hit.normal, w_in, w_out) * irradiance;
      }
    }
    radiance += scene_.ambient * (1.0 - obj.bsdf.metallic) * obj.bsdf.base_color;
    if (mode == RenderMode::kMultiPath && bounces > 1) {
      const double cos_v = std::max(0.0, hit.normal.dot(w_out));
      const double weight = specular_bounce_weight(obj.bsdf, cos_v);
      if (weight > 1e-5) {
        const Vec3 mirror = (-w_out + 2.0 * cos_v * hit.normal).normalized();
        Hit next = trace(hit.point + 1e-3 * hit.normal, mirror, 1e-4);
        if (next.valid())
          radiance += weight * shade(next, -mirror, mode, bounces - 1);
      }
    }
    return radiance;
  }

  /// Render from the current view. Primary rays go through integer pixel
  /// coordinates with camera-frame z component 1, so the recorded hit t is
  /// the pinhole depth used by backproject().
  RadianceImage render(RenderMode mode, int bounces = 3) const {
    if (bounces < 1) throw InvalidInput("render: bounces must be >= 1");
    const int effective = mode == RenderMode::kSinglePath ? 1 : bounces;
    const CameraModel& cam = scene_.camera;
    RadianceImage img(cam.width, cam.height);
    const Pose& T_wc = scene_.camera_pose;
    parallel_for(0, static_cast<std::size_t>(cam.width) * cam.height,
                 [&](std::size_t idx) {
      const int x = static_cast<int>(idx % cam.width);
      const int y = static_cast<int>(idx / cam.width);
      const Vec3 dir_cam((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
      const Vec3 dir = T_wc.R * dir_cam;
      Hit hit = trace(T_wc.t, dir, 1e-4);
      if (!hit.valid()) return;
      img.depth.at(x, y) = static_cast<float>(hit.t);
      img.hit.at(x, y) = 1;
      img.object_id.at(x, y) = hit.object;
      const Vec3 w_out = -dir.normalized();
      img.radiance.at(x, y) =
          static_cast<float>(shade(hit, w_out, mode, effective));
    });
    return img;
  }

  /// Right stereo eye: offset by +baseline along the camera x axis.
  Pose right_eye_pose() const {
    return scene_.camera_pose *
           Pose{Mat3::Identity(), Vec3(scene_.camera.baseline, 0, 0)};
  }

 private:
  SceneDescription scene_;
  std::vector<std::unique_ptr<Bvh>> bvhs_;
};

inline RadianceImage render_radiance(const SceneDescription& scene,
                                     RenderMode mode, int bounces = 3) {
  return Raytracer(scene).render(mode, bounces);
}

/// Pattern image pair as a projected-stereo capture would record it.
struct PatternPair {
  IntensityImage left;
  IntensityImage right;
  Image<float> disparity;  // left-image disparity where depth was hit
  MaskImage hit;           // left-image primary-hit mask
};

namespace detail {

/// Strip bit of a world point as seen from the projector. The projector
/// sits at the light position and shares the camera orientation for the
/// capture, so the pattern is surface-attached and eye-consistent.
inline bool pattern_bit_strong(const Vec3& point_world, const Vec3& projector,
                               const Mat3& R_wc, const ProjectorPattern& pat,
                               std::uint64_t seed) {
  const Vec3 d = R_wc.transpose() * (point_world - projector);
  const double angle = std::atan2(d.x(), d.z());
  const double fov = deg2rad(pat.fov_deg);
  const double col_width = fov / pat.columns;
  const auto col = static_cast<std::int64_t>(
      std::floor((angle + 0.5 * fov) / col_width));
  std::int64_t strip = col >= 0 ? col / pat.strip_px
                                : -((-col + pat.strip_px - 1) / pat.strip_px);
  return (hash_u64(seed ^ static_cast<std::uint64_t>(strip + (1LL << 32))) &
          1ULL) != 0;
}

}  // namespace detail

/// Synthesize the stereo pattern pair by compositing two white renders at
/// strong and weak projector intensity, selected per pixel by a seeded
/// binary strip pattern in projector space. Deterministic given the seed.
inline PatternPair synthesize_pattern_pair(const SceneDescription& scene,
                                           const ResponseCurve& response,
                                           double strong_intensity,
                                           double weak_intensity,
                                           std::uint64_t pattern_seed,
                                           double exposure_dt = 1.0) {
  if (!(strong_intensity > weak_intensity) || !(weak_intensity > 0))
    throw InvalidInput("synthesize_pattern_pair: need strong > weak > 0");
  const Pose left_pose = scene.camera_pose;
  const Vec3 projector = scene.light.attached_to_camera
                             ? left_pose.apply(scene.light.rig_offset)
                             : scene.light.position;
  // The projector belongs to the rig, not to either eye: freeze it in
  // world coordinates before rendering the right view.
  SceneDescription capture = scene;
  capture.light.attached_to_camera = false;
  capture.light.position = projector;
  Raytracer tracer(capture);
  const Pose right_pose = tracer.right_eye_pose();
  const CameraModel& cam = scene.camera;

  PatternPair out;
  out.disparity = Image<float>(cam.width, cam.height, 0.f);
  out.hit = MaskImage(cam.width, cam.height, 0);

  for (int eye = 0; eye < 2; ++eye) {
    tracer.set_view(eye == 0 ? left_pose : right_pose);
    tracer.set_light_intensity(strong_intensity);
    RadianceImage strong = tracer.render(RenderMode::kMultiPath);
    tracer.set_light_intensity(weak_intensity);
    RadianceImage weak = tracer.render(RenderMode::kMultiPath);
    IntensityImage img(cam.width, cam.height, 0.f);
    const Pose view = eye == 0 ? left_pose : right_pose;
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        if (!strong.hit.at(x, y)) continue;
        const Vec3 dir_cam((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
        const Vec3 point = view.apply(dir_cam * strong.depth.at(x, y));
        const bool use_strong = detail::pattern_bit_strong(
            point, projector, left_pose.R, scene.pattern, pattern_seed);
        const double e =
            (use_strong ? strong : weak).radiance.at(x, y) * exposure_dt;
        img.at(x, y) = static_cast<float>(response.forward(e));
      }
    }
    if (eye == 0) {
      out.left = std::move(img);
      for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
          if (!strong.hit.at(x, y)) continue;
          out.hit.at(x, y) = 1;
          out.disparity.at(x, y) = static_cast<float>(
              cam.fx * cam.baseline / strong.depth.at(x, y));
        }
      }
    } else {
      out.right = std::move(img);
    }
  }
  return out;
}

/// Missing-by-inter-reflection mask: hit pixels whose single-path to
/// multi-path radiance ratio falls below tau (ratio on radiance, guarded
/// against an unlit multi-path denominator).
inline MaskImage predict_missing_mask(const RadianceImage& single,
                                      const RadianceImage& multi,
                                      double tau_intensity) {
  if (single.width() != multi.width() || single.height() != multi.height())
    throw InvalidInput("predict_missing_mask: dimension mismatch");
  if (!(tau_intensity > 0.0) || tau_intensity > 1.0)
    throw InvalidInput("predict_missing_mask: tau must be in (0, 1]");
  MaskImage missing(single.width(), single.height(), 0);
  for (std::size_t i = 0; i < missing.size(); ++i) {
    if (!single.hit.data[i]) continue;
    const double m = multi.radiance.data[i];
    const double s = single.radiance.data[i];
    if (m < 1e-9 || s / m < tau_intensity) missing.data[i] = 1;
  }
  return missing;
}

/// Full measurement-prediction pipeline for one object from a hypothetical
/// viewpoint: render single+multi path at the pose hypothesis, synthesize
/// the pattern pair, score predicted depth variance, and invalidate pixels
/// failing either missing-data rule. Depth is the rendered first-hit depth
/// on the object mask; an all-invalid map means the object is not usefully
/// visible (not an error).
inline DepthMap predict_depth_map(const SceneDescription& scene,
                                  std::size_t object_index,
                                  const Pose& pose_hypothesis,
                                  const Pose& viewpoint,
                                  const PredictionThresholds& thresholds,
                                  const ResponseCurve& response) {
  SceneDescription hyp = scene;
  hyp.objects.at(object_index).pose = pose_hypothesis;
  hyp.camera_pose = viewpoint;
  Raytracer tracer(hyp);
  const RadianceImage single = tracer.render(RenderMode::kSinglePath);
  const RadianceImage multi = tracer.render(RenderMode::kMultiPath);
  const MaskImage missing_ir =
      predict_missing_mask(single, multi, thresholds.tau_intensity);
  const double strong = hyp.light.intensity;
  const PatternPair pair = synthesize_pattern_pair(
      hyp, response, strong, strong * hyp.pattern.weak_scale,
      thresholds.pattern_seed, thresholds.exposure_dt);

  DepthMap map(multi.width(), multi.height());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      if (!multi.hit.at(x, y)) continue;
      if (multi.object_id.at(x, y) != static_cast<int>(object_index)) continue;
      if (missing_ir.at(x, y)) continue;
      map.depth.at(x, y) = multi.depth.at(x, y);
      map.valid.at(x, y) = 1;
    }
  }
  ScoreOptions score;
  score.patch = thresholds.patch;
  score.sigma_img = thresholds.sigma_img;
  score.tau_sigma = thresholds.tau_sigma;
  return score_depth_map(pair.left, pair.right, map, hyp.camera, score);
}

}  // namespace slpose
