// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// Photometric calibration: response-curve recovery from multi-exposure
// stacks (Debevec-Malik linear least squares) and inverse-rendering BSDF
// coefficient estimation with Adam on finite-difference gradients.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "slpose/core.hpp"
#include "slpose/image.hpp"
#include "slpose/render.hpp"
#include "slpose/response.hpp"

namespace slpose {

/// Debevec hat weighting: trust mid-range pixel values.
inline double hat_weight(int value) {
  return static_cast<double>(std::min(value, 255 - value));
}

/// Recover the response curve from a registered multi-exposure stack.
/// Solves for the 256 g(v) = ln X entries plus one ln E per sampled pixel,
/// with second-difference smoothness lambda and the g(128) = 0 gauge.
inline ResponseCurve recover_response(const std::vector<IntensityImage>& images,
                                      const std::vector<double>& exposures,
                                      double lambda = 32.0, int samples = 200) {
  if (images.size() != exposures.size() || images.size() < 3)
    throw DataError("recover_response: need >= 3 exposures with images");
  const int w = images[0].width, h = images[0].height;
  for (const auto& img : images)
    if (img.width != w || img.height != h)
      throw DataError("recover_response: images are not the same size");
  double lo = exposures[0], hi = exposures[0];
  for (double e : exposures) {
    if (!(e > 0)) throw DataError("recover_response: non-positive exposure");
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  if (hi / lo < 4.0)
    throw DataError(
        "recover_response: insufficient exposure diversity (need a >= 4x "
        "exposure ratio across the stack)");

  // Deterministic, well-spread sample grid.
  std::vector<std::pair<int, int>> sites;
  const int grid = std::max(1, static_cast<int>(std::sqrt(double(samples))));
  for (int gy = 0; gy < grid && static_cast<int>(sites.size()) < samples; ++gy)
    for (int gx = 0; gx < grid && static_cast<int>(sites.size()) < samples;
         ++gx)
      sites.emplace_back((gx * w + w / 2) / grid, (gy * h + h / 2) / grid);

  const int n_samples = static_cast<int>(sites.size());
  const int n_images = static_cast<int>(images.size());
  const int unknowns = 256 + n_samples;
  const int rows = n_samples * n_images + 254 + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, unknowns);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);

  int r = 0;
  for (int i = 0; i < n_samples; ++i) {
    for (int j = 0; j < n_images; ++j) {
      const float value = images[j].at(sites[i].first, sites[i].second);
      const int v = static_cast<int>(
          std::lround(255.0 * std::clamp<double>(value, 0.0, 1.0)));
      const double wgt = std::max(1e-3, hat_weight(v));
      A(r, v) = wgt;
      A(r, 256 + i) = -wgt;
      b(r) = wgt * std::log(exposures[j]);
      ++r;
    }
  }
  for (int v = 1; v <= 254; ++v) {
    const double wgt = lambda * hat_weight(v);
    A(r, v - 1) = wgt;
    A(r, v) = -2.0 * wgt;
    A(r, v + 1) = wgt;
    ++r;
  }
  A(r, 128) = 1.0;  // gauge
  ++r;

  Eigen::VectorXd x = A.colPivHouseholderQr().solve(b);
  if (!x.allFinite())
    throw DataError("recover_response: calibration system is degenerate");

  ResponseCurve curve;
  curve.smoothing_lambda = lambda;
  for (int v = 0; v < 256; ++v) curve.log_exposure[v] = x(v);
  // Monotonicity over the usable range is part of the contract; project
  // onto it (strictly increasing with a small step floor).
  for (int v = 6; v <= 250; ++v)
    curve.log_exposure[v] =
        std::max(curve.log_exposure[v], curve.log_exposure[v - 1] + 1e-6);
  if (!curve.monotonic_midrange())
    throw DataError("recover_response: recovered curve is not monotonic");
  return curve;
}

struct FitOptions {
  double learning_rate = 0.05;
  int epochs = 200;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double fd_step = 1e-3;
  RenderMode mode = RenderMode::kSinglePath;
  int bounces = 2;
  /// Halve the learning rate after this many epochs without improvement;
  /// Adam stalls at a parameter error of order the step size otherwise.
  int plateau_patience = 20;
  double min_learning_rate_factor = 1e-3;
  /// Tiny ridge on metallic, scaled by the target radiance magnitude. A
  /// lobe-free (pure diffuse) target only pins (1-metallic)*base_color;
  /// the prior selects the dielectric point of that valley. Adam's
  /// per-coordinate normalization walks the flat valley at full step size
  /// even for this magnitude, so identifiable fits are unaffected.
  double metallic_prior = 1e-6;
};

struct FitReport {
  BsdfParams params;
  std::vector<double> loss_history;  // best-so-far per epoch
  bool converged = false;
  int epochs = 0;
};

namespace detail {

/// Mean squared radiance error over pixels that are reliable in the target
/// and hit the fitted object in the render.
inline double bsdf_fit_loss(Raytracer& tracer, std::size_t object_index,
                            const BsdfParams& params,
                            const RadianceImage& target,
                            const FitOptions& opts) {
  tracer.set_object_bsdf(object_index, params.clamped());
  RadianceImage rendered = tracer.render(opts.mode, opts.bounces);
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < rendered.radiance.size(); ++i) {
    if (!target.hit.data[i]) continue;
    if (rendered.object_id.data[i] != static_cast<int>(object_index)) continue;
    const double e = double(rendered.radiance.data[i]) - target.radiance.data[i];
    sum += e * e;
    ++count;
  }
  if (count == 0) throw DataError("fit_bsdf: no usable object pixels");
  return sum / double(count);
}

}  // namespace detail

/// Estimate BSDF coefficients by first-order gradient descent (Adam) on
/// the mean squared radiance error. Poses, light, and camera come from the
/// scene; only the named object's material is optimized. Gradients are
/// central finite differences of the deterministic renderer.
inline FitReport fit_bsdf(const RadianceImage& target,
                          const SceneDescription& scene_known,
                          std::size_t object_index, const BsdfParams& init,
                          const FitOptions& opts = {}) {
  if (target.width() != scene_known.camera.width ||
      target.height() != scene_known.camera.height)
    throw DataError("fit_bsdf: target size does not match the scene camera");
  Raytracer tracer(scene_known);

  auto params_to_vec = [](const BsdfParams& p) {
    Eigen::Vector4d v;
    v << p.base_color, p.metallic, p.roughness, p.specular;
    return v;
  };
  auto vec_to_params = [](const Eigen::Vector4d& v) {
    return BsdfParams{v[0], v[1], v[2], v[3]}.clamped();
  };

  Eigen::Vector4d x = params_to_vec(init.clamped());
  Eigen::Vector4d m = Eigen::Vector4d::Zero();
  Eigen::Vector4d v = Eigen::Vector4d::Zero();

  double target_scale_sq = 0;
  std::size_t target_count = 0;
  for (std::size_t i = 0; i < target.radiance.size(); ++i) {
    if (!target.hit.data[i]) continue;
    target_scale_sq += double(target.radiance.data[i]) * target.radiance.data[i];
    ++target_count;
  }
  target_scale_sq = target_count ? target_scale_sq / double(target_count) : 1.0;
  const double ridge = opts.metallic_prior * target_scale_sq;
  auto objective = [&](const BsdfParams& p) {
    return detail::bsdf_fit_loss(tracer, object_index, p, target, opts) +
           ridge * p.metallic * p.metallic;
  };

  FitReport report;
  report.params = vec_to_params(x);
  double loss = objective(report.params);
  if (!std::isfinite(loss)) throw DataError("fit_bsdf: non-finite loss");
  double best_loss = loss;
  const double initial_loss = loss;
  double lr = opts.learning_rate;
  int stall = 0;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Eigen::Vector4d grad;
    for (int k = 0; k < 4; ++k) {
      Eigen::Vector4d xp = x, xm = x;
      xp[k] = std::min(1.0, x[k] + opts.fd_step);
      xm[k] = std::max(0.0, x[k] - opts.fd_step);
      const double span = xp[k] - xm[k];
      if (span < 1e-12) {
        grad[k] = 0;
        continue;
      }
      const double lp = objective(vec_to_params(xp));
      const double lm = objective(vec_to_params(xm));
      grad[k] = (lp - lm) / span;
    }
    m = opts.beta1 * m + (1 - opts.beta1) * grad;
    v = opts.beta2 * v + (1 - opts.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1 - std::pow(opts.beta1, epoch + 1);
    const double bc2 = 1 - std::pow(opts.beta2, epoch + 1);
    for (int k = 0; k < 4; ++k) {
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      x[k] -= lr * mhat / (std::sqrt(vhat) + 1e-8);
      x[k] = std::clamp(x[k], 0.0, 1.0);
    }
    loss = objective(vec_to_params(x));
    if (!std::isfinite(loss)) throw DataError("fit_bsdf: non-finite loss");
    if (loss < best_loss * (1.0 - 1e-9)) {
      best_loss = loss;
      report.params = vec_to_params(x);
      stall = 0;
    } else if (++stall >= opts.plateau_patience) {
      lr = std::max(lr * 0.5,
                    opts.learning_rate * opts.min_learning_rate_factor);
      stall = 0;
    }
    report.loss_history.push_back(best_loss);
    report.epochs = epoch + 1;
  }
  report.converged =
      opts.epochs > 0 && best_loss <= std::max(1e-12, 1e-3 * initial_loss);
  return report;
}

struct ResidualStats {
  Image<float> error;
  double mean = 0;
  double p95 = 0;
};

/// |target - rendered| on pixels marked valid in both images.
inline ResidualStats residual_map(const RadianceImage& target,
                                  const RadianceImage& rendered) {
  if (target.width() != rendered.width() ||
      target.height() != rendered.height())
    throw InvalidInput("residual_map: dimension mismatch");
  ResidualStats out;
  out.error = Image<float>(target.width(), target.height(), 0.f);
  std::vector<float> vals;
  for (std::size_t i = 0; i < out.error.size(); ++i) {
    if (!target.hit.data[i] || !rendered.hit.data[i]) continue;
    const float e =
        std::abs(target.radiance.data[i] - rendered.radiance.data[i]);
    out.error.data[i] = e;
    vals.push_back(e);
  }
  if (!vals.empty()) {
    double sum = 0;
    for (float e : vals) sum += e;
    out.mean = sum / double(vals.size());
    std::sort(vals.begin(), vals.end());
    out.p95 = vals[static_cast<std::size_t>(0.95 * (vals.size() - 1))];
  }
  return out;
}

}  // namespace slpose
