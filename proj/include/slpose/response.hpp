// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// Photometric response g: sensor exposure X = E*dt -> pixel intensity.
// Stored Debevec-style as a 256-entry ln(X) table over pixel values,
// gauge-fixed so the entry at pixel value 128 is 0.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "json.hpp"
#include "slpose/core.hpp"
#include "slpose/image.hpp"

namespace slpose {

struct ResponseCurve {
  std::array<double, 256> log_exposure{};  // ln X per pixel value
  double smoothing_lambda = 0.0;

  /// Identity-slope sensor: pixel value proportional to exposure.
  /// With the 128-anchor, X = 1 maps to pixel value 128.
  static ResponseCurve linear() {
    ResponseCurve r;
    for (int v = 1; v < 256; ++v) r.log_exposure[v] = std::log(v / 128.0);
    r.log_exposure[0] = r.log_exposure[1] - 3.0;  // finite sentinel
    return r;
  }

  /// Power-law sensor: value/255 = (X/X_sat)^(1/gamma), anchored at 128.
  static ResponseCurve gamma(double g) {
    ResponseCurve r;
    const double ln_x_sat = -g * std::log(128.0 / 255.0);
    for (int v = 1; v < 256; ++v)
      r.log_exposure[v] = ln_x_sat + g * std::log(v / 255.0);
    r.log_exposure[0] = r.log_exposure[1] - 3.0;
    return r;
  }

  /// Forward map g(X) -> intensity in [0, 1]; clamps (saturates) outside
  /// the table range. Piecewise linear in exposure between table entries.
  double forward(double exposure) const {
    if (!(exposure > 0)) return 0.0;
    const double x0 = std::exp(log_exposure[0]);
    const double x255 = std::exp(log_exposure[255]);
    if (exposure <= x0) return 0.0;
    if (exposure >= x255) return 1.0;
    int lo = 0, hi = 255;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      if (std::exp(log_exposure[mid]) <= exposure)
        lo = mid;
      else
        hi = mid;
    }
    const double xl = std::exp(log_exposure[lo]);
    const double xh = std::exp(log_exposure[hi]);
    const double frac = xh > xl ? (exposure - xl) / (xh - xl) : 0.0;
    return (lo + frac) / 255.0;
  }

  /// Inverse lookup of a quantized intensity: X = exp(g(round(255 I))).
  double inverse_exposure(double intensity) const {
    int v = static_cast<int>(std::lround(255.0 * std::clamp(intensity, 0.0, 1.0)));
    return std::exp(log_exposure[v]);
  }

  /// Strictly increasing over the usable mid-range (pixel values 5..250).
  bool monotonic_midrange() const {
    for (int v = 5; v < 250; ++v)
      if (!(log_exposure[v + 1] > log_exposure[v])) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["log_exposure"] = log_exposure;
    j["smoothing_lambda"] = smoothing_lambda;
    return j;
  }

  static ResponseCurve from_json(const nlohmann::json& j) {
    ResponseCurve r;
    auto arr = j.at("log_exposure");
    if (arr.size() != 256)
      throw DataError("ResponseCurve: log_exposure must have 256 entries");
    for (int v = 0; v < 256; ++v) r.log_exposure[v] = arr[v].get<double>();
    r.smoothing_lambda = j.value("smoothing_lambda", 0.0);
    return r;
  }
};

/// Per-pixel radiance E = g^-1(I)/dt. Pixels outside the trustworthy range
/// (value <= 5 or >= 250) are flagged unreliable via the hit mask.
inline RadianceImage radiance_from_image(const IntensityImage& img,
                                         const ResponseCurve& response,
                                         double exposure_dt) {
  if (!(exposure_dt > 0))
    throw InvalidInput("radiance_from_image: exposure must be positive");
  RadianceImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const int v = static_cast<int>(
          std::lround(255.0 * std::clamp<double>(img.at(x, y), 0.0, 1.0)));
      out.radiance.at(x, y) = static_cast<float>(
          std::exp(response.log_exposure[v]) / exposure_dt);
      out.hit.at(x, y) = (v > 5 && v < 250) ? 1 : 0;
    }
  }
  return out;
}

}  // namespace slpose
