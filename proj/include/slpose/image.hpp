// slpose — structured-light pose refinement and next-best-view planning
// SPDX-License-Identifier: MIT
//
// Scalar image containers and file I/O: PFM (float channels, little-endian)
// and grayscale PNG (8-bit intensity out, 16-bit depth in).

#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "slpose/core.hpp"

namespace slpose {

template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;  // row-major

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  std::size_t size() const { return data.size(); }
};

/// Normalized intensities in [0, 1].
using IntensityImage = Image<float>;
using MaskImage = Image<std::uint8_t>;

/// Bilinear sample at fractional (x, y); clamps to the image border.
inline double bilinear(const Image<float>& img, double x, double y) {
  x = std::min(std::max(x, 0.0), static_cast<double>(img.width - 1));
  y = std::min(std::max(y, 0.0), static_cast<double>(img.height - 1));
  const int x0 = std::min(static_cast<int>(x), img.width - 2 >= 0 ? img.width - 2 : 0);
  const int y0 = std::min(static_cast<int>(y), img.height - 2 >= 0 ? img.height - 2 : 0);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double ax = x - x0, ay = y - y0;
  const double v00 = img.at(x0, y0), v10 = img.at(x1, y0);
  const double v01 = img.at(x0, y1), v11 = img.at(x1, y1);
  return (1 - ax) * (1 - ay) * v00 + ax * (1 - ay) * v10 +
         (1 - ax) * ay * v01 + ax * ay * v11;
}

/// Per-pixel depth (mm) + variance (mm^2) + validity. Invalid pixels carry
/// no depth/variance semantics (the z = empty-set convention).
struct DepthMap {
  Image<float> depth;
  Image<float> variance;
  MaskImage valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : depth(w, h, 0.f), variance(w, h, 0.f), valid(w, h, 0) {}

  int width() const { return depth.width; }
  int height() const { return depth.height; }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid.data) n += v ? 1 : 0;
    return n;
  }
};

/// Linear radiance per pixel plus first-hit depth/flag from the renderer.
/// `object_id` records which scene object the primary ray hit (-1 = none).
struct RadianceImage {
  Image<float> radiance;
  Image<float> depth;
  MaskImage hit;
  Image<std::int32_t> object_id;

  RadianceImage() = default;
  RadianceImage(int w, int h)
      : radiance(w, h, 0.f), depth(w, h, 0.f), hit(w, h, 0),
        object_id(w, h, -1) {}

  int width() const { return radiance.width; }
  int height() const { return radiance.height; }
};

// ── PFM ──────────────────────────────────────────────────────────────────

/// Single-channel PFM, little-endian (negative scale), bottom row first.
inline void write_pfm(const std::string& path, const Image<float>& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_pfm: cannot open " + path);
  f << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
  for (int y = img.height - 1; y >= 0; --y)
    f.write(reinterpret_cast<const char*>(&img.at(0, y)),
            static_cast<std::streamsize>(img.width * sizeof(float)));
  if (!f) throw DataError("write_pfm: write failed for " + path);
}

inline Image<float> read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_pfm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "Pf") throw DataError("read_pfm: not a grayscale PFM: " + path);
  int w = 0, h = 0;
  double scale = 0;
  f >> w >> h >> scale;
  f.get();  // single whitespace after the header
  if (w <= 0 || h <= 0) throw DataError("read_pfm: bad dimensions in " + path);
  Image<float> img(w, h);
  std::vector<float> row(static_cast<std::size_t>(w));
  for (int y = h - 1; y >= 0; --y) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(w * sizeof(float)));
    if (!f) throw DataError("read_pfm: truncated data in " + path);
    if (scale > 0)  // big-endian file
      for (auto& v : row) {
        char* b = reinterpret_cast<char*>(&v);
        std::swap(b[0], b[3]);
        std::swap(b[1], b[2]);
      }
    std::memcpy(&img.at(0, y), row.data(), w * sizeof(float));
  }
  return img;
}

// ── PNG ──────────────────────────────────────────────────────────────────

namespace detail {

struct PngWriteCloser {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngReadCloser {
  std::FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

}  // namespace detail

/// 8-bit grayscale PNG of a [0,1] intensity image.
inline void write_png_gray8(const std::string& path,
                            const IntensityImage& img) {
  detail::PngWriteCloser c;
  c.fp = std::fopen(path.c_str(), "wb");
  if (!c.fp) throw DataError("write_png_gray8: cannot open " + path);
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
  c.info = png_create_info_struct(c.png);
  if (!c.png || !c.info || setjmp(png_jmpbuf(c.png)))
    throw DataError("write_png_gray8: libpng failure for " + path);
  png_init_io(c.png, c.fp);
  png_set_IHDR(c.png, c.info, img.width, img.height, 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float v = std::min(1.f, std::max(0.f, img.at(x, y)));
      row[x] = static_cast<std::uint8_t>(std::lround(v * 255.f));
    }
    png_write_row(c.png, row.data());
  }
  png_write_end(c.png, nullptr);
}

/// 16-bit grayscale PNG; values quantized as round(v / scale), clamped.
inline void write_png_gray16(const std::string& path, const Image<float>& img,
                             double scale) {
  if (!(scale > 0)) throw InvalidInput("write_png_gray16: scale must be > 0");
  detail::PngWriteCloser c;
  c.fp = std::fopen(path.c_str(), "wb");
  if (!c.fp) throw DataError("write_png_gray16: cannot open " + path);
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
  c.info = png_create_info_struct(c.png);
  if (!c.png || !c.info || setjmp(png_jmpbuf(c.png)))
    throw DataError("write_png_gray16: libpng failure for " + path);
  png_init_io(c.png, c.fp);
  png_set_IHDR(c.png, c.info, img.width, img.height, 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  png_set_swap(c.png);  // little-endian rows in memory
  std::vector<std::uint16_t> row(static_cast<std::size_t>(img.width));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double q = std::lround(img.at(x, y) / scale);
      row[x] = static_cast<std::uint16_t>(std::min(65535.0, std::max(0.0, q)));
    }
    png_write_row(c.png, reinterpret_cast<png_bytep>(row.data()));
  }
  png_write_end(c.png, nullptr);
}

/// Read a 16-bit grayscale PNG as depth: mm = raw * scale; raw == 0 marks
/// an invalid pixel. Variance is left zero (callers score it separately).
inline DepthMap read_png_depth16(const std::string& path, double scale) {
  if (!(scale > 0)) throw InvalidInput("read_png_depth16: scale must be > 0");
  detail::PngReadCloser c;
  c.fp = std::fopen(path.c_str(), "rb");
  if (!c.fp) throw DataError("read_png_depth16: cannot open " + path);
  c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                 nullptr);
  c.info = png_create_info_struct(c.png);
  if (!c.png || !c.info || setjmp(png_jmpbuf(c.png)))
    throw DataError("read_png_depth16: libpng failure for " + path);
  png_init_io(c.png, c.fp);
  png_read_info(c.png, c.info);
  if (png_get_bit_depth(c.png, c.info) != 16 ||
      png_get_color_type(c.png, c.info) != PNG_COLOR_TYPE_GRAY)
    throw DataError("read_png_depth16: expected 16-bit grayscale: " + path);
  const int w = static_cast<int>(png_get_image_width(c.png, c.info));
  const int h = static_cast<int>(png_get_image_height(c.png, c.info));
  png_set_swap(c.png);
  DepthMap map(w, h);
  std::vector<std::uint16_t> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    png_read_row(c.png, reinterpret_cast<png_bytep>(row.data()), nullptr);
    for (int x = 0; x < w; ++x) {
      if (row[x] == 0) continue;
      map.depth.at(x, y) = static_cast<float>(row[x] * scale);
      map.valid.at(x, y) = 1;
    }
  }
  return map;
}

}  // namespace slpose
