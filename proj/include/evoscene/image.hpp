// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "evoscene/errors.hpp"

namespace evoscene {

using Color = Eigen::Vector3d;

// Row-major RGB image with channels in [0,1]. Observations use float;
// renders and loss evaluation use double.
template <typename T>
struct BasicImage {
  using value_type = T;

  int width = 0;
  int height = 0;
  std::vector<T> data;  // width * height * 3

  BasicImage() = default;
  BasicImage(int w, int h, T fill = T(0)) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  template <typename U>
  explicit BasicImage(const BasicImage<U>& other) : width(other.width), height(other.height), data(other.data.size()) {
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(other.data[i]);
  }

  bool empty() const { return width <= 0 || height <= 0; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  T& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  T at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  Color pixel(int x, int y) const { return {double(at(x, y, 0)), double(at(x, y, 1)), double(at(x, y, 2))}; }
  void set_pixel(int x, int y, const Color& c) {
    for (int k = 0; k < 3; ++k) at(x, y, k) = static_cast<T>(c[k]);
  }

  bool operator==(const BasicImage&) const = default;
};

using Image = BasicImage<float>;
using ImageD = BasicImage<double>;

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Snap every channel to the nearest 8-bit level. Views are kept quantized so
// that a PNG round trip is lossless.
inline Image quantize8(const Image& in) {
  Image out = in;
  for (float& v : out.data) v = static_cast<float>(to_byte(v)) / 255.0f;
  return out;
}

// Bilinear lookup with edge clamping; pixel centers sit at integer coordinates.
template <typename T>
inline Color sample_bilinear(const BasicImage<T>& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  return (1 - fx) * (1 - fy) * img.pixel(x0, y0) + fx * (1 - fy) * img.pixel(x1, y0) +
         (1 - fx) * fy * img.pixel(x0, y1) + fx * fy * img.pixel(x1, y1);
}

// Inclusive pixel rectangle [x0,x1] x [y0,y1].
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool empty() const { return x1 < x0 || y1 < y0; }
  bool operator==(const PixelRect&) const = default;
};

template <typename T>
inline BasicImage<T> crop(const BasicImage<T>& img, const PixelRect& r) {
  BasicImage<T> out(r.width(), r.height());
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x) out.set_pixel(x, y, img.pixel(r.x0 + x, r.y0 + y));
  return out;
}

// Box-filtered resize (area average when shrinking, bilinear when growing).
template <typename T>
inline BasicImage<T> resize(const BasicImage<T>& img, int width, int height) {
  if (img.width == width && img.height == height) return img;
  BasicImage<T> out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (sx <= 1.0 && sy <= 1.0) {
        out.set_pixel(x, y, sample_bilinear(img, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5));
        continue;
      }
      const int xa = static_cast<int>(std::floor(x * sx));
      const int xb = std::max(xa, static_cast<int>(std::ceil((x + 1) * sx)) - 1);
      const int ya = static_cast<int>(std::floor(y * sy));
      const int yb = std::max(ya, static_cast<int>(std::ceil((y + 1) * sy)) - 1);
      Color acc = Color::Zero();
      int n = 0;
      for (int yy = ya; yy <= std::min(yb, img.height - 1); ++yy)
        for (int xx = xa; xx <= std::min(xb, img.width - 1); ++xx, ++n) acc += img.pixel(xx, yy);
      out.set_pixel(x, y, acc / std::max(n, 1));
    }
  }
  return out;
}

template <typename A, typename B>
inline double psnr(const BasicImage<A>& a, const BasicImage<B>& b) {
  if (a.width != b.width || a.height != b.height) throw Error("psnr: size mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    mse += d * d;
  }
  mse /= std::max<std::size_t>(a.data.size(), 1);
  if (mse <= 0.0) return INFINITY;
  return 10.0 * std::log10(1.0 / mse);
}

inline std::vector<std::uint8_t> to_rgb8(const Image& img) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), [](float v) { return to_byte(v); });
  return bytes;
}

inline Image from_rgb8(int width, int height, const std::uint8_t* bytes) {
  Image img(width, height);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = PNG_FORMAT_RGB;
  const auto pixels = to_rgb8(img);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw Error(std::string("png encode: ") + desc.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, pixels.data(), 0, nullptr))
    throw Error(std::string("png encode: ") + desc.message);
  out.resize(size);
  return out;
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size()))
    throw Error(std::string("png decode: ") + desc.message);
  desc.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw Error(std::string("png decode: ") + desc.message);
  }
  return from_rgb8(static_cast<int>(desc.width), static_cast<int>(desc.height), pixels.data());
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = PNG_FORMAT_RGB;
  const auto pixels = to_rgb8(img);
  if (!png_image_write_to_file(&desc, path.string().c_str(), 0, pixels.data(), 0, nullptr))
    throw Error("cannot write " + path.string() + ": " + desc.message);
}

inline Image read_png(const std::filesystem::path& path) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.string().c_str()))
    throw Error("cannot read " + path.string() + ": " + desc.message);
  desc.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw Error("cannot decode " + path.string() + ": " + desc.message);
  }
  return from_rgb8(static_cast<int>(desc.width), static_cast<int>(desc.height), pixels.data());
}

}  // namespace evoscene
