#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "gadet/common.hpp"
#include "gadet/image.hpp"

namespace gadet {

struct PreprocessConfig {
  int target_size = 512;
  // Unset means "derive as target_size / 30"; an explicit non-positive
  // value is a configuration error.
  std::optional<double> gaussian_sigma;
  double gain = 4.0;
  double offset = 128.0;
  double clip_lo = 0.0;
  double clip_hi = 255.0;

  double effective_sigma() const {
    return gaussian_sigma ? *gaussian_sigma : target_size / 30.0;
  }

  void validate() const {
    if (target_size <= 0) throw ConfigError("preprocess: target_size must be positive");
    if (effective_sigma() <= 0.0)
      throw ConfigError("preprocess: gaussian_sigma must be positive");
    if (offset < clip_lo || offset > clip_hi)
      throw ConfigError("preprocess: offset outside clip range");
    if (clip_lo >= clip_hi) throw ConfigError("preprocess: empty clip range");
  }

  // Stable hash embedded in artifacts; predict refuses mismatched inputs.
  std::string fingerprint() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "pp:size=%d;sigma=%.9g;gain=%.9g;off=%.9g;clip=%.9g,%.9g",
                  target_size, effective_sigma(), gain, offset, clip_lo, clip_hi);
    return hex64(fnv1a64(buf));
  }
};

// Whole-sample reflection (edge pixel not repeated), valid for any i.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

// Crops to the centered S x S window, S = min(H, W). For an odd margin the
// extra discarded pixel comes from the bottom/right edge.
inline FloatImage center_square_crop(const FloatImage& img) {
  if (img.channels != 3)
    throw DataError("center_square_crop: expected 3 channels, got " +
                    std::to_string(img.channels));
  if (img.height < 1 || img.width < 1)
    throw DataError("center_square_crop: empty image");
  const int s = std::min(img.height, img.width);
  const int y0 = (img.height - s) / 2;
  const int x0 = (img.width - s) / 2;
  if (s == img.height && s == img.width) return img;
  FloatImage out(s, s, 3);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

// Bilinear resize of a square image with corner-aligned sampling:
// src = dst * (S-1)/(T-1). Identity when the size already matches.
inline FloatImage resize_square(const FloatImage& img, int target_size) {
  if (img.height != img.width)
    throw DataError("resize_square: input must be square (got " +
                    std::to_string(img.height) + "x" + std::to_string(img.width) +
                    "); crop first");
  if (target_size <= 0) throw ConfigError("resize_square: target_size must be positive");
  if (img.height == target_size) return img;

  const int s = img.height;
  const int t = target_size;
  FloatImage out(t, t, img.channels);
  const double scale = t > 1 ? static_cast<double>(s - 1) / (t - 1) : 0.0;
  for (int y = 0; y < t; ++y) {
    const double fy = y * scale;
    const int y0 = std::min(static_cast<int>(fy), s - 1);
    const int y1 = std::min(y0 + 1, s - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < t; ++x) {
      const double fx = x * scale;
      const int x0 = std::min(static_cast<int>(fx), s - 1);
      const int x1 = std::min(x0 + 1, s - 1);
      const float wx = static_cast<float>(fx - x0);
      for (int c = 0; c < img.channels; ++c) {
        const float a = img.at(y0, x0, c) * (1.f - wx) + img.at(y0, x1, c) * wx;
        const float b = img.at(y1, x0, c) * (1.f - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = a * (1.f - wy) + b * wy;
      }
    }
  }
  return out;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    const double w = std::exp(-0.5 * (j * j) / (sigma * sigma));
    k[static_cast<size_t>(j + radius)] = w;
    sum += w;
  }
  for (auto& w : k) w /= sum;
  return k;
}

}  // namespace detail

// Separable Gaussian blur with reflect padding. Accumulation in double so a
// constant input comes back as the constant up to float rounding.
inline FloatImage gaussian_blur(const FloatImage& img, double sigma) {
  if (sigma <= 0.0) throw ConfigError("gaussian_blur: sigma must be positive");
  const auto kernel = detail::gaussian_kernel(sigma);
  const int radius = (static_cast<int>(kernel.size()) - 1) / 2;
  const int h = img.height, w = img.width, ch = img.channels;

  FloatImage tmp(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j)
          acc += kernel[static_cast<size_t>(j + radius)] *
                 img.at(y, reflect_index(x + j, w), c);
        tmp.at(y, x, c) = static_cast<float>(acc);
      }
  FloatImage out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j)
          acc += kernel[static_cast<size_t>(j + radius)] *
                 tmp.at(reflect_index(y + j, h), x, c);
        out.at(y, x, c) = static_cast<float>(acc);
      }
  return out;
}

// Local color-balance normalization: gain * (I - G_sigma * I) + offset,
// clipped to the configured range. A constant image maps to the offset.
inline FloatImage color_normalize(const FloatImage& img, const PreprocessConfig& cfg) {
  cfg.validate();
  const FloatImage blurred = gaussian_blur(img, cfg.effective_sigma());
  FloatImage out(img.height, img.width, img.channels);
  const float gain = static_cast<float>(cfg.gain);
  const float offset = static_cast<float>(cfg.offset);
  const float lo = static_cast<float>(cfg.clip_lo);
  const float hi = static_cast<float>(cfg.clip_hi);
  for (size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = std::clamp(gain * (img.data[i] - blurred.data[i]) + offset, lo, hi);
  return out;
}

// crop -> resize -> normalize. Values stay in [clip_lo, clip_hi].
inline FloatImage preprocess_image(const Image& raw, const PreprocessConfig& cfg) {
  cfg.validate();
  FloatImage f = to_float(raw);
  f = center_square_crop(f);
  f = resize_square(f, cfg.target_size);
  return color_normalize(f, cfg);
}

}  // namespace gadet
