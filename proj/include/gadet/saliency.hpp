#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gadet/common.hpp"
#include "gadet/image.hpp"
#include "gadet/model.hpp"
#include "gadet/nn.hpp"

namespace gadet {

enum class ChannelReduce { MAX_ABS, SUM_ABS };

// Per-pixel magnitude of the class-score gradient, min-max normalized.
struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;     // normalized to [0, 1]
  std::vector<double> raw;        // channel-reduced |gradient| before scaling
  std::string source_id;
  std::string model_fingerprint;

  double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
};

// Gradient of the positive-class score (sigmoid output) with respect to every
// input pixel, via one taped forward/backward pass.
inline nn::Tensor input_gradient(const Model& model, const nn::Tensor& x) {
  nn::Tape tape;
  const double z = model.logit(x, &tape);
  const double s = nn::sigmoid(z);
  nn::Tensor dy(1, 1, 1);
  dy.v[0] = s * (1.0 - s);  // d(sigmoid(z))/dz
  nn::GradAccum scratch;
  return model.net->backward(dy, tape, scratch);
}

inline SaliencyMap saliency_map(const ModelArtifact& artifact, const Image& image,
                                const std::string& preprocess_fingerprint,
                                ChannelReduce reduce = ChannelReduce::MAX_ABS,
                                const std::string& source_id = "") {
  if (preprocess_fingerprint != artifact.preprocess_fingerprint())
    throw DataError("saliency: preprocessing fingerprint mismatch");

  const nn::Tensor x = nn::image_to_tensor(to_float(image));
  const nn::Tensor grad = input_gradient(artifact.model, x);

  SaliencyMap map;
  map.height = x.h;
  map.width = x.w;
  map.source_id = source_id;
  map.model_fingerprint = artifact.training_fingerprint;
  map.raw.resize(static_cast<size_t>(x.h) * x.w, 0.0);
  for (int y = 0; y < x.h; ++y)
    for (int xx = 0; xx < x.w; ++xx) {
      double acc = 0.0;
      for (int c = 0; c < x.c; ++c) {
        const double g = std::abs(grad.at(c, y, xx));
        acc = reduce == ChannelReduce::MAX_ABS ? std::max(acc, g) : acc + g;
      }
      map.raw[static_cast<size_t>(y) * x.w + xx] = acc;
    }

  map.values = map.raw;
  const auto [lo_it, hi_it] = std::minmax_element(map.values.begin(), map.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi > lo) {
    for (auto& v : map.values) v = (v - lo) / (hi - lo);
  } else if (hi > 0.0) {
    std::fill(map.values.begin(), map.values.end(), 1.0);
  }
  // identically-zero gradients stay identically zero
  return map;
}

namespace detail {

// Compact heat colormap: black -> red -> yellow -> white.
inline void heat_color(double v, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
  v = std::clamp(v, 0.0, 1.0);
  const double rr = std::clamp(v * 3.0, 0.0, 1.0);
  const double gg = std::clamp(v * 3.0 - 1.0, 0.0, 1.0);
  const double bb = std::clamp(v * 3.0 - 2.0, 0.0, 1.0);
  r = static_cast<std::uint8_t>(std::lround(rr * 255.0));
  g = static_cast<std::uint8_t>(std::lround(gg * 255.0));
  b = static_cast<std::uint8_t>(std::lround(bb * 255.0));
}

}  // namespace detail

// Side-by-side composite: the photograph on the left, the alpha-blended
// heat overlay on the right, as one raster.
inline Image overlay(const Image& photo, const SaliencyMap& map, double alpha) {
  if (photo.channels != 3)
    throw DataError("overlay: photograph must have 3 channels");
  if (photo.height != map.height || photo.width != map.width)
    throw DataError("overlay: saliency map shape does not match the photograph");
  if (alpha < 0.0 || alpha > 1.0)
    throw DataError("overlay: alpha must be in [0, 1]");

  Image out(photo.height, photo.width * 2, 3);
  for (int y = 0; y < photo.height; ++y)
    for (int x = 0; x < photo.width; ++x) {
      std::uint8_t hr, hg, hb;
      detail::heat_color(map.at(y, x), hr, hg, hb);
      const std::uint8_t heat[3] = {hr, hg, hb};
      for (int c = 0; c < 3; ++c) {
        const std::uint8_t p = photo.at(y, x, c);
        out.at(y, x, c) = p;
        const double blended = (1.0 - alpha) * p + alpha * heat[c];
        out.at(y, photo.width + x, c) =
            static_cast<std::uint8_t>(std::lround(std::clamp(blended, 0.0, 255.0)));
      }
    }
  return out;
}

inline Image saliency_to_image(const SaliencyMap& map) {
  Image img(map.height, map.width, 1);
  for (size_t i = 0; i < map.values.size(); ++i)
    img.data[i] = static_cast<std::uint8_t>(
        std::lround(std::clamp(map.values[i], 0.0, 1.0) * 255.0));
  return img;
}

}  // namespace gadet
