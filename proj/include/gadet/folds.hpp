#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "gadet/common.hpp"
#include "gadet/preprocess.hpp"

namespace gadet {

struct FoldAssignment {
  int k = 5;
  std::uint64_t seed = 0;
  std::unordered_map<std::string, int> map;  // participant -> fold in [0, k)

  int fold_of(const std::string& participant) const {
    auto it = map.find(participant);
    if (it == map.end())
      throw DataError("participant '" + participant + "' has no fold assignment");
    return it->second;
  }
};

struct RunSplit {
  int run_index = 0;
  int test_fold = 0;
  int dev_fold = 0;
  std::vector<int> train_folds;
};

// Participant-atomic assignment: sort the distinct ids, permute with the
// seeded engine, then cut into contiguous chunks whose sizes differ by at
// most one. Sorting first makes the result independent of input order.
inline FoldAssignment assign_folds(const std::vector<std::string>& participant_ids,
                                   int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("assign_folds: k must be >= 2");
  std::vector<std::string> ids(participant_ids);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (static_cast<int>(ids.size()) < k)
    throw ConfigError("assign_folds: " + std::to_string(ids.size()) +
                      " participants is fewer than k=" + std::to_string(k));

  Rng rng(seed);
  shuffle_with(ids.begin(), ids.end(), rng);

  FoldAssignment fa;
  fa.k = k;
  fa.seed = seed;
  const size_t n = ids.size();
  const size_t base = n / static_cast<size_t>(k);
  const size_t extra = n % static_cast<size_t>(k);
  size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const size_t len = base + (static_cast<size_t>(f) < extra ? 1 : 0);
    for (size_t i = 0; i < len; ++i) fa.map.emplace(ids[pos++], f);
  }
  return fa;
}

// Run r tests on fold r, develops on fold (r+1) mod k, trains on the rest.
inline std::vector<RunSplit> rotation_schedule(int k) {
  if (k < 3)
    throw ConfigError("rotation_schedule: k must be >= 3 (train/dev/test)");
  std::vector<RunSplit> runs(static_cast<size_t>(k));
  for (int r = 0; r < k; ++r) {
    auto& run = runs[static_cast<size_t>(r)];
    run.run_index = r;
    run.test_fold = r;
    run.dev_fold = (r + 1) % k;
    for (int f = 0; f < k; ++f)
      if (f != run.test_fold && f != run.dev_fold) run.train_folds.push_back(f);
  }
  return runs;
}

inline void write_fold_file(const FoldAssignment& fa, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write fold file: " + path);
  out << "participant_id,fold\n";
  std::vector<std::pair<std::string, int>> rows(fa.map.begin(), fa.map.end());
  std::sort(rows.begin(), rows.end());
  for (const auto& [id, fold] : rows) out << id << ',' << fold << "\n";
}

inline FoldAssignment read_fold_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fold file: " + path);
  std::string line;
  if (!std::getline(in, line) || (line != "participant_id,fold" &&
                                  line != "participant_id,fold\r"))
    throw DataError("fold file missing 'participant_id,fold' header: " + path);
  FoldAssignment fa;
  fa.k = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError("fold file line " + std::to_string(line_no) + ": expected 2 columns");
    std::string id = line.substr(0, comma);
    int fold = -1;
    try {
      fold = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw DataError("fold file line " + std::to_string(line_no) + ": bad fold index");
    }
    if (fold < 0)
      throw DataError("fold file line " + std::to_string(line_no) + ": bad fold index");
    if (!fa.map.emplace(std::move(id), fold).second)
      throw DataError("fold file line " + std::to_string(line_no) + ": duplicate participant");
    fa.k = std::max(fa.k, fold + 1);
  }
  return fa;
}

// --- training-time augmentation ---

struct AugmentConfig {
  double rotation_degrees = 360.0;  // max magnitude, drawn uniformly
  double width_shift_frac = 0.1;
  double height_shift_frac = 0.1;
  bool horizontal_flip = true;
  bool vertical_flip = true;

  void validate() const {
    if (rotation_degrees < 0.0 || rotation_degrees > 360.0)
      throw ConfigError("augment: rotation_degrees must be in [0, 360]");
    if (width_shift_frac < 0.0 || width_shift_frac >= 1.0 ||
        height_shift_frac < 0.0 || height_shift_frac >= 1.0)
      throw ConfigError("augment: shift fractions must be in [0, 1)");
  }

  bool enabled() const {
    return rotation_degrees > 0.0 || width_shift_frac > 0.0 ||
           height_shift_frac > 0.0 || horizontal_flip || vertical_flip;
  }
};

// Random rotation, integer-pixel shifts bounded by frac * size, then
// independent coin-flip flips. Bilinear resampling with reflect fill; when
// the drawn rotation is zero the remap degenerates to exact pixel moves.
// Draw order is fixed (rotation, width shift, height shift, h-flip, v-flip)
// with disabled components drawing nothing.
inline FloatImage augment(const FloatImage& img, Rng& rng, const AugmentConfig& cfg) {
  cfg.validate();
  if (!cfg.enabled()) return img;

  double angle_deg = 0.0;
  long shift_x = 0, shift_y = 0;
  bool hflip = false, vflip = false;
  if (cfg.rotation_degrees > 0.0)
    angle_deg = uniform_in(rng, -cfg.rotation_degrees, cfg.rotation_degrees);
  if (cfg.width_shift_frac > 0.0)
    shift_x = std::lround(uniform_in(rng, -1.0, 1.0) * cfg.width_shift_frac * img.width);
  if (cfg.height_shift_frac > 0.0)
    shift_y = std::lround(uniform_in(rng, -1.0, 1.0) * cfg.height_shift_frac * img.height);
  if (cfg.horizontal_flip) hflip = coin_flip(rng);
  if (cfg.vertical_flip) vflip = coin_flip(rng);

  const int h = img.height, w = img.width, ch = img.channels;
  FloatImage out(h, w, ch);
  const double theta = angle_deg * 3.14159265358979323846 / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // inverse map: undo shift, then undo rotation about the center
      const double yr = y - shift_y - cy;
      const double xr = x - shift_x - cx;
      const double fy = cos_t * yr - sin_t * xr + cy;
      const double fx = sin_t * yr + cos_t * xr + cx;
      const int y0 = static_cast<int>(std::floor(fy));
      const int x0 = static_cast<int>(std::floor(fx));
      const float wy = static_cast<float>(fy - y0);
      const float wx = static_cast<float>(fx - x0);
      const int ya = reflect_index(y0, h), yb = reflect_index(y0 + 1, h);
      const int xa = reflect_index(x0, w), xb = reflect_index(x0 + 1, w);
      for (int c = 0; c < ch; ++c) {
        const float top = img.at(ya, xa, c) * (1.f - wx) + img.at(ya, xb, c) * wx;
        const float bot = img.at(yb, xa, c) * (1.f - wx) + img.at(yb, xb, c) * wx;
        out.at(y, x, c) = top * (1.f - wy) + bot * wy;
      }
    }
  }

  if (hflip) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x)
        for (int c = 0; c < ch; ++c)
          std::swap(out.at(y, x, c), out.at(y, w - 1 - x, c));
  }
  if (vflip) {
    for (int y = 0; y < h / 2; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c)
          std::swap(out.at(y, x, c), out.at(h - 1 - y, x, c));
  }
  return out;
}

}  // namespace gadet
