#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gadet/common.hpp"
#include "gadet/dataset.hpp"
#include "gadet/image.hpp"

namespace gadet {

struct LesionSpec {
  AreaCategory area_category = AreaCategory::GE_2_DA;
  bool central = false;
  // When central, grades as questionable center point with definite
  // central-subfield involvement (rendered with weaker depigmentation).
  bool questionable_center = false;
  double depigmentation = 0.8;  // (0, 1]
  bool multifocal = false;
};

struct SynthSpec {
  int image_size = 128;
  // <= 0 means the default 15% of the image width.
  double disc_diameter_px = 0.0;
  std::optional<LesionSpec> lesion;
  bool nv_amd = false;
  std::uint64_t seed = 0;

  double disc_diameter() const {
    return disc_diameter_px > 0.0 ? disc_diameter_px : image_size * 0.15;
  }
};

struct SynthEye {
  Image image;       // RGB fundus rendering
  Image lesion_mask; // single channel, 255 inside the lesion
  GradeRecord grade;
};

// Lesion pixel-area range for a category, in multiples of the disc area
// DA = pi * (dd/2)^2. Approximate grading-circle calibration; the pipeline
// relies only on the ordinal consistency of these bins.
struct AreaRange {
  double lo_px = 0.0;
  double hi_px = 0.0;
};

inline AreaRange area_range_px(AreaCategory cat, double disc_diameter) {
  const double da = 3.14159265358979323846 * (disc_diameter / 2.0) * (disc_diameter / 2.0);
  switch (cat) {
    case AreaCategory::QUESTIONABLE: return {1.0, da / 64.0};
    case AreaCategory::LT_I2: return {da / 64.0, da / 32.0};
    case AreaCategory::I2_TO_O2: return {da / 32.0, da / 8.0};
    case AreaCategory::O2_TO_HALF_DA: return {da / 8.0, da / 2.0};
    case AreaCategory::HALF_TO_1_DA: return {da / 2.0, da};
    case AreaCategory::ONE_TO_2_DA: return {da, 2.0 * da};
    case AreaCategory::GE_2_DA: return {2.0 * da, 4.0 * da};
  }
  return {};
}

namespace synth_detail {

struct Rgb {
  float r, g, b;
};

inline void put(Image& img, int y, int x, const Rgb& c, float w = 1.f) {
  if (y < 0 || y >= img.height || x < 0 || x >= img.width) return;
  for (int ch = 0; ch < 3; ++ch) {
    const float base = img.at(y, x, ch);
    const float v = ch == 0 ? c.r : ch == 1 ? c.g : c.b;
    img.at(y, x, ch) = static_cast<std::uint8_t>(
        std::lround(std::clamp(base * (1.f - w) + v * w, 0.f, 255.f)));
  }
}

inline void stamp_disk(Image& img, double cy, double cx, double radius, const Rgb& c,
                       float w = 1.f) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius)
        put(img, y, x, c, w);
}

// One irregular blob: radius modulated by a low-order harmonic contour.
struct Blob {
  double cy, cx, base_radius;
  double amp[3];
  double phase[3];

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double d = std::sqrt(dy * dy + dx * dx);
    if (d > base_radius * 1.6) return false;
    const double theta = std::atan2(dy, dx);
    double r = base_radius;
    for (int k = 0; k < 3; ++k)
      r *= 1.0 + amp[k] * std::cos((k + 2) * theta + phase[k]);
    return d <= r;
  }
};

inline Blob random_blob(Rng& rng, double cy, double cx, double radius) {
  Blob b;
  b.cy = cy;
  b.cx = cx;
  b.base_radius = radius;
  for (int k = 0; k < 3; ++k) {
    b.amp[k] = uniform_in(rng, 0.02, 0.12);
    b.phase[k] = uniform_in(rng, 0.0, 6.283185307179586);
  }
  return b;
}

inline std::int64_t rasterize(const std::vector<Blob>& blobs, Image& mask) {
  std::int64_t area = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      bool inside = false;
      for (const auto& b : blobs)
        if (b.contains(y + 0.5, x + 0.5)) {
          inside = true;
          break;
        }
      mask.at(y, x, 0) = inside ? 255 : 0;
      if (inside) ++area;
    }
  return area;
}

// Vessel tree: random walks from the disc with branching and thinning.
inline void draw_vessels(Image& img, Rng& rng, double disc_cy, double disc_cx,
                         double field_radius, double cy, double cx) {
  const Rgb vessel{122.f, 34.f, 30.f};
  const int trunks = 4 + static_cast<int>(uniform_index(rng, 3));
  for (int t = 0; t < trunks; ++t) {
    double angle = uniform_in(rng, 0.0, 6.283185307179586);
    double py = disc_cy, px = disc_cx;
    double width = uniform_in(rng, 1.3, 2.2);
    const int steps = 40 + static_cast<int>(uniform_index(rng, 30));
    for (int s = 0; s < steps; ++s) {
      angle += uniform_in(rng, -0.35, 0.35);
      py += std::sin(angle) * 1.6;
      px += std::cos(angle) * 1.6;
      const double d = std::hypot(py - cy, px - cx);
      if (d > field_radius * 0.96) break;
      stamp_disk(img, py, px, width * 0.5, vessel, 0.85f);
      width = std::max(0.6, width * 0.985);
      if (s == steps / 2 && coin_flip(rng)) {
        // one side branch per trunk at half depth
        double bangle = angle + (coin_flip(rng) ? 0.8 : -0.8);
        double by = py, bx = px, bw = width * 0.7;
        for (int bs = 0; bs < steps / 2; ++bs) {
          bangle += uniform_in(rng, -0.35, 0.35);
          by += std::sin(bangle) * 1.6;
          bx += std::cos(bangle) * 1.6;
          if (std::hypot(by - cy, bx - cx) > field_radius * 0.96) break;
          stamp_disk(img, by, bx, bw * 0.5, vessel, 0.8f);
          bw = std::max(0.5, bw * 0.985);
        }
      }
    }
  }
}

}  // namespace synth_detail

// Renders one synthetic eye: circular fundus field, optic disc, vessels,
// macular darkening, and optionally a sharply demarcated pale lesion with
// exposed-choroid streaks. Deterministic per seed.
inline SynthEye generate_eye(const SynthSpec& spec) {
  using namespace synth_detail;
  if (spec.image_size < 32) throw ConfigError("synth: image_size must be >= 32");
  const double dd = spec.disc_diameter();
  if (dd >= spec.image_size / 2.0)
    throw ConfigError("synth: disc diameter must be below image_size/2");
  if (spec.lesion) {
    const auto range = area_range_px(spec.lesion->area_category, dd);
    if (range.hi_px <= range.lo_px || range.lo_px < 1.0)
      throw ConfigError("synth: area category unrenderable at this image size");
    const double field_area = 3.14159 * 0.48 * 0.48 * spec.image_size * spec.image_size;
    if (range.lo_px > 0.6 * field_area)
      throw ConfigError("synth: lesion cannot fit inside the fundus field");
    if (spec.lesion->depigmentation <= 0.0 || spec.lesion->depigmentation > 1.0)
      throw ConfigError("synth: depigmentation must be in (0, 1]");
  }

  Rng rng(mix_seed(spec.seed, 0x5e59));
  const int s = spec.image_size;
  const double cy = (s - 1) / 2.0, cx = (s - 1) / 2.0;
  const double field_radius = 0.48 * s;

  SynthEye eye;
  eye.image = Image(s, s, 3);
  eye.lesion_mask = Image(s, s, 1);

  // fundus field with radial falloff and film grain
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double d = std::hypot(y - cy, x - cx);
      if (d > field_radius) {
        eye.image.at(y, x, 0) = 4;
        eye.image.at(y, x, 1) = 3;
        eye.image.at(y, x, 2) = 2;
        continue;
      }
      const double falloff = 1.0 - 0.35 * (d / field_radius) * (d / field_radius);
      const double macula =
          d < 0.12 * s ? 0.82 + 0.18 * (d / (0.12 * s)) : 1.0;  // central darkening
      const double noise = uniform_in(rng, -6.0, 6.0);
      const double base_r = 178.0, base_g = 84.0, base_b = 42.0;
      eye.image.at(y, x, 0) = static_cast<std::uint8_t>(
          std::clamp(base_r * falloff * macula + noise, 0.0, 255.0));
      eye.image.at(y, x, 1) = static_cast<std::uint8_t>(
          std::clamp(base_g * falloff * macula + noise * 0.6, 0.0, 255.0));
      eye.image.at(y, x, 2) = static_cast<std::uint8_t>(
          std::clamp(base_b * falloff * macula + noise * 0.4, 0.0, 255.0));
    }

  // optic disc offset to one side of the macula
  const double disc_cx = cx + (coin_flip(rng) ? 1 : -1) * 0.30 * s;
  const double disc_cy = cy + uniform_in(rng, -0.05, 0.05) * s;
  stamp_disk(eye.image, disc_cy, disc_cx, dd / 2.0, {232.f, 198.f, 142.f}, 0.95f);
  stamp_disk(eye.image, disc_cy, disc_cx, dd / 2.0 * 0.55, {245.f, 225.f, 180.f}, 0.9f);

  draw_vessels(eye.image, rng, disc_cy, disc_cx, field_radius, cy, cx);

  if (spec.nv_amd) {
    // generic dark blotch, enough to exercise the exclusion rule
    const double by = cy + uniform_in(rng, -0.08, 0.08) * s;
    const double bx = cx + uniform_in(rng, -0.08, 0.08) * s;
    stamp_disk(eye.image, by, bx, 0.07 * s, {92.f, 48.f, 44.f}, 0.75f);
    eye.grade.nv_amd = true;
  }

  if (spec.lesion) {
    const auto& lesion = *spec.lesion;
    const auto range = area_range_px(lesion.area_category, dd);
    const double target_area = uniform_in(rng, range.lo_px, range.hi_px);
    const int n_blobs = lesion.multifocal ? 2 + static_cast<int>(uniform_index(rng, 2)) : 1;

    // Place blobs, then rescale until the rasterized pixel area lands inside
    // the category range. Central lesions are anchored on the image center.
    std::vector<Blob> blobs;
    double scale = 1.0;
    std::int64_t area = 0;
    const int center_y = s / 2, center_x = s / 2;
    for (int attempt = 0; attempt < 24; ++attempt) {
      blobs.clear();
      Rng place_rng(mix_seed(spec.seed, 0x10c + static_cast<std::uint64_t>(attempt)));
      double remaining = target_area * scale;
      for (int b = 0; b < n_blobs; ++b) {
        const double part = b + 1 == n_blobs ? remaining : remaining * 0.6;
        remaining -= part;
        const double radius = std::sqrt(std::max(part, 1.0) / 3.14159265);
        double by, bx;
        if (lesion.central && b == 0) {
          by = center_y + 0.5;
          bx = center_x + 0.5;
        } else {
          // keep the blob contour clear of the center pixel: the modulated
          // radius never exceeds 1.5x the base radius
          const double max_d = std::max(1.0, field_radius * 0.8 - radius);
          const double min_d = std::min(1.5 * radius + 1.0, 0.99 * max_d);
          const double dist = uniform_in(place_rng, min_d, max_d);
          const double theta = uniform_in(place_rng, 0.0, 6.283185307179586);
          by = cy + dist * std::sin(theta);
          bx = cx + dist * std::cos(theta);
        }
        blobs.push_back(random_blob(place_rng, by, bx, radius));
      }
      area = rasterize(blobs, eye.lesion_mask);
      const bool center_in = eye.lesion_mask.at(center_y, center_x, 0) != 0;
      const bool area_ok =
          area >= static_cast<std::int64_t>(std::ceil(range.lo_px)) &&
          static_cast<double>(area) < range.hi_px;
      if (area_ok && center_in == lesion.central) break;
      if (!area_ok && area > 0)
        scale *= std::sqrt(target_area / static_cast<double>(area));
      else if (area == 0)
        scale *= 1.5;
    }
    if (area == 0) throw ConfigError("synth: failed to rasterize lesion");
    const bool center_in = eye.lesion_mask.at(center_y, center_x, 0) != 0;
    if (center_in != lesion.central)
      throw DataError("synth: lesion placement violated the centrality contract");

    // paint: sharply demarcated depigmented zone with reddish choroid streaks
    const double depig = lesion.central && lesion.questionable_center
                             ? lesion.depigmentation * 0.6
                             : lesion.depigmentation;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        if (!eye.lesion_mask.at(y, x, 0)) continue;
        put(eye.image, y, x, {236.f, 224.f, 198.f}, static_cast<float>(depig));
      }
    const int streaks = 2 + static_cast<int>(uniform_index(rng, 4));
    for (int st = 0; st < streaks; ++st) {
      const auto& b = blobs[uniform_index(rng, blobs.size())];
      double py = b.cy + uniform_in(rng, -0.5, 0.5) * b.base_radius;
      double px = b.cx - b.base_radius;
      const double slope = uniform_in(rng, -0.3, 0.3);
      for (double t = 0; t < 2.0 * b.base_radius; t += 0.7) {
        const int iy = static_cast<int>(std::lround(py + slope * t));
        const int ix = static_cast<int>(std::lround(px + t));
        if (iy >= 0 && iy < s && ix >= 0 && ix < s && eye.lesion_mask.at(iy, ix, 0))
          put(eye.image, iy, ix, {198.f, 96.f, 70.f}, 0.55f * static_cast<float>(depig));
      }
    }

    eye.grade.ga_present = true;
    eye.grade.area_category = lesion.area_category;
    eye.grade.centrality =
        lesion.central
            ? (lesion.questionable_center
                   ? CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD
                   : CentralityCategory::DEFINITE_CENTER_POINT)
            : CentralityCategory::NON_CENTRAL;
  }

  return eye;
}

// --- dataset generation ---

struct SynthDatasetOptions {
  int image_size = 128;
  // Draw weights for positive-row area categories; defaults mirror the
  // whole-test-set proportions of the published area table.
  std::vector<double> area_weights = {275, 38, 125, 192, 297, 403, 1255};
  double questionable_center_fraction = 0.11;  // of CGA rows
  double right_of_pair_fraction = 0.005;
  double nv_negative_fraction = 0.02;   // negatives carrying the nv flag
  double nv_positive_fraction = 0.0;    // positives carrying it (excluded downstream)
  double depigmentation_lo = 0.55;
  double depigmentation_hi = 1.0;
  double multifocal_fraction = 0.15;
};

// Writes images, masks and a manifest under out_dir; returns the manifest
// path. Image paths in the manifest are relative to out_dir.
inline std::string generate_dataset(std::int64_t n, double ga_prevalence,
                                    double cga_fraction, std::uint64_t seed,
                                    const std::string& out_dir,
                                    const SynthDatasetOptions& opt = {}) {
  if (n < 0) throw ConfigError("synth: n must be non-negative");
  if (ga_prevalence < 0.0 || ga_prevalence > 1.0)
    throw ConfigError("synth: ga_prevalence must be in [0, 1]");
  if (cga_fraction < 0.0 || cga_fraction > 1.0)
    throw ConfigError("synth: cga_fraction must be in [0, 1]");
  if (opt.area_weights.size() != static_cast<size_t>(kNumAreaCategories))
    throw ConfigError("synth: area_weights must have 7 entries");

  std::error_code ec;
  std::filesystem::create_directories(std::filesystem::path(out_dir) / "images", ec);
  std::filesystem::create_directories(std::filesystem::path(out_dir) / "masks", ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);

  const std::int64_t n_ga = std::llround(static_cast<double>(n) * ga_prevalence);
  const std::int64_t n_cga = std::llround(static_cast<double>(n_ga) * cga_fraction);
  const std::int64_t n_qcp =
      std::llround(static_cast<double>(n_cga) * opt.questionable_center_fraction);

  Rng rng(mix_seed(seed, 0xda7a));

  // participant / eye / visit plan: 1-6 images per participant
  struct RowPlan {
    std::string pid;
    Eye eye;
    std::string visit;
  };
  std::vector<RowPlan> rows;
  int pid_counter = 0;
  static const char* kVisits[] = {"baseline", "yr02", "yr03", "yr04", "yr05", "yr06"};
  while (static_cast<std::int64_t>(rows.size()) < n) {
    const std::string pid = "SYN" + std::to_string(10000 + pid_counter++);
    const int per_participant = 1 + static_cast<int>(uniform_index(rng, 6));
    for (int i = 0; i < per_participant && static_cast<std::int64_t>(rows.size()) < n; ++i)
      rows.push_back({pid, (i % 2 == 0) ? Eye::RIGHT : Eye::LEFT,
                      kVisits[static_cast<size_t>(i / 2)]});
  }

  // label plan: first n_ga of a shuffled index list are positive,
  // first n_cga of those central, first n_qcp of those questionable-center
  std::vector<size_t> shuffled(rows.size());
  std::iota(shuffled.begin(), shuffled.end(), size_t{0});
  shuffle_with(shuffled.begin(), shuffled.end(), rng);

  std::vector<std::optional<LesionSpec>> lesions(rows.size());
  std::vector<bool> nv(rows.size(), false);
  double weight_sum = 0.0;
  for (double w : opt.area_weights) weight_sum += w;
  for (std::int64_t i = 0; i < n_ga; ++i) {
    LesionSpec lesion;
    double draw = uniform_unit(rng) * weight_sum;
    int cat = 0;
    while (cat + 1 < kNumAreaCategories && draw >= opt.area_weights[static_cast<size_t>(cat)])
      draw -= opt.area_weights[static_cast<size_t>(cat)], ++cat;
    lesion.area_category = static_cast<AreaCategory>(cat);
    lesion.central = i < n_cga;
    lesion.questionable_center = i < n_qcp;
    lesion.depigmentation = uniform_in(rng, opt.depigmentation_lo, opt.depigmentation_hi);
    lesion.multifocal = uniform_unit(rng) < opt.multifocal_fraction;
    lesions[shuffled[static_cast<size_t>(i)]] = lesion;
    if (uniform_unit(rng) < opt.nv_positive_fraction)
      nv[shuffled[static_cast<size_t>(i)]] = true;
  }
  for (size_t i = static_cast<size_t>(n_ga); i < rows.size(); ++i)
    if (uniform_unit(rng) < opt.nv_negative_fraction) nv[shuffled[i]] = true;

  std::vector<ImageRecord> records;
  records.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    SynthSpec spec;
    spec.image_size = opt.image_size;
    spec.lesion = lesions[i];
    spec.nv_amd = nv[i];
    spec.seed = mix_seed(seed, 0xe7e + i);
    const SynthEye eye = generate_eye(spec);

    ImageRecord rec;
    rec.participant_id = rows[i].pid;
    rec.eye = rows[i].eye;
    rec.visit = rows[i].visit;
    rec.stereo_side = uniform_unit(rng) < opt.right_of_pair_fraction
                          ? StereoSide::RIGHT_OF_PAIR
                          : StereoSide::LEFT_OF_PAIR;
    const std::string stem = rows[i].pid + "_" + std::string(names::of(rec.eye)) + "_" +
                             rows[i].visit;
    rec.image_path = "images/" + stem + ".png";
    save_png(eye.image, out_dir + "/" + rec.image_path);
    if (spec.lesion)
      save_png(eye.lesion_mask, out_dir + "/masks/" + stem + ".png");
    rec.grade = eye.grade;
    records.push_back(std::move(rec));
  }

  const std::string manifest_path = out_dir + "/manifest.csv";
  write_manifest(records, manifest_path);
  return manifest_path;
}

}  // namespace gadet
