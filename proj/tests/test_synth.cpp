#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "gadet/dataset.hpp"
#include "gadet/synth.hpp"

using namespace gadet;

namespace {

std::int64_t mask_area(const Image& mask) {
  std::int64_t n = 0;
  for (auto b : mask.data)
    if (b) ++n;
  return n;
}

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "gadet_synth_test" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("single eye generation") {
  SECTION("no lesion means a negative grade and an empty mask") {
    SynthSpec spec;
    spec.image_size = 64;
    spec.seed = 4;
    const auto eye = generate_eye(spec);
    CHECK_FALSE(eye.grade.ga_present);
    CHECK(eye.grade.centrality == CentralityCategory::NO_GA);
    CHECK(mask_area(eye.lesion_mask) == 0);
    CHECK(eye.image.height == 64);
    CHECK(eye.image.channels == 3);
  }
  SECTION("large central lesion covers at least two disc areas and the center") {
    SynthSpec spec;
    spec.image_size = 128;
    spec.seed = 9;
    LesionSpec lesion;
    lesion.area_category = AreaCategory::GE_2_DA;
    lesion.central = true;
    spec.lesion = lesion;
    const auto eye = generate_eye(spec);
    const double dd = spec.disc_diameter();
    const double da = 3.14159265358979323846 * (dd / 2) * (dd / 2);
    CHECK(mask_area(eye.lesion_mask) >= static_cast<std::int64_t>(2 * da));
    CHECK(eye.lesion_mask.at(64, 64, 0) != 0);
    CHECK(eye.grade.ga_present);
    CHECK(eye.grade.centrality == CentralityCategory::DEFINITE_CENTER_POINT);
    CHECK(eye.grade.area_category == AreaCategory::GE_2_DA);
  }
  SECTION("same seed renders byte-identical images") {
    SynthSpec spec;
    spec.image_size = 96;
    spec.seed = 123;
    LesionSpec lesion;
    lesion.area_category = AreaCategory::HALF_TO_1_DA;
    spec.lesion = lesion;
    const auto a = generate_eye(spec);
    const auto b = generate_eye(spec);
    CHECK(a.image.data == b.image.data);
    CHECK(a.lesion_mask.data == b.lesion_mask.data);
  }
  SECTION("impossible lesion spec is rejected") {
    SynthSpec spec;
    spec.image_size = 32;  // disc area ~18 px, questionable bin is sub-pixel
    LesionSpec lesion;
    lesion.area_category = AreaCategory::QUESTIONABLE;
    spec.lesion = lesion;
    CHECK_THROWS_AS(generate_eye(spec), ConfigError);
  }
  SECTION("questionable center point grades as such") {
    SynthSpec spec;
    spec.image_size = 128;
    spec.seed = 77;
    LesionSpec lesion;
    lesion.area_category = AreaCategory::HALF_TO_1_DA;
    lesion.central = true;
    lesion.questionable_center = true;
    spec.lesion = lesion;
    const auto eye = generate_eye(spec);
    CHECK(eye.grade.centrality == CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD);
    CHECK(eye.lesion_mask.at(64, 64, 0) != 0);
  }
}

TEST_CASE("mask calibration properties hold across seeds") {
  // 200 random lesion specs: pixel area inside the category range and the
  // centrality contract exact.
  Rng rng(31337);
  for (int trial = 0; trial < 200; ++trial) {
    SynthSpec spec;
    spec.image_size = 128;
    spec.seed = rng();
    LesionSpec lesion;
    lesion.area_category = static_cast<AreaCategory>(uniform_index(rng, 7));
    lesion.central = coin_flip(rng);
    lesion.multifocal = uniform_unit(rng) < 0.2;
    lesion.depigmentation = uniform_in(rng, 0.5, 1.0);
    spec.lesion = lesion;

    const auto eye = generate_eye(spec);
    const auto range = area_range_px(lesion.area_category, spec.disc_diameter());
    const auto area = mask_area(eye.lesion_mask);
    CHECK(area >= static_cast<std::int64_t>(std::ceil(range.lo_px)));
    CHECK(static_cast<double>(area) < range.hi_px);
    const bool center_in = eye.lesion_mask.at(64, 64, 0) != 0;
    CHECK(center_in == lesion.central);
  }
}

TEST_CASE("dataset generation") {
  SECTION("prevalence realized exactly at round numbers") {
    const auto dir = temp_dir("prev");
    const auto manifest = generate_dataset(200, 0.25, 0.5, 11, dir,
                                           [] {
                                             SynthDatasetOptions o;
                                             o.image_size = 64;
                                             return o;
                                           }());
    const auto records = parse_manifest(manifest);
    REQUIRE(records.size() == 200);
    std::int64_t ga = 0, cga = 0;
    for (const auto& r : records) {
      if (r.grade.ga_present) ++ga;
      if (is_central(r.grade.centrality)) ++cga;
    }
    CHECK(ga == 50);
    CHECK(cga == 25);
  }
  SECTION("empty dataset writes a header-only manifest") {
    const auto dir = temp_dir("empty");
    const auto manifest = generate_dataset(0, 0.25, 0.5, 1, dir);
    const auto records = parse_manifest(manifest);
    CHECK(records.empty());
  }
  SECTION("generated manifests pass dataset validation and hierarchy checks") {
    const auto dir = temp_dir("valid");
    SynthDatasetOptions opt;
    opt.image_size = 64;
    const auto manifest = generate_dataset(120, 0.3, 0.6, 5, dir, opt);
    const auto records = parse_manifest(manifest);  // throws on any violation
    for (const auto& r : records) {
      if (is_central(r.grade.centrality)) CHECK(r.grade.ga_present);
      if (r.grade.ga_present) CHECK(r.grade.area_category.has_value());
    }
    // images resolve relative to the manifest directory
    int checked = 0;
    for (const auto& r : records) {
      if (checked++ >= 5) break;
      const auto img = load_image(dir + "/" + r.image_path);
      CHECK(img.height == 64);
      CHECK(img.channels == 3);
    }
  }
  SECTION("deterministic for a fixed seed") {
    const auto dir_a = temp_dir("det_a");
    const auto dir_b = temp_dir("det_b");
    SynthDatasetOptions opt;
    opt.image_size = 64;
    generate_dataset(40, 0.25, 0.5, 99, dir_a, opt);
    generate_dataset(40, 0.25, 0.5, 99, dir_b, opt);
    const auto ra = parse_manifest(dir_a + "/manifest.csv");
    const auto rb = parse_manifest(dir_b + "/manifest.csv");
    REQUIRE(ra.size() == rb.size());
    for (size_t i = 0; i < ra.size(); ++i) {
      CHECK(record_key(ra[i]) == record_key(rb[i]));
      CHECK(ra[i].grade.ga_present == rb[i].grade.ga_present);
      const auto ia = load_image(dir_a + "/" + ra[i].image_path);
      const auto ib = load_image(dir_b + "/" + rb[i].image_path);
      CHECK(ia.data == ib.data);
    }
  }
  SECTION("unwritable output directory is an i/o error") {
    CHECK_THROWS_AS(generate_dataset(5, 0.2, 0.5, 1, "/proc/not_writable/x"), IoError);
  }
}
