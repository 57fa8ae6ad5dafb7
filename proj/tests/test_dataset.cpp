#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "gadet/dataset.hpp"

using namespace gadet;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto dir = std::filesystem::temp_directory_path() / "gadet_dataset_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / name).string();
  std::ofstream out(path);
  out << content;
  return path;
}

ImageRecord make_record(const std::string& pid, Eye eye, const std::string& visit,
                        StereoSide side, bool ga, CentralityCategory cent,
                        std::optional<AreaCategory> area, bool nv = false) {
  ImageRecord r;
  r.participant_id = pid;
  r.eye = eye;
  r.visit = visit;
  r.stereo_side = side;
  r.image_path = pid + "_" + visit + ".png";
  r.grade.ga_present = ga;
  r.grade.centrality = cent;
  r.grade.area_category = area;
  r.grade.nv_amd = nv;
  return r;
}

ImageRecord ga_record(const std::string& pid, CentralityCategory cent,
                      AreaCategory area, bool nv = false) {
  return make_record(pid, Eye::RIGHT, "baseline", StereoSide::LEFT_OF_PAIR, true,
                     cent, area, nv);
}

ImageRecord negative_record(const std::string& pid, bool nv = false) {
  return make_record(pid, Eye::RIGHT, "baseline", StereoSide::LEFT_OF_PAIR, false,
                     CentralityCategory::NO_GA, std::nullopt, nv);
}

// Random but taxonomy-consistent records for property tests.
std::vector<ImageRecord> random_records(Rng& rng, size_t n_participants) {
  std::vector<ImageRecord> records;
  for (size_t p = 0; p < n_participants; ++p) {
    const std::string pid = "P" + std::to_string(1000 + p);
    const size_t n_images = 1 + uniform_index(rng, 4);
    for (size_t i = 0; i < n_images; ++i) {
      const Eye eye = coin_flip(rng) ? Eye::LEFT : Eye::RIGHT;
      const std::string visit = "v" + std::to_string(i);
      const bool ga = uniform_unit(rng) < 0.3;
      CentralityCategory cent = CentralityCategory::NO_GA;
      std::optional<AreaCategory> area;
      if (ga) {
        const double u = uniform_unit(rng);
        cent = u < 0.5   ? CentralityCategory::NON_CENTRAL
               : u < 0.9 ? CentralityCategory::DEFINITE_CENTER_POINT
                         : CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD;
        area = static_cast<AreaCategory>(uniform_index(rng, kNumAreaCategories));
      }
      records.push_back(make_record(pid, eye, visit, StereoSide::LEFT_OF_PAIR, ga,
                                    cent, area, uniform_unit(rng) < 0.1));
    }
  }
  return records;
}

const char* kHeader =
    "participant_id,eye,visit,stereo_side,image_path,ga_present,centrality,"
    "area_category,nv_amd,specialist_ga,specialist_cga\n";

}  // namespace

TEST_CASE("manifest parsing") {
  SECTION("valid three-row manifest parses in order") {
    const std::string body =
        std::string(kHeader) +
        "P1,LEFT,baseline,LEFT_OF_PAIR,a.png,0,NO_GA,,0,,\n"
        "P1,RIGHT,baseline,LEFT_OF_PAIR,b.png,1,NON_CENTRAL,GE_2_DA,0,1,0\n"
        "P2,LEFT,yr02,RIGHT_OF_PAIR,c.png,1,DEFINITE_CENTER_POINT,LT_I2,0,,\n";
    const auto records = parse_manifest(write_temp("ok.csv", body));
    REQUIRE(records.size() == 3);
    CHECK(records[0].participant_id == "P1");
    CHECK(records[0].eye == Eye::LEFT);
    CHECK_FALSE(records[0].grade.ga_present);
    CHECK(records[1].grade.specialist_ga == std::optional<bool>(true));
    CHECK(records[1].grade.specialist_cga == std::optional<bool>(false));
    CHECK(records[2].visit == "yr02");
    CHECK(records[2].stereo_side == StereoSide::RIGHT_OF_PAIR);
    CHECK(records[2].grade.area_category == AreaCategory::LT_I2);
  }
  SECTION("missing column is a schema error naming the column") {
    const std::string body =
        "participant_id,eye,visit,stereo_side,image_path,ga_present,centrality,"
        "nv_amd,specialist_ga,specialist_cga\n";
    CHECK_THROWS_WITH(parse_manifest(write_temp("missing.csv", body)),
                      Catch::Matchers::ContainsSubstring("area_category"));
  }
  SECTION("unknown column is a schema error") {
    const std::string body =
        std::string("participant_id,eye,visit,stereo_side,image_path,ga_present,"
                    "centrality,area_category,nv_amd,specialist_ga,specialist_cga,"
                    "extra\n");
    CHECK_THROWS_WITH(parse_manifest(write_temp("extra.csv", body)),
                      Catch::Matchers::ContainsSubstring("extra"));
  }
  SECTION("duplicate key is a duplication error listing the key") {
    const std::string row = "P1,LEFT,baseline,LEFT_OF_PAIR,a.png,0,NO_GA,,0,,\n";
    const std::string body = std::string(kHeader) + row + row;
    CHECK_THROWS_WITH(parse_manifest(write_temp("dup.csv", body)),
                      Catch::Matchers::ContainsSubstring("P1:LEFT:baseline:LEFT_OF_PAIR"));
  }
  SECTION("invalid enum value reports the line number") {
    const std::string body =
        std::string(kHeader) + "P1,MIDDLE,baseline,LEFT_OF_PAIR,a.png,0,NO_GA,,0,,\n";
    CHECK_THROWS_WITH(parse_manifest(write_temp("badenum.csv", body)),
                      Catch::Matchers::ContainsSubstring("line 2"));
  }
  SECTION("taxonomy violations rejected at parse time") {
    const std::string central_without_ga =
        std::string(kHeader) +
        "P1,LEFT,baseline,LEFT_OF_PAIR,a.png,0,DEFINITE_CENTER_POINT,,0,,\n";
    CHECK_THROWS_AS(parse_manifest(write_temp("bad1.csv", central_without_ga)), DataError);
    const std::string ga_without_area =
        std::string(kHeader) + "P1,LEFT,baseline,LEFT_OF_PAIR,a.png,1,NON_CENTRAL,,0,,\n";
    CHECK_THROWS_AS(parse_manifest(write_temp("bad2.csv", ga_without_area)), DataError);
  }
  SECTION("round-trips through write_manifest") {
    Rng rng(5);
    const auto records = random_records(rng, 12);
    const auto path = write_temp("roundtrip.csv", "");
    write_manifest(records, path);
    const auto back = parse_manifest(path);
    REQUIRE(back.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i) {
      CHECK(record_key(back[i]) == record_key(records[i]));
      CHECK(back[i].grade.ga_present == records[i].grade.ga_present);
      CHECK(back[i].grade.centrality == records[i].grade.centrality);
      CHECK(back[i].grade.area_category == records[i].grade.area_category);
    }
  }
}

TEST_CASE("stereo selection") {
  const auto left = make_record("P1", Eye::LEFT, "baseline", StereoSide::LEFT_OF_PAIR,
                                false, CentralityCategory::NO_GA, std::nullopt);
  auto right = left;
  right.stereo_side = StereoSide::RIGHT_OF_PAIR;
  right.image_path = "right.png";

  SECTION("left of pair wins when both present") {
    const auto out = select_stereo({right, left});
    REQUIRE(out.size() == 1);
    CHECK(out[0].stereo_side == StereoSide::LEFT_OF_PAIR);
  }
  SECTION("right of pair used when left is missing") {
    const auto out = select_stereo({right});
    REQUIRE(out.size() == 1);
    CHECK(out[0].stereo_side == StereoSide::RIGHT_OF_PAIR);
  }
  SECTION("left alone is kept") {
    const auto out = select_stereo({left});
    REQUIRE(out.size() == 1);
    CHECK(out[0].stereo_side == StereoSide::LEFT_OF_PAIR);
  }
  SECTION("idempotent and sized by distinct groups") {
    Rng rng(17);
    auto records = random_records(rng, 30);
    // add stereo partners for a third of the records
    const size_t base = records.size();
    for (size_t i = 0; i < base; i += 3) {
      auto partner = records[i];
      partner.stereo_side = partner.stereo_side == StereoSide::LEFT_OF_PAIR
                                ? StereoSide::RIGHT_OF_PAIR
                                : StereoSide::LEFT_OF_PAIR;
      records.push_back(partner);
    }
    std::set<std::string> groups;
    for (const auto& r : records)
      groups.insert(r.participant_id + "|" + std::string(names::of(r.eye)) + "|" + r.visit);

    const auto once = select_stereo(records);
    CHECK(once.size() == groups.size());
    const auto twice = select_stereo(once);
    REQUIRE(twice.size() == once.size());
    for (size_t i = 0; i < once.size(); ++i)
      CHECK(record_key(twice[i]) == record_key(once[i]));
  }
}

TEST_CASE("exclusion rule") {
  SECTION("GA with neovascular AMD is excluded") {
    const auto out = apply_exclusions(
        {ga_record("P1", CentralityCategory::NON_CENTRAL, AreaCategory::GE_2_DA, true)});
    CHECK(out.empty());
  }
  SECTION("GA without neovascular AMD is retained") {
    const auto out = apply_exclusions(
        {ga_record("P1", CentralityCategory::NON_CENTRAL, AreaCategory::GE_2_DA, false)});
    CHECK(out.size() == 1);
  }
  SECTION("neovascular AMD alone is retained as GA-negative") {
    const auto out = apply_exclusions({negative_record("P1", true)});
    REQUIRE(out.size() == 1);
    CHECK_FALSE(out[0].grade.ga_present);
  }
  SECTION("never removes a GA-negative record") {
    Rng rng(23);
    const auto records = random_records(rng, 40);
    const auto out = apply_exclusions(records);
    size_t negatives_in = 0, negatives_out = 0;
    for (const auto& r : records)
      if (!r.grade.ga_present) negatives_in++;
    for (const auto& r : out)
      if (!r.grade.ga_present) negatives_out++;
    CHECK(negatives_in == negatives_out);
  }
}

TEST_CASE("label derivation") {
  const auto non_central =
      ga_record("P1", CentralityCategory::NON_CENTRAL, AreaCategory::I2_TO_O2);
  const auto questionable_cp = ga_record(
      "P2", CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD, AreaCategory::HALF_TO_1_DA);
  const auto negative = negative_record("P3");

  SECTION("GA task labels by presence") {
    const auto set = derive_labels({non_central, negative}, Task::GA);
    REQUIRE(set.items.size() == 2);
    CHECK(set.items[0].label);
    CHECK_FALSE(set.items[1].label);
  }
  SECTION("CGA task includes both central categories as positive") {
    const auto set = derive_labels({questionable_cp, non_central, negative}, Task::CGA);
    REQUIRE(set.items.size() == 3);
    CHECK(set.items[0].label);
    CHECK_FALSE(set.items[1].label);
    CHECK_FALSE(set.items[2].label);
  }
  SECTION("centrality task drops GA-negative records") {
    const auto set = derive_labels({questionable_cp, non_central, negative}, Task::CENTRALITY);
    REQUIRE(set.items.size() == 2);
    CHECK(set.items[0].label);
    CHECK_FALSE(set.items[1].label);
  }
  SECTION("questionable lesions can be demoted by option") {
    const auto questionable =
        ga_record("P4", CentralityCategory::NON_CENTRAL, AreaCategory::QUESTIONABLE);
    DatasetOptions opt;
    opt.include_questionable_as_positive = false;
    const auto ga_set = derive_labels({questionable}, Task::GA, opt);
    REQUIRE(ga_set.items.size() == 1);
    CHECK_FALSE(ga_set.items[0].label);
    const auto cent_set = derive_labels({questionable}, Task::CENTRALITY, opt);
    CHECK(cent_set.items.empty());
    // default keeps them positive
    const auto default_set = derive_labels({questionable}, Task::GA);
    CHECK(default_set.items[0].label);
  }
  SECTION("hierarchy properties on random manifests") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      const auto records = random_records(rng, 20);
      const auto ga = derive_labels(records, Task::GA);
      const auto cga = derive_labels(records, Task::CGA);
      const auto cent = derive_labels(records, Task::CENTRALITY);
      REQUIRE(ga.items.size() == cga.items.size());
      size_t ga_pos = 0;
      for (size_t i = 0; i < ga.items.size(); ++i) {
        if (cga.items[i].label) CHECK(ga.items[i].label);  // CGA implies GA
        if (ga.items[i].label) ga_pos++;
      }
      CHECK(cent.items.size() == ga_pos);
    }
  }
}

TEST_CASE("dataset summary") {
  SECTION("empty input gives zeros") {
    const auto s = summarize({});
    CHECK(s.total.n_images == 0);
    CHECK(s.total.n_participants == 0);
    CHECK(s.total.ga_pct() == 0.0);
  }
  SECTION("counts over unique images and participants") {
    std::vector<ImageRecord> records = {
        ga_record("P1", CentralityCategory::DEFINITE_CENTER_POINT, AreaCategory::GE_2_DA),
        negative_record("P2"),
        make_record("P1", Eye::LEFT, "yr02", StereoSide::LEFT_OF_PAIR, false,
                    CentralityCategory::NO_GA, std::nullopt),
        negative_record("P3"),
    };
    const auto s = summarize(records);
    CHECK(s.total.n_images == 4);
    CHECK(s.total.n_participants == 3);
    CHECK(s.total.n_ga == 1);
    CHECK(s.total.n_cga == 1);
    CHECK(s.total.ga_pct() == 25.0);
  }
  SECTION("per-fold rows when an assignment is supplied") {
    std::vector<ImageRecord> records = {
        ga_record("P1", CentralityCategory::NON_CENTRAL, AreaCategory::GE_2_DA),
        negative_record("P2"), negative_record("P3"),
    };
    std::unordered_map<std::string, int> folds = {{"P1", 0}, {"P2", 1}, {"P3", 1}};
    const auto s = summarize(records, &folds, 2);
    REQUIRE(s.per_fold.size() == 2);
    CHECK(s.per_fold[0].n_images == 1);
    CHECK(s.per_fold[0].n_ga == 1);
    CHECK(s.per_fold[1].n_images == 2);
    CHECK(s.per_fold[1].n_participants == 2);
  }
}
