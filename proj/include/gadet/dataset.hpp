#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gadet/common.hpp"

namespace gadet {

enum class Eye { LEFT, RIGHT };

enum class StereoSide { LEFT_OF_PAIR, RIGHT_OF_PAIR };

// Lesion area bins within the grading grid, ordered smallest to largest.
enum class AreaCategory {
  QUESTIONABLE,
  LT_I2,
  I2_TO_O2,
  O2_TO_HALF_DA,
  HALF_TO_1_DA,
  ONE_TO_2_DA,
  GE_2_DA,
};

inline constexpr int kNumAreaCategories = 7;

enum class CentralityCategory {
  NO_GA,
  NON_CENTRAL,
  DEFINITE_CENTER_POINT,
  QUESTIONABLE_CP_DEFINITE_SUBFIELD,
};

inline bool is_central(CentralityCategory c) {
  return c == CentralityCategory::DEFINITE_CENTER_POINT ||
         c == CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD;
}

enum class Task { GA, CGA, CENTRALITY };

struct GradeRecord {
  bool ga_present = false;
  CentralityCategory centrality = CentralityCategory::NO_GA;
  std::optional<AreaCategory> area_category;
  bool nv_amd = false;
  std::optional<bool> specialist_ga;
  std::optional<bool> specialist_cga;
};

struct ImageRecord {
  std::string participant_id;
  Eye eye = Eye::LEFT;
  std::string visit;
  StereoSide stereo_side = StereoSide::LEFT_OF_PAIR;
  std::string image_path;
  GradeRecord grade;
};

// Stable identifier for one image row; used for deduplication and for joining
// external prediction files back onto the manifest.
inline std::string record_key(const ImageRecord& r);

struct LabeledItem {
  ImageRecord record;
  bool label = false;
};

struct LabeledSet {
  Task task = Task::GA;
  std::vector<LabeledItem> items;
};

struct DatasetOptions {
  // Whether questionable-area lesions count as GA-positive. When false those
  // records are treated as negative for GA/CGA and leave the centrality set.
  bool include_questionable_as_positive = true;
};

// --- enum <-> string ---

namespace names {

inline std::string_view of(Eye e) { return e == Eye::LEFT ? "LEFT" : "RIGHT"; }

inline std::string_view of(StereoSide s) {
  return s == StereoSide::LEFT_OF_PAIR ? "LEFT_OF_PAIR" : "RIGHT_OF_PAIR";
}

inline std::string_view of(AreaCategory a) {
  switch (a) {
    case AreaCategory::QUESTIONABLE: return "QUESTIONABLE";
    case AreaCategory::LT_I2: return "LT_I2";
    case AreaCategory::I2_TO_O2: return "I2_TO_O2";
    case AreaCategory::O2_TO_HALF_DA: return "O2_TO_HALF_DA";
    case AreaCategory::HALF_TO_1_DA: return "HALF_TO_1_DA";
    case AreaCategory::ONE_TO_2_DA: return "ONE_TO_2_DA";
    case AreaCategory::GE_2_DA: return "GE_2_DA";
  }
  return "?";
}

inline std::string_view of(CentralityCategory c) {
  switch (c) {
    case CentralityCategory::NO_GA: return "NO_GA";
    case CentralityCategory::NON_CENTRAL: return "NON_CENTRAL";
    case CentralityCategory::DEFINITE_CENTER_POINT: return "DEFINITE_CENTER_POINT";
    case CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD:
      return "QUESTIONABLE_CP_DEFINITE_SUBFIELD";
  }
  return "?";
}

inline std::string_view of(Task t) {
  switch (t) {
    case Task::GA: return "GA";
    case Task::CGA: return "CGA";
    case Task::CENTRALITY: return "CENTRALITY";
  }
  return "?";
}

template <typename E, size_t N>
std::optional<E> parse_enum(std::string_view text,
                            const std::array<E, N>& values) {
  for (E v : values)
    if (text == of(v)) return v;
  return std::nullopt;
}

inline std::optional<Eye> parse_eye(std::string_view s) {
  return parse_enum(s, std::array{Eye::LEFT, Eye::RIGHT});
}
inline std::optional<StereoSide> parse_side(std::string_view s) {
  return parse_enum(s, std::array{StereoSide::LEFT_OF_PAIR, StereoSide::RIGHT_OF_PAIR});
}
inline std::optional<AreaCategory> parse_area(std::string_view s) {
  return parse_enum(
      s, std::array{AreaCategory::QUESTIONABLE, AreaCategory::LT_I2,
                    AreaCategory::I2_TO_O2, AreaCategory::O2_TO_HALF_DA,
                    AreaCategory::HALF_TO_1_DA, AreaCategory::ONE_TO_2_DA,
                    AreaCategory::GE_2_DA});
}
inline std::optional<CentralityCategory> parse_centrality(std::string_view s) {
  return parse_enum(
      s, std::array{CentralityCategory::NO_GA, CentralityCategory::NON_CENTRAL,
                    CentralityCategory::DEFINITE_CENTER_POINT,
                    CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD});
}
inline std::optional<Task> parse_task(std::string_view s) {
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  return parse_enum(std::string_view(up),
                    std::array{Task::GA, Task::CGA, Task::CENTRALITY});
}

}  // namespace names

inline std::string record_key(const ImageRecord& r) {
  std::string key = r.participant_id;
  key += ':';
  key += names::of(r.eye);
  key += ':';
  key += r.visit;
  key += ':';
  key += names::of(r.stereo_side);
  return key;
}

// --- manifest i/o ---

inline constexpr std::string_view kManifestHeader =
    "participant_id,eye,visit,stereo_side,image_path,ga_present,centrality,"
    "area_category,nv_amd,specialist_ga,specialist_cga";

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_bool(const std::string& s, bool& out) {
  if (s == "0") { out = false; return true; }
  if (s == "1") { out = true; return true; }
  return false;
}

inline void check_grade(const ImageRecord& rec, int line_no) {
  const auto& g = rec.grade;
  const bool centrality_implies_ga = g.centrality != CentralityCategory::NO_GA;
  if (centrality_implies_ga && !g.ga_present)
    throw DataError("line " + std::to_string(line_no) + ": centrality '" +
                    std::string(names::of(g.centrality)) +
                    "' requires ga_present=1");
  if (g.ga_present && g.centrality == CentralityCategory::NO_GA)
    throw DataError("line " + std::to_string(line_no) +
                    ": ga_present=1 requires a GA centrality category");
  if (g.ga_present && !g.area_category)
    throw DataError("line " + std::to_string(line_no) +
                    ": ga_present=1 requires an area_category");
  if (!g.ga_present && g.area_category)
    throw DataError("line " + std::to_string(line_no) +
                    ": area_category set on a GA-negative record");
}

}  // namespace detail

// Parses the comma-delimited manifest. Enum fields are validated per row and
// taxonomy invariants are enforced at load time.
inline std::vector<ImageRecord> parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);

  std::string line;
  if (!std::getline(in, line))
    throw DataError("manifest is empty: " + path);

  const auto expected = detail::split_fields(std::string(kManifestHeader));
  const auto header = detail::split_fields(line);
  for (const auto& col : expected)
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw DataError("manifest missing column '" + col + "': " + path);
  for (const auto& col : header)
    if (std::find(expected.begin(), expected.end(), col) == expected.end())
      throw DataError("manifest has unknown column '" + col + "': " + path);
  if (header != expected)
    throw DataError("manifest columns out of order: " + path);

  std::vector<ImageRecord> records;
  std::unordered_set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_fields(line);
    if (f.size() != expected.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(expected.size()) + " fields, got " +
                      std::to_string(f.size()));

    ImageRecord rec;
    rec.participant_id = f[0];
    if (rec.participant_id.empty())
      throw DataError("line " + std::to_string(line_no) + ": empty participant_id");

    auto eye = names::parse_eye(f[1]);
    if (!eye)
      throw DataError("line " + std::to_string(line_no) + ": invalid eye '" + f[1] + "'");
    rec.eye = *eye;
    rec.visit = f[2];
    auto side = names::parse_side(f[3]);
    if (!side)
      throw DataError("line " + std::to_string(line_no) + ": invalid stereo_side '" + f[3] + "'");
    rec.stereo_side = *side;
    rec.image_path = f[4];

    if (!detail::parse_bool(f[5], rec.grade.ga_present))
      throw DataError("line " + std::to_string(line_no) + ": invalid ga_present '" + f[5] + "'");
    auto cent = names::parse_centrality(f[6]);
    if (!cent)
      throw DataError("line " + std::to_string(line_no) + ": invalid centrality '" + f[6] + "'");
    rec.grade.centrality = *cent;
    if (!f[7].empty()) {
      auto area = names::parse_area(f[7]);
      if (!area)
        throw DataError("line " + std::to_string(line_no) + ": invalid area_category '" + f[7] + "'");
      rec.grade.area_category = *area;
    }
    if (!detail::parse_bool(f[8], rec.grade.nv_amd))
      throw DataError("line " + std::to_string(line_no) + ": invalid nv_amd '" + f[8] + "'");
    for (int i : {9, 10}) {
      if (f[static_cast<size_t>(i)].empty()) continue;
      bool b;
      if (!detail::parse_bool(f[static_cast<size_t>(i)], b))
        throw DataError("line " + std::to_string(line_no) +
                        ": invalid specialist grade '" + f[static_cast<size_t>(i)] + "'");
      (i == 9 ? rec.grade.specialist_ga : rec.grade.specialist_cga) = b;
    }

    detail::check_grade(rec, line_no);

    const std::string key = record_key(rec);
    if (!seen.insert(key).second)
      throw DataError("duplicate record key '" + key + "' at line " +
                      std::to_string(line_no));
    records.push_back(std::move(rec));
  }
  return records;
}

inline void write_manifest(const std::vector<ImageRecord>& records,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << kManifestHeader << "\n";
  for (const auto& r : records) {
    out << r.participant_id << ',' << names::of(r.eye) << ',' << r.visit << ','
        << names::of(r.stereo_side) << ',' << r.image_path << ','
        << (r.grade.ga_present ? '1' : '0') << ',' << names::of(r.grade.centrality)
        << ',' << (r.grade.area_category ? names::of(*r.grade.area_category) : "")
        << ',' << (r.grade.nv_amd ? '1' : '0') << ',';
    if (r.grade.specialist_ga) out << (*r.grade.specialist_ga ? '1' : '0');
    out << ',';
    if (r.grade.specialist_cga) out << (*r.grade.specialist_cga ? '1' : '0');
    out << "\n";
  }
  if (!out) throw IoError("short write: " + path);
}

// --- selection / exclusion / labeling ---

// Keeps exactly one image per (participant, eye, visit): the left of the
// stereo pair when present, otherwise the right. Output preserves the order
// in which each group was first seen.
inline std::vector<ImageRecord> select_stereo(const std::vector<ImageRecord>& records) {
  std::unordered_map<std::string, size_t> group_slot;
  std::vector<ImageRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    std::string gk = r.participant_id;
    gk += ':';
    gk += names::of(r.eye);
    gk += ':';
    gk += r.visit;
    auto it = group_slot.find(gk);
    if (it == group_slot.end()) {
      group_slot.emplace(std::move(gk), out.size());
      out.push_back(r);
    } else if (r.stereo_side == StereoSide::LEFT_OF_PAIR) {
      out[it->second] = r;
    }
  }
  return out;
}

// Drops records graded positive for both GA and neovascular AMD.
inline std::vector<ImageRecord> apply_exclusions(const std::vector<ImageRecord>& records) {
  std::vector<ImageRecord> out;
  out.reserve(records.size());
  for (const auto& r : records)
    if (!(r.grade.ga_present && r.grade.nv_amd)) out.push_back(r);
  return out;
}

namespace detail {

inline bool effective_ga(const GradeRecord& g, const DatasetOptions& opt) {
  if (!g.ga_present) return false;
  if (!opt.include_questionable_as_positive &&
      g.area_category == AreaCategory::QUESTIONABLE)
    return false;
  return true;
}

}  // namespace detail

inline LabeledSet derive_labels(const std::vector<ImageRecord>& records, Task task,
                                const DatasetOptions& opt = {}) {
  LabeledSet set;
  set.task = task;
  for (const auto& r : records) {
    const bool ga = detail::effective_ga(r.grade, opt);
    const bool central = ga && is_central(r.grade.centrality);
    switch (task) {
      case Task::GA:
        set.items.push_back({r, ga});
        break;
      case Task::CGA:
        set.items.push_back({r, central});
        break;
      case Task::CENTRALITY:
        if (ga) set.items.push_back({r, central});
        break;
    }
  }
  return set;
}

// --- summary (Table 1 style) ---

struct DatasetSummary {
  struct Row {
    int fold = -1;  // -1 marks the all-data row
    std::size_t n_images = 0;
    std::size_t n_participants = 0;
    std::size_t n_ga = 0;
    std::size_t n_cga = 0;

    double ga_pct() const { return n_images ? 100.0 * n_ga / n_images : 0.0; }
    double cga_pct() const { return n_images ? 100.0 * n_cga / n_images : 0.0; }
  };
  Row total;
  std::vector<Row> per_fold;
};

inline DatasetSummary summarize(
    const std::vector<ImageRecord>& records,
    const std::unordered_map<std::string, int>* participant_fold = nullptr,
    int n_folds = 0) {
  DatasetSummary s;
  if (participant_fold) s.per_fold.resize(static_cast<size_t>(n_folds));
  for (int f = 0; f < n_folds; ++f) s.per_fold[static_cast<size_t>(f)].fold = f;

  std::set<std::string> participants;
  std::vector<std::set<std::string>> fold_participants(static_cast<size_t>(n_folds));
  for (const auto& r : records) {
    s.total.n_images++;
    participants.insert(r.participant_id);
    if (r.grade.ga_present) s.total.n_ga++;
    if (is_central(r.grade.centrality)) s.total.n_cga++;
    if (participant_fold) {
      auto it = participant_fold->find(r.participant_id);
      if (it == participant_fold->end())
        throw DataError("participant '" + r.participant_id + "' has no fold assignment");
      auto& row = s.per_fold[static_cast<size_t>(it->second)];
      row.n_images++;
      fold_participants[static_cast<size_t>(it->second)].insert(r.participant_id);
      if (r.grade.ga_present) row.n_ga++;
      if (is_central(r.grade.centrality)) row.n_cga++;
    }
  }
  s.total.n_participants = participants.size();
  for (int f = 0; f < n_folds; ++f)
    s.per_fold[static_cast<size_t>(f)].n_participants =
        fold_participants[static_cast<size_t>(f)].size();
  return s;
}

}  // namespace gadet
