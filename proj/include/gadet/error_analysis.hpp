#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "gadet/common.hpp"
#include "gadet/dataset.hpp"

namespace gadet {

// Table of false negatives stratified by a gold-grade category. Counts are
// stored as integers; rates are always recomputed from them.
struct ErrorTable {
  struct Row {
    std::string category;
    std::int64_t n_total = 0;
    std::int64_t n_false_negative = 0;

    std::optional<double> rate() const {
      if (n_total == 0) return std::nullopt;
      return static_cast<double>(n_false_negative) / static_cast<double>(n_total);
    }
  };

  Task task = Task::GA;
  std::vector<Row> rows;
};

// One decimal of percent, matching the published table style.
inline std::string rate_percent_1dp(std::optional<double> rate) {
  if (!rate) return "NOT_DEFINED";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *rate * 100.0);
  return buf;
}

// False negatives of GA detection over the gold-positive items, one row per
// area category in enum order.
inline ErrorTable fn_by_area(const std::vector<bool>& predictions,
                             const std::vector<ImageRecord>& gold_records) {
  if (predictions.size() != gold_records.size())
    throw DataError("fn_by_area: prediction/record length mismatch");
  ErrorTable t;
  t.task = Task::GA;
  t.rows.resize(kNumAreaCategories);
  for (int a = 0; a < kNumAreaCategories; ++a)
    t.rows[static_cast<size_t>(a)].category =
        std::string(names::of(static_cast<AreaCategory>(a)));

  for (size_t i = 0; i < gold_records.size(); ++i) {
    const auto& g = gold_records[i].grade;
    if (!g.ga_present) continue;
    if (!g.area_category)
      throw DataError("fn_by_area: GA-positive record '" +
                      record_key(gold_records[i]) + "' has no area_category");
    auto& row = t.rows[static_cast<size_t>(*g.area_category)];
    row.n_total++;
    if (!predictions[i]) row.n_false_negative++;
  }
  return t;
}

// False negatives of CGA detection over the gold CGA-positive items,
// stratified by center-point involvement.
inline ErrorTable fn_by_centrality(const std::vector<bool>& predictions,
                                   const std::vector<ImageRecord>& gold_records) {
  if (predictions.size() != gold_records.size())
    throw DataError("fn_by_centrality: prediction/record length mismatch");
  ErrorTable t;
  t.task = Task::CGA;
  t.rows.resize(2);
  t.rows[0].category = std::string(names::of(CentralityCategory::DEFINITE_CENTER_POINT));
  t.rows[1].category =
      std::string(names::of(CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD));

  for (size_t i = 0; i < gold_records.size(); ++i) {
    const auto c = gold_records[i].grade.centrality;
    if (!is_central(c)) continue;
    auto& row = t.rows[c == CentralityCategory::DEFINITE_CENTER_POINT ? 0 : 1];
    row.n_total++;
    if (!predictions[i]) row.n_false_negative++;
  }
  return t;
}

struct MonotonicityResult {
  bool ok = true;
  std::optional<size_t> first_violation;  // row index of the offending rate
};

// Dose-response check: the false-negative rate must be non-increasing from
// LT_I2 upward. QUESTIONABLE is excluded; rows without a rate are skipped.
inline MonotonicityResult monotonicity_check(const ErrorTable& table) {
  MonotonicityResult result;
  std::optional<double> prev;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].category == names::of(AreaCategory::QUESTIONABLE)) continue;
    const auto rate = table.rows[i].rate();
    if (!rate) continue;
    if (prev && *rate > *prev) {
      result.ok = false;
      result.first_violation = i;
      return result;
    }
    prev = rate;
  }
  return result;
}

// Uniform sample of false-negative record keys, without replacement. Returns
// everything when there are fewer than n false negatives.
inline std::vector<std::string> sample_false_negatives(
    const std::vector<bool>& predictions, const std::vector<ImageRecord>& gold_records,
    const std::vector<bool>& gold_labels, size_t n, std::uint64_t seed) {
  if (predictions.size() != gold_records.size() ||
      gold_labels.size() != gold_records.size())
    throw DataError("sample_false_negatives: length mismatch");
  if (n < 1) throw DataError("sample_false_negatives: n must be >= 1");

  std::vector<size_t> fn_indices;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (gold_labels[i] && !predictions[i]) fn_indices.push_back(i);

  Rng rng(seed);
  shuffle_with(fn_indices.begin(), fn_indices.end(), rng);
  if (fn_indices.size() > n) fn_indices.resize(n);

  std::vector<std::string> keys;
  keys.reserve(fn_indices.size());
  for (size_t i : fn_indices) keys.push_back(record_key(gold_records[i]));
  return keys;
}

// Blank annotation sheet for the manual false-negative review. The grading
// columns stay empty; filling them in is human work.
inline void export_review_template(const std::vector<std::string>& keys,
                                   const std::vector<std::string>& image_paths,
                                   const std::vector<std::string>& saliency_paths,
                                   const std::string& path) {
  if (keys.size() != image_paths.size() || keys.size() != saliency_paths.size())
    throw DataError("export_review_template: length mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write review template: " + path);
  out << "record_key,image_path,saliency_path,image_quality,ga_size,"
         "depigmentation,other_factors\n";
  for (size_t i = 0; i < keys.size(); ++i)
    out << keys[i] << ',' << image_paths[i] << ',' << saliency_paths[i] << ",,,,\n";
}

inline void write_error_table(const ErrorTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write error table: " + path);
  out << "category,whole_test_set,false_negatives,rate_percent\n";
  for (const auto& row : table.rows)
    out << row.category << ',' << row.n_total << ',' << row.n_false_negative
        << ',' << rate_percent_1dp(row.rate()) << "\n";
}

}  // namespace gadet
