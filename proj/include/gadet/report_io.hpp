#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "gadet/common.hpp"
#include "gadet/metrics.hpp"

namespace gadet {

namespace detail {

inline nlohmann::json to_json(const MetricValue& v) {
  if (!v) return nullptr;
  return *v;
}

inline MetricValue metric_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::json to_json(const MetricEntry& e) {
  nlohmann::json j;
  j["point"] = to_json(e.point);
  j["ci_low"] = to_json(e.ci_low);
  j["ci_high"] = to_json(e.ci_high);
  auto& folds = j["per_fold"] = nlohmann::json::array();
  for (const auto& v : e.per_fold) folds.push_back(to_json(v));
  return j;
}

inline MetricEntry entry_from_json(const nlohmann::json& j) {
  MetricEntry e;
  e.point = metric_from_json(j.at("point"));
  e.ci_low = metric_from_json(j.at("ci_low"));
  e.ci_high = metric_from_json(j.at("ci_high"));
  for (const auto& v : j.at("per_fold")) e.per_fold.push_back(metric_from_json(v));
  return e;
}

}  // namespace detail

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["task"] = r.task;
  j["aggregate"] = r.aggregate;
  j["n_folds"] = r.n_folds;
  j["accuracy"] = detail::to_json(r.accuracy);
  j["kappa"] = detail::to_json(r.kappa);
  j["sensitivity"] = detail::to_json(r.sensitivity);
  j["specificity"] = detail::to_json(r.specificity);
  j["precision"] = detail::to_json(r.precision);
  j["auc"] = detail::to_json(r.auc);
  if (r.specialist) {
    j["specialist"] = {{"sensitivity", r.specialist->sensitivity},
                       {"specificity", r.specialist->specificity}};
  }
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.task = j.at("task").get<std::string>();
  r.aggregate = j.at("aggregate").get<std::string>();
  r.n_folds = j.at("n_folds").get<int>();
  r.accuracy = detail::entry_from_json(j.at("accuracy"));
  r.kappa = detail::entry_from_json(j.at("kappa"));
  r.sensitivity = detail::entry_from_json(j.at("sensitivity"));
  r.specificity = detail::entry_from_json(j.at("specificity"));
  r.precision = detail::entry_from_json(j.at("precision"));
  r.auc = detail::entry_from_json(j.at("auc"));
  if (j.contains("specialist")) {
    SpecialistPoint p;
    p.sensitivity = j.at("specialist").at("sensitivity").get<double>();
    p.specificity = j.at("specialist").at("specificity").get<double>();
    r.specialist = p;
  }
  return r;
}

inline void write_report(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path);
  out << report_to_json(r).dump(2) << "\n";
}

inline MetricsReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed report JSON in " + path + ": " + e.what());
  }
  return report_from_json(j);
}

}  // namespace gadet
