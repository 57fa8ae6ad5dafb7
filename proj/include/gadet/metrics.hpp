#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "gadet/common.hpp"

namespace gadet {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

// A metric value; nullopt means the ratio was undefined (zero denominator)
// and must never be reported as 0.
using MetricValue = std::optional<double>;

struct BinaryMetrics {
  MetricValue accuracy;
  MetricValue sensitivity;
  MetricValue specificity;
  MetricValue precision;
  MetricValue kappa;
};

// Decision rule: positive iff score >= threshold (closed lower bound, the
// same convention the ROC sweep uses).
inline ConfusionCounts confusion(const std::vector<double>& scores,
                                 const std::vector<bool>& labels,
                                 double threshold) {
  if (scores.size() != labels.size())
    throw DataError("confusion: " + std::to_string(scores.size()) + " scores vs " +
                    std::to_string(labels.size()) + " labels");
  if (scores.empty()) throw DataError("confusion: empty input");
  ConfusionCounts c;
  for (size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) c.tp++;
    else if (pred && !labels[i]) c.fp++;
    else if (!pred && labels[i]) c.fn++;
    else c.tn++;
  }
  return c;
}

inline BinaryMetrics binary_metrics(const ConfusionCounts& c) {
  const double n = static_cast<double>(c.total());
  if (c.total() <= 0) throw DataError("binary_metrics: empty confusion");

  const auto ratio = [](std::int64_t num, std::int64_t den) -> MetricValue {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };

  BinaryMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / n;
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.precision = ratio(c.tp, c.tp + c.fp);

  // kappa = (p_o - p_e) / (1 - p_e) with p_e from the marginal products,
  // evaluated as one integer-valued fraction so exact inputs stay exact.
  const double pe_num =
      static_cast<double>(c.tp + c.fn) * static_cast<double>(c.tp + c.fp) +
      static_cast<double>(c.fp + c.tn) * static_cast<double>(c.fn + c.tn);
  const double num = n * static_cast<double>(c.tp + c.tn) - pe_num;
  const double den = n * n - pe_num;
  if (den == 0.0)
    m.kappa = std::nullopt;  // p_e = 1, degenerate margins
  else
    m.kappa = num / den;
  return m;
}

// --- ROC / AUC ---

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), thresholds descending
  double auc = 0.0;
};

// Threshold sweep over the unique scores in descending order, tied scores
// grouped. Trapezoidal AUC; equal to the tie-corrected pair-counting
// statistic.
inline RocCurve roc_auc(const std::vector<double>& scores,
                        const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw DataError("roc_auc: score/label length mismatch");
  const std::int64_t pos = std::count(labels.begin(), labels.end(), true);
  const std::int64_t neg = static_cast<std::int64_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0)
    throw DataError("roc_auc: both classes must be present");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (labels[order[i]]) tp++;
      else fp++;
      ++i;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos),
                            threshold});
  }

  double auc = 0.0;
  for (size_t p = 1; p < curve.points.size(); ++p) {
    const auto& a = curve.points[p - 1];
    const auto& b = curve.points[p];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = auc;
  return curve;
}

inline void write_roc_csv(const RocCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write ROC file: " + path);
  out << "fpr,tpr,threshold\n";
  out.precision(17);
  for (const auto& p : curve.points)
    out << p.fpr << ',' << p.tpr << ',' << p.threshold << "\n";
}

// --- fold aggregation ---

struct Interval {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

inline double t_quantile_975(int df) {
  boost::math::students_t dist(static_cast<double>(df));
  return boost::math::quantile(dist, 0.975);
}

// mean +/- t(0.975, n-1) * sd / sqrt(n) over the fold-level estimates.
inline Interval aggregate_folds(const std::vector<double>& per_fold_values) {
  const size_t n = per_fold_values.size();
  if (n < 2) throw DataError("aggregate_folds: need at least 2 fold values");
  const double mean =
      std::accumulate(per_fold_values.begin(), per_fold_values.end(), 0.0) /
      static_cast<double>(n);
  double ss = 0.0;
  for (double v : per_fold_values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double half = t_quantile_975(static_cast<int>(n) - 1) * sd /
                      std::sqrt(static_cast<double>(n));
  return {mean, mean - half, mean + half};
}

// Wilson score interval at 95%, emitted alongside fold t-intervals for
// reference on per-fold proportions.
inline Interval wilson_interval(std::int64_t successes, std::int64_t trials) {
  if (trials <= 0) throw DataError("wilson_interval: empty sample");
  constexpr double z = 1.959963984540054;  // Phi^-1(0.975)
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {p, center - half, center + half};
}

// --- report assembly ---

struct MetricEntry {
  MetricValue point;
  MetricValue ci_low;
  MetricValue ci_high;
  std::vector<MetricValue> per_fold;
};

struct SpecialistPoint {
  double sensitivity = 0.0;
  double specificity = 0.0;
};

struct MetricsReport {
  std::string task;
  std::string aggregate = "fold_mean";  // or "pooled"
  int n_folds = 0;
  MetricEntry accuracy, kappa, sensitivity, specificity, precision, auc;
  std::optional<SpecialistPoint> specialist;
};

namespace detail {

inline MetricEntry make_entry(const std::vector<MetricValue>& per_fold) {
  MetricEntry e;
  e.per_fold = per_fold;
  std::vector<double> defined;
  for (const auto& v : per_fold)
    if (v) defined.push_back(*v);
  if (defined.size() >= 2) {
    const Interval iv = aggregate_folds(defined);
    e.point = iv.mean;
    e.ci_low = iv.ci_low;
    e.ci_high = iv.ci_high;
  } else if (defined.size() == 1) {
    e.point = defined[0];
  }
  return e;
}

}  // namespace detail

// Fold-mean aggregation (the default reporting mode): each metric is computed
// per fold, then summarized with a t-interval across folds.
inline MetricsReport metrics_from_folds(
    const std::string& task, const std::vector<ConfusionCounts>& per_fold,
    const std::vector<MetricValue>& per_fold_auc) {
  if (per_fold.empty()) throw DataError("metrics_from_folds: no folds");
  if (!per_fold_auc.empty() && per_fold_auc.size() != per_fold.size())
    throw DataError("metrics_from_folds: AUC count does not match fold count");

  MetricsReport r;
  r.task = task;
  r.aggregate = "fold_mean";
  r.n_folds = static_cast<int>(per_fold.size());

  std::vector<MetricValue> acc, kap, sen, spe, pre;
  for (const auto& c : per_fold) {
    const BinaryMetrics m = binary_metrics(c);
    acc.push_back(m.accuracy);
    kap.push_back(m.kappa);
    sen.push_back(m.sensitivity);
    spe.push_back(m.specificity);
    pre.push_back(m.precision);
  }
  r.accuracy = detail::make_entry(acc);
  r.kappa = detail::make_entry(kap);
  r.sensitivity = detail::make_entry(sen);
  r.specificity = detail::make_entry(spe);
  r.precision = detail::make_entry(pre);
  if (!per_fold_auc.empty()) r.auc = detail::make_entry(per_fold_auc);
  return r;
}

// Pooled aggregation: one confusion over all predictions. Wilson intervals
// for the proportion metrics; kappa and AUC carry no interval in this mode.
inline MetricsReport metrics_pooled(const std::string& task,
                                    const ConfusionCounts& pooled,
                                    MetricValue pooled_auc) {
  MetricsReport r;
  r.task = task;
  r.aggregate = "pooled";
  r.n_folds = 1;
  const BinaryMetrics m = binary_metrics(pooled);

  const auto prop_entry = [](MetricValue v, std::int64_t num, std::int64_t den) {
    MetricEntry e;
    e.point = v;
    if (v && den > 0) {
      const Interval iv = wilson_interval(num, den);
      e.ci_low = iv.ci_low;
      e.ci_high = iv.ci_high;
    }
    e.per_fold = {v};
    return e;
  };

  r.accuracy = prop_entry(m.accuracy, pooled.tp + pooled.tn, pooled.total());
  r.sensitivity = prop_entry(m.sensitivity, pooled.tp, pooled.tp + pooled.fn);
  r.specificity = prop_entry(m.specificity, pooled.tn, pooled.tn + pooled.fp);
  r.precision = prop_entry(m.precision, pooled.tp, pooled.tp + pooled.fp);
  r.kappa.point = m.kappa;
  r.kappa.per_fold = {m.kappa};
  r.auc.point = pooled_auc;
  r.auc.per_fold = {pooled_auc};
  return r;
}

// Pooled specialist gradings treated as hard predictions against the gold
// labels; the resulting operating point is overlaid on ROC plots.
struct SpecialistComparison {
  SpecialistPoint point;
  ConfusionCounts counts;
  MetricsReport report;
};

inline SpecialistComparison specialist_point(const std::vector<bool>& specialist_labels,
                                             const std::vector<bool>& gold_labels) {
  if (specialist_labels.size() != gold_labels.size())
    throw DataError("specialist_point: length mismatch");
  if (specialist_labels.empty())
    throw DataError("specialist_point: no specialist-graded records");
  ConfusionCounts c;
  for (size_t i = 0; i < gold_labels.size(); ++i) {
    if (specialist_labels[i] && gold_labels[i]) c.tp++;
    else if (specialist_labels[i] && !gold_labels[i]) c.fp++;
    else if (!specialist_labels[i] && gold_labels[i]) c.fn++;
    else c.tn++;
  }
  SpecialistComparison out;
  out.counts = c;
  const BinaryMetrics m = binary_metrics(c);
  out.point.sensitivity = m.sensitivity.value_or(0.0);
  out.point.specificity = m.specificity.value_or(0.0);
  out.report = metrics_pooled("specialist", c, std::nullopt);
  out.report.specialist = out.point;
  return out;
}

}  // namespace gadet
