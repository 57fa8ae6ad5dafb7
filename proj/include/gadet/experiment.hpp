#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gadet/array_io.hpp"
#include "gadet/common.hpp"
#include "gadet/dataset.hpp"
#include "gadet/error_analysis.hpp"
#include "gadet/folds.hpp"
#include "gadet/image.hpp"
#include "gadet/metrics.hpp"
#include "gadet/model.hpp"
#include "gadet/preprocess.hpp"
#include "gadet/report_io.hpp"
#include "gadet/saliency.hpp"

namespace gadet {

inline constexpr const char* kDataRootEnv = "GADET_DATA_ROOT";

// Relative paths resolve against GADET_DATA_ROOT when it is set.
inline std::string resolve_data_path(const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  if (const char* root = std::getenv(kDataRootEnv))
    return (std::filesystem::path(root) / path).string();
  return path;
}

struct ExperimentConfig {
  Task task = Task::GA;
  std::string manifest;
  std::string out_dir;
  PreprocessConfig preprocess;
  int k = 5;
  std::uint64_t fold_seed = 0;
  AugmentConfig augment;
  ModelConfig model;
  TrainingConfig training;
  DatasetOptions dataset;
  double threshold = 0.5;
  std::string aggregate = "fold_mean";  // or "pooled"
  int workers = 2;
  int fn_sample_size = 20;

  void validate() const {
    preprocess.validate();
    augment.validate();
    model.validate();
    training.validate();
    if (k < 3) throw ConfigError("experiment: k must be >= 3 (train/dev/test)");
    if (threshold < 0.0 || threshold > 1.0)
      throw ConfigError("experiment: threshold must be in [0, 1]");
    if (aggregate != "fold_mean" && aggregate != "pooled")
      throw ConfigError("experiment: aggregate must be fold_mean or pooled");
    if (workers < 1) throw ConfigError("experiment: workers must be >= 1");
    if (model.input_size != preprocess.target_size)
      throw ConfigError("experiment: model input_size must equal preprocess target_size");
    if (manifest.empty()) throw ConfigError("experiment: manifest path is required");
    if (out_dir.empty()) throw ConfigError("experiment: output directory is required");
  }
};

inline nlohmann::json experiment_config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["task"] = std::string(names::of(c.task));
  j["manifest"] = c.manifest;
  j["out_dir"] = c.out_dir;
  j["preprocess"] = preprocess_config_json(c.preprocess);
  j["folds"] = {{"k", c.k}, {"seed", c.fold_seed}};
  j["augment"] = {{"rotation_degrees", c.augment.rotation_degrees},
                  {"width_shift_frac", c.augment.width_shift_frac},
                  {"height_shift_frac", c.augment.height_shift_frac},
                  {"horizontal_flip", c.augment.horizontal_flip},
                  {"vertical_flip", c.augment.vertical_flip}};
  j["model"] = model_config_json(c.model);
  j["training"] = training_config_json(c.training);
  j["dataset"] = {{"include_questionable_as_positive",
                   c.dataset.include_questionable_as_positive}};
  j["threshold"] = c.threshold;
  j["aggregate"] = c.aggregate;
  j["workers"] = c.workers;
  j["fn_sample_size"] = c.fn_sample_size;
  j["version"] = std::string(kVersion);
  return j;
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("task")) {
    const auto task = names::parse_task(j.at("task").get<std::string>());
    if (!task) throw ConfigError("config: unknown task");
    c.task = *task;
  }
  c.manifest = j.value("manifest", c.manifest);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("preprocess")) c.preprocess = preprocess_config_from_json(j.at("preprocess"));
  if (j.contains("folds")) {
    c.k = j.at("folds").value("k", c.k);
    c.fold_seed = j.at("folds").value("seed", c.fold_seed);
  }
  if (j.contains("augment")) {
    const auto& a = j.at("augment");
    c.augment.rotation_degrees = a.value("rotation_degrees", c.augment.rotation_degrees);
    c.augment.width_shift_frac = a.value("width_shift_frac", c.augment.width_shift_frac);
    c.augment.height_shift_frac = a.value("height_shift_frac", c.augment.height_shift_frac);
    c.augment.horizontal_flip = a.value("horizontal_flip", c.augment.horizontal_flip);
    c.augment.vertical_flip = a.value("vertical_flip", c.augment.vertical_flip);
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("training")) c.training = training_config_from_json(j.at("training"));
  if (j.contains("dataset"))
    c.dataset.include_questionable_as_positive =
        j.at("dataset").value("include_questionable_as_positive", true);
  c.threshold = j.value("threshold", c.threshold);
  c.aggregate = j.value("aggregate", c.aggregate);
  c.workers = j.value("workers", c.workers);
  c.fn_sample_size = j.value("fn_sample_size", c.fn_sample_size);
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config JSON in " + path + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

// --- prediction files ---

struct PredictionRow {
  std::string image_key;
  double score = 0.0;
  int fold = 0;
};

inline void write_predictions(const std::vector<PredictionRow>& rows,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions: " + path);
  out << "image_key,score,fold\n";
  out.precision(17);
  for (const auto& r : rows) out << r.image_key << ',' << r.score << ',' << r.fold << "\n";
}

inline std::vector<PredictionRow> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      (line != "image_key,score,fold" && line != "image_key,score,fold\r"))
    throw DataError("predictions file missing 'image_key,score,fold' header: " + path);
  std::vector<PredictionRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw DataError("predictions line " + std::to_string(line_no) + ": expected 3 columns");
    PredictionRow r;
    r.image_key = line.substr(0, c1);
    try {
      r.score = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
      r.fold = std::stoi(line.substr(c2 + 1));
    } catch (const std::exception&) {
      throw DataError("predictions line " + std::to_string(line_no) + ": bad number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// --- shared evaluation core ---

struct EvaluationResult {
  MetricsReport report;
  ErrorTable area_table;        // GA-task stratification
  ErrorTable centrality_table;  // CGA stratification
  RocCurve pooled_roc;
  std::vector<RocCurve> per_fold_roc;
  std::vector<PredictionRow> predictions;
  std::vector<ImageRecord> records;  // aligned with predictions
  std::vector<bool> labels;          // aligned with predictions
};

namespace detail {

inline EvaluationResult evaluate_scored(const std::string& task_name, Task task,
                                        std::vector<PredictionRow> rows,
                                        std::vector<ImageRecord> records,
                                        std::vector<bool> labels, double threshold,
                                        const std::string& aggregate) {
  EvaluationResult result;

  // per-fold confusions and AUCs
  std::map<int, std::vector<size_t>> by_fold;
  for (size_t i = 0; i < rows.size(); ++i) by_fold[rows[i].fold].push_back(i);

  std::vector<ConfusionCounts> fold_counts;
  std::vector<MetricValue> fold_aucs;
  for (const auto& [fold, idx] : by_fold) {
    std::vector<double> scores;
    std::vector<bool> gold;
    for (size_t i : idx) {
      scores.push_back(rows[i].score);
      gold.push_back(labels[i]);
    }
    fold_counts.push_back(confusion(scores, gold, threshold));
    const bool has_pos = std::find(gold.begin(), gold.end(), true) != gold.end();
    const bool has_neg = std::find(gold.begin(), gold.end(), false) != gold.end();
    if (has_pos && has_neg) {
      auto roc = roc_auc(scores, gold);
      fold_aucs.push_back(roc.auc);
      result.per_fold_roc.push_back(std::move(roc));
    } else {
      fold_aucs.push_back(std::nullopt);
      result.per_fold_roc.push_back({});
    }
  }

  std::vector<double> all_scores;
  std::vector<bool> all_gold;
  for (size_t i = 0; i < rows.size(); ++i) {
    all_scores.push_back(rows[i].score);
    all_gold.push_back(labels[i]);
  }

  if (aggregate == "pooled") {
    ConfusionCounts pooled;
    for (const auto& c : fold_counts) pooled += c;
    MetricValue pooled_auc;
    const bool has_pos = std::find(all_gold.begin(), all_gold.end(), true) != all_gold.end();
    const bool has_neg = std::find(all_gold.begin(), all_gold.end(), false) != all_gold.end();
    if (has_pos && has_neg) pooled_auc = roc_auc(all_scores, all_gold).auc;
    result.report = metrics_pooled(task_name, pooled, pooled_auc);
  } else {
    result.report = metrics_from_folds(task_name, fold_counts, fold_aucs);
  }

  {
    const bool has_pos = std::find(all_gold.begin(), all_gold.end(), true) != all_gold.end();
    const bool has_neg = std::find(all_gold.begin(), all_gold.end(), false) != all_gold.end();
    if (has_pos && has_neg) result.pooled_roc = roc_auc(all_scores, all_gold);
  }

  // pooled false-negative stratification
  std::vector<bool> hard(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) hard[i] = rows[i].score >= threshold;
  if (task == Task::GA) {
    result.area_table = fn_by_area(hard, records);
    result.area_table.task = task;
  }
  result.centrality_table = fn_by_centrality(hard, records);
  result.centrality_table.task = task;

  result.predictions = std::move(rows);
  result.records = std::move(records);
  result.labels = std::move(labels);
  return result;
}

inline std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

class RunLog {
 public:
  explicit RunLog(const std::string& path) : out_(path, std::ios::app) {}
  void line(const std::string& msg) {
    out_ << iso_now() << " " << msg << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace detail

// Ingest chain shared by the runner and the evaluators: parse, stereo-select,
// exclude, label.
inline LabeledSet load_labeled_set(const std::string& manifest_path, Task task,
                                   const DatasetOptions& opt = {}) {
  const auto records = parse_manifest(manifest_path);
  const auto selected = select_stereo(records);
  const auto kept = apply_exclusions(selected);
  return derive_labels(kept, task, opt);
}

// Metric-only evaluation of an external predictions file against a manifest.
inline EvaluationResult evaluate_predictions(const std::string& predictions_path,
                                             const std::string& manifest_path, Task task,
                                             double threshold = 0.5,
                                             const std::string& aggregate = "fold_mean",
                                             const DatasetOptions& opt = {}) {
  const auto rows = read_predictions(predictions_path);
  const auto set = load_labeled_set(manifest_path, task, opt);

  std::unordered_map<std::string, size_t> by_key;
  for (size_t i = 0; i < set.items.size(); ++i)
    by_key.emplace(record_key(set.items[i].record), i);

  std::vector<ImageRecord> records;
  std::vector<bool> labels;
  std::string unknown;
  for (const auto& r : rows) {
    auto it = by_key.find(r.image_key);
    if (it == by_key.end()) {
      unknown += unknown.empty() ? r.image_key : ", " + r.image_key;
      continue;
    }
    records.push_back(set.items[it->second].record);
    labels.push_back(set.items[it->second].label);
  }
  if (!unknown.empty())
    throw DataError("evaluate: unknown image keys: " + unknown);
  if (rows.empty()) throw DataError("evaluate: predictions file is empty");

  return detail::evaluate_scored(std::string(names::of(task)), task, rows,
                                 std::move(records), std::move(labels), threshold,
                                 aggregate);
}

// Pooled specialist gradings as the prediction source (scores are hard 0/1).
inline EvaluationResult evaluate_specialist(const std::string& manifest_path, Task task,
                                            const DatasetOptions& opt = {}) {
  const auto set = load_labeled_set(manifest_path, task, opt);
  std::vector<PredictionRow> rows;
  std::vector<ImageRecord> records;
  std::vector<bool> labels;
  std::vector<bool> specialist_labels, gold;
  for (const auto& item : set.items) {
    const auto& grade = item.record.grade;
    const std::optional<bool> graded =
        task == Task::GA ? grade.specialist_ga : grade.specialist_cga;
    if (!graded) continue;
    rows.push_back({record_key(item.record), *graded ? 1.0 : 0.0, 0});
    records.push_back(item.record);
    labels.push_back(item.label);
    specialist_labels.push_back(*graded);
    gold.push_back(item.label);
  }
  if (rows.empty())
    throw DataError("evaluate: no specialist-graded records in the manifest");

  auto result = detail::evaluate_scored(std::string(names::of(task)) + "_specialist",
                                        task, rows, std::move(records),
                                        std::move(labels), 0.5, "pooled");
  const auto sp = specialist_point(specialist_labels, gold);
  result.report.specialist = sp.point;
  return result;
}

// --- cross-validated experiment driver ---

struct RunOutcome {
  int run_index = 0;
  bool resumed = false;
  std::vector<PredictionRow> test_predictions;
};

inline void write_evaluation_outputs(const EvaluationResult& eval,
                                     const std::string& dir) {
  write_report(eval.report, dir + "/report.json");
  if (!eval.pooled_roc.points.empty())
    write_roc_csv(eval.pooled_roc, dir + "/roc_pooled.csv");
  if (!eval.area_table.rows.empty())
    write_error_table(eval.area_table, dir + "/fn_by_area.csv");
  if (!eval.centrality_table.rows.empty())
    write_error_table(eval.centrality_table, dir + "/fn_by_centrality.csv");
}

// Executes ingest -> split -> per-run train/predict -> metrics -> error
// tables -> aggregated report. Runs that already left predictions behind are
// skipped, which makes interrupted experiments resumable.
inline std::string run_crossval(const ExperimentConfig& config) {
  config.validate();
  const std::string out_dir = resolve_data_path(config.out_dir);
  std::filesystem::create_directories(out_dir);
  detail::RunLog log(out_dir + "/log.txt");

  {
    std::ofstream cfg_out(out_dir + "/config.json");
    if (!cfg_out) throw IoError("cannot write experiment config: " + out_dir);
    cfg_out << experiment_config_json(config).dump(2) << "\n";
  }

  const std::string manifest_path = resolve_data_path(config.manifest);
  log.line("ingest: " + manifest_path);
  const auto set = load_labeled_set(manifest_path, config.task, config.dataset);
  if (set.items.empty()) throw DataError("ingest: no records after selection");
  const std::string manifest_dir =
      std::filesystem::path(manifest_path).parent_path().string();

  // participant-atomic folds
  std::vector<std::string> participants;
  for (const auto& item : set.items) participants.push_back(item.record.participant_id);
  const auto folds = assign_folds(participants, config.k, config.fold_seed);
  write_fold_file(folds, out_dir + "/folds.csv");
  const auto schedule = rotation_schedule(config.k);
  log.line("split: " + std::to_string(folds.map.size()) + " participants into " +
           std::to_string(config.k) + " folds");

  // dataset summary (Table 1 style)
  {
    std::vector<ImageRecord> records;
    for (const auto& item : set.items) records.push_back(item.record);
    const auto summary = summarize(records, &folds.map, config.k);
    nlohmann::json js;
    js["images"] = summary.total.n_images;
    js["participants"] = summary.total.n_participants;
    js["ga_pct"] = summary.total.ga_pct();
    js["cga_pct"] = summary.total.cga_pct();
    auto& per_fold = js["per_fold"] = nlohmann::json::array();
    for (const auto& row : summary.per_fold)
      per_fold.push_back({{"fold", row.fold},
                          {"images", row.n_images},
                          {"participants", row.n_participants},
                          {"ga_pct", row.ga_pct()},
                          {"cga_pct", row.cga_pct()}});
    std::ofstream(out_dir + "/summary.json") << js.dump(2) << "\n";
  }

  // preprocess every image once
  log.line("preprocess: " + std::to_string(set.items.size()) + " images at " +
           std::to_string(config.preprocess.target_size) + " px");
  std::vector<Image> prepared(set.items.size());
  nn::parallel_for(set.items.size(), config.workers, [&](size_t i, int) {
    const std::string& rel = set.items[i].record.image_path;
    const std::string path =
        std::filesystem::path(rel).is_absolute() ? rel : manifest_dir + "/" + rel;
    prepared[i] = to_u8(preprocess_image(load_image(path), config.preprocess));
  });

  std::vector<PredictionRow> pooled_rows;
  std::vector<ImageRecord> pooled_records;
  std::vector<bool> pooled_labels;
  std::vector<size_t> pooled_index;

  for (const auto& run : schedule) {
    const std::string run_dir = out_dir + "/run_" + std::to_string(run.run_index);
    std::filesystem::create_directories(run_dir);

    std::vector<size_t> test_idx;
    for (size_t i = 0; i < set.items.size(); ++i)
      if (folds.fold_of(set.items[i].record.participant_id) == run.test_fold)
        test_idx.push_back(i);

    std::vector<PredictionRow> rows;
    const std::string pred_path = run_dir + "/predictions.csv";
    if (std::filesystem::exists(pred_path)) {
      rows = read_predictions(pred_path);
      log.line("run " + std::to_string(run.run_index) + ": resumed from " + pred_path);
    } else {
      try {
        std::vector<TrainItem> train_items, dev_items;
        for (size_t i = 0; i < set.items.size(); ++i) {
          const int fold = folds.fold_of(set.items[i].record.participant_id);
          if (fold == run.test_fold) continue;
          TrainItem item{prepared[i], set.items[i].label,
                         record_key(set.items[i].record)};
          if (fold == run.dev_fold) dev_items.push_back(std::move(item));
          else train_items.push_back(std::move(item));
        }

        log.line("run " + std::to_string(run.run_index) + ": train " +
                 std::to_string(train_items.size()) + " dev " +
                 std::to_string(dev_items.size()) + " test " +
                 std::to_string(test_idx.size()));

        Model model = build_model(config.model,
                                  mix_seed(config.training.seed,
                                           static_cast<std::uint64_t>(run.run_index)));
        TrainingConfig run_training = config.training;
        run_training.seed =
            mix_seed(config.training.seed, 0x500 + static_cast<std::uint64_t>(run.run_index));
        const auto history =
            train(model, train_items, dev_items, run_training, config.augment,
                  config.workers);
        log.line("run " + std::to_string(run.run_index) + ": stopped at epoch " +
                 std::to_string(history.stopped_epoch) + ", best " +
                 std::to_string(history.best_epoch));

        ModelArtifact artifact = make_artifact(std::move(model), run_training,
                                               config.preprocess, config.fold_seed);
        save_artifact(artifact, history, run_dir + "/model");

        std::vector<Image> test_images;
        for (size_t i : test_idx) test_images.push_back(prepared[i]);
        const auto scores =
            predict(artifact, test_images, config.preprocess.fingerprint(), config.workers);
        for (size_t t = 0; t < test_idx.size(); ++t)
          rows.push_back({record_key(set.items[test_idx[t]].record), scores[t],
                          run.test_fold});
        write_predictions(rows, pred_path);

        // per-run ROC + run summary
        std::vector<double> run_scores;
        std::vector<bool> run_labels;
        for (size_t t = 0; t < test_idx.size(); ++t) {
          run_scores.push_back(scores[t]);
          run_labels.push_back(set.items[test_idx[t]].label);
        }
        nlohmann::json run_json;
        run_json["run_index"] = run.run_index;
        run_json["test_fold"] = run.test_fold;
        run_json["dev_fold"] = run.dev_fold;
        run_json["train_folds"] = run.train_folds;
        run_json["stopped_epoch"] = history.stopped_epoch;
        run_json["best_epoch"] = history.best_epoch;
        const bool two_class =
            std::find(run_labels.begin(), run_labels.end(), true) != run_labels.end() &&
            std::find(run_labels.begin(), run_labels.end(), false) != run_labels.end();
        if (two_class) {
          const auto roc = roc_auc(run_scores, run_labels);
          write_roc_csv(roc, run_dir + "/roc.csv");
          run_json["auc"] = roc.auc;
        }
        std::ofstream(run_dir + "/run.json") << run_json.dump(2) << "\n";
      } catch (const Error& e) {
        throw Error(e.kind(), "run " + std::to_string(run.run_index) + ": " + e.what());
      }
    }

    std::unordered_map<std::string, size_t> key_to_idx;
    for (size_t i : test_idx) key_to_idx.emplace(record_key(set.items[i].record), i);
    for (const auto& row : rows) {
      auto it = key_to_idx.find(row.image_key);
      if (it == key_to_idx.end())
        throw DataError("run " + std::to_string(run.run_index) +
                        ": stale predictions file (unknown key " + row.image_key + ")");
      pooled_rows.push_back(row);
      pooled_records.push_back(set.items[it->second].record);
      pooled_labels.push_back(set.items[it->second].label);
      pooled_index.push_back(it->second);
    }
  }

  // fold-aggregated report + pooled error tables
  log.line("aggregate: " + std::to_string(pooled_rows.size()) + " test predictions");
  auto eval = detail::evaluate_scored(std::string(names::of(config.task)), config.task,
                                      pooled_rows, pooled_records, pooled_labels,
                                      config.threshold, config.aggregate);
  write_evaluation_outputs(eval, out_dir);
  write_predictions(eval.predictions, out_dir + "/predictions.csv");
  for (size_t f = 0; f < eval.per_fold_roc.size(); ++f)
    if (!eval.per_fold_roc[f].points.empty())
      write_roc_csv(eval.per_fold_roc[f],
                    out_dir + "/roc_fold_" + std::to_string(f) + ".csv");

  // false-negative sample for human review, with saliency overlays
  {
    std::vector<bool> hard(eval.predictions.size());
    for (size_t i = 0; i < eval.predictions.size(); ++i)
      hard[i] = eval.predictions[i].score >= config.threshold;
    const auto sample = sample_false_negatives(
        hard, eval.records, eval.labels,
        static_cast<size_t>(std::max(1, config.fn_sample_size)),
        mix_seed(config.fold_seed, 0xf2));
    if (!sample.empty()) {
      std::filesystem::create_directories(out_dir + "/saliency");
      std::unordered_map<std::string, size_t> key_to_pooled;
      for (size_t i = 0; i < eval.predictions.size(); ++i)
        key_to_pooled.emplace(eval.predictions[i].image_key, i);
      std::vector<std::string> image_paths, saliency_paths;
      for (const auto& key : sample) {
        const size_t pooled_i = key_to_pooled.at(key);
        const size_t item_i = pooled_index[pooled_i];
        const auto& record = eval.records[pooled_i];
        const int run_index = eval.predictions[pooled_i].fold;
        const auto artifact =
            load_artifact(out_dir + "/run_" + std::to_string(run_index) + "/model");
        const auto map = saliency_map(artifact, prepared[item_i],
                                      config.preprocess.fingerprint(),
                                      ChannelReduce::MAX_ABS, key);
        std::string safe_key = key;
        std::replace(safe_key.begin(), safe_key.end(), ':', '_');
        const std::string overlay_path = out_dir + "/saliency/" + safe_key + ".png";
        save_png(overlay(prepared[item_i], map, 0.45), overlay_path);
        FloatImage raw_map(map.height, map.width, 1);
        for (size_t v = 0; v < map.raw.size(); ++v)
          raw_map.data[v] = static_cast<float>(map.raw[v]);
        array_file::save(raw_map, out_dir + "/saliency/" + safe_key + ".gat");
        image_paths.push_back(record.image_path);
        saliency_paths.push_back(overlay_path);
      }
      export_review_template(sample, image_paths, saliency_paths,
                             out_dir + "/fn_review_template.csv");
    }
  }

  log.line("done");
  return out_dir;
}

}  // namespace gadet
