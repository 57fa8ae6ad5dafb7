// Command-line driver wiring the library into reproducible experiments.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence,
// 5 i/o error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gadet/experiment.hpp"
#include "gadet/saliency.hpp"
#include "gadet/synth.hpp"

namespace {

using namespace gadet;

struct CommonFlags {
  std::string config_path;
  std::string task;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment config JSON");
  cmd->add_option("--task", flags.task, "ga | cga | centrality");
  cmd->add_option("--profile", flags.profile, "paper | tiny");
  cmd->add_option("--seed", flags.seed, "seed override (folds + training)");
  cmd->add_option("--out", flags.out, "output directory");
}

// Config file first, then flags win.
ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig cfg;
  if (!flags.config_path.empty())
    cfg = load_experiment_config(resolve_data_path(flags.config_path));
  if (!flags.task.empty()) {
    const auto task = names::parse_task(flags.task);
    if (!task) throw ConfigError("unknown task '" + flags.task + "'");
    cfg.task = *task;
    cfg.model.task = *task;
  }
  if (!flags.profile.empty()) {
    const auto profile = parse_profile(flags.profile);
    if (!profile) throw ConfigError("unknown profile '" + flags.profile + "'");
    cfg.model.profile = *profile;
    if (*profile == Profile::PAPER) {
      cfg.model.input_size = 512;
      cfg.preprocess.target_size = 512;
    }
  }
  if (flags.seed) {
    cfg.fold_seed = *flags.seed;
    cfg.training.seed = *flags.seed;
  }
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  return cfg;
}

void print_summary(const DatasetSummary& summary) {
  std::printf("images %zu participants %zu GA %.1f%% (n=%zu) CGA %.1f%% (n=%zu)\n",
              summary.total.n_images, summary.total.n_participants,
              summary.total.ga_pct(), summary.total.n_ga, summary.total.cga_pct(),
              summary.total.n_cga);
  for (const auto& row : summary.per_fold)
    std::printf("  fold %d: images %zu participants %zu GA %.1f%% CGA %.1f%%\n",
                row.fold, row.n_images, row.n_participants, row.ga_pct(),
                row.cga_pct());
}

void print_report(const MetricsReport& report) {
  const auto show = [](const char* name, const MetricEntry& e) {
    if (!e.point) {
      std::printf("%-12s NOT_DEFINED\n", name);
      return;
    }
    if (e.ci_low && e.ci_high)
      std::printf("%-12s %.4f (%.4f, %.4f)\n", name, *e.point, *e.ci_low, *e.ci_high);
    else
      std::printf("%-12s %.4f\n", name, *e.point);
  };
  std::printf("task %s (%s over %d folds)\n", report.task.c_str(),
              report.aggregate.c_str(), report.n_folds);
  show("accuracy", report.accuracy);
  show("kappa", report.kappa);
  show("sensitivity", report.sensitivity);
  show("specificity", report.specificity);
  show("precision", report.precision);
  show("auc", report.auc);
  if (report.specialist)
    std::printf("specialist   sens %.4f spec %.4f\n", report.specialist->sensitivity,
                report.specialist->specificity);
}

int cmd_synth_gen(std::int64_t n, double prevalence, double cga_fraction,
                  std::uint64_t seed, const std::string& out, int image_size,
                  bool uniform_areas) {
  SynthDatasetOptions opt;
  opt.image_size = image_size;
  if (uniform_areas) opt.area_weights.assign(7, 1.0);
  const auto manifest = generate_dataset(n, prevalence, cga_fraction, seed,
                                         resolve_data_path(out), opt);
  std::printf("manifest: %s\n", manifest.c_str());
  return 0;
}

int cmd_ingest(const std::string& manifest, const std::string& fold_file) {
  const auto records = parse_manifest(resolve_data_path(manifest));
  const auto selected = select_stereo(records);
  const auto kept = apply_exclusions(selected);
  std::printf("parsed %zu rows, %zu after stereo selection, %zu after exclusions\n",
              records.size(), selected.size(), kept.size());
  if (!fold_file.empty()) {
    const auto folds = read_fold_file(resolve_data_path(fold_file));
    print_summary(summarize(kept, &folds.map, folds.k));
  } else {
    print_summary(summarize(kept));
  }
  return 0;
}

int cmd_split(const std::string& manifest, int k, std::uint64_t seed,
              const std::string& out) {
  const auto records = parse_manifest(resolve_data_path(manifest));
  std::vector<std::string> participants;
  for (const auto& r : records) participants.push_back(r.participant_id);
  const auto folds = assign_folds(participants, k, seed);
  write_fold_file(folds, resolve_data_path(out));
  std::printf("wrote %s (%zu participants, k=%d)\n", out.c_str(), folds.map.size(), k);
  return 0;
}

std::vector<Image> prepare_images(const LabeledSet& set, const std::string& manifest_path,
                                  const PreprocessConfig& pp, int workers) {
  const std::string dir = std::filesystem::path(manifest_path).parent_path().string();
  std::vector<Image> prepared(set.items.size());
  nn::parallel_for(set.items.size(), workers, [&](size_t i, int) {
    const std::string& rel = set.items[i].record.image_path;
    const std::string path =
        std::filesystem::path(rel).is_absolute() ? rel : dir + "/" + rel;
    prepared[i] = to_u8(preprocess_image(load_image(path), pp));
  });
  return prepared;
}

int cmd_train(const CommonFlags& flags, const std::string& manifest,
              const std::string& fold_file, int test_fold) {
  ExperimentConfig cfg = resolve_config(flags);
  if (!manifest.empty()) cfg.manifest = manifest;
  cfg.model.task = cfg.task;
  if (cfg.out_dir.empty()) throw ConfigError("train: --out is required");
  cfg.validate();

  const std::string manifest_path = resolve_data_path(cfg.manifest);
  const auto set = load_labeled_set(manifest_path, cfg.task, cfg.dataset);

  FoldAssignment folds;
  if (!fold_file.empty()) {
    folds = read_fold_file(resolve_data_path(fold_file));
  } else {
    std::vector<std::string> participants;
    for (const auto& item : set.items) participants.push_back(item.record.participant_id);
    folds = assign_folds(participants, cfg.k, cfg.fold_seed);
  }
  const int k = std::max(cfg.k, folds.k);
  const auto schedule = rotation_schedule(k);
  if (test_fold < 0 || test_fold >= k)
    throw ConfigError("train: --test-fold must be in [0, k)");
  const auto& run = schedule[static_cast<size_t>(test_fold)];

  const auto prepared = prepare_images(set, manifest_path, cfg.preprocess, cfg.workers);
  std::vector<TrainItem> train_items, dev_items;
  for (size_t i = 0; i < set.items.size(); ++i) {
    const int fold = folds.fold_of(set.items[i].record.participant_id);
    if (fold == run.test_fold) continue;
    TrainItem item{prepared[i], set.items[i].label, record_key(set.items[i].record)};
    if (fold == run.dev_fold) dev_items.push_back(std::move(item));
    else train_items.push_back(std::move(item));
  }

  Model model = build_model(cfg.model, cfg.training.seed);
  const auto history =
      train(model, train_items, dev_items, cfg.training, cfg.augment, cfg.workers);
  ModelArtifact artifact =
      make_artifact(std::move(model), cfg.training, cfg.preprocess, cfg.fold_seed);
  save_artifact(artifact, history, resolve_data_path(cfg.out_dir));
  std::printf("trained %s: stopped epoch %d, best epoch %d, artifact at %s\n",
              std::string(names::of(cfg.task)).c_str(), history.stopped_epoch,
              history.best_epoch, cfg.out_dir.c_str());
  return 0;
}

int cmd_predict(const std::string& artifact_dir, const std::string& manifest,
                const std::string& task_name, const std::string& out,
                const std::string& fold_file, int workers) {
  const auto artifact = load_artifact(resolve_data_path(artifact_dir));
  const auto task = names::parse_task(task_name);
  if (!task) throw ConfigError("unknown task '" + task_name + "'");
  const std::string manifest_path = resolve_data_path(manifest);
  const auto set = load_labeled_set(manifest_path, *task);
  const auto prepared = prepare_images(set, manifest_path, artifact.preprocess, workers);

  FoldAssignment folds;
  const bool have_folds = !fold_file.empty();
  if (have_folds) folds = read_fold_file(resolve_data_path(fold_file));

  const auto scores =
      predict(artifact, prepared, artifact.preprocess.fingerprint(), workers);
  std::vector<PredictionRow> rows;
  for (size_t i = 0; i < set.items.size(); ++i)
    rows.push_back({record_key(set.items[i].record), scores[i],
                    have_folds ? folds.fold_of(set.items[i].record.participant_id) : 0});
  write_predictions(rows, resolve_data_path(out));
  std::printf("wrote %zu predictions to %s\n", rows.size(), out.c_str());
  return 0;
}

int cmd_evaluate(const std::string& predictions, const std::string& manifest,
                 const std::string& task_name, double threshold,
                 const std::string& aggregate, bool use_specialist,
                 const std::string& out) {
  const auto task = names::parse_task(task_name);
  if (!task) throw ConfigError("unknown task '" + task_name + "'");
  EvaluationResult eval =
      use_specialist
          ? evaluate_specialist(resolve_data_path(manifest), *task)
          : evaluate_predictions(resolve_data_path(predictions),
                                 resolve_data_path(manifest), *task, threshold,
                                 aggregate);
  if (!out.empty()) {
    const std::string dir = resolve_data_path(out);
    std::filesystem::create_directories(dir);
    write_evaluation_outputs(eval, dir);
  }
  print_report(eval.report);
  return 0;
}

int cmd_analyze_errors(const std::string& predictions, const std::string& manifest,
                       const std::string& task_name, double threshold, int n,
                       std::uint64_t seed, const std::string& out) {
  const auto task = names::parse_task(task_name);
  if (!task) throw ConfigError("unknown task '" + task_name + "'");
  const auto eval = evaluate_predictions(resolve_data_path(predictions),
                                         resolve_data_path(manifest), *task, threshold);
  const std::string dir = resolve_data_path(out);
  std::filesystem::create_directories(dir);
  if (!eval.area_table.rows.empty()) {
    write_error_table(eval.area_table, dir + "/fn_by_area.csv");
    const auto mono = monotonicity_check(eval.area_table);
    std::printf("dose-response monotonicity: %s\n", mono.ok ? "holds" : "violated");
  }
  write_error_table(eval.centrality_table, dir + "/fn_by_centrality.csv");

  std::vector<bool> hard(eval.predictions.size());
  for (size_t i = 0; i < eval.predictions.size(); ++i)
    hard[i] = eval.predictions[i].score >= threshold;
  const auto sample = sample_false_negatives(hard, eval.records, eval.labels,
                                             static_cast<size_t>(std::max(1, n)), seed);
  std::vector<std::string> image_paths(sample.size()), saliency_paths(sample.size());
  std::unordered_map<std::string, size_t> by_key;
  for (size_t i = 0; i < eval.predictions.size(); ++i)
    by_key.emplace(eval.predictions[i].image_key, i);
  for (size_t i = 0; i < sample.size(); ++i)
    image_paths[i] = eval.records[by_key.at(sample[i])].image_path;
  export_review_template(sample, image_paths, saliency_paths,
                         dir + "/fn_review_template.csv");
  std::printf("sampled %zu false negatives into %s\n", sample.size(), dir.c_str());
  return 0;
}

int cmd_saliency(const std::string& artifact_dir, const std::string& image_path,
                 const std::string& out, double alpha) {
  const auto artifact = load_artifact(resolve_data_path(artifact_dir));
  const Image raw = load_image(resolve_data_path(image_path));
  const Image prepared = to_u8(preprocess_image(raw, artifact.preprocess));
  const auto map = saliency_map(artifact, prepared,
                                artifact.preprocess.fingerprint(),
                                ChannelReduce::MAX_ABS, image_path);
  const std::string dir = resolve_data_path(out);
  std::filesystem::create_directories(dir);
  const std::string stem = std::filesystem::path(image_path).stem().string();
  save_png(overlay(prepared, map, alpha), dir + "/" + stem + "_overlay.png");
  FloatImage raw_map(map.height, map.width, 1);
  for (size_t v = 0; v < map.raw.size(); ++v)
    raw_map.data[v] = static_cast<float>(map.raw[v]);
  array_file::save(raw_map, dir + "/" + stem + "_saliency.gat");
  std::printf("wrote %s/%s_overlay.png\n", dir.c_str(), stem.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geographic atrophy detection pipeline"};
  app.require_subcommand(1);

  // synth-gen
  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic fundus dataset");
  std::int64_t synth_n = 200;
  double synth_prev = 0.043, synth_cga = 0.563;
  std::uint64_t synth_seed = 0;
  std::string synth_out = "synth_data";
  int synth_size = 128;
  bool synth_uniform = false;
  synth->add_option("--n", synth_n, "number of images");
  synth->add_option("--ga-prevalence", synth_prev, "fraction of GA-positive rows");
  synth->add_option("--cga-fraction", synth_cga, "central fraction of GA rows");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--image-size", synth_size, "rendered image size in px");
  synth->add_flag("--uniform-areas", synth_uniform, "uniform area-category mix");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse a manifest and print a summary");
  std::string ingest_manifest, ingest_folds;
  ingest->add_option("--manifest", ingest_manifest, "manifest path")->required();
  ingest->add_option("--folds", ingest_folds, "fold file for per-fold summary");

  // split
  auto* split = app.add_subcommand("split", "assign participant-atomic folds");
  std::string split_manifest, split_out = "folds.csv";
  int split_k = 5;
  std::uint64_t split_seed = 0;
  split->add_option("--manifest", split_manifest, "manifest path")->required();
  split->add_option("--k", split_k, "number of folds");
  split->add_option("--seed", split_seed, "assignment seed");
  split->add_option("--out", split_out, "fold file to write");

  // train
  auto* train_cmd = app.add_subcommand("train", "train one cross-validation run");
  CommonFlags train_flags;
  add_common(train_cmd, train_flags);
  std::string train_manifest, train_folds;
  int train_test_fold = 0;
  train_cmd->add_option("--manifest", train_manifest, "manifest path");
  train_cmd->add_option("--folds", train_folds, "fold file (defaults to a fresh split)");
  train_cmd->add_option("--test-fold", train_test_fold, "fold reserved for testing");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "score a manifest with an artifact");
  std::string pred_artifact, pred_manifest, pred_task = "ga", pred_out = "predictions.csv",
              pred_folds;
  int pred_workers = 2;
  predict_cmd->add_option("--artifact", pred_artifact, "artifact directory")->required();
  predict_cmd->add_option("--manifest", pred_manifest, "manifest path")->required();
  predict_cmd->add_option("--task", pred_task, "ga | cga | centrality");
  predict_cmd->add_option("--out", pred_out, "predictions CSV to write");
  predict_cmd->add_option("--folds", pred_folds, "fold file for the fold column");
  predict_cmd->add_option("--workers", pred_workers, "parallel workers");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "metrics from a predictions file");
  std::string eval_pred, eval_manifest, eval_task = "ga", eval_agg = "fold_mean", eval_out;
  double eval_threshold = 0.5;
  bool eval_specialist = false;
  eval_cmd->add_option("--predictions", eval_pred, "predictions CSV");
  eval_cmd->add_option("--manifest", eval_manifest, "manifest path")->required();
  eval_cmd->add_option("--task", eval_task, "ga | cga | centrality");
  eval_cmd->add_option("--threshold", eval_threshold, "decision threshold");
  eval_cmd->add_option("--aggregate", eval_agg, "fold_mean | pooled");
  eval_cmd->add_flag("--specialist", eval_specialist,
                     "use manifest specialist columns as predictions");
  eval_cmd->add_option("--out", eval_out, "directory for report + tables");

  // analyze-errors
  auto* err_cmd = app.add_subcommand("analyze-errors", "false-negative stratification");
  std::string err_pred, err_manifest, err_task = "ga", err_out = "error_analysis";
  double err_threshold = 0.5;
  int err_n = 20;
  std::uint64_t err_seed = 0;
  err_cmd->add_option("--predictions", err_pred, "predictions CSV")->required();
  err_cmd->add_option("--manifest", err_manifest, "manifest path")->required();
  err_cmd->add_option("--task", err_task, "ga | cga | centrality");
  err_cmd->add_option("--threshold", err_threshold, "decision threshold");
  err_cmd->add_option("--n", err_n, "review sample size");
  err_cmd->add_option("--seed", err_seed, "sampling seed");
  err_cmd->add_option("--out", err_out, "output directory");

  // saliency
  auto* sal_cmd = app.add_subcommand("saliency", "saliency map + overlay for one image");
  std::string sal_artifact, sal_image, sal_out = "saliency_out";
  double sal_alpha = 0.45;
  sal_cmd->add_option("--artifact", sal_artifact, "artifact directory")->required();
  sal_cmd->add_option("--image", sal_image, "raw image path")->required();
  sal_cmd->add_option("--out", sal_out, "output directory");
  sal_cmd->add_option("--alpha", sal_alpha, "overlay blend weight");

  // run-crossval
  auto* cv_cmd = app.add_subcommand("run-crossval", "full cross-validated experiment");
  CommonFlags cv_flags;
  add_common(cv_cmd, cv_flags);
  std::string cv_manifest;
  std::optional<int> cv_k;
  cv_cmd->add_option("--manifest", cv_manifest, "manifest path");
  cv_cmd->add_option("--k", cv_k, "number of folds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return cmd_synth_gen(synth_n, synth_prev, synth_cga, synth_seed, synth_out,
                           synth_size, synth_uniform);
    if (ingest->parsed()) return cmd_ingest(ingest_manifest, ingest_folds);
    if (split->parsed()) return cmd_split(split_manifest, split_k, split_seed, split_out);
    if (train_cmd->parsed())
      return cmd_train(train_flags, train_manifest, train_folds, train_test_fold);
    if (predict_cmd->parsed())
      return cmd_predict(pred_artifact, pred_manifest, pred_task, pred_out, pred_folds,
                         pred_workers);
    if (eval_cmd->parsed())
      return cmd_evaluate(eval_pred, eval_manifest, eval_task, eval_threshold, eval_agg,
                          eval_specialist, eval_out);
    if (err_cmd->parsed())
      return cmd_analyze_errors(err_pred, err_manifest, err_task, err_threshold, err_n,
                                err_seed, err_out);
    if (sal_cmd->parsed()) return cmd_saliency(sal_artifact, sal_image, sal_out, sal_alpha);
    if (cv_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(cv_flags);
      if (!cv_manifest.empty()) cfg.manifest = cv_manifest;
      if (cv_k) cfg.k = *cv_k;
      cfg.model.task = cfg.task;
      const auto dir = run_crossval(cfg);
      const auto report = read_report(dir + "/report.json");
      print_report(report);
      std::printf("experiment directory: %s\n", dir.c_str());
      return 0;
    }
  } catch (const gadet::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
