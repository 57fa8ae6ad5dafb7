// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with the measured quantities.

#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "gadet/dataset.hpp"
#include "gadet/error_analysis.hpp"
#include "gadet/experiment.hpp"
#include "gadet/folds.hpp"
#include "gadet/metrics.hpp"
#include "gadet/preprocess.hpp"
#include "gadet/saliency.hpp"
#include "gadet/synth.hpp"

using namespace gadet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report_line(int criterion, bool ok, const std::string& name,
                 const std::string& detail) {
  std::printf("criterion %2d [%s] %s%s%s\n", criterion, ok ? "PASS" : "FAIL",
              name.c_str(), detail.empty() ? "" : ": ", detail.c_str());
  std::fflush(stdout);
}

double pair_count_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

double definitional_kappa(const std::vector<bool>& pred, const std::vector<bool>& gold) {
  const double n = static_cast<double>(pred.size());
  double agree = 0, ppos = 0, gpos = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == gold[i]) agree += 1;
    if (pred[i]) ppos += 1;
    if (gold[i]) gpos += 1;
  }
  const double po = agree / n;
  const double pe =
      (ppos / n) * (gpos / n) + ((n - ppos) / n) * ((n - gpos) / n);
  return (po - pe) / (1.0 - pe);
}

// Shared state for criteria 8 and 9: one synthetic end-to-end run.
struct EndToEndRun {
  std::string dir;
  double wall_seconds = 0.0;
  double mean_auc = 0.0;
  MonotonicityResult monotonicity;
};

const EndToEndRun& end_to_end_run() {
  static const EndToEndRun run = [] {
    EndToEndRun r;
    const auto base = std::filesystem::temp_directory_path() / "gadet_acceptance";
    std::filesystem::remove_all(base);
    std::filesystem::create_directories(base);

    const auto start = Clock::now();
    SynthDatasetOptions synth_opt;
    synth_opt.image_size = 128;
    const auto manifest = generate_dataset(2000, 0.25, 0.563, 2024,
                                           (base / "data").string(), synth_opt);

    ExperimentConfig cfg;
    cfg.task = Task::GA;
    cfg.manifest = manifest;
    cfg.out_dir = (base / "exp").string();
    cfg.preprocess.target_size = 128;
    cfg.k = 5;
    cfg.fold_seed = 2024;
    cfg.model.profile = Profile::TINY;
    cfg.model.input_size = 128;
    cfg.model.task = Task::GA;
    cfg.training.learning_rate = 1e-4;
    cfg.training.batch_size = 32;
    cfg.training.max_epochs = 8;
    cfg.training.patience_epochs = 5;
    cfg.training.seed = 2024;
    cfg.workers = 2;
    r.dir = run_crossval(cfg);
    r.wall_seconds = seconds_since(start);

    const auto report = read_report(r.dir + "/report.json");
    double sum = 0.0;
    int n = 0;
    for (const auto& v : report.auc.per_fold)
      if (v) {
        sum += *v;
        ++n;
      }
    r.mean_auc = n ? sum / n : 0.0;

    // pooled dose-response table from the experiment's own predictions
    const auto eval = evaluate_predictions(r.dir + "/predictions.csv", manifest,
                                           Task::GA, 0.5);
    r.monotonicity = monotonicity_check(eval.area_table);
    return r;
  }();
  return run;
}

}  // namespace

TEST_CASE("criterion 1: metric oracle equivalence") {
  const auto start = Clock::now();
  Rng rng(10001);
  double max_auc_err = 0.0, max_kappa_err = 0.0;
  int instances = 0;
  while (instances < 1000) {
    const size_t n = 2 + uniform_index(rng, 199);
    std::vector<double> scores(n);
    std::vector<bool> labels(n), preds(n);
    bool has_pos = false, has_neg = false;
    for (size_t i = 0; i < n; ++i) {
      scores[i] = std::floor(uniform_unit(rng) * 10.0) / 10.0;  // heavy ties
      labels[i] = coin_flip(rng);
      preds[i] = scores[i] >= 0.5;
      (labels[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    ++instances;

    const auto roc = roc_auc(scores, labels);
    max_auc_err = std::max(max_auc_err, std::abs(roc.auc - pair_count_auc(scores, labels)));

    ConfusionCounts c;
    for (size_t i = 0; i < n; ++i) {
      if (preds[i] && labels[i]) c.tp++;
      else if (preds[i]) c.fp++;
      else if (labels[i]) c.fn++;
      else c.tn++;
    }
    const auto m = binary_metrics(c);
    if (m.kappa)
      max_kappa_err =
          std::max(max_kappa_err, std::abs(*m.kappa - definitional_kappa(preds, labels)));
  }
  const double elapsed = seconds_since(start);
  const bool ok = max_auc_err <= 1e-9 && max_kappa_err <= 1e-9 && elapsed < 30.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "max AUC err %.2e, max kappa err %.2e, %.1fs over 1000 instances",
                max_auc_err, max_kappa_err, elapsed);
  report_line(1, ok, "trapezoid AUC = pair-counting AUC; kappa = definitional kappa",
              detail);
  CHECK(max_auc_err <= 1e-9);
  CHECK(max_kappa_err <= 1e-9);
  CHECK(elapsed < 30.0);
}

TEST_CASE("criterion 2: hand-value confusion check") {
  const auto m = binary_metrics({40, 20, 30, 10});
  const bool ok = m.accuracy == 0.7 && m.sensitivity == 0.8 && m.specificity == 0.6 &&
                  m.precision && std::abs(*m.precision - 2.0 / 3.0) < 1e-15 &&
                  m.kappa == 0.4;
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "acc %.3f sens %.3f spec %.3f prec %.3f kappa %.3f",
                m.accuracy.value_or(-1), m.sensitivity.value_or(-1),
                m.specificity.value_or(-1), m.precision.value_or(-1),
                m.kappa.value_or(-1));
  report_line(2, ok, "confusion (40,10,20,30) metrics exact", detail);
  CHECK(ok);
}

TEST_CASE("criterion 3: participant leakage never occurs") {
  const auto start = Clock::now();
  Rng rng(30003);
  bool disjoint_ok = true, balance_ok = true;
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 3 + static_cast<int>(uniform_index(rng, 4));
    const size_t n_participants =
        static_cast<size_t>(k) + uniform_index(rng, 300 - static_cast<size_t>(k));
    std::vector<std::string> participants;
    std::vector<int> images_of;  // participant index per image
    for (size_t p = 0; p < n_participants; ++p) {
      participants.push_back("P" + std::to_string(p));
      const size_t n_images = 1 + uniform_index(rng, 10);
      for (size_t i = 0; i < n_images; ++i) images_of.push_back(static_cast<int>(p));
    }
    const auto folds = assign_folds(participants, k, rng());

    std::vector<size_t> counts(static_cast<size_t>(k), 0);
    for (const auto& [id, fold] : folds.map) counts[static_cast<size_t>(fold)]++;
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (*hi - *lo > 1) balance_ok = false;

    for (const auto& run : rotation_schedule(k)) {
      std::set<std::string> train_p, dev_p, test_p;
      for (int img : images_of) {
        const auto& pid = participants[static_cast<size_t>(img)];
        const int fold = folds.fold_of(pid);
        if (fold == run.test_fold) test_p.insert(pid);
        else if (fold == run.dev_fold) dev_p.insert(pid);
        else train_p.insert(pid);
      }
      for (const auto& pid : test_p)
        if (train_p.count(pid) || dev_p.count(pid)) disjoint_ok = false;
      for (const auto& pid : dev_p)
        if (train_p.count(pid)) disjoint_ok = false;
    }
  }
  const double elapsed = seconds_since(start);
  const bool ok = disjoint_ok && balance_ok && elapsed < 60.0;
  char detail[120];
  std::snprintf(detail, sizeof(detail), "500 manifests, %.1fs", elapsed);
  report_line(3, ok, "train/dev/test participant sets pairwise disjoint, folds balanced",
              detail);
  CHECK(disjoint_ok);
  CHECK(balance_ok);
  CHECK(elapsed < 60.0);
}

TEST_CASE("criterion 4: published error tables reproduce exactly") {
  struct Block {
    AreaCategory cat;
    int total, missed;
  };
  const std::vector<Block> blocks = {
      {AreaCategory::QUESTIONABLE, 275, 173},  {AreaCategory::LT_I2, 38, 30},
      {AreaCategory::I2_TO_O2, 125, 76},       {AreaCategory::O2_TO_HALF_DA, 192, 90},
      {AreaCategory::HALF_TO_1_DA, 297, 79},   {AreaCategory::ONE_TO_2_DA, 403, 95},
      {AreaCategory::GE_2_DA, 1255, 248}};
  std::vector<ImageRecord> records;
  std::vector<bool> preds;
  for (const auto& b : blocks) {
    for (int i = 0; i < b.total; ++i) {
      ImageRecord r;
      r.participant_id = "A" + std::to_string(records.size());
      r.grade.ga_present = true;
      r.grade.centrality = CentralityCategory::NON_CENTRAL;
      r.grade.area_category = b.cat;
      records.push_back(r);
      preds.push_back(i >= b.missed);
    }
  }
  const auto area = fn_by_area(preds, records);
  const std::vector<std::string> expected_area = {"62.9", "78.9", "60.8", "46.9",
                                                  "26.6", "23.6", "19.8"};
  bool ok = true;
  std::string got;
  for (size_t i = 0; i < expected_area.size(); ++i) {
    const auto rate = rate_percent_1dp(area.rows[i].rate());
    got += (i ? " " : "") + rate;
    if (rate != expected_area[i]) ok = false;
  }

  records.clear();
  preds.clear();
  const std::vector<std::pair<CentralityCategory, std::pair<int, int>>> cblocks = {
      {CentralityCategory::DEFINITE_CENTER_POINT, {1297, 279}},
      {CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD, {158, 50}}};
  for (const auto& [cat, counts] : cblocks) {
    for (int i = 0; i < counts.first; ++i) {
      ImageRecord r;
      r.participant_id = "C" + std::to_string(records.size());
      r.grade.ga_present = true;
      r.grade.centrality = cat;
      r.grade.area_category = AreaCategory::HALF_TO_1_DA;
      records.push_back(r);
      preds.push_back(i >= counts.second);
    }
  }
  const auto central = fn_by_centrality(preds, records);
  const auto c0 = rate_percent_1dp(central.rows[0].rate());
  const auto c1 = rate_percent_1dp(central.rows[1].rate());
  if (c0 != "21.5" || c1 != "31.6") ok = false;

  report_line(4, ok, "area rates and centrality rates match the published tables",
              "area [" + got + "], centrality [" + c0 + " " + c1 + "]");
  CHECK(ok);
}

TEST_CASE("criterion 5: fold aggregation of the published AUC values") {
  const std::vector<double> aucs = {0.933, 0.952, 0.962, 0.964, 0.976};
  const auto iv = aggregate_folds(aucs);

  // independent closed form: mean +/- t(0.975,4) * sd / sqrt(5)
  double mean = 0;
  for (double v : aucs) mean += v;
  mean /= 5.0;
  double ss = 0;
  for (double v : aucs) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / 4.0);
  const double expected_half = 2.7764451051977987 * sd / std::sqrt(5.0);

  const auto degenerate = aggregate_folds({0.9, 0.9, 0.9, 0.9, 0.9});

  const bool ok = std::abs(iv.mean - 0.9574) < 1e-12 &&
                  std::abs((iv.ci_high - iv.mean) - expected_half) < 1e-12 &&
                  std::abs((iv.mean - iv.ci_low) - expected_half) < 1e-12 &&
                  degenerate.ci_low == degenerate.ci_high;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "mean %.6f, CI (%.6f, %.6f)", iv.mean,
                iv.ci_low, iv.ci_high);
  report_line(5, ok, "published AUCs aggregate to 0.9574 with a t-interval", detail);
  CHECK(ok);
}

TEST_CASE("criterion 6: preprocessing determinism and oracle agreement") {
  bool ok = true;
  std::string failure;

  // byte stability
  PreprocessConfig cfg;
  cfg.target_size = 64;
  Image raw(90, 72, 3);
  Rng rng(606);
  for (auto& b : raw.data) b = static_cast<std::uint8_t>(uniform_index(rng, 256));
  const auto a = preprocess_image(raw, cfg);
  const auto b = preprocess_image(raw, cfg);
  if (a.data != b.data) {
    ok = false;
    failure = "pipeline not byte-stable";
  }

  // constant image -> offset everywhere
  PreprocessConfig small;
  small.target_size = 8;
  small.gaussian_sigma = 1.0;
  FloatImage constant(8, 8, 3, 77.f);
  for (float v : color_normalize(constant, small).data)
    if (v != 128.f) {
      ok = false;
      failure = "constant image did not normalize to the offset";
      break;
    }

  // 8x8 dense-convolution oracle within one intensity unit
  FloatImage spike(8, 8, 3, 10.f);
  spike.at(3, 4, 0) = 250.f;
  const auto fast = color_normalize(spike, small);
  {
    const double sigma = 1.0;
    const int radius = 3;
    const int size = 2 * radius + 1;
    std::vector<double> kernel(static_cast<size_t>(size) * size);
    double sum = 0;
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        const double w = std::exp(-0.5 * (dy * dy + dx * dx) / (sigma * sigma));
        kernel[static_cast<size_t>((dy + radius) * size + dx + radius)] = w;
        sum += w;
      }
    for (auto& w : kernel) w /= sum;
    const auto reflect = [](int i, int n) {
      const int period = 2 * (n - 1);
      i = ((i % period) + period) % period;
      return i < n ? i : period - i;
    };
    double max_err = 0.0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        for (int c = 0; c < 3; ++c) {
          double blurred = 0;
          for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx)
              blurred += kernel[static_cast<size_t>((dy + radius) * size + dx + radius)] *
                         spike.at(reflect(y + dy, 8), reflect(x + dx, 8), c);
          const double expect = std::clamp(4.0 * (spike.at(y, x, c) - blurred) + 128.0,
                                           0.0, 255.0);
          max_err = std::max(max_err, std::abs(expect - fast.at(y, x, c)));
        }
    if (max_err > 1.0) {
      ok = false;
      failure = "dense-convolution oracle disagrees";
    }
  }

  report_line(6, ok, "crop/resize/normalize deterministic and oracle-consistent", failure);
  CHECK(ok);
}

TEST_CASE("criterion 7: saliency gradients match finite differences") {
  PreprocessConfig pp;
  pp.target_size = 16;
  ModelConfig mc;
  mc.profile = Profile::TINY;
  mc.input_size = 16;
  Model model = build_model(mc, 707);
  TrainingConfig tc;
  const ModelArtifact artifact = make_artifact(std::move(model), tc, pp, 707);

  Rng rng(711);
  double worst = 0.0;
  for (int image = 0; image < 10; ++image) {
    Image raw(16, 16, 3);
    for (auto& b : raw.data) b = static_cast<std::uint8_t>(uniform_index(rng, 256));
    const nn::Tensor x = nn::image_to_tensor(to_float(raw));
    const nn::Tensor grad = input_gradient(artifact.model, x);

    const double h = 1e-6;
    double num = 0, den = 0;
    for (size_t i = 0; i < x.v.size(); ++i) {
      nn::Tensor xp = x, xm = x;
      xp.v[i] += h;
      xm.v[i] -= h;
      const double fd = (artifact.model.score(xp) - artifact.model.score(xm)) / (2 * h);
      num += (grad.v[i] - fd) * (grad.v[i] - fd);
      den += fd * fd;
    }
    worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
  }
  const bool ok = worst < 1e-3;
  char detail[80];
  std::snprintf(detail, sizeof(detail), "worst relative error %.2e over 10 images", worst);
  report_line(7, ok, "input gradients vs central finite differences", detail);
  CHECK(ok);
}

TEST_CASE("criterion 8: synthetic end-to-end cross-validation") {
  const auto& run = end_to_end_run();
  const bool ok = run.mean_auc >= 0.90 && run.wall_seconds <= 900.0;
  char detail[120];
  std::snprintf(detail, sizeof(detail), "mean test AUC %.4f, wall %.0fs", run.mean_auc,
                run.wall_seconds);
  report_line(8, ok, "2000 synthetic images, TINY model, 5-fold CV", detail);
  CHECK(run.mean_auc >= 0.90);
  CHECK(run.wall_seconds <= 900.0);
}

TEST_CASE("criterion 9: dose-response monotonicity in the end-to-end run") {
  const auto& run = end_to_end_run();
  const bool ok = run.monotonicity.ok;
  std::string detail = "false-negative rate non-increasing from LT_I2 to GE_2_DA";
  if (!ok && run.monotonicity.first_violation)
    detail = "violated at row " + std::to_string(*run.monotonicity.first_violation);
  report_line(9, ok, "area-stratified false negatives", detail);
  CHECK(ok);
}

TEST_CASE("criterion 10: label hierarchy on random manifests") {
  Rng rng(1010);
  bool ok = true;
  for (int trial = 0; trial < 100 && ok; ++trial) {
    std::vector<ImageRecord> records;
    const size_t n = 10 + uniform_index(rng, 120);
    for (size_t i = 0; i < n; ++i) {
      ImageRecord r;
      r.participant_id = "H" + std::to_string(i / 3);
      r.visit = "v" + std::to_string(i % 3);
      r.eye = coin_flip(rng) ? Eye::LEFT : Eye::RIGHT;
      const double u = uniform_unit(rng);
      if (u < 0.4) {
        r.grade.ga_present = true;
        const double c = uniform_unit(rng);
        r.grade.centrality = c < 0.4   ? CentralityCategory::NON_CENTRAL
                             : c < 0.9 ? CentralityCategory::DEFINITE_CENTER_POINT
                                       : CentralityCategory::QUESTIONABLE_CP_DEFINITE_SUBFIELD;
        r.grade.area_category = static_cast<AreaCategory>(uniform_index(rng, 7));
      }
      records.push_back(r);
    }
    const auto ga = derive_labels(records, Task::GA);
    const auto cga = derive_labels(records, Task::CGA);
    const auto cent = derive_labels(records, Task::CENTRALITY);

    std::set<std::string> ga_pos, cent_keys;
    for (const auto& item : ga.items)
      if (item.label) ga_pos.insert(record_key(item.record));
    for (const auto& item : cent.items) cent_keys.insert(record_key(item.record));

    for (size_t i = 0; i < cga.items.size(); ++i)
      if (cga.items[i].label && !ga.items[i].label) ok = false;  // CGA implies GA
    if (cent_keys != ga_pos) ok = false;  // centrality set = GA positives
  }
  report_line(10, ok, "CGA positives within GA positives; centrality set = GA positives",
              "100 random manifests");
  CHECK(ok);
}
