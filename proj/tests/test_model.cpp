#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "gadet/model.hpp"
#include "gadet/preprocess.hpp"

using namespace gadet;

namespace {

// Brightness-separable toy set: positives bright, negatives dark.
std::vector<TrainItem> brightness_set(size_t n, int size, double pos_frac, Rng& rng) {
  std::vector<TrainItem> items;
  for (size_t i = 0; i < n; ++i) {
    const bool label = uniform_unit(rng) < pos_frac;
    Image img(size, size, 3);
    const int base = label ? 170 : 80;
    for (auto& b : img.data)
      b = static_cast<std::uint8_t>(
          std::clamp<int>(base + static_cast<int>(uniform_index(rng, 41)) - 20, 0, 255));
    items.push_back({std::move(img), label, "img" + std::to_string(i)});
  }
  return items;
}

TrainingConfig fast_config(std::uint64_t seed) {
  TrainingConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 32;
  cfg.max_epochs = 12;
  cfg.patience_epochs = 5;
  cfg.seed = seed;
  return cfg;
}

AugmentConfig no_augment() {
  AugmentConfig cfg;
  cfg.rotation_degrees = 0;
  cfg.width_shift_frac = 0;
  cfg.height_shift_frac = 0;
  cfg.horizontal_flip = false;
  cfg.vertical_flip = false;
  return cfg;
}

}  // namespace

TEST_CASE("model construction") {
  SECTION("tiny profile stays under the parameter bound") {
    ModelConfig cfg;
    cfg.profile = Profile::TINY;
    cfg.input_size = 128;
    const Model m = build_model(cfg, 1);
    CHECK(m.param_count() < 500000);
    CHECK(m.param_count() > 0);
  }
  SECTION("tiny profile emits one probability") {
    ModelConfig cfg;
    cfg.profile = Profile::TINY;
    cfg.input_size = 64;
    const Model m = build_model(cfg, 1);
    Rng rng(3);
    FloatImage img(64, 64, 3);
    for (auto& v : img.data) v = static_cast<float>(uniform_index(rng, 256));
    const double s = m.score(nn::image_to_tensor(img));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
  SECTION("unknown profile name is rejected") {
    CHECK_FALSE(parse_profile("huge").has_value());
    CHECK(parse_profile("tiny") == Profile::TINY);
    CHECK(parse_profile("PAPER") == Profile::PAPER);
  }
  SECTION("profile / input-size contract") {
    ModelConfig cfg;
    cfg.profile = Profile::PAPER;
    cfg.input_size = 128;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.profile = Profile::TINY;
    cfg.input_size = 100;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("missing pretrained weights is an explicit error") {
    ModelConfig cfg;
    cfg.profile = Profile::PAPER;
    cfg.input_size = 512;
    cfg.pretrained = true;
    cfg.pretrained_weights = "/nonexistent/weights.bin";
    CHECK_THROWS_WITH(build_model(cfg, 1),
                      Catch::Matchers::ContainsSubstring("pretrained weights unavailable"));
  }
}

TEST_CASE("early stopping rule") {
  SECTION("strictly increasing dev loss stops at epoch patience+1 with best 1") {
    EarlyStopper stopper(5);
    bool stopped = false;
    int stopped_epoch = 0;
    for (int epoch = 1; epoch <= 50 && !stopped; ++epoch) {
      stopped = stopper.observe(epoch, 1.0 + 0.1 * epoch);
      stopped_epoch = epoch;
    }
    CHECK(stopped);
    CHECK(stopped_epoch == 6);
    CHECK(stopper.best_epoch() == 1);
  }
  SECTION("improvement resets the patience window") {
    EarlyStopper stopper(2);
    CHECK_FALSE(stopper.observe(1, 1.0));
    CHECK_FALSE(stopper.observe(2, 1.1));
    CHECK_FALSE(stopper.observe(3, 0.9));
    CHECK_FALSE(stopper.observe(4, 0.95));
    CHECK(stopper.observe(5, 0.99));
    CHECK(stopper.best_epoch() == 3);
  }
  SECTION("ties do not count as improvement") {
    EarlyStopper stopper(2);
    CHECK_FALSE(stopper.observe(1, 1.0));
    CHECK_FALSE(stopper.observe(2, 1.0));
    CHECK(stopper.observe(3, 1.0));
    CHECK(stopper.best_epoch() == 1);
  }
}

TEST_CASE("training configuration defaults match the published recipe") {
  const TrainingConfig cfg;
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.patience_epochs == 5);
  CHECK_THROWS_AS(
      [] {
        TrainingConfig bad;
        bad.patience_epochs = 50;
        bad.max_epochs = 10;
        bad.validate();
      }(),
      ConfigError);
}

TEST_CASE("tiny model learns a brightness-separable set") {
  Rng rng(2025);
  auto train_items = brightness_set(500, 16, 0.5, rng);
  auto dev_items = brightness_set(120, 16, 0.5, rng);

  ModelConfig mc;
  mc.profile = Profile::TINY;
  mc.input_size = 16;
  Model model = build_model(mc, 7);

  const auto history = train(model, train_items, dev_items, fast_config(7), no_augment(), 2);
  REQUIRE_FALSE(history.epochs.empty());
  CHECK(history.best_epoch <= history.stopped_epoch);
  CHECK(history.epochs.back().dev_accuracy >= 0.0);

  const double best_acc = history.epochs[static_cast<size_t>(history.best_epoch - 1)].dev_accuracy;
  CHECK(best_acc >= 0.95);

  // best epoch minimizes the recorded dev losses
  double min_loss = history.epochs[0].dev_loss;
  for (const auto& e : history.epochs) min_loss = std::min(min_loss, e.dev_loss);
  CHECK(history.epochs[static_cast<size_t>(history.best_epoch - 1)].dev_loss == min_loss);
}

TEST_CASE("training rejects degenerate inputs") {
  Rng rng(5);
  auto items = brightness_set(40, 16, 0.5, rng);
  std::vector<TrainItem> single_class;
  for (const auto& it : items)
    if (!it.label) single_class.push_back(it);

  ModelConfig mc;
  mc.profile = Profile::TINY;
  mc.input_size = 16;
  Model model = build_model(mc, 1);

  CHECK_THROWS_AS(train(model, single_class, items, fast_config(1), no_augment(), 1),
                  DataError);
  CHECK_THROWS_AS(train(model, items, {}, fast_config(1), no_augment(), 1), DataError);
}

TEST_CASE("training divergence is reported with its epoch") {
  Rng rng(6);
  auto train_items = brightness_set(64, 16, 0.5, rng);
  auto dev_items = brightness_set(16, 16, 0.5, rng);

  ModelConfig mc;
  mc.profile = Profile::TINY;
  mc.input_size = 16;
  Model model = build_model(mc, 1);

  TrainingConfig cfg = fast_config(1);
  cfg.learning_rate = 1e200;  // guaranteed overflow into non-finite logits
  cfg.max_epochs = 5;
  cfg.patience_epochs = 5;
  CHECK_THROWS_AS(train(model, train_items, dev_items, cfg, no_augment(), 1),
                  DivergenceError);
}

TEST_CASE("training is reproducible for fixed seeds") {
  Rng rng(77);
  auto train_items = brightness_set(80, 16, 0.5, rng);
  auto dev_items = brightness_set(24, 16, 0.5, rng);

  TrainingConfig cfg = fast_config(42);
  cfg.max_epochs = 3;
  cfg.patience_epochs = 3;

  ModelConfig mc;
  mc.profile = Profile::TINY;
  mc.input_size = 16;

  Model a = build_model(mc, 42);
  Model b = build_model(mc, 42);
  const auto ha = train(a, train_items, dev_items, cfg, {}, 2);
  const auto hb = train(b, train_items, dev_items, cfg, {}, 2);

  REQUIRE(ha.epochs.size() == hb.epochs.size());
  for (size_t i = 0; i < ha.epochs.size(); ++i) {
    CHECK(ha.epochs[i].train_loss == hb.epochs[i].train_loss);
    CHECK(ha.epochs[i].dev_loss == hb.epochs[i].dev_loss);
  }
  CHECK(ha.best_epoch == hb.best_epoch);
}

TEST_CASE("head gradients match finite differences on a 4-sample batch") {
  Rng rng(99);
  auto items = brightness_set(4, 16, 0.5, rng);
  items[0].label = true;
  items[1].label = false;
  items[2].label = true;
  items[3].label = false;

  ModelConfig mc;
  mc.profile = Profile::TINY;
  mc.input_size = 16;
  Model model = build_model(mc, 3);

  std::vector<std::vector<double>*> params;
  model.net->collect_params(params);
  // final dense layer contributes the last two parameter tensors
  auto* head_w = params[params.size() - 2];
  auto* head_b = params[params.size() - 1];

  const auto batch_loss = [&] {
    double total = 0;
    for (const auto& it : items)
      total += nn::bce_with_logits(model.logit(detail::item_tensor(it.image)), it.label);
    return total / 4.0;
  };

  nn::GradAccum grads;
  for (const auto& it : items) {
    nn::Tape tape;
    const double z = model.logit(detail::item_tensor(it.image), &tape);
    nn::Tensor dy(1, 1, 1, nn::bce_logit_grad(z, it.label));
    model.net->backward(dy, tape, grads);
  }
  grads.scale(0.25);

  for (auto* param : {head_w, head_b}) {
    const auto* g = grads.find(*param);
    REQUIRE(g != nullptr);
    const double h = 1e-5;
    double num = 0, den = 0;
    for (size_t j = 0; j < param->size(); ++j) {
      const double orig = (*param)[j];
      (*param)[j] = orig + h;
      const double lp = batch_loss();
      (*param)[j] = orig - h;
      const double lm = batch_loss();
      (*param)[j] = orig;
      const double fd = (lp - lm) / (2 * h);
      num += ((*g)[j] - fd) * ((*g)[j] - fd);
      den += fd * fd;
    }
    CHECK(std::sqrt(num / std::max(den, 1e-300)) < 1e-3);
  }
}

TEST_CASE("prediction contract") {
  Rng rng(31);
  auto train_items = brightness_set(60, 16, 0.5, rng);
  auto dev_items = brightness_set(20, 16, 0.5, rng);

  ModelConfig mc;
  mc.profile = Profile::TINY;
  mc.input_size = 16;
  Model model = build_model(mc, 11);
  TrainingConfig cfg = fast_config(11);
  cfg.max_epochs = 2;
  cfg.patience_epochs = 2;
  const auto history = train(model, train_items, dev_items, cfg, no_augment(), 2);

  PreprocessConfig pp;
  pp.target_size = 16;
  ModelArtifact artifact = make_artifact(std::move(model), cfg, pp, 5);

  std::vector<Image> images;
  for (int i = 0; i < 7; ++i) images.push_back(dev_items[static_cast<size_t>(i)].image);

  SECTION("scores live in [0,1] and repeat calls are identical") {
    const auto scores = predict(artifact, images, pp.fingerprint(), 2);
    REQUIRE(scores.size() == 7);
    for (double s : scores) {
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
    const auto again = predict(artifact, images, pp.fingerprint(), 2);
    CHECK(scores == again);
  }
  SECTION("batch of 7 equals seven singles") {
    const auto batch = predict(artifact, images, pp.fingerprint(), 2);
    for (size_t i = 0; i < images.size(); ++i) {
      const auto single = predict(artifact, {images[i]}, pp.fingerprint(), 1);
      CHECK_THAT(batch[i], Catch::Matchers::WithinAbs(single[0], 1e-6));
    }
  }
  SECTION("fingerprint mismatch is refused") {
    PreprocessConfig other;
    other.target_size = 16;
    other.gain = 9.0;
    CHECK_THROWS_AS(predict(artifact, images, other.fingerprint(), 1), DataError);
  }
  SECTION("artifact directory round trip preserves predictions") {
    const auto dir = (std::filesystem::temp_directory_path() / "gadet_artifact_test").string();
    save_artifact(artifact, history, dir);
    const ModelArtifact back = load_artifact(dir);
    CHECK(back.preprocess_fingerprint() == artifact.preprocess_fingerprint());
    CHECK(back.training_fingerprint == artifact.training_fingerprint);
    CHECK(back.model.config.input_size == 16);
    const auto a = predict(artifact, images, pp.fingerprint(), 1);
    const auto b = predict(back, images, pp.fingerprint(), 1);
    for (size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == b[i]);
    CHECK(std::filesystem::exists(dir + "/history.csv"));
    CHECK(std::filesystem::exists(dir + "/config.json"));
    CHECK(std::filesystem::exists(dir + "/weights.bin"));
  }
}

TEST_CASE("paper profile backbone", "[paper-profile]") {
  ModelConfig cfg;
  cfg.profile = Profile::PAPER;
  cfg.input_size = 512;
  cfg.pretrained = false;
  const Model m = build_model(cfg, 1);
  CHECK(m.param_count() > 21'000'000);

  Rng rng(12);
  FloatImage img(512, 512, 3);
  for (auto& v : img.data) v = static_cast<float>(uniform_index(rng, 256));
  const double s = m.score(nn::image_to_tensor(img));
  CHECK(s >= 0.0);
  CHECK(s <= 1.0);
}
