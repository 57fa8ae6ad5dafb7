#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gadet/common.hpp"
#include "gadet/dataset.hpp"
#include "gadet/folds.hpp"
#include "gadet/image.hpp"
#include "gadet/inception.hpp"
#include "gadet/nn.hpp"
#include "gadet/preprocess.hpp"

namespace gadet {

enum class Profile { PAPER, TINY };

inline std::optional<Profile> parse_profile(std::string_view s) {
  std::string up(s);
  std::transform(up.begin(), up.end(), up.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (up == "PAPER") return Profile::PAPER;
  if (up == "TINY") return Profile::TINY;
  return std::nullopt;
}

inline std::string_view profile_name(Profile p) {
  return p == Profile::PAPER ? "PAPER" : "TINY";
}

struct ModelConfig {
  Profile profile = Profile::TINY;
  int input_size = 128;
  bool pretrained = false;
  Task task = Task::GA;
  // Weights blob for PAPER + pretrained; required, never silently skipped.
  std::string pretrained_weights;

  void validate() const {
    if (profile == Profile::PAPER) {
      if (input_size != 512)
        throw ConfigError("PAPER profile requires input_size 512");
    } else {
      // 64/128 are the training sizes; 16/32 exist for gradient checking.
      if (input_size != 16 && input_size != 32 && input_size != 64 && input_size != 128)
        throw ConfigError("TINY profile requires input_size in {16,32,64,128}");
    }
  }

  std::string canonical() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "model:profile=%s;size=%d;pretrained=%d;task=%s",
                  std::string(profile_name(profile)).c_str(), input_size,
                  pretrained ? 1 : 0, std::string(names::of(task)).c_str());
    return buf;
  }
};

struct TrainingConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int max_epochs = 30;
  int patience_epochs = 5;
  std::uint64_t seed = 0;
  // Optional positive-class loss weighting; 1.0 replicates the paper's
  // uncorrected-imbalance regime.
  double positive_weight = 1.0;

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("training: learning_rate must be positive");
    if (batch_size <= 0) throw ConfigError("training: batch_size must be positive");
    if (max_epochs <= 0) throw ConfigError("training: max_epochs must be positive");
    if (patience_epochs <= 0) throw ConfigError("training: patience_epochs must be positive");
    if (patience_epochs > max_epochs)
      throw ConfigError("training: patience_epochs must not exceed max_epochs");
    if (positive_weight <= 0) throw ConfigError("training: positive_weight must be positive");
  }

  std::string fingerprint(std::uint64_t fold_seed) const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "train:lr=%.9g;batch=%d;max=%d;patience=%d;seed=%llu;posw=%.9g;fold=%llu",
                  learning_rate, batch_size, max_epochs, patience_epochs,
                  static_cast<unsigned long long>(seed), positive_weight,
                  static_cast<unsigned long long>(fold_seed));
    return hex64(fnv1a64(buf));
  }
};

struct TrainingHistory {
  struct Epoch {
    double train_loss = 0.0;
    double dev_loss = 0.0;
    double dev_accuracy = 0.0;
  };
  std::vector<Epoch> epochs;  // index 0 is epoch 1
  int stopped_epoch = 0;      // 1-based
  int best_epoch = 0;         // 1-based
};

// Dev-loss patience rule: halt once the loss has not improved for
// `patience` consecutive epochs. Strict improvement moves the best epoch.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when training should stop after this epoch.
  bool observe(int epoch, double dev_loss) {
    if (dev_loss < best_loss_) {
      best_loss_ = dev_loss;
      best_epoch_ = epoch;
      return false;
    }
    return epoch - best_epoch_ >= patience_;
  }

  bool is_best(int epoch) const { return epoch == best_epoch_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct Model {
  ModelConfig config;
  std::unique_ptr<nn::Sequential> net;

  std::int64_t param_count() const { return net->param_count(); }

  double logit(const nn::Tensor& x, nn::Tape* tape = nullptr) const {
    const nn::Tensor out = net->forward(x, tape);
    if (out.size() != 1) throw DataError("model: head must emit a single value");
    return out.v[0];
  }

  double score(const nn::Tensor& x) const {
    return 1.0 / (1.0 + std::exp(-logit(x)));
  }

  std::vector<std::vector<double>> snapshot_state() const {
    std::vector<std::vector<double>*> refs;
    net->collect_state(refs);
    std::vector<std::vector<double>> copy;
    copy.reserve(refs.size());
    for (auto* r : refs) copy.push_back(*r);
    return copy;
  }

  void restore_state(const std::vector<std::vector<double>>& state) {
    std::vector<std::vector<double>*> refs;
    net->collect_state(refs);
    if (refs.size() != state.size())
      throw DataError("model: state snapshot does not match architecture");
    for (size_t i = 0; i < refs.size(); ++i) {
      if (refs[i]->size() != state[i].size())
        throw DataError("model: state tensor size mismatch");
      *refs[i] = state[i];
    }
  }
};

namespace detail {

inline std::unique_ptr<nn::Sequential> build_tiny(Rng& rng) {
  using namespace nn;
  auto net = std::make_unique<Sequential>();
  // Smooth activations and smooth-max pooling keep finite-difference
  // gradient checks well behaved. The head pools each feature map two ways:
  // smooth-max for sensitivity to small lesions, average for dense early
  // gradients. An aggressive first stride keeps desk-scale training cheap.
  net->emplace<Conv2d>(3, 20, 5, 5, 4, Padding::SAME, true, rng);
  net->emplace<Act>(Activation::SILU);
  net->emplace<Conv2d>(20, 40, 3, 3, 2, Padding::SAME, true, rng);
  net->emplace<Act>(Activation::SILU);
  net->emplace<Conv2d>(40, 80, 3, 3, 2, Padding::SAME, true, rng);
  net->emplace<Act>(Activation::SILU);
  {
    auto pools = std::make_unique<Branches>();
    auto lse = std::make_unique<Sequential>();
    lse->emplace<LogSumExpPool>(0.3);
    pools->add(std::move(lse));
    auto avg = std::make_unique<Sequential>();
    avg->emplace<GlobalAvgPool>();
    pools->add(std::move(avg));
    net->add(std::move(pools));
  }
  net->emplace<Dense>(160, 1, rng);
  return net;
}

inline void load_weight_blob(nn::Sequential& net, const std::string& path);

}  // namespace detail

inline Model build_model(const ModelConfig& cfg, std::uint64_t init_seed) {
  cfg.validate();
  Model m;
  m.config = cfg;
  Rng rng(mix_seed(init_seed, 0x6d6f64656cull));
  if (cfg.profile == Profile::TINY) {
    m.net = detail::build_tiny(rng);
  } else {
    if (cfg.pretrained &&
        (cfg.pretrained_weights.empty() ||
         !std::filesystem::exists(cfg.pretrained_weights)))
      throw ConfigError(
          "pretrained weights unavailable (expected a weights blob at '" +
          cfg.pretrained_weights + "'); refusing silent random init");
    m.net = nn::inception::build(rng);
    if (cfg.pretrained) detail::load_weight_blob(*m.net, cfg.pretrained_weights);
  }
  return m;
}

// --- weights blob ---

namespace detail {

inline constexpr char kWeightsMagic[4] = {'G', 'A', 'W', '1'};

inline void save_weight_blob(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write weights: " + path);
  std::vector<std::vector<double>*> state;
  m.net->collect_state(state);
  out.write(kWeightsMagic, 4);
  const std::uint32_t n = static_cast<std::uint32_t>(state.size());
  out.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto* t : state) {
    const std::uint32_t len = static_cast<std::uint32_t>(t->size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(double)));
  }
  if (!out) throw IoError("short write: " + path);
}

inline void load_weight_blob(nn::Sequential& net, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw DataError("bad weights blob magic: " + path);
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 4);
  std::vector<std::vector<double>*> state;
  net.collect_state(state);
  if (n != state.size())
    throw DataError("weights blob does not match architecture: " + path);
  for (auto* t : state) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in || len != t->size())
      throw DataError("weights blob tensor size mismatch: " + path);
    in.read(reinterpret_cast<char*>(t->data()),
            static_cast<std::streamsize>(t->size() * sizeof(double)));
  }
  if (!in) throw DataError("truncated weights blob: " + path);
}

}  // namespace detail

// --- training ---

// One preprocessed image with its binary label.
struct TrainItem {
  Image image;  // canonical-size u8 raster from the preprocessing chain
  bool label = false;
  std::string key;
};

namespace detail {

inline nn::Tensor item_tensor(const Image& img) {
  return nn::image_to_tensor(to_float(img));
}

inline void require_two_classes(const std::vector<TrainItem>& items,
                                const std::string& which) {
  if (items.empty()) throw DataError("train: " + which + " set is empty");
  bool pos = false, neg = false;
  for (const auto& it : items) (it.label ? pos : neg) = true;
  if (!pos || !neg)
    throw DataError("train: " + which + " set has a single class");
}

struct DevEval {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline DevEval evaluate_dev(const Model& model, const std::vector<TrainItem>& dev,
                            int workers) {
  std::vector<double> losses(dev.size());
  std::vector<int> hits(dev.size());
  nn::parallel_for(dev.size(), workers, [&](size_t i, int) {
    const nn::Tensor x = item_tensor(dev[i].image);
    const double z = model.logit(x);
    losses[i] = nn::bce_with_logits(z, dev[i].label);
    const bool pred = nn::sigmoid(z) >= 0.5;
    hits[i] = pred == dev[i].label ? 1 : 0;
  });
  DevEval e;
  for (double l : losses) e.loss += l;
  e.loss /= static_cast<double>(dev.size());
  double h = 0;
  for (int v : hits) h += v;
  e.accuracy = h / static_cast<double>(dev.size());
  return e;
}

}  // namespace detail

// Minibatch Adam with dev-loss early stopping. The returned model carries the
// weights of the best epoch. Bit-stable for fixed seeds and worker count.
inline TrainingHistory train(Model& model, const std::vector<TrainItem>& train_set,
                             const std::vector<TrainItem>& dev_set,
                             const TrainingConfig& cfg,
                             const AugmentConfig& augment_cfg = {}, int workers = 2) {
  cfg.validate();
  augment_cfg.validate();
  detail::require_two_classes(train_set, "train");
  detail::require_two_classes(dev_set, "dev");

  std::vector<std::vector<double>*> params;
  model.net->collect_params(params);
  nn::Adam adam(params, cfg.learning_rate);

  TrainingHistory history;
  EarlyStopper stopper(cfg.patience_epochs);
  std::vector<std::vector<double>> best_state = model.snapshot_state();

  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_with(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    const int worker_count = std::max(1, workers);
    std::vector<nn::GradAccum> accums(static_cast<size_t>(worker_count));

    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      const size_t batch_n = end - start;
      for (auto& a : accums) a.clear();
      std::vector<double> losses(batch_n, 0.0);

      nn::parallel_for(batch_n, worker_count, [&](size_t bi, int worker) {
        const size_t idx = order[start + bi];
        const auto& item = train_set[idx];
        Rng aug_rng(mix_seed(mix_seed(cfg.seed, 0xa06u + static_cast<std::uint64_t>(epoch)),
                             static_cast<std::uint64_t>(idx)));
        FloatImage img = to_float(item.image);
        if (augment_cfg.enabled()) img = augment(img, aug_rng, augment_cfg);
        const nn::Tensor x = nn::image_to_tensor(img);

        nn::Tape tape;
        const double z = model.logit(x, &tape);
        losses[bi] = nn::bce_with_logits(z, item.label, cfg.positive_weight);
        nn::Tensor dy(1, 1, 1);
        dy.v[0] = nn::bce_logit_grad(z, item.label, cfg.positive_weight);
        model.net->backward(dy, tape, accums[static_cast<size_t>(worker)]);
      });

      nn::GradAccum& total = accums[0];
      for (size_t w = 1; w < accums.size(); ++w) total.add(accums[w]);
      total.scale(1.0 / static_cast<double>(batch_n));
      adam.step(total);

      for (double l : losses) {
        if (!std::isfinite(l))
          throw DivergenceError("training diverged (non-finite loss) at epoch " +
                                std::to_string(epoch));
        epoch_loss += l;
      }
    }
    epoch_loss /= static_cast<double>(train_set.size());
    if (!std::isfinite(epoch_loss))
      throw DivergenceError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch));

    const auto dev = detail::evaluate_dev(model, dev_set, workers);
    if (!std::isfinite(dev.loss))
      throw DivergenceError("training diverged (non-finite dev loss) at epoch " +
                            std::to_string(epoch));
    history.epochs.push_back({epoch_loss, dev.loss, dev.accuracy});
    history.stopped_epoch = epoch;

    const bool stop = stopper.observe(epoch, dev.loss);
    if (stopper.is_best(epoch)) best_state = model.snapshot_state();
    if (stop) break;
  }

  history.best_epoch = stopper.best_epoch();
  model.restore_state(best_state);
  return history;
}

// --- artifacts ---

struct ModelArtifact {
  Model model;
  TrainingConfig training;
  PreprocessConfig preprocess;
  std::string training_fingerprint;

  std::string preprocess_fingerprint() const { return preprocess.fingerprint(); }
};

inline ModelArtifact make_artifact(Model&& model, const TrainingConfig& training,
                                   const PreprocessConfig& preprocess,
                                   std::uint64_t fold_seed) {
  ModelArtifact a;
  a.model = std::move(model);
  a.training = training;
  a.preprocess = preprocess;
  a.training_fingerprint = training.fingerprint(fold_seed);
  return a;
}

// Deterministic batch scoring. Refuses inputs whose preprocessing fingerprint
// does not match the one the model was trained with.
inline std::vector<double> predict(const ModelArtifact& artifact,
                                   const std::vector<Image>& images,
                                   const std::string& preprocess_fingerprint,
                                   int workers = 2) {
  if (preprocess_fingerprint != artifact.preprocess_fingerprint())
    throw DataError("predict: preprocessing fingerprint mismatch (artifact " +
                    artifact.preprocess_fingerprint() + ", input " +
                    preprocess_fingerprint + ")");
  std::vector<double> scores(images.size());
  nn::parallel_for(images.size(), workers, [&](size_t i, int) {
    scores[i] = artifact.model.score(detail::item_tensor(images[i]));
  });
  return scores;
}

inline void write_history_csv(const TrainingHistory& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history: " + path);
  out << "epoch,train_loss,dev_loss,dev_acc\n";
  out.precision(17);
  for (size_t i = 0; i < h.epochs.size(); ++i)
    out << (i + 1) << ',' << h.epochs[i].train_loss << ',' << h.epochs[i].dev_loss
        << ',' << h.epochs[i].dev_accuracy << "\n";
}

inline nlohmann::json model_config_json(const ModelConfig& cfg) {
  return {{"profile", std::string(profile_name(cfg.profile))},
          {"input_size", cfg.input_size},
          {"pretrained", cfg.pretrained},
          {"task", std::string(names::of(cfg.task))},
          {"pretrained_weights", cfg.pretrained_weights}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  const auto profile = parse_profile(j.at("profile").get<std::string>());
  if (!profile) throw ConfigError("unknown model profile in config");
  cfg.profile = *profile;
  cfg.input_size = j.at("input_size").get<int>();
  cfg.pretrained = j.at("pretrained").get<bool>();
  const auto task = names::parse_task(j.at("task").get<std::string>());
  if (!task) throw ConfigError("unknown task in config");
  cfg.task = *task;
  if (j.contains("pretrained_weights"))
    cfg.pretrained_weights = j.at("pretrained_weights").get<std::string>();
  return cfg;
}

inline nlohmann::json training_config_json(const TrainingConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"max_epochs", cfg.max_epochs},
          {"patience_epochs", cfg.patience_epochs},
          {"seed", cfg.seed},
          {"positive_weight", cfg.positive_weight}};
}

inline nlohmann::json preprocess_config_json(const PreprocessConfig& cfg) {
  nlohmann::json j = {{"target_size", cfg.target_size},
                      {"gain", cfg.gain},
                      {"offset", cfg.offset},
                      {"clip_lo", cfg.clip_lo},
                      {"clip_hi", cfg.clip_hi}};
  if (cfg.gaussian_sigma) j["gaussian_sigma"] = *cfg.gaussian_sigma;
  return j;
}

inline PreprocessConfig preprocess_config_from_json(const nlohmann::json& j) {
  PreprocessConfig cfg;
  cfg.target_size = j.value("target_size", cfg.target_size);
  if (j.contains("gaussian_sigma") && !j.at("gaussian_sigma").is_null())
    cfg.gaussian_sigma = j.at("gaussian_sigma").get<double>();
  cfg.gain = j.value("gain", cfg.gain);
  cfg.offset = j.value("offset", cfg.offset);
  cfg.clip_lo = j.value("clip_lo", cfg.clip_lo);
  cfg.clip_hi = j.value("clip_hi", cfg.clip_hi);
  return cfg;
}

inline TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.patience_epochs = j.value("patience_epochs", cfg.patience_epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.positive_weight = j.value("positive_weight", cfg.positive_weight);
  return cfg;
}

// Artifact directory: weights blob + config.json + history.csv.
inline void save_artifact(const ModelArtifact& artifact, const TrainingHistory& history,
                          const std::string& dir) {
  std::filesystem::create_directories(dir);
  detail::save_weight_blob(artifact.model, dir + "/weights.bin");
  write_history_csv(history, dir + "/history.csv");
  nlohmann::json j;
  j["model"] = model_config_json(artifact.model.config);
  j["training"] = training_config_json(artifact.training);
  j["preprocess"] = preprocess_config_json(artifact.preprocess);
  j["preprocess_fingerprint"] = artifact.preprocess.fingerprint();
  j["training_fingerprint"] = artifact.training_fingerprint;
  j["stopped_epoch"] = history.stopped_epoch;
  j["best_epoch"] = history.best_epoch;
  j["version"] = std::string(kVersion);
  std::ofstream out(dir + "/config.json");
  if (!out) throw IoError("cannot write artifact config: " + dir);
  out << j.dump(2) << "\n";
}

inline ModelArtifact load_artifact(const std::string& dir) {
  std::ifstream in(dir + "/config.json");
  if (!in) throw IoError("cannot open artifact config: " + dir);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed artifact config in " + dir + ": " + e.what());
  }
  ModelArtifact a;
  ModelConfig mc = model_config_from_json(j.at("model"));
  // Architecture is rebuilt, then every tensor is overwritten from the blob.
  const bool want_pretrained = mc.pretrained;
  mc.pretrained = false;
  a.model = build_model(mc, 0);
  a.model.config.pretrained = want_pretrained;
  detail::load_weight_blob(*a.model.net, dir + "/weights.bin");
  a.training = training_config_from_json(j.at("training"));
  a.preprocess = preprocess_config_from_json(j.at("preprocess"));
  a.training_fingerprint = j.at("training_fingerprint").get<std::string>();
  return a;
}

}  // namespace gadet
