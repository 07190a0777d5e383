#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmda/augment.hpp"
#include "mmda/checkpoint.hpp"
#include "mmda/dataset.hpp"
#include "mmda/mixmatch.hpp"
#include "mmda/model.hpp"
#include "mmda/rng.hpp"
#include "mmda/sampler.hpp"

namespace mmda {

enum class TrainMode { mixmatch, baseline };

const char* to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& text);

/// Every hyperparameter of a run. Defaults are the full-scale values; the
/// desk-scale configs under configs/ override sizes and step counts.
struct TrainingConfig {
  // plan.*
  CompositionMode track = CompositionMode::multi_source;
  int batch_size = CompositionPlan::kDefaultBatch;
  std::vector<std::string> sources;
  std::string target;
  // data.*
  std::string data_root;
  // mix.*
  MixParams mix;
  // augment.*
  int resize_side = AugmentPolicy::kDefaultResize;
  int crop_side = AugmentPolicy::kDefaultCrop;
  // model.*
  std::vector<int> channels{16, 32, 64};
  double bn_momentum = 0.9;
  bool guess_updates_bn = false;
  // train.*
  TrainMode mode = TrainMode::mixmatch;
  double learning_rate = 1e-4;
  int epochs = 100;
  int steps_per_epoch = 1000;
  std::uint64_t seed = 0;
  bool use_labeled_target = true;
  bool recompose_bn = true;
  std::string out_dir = "runs/default";
  std::string init_checkpoint;  // optional warm start: weights and BN statistics only
  // split.*
  int labeled_per_class = 3;
  std::uint64_t split_seed = 0;

  static constexpr int kDefaultMixMatchEpochs = 100;
  static constexpr int kDefaultBaselineEpochs = 10;

  /// Throws ConfigError listing every invalid field.
  void validate() const;

  AugmentPolicy augment_policy() const { return AugmentPolicy(resize_side, crop_side); }
  CompositionPlan plan() const;
  BackboneSpec backbone(int class_count) const;
  std::int64_t total_steps() const { return static_cast<std::int64_t>(epochs) * steps_per_epoch; }
};

/// Loss values of one step. All finite.
struct StepMetrics {
  double supervised = 0.0;   // L_x
  double consistency = 0.0;  // L_u
  double total = 0.0;        // L_total
};

/// Adam with the usual moment defaults.
template <class S>
class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  Adam(std::size_t size, double learning_rate)
      : learning_rate_(learning_rate),
        m_(Vector<S>::Zero(static_cast<Eigen::Index>(size))),
        v_(Vector<S>::Zero(static_cast<Eigen::Index>(size))) {}

  void step(Vector<S>& params, const Vector<S>& grad) {
    ++t_;
    m_ = S(kBeta1) * m_ + S(1 - kBeta1) * grad;
    v_ = S(kBeta2) * v_ + S(1 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    const S step_size = static_cast<S>(learning_rate_ * std::sqrt(c2) / c1);
    const S eps = static_cast<S>(kEpsilon * std::sqrt(c2));
    params.array() -= step_size * m_.array() / (v_.array().sqrt() + eps);
  }

  double learning_rate() const { return learning_rate_; }
  std::int64_t steps() const { return t_; }
  const Vector<S>& first_moment() const { return m_; }
  const Vector<S>& second_moment() const { return v_; }
  void restore(Vector<S> m, Vector<S> v, std::int64_t t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  double learning_rate_;
  Vector<S> m_;
  Vector<S> v_;
  std::int64_t t_ = 0;
};

/// Stores a run trains and evaluates on.
struct TrainingData {
  std::vector<DomainStore> sources;
  std::optional<DomainStore> labeled_target;     // semi-supervised track only
  DomainStore unlabeled_target;
  std::optional<DomainStore> target_evaluation;  // hidden labels, scoring only

  int class_count() const;
  std::vector<const DomainStore*> source_ptrs() const;
};

/// Loads `<data_root>/<domain>.tsv` manifests and, on the semi-supervised
/// track, splits off the labeled target examples.
TrainingData load_training_data(const TrainingConfig& config);

/// The labeled batch of a step for the configured track and mode.
ComposedBatch compose_labeled_batch(Sampler& sampler, const TrainingData& data, const TrainingConfig& config,
                                    const Augmenter& augmenter, Rng& rng);

/// The three batches that carry the gradient of a MixMatch step.
struct PreparedStep {
  std::array<ComposedBatch, 3> batches;
  std::size_t supervised_count = 0;
  std::size_t consistency_count = 0;
};

/// Composition, label guessing (two train-mode forwards without gradient),
/// mixing and optional BN recomposition.
template <class S>
PreparedStep prepare_mixmatch_step(Model<S>& model, Sampler& sampler, const TrainingData& data,
                                   const TrainingConfig& config, Rng& rng);

template <class S>
struct StepObjective {
  Losses losses;
  Vector<S> gradient;  // empty unless requested
};

/// Runs the three gradient-bearing forwards and, optionally, one backward.
/// Targets are constants of this function.
template <class S>
StepObjective<S> evaluate_mixmatch_objective(Model<S>& model, const PreparedStep& step, double weight,
                                             bool update_running_stats, bool compute_gradient);

/// Full MixMatch step: 5 forwards, 1 backward, 1 Adam update.
template <class S>
StepMetrics train_step_mixmatch(Model<S>& model, Adam<S>& optimizer, Sampler& sampler, const TrainingData& data,
                                const TrainingConfig& config, Rng& rng);

/// Supervised-only step on the labeled batch: 1 forward, 1 backward, 1 update.
template <class S>
StepMetrics train_step_baseline(Model<S>& model, Adam<S>& optimizer, Sampler& sampler, const TrainingData& data,
                                const TrainingConfig& config, Rng& rng);

/// Accuracy on a labeled store; tta_count = 1 uses the deterministic centered view.
double evaluate(const Model<float>& model, const DomainStore& store, const AugmentPolicy& policy, int tta_count = 1,
                std::uint64_t seed = 0);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  std::int64_t steps = 0;
  std::optional<double> target_accuracy;
};

/// Owns the model, optimizer, sampler and random stream of one run.
class Trainer {
 public:
  using Logger = std::function<void(const std::string&)>;

  Trainer(TrainingConfig config, TrainingData data);

  StepMetrics step();

  /// Runs the remaining steps, writing a checkpoint per epoch and one JSON
  /// metrics line per step under config.out_dir. Picks up from an existing
  /// checkpoint there when `resume` is set.
  TrainResult train(bool resume = false, const Logger& log = {});

  Checkpoint make_checkpoint() const;
  void restore(const Checkpoint& checkpoint);

  const TrainingConfig& config() const { return config_; }
  const TrainingData& data() const { return data_; }
  const Model<float>& model() const { return model_; }
  Model<float>& model() { return model_; }
  std::int64_t steps_done() const { return model_.state().step; }

 private:
  TrainingConfig config_;
  TrainingData data_;
  Model<float> model_;
  Adam<float> optimizer_;
  Sampler sampler_;
  Rng rng_;
};

/// Resolved key=value text stored in checkpoints; defined in config.cpp.
std::string config_text(const TrainingConfig& config);

}  // namespace mmda
