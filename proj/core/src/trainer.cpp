#include "mmda/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mmda/config.hpp"
#include "mmda/error.hpp"
#include "mmda/inference.hpp"

namespace fs = std::filesystem;

namespace mmda {

const char* to_string(TrainMode mode) { return mode == TrainMode::mixmatch ? "mixmatch" : "baseline"; }

TrainMode train_mode_from_string(const std::string& text) {
  if (text == "mixmatch") return TrainMode::mixmatch;
  if (text == "baseline") return TrainMode::baseline;
  throw ConfigError("train.mode must be mixmatch or baseline (got '" + text + "')");
}

void TrainingConfig::validate() const {
  std::vector<std::string> problems;
  auto check = [&problems](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      problems.emplace_back(e.what());
    }
  };
  check([&] { plan(); });
  check([&] { mix.validate(); });
  check([&] { augment_policy(); });
  check([&] { backbone(2); });
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) problems.emplace_back("train.learning_rate must be > 0");
  if (epochs < 1) problems.emplace_back("train.epochs must be >= 1");
  if (steps_per_epoch < 1) problems.emplace_back("train.steps_per_epoch must be >= 1");
  if (labeled_per_class < 0) problems.emplace_back("split.per_class must be >= 0");
  if (track == CompositionMode::semi_supervised && sources.size() > 1)
    problems.emplace_back("plan.sources must name exactly one domain on the semi_supervised track");
  if (!problems.empty()) {
    std::string msg = "invalid training configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ConfigError(msg);
  }
}

CompositionPlan TrainingConfig::plan() const {
  const int k = std::max<int>(1, static_cast<int>(sources.size()));
  return CompositionPlan(track, batch_size, k);
}

BackboneSpec TrainingConfig::backbone(int class_count) const {
  BackboneSpec spec;
  spec.input_side = crop_side;
  spec.channels = channels;
  spec.class_count = class_count;
  spec.bn_momentum = bn_momentum;
  spec.validate();
  return spec;
}

int TrainingData::class_count() const {
  int classes = 0;
  for (const auto& s : sources) classes = std::max(classes, s.class_count());
  return classes;
}

std::vector<const DomainStore*> TrainingData::source_ptrs() const {
  std::vector<const DomainStore*> out;
  for (const auto& s : sources) out.push_back(&s);
  return out;
}

TrainingData load_training_data(const TrainingConfig& config) {
  if (config.sources.empty()) throw ConfigError("plan.sources must name at least one source domain");
  if (config.target.empty()) throw ConfigError("plan.target must name the target domain");
  const fs::path root = config.data_root.empty() ? fs::path(".") : fs::path(config.data_root);
  TrainingData data;
  for (const auto& name : config.sources) {
    data.sources.push_back(load_manifest(root / (name + ".tsv")));
    if (!data.sources.back().labeled()) throw DataError("source domain '" + name + "' is not labeled");
  }
  DomainStore target = load_manifest(root / (config.target + ".tsv"));
  const int classes = data.class_count();
  for (const auto& s : data.sources)
    if (s.class_count() != classes) throw DataError("source domains disagree on the class count");
  if (config.track == CompositionMode::semi_supervised) {
    if (!target.labeled()) throw DataError("semi-supervised target '" + config.target + "' needs labels to split");
    auto split = split_semi_supervised(target, config.labeled_per_class, config.split_seed);
    data.labeled_target = std::move(split.labeled);
    data.unlabeled_target = std::move(split.unlabeled);
    data.target_evaluation = std::move(split.evaluation);
  } else if (target.labeled()) {
    data.unlabeled_target = target.without_labels();
    data.target_evaluation = std::move(target);
  } else {
    data.unlabeled_target = std::move(target);
  }
  return data;
}

ComposedBatch compose_labeled_batch(Sampler& sampler, const TrainingData& data, const TrainingConfig& config,
                                    const Augmenter& augmenter, Rng& rng) {
  if (data.sources.empty()) throw DataError("no source domains");
  if (config.track == CompositionMode::multi_source) {
    return sampler.compose_labeled_multisource(data.source_ptrs(), config.plan(), augmenter, rng);
  }
  if (config.use_labeled_target && data.labeled_target && !data.labeled_target->empty()) {
    return sampler.compose_labeled_semisupervised(data.sources.front(), *data.labeled_target, config.plan(),
                                                  augmenter, rng);
  }
  // Semi-supervised track without the labeled target slice: all n from the source.
  const CompositionPlan source_only(CompositionMode::multi_source, config.batch_size, 1);
  return sampler.compose_labeled_multisource({&data.sources.front()}, source_only, augmenter, rng);
}

template <class S>
PreparedStep prepare_mixmatch_step(Model<S>& model, Sampler& sampler, const TrainingData& data,
                                   const TrainingConfig& config, Rng& rng) {
  const Augmenter augmenter = make_augmenter(config.augment_policy());
  ComposedBatch labeled = compose_labeled_batch(sampler, data, config, augmenter, rng);
  auto [view_a, view_b] = sampler.compose_unlabeled_pair(data.unlabeled_target, config.plan(), augmenter, rng);

  const ForwardOptions guess_options{ForwardMode::train, config.guess_updates_bn};
  const Predictor predict = [&model, &guess_options](const std::vector<Image>& images) {
    return softmax_columns<S>(model.forward(images, guess_options));
  };
  assign_guesses(view_a, view_b, guess_labels(predict, view_a, view_b, config.mix.temperature));

  MixPool pool = build_mix_pool(labeled, view_a, view_b, config.mix.alpha, rng);
  PreparedStep step;
  step.batches = config.recompose_bn ? recompose_for_bn(pool.mixed, rng) : std::move(pool.mixed);
  for (const auto& b : step.batches) {
    step.supervised_count += b.count(LossKind::supervised);
    step.consistency_count += b.count(LossKind::consistency);
  }
  return step;
}

template <class S>
StepObjective<S> evaluate_mixmatch_objective(Model<S>& model, const PreparedStep& step, double weight,
                                             bool update_running_stats, bool compute_gradient) {
  StepObjective<S> out;
  std::array<ForwardCache<S>, 3> caches;
  std::array<Matrix<S>, 3> grads;
  const ForwardOptions options{ForwardMode::train, update_running_stats};
  for (std::size_t j = 0; j < 3; ++j) {
    const ComposedBatch& batch = step.batches[j];
    const Matrix<S> logits = model.forward(batch.images, options, compute_gradient ? &caches[j] : nullptr);
    const Losses part = mixmatch_losses_from_logits<S>(logits, batch.targets, batch.loss_kind, weight,
                                                       step.supervised_count, step.consistency_count,
                                                       compute_gradient ? &grads[j] : nullptr);
    out.losses.supervised += part.supervised;
    out.losses.consistency += part.consistency;
  }
  out.losses.total = out.losses.supervised + weight * out.losses.consistency;
  if (compute_gradient) {
    const ForwardCache<S>* c[] = {&caches[0], &caches[1], &caches[2]};
    const Matrix<S>* g[] = {&grads[0], &grads[1], &grads[2]};
    out.gradient = model.backward(std::span<const ForwardCache<S>* const>(c), std::span<const Matrix<S>* const>(g));
  }
  return out;
}

namespace {

void require_finite(const Losses& l, std::int64_t step) {
  if (!std::isfinite(l.supervised) || !std::isfinite(l.consistency) || !std::isfinite(l.total))
    throw Error("non-finite loss at step " + std::to_string(step));
}

}  // namespace

template <class S>
StepMetrics train_step_mixmatch(Model<S>& model, Adam<S>& optimizer, Sampler& sampler, const TrainingData& data,
                                const TrainingConfig& config, Rng& rng) {
  const PreparedStep step = prepare_mixmatch_step(model, sampler, data, config, rng);
  StepObjective<S> objective = evaluate_mixmatch_objective(model, step, config.mix.weight, true, true);
  require_finite(objective.losses, model.state().step + 1);
  optimizer.step(model.mutable_state().params, objective.gradient);
  ++model.mutable_state().step;
  return {objective.losses.supervised, objective.losses.consistency, objective.losses.total};
}

template <class S>
StepMetrics train_step_baseline(Model<S>& model, Adam<S>& optimizer, Sampler& sampler, const TrainingData& data,
                                const TrainingConfig& config, Rng& rng) {
  const Augmenter augmenter = make_augmenter(config.augment_policy());
  const ComposedBatch batch = compose_labeled_batch(sampler, data, config, augmenter, rng);
  ForwardCache<S> cache;
  const Matrix<S> logits = model.forward(batch.images, ForwardOptions{ForwardMode::train, true}, &cache);
  Matrix<S> grad_logits;
  const Losses losses =
      mixmatch_losses_from_logits<S>(logits, batch.targets, batch.loss_kind, 0.0, batch.size(), 0, &grad_logits);
  require_finite(losses, model.state().step + 1);
  optimizer.step(model.mutable_state().params, model.backward(cache, grad_logits));
  ++model.mutable_state().step;
  return {losses.supervised, 0.0, losses.supervised};
}

double evaluate(const Model<float>& model, const DomainStore& store, const AugmentPolicy& policy, int tta_count,
                std::uint64_t seed) {
  if (store.empty()) throw Error("evaluate: store '" + store.domain_id() + "' is empty");
  if (tta_count < 1) throw Error("evaluate: tta_count must be >= 1");
  if (tta_count == 1) return score(predict_center(model, store, policy, "eval"), store);
  Rng rng(seed);
  return score(predict_store_tta(model, store, policy, tta_count, rng, "eval"), store);
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kStepStream = 2;

std::vector<std::pair<std::string, const DomainStore*>> cursor_roles(const TrainingData& data) {
  std::vector<std::pair<std::string, const DomainStore*>> roles;
  for (std::size_t i = 0; i < data.sources.size(); ++i) roles.emplace_back("source." + std::to_string(i), &data.sources[i]);
  if (data.labeled_target) roles.emplace_back("labeled_target", &*data.labeled_target);
  roles.emplace_back("unlabeled_target", &data.unlabeled_target);
  return roles;
}

}  // namespace

Trainer::Trainer(TrainingConfig config, TrainingData data)
    : config_(std::move(config)),
      data_(std::move(data)),
      model_(init_model<float>(config_.backbone(data_.class_count()), splitmix64(config_.seed) ^ kModelStream)),
      optimizer_(static_cast<std::size_t>(model_.state().params.size()), config_.learning_rate),
      rng_(splitmix64(config_.seed) ^ kStepStream) {
  config_.validate();
  if (!config_.init_checkpoint.empty()) {
    ModelState<float> init = load_checkpoint(config_.init_checkpoint).model;
    if (!(init.spec == model_.spec()))
      throw DataError("train.init: backbone of " + config_.init_checkpoint + " does not match this run");
    init.step = 0;
    model_ = Model<float>(std::move(init));
  }
}

StepMetrics Trainer::step() {
  if (config_.mode == TrainMode::mixmatch)
    return train_step_mixmatch(model_, optimizer_, sampler_, data_, config_, rng_);
  return train_step_baseline(model_, optimizer_, sampler_, data_, config_, rng_);
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ck;
  ck.model = model_.state();
  ck.config = config_text(config_);
  ck.metadata["rng"] = rng_.serialize();
  ck.metadata["adam.t"] = std::to_string(optimizer_.steps());
  const auto& m = optimizer_.first_moment();
  const auto& v = optimizer_.second_moment();
  ck.float_arrays["adam.m"] = std::vector<float>(m.data(), m.data() + m.size());
  ck.float_arrays["adam.v"] = std::vector<float>(v.data(), v.data() + v.size());
  for (const auto& [role, store] : cursor_roles(data_)) {
    if (auto c = sampler_.cursor(*store)) {
      std::vector<std::uint64_t> packed{c->position};
      packed.insert(packed.end(), c->order.begin(), c->order.end());
      ck.index_arrays["cursor." + role] = std::move(packed);
    }
  }
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  if (!(ck.model.spec == model_.spec())) throw DataError("checkpoint backbone does not match this run");
  model_ = Model<float>(ck.model);
  const auto m = ck.float_arrays.find("adam.m");
  const auto v = ck.float_arrays.find("adam.v");
  const auto t = ck.metadata.find("adam.t");
  const auto r = ck.metadata.find("rng");
  if (m == ck.float_arrays.end() || v == ck.float_arrays.end() || t == ck.metadata.end() || r == ck.metadata.end())
    throw DataError("checkpoint lacks optimizer or generator state; cannot resume");
  auto to_vec = [](const std::vector<float>& x) {
    return Eigen::Map<const Vector<float>>(x.data(), static_cast<Eigen::Index>(x.size())).eval();
  };
  optimizer_.restore(to_vec(m->second), to_vec(v->second), std::stoll(t->second));
  rng_ = Rng::deserialize(r->second);
  sampler_ = Sampler{};
  for (const auto& [role, store] : cursor_roles(data_)) {
    auto it = ck.index_arrays.find("cursor." + role);
    if (it == ck.index_arrays.end() || it->second.empty()) continue;
    Sampler::Cursor c;
    c.position = static_cast<std::size_t>(it->second.front());
    c.order.assign(it->second.begin() + 1, it->second.end());
    sampler_.restore_cursor(*store, std::move(c));
  }
}

TrainResult Trainer::train(bool resume, const Logger& log) {
  auto say = [&log](const std::string& line) {
    if (log) log(line);
  };
  const fs::path out_dir(config_.out_dir);
  try {
    fs::create_directories(out_dir);
  } catch (const fs::filesystem_error& e) {
    throw DataError("train: cannot create output directory " + out_dir.string() + ": " + e.what());
  }
  TrainResult result;
  result.checkpoint = out_dir / "checkpoint.mmda";
  result.metrics_log = out_dir / "metrics.jsonl";

  if (resume && fs::exists(result.checkpoint)) {
    restore(load_checkpoint(result.checkpoint));
    // Drop log lines written after the checkpoint.
    std::vector<std::string> kept;
    std::ifstream in(result.metrics_log);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (!j.is_discarded() && j.contains("step") && j["step"].get<std::int64_t>() <= steps_done())
        kept.push_back(line);
    }
    std::ofstream rewrite(result.metrics_log, std::ios::trunc);
    for (const auto& k : kept) rewrite << k << '\n';
    say("resumed from " + result.checkpoint.string() + " at step " + std::to_string(steps_done()));
  } else {
    std::ofstream truncate(result.metrics_log, std::ios::trunc);
    if (!truncate) throw DataError("train: cannot write " + result.metrics_log.string());
  }

  const std::string resolved = config_text(config_);
  {
    std::ofstream cfg(out_dir / "config.cfg", std::ios::trunc);
    cfg << resolved;
    if (!cfg) throw DataError("train: cannot write " + (out_dir / "config.cfg").string());
  }
  if (data_.labeled_target) {
    const fs::path root = config_.data_root.empty() ? fs::path(".") : fs::path(config_.data_root);
    write_manifest(*data_.labeled_target, out_dir / "split" / "labeled.tsv", root);
    write_manifest(data_.unlabeled_target, out_dir / "split" / "unlabeled.tsv", root);
    if (data_.target_evaluation) write_manifest(*data_.target_evaluation, out_dir / "split" / "evaluation.tsv", root);
  }

  std::ofstream metrics(result.metrics_log, std::ios::app);
  if (!metrics) throw DataError("train: cannot append to " + result.metrics_log.string());
  const std::int64_t total = config_.total_steps();
  const AugmentPolicy policy = config_.augment_policy();
  while (steps_done() < total) {
    const auto start = std::chrono::steady_clock::now();
    const StepMetrics m = step();
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    nlohmann::ordered_json line;
    line["step"] = steps_done();
    line["L_x"] = m.supervised;
    line["L_u"] = m.consistency;
    line["L_total"] = m.total;
    line["wall_ms"] = wall_ms;
    metrics << line.dump() << '\n';
    if (!metrics) throw DataError("train: write failed for " + result.metrics_log.string());

    if (steps_done() % config_.steps_per_epoch == 0 || steps_done() == total) {
      metrics.flush();
      save_checkpoint(make_checkpoint(), result.checkpoint);
      std::ostringstream msg;
      msg << "epoch " << (steps_done() + config_.steps_per_epoch - 1) / config_.steps_per_epoch << " step "
          << steps_done() << " L_x=" << m.supervised << " L_u=" << m.consistency << " L_total=" << m.total;
      if (data_.target_evaluation) {
        result.target_accuracy = evaluate(model_, *data_.target_evaluation, policy);
        msg << " target_acc=" << *result.target_accuracy;
      }
      say(msg.str());
    }
  }
  result.steps = steps_done();
  if (!result.target_accuracy && data_.target_evaluation)
    result.target_accuracy = evaluate(model_, *data_.target_evaluation, policy);
  return result;
}

template PreparedStep prepare_mixmatch_step<float>(Model<float>&, Sampler&, const TrainingData&,
                                                   const TrainingConfig&, Rng&);
template PreparedStep prepare_mixmatch_step<double>(Model<double>&, Sampler&, const TrainingData&,
                                                    const TrainingConfig&, Rng&);
template StepObjective<float> evaluate_mixmatch_objective<float>(Model<float>&, const PreparedStep&, double, bool,
                                                                 bool);
template StepObjective<double> evaluate_mixmatch_objective<double>(Model<double>&, const PreparedStep&, double, bool,
                                                                   bool);
template StepMetrics train_step_mixmatch<float>(Model<float>&, Adam<float>&, Sampler&, const TrainingData&,
                                                const TrainingConfig&, Rng&);
template StepMetrics train_step_mixmatch<double>(Model<double>&, Adam<double>&, Sampler&, const TrainingData&,
                                                 const TrainingConfig&, Rng&);
template StepMetrics train_step_baseline<float>(Model<float>&, Adam<float>&, Sampler&, const TrainingData&,
                                                const TrainingConfig&, Rng&);
template StepMetrics train_step_baseline<double>(Model<double>&, Adam<double>&, Sampler&, const TrainingData&,
                                                 const TrainingConfig&, Rng&);

}  // namespace mmda
