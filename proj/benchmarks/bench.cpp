#include <benchmark/benchmark.h>

#include <array>
#include <memory>
#include <vector>

#include "mmda/augment.hpp"
#include "mmda/dataset.hpp"
#include "mmda/mixmatch.hpp"
#include "mmda/model.hpp"
#include "mmda/trainer.hpp"

namespace {

using namespace mmda;

constexpr int kSide = 32;
constexpr int kBatch = 15;

std::vector<Image> shapes(int count, bool invert) {
  DomainStyle style = domain_style_preset(invert ? "inverted_noise" : "clean");
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) out.push_back(render_toy_image(i % 4, style, kSide, static_cast<std::uint64_t>(i)));
  return out;
}

BackboneSpec desk_spec() {
  BackboneSpec spec;
  spec.input_side = kSide;
  spec.channels = {16, 32, 64};
  spec.class_count = 4;
  return spec;
}

DomainStore labeled_store(const std::string& domain, bool invert, int per_class) {
  std::vector<SamplePtr> samples;
  DomainStyle style = domain_style_preset(invert ? "inverted_noise" : "clean");
  int id = 0;
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < per_class; ++i, ++id) {
      auto s = std::make_shared<DomainSample>();
      s->image = render_toy_image(c, style, kSide, static_cast<std::uint64_t>(id));
      s->label = c;
      s->domain_id = domain;
      s->sample_id = domain + "/" + std::to_string(id);
      samples.push_back(std::move(s));
    }
  }
  return DomainStore(domain, 4, std::move(samples), true);
}

void BM_ForwardEval(benchmark::State& state) {
  const Model<float> model(init_model<float>(desk_spec(), 1));
  const auto images = shapes(kBatch, false);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_eval(images));
  state.SetItemsProcessed(state.iterations() * kBatch);
}
BENCHMARK(BM_ForwardEval);

void BM_ForwardBackward(benchmark::State& state) {
  Model<float> model(init_model<float>(desk_spec(), 1));
  const auto images = shapes(kBatch, false);
  for (auto _ : state) {
    ForwardCache<float> cache;
    const Matrix<float> logits = model.forward(images, {ForwardMode::train, false}, &cache);
    benchmark::DoNotOptimize(model.backward(cache, logits));
  }
  state.SetItemsProcessed(state.iterations() * kBatch);
}
BENCHMARK(BM_ForwardBackward);

void BM_Augment(benchmark::State& state) {
  const Augmenter augment = make_augmenter(AugmentPolicy(36, 32));
  const auto images = shapes(kBatch, true);
  Rng rng(3);
  for (auto _ : state)
    for (const auto& img : images) benchmark::DoNotOptimize(augment(img, rng));
  state.SetItemsProcessed(state.iterations() * kBatch);
}
BENCHMARK(BM_Augment);

ComposedBatch tagged(const std::vector<Image>& images, Origin origin, LossKind kind, const std::string& prefix) {
  ComposedBatch b;
  for (std::size_t i = 0; i < images.size(); ++i) {
    b.images.push_back(images[i]);
    b.targets.push_back(ProbDist::one_hot(4, i % 4));
    b.origin.push_back(origin);
    b.loss_kind.push_back(kind);
    b.sample_ids.push_back(prefix + std::to_string(i));
  }
  return b;
}

void BM_MixAndRecompose(benchmark::State& state) {
  const ComposedBatch x = tagged(shapes(kBatch, false), Origin::source, LossKind::supervised, "x");
  const ComposedBatch a = tagged(shapes(kBatch, true), Origin::target, LossKind::consistency, "a");
  const ComposedBatch b = tagged(shapes(kBatch, true), Origin::target, LossKind::consistency, "b");
  Rng rng(4);
  for (auto _ : state) {
    const MixPool pool = build_mix_pool(x, a, b, 0.75, rng);
    benchmark::DoNotOptimize(recompose_for_bn(pool.mixed, rng));
  }
}
BENCHMARK(BM_MixAndRecompose);

void BM_TrainStep(benchmark::State& state) {
  const bool mixmatch = state.range(0) == 1;
  TrainingData data;
  data.sources.push_back(labeled_store("src", false, 50));
  DomainStore target = labeled_store("tgt", true, 50);
  data.unlabeled_target = target.without_labels();
  TrainingConfig config;
  config.sources = {"src"};
  config.target = "tgt";
  config.resize_side = 36;
  config.crop_side = kSide;
  config.learning_rate = 1e-3;
  Model<float> model(init_model<float>(config.backbone(4), 1));
  Adam<float> adam(model.state().params.size(), config.learning_rate);
  Sampler sampler;
  Rng rng(5);
  for (auto _ : state) {
    if (mixmatch) benchmark::DoNotOptimize(train_step_mixmatch(model, adam, sampler, data, config, rng));
    else benchmark::DoNotOptimize(train_step_baseline(model, adam, sampler, data, config, rng));
  }
  state.SetLabel(mixmatch ? "mixmatch" : "baseline");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
