#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "mmda/trainer.hpp"
#include "test_support.hpp"

namespace mmda {
namespace {

struct GradientCheck {
  double max_rel = 0.0;
  double max_abs_grad = 0.0;
};

// Central differences of the full step objective against the analytic gradient.
GradientCheck check_step_gradient(const TrainingConfig& config, const TrainingData& data, std::uint64_t seed) {
  Model<double> model(init_model<double>(config.backbone(data.class_count()), seed));
  Sampler sampler;
  Rng rng(seed + 7);
  const PreparedStep step = prepare_mixmatch_step(model, sampler, data, config, rng);
  const Vector<double> analytic =
      evaluate_mixmatch_objective(model, step, config.mix.weight, false, true).gradient;

  GradientCheck out;
  const double h = 1e-6;
  Vector<double>& params = model.mutable_state().params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = evaluate_mixmatch_objective(model, step, config.mix.weight, false, false).losses.total;
    params[i] = keep - h;
    const double down = evaluate_mixmatch_objective(model, step, config.mix.weight, false, false).losses.total;
    params[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    out.max_rel = std::max(out.max_rel, std::abs(numeric - analytic[i]) / scale);
    out.max_abs_grad = std::max(out.max_abs_grad, std::abs(analytic[i]));
  }
  return out;
}

TEST(Gradient, TinyFixtureMatchesFiniteDifferences) {
  TrainingData data = testing::toy_data(3, 4, 8);
  TrainingConfig config = testing::toy_config(8, 3);
  config.channels = {2};
  const GradientCheck g = check_step_gradient(config, data, 11);
  EXPECT_LT(g.max_rel, 1e-3);
  EXPECT_GT(g.max_abs_grad, 0.0);
}

TEST(Gradient, TwoStageBackboneMatchesFiniteDifferences) {
  TrainingData data = testing::toy_data(3, 4, 8);
  TrainingConfig config = testing::toy_config(8, 3);
  config.channels = {2, 3};
  EXPECT_LT(check_step_gradient(config, data, 5).max_rel, 1e-3);
}

TEST(Gradient, SupervisedOnlyMatchesFiniteDifferences) {
  TrainingData data = testing::toy_data(3, 4, 8);
  TrainingConfig config = testing::toy_config(8, 3);
  config.channels = {2};
  config.mix.weight = 0.0;
  EXPECT_LT(check_step_gradient(config, data, 3).max_rel, 1e-3);
}

}  // namespace
}  // namespace mmda
