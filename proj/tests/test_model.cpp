#include <gtest/gtest.h>

#include <cmath>

#include "mmda/error.hpp"
#include "mmda/model.hpp"
#include "test_support.hpp"

namespace mmda {
namespace {

BackboneSpec tiny_spec(std::vector<int> channels = {3}, int side = 8, int classes = 3) {
  BackboneSpec spec;
  spec.input_side = side;
  spec.channels = std::move(channels);
  spec.class_count = classes;
  return spec;
}

std::vector<Image> batch_of(int n, int side, std::uint64_t seed) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(testing::noise_image(side, seed + static_cast<std::uint64_t>(i)));
  return out;
}

// Direct 3x3, stride 2, pad 1 convolution of one image channel stack.
std::vector<double> conv_direct(const ModelState<double>& state, const ParamLayout& layout, const Image& img,
                                int out_channel) {
  const auto& st = layout.stages[0];
  std::vector<double> out(static_cast<std::size_t>(st.out_side * st.out_side), 0.0);
  for (int oy = 0; oy < st.out_side; ++oy)
    for (int ox = 0; ox < st.out_side; ++ox) {
      double acc = 0.0;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          for (int c = 0; c < st.in_channels; ++c) {
            const int y = 2 * oy + ky - 1, x = 2 * ox + kx - 1;
            if (y < 0 || x < 0 || y >= st.in_side || x >= st.in_side) continue;
            const std::size_t row = static_cast<std::size_t>((ky * 3 + kx) * st.in_channels + c);
            const double w = state.params[static_cast<Eigen::Index>(st.kernel.offset + static_cast<std::size_t>(out_channel) +
                                                                    row * static_cast<std::size_t>(st.out_channels))];
            acc += w * img.at(c, y, x);
          }
      out[static_cast<std::size_t>(oy * st.out_side + ox)] = acc;
    }
  return out;
}

TEST(Model, SpecValidation) {
  EXPECT_NO_THROW(tiny_spec().validate());
  BackboneSpec s = tiny_spec();
  s.channels = {};
  EXPECT_THROW(s.validate(), ConfigError);
  s = tiny_spec();
  s.class_count = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = tiny_spec();
  s.bn_momentum = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Model, LayoutCountsParameters) {
  const ParamLayout l = ParamLayout::build(tiny_spec({2, 4}, 8, 3));
  // conv 2*27 + bn 2*2, conv 4*18 + bn 4*2, head 3*4 + 3
  EXPECT_EQ(l.total, 54u + 4u + 72u + 8u + 12u + 3u);
  EXPECT_EQ(l.stages[0].out_side, 4);
  EXPECT_EQ(l.stages[1].out_side, 2);
  EXPECT_EQ(downsampled_side(224), 112);
  EXPECT_EQ(downsampled_side(7), 4);
}

TEST(Model, InitIsSeeded) {
  const auto a = init_model<double>(tiny_spec(), 3);
  const auto b = init_model<double>(tiny_spec(), 3);
  const auto c = init_model<double>(tiny_spec(), 4);
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.params, c.params);
  EXPECT_EQ(a.running_mean[0], Vector<double>::Zero(3));
  EXPECT_EQ(a.running_var[0], Vector<double>::Ones(3));
}

TEST(Model, EvalForwardIsPure) {
  Model<double> model(init_model<double>(tiny_spec(), 1));
  const auto images = batch_of(4, 8, 10);
  const auto before = model.state();
  const Matrix<double> a = model.forward_eval(images);
  const Matrix<double> b = model.forward(images, ForwardOptions{ForwardMode::eval, true});
  EXPECT_EQ(a, b);
  EXPECT_EQ(model.state().running_mean[0], before.running_mean[0]);
  EXPECT_EQ(model.state().running_var[0], before.running_var[0]);
  EXPECT_EQ(model.state().params, before.params);
}

TEST(Model, TrainForwardWithoutUpdateLeavesStatistics) {
  Model<double> model(init_model<double>(tiny_spec(), 1));
  const auto before = model.state();
  model.forward(batch_of(4, 8, 10), ForwardOptions{ForwardMode::train, false});
  EXPECT_EQ(model.state().running_mean[0], before.running_mean[0]);
  EXPECT_EQ(model.state().running_var[0], before.running_var[0]);
}

TEST(Model, RunningStatisticsFollowMomentumRecurrence) {
  const BackboneSpec spec = tiny_spec({2});
  Model<double> model(init_model<double>(spec, 2));
  const ParamLayout layout = ParamLayout::build(spec);
  Vector<double> mean = model.state().running_mean[0];
  Vector<double> var = model.state().running_var[0];
  for (int step = 0; step < 3; ++step) {
    const auto images = batch_of(5, 8, 100 + 10 * static_cast<std::uint64_t>(step));
    for (int o = 0; o < 2; ++o) {
      std::vector<double> values;
      for (const auto& img : images)
        for (double v : conv_direct(model.state(), layout, img, o)) values.push_back(v);
      double m = 0.0, sq = 0.0;
      for (double v : values) m += v;
      m /= static_cast<double>(values.size());
      for (double v : values) sq += (v - m) * (v - m);
      const double batch_var = sq / static_cast<double>(values.size());  // biased
      mean[o] = 0.9 * mean[o] + 0.1 * m;
      var[o] = 0.9 * var[o] + 0.1 * batch_var;
    }
    model.forward(images, ForwardOptions{ForwardMode::train, true});
    for (int o = 0; o < 2; ++o) {
      EXPECT_NEAR(model.state().running_mean[0][o], mean[o], 1e-10);
      EXPECT_NEAR(model.state().running_var[0][o], var[o], 1e-10);
    }
  }
}

TEST(Model, TrainModeNormalizesToZeroMeanUnitVariance) {
  Model<double> model(init_model<double>(tiny_spec({4, 3}), 3));
  ForwardCache<double> cache;
  model.forward(batch_of(6, 8, 20), ForwardOptions{ForwardMode::train, true}, &cache);
  for (const auto& st : cache.stages) {
    for (Eigen::Index c = 0; c < st.normalized.rows(); ++c) {
      const double m = st.normalized.row(c).mean();
      const double v = (st.normalized.row(c).array() - m).square().mean();
      EXPECT_NEAR(m, 0.0, 1e-10);
      EXPECT_NEAR(v, 1.0, 1e-3);  // epsilon keeps it slightly below one
    }
  }
}

TEST(Model, PredictionsAreDistributions) {
  Model<float> model(init_model<float>(tiny_spec({4}, 8, 5), 4));
  for (const auto& p : model.predict_proba(batch_of(3, 8, 30))) {
    EXPECT_EQ(p.size(), 5u);
    EXPECT_TRUE(on_simplex(p.values()));
  }
}

TEST(Model, FloatAndDoubleAgree) {
  const auto state = init_model<double>(tiny_spec({4, 6}), 5);
  Model<double> md(state);
  Model<float> mf(state.cast<float>());
  const auto images = batch_of(4, 8, 40);
  const Matrix<double> a = md.forward(images, ForwardOptions{ForwardMode::train, false});
  const Matrix<float> b = mf.forward(images, ForwardOptions{ForwardMode::train, false});
  EXPECT_LT((a - b.cast<double>()).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Model, RejectsWrongInputShape) {
  Model<float> model(init_model<float>(tiny_spec(), 1));
  EXPECT_THROW(model.forward_eval(batch_of(2, 9, 1)), Error);
  EXPECT_THROW(model.forward_eval({}), Error);
}

TEST(Model, CountsCalls) {
  Model<double> model(init_model<double>(tiny_spec(), 1));
  ForwardCache<double> cache;
  const auto logits = model.forward(batch_of(2, 8, 1), ForwardOptions{ForwardMode::train, true}, &cache);
  model.forward_eval(batch_of(2, 8, 1));
  model.backward(cache, Matrix<double>::Ones(logits.rows(), logits.cols()));
  EXPECT_EQ(model.counters().forward, 2);
  EXPECT_EQ(model.counters().backward, 1);
  model.reset_counters();
  EXPECT_EQ(model.counters().forward, 0);
}

TEST(Model, BackwardSumsOverPasses) {
  Model<double> model(init_model<double>(tiny_spec({2}), 6));
  ForwardCache<double> c1, c2;
  const auto l1 = model.forward(batch_of(3, 8, 50), ForwardOptions{ForwardMode::train, false}, &c1);
  const auto l2 = model.forward(batch_of(3, 8, 60), ForwardOptions{ForwardMode::train, false}, &c2);
  const Matrix<double> g1 = Matrix<double>::Constant(l1.rows(), l1.cols(), 0.3);
  const Matrix<double> g2 = Matrix<double>::Constant(l2.rows(), l2.cols(), -0.7);
  const ForwardCache<double>* caches[] = {&c1, &c2};
  const Matrix<double>* grads[] = {&g1, &g2};
  const Vector<double> both = model.backward(std::span<const ForwardCache<double>* const>(caches),
                                             std::span<const Matrix<double>* const>(grads));
  const Vector<double> sum = model.backward(c1, g1) + model.backward(c2, g2);
  EXPECT_LT((both - sum).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace
}  // namespace mmda
