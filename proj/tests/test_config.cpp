#include <gtest/gtest.h>

#include "mmda/config.hpp"
#include "mmda/error.hpp"

namespace mmda {
namespace {

TEST(Config, ParsesLinesTokensAndComments) {
  const ConfigMap m = parse_config_text("# comment\nplan.n=15 mix.w=333\n\n  train.seed=4\n");
  EXPECT_EQ(m.at("plan.n"), "15");
  EXPECT_EQ(m.at("mix.w"), "333");
  EXPECT_EQ(m.at("train.seed"), "4");
  EXPECT_THROW(parse_config_text("plan.n 15"), ConfigError);
}

TEST(Config, LaterLayersWin) {
  const ConfigMap m = merge({{"a", "1"}, {"b", "2"}}, {{"b", "3"}});
  EXPECT_EQ(m.at("a"), "1");
  EXPECT_EQ(m.at("b"), "3");
}

TEST(Config, DefaultsMatchFullScaleSettings) {
  const TrainingConfig c = training_config_from({});
  EXPECT_EQ(c.batch_size, 15);
  EXPECT_DOUBLE_EQ(c.mix.alpha, 0.75);
  EXPECT_DOUBLE_EQ(c.mix.temperature, 0.5);
  EXPECT_DOUBLE_EQ(c.mix.weight, 333.0);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.epochs, 100);
  EXPECT_EQ(c.steps_per_epoch, 1000);
  EXPECT_EQ(c.resize_side, 256);
  EXPECT_EQ(c.crop_side, 224);
  EXPECT_EQ(training_config_from({{"train.mode", "baseline"}}).epochs, 10);
  EXPECT_EQ(training_config_from({{"train.mode", "baseline"}, {"train.epochs", "3"}}).epochs, 3);
}

TEST(Config, UnknownKeysAndBadValuesAreAllReported) {
  try {
    training_config_from({{"plan.nn", "3"}, {"mix.w", "abc"}, {"bogus", "1"}, {"plan.n", "15"}});
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("plan.nn"), std::string::npos);
    EXPECT_NE(msg.find("bogus"), std::string::npos);
    EXPECT_NE(msg.find("mix.w"), std::string::npos);
  }
}

TEST(Config, ResolvedConfigRoundTrips) {
  TrainingConfig c = training_config_from({{"plan.mode", "semi_supervised"},
                                           {"plan.sources", "real"},
                                           {"plan.target", "sketch"},
                                           {"model.channels", "8,16"},
                                           {"train.learning_rate", "0.00025"},
                                           {"mix.w", "1000"}});
  const TrainingConfig again = training_config_from(parse_config_text(format_config(to_config_map(c), true)));
  EXPECT_EQ(to_config_map(again), to_config_map(c));
  EXPECT_EQ(again.track, CompositionMode::semi_supervised);
  EXPECT_EQ(again.channels, (std::vector<int>{8, 16}));
  EXPECT_DOUBLE_EQ(again.learning_rate, 0.00025);
  EXPECT_EQ(config_text(c), format_config(to_config_map(c)));
}

TEST(Config, ToySpecFromKeys) {
  const ToySpec s = toy_spec_from({{"toy.class_count", "5"},
                                   {"toy.domains", "clean,inverted_noise,mine"},
                                   {"toy.domain.mine.noise", "0.3"},
                                   {"toy.domain.mine.foreground", "1,0,0"},
                                   {"toy.domain.clean.stroke", "1.5"}});
  EXPECT_EQ(s.class_count, 5);
  ASSERT_EQ(s.domains.size(), 3u);
  EXPECT_TRUE(s.domains[1].invert);
  EXPECT_DOUBLE_EQ(s.domains[2].noise_sigma, 0.3);
  EXPECT_FLOAT_EQ(s.domains[2].foreground[0], 1.0f);
  EXPECT_DOUBLE_EQ(s.domains[0].stroke, 1.5);
  const ToySpec again = toy_spec_from(to_config_map(s));
  EXPECT_EQ(to_config_map(again), to_config_map(s));
}

TEST(Config, ToySpecRejectsUnknownKeys) {
  EXPECT_THROW(toy_spec_from({{"toy.colour", "1"}}), ConfigError);
  EXPECT_THROW(toy_spec_from({{"toy.domain.absent.noise", "0.1"}}), ConfigError);
  EXPECT_THROW(toy_spec_from({{"toy.domain.clean.glow", "1"}}), ConfigError);
  EXPECT_THROW(toy_spec_from({{"toy.class_count", "99"}}), ConfigError);
}

}  // namespace
}  // namespace mmda
