#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "mmda/inference.hpp"
#include "test_support.hpp"

namespace mmda {
namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> metrics_without_time(const std::filesystem::path& path) {
  std::vector<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) out.push_back(line.substr(0, line.find(",\"wall_ms\"")));
  return out;
}

TEST(Cli, UnknownVerbPrintsUsage) {
  const Outcome o = run({"frobnicate"});
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("unknown verb"), std::string::npos);
  EXPECT_NE(o.err.find("Usage"), std::string::npos);
  EXPECT_NE(run({}).code, 0);
}

TEST(Cli, HelpExitsCleanly) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, ConfigErrorsListEveryKey) {
  const Outcome o = run({"train", "plan.bogus=1", "mix.nope=2"});
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.err.find("plan.bogus"), std::string::npos);
  EXPECT_NE(o.err.find("mix.nope"), std::string::npos);
}

TEST(Cli, EnsembleOfIdenticalInputsReproducesThem) {
  const auto dir = testing::scratch_dir("cli_ens");
  PredictionSet s;
  s.model_id = "m";
  s.sample_ids = {"a", "b"};
  s.probabilities = {ProbDist{0.25, 0.75}, ProbDist{0.6, 0.4}};
  export_probabilities(s, dir / "a.tsv");
  export_probabilities(s, dir / "b.tsv");
  export_probabilities(s, dir / "c.tsv");
  const Outcome o = run({"ensemble", (dir / "a.tsv").string(), (dir / "b.tsv").string(), (dir / "c.tsv").string(),
                         "-o", (dir / "labels.txt").string(), "--probs", (dir / "avg.tsv").string()});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(read_file(dir / "labels.txt"), "a 1\nb 0\n");
  EXPECT_EQ(read_probabilities(dir / "avg.tsv").probabilities, s.probabilities);
}

TEST(Cli, EndToEndPipeline) {
  const auto dir = testing::scratch_dir("cli_e2e");
  const std::string data = (dir / "data").string();
  Outcome o = run({"gen-data", "-o", data, "toy.class_count=3", "toy.samples_per_class=8", "toy.image_side=16"});
  ASSERT_EQ(o.code, 0) << o.err;

  const std::vector<std::string> common{"plan.sources=clean", "plan.target=inverted_noise", "data.root=" + data,
                                        "augment.resize_side=18", "augment.crop_side=16", "model.channels=4,8",
                                        "train.steps_per_epoch=3", "train.epochs=2"};
  auto train_args = [&](const std::string& out, std::vector<std::string> extra) {
    std::vector<std::string> a{"train", "--mode", "mixmatch", "--track", "multi_source", "--seed", "3", "-o", out};
    a.insert(a.end(), common.begin(), common.end());
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  o = run(train_args((dir / "run").string(), {}));
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("target_accuracy"), std::string::npos);

  // The first log line carries the resolved configuration; replaying it reproduces the run.
  const std::string first = o.err.substr(0, o.err.find('\n'));
  ASSERT_EQ(first.rfind("[mmda] config ", 0), 0u) << first;
  std::istringstream echo(first.substr(std::string("[mmda] config ").size()));
  std::vector<std::string> replay{"train"};
  for (std::string tok; echo >> tok;)
    replay.push_back(tok.rfind("train.out_dir=", 0) == 0 ? "train.out_dir=" + (dir / "replay").string() : tok);
  ASSERT_EQ(run(replay).code, 0);
  EXPECT_EQ(metrics_without_time(dir / "replay" / "metrics.jsonl"), metrics_without_time(dir / "run" / "metrics.jsonl"));

  const std::string ckpt = (dir / "run" / "checkpoint.mmda").string();
  o = run({"eval", ckpt});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(std::regex_match(o.out, std::regex("[01]\\.[0-9]{3}\n"))) << o.out;

  o = run({"predict", ckpt, "-m", data + "/inverted_noise.tsv", "-m", data + "/clean.tsv", "-o",
           (dir / "pred.txt").string(), "--probs", (dir / "pred.tsv").string(), "--tta", "3"});
  ASSERT_EQ(o.code, 0) << o.err;
  const PredictionSet probs = read_probabilities(dir / "pred.tsv");
  EXPECT_EQ(probs.size(), 48u);
  EXPECT_EQ(probs.sample_ids.front().rfind("inverted_noise/", 0), 0u);
  EXPECT_EQ(probs.sample_ids.back().rfind("clean/", 0), 0u);

  o = run({"ensemble", (dir / "pred.tsv").string(), "-o", (dir / "ens.txt").string(), "-m",
           data + "/inverted_noise.tsv"});
  EXPECT_NE(o.code, 0);  // ids outside the scoring manifest are an error
}

TEST(Cli, DataRootFallsBackToEnvironment) {
  const auto dir = testing::scratch_dir("cli_env");
  ::setenv("MMDA_DATA_ROOT", (dir / "data").c_str(), 1);
  const Outcome o = run({"gen-data", "toy.class_count=2", "toy.samples_per_class=2", "toy.image_side=8"});
  ::unsetenv("MMDA_DATA_ROOT");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "data" / "clean.tsv"));
}

}  // namespace
}  // namespace mmda
