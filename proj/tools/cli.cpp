#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mmda/checkpoint.hpp"
#include "mmda/config.hpp"
#include "mmda/error.hpp"
#include "mmda/inference.hpp"
#include "mmda/trainer.hpp"

namespace fs = std::filesystem;

namespace mmda::cli {
namespace {

constexpr const char* kDataRootEnv = "MMDA_DATA_ROOT";

std::string env_data_root() {
  const char* v = std::getenv(kDataRootEnv);
  return v ? std::string(v) : std::string();
}

ConfigMap overrides_from(const std::vector<std::string>& tokens) {
  std::string text;
  for (const auto& t : tokens) text += t + "\n";
  return parse_config_text(text, "command line");
}

// defaults < file < flags/overrides
ConfigMap layered(const std::string& config_path, const ConfigMap& cli) {
  ConfigMap map;
  if (!config_path.empty()) map = read_config_file(config_path);
  return merge(std::move(map), cli);
}

std::string format_accuracy(double acc) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << acc;
  return s.str();
}

struct Loaded {
  TrainingConfig config;
  Checkpoint checkpoint;
  Model<float> model;
};

Loaded load_run(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  TrainingConfig config = training_config_from(parse_config_text(ck.config, path));
  Model<float> model(ck.model);
  return {std::move(config), std::move(ck), std::move(model)};
}

std::vector<DomainStore> load_manifests(const std::vector<std::string>& paths) {
  std::vector<DomainStore> stores;
  for (const auto& p : paths) stores.push_back(load_manifest(p));
  return stores;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MixMatch domain adaptation toolkit", "mmda"};
  app.require_subcommand(1);
  app.fallthrough(false);

  auto log = [&err](const std::string& line) { err << "[mmda] " << line << std::endl; };

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render a synthetic multi-domain shape dataset");
  std::string gen_config;
  std::string gen_out;
  std::vector<std::string> gen_overrides;
  gen->add_option("-c,--config", gen_config, "key=value config file (toy.* keys)");
  gen->add_option("-o,--out", gen_out, "output root (default $MMDA_DATA_ROOT)");
  gen->add_option("overrides", gen_overrides, "toy.key=value overrides");

  // train
  auto* train = app.add_subcommand("train", "Train a model (mixmatch or baseline)");
  std::string train_config;
  std::vector<std::string> train_overrides;
  std::string mode, track, out_dir;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  train->add_option("-c,--config", train_config, "key=value config file");
  train->add_option("--mode", mode, "mixmatch | baseline")->check(CLI::IsMember({"mixmatch", "baseline"}));
  train->add_option("--track", track, "multi_source | semi_supervised");
  train->add_option("--seed", seed, "train.seed");
  train->add_option("-o,--out", out_dir, "train.out_dir");
  train->add_flag("--resume", resume, "continue from the checkpoint in the output directory");
  train->add_option("overrides", train_overrides, "section.key=value overrides");

  // eval
  auto* eval = app.add_subcommand("eval", "Print target accuracy of a checkpoint");
  std::string eval_ckpt;
  std::vector<std::string> eval_manifests;
  int eval_tta = 1;
  std::uint64_t eval_seed = 0;
  eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("-m,--manifest", eval_manifests, "labeled manifest(s); default is the run's target split");
  eval->add_option("--tta", eval_tta, "augmented views per image (1 = centered view)")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "augmentation seed for --tta > 1");

  // predict
  auto* predict = app.add_subcommand("predict", "Export test-time-augmented predictions");
  std::string pred_ckpt, pred_out, pred_probs;
  std::vector<std::string> pred_manifests;
  int pred_tta = 7;
  std::uint64_t pred_seed = 0;
  predict->add_option("checkpoint", pred_ckpt, "checkpoint file")->required();
  predict->add_option("-m,--manifest", pred_manifests, "manifest(s); predictions are concatenated in order")
      ->required();
  predict->add_option("-o,--out", pred_out, "label file: sample_id<SPACE>class")->required();
  predict->add_option("--probs", pred_probs, "probability TSV");
  predict->add_option("--tta", pred_tta, "augmented views per image")->check(CLI::PositiveNumber);
  predict->add_option("--seed", pred_seed, "augmentation seed");

  // ensemble
  auto* ens = app.add_subcommand("ensemble", "Average probability TSVs from several models");
  std::vector<std::string> ens_inputs;
  std::string ens_out, ens_probs, ens_manifest;
  ens->add_option("inputs", ens_inputs, "probability TSVs")->required();
  ens->add_option("-o,--out", ens_out, "label file")->required();
  ens->add_option("--probs", ens_probs, "averaged probability TSV");
  ens->add_option("-m,--manifest", ens_manifest, "labeled manifest to score against");

  const bool verb_given = !args.empty() && !args.front().empty() && args.front().front() != '-';
  if (verb_given && app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "mmda: unknown verb '" << args.front() << "'\n\n" << app.help();
    return 2;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "mmda: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      ConfigMap map = layered(gen_config, overrides_from(gen_overrides));
      if (gen_out.empty()) gen_out = env_data_root();
      if (gen_out.empty()) throw ConfigError("gen-data: no output root (pass --out or set " + std::string(kDataRootEnv) + ")");
      const ToySpec spec = toy_spec_from(map);
      log("config " + format_config(to_config_map(spec), true));
      const ManifestSummary summary = generate_toy_dataset(spec, gen_out);
      for (const auto& d : summary.domains)
        out << d.domain_id << '\t' << d.count << '\t' << d.manifest.string() << '\n';
      return 0;
    }

    if (train->parsed()) {
      ConfigMap cli = overrides_from(train_overrides);
      if (!mode.empty()) cli["train.mode"] = mode;
      if (!track.empty()) cli["plan.mode"] = track;
      if (seed) cli["train.seed"] = std::to_string(*seed);
      if (!out_dir.empty()) cli["train.out_dir"] = out_dir;
      ConfigMap map = layered(train_config, cli);
      if (!map.contains("data.root") && !env_data_root().empty()) map["data.root"] = env_data_root();
      const TrainingConfig config = training_config_from(map);
      log("config " + format_config(to_config_map(config), true));
      Trainer trainer(config, load_training_data(config));
      const TrainResult result = trainer.train(resume, log);
      out << "checkpoint " << result.checkpoint.string() << '\n';
      out << "steps " << result.steps << '\n';
      if (result.target_accuracy) out << "target_accuracy " << format_accuracy(*result.target_accuracy) << '\n';
      return 0;
    }

    if (eval->parsed()) {
      Loaded run = load_run(eval_ckpt);
      log("config " + format_config(to_config_map(run.config), true));
      std::vector<DomainStore> stores;
      if (eval_manifests.empty()) {
        TrainingData data = load_training_data(run.config);
        if (!data.target_evaluation) throw DataError("eval: the run's target domain has no labels; pass --manifest");
        stores.push_back(std::move(*data.target_evaluation));
      } else {
        stores = load_manifests(eval_manifests);
      }
      const AugmentPolicy policy = run.config.augment_policy();
      std::size_t correct_weight = 0;
      double weighted = 0.0;
      for (std::size_t i = 0; i < stores.size(); ++i) {
        const double acc = evaluate(run.model, stores[i], policy, eval_tta, eval_seed + i);
        weighted += acc * static_cast<double>(stores[i].size());
        correct_weight += stores[i].size();
        if (stores.size() > 1) log(stores[i].domain_id() + " accuracy " + format_accuracy(acc));
      }
      out << format_accuracy(weighted / static_cast<double>(correct_weight)) << '\n';
      return 0;
    }

    if (predict->parsed()) {
      Loaded run = load_run(pred_ckpt);
      log("config " + format_config(to_config_map(run.config), true));
      const AugmentPolicy policy = run.config.augment_policy();
      const std::string model_id = fs::path(pred_ckpt).string();
      std::vector<PredictionSet> sets;
      Rng rng(pred_seed);
      for (const auto& store : load_manifests(pred_manifests))
        sets.push_back(predict_store_tta(run.model, store, policy, pred_tta, rng, model_id));
      const PredictionSet all = concatenate(sets);
      export_predictions(all, pred_out);
      if (!pred_probs.empty()) export_probabilities(all, pred_probs);
      out << all.size() << " predictions written to " << pred_out << '\n';
      return 0;
    }

    if (ens->parsed()) {
      std::vector<PredictionSet> sets;
      for (const auto& p : ens_inputs) sets.push_back(read_probabilities(p));
      PredictionSet avg = ensemble(sets);
      avg.model_id = "ensemble";
      export_predictions(avg, ens_out);
      if (!ens_probs.empty()) export_probabilities(avg, ens_probs);
      out << avg.size() << " predictions written to " << ens_out << '\n';
      if (!ens_manifest.empty()) out << format_accuracy(score(avg, load_manifest(ens_manifest))) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    err << "mmda: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace mmda::cli
