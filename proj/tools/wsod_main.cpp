#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "wsod/cli.hpp"

namespace fs = std::filesystem;
using namespace wsod;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::string dataset;
  std::string eval_dataset;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rounds;
  std::optional<double> lambda;
  std::optional<double> gamma;
  std::optional<std::size_t> k;
  std::optional<double> epsilon;
  std::optional<double> score_threshold;
  std::optional<double> nms_iou;
  bool inject_sign_flip = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key = value config file (defaults apply to missing keys)");
  cmd->add_option("--out", f.out, "output directory")->required();
}

void add_training(CLI::App* cmd, Flags& f) {
  cmd->add_option("--seed", f.seed, "training seed (ablate: first of consecutive seeds)");
  cmd->add_option("--rounds", f.rounds, "outer coordinate-descent rounds");
  cmd->add_option("--lambda", f.lambda, "localization loss ratio");
  cmd->add_option("--gamma", f.gamma, "conditional self-diversity weight");
  cmd->add_option("--k", f.k, "conditional samples per image");
  cmd->add_option("--epsilon", f.epsilon, "loss-augmentation temperature");
  cmd->add_option("--score-threshold", f.score_threshold, "pseudo-label score threshold");
  cmd->add_option("--nms-iou", f.nms_iou, "pseudo-label NMS IoU");
}

RunConfig effective_config(const Flags& f, const std::string& command) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (f.seed) {
    if (command == "gen-data") {
      cfg.scene.seed = *f.seed;
    } else if (command == "ablate") {
      for (std::size_t i = 0; i < cfg.ablate_seeds.size(); ++i) cfg.ablate_seeds[i] = *f.seed + i;
    } else {
      cfg.train.seed = *f.seed;
    }
  }
  if (f.rounds) cfg.train.outer_rounds = *f.rounds;
  if (f.lambda) cfg.train.lambda = *f.lambda;
  if (f.gamma) cfg.train.gamma = *f.gamma;
  if (f.k) cfg.train.k = *f.k;
  if (f.epsilon) cfg.train.epsilon = *f.epsilon;
  if (command == "eval") {
    if (f.score_threshold) cfg.eval.score_threshold = *f.score_threshold;
    if (f.nms_iou) cfg.eval.nms_iou = *f.nms_iou;
  } else {
    if (f.score_threshold) cfg.train.score_threshold = *f.score_threshold;
    if (f.nms_iou) cfg.train.nms_iou = *f.nms_iou;
  }
  return cfg;
}

void mark_failed(const std::string& out, const std::string& message) {
  if (out.empty()) return;
  std::error_code ec;
  fs::create_directories(out, ec);
  std::ofstream(fs::path(out) / "FAILED") << message << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised detection with dissimilarity coefficients"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic train/eval dataset");
  add_common(gen, f);
  gen->add_option("--seed", f.seed, "scene seed");

  auto* train = app.add_subcommand("train", "coordinate-descent training");
  add_common(train, f);
  add_training(train, f);
  train->add_option("--dataset", f.dataset, "weak dataset file or gen-data directory")->required();
  train->add_option("--eval-dataset", f.eval_dataset, "images with ground truth for per-round CorLoc");
  train->add_option("--checkpoint", f.checkpoint, "resume from this checkpoint");

  auto* eval = app.add_subcommand("eval", "AP and CorLoc of a checkpoint");
  add_common(eval, f);
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint to evaluate")->required();
  eval->add_option("--dataset", f.dataset, "dataset file with ground truth or gen-data directory")->required();
  eval->add_option("--score-threshold", f.score_threshold, "detection score threshold");
  eval->add_option("--nms-iou", f.nms_iou, "detection NMS IoU");

  auto* ablate = app.add_subcommand("ablate", "self-diversity ablations and lambda/threshold sweeps");
  add_common(ablate, f);
  add_training(ablate, f);
  ablate->add_option("--dataset", f.dataset, "gen-data directory")->required();

  auto* verify = app.add_subcommand("verify", "oracle checks");
  verify->add_option("--out", f.out, "output directory")->required();
  verify->add_option("--seed", f.seed, "instance seed");
  verify->add_flag("--inject-sign-flip", f.inject_sign_flip, "negate analytic gradients (mutation fixture)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      cmd_gen_data(effective_config(f, "gen-data"), f.out);
    } else if (train->parsed()) {
      TrainCommandOptions opt;
      if (!f.checkpoint.empty()) opt.resume = f.checkpoint;
      if (!f.eval_dataset.empty()) opt.monitor = f.eval_dataset;
      const auto result = cmd_train(f.dataset, effective_config(f, "train"), f.out, opt);
      if (!result.rounds.empty() && result.rounds.back().corloc) {
        std::cout << "final corloc " << *result.rounds.back().corloc << '\n';
      }
    } else if (eval->parsed()) {
      const auto report = cmd_eval(f.checkpoint, f.dataset, effective_config(f, "eval"), f.out);
      std::cout << "map " << report.map << " corloc " << report.corloc.mean << '\n';
    } else if (ablate->parsed()) {
      const auto result = cmd_ablate(f.dataset, effective_config(f, "ablate"), f.out);
      for (const auto& s : result.summary) {
        std::cout << variant_name(s.variant) << " map " << s.map_mean << " +- " << s.map_sd << " corloc "
                  << s.corloc_mean << " +- " << s.corloc_sd << '\n';
      }
      for (const auto& v : result.violations) std::cout << "ordering violation: " << v << '\n';
    } else if (verify->parsed()) {
      VerifyOptions opt;
      if (f.seed) opt.seed = *f.seed;
      opt.flip_gradient_sign = f.inject_sign_flip;
      const auto results = cmd_verify(opt, f.out);
      write_check_table(std::cout, results);
      if (!std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; })) return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    mark_failed(f.out, e.what());
    return 1;
  }
  return 0;
}
