#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "wsod/checkpoint.hpp"
#include "wsod/cli.hpp"

using namespace wsod;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

RunConfig small_run() {
  RunConfig cfg;
  cfg.train_images = 30;
  cfg.eval_images = 20;
  cfg.train.outer_rounds = 2;
  cfg.train.inner_epochs = 2;
  cfg.ablate_seeds = {0, 1};
  cfg.run_sweeps = false;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(WSOD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config text round trip") {
  RunConfig cfg;
  cfg.train.gamma = 0.3;
  cfg.train.epsilon = 0.1 + 0.2;
  cfg.train.noise_layout = NoiseLayout::kShared;
  cfg.ablate_seeds = {4, 9};
  cfg.lambda_sweep = {0.33};
  RunConfig back;
  apply_config_text(back, render_config(cfg));
  CHECK(render_config(back) == render_config(cfg));
  CHECK(back.train.epsilon == cfg.train.epsilon);
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(config_hash(RunConfig{}) != config_hash(cfg));
}

TEST_CASE("config errors name the key") {
  RunConfig cfg;
  CHECK_THROWS_WITH_AS(apply_config_text(cfg, "no_such_key = 1\n"), doctest::Contains("no_such_key"), UsageError);
  CHECK_THROWS_WITH_AS(apply_config_text(cfg, "gamma = abc\n"), doctest::Contains("gamma"), UsageError);
  CHECK_THROWS_AS(apply_config_text(cfg, "[train]\ngamma = 0.5\n"), UsageError);
  RunConfig bad;
  bad.train.gamma = 3;
  CHECK_THROWS_WITH_AS(validate(bad), doctest::Contains("gamma"), UsageError);
}

TEST_CASE("committed configs") {
  const fs::path dir = fs::path(WSOD_SOURCE_DIR) / "configs";
  CHECK(render_config(load_run_config(dir / "default.cfg")) == render_config(RunConfig{}));
  CHECK_NOTHROW(validate(load_run_config(dir / "smoke.cfg")));
}

TEST_CASE("gen-data") {
  TempDir tmp("wsod_test_gen");
  const RunConfig cfg = small_run();
  cmd_gen_data(cfg, tmp.path / "a");
  CHECK(line_count(tmp.path / "a" / "train.jsonl") == 30);
  CHECK(line_count(tmp.path / "a" / "eval.jsonl") == 20);
  const auto train = load_dataset(tmp.path / "a" / "train.jsonl");
  const auto eval = load_dataset(tmp.path / "a" / "eval.jsonl");
  CHECK_FALSE(train.front().ground_truth.has_value());
  CHECK(eval.front().ground_truth.has_value());
  CHECK(eval.front().id == 30);
  const auto manifest = nlohmann::json::parse(slurp(tmp.path / "a" / "manifest.json"));
  CHECK(manifest["config_hash"] == config_hash(cfg));
  CHECK(manifest["command"] == "gen-data");

  RunConfig other = cfg;
  other.scene.seed = 3;
  cmd_gen_data(other, tmp.path / "b");
  CHECK(slurp(tmp.path / "a" / "train.jsonl") != slurp(tmp.path / "b" / "train.jsonl"));
  CHECK_THROWS_AS(cmd_gen_data(cfg, ""), UsageError);
}

TEST_CASE("train and eval") {
  TempDir tmp("wsod_test_train");
  RunConfig cfg = small_run();
  cmd_gen_data(cfg, tmp.path / "data");

  SUBCASE("zero rounds write only the initial checkpoint") {
    cfg.train.outer_rounds = 0;
    const TrainResult r = cmd_train(tmp.path / "data", cfg, tmp.path / "t0");
    CHECK(r.rounds.empty());
    CHECK(fs::exists(tmp.path / "t0" / "final.ckpt"));
    CHECK(fs::is_empty(tmp.path / "t0" / "checkpoints"));
    CHECK(line_count(tmp.path / "t0" / "metrics.tsv") == 1);
    CHECK(load_checkpoint(tmp.path / "t0" / "final.ckpt").pred ==
          initial_pred_params(cfg.train, 3, cfg.scene.feature_dim));

    const EvalReport untrained = cmd_eval(tmp.path / "t0" / "final.ckpt", tmp.path / "data", cfg, tmp.path / "e0");
    CHECK(fs::exists(tmp.path / "e0" / "report.csv"));
    CHECK(untrained.map >= 0.0);
    CHECK(untrained.map <= 1.0);
  }
  SUBCASE("metrics have one row per round and reruns are identical") {
    cmd_train(tmp.path / "data", cfg, tmp.path / "a");
    cmd_train(tmp.path / "data", cfg, tmp.path / "b");
    CHECK(line_count(tmp.path / "a" / "metrics.tsv") == 3);
    CHECK(fs::exists(tmp.path / "a" / "checkpoints" / "round_001.ckpt"));
    CHECK(fs::exists(tmp.path / "a" / "checkpoints" / "round_002.ckpt"));
    CHECK(slurp(tmp.path / "a" / "metrics.tsv") == slurp(tmp.path / "b" / "metrics.tsv"));
    CHECK(slurp(tmp.path / "a" / "final.ckpt") == slurp(tmp.path / "b" / "final.ckpt"));
  }
  SUBCASE("resume from a round checkpoint matches the full run") {
    cmd_train(tmp.path / "data", cfg, tmp.path / "full");
    TrainCommandOptions opt;
    opt.resume = tmp.path / "full" / "checkpoints" / "round_001.ckpt";
    cmd_train(tmp.path / "data", cfg, tmp.path / "resumed", opt);
    CHECK(load_checkpoint(tmp.path / "resumed" / "final.ckpt").pred ==
          load_checkpoint(tmp.path / "full" / "final.ckpt").pred);
  }
  SUBCASE("eval rejects a checkpoint of the wrong shape") {
    RunConfig wide = cfg;
    wide.scene.feature_dim = 8;
    cmd_gen_data(wide, tmp.path / "wide");
    wide.train.outer_rounds = 0;
    cmd_train(tmp.path / "wide", wide, tmp.path / "tw");
    CHECK_THROWS_AS(cmd_eval(tmp.path / "tw" / "final.ckpt", tmp.path / "data", cfg, tmp.path / "ew"),
                    ContractViolation);
  }
  SUBCASE("eval needs ground truth") {
    cfg.train.outer_rounds = 0;
    cmd_train(tmp.path / "data", cfg, tmp.path / "t");
    CHECK_THROWS_AS(cmd_eval(tmp.path / "t" / "final.ckpt", tmp.path / "data" / "train.jsonl", cfg, tmp.path / "e"),
                    UsageError);
  }
}

TEST_CASE("ablate") {
  TempDir tmp("wsod_test_ablate");
  const RunConfig cfg = small_run();
  cmd_gen_data(cfg, tmp.path / "data");
  const AblationResult r = cmd_ablate(tmp.path / "data", cfg, tmp.path / "out");
  CHECK(r.rows.size() == 4 * cfg.ablate_seeds.size());
  for (std::uint64_t seed : cfg.ablate_seeds) {
    for (AblationVariant v : kAblationVariants) {
      CHECK(std::count_if(r.rows.begin(), r.rows.end(),
                          [&](const AblationRow& row) { return row.seed == seed && row.variant == v; }) == 1);
    }
  }
  CHECK(r.summary.size() == 4);
  CHECK(line_count(tmp.path / "out" / "ablation.csv") == 1 + r.rows.size());
  CHECK(fs::exists(tmp.path / "out" / "ablation_summary.csv"));

  CHECK(samples_per_image(apply_variant(cfg.train, AblationVariant::kPointwiseCond)) == 1);
  CHECK(samples_per_image(apply_variant(cfg.train, AblationVariant::kPointwiseBoth)) == 1);
  CHECK(samples_per_image(apply_variant(cfg.train, AblationVariant::kFull)) == cfg.train.k);
  CHECK_FALSE(apply_variant(cfg.train, AblationVariant::kPointwisePred).use_pred_self_diversity);
  CHECK(variant_name(AblationVariant::kFull) == "Pr_p+Pr_c");
}

TEST_CASE("verify") {
  TempDir tmp("wsod_test_verify");
  VerifyOptions small;
  small.sampler_instances = 100;
  small.gradient_instances = 10;
  small.cond_cond_draws = 10000;
  small.pred_pred_draws = 20000;
  small.ap_instances = 20;
  const auto clean = cmd_verify(small, tmp.path / "clean");
  for (const auto& c : clean) {
    CAPTURE(c.name);
    CHECK(c.passed);
  }
  std::istringstream table(slurp(tmp.path / "clean" / "checks.csv"));
  std::string header;
  std::getline(table, header);
  CHECK(header == "check,instances,max_error,tolerance,status");

  small.flip_gradient_sign = true;
  const auto flipped = cmd_verify(small, tmp.path / "flipped");
  std::size_t failed = 0;
  for (const auto& c : flipped) failed += c.passed ? 0 : 1;
  CHECK(failed >= 2);
}

TEST_CASE("command line exit codes") {
  TempDir tmp("wsod_test_exec");
  const std::string out = (tmp.path / "x").string();
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("train --out " + out) == 1);
  CHECK(run_cli("gen-data --out " + out + " --config " + (tmp.path / "missing.cfg").string()) == 1);
  CHECK(fs::exists(tmp.path / "x" / "FAILED"));
  CHECK(run_cli("gen-data --out " + out + " --config " + std::string(WSOD_SOURCE_DIR) + "/configs/smoke.cfg") == 0);
  CHECK_FALSE(fs::exists(tmp.path / "x" / "FAILED"));
  CHECK(run_cli("verify --out " + (tmp.path / "v").string() + " --inject-sign-flip") == 2);
}
