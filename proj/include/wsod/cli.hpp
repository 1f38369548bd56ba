#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wsod/detector.hpp"
#include "wsod/synthdata.hpp"
#include "wsod/trainer.hpp"
#include "wsod/verify.hpp"

namespace wsod {

/// Bad flag, config key or value. The message names the field.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command reads from the config file.
struct RunConfig {
  SceneConfig scene;
  std::size_t train_images = 200;
  std::size_t eval_images = 100;
  TrainConfig train;
  DetectorOptions eval;
  std::vector<std::uint64_t> ablate_seeds{0, 1, 2, 3, 4};
  std::vector<double> lambda_sweep{1.0, 0.33, 3.0};
  std::vector<double> threshold_sweep{0.1, 0.2, 0.3, 0.4, 0.5};
  bool run_sweeps = true;
};

/// One `key = value` line per field in a fixed order; doubles use the
/// shortest round-trip form, so parse(render(c)) == c.
std::string render_config(const RunConfig& cfg);
/// Applies `key = value` lines on top of `cfg`. Lists are comma-separated.
/// Unknown keys, sections and malformed values raise UsageError.
void apply_config_text(RunConfig& cfg, const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Sub-config validation rethrown as UsageError.
void validate(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

/// A dataset argument names either a .jsonl file or a gen-data directory
/// holding train.jsonl and eval.jsonl.
struct DatasetPaths {
  std::filesystem::path train;
  std::optional<std::filesystem::path> eval;
};
DatasetPaths resolve_dataset(const std::filesystem::path& path);

void cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out);

struct TrainCommandOptions {
  /// Resume from this checkpoint (its completed_rounds are skipped).
  std::optional<std::filesystem::path> resume;
  /// Ground-truth images for per-round CorLoc.
  std::optional<std::filesystem::path> monitor;
};

/// Writes metrics.tsv (one row per round), timings.tsv, checkpoints/round_NNN.ckpt
/// per round, final.ckpt and manifest.json.
TrainResult cmd_train(const std::filesystem::path& dataset, const RunConfig& cfg, const std::filesystem::path& out,
                      const TrainCommandOptions& options = {});

/// Writes report.csv and manifest.json.
EvalReport cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                    const RunConfig& cfg, const std::filesystem::path& out);

enum class AblationVariant { kFull, kPointwiseCond, kPointwisePred, kPointwiseBoth };
inline constexpr AblationVariant kAblationVariants[] = {AblationVariant::kFull, AblationVariant::kPointwiseCond,
                                                        AblationVariant::kPointwisePred,
                                                        AblationVariant::kPointwiseBoth};
/// Row labels: Pr_p+Pr_c, Pr_p+PW_c, PW_p+Pr_c, PW_p+PW_c.
std::string variant_name(AblationVariant v);
TrainConfig apply_variant(TrainConfig cfg, AblationVariant v);

struct AblationRow {
  AblationVariant variant = AblationVariant::kFull;
  std::uint64_t seed = 0;
  double map = 0.0;
  double corloc = 0.0;
};

struct VariantSummary {
  AblationVariant variant = AblationVariant::kFull;
  std::size_t runs = 0;
  double map_mean = 0.0;
  double map_sd = 0.0;
  double corloc_mean = 0.0;
  double corloc_sd = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<VariantSummary> summary;
  /// Human-readable ordering violations; empty when full > both removed and
  /// full >= each single removal in mean mAP.
  std::vector<std::string> violations;
};

/// Trains and evaluates the four variants over the given seeds.
AblationResult run_ablation(const std::vector<ImageSample>& train, const std::vector<ImageSample>& eval,
                            const RunConfig& cfg);

/// Writes ablation.csv, ablation_summary.csv, optionally sweeps.csv, and manifest.json.
AblationResult cmd_ablate(const std::filesystem::path& dataset, const RunConfig& cfg,
                          const std::filesystem::path& out);

/// Writes checks.csv and manifest.json. Callers map any failed check to exit status 2.
std::vector<CheckResult> cmd_verify(const VerifyOptions& options, const std::filesystem::path& out);

}  // namespace wsod
