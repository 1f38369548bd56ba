#include "wsod/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "wsod/checkpoint.hpp"

namespace wsod {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw UsageError(key + ": expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw UsageError(key + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw UsageError(key + ": expected true or false, got '" + s + "'");
}

const std::string& single(const std::string& key, const std::vector<std::string>& values) {
  if (values.size() != 1) throw UsageError(key + ": expected exactly one value");
  return values.front();
}

template <class T, class F>
std::string join(const std::vector<T>& values, F&& fmt) {
  std::string out;
  for (std::size_t k = 0; k < values.size(); ++k) out += (k ? "," : "") + fmt(values[k]);
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::vector<std::string>&)> set;
};

template <class Access>
Field real_field(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return format_double(access(c)); },
          [access](RunConfig& c, const std::string& k, const std::vector<std::string>& v) {
            access(c) = parse_double(k, single(k, v));
          }};
}

template <class Access>
Field count_field(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return std::to_string(access(c)); },
          [access](RunConfig& c, const std::string& k, const std::vector<std::string>& v) {
            access(c) = static_cast<std::remove_cvref_t<decltype(access(c))>>(parse_uint(k, single(k, v)));
          }};
}

template <class Access>
Field flag_field(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return std::string(access(c) ? "true" : "false"); },
          [access](RunConfig& c, const std::string& k, const std::vector<std::string>& v) {
            access(c) = parse_bool(k, single(k, v));
          }};
}

template <class E, class Access>
Field choice_field(std::string key, Access access, std::vector<std::pair<std::string, E>> names) {
  return {key,
          [access, names](const RunConfig& c) {
            for (const auto& [n, e] : names) {
              if (access(c) == e) return n;
            }
            return std::string("?");
          },
          [access, names](RunConfig& c, const std::string& k, const std::vector<std::string>& v) {
            const std::string& s = single(k, v);
            for (const auto& [n, e] : names) {
              if (n == s) {
                access(c) = e;
                return;
              }
            }
            throw UsageError(k + ": unknown value '" + s + "'");
          }};
}

#define WSOD_ACCESS(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(count_field("num_classes", WSOD_ACCESS(scene.num_classes)));
    f.push_back(count_field("num_proposals", WSOD_ACCESS(scene.num_proposals)));
    f.push_back(count_field("feature_dim", WSOD_ACCESS(scene.feature_dim)));
    f.push_back(count_field("min_objects", WSOD_ACCESS(scene.min_objects)));
    f.push_back(count_field("max_objects", WSOD_ACCESS(scene.max_objects)));
    f.push_back(count_field("copies_per_object", WSOD_ACCESS(scene.copies_per_object)));
    f.push_back(real_field("extent", WSOD_ACCESS(scene.extent)));
    f.push_back(real_field("min_object_size", WSOD_ACCESS(scene.min_object_size)));
    f.push_back(real_field("max_object_size", WSOD_ACCESS(scene.max_object_size)));
    f.push_back(real_field("jitter", WSOD_ACCESS(scene.jitter)));
    f.push_back(real_field("feature_noise", WSOD_ACCESS(scene.feature_noise)));
    f.push_back(count_field("prototype_seed", WSOD_ACCESS(scene.prototype_seed)));
    f.push_back(count_field("data_seed", WSOD_ACCESS(scene.seed)));
    f.push_back(count_field("train_images", WSOD_ACCESS(train_images)));
    f.push_back(count_field("eval_images", WSOD_ACCESS(eval_images)));

    f.push_back(count_field("seed", WSOD_ACCESS(train.seed)));
    f.push_back(real_field("gamma", WSOD_ACCESS(train.gamma)));
    f.push_back(count_field("k", WSOD_ACCESS(train.k)));
    f.push_back(real_field("epsilon", WSOD_ACCESS(train.epsilon)));
    f.push_back(real_field("eta", WSOD_ACCESS(train.eta)));
    f.push_back(real_field("lambda", WSOD_ACCESS(train.lambda)));
    f.push_back(real_field("score_threshold", WSOD_ACCESS(train.score_threshold)));
    f.push_back(real_field("nms_iou", WSOD_ACCESS(train.nms_iou)));
    f.push_back(count_field("outer_rounds", WSOD_ACCESS(train.outer_rounds)));
    f.push_back(count_field("inner_epochs", WSOD_ACCESS(train.inner_epochs)));
    f.push_back(count_field("batch_size", WSOD_ACCESS(train.batch_size)));
    f.push_back(count_field("noise_dim", WSOD_ACCESS(train.noise_dim)));
    f.push_back(count_field("hidden", WSOD_ACCESS(train.hidden)));
    f.push_back(count_field("cond_hidden", WSOD_ACCESS(train.cond_hidden)));
    f.push_back(choice_field<NoiseLayout>("noise_layout", WSOD_ACCESS(train.noise_layout),
                                          {{"shared", NoiseLayout::kShared}, {"per_proposal", NoiseLayout::kPerProposal}}));
    f.push_back(real_field("init_scale", WSOD_ACCESS(train.init_scale)));
    f.push_back(real_field("background_bias", WSOD_ACCESS(train.background_bias)));
    f.push_back(flag_field("use_pred_self_diversity", WSOD_ACCESS(train.use_pred_self_diversity)));
    f.push_back(flag_field("pointwise_conditional", WSOD_ACCESS(train.pointwise_conditional)));
    f.push_back(choice_field<SamplerMode>("sampler", WSOD_ACCESS(train.sampler),
                                          {{"exact", SamplerMode::kExact}, {"heuristic", SamplerMode::kMaxScoreHeuristic}}));
    f.push_back(choice_field<Execution>("execution", WSOD_ACCESS(train.execution),
                                        {{"parallel", Execution::kParallel}, {"serial", Execution::kSerial}}));

    f.push_back(real_field("eval_score_threshold", WSOD_ACCESS(eval.score_threshold)));
    f.push_back(real_field("eval_nms_iou", WSOD_ACCESS(eval.nms_iou)));

    f.push_back({"ablate_seeds",
                 [](const RunConfig& c) {
                   return join(c.ablate_seeds, [](std::uint64_t s) { return std::to_string(s); });
                 },
                 [](RunConfig& c, const std::string& k, const std::vector<std::string>& v) {
                   c.ablate_seeds.clear();
                   for (const auto& s : v) c.ablate_seeds.push_back(parse_uint(k, s));
                 }});
    f.push_back({"lambda_sweep", [](const RunConfig& c) { return join(c.lambda_sweep, format_double); },
                 [](RunConfig& c, const std::string& k, const std::vector<std::string>& v) {
                   c.lambda_sweep.clear();
                   for (const auto& s : v) c.lambda_sweep.push_back(parse_double(k, s));
                 }});
    f.push_back({"threshold_sweep", [](const RunConfig& c) { return join(c.threshold_sweep, format_double); },
                 [](RunConfig& c, const std::string& k, const std::vector<std::string>& v) {
                   c.threshold_sweep.clear();
                   for (const auto& s : v) c.threshold_sweep.push_back(parse_double(k, s));
                 }});
    f.push_back(flag_field("run_sweeps", WSOD_ACCESS(run_sweeps)));
    return f;
  }();
  return table;
}

#undef WSOD_ACCESS

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

/// Output directory bookkeeping: clears a stale failure marker and assembles
/// the manifest.
class Manifest {
 public:
  Manifest(std::string command, const fs::path& out, const RunConfig* cfg) : out_(out) {
    if (out.empty()) throw UsageError("--out: output directory is required");
    fs::create_directories(out);
    fs::remove(out / "FAILED");
    doc_["command"] = std::move(command);
    doc_["started_at"] = utc_now();
    if (cfg != nullptr) {
      json c = json::object();
      std::istringstream lines(render_config(*cfg));
      std::string line;
      while (std::getline(lines, line)) {
        const auto eq = line.find(" = ");
        c[line.substr(0, eq)] = line.substr(eq + 3);
      }
      doc_["config"] = c;
      doc_["config_hash"] = config_hash(*cfg);
      doc_["seeds"] = {{"data_seed", cfg->scene.seed}, {"seed", cfg->train.seed},
                       {"ablate_seeds", cfg->ablate_seeds}};
    }
    doc_["inputs"] = json::array();
    doc_["artifacts"] = json::array();
  }

  void input(const std::string& role, const fs::path& path) {
    doc_["inputs"].push_back({{"role", role}, {"path", path.string()}, {"fnv1a", fnv1a_hex(read_file(path))}});
  }
  void artifact(const fs::path& relative) { doc_["artifacts"].push_back(relative.generic_string()); }
  void set(const std::string& key, json value) { doc_[key] = std::move(value); }

  void write() {
    doc_["finished_at"] = utc_now();
    write_file(out_ / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  fs::path out_;
  json doc_;
};

std::vector<ImageSample> load_images(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw UsageError("--dataset: no dataset file at " + path.string());
  return load_dataset(path);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string fixed(double v, int digits = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  CLI::ConfigBase parser;
  for (const auto& item : parser.from_config(in)) {
    if (!item.parents.empty() || item.name == "++" || item.name == "--") {
      throw UsageError("config: sections are not supported (" + item.fullname() + ")");
    }
    const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return f.key == item.name; });
    if (it == fields().end()) throw UsageError("config: unknown key '" + item.name + "'");
    it->set(cfg, item.name, item.inputs);
  }
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw UsageError("--config: no file at " + path.string());
  RunConfig cfg;
  apply_config_text(cfg, read_file(path));
  return cfg;
}

void validate(const RunConfig& cfg) {
  try {
    validate(cfg.scene);
    validate(cfg.train);
  } catch (const ContractViolation& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  if (cfg.train_images == 0) throw UsageError("config: train_images must be >= 1");
  if (cfg.eval.score_threshold < 0.0 || cfg.eval.score_threshold > 1.0) {
    throw UsageError("config: eval_score_threshold must lie in [0, 1]");
  }
  if (cfg.eval.nms_iou < 0.0 || cfg.eval.nms_iou > 1.0) throw UsageError("config: eval_nms_iou must lie in [0, 1]");
  if (cfg.ablate_seeds.empty()) throw UsageError("config: ablate_seeds must not be empty");
  for (double l : cfg.lambda_sweep) {
    if (l < 0.0) throw UsageError("config: lambda_sweep values must be non-negative");
  }
  for (double t : cfg.threshold_sweep) {
    if (t < 0.0 || t > 1.0) throw UsageError("config: threshold_sweep values must lie in [0, 1]");
  }
}

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(render_config(cfg)); }

DatasetPaths resolve_dataset(const fs::path& path) {
  if (path.empty()) throw UsageError("--dataset: a dataset path is required");
  if (fs::is_directory(path)) {
    DatasetPaths p{path / "train.jsonl", std::nullopt};
    if (!fs::is_regular_file(p.train)) throw UsageError("--dataset: " + path.string() + " has no train.jsonl");
    if (fs::is_regular_file(path / "eval.jsonl")) p.eval = path / "eval.jsonl";
    return p;
  }
  if (!fs::is_regular_file(path)) throw UsageError("--dataset: no file or directory at " + path.string());
  return DatasetPaths{path, std::nullopt};
}

void cmd_gen_data(const RunConfig& cfg, const fs::path& out) {
  validate(cfg);
  Manifest manifest("gen-data", out, &cfg);
  const auto all = generate_dataset(cfg.scene, cfg.train_images + cfg.eval_images);
  const std::vector<ImageSample> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.train_images));
  const std::vector<ImageSample> eval(all.begin() + static_cast<std::ptrdiff_t>(cfg.train_images), all.end());
  save_dataset(to_weak(train), out / "train.jsonl");
  manifest.artifact("train.jsonl");
  if (!eval.empty()) {
    save_dataset(eval, out / "eval.jsonl");
    manifest.artifact("eval.jsonl");
  }
  manifest.set("dataset_fnv1a", fnv1a_hex(dataset_to_jsonl(all)));
  manifest.write();
}

TrainResult cmd_train(const fs::path& dataset, const RunConfig& cfg, const fs::path& out,
                      const TrainCommandOptions& options) {
  validate(cfg);
  const DatasetPaths paths = resolve_dataset(dataset);
  const auto train = load_images(paths.train);
  if (train.empty()) throw UsageError("--dataset: training set is empty");
  std::optional<std::vector<ImageSample>> monitor;
  const auto monitor_path = options.monitor ? options.monitor : paths.eval;
  if (monitor_path) monitor = load_images(*monitor_path);

  Manifest manifest("train", out, &cfg);
  manifest.input("train", paths.train);
  if (monitor_path) manifest.input("monitor", *monitor_path);

  const std::size_t num_classes = cfg.scene.num_classes;
  const std::string hash = config_hash(cfg);
  TrainOptions topt;
  if (monitor) topt.monitor = &*monitor;
  if (options.resume) {
    manifest.input("resume", *options.resume);
    Checkpoint ckpt = load_checkpoint(*options.resume);
    topt.initial_pred = std::move(ckpt.pred);
    topt.initial_cond = std::move(ckpt.cond);
    topt.completed_rounds = ckpt.completed_rounds;
  }

  fs::create_directories(out / "checkpoints");
  std::ofstream metrics(out / "metrics.tsv", std::ios::trunc);
  std::ofstream timings(out / "timings.tsv", std::ios::trunc);
  metrics << "round\teta\tcond_cross\tcond_self\tpred_objective\tdisc_cross\tdisc_self_cond\tdisc_self_pred\tdisc\tcorloc\n";
  timings << "round\twall_seconds\n";
  manifest.artifact("metrics.tsv");
  manifest.artifact("timings.tsv");

  topt.on_round = [&](const RoundMetrics& m, const PredParams& pred, const CondParams& cond) {
    char row[512];
    std::snprintf(row, sizeof row, "%zu\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t", m.round,
                  round_learning_rate(cfg.train, m.round), m.cond_cross, m.cond_self, m.pred_objective,
                  m.disc.cross, m.disc.self_cond, m.disc.self_pred, m.disc.disc);
    metrics << row << (m.corloc ? fixed(*m.corloc) : std::string("NA")) << '\n' << std::flush;
    timings << m.round << '\t' << fixed(m.wall_seconds, 3) << '\n' << std::flush;
    char name[32];
    std::snprintf(name, sizeof name, "round_%03zu.ckpt", m.round);
    save_checkpoint(Checkpoint{pred, cond, m.round, hash}, out / "checkpoints" / name);
    manifest.artifact(fs::path("checkpoints") / name);
  };

  TrainResult result = coordinate_descent(train, num_classes, cfg.train, topt);
  if (!metrics || !timings) throw std::runtime_error("failed writing metrics");
  const std::size_t done = std::max<std::size_t>(topt.completed_rounds, cfg.train.outer_rounds);
  save_checkpoint(Checkpoint{result.pred, result.cond, done, hash}, out / "final.ckpt");
  manifest.artifact("final.ckpt");
  manifest.write();
  return result;
}

EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const RunConfig& cfg, const fs::path& out) {
  validate(cfg);
  if (checkpoint.empty()) throw UsageError("--checkpoint: a checkpoint path is required");
  if (!fs::is_regular_file(checkpoint)) throw UsageError("--checkpoint: no file at " + checkpoint.string());
  const DatasetPaths paths = resolve_dataset(dataset);
  const fs::path eval_path = fs::is_directory(dataset) ? paths.eval.value_or(paths.train) : paths.train;
  const auto images = load_images(eval_path);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  for (const auto& img : images) {
    if (!img.ground_truth) throw UsageError("--dataset: evaluation images need ground truth (" + eval_path.string() + ")");
  }

  Manifest manifest("eval", out, &cfg);
  manifest.input("checkpoint", checkpoint);
  manifest.input("dataset", eval_path);
  const EvalReport report = evaluate_model(ckpt.pred, images, cfg.eval, cfg.train.execution);
  std::ostringstream csv;
  write_report_csv(csv, report);
  write_file(out / "report.csv", csv.str());
  manifest.artifact("report.csv");
  manifest.set("ap_interpolation", "every-point");
  manifest.write();
  return report;
}

std::string variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull: return "Pr_p+Pr_c";
    case AblationVariant::kPointwiseCond: return "Pr_p+PW_c";
    case AblationVariant::kPointwisePred: return "PW_p+Pr_c";
    case AblationVariant::kPointwiseBoth: return "PW_p+PW_c";
  }
  return "?";
}

TrainConfig apply_variant(TrainConfig cfg, AblationVariant v) {
  cfg.pointwise_conditional = v == AblationVariant::kPointwiseCond || v == AblationVariant::kPointwiseBoth;
  cfg.use_pred_self_diversity = !(v == AblationVariant::kPointwisePred || v == AblationVariant::kPointwiseBoth);
  return cfg;
}

AblationResult run_ablation(const std::vector<ImageSample>& train, const std::vector<ImageSample>& eval,
                            const RunConfig& cfg) {
  AblationResult result;
  for (std::uint64_t seed : cfg.ablate_seeds) {
    for (AblationVariant v : kAblationVariants) {
      TrainConfig tc = apply_variant(cfg.train, v);
      tc.seed = seed;
      const TrainResult trained = coordinate_descent(train, cfg.scene.num_classes, tc);
      const EvalReport report = evaluate_model(trained.pred, eval, cfg.eval, tc.execution);
      result.rows.push_back({v, seed, report.map, report.corloc.mean});
    }
  }
  for (AblationVariant v : kAblationVariants) {
    std::vector<double> maps, corlocs;
    for (const auto& r : result.rows) {
      if (r.variant != v) continue;
      maps.push_back(r.map);
      corlocs.push_back(r.corloc);
    }
    result.summary.push_back({v, maps.size(), mean_of(maps), sd_of(maps), mean_of(corlocs), sd_of(corlocs)});
  }
  const double full = result.summary[0].map_mean;
  if (!(full > result.summary[3].map_mean)) {
    result.violations.push_back("full mAP " + fixed(full, 4) + " not above " + variant_name(AblationVariant::kPointwiseBoth) +
                                " " + fixed(result.summary[3].map_mean, 4));
  }
  for (std::size_t k = 1; k <= 2; ++k) {
    if (!(full >= result.summary[k].map_mean)) {
      result.violations.push_back("full mAP " + fixed(full, 4) + " below " + variant_name(result.summary[k].variant) +
                                  " " + fixed(result.summary[k].map_mean, 4));
    }
  }
  return result;
}

AblationResult cmd_ablate(const fs::path& dataset, const RunConfig& cfg, const fs::path& out) {
  validate(cfg);
  const DatasetPaths paths = resolve_dataset(dataset);
  if (!paths.eval) throw UsageError("--dataset: ablate needs a gen-data directory with eval.jsonl");
  const auto train = load_images(paths.train);
  const auto eval = load_images(*paths.eval);

  Manifest manifest("ablate", out, &cfg);
  manifest.input("train", paths.train);
  manifest.input("eval", *paths.eval);
  const AblationResult result = run_ablation(train, eval, cfg);

  std::string rows = "variant,seed,map,corloc\n";
  for (const auto& r : result.rows) {
    rows += variant_name(r.variant) + "," + std::to_string(r.seed) + "," + fixed(r.map) + "," + fixed(r.corloc) + "\n";
  }
  write_file(out / "ablation.csv", rows);
  std::string summary = "variant,runs,map_mean,map_sd,corloc_mean,corloc_sd\n";
  for (const auto& s : result.summary) {
    summary += variant_name(s.variant) + "," + std::to_string(s.runs) + "," + fixed(s.map_mean) + "," +
               fixed(s.map_sd) + "," + fixed(s.corloc_mean) + "," + fixed(s.corloc_sd) + "\n";
  }
  write_file(out / "ablation_summary.csv", summary);
  manifest.artifact("ablation.csv");
  manifest.artifact("ablation_summary.csv");
  manifest.set("ordering_violations", result.violations);

  if (cfg.run_sweeps) {
    std::string sweeps = "parameter,value,seed,map,corloc\n";
    auto sweep = [&](const std::string& name, const std::vector<double>& values,
                     const std::function<void(TrainConfig&, double)>& set) {
      for (double value : values) {
        for (std::uint64_t seed : cfg.ablate_seeds) {
          TrainConfig tc = cfg.train;
          tc.seed = seed;
          set(tc, value);
          const TrainResult trained = coordinate_descent(train, cfg.scene.num_classes, tc);
          const EvalReport report = evaluate_model(trained.pred, eval, cfg.eval, tc.execution);
          sweeps += name + "," + format_double(value) + "," + std::to_string(seed) + "," + fixed(report.map) + "," +
                    fixed(report.corloc.mean) + "\n";
        }
      }
    };
    sweep("lambda", cfg.lambda_sweep, [](TrainConfig& tc, double v) { tc.lambda = v; });
    sweep("score_threshold", cfg.threshold_sweep, [](TrainConfig& tc, double v) { tc.score_threshold = v; });
    write_file(out / "sweeps.csv", sweeps);
    manifest.artifact("sweeps.csv");
  }
  manifest.write();
  return result;
}

std::vector<CheckResult> cmd_verify(const VerifyOptions& options, const fs::path& out) {
  Manifest manifest("verify", out, nullptr);
  manifest.set("seeds", {{"seed", options.seed}});
  manifest.set("inject_sign_flip", options.flip_gradient_sign);
  const auto results = run_all_checks(options);
  std::ostringstream csv;
  write_check_table(csv, results);
  write_file(out / "checks.csv", csv.str());
  manifest.artifact("checks.csv");
  const bool ok = std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
  manifest.set("status", ok ? "pass" : "fail");
  manifest.write();
  return results;
}

}  // namespace wsod
