// Times the serial reference against the OpenMP version of each batch kernel
// and checks that both produce identical results.
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "wsod/detector.hpp"
#include "wsod/kernels.hpp"
#include "wsod/synthdata.hpp"

using namespace wsod;

namespace {

template <typename F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

bool same(const std::vector<Detection>& a, const std::vector<Detection>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].image_id != b[i].image_id || a[i].cls != b[i].cls || !(a[i].geometry == b[i].geometry) ||
        a[i].score != b[i].score) {
      return false;
    }
  }
  return true;
}

int mismatches = 0;

void row(const char* name, double serial, double parallel, bool equal) {
  std::printf("%-22s %10.4f %10.4f %8.2fx  %s\n", name, serial, parallel, serial / parallel,
              equal ? "identical" : "MISMATCH");
  if (!equal) ++mismatches;
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 400;
  const int reps = 3;
  SceneConfig scene;
  const auto data = generate_dataset(scene, n);
  const auto weak = to_weak(data);
  TrainConfig cfg;
  const PredParams pred = initial_pred_params(cfg, scene.num_classes, scene.feature_dim);
  const CondParams cond = initial_cond_params(cfg, scene.num_classes, scene.feature_dim);
  const NoiseKey key{0, 1, 0};

  std::printf("images %zu, threads %d\n", n, omp_get_max_threads());
  std::printf("%-22s %10s %10s %9s\n", "kernel", "serial s", "openmp s", "speedup");

  {
    std::vector<ImageSample> s, p;
    const double ts = best_of(reps, [&] { s = generate_dataset_serial(scene, n); });
    const double tp = best_of(reps, [&] { p = generate_dataset(scene, n); });
    row("generate_dataset", ts, tp, s == p);
  }

  const auto dists = pred_distributions(pred, weak, Execution::kSerial);
  {
    std::vector<ClassDistribution> s, p;
    const double ts = best_of(reps, [&] { s = pred_distributions(pred, weak, Execution::kSerial); });
    const double tp = best_of(reps, [&] { p = pred_distributions(pred, weak, Execution::kParallel); });
    bool eq = s.size() == p.size();
    for (std::size_t i = 0; eq && i < s.size(); ++i) eq = s[i].values == p[i].values && s[i].offsets == p[i].offsets;
    row("pred_distributions", ts, tp, eq);
  }

  std::vector<const ImageSample*> batch;
  std::vector<const ClassDistribution*> targets;
  for (std::size_t i = 0; i < n; ++i) {
    batch.push_back(&weak[i]);
    targets.push_back(&dists[i]);
  }
  {
    CondBatchGradient s, p;
    const double ts = best_of(reps, [&] { s = cond_batch_gradient(cond, batch, targets, cfg, key, Execution::kSerial); });
    const double tp =
        best_of(reps, [&] { p = cond_batch_gradient(cond, batch, targets, cfg, key, Execution::kParallel); });
    row("cond_batch_gradient", ts, tp, s.gradient == p.gradient && s.cross == p.cross);
  }

  std::vector<std::vector<BoxLabeling>> pseudo;
  {
    std::vector<std::vector<BoxLabeling>> s, p;
    const NoiseKey pk{0, 1, kPseudoLabelPass};
    const double ts = best_of(reps, [&] { s = pseudo_ground_truth(cond, weak, cfg, pk, Execution::kSerial); });
    const double tp = best_of(reps, [&] { p = pseudo_ground_truth(cond, weak, cfg, pk, Execution::kParallel); });
    row("pseudo_ground_truth", ts, tp, s == p);
    pseudo = s;
  }

  std::vector<const std::vector<BoxLabeling>*> gts;
  for (const auto& g : pseudo) gts.push_back(&g);
  {
    PredBatchGradient s, p;
    const double ts = best_of(reps, [&] { s = pred_batch_gradient(pred, batch, gts, cfg, Execution::kSerial); });
    const double tp = best_of(reps, [&] { p = pred_batch_gradient(pred, batch, gts, cfg, Execution::kParallel); });
    row("pred_batch_gradient", ts, tp, s.gradient == p.gradient && s.objective == p.objective);
  }

  {
    std::vector<Detection> s, p;
    const DetectorOptions opt;
    const double ts = best_of(reps, [&] { s = detect_all(pred, data, opt, Execution::kSerial); });
    const double tp = best_of(reps, [&] { p = detect_all(pred, data, opt, Execution::kParallel); });
    row("detect_all", ts, tp, same(s, p));
  }

  return mismatches == 0 ? 0 : 1;
}
