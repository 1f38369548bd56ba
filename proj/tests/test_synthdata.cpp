#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "wsod/synthdata.hpp"

using namespace wsod;
namespace fs = std::filesystem;

namespace {

/// Overlap computed from corners, independent of the evaluation module.
double corner_iou(const BoxGeometry& a, const BoxGeometry& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

}  // namespace

TEST_CASE("generation is deterministic and consistent") {
  const SceneConfig cfg;
  const auto a = generate_dataset(cfg, 50);
  CHECK(a == generate_dataset(cfg, 50));
  CHECK(a == generate_dataset_serial(cfg, 50));
  SceneConfig other = cfg;
  other.seed = 1;
  CHECK_FALSE(a == generate_dataset(other, 50));
  for (std::size_t n = 0; n < a.size(); ++n) {
    CHECK(a[n].id == static_cast<int>(n));
    CHECK(a[n].num_proposals() == cfg.num_proposals);
    CHECK(a[n].feature_dim() == cfg.feature_dim);
    CHECK_NOTHROW(validate(a[n], cfg.num_classes));
    const std::size_t objects = a[n].ground_truth->size();
    CHECK(objects >= cfg.min_objects);
    CHECK(objects <= cfg.max_objects);
    for (const auto& p : a[n].proposals) {
      CHECK(p.geometry.cx == snap_coordinate(p.geometry.cx));
      CHECK(p.geometry.w == snap_coordinate(p.geometry.w));
    }
  }
}

TEST_CASE("un-jittered copies cover every object exactly") {
  SceneConfig cfg;
  cfg.jitter = 0.0;
  cfg.feature_noise = 0.0;
  for (const auto& img : generate_dataset(cfg, 100)) {
    for (const auto& g : *img.ground_truth) {
      double best = 0.0;
      for (const auto& p : img.proposals) best = std::max(best, corner_iou(p.geometry, g.geometry));
      CHECK(best == 1.0);
    }
  }
}

TEST_CASE("proposal recall at IoU 0.5") {
  std::size_t objects = 0, found = 0;
  for (const auto& img : generate_dataset(SceneConfig{}, 1000)) {
    for (const auto& g : *img.ground_truth) {
      ++objects;
      for (const auto& p : img.proposals) {
        if (corner_iou(p.geometry, g.geometry) >= 0.5) {
          ++found;
          break;
        }
      }
    }
  }
  const double recall = static_cast<double>(found) / static_cast<double>(objects);
  CAPTURE(recall);
  CHECK(recall >= 0.95);
}

TEST_CASE("features are linearly separable by true box class") {
  const SceneConfig cfg;
  const auto data = generate_dataset(cfg, 1000);
  const std::size_t d = cfg.feature_dim, k = cfg.num_classes + 1;
  struct Row {
    std::vector<double> x;
    int y;
  };
  std::vector<Row> train, test;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto truth = proposal_truth(data[n]);
    for (std::size_t i = 0; i < data[n].num_proposals(); ++i) {
      (n < 800 ? train : test).push_back({data[n].proposals[i].features, truth[i]});
    }
  }
  // multinomial logistic regression by SGD
  std::vector<double> w(k * (d + 1), 0.0);
  std::mt19937_64 rng(5);
  auto logits = [&](const std::vector<double>& x) {
    std::vector<double> z(k);
    for (std::size_t c = 0; c < k; ++c) {
      z[c] = w[c * (d + 1) + d];
      for (std::size_t j = 0; j < d; ++j) z[c] += w[c * (d + 1) + j] * x[j];
    }
    return z;
  };
  for (int epoch = 0; epoch < 5; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (const auto& r : train) {
      auto z = logits(r.x);
      const double m = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double& v : z) s += (v = std::exp(v - m));
      for (std::size_t c = 0; c < k; ++c) {
        const double g = z[c] / s - (static_cast<int>(c) == r.y ? 1.0 : 0.0);
        for (std::size_t j = 0; j < d; ++j) w[c * (d + 1) + j] -= 0.05 * g * r.x[j];
        w[c * (d + 1) + d] -= 0.05 * g;
      }
    }
  }
  std::size_t correct = 0;
  for (const auto& r : test) {
    const auto z = logits(r.x);
    correct += static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin()) == r.y;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  CAPTURE(accuracy);
  CHECK(accuracy >= 0.90);
}

TEST_CASE("weak copies drop only the ground truth") {
  const auto data = generate_dataset(SceneConfig{}, 10);
  const auto weak = to_weak(data);
  REQUIRE(weak.size() == data.size());
  for (std::size_t n = 0; n < data.size(); ++n) {
    CHECK_FALSE(weak[n].ground_truth.has_value());
    CHECK(weak[n].annotation == data[n].annotation);
    CHECK(weak[n].proposals == data[n].proposals);
    CHECK(weak[n].id == data[n].id);
  }
}

TEST_CASE("dataset files") {
  const fs::path dir = fs::temp_directory_path() / "wsod_test_synthdata";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto data = generate_dataset(SceneConfig{}, 10);
  SUBCASE("round trip") {
    save_dataset(data, dir / "d.jsonl");
    CHECK(load_dataset(dir / "d.jsonl") == data);
    CHECK(dataset_from_jsonl(dataset_to_jsonl(to_weak(data))) == to_weak(data));
  }
  SUBCASE("truncated line") {
    std::string text = dataset_to_jsonl(data);
    std::size_t third = 0;
    for (int n = 0; n < 2; ++n) third = text.find('\n', third) + 1;
    text = text.substr(0, third + 40);
    std::ofstream(dir / "bad.jsonl") << text;
    try {
      load_dataset(dir / "bad.jsonl");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("empty file") {
    std::ofstream(dir / "empty.jsonl").close();
    CHECK(load_dataset(dir / "empty.jsonl").empty());
  }
  SUBCASE("missing file") {
    CHECK_THROWS(load_dataset(dir / "none.jsonl"));
  }
  fs::remove_all(dir);
}

TEST_CASE("scene config validation") {
  SceneConfig cfg;
  cfg.min_objects = 4;
  CHECK_THROWS_AS(validate(cfg), ContractViolation);
  cfg = SceneConfig{};
  cfg.max_objects = 11;  // 11 objects x 2 copies > 20 proposals
  CHECK_THROWS_AS(validate(cfg), ContractViolation);
}

TEST_CASE("committed fixtures match the generator") {
  SceneConfig cfg;
  cfg.feature_dim = 4;
  cfg.num_proposals = 8;
  const auto all = generate_dataset(cfg, 12);
  const fs::path dir = fs::path(WSOD_SOURCE_DIR) / "data" / "fixtures";
  const auto train = load_dataset(dir / "tiny_train.jsonl");
  const auto eval = load_dataset(dir / "tiny_eval.jsonl");
  CHECK(train == to_weak(std::vector<ImageSample>(all.begin(), all.begin() + 8)));
  CHECK(eval == std::vector<ImageSample>(all.begin() + 8, all.end()));
}
