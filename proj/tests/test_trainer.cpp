#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "wsod/detector.hpp"
#include "wsod/kernels.hpp"
#include "wsod/synthdata.hpp"
#include "wsod/trainer.hpp"

using namespace wsod;

namespace {

const std::vector<ImageSample>& small_dataset() {
  static const std::vector<ImageSample> data = to_weak(generate_dataset(SceneConfig{}, 30));
  return data;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.outer_rounds = 2;
  cfg.inner_epochs = 2;
  return cfg;
}

ImageSample two_box_image() {
  ImageSample s;
  s.id = 4;
  s.proposals = {Proposal{0, BoxGeometry{10, 10, 8, 8}, {0.7, -1.2}}, Proposal{1, BoxGeometry{30, 12, 6, 9}, {-0.4, 0.9}}};
  s.annotation.present = {1};
  return s;
}

/// Score and class of each labeling in {0,1}^2 compatible with class 1 being
/// present, in lexicographic order.
const std::vector<std::vector<int>> kTwoBoxLabelings{{0, 1}, {1, 0}, {1, 1}};

std::vector<int> enumerate_best(const ScoreMatrix& g, const std::vector<int>* ref, double eps) {
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& y : kTwoBoxLabelings) {
    double s = g.at(0, static_cast<std::size_t>(y[0])) + g.at(1, static_cast<std::size_t>(y[1]));
    if (ref != nullptr) s += eps * (((*ref)[0] != y[0]) + ((*ref)[1] != y[1])) / 2.0;
    if (s > best_score) {
      best = y;
      best_score = s;
    }
  }
  return best;
}

ConditionalSamples hand_samples(const std::vector<std::vector<double>>& rows, std::vector<BoxGeometry> anchors,
                                const ImageAnnotation& a) {
  ScoreMatrix g = ScoreMatrix::from_rows(rows);
  g.anchors = std::move(anchors);
  ConditionalSamples cs;
  cs.labelings.push_back(constrained_argmax(g, a));
  cs.scores.push_back(g);
  cs.noises.push_back(NoiseVector{});
  return cs;
}

}  // namespace

TEST_CASE("config validation names the field") {
  TrainConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.batch_size = 0;
  CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("batch_size"), ContractViolation);
  cfg = TrainConfig{};
  cfg.gamma = 2;
  CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains("gamma"), ContractViolation);
  cfg = TrainConfig{};
  cfg.k = 1;
  CHECK_THROWS_AS(validate(cfg), ContractViolation);
}

TEST_CASE("learning rate halves every round") {
  TrainConfig cfg;
  cfg.eta = 8;
  CHECK(round_learning_rate(cfg, 1) == 8);
  CHECK(round_learning_rate(cfg, 2) == 4);
  CHECK(round_learning_rate(cfg, 4) == 1);
}

TEST_CASE("conditional sampling") {
  const TrainConfig cfg;
  const auto& data = small_dataset();
  SUBCASE("samples are compatible and reproducible") {
    const CondParams theta = initial_cond_params(cfg, 3, data.front().feature_dim());
    for (std::size_t n = 0; n < 10; ++n) {
      const auto a = sample_conditional(theta, data[n], 5, NoiseKey{1, 2, 3});
      const auto b = sample_conditional(theta, data[n], 5, NoiseKey{1, 2, 3});
      CHECK(a.labelings == b.labelings);
      CHECK(a.noises == b.noises);
      for (const auto& y : a.labelings) CHECK(is_compatible(y, data[n].annotation));
    }
  }
  SUBCASE("severed noise gives identical samples") {
    TrainConfig wide = cfg;
    wide.init_scale = 1.0;
    CondParams theta = initial_cond_params(wide, 3, data.front().feature_dim());
    const std::size_t in = theta.head.layout().input_dim;
    auto w = theta.head.class_weights();
    auto ow = theta.head.offset_weights();
    for (std::size_t r = 0; r < theta.head.layout().classes; ++r) {
      for (std::size_t z = theta.feature_dim(); z < in; ++z) w[r * in + z] = 0.0;
    }
    for (std::size_t r = 0; r < theta.head.layout().classes * 4; ++r) {
      for (std::size_t z = theta.feature_dim(); z < in; ++z) ow[r * in + z] = 0.0;
    }
    for (std::size_t n = 0; n < 10; ++n) {
      const auto cs = sample_conditional(theta, data[n], 5, NoiseKey{0, 1, 0});
      for (const auto& y : cs.labelings) CHECK(y == cs.labelings.front());
    }
  }
  SUBCASE("zero noise draws the zero vector") {
    const CondParams theta = initial_cond_params(cfg, 3, data.front().feature_dim());
    const auto cs = sample_conditional(theta, data[0], 1, NoiseKey{}, true);
    REQUIRE(cs.noises.size() == 1);
    for (double v : cs.noises[0].z) CHECK(v == 0.0);
  }
  SUBCASE("noise is uniform on the unit interval") {
    const NoiseVector z = draw_noise(4000, NoiseKey{3, 1, 0}, 7, 2);
    double mean = 0.0;
    for (double v : z.z) {
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
      mean += v / 4000.0;
    }
    CHECK(std::abs(mean - 0.5) < 0.03);
    CHECK_FALSE(z == draw_noise(4000, NoiseKey{3, 1, 0}, 7, 3));
  }
}

TEST_CASE("pseudo-label post-processing") {
  const ImageAnnotation a = ImageAnnotation::from_classes(2, std::vector<int>{1, 2});
  SUBCASE("no-op settings keep distinct boxes") {
    const auto cs = hand_samples({{0, 3, 0}, {0, 0, 3}, {2, 0, 0}},
                                 {BoxGeometry{10, 10, 8, 8}, BoxGeometry{40, 10, 8, 8}, BoxGeometry{70, 10, 8, 8}}, a);
    const auto out = postprocess_samples(cs, a, 0.0, 1.0);
    CHECK(out.front() == cs.labelings.front());
  }
  SUBCASE("overlapping boxes of one class are suppressed") {
    // corner boxes [0,10]x[0,10] and [0,9]x[0,10]: IoU 0.9
    const auto cs = hand_samples({{0, 3, 0}, {0, 2, 0}, {0, 0, 3}},
                                 {BoxGeometry{5, 5, 10, 10}, BoxGeometry{4.5, 5, 9, 10}, BoxGeometry{70, 10, 8, 8}}, a);
    REQUIRE(cs.labelings.front().classes == std::vector<int>{1, 1, 2});
    const auto out = postprocess_samples(cs, a, 0.0, 0.3);
    CHECK(out.front().classes == std::vector<int>{1, 0, 2});
  }
  SUBCASE("every box below threshold keeps the best one per required class") {
    const ImageAnnotation one = ImageAnnotation::from_classes(2, std::vector<int>{1});
    const auto cs = hand_samples({{1.0, 1.2, 1.0}, {1.0, 1.5, 1.0}, {1.0, 1.1, 1.0}},
                                 {BoxGeometry{10, 10, 8, 8}, BoxGeometry{40, 10, 8, 8}, BoxGeometry{70, 10, 8, 8}}, one);
    REQUIRE(cs.labelings.front().classes == std::vector<int>{1, 1, 1});
    const auto out = postprocess_samples(cs, one, 0.9, 0.3);
    CHECK(out.front().classes == std::vector<int>{0, 1, 0});
  }
}

TEST_CASE("prediction step") {
  const TrainConfig cfg;
  const auto& data = small_dataset();
  const PredParams theta = initial_pred_params(cfg, 3, data.front().feature_dim());
  const CondParams cond = initial_cond_params(cfg, 3, data.front().feature_dim());
  const auto pseudo = pseudo_ground_truth(cond, data, cfg, NoiseKey{0, 1, kPseudoLabelPass}, Execution::kSerial);
  std::vector<const ImageSample*> batch;
  std::vector<const std::vector<BoxLabeling>*> targets;
  for (std::size_t n = 0; n < 10; ++n) {
    batch.push_back(&data[n]);
    targets.push_back(&pseudo[n]);
  }
  CHECK(pred_step(theta, batch, targets, cfg, 0.0).params == theta);
  const PredStepResult step = pred_step(theta, batch, targets, cfg, 0.05);
  const PredStepResult after = pred_step(step.params, batch, targets, cfg, 0.0);
  CHECK(after.objective < step.objective);
}

TEST_CASE("conditional step by hand") {
  // B = 2, C = 1, K = 2, lambda 0: every argmax is found by listing the three
  // compatible labelings, and the linear head's score gradient is the input.
  const ImageSample img = two_box_image();
  TrainConfig cfg;
  cfg.k = 2;
  cfg.lambda = 0.0;
  cfg.epsilon = -1.5;
  cfg.noise_dim = 1;
  cfg.init_scale = 1.0;
  cfg.background_bias = 0.0;
  cfg.execution = Execution::kSerial;
  CondParams theta = initial_cond_params(cfg, 1, 2);
  // strong noise weights so that draws disagree
  theta.head.class_weights()[2] = -4.0;
  theta.head.class_weights()[5] = 4.0;
  const std::vector<int> yp{1, 0};
  BoxLabeling target_y{yp, img.anchors()};
  const ClassDistribution target = point_mass(target_y, img.anchors(), 2);

  NoiseKey key{0, 1, 0};
  std::vector<NoiseVector> z(2);
  std::vector<ScoreMatrix> g(2);
  std::vector<std::vector<int>> yc(2);
  for (; key.pass < 200; ++key.pass) {
    for (std::size_t s = 0; s < 2; ++s) {
      z[s] = draw_noise(2, key, img.id, s);
      g[s] = cond_forward(theta, img, z[s]);
      yc[s] = enumerate_best(g[s], nullptr, 0.0);
    }
    const bool cross_active = enumerate_best(g[0], &yp, cfg.epsilon) != yc[0] ||
                              enumerate_best(g[1], &yp, cfg.epsilon) != yc[1];
    if (yc[0] != yc[1] && cross_active) break;
  }
  REQUIRE(yc[0] != yc[1]);

  for (double gamma : {0.0, 0.5}) {
    CAPTURE(gamma);
    cfg.gamma = gamma;
    const double eta = 0.7;
    const double cross_w = (1.0 / cfg.epsilon) / (2.0 * 2.0);
    const double self_w = gamma * (1.0 / cfg.epsilon) * 2.0 / (2.0 * 1.0 * 2.0);
    // d_score[s][i][c]
    double d[2][2][2] = {};
    for (std::size_t s = 0; s < 2; ++s) {
      const auto ya = enumerate_best(g[s], &yp, cfg.epsilon);
      const auto yb = enumerate_best(g[s], &yc[1 - s], cfg.epsilon);
      for (std::size_t i = 0; i < 2; ++i) {
        d[s][i][ya[i]] += cross_w;
        d[s][i][yc[s][i]] -= cross_w;
        d[s][i][yb[i]] -= self_w;
        d[s][i][yc[s][i]] += self_w;
      }
    }
    CondParams expected = theta;
    auto w = expected.head.class_weights();
    auto bias = expected.head.class_bias();
    for (std::size_t s = 0; s < 2; ++s) {
      for (std::size_t i = 0; i < 2; ++i) {
        const double input[3] = {img.proposals[i].features[0], img.proposals[i].features[1], z[s].z[i]};
        for (std::size_t c = 0; c < 2; ++c) {
          for (std::size_t j = 0; j < 3; ++j) w[c * 3 + j] -= eta * d[s][i][c] * input[j];
          bias[c] -= eta * d[s][i][c];
        }
      }
    }

    const std::vector<const ImageSample*> batch{&img};
    const std::vector<const ClassDistribution*> targets{&target};
    const CondStepResult step = cond_step(theta, batch, targets, cfg, eta, key);
    CHECK_FALSE(step.params == theta);
    for (std::size_t n = 0; n < theta.head.values().size(); ++n) {
      CHECK(step.params.head.values()[n] == doctest::Approx(expected.head.values()[n]).epsilon(1e-12));
    }
    CHECK(step.self_cond == doctest::Approx(((yc[0][0] != yc[1][0]) + (yc[0][1] != yc[1][1])) / 2.0));
  }
}

TEST_CASE("batch gradients do not depend on batch order or execution") {
  const TrainConfig cfg;
  const auto& data = small_dataset();
  const PredParams pred = initial_pred_params(cfg, 3, data.front().feature_dim());
  const CondParams cond = initial_cond_params(cfg, 3, data.front().feature_dim());
  const auto dists = pred_distributions(pred, data, Execution::kSerial);
  std::vector<const ImageSample*> batch;
  std::vector<const ClassDistribution*> targets;
  for (std::size_t n = 0; n < 8; ++n) {
    batch.push_back(&data[n]);
    targets.push_back(&dists[n]);
  }
  const NoiseKey key{0, 1, 0};
  const auto a = cond_batch_gradient(cond, batch, targets, cfg, key, Execution::kSerial);
  std::reverse(batch.begin(), batch.end());
  std::reverse(targets.begin(), targets.end());
  const auto b = cond_batch_gradient(cond, batch, targets, cfg, key, Execution::kParallel);
  CHECK(a.gradient == b.gradient);
  CHECK(a.cross == b.cross);
}

TEST_CASE("coordinate descent") {
  const auto& data = small_dataset();
  SUBCASE("zero rounds return the initial parameters") {
    TrainConfig cfg = small_config();
    cfg.outer_rounds = 0;
    const TrainResult r = coordinate_descent(data, 3, cfg);
    CHECK(r.rounds.empty());
    CHECK(r.pred == initial_pred_params(cfg, 3, data.front().feature_dim()));
    CHECK(r.cond == initial_cond_params(cfg, 3, data.front().feature_dim()));
  }
  SUBCASE("equal seeds give equal trajectories, serial or parallel") {
    TrainConfig cfg = small_config();
    const TrainResult a = coordinate_descent(data, 3, cfg);
    cfg.execution = Execution::kSerial;
    const TrainResult b = coordinate_descent(data, 3, cfg);
    CHECK(a.pred == b.pred);
    CHECK(a.cond == b.cond);
    REQUIRE(a.rounds.size() == 2);
    for (std::size_t r = 0; r < 2; ++r) {
      CHECK(a.rounds[r].cond_cross == b.rounds[r].cond_cross);
      CHECK(a.rounds[r].pred_objective == b.rounds[r].pred_objective);
      CHECK(a.rounds[r].disc.disc == b.rounds[r].disc.disc);
    }
    cfg.seed = 1;
    CHECK_FALSE(coordinate_descent(data, 3, cfg).pred == a.pred);
  }
  SUBCASE("resuming continues the same trajectory") {
    TrainConfig cfg = small_config();
    cfg.outer_rounds = 3;
    const TrainResult full = coordinate_descent(data, 3, cfg);
    TrainConfig first = cfg;
    first.outer_rounds = 1;
    const TrainResult part = coordinate_descent(data, 3, first);
    TrainOptions opt;
    opt.initial_pred = part.pred;
    opt.initial_cond = part.cond;
    opt.completed_rounds = 1;
    const TrainResult rest = coordinate_descent(data, 3, cfg, opt);
    CHECK(rest.rounds.size() == 2);
    CHECK(rest.pred == full.pred);
    CHECK(rest.cond == full.cond);
  }
  SUBCASE("ground truth is never needed") {
    auto with_gt = generate_dataset(SceneConfig{}, 30);
    const TrainConfig cfg = small_config();
    CHECK(coordinate_descent(with_gt, 3, cfg).pred == coordinate_descent(data, 3, cfg).pred);
  }
  SUBCASE("mismatched class count is rejected") {
    CHECK_THROWS_AS(coordinate_descent(data, 4, small_config()), ContractViolation);
  }
}

TEST_CASE("training improves localization over the rounds") {
  SceneConfig scene;
  const auto all = generate_dataset(scene, 160);
  const std::vector<ImageSample> train = to_weak({all.begin(), all.begin() + 120});
  const std::vector<ImageSample> monitor(all.begin() + 120, all.end());
  TrainConfig cfg;
  TrainOptions opt;
  opt.monitor = &monitor;
  const TrainResult r = coordinate_descent(train, 3, cfg, opt);
  REQUIRE(r.rounds.size() == cfg.outer_rounds);
  CHECK(*r.rounds.back().corloc > *r.rounds.front().corloc);
  const double untrained =
      evaluate_model(initial_pred_params(cfg, 3, scene.feature_dim), monitor, DetectorOptions{}).corloc.mean;
  CHECK(*r.rounds.back().corloc > untrained);
}
