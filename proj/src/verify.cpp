#include "wsod/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "wsod/diversity.hpp"
#include "wsod/models.hpp"
#include "wsod/rng.hpp"
#include "wsod/sampler.hpp"

namespace wsod {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

BoxGeometry random_box(std::mt19937_64& rng) {
  return BoxGeometry{uniform(rng, 0.0, 10.0), uniform(rng, 0.0, 10.0), uniform(rng, 1.0, 4.0),
                     uniform(rng, 1.0, 4.0)};
}

ImageAnnotation random_annotation(std::mt19937_64& rng, std::size_t b, std::size_t c) {
  std::vector<int> classes;
  for (std::size_t j = 1; j <= c; ++j) {
    if (uniform01(rng) < 0.5 && classes.size() < b) classes.push_back(static_cast<int>(j));
  }
  return ImageAnnotation::from_classes(c, classes);
}

ScoreMatrix random_scores(std::mt19937_64& rng, std::size_t b, std::size_t c) {
  ScoreMatrix g(b, c + 1);
  for (double& v : g.values) v = uniform(rng, -5.0, 5.0);
  for (double& v : g.offsets) v = uniform(rng, -0.2, 0.2);
  for (auto& a : g.anchors) a = random_box(rng);
  return g;
}

ImageSample random_sample(std::mt19937_64& rng, std::size_t b, std::size_t c, std::size_t d) {
  ImageSample s;
  for (std::size_t i = 0; i < b; ++i) {
    Proposal p;
    p.index = static_cast<int>(i);
    p.geometry = random_box(rng);
    for (std::size_t k = 0; k < d; ++k) p.features.push_back(uniform(rng, -1.0, 1.0));
    s.proposals.push_back(std::move(p));
  }
  s.annotation = random_annotation(rng, b, c);
  return s;
}

void randomize(HeadParams& head, std::mt19937_64& rng, double scale) {
  for (double& v : head.values()) v = uniform(rng, -scale, scale);
}

BoxLabeling random_labeling(std::mt19937_64& rng, const ImageSample& s, std::size_t c) {
  BoxLabeling y;
  for (const auto& p : s.proposals) {
    y.classes.push_back(static_cast<int>(pick(rng, c + 1)));
    BoxGeometry g = p.geometry;
    g.cx += uniform(rng, -0.5, 0.5);
    g.cy += uniform(rng, -0.5, 0.5);
    g.w *= uniform(rng, 0.7, 1.4);
    g.h *= uniform(rng, 0.7, 1.4);
    y.boxes.push_back(g);
  }
  return y;
}

double gradient_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
    scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
  }
  return scale == 0.0 ? diff : diff / scale;
}

template <class F>
std::vector<double> central_differences(HeadParams& head, F&& f) {
  constexpr double h = 1e-6;
  std::vector<double> grad(head.values().size());
  for (std::size_t k = 0; k < grad.size(); ++k) {
    double& v = head.values()[k];
    const double saved = v;
    v = saved + h;
    const double up = f();
    v = saved - h;
    const double down = f();
    v = saved;
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

CheckResult finish(CheckResult r) {
  r.passed = r.passed && r.max_error < r.tolerance;
  return r;
}

}  // namespace

CheckResult check_sampler_exactness(const VerifyOptions& options) {
  auto rng = keyed_stream(StreamTag::kEvalNoise, {options.seed, 1});
  CheckResult r{"sampler_exactness", options.sampler_instances, 0.0, 0.0, true, {}};
  std::size_t mismatches = 0;
  for (std::size_t t = 0; t < options.sampler_instances; ++t) {
    const std::size_t b = 1 + pick(rng, 6);
    const std::size_t c = 1 + pick(rng, 3);
    const ScoreMatrix g = random_scores(rng, b, c);
    const ImageAnnotation a = random_annotation(rng, b, c);
    const BoxLabeling exact = constrained_argmax(g, a);
    const BoxLabeling brute = brute_force_argmax(g, a);
    const double gap = std::abs(joint_score(g, exact, a).value() - joint_score(g, brute, a).value());
    r.max_error = std::max(r.max_error, gap);
    if (!(exact == brute)) ++mismatches;
  }
  r.detail = std::to_string(mismatches) + " labeling mismatches";
  r.passed = mismatches == 0 && r.max_error == 0.0;
  return r;
}

CheckResult check_pred_gradient(const VerifyOptions& options) {
  auto rng = keyed_stream(StreamTag::kEvalNoise, {options.seed, 2});
  CheckResult r{"pred_gradient_fd", options.gradient_instances, 0.0, 1e-4, true, {}};
  for (std::size_t t = 0; t < options.gradient_instances; ++t) {
    const std::size_t b = 1 + pick(rng, 4), c = 1 + pick(rng, 3), d = 1 + pick(rng, 4);
    const std::size_t hidden = pick(rng, 2) == 0 ? 0 : 3;
    const ImageSample s = random_sample(rng, b, c, d);
    PredParams theta{HeadParams(HeadLayout{c + 1, d, hidden})};
    randomize(theta.head, rng, 0.8);
    std::vector<BoxLabeling> samples;
    for (int k = 0; k < 3; ++k) samples.push_back(random_labeling(rng, s, c));
    const DiscConfig cfg{uniform(rng, 0.0, 1.0), LossConfig{uniform(rng, 0.0, 3.0)}};
    const PredObjectiveOptions opt{uniform01(rng) < 0.7};

    auto analytic = pred_objective_grad(theta, s, samples, cfg, opt).gradient.head;
    if (options.flip_gradient_sign) {
      for (double& v : analytic.values()) v = -v;
    }
    const auto numeric = central_differences(theta.head, [&] { return pred_objective(theta, s, samples, cfg, opt); });
    r.max_error = std::max(r.max_error, gradient_error(analytic.values(), numeric));
  }
  return finish(r);
}

CheckResult check_cond_gradient(const VerifyOptions& options) {
  auto rng = keyed_stream(StreamTag::kEvalNoise, {options.seed, 3});
  CheckResult r{"cond_gradient_fd", options.gradient_instances, 0.0, 1e-4, true, {}};
  for (std::size_t t = 0; t < options.gradient_instances; ++t) {
    const std::size_t b = 1 + pick(rng, 4), c = 1 + pick(rng, 3), d = 1 + pick(rng, 4), z = 1 + pick(rng, 3);
    const std::size_t hidden = pick(rng, 2) == 0 ? 0 : 3;
    const NoiseLayout layout = pick(rng, 2) == 0 ? NoiseLayout::kShared : NoiseLayout::kPerProposal;
    const ImageSample s = random_sample(rng, b, c, d);
    CondParams theta{HeadParams(HeadLayout{c + 1, d + z, hidden}), z, layout};
    randomize(theta.head, rng, 0.8);
    NoiseVector noise;
    noise.z.resize(noise_size(theta, b));
    for (double& v : noise.z) v = uniform01(rng);
    const BoxLabeling y = random_labeling(rng, s, c);

    auto analytic = cond_score_grad(theta, s, noise, y).head;
    if (options.flip_gradient_sign) {
      for (double& v : analytic.values()) v = -v;
    }
    const auto numeric = central_differences(theta.head, [&] {
      const ScoreMatrix g = cond_forward(theta, s, noise);
      double total = 0.0;
      for (std::size_t i = 0; i < b; ++i) total += g.at(i, static_cast<std::size_t>(y.classes[i]));
      return total;
    });
    r.max_error = std::max(r.max_error, gradient_error(analytic.values(), numeric));
  }
  return finish(r);
}

CheckResult check_cond_self_diversity(const VerifyOptions& options) {
  auto rng = keyed_stream(StreamTag::kEvalNoise, {options.seed, 4});
  constexpr std::size_t kInstances = 5, kOutcomes = 6, kSamples = 5;
  CheckResult r{"cond_self_diversity_mc", kInstances, 0.0, 1e-2, true, {}};
  for (std::size_t t = 0; t < kInstances; ++t) {
    const std::size_t b = 3, c = 2, d = 3, z = 2;
    ImageSample s = random_sample(rng, b, c, d);
    s.annotation = ImageAnnotation::from_classes(c, std::vector<int>{1 + static_cast<int>(pick(rng, c))});
    CondParams theta{HeadParams(HeadLayout{c + 1, d + z, 0}), z, NoiseLayout::kPerProposal};
    randomize(theta.head, rng, 3.0);
    const DiscConfig cfg{0.5, LossConfig{uniform(rng, 0.0, 3.0)}};
    const auto frames = s.anchors();

    std::vector<BoxLabeling> outcomes;
    for (std::size_t m = 0; m < kOutcomes; ++m) {
      NoiseVector noise;
      noise.z.resize(noise_size(theta, b));
      for (double& v : noise.z) v = uniform01(rng);
      outcomes.push_back(constrained_argmax(cond_forward(theta, s, noise), s.annotation));
    }
    double expected = 0.0;
    for (const auto& a : outcomes) {
      for (const auto& o : outcomes) expected += delta_total(a, o, cfg.loss, frames);
    }
    expected /= static_cast<double>(kOutcomes * kOutcomes);

    double mean = 0.0;
    std::vector<BoxLabeling> draw(kSamples);
    for (std::size_t n = 0; n < options.cond_cond_draws; ++n) {
      for (auto& y : draw) y = outcomes[pick(rng, kOutcomes)];
      mean += div_cond_cond(draw, cfg, frames);
    }
    mean /= static_cast<double>(options.cond_cond_draws);
    r.max_error = std::max(r.max_error, std::abs(mean - expected));
  }
  return finish(r);
}

CheckResult check_pred_self_diversity(const VerifyOptions& options) {
  auto rng = keyed_stream(StreamTag::kEvalNoise, {options.seed, 5});
  constexpr std::size_t kInstances = 5;
  CheckResult r{"pred_self_diversity_mc", kInstances, 0.0, 3.0, true, {}};
  for (std::size_t t = 0; t < kInstances; ++t) {
    const std::size_t b = 3, c = 2;
    ClassDistribution p(b, c + 1);
    for (std::size_t i = 0; i < b; ++i) {
      double z = 0.0;
      for (std::size_t k = 0; k <= c; ++k) z += p.at(i, k) = std::exp(uniform(rng, -2.0, 2.0));
      for (std::size_t k = 0; k <= c; ++k) p.at(i, k) /= z;
    }
    for (double& v : p.offsets) v = uniform(rng, -0.3, 0.3);
    for (auto& a : p.anchors) a = random_box(rng);
    const DiscConfig cfg{0.5, LossConfig{uniform(rng, 0.0, 3.0)}};
    const double closed = div_pred_pred(p, cfg);

    auto draw_class = [&](std::size_t i) {
      double u = uniform01(rng);
      for (std::size_t k = 0; k < c; ++k) {
        if ((u -= p.prob(i, k)) < 0.0) return k;
      }
      return c;
    };
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t n = 0; n < options.pred_pred_draws; ++n) {
      double v = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t a = draw_class(i), o = draw_class(i);
        v += delta_box({static_cast<int>(a), p.decoded_box(i, a)}, {static_cast<int>(o), p.decoded_box(i, o)},
                       cfg.loss, p.anchors[i]);
      }
      v /= static_cast<double>(b);
      sum += v;
      sum_sq += v * v;
    }
    const double n = static_cast<double>(options.pred_pred_draws);
    const double mean = sum / n;
    const double se = std::sqrt(std::max(0.0, sum_sq / n - mean * mean) / (n - 1.0));
    r.max_error = std::max(r.max_error, se > 0.0 ? std::abs(mean - closed) / se : std::abs(mean - closed));
  }
  return finish(r);
}

double brute_force_average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruthRef>& gts,
                                     double iou_threshold) {
  // rank by selection: highest score, then lowest image id, then lowest local index
  std::vector<Detection> ranked;
  std::vector<char> taken(dets.size(), 0);
  for (std::size_t r = 0; r < dets.size(); ++r) {
    std::size_t best = dets.size();
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (taken[d]) continue;
      if (best == dets.size()) {
        best = d;
        continue;
      }
      const Detection& a = dets[d];
      const Detection& b = dets[best];
      if (a.score > b.score || (a.score == b.score && (a.image_id < b.image_id ||
                                                       (a.image_id == b.image_id && a.local_index < b.local_index)))) {
        best = d;
      }
    }
    taken[best] = 1;
    ranked.push_back(dets[best]);
  }

  auto true_positives = [&](std::size_t prefix) {
    std::vector<char> used(gts.size(), 0);
    std::size_t tp = 0;
    for (std::size_t d = 0; d < prefix; ++d) {
      std::size_t best = gts.size();
      double best_iou = -1.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || gts[g].image_id != ranked[d].image_id) continue;
        const double o = iou(ranked[d].geometry, gts[g].geometry);
        if (o >= iou_threshold && o > best_iou) {
          best = g;
          best_iou = o;
        }
      }
      if (best != gts.size()) {
        used[best] = 1;
        ++tp;
      }
    }
    return tp;
  };

  const std::size_t n = ranked.size();
  std::vector<std::size_t> tp(n + 1, 0);
  for (std::size_t r = 1; r <= n; ++r) tp[r] = true_positives(r);
  double ap = 0.0;
  for (std::size_t r = 1; r <= n; ++r) {
    if (tp[r] == tp[r - 1]) continue;
    double best = 0.0;
    for (std::size_t s = r; s <= n; ++s) {
      best = std::max(best, static_cast<double>(tp[s]) / static_cast<double>(s));
    }
    ap += best / static_cast<double>(gts.size());
  }
  return ap;
}

CheckResult check_average_precision(const VerifyOptions& options) {
  auto rng = keyed_stream(StreamTag::kEvalNoise, {options.seed, 6});
  CheckResult r{"average_precision_oracle", options.ap_instances, 0.0, 0.0, true, {}};
  auto grid_box = [&] {
    const double x = static_cast<double>(pick(rng, 5)), y = static_cast<double>(pick(rng, 5));
    return BoxGeometry::from_corners(x, y, x + 1.0 + static_cast<double>(pick(rng, 3)),
                                     y + 1.0 + static_cast<double>(pick(rng, 3)));
  };
  for (std::size_t t = 0; t < options.ap_instances; ++t) {
    const int images = 1 + static_cast<int>(pick(rng, 3));
    std::vector<GroundTruthRef> gts;
    const std::size_t ngt = 1 + pick(rng, 4);
    for (std::size_t g = 0; g < ngt; ++g) gts.push_back({static_cast<int>(pick(rng, images)), grid_box()});
    std::vector<Detection> dets;
    const std::size_t ndet = pick(rng, 11);
    std::vector<int> next_local(images, 0);
    for (std::size_t d = 0; d < ndet; ++d) {
      Detection det;
      det.image_id = static_cast<int>(pick(rng, images));
      det.geometry = pick(rng, 2) == 0 ? gts[pick(rng, ngt)].geometry : grid_box();
      det.score = 0.1 * static_cast<double>(1 + pick(rng, 5));
      det.local_index = next_local[det.image_id]++;
      dets.push_back(det);
    }
    std::shuffle(dets.begin(), dets.end(), rng);
    const double got = average_precision(dets, gts).value();
    const double want = brute_force_average_precision(dets, gts);
    r.max_error = std::max(r.max_error, std::abs(got - want));
  }
  r.passed = r.max_error == 0.0;
  return r;
}

CheckResult check_ap_hand_example() {
  const BoxGeometry a = BoxGeometry::from_corners(0, 0, 2, 2);
  const BoxGeometry b = BoxGeometry::from_corners(10, 10, 12, 12);
  const BoxGeometry miss = BoxGeometry::from_corners(20, 20, 22, 22);
  const std::vector<GroundTruthRef> gts{{0, a}, {0, b}};
  const std::vector<Detection> dets{{0, 1, a, 0.9, 0}, {0, 1, miss, 0.8, 1}, {0, 1, b, 0.7, 2}};
  CheckResult r{"ap_hand_example", 1, 0.0, 1e-12, true, {}};
  r.max_error = std::abs(average_precision(dets, gts).value() - 5.0 / 6.0);
  return finish(r);
}

std::vector<CheckResult> run_all_checks(const VerifyOptions& options) {
  return {check_sampler_exactness(options),   check_pred_gradient(options),
          check_cond_gradient(options),       check_cond_self_diversity(options),
          check_pred_self_diversity(options), check_average_precision(options),
          check_ap_hand_example()};
}

void write_check_table(std::ostream& out, const std::vector<CheckResult>& results) {
  out << "check,instances,max_error,tolerance,status\n";
  for (const auto& r : results) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e,%.3e", r.max_error, r.tolerance);
    out << r.name << ',' << r.instances << ',' << buf << ',' << (r.passed ? "pass" : "FAIL") << '\n';
  }
}

}  // namespace wsod
