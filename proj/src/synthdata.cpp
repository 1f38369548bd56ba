#include "wsod/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "wsod/evalmetrics.hpp"
#include "wsod/rng.hpp"

namespace wsod {

using nlohmann::json;

void validate(const SceneConfig& cfg) {
  require(cfg.num_classes >= 1, "scene.num_classes must be >= 1");
  require(cfg.feature_dim >= 1, "scene.feature_dim must be >= 1");
  require(cfg.min_objects >= 1, "scene.min_objects must be >= 1");
  require(cfg.max_objects >= cfg.min_objects, "scene.max_objects must be >= scene.min_objects");
  require(cfg.copies_per_object >= 1, "scene.copies_per_object must be >= 1");
  require(cfg.num_proposals >= cfg.max_objects * cfg.copies_per_object,
          "scene.num_proposals must cover max_objects * copies_per_object");
  require(cfg.extent > 0.0 && cfg.extent < 1000.0, "scene.extent must lie in (0, 1000)");
  require(cfg.min_object_size > 0.0 && cfg.max_object_size >= cfg.min_object_size &&
              cfg.max_object_size <= cfg.extent,
          "scene object size range is degenerate");
  require(cfg.jitter >= 0.0 && cfg.jitter < 1.0, "scene.jitter must lie in [0, 1)");
  require(cfg.feature_noise >= 0.0, "scene.feature_noise must be >= 0");
}

double snap_coordinate(double v) { return std::ldexp(std::round(std::ldexp(v, 10)), -10); }

namespace {

BoxGeometry snapped(double cx, double cy, double w, double h) {
  constexpr double kMinSide = 1.0;
  return {snap_coordinate(cx), snap_coordinate(cy), snap_coordinate(std::max(w, kMinSide)),
          snap_coordinate(std::max(h, kMinSide))};
}

BoxGeometry random_box(const SceneConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> size(cfg.min_object_size, cfg.max_object_size);
  const double w = size(rng);
  const double h = size(rng);
  std::uniform_real_distribution<double> px(0.5 * w, cfg.extent - 0.5 * w);
  std::uniform_real_distribution<double> py(0.5 * h, cfg.extent - 0.5 * h);
  const double cx = px(rng);
  const double cy = py(rng);
  return snapped(cx, cy, w, h);
}

BoxGeometry jittered(const BoxGeometry& gt, double jitter, std::mt19937_64& rng) {
  if (jitter == 0.0) return gt;
  std::normal_distribution<double> n(0.0, jitter);
  const double dx = n(rng);
  const double dy = n(rng);
  const double dw = n(rng);
  const double dh = n(rng);
  return snapped(gt.cx + dx * gt.w, gt.cy + dy * gt.h, gt.w * std::exp(dw), gt.h * std::exp(dh));
}

}  // namespace

std::vector<std::vector<double>> class_prototypes(const SceneConfig& cfg) {
  auto rng = keyed_stream(StreamTag::kPrototypes, {cfg.prototype_seed, cfg.num_classes, cfg.feature_dim});
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> protos(cfg.num_classes, std::vector<double>(cfg.feature_dim));
  for (auto& p : protos) {
    double norm = 0.0;
    for (double& v : p) {
      v = n(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : p) v /= norm;
  }
  return protos;
}

ImageSample generate_image(const SceneConfig& cfg, std::size_t image_index,
                           const std::vector<std::vector<double>>& prototypes) {
  auto layout = keyed_stream(StreamTag::kSceneLayout, {cfg.seed, image_index});
  auto noise = keyed_stream(StreamTag::kSceneFeatures, {cfg.seed, image_index});

  std::uniform_int_distribution<std::size_t> count(cfg.min_objects, cfg.max_objects);
  std::uniform_int_distribution<int> cls(1, static_cast<int>(cfg.num_classes));
  const std::size_t objects = count(layout);

  ImageSample img;
  img.id = static_cast<int>(image_index);
  std::vector<GroundTruthBox> gts;
  for (std::size_t o = 0; o < objects; ++o) gts.push_back({cls(layout), random_box(cfg, layout)});

  std::vector<BoxGeometry> boxes;
  for (const auto& gt : gts) {
    for (std::size_t k = 0; k < cfg.copies_per_object; ++k) boxes.push_back(jittered(gt.geometry, cfg.jitter, layout));
  }
  while (boxes.size() < cfg.num_proposals) boxes.push_back(random_box(cfg, layout));
  std::shuffle(boxes.begin(), boxes.end(), layout);

  std::normal_distribution<double> feature_noise(0.0, 1.0);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    Proposal p;
    p.index = static_cast<int>(i);
    p.geometry = boxes[i];
    p.features.assign(cfg.feature_dim, 0.0);
    for (std::size_t j = 1; j <= cfg.num_classes; ++j) {
      double overlap = 0.0;
      for (const auto& gt : gts) {
        if (static_cast<std::size_t>(gt.cls) == j) overlap = std::max(overlap, iou(boxes[i], gt.geometry));
      }
      if (overlap == 0.0) continue;
      for (std::size_t d = 0; d < cfg.feature_dim; ++d) p.features[d] += overlap * prototypes[j - 1][d];
    }
    for (double& v : p.features) v += cfg.feature_noise * feature_noise(noise);
    img.proposals.push_back(std::move(p));
  }

  std::vector<int> present;
  for (const auto& gt : gts) present.push_back(gt.cls);
  img.annotation = ImageAnnotation::from_classes(cfg.num_classes, present);
  img.ground_truth = std::move(gts);
  return img;
}

std::vector<ImageSample> generate_dataset(const SceneConfig& cfg, std::size_t n) {
  validate(cfg);
  require(n >= 1, "dataset size must be >= 1");
  const auto protos = class_prototypes(cfg);
  std::vector<ImageSample> out(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    out[static_cast<std::size_t>(i)] = generate_image(cfg, static_cast<std::size_t>(i), protos);
  }
  return out;
}

std::vector<ImageSample> generate_dataset_serial(const SceneConfig& cfg, std::size_t n) {
  validate(cfg);
  require(n >= 1, "dataset size must be >= 1");
  const auto protos = class_prototypes(cfg);
  std::vector<ImageSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_image(cfg, i, protos));
  return out;
}

std::vector<ImageSample> to_weak(const std::vector<ImageSample>& dataset) {
  std::vector<ImageSample> out = dataset;
  for (auto& img : out) img.ground_truth.reset();
  return out;
}

namespace {

json corners(const BoxGeometry& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

BoxGeometry parse_corners(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::invalid_argument("box must be [x1, y1, x2, y2]");
  const auto box = BoxGeometry::from_corners(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                                             j[3].get<double>());
  validate(box);
  return box;
}

json image_to_json(const ImageSample& img) {
  json j;
  j["id"] = img.id;
  json bits = json::array();
  for (auto b : img.annotation.present) bits.push_back(static_cast<int>(b));
  j["annotation"] = bits;
  json props = json::array();
  for (const auto& p : img.proposals) {
    props.push_back({{"index", p.index}, {"box", corners(p.geometry)}, {"features", p.features}});
  }
  j["proposals"] = props;
  if (img.ground_truth) {
    json gts = json::array();
    for (const auto& gt : *img.ground_truth) gts.push_back({{"class", gt.cls}, {"box", corners(gt.geometry)}});
    j["ground_truth"] = gts;
  }
  return j;
}

ImageSample image_from_json(const json& j) {
  ImageSample img;
  img.id = j.at("id").get<int>();
  for (const auto& b : j.at("annotation")) {
    const int bit = b.get<int>();
    if (bit != 0 && bit != 1) throw std::invalid_argument("annotation bits must be 0 or 1");
    img.annotation.present.push_back(static_cast<std::uint8_t>(bit));
  }
  for (const auto& p : j.at("proposals")) {
    Proposal prop;
    prop.index = p.at("index").get<int>();
    prop.geometry = parse_corners(p.at("box"));
    prop.features = p.at("features").get<std::vector<double>>();
    img.proposals.push_back(std::move(prop));
  }
  if (j.contains("ground_truth")) {
    std::vector<GroundTruthBox> gts;
    for (const auto& g : j.at("ground_truth")) gts.push_back({g.at("class").get<int>(), parse_corners(g.at("box"))});
    img.ground_truth = std::move(gts);
  }
  validate(img, img.annotation.num_classes());
  return img;
}

}  // namespace

std::string dataset_to_jsonl(const std::vector<ImageSample>& dataset) {
  std::string out;
  for (const auto& img : dataset) {
    out += image_to_json(img).dump();
    out += '\n';
  }
  return out;
}

std::vector<ImageSample> dataset_from_jsonl(const std::string& text) {
  std::vector<ImageSample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(image_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void save_dataset(const std::vector<ImageSample>& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << dataset_to_jsonl(dataset);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<ImageSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return dataset_from_jsonl(buf.str());
}

std::vector<int> proposal_truth(const ImageSample& sample, double iou_threshold) {
  require(sample.ground_truth.has_value(), "proposal_truth needs ground truth");
  std::vector<int> out;
  for (const auto& p : sample.proposals) {
    int best_cls = kBackground;
    double best = iou_threshold;
    for (const auto& gt : *sample.ground_truth) {
      const double o = iou(p.geometry, gt.geometry);
      if (o >= best) {
        best = o;
        best_cls = gt.cls;
      }
    }
    out.push_back(best_cls);
  }
  return out;
}

}  // namespace wsod
