#include "wsod/evalmetrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace wsod {

double iou(const BoxGeometry& a, const BoxGeometry& b) {
  const double ix = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double iy = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  return a.local_index < b.local_index;
}

}  // namespace

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), ranks_before);
  std::vector<Detection> kept;
  std::vector<char> removed(dets.size(), 0);
  for (std::size_t a = 0; a < dets.size(); ++a) {
    if (removed[a]) continue;
    kept.push_back(dets[a]);
    for (std::size_t b = a + 1; b < dets.size(); ++b) {
      if (!removed[b] && iou(dets[a].geometry, dets[b].geometry) > iou_threshold) removed[b] = 1;
    }
  }
  return kept;
}

std::optional<double> average_precision(std::vector<Detection> dets, const std::vector<GroundTruthRef>& gts,
                                        double iou_threshold) {
  if (gts.empty()) return std::nullopt;
  std::sort(dets.begin(), dets.end(), ranks_before);

  std::map<int, std::vector<std::size_t>> gts_by_image;
  for (std::size_t g = 0; g < gts.size(); ++g) gts_by_image[gts[g].image_id].push_back(g);
  std::vector<char> matched(gts.size(), 0);

  std::vector<double> precision(dets.size());
  std::vector<char> hit(dets.size(), 0);
  std::size_t tp = 0;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    const auto it = gts_by_image.find(dets[d].image_id);
    std::size_t best = gts.size();
    double best_iou = iou_threshold;
    if (it != gts_by_image.end()) {
      for (std::size_t g : it->second) {
        if (matched[g]) continue;
        const double o = iou(dets[d].geometry, gts[g].geometry);
        if (o >= best_iou && (best == gts.size() || o > best_iou)) {
          best = g;
          best_iou = o;
        }
      }
    }
    if (best != gts.size()) {
      matched[best] = 1;
      hit[d] = 1;
      ++tp;
    }
    precision[d] = static_cast<double>(tp) / static_cast<double>(d + 1);
  }

  // precision envelope, then one recall step of 1/npos per true positive
  for (std::size_t d = dets.size(); d-- > 1;) precision[d - 1] = std::max(precision[d - 1], precision[d]);
  const double npos = static_cast<double>(gts.size());
  double ap = 0.0;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (hit[d]) ap += precision[d] / npos;
  }
  return ap;
}

CorLocResult corloc(const std::vector<Detection>& dets, const std::vector<ImageSample>& images,
                    std::size_t num_classes, double iou_threshold) {
  // best detection per (image, class)
  std::map<std::pair<int, int>, const Detection*> top;
  for (const auto& d : dets) {
    auto& slot = top[{d.image_id, d.cls}];
    if (slot == nullptr || ranks_before(d, *slot)) slot = &d;
  }
  std::vector<std::size_t> positives(num_classes, 0);
  std::vector<std::size_t> hits(num_classes, 0);
  for (const auto& img : images) {
    require(img.ground_truth.has_value(), "corloc needs ground truth");
    for (int j : img.annotation.required_classes()) {
      ++positives[j - 1];
      const auto it = top.find({img.id, j});
      if (it == top.end()) continue;
      for (const auto& gt : *img.ground_truth) {
        if (gt.cls == j && iou(it->second->geometry, gt.geometry) >= iou_threshold) {
          ++hits[j - 1];
          break;
        }
      }
    }
  }
  CorLocResult out;
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t j = 0; j < num_classes; ++j) {
    if (positives[j] == 0) {
      out.per_class.push_back(std::nullopt);
      continue;
    }
    const double v = static_cast<double>(hits[j]) / static_cast<double>(positives[j]);
    out.per_class.push_back(v);
    sum += v;
    ++counted;
  }
  out.mean = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
  return out;
}

EvalReport evaluate_detections(const std::vector<Detection>& dets, const std::vector<ImageSample>& images,
                               std::size_t num_classes) {
  EvalReport report;
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t j = 1; j <= num_classes; ++j) {
    std::vector<Detection> class_dets;
    for (const auto& d : dets) {
      if (static_cast<std::size_t>(d.cls) == j) class_dets.push_back(d);
    }
    std::vector<GroundTruthRef> gts;
    for (const auto& img : images) {
      require(img.ground_truth.has_value(), "evaluation needs ground truth");
      for (const auto& gt : *img.ground_truth) {
        if (static_cast<std::size_t>(gt.cls) == j) gts.push_back({img.id, gt.geometry});
      }
    }
    const auto ap = average_precision(std::move(class_dets), gts);
    report.ap.push_back(ap);
    if (ap) {
      sum += *ap;
      ++counted;
    }
  }
  report.map = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
  report.corloc = corloc(dets, images, num_classes);
  return report;
}

namespace {

std::string fmt(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

void write_report_csv(std::ostream& out, const EvalReport& report) {
  const std::size_t c = report.ap.size();
  for (std::size_t j = 1; j <= c; ++j) out << "ap_" << j << ',';
  out << "map,";
  for (std::size_t j = 1; j <= c; ++j) out << "corloc_" << j << ',';
  out << "corloc_mean\n";
  for (const auto& v : report.ap) out << fmt(v) << ',';
  out << fmt(report.map) << ',';
  for (const auto& v : report.corloc.per_class) out << fmt(v) << ',';
  out << fmt(report.corloc.mean) << '\n';
}

}  // namespace wsod
