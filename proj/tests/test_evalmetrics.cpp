#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "wsod/evalmetrics.hpp"

using namespace wsod;

namespace {

Detection det(int image, int cls, BoxGeometry g, double score, int local = 0) { return {image, cls, g, score, local}; }

ImageSample image_with(int id, std::vector<GroundTruthBox> gts, std::size_t num_classes) {
  ImageSample s;
  s.id = id;
  s.annotation.present.assign(num_classes, 0);
  for (const auto& g : gts) s.annotation.present[g.cls - 1] = 1;
  s.ground_truth = std::move(gts);
  return s;
}

const BoxGeometry kA = BoxGeometry::from_corners(0, 0, 10, 10);

}  // namespace

TEST_CASE("iou") {
  CHECK(iou(kA, kA) == 1.0);
  CHECK(iou(kA, BoxGeometry::from_corners(20, 20, 30, 30)) == 0.0);
  CHECK(iou(BoxGeometry::from_corners(0, 0, 2, 2), BoxGeometry::from_corners(1, 0, 3, 2)) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(kA, BoxGeometry::from_corners(10, 0, 20, 10)) == 0.0);
  const BoxGeometry b = BoxGeometry::from_corners(3, 1, 12, 7);
  CHECK(iou(kA, b) == iou(b, kA));
}

TEST_CASE("nms") {
  SUBCASE("disjoint boxes survive") {
    const std::vector<Detection> in{det(0, 1, kA, 0.5, 0), det(0, 1, BoxGeometry::from_corners(20, 0, 30, 10), 0.7, 1)};
    const auto out = nms(in, 0.5);
    REQUIRE(out.size() == 2);
    CHECK(out[0].score == 0.7);
  }
  SUBCASE("identical boxes keep the best") {
    const auto out = nms({det(0, 1, kA, 0.8, 0), det(0, 1, kA, 0.9, 1)}, 0.5);
    REQUIRE(out.size() == 1);
    CHECK(out[0].score == 0.9);
  }
  SUBCASE("chain keeps both ends") {
    // A-B and B-C overlap 0.6, A-C overlap 0.1
    const BoxGeometry a = BoxGeometry::from_corners(0, 0, 10, 10);
    const BoxGeometry b = BoxGeometry::from_corners(2.5, 0, 12.5, 10);
    const BoxGeometry c = BoxGeometry::from_corners(5.0, 0, 15.0, 10);
    REQUIRE(iou(a, b) == doctest::Approx(0.6));
    REQUIRE(iou(b, c) == doctest::Approx(0.6));
    REQUIRE(iou(a, c) == doctest::Approx(1.0 / 3.0));
    const auto out = nms({det(0, 1, b, 0.8, 1), det(0, 1, a, 0.9, 0), det(0, 1, c, 0.7, 2)}, 0.5);
    REQUIRE(out.size() == 2);
    CHECK(out[0].geometry == a);
    CHECK(out[1].geometry == c);
  }
  SUBCASE("equal scores prefer the lower index") {
    const auto out = nms({det(0, 1, kA, 0.5, 3), det(0, 1, kA, 0.5, 1)}, 0.5);
    REQUIRE(out.size() == 1);
    CHECK(out[0].local_index == 1);
  }
}

TEST_CASE("average precision") {
  const std::vector<GroundTruthRef> one{{0, kA}};
  CHECK(*average_precision({det(0, 1, BoxGeometry::from_corners(0, 0, 10, 8), 0.9)}, one) == doctest::Approx(1.0));
  CHECK(*average_precision({det(0, 1, BoxGeometry::from_corners(0, 0, 10, 4), 0.9)}, one) == 0.0);
  CHECK_FALSE(average_precision({det(0, 1, kA, 0.9)}, {}).has_value());

  const BoxGeometry b = BoxGeometry::from_corners(50, 50, 60, 60);
  const std::vector<GroundTruthRef> two{{0, kA}, {1, b}};
  const std::vector<Detection> ranked{det(0, 1, kA, 0.9), det(0, 1, BoxGeometry::from_corners(30, 30, 40, 40), 0.8, 1),
                                      det(1, 1, b, 0.7)};
  CHECK(*average_precision(ranked, two) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));

  std::vector<Detection> scaled = ranked;
  for (auto& d : scaled) d.score *= 0.01;
  CHECK(*average_precision(scaled, two) == *average_precision(ranked, two));

  SUBCASE("duplicates of a matched box are false positives") {
    const std::vector<Detection> dup{det(0, 1, kA, 0.9, 0), det(0, 1, kA, 0.8, 1)};
    CHECK(*average_precision(dup, one) == doctest::Approx(1.0));
    const std::vector<Detection> dup_first{det(0, 1, kA, 0.9, 0), det(0, 1, kA, 0.95, 1),
                                           det(5, 1, kA, 0.99, 0)};
    CHECK(*average_precision(dup_first, one) == doctest::Approx(0.5));
  }
}

TEST_CASE("corloc") {
  std::vector<ImageSample> images;
  std::vector<Detection> dets;
  for (int n = 0; n < 4; ++n) {
    images.push_back(image_with(n, {GroundTruthBox{1, kA}}, 2));
    const BoxGeometry top = n < 3 ? kA : BoxGeometry::from_corners(40, 40, 50, 50);
    dets.push_back(det(n, 1, top, 0.9, 0));
    dets.push_back(det(n, 1, n < 3 ? BoxGeometry::from_corners(40, 40, 50, 50) : kA, 0.2, 1));
  }
  const CorLocResult r = corloc(dets, images, 2);
  CHECK(*r.per_class[0] == doctest::Approx(0.75));
  CHECK_FALSE(r.per_class[1].has_value());
  CHECK(r.mean == doctest::Approx(0.75));

  std::vector<Detection> perfect;
  for (int n = 0; n < 4; ++n) perfect.push_back(det(n, 1, kA, 0.5));
  CHECK(corloc(perfect, images, 2).mean == 1.0);
  std::vector<Detection> none;
  for (int n = 0; n < 4; ++n) none.push_back(det(n, 1, BoxGeometry::from_corners(40, 40, 50, 50), 0.5));
  CHECK(corloc(none, images, 2).mean == 0.0);
  CHECK(corloc({}, images, 2).mean == 0.0);
}

TEST_CASE("evaluation report") {
  std::vector<ImageSample> images{image_with(0, {GroundTruthBox{1, kA}, GroundTruthBox{3, kA}}, 3),
                                  image_with(1, {GroundTruthBox{3, BoxGeometry::from_corners(20, 20, 40, 40)}}, 3)};
  std::vector<Detection> perfect;
  for (const auto& img : images) {
    int local = 0;
    for (const auto& g : *img.ground_truth) perfect.push_back(det(img.id, g.cls, g.geometry, 1.0, local++));
  }
  const EvalReport r = evaluate_detections(perfect, images, 3);
  CHECK(*r.ap[0] == 1.0);
  CHECK_FALSE(r.ap[1].has_value());
  CHECK(*r.ap[2] == 1.0);
  CHECK(r.map == 1.0);
  CHECK(r.corloc.mean == 1.0);

  std::ostringstream csv;
  write_report_csv(csv, r);
  std::istringstream lines(csv.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == "ap_1,ap_2,ap_3,map,corloc_1,corloc_2,corloc_3,corloc_mean");
  CHECK(row.find("NA") != std::string::npos);
  CHECK(std::count(row.begin(), row.end(), ',') == 7);
}
