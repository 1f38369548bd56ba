#include <doctest.h>

#include <cmath>

#include "wsod/core.hpp"
#include "wsod/loss.hpp"

using namespace wsod;

namespace {

BoxLabeling labeling(std::vector<int> classes) {
  BoxLabeling y;
  y.classes = std::move(classes);
  y.boxes.assign(y.classes.size(), BoxGeometry{5, 5, 10, 10});
  return y;
}

}  // namespace

TEST_CASE("smooth L1 values") {
  CHECK(smooth_l1(BoxDelta{0, 0, 0, 0}) == 0.0);
  CHECK(smooth_l1(BoxDelta{1, 0, 0, 0}) == 0.5);
  CHECK(smooth_l1(BoxDelta{2, -2, 0, 0}) == 3.0);
  CHECK(smooth_l1(BoxDelta{0.5, 0, 0, 0}) == 0.125);
  CHECK_THROWS_AS(smooth_l1(BoxDelta{NAN, 0, 0, 0}), ContractViolation);
}

TEST_CASE("smooth L1 derivative is continuous at the kink") {
  for (double x : {1.0 - 1e-6, 1.0 + 1e-6, -1.0 - 1e-6, -1.0 + 1e-6}) {
    const double h = 1e-7;
    const double fd = (smooth_l1(BoxDelta{x + h, 0, 0, 0}) - smooth_l1(BoxDelta{x - h, 0, 0, 0})) / (2 * h);
    CHECK(std::abs(fd - smooth_l1_derivative(x)) < 1e-5);
  }
}

TEST_CASE("box encoding") {
  const BoxGeometry p{5, 5, 10, 10};
  const BoxDelta same = box_encode(p, p);
  for (double v : same) CHECK(v == 0.0);
  const BoxDelta dx = box_encode(p, BoxGeometry{6, 5, 10, 10});
  CHECK(dx[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(dx[1] == 0.0);
  const BoxDelta dw = box_encode(p, BoxGeometry{5, 5, 20, 10});
  CHECK(dw[2] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(dw[3] == 0.0);
  CHECK_THROWS_AS(box_encode(p, BoxGeometry{5, 5, 0, 10}), ContractViolation);
}

TEST_CASE("box decoding inverts encoding") {
  const BoxGeometry p{3, -2, 7, 4.5};
  const BoxGeometry t{5.5, 1, 2, 9};
  const BoxGeometry back = box_decode(p, box_encode(p, t));
  CHECK(std::abs(back.cx - t.cx) < 1e-9);
  CHECK(std::abs(back.cy - t.cy) < 1e-9);
  CHECK(std::abs(back.w - t.w) < 1e-9);
  CHECK(std::abs(back.h - t.h) < 1e-9);
}

TEST_CASE("per-box loss") {
  const LossConfig cfg{3.0};
  const BoxGeometry g{0, 0, 1, 1};
  CHECK(delta_box({1, g}, {1, g}, cfg) == 0.0);
  CHECK(delta_box({1, g}, {2, BoxGeometry{4, 4, 2, 2}}, cfg) == 1.0);
  // offset (1, 0, 0, 0) in the unit frame
  CHECK(delta_box({1, g}, {1, BoxGeometry{1, 0, 1, 1}}, cfg) == doctest::Approx(1.5));
  // background pairs carry no geometry term
  CHECK(delta_box({0, g}, {0, BoxGeometry{1, 0, 1, 1}}, cfg) == 0.0);
}

TEST_CASE("per-box loss in a proposal frame") {
  const LossConfig cfg{2.0};
  const BoxGeometry frame{0, 0, 10, 10};
  // 1 unit shift in a width-10 frame is an offset of 0.1
  CHECK(delta_box({1, {0, 0, 10, 10}}, {1, {1, 0, 10, 10}}, cfg, frame) == doctest::Approx(2.0 * 0.5 * 0.01));
}

TEST_CASE("labeling loss averages over boxes") {
  const LossConfig zero{0.0};
  CHECK(delta_total(labeling({1, 1}), labeling({1, 1}), zero) == 0.0);
  CHECK(delta_total(labeling({1, 1}), labeling({1, 2}), zero) == 0.5);
  CHECK(delta_total(labeling({1, 2, 0, 3}), labeling({0, 1, 2, 1}), zero) == 1.0);
  CHECK_THROWS_AS(delta_total(labeling({1}), labeling({1, 1}), zero), ContractViolation);
}

TEST_CASE("labeling loss is a Hamming distance when lambda is zero") {
  const LossConfig zero{0.0};
  for (int a = 0; a < 27; ++a) {
    for (int b = 0; b < 27; ++b) {
      std::vector<int> ya, yb;
      int hamming = 0;
      for (int i = 0, x = a, y = b; i < 3; ++i, x /= 3, y /= 3) {
        ya.push_back(x % 3);
        yb.push_back(y % 3);
        hamming += (x % 3) != (y % 3);
      }
      CHECK(delta_total(labeling(ya), labeling(yb), zero) == doctest::Approx(hamming / 3.0));
    }
  }
}

TEST_CASE("labeling loss is symmetric") {
  BoxLabeling a = labeling({1, 2, 1});
  BoxLabeling b = labeling({1, 1, 1});
  a.boxes[0] = {5.5, 4, 12, 9};
  b.boxes[2] = {4, 6, 8, 11};
  const LossConfig cfg{3.0};
  CHECK(delta_total(a, b, cfg) == delta_total(b, a, cfg));
  CHECK(delta_total(a, a, cfg) == 0.0);
}

TEST_CASE("loss config rejects negative lambda") {
  CHECK_THROWS_AS(validate(LossConfig{-1.0}), ContractViolation);
  CHECK_THROWS_AS(validate(LossConfig{NAN}), ContractViolation);
}
