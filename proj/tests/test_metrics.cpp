#include <set>
#include <vector>

#include "doctest.h"
#include "sctseg/metrics.hpp"

using namespace sctseg;

namespace {

// direct per-class IoU from first principles, used as the oracle
double oracle_miou(const std::vector<uint8_t>& gt, const std::vector<uint8_t>& pred,
                   int num_classes, const std::set<int>& ignore) {
  double total = 0.0;
  int evaluated = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (ignore.count(c)) continue;
    bool present = false;
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
      if (ignore.count(gt[i])) continue;  // ignored GT pixels vanish entirely
      const bool g = gt[i] == c, p = pred[i] == c;
      present |= g;
      if (g && p) ++inter;
      if (g || p) ++uni;
    }
    if (!present) continue;
    total += static_cast<double>(inter) / static_cast<double>(uni);
    ++evaluated;
  }
  return total / evaluated;
}

}  // namespace

TEST_CASE("four pixel example: miou is exactly one half") {
  const std::vector<uint8_t> gt = {0, 1, 2, 2};
  const std::vector<uint8_t> pred = {0, 1, 1, 2};
  MiouResult res = mean_iou(gt, pred, 3, {0});
  // class 1: intersection 1, union 2; class 2: intersection 1, union 2
  CHECK(res.miou == 0.5);
  CHECK(res.per_class_iou[1] == 0.5);
  CHECK(res.per_class_iou[2] == 0.5);
  CHECK_FALSE(res.evaluated[0]);
  CHECK(res.evaluated[1]);
  CHECK(res.evaluated[2]);
  CHECK(res.skipped_absent == 0);
}

TEST_CASE("four pixel example: accuracy ignores class-0 ground truth") {
  const std::vector<uint8_t> gt = {0, 1, 2, 2};
  const std::vector<uint8_t> pred = {0, 1, 1, 2};
  CHECK(pixel_accuracy(gt, pred, 3, {0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(pixel_accuracy(gt, pred, 3) == doctest::Approx(3.0 / 4.0).epsilon(1e-12));
}

TEST_CASE("absent classes are skipped and counted") {
  const std::vector<uint8_t> gt = {1, 1, 2, 2};
  const std::vector<uint8_t> pred = {1, 3, 2, 3};  // class 3 predicted, never in GT
  MiouResult res = mean_iou(gt, pred, 4, {0});
  CHECK(res.skipped_absent >= 1);           // class 3 absent from GT
  CHECK_FALSE(res.evaluated[3]);
  CHECK(res.per_class_iou[1] == doctest::Approx(0.5));  // inter 1, union 2
  CHECK(res.per_class_iou[2] == doctest::Approx(0.5));
  CHECK(res.miou == doctest::Approx(0.5));
}

TEST_CASE("ignored GT pixels leave the union as well") {
  // pred hits class 1 on an ignored pixel: must not pollute class 1's union
  const std::vector<uint8_t> gt = {0, 1};
  const std::vector<uint8_t> pred = {1, 1};
  MiouResult res = mean_iou(gt, pred, 2, {0});
  CHECK(res.miou == 1.0);
}

TEST_CASE("evaluating nothing is an error") {
  const std::vector<uint8_t> gt = {0, 0};
  const std::vector<uint8_t> pred = {0, 1};
  CHECK_THROWS_AS(mean_iou(gt, pred, 2, {0}), Error);
  CHECK_THROWS_AS(pixel_accuracy(gt, pred, 2, {0}), Error);
  CHECK_THROWS_AS(mean_iou(gt, pred, 2, {0, 1, 5}), Error);  // out-of-range ignore
  const std::vector<uint8_t> longer = {0, 1, 1};
  CHECK_THROWS_AS(mean_iou(gt, longer, 2), Error);  // length mismatch
}

TEST_CASE("random labelings match the from-scratch oracle") {
  Rng rng(123);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_index(4));
    std::vector<uint8_t> gt(500), pred(500);
    for (auto& v : gt) v = static_cast<uint8_t>(rng.uniform_index(k));
    for (auto& v : pred) v = static_cast<uint8_t>(rng.uniform_index(k));
    MiouResult res = mean_iou(gt, pred, k, {0});
    CHECK(res.miou == doctest::Approx(oracle_miou(gt, pred, k, {0})).epsilon(1e-12));
    MiouResult noig = mean_iou(gt, pred, k);
    CHECK(noig.miou == doctest::Approx(oracle_miou(gt, pred, k, {})).epsilon(1e-12));
  }
}

TEST_CASE("confusion matrix counts pairs, including empty columns") {
  const std::vector<uint8_t> gt = {0, 0, 1, 1};
  const std::vector<uint8_t> pred = {0, 0, 0, 0};
  auto cm = confusion_matrix(gt, pred, 2, 2);
  REQUIRE(cm.size() == 2);
  REQUIRE(cm[0].size() == 2);
  CHECK(cm[0][0] == 2);
  CHECK(cm[0][1] == 0);
  CHECK(cm[1][0] == 2);
  CHECK(cm[1][1] == 0);

  const std::vector<uint8_t> a = {0, 1, 2, 2, 1};
  const std::vector<uint8_t> b = {1, 1, 0, 2, 2};
  auto cm2 = confusion_matrix(a, b, 3, 3);
  CHECK(cm2[0][1] == 1);
  CHECK(cm2[1][1] == 1);
  CHECK(cm2[1][2] == 1);
  CHECK(cm2[2][0] == 1);
  CHECK(cm2[2][2] == 1);
  int64_t sum = 0;
  for (const auto& row : cm2)
    for (int64_t v : row) sum += v;
  CHECK(sum == 5);

  CHECK_THROWS_AS(confusion_matrix(a, b, 2, 3), Error);  // label 2 out of range
}

TEST_CASE("class_counts tallies every label") {
  const std::vector<uint8_t> labels = {0, 2, 2, 1, 2};
  CHECK(class_counts(labels, 4) == std::vector<int64_t>{1, 1, 3, 0});
  CHECK_THROWS_AS(class_counts(labels, 2), Error);
}

TEST_CASE("majority mapping folds clusters into their dominant class") {
  // confusion[gt][pred]: pred 0 -> gt 0, pred 1 -> gt 2, pred 2 tie -> gt 0
  std::vector<std::vector<int64_t>> cm = {
      {5, 0, 3},
      {1, 2, 0},
      {0, 7, 3},
  };
  // column 2: gt0 = 3, gt1 = 0, gt2 = 3: tie resolves to the lowest gt class
  CHECK(majority_mapping(cm) == std::vector<int>{0, 2, 0});

  // a never-predicted column maps to class 0
  std::vector<std::vector<int64_t>> cm2 = {
      {4, 0},
      {0, 0},
  };
  CHECK(majority_mapping(cm2) == std::vector<int>{0, 0});
}

TEST_CASE("relabel applies a mapping and checks bounds") {
  const std::vector<uint8_t> labels = {0, 1, 2, 1};
  CHECK(relabel(labels, {2, 0, 1}) == std::vector<uint8_t>{2, 0, 1, 0});
  CHECK_THROWS_AS(relabel(labels, {0, 1}), Error);  // label 2 has no mapping
}

TEST_CASE("volume overloads enforce matching shapes") {
  LabelVolume a;
  a.depth = 1;
  a.height = 2;
  a.width = 2;
  a.num_classes = 2;
  a.labels = {0, 1, 1, 0};
  LabelVolume b = a;
  CHECK(pixel_accuracy(a, b) == 1.0);
  CHECK(mean_iou(a, b).miou == 1.0);
  b.width = 4;
  b.labels = {0, 1, 1, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(pixel_accuracy(a, b), Error);
}
