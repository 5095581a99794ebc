#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "sctseg/augment.hpp"

using namespace sctseg;

namespace {

SliceStack random_stack(int channels, int rows, int cols, uint64_t seed) {
  SliceStack s;
  s.channels = channels;
  s.rows = rows;
  s.cols = cols;
  s.data.resize(static_cast<size_t>(channels) * rows * cols);
  Rng rng(seed);
  for (float& v : s.data) v = static_cast<float>(rng.uniform());
  return s;
}

LabelMap random_labels(int rows, int cols, int num_classes, uint64_t seed) {
  LabelMap m;
  m.rows = rows;
  m.cols = cols;
  m.labels.resize(static_cast<size_t>(rows) * cols);
  Rng rng(seed);
  for (uint8_t& v : m.labels) v = static_cast<uint8_t>(rng.uniform_index(num_classes));
  return m;
}

std::vector<float> apply(WeakOp op, const std::vector<float>& in, int rows, int cols) {
  std::vector<float> out(in.size());
  apply_weak_op(op, in.data(), out.data(), rows, cols);
  return out;
}

}  // namespace

TEST_CASE("hand-checked 2x2 geometric ops") {
  const std::vector<float> in = {0, 1, 2, 3};  // [[0,1],[2,3]]
  CHECK(apply(WeakOp::identity, in, 2, 2) == std::vector<float>{0, 1, 2, 3});
  CHECK(apply(WeakOp::flip_horizontal, in, 2, 2) == std::vector<float>{1, 0, 3, 2});
  CHECK(apply(WeakOp::flip_vertical, in, 2, 2) == std::vector<float>{2, 3, 0, 1});
  CHECK(apply(WeakOp::rot180, in, 2, 2) == std::vector<float>{3, 2, 1, 0});
  CHECK(apply(WeakOp::flip_main_diag, in, 2, 2) == std::vector<float>{0, 2, 1, 3});
  // rot90 counter-clockwise: out(r,c) = in(c, cols-1-r)
  CHECK(apply(WeakOp::rot90, in, 2, 2) == std::vector<float>{1, 3, 0, 2});
  CHECK(apply(WeakOp::rot270, in, 2, 2) == std::vector<float>{2, 0, 3, 1});
  CHECK(apply(WeakOp::flip_anti_diag, in, 2, 2) == std::vector<float>{3, 1, 2, 0});
}

TEST_CASE("group relations: involutions and rotation order") {
  const int n = 6;
  std::vector<float> in(n * n);
  Rng rng(44);
  for (float& v : in) v = static_cast<float>(rng.uniform());

  for (WeakOp op : {WeakOp::flip_horizontal, WeakOp::flip_vertical, WeakOp::rot180,
                    WeakOp::flip_main_diag, WeakOp::flip_anti_diag}) {
    CHECK(apply(op, apply(op, in, n, n), n, n) == in);  // involution
  }
  std::vector<float> r = in;
  for (int i = 0; i < 4; ++i) r = apply(WeakOp::rot90, r, n, n);
  CHECK(r == in);  // rot90^4 = id
  CHECK(apply(WeakOp::rot90, apply(WeakOp::rot90, in, n, n), n, n) ==
        apply(WeakOp::rot180, in, n, n));
  CHECK(apply(WeakOp::rot90, apply(WeakOp::rot180, in, n, n), n, n) ==
        apply(WeakOp::rot270, in, n, n));
}

TEST_CASE("non-square planes reject shape-changing ops") {
  std::vector<float> in(2 * 3, 0.0f), out(2 * 3);
  CHECK_THROWS_AS(apply_weak_op(WeakOp::rot90, in.data(), out.data(), 2, 3), Error);
  CHECK_THROWS_AS(apply_weak_op(WeakOp::flip_main_diag, in.data(), out.data(), 2, 3), Error);
  CHECK_NOTHROW(apply_weak_op(WeakOp::flip_horizontal, in.data(), out.data(), 2, 3));
  CHECK_NOTHROW(apply_weak_op(WeakOp::rot180, in.data(), out.data(), 2, 3));
}

TEST_CASE("weak_augment applies one op to all channels and the labels") {
  SliceStack s = random_stack(3, 8, 8, 9);
  LabelMap labels = random_labels(8, 8, 4, 10);
  WeakResult res = weak_augment(s, labels, 123);
  REQUIRE(res.labels.has_value());

  for (int c = 0; c < s.channels; ++c) {
    std::vector<float> expect(64);
    apply_weak_op(res.op, s.channel(c), expect.data(), 8, 8);
    for (int i = 0; i < 64; ++i) REQUIRE(res.stack.channel(c)[i] == expect[i]);
  }
  std::vector<uint8_t> expect_labels(64);
  apply_weak_op(res.op, labels.labels.data(), expect_labels.data(), 8, 8);
  CHECK(res.labels->labels == expect_labels);

  WeakResult again = weak_augment(s, labels, 123);
  CHECK(again.op == res.op);
  CHECK(again.stack.data == res.stack.data);
}

TEST_CASE("weak_augment covers all eight ops and can be disabled") {
  SliceStack s = random_stack(1, 4, 4, 2);
  std::set<WeakOp> seen;
  for (uint64_t seed = 0; seed < 200; ++seed) seen.insert(weak_augment(s, std::nullopt, seed).op);
  CHECK(seen.size() == 8);

  WeakPolicy off;
  off.enabled = false;
  WeakResult res = weak_augment(s, std::nullopt, 999, off);
  CHECK(res.op == WeakOp::identity);
  CHECK(res.stack.data == s.data);
}

TEST_CASE("strong_augment keeps pixels in place and in range") {
  SliceStack s = random_stack(7, 16, 16, 77);
  for (uint64_t seed = 0; seed < 20; ++seed) {
    SliceStack out = strong_augment(s, seed);
    REQUIRE(out.data.size() == s.data.size());
    CHECK(out.channels == s.channels);
    for (float v : out.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
  SliceStack a = strong_augment(s, 5);
  SliceStack b = strong_augment(s, 5);
  CHECK(a.data == b.data);
}

TEST_CASE("strong_augment uses identical parameters for every channel") {
  // two channels with identical content must stay identical after augmentation
  SliceStack s = random_stack(2, 12, 12, 3);
  for (int i = 0; i < 12 * 12; ++i) s.channel(1)[i] = s.channel(0)[i];
  for (uint64_t seed = 0; seed < 10; ++seed) {
    SliceStack out = strong_augment(s, seed);
    for (int i = 0; i < 12 * 12; ++i) REQUIRE(out.channel(1)[i] == out.channel(0)[i]);
  }
}

TEST_CASE("strong_augment with zero probability is the identity") {
  SliceStack s = random_stack(3, 8, 8, 6);
  StrongPolicy p;
  p.op_probability = 0.0;
  CHECK(strong_augment(s, 1, p).data == s.data);
  StrongPolicy off;
  off.enabled = false;
  CHECK(strong_augment(s, 1, off).data == s.data);
}

TEST_CASE("clahe on a uniform plane maps to full intensity") {
  // equalization sends the single occupied bin to the top of the range
  std::vector<float> in(16 * 16, 0.3f), out(16 * 16);
  clahe_plane(in.data(), out.data(), 16, 16, 1000.0, 1);
  for (float v : out) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("clahe two-value plane with generous clip equalizes by rank") {
  // half the pixels at 0.2, half at 0.7: CDF steps 0.5 then 1.0
  const int n = 16;
  std::vector<float> in(n * n), out(n * n);
  for (int i = 0; i < n * n; ++i) in[i] = i % 2 == 0 ? 0.2f : 0.7f;
  clahe_plane(in.data(), out.data(), n, n, 1000.0, 1);
  for (int i = 0; i < n * n; ++i) {
    if (i % 2 == 0)
      CHECK(out[i] == doctest::Approx(0.5).epsilon(1e-3));
    else
      CHECK(out[i] == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("clahe clip limit 1 flattens redistribution toward identity") {
  // with every bin clipped to the mean, the remapping is nearly linear
  const int n = 32;
  std::vector<float> in(n * n), out(n * n);
  Rng rng(8);
  for (float& v : in) v = static_cast<float>(rng.uniform());
  clahe_plane(in.data(), out.data(), n, n, 1.0, 1);
  for (int i = 0; i < n * n; ++i) REQUIRE(std::abs(out[i] - in[i]) < 0.08);
}
