#include "sctseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sctseg {

namespace {

bool op_preserves_shape(WeakOp op, int rows, int cols) {
  if (rows == cols) return true;
  switch (op) {
    case WeakOp::identity:
    case WeakOp::rot180:
    case WeakOp::flip_horizontal:
    case WeakOp::flip_vertical:
      return true;
    default:
      return false;
  }
}

template <typename T>
void apply_op(WeakOp op, const T* in, T* out, int rows, int cols) {
  if (!op_preserves_shape(op, rows, cols))
    throw Error("weak_augment: " + to_string(op) + " requires a square crop, got " +
                std::to_string(rows) + "x" + std::to_string(cols));
  auto idx = [cols](int r, int c) { return static_cast<size_t>(r) * cols + c; };
  switch (op) {
    case WeakOp::identity:
      std::copy_n(in, static_cast<size_t>(rows) * cols, out);
      break;
    case WeakOp::rot90:  // 90 degrees counterclockwise
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[idx(r, c)] = in[idx(c, cols - 1 - r)];
      break;
    case WeakOp::rot180:
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[idx(r, c)] = in[idx(rows - 1 - r, cols - 1 - c)];
      break;
    case WeakOp::rot270:
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[idx(r, c)] = in[idx(rows - 1 - c, r)];
      break;
    case WeakOp::flip_horizontal:
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[idx(r, c)] = in[idx(r, cols - 1 - c)];
      break;
    case WeakOp::flip_vertical:
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[idx(r, c)] = in[idx(rows - 1 - r, c)];
      break;
    case WeakOp::flip_main_diag:
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[idx(r, c)] = in[idx(c, r)];
      break;
    case WeakOp::flip_anti_diag:
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[idx(r, c)] = in[idx(rows - 1 - c, cols - 1 - r)];
      break;
  }
}

}  // namespace

std::string to_string(WeakOp op) {
  switch (op) {
    case WeakOp::identity: return "identity";
    case WeakOp::rot90: return "rot90";
    case WeakOp::rot180: return "rot180";
    case WeakOp::rot270: return "rot270";
    case WeakOp::flip_horizontal: return "flip_horizontal";
    case WeakOp::flip_vertical: return "flip_vertical";
    case WeakOp::flip_main_diag: return "flip_main_diag";
    case WeakOp::flip_anti_diag: return "flip_anti_diag";
  }
  return "?";
}

void apply_weak_op(WeakOp op, const float* in, float* out, int rows, int cols) {
  apply_op(op, in, out, rows, cols);
}
void apply_weak_op(WeakOp op, const uint8_t* in, uint8_t* out, int rows, int cols) {
  apply_op(op, in, out, rows, cols);
}

WeakResult weak_augment(const SliceStack& s, const std::optional<LabelMap>& labels,
                        uint64_t seed, const WeakPolicy& policy) {
  if (labels && (labels->rows != s.rows || labels->cols != s.cols))
    throw Error("weak_augment: label map shape differs from the stack");
  WeakResult res;
  res.op = WeakOp::identity;
  if (policy.enabled) {
    Rng rng(derive_seed(seed, 0x7765616bULL));
    res.op = static_cast<WeakOp>(rng.uniform_index(8));
  }
  res.stack = SliceStack(s.channels, s.rows, s.cols);
  res.stack.center_index = s.center_index;
  res.stack.crop_row = s.crop_row;
  res.stack.crop_col = s.crop_col;
  for (int c = 0; c < s.channels; ++c)
    apply_weak_op(res.op, s.channel(c), res.stack.channel(c), s.rows, s.cols);
  if (labels) {
    LabelMap out(labels->rows, labels->cols);
    apply_weak_op(res.op, labels->labels.data(), out.labels.data(), labels->rows, labels->cols);
    res.labels = std::move(out);
  }
  return res;
}

void clahe_plane(const float* in, float* out, int rows, int cols, double clip_limit, int tiles) {
  constexpr int kLevels = 256;
  tiles = std::max(1, std::min({tiles, rows, cols}));

  auto quantize = [](float v) {
    int b = static_cast<int>(std::clamp(v, 0.0f, 1.0f) * kLevels);
    return std::min(b, kLevels - 1);
  };

  // Tile edges by integer rounding; mapping per tile = clipped-histogram CDF.
  std::vector<int> redge(tiles + 1), cedge(tiles + 1);
  for (int i = 0; i <= tiles; ++i) {
    redge[i] = static_cast<int>(std::lround(static_cast<double>(i) * rows / tiles));
    cedge[i] = static_cast<int>(std::lround(static_cast<double>(i) * cols / tiles));
  }

  std::vector<std::vector<float>> mapping(static_cast<size_t>(tiles) * tiles);
  for (int ti = 0; ti < tiles; ++ti) {
    for (int tj = 0; tj < tiles; ++tj) {
      std::vector<double> hist(kLevels, 0.0);
      double n = 0.0;
      for (int r = redge[ti]; r < redge[ti + 1]; ++r)
        for (int c = cedge[tj]; c < cedge[tj + 1]; ++c, n += 1.0)
          hist[quantize(in[static_cast<size_t>(r) * cols + c])] += 1.0;
      if (n <= 0.0) n = 1.0;
      const double cap = std::max(clip_limit * n / kLevels, 1.0);
      double excess = 0.0;
      for (double& h : hist)
        if (h > cap) {
          excess += h - cap;
          h = cap;
        }
      const double add = excess / kLevels;
      for (double& h : hist) h += add;
      auto& map = mapping[static_cast<size_t>(ti) * tiles + tj];
      map.resize(kLevels);
      double cum = 0.0;
      for (int b = 0; b < kLevels; ++b) {
        cum += hist[b];
        map[b] = static_cast<float>(cum / n);
      }
    }
  }

  // Bilinear interpolation between the four neighboring tile mappings.
  std::vector<double> rcenter(tiles), ccenter(tiles);
  for (int i = 0; i < tiles; ++i) {
    rcenter[i] = 0.5 * (redge[i] + redge[i + 1]);
    ccenter[i] = 0.5 * (cedge[i] + cedge[i + 1]);
  }
  auto bracket = [](const std::vector<double>& centers, double x, int& i0, int& i1, double& w1) {
    const int t = static_cast<int>(centers.size());
    if (x <= centers.front()) { i0 = i1 = 0; w1 = 0.0; return; }
    if (x >= centers.back()) { i0 = i1 = t - 1; w1 = 0.0; return; }
    int hi = 1;
    while (centers[hi] < x) ++hi;
    i0 = hi - 1;
    i1 = hi;
    w1 = (x - centers[i0]) / (centers[i1] - centers[i0]);
  };

  for (int r = 0; r < rows; ++r) {
    int r0, r1;
    double wr;
    bracket(rcenter, r + 0.5, r0, r1, wr);
    for (int c = 0; c < cols; ++c) {
      int c0, c1;
      double wc;
      bracket(ccenter, c + 0.5, c0, c1, wc);
      const int b = quantize(in[static_cast<size_t>(r) * cols + c]);
      const double m00 = mapping[static_cast<size_t>(r0) * tiles + c0][b];
      const double m01 = mapping[static_cast<size_t>(r0) * tiles + c1][b];
      const double m10 = mapping[static_cast<size_t>(r1) * tiles + c0][b];
      const double m11 = mapping[static_cast<size_t>(r1) * tiles + c1][b];
      const double v = (1 - wr) * ((1 - wc) * m00 + wc * m01) + wr * ((1 - wc) * m10 + wc * m11);
      out[static_cast<size_t>(r) * cols + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
}

SliceStack strong_augment(const SliceStack& s, uint64_t seed, const StrongPolicy& policy) {
  SliceStack out = s;
  if (!policy.enabled) return out;

  Rng rng(derive_seed(seed, 0x7374726f6e67ULL));
  // Sample every gate and parameter up front so the parameter set is the
  // same for all channels.
  const bool do_gamma = rng.uniform() < policy.op_probability;
  const double gamma = rng.uniform(policy.gamma_lo, policy.gamma_hi);
  const bool do_brightness = rng.uniform() < policy.op_probability;
  const double brightness = rng.uniform(-policy.brightness_delta, policy.brightness_delta);
  const bool do_contrast = rng.uniform() < policy.op_probability;
  const double contrast = rng.uniform(policy.contrast_lo, policy.contrast_hi);
  const bool do_clahe = policy.clahe_enabled && rng.uniform() < policy.op_probability;
  const double clip = rng.uniform(policy.clahe_clip_lo, policy.clahe_clip_hi);

  const size_t plane = static_cast<size_t>(s.rows) * s.cols;
  std::vector<float> scratch(plane);
  for (int c = 0; c < s.channels; ++c) {
    float* ch = out.channel(c);
    for (size_t i = 0; i < plane; ++i) {
      double v = std::clamp(static_cast<double>(ch[i]), 0.0, 1.0);
      if (do_gamma) v = std::pow(v, gamma);
      if (do_brightness) v += brightness;
      if (do_contrast) v = (v - 0.5) * contrast + 0.5;
      ch[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    if (do_clahe) {
      clahe_plane(ch, scratch.data(), s.rows, s.cols, clip, policy.clahe_tiles);
      std::copy_n(scratch.data(), plane, ch);
    }
  }
  return out;
}

}  // namespace sctseg
