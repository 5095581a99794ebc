#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sctseg/common.hpp"

namespace sctseg {

/// 3D scalar field of attenuation values, indexed (slice, row, col).
/// Immutable after load by convention; operations return new objects.
struct Volume {
  std::vector<float> data;  // size depth*height*width, slice-major
  int depth = 0;
  int height = 0;
  int width = 0;
  std::optional<double> voxel_size_um;
  float value_min = 0.0f;
  float value_max = 0.0f;

  Volume() = default;
  Volume(int d, int h, int w)
      : data(static_cast<size_t>(d) * h * w, 0.0f), depth(d), height(h), width(w) {}

  size_t size() const { return data.size(); }
  size_t index(int d, int r, int c) const {
    return (static_cast<size_t>(d) * height + r) * width + c;
  }
  float at(int d, int r, int c) const { return data[index(d, r, c)]; }
  float& at(int d, int r, int c) { return data[index(d, r, c)]; }
  const float* slice(int d) const { return data.data() + static_cast<size_t>(d) * height * width; }

  /// Recompute the cached (min, max) value range.
  void update_range();
};

enum class LabelProvenance : uint8_t { pseudo, predicted, ground_truth };

/// Per-voxel class indices in {0..num_classes-1}, shape-paired with a Volume.
struct LabelVolume {
  std::vector<uint8_t> labels;
  int depth = 0;
  int height = 0;
  int width = 0;
  int num_classes = 2;
  LabelProvenance provenance = LabelProvenance::pseudo;

  LabelVolume() = default;
  LabelVolume(int d, int h, int w, int k, LabelProvenance p)
      : labels(static_cast<size_t>(d) * h * w, 0), depth(d), height(h), width(w),
        num_classes(k), provenance(p) {}

  size_t size() const { return labels.size(); }
  size_t index(int d, int r, int c) const {
    return (static_cast<size_t>(d) * height + r) * width + c;
  }
  uint8_t at(int d, int r, int c) const { return labels[index(d, r, c)]; }
  uint8_t& at(int d, int r, int c) { return labels[index(d, r, c)]; }
  const uint8_t* slice(int d) const {
    return labels.data() + static_cast<size_t>(d) * height * width;
  }
};

/// A 2.5D model input: `channels` adjacent slices stacked around a center
/// slice, cropped to (rows, cols). Channel count is always odd.
struct SliceStack {
  std::vector<float> data;  // (channels, rows, cols)
  int channels = 0;
  int rows = 0;
  int cols = 0;
  int center_index = 0;
  int crop_row = 0;  // origin of the crop within the full slice
  int crop_col = 0;

  SliceStack() = default;
  SliceStack(int c, int h, int w)
      : data(static_cast<size_t>(c) * h * w, 0.0f), channels(c), rows(h), cols(w) {}

  size_t index(int c, int r, int col) const {
    return (static_cast<size_t>(c) * rows + r) * cols + col;
  }
  float at(int c, int r, int col) const { return data[index(c, r, col)]; }
  float& at(int c, int r, int col) { return data[index(c, r, col)]; }
  float* channel(int c) { return data.data() + static_cast<size_t>(c) * rows * cols; }
  const float* channel(int c) const {
    return data.data() + static_cast<size_t>(c) * rows * cols;
  }
};

/// 2D label map used for per-slice training targets and predictions.
struct LabelMap {
  std::vector<uint8_t> labels;
  int rows = 0;
  int cols = 0;

  LabelMap() = default;
  LabelMap(int h, int w) : labels(static_cast<size_t>(h) * w, 0), rows(h), cols(w) {}

  size_t index(int r, int c) const { return static_cast<size_t>(r) * cols + c; }
  uint8_t at(int r, int c) const { return labels[index(r, c)]; }
  uint8_t& at(int r, int c) { return labels[index(r, c)]; }
};

struct NormalizeMode {
  enum class Kind { global_minmax, percentile } kind = Kind::global_minmax;
  double p_lo = 2.0;
  double p_hi = 98.0;

  static NormalizeMode global_minmax() { return NormalizeMode{}; }
  static NormalizeMode percentile(double lo, double hi) {
    return NormalizeMode{Kind::percentile, lo, hi};
  }
};

/// Rescale voxel values into [0, 1]. global_minmax maps min->0, max->1;
/// percentile clips to [p_lo, p_hi] percentiles first. Statistics are
/// volume-global. Throws on a constant volume (no valid rescale).
Volume normalize(const Volume& v, const NormalizeMode& mode);

/// Percentile with linear interpolation between closest ranks
/// (rank = p/100 * (n-1) on the sorted values).
double percentile_value(std::vector<float> values, double p);

/// Extract `num_slices` (odd) adjacent slices centered on `center`.
/// Out-of-range slice indices clamp to the nearest valid slice.
SliceStack extract_stack(const Volume& v, int center, int num_slices);

/// Matching label slice for a stack center (no stacking; labels are 2D).
LabelMap extract_label_slice(const LabelVolume& lv, int center);

/// Apply the same crop window to every channel. Uniform origin under `rng`.
SliceStack random_crop(const SliceStack& s, int crop_rows, int crop_cols, Rng& rng);

/// Crop at an explicit origin (used to crop the paired label map).
SliceStack crop_at(const SliceStack& s, int row0, int col0, int crop_rows, int crop_cols);
LabelMap crop_at(const LabelMap& m, int row0, int col0, int crop_rows, int crop_cols);

}  // namespace sctseg
