#include "sctseg/volume.hpp"

#include <algorithm>
#include <cmath>

namespace sctseg {

void Volume::update_range() {
  auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  value_min = data.empty() ? 0.0f : *lo;
  value_max = data.empty() ? 0.0f : *hi;
}

double percentile_value(std::vector<float> values, double p) {
  if (values.empty()) throw Error("percentile of empty value set");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const size_t hi = static_cast<size_t>(std::ceil(rank));
  const double frac = rank - static_cast<double>(lo);
  return (1.0 - frac) * values[lo] + frac * values[hi];
}

Volume normalize(const Volume& v, const NormalizeMode& mode) {
  double lo = 0.0;
  double hi = 0.0;
  if (mode.kind == NormalizeMode::Kind::global_minmax) {
    lo = v.value_min;
    hi = v.value_max;
    if (!(hi > lo)) throw Error("normalize: constant volume has no valid min-max rescale");
  } else {
    if (!(mode.p_lo < mode.p_hi) || mode.p_lo < 0.0 || mode.p_hi > 100.0)
      throw Error("normalize: percentile bounds must satisfy 0 <= p_lo < p_hi <= 100");
    lo = percentile_value(v.data, mode.p_lo);
    hi = percentile_value(v.data, mode.p_hi);
    if (!(hi > lo)) throw Error("normalize: degenerate percentile range");
  }
  Volume out(v.depth, v.height, v.width);
  out.voxel_size_um = v.voxel_size_um;
  const double scale = 1.0 / (hi - lo);
  for (size_t i = 0; i < v.data.size(); ++i) {
    double x = (static_cast<double>(v.data[i]) - lo) * scale;
    x = std::clamp(x, 0.0, 1.0);
    out.data[i] = static_cast<float>(x);
  }
  out.update_range();
  return out;
}

SliceStack extract_stack(const Volume& v, int center, int num_slices) {
  if (num_slices < 1 || num_slices % 2 == 0)
    throw Error("extract_stack: num_slices must be a positive odd integer, got " +
                std::to_string(num_slices));
  if (center < 0 || center >= v.depth)
    throw Error("extract_stack: center slice " + std::to_string(center) +
                " outside [0, " + std::to_string(v.depth) + ")");
  SliceStack s(num_slices, v.height, v.width);
  s.center_index = center;
  const int r = (num_slices - 1) / 2;
  for (int c = 0; c < num_slices; ++c) {
    const int src = std::clamp(center - r + c, 0, v.depth - 1);
    std::copy_n(v.slice(src), static_cast<size_t>(v.height) * v.width, s.channel(c));
  }
  return s;
}

LabelMap extract_label_slice(const LabelVolume& lv, int center) {
  if (center < 0 || center >= lv.depth)
    throw Error("extract_label_slice: slice index out of range");
  LabelMap m(lv.height, lv.width);
  std::copy_n(lv.slice(center), m.labels.size(), m.labels.begin());
  return m;
}

SliceStack crop_at(const SliceStack& s, int row0, int col0, int crop_rows, int crop_cols) {
  if (crop_rows < 1 || crop_cols < 1 || row0 < 0 || col0 < 0 ||
      row0 + crop_rows > s.rows || col0 + crop_cols > s.cols)
    throw Error("crop window (" + std::to_string(crop_rows) + "x" + std::to_string(crop_cols) +
                " at " + std::to_string(row0) + "," + std::to_string(col0) +
                ") exceeds slice of " + std::to_string(s.rows) + "x" + std::to_string(s.cols));
  SliceStack out(s.channels, crop_rows, crop_cols);
  out.center_index = s.center_index;
  out.crop_row = s.crop_row + row0;
  out.crop_col = s.crop_col + col0;
  for (int c = 0; c < s.channels; ++c)
    for (int r = 0; r < crop_rows; ++r)
      std::copy_n(s.channel(c) + static_cast<size_t>(row0 + r) * s.cols + col0, crop_cols,
                  out.channel(c) + static_cast<size_t>(r) * crop_cols);
  return out;
}

LabelMap crop_at(const LabelMap& m, int row0, int col0, int crop_rows, int crop_cols) {
  if (crop_rows < 1 || crop_cols < 1 || row0 < 0 || col0 < 0 ||
      row0 + crop_rows > m.rows || col0 + crop_cols > m.cols)
    throw Error("label crop window exceeds map bounds");
  LabelMap out(crop_rows, crop_cols);
  for (int r = 0; r < crop_rows; ++r)
    std::copy_n(m.labels.data() + static_cast<size_t>(row0 + r) * m.cols + col0, crop_cols,
                out.labels.data() + static_cast<size_t>(r) * crop_cols);
  return out;
}

SliceStack random_crop(const SliceStack& s, int crop_rows, int crop_cols, Rng& rng) {
  if (crop_rows > s.rows || crop_cols > s.cols)
    throw Error("random_crop: crop " + std::to_string(crop_rows) + "x" +
                std::to_string(crop_cols) + " larger than slice " + std::to_string(s.rows) +
                "x" + std::to_string(s.cols));
  const int row0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(s.rows - crop_rows + 1)));
  const int col0 = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(s.cols - crop_cols + 1)));
  return crop_at(s, row0, col0, crop_rows, crop_cols);
}

}  // namespace sctseg
