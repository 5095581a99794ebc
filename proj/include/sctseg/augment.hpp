#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sctseg/common.hpp"
#include "sctseg/volume.hpp"

namespace sctseg {

/// The eight square symmetries. Weak augmentation samples one per call and
/// applies it to every channel and to the paired label map.
enum class WeakOp : int {
  identity = 0,
  rot90,
  rot180,
  rot270,
  flip_horizontal,
  flip_vertical,
  flip_main_diag,   // transpose
  flip_anti_diag,
};

std::string to_string(WeakOp op);

struct WeakPolicy {
  bool enabled = true;
};

/// Photometric ops only; each is gated by an independent coin flip and its
/// parameters are sampled once, then replicated across all channels.
struct StrongPolicy {
  bool enabled = true;
  double op_probability = 0.5;
  double gamma_lo = 0.7, gamma_hi = 1.5;
  double brightness_delta = 0.2;   // additive, sampled in [-delta, delta]
  double contrast_lo = 0.8, contrast_hi = 1.2;
  bool clahe_enabled = true;
  double clahe_clip_lo = 1.0, clahe_clip_hi = 4.0;
  int clahe_tiles = 8;
};

/// Apply `op` to a single plane. Throws if the plane is non-square and the
/// op does not preserve its shape.
void apply_weak_op(WeakOp op, const float* in, float* out, int rows, int cols);
void apply_weak_op(WeakOp op, const uint8_t* in, uint8_t* out, int rows, int cols);

struct WeakResult {
  SliceStack stack;
  std::optional<LabelMap> labels;
  WeakOp op = WeakOp::identity;
};

/// Sample one geometric op (uniform over the 8 symmetries) and apply the
/// identical transform to every channel and the label map.
WeakResult weak_augment(const SliceStack& s, const std::optional<LabelMap>& labels,
                        uint64_t seed, const WeakPolicy& policy = {});

/// Photometric pipeline: gamma -> brightness -> contrast -> CLAHE, each
/// Bernoulli-gated. Pixels stay at their spatial index; output is clipped
/// to [0, 1]. Labels are never touched by strong ops.
SliceStack strong_augment(const SliceStack& s, uint64_t seed, const StrongPolicy& policy = {});

/// Contrast-limited adaptive histogram equalization on one [0,1] plane.
/// clip_limit is a multiple of the mean bin count; tiles=1 degenerates to
/// global clipped equalization.
void clahe_plane(const float* in, float* out, int rows, int cols, double clip_limit, int tiles);

}  // namespace sctseg
