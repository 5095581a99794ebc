#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sctseg/volume.hpp"

namespace sctseg {

enum class DriftKind { none, linear, radial };
DriftKind drift_kind_from_string(const std::string& s);
std::string to_string(DriftKind k);

/// Synthetic tomography slab: a material cylinder (class 1) in air
/// (class 0) carrying blob and thin-curve inclusions (classes 2..K-1).
/// Labels are laid down first; every corruption only touches intensity.
struct PhantomSpec {
  int depth = 64;
  int height = 128;
  int width = 128;
  int num_classes = 3;
  double cylinder_radius_frac = 0.42;  // of min(height, width)

  /// Target voxel fraction of the cylinder per inclusion class
  /// (num_classes - 2 entries). Empty selects 0.12 for each.
  std::vector<double> inclusion_fractions;
  double fraction_tolerance = 0.02;
  double blob_share = 0.6;  // rest of each inclusion budget goes to curves
  int curve_min_persist = 3;  // slices a curve must span

  /// Mean intensity per class, strictly ascending. Empty selects an even
  /// spread over [0.1, 0.9]. Class order is canonical: darker = lower.
  std::vector<double> class_means;

  DriftKind drift = DriftKind::linear;
  double drift_strength = 0.3;   // multiplicative ramp half-amplitude
  double noise_sigma = 0.05;
  double streaks_per_slice = 0.2;
  double streak_strength = 0.12;
  double fringe_gain = 1.0;  // boundary over/undershoot, unsharp residual gain
};

struct PhantomResult {
  Volume volume;       // corrupted intensities, clamped to [0, 1]
  LabelVolume labels;  // ground truth, untouched by corruption
  std::vector<double> class_fractions;             // of all voxels, per class
  std::vector<double> inclusion_fractions_achieved;  // of cylinder voxels
};

void validate_phantom_spec(const PhantomSpec& spec);

PhantomResult generate_phantom(const PhantomSpec& spec, uint64_t seed);

}  // namespace sctseg
