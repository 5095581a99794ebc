#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sctseg/volume.hpp"

namespace sctseg {

/// Fraction of pixels where pred == gt, skipping pixels whose GT class
/// is listed in `ignore`. Errors when nothing remains to evaluate.
double pixel_accuracy(std::span<const uint8_t> gt, std::span<const uint8_t> pred,
                      int num_classes, const std::vector<int>& ignore = {});

struct MiouResult {
  double miou = 0.0;
  std::vector<double> per_class_iou;  // indexed by class; 0 when not evaluated
  std::vector<bool> evaluated;        // false: ignored or absent from GT
  int skipped_absent = 0;             // classes dropped because GT lacks them
};

/// Mean IoU over classes that are not ignored and occur in the GT.
/// Ignored GT pixels do not contribute to any intersection or union.
MiouResult mean_iou(std::span<const uint8_t> gt, std::span<const uint8_t> pred, int num_classes,
                    const std::vector<int>& ignore = {});

double pixel_accuracy(const LabelVolume& gt, const LabelVolume& pred,
                      const std::vector<int>& ignore = {});
MiouResult mean_iou(const LabelVolume& gt, const LabelVolume& pred,
                    const std::vector<int>& ignore = {});

/// rows[a][b] = pixels labelled a in `a_labels` and b in `b_labels`.
std::vector<std::vector<int64_t>> confusion_matrix(std::span<const uint8_t> a_labels,
                                                   std::span<const uint8_t> b_labels,
                                                   int a_classes, int b_classes);

std::vector<int64_t> class_counts(std::span<const uint8_t> labels, int num_classes);

/// For each predicted class, the GT class it most overlaps (ties to the
/// lowest GT class; never-predicted classes map to 0). Many-to-one by
/// construction, which is how surplus clusters fold into their parents.
std::vector<int> majority_mapping(const std::vector<std::vector<int64_t>>& confusion);

std::vector<uint8_t> relabel(std::span<const uint8_t> labels, const std::vector<int>& mapping);

}  // namespace sctseg
