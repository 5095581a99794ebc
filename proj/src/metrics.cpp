#include "sctseg/metrics.hpp"

#include <algorithm>

#include "sctseg/common.hpp"

namespace sctseg {

namespace {

std::vector<bool> ignore_set(int num_classes, const std::vector<int>& ignore) {
  std::vector<bool> ign(num_classes, false);
  for (int c : ignore) {
    if (c < 0 || c >= num_classes)
      throw Error("metrics: ignore class " + std::to_string(c) + " out of range for " +
                  std::to_string(num_classes) + " classes");
    ign[c] = true;
  }
  return ign;
}

void check_labels(std::span<const uint8_t> gt, std::span<const uint8_t> pred, int num_classes) {
  if (gt.size() != pred.size())
    throw Error("metrics: label arrays differ in size (" + std::to_string(gt.size()) + " vs " +
                std::to_string(pred.size()) + ")");
  if (gt.empty()) throw Error("metrics: empty label arrays");
  for (size_t i = 0; i < gt.size(); ++i)
    if (gt[i] >= num_classes || pred[i] >= num_classes)
      throw Error("metrics: label out of range at pixel " + std::to_string(i) + " (gt " +
                  std::to_string(int(gt[i])) + ", pred " + std::to_string(int(pred[i])) +
                  ", num_classes " + std::to_string(num_classes) + ")");
}

}  // namespace

double pixel_accuracy(std::span<const uint8_t> gt, std::span<const uint8_t> pred,
                      int num_classes, const std::vector<int>& ignore) {
  check_labels(gt, pred, num_classes);
  const std::vector<bool> ign = ignore_set(num_classes, ignore);
  size_t total = 0, hit = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (ign[gt[i]]) continue;
    ++total;
    hit += gt[i] == pred[i];
  }
  if (total == 0) throw Error("metrics: every pixel is ignored, nothing to evaluate");
  return static_cast<double>(hit) / static_cast<double>(total);
}

MiouResult mean_iou(std::span<const uint8_t> gt, std::span<const uint8_t> pred, int num_classes,
                    const std::vector<int>& ignore) {
  check_labels(gt, pred, num_classes);
  const std::vector<bool> ign = ignore_set(num_classes, ignore);
  std::vector<int64_t> inter(num_classes, 0), gt_count(num_classes, 0), pred_count(num_classes, 0);
  for (size_t i = 0; i < gt.size(); ++i) {
    if (ign[gt[i]]) continue;  // ignored GT pixels leave every tally untouched
    ++gt_count[gt[i]];
    ++pred_count[pred[i]];
    if (gt[i] == pred[i]) ++inter[gt[i]];
  }

  MiouResult res;
  res.per_class_iou.assign(num_classes, 0.0);
  res.evaluated.assign(num_classes, false);
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (ign[c]) continue;
    if (gt_count[c] == 0) {
      ++res.skipped_absent;  // absent from GT: excluded rather than scored 0
      continue;
    }
    const int64_t uni = gt_count[c] + pred_count[c] - inter[c];
    res.per_class_iou[c] = static_cast<double>(inter[c]) / static_cast<double>(uni);
    res.evaluated[c] = true;
    sum += res.per_class_iou[c];
    ++used;
  }
  if (used == 0) throw Error("metrics: no class is evaluable (all ignored or absent from GT)");
  res.miou = sum / used;
  return res;
}

double pixel_accuracy(const LabelVolume& gt, const LabelVolume& pred,
                      const std::vector<int>& ignore) {
  if (gt.depth != pred.depth || gt.height != pred.height || gt.width != pred.width)
    throw Error("metrics: label volumes differ in shape");
  const int k = std::max(gt.num_classes, pred.num_classes);
  return pixel_accuracy(std::span(gt.labels), std::span(pred.labels), k, ignore);
}

MiouResult mean_iou(const LabelVolume& gt, const LabelVolume& pred,
                    const std::vector<int>& ignore) {
  if (gt.depth != pred.depth || gt.height != pred.height || gt.width != pred.width)
    throw Error("metrics: label volumes differ in shape");
  const int k = std::max(gt.num_classes, pred.num_classes);
  return mean_iou(std::span(gt.labels), std::span(pred.labels), k, ignore);
}

std::vector<std::vector<int64_t>> confusion_matrix(std::span<const uint8_t> a_labels,
                                                   std::span<const uint8_t> b_labels,
                                                   int a_classes, int b_classes) {
  if (a_labels.size() != b_labels.size())
    throw Error("metrics: label arrays differ in size");
  std::vector<std::vector<int64_t>> m(a_classes, std::vector<int64_t>(b_classes, 0));
  for (size_t i = 0; i < a_labels.size(); ++i) {
    if (a_labels[i] >= a_classes || b_labels[i] >= b_classes)
      throw Error("metrics: label out of range at pixel " + std::to_string(i));
    ++m[a_labels[i]][b_labels[i]];
  }
  return m;
}

std::vector<int64_t> class_counts(std::span<const uint8_t> labels, int num_classes) {
  std::vector<int64_t> counts(num_classes, 0);
  for (uint8_t l : labels) {
    if (l >= num_classes)
      throw Error("metrics: label " + std::to_string(int(l)) + " out of range");
    ++counts[l];
  }
  return counts;
}

std::vector<int> majority_mapping(const std::vector<std::vector<int64_t>>& confusion) {
  if (confusion.empty()) throw Error("metrics: empty confusion matrix");
  const size_t b_classes = confusion[0].size();
  std::vector<int> mapping(b_classes, 0);
  for (size_t b = 0; b < b_classes; ++b) {
    int64_t best = -1;
    for (size_t a = 0; a < confusion.size(); ++a) {
      if (confusion[a][b] > best) {  // strict: ties keep the lowest GT class
        best = confusion[a][b];
        mapping[b] = static_cast<int>(a);
      }
    }
  }
  return mapping;
}

std::vector<uint8_t> relabel(std::span<const uint8_t> labels, const std::vector<int>& mapping) {
  std::vector<uint8_t> out(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= mapping.size())
      throw Error("metrics: label " + std::to_string(int(labels[i])) + " has no mapping entry");
    out[i] = static_cast<uint8_t>(mapping[labels[i]]);
  }
  return out;
}

}  // namespace sctseg
