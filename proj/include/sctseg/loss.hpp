#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sctseg/tensor.hpp"

namespace sctseg {

enum class LossKind {
  cross_entropy,
  label_smoothing,
  bootstrap_soft,
  focal,
  generalized_ce,
  symmetric_ce,
};

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

struct LossOptions {
  LossKind kind = LossKind::cross_entropy;
  double smoothing_epsilon = 0.1;  // label_smoothing
  double bootstrap_beta = 0.95;    // weight on the given label vs the model's own p
  double focal_gamma = 2.0;
  double gce_r = 0.7;       // exponent in (1 - p^r)/r
  double sce_alpha = 0.1;   // CE weight
  double sce_beta = 1.0;    // reverse-CE weight
  double sce_log_zero = -4.0;  // stand-in for log(0) inside the reverse term
};

void validate_loss_options(const LossOptions& opt);

struct LossResult {
  double value = 0.0;
  Tensor dlogits;
  size_t active_pixels = 0;
  bool empty_mask = false;  // masked variant saw an all-zero mask
};

/// Per-pixel class probabilities in double precision, same layout as the
/// logits tensor. The shared numerical core of every loss here.
std::vector<double> softmax_double(const Tensor& logits);

/// One-hot encode integer labels; out-of-range entries name the pixel.
Tensor one_hot(const std::vector<uint8_t>& targets, int n, int num_classes, int h, int w);

/// Mean per-pixel loss over the whole batch with analytic dL/dlogits.
/// targets holds one class index per pixel, sample-major row-major.
LossResult supervised_loss(const Tensor& logits, const std::vector<uint8_t>& targets,
                           const LossOptions& opt);

/// Cross entropy restricted to mask==1 pixels, normalised by the number
/// of active pixels in the batch. An all-zero mask is reported via
/// empty_mask rather than an error so callers can skip the step.
LossResult masked_cross_entropy(const Tensor& logits, const std::vector<uint8_t>& targets,
                                const std::vector<uint8_t>& mask);

}  // namespace sctseg
