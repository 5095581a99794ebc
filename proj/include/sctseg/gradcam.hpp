#pragma once

#include <string>
#include <vector>

#include "sctseg/model.hpp"
#include "sctseg/volume.hpp"

namespace sctseg {

struct CamResult {
  std::vector<float> heatmap;  // rows*cols, scaled to [0, 1]
  int rows = 0, cols = 0;
  double score = 0.0;  // mean target-class logit over pixels predicted as that class
  bool empty = false;  // class never predicted in this slice; heatmap stays zero
};

/// Channel-weighted, ReLU-ed activation map resized to out_rows x out_cols
/// and max-normalised. Weights are the spatial means of `grad`. Split out
/// so the arithmetic can be checked against closed forms without a model.
std::vector<float> cam_from(const Tensor& act, const Tensor& grad, int sample, int out_rows,
                            int out_cols);

/// Bilinear resize of a single-channel map.
std::vector<float> resize_bilinear(const std::vector<float>& src, int in_rows, int in_cols,
                                   int out_rows, int out_cols);

/// Class-attribution heatmap for one slice stack. The score whose
/// gradient is visualised is the mean logit of `target_class` over the
/// pixels the model assigns to that class.
CamResult grad_cam(SegNet& model, const SliceStack& stack, int target_class,
                   const std::string& layer = "dec_l0");

}  // namespace sctseg
