#include "sctseg/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sctseg/common.hpp"

namespace sctseg {

std::vector<float> resize_bilinear(const std::vector<float>& src, int in_rows, int in_cols,
                                   int out_rows, int out_cols) {
  if (src.size() != static_cast<size_t>(in_rows) * in_cols)
    throw Error("resize_bilinear: source size does not match its shape");
  std::vector<float> dst(static_cast<size_t>(out_rows) * out_cols);
  const double sy = static_cast<double>(in_rows) / out_rows;
  const double sx = static_cast<double>(in_cols) / out_cols;
  for (int y = 0; y < out_rows; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, in_rows - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in_rows - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_cols; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, in_cols - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in_cols - 1);
      const double wx = fx - x0;
      const double top = src[static_cast<size_t>(y0) * in_cols + x0] * (1.0 - wx) +
                         src[static_cast<size_t>(y0) * in_cols + x1] * wx;
      const double bot = src[static_cast<size_t>(y1) * in_cols + x0] * (1.0 - wx) +
                         src[static_cast<size_t>(y1) * in_cols + x1] * wx;
      dst[static_cast<size_t>(y) * out_cols + x] = static_cast<float>(top * (1.0 - wy) + bot * wy);
    }
  }
  return dst;
}

std::vector<float> cam_from(const Tensor& act, const Tensor& grad, int sample, int out_rows,
                            int out_cols) {
  if (!act.same_shape(grad))
    throw Error("cam_from: activation " + act.shape_str() + " vs gradient " + grad.shape_str());
  const size_t plane = act.plane();
  const float* as = act.sample(sample);
  const float* gs = grad.sample(sample);

  std::vector<double> weights(act.c);
  for (int c = 0; c < act.c; ++c) {
    double s = 0.0;
    for (size_t p = 0; p < plane; ++p) s += gs[c * plane + p];
    weights[c] = s / static_cast<double>(plane);
  }

  std::vector<float> cam(plane, 0.0f);
  for (size_t p = 0; p < plane; ++p) {
    double v = 0.0;
    for (int c = 0; c < act.c; ++c) v += weights[c] * as[c * plane + p];
    cam[p] = static_cast<float>(std::max(v, 0.0));
  }

  std::vector<float> resized = resize_bilinear(cam, act.h, act.w, out_rows, out_cols);
  const float mx = *std::max_element(resized.begin(), resized.end());
  if (mx > 0.0f)
    for (float& v : resized) v /= mx;
  return resized;
}

CamResult grad_cam(SegNet& model, const SliceStack& stack, int target_class,
                   const std::string& layer) {
  if (target_class < 0 || target_class >= model.config().num_classes)
    throw Error("grad_cam: target class " + std::to_string(target_class) +
                " out of range for " + std::to_string(model.config().num_classes) + " classes");
  if (stack.channels != model.config().in_channels)
    throw Error("grad_cam: stack has " + std::to_string(stack.channels) +
                " slices, model expects " + std::to_string(model.config().in_channels));

  Tensor x(1, stack.channels, stack.rows, stack.cols);
  std::memcpy(x.sample(0), stack.data.data(), stack.data.size() * sizeof(float));

  model.set_capture(layer);
  Tensor logits = model.forward(x, false);
  LabelMap pred = argmax_labels(logits, 0);

  CamResult res;
  res.rows = stack.rows;
  res.cols = stack.cols;
  const size_t plane = logits.plane();
  size_t hits = 0;
  double score = 0.0;
  for (size_t p = 0; p < plane; ++p) {
    if (pred.labels[p] == target_class) {
      score += logits.v[static_cast<size_t>(target_class) * plane + p];
      ++hits;
    }
  }
  if (hits == 0) {
    res.heatmap.assign(plane, 0.0f);
    res.empty = true;
    model.set_capture("");
    return res;
  }
  res.score = score / static_cast<double>(hits);

  Tensor dlogits(1, logits.c, logits.h, logits.w);
  const float g = static_cast<float>(1.0 / static_cast<double>(hits));
  for (size_t p = 0; p < plane; ++p)
    if (pred.labels[p] == target_class)
      dlogits.v[static_cast<size_t>(target_class) * plane + p] = g;

  model.zero_grad();  // attribution must not leak into training state
  model.backward(dlogits);
  res.heatmap = cam_from(model.captured_activations(), model.captured_gradients(), 0, stack.rows,
                         stack.cols);
  model.zero_grad();
  model.set_capture("");
  return res;
}

}  // namespace sctseg
