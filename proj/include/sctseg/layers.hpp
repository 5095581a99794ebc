#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sctseg/common.hpp"
#include "sctseg/tensor.hpp"

namespace sctseg {

/// Largest divisor of `channels` that does not exceed `requested`.
/// Keeps group sizes uniform when a width is not divisible by the
/// configured group count.
int effective_groups(int channels, int requested);

/// 3x3 or 1x1 same-padding convolution, stride 1. Forward caches the
/// input; backward recomputes the im2col buffer instead of storing it.
struct Conv2d {
  int in_c = 0, out_c = 0, ksize = 3, pad = 1;
  Param weight;  // (out_c, in_c*k*k)
  Param bias;    // (out_c)

  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel);

  void init_he(Rng& rng);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

 private:
  Tensor x_;
  std::vector<float> col_;
  void im2col(const float* src, int h, int w, float* col) const;
};

struct GroupNorm {
  int channels = 0, groups = 1;
  double eps = 1e-5;
  Param gamma, beta;

  GroupNorm() = default;
  GroupNorm(const std::string& name, int channels_, int requested_groups);

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

 private:
  Tensor xhat_;
  std::vector<double> inv_std_;  // one per (sample, group)
};

/// Channel-shared negative slopes, one per channel, initialised to 0.25.
struct PReLU {
  int channels = 0;
  Param slope;

  PReLU() = default;
  PReLU(const std::string& name, int channels_);

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out) { out.push_back(&slope); }

 private:
  Tensor x_;
};

/// Inverted dropout. rate == 0 or eval mode is an exact pass-through
/// that draws nothing from the stream.
struct Dropout {
  double rate = 0.0;
  explicit Dropout(double rate_ = 0.0) : rate(rate_) {}

  void seed(uint64_t s) { rng_ = Rng(s); }
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);

 private:
  Rng rng_{0};
  std::vector<float> mask_;
  bool identity_ = true;
};

/// 2x2 max pooling, stride 2. Ties keep the first (row-major) element.
struct MaxPool2 {
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  int in_h = 0, in_w = 0, n_ = 0, c_ = 0;
  std::vector<int> arg_;  // source offset within the input plane
};

/// Nearest-neighbour 2x upsampling.
struct Upsample2 {
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

 private:
  int in_h = 0, in_w = 0;
};

/// conv-gn-act twice, then dropout. The shared unit of the encoder,
/// bottleneck and decoder.
struct ConvBlock {
  Conv2d conv1, conv2;
  GroupNorm gn1, gn2;
  PReLU act1, act2;
  Dropout drop;

  ConvBlock() = default;
  ConvBlock(const std::string& name, int in_channels, int out_channels, int norm_groups,
            double dropout_rate);

  void init(Rng& rng, uint64_t dropout_seed);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);
};

/// Upsample then a 3x3 conv-gn-act that halves the channel count.
struct UpBlock {
  Upsample2 up;
  Conv2d conv;
  GroupNorm gn;
  PReLU act;

  UpBlock() = default;
  UpBlock(const std::string& name, int in_channels, int out_channels, int norm_groups);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& gy);
  void collect(std::vector<Param*>& out);
};

}  // namespace sctseg
