#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sctseg/layers.hpp"
#include "sctseg/tensor.hpp"
#include "sctseg/volume.hpp"

namespace sctseg {

struct ModelConfig {
  int in_channels = 7;  // 2.5D stack size, must be odd
  int num_classes = 4;
  int depth = 4;        // encoder levels (pooling stages)
  int base_width = 16;  // channels at the finest level, doubled per level
  bool skip_connections = false;
  double dropout_rate = 0.1;
  int norm_groups = 8;
};

void validate_model_config(const ModelConfig& cfg);

/// U-Net style encoder-decoder over 2.5D slice stacks. Skip connections
/// are a config toggle; the default configuration omits them.
class SegNet {
 public:
  SegNet() = default;
  SegNet(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// x is (N, in_channels, H, W); H and W must be divisible by 2^depth.
  /// Returns logits (N, num_classes, H, W).
  Tensor forward(const Tensor& x, bool train);

  /// dlogits matches the last forward's output shape. Accumulates into
  /// param grads and returns the gradient w.r.t. the input.
  Tensor backward(const Tensor& dlogits);

  /// Stable ordering; the same config always yields the same list.
  std::vector<Param*> params();
  size_t param_count() const;
  void zero_grad();

  /// Feature maps that attribution can hook: enc_l0..enc_l{D-1},
  /// bottleneck, dec_l{D-1}..dec_l0 in execution order.
  std::vector<std::string> feature_names() const;
  void set_capture(const std::string& name);  // empty string disables
  const Tensor& captured_activations() const { return cap_act_; }
  const Tensor& captured_gradients() const { return cap_grad_; }

 private:
  ModelConfig cfg_;
  std::vector<ConvBlock> enc_;
  std::vector<MaxPool2> pool_;
  ConvBlock bottleneck_;
  std::vector<UpBlock> up_;    // execution order, coarsest level first
  std::vector<ConvBlock> dec_;
  Conv2d head_;
  std::vector<Tensor> enc_out_;
  std::string capture_;
  Tensor cap_act_, cap_grad_;

  int level_width(int level) const { return cfg_.base_width << level; }
};

/// Softmax over the class axis, numerically stable, float output.
Tensor softmax(const Tensor& logits);

/// Per-pixel argmax of sample `sample`; ties resolve to the lowest index.
LabelMap argmax_labels(const Tensor& t, int sample);

/// Serialized training state: named float tensors plus a few scalars.
/// Tensor names are prefixed by role ("student/", "teacher/", "adam/").
struct Checkpoint {
  ModelConfig config;
  int stage = 0;
  int epoch = 0;
  uint64_t seed = 0;
  std::map<std::string, std::vector<float>> tensors;
  std::map<std::string, double> scalars;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
  bool has_prefix(const std::string& prefix) const;
};

void store_params(Checkpoint& ck, SegNet& model, const std::string& prefix);
void load_params(const Checkpoint& ck, SegNet& model, const std::string& prefix);

}  // namespace sctseg
