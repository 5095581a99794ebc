#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace sctseg {

/// Dense NCHW float tensor. Plain data holder; layers own the math.
struct Tensor {
  std::vector<float> v;
  int n = 0, c = 0, h = 0, w = 0;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0f), n(n_), c(c_), h(h_), w(w_) {}

  size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const;

  size_t plane() const { return static_cast<size_t>(h) * w; }
  size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
  float* sample(int i) { return v.data() + static_cast<size_t>(i) * sample_size(); }
  const float* sample(int i) const { return v.data() + static_cast<size_t>(i) * sample_size(); }

  size_t index(int in, int ic, int iy, int ix) const {
    return ((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix;
  }
  float& at(int in, int ic, int iy, int ix) { return v[index(in, ic, iy, ix)]; }
  float at(int in, int ic, int iy, int ix) const { return v[index(in, ic, iy, ix)]; }

  void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

/// Named trainable parameter with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  void init(std::string n, std::vector<int> s) {
    name = std::move(n);
    shape = std::move(s);
    size_t total = 1;
    for (int d : shape) total *= static_cast<size_t>(d);
    value.assign(total, 0.0f);
    grad.assign(total, 0.0f);
  }
  size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

}  // namespace sctseg
