#include "sctseg/layers.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>

namespace sctseg {

int effective_groups(int channels, int requested) {
  if (channels <= 0) throw Error("effective_groups: channels must be positive");
  int g = std::min(channels, std::max(1, requested));
  while (channels % g != 0) --g;
  return g;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel)
    : in_c(in_channels), out_c(out_channels), ksize(kernel), pad(kernel / 2) {
  if (kernel != 1 && kernel != 3)
    throw Error("Conv2d " + name + ": unsupported kernel size " + std::to_string(kernel));
  weight.init(name + ".weight", {out_c, in_c * ksize * ksize});
  bias.init(name + ".bias", {out_c});
}

void Conv2d::init_he(Rng& rng) {
  const double stddev = std::sqrt(2.0 / (in_c * ksize * ksize));
  for (float& v : weight.value) v = static_cast<float>(rng.normal(0.0, stddev));
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

void Conv2d::im2col(const float* src, int h, int w, float* col) const {
  const size_t plane = static_cast<size_t>(h) * w;
  size_t row = 0;
  for (int ci = 0; ci < in_c; ++ci) {
    const float* chan = src + ci * plane;
    for (int ky = 0; ky < ksize; ++ky) {
      for (int kx = 0; kx < ksize; ++kx, ++row) {
        float* dst = col + row * plane;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::fill(dst + static_cast<size_t>(y) * w, dst + static_cast<size_t>(y + 1) * w,
                      0.0f);
            continue;
          }
          const float* srow = chan + static_cast<size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            dst[static_cast<size_t>(y) * w + x] = (sx >= 0 && sx < w) ? srow[sx] : 0.0f;
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, bool) {
  if (x.c != in_c)
    throw Error("Conv2d " + weight.name + ": expected " + std::to_string(in_c) +
                " input channels, got " + std::to_string(x.c));
  x_ = x;
  const int hw = x.h * x.w;
  const int krows = in_c * ksize * ksize;
  col_.resize(static_cast<size_t>(krows) * hw);
  Tensor y(x.n, out_c, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), x.h, x.w, col_.data());
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_c, hw, krows, 1.0f,
                weight.value.data(), krows, col_.data(), hw, 0.0f, y.sample(i), hw);
    float* ys = y.sample(i);
    for (int oc = 0; oc < out_c; ++oc) {
      const float b = bias.value[oc];
      float* row = ys + static_cast<size_t>(oc) * hw;
      for (int p = 0; p < hw; ++p) row[p] += b;
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  const int h = x_.h, w = x_.w, hw = h * w;
  const int krows = in_c * ksize * ksize;
  Tensor gx(x_.n, in_c, h, w);
  std::vector<float> gcol(static_cast<size_t>(krows) * hw);
  for (int i = 0; i < x_.n; ++i) {
    const float* gys = gy.sample(i);
    for (int oc = 0; oc < out_c; ++oc) {
      const float* row = gys + static_cast<size_t>(oc) * hw;
      double s = 0.0;
      for (int p = 0; p < hw; ++p) s += row[p];
      bias.grad[oc] += static_cast<float>(s);
    }
    im2col(x_.sample(i), h, w, col_.data());
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_c, krows, hw, 1.0f, gys, hw,
                col_.data(), hw, 1.0f, weight.grad.data(), krows);
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, krows, hw, out_c, 1.0f,
                weight.value.data(), krows, gys, hw, 0.0f, gcol.data(), hw);
    // col2im as a gather: every input pixel sums the kernel taps that read it.
    float* gxs = gx.sample(i);
    const size_t plane = static_cast<size_t>(hw);
    for (int ci = 0; ci < in_c; ++ci) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double acc = 0.0;
          for (int ky = 0; ky < ksize; ++ky) {
            const int oy = y + pad - ky;
            if (oy < 0 || oy >= h) continue;
            for (int kx = 0; kx < ksize; ++kx) {
              const int ox = x + pad - kx;
              if (ox < 0 || ox >= w) continue;
              const size_t row = (static_cast<size_t>(ci) * ksize + ky) * ksize + kx;
              acc += gcol[row * plane + static_cast<size_t>(oy) * w + ox];
            }
          }
          gxs[ci * plane + static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
        }
      }
    }
  }
  return gx;
}

// ------------------------------------------------------------- GroupNorm

GroupNorm::GroupNorm(const std::string& name, int channels_, int requested_groups)
    : channels(channels_), groups(effective_groups(channels_, requested_groups)) {
  gamma.init(name + ".gamma", {channels});
  beta.init(name + ".beta", {channels});
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0f);
}

Tensor GroupNorm::forward(const Tensor& x, bool) {
  if (x.c != channels)
    throw Error("GroupNorm " + gamma.name + ": expected " + std::to_string(channels) +
                " channels, got " + std::to_string(x.c));
  const int cpg = channels / groups;
  const size_t plane = x.plane();
  const size_t gsize = static_cast<size_t>(cpg) * plane;
  xhat_ = Tensor(x.n, x.c, x.h, x.w);
  inv_std_.assign(static_cast<size_t>(x.n) * groups, 0.0);
  Tensor y(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    const float* xs = x.sample(i);
    float* xh = xhat_.sample(i);
    float* ys = y.sample(i);
    for (int g = 0; g < groups; ++g) {
      const float* gx = xs + static_cast<size_t>(g) * gsize;
      double sum = 0.0, sq = 0.0;
      for (size_t p = 0; p < gsize; ++p) {
        sum += gx[p];
        sq += static_cast<double>(gx[p]) * gx[p];
      }
      const double mean = sum / static_cast<double>(gsize);
      const double var = sq / static_cast<double>(gsize) - mean * mean;
      const double istd = 1.0 / std::sqrt(std::max(var, 0.0) + eps);
      inv_std_[static_cast<size_t>(i) * groups + g] = istd;
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const float gm = gamma.value[ch], bt = beta.value[ch];
        const size_t off = static_cast<size_t>(ch) * plane;
        for (size_t p = 0; p < plane; ++p) {
          const double xn = (xs[off + p] - mean) * istd;
          xh[off + p] = static_cast<float>(xn);
          ys[off + p] = static_cast<float>(gm * xn + bt);
        }
      }
    }
  }
  return y;
}

Tensor GroupNorm::backward(const Tensor& gy) {
  const int cpg = channels / groups;
  const size_t plane = gy.plane();
  const size_t gsize = static_cast<size_t>(cpg) * plane;
  Tensor gx(gy.n, gy.c, gy.h, gy.w);
  for (int i = 0; i < gy.n; ++i) {
    const float* gys = gy.sample(i);
    const float* xh = xhat_.sample(i);
    float* gxs = gx.sample(i);
    for (int g = 0; g < groups; ++g) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const size_t off = static_cast<size_t>(ch) * plane;
        const double gm = gamma.value[ch];
        double dg = 0.0, db = 0.0;
        for (size_t p = 0; p < plane; ++p) {
          const double go = gys[off + p];
          dg += go * xh[off + p];
          db += go;
          sum_g += gm * go;
          sum_gx += gm * go * xh[off + p];
        }
        gamma.grad[ch] += static_cast<float>(dg);
        beta.grad[ch] += static_cast<float>(db);
      }
      const double istd = inv_std_[static_cast<size_t>(i) * groups + g];
      const double mg = sum_g / static_cast<double>(gsize);
      const double mgx = sum_gx / static_cast<double>(gsize);
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const size_t off = static_cast<size_t>(ch) * plane;
        const double gm = gamma.value[ch];
        for (size_t p = 0; p < plane; ++p) {
          const double go = gm * gys[off + p];
          gxs[off + p] = static_cast<float>(istd * (go - mg - xh[off + p] * mgx));
        }
      }
    }
  }
  return gx;
}

// ----------------------------------------------------------------- PReLU

PReLU::PReLU(const std::string& name, int channels_) : channels(channels_) {
  slope.init(name + ".slope", {channels});
  std::fill(slope.value.begin(), slope.value.end(), 0.25f);
}

Tensor PReLU::forward(const Tensor& x, bool) {
  x_ = x;
  const size_t plane = x.plane();
  Tensor y(x.n, x.c, x.h, x.w);
  for (int i = 0; i < x.n; ++i) {
    const float* xs = x.sample(i);
    float* ys = y.sample(i);
    for (int ch = 0; ch < x.c; ++ch) {
      const float a = slope.value[ch];
      const size_t off = static_cast<size_t>(ch) * plane;
      for (size_t p = 0; p < plane; ++p) {
        const float v = xs[off + p];
        ys[off + p] = v > 0.0f ? v : a * v;
      }
    }
  }
  return y;
}

Tensor PReLU::backward(const Tensor& gy) {
  const size_t plane = gy.plane();
  Tensor gx(gy.n, gy.c, gy.h, gy.w);
  for (int i = 0; i < gy.n; ++i) {
    const float* xs = x_.sample(i);
    const float* gys = gy.sample(i);
    float* gxs = gx.sample(i);
    for (int ch = 0; ch < gy.c; ++ch) {
      const float a = slope.value[ch];
      const size_t off = static_cast<size_t>(ch) * plane;
      double da = 0.0;
      for (size_t p = 0; p < plane; ++p) {
        const float v = xs[off + p];
        const float go = gys[off + p];
        if (v > 0.0f) {
          gxs[off + p] = go;
        } else {
          gxs[off + p] = a * go;
          da += static_cast<double>(go) * v;
        }
      }
      slope.grad[ch] += static_cast<float>(da);
    }
  }
  return gx;
}

// --------------------------------------------------------------- Dropout

Tensor Dropout::forward(const Tensor& x, bool train) {
  if (!train || rate <= 0.0) {
    identity_ = true;
    return x;
  }
  identity_ = false;
  const float scale = static_cast<float>(1.0 / (1.0 - rate));
  mask_.resize(x.size());
  Tensor y(x.n, x.c, x.h, x.w);
  for (size_t p = 0; p < x.size(); ++p) {
    mask_[p] = rng_.uniform() < rate ? 0.0f : scale;
    y.v[p] = x.v[p] * mask_[p];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& gy) {
  if (identity_) return gy;
  Tensor gx(gy.n, gy.c, gy.h, gy.w);
  for (size_t p = 0; p < gy.size(); ++p) gx.v[p] = gy.v[p] * mask_[p];
  return gx;
}

// -------------------------------------------------------------- MaxPool2

Tensor MaxPool2::forward(const Tensor& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0)
    throw Error("MaxPool2: spatial size " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                " is not even");
  in_h = x.h;
  in_w = x.w;
  n_ = x.n;
  c_ = x.c;
  const int oh = x.h / 2, ow = x.w / 2;
  Tensor y(x.n, x.c, oh, ow);
  arg_.assign(y.size(), 0);
  size_t out = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const float* plane = x.sample(i) + static_cast<size_t>(ch) * x.plane();
      for (int y0 = 0; y0 < oh; ++y0) {
        for (int x0 = 0; x0 < ow; ++x0, ++out) {
          int best = (2 * y0) * in_w + 2 * x0;
          float bv = plane[best];
          const int cand[3] = {(2 * y0) * in_w + 2 * x0 + 1, (2 * y0 + 1) * in_w + 2 * x0,
                               (2 * y0 + 1) * in_w + 2 * x0 + 1};
          for (int k = 0; k < 3; ++k) {
            if (plane[cand[k]] > bv) {
              bv = plane[cand[k]];
              best = cand[k];
            }
          }
          y.v[out] = bv;
          arg_[out] = best;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& gy) {
  Tensor gx(n_, c_, in_h, in_w);
  const size_t in_plane = static_cast<size_t>(in_h) * in_w;
  size_t out = 0;
  for (int i = 0; i < n_; ++i) {
    for (int ch = 0; ch < c_; ++ch) {
      float* plane = gx.sample(i) + static_cast<size_t>(ch) * in_plane;
      const size_t count = gy.plane();
      for (size_t p = 0; p < count; ++p, ++out) plane[arg_[out]] += gy.v[out];
    }
  }
  return gx;
}

// ------------------------------------------------------------- Upsample2

Tensor Upsample2::forward(const Tensor& x) {
  in_h = x.h;
  in_w = x.w;
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const float* src = x.sample(i) + static_cast<size_t>(ch) * x.plane();
      float* dst = y.sample(i) + static_cast<size_t>(ch) * y.plane();
      for (int yo = 0; yo < y.h; ++yo) {
        const float* srow = src + static_cast<size_t>(yo / 2) * in_w;
        float* drow = dst + static_cast<size_t>(yo) * y.w;
        for (int xo = 0; xo < y.w; ++xo) drow[xo] = srow[xo / 2];
      }
    }
  }
  return y;
}

Tensor Upsample2::backward(const Tensor& gy) {
  Tensor gx(gy.n, gy.c, in_h, in_w);
  for (int i = 0; i < gy.n; ++i) {
    for (int ch = 0; ch < gy.c; ++ch) {
      const float* src = gy.sample(i) + static_cast<size_t>(ch) * gy.plane();
      float* dst = gx.sample(i) + static_cast<size_t>(ch) * gx.plane();
      for (int yo = 0; yo < gy.h; ++yo) {
        const float* srow = src + static_cast<size_t>(yo) * gy.w;
        float* drow = dst + static_cast<size_t>(yo / 2) * in_w;
        for (int xo = 0; xo < gy.w; ++xo) drow[xo / 2] += srow[xo];
      }
    }
  }
  return gx;
}

// ------------------------------------------------------------- ConvBlock

ConvBlock::ConvBlock(const std::string& name, int in_channels, int out_channels, int norm_groups,
                     double dropout_rate)
    : conv1(name + ".conv1", in_channels, out_channels, 3),
      conv2(name + ".conv2", out_channels, out_channels, 3),
      gn1(name + ".gn1", out_channels, norm_groups),
      gn2(name + ".gn2", out_channels, norm_groups),
      act1(name + ".act1", out_channels),
      act2(name + ".act2", out_channels),
      drop(dropout_rate) {}

void ConvBlock::init(Rng& rng, uint64_t dropout_seed) {
  conv1.init_he(rng);
  conv2.init_he(rng);
  drop.seed(dropout_seed);
}

Tensor ConvBlock::forward(const Tensor& x, bool train) {
  Tensor t = act1.forward(gn1.forward(conv1.forward(x, train), train), train);
  t = act2.forward(gn2.forward(conv2.forward(t, train), train), train);
  return drop.forward(t, train);
}

Tensor ConvBlock::backward(const Tensor& gy) {
  Tensor g = drop.backward(gy);
  g = conv2.backward(gn2.backward(act2.backward(g)));
  return conv1.backward(gn1.backward(act1.backward(g)));
}

void ConvBlock::collect(std::vector<Param*>& out) {
  conv1.collect(out);
  gn1.collect(out);
  act1.collect(out);
  conv2.collect(out);
  gn2.collect(out);
  act2.collect(out);
}

// --------------------------------------------------------------- UpBlock

UpBlock::UpBlock(const std::string& name, int in_channels, int out_channels, int norm_groups)
    : conv(name + ".conv", in_channels, out_channels, 3),
      gn(name + ".gn", out_channels, norm_groups),
      act(name + ".act", out_channels) {}

void UpBlock::init(Rng& rng) { conv.init_he(rng); }

Tensor UpBlock::forward(const Tensor& x, bool train) {
  return act.forward(gn.forward(conv.forward(up.forward(x), train), train), train);
}

Tensor UpBlock::backward(const Tensor& gy) {
  return up.backward(conv.backward(gn.backward(act.backward(gy))));
}

void UpBlock::collect(std::vector<Param*>& out) {
  conv.collect(out);
  gn.collect(out);
  act.collect(out);
}

}  // namespace sctseg
