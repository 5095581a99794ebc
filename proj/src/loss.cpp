#include "sctseg/loss.hpp"

#include <algorithm>
#include <cmath>

#include "sctseg/common.hpp"

namespace sctseg {

namespace {

constexpr double kLogFloor = 1e-12;

double safe_log(double p) { return std::log(std::max(p, kLogFloor)); }

void check_targets(const std::vector<uint8_t>& targets, const Tensor& logits) {
  const size_t expect = static_cast<size_t>(logits.n) * logits.plane();
  if (targets.size() != expect)
    throw Error("loss: " + std::to_string(targets.size()) + " targets for " +
                std::to_string(expect) + " pixels");
  const size_t plane = logits.plane();
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < logits.c) continue;
    const size_t in_sample = i % plane;
    throw Error("loss: target class " + std::to_string(int(targets[i])) + " out of range at sample " +
                std::to_string(i / plane) + " pixel (" + std::to_string(in_sample / logits.w) +
                ", " + std::to_string(in_sample % logits.w) + "), num_classes " +
                std::to_string(logits.c));
  }
}

}  // namespace

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "label_smoothing") return LossKind::label_smoothing;
  if (s == "bootstrap_soft") return LossKind::bootstrap_soft;
  if (s == "focal") return LossKind::focal;
  if (s == "generalized_ce") return LossKind::generalized_ce;
  if (s == "symmetric_ce") return LossKind::symmetric_ce;
  throw ConfigError("loss: unknown kind '" + s + "'");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::label_smoothing: return "label_smoothing";
    case LossKind::bootstrap_soft: return "bootstrap_soft";
    case LossKind::focal: return "focal";
    case LossKind::generalized_ce: return "generalized_ce";
    case LossKind::symmetric_ce: return "symmetric_ce";
  }
  throw Error("loss: bad kind value");
}

void validate_loss_options(const LossOptions& opt) {
  if (opt.smoothing_epsilon < 0.0 || opt.smoothing_epsilon >= 1.0)
    throw ConfigError("loss: smoothing_epsilon must be in [0, 1)");
  if (opt.bootstrap_beta <= 0.0 || opt.bootstrap_beta > 1.0)
    throw ConfigError("loss: bootstrap_beta must be in (0, 1]");
  if (opt.focal_gamma < 0.0) throw ConfigError("loss: focal_gamma must be non-negative");
  if (opt.gce_r <= 0.0 || opt.gce_r > 1.0) throw ConfigError("loss: gce_r must be in (0, 1]");
  if (opt.sce_alpha < 0.0 || opt.sce_beta < 0.0)
    throw ConfigError("loss: symmetric CE weights must be non-negative");
  if (opt.sce_log_zero >= 0.0) throw ConfigError("loss: sce_log_zero must be negative");
}

std::vector<double> softmax_double(const Tensor& logits) {
  std::vector<double> probs(logits.size());
  const size_t plane = logits.plane();
  for (int i = 0; i < logits.n; ++i) {
    const float* zs = logits.sample(i);
    double* ps = probs.data() + static_cast<size_t>(i) * logits.sample_size();
    for (size_t p = 0; p < plane; ++p) {
      double mx = zs[p];
      for (int k = 1; k < logits.c; ++k) mx = std::max(mx, (double)zs[k * plane + p]);
      double denom = 0.0;
      for (int k = 0; k < logits.c; ++k) {
        const double e = std::exp((double)zs[k * plane + p] - mx);
        ps[k * plane + p] = e;
        denom += e;
      }
      for (int k = 0; k < logits.c; ++k) ps[k * plane + p] /= denom;
    }
  }
  return probs;
}

Tensor one_hot(const std::vector<uint8_t>& targets, int n, int num_classes, int h, int w) {
  const size_t plane = static_cast<size_t>(h) * w;
  if (targets.size() != static_cast<size_t>(n) * plane)
    throw Error("one_hot: " + std::to_string(targets.size()) + " targets for " +
                std::to_string(n * plane) + " pixels");
  Tensor out(n, num_classes, h, w);
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= num_classes) {
      const size_t in_sample = i % plane;
      throw Error("one_hot: class " + std::to_string(int(targets[i])) + " out of range at sample " +
                  std::to_string(i / plane) + " pixel (" + std::to_string(in_sample / w) + ", " +
                  std::to_string(in_sample % w) + "), num_classes " +
                  std::to_string(num_classes));
    }
    const size_t sample = i / plane, in_sample = i % plane;
    out.v[(sample * num_classes + targets[i]) * plane + in_sample] = 1.0f;
  }
  return out;
}

LossResult supervised_loss(const Tensor& logits, const std::vector<uint8_t>& targets,
                           const LossOptions& opt) {
  validate_loss_options(opt);
  check_targets(targets, logits);
  const std::vector<double> probs = softmax_double(logits);
  const size_t plane = logits.plane();
  const int K = logits.c;
  const double M = static_cast<double>(targets.size());

  LossResult res;
  res.dlogits = Tensor(logits.n, logits.c, logits.h, logits.w);
  res.active_pixels = targets.size();
  double total = 0.0;
  std::vector<double> grad(K);

  for (int i = 0; i < logits.n; ++i) {
    const double* ps = probs.data() + static_cast<size_t>(i) * logits.sample_size();
    float* gs = res.dlogits.sample(i);
    for (size_t p = 0; p < plane; ++p) {
      const int t = targets[static_cast<size_t>(i) * plane + p];
      const double pt = ps[static_cast<size_t>(t) * plane + p];
      switch (opt.kind) {
        case LossKind::cross_entropy: {
          total += -safe_log(pt);
          for (int k = 0; k < K; ++k)
            grad[k] = ps[static_cast<size_t>(k) * plane + p] - (k == t ? 1.0 : 0.0);
          break;
        }
        case LossKind::label_smoothing: {
          const double eps = opt.smoothing_epsilon;
          double l = 0.0;
          for (int k = 0; k < K; ++k) {
            const double q = (k == t ? 1.0 - eps : 0.0) + eps / K;
            const double pk = ps[static_cast<size_t>(k) * plane + p];
            l += -q * safe_log(pk);
            grad[k] = pk - q;
          }
          total += l;
          break;
        }
        case LossKind::bootstrap_soft: {
          // Target is beta * one_hot + (1 - beta) * p; the gradient keeps
          // the dependence of the soft part on the logits.
          const double beta = opt.bootstrap_beta;
          double plogp = 0.0;
          for (int k = 0; k < K; ++k) {
            const double pk = ps[static_cast<size_t>(k) * plane + p];
            plogp += pk * safe_log(pk);
          }
          total += -beta * safe_log(pt) - (1.0 - beta) * plogp;
          for (int k = 0; k < K; ++k) {
            const double pk = ps[static_cast<size_t>(k) * plane + p];
            grad[k] = beta * (pk - (k == t ? 1.0 : 0.0)) -
                      (1.0 - beta) * pk * (safe_log(pk) - plogp);
          }
          break;
        }
        case LossKind::focal: {
          const double g = opt.focal_gamma;
          const double one_m = 1.0 - pt;
          total += -std::pow(std::max(one_m, 0.0), g) * safe_log(pt);
          double factor;
          if (one_m < kLogFloor) {
            factor = 0.0;  // loss is flat at p_t == 1
          } else {
            factor = g * pt * std::pow(one_m, g - 1.0) * safe_log(pt) - std::pow(one_m, g);
          }
          for (int k = 0; k < K; ++k) {
            const double pk = ps[static_cast<size_t>(k) * plane + p];
            grad[k] = factor * ((k == t ? 1.0 : 0.0) - pk);
          }
          break;
        }
        case LossKind::generalized_ce: {
          const double r = opt.gce_r;
          const double pc = std::max(pt, kLogFloor);
          total += (1.0 - std::pow(pc, r)) / r;
          const double ptr = std::pow(pc, r);
          for (int k = 0; k < K; ++k) {
            const double pk = ps[static_cast<size_t>(k) * plane + p];
            grad[k] = ptr * (pk - (k == t ? 1.0 : 0.0));
          }
          break;
        }
        case LossKind::symmetric_ce: {
          const double A = opt.sce_log_zero;
          total += opt.sce_alpha * -safe_log(pt) + opt.sce_beta * (-A) * (1.0 - pt);
          const double coeff = opt.sce_alpha - opt.sce_beta * A * pt;
          for (int k = 0; k < K; ++k) {
            const double pk = ps[static_cast<size_t>(k) * plane + p];
            grad[k] = coeff * (pk - (k == t ? 1.0 : 0.0));
          }
          break;
        }
      }
      for (int k = 0; k < K; ++k)
        gs[static_cast<size_t>(k) * plane + p] = static_cast<float>(grad[k] / M);
    }
  }
  res.value = total / M;
  return res;
}

LossResult masked_cross_entropy(const Tensor& logits, const std::vector<uint8_t>& targets,
                                const std::vector<uint8_t>& mask) {
  check_targets(targets, logits);
  if (mask.size() != targets.size())
    throw Error("loss: mask has " + std::to_string(mask.size()) + " entries for " +
                std::to_string(targets.size()) + " pixels");

  size_t active = 0;
  for (uint8_t m : mask) active += m != 0;

  LossResult res;
  res.dlogits = Tensor(logits.n, logits.c, logits.h, logits.w);
  res.active_pixels = active;
  if (active == 0) {
    res.empty_mask = true;
    return res;
  }

  const std::vector<double> probs = softmax_double(logits);
  const size_t plane = logits.plane();
  const double denom = static_cast<double>(active);
  double total = 0.0;
  for (int i = 0; i < logits.n; ++i) {
    const double* ps = probs.data() + static_cast<size_t>(i) * logits.sample_size();
    float* gs = res.dlogits.sample(i);
    for (size_t p = 0; p < plane; ++p) {
      if (mask[static_cast<size_t>(i) * plane + p] == 0) continue;
      const int t = targets[static_cast<size_t>(i) * plane + p];
      total += -safe_log(ps[static_cast<size_t>(t) * plane + p]);
      for (int k = 0; k < logits.c; ++k) {
        const double pk = ps[static_cast<size_t>(k) * plane + p];
        gs[static_cast<size_t>(k) * plane + p] =
            static_cast<float>((pk - (k == t ? 1.0 : 0.0)) / denom);
      }
    }
  }
  res.value = total / denom;
  return res;
}

}  // namespace sctseg
