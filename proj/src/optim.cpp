#include "sctseg/optim.hpp"

#include <cmath>

#include "sctseg/common.hpp"

namespace sctseg {

Adam::Adam(std::vector<Param*> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(p->size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (size_t j = 0; j < p->size(); ++j) {
      const double g = p->grad[j];
      const double mj = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g;
      const double vj = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      p->value[j] -= static_cast<float>(opt_.lr * (mj / bc1) / (std::sqrt(vj / bc2) + opt_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void Adam::store(Checkpoint& ck, const std::string& prefix) const {
  for (size_t i = 0; i < params_.size(); ++i) {
    ck.tensors[prefix + "m/" + params_[i]->name] = m_[i];
    ck.tensors[prefix + "v/" + params_[i]->name] = v_[i];
  }
  ck.scalars[prefix + "t"] = static_cast<double>(t_);
}

void Adam::restore(const Checkpoint& ck, const std::string& prefix) {
  for (size_t i = 0; i < params_.size(); ++i) {
    const auto mi = ck.tensors.find(prefix + "m/" + params_[i]->name);
    const auto vi = ck.tensors.find(prefix + "v/" + params_[i]->name);
    if (mi == ck.tensors.end() || vi == ck.tensors.end())
      throw Error("checkpoint: missing optimizer state for '" + params_[i]->name + "'");
    if (mi->second.size() != params_[i]->size() || vi->second.size() != params_[i]->size())
      throw Error("checkpoint: optimizer state size mismatch for '" + params_[i]->name + "'");
    m_[i] = mi->second;
    v_[i] = vi->second;
  }
  const auto ti = ck.scalars.find(prefix + "t");
  if (ti == ck.scalars.end()) throw Error("checkpoint: missing optimizer step counter");
  t_ = static_cast<int64_t>(ti->second);
}

}  // namespace sctseg
