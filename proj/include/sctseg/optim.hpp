#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sctseg/model.hpp"
#include "sctseg/tensor.hpp"

namespace sctseg {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Param*> params, AdamOptions opt);

  void step();
  void zero_grad();
  int64_t steps() const { return t_; }

  void store(Checkpoint& ck, const std::string& prefix) const;
  void restore(const Checkpoint& ck, const std::string& prefix);

 private:
  std::vector<Param*> params_;
  AdamOptions opt_;
  std::vector<std::vector<float>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace sctseg
