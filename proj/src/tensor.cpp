#include "sctseg/tensor.hpp"

namespace sctseg {

std::string Tensor::shape_str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

}  // namespace sctseg
