#include "pixprop/tensor.hpp"

#include <stdexcept>

namespace pixprop {

Tensor::Tensor(int c, int h, int w, double fill) : channels(c), height(h), width(w) {
  if (c < 0 || h < 0 || w < 0) throw std::invalid_argument("negative tensor dimension");
  data.assign(static_cast<size_t>(c) * h * w, fill);
}

}  // namespace pixprop
