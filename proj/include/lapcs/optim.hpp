#pragma once

#include <span>

#include "lapcs/autograd.hpp"

namespace lapcs {

struct SgdOptions {
  double lr = 1e-6;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// Classical SGD with momentum; weight decay enters as an L2 term on the
// gradient before the momentum update:
//   buf <- momentum * buf + (grad + weight_decay * value)
//   value <- value - lr * buf
// Throws StateError if a parameter has no gradient.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& opts);

template <typename T>
void zero_grad(std::span<Parameter<T>* const> params);

}  // namespace lapcs
