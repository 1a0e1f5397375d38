#include "lapcs/optim.hpp"

namespace lapcs {

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& opts) {
  for (const auto* p : params)
    if (!p->var().has_grad())
      throw StateError("sgd_step: parameter '" + p->name() + "' has no gradient");
  const T lr = static_cast<T>(opts.lr);
  const T mu = static_cast<T>(opts.momentum);
  const T wd = static_cast<T>(opts.weight_decay);
  for (auto* p : params) {
    auto& value = p->mutable_value();
    auto& buf = p->mutable_momentum();
    const auto& grad = p->var().grad();
    for (std::size_t i = 0; i < value.size(); ++i) {
      buf[i] = mu * buf[i] + (grad[i] + wd * value[i]);
      value[i] -= lr * buf[i];
    }
  }
}

template <typename T>
void zero_grad(std::span<Parameter<T>* const> params) {
  for (auto* p : params) p->var().zero_grad();
}

template void sgd_step(std::span<Parameter<float>* const>, const SgdOptions&);
template void sgd_step(std::span<Parameter<double>* const>, const SgdOptions&);
template void zero_grad(std::span<Parameter<float>* const>);
template void zero_grad(std::span<Parameter<double>* const>);

}  // namespace lapcs
