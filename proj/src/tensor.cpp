#include "lapcs/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace lapcs {

std::size_t product(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Dims& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

namespace {
void check_extents(const Dims& dims) {
  if (dims.empty()) throw ShapeError("tensor must have at least one dimension");
  for (auto d : dims)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(dims));
}
}  // namespace

template <typename T>
Tensor<T>::Tensor(Dims dims, T fill) : dims_(std::move(dims)) {
  check_extents(dims_);
  data_.assign(product(dims_), fill);
}

template <typename T>
Tensor<T>::Tensor(Dims dims, std::vector<T> values)
    : dims_(std::move(dims)), data_(std::move(values)) {
  check_extents(dims_);
  if (data_.size() != product(dims_))
    throw ShapeError("value count " + std::to_string(data_.size()) +
                     " does not match dims " + to_string(dims_));
}

template <typename T>
Tensor<T> Tensor<T>::reshape(Dims dims) const {
  if (product(dims) != data_.size())
    throw ShapeError("cannot reshape " + to_string(dims_) + " to " + to_string(dims));
  return Tensor(std::move(dims), data_);
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

void require_rank4(const Dims& dims, const char* what) {
  if (dims.size() != 4)
    throw ShapeError(std::string(what) + " must be 4-D, got " + to_string(dims));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace lapcs
