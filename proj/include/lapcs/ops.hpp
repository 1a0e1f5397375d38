#pragma once

#include "lapcs/autograd.hpp"

namespace lapcs {

// Cross-correlation over N x Ci x H x W input with Co x Ci x kh x kw weights.
// Output extent is floor((H + 2*pad - kh) / stride) + 1, zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              std::size_t stride = 1, std::size_t pad = 0);

// Same as above without a bias term.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, std::size_t stride = 1,
              std::size_t pad = 0);

// 2x upsampling with a Ci x Co x 4 x 4 kernel, stride 2, padding 1: the
// adjoint of conv2d(k=4, stride=2, pad=1) using the same weight tensor.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> leaky_relu(const Var<T>& input, T slope = T(0.2));

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

template <typename T>
Var<T> sum(const Var<T>& a);

// Sum over all elements of sqrt((pred - target)^2 + eps^2).
template <typename T>
Var<T> charbonnier(const Var<T>& pred, const Var<T>& target, T eps = T(1e-3));

namespace detail {

// Unfolds a C x H x W image into a (C*kh*kw) x (Ho*Wo) matrix.
template <typename T>
void im2col(const T* image, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            std::size_t out_h, std::size_t out_w, T* col);

// Adjoint of im2col: accumulates the column matrix back into the image.
template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            std::size_t out_h, std::size_t out_w, T* image);

}  // namespace detail

}  // namespace lapcs
