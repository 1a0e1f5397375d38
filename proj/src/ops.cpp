#include "lapcs/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace lapcs {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_same_dims(const Dims& a, const Dims& b, const char* op) {
  if (a != b)
    throw ShapeError(std::string(op) + ": dims " + to_string(a) + " and " + to_string(b) +
                     " differ");
}

}  // namespace

namespace detail {

template <typename T>
void im2col(const T* image, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            std::size_t out_h, std::size_t out_w, T* col) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = image + c * height * width;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* dst = col + ((c * kh + ki) * kw + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                          static_cast<std::ptrdiff_t>(pad);
          T* row = dst + oy * out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(row, row + out_w, T(0));
            continue;
          }
          const T* src_row = src + static_cast<std::size_t>(iy) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) -
                            static_cast<std::ptrdiff_t>(pad);
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width))
                          ? T(0)
                          : src_row[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
            std::size_t out_h, std::size_t out_w, T* image) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    T* dst = image + c * height * width;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* src = col + ((c * kh + ki) * kw + kj) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                          static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          T* dst_row = dst + static_cast<std::size_t>(iy) * width;
          const T* row = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kj) -
                            static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
            dst_row[static_cast<std::size_t>(ix)] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

namespace {

struct ConvGeometry {
  std::size_t n, ci, h, w, co, kh, kw, stride, pad, oh, ow;
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
ConvGeometry conv_geometry(const Var<T>& input, const Var<T>& weight, const Var<T>* bias,
                           std::size_t stride, std::size_t pad) {
  require_rank4(input.dims(), "conv2d input");
  require_rank4(weight.dims(), "conv2d weight");
  if (stride == 0) throw ArgumentError("conv2d: stride must be positive");
  const auto& x = input.dims();
  const auto& k = weight.dims();
  if (x[1] != k[1])
    throw ShapeError("conv2d: input has " + std::to_string(x[1]) +
                     " channels but weight expects " + std::to_string(k[1]));
  if (bias && bias->value().size() != k[0])
    throw ShapeError("conv2d: bias length " + std::to_string(bias->value().size()) +
                     " does not match " + std::to_string(k[0]) + " output channels");
  if (x[2] + 2 * pad < k[2] || x[3] + 2 * pad < k[3])
    throw ShapeError("conv2d: kernel " + to_string(k) + " larger than padded input " +
                     to_string(x));
  ConvGeometry g{x[0], x[1], x[2], x[3], k[0], k[2], k[3], stride, pad, 0, 0};
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

template <typename T>
Var<T> conv2d_impl(const Var<T>& input, const Var<T>& weight, const Var<T>* bias,
                   std::size_t stride, std::size_t pad) {
  const ConvGeometry g = conv_geometry(input, weight, bias, stride, pad);
  const std::size_t kdim = g.ci * g.kh * g.kw;
  const std::size_t plane = g.oh * g.ow;
  Tensor<T> out({g.n, g.co, g.oh, g.ow});
  std::vector<T> col(g.pointwise() ? 0 : kdim * plane);
  ConstMatMap<T> wmat(weight.value().data(), g.co, kdim);
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* src = input.value().data() + n * g.ci * g.h * g.w;
    if (!g.pointwise())
      detail::im2col(src, g.ci, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.oh, g.ow, col.data());
    ConstMatMap<T> cmat(g.pointwise() ? src : col.data(), kdim, plane);
    MatMap<T> omat(out.data() + n * g.co * plane, g.co, plane);
    omat.noalias() = wmat * cmat;
    if (bias)
      for (std::size_t c = 0; c < g.co; ++c) omat.row(c).array() += bias->value()[c];
  }

  std::vector<Var<T>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return Var<T>::make_result(std::move(out), std::move(inputs), [g, has_bias](Node<T>& node) {
    Node<T>& x = *node.inputs[0];
    Node<T>& w = *node.inputs[1];
    const std::size_t kdim = g.ci * g.kh * g.kw;
    const std::size_t plane = g.oh * g.ow;
    std::vector<T> col(g.pointwise() ? 0 : kdim * plane);
    std::vector<T> dcol(x.requires_grad && !g.pointwise() ? kdim * plane : 0);
    ConstMatMap<T> wmat(w.value.data(), g.co, kdim);
    for (std::size_t n = 0; n < g.n; ++n) {
      ConstMatMap<T> gout(node.grad.data() + n * g.co * plane, g.co, plane);
      const T* src = x.value.data() + n * g.ci * g.h * g.w;
      if (w.requires_grad) {
        if (!g.pointwise())
          detail::im2col(src, g.ci, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.oh, g.ow,
                         col.data());
        ConstMatMap<T> cmat(g.pointwise() ? src : col.data(), kdim, plane);
        MatMap<T> dw(w.grad_buffer().data(), g.co, kdim);
        dw.noalias() += gout * cmat.transpose();
      }
      if (has_bias && node.inputs[2]->requires_grad) {
        T* db = node.inputs[2]->grad_buffer().data();
        const T* gp = node.grad.data() + n * g.co * plane;
        for (std::size_t c = 0; c < g.co; ++c) {
          T acc = T(0);
          for (std::size_t i = 0; i < plane; ++i) acc += gp[c * plane + i];
          db[c] += acc;
        }
      }
      if (x.requires_grad) {
        T* dx = x.grad_buffer().data() + n * g.ci * g.h * g.w;
        if (g.pointwise()) {
          MatMap<T> dxm(dx, kdim, plane);
          dxm.noalias() += wmat.transpose() * gout;
        } else {
          MatMap<T> dc(dcol.data(), kdim, plane);
          dc.noalias() = wmat.transpose() * gout;
          detail::col2im(dcol.data(), g.ci, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.oh, g.ow,
                         dx);
        }
      }
    }
  });
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias,
              std::size_t stride, std::size_t pad) {
  return conv2d_impl(input, weight, &bias, stride, pad);
}

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, std::size_t stride, std::size_t pad) {
  return conv2d_impl<T>(input, weight, nullptr, stride, pad);
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  constexpr std::size_t k = 4, stride = 2, pad = 1;
  require_rank4(input.dims(), "conv_transpose2d input");
  require_rank4(weight.dims(), "conv_transpose2d weight");
  const auto& xd = input.dims();
  const auto& wd = weight.dims();
  if (wd[2] != k || wd[3] != k)
    throw ArgumentError("conv_transpose2d: kernel must be 4x4, got " + to_string(wd));
  if (xd[1] != wd[0])
    throw ShapeError("conv_transpose2d: input has " + std::to_string(xd[1]) +
                     " channels but weight expects " + std::to_string(wd[0]));
  if (bias.value().size() != wd[1])
    throw ShapeError("conv_transpose2d: bias length does not match output channels");

  const std::size_t n_batch = xd[0], ci = xd[1], h = xd[2], w = xd[3];
  const std::size_t co = wd[1], oh = 2 * h, ow = 2 * w;
  const std::size_t kdim = co * k * k, plane = h * w;
  Tensor<T> out({n_batch, co, oh, ow});
  std::vector<T> col(kdim * plane);
  ConstMatMap<T> wmat(weight.value().data(), ci, kdim);
  for (std::size_t n = 0; n < n_batch; ++n) {
    ConstMatMap<T> xm(input.value().data() + n * ci * plane, ci, plane);
    MatMap<T> cm(col.data(), kdim, plane);
    cm.noalias() = wmat.transpose() * xm;
    T* dst = out.data() + n * co * oh * ow;
    detail::col2im(col.data(), co, oh, ow, k, k, stride, pad, h, w, dst);
    for (std::size_t c = 0; c < co; ++c) {
      const T b = bias.value()[c];
      std::for_each(dst + c * oh * ow, dst + (c + 1) * oh * ow, [b](T& v) { v += b; });
    }
  }

  return Var<T>::make_result(
      std::move(out), {input, weight, bias},
      [n_batch, ci, h, w, co](Node<T>& node) {
        const std::size_t oh = 2 * h, ow = 2 * w;
        const std::size_t kdim = co * k * k, plane = h * w;
        Node<T>& x = *node.inputs[0];
        Node<T>& wt = *node.inputs[1];
        Node<T>& b = *node.inputs[2];
        std::vector<T> gcol(kdim * plane);
        ConstMatMap<T> wmat(wt.value.data(), ci, kdim);
        for (std::size_t n = 0; n < n_batch; ++n) {
          const T* gout = node.grad.data() + n * co * oh * ow;
          detail::im2col(gout, co, oh, ow, k, k, stride, pad, h, w, gcol.data());
          ConstMatMap<T> gc(gcol.data(), kdim, plane);
          if (x.requires_grad) {
            MatMap<T> dx(x.grad_buffer().data() + n * ci * plane, ci, plane);
            dx.noalias() += wmat * gc;
          }
          if (wt.requires_grad) {
            ConstMatMap<T> xm(x.value.data() + n * ci * plane, ci, plane);
            MatMap<T> dw(wt.grad_buffer().data(), ci, kdim);
            dw.noalias() += xm * gc.transpose();
          }
          if (b.requires_grad) {
            T* db = b.grad_buffer().data();
            for (std::size_t c = 0; c < co; ++c) {
              T acc = T(0);
              for (std::size_t i = 0; i < oh * ow; ++i) acc += gout[c * oh * ow + i];
              db[c] += acc;
            }
          }
        }
      });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& input, T slope) {
  Tensor<T> out = input.value();
  for (auto& v : out.values())
    if (v < T(0)) v *= slope;
  return Var<T>::make_result(std::move(out), {input}, [slope](Node<T>& node) {
    Node<T>& x = *node.inputs[0];
    auto& dx = x.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i)
      dx[i] += x.value[i] >= T(0) ? node.grad[i] : slope * node.grad[i];
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_dims(a.dims(), b.dims(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return Var<T>::make_result(std::move(out), {a, b}, [](Node<T>& node) {
    for (auto& in : node.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += node.grad[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return Var<T>::make_result(std::move(out), {a}, [factor](Node<T>& node) {
    auto& g = node.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * node.grad[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double acc = 0.0;
  for (T v : a.value().values()) acc += static_cast<double>(v);
  return Var<T>::make_result(Tensor<T>::scalar(static_cast<T>(acc)), {a}, [](Node<T>& node) {
    auto& g = node.inputs[0]->grad_buffer();
    const T up = node.grad[0];
    for (auto& v : g.values()) v += up;
  });
}

template <typename T>
Var<T> charbonnier(const Var<T>& pred, const Var<T>& target, T eps) {
  require_same_dims(pred.dims(), target.dims(), "charbonnier");
  const double eps2 = static_cast<double>(eps) * static_cast<double>(eps);
  double acc = 0.0;
  const auto& p = pred.value();
  const auto& t = target.value();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += std::sqrt(d * d + eps2);
  }
  return Var<T>::make_result(
      Tensor<T>::scalar(static_cast<T>(acc)), {pred, target}, [eps2](Node<T>& node) {
        Node<T>& p = *node.inputs[0];
        Node<T>& t = *node.inputs[1];
        const double up = static_cast<double>(node.grad[0]);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
          const double d = static_cast<double>(p.value[i]) - static_cast<double>(t.value[i]);
          const T g = static_cast<T>(up * d / std::sqrt(d * d + eps2));
          if (p.requires_grad) p.grad_buffer()[i] += g;
          if (t.requires_grad) t.grad_buffer()[i] -= g;
        }
      });
}

#define LAPCS_INSTANTIATE_OPS(T)                                                               \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t,            \
                         std::size_t);                                                         \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, std::size_t, std::size_t);             \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&);              \
  template Var<T> leaky_relu(const Var<T>&, T);                                                \
  template Var<T> add(const Var<T>&, const Var<T>&);                                           \
  template Var<T> scale(const Var<T>&, T);                                                     \
  template Var<T> sum(const Var<T>&);                                                          \
  template Var<T> charbonnier(const Var<T>&, const Var<T>&, T);                                \
  template void detail::im2col(const T*, std::size_t, std::size_t, std::size_t, std::size_t,  \
                               std::size_t, std::size_t, std::size_t, std::size_t,            \
                               std::size_t, T*);                                               \
  template void detail::col2im(const T*, std::size_t, std::size_t, std::size_t, std::size_t,  \
                               std::size_t, std::size_t, std::size_t, std::size_t,            \
                               std::size_t, T*);

LAPCS_INSTANTIATE_OPS(float)
LAPCS_INSTANTIATE_OPS(double)

}  // namespace lapcs
