// Copyright 2026 The LesionAid Authors
// SPDX-License-Identifier: Apache-2.0

#include "lesionaid/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

namespace lesionaid {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using NodeT = Node<T>;

template <typename T>
bool wants_grad(const std::shared_ptr<NodeT<T>>& p) {
  return p && p->requires_grad;
}

// Broadcast result shape; throws when incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each element of `out`, the flat offset of the element of `in` it reads.
std::vector<std::size_t> broadcast_offsets(const Shape& out, const Shape& in) {
  const std::size_t r = out.size();
  std::vector<std::size_t> in_stride(r, 0);
  std::size_t stride = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t oi = i + (r - in.size());
    in_stride[oi] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  const std::size_t n = numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < n; ++k) {
    offsets[k] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += in_stride[d];
      if (idx[d] < out[d]) break;
      off -= in_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return offsets;
}

enum class BinOp { kAdd, kSub, kMul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinOp op) {
  const Shape out_shape = a.shape() == b.shape() ? a.shape() : broadcast_shape(a.shape(), b.shape());
  const std::size_t n = numel(out_shape);
  auto ao = std::make_shared<std::vector<std::size_t>>();
  auto bo = std::make_shared<std::vector<std::size_t>>();
  const bool a_direct = a.shape() == out_shape;
  const bool b_direct = b.shape() == out_shape;
  if (!a_direct) *ao = broadcast_offsets(out_shape, a.shape());
  if (!b_direct) *bo = broadcast_offsets(out_shape, b.shape());
  auto ai = [&](std::size_t k) { return a_direct ? k : (*ao)[k]; };
  auto bi = [&](std::size_t k) { return b_direct ? k : (*bo)[k]; };
  const auto av = a.data();
  const auto bv = b.data();
  Buffer<T> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const T x = av[ai(k)];
    const T y = bv[bi(k)];
    out[k] = op == BinOp::kAdd ? x + y : op == BinOp::kSub ? x - y : x * y;
  }
  return Tensor<T>::make_result(
      out_shape, std::move(out), {a, b},
      [op, ao, bo, a_direct, b_direct](NodeT<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const std::size_t n = self.grad.size();
        if (wants_grad<T>(pa)) {
          auto& ga = pa->grad_buffer();
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t ia = a_direct ? k : (*ao)[k];
            const T g = self.grad[k];
            ga[ia] += op == BinOp::kMul ? g * pb->value[b_direct ? k : (*bo)[k]] : g;
          }
        }
        if (wants_grad<T>(pb)) {
          auto& gb = pb->grad_buffer();
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t ib = b_direct ? k : (*bo)[k];
            const T g = self.grad[k];
            gb[ib] += op == BinOp::kAdd   ? g
                      : op == BinOp::kSub ? -g
                                          : g * pa->value[a_direct ? k : (*ao)[k]];
          }
        }
      });
}

// Elementwise unary map with derivative expressed through (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D dfdx) {
  const auto xv = x.data();
  Buffer<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [dfdx](NodeT<T>& self) {
    auto& p = self.parents[0];
    if (!wants_grad<T>(p)) return;
    auto& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p->value[i], self.value[i]);
  });
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
};

// cols[(c*k + ki)*k + kj, oy*out_w + ox] = img[c, oy*s - p + ki, ox*s - p + kj]
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const std::size_t hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long xx = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            const bool inside = y >= 0 && xx >= 0 && y < static_cast<long>(g.height) &&
                                xx < static_cast<long>(g.width);
            row[oy * g.out_w + ox] = inside ? img[(c * g.height + y) * g.width + xx] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the image.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* img) {
  const std::size_t hw = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * hw;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.height)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long xx = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (xx < 0 || xx >= static_cast<long>(g.width)) continue;
            img[(c * g.height + y) * g.width + xx] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const Shape& xs, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError("convolution stride must be >= 1");
  const std::size_t ph = xs[2] + 2 * pad;
  const std::size_t pw = xs[3] + 2 * pad;
  if (kernel > ph || kernel > pw) {
    throw ShapeError("kernel " + std::to_string(kernel) + " does not fit padded input " + to_string(xs));
  }
  if ((ph - kernel) % stride != 0 || (pw - kernel) % stride != 0) {
    throw ShapeError("non-integral convolution output size for input " + to_string(xs) + ", kernel " +
                     std::to_string(kernel) + ", stride " + std::to_string(stride) + ", pad " +
                     std::to_string(pad));
  }
  return {xs[1], xs[2], xs[3], kernel, stride, pad, (ph - kernel) / stride + 1, (pw - kernel) / stride + 1};
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const long a = axis < 0 ? static_cast<long>(rank) + axis : axis;
  if (a < 0 || a >= static_cast<long>(rank)) throw ShapeError("axis out of range");
  return static_cast<std::size_t>(a);
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::kAdd);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::kSub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::kMul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  return unary(a, [value](T x) { return x + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul dimension mismatch: " + to_string(a.shape()) + " . " + to_string(b.shape()));
  }
  return linear(a, b);
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw ShapeError("linear dimension mismatch: " + to_string(x.shape()) + " . " + to_string(w.shape()));
  }
  const std::size_t k = w.dim(0), n = w.dim(1), m = x.numel() / k;
  if (bias.defined() && (bias.numel() != n)) {
    throw ShapeError("linear bias " + to_string(bias.shape()) + " does not match output width " +
                     std::to_string(n));
  }
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Buffer<T> out(m * n);
  MatMap<T> O(out.data(), m, n);
  O.noalias() = ConstMatMap<T>(x.data().data(), m, k) * ConstMatMap<T>(w.data().data(), k, n);
  if (bias.defined()) {
    O.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), n);
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), std::move(inputs),
                                [m, k, n](NodeT<T>& self) {
                                  ConstMatMap<T> G(self.grad.data(), m, n);
                                  auto& px = self.parents[0];
                                  auto& pw = self.parents[1];
                                  if (wants_grad<T>(px)) {
                                    MatMap<T>(px->grad_buffer().data(), m, k).noalias() +=
                                        G * ConstMatMap<T>(pw->value.data(), k, n).transpose();
                                  }
                                  if (wants_grad<T>(pw)) {
                                    MatMap<T>(pw->grad_buffer().data(), k, n).noalias() +=
                                        ConstMatMap<T>(px->value.data(), m, k).transpose() * G;
                                  }
                                  if (self.parents.size() > 2 && wants_grad<T>(self.parents[2])) {
                                    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(
                                        self.parents[2]->grad_buffer().data(), n) += G.colwise().sum();
                                  }
                                });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) ||
      a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
    throw ShapeError("bmm dimension mismatch: " + to_string(a.shape()) + " . " + to_string(b.shape()) +
                     (transpose_b ? "^T" : ""));
  }
  const std::size_t groups = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  Buffer<T> out(groups * m * n);
  const T* av = a.data().data();
  const T* bv = b.data().data();
  for (std::size_t g = 0; g < groups; ++g) {
    MatMap<T> O(out.data() + g * m * n, m, n);
    ConstMatMap<T> A(av + g * m * k, m, k);
    if (transpose_b) {
      O.noalias() = A * ConstMatMap<T>(bv + g * n * k, n, k).transpose();
    } else {
      O.noalias() = A * ConstMatMap<T>(bv + g * k * n, k, n);
    }
  }
  return Tensor<T>::make_result(
      {groups, m, n}, std::move(out), {a, b}, [groups, m, k, n, transpose_b](NodeT<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        for (std::size_t g = 0; g < groups; ++g) {
          ConstMatMap<T> G(self.grad.data() + g * m * n, m, n);
          if (wants_grad<T>(pa)) {
            MatMap<T> GA(pa->grad_buffer().data() + g * m * k, m, k);
            if (transpose_b) {
              GA.noalias() += G * ConstMatMap<T>(pb->value.data() + g * n * k, n, k);
            } else {
              GA.noalias() += G * ConstMatMap<T>(pb->value.data() + g * k * n, k, n).transpose();
            }
          }
          if (wants_grad<T>(pb)) {
            ConstMatMap<T> A(pa->value.data() + g * m * k, m, k);
            if (transpose_b) {
              MatMap<T>(pb->grad_buffer().data() + g * n * k, n, k).noalias() += G.transpose() * A;
            } else {
              MatMap<T>(pb->grad_buffer().data() + g * k * n, k, n).noalias() += A.transpose() * G;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + to_string(a.shape()) + " to " + to_string(shape));
  }
  Buffer<T> out(a.data().begin(), a.data().end());
  return Tensor<T>::make_result(std::move(shape), std::move(out), {a}, [](NodeT<T>& self) {
    auto& p = self.parents[0];
    if (!wants_grad<T>(p)) return;
    auto& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes) {
  const std::size_t r = a.rank();
  if (axes.size() != r) throw ShapeError("permute axes do not match rank of " + to_string(a.shape()));
  std::vector<bool> used(r, false);
  for (auto ax : axes) {
    if (ax >= r || used[ax]) throw ShapeError("invalid permutation for " + to_string(a.shape()));
    used[ax] = true;
  }
  std::vector<std::size_t> in_stride(r);
  std::size_t s = 1;
  for (std::size_t i = r; i-- > 0;) {
    in_stride[i] = s;
    s *= a.dim(i);
  }
  Shape out_shape(r);
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = a.dim(axes[i]);
    step[i] = in_stride[axes[i]];
  }
  auto src = std::make_shared<std::vector<std::size_t>>(a.numel());
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t k = 0; k < src->size(); ++k) {
      (*src)[k] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += step[d];
        if (idx[d] < out_shape[d]) break;
        off -= step[d] * idx[d];
        idx[d] = 0;
      }
    }
  }
  const auto av = a.data();
  Buffer<T> out(av.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = av[(*src)[k]];
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {a}, [src](NodeT<T>& self) {
    auto& p = self.parents[0];
    if (!wants_grad<T>(p)) return;
    auto& g = p->grad_buffer();
    for (std::size_t k = 0; k < self.grad.size(); ++k) g[(*src)[k]] += self.grad[k];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat axis out of range");
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    if (p.rank() != ref.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < ref.size(); ++d) {
      if (d != axis && p.dim(d) != ref[d]) {
        throw ShapeError("concat shape mismatch: " + to_string(ref) + " vs " + to_string(p.shape()));
      }
    }
    lens.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
  for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
  Shape out_shape = ref;
  out_shape[axis] = total;
  Buffer<T> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto pv = parts[i].data();
    const std::size_t chunk = lens[i] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * chunk, chunk, out.data() + o * total * inner + offset);
    }
    offset += chunk;
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), parts,
                                [lens, outer, inner, total](NodeT<T>& self) {
                                  std::size_t offset = 0;
                                  for (std::size_t i = 0; i < lens.size(); ++i) {
                                    auto& p = self.parents[i];
                                    const std::size_t chunk = lens[i] * inner;
                                    if (wants_grad<T>(p)) {
                                      auto& g = p->grad_buffer();
                                      for (std::size_t o = 0; o < outer; ++o) {
                                        const T* src = self.grad.data() + o * total * inner + offset;
                                        for (std::size_t j = 0; j < chunk; ++j) g[o * chunk + j] += src[j];
                                      }
                                    }
                                    offset += chunk;
                                  }
                                });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || length == 0 || start + length > a.dim(axis)) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                     std::to_string(axis) + " out of range for " + to_string(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t full = a.dim(axis);
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  Buffer<T> out(outer * length * inner);
  const auto av = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.data() + (o * full + start) * inner, length * inner, out.data() + o * length * inner);
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {a},
                                [outer, inner, full, start, length](NodeT<T>& self) {
                                  auto& p = self.parents[0];
                                  if (!wants_grad<T>(p)) return;
                                  auto& g = p->grad_buffer();
                                  for (std::size_t o = 0; o < outer; ++o) {
                                    const T* src = self.grad.data() + o * length * inner;
                                    T* dst = g.data() + (o * full + start) * inner;
                                    for (std::size_t j = 0; j < length * inner; ++j) dst[j] += src[j];
                                  }
                                });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis_arg) {
  const std::size_t axis = normalize_axis(axis_arg, x.rank());
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const std::size_t n = x.dim(axis);
  const auto xv = x.data();
  Buffer<T> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = xv[base];
      for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
    }
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [outer, inner, n](NodeT<T>& self) {
    auto& p = self.parents[0];
    if (!wants_grad<T>(p)) return;
    auto& g = p->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = base + j * inner;
          g[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const auto xv = x.data();
  Buffer<T> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * n;
    const T mx = *std::max_element(row, row + n);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = row[j] - lse;
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [rows, n](NodeT<T>& self) {
    auto& p = self.parents[0];
    if (!wants_grad<T>(p)) return;
    auto& g = p->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T gsum = 0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t i = r * n + j;
        g[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
      }
    }
  });
}

namespace {

// Row standardization shared by layer_norm and standardize. Returns xhat and
// the per-row reciprocal standard deviation.
template <typename T>
void standardize_rows(std::span<const T> x, std::size_t d, T eps, Buffer<T>& xhat, Buffer<T>& rstd) {
  const std::size_t rows = x.size() / d;
  xhat.resize(x.size());
  rstd.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) xhat[r * d + j] = (row[j] - mu) * rs;
  }
}

// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)), per row.
template <typename T>
void standardize_backward(const Buffer<T>& dxhat, const Buffer<T>& xhat, const Buffer<T>& rstd,
                          std::size_t d, Buffer<T>& gx) {
  const std::size_t rows = rstd.size();
  for (std::size_t r = 0; r < rows; ++r) {
    T m1 = 0, m2 = 0;
    for (std::size_t j = 0; j < d; ++j) {
      m1 += dxhat[r * d + j];
      m2 += dxhat[r * d + j] * xhat[r * d + j];
    }
    m1 /= static_cast<T>(d);
    m2 /= static_cast<T>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      gx[i] += rstd[r] * (dxhat[i] - m1 - xhat[i] * m2);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t d = x.shape().back();
  if (d < 2) throw ShapeError("layer_norm needs a feature dimension of at least 2");
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm affine parameters do not match feature dimension " + std::to_string(d));
  }
  auto xhat = std::make_shared<Buffer<T>>();
  auto rstd = std::make_shared<Buffer<T>>();
  standardize_rows(x.data(), d, eps, *xhat, *rstd);
  Buffer<T> out(xhat->size());
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gv[i % d] * (*xhat)[i] + bv[i % d];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x, gamma, beta}, [xhat, rstd, d](NodeT<T>& self) {
    auto& px = self.parents[0];
    auto& pg = self.parents[1];
    auto& pb = self.parents[2];
    const std::size_t n = self.grad.size();
    if (wants_grad<T>(pg)) {
      auto& gg = pg->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gg[i % d] += self.grad[i] * (*xhat)[i];
    }
    if (wants_grad<T>(pb)) {
      auto& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gb[i % d] += self.grad[i];
    }
    if (wants_grad<T>(px)) {
      Buffer<T> dxhat(n);
      for (std::size_t i = 0; i < n; ++i) dxhat[i] = self.grad[i] * pg->value[i % d];
      standardize_backward(dxhat, *xhat, *rstd, d, px->grad_buffer());
    }
  });
}

template <typename T>
Tensor<T> standardize(const Tensor<T>& x, T eps) {
  const std::size_t d = x.shape().back();
  if (d < 2) throw ShapeError("standardize needs a feature dimension of at least 2");
  auto rstd = std::make_shared<Buffer<T>>();
  Buffer<T> xhat;
  standardize_rows(x.data(), d, eps, xhat, *rstd);
  return Tensor<T>::make_result(x.shape(), std::move(xhat), {x}, [rstd, d](NodeT<T>& self) {
    auto& px = self.parents[0];
    if (wants_grad<T>(px)) standardize_backward(self.grad, self.value, *rstd, d, px->grad_buffer());
  });
}

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T a = static_cast<T>(0.044715);
  return unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v))); },
      [](T v, T) {
        const T t = std::tanh(c * (v + a * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * c * (T(1) + T(3) * a * v * v);
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  switch (kind) {
    case Activation::kGelu: return gelu(x);
    case Activation::kRelu: return relu(x);
    case Activation::kLeakyRelu: return leaky_relu(x, T(0.2));
    case Activation::kTanh: return tanh(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  throw ConfigError("unknown activation kind");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv2d shape mismatch: input " + to_string(x.shape()) + ", kernel " + to_string(w.shape()));
  }
  const ConvGeometry g = conv_geometry(x.shape(), w.dim(2), stride, pad);
  const std::size_t batch = x.dim(0), filters = w.dim(0);
  const std::size_t ckk = g.channels * g.kernel * g.kernel, hw = g.out_h * g.out_w;
  const std::size_t in_size = g.channels * g.height * g.width;
  if (bias.defined() && bias.numel() != filters) throw ShapeError("conv2d bias size mismatch");
  auto cols = std::make_shared<Buffer<T>>(batch * ckk * hw);
  Buffer<T> out(batch * filters * hw);
  ConstMatMap<T> W(w.data().data(), filters, ckk);
  for (std::size_t b = 0; b < batch; ++b) {
    T* cb = cols->data() + b * ckk * hw;
    im2col(x.data().data() + b * in_size, g, cb);
    MatMap<T> O(out.data() + b * filters * hw, filters, hw);
    O.noalias() = W * ConstMatMap<T>(cb, ckk, hw);
    if (bias.defined()) {
      for (std::size_t f = 0; f < filters; ++f) O.row(f).array() += bias.data()[f];
    }
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::make_result(
      {batch, filters, g.out_h, g.out_w}, std::move(out), std::move(inputs),
      [g, cols, batch, filters, ckk, hw, in_size](NodeT<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        Buffer<T> dcols(ckk * hw);
        for (std::size_t b = 0; b < batch; ++b) {
          ConstMatMap<T> G(self.grad.data() + b * filters * hw, filters, hw);
          ConstMatMap<T> C(cols->data() + b * ckk * hw, ckk, hw);
          if (wants_grad<T>(pw)) MatMap<T>(pw->grad_buffer().data(), filters, ckk).noalias() += G * C.transpose();
          if (wants_grad<T>(px)) {
            MatMap<T>(dcols.data(), ckk, hw).noalias() =
                ConstMatMap<T>(pw->value.data(), filters, ckk).transpose() * G;
            col2im(dcols.data(), g, px->grad_buffer().data() + b * in_size);
          }
          if (self.parents.size() > 2 && wants_grad<T>(self.parents[2])) {
            auto& gb = self.parents[2]->grad_buffer();
            for (std::size_t f = 0; f < filters; ++f) gb[f] += G.row(f).sum();
          }
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride,
                           std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(0) != x.dim(1) || w.dim(2) != w.dim(3)) {
    throw ShapeError("conv_transpose2d shape mismatch: input " + to_string(x.shape()) + ", kernel " +
                     to_string(w.shape()));
  }
  if (stride == 0) throw ShapeError("convolution stride must be >= 1");
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(1), k = w.dim(2);
  const long oh = static_cast<long>((h - 1) * stride + k) - 2 * static_cast<long>(pad);
  const long ow = static_cast<long>((wd - 1) * stride + k) - 2 * static_cast<long>(pad);
  if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d produces an empty output");
  // The adjoint convolution maps the [cout, oh, ow] output back onto [cin, h, w].
  const ConvGeometry g{cout, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), k, stride, pad, h, wd};
  if (bias.defined() && bias.numel() != cout) throw ShapeError("conv_transpose2d bias size mismatch");
  const std::size_t ckk = cout * k * k, hw = h * wd, out_size = cout * g.height * g.width;
  Buffer<T> out(batch * out_size, T(0));
  Buffer<T> cols(ckk * hw);
  ConstMatMap<T> W(w.data().data(), cin, ckk);
  for (std::size_t b = 0; b < batch; ++b) {
    MatMap<T>(cols.data(), ckk, hw).noalias() =
        W.transpose() * ConstMatMap<T>(x.data().data() + b * cin * hw, cin, hw);
    T* ob = out.data() + b * out_size;
    col2im(cols.data(), g, ob);
    if (bias.defined()) {
      const std::size_t plane = g.height * g.width;
      for (std::size_t c = 0; c < cout; ++c) {
        for (std::size_t i = 0; i < plane; ++i) ob[c * plane + i] += bias.data()[c];
      }
    }
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::make_result(
      {batch, cout, g.height, g.width}, std::move(out), std::move(inputs),
      [g, batch, cin, ckk, hw, out_size](NodeT<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        Buffer<T> gcols(ckk * hw);
        for (std::size_t b = 0; b < batch; ++b) {
          im2col(self.grad.data() + b * out_size, g, gcols.data());
          ConstMatMap<T> GC(gcols.data(), ckk, hw);
          if (wants_grad<T>(px)) {
            MatMap<T>(px->grad_buffer().data() + b * cin * hw, cin, hw).noalias() +=
                ConstMatMap<T>(pw->value.data(), cin, ckk) * GC;
          }
          if (wants_grad<T>(pw)) {
            MatMap<T>(pw->grad_buffer().data(), cin, ckk).noalias() +=
                ConstMatMap<T>(px->value.data() + b * cin * hw, cin, hw) * GC.transpose();
          }
          if (self.parents.size() > 2 && wants_grad<T>(self.parents[2])) {
            auto& gb = self.parents[2]->grad_buffer();
            const std::size_t plane = g.height * g.width;
            const T* gb_src = self.grad.data() + b * out_size;
            for (std::size_t c = 0; c < g.channels; ++c) {
              T s = 0;
              for (std::size_t i = 0; i < plane; ++i) s += gb_src[c * plane + i];
              gb[c] += s;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       BatchNormStats<T>& stats, bool training, T momentum, T eps) {
  if (x.rank() != 4) throw ShapeError("batch_norm2d expects NCHW input, got " + to_string(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (gamma.numel() != channels || beta.numel() != channels) throw ShapeError("batch_norm2d parameter size mismatch");
  if (stats.running_mean.size() != channels) {
    stats.running_mean.assign(channels, T(0));
    stats.running_var.assign(channels, T(1));
  }
  const std::size_t count = batch * plane;
  auto xhat = std::make_shared<Buffer<T>>(x.numel());
  auto rstd = std::make_shared<Buffer<T>>(channels);
  const auto xv = x.data();
  for (std::size_t c = 0; c < channels; ++c) {
    T mu, var;
    if (training) {
      mu = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < plane; ++i) mu += xv[(b * channels + c) * plane + i];
      mu /= static_cast<T>(count);
      var = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = xv[(b * channels + c) * plane + i] - mu;
          var += d * d;
        }
      var /= static_cast<T>(count);
      const T unbiased = count > 1 ? var * static_cast<T>(count) / static_cast<T>(count - 1) : var;
      stats.running_mean[c] = (T(1) - momentum) * stats.running_mean[c] + momentum * mu;
      stats.running_var[c] = (T(1) - momentum) * stats.running_var[c] + momentum * unbiased;
    } else {
      mu = stats.running_mean[c];
      var = stats.running_var[c];
    }
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[c] = rs;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = (b * channels + c) * plane + i;
        (*xhat)[k] = (xv[k] - mu) * rs;
      }
  }
  Buffer<T> out(x.numel());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t c = (k / plane) % channels;
    out[k] = gamma.data()[c] * (*xhat)[k] + beta.data()[c];
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xhat, rstd, batch, channels, plane, count, training](NodeT<T>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        for (std::size_t c = 0; c < channels; ++c) {
          T sg = 0, sgx = 0;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t k = (b * channels + c) * plane + i;
              sg += self.grad[k];
              sgx += self.grad[k] * (*xhat)[k];
            }
          if (wants_grad<T>(pg)) pg->grad_buffer()[c] += sgx;
          if (wants_grad<T>(pb)) pb->grad_buffer()[c] += sg;
          if (!wants_grad<T>(px)) continue;
          auto& gx = px->grad_buffer();
          const T gam = pg->value[c];
          const T rs = (*rstd)[c];
          const T m1 = gam * sg / static_cast<T>(count);
          const T m2 = gam * sgx / static_cast<T>(count);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t k = (b * channels + c) * plane + i;
              const T dxhat = self.grad[k] * gam;
              gx[k] += training ? rs * (dxhat - m1 - (*xhat)[k] * m2) : rs * dxhat;
            }
        }
      });
}

template <typename T>
Tensor<T> sq_dist(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw ShapeError("sq_dist shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const std::size_t groups = a.dim(0), n = a.dim(1), m = b.dim(1), d = a.dim(2);
  const auto av = a.data();
  const auto bv = b.data();
  Buffer<T> out(groups * n * m);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t i = 0; i < n; ++i) {
      const T* ai = av.data() + (g * n + i) * d;
      for (std::size_t j = 0; j < m; ++j) {
        const T* bj = bv.data() + (g * m + j) * d;
        T s = 0;
        for (std::size_t t = 0; t < d; ++t) {
          const T diff = ai[t] - bj[t];
          s += diff * diff;
        }
        out[(g * n + i) * m + j] = s;
      }
    }
  return Tensor<T>::make_result({groups, n, m}, std::move(out), {a, b}, [groups, n, m, d](NodeT<T>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const bool ga_on = wants_grad<T>(pa), gb_on = wants_grad<T>(pb);
    Buffer<T> ga_local(ga_on ? pa->value.size() : 0, T(0));
    Buffer<T> gb_local(gb_on ? pb->value.size() : 0, T(0));
    for (std::size_t g = 0; g < groups; ++g)
      for (std::size_t i = 0; i < n; ++i) {
        const T* ai = pa->value.data() + (g * n + i) * d;
        for (std::size_t j = 0; j < m; ++j) {
          const T gij = T(2) * self.grad[(g * n + i) * m + j];
          if (gij == T(0)) continue;
          const T* bj = pb->value.data() + (g * m + j) * d;
          for (std::size_t t = 0; t < d; ++t) {
            const T diff = gij * (ai[t] - bj[t]);
            if (ga_on) ga_local[(g * n + i) * d + t] += diff;
            if (gb_on) gb_local[(g * m + j) * d + t] -= diff;
          }
        }
      }
    // Accumulate after reading both inputs, since a and b may alias.
    if (ga_on) {
      auto& ga = pa->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ga_local[i];
    }
    if (gb_on) {
      auto& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gb_local[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return Tensor<T>::make_result({1}, {s}, {x}, [](NodeT<T>& self) {
    auto& p = self.parents[0];
    if (!wants_grad<T>(p)) return;
    for (auto& g : p->grad_buffer()) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy expects logits [B,C] with B labels, got " + to_string(logits.shape()));
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  auto probs = std::make_shared<Buffer<T>>(logits.numel());
  auto lab = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  T loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) throw ShapeError("cross_entropy label out of range");
    const T* row = logits.data().data() + b * classes;
    const T mx = *std::max_element(row, row + classes);
    T total = 0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < classes; ++c) (*probs)[b * classes + c] = std::exp(row[c] - mx) / total;
    loss += mx + std::log(total) - row[y];
  }
  loss /= static_cast<T>(batch);
  return Tensor<T>::make_result({1}, {loss}, {logits}, [probs, lab, batch, classes](NodeT<T>& self) {
    auto& p = self.parents[0];
    if (!wants_grad<T>(p)) return;
    auto& g = p->grad_buffer();
    const T s = self.grad[0] / static_cast<T>(batch);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < classes; ++c) {
        const T onehot = static_cast<int>(c) == (*lab)[b] ? T(1) : T(0);
        g[b * classes + c] += s * ((*probs)[b * classes + c] - onehot);
      }
  });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, std::span<const T> targets) {
  if (logits.numel() != targets.size()) throw ShapeError("bce_with_logits target count mismatch");
  auto tgt = std::make_shared<Buffer<T>>(targets.begin(), targets.end());
  const std::size_t n = targets.size();
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits.data()[i];
    loss += std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<T>(n);
  return Tensor<T>::make_result({1}, {loss}, {logits}, [tgt, n](NodeT<T>& self) {
    auto& p = self.parents[0];
    if (!wants_grad<T>(p)) return;
    auto& g = p->grad_buffer();
    const T s = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T x = p->value[i];
      const T sig = x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
      g[i] += s * (sig - (*tgt)[i]);
    }
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, Rng& rng) {
  if (p <= T(0)) return x;
  if (p >= T(1)) throw ConfigError("dropout rate must be < 1");
  auto mask = std::make_shared<Buffer<T>>(x.numel());
  const T keep = T(1) / (T(1) - p);
  for (auto& m : *mask) m = rng.uniform() < static_cast<double>(p) ? T(0) : keep;
  Buffer<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * (*mask)[i];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [mask](NodeT<T>& self) {
    auto& px = self.parents[0];
    if (!wants_grad<T>(px)) return;
    auto& g = px->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

#define LESIONAID_INSTANTIATE_OPS(T)                                                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> scale(const Tensor<T>&, T);                                                         \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                                    \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                   \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                        \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                 \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                     \
  template Tensor<T> softmax(const Tensor<T>&, int);                                                     \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                      \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                \
  template Tensor<T> standardize(const Tensor<T>&, T);                                                   \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                           \
  template Tensor<T> gelu(const Tensor<T>&);                                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                             \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                    \
  template Tensor<T> tanh(const Tensor<T>&);                                                             \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,     \
                                      std::size_t);                                                      \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormStats<T>&,  \
                                  bool, T, T);                                                           \
  template Tensor<T> sq_dist(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> sum(const Tensor<T>&);                                                              \
  template Tensor<T> mean(const Tensor<T>&);                                                             \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                              \
  template Tensor<T> bce_with_logits(const Tensor<T>&, std::span<const T>);                              \
  template Tensor<T> dropout(const Tensor<T>&, T, Rng&);

LESIONAID_INSTANTIATE_OPS(float)
LESIONAID_INSTANTIATE_OPS(double)

}  // namespace lesionaid
