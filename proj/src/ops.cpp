#include "eurnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace eurnet {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

void require_matrix(const Shape& s, const char* what) {
  if (s.size() != 2) throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_str(s));
}

// out[m×n] += a[m×k] · b[k×n]
template <typename T>
void gemm_acc(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, 16, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      T* orow = out + i * n;
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        if (av == T(0)) continue;
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
}

// out[m×k] += g[m×n] · b[k×n]ᵀ
template <typename T>
void gemm_acc_bt(const T* g, const T* b, T* out, std::size_t m, std::size_t n, std::size_t k) {
  parallel_for(m, 16, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const T* grow = g + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n;
        T acc = T(0);
        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
        out[i * k + p] += acc;
      }
    }
  });
}

// out[k×n] += a[m×k]ᵀ · g[m×n]
template <typename T>
void gemm_acc_at(const T* a, const T* g, T* out, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(k, 16, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* grow = g + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const T av = a[i * k + p];
        if (av == T(0)) continue;
        T* orow = out + p * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
      }
    }
  });
}

enum class Broadcast { kNone, kRow };

template <typename T>
Broadcast check_elementwise(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.dim() == 2 && b.dim() == 2 && b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw DimensionError(std::string(what) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

template <typename T>
Tensor<T> add_impl(const Tensor<T>& a, const Tensor<T>& b, const char* kind, T sign) {
  const Broadcast mode = check_elementwise(a, b, kind);
  const std::size_t n = a.size();
  const std::size_t width = mode == Broadcast::kRow ? b.size() : n;
  std::vector<T> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] + sign * bv[i % width];
  count_flops(kind, n);
  NodePtr<T> an = a.node(), bn = b.node();
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                [an, bn, width, sign](TensorNode<T>& self) {
    if (an->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i % width] += sign * self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> unary(const Tensor<T>& a, const char* kind, T (*fwd)(T), T (*deriv)(T)) {
  std::vector<T> out(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  count_flops(kind, out.size());
  NodePtr<T> an = a.node();
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [an, deriv](TensorNode<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * deriv(an->data[i]);
  });
}

template <typename T>
T relu_f(T x) { return x > T(0) ? x : T(0); }
template <typename T>
T relu_d(T x) { return x > T(0) ? T(1) : T(0); }

template <typename T>
T gelu_f(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}
template <typename T>
T gelu_d(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

template <typename T>
T sigmoid_f(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}
template <typename T>
T sigmoid_d(T x) {
  const T s = sigmoid_f(x);
  return s * (T(1) - s);
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a.shape(), "matmul");
  require_matrix(b.shape(), "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  count_flops(op_kind::kMatmul, 2ULL * m * n * k);
  NodePtr<T> an = a.node(), bn = b.node();
  return Tensor<T>::make_result({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode<T>& self) {
    if (an->requires_grad) gemm_acc_bt(self.grad.data(), bn->data.data(), an->grad.data(), m, n, k);
    if (bn->requires_grad) gemm_acc_at(an->data.data(), self.grad.data(), bn->grad.data(), m, k, n);
  });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  const Broadcast mode = check_elementwise(a, b, "hadamard");
  const std::size_t n = a.size();
  const std::size_t width = mode == Broadcast::kRow ? b.size() : n;
  std::vector<T> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * bv[i % width];
  count_flops(op_kind::kHadamard, n);
  NodePtr<T> an = a.node(), bn = b.node();
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [an, bn, width](TensorNode<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (an->requires_grad) an->grad[i] += self.grad[i] * bn->data[i % width];
      if (bn->requires_grad) bn->grad[i % width] += self.grad[i] * an->data[i];
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return add_impl(a, b, op_kind::kAdd, T(1));
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  return add_impl(a, bias, op_kind::kBiasAdd, T(1));
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add_impl(a, b, op_kind::kAdd, T(-1));
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values());
  for (auto& v : out) v *= factor;
  count_flops(op_kind::kScale, out.size());
  NodePtr<T> an = a.node();
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [an, factor](TensorNode<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += factor * self.grad[i];
  });
}

template <typename T>
Tensor<T> outer(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dim() != 2 || a.cols() != 1 || b.dim() != 2 || b.rows() != 1) {
    throw DimensionError("outer: expected [m x 1] and [1 x n], got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), n = b.cols();
  std::vector<T> out(m * n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i] * bv[j];
  count_flops(op_kind::kOuter, m * n);
  NodePtr<T> an = a.node(), bn = b.node();
  return Tensor<T>::make_result({m, n}, std::move(out), {a, b}, [an, bn, m, n](TensorNode<T>& self) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T g = self.grad[i * n + j];
        if (an->requires_grad) an->grad[i] += g * bn->data[j];
        if (bn->requires_grad) bn->grad[j] += g * an->data[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (const T v : a.values()) total += v;
  count_flops(op_kind::kReduce, a.size());
  NodePtr<T> an = a.node();
  return Tensor<T>::make_result({1}, {total}, {a}, [an](TensorNode<T>& self) {
    for (auto& g : an->grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.size() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> sum_rows(const Tensor<T>& a) {
  require_matrix(a.shape(), "sum_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(n, T(0));
  const auto& av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  count_flops(op_kind::kReduce, m * n);
  NodePtr<T> an = a.node();
  return Tensor<T>::make_result({1, n}, std::move(out), {a}, [an, m, n](TensorNode<T>& self) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += self.grad[j];
  });
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  require_matrix(a.shape(), "mean_rows");
  if (a.rows() == 0) throw ContractError("mean_rows of empty matrix");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(n, T(0));
  const auto& av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  const T inv = T(1) / static_cast<T>(m);
  for (auto& v : out) v *= inv;
  count_flops(op_kind::kReduce, m * n + n);
  NodePtr<T> an = a.node();
  return Tensor<T>::make_result({1, n}, std::move(out), {a}, [an, m, n, inv](TensorNode<T>& self) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += inv * self.grad[j];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  NodePtr<T> an = a.node();
  return Tensor<T>::make_result(std::move(shape), a.values(), {a}, [an](TensorNode<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  require_matrix(a.shape(), "slice_rows");
  if (begin + count > a.rows()) throw DimensionError("slice_rows: range out of bounds");
  const std::size_t n = a.cols();
  std::vector<T> out(a.values().begin() + begin * n, a.values().begin() + (begin + count) * n);
  NodePtr<T> an = a.node();
  return Tensor<T>::make_result({count, n}, std::move(out), {a}, [an, begin, n](TensorNode<T>& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[begin * n + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  require_matrix(a.shape(), "slice_cols");
  if (begin + count > a.cols()) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<T> out(m * count);
  const auto& av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(av.begin() + i * n + begin, count, out.begin() + i * count);
  NodePtr<T> an = a.node();
  return Tensor<T>::make_result({m, count}, std::move(out), {a},
                                [an, m, n, begin, count](TensorNode<T>& self) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) an->grad[i * n + begin + j] += self.grad[i * count + j];
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  std::vector<T> out;
  std::vector<NodePtr<T>> nodes;
  for (const auto& p : parts) {
    if (p.cols() != n) throw DimensionError("concat_rows: column counts differ");
    m += p.rows();
    out.insert(out.end(), p.values().begin(), p.values().end());
    nodes.push_back(p.node());
  }
  return Tensor<T>::make_result({m, n}, std::move(out), parts, [nodes](TensorNode<T>& self) {
    std::size_t offset = 0;
    for (const auto& pn : nodes) {
      if (pn->requires_grad) {
        for (std::size_t i = 0; i < pn->data.size(); ++i) pn->grad[i] += self.grad[offset + i];
      }
      offset += pn->data.size();
    }
  });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  std::vector<NodePtr<T>> nodes;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ");
    n += p.cols();
    nodes.push_back(p.node());
    widths.push_back(p.cols());
  }
  std::vector<T> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(p.values().begin() + i * w, w, out.begin() + i * n + col);
    col += w;
  }
  return Tensor<T>::make_result({m, n}, std::move(out), parts, [nodes, widths, m, n](TensorNode<T>& self) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const std::size_t w = widths[k];
      if (nodes[k]->requires_grad) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) nodes[k]->grad[i * w + j] += self.grad[i * n + c + j];
      }
      c += w;
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> index) {
  require_matrix(a.shape(), "gather_rows");
  const std::size_t n = a.cols();
  std::vector<T> out(index.size() * n);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= a.rows()) throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(a.values().begin() + index[i] * n, n, out.begin() + i * n);
  }
  NodePtr<T> an = a.node();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return Tensor<T>::make_result({idx.size(), n}, std::move(out), {a}, [an, idx, n](TensorNode<T>& self) {
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) an->grad[idx[i] * n + j] += self.grad[i * n + j];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary<T>(a, op_kind::kActivation, &relu_f<T>, &relu_d<T>);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  return unary<T>(a, op_kind::kActivation, &gelu_f<T>, &gelu_d<T>);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary<T>(a, op_kind::kActivation, &sigmoid_f<T>, &sigmoid_d<T>);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_matrix(a.shape(), "layer_norm");
  const std::size_t m = a.rows(), n = a.cols();
  if (gamma.size() != n || beta.size() != n) throw DimensionError("layer_norm: affine size mismatch");
  std::vector<T> out(m * n), xhat(m * n), inv_std(m);
  const auto& av = a.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::size_t i = 0; i < m; ++i) {
    T mu = T(0);
    for (std::size_t j = 0; j < n; ++j) mu += av[i * n + j];
    mu /= static_cast<T>(n);
    T var = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      const T d = av[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(n);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (av[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
    }
  }
  count_flops(op_kind::kNorm, 5ULL * m * n);
  NodePtr<T> an = a.node(), gn = gamma.node(), bn = beta.node();
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, gamma, beta},
                                [an, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), m,
                                 n](TensorNode<T>& self) {
    const auto& g = self.grad;
    if (gn->requires_grad || bn->requires_grad) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          if (gn->requires_grad) gn->grad[j] += g[i * n + j] * xhat[i * n + j];
          if (bn->requires_grad) bn->grad[j] += g[i * n + j];
        }
    }
    if (!an->requires_grad) return;
    for (std::size_t i = 0; i < m; ++i) {
      T sum_dx = T(0), sum_dx_x = T(0);
      for (std::size_t j = 0; j < n; ++j) {
        const T dxhat = g[i * n + j] * gn->data[j];
        sum_dx += dxhat;
        sum_dx_x += dxhat * xhat[i * n + j];
      }
      const T nn = static_cast<T>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const T dxhat = g[i * n + j] * gn->data[j];
        an->grad[i * n + j] += inv_std[i] / nn * (nn * dxhat - sum_dx - xhat[i * n + j] * sum_dx_x);
      }
    }
  });
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernels) {
  if (x.dim() != 3 || kernels.dim() != 3) throw DimensionError("depthwise_conv2d: expected rank-3 tensors");
  const std::size_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  const std::size_t k = kernels.shape()[0];
  if (kernels.shape()[1] != k) throw DimensionError("depthwise_conv2d: kernel must be square");
  if (k % 2 == 0) throw ConfigError("depthwise_conv2d: kernel size must be odd");
  if (kernels.shape()[2] != c) throw DimensionError("depthwise_conv2d: channel mismatch");
  const long half = static_cast<long>(k / 2);
  const auto& xv = x.values();
  const auto& kv = kernels.values();
  std::vector<T> out(h * w * c, T(0));
  // Visits (dy, dx, channel) in a fixed order for every output position.
  auto for_taps = [h, w, c, k, half](auto&& fn) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        for (std::size_t dy = 0; dy < k; ++dy) {
          const long sy = static_cast<long>(y) + static_cast<long>(dy) - half;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          for (std::size_t dx = 0; dx < k; ++dx) {
            const long sx = static_cast<long>(xx) + static_cast<long>(dx) - half;
            if (sx < 0 || sx >= static_cast<long>(w)) continue;
            const std::size_t src = (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c;
            const std::size_t dst = (y * w + xx) * c;
            const std::size_t tap = (dy * k + dx) * c;
            for (std::size_t ch = 0; ch < c; ++ch) fn(dst + ch, src + ch, tap + ch);
          }
        }
  };
  for_taps([&](std::size_t o, std::size_t s, std::size_t t) { out[o] += kv[t] * xv[s]; });
  count_flops(op_kind::kConv, 2ULL * h * w * c * k * k);
  NodePtr<T> xn = x.node(), kn = kernels.node();
  return Tensor<T>::make_result(x.shape(), std::move(out), {x, kernels},
                                [xn, kn, for_taps](TensorNode<T>& self) {
    const auto& g = self.grad;
    for_taps([&](std::size_t o, std::size_t s, std::size_t t) {
      if (xn->requires_grad) xn->grad[s] += g[o] * kn->data[t];
      if (kn->requires_grad) kn->grad[t] += g[o] * xn->data[s];
    });
  });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  require_matrix(logits.shape(), "cross_entropy");
  const std::size_t m = logits.rows(), n = logits.cols();
  if (labels.size() != m) throw DimensionError("cross_entropy: one label per row required");
  const auto& lv = logits.values();
  std::vector<T> probs(m * n);
  T loss = T(0);
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= n) throw std::out_of_range("cross_entropy: label out of range");
    const T mx = *std::max_element(lv.begin() + i * n, lv.begin() + (i + 1) * n);
    T z = T(0);
    for (std::size_t j = 0; j < n; ++j) z += std::exp(lv[i * n + j] - mx);
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] = std::exp(lv[i * n + j] - mx) / z;
    loss -= lv[i * n + labels[i]] - mx - std::log(z);
  }
  loss /= static_cast<T>(m);
  count_flops(op_kind::kLoss, m * n);
  NodePtr<T> ln = logits.node();
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return Tensor<T>::make_result({1}, {loss}, {logits},
                                [ln, probs = std::move(probs), lab, m, n](TensorNode<T>& self) {
    const T g = self.grad[0] / static_cast<T>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        ln->grad[i * n + j] += g * (probs[i * n + j] - (j == lab[i] ? T(1) : T(0)));
  });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape()) throw DimensionError("bce_with_logits: shape mismatch");
  const std::size_t n = logits.size();
  if (n == 0) throw ContractError("bce_with_logits: empty input");
  const auto& xv = logits.values();
  const auto& yv = targets.values();
  T loss = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = xv[i];
    // max(x,0) - x*y + log(1 + exp(-|x|))
    loss += std::max(x, T(0)) - x * yv[i] + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<T>(n);
  count_flops(op_kind::kLoss, n);
  NodePtr<T> xn = logits.node(), yn = targets.node();
  return Tensor<T>::make_result({1}, {loss}, {logits, targets}, [xn, yn, n](TensorNode<T>& self) {
    const T g = self.grad[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (xn->requires_grad) xn->grad[i] += g * (sigmoid_f(xn->data[i]) - yn->data[i]);
      if (yn->requires_grad) yn->grad[i] -= g * xn->data[i];
    }
  });
}

#define EURNET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> outer(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> sum_rows(const Tensor<T>&);                                               \
  template Tensor<T> mean_rows(const Tensor<T>&);                                              \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const std::size_t>);              \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> gelu(const Tensor<T>&);                                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);      \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::size_t>);            \
  template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);

EURNET_INSTANTIATE_OPS(float)
EURNET_INSTANTIATE_OPS(double)

}  // namespace eurnet
