#pragma once

// Differentiable primitives. Every operation reports its cost to the active
// OpCounter using one convention: a multiply-add is 2 FLOPs, an elementwise
// product, sum or activation is 1 FLOP per element, and pure data movement
// (reshape, slicing, concatenation, gathers) is free.

#include <cstdint>
#include <span>
#include <vector>

#include "eurnet/tensor.hpp"

namespace eurnet {

// Counter kinds. "bias_add" is separate so cost checks can exclude biases.
namespace op_kind {
inline constexpr const char* kMatmul = "matmul";
inline constexpr const char* kHadamard = "hadamard";
inline constexpr const char* kAdd = "add";
inline constexpr const char* kBiasAdd = "bias_add";
inline constexpr const char* kOuter = "outer";
inline constexpr const char* kScale = "scale";
inline constexpr const char* kReduce = "reduce";
inline constexpr const char* kActivation = "activation";
inline constexpr const char* kNorm = "norm";
inline constexpr const char* kConv = "depthwise_conv2d";
inline constexpr const char* kLoss = "loss";
inline constexpr const char* kRelAggregate = "rel_aggregate";
}  // namespace op_kind

/// C = A·B; counts 2·m·n·k.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product. `b` may have a single row, broadcast over the rows of `a`.
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise sum with the same row-broadcast rule as hadamard.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// add() counted under the "bias_add" kind.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// a[m×1] · b[1×n] without accumulation; counts m·n.
template <typename T>
Tensor<T> outer(const Tensor<T>& a, const Tensor<T>& b);

/// Sum of all elements as a 1-element tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

template <typename T>
Tensor<T> mean(const Tensor<T>& a);

/// Column sums / means of a matrix, shape [1×cols].
template <typename T>
Tensor<T> sum_rows(const Tensor<T>& a);
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count);

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);

/// Row gather; repeated indices accumulate gradient.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const std::size_t> index);

template <typename T>
Tensor<T> relu(const Tensor<T>& a);
/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);

/// Row-wise layer normalization with affine gamma/beta of shape [1×cols].
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

/// Per-channel 2D convolution with zero "same" padding.
/// x: [H×W×C], kernels: [k×k×C] with k odd. Counts 2·H·W·C·k².
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernels);

/// Mean softmax cross-entropy over rows; labels index columns.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels);

/// Mean binary cross-entropy with logits; targets in [0,1], same shape.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets);

}  // namespace eurnet
