#pragma once

// Relational layers and the small building blocks around them. Matrices act
// on row vectors: a layer maps Z[|V|×in] to Z·W[|V|×out].

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eurnet/ops.hpp"
#include "eurnet/relgraph.hpp"

namespace eurnet {

template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
std::size_t count_parameters(const ParamList<T>& params);

/// Truncated normal (cut at ±2σ) matrix, the default weight initializer.
template <typename T>
Tensor<T> trunc_normal(std::mt19937_64& rng, Shape shape, double stddev = 0.02);

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in×out]
  Tensor<T> bias;    // [1×out]; undefined when the map has no bias

  static Linear init(std::mt19937_64& rng, std::size_t in, std::size_t out, bool with_bias = true);
  bool defined() const { return weight.defined(); }
  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;  // [1×C]
  Tensor<T> beta;   // [1×C]

  static LayerNorm init(std::size_t channels);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

// ---------------------------------------------------------------------------
// RGConv

template <typename T>
struct RGConvParams {
  std::size_t num_relations = 0;
  Tensor<T> w_rel;   // the |R| kernels W_r stacked row-wise: [|R|·in × out]
  Tensor<T> w_self;  // [in×out]
  Tensor<T> b_self;  // [1×out]
  Tensor<T> b_aggr;  // [1×out]

  static RGConvParams init(std::mt19937_64& rng, std::size_t in, std::size_t out, std::size_t relations);
  std::size_t in_dim() const { return w_self.rows(); }
  std::size_t out_dim() const { return w_self.cols(); }
  /// W_r as an [in×out] view (a copy detached from the graph).
  Tensor<T> relation_weight(std::size_t r) const;
  void validate() const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// z'_v = z_v·W_self + b_self + Σ_r mean_{u∈N_r(v)} z_u·W_r + b_aggr.
template <typename T>
Tensor<T> rgconv_forward(const RelGraph& graph, const Tensor<T>& z, const RGConvParams<T>& p);

// ---------------------------------------------------------------------------
// GRMP

enum class GatingMode { kGate, kAdd };
enum class AlphaMode { kLearned, kUniform };

struct GRMPVariant {
  GatingMode gating = GatingMode::kGate;
  AlphaMode alpha = AlphaMode::kLearned;
  bool use_w_in = true;
  bool use_w_out = true;
  friend bool operator==(const GRMPVariant&, const GRMPVariant&) = default;
};

/// Message width: the output of W_in, or the input width when W_in is off.
template <typename T>
struct GRMPParams {
  std::size_t num_relations = 0;
  Linear<T> w_in;     // in → out
  Linear<T> w_out;    // message width → out
  Tensor<T> w_self;   // [in×out], no bias
  Linear<T> w_alpha;  // in → |R|
  Tensor<T> w_rel;    // the |R| vectors w_r side by side: [1 × |R|·message width]

  static GRMPParams init(std::mt19937_64& rng, std::size_t in, std::size_t out, std::size_t relations,
                         const GRMPVariant& variant = {});
  std::size_t in_dim() const { return w_self.rows(); }
  std::size_t out_dim() const { return w_self.cols(); }
  std::size_t message_dim() const;
  void validate(const GRMPVariant& variant) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Step labels reported to the op counter while grmp_forward runs.
inline constexpr const char* kGrmpSteps[5] = {"grmp.1", "grmp.2", "grmp.3", "grmp.4", "grmp.5"};
inline constexpr const char* kRgconvSteps[3] = {"rgconv.1", "rgconv.2", "rgconv.3"};

/// z_aggr(v) = W_out(Σ_r α_r(v) · mean_{u∈N_r(v)} w_r ⊙ W_in z_u), α(v) = W_α z_v,
/// z'_v = W_self z_v ⊙ z_aggr(v) (or + for the additive variant).
template <typename T>
Tensor<T> grmp_forward(const RelGraph& graph, const Tensor<T>& z, const GRMPParams<T>& p,
                       const GRMPVariant& variant = {});

// ---------------------------------------------------------------------------
// Feed-forward, virtual nodes, patch merging

template <typename T>
struct FFNParams {
  Linear<T> fc1;  // C → γC
  Linear<T> fc2;  // γC → C

  static FFNParams init(std::mt19937_64& rng, std::size_t channels, std::size_t ratio = 4);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& z, const FFNParams<T>& p);

/// Depthwise kernels applied in sequence, each followed by GELU unless
/// `activation` is off. Default: three 3×3 layers, receptive field 7.
template <typename T>
struct ContextStack {
  std::vector<Tensor<T>> kernels;  // each [k×k×C]
  bool activation = true;

  static ContextStack init(std::mt19937_64& rng, std::size_t channels, std::size_t levels = 3,
                           std::size_t kernel = 3);
  std::size_t receptive_field() const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Per-patch context features [H·W×C] from a feature grid [H×W×C].
template <typename T>
Tensor<T> context_virtual_features(const Tensor<T>& grid, const ContextStack<T>& stack);

/// Column means [1×C].
template <typename T>
Tensor<T> global_virtual_feature(const Tensor<T>& z);

template <typename T>
struct PatchMergingParams {
  bool use_norm = true;
  LayerNorm<T> norm;  // over 4C
  Linear<T> reduction;  // 4C → 2C, no bias

  static PatchMergingParams init(std::mt19937_64& rng, std::size_t channels, bool use_norm = true);
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Merges each 2×2 block; the four members are concatenated in the order
/// (row, col) offsets (0,0), (1,0), (0,1), (1,1). Returns [(H/2)(W/2)×2C].
template <typename T>
Tensor<T> patch_merging(const Tensor<T>& z, std::size_t height, std::size_t width,
                        const PatchMergingParams<T>& p);

/// Row indices of the concatenation above, one list per block member.
std::vector<std::vector<std::size_t>> patch_merging_index(std::size_t height, std::size_t width);

}  // namespace eurnet
