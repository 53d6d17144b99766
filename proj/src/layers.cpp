#include "eurnet/layers.hpp"

#include <cmath>

namespace eurnet {

template <typename T>
std::size_t count_parameters(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

template <typename T>
Tensor<T> trunc_normal(std::mt19937_64& rng, Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(shape_size(shape));
  for (auto& v : values) {
    double x;
    do {
      x = dist(rng);
    } while (std::abs(x) > 2.0 * stddev);
    v = static_cast<T>(x);
  }
  return Tensor<T>::from(std::move(shape), std::move(values), true);
}

namespace {

template <typename T>
void push(ParamList<T>& out, const std::string& prefix, const char* name, const Tensor<T>& t) {
  if (t.defined()) out.emplace_back(prefix + name, t);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Linear<T> Linear<T>::init(std::mt19937_64& rng, std::size_t in, std::size_t out, bool with_bias) {
  Linear l;
  l.weight = trunc_normal<T>(rng, {in, out});
  if (with_bias) l.bias = Tensor<T>::zeros({1, out}, true);
  return l;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  auto y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  push(out, prefix, "weight", weight);
  push(out, prefix, "bias", bias);
}

template <typename T>
LayerNorm<T> LayerNorm<T>::init(std::size_t channels) {
  return {Tensor<T>::ones({1, channels}, true), Tensor<T>::zeros({1, channels}, true)};
}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  push(out, prefix, "gamma", gamma);
  push(out, prefix, "beta", beta);
}

// ---------------------------------------------------------------------------
// RGConv

template <typename T>
RGConvParams<T> RGConvParams<T>::init(std::mt19937_64& rng, std::size_t in, std::size_t out,
                                      std::size_t relations) {
  RGConvParams p;
  p.num_relations = relations;
  p.w_rel = trunc_normal<T>(rng, {relations * in, out});
  p.w_self = trunc_normal<T>(rng, {in, out});
  p.b_self = Tensor<T>::zeros({1, out}, true);
  p.b_aggr = Tensor<T>::zeros({1, out}, true);
  return p;
}

template <typename T>
Tensor<T> RGConvParams<T>::relation_weight(std::size_t r) const {
  NoGradGuard guard;
  return slice_rows(w_rel, r * in_dim(), in_dim());
}

template <typename T>
void RGConvParams<T>::validate() const {
  require(w_self.defined() && w_self.dim() == 2, "RGConv: W_self missing");
  require(w_rel.defined() && w_rel.rows() == num_relations * in_dim() && w_rel.cols() == out_dim(),
          "RGConv: W_rel must be [|R|·in × out], got " + shape_str(w_rel.shape()));
  require(!b_self.defined() || b_self.shape() == Shape{1, out_dim()}, "RGConv: b_self shape");
  require(!b_aggr.defined() || b_aggr.shape() == Shape{1, out_dim()}, "RGConv: b_aggr shape");
}

template <typename T>
void RGConvParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  push(out, prefix, "w_rel", w_rel);
  push(out, prefix, "w_self", w_self);
  push(out, prefix, "b_self", b_self);
  push(out, prefix, "b_aggr", b_aggr);
}

template <typename T>
Tensor<T> rgconv_forward(const RelGraph& graph, const Tensor<T>& z, const RGConvParams<T>& p) {
  p.validate();
  const std::size_t n = graph.num_nodes(), r = graph.num_relations(), c = p.in_dim();
  require(r == p.num_relations, "RGConv: graph has " + std::to_string(r) + " relations, parameters " +
                                    std::to_string(p.num_relations));
  require(z.dim() == 2 && z.rows() == n && z.cols() == c,
          "RGConv: features " + shape_str(z.shape()) + " for " + std::to_string(n) + " nodes");

  Tensor<T> gathered;
  {
    StepScope step(kRgconvSteps[0]);
    gathered = reshape(rel_aggregate(graph, z), {n, r * c});
  }
  Tensor<T> aggr;
  {
    StepScope step(kRgconvSteps[1]);
    aggr = matmul(gathered, p.w_rel);
    if (p.b_aggr.defined()) aggr = add_bias(aggr, p.b_aggr);
  }
  StepScope step(kRgconvSteps[2]);
  auto self = matmul(z, p.w_self);
  if (p.b_self.defined()) self = add_bias(self, p.b_self);
  return add(self, aggr);
}

// ---------------------------------------------------------------------------
// GRMP

template <typename T>
GRMPParams<T> GRMPParams<T>::init(std::mt19937_64& rng, std::size_t in, std::size_t out,
                                  std::size_t relations, const GRMPVariant& variant) {
  if (relations == 0) throw ContractError("GRMP needs at least one relation");
  GRMPParams p;
  p.num_relations = relations;
  const std::size_t msg = variant.use_w_in ? out : in;
  if (variant.use_w_in) p.w_in = Linear<T>::init(rng, in, out);
  if (variant.use_w_out) p.w_out = Linear<T>::init(rng, msg, out);
  p.w_self = trunc_normal<T>(rng, {in, out});
  if (variant.alpha == AlphaMode::kLearned) p.w_alpha = Linear<T>::init(rng, in, relations);
  p.w_rel = Tensor<T>::ones({1, relations * msg}, true);
  p.validate(variant);
  return p;
}

template <typename T>
std::size_t GRMPParams<T>::message_dim() const {
  return w_in.defined() ? w_in.out_dim() : in_dim();
}

template <typename T>
void GRMPParams<T>::validate(const GRMPVariant& variant) const {
  if (num_relations == 0) throw ContractError("GRMP needs at least one relation");
  require(w_self.defined() && w_self.dim() == 2, "GRMP: W_self missing");
  const std::size_t in = in_dim(), out = out_dim(), msg = message_dim();
  if (variant.use_w_in) {
    require(w_in.defined() && w_in.in_dim() == in, "GRMP: W_in missing or wrong input width");
  } else {
    require(!w_in.defined(), "GRMP: variant disables W_in but parameters hold one");
  }
  if (variant.use_w_out) {
    require(w_out.defined() && w_out.in_dim() == msg && w_out.out_dim() == out, "GRMP: W_out shape");
  } else {
    require(!w_out.defined(), "GRMP: variant disables W_out but parameters hold one");
    require(msg == out, "GRMP: without W_out the message width must equal the output width");
  }
  if (variant.alpha == AlphaMode::kLearned) {
    require(w_alpha.defined() && w_alpha.in_dim() == in && w_alpha.out_dim() == num_relations,
            "GRMP: W_alpha must be [in × |R|]");
  } else {
    require(!w_alpha.defined(), "GRMP: uniform alpha variant holds W_alpha");
  }
  require(w_rel.defined() && w_rel.shape() == Shape{1, num_relations * msg},
          "GRMP: w_rel must be [1 × |R|·" + std::to_string(msg) + "], got " + shape_str(w_rel.shape()));
}

template <typename T>
void GRMPParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  w_in.collect(prefix + "w_in.", out);
  w_out.collect(prefix + "w_out.", out);
  push(out, prefix, "w_self", w_self);
  w_alpha.collect(prefix + "w_alpha.", out);
  push(out, prefix, "w_rel", w_rel);
}

template <typename T>
Tensor<T> grmp_forward(const RelGraph& graph, const Tensor<T>& z, const GRMPParams<T>& p,
                       const GRMPVariant& variant) {
  p.validate(variant);
  const std::size_t n = graph.num_nodes(), r = graph.num_relations(), msg = p.message_dim();
  if (r == 0) throw ContractError("GRMP needs at least one relation");
  require(r == p.num_relations, "GRMP: graph has " + std::to_string(r) + " relations, parameters " +
                                    std::to_string(p.num_relations));
  require(z.dim() == 2 && z.rows() == n && z.cols() == p.in_dim(),
          "GRMP: features " + shape_str(z.shape()) + " for " + std::to_string(n) + " nodes");

  // ① input transform
  Tensor<T> h;
  {
    StepScope step(kGrmpSteps[0]);
    h = variant.use_w_in ? p.w_in(z) : z;
  }
  // ② relational aggregation, then w_r ⊙ per relation via a broadcast of w_rel
  Tensor<T> messages;  // [|V| × |R|·msg]
  {
    StepScope step(kGrmpSteps[1]);
    messages = reshape(rel_aggregate(graph, h), {n, r * msg});
    messages = hadamard(messages, outer(Tensor<T>::ones({n, 1}), p.w_rel));
  }
  // ③ relation attention α(v) = W_α z_v, weighted sum over relations
  Tensor<T> mixed;
  {
    StepScope step(kGrmpSteps[2]);
    if (variant.alpha == AlphaMode::kLearned) {
      auto alpha = p.w_alpha(z);
      auto ones = Tensor<T>::ones({1, msg});
      for (std::size_t i = 0; i < r; ++i) {
        auto term = hadamard(outer(slice_cols(alpha, i, 1), ones), slice_cols(messages, i * msg, msg));
        mixed = i == 0 ? term : add(mixed, term);
      }
    } else {
      for (std::size_t i = 0; i < r; ++i) {
        auto term = slice_cols(messages, i * msg, msg);
        mixed = i == 0 ? term : add(mixed, term);
      }
      mixed = scale(mixed, T(1) / static_cast<T>(r));
    }
  }
  // ④ output transform
  Tensor<T> aggr;
  {
    StepScope step(kGrmpSteps[3]);
    aggr = variant.use_w_out ? p.w_out(mixed) : mixed;
  }
  // ⑤ gated (or additive) self update
  StepScope step(kGrmpSteps[4]);
  auto self = matmul(z, p.w_self);
  return variant.gating == GatingMode::kGate ? hadamard(self, aggr) : add(self, aggr);
}

// ---------------------------------------------------------------------------

template <typename T>
FFNParams<T> FFNParams<T>::init(std::mt19937_64& rng, std::size_t channels, std::size_t ratio) {
  if (ratio == 0) throw ConfigError("FFN ratio must be positive");
  return {Linear<T>::init(rng, channels, ratio * channels), Linear<T>::init(rng, ratio * channels, channels)};
}

template <typename T>
void FFNParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  fc1.collect(prefix + "fc1.", out);
  fc2.collect(prefix + "fc2.", out);
}

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& z, const FFNParams<T>& p) {
  require(z.dim() == 2 && z.cols() == p.fc1.in_dim() && p.fc1.out_dim() == p.fc2.in_dim(),
          "FFN: input " + shape_str(z.shape()) + " does not fit weights");
  return p.fc2(gelu(p.fc1(z)));
}

template <typename T>
ContextStack<T> ContextStack<T>::init(std::mt19937_64& rng, std::size_t channels, std::size_t levels,
                                      std::size_t kernel) {
  if (kernel % 2 == 0) throw ConfigError("context kernels must have odd size");
  ContextStack s;
  for (std::size_t i = 0; i < levels; ++i) s.kernels.push_back(trunc_normal<T>(rng, {kernel, kernel, channels}));
  return s;
}

template <typename T>
std::size_t ContextStack<T>::receptive_field() const {
  std::size_t field = 1;
  for (const auto& k : kernels) field += k.shape()[0] - 1;
  return field;
}

template <typename T>
void ContextStack<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < kernels.size(); ++i) out.emplace_back(prefix + "kernel" + std::to_string(i), kernels[i]);
}

template <typename T>
Tensor<T> context_virtual_features(const Tensor<T>& grid, const ContextStack<T>& stack) {
  require(grid.dim() == 3, "context features need an [H×W×C] grid, got " + shape_str(grid.shape()));
  Tensor<T> x = grid;
  for (const auto& k : stack.kernels) {
    x = depthwise_conv2d(x, k);
    if (stack.activation) x = gelu(x);
  }
  const auto& s = grid.shape();
  return reshape(x, {s[0] * s[1], s[2]});
}

template <typename T>
Tensor<T> global_virtual_feature(const Tensor<T>& z) {
  require(z.dim() == 2, "global feature needs a matrix");
  if (z.rows() == 0) throw DimensionError("global feature of an empty node set");
  return mean_rows(z);
}

template <typename T>
PatchMergingParams<T> PatchMergingParams<T>::init(std::mt19937_64& rng, std::size_t channels, bool use_norm) {
  PatchMergingParams p;
  p.use_norm = use_norm;
  if (use_norm) p.norm = LayerNorm<T>::init(4 * channels);
  p.reduction = Linear<T>::init(rng, 4 * channels, 2 * channels, false);
  return p;
}

template <typename T>
void PatchMergingParams<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  if (use_norm) norm.collect(prefix + "norm.", out);
  reduction.collect(prefix + "reduction.", out);
}

std::vector<std::vector<std::size_t>> patch_merging_index(std::size_t height, std::size_t width) {
  if (height % 2 || width % 2) {
    throw ConfigError("patch merging needs even grid sides, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  constexpr std::size_t offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<std::vector<std::size_t>> index(4);
  for (std::size_t by = 0; by < height / 2; ++by)
    for (std::size_t bx = 0; bx < width / 2; ++bx)
      for (std::size_t m = 0; m < 4; ++m)
        index[m].push_back((2 * by + offsets[m][0]) * width + 2 * bx + offsets[m][1]);
  return index;
}

template <typename T>
Tensor<T> patch_merging(const Tensor<T>& z, std::size_t height, std::size_t width,
                        const PatchMergingParams<T>& p) {
  auto index = patch_merging_index(height, width);
  require(z.dim() == 2 && z.rows() == height * width,
          "patch merging: " + shape_str(z.shape()) + " for a " + std::to_string(height) + "x" +
              std::to_string(width) + " grid");
  std::vector<Tensor<T>> parts;
  for (const auto& idx : index) parts.push_back(gather_rows(z, std::span<const std::size_t>(idx)));
  auto merged = concat_cols(parts);
  if (p.use_norm) merged = p.norm(merged);
  return p.reduction(merged);
}

#define EURNET_INSTANTIATE_LAYERS(T)                                                              \
  template std::size_t count_parameters(const ParamList<T>&);                                     \
  template Tensor<T> trunc_normal<T>(std::mt19937_64&, Shape, double);                            \
  template struct Linear<T>;                                                                      \
  template struct LayerNorm<T>;                                                                   \
  template struct RGConvParams<T>;                                                                \
  template struct GRMPParams<T>;                                                                  \
  template struct FFNParams<T>;                                                                   \
  template struct ContextStack<T>;                                                                \
  template struct PatchMergingParams<T>;                                                          \
  template Tensor<T> rgconv_forward(const RelGraph&, const Tensor<T>&, const RGConvParams<T>&);   \
  template Tensor<T> grmp_forward(const RelGraph&, const Tensor<T>&, const GRMPParams<T>&,        \
                                  const GRMPVariant&);                                            \
  template Tensor<T> ffn_forward(const Tensor<T>&, const FFNParams<T>&);                          \
  template Tensor<T> context_virtual_features(const Tensor<T>&, const ContextStack<T>&);          \
  template Tensor<T> global_virtual_feature(const Tensor<T>&);                                    \
  template Tensor<T> patch_merging(const Tensor<T>&, std::size_t, std::size_t,                    \
                                   const PatchMergingParams<T>&);

EURNET_INSTANTIATE_LAYERS(float)
EURNET_INSTANTIATE_LAYERS(double)

}  // namespace eurnet
