#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "eurnet/layers.hpp"
#include "eurnet_verify/gradcheck.hpp"
#include "eurnet_verify/oracles.hpp"

using namespace eurnet;
using verify::random_tensor;

namespace {

template <typename T>
ParamList<T> params_of(const RGConvParams<T>& p) {
  ParamList<T> out;
  p.collect("", out);
  return out;
}

template <typename T>
ParamList<T> params_of(const GRMPParams<T>& p) {
  ParamList<T> out;
  p.collect("", out);
  return out;
}

template <typename T>
Linear<T> linear_of(Tensor<T> w, Tensor<T> b = {}) {
  return {std::move(w), std::move(b)};
}

std::uint64_t rgconv_closed_form(std::uint64_t r, std::uint64_t d, std::uint64_t v, std::uint64_t c) {
  return r * (2 * d * v * c + 2 * v * c * c) + 2 * v * c * c + v * c;
}

std::uint64_t grmp_closed_form(std::uint64_t r, std::uint64_t d, std::uint64_t v, std::uint64_t c) {
  return r * (2 * d + 7) * v * c + 6 * v * c * c;
}

const GRMPVariant kVariants[] = {
    {},
    {GatingMode::kAdd, AlphaMode::kLearned, true, true},
    {GatingMode::kGate, AlphaMode::kUniform, true, true},
    {GatingMode::kGate, AlphaMode::kLearned, false, true},
    {GatingMode::kGate, AlphaMode::kLearned, true, false},
    {GatingMode::kAdd, AlphaMode::kUniform, false, false},
};

}  // namespace

TEST_CASE("rgconv: identity weights on a single edge") {
  auto g = RelGraph::from_edges(2, 1, std::vector<Edge>{{0, 1, 0}});
  RGConvParams<double> p{1, Tensor<double>::ones({1, 1}), Tensor<double>::ones({1, 1}),
                         Tensor<double>::zeros({1, 1}), Tensor<double>::zeros({1, 1})};
  auto out = rgconv_forward(g, Tensor<double>::from({2, 1}, {3, 1}), p);
  CHECK(out.at(1, 0) == 4.0);
  CHECK(out.at(0, 0) == 3.0);
}

TEST_CASE("rgconv: empty graph keeps only the self term") {
  std::mt19937_64 rng(1);
  auto p = RGConvParams<double>::init(rng, 3, 3, 2);
  verify::randomize(params_of(p), rng);
  auto z = random_tensor<double>(rng, {4, 3});
  auto out = rgconv_forward(RelGraph::from_edges(4, 2, std::vector<Edge>{}), z, p);
  auto self = add(add(matmul(z, p.w_self), p.b_self), p.b_aggr);
  CHECK(verify::max_abs_diff(out.values(), self.values()) <= 1e-15);
}

TEST_CASE("rgconv matches the per-node loop oracle (32-bit)") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto g = verify::random_graph(rng, 6, 2, 0.35, true);
    auto p = RGConvParams<float>::init(rng, 4, 5, 2);
    verify::randomize(params_of(p), rng, 0.5);
    auto z = random_tensor<float>(rng, {6, 4});
    auto out = verify::to_double(rgconv_forward(g, z, p));
    CHECK(verify::max_abs_diff(out, verify::rgconv_loop_oracle(g, z, p)) <= 1e-6);
  }
}

TEST_CASE("grmp: all-identity gate squares the input") {
  auto g = RelGraph::from_edges(1, 1, std::vector<Edge>{{0, 0, 0}});
  auto one = [] { return Tensor<double>::ones({1, 1}); };
  auto zero = [] { return Tensor<double>::zeros({1, 1}); };
  // α = 0·z + 1 = 1.
  GRMPParams<double> p{1, linear_of(one(), zero()), linear_of(one(), zero()), one(), linear_of(zero(), one()),
                       one()};
  GRMPVariant add_variant{GatingMode::kAdd};
  CHECK(grmp_forward(g, Tensor<double>::full({1, 1}, 2), p).item() == 4.0);
  CHECK(grmp_forward(g, Tensor<double>::full({1, 1}, 2), p, add_variant).item() == 4.0);
  CHECK(grmp_forward(g, Tensor<double>::full({1, 1}, 3), p).item() == 9.0);
  CHECK(grmp_forward(g, Tensor<double>::full({1, 1}, 3), p, add_variant).item() == 6.0);
}

TEST_CASE("grmp matches the per-node loop oracle for every variant (32-bit)") {
  for (const auto& variant : kVariants) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      std::mt19937_64 rng(seed);
      auto g = verify::random_graph(rng, 6, 3, 0.3, true);
      // Without both maps the output width has to equal the input width.
      const std::size_t in = 4, out = (!variant.use_w_in && !variant.use_w_out) ? in : 5;
      auto p = GRMPParams<float>::init(rng, in, out, 3, variant);
      verify::randomize(params_of(p), rng, 0.5);
      auto z = random_tensor<float>(rng, {6, in});
      auto got = verify::to_double(grmp_forward(g, z, p, variant));
      CAPTURE(seed);
      CHECK(verify::max_abs_diff(got, verify::grmp_loop_oracle(g, z, p, variant)) <= 1e-6);
    }
  }
}

TEST_CASE("grmp with uniform alpha, unit w_r, identity maps and addition reduces to rgconv") {
  const std::size_t c = 4, r = 3;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto g = verify::random_graph(rng, 7, r, 0.3, true);
    auto w_self = random_tensor<double>(rng, {c, c});
    GRMPParams<double> grmp{r,
                            linear_of(verify::identity<double>(c), Tensor<double>::zeros({1, c})),
                            linear_of(verify::identity<double>(c), Tensor<double>::zeros({1, c})),
                            w_self,
                            {},
                            Tensor<double>::ones({1, r * c})};
    std::vector<double> stacked;
    for (std::size_t i = 0; i < r; ++i) {
      auto block = scale(verify::identity<double>(c), 1.0 / r).values();
      stacked.insert(stacked.end(), block.begin(), block.end());
    }
    RGConvParams<double> conv{r, Tensor<double>::from({r * c, c}, stacked), w_self, {}, {}};
    auto z = random_tensor<double>(rng, {7, c});
    GRMPVariant variant{GatingMode::kAdd, AlphaMode::kUniform, true, true};
    CHECK(verify::max_abs_diff(grmp_forward(g, z, grmp, variant).values(), rgconv_forward(g, z, conv).values()) <=
          1e-6);
  }
}

TEST_CASE("both layers are permutation equivariant") {
  std::mt19937_64 rng(9);
  const std::size_t n = 8;
  auto g = verify::random_graph(rng, n, 3, 0.3, true);
  auto z = random_tensor<double>(rng, {n, 4});
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> inverse(n);
  for (std::size_t v = 0; v < n; ++v) inverse[perm[v]] = v;
  auto gp = g.relabel(perm);
  auto zp = gather_rows(z, std::span<const std::size_t>(inverse));

  auto conv = RGConvParams<double>::init(rng, 4, 4, 3);
  auto grmp = GRMPParams<double>::init(rng, 4, 4, 3);
  verify::randomize(params_of(conv), rng);
  verify::randomize(params_of(grmp), rng);
  auto check = [&](const Tensor<double>& out, const Tensor<double>& out_p) {
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(out.at(v, j) - out_p.at(perm[v], j)) <= 1e-12);
  };
  check(rgconv_forward(g, z, conv), rgconv_forward(gp, zp, conv));
  check(grmp_forward(g, z, grmp), grmp_forward(gp, zp, grmp));
}

TEST_CASE("layer gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(100 + seed);
    auto g = verify::random_graph(rng, 5, 2, 0.4, true);
    auto z = random_tensor<double>(rng, {5, 3}, 1.0, true);
    auto weights = random_tensor<double>(rng, {5, 4});

    auto conv = RGConvParams<double>::init(rng, 3, 4, 2);
    auto conv_params = params_of(conv);
    verify::randomize(conv_params, rng);
    std::vector<Tensor<double>> inputs{z};
    for (auto& [name, t] : conv_params) inputs.push_back(t);
    auto r1 = verify::gradcheck([&] { return sum(hadamard(rgconv_forward(g, z, conv), weights)); }, inputs);
    CHECK(r1.max_rel_error < 1e-5);

    for (const auto& variant : kVariants) {
      const std::size_t out = (!variant.use_w_in && !variant.use_w_out) ? 3 : 4;
      auto grmp = GRMPParams<double>::init(rng, 3, out, 2, variant);
      auto grmp_params = params_of(grmp);
      verify::randomize(grmp_params, rng);
      std::vector<Tensor<double>> gin{z};
      for (auto& [name, t] : grmp_params) gin.push_back(t);
      auto w = slice_cols(weights, 0, out);
      auto r2 = verify::gradcheck([&] { return sum(hadamard(grmp_forward(g, z, grmp, variant), w)); }, gin);
      CAPTURE(seed);
      CHECK(r2.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("op counts on regular graphs equal the closed forms, step by step") {
  for (std::size_t r : {1, 2, 4, 7, 9})
    for (std::size_t d : {1, 2, 4})
      for (std::size_t n : {8, 64})
        for (std::size_t c : {4, 16}) {
          std::mt19937_64 rng(r * 1000 + d * 100 + n + c);
          auto g = verify::regular_graph(n, r, d);
          auto z = random_tensor<float>(rng, {n, c});
          auto conv = RGConvParams<float>::init(rng, c, c, r);
          auto grmp = GRMPParams<float>::init(rng, c, c, r);
          OpCounter conv_count({op_kind::kBiasAdd}), grmp_count({op_kind::kBiasAdd});
          {
            NoGradGuard no_grad;
            CounterScope scope(conv_count);
            rgconv_forward(g, z, conv);
          }
          {
            NoGradGuard no_grad;
            CounterScope scope(grmp_count);
            grmp_forward(g, z, grmp);
          }
          CAPTURE(r);
          CAPTURE(d);
          CAPTURE(n);
          CAPTURE(c);
          CHECK(conv_count.total() == rgconv_closed_form(r, d, n, c));
          CHECK(grmp_count.total() == grmp_closed_form(r, d, n, c));
          CHECK(conv_count.step(kRgconvSteps[0]) == 2 * d * r * n * c);
          CHECK(conv_count.step(kRgconvSteps[1]) == 2 * r * n * c * c);
          CHECK(conv_count.step(kRgconvSteps[2]) == 2 * n * c * c + n * c);
          CHECK(grmp_count.step(kGrmpSteps[0]) == 2 * n * c * c);
          CHECK(grmp_count.step(kGrmpSteps[1]) == 2 * d * r * n * c + 2 * r * n * c);
          CHECK(grmp_count.step(kGrmpSteps[2]) == 5 * r * n * c - n * c);
          CHECK(grmp_count.step(kGrmpSteps[3]) == 2 * n * c * c);
          CHECK(grmp_count.step(kGrmpSteps[4]) == 2 * n * c * c + n * c);
        }
}

TEST_CASE("grmp: isolated node gets W_self z gated by the output bias") {
  std::mt19937_64 rng(3);
  auto p = GRMPParams<double>::init(rng, 3, 3, 2);
  verify::randomize(params_of(p), rng);
  auto z = random_tensor<double>(rng, {2, 3});
  auto out = grmp_forward(RelGraph::from_edges(2, 2, std::vector<Edge>{{0, 0, 1}}), z, p);
  auto expected = hadamard(matmul(z, p.w_self), p.w_out.bias);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(out.at(1, j) - expected.at(1, j)) <= 1e-15);
}

TEST_CASE("grmp: zero relations is a contract error") {
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(GRMPParams<double>::init(rng, 2, 2, 0), ContractError);
  auto p = GRMPParams<double>::init(rng, 2, 2, 1);
  CHECK_THROWS_AS(grmp_forward(RelGraph::from_edges(2, 0, std::vector<Edge>{}), Tensor<double>::ones({2, 2}), p), ContractError);
  CHECK_THROWS_AS(grmp_forward(RelGraph::from_edges(3, 1, std::vector<Edge>{}), Tensor<double>::ones({2, 2}), p), DimensionError);
}

TEST_CASE("ablation variants change parameter counts by the expected amounts") {
  const std::size_t c = 32, r = 7;
  std::mt19937_64 rng(5);
  auto count = [&](const GRMPVariant& v) { return count_parameters(params_of(GRMPParams<float>::init(rng, c, c, r, v))); };
  const auto full = count({});
  CHECK(full == 3 * (c * c + c) - c + (c * r + r) + r * c);
  CHECK(full - count({GatingMode::kGate, AlphaMode::kLearned, false, true}) == c * c + c);
  CHECK(full - count({GatingMode::kGate, AlphaMode::kLearned, true, false}) == c * c + c);
  CHECK(full - count({GatingMode::kGate, AlphaMode::kUniform, true, true}) == c * r + r);
  CHECK(full == count({GatingMode::kAdd, AlphaMode::kLearned, true, true}));
}

TEST_CASE("default initialization") {
  std::mt19937_64 rng(8);
  auto p = GRMPParams<double>::init(rng, 16, 16, 3);
  for (double w : p.w_rel.values()) CHECK(w == 1.0);
  for (double b : p.w_in.bias.values()) CHECK(b == 0.0);
  for (double w : p.w_self.values()) CHECK(std::abs(w) <= 0.04);
  auto big = trunc_normal<double>(rng, {200, 200});
  double sq = 0;
  for (double w : big.values()) sq += w * w;
  // Truncation at 2σ shrinks the standard deviation to about 0.88σ.
  CHECK(std::sqrt(sq / big.size()) == doctest::Approx(0.0176).epsilon(0.03));
}

TEST_CASE("ffn") {
  std::mt19937_64 rng(6);
  auto p = FFNParams<double>::init(rng, 3);
  CHECK(p.fc1.out_dim() == 12);
  ParamList<double> params;
  p.collect("", params);
  for (auto& [name, t] : params) {
    Tensor<double> h = t;
    for (auto& v : h.mutable_data()) v = 0;
  }
  CHECK(ffn_forward(random_tensor<double>(rng, {2, 3}), p).values() == std::vector<double>(6, 0.0));

  FFNParams<double> unit{linear_of(Tensor<double>::ones({1, 1}), Tensor<double>::zeros({1, 1})),
                         linear_of(Tensor<double>::ones({1, 1}), Tensor<double>::zeros({1, 1}))};
  CHECK(ffn_forward(Tensor<double>::zeros({1, 1}), unit).item() == 0.0);

  verify::randomize(params, rng);
  auto z = random_tensor<double>(rng, {4, 3});
  auto out = ffn_forward(z, p);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = p.fc2.bias.at(0, j);
      for (std::size_t h = 0; h < 12; ++h) {
        double pre = p.fc1.bias.at(0, h);
        for (std::size_t k = 0; k < 3; ++k) pre += z.at(i, k) * p.fc1.weight.at(k, h);
        acc += 0.5 * pre * (1.0 + std::erf(pre / std::sqrt(2.0))) * p.fc2.weight.at(h, j);
      }
      CHECK(std::abs(out.at(i, j) - acc) <= 1e-6);
    }
  CHECK_THROWS_AS(ffn_forward(Tensor<double>::zeros({2, 4}), p), DimensionError);
}

TEST_CASE("context virtual features") {
  std::mt19937_64 rng(2);
  const std::size_t h = 4, w = 5, c = 3;
  auto grid = random_tensor<double>(rng, {h, w, c});
  std::vector<double> delta(9 * c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) delta[4 * c + ch] = 1.0;
  auto delta_k = Tensor<double>::from({3, 3, c}, delta);

  ContextStack<double> one{{delta_k}, false};
  ContextStack<double> two{{delta_k, delta_k}, false};
  auto out1 = context_virtual_features(grid, one);
  CHECK(out1.shape() == Shape{h * w, c});
  CHECK(out1.values() == grid.values());
  CHECK(context_virtual_features(grid, two).values() == out1.values());

  ContextStack<double> avg{{Tensor<double>::full({3, 3, 1}, 1.0 / 9.0)}, false};
  auto flat = context_virtual_features(Tensor<double>::full({4, 4, 1}, 2.0), avg);
  CHECK(flat.at(5, 0) == doctest::Approx(2.0));
  CHECK(flat.at(0, 0) == doctest::Approx(2.0 * 4.0 / 9.0));
  CHECK(flat.at(1, 0) == doctest::Approx(2.0 * 6.0 / 9.0));

  auto stack = ContextStack<double>::init(rng, c);
  CHECK(stack.kernels.size() == 3);
  CHECK(stack.receptive_field() == 7);
  CHECK_THROWS_AS(context_virtual_features(Tensor<double>::zeros({4, 3}), stack), DimensionError);
  CHECK_THROWS_AS(context_virtual_features(Tensor<double>::zeros({2, 2, 4}), stack), DimensionError);
}

TEST_CASE("global virtual feature") {
  CHECK(global_virtual_feature(Tensor<double>::full({3, 2}, 1.5)).values() == std::vector<double>{1.5, 1.5});
  CHECK(global_virtual_feature(Tensor<double>::from({2, 1}, {1, 3})).item() == 2.0);
  std::mt19937_64 rng(4);
  auto z = random_tensor<double>(rng, {5, 4});
  auto g = global_virtual_feature(z);
  for (std::size_t j = 0; j < 4; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 5; ++i) s += z.at(i, j);
    CHECK(std::abs(g.at(0, j) - s / 5) <= 1e-12);
  }
  CHECK_THROWS_AS(global_virtual_feature(Tensor<double>::zeros({0, 3})), DimensionError);
}

TEST_CASE("patch merging") {
  const std::size_t c = 3;
  std::vector<double> prefix_id(4 * c * 2 * c, 0.0);
  for (std::size_t i = 0; i < 2 * c; ++i) prefix_id[i * 2 * c + i] = 1.0;
  PatchMergingParams<double> p{false, {}, linear_of(Tensor<double>::from({4 * c, 2 * c}, prefix_id))};
  std::vector<double> rows;
  for (int i = 0; i < 4; ++i) rows.insert(rows.end(), {1.0, 2.0, 3.0});
  auto out = patch_merging(Tensor<double>::from({4, c}, rows), 2, 2, p);
  CHECK(out.values() == std::vector<double>{1, 2, 3, 1, 2, 3});

  std::mt19937_64 rng(12);
  auto z = random_tensor<double>(rng, {4 * 6, c});
  std::vector<double> id(4 * c * 4 * c, 0.0);
  for (std::size_t i = 0; i < 4 * c; ++i) id[i * 4 * c + i] = 1.0;
  PatchMergingParams<double> gather{false, {}, linear_of(Tensor<double>::from({4 * c, 4 * c}, id))};
  auto merged = patch_merging(z, 4, 6, gather);
  CHECK(merged.rows() == 4 * 6 / 4);
  // Block (by, bx) concatenates (2by,2bx), (2by+1,2bx), (2by,2bx+1), (2by+1,2bx+1).
  for (std::size_t by = 0; by < 2; ++by)
    for (std::size_t bx = 0; bx < 3; ++bx) {
      const std::size_t members[4] = {2 * by * 6 + 2 * bx, (2 * by + 1) * 6 + 2 * bx, 2 * by * 6 + 2 * bx + 1,
                                      (2 * by + 1) * 6 + 2 * bx + 1};
      for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t j = 0; j < c; ++j) CHECK(merged.at(by * 3 + bx, m * c + j) == z.at(members[m], j));
    }

  auto normed = PatchMergingParams<double>::init(rng, c);
  CHECK(patch_merging(z, 4, 6, normed).shape() == Shape{6, 2 * c});
  CHECK_THROWS_AS(patch_merging(Tensor<double>::zeros({3, c}), 3, 1, normed), ConfigError);
}
