#include <cmath>
#include <random>

#include "doctest.h"
#include "eurnet/ops.hpp"
#include "eurnet_verify/gradcheck.hpp"

using namespace eurnet;
using verify::gradcheck;
using verify::random_tensor;

namespace {

std::vector<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) out[i * n + j] += a.at(i, p) * b.at(p, j);
  return out;
}

// Direct sliding window over a zero-padded copy of the input.
std::vector<double> naive_depthwise(const std::vector<double>& x, std::size_t h, std::size_t w,
                                    std::size_t c, const std::vector<double>& ker, std::size_t k) {
  const std::size_t pad = k / 2, ph = h + 2 * pad, pw = w + 2 * pad;
  std::vector<double> padded(ph * pw * c, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x0 = 0; x0 < w; ++x0)
      for (std::size_t ch = 0; ch < c; ++ch)
        padded[((y + pad) * pw + x0 + pad) * c + ch] = x[(y * w + x0) * c + ch];
  std::vector<double> out(h * w * c, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x0 = 0; x0 < w; ++x0)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j)
            acc += ker[(i * k + j) * c + ch] * padded[((y + i) * pw + x0 + j) * c + ch];
        out[(y * w + x0) * c + ch] = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("matmul identity and hand example") {
  auto i2 = verify::identity<double>(2);
  auto m = Tensor<double>::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(i2, m).values() == m.values());

  OpCounter counter;
  CounterScope scope(counter);
  auto c = matmul(Tensor<double>::matrix({{1, 2}}), Tensor<double>::matrix({{3}, {4}}));
  CHECK(c.item() == 11.0);
  CHECK(counter.total() == 4);
  CHECK(counter.op("matmul") == 4);
}

TEST_CASE("matmul matches triple loop oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_tensor<double>(rng, {3, 3});
    auto b = random_tensor<double>(rng, {3, 3});
    auto expected = naive_matmul(a, b);
    CHECK(verify::max_abs_diff(matmul(a, b).values(), expected) <= 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched inner dimension") {
  CHECK_THROWS_AS(matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3})), DimensionError);
}

TEST_CASE("matmul associativity with identity is exact") {
  std::mt19937_64 rng(11);
  auto a = random_tensor<double>(rng, {4, 3});
  auto b = random_tensor<double>(rng, {3, 5});
  auto i3 = verify::identity<double>(3);
  auto ab = matmul(a, b).values();
  CHECK(matmul(matmul(a, i3), b).values() == ab);
  CHECK(matmul(a, matmul(i3, b)).values() == ab);
}

TEST_CASE("hadamard cases") {
  auto a = Tensor<double>::matrix({{2, 3}});
  CHECK(hadamard(a, Tensor<double>::ones({1, 2})).values() == a.values());
  CHECK(hadamard(a, Tensor<double>::matrix({{4, 5}})).values() == std::vector<double>{8, 15});
  auto z = hadamard(Tensor<double>::zeros({2, 2}), Tensor<double>::matrix({{1e3, -7}, {2, 9}}));
  for (double v : z.values()) CHECK(v == 0.0);
  // Row broadcast.
  auto rows = hadamard(Tensor<double>::matrix({{1, 2}, {3, 4}}), Tensor<double>::matrix({{10, 100}}));
  CHECK(rows.values() == std::vector<double>{10, 200, 30, 400});
  CHECK_THROWS_AS(hadamard(Tensor<double>::zeros({2, 2}), Tensor<double>::zeros({3, 2})), DimensionError);
}

TEST_CASE("hadamard counts one flop per output element") {
  OpCounter counter;
  CounterScope scope(counter);
  hadamard(Tensor<float>::ones({3, 4}), Tensor<float>::ones({1, 4}));
  CHECK(counter.op("hadamard") == 12);
}

TEST_CASE("depthwise conv: delta kernel, single pixel, oracle") {
  std::mt19937_64 rng(3);
  auto x = random_tensor<float>(rng, {4, 4, 2});
  std::vector<float> delta(9 * 2, 0.0f);
  delta[4 * 2 + 0] = delta[4 * 2 + 1] = 1.0f;
  auto id = depthwise_conv2d(x, Tensor<float>::from({3, 3, 2}, delta));
  CHECK(id.values() == x.values());

  auto single = depthwise_conv2d(Tensor<float>::full({1, 1, 1}, 2.5f), Tensor<float>::ones({3, 3, 1}));
  CHECK(single.item() == 2.5f);

  auto ker = random_tensor<float>(rng, {3, 3, 2});
  OpCounter counter;
  Tensor<float> out;
  {
    CounterScope scope(counter);
    out = depthwise_conv2d(x, ker);
  }
  CHECK(counter.total() == 2ULL * 4 * 4 * 2 * 9);
  auto expected = naive_depthwise(verify::to_double(x), 4, 4, 2, verify::to_double(ker), 3);
  CHECK(verify::max_abs_diff(verify::to_double(out), expected) <= 1e-6);

  CHECK_THROWS_AS(depthwise_conv2d(x, Tensor<float>::ones({2, 2, 2})), ConfigError);
  CHECK_THROWS_AS(depthwise_conv2d(x, Tensor<float>::ones({3, 3, 3})), DimensionError);
}

TEST_CASE("backward on linear and quadratic losses") {
  auto a = Tensor<double>::matrix({{1, -2}, {3, 0.5}}, true);
  backward(sum(a));
  for (double g : a.grad()) CHECK(g == 1.0);

  a.zero_grad();
  backward(sum(hadamard(a, a)));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.grad()[i] == 2.0 * a.at(i));

  CHECK_THROWS_AS(backward(a), ContractError);
}

TEST_CASE("retain_graph allows a second backward") {
  auto a = Tensor<double>::matrix({{1, 2}}, true);
  auto loss = sum(hadamard(a, a));
  backward(loss, true);
  backward(loss, true);
  CHECK(a.grad()[0] == doctest::Approx(4.0));
  CHECK(a.grad()[1] == doctest::Approx(8.0));
}

TEST_CASE("non-finite results raise") {
  auto big = Tensor<float>::full({1, 1}, 3e38f);
  CHECK_THROWS_AS(add(big, big), NumericError);
  CHECK_THROWS_AS(Tensor<double>::from({1}, {NAN}), NumericError);
}

TEST_CASE("op counter is deterministic and excludes configured kinds") {
  auto run = [](OpCounter& counter) {
    CounterScope scope(counter);
    std::mt19937_64 rng(5);
    auto x = random_tensor<float>(rng, {5, 4});
    auto w = random_tensor<float>(rng, {4, 4});
    auto b = random_tensor<float>(rng, {1, 4});
    gelu(add_bias(matmul(x, w), b));
  };
  OpCounter first, second, no_bias({op_kind::kBiasAdd});
  run(first);
  run(second);
  run(no_bias);
  CHECK(first.per_op() == second.per_op());
  CHECK(first.op(op_kind::kBiasAdd) == 20);
  CHECK(no_bias.op(op_kind::kBiasAdd) == 0);
  CHECK(no_bias.total() == first.total() - 20);
  std::uint64_t summed = 0;
  for (const auto& [kind, flops] : first.per_op()) summed += flops;
  CHECK(summed == first.total());
}

TEST_CASE("gradients of every primitive match finite differences") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto a = random_tensor<double>(rng, {3, 4});
    auto b = random_tensor<double>(rng, {4, 2});
    auto c = random_tensor<double>(rng, {3, 4});
    auto row = random_tensor<double>(rng, {1, 4});
    auto col = random_tensor<double>(rng, {3, 1});
    auto gamma = random_tensor<double>(rng, {1, 4});
    auto beta = random_tensor<double>(rng, {1, 4});
    auto img = random_tensor<double>(rng, {3, 3, 2});
    auto ker = random_tensor<double>(rng, {3, 3, 2});
    auto weights = random_tensor<double>(rng, {3, 2});
    auto targets = Tensor<double>::from({3, 2}, {1, 0, 0, 1, 1, 1});
    std::vector<std::size_t> idx{2, 0, 2};
    std::vector<std::size_t> labels{1, 0, 1};

    auto loss = [&]() {
      auto m = matmul(hadamard(a, row), b);
      auto g = gelu(add(m, weights));
      auto s = sigmoid(sub(hadamard(c, a), outer(col, row)));
      auto ln = layer_norm(relu(add(s, c)), gamma, beta);
      auto conv = reshape(depthwise_conv2d(img, ker), {9, 2});
      auto cat = concat_cols<double>({g, slice_cols(ln, 1, 2)});
      auto gathered = gather_rows(cat, idx);
      auto stacked = concat_rows<double>({slice_cols(gathered, 1, 2), slice_rows(conv, 3, 2)});
      auto pooled = add(mean_rows(stacked), sum_rows(scale(slice_cols(ln, 0, 2), 0.3)));
      auto ce = cross_entropy(matmul(gathered, Tensor<double>::ones({4, 3})), labels);
      auto bce = bce_with_logits(g, targets);
      return add(add(sum(hadamard(pooled, pooled)), mean(hadamard(stacked, stacked))), add(ce, bce));
    };
    auto r = gradcheck(loss, {a, b, c, row, col, gamma, beta, img, ker, weights});
    CAPTURE(seed);
    CAPTURE(r.worst_input);
    CHECK(r.max_rel_error < 1e-6);
  }
}
