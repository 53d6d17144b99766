#pragma once

#include <functional>
#include <random>
#include <vector>

#include "eurnet/tensor.hpp"

namespace eurnet::verify {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
};

/// Central finite-difference check of every element of every input.
///
/// `loss` must rebuild the scalar loss from the current values of `inputs`.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult gradcheck(const std::function<Tensor<double>()>& loss,
                          std::vector<Tensor<double>> inputs, double h = 1e-5,
                          double floor = 1e-3);

/// Uniform [-scale, scale) values.
template <typename T>
Tensor<T> random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0,
                        bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<T> values(shape_size(shape));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
Tensor<T> identity(std::size_t n) {
  std::vector<T> values(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i) values[i * n + i] = T(1);
  return Tensor<T>::from({n, n}, std::move(values));
}

/// 64-bit copy of any tensor's values.
template <typename T>
std::vector<double> to_double(const Tensor<T>& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

double max_abs_diff(std::span<const double> a, std::span<const double> b);
double max_rel_diff(std::span<const double> a, std::span<const double> b, double floor = 1e-12);

}  // namespace eurnet::verify
