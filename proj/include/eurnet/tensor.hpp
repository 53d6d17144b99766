#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eurnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a caller violates an operation precondition that is not a
/// shape problem (non-scalar loss, |R| = 0, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised for invalid configuration values (even kernel sizes, odd grids).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid input data (non-finite coordinates, empty datasets, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

/// Dense row-major array participating in reverse-mode differentiation.
///
/// A Tensor is a cheap handle: copies share the underlying node. Values are
/// never modified by operations; only optimizers write to leaf parameters
/// through mutable_data().
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows,
                       bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  // Result constructor for operations. Records the backward closure only when
  // gradient recording is enabled and at least one parent requires grad.
  static Tensor make_result(Shape shape, std::vector<T> values,
                            std::vector<Tensor> parents,
                            std::function<void(Node&)> backward_fn);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }
  T at(std::size_t i) const { return node_->data.at(i); }
  T at(std::size_t r, std::size_t c) const;
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// Same values, no history, no grad requirement.
  Tensor detach() const;
  /// Deep copy of values as a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  std::shared_ptr<Node> node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Populates gradients of every requires_grad leaf reachable from `loss`.
/// The recorded graph is released afterwards unless retain_graph is set.
template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph = false);

// ---------------------------------------------------------------------------
// Gradient recording mode

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// FLOPs accounting

/// Floating-point operation counter. Attach to the current thread with a
/// CounterScope; operations then report their cost by kind, and by the active
/// step label when one is set with StepScope.
class OpCounter {
 public:
  OpCounter() = default;
  explicit OpCounter(std::vector<std::string> excluded_kinds);

  void add(std::string_view kind, std::uint64_t flops);
  void reset();

  std::uint64_t total() const { return total_; }
  const std::map<std::string, std::uint64_t>& per_op() const { return per_op_; }
  const std::map<std::string, std::uint64_t>& per_step() const { return per_step_; }
  std::uint64_t op(const std::string& kind) const;
  std::uint64_t step(const std::string& label) const;
  bool excludes(std::string_view kind) const;

 private:
  std::map<std::string, std::uint64_t> per_op_;
  std::map<std::string, std::uint64_t> per_step_;
  std::vector<std::string> excluded_;
  std::uint64_t total_ = 0;
};

class CounterScope {
 public:
  explicit CounterScope(OpCounter& counter);
  ~CounterScope();
  CounterScope(const CounterScope&) = delete;
  CounterScope& operator=(const CounterScope&) = delete;

 private:
  OpCounter* previous_;
};

class StepScope {
 public:
  explicit StepScope(std::string label);
  ~StepScope();
  StepScope(const StepScope&) = delete;
  StepScope& operator=(const StepScope&) = delete;

 private:
  std::string previous_;
};

/// Reports `flops` of `kind` to the thread's active counter, if any.
void count_flops(std::string_view kind, std::uint64_t flops);

// ---------------------------------------------------------------------------
// Worker control

/// Caps the number of worker threads used by row-parallel kernels. Results do
/// not depend on this value: work is split over output rows only.
void set_num_threads(unsigned n);
unsigned num_threads();

void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace eurnet
