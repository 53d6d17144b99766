#include "eurnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace eurnet {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;
thread_local OpCounter* g_counter = nullptr;
thread_local std::string g_step;
unsigned g_threads = 1;

template <typename T>
void check_finite(const std::vector<T>& values) {
  for (const T v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value produced by tensor operation");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(1), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  auto n = shape_size(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  check_finite(values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows,
                            bool requires_grad) {
  std::vector<T> values;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({rows.size(), cols}, std::move(values), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values,
                                 std::vector<Tensor> parents,
                                 std::function<void(Node&)> backward_fn) {
  Tensor out = from(std::move(shape), std::move(values), false);
  if (!g_grad_enabled) return out;
  bool any = std::any_of(parents.begin(), parents.end(),
                         [](const Tensor& p) { return p.defined() && p.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  for (auto& p : parents) {
    if (p.defined()) out.node_->parents.push_back(p.node_);
  }
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (dim() != 2) throw DimensionError("rows() on non-matrix " + shape_str(shape()));
  return shape()[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  if (dim() != 2) throw DimensionError("cols() on non-matrix " + shape_str(shape()));
  return shape()[1];
}

template <typename T>
T Tensor<T>::at(std::size_t r, std::size_t c) const {
  return node_->data.at(r * cols() + c);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ContractError("item() on tensor with " + std::to_string(size()) + " elements");
  return node_->data[0];
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.assign(node_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
  Tensor t = detach();
  t.node_->requires_grad = requires_grad;
  return t;
}

template <typename T>
void backward(const Tensor<T>& loss, bool retain_graph) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  using Node = TensorNode<T>;
  auto root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch space for this pass; leaves accumulate.
  for (Node* node : order) {
    if (node->backward_fn) node->grad.assign(node->data.size(), T(0));
  }
  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward_fn) continue;
    for (auto& p : node->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    node->backward_fn(*node);
  }
  if (!retain_graph) {
    for (Node* node : order) {
      if (!node->backward_fn) continue;
      node->backward_fn = nullptr;
      node->parents.clear();
      node->grad.clear();
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&, bool);
template void backward<double>(const Tensor<double>&, bool);

// ---------------------------------------------------------------------------

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

OpCounter::OpCounter(std::vector<std::string> excluded_kinds)
    : excluded_(std::move(excluded_kinds)) {}

bool OpCounter::excludes(std::string_view kind) const {
  return std::find(excluded_.begin(), excluded_.end(), kind) != excluded_.end();
}

void OpCounter::add(std::string_view kind, std::uint64_t flops) {
  if (excludes(kind)) return;
  per_op_[std::string(kind)] += flops;
  if (!g_step.empty()) per_step_[g_step] += flops;
  total_ += flops;
}

void OpCounter::reset() {
  per_op_.clear();
  per_step_.clear();
  total_ = 0;
}

std::uint64_t OpCounter::op(const std::string& kind) const {
  auto it = per_op_.find(kind);
  return it == per_op_.end() ? 0 : it->second;
}

std::uint64_t OpCounter::step(const std::string& label) const {
  auto it = per_step_.find(label);
  return it == per_step_.end() ? 0 : it->second;
}

CounterScope::CounterScope(OpCounter& counter) : previous_(g_counter) { g_counter = &counter; }
CounterScope::~CounterScope() { g_counter = previous_; }

StepScope::StepScope(std::string label) : previous_(std::move(g_step)) { g_step = std::move(label); }
StepScope::~StepScope() { g_step = std::move(previous_); }

void count_flops(std::string_view kind, std::uint64_t flops) {
  if (g_counter) g_counter->add(kind, flops);
}

// ---------------------------------------------------------------------------

void set_num_threads(unsigned n) { g_threads = std::max(1u, n); }
unsigned num_threads() { return g_threads; }

void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  unsigned workers = g_threads;
  if (workers <= 1 || n < 2 * min_chunk) {
    body(0, n);
    return;
  }
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n / min_chunk));
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  for (unsigned w = 1; w < workers; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(0, std::min(n, chunk));
}

}  // namespace eurnet
