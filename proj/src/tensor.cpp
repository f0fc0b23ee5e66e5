#include "mushroom/tensor.hpp"

#include "mushroom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace mushroom {

namespace {
thread_local bool g_grad_enabled = true;

void check_finite(std::string_view op, const std::vector<double>& values,
                  std::string_view what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite " + std::string(what) + " in " +
                         std::string(op));
    }
  }
}
} // namespace

std::string_view dtype_name(DType dtype) {
  return dtype == DType::F32 ? "f32" : "f64";
}

DType parse_dtype(std::string_view name) {
  if (name == "f32") return DType::F32;
  if (name == "f64") return DType::F64;
  throw ArgumentError("unknown dtype '" + std::string(name) + "'");
}

Shape::Shape(std::initializer_list<std::int64_t> dims) : Shape(std::vector<std::int64_t>(dims)) {}

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
  for (auto d : dims_) {
    if (d <= 0) throw ShapeError("shape extents must be positive, got " + str());
  }
}

std::int64_t Shape::numel() const {
  return std::accumulate(dims_.begin(), dims_.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ')';
  return os.str();
}

namespace detail {

std::vector<double>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void round_to_dtype(std::vector<double>& values, DType dtype) {
  if (dtype != DType::F32) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

Tensor make_result(std::string_view op, Shape shape, DType dtype,
                   std::vector<double> values,
                   std::initializer_list<Tensor> inputs, BackwardFn backward) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeError(std::string(op) + ": produced " +
                     std::to_string(values.size()) + " values for shape " +
                     shape.str());
  }
  round_to_dtype(values, dtype);
  check_finite(op, values, "value");

  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(values);

  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) needs_grad = true;
    }
  }
  if (needs_grad) {
    auto node = std::make_shared<Node>();
    node->op = std::string(op);
    for (const auto& t : inputs) {
      if (t.defined()) node->inputs.push_back(t.impl());
    }
    node->backward = std::move(backward);
    impl->requires_grad = true;
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

} // namespace detail

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  auto n = static_cast<std::size_t>(shape.numel());
  return from_data(std::move(shape), std::vector<double>(n, value), dtype);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, DType dtype) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeError("data length " + std::to_string(values.size()) +
                     " does not match shape " + shape.str());
  }
  detail::round_to_dtype(values, dtype);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values, DType dtype) {
  Tensor t = from_data(std::move(shape), std::move(values), dtype);
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }
DType Tensor::dtype() const { return impl_->dtype; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& dims = shape().dims();
  if (index.size() != dims.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) +
                     " does not match shape " + shape().str());
  }
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= dims[axis]) throw ShapeError("index out of range for " + shape().str());
    flat = flat * dims[axis] + i;
    ++axis;
  }
  return impl_->data[static_cast<std::size_t>(flat)];
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

std::span<double> Tensor::mutable_data() {
  if (!is_leaf()) throw Error("mutable_data() is only available on leaf tensors");
  return impl_->data;
}

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw Error("set_requires_grad() is only available on leaf tensors");
  impl_->requires_grad = flag;
}

Tensor Tensor::detach() const {
  return from_data(shape(), impl_->data, dtype());
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ArgumentError("backward() needs a scalar loss, got shape " + shape().str());
  }
  if (!requires_grad()) throw ArgumentError("backward() on a tensor that does not require grad");
  if (impl_->grad_fn && impl_->grad_fn->released) {
    throw Error("graph already consumed by a previous backward()");
  }

  // Iterative post-order DFS yields a topological order (inputs first).
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& fn = node->grad_fn;
    if (fn && next < fn->inputs.size()) {
      detail::TensorImpl* child = fn->inputs[next++].get();
      if (child->grad_fn && child->grad_fn->released) {
        throw Error("graph already consumed by a previous backward()");
      }
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = *it;
    if (!node->grad_fn) continue;
    node->ensure_grad();
    node->grad_fn->backward(*node);
    for (const auto& in : node->grad_fn->inputs) {
      if (!in->requires_grad || in->grad.empty()) continue;
      detail::round_to_dtype(in->grad, in->dtype);
      check_finite(node->grad_fn->op, in->grad, "gradient");
    }
  }
  for (detail::TensorImpl* node : order) {
    if (!node->grad_fn) continue;
    node->grad_fn->backward = nullptr;
    node->grad_fn->inputs.clear();
    node->grad_fn->released = true;
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

} // namespace mushroom
