#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mushroom {

/// Storage precision. Values are held as double either way; F32 tensors are
/// rounded to single precision after every op so results match a float
/// pipeline bit-for-bit on the same platform.
enum class DType { F32, F64 };

std::string_view dtype_name(DType dtype);
DType parse_dtype(std::string_view name);

class Shape {
public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::vector<std::int64_t> dims);

  std::size_t rank() const { return dims_.size(); }
  std::int64_t operator[](std::size_t axis) const { return dims_.at(axis); }
  std::int64_t numel() const;
  const std::vector<std::int64_t>& dims() const { return dims_; }
  std::string str() const;

  bool operator==(const Shape&) const = default;

private:
  std::vector<std::int64_t> dims_;
};

namespace detail {
struct TensorImpl;
}

/// Shared handle to a dense row-major array. Copies alias the same storage.
/// Values produced by ops are never mutated afterwards; only leaf tensors
/// (parameters) expose mutable storage, for initializers and optimizers.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::F64);
  static Tensor full(Shape shape, double value, DType dtype = DType::F64);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          DType dtype = DType::F64);
  /// Leaf tensor that accumulates gradient during backward().
  static Tensor parameter(Shape shape, std::vector<double> values,
                          DType dtype = DType::F64);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  DType dtype() const;
  std::int64_t numel() const { return shape().numel(); }
  std::span<const double> data() const;
  double at(std::initializer_list<std::int64_t> index) const;
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  std::span<double> mutable_data();
  void set_requires_grad(bool flag);

  /// Same values, no graph history, no gradient.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Every tensor in the graph that
  /// requires grad receives accumulated gradient; the graph is released.
  void backward() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}

private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
  bool released = false;
};

struct TensorImpl {
  Shape shape;
  DType dtype = DType::F64;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  std::vector<double>& ensure_grad();
};

using BackwardFn = std::function<void(const TensorImpl& out)>;

/// Wraps freshly computed values as an op result: checks finiteness, rounds
/// to the storage precision and records the backward closure when any input
/// requires grad.
Tensor make_result(std::string_view op, Shape shape, DType dtype,
                   std::vector<double> values,
                   std::initializer_list<Tensor> inputs, BackwardFn backward);

void round_to_dtype(std::vector<double>& values, DType dtype);

} // namespace detail

} // namespace mushroom
