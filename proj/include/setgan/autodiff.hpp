#pragma once

// Minimal define-by-run reverse-mode differentiation over dense 64-bit
// tensors. A Tape records every primitive applied during one forward pass;
// Tape::backward walks the records in reverse exactly once.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "setgan/errors.hpp"

namespace setgan {

using Shape = std::vector<std::size_t>;

// Cache-line aligned storage, so that vectorized kernels see the same
// alignment (and hence the same summation order) on every run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. Parameters keep their accumulated gradient in
// grad(); an empty gradient means "not populated".
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  // Rows and columns of the rank-2 view: leading extent times the rest.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  void reshape(Shape shape);

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  // Allocates a zero gradient if none is present.
  std::span<double> ensure_grad();
  void clear_grad() { grad_.clear(); }

 private:
  Shape shape_;
  Buffer data_;
  Buffer grad_;
  bool requires_grad_ = false;
};

class Tape;

// Handle to a tensor recorded on a tape.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// What a backward function sees: the output value and its gradient, plus the
// values of each input and a gradient buffer for every input that needs one
// (empty span otherwise).
class BackwardContext {
 public:
  std::span<const double> out_grad() const { return out_grad_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t i) const { return *inputs_[i]; }
  std::span<double> input_grad(std::size_t i) const { return input_grads_[i]; }
  bool needs_grad(std::size_t i) const { return !input_grads_[i].empty(); }

 private:
  friend class Tape;
  std::span<const double> out_grad_;
  const Tensor* output_ = nullptr;
  std::vector<const Tensor*> inputs_;
  std::vector<std::span<double>> input_grads_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf holding a copy of `value`; never receives a gradient.
  Var constant(Tensor value);
  // Leaf referring to `param` without copying it. When param.requires_grad()
  // the leaf accumulates into param.grad() during backward; otherwise it
  // behaves as a constant. `param` must outlive the tape.
  Var parameter(Tensor& param);
  // Records an operation output. Throws NumericalError when `value` holds a
  // non-finite entry.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward,
             const char* op_name);

  // Accumulates d(loss)/d(parameter) into every reachable parameter. Only one
  // backward pass per tape.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* param = nullptr;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    const Tensor& value() const { return external ? *external : owned; }
  };

  void check_owned(Var v) const;

  std::deque<Node> nodes_;  // stable addresses across appends
  bool backward_done_ = false;
};

// Primitive operations. Every op records onto the tape of its first operand;
// all operands must live on the same tape.

Var matmul(Var a, Var b);
// x W + b with the bias row broadcast: [m x p], [p x n], [n] -> [m x n].
Var affine(Var x, Var w, Var b);

// Binary ops accept equal shapes, a scalar operand, or a row operand of shape
// [n] / [1 x n] broadcast over the rows of an [m x n] operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);
Var exp(Var x);
Var log(Var x);  // DomainError on non-positive entries
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var leaky_relu(Var x, double slope);

// Reductions along one axis remove that axis.
Var sum(Var x, std::size_t axis);
Var mean(Var x, std::size_t axis);
// Routes the gradient to the first maximal element along the axis.
Var max(Var x, std::size_t axis);
// Whole-tensor reductions to a scalar.
Var sum(Var x);
Var mean(Var x);

Var reshape(Var x, Shape shape);
// [m x p] and [m x q] -> [m x (p + q)].
Var concat_cols(Var a, Var b);
// Rows of a rank-2 tensor selected (with repetition) by index.
Var gather_rows(Var x, std::span<const std::uint32_t> rows);

// Numerically stable logistic function.
double logistic(double x);

}  // namespace setgan
