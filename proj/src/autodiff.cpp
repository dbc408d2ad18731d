#include "setgan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include <Eigen/Core>

namespace setgan {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

MatMap as_matrix(std::span<double> buf, std::size_t rows, std::size_t cols) {
  return MatMap(buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Tape& common_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw ContractError("operand is not recorded on a tape");
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
  return a.tape();
}

Tape& tape_of(Var x) {
  if (!x.valid()) throw ContractError("operand is not recorded on a tape");
  return x.tape();
}

// How the element at output index i maps onto each operand of a binary op.
struct Broadcast {
  enum class Kind { kSame, kScalar, kRow };
  Kind a = Kind::kSame;
  Kind b = Kind::kSame;
  std::size_t row_width = 1;
  Shape out_shape;

  std::size_t index(Kind kind, std::size_t i) const {
    switch (kind) {
      case Kind::kSame:
        return i;
      case Kind::kScalar:
        return 0;
      case Kind::kRow:
        return i % row_width;
    }
    return i;
  }
  std::size_t ia(std::size_t i) const { return index(a, i); }
  std::size_t ib(std::size_t i) const { return index(b, i); }
};

bool is_row_of(const Shape& row, const Shape& full) {
  if (full.size() != 2) return false;
  const std::size_t n = full[1];
  if (row.size() == 1) return row[0] == n;
  if (row.size() == 2) return row[0] == 1 && row[1] == n;
  return false;
}

Broadcast resolve_broadcast(const Shape& sa, const Shape& sb, const char* op) {
  Broadcast bc;
  if (sa == sb) {
    bc.out_shape = sa;
    return bc;
  }
  const std::size_t na = shape_size(sa);
  const std::size_t nb = shape_size(sb);
  if (nb == 1) {
    bc.b = Broadcast::Kind::kScalar;
    bc.out_shape = sa;
  } else if (na == 1) {
    bc.a = Broadcast::Kind::kScalar;
    bc.out_shape = sb;
  } else if (is_row_of(sb, sa)) {
    bc.b = Broadcast::Kind::kRow;
    bc.row_width = sa[1];
    bc.out_shape = sa;
  } else if (is_row_of(sa, sb)) {
    bc.a = Broadcast::Kind::kRow;
    bc.row_width = sb[1];
    bc.out_shape = sb;
  } else {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(sa) + " with " +
                         shape_string(sb));
  }
  return bc;
}

// Calls fn(i, ia, ib) for every output index with the matching operand
// indices, without per-element index arithmetic.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, std::size_t n, Fn fn) {
  using K = Broadcast::Kind;
  if (bc.a == K::kSame && bc.b == K::kSame) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
  } else if (bc.b == K::kRow) {
    const std::size_t w = bc.row_width;
    for (std::size_t r = 0; r < n; r += w)
      for (std::size_t c = 0; c < w; ++c) fn(r + c, r + c, c);
  } else if (bc.a == K::kRow) {
    const std::size_t w = bc.row_width;
    for (std::size_t r = 0; r < n; r += w)
      for (std::size_t c = 0; c < w; ++c) fn(r + c, c, r + c);
  } else if (bc.b == K::kScalar) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, 0);
  } else {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0, i);
  }
}

template <typename Forward, typename DerivA, typename DerivB>
Var binary_op(Var a, Var b, const char* name, Forward f, DerivA da, DerivB db) {
  Tape& tape = common_tape(a, b);
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  Broadcast bc = resolve_broadcast(va.shape(), vb.shape(), name);
  Tensor out(bc.out_shape);
  double* o = out.data().data();
  const double* pa = va.data().data();
  const double* pb = vb.data().data();
  for_each_broadcast(bc, out.size(), [&](std::size_t i, std::size_t ia, std::size_t ib) {
    o[i] = f(pa[ia], pb[ib]);
  });
  return tape.record(
      std::move(out), {a, b},
      [bc, da, db](const BackwardContext& ctx) {
        const double* x = ctx.input(0).data().data();
        const double* y = ctx.input(1).data().data();
        const double* g = ctx.out_grad().data();
        const std::size_t n = ctx.out_grad().size();
        if (ctx.needs_grad(0)) {
          double* ga = ctx.input_grad(0).data();
          for_each_broadcast(bc, n, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            ga[ia] += g[i] * da(x[ia], y[ib]);
          });
        }
        if (ctx.needs_grad(1)) {
          double* gb = ctx.input_grad(1).data();
          for_each_broadcast(bc, n, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            gb[ib] += g[i] * db(x[ia], y[ib]);
          });
        }
      },
      name);
}

// Elementwise unary op whose derivative is expressed through the input value
// and the output value.
template <typename Forward, typename Deriv>
Var unary_op(Var x, const char* name, Forward f, Deriv d) {
  Tape& tape = tape_of(x);
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(v[i]);
  return tape.record(
      std::move(out), {x},
      [d](const BackwardContext& ctx) {
        const Tensor& in = ctx.input(0);
        const Tensor& y = ctx.output();
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * d(in[i], y[i]);
      },
      name);
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
  Shape reduced;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size())
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  if (s.extent == 0) throw DomainError(std::string(op) + ": reduction over an empty axis");
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) s.reduced.push_back(shape[i]);
  return s;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t extent : shape_)
    if (extent == 0) throw DimensionError("tensor extents must be positive");
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  for (std::size_t extent : shape_)
    if (extent == 0) throw DimensionError("tensor extents must be positive");
  if (data_.size() != shape_size(shape_))
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const { return shape_.empty() ? 1 : shape_[0]; }

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : size() / shape_[0]; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on a tensor of shape " + shape_string(shape_));
  return data_[0];
}

void Tensor::reshape(Shape shape) {
  if (shape_size(shape) != size())
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  shape_ = std::move(shape);
}

std::span<double> Tensor::ensure_grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("value() on an unrecorded Var");
  return tape_->value(*this);
}

void Tape::check_owned(Var v) const {
  if (!v.valid() || &v.tape() != this || v.id() >= nodes_.size())
    throw ContractError("Var does not belong to this tape");
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id()].value();
}

bool Tape::needs_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id()].needs_grad;
}

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::parameter(Tensor& param) {
  Node node;
  node.external = &param;
  if (param.requires_grad()) {
    node.param = &param;
    node.needs_grad = true;
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward,
                 const char* op_name) {
  const auto values = value.data();
  if (!Eigen::Map<const Eigen::ArrayXd>(values.data(), static_cast<Eigen::Index>(values.size()))
           .allFinite())
    throw NumericalError(std::string(op_name) + ": non-finite value in forward pass");
  Node node;
  node.owned = std::move(value);
  node.inputs.reserve(inputs.size());
  for (Var in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (backward_done_) throw ContractError("backward() called twice on the same tape");
  if (value(loss).size() != 1)
    throw ContractError("backward() requires a scalar loss, got shape " +
                        shape_string(value(loss).shape()));
  backward_done_ = true;

  std::vector<Buffer> grads(loss.id() + 1);
  grads[loss.id()].assign(1, 1.0);

  BackwardContext ctx;
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (grads[id].empty() || !node.needs_grad) continue;
    if (node.param) {
      auto dst = node.param->ensure_grad();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += grads[id][i];
      continue;
    }
    if (!node.backward) continue;
    ctx.out_grad_ = grads[id];
    ctx.output_ = &node.value();
    ctx.inputs_.clear();
    ctx.input_grads_.clear();
    for (std::uint32_t in : node.inputs) {
      const Node& src = nodes_[in];
      ctx.inputs_.push_back(&src.value());
      if (src.needs_grad) {
        if (grads[in].empty()) grads[in].assign(src.value().size(), 0.0);
        ctx.input_grads_.emplace_back(grads[in]);
      } else {
        ctx.input_grads_.emplace_back();
      }
    }
    node.backward(ctx);
    grads[id].clear();
    grads[id].shrink_to_fit();
  }
}

// ---------------------------------------------------------------------------
// Primitives

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var matmul(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.rank() != 2 || vb.rank() != 2)
    throw DimensionError("matmul: operands must be rank 2, got " + shape_string(va.shape()) +
                         " and " + shape_string(vb.shape()));
  if (va.dim(1) != vb.dim(0))
    throw DimensionError("matmul: inner extents differ: " + shape_string(va.shape()) + " x " +
                         shape_string(vb.shape()));
  const std::size_t m = va.dim(0), n = vb.dim(1);
  Tensor out(Shape{m, n});
  as_matrix(out.data(), m, n).noalias() = as_matrix(va) * as_matrix(vb);
  return tape.record(
      std::move(out), {a, b},
      [](const BackwardContext& ctx) {
        const Tensor& x = ctx.input(0);
        const Tensor& y = ctx.input(1);
        ConstMatMap g(ctx.out_grad().data(), static_cast<Eigen::Index>(x.dim(0)),
                      static_cast<Eigen::Index>(y.dim(1)));
        if (ctx.needs_grad(0))
          as_matrix(ctx.input_grad(0), x.dim(0), x.dim(1)).noalias() +=
              g * as_matrix(y).transpose();
        if (ctx.needs_grad(1))
          as_matrix(ctx.input_grad(1), y.dim(0), y.dim(1)).noalias() +=
              as_matrix(x).transpose() * g;
      },
      "matmul");
}

Var affine(Var x, Var w, Var b) {
  Tape& tape = common_tape(x, w);
  common_tape(x, b);
  const Tensor& vx = x.value();
  const Tensor& vw = w.value();
  const Tensor& vb = b.value();
  if (vx.rank() != 2 || vw.rank() != 2 || vx.dim(1) != vw.dim(0))
    throw DimensionError("affine: cannot multiply " + shape_string(vx.shape()) + " by " +
                         shape_string(vw.shape()));
  const std::size_t m = vx.dim(0), n = vw.dim(1);
  if (vb.size() != n || !(vb.rank() == 1 || (vb.rank() == 2 && vb.dim(0) == 1)))
    throw DimensionError("affine: bias " + shape_string(vb.shape()) + " does not match " +
                         std::to_string(n) + " outputs");
  Tensor out(Shape{m, n});
  auto o = as_matrix(out.data(), m, n);
  o.noalias() = as_matrix(vx) * as_matrix(vw);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(vb.data().data(), static_cast<Eigen::Index>(n));
  return tape.record(
      std::move(out), {x, w, b},
      [](const BackwardContext& ctx) {
        const Tensor& in = ctx.input(0);
        const Tensor& wt = ctx.input(1);
        const auto rows = static_cast<Eigen::Index>(in.dim(0));
        const auto cols = static_cast<Eigen::Index>(wt.dim(1));
        ConstMatMap g(ctx.out_grad().data(), rows, cols);
        if (ctx.needs_grad(0))
          as_matrix(ctx.input_grad(0), in.dim(0), in.dim(1)).noalias() +=
              g * as_matrix(wt).transpose();
        if (ctx.needs_grad(1))
          as_matrix(ctx.input_grad(1), wt.dim(0), wt.dim(1)).noalias() +=
              as_matrix(in).transpose() * g;
        if (ctx.needs_grad(2))
          Eigen::Map<Eigen::RowVectorXd>(ctx.input_grad(2).data(), cols) += g.colwise().sum();
      },
      "affine");
}

Var add(Var a, Var b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var scale(Var x, double factor) {
  return unary_op(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
  return unary_op(
      x, "add_scalar", [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Var exp(Var x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().data())
    if (!(v > 0.0)) throw DomainError("log: non-positive argument");
  return unary_op(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sigmoid(Var x) {
  return unary_op(
      x, "sigmoid", [](double v) { return logistic(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
  return unary_op(
      x, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var sum(Var x, std::size_t axis) {
  Tape& tape = tape_of(x);
  const Tensor& v = x.value();
  AxisSplit s = split_axis(v.shape(), axis, "sum");
  Tensor out(s.reduced);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += v[(o * s.extent + e) * s.inner + i];
  return tape.record(
      std::move(out), {x},
      [s](const BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t i = 0; i < s.inner; ++i)
              gx[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i];
      },
      "sum");
}

Var mean(Var x, std::size_t axis) {
  const std::size_t extent = split_axis(x.shape(), axis, "mean").extent;
  return scale(sum(x, axis), 1.0 / static_cast<double>(extent));
}

Var max(Var x, std::size_t axis) {
  Tape& tape = tape_of(x);
  const Tensor& v = x.value();
  AxisSplit s = split_axis(v.shape(), axis, "max");
  Tensor out(s.reduced);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = (o * s.extent) * s.inner + i;
      for (std::size_t e = 1; e < s.extent; ++e) {
        const std::size_t idx = (o * s.extent + e) * s.inner + i;
        if (v[idx] > v[best]) best = idx;
      }
      out[o * s.inner + i] = v[best];
      argmax[o * s.inner + i] = best;
    }
  }
  return tape.record(
      std::move(out), {x},
      [argmax = std::move(argmax)](const BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        for (std::size_t j = 0; j < g.size(); ++j) gx[argmax[j]] += g[j];
      },
      "max");
}

Var sum(Var x) {
  Tape& tape = tape_of(x);
  const Tensor& v = x.value();
  double total = 0.0;
  for (double e : v.data()) total += e;
  return tape.record(
      Tensor::scalar(total), {x},
      [](const BackwardContext& ctx) {
        const double g = ctx.out_grad()[0];
        for (double& e : ctx.input_grad(0)) e += g;
      },
      "sum_all");
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of(x);
  Tensor out = x.value();
  out.clear_grad();
  out.set_requires_grad(false);
  out.reshape(std::move(shape));
  return tape.record(
      std::move(out), {x},
      [](const BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

Var concat_cols(Var a, Var b) {
  Tape& tape = common_tape(a, b);
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(0) != vb.dim(0))
    throw DimensionError("concat_cols: incompatible shapes " + shape_string(va.shape()) + " and " +
                         shape_string(vb.shape()));
  const std::size_t m = va.dim(0), p = va.dim(1), q = vb.dim(1);
  Tensor out(Shape{m, p + q});
  for (std::size_t r = 0; r < m; ++r) {
    std::copy_n(va.data().data() + r * p, p, &out[r * (p + q)]);
    std::copy_n(vb.data().data() + r * q, q, &out[r * (p + q) + p]);
  }
  return tape.record(
      std::move(out), {a, b},
      [m, p, q](const BackwardContext& ctx) {
        auto g = ctx.out_grad();
        for (std::size_t r = 0; r < m; ++r) {
          if (ctx.needs_grad(0)) {
            auto ga = ctx.input_grad(0);
            for (std::size_t c = 0; c < p; ++c) ga[r * p + c] += g[r * (p + q) + c];
          }
          if (ctx.needs_grad(1)) {
            auto gb = ctx.input_grad(1);
            for (std::size_t c = 0; c < q; ++c) gb[r * q + c] += g[r * (p + q) + p + c];
          }
        }
      },
      "concat_cols");
}

Var gather_rows(Var x, std::span<const std::uint32_t> rows) {
  Tape& tape = tape_of(x);
  const Tensor& v = x.value();
  if (v.rank() != 2) throw DimensionError("gather_rows: operand must be rank 2");
  if (rows.empty()) throw DimensionError("gather_rows: empty row selection");
  const std::size_t n = v.dim(0), w = v.dim(1);
  Tensor out(Shape{rows.size(), w});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("gather_rows: row index out of range");
    std::copy_n(v.data().data() + rows[r] * w, w, &out[r * w]);
  }
  std::vector<std::uint32_t> index(rows.begin(), rows.end());
  return tape.record(
      std::move(out), {x},
      [index = std::move(index), w](const BackwardContext& ctx) {
        auto g = ctx.out_grad();
        auto gx = ctx.input_grad(0);
        for (std::size_t r = 0; r < index.size(); ++r)
          for (std::size_t c = 0; c < w; ++c) gx[index[r] * w + c] += g[r * w + c];
      },
      "gather_rows");
}

}  // namespace setgan
