#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gpg {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    for (auto e : shape)
      if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_string(shape));
    if (shape_size(shape) != values.size())
      throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
  }

  static Tensor zeros(Shape s) {
    auto n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
  }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.back(); }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
};

/// A named trainable tensor with its gradient accumulator.
///
/// `reads` counts how many graphs have bound the parameter; it is the hook
/// used to verify that a training mode never touches parameters it should
/// not use.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;
  std::size_t reads = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.0) {}

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

enum class OpKind {
  Constant,
  Param,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  ScalarMul,
  Tanh,
  Sigmoid,
  Min,
  Softmax,
  Concat,
  Reshape,
  Slice,
  Sum,
  Pick,
  LogClamped,
  ScatterAdd,
  AddRow,
  GatherRow,
};

class Graph;

/// Handle to a node of a differentiation graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> values() const;
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }
  std::span<const double> grad() const;
  Tensor tensor() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every node's inputs precede it
/// and a single reverse sweep visits each node once.
class Graph {
 public:
  struct Node {
    OpKind kind = OpKind::Constant;
    std::vector<std::size_t> inputs;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    double scalar = 0.0;
    std::size_t offset = 0;
    std::vector<std::size_t> index;
    Parameter* param = nullptr;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  Var constant(Tensor t) {
    Node n;
    n.kind = OpKind::Constant;
    n.shape = std::move(t.shape);
    n.value = std::move(t.values);
    return push(std::move(n));
  }
  Var constant(Shape s, std::vector<double> v) { return constant(Tensor(std::move(s), std::move(v))); }
  Var scalar(double x) { return constant(Shape{1}, {x}); }

  /// Binds a parameter; repeated binds of the same parameter share one node.
  Var param(Parameter& p) {
    if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
    ++p.reads;
    Node n;
    n.kind = OpKind::Param;
    n.shape = p.value.shape;
    n.value = p.value.values;
    n.needs_grad = true;
    n.param = &p;
    Var v = push(std::move(n));
    bound_.emplace(&p, v.id());
    return v;
  }

  Node& mutable_node(std::size_t id) { return nodes_[id]; }

  Var push(Node n) {
    for (auto in : n.inputs)
      if (nodes_[in].needs_grad) n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  /// Reverse sweep from a scalar root. Parameter gradients are accumulated
  /// (+=) into each bound Parameter::grad.
  void backward(Var root);

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

inline const Shape& Var::shape() const { return graph_->node(id_).shape; }
inline std::size_t Var::size() const { return graph_->node(id_).value.size(); }
inline std::span<const double> Var::values() const { return graph_->node(id_).value; }
inline double Var::item() const {
  const auto& v = graph_->node(id_).value;
  if (v.size() != 1) throw DimensionError("item() on non-scalar " + shape_string(shape()));
  return v[0];
}
inline std::span<const double> Var::grad() const { return graph_->node(id_).grad; }
inline Tensor Var::tensor() const {
  const auto& n = graph_->node(id_);
  return Tensor(n.shape, n.value);
}

namespace detail {

inline Graph& same_graph(const Var& a, const Var& b) {
  if (a.graph() != b.graph()) throw std::logic_error("operands belong to different graphs");
  return *a.graph();
}

inline void require_same_size(const Var& a, const Var& b, const char* op) {
  if (a.size() != b.size())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

inline Graph::Node make_node(OpKind kind, std::initializer_list<Var> in, Shape shape) {
  Graph::Node n;
  n.kind = kind;
  for (const auto& v : in) n.inputs.push_back(v.id());
  n.shape = std::move(shape);
  return n;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

/// a[m x k] * b[k x n]. Rank-1 operands are treated as a row (left) or a
/// column (right).
inline Var matmul(const Var& a, const Var& b) {
  auto& g = detail::same_graph(a, b);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  std::size_t m = sa.size() == 2 ? sa[0] : 1;
  std::size_t k = sa.back();
  std::size_t kb = sb.size() == 2 ? sb[0] : sb[0];
  std::size_t n = sb.size() == 2 ? sb[1] : 1;
  if (k != kb || sa.size() > 2 || sb.size() > 2)
    throw DimensionError("matmul: inner dimensions differ " + shape_string(sa) + " * " + shape_string(sb));
  auto node = detail::make_node(OpKind::MatMul, {a, b}, Shape{m, n});
  node.value.assign(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = &bv[p * n];
      double* out = &node.value[i * n];
      for (std::size_t j = 0; j < n; ++j) out[j] += x * brow[j];
    }
  node.offset = k;
  return g.push(std::move(node));
}

inline Var add(const Var& a, const Var& b) {
  auto& g = detail::same_graph(a, b);
  detail::require_same_size(a, b, "add");
  auto node = detail::make_node(OpKind::Add, {a, b}, a.shape());
  auto av = a.values();
  auto bv = b.values();
  node.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) node.value[i] = av[i] + bv[i];
  return g.push(std::move(node));
}

inline Var sub(const Var& a, const Var& b) {
  auto& g = detail::same_graph(a, b);
  detail::require_same_size(a, b, "sub");
  auto node = detail::make_node(OpKind::Sub, {a, b}, a.shape());
  auto av = a.values();
  auto bv = b.values();
  node.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) node.value[i] = av[i] - bv[i];
  return g.push(std::move(node));
}

inline Var mul(const Var& a, const Var& b) {
  auto& g = detail::same_graph(a, b);
  detail::require_same_size(a, b, "mul");
  auto node = detail::make_node(OpKind::Mul, {a, b}, a.shape());
  auto av = a.values();
  auto bv = b.values();
  node.value.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) node.value[i] = av[i] * bv[i];
  return g.push(std::move(node));
}

inline Var scale(const Var& a, double c) {
  auto node = detail::make_node(OpKind::Scale, {a}, a.shape());
  node.scalar = c;
  for (double x : a.values()) node.value.push_back(c * x);
  return a.graph()->push(std::move(node));
}

inline Var add_scalar(const Var& a, double c) {
  auto node = detail::make_node(OpKind::AddScalar, {a}, a.shape());
  node.scalar = c;
  for (double x : a.values()) node.value.push_back(x + c);
  return a.graph()->push(std::move(node));
}

/// s[1] * x, with the single-element tensor broadcast over x.
inline Var scalar_mul(const Var& s, const Var& x) {
  auto& g = detail::same_graph(s, x);
  if (s.size() != 1) throw DimensionError("scalar_mul: scale operand must have one element");
  auto node = detail::make_node(OpKind::ScalarMul, {s, x}, x.shape());
  double c = s.values()[0];
  for (double v : x.values()) node.value.push_back(c * v);
  return g.push(std::move(node));
}

inline Var tanh(const Var& a) {
  auto node = detail::make_node(OpKind::Tanh, {a}, a.shape());
  for (double x : a.values()) node.value.push_back(std::tanh(x));
  return a.graph()->push(std::move(node));
}

inline Var sigmoid(const Var& a) {
  auto node = detail::make_node(OpKind::Sigmoid, {a}, a.shape());
  for (double x : a.values()) node.value.push_back(detail::sigmoid(x));
  return a.graph()->push(std::move(node));
}

/// Elementwise minimum. At ties the whole gradient goes to `a`.
inline Var minimum(const Var& a, const Var& b) {
  auto& g = detail::same_graph(a, b);
  detail::require_same_size(a, b, "min");
  auto node = detail::make_node(OpKind::Min, {a, b}, a.shape());
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) node.value.push_back(bv[i] < av[i] ? bv[i] : av[i]);
  return g.push(std::move(node));
}

/// Softmax over all elements, max-subtracted.
inline Var softmax(const Var& a) {
  auto av = a.values();
  if (av.empty()) throw DimensionError("softmax of empty input");
  auto node = detail::make_node(OpKind::Softmax, {a}, a.shape());
  double mx = *std::max_element(av.begin(), av.end());
  node.value.resize(av.size());
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    node.value[i] = std::exp(av[i] - mx);
    total += node.value[i];
  }
  for (auto& x : node.value) x /= total;
  return a.graph()->push(std::move(node));
}

/// Concatenation along the leading axis; trailing extents must agree.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero parts");
  Graph* g = parts[0].graph();
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  Graph::Node node;
  node.kind = OpKind::Concat;
  for (const auto& p : parts) {
    if (p.graph() != g) throw std::logic_error("concat operands belong to different graphs");
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail)
      throw DimensionError("concat: incompatible extents " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    lead += p.shape()[0];
    node.inputs.push_back(p.id());
    auto v = p.values();
    node.value.insert(node.value.end(), v.begin(), v.end());
  }
  node.shape = tail;
  node.shape.insert(node.shape.begin(), lead);
  return g->push(std::move(node));
}

inline Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw DimensionError("reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  auto node = detail::make_node(OpKind::Reshape, {a}, std::move(shape));
  auto v = a.values();
  node.value.assign(v.begin(), v.end());
  return a.graph()->push(std::move(node));
}

/// Flat slice [offset, offset + length) returned as a vector.
inline Var slice(const Var& a, std::size_t offset, std::size_t length) {
  if (length == 0 || offset + length > a.size())
    throw DimensionError("slice out of range on " + shape_string(a.shape()));
  auto node = detail::make_node(OpKind::Slice, {a}, Shape{length});
  node.offset = offset;
  auto v = a.values();
  node.value.assign(v.begin() + static_cast<std::ptrdiff_t>(offset),
                    v.begin() + static_cast<std::ptrdiff_t>(offset + length));
  return a.graph()->push(std::move(node));
}

inline Var sum(const Var& a) {
  auto node = detail::make_node(OpKind::Sum, {a}, Shape{1});
  double s = 0.0;
  for (double x : a.values()) s += x;
  node.value = {s};
  return a.graph()->push(std::move(node));
}

inline Var pick(const Var& a, std::size_t i) {
  if (i >= a.size()) throw DimensionError("pick index out of range");
  auto node = detail::make_node(OpKind::Pick, {a}, Shape{1});
  node.offset = i;
  node.value = {a.values()[i]};
  return a.graph()->push(std::move(node));
}

/// log(max(x, floor)); the clamp has zero gradient below the floor.
inline Var log_clamped(const Var& a, double floor = 1e-12) {
  auto node = detail::make_node(OpKind::LogClamped, {a}, a.shape());
  node.scalar = floor;
  for (double x : a.values()) node.value.push_back(std::log(std::max(x, floor)));
  return a.graph()->push(std::move(node));
}

/// out[index[i]] += a[i] over a zero vector of length `size`.
inline Var scatter_add(const Var& a, std::vector<std::size_t> index, std::size_t size) {
  if (index.size() != a.size()) throw DimensionError("scatter_add: index length mismatch");
  auto node = detail::make_node(OpKind::ScatterAdd, {a}, Shape{size});
  node.value.assign(size, 0.0);
  auto v = a.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= size) throw DimensionError("scatter_add: index out of range");
    node.value[index[i]] += v[i];
  }
  node.index = std::move(index);
  return a.graph()->push(std::move(node));
}

/// m[r x k] + v[k] added to every row.
inline Var add_row(const Var& m, const Var& v) {
  auto& g = detail::same_graph(m, v);
  std::size_t k = m.shape().back();
  if (v.size() != k) throw DimensionError("add_row: row width mismatch");
  auto node = detail::make_node(OpKind::AddRow, {m, v}, m.shape());
  auto mv = m.values();
  auto vv = v.values();
  node.value.resize(mv.size());
  for (std::size_t i = 0; i < mv.size(); ++i) node.value[i] = mv[i] + vv[i % k];
  return g.push(std::move(node));
}

/// Row r of a matrix as a vector (embedding lookup).
inline Var gather_row(const Var& m, std::size_t r) {
  if (m.shape().size() != 2 || r >= m.shape()[0]) throw DimensionError("gather_row: row out of range");
  std::size_t k = m.shape()[1];
  auto node = detail::make_node(OpKind::GatherRow, {m}, Shape{k});
  node.offset = r;
  auto mv = m.values();
  node.value.assign(mv.begin() + static_cast<std::ptrdiff_t>(r * k),
                    mv.begin() + static_cast<std::ptrdiff_t>((r + 1) * k));
  return m.graph()->push(std::move(node));
}

inline Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }

inline void Graph::backward(Var root) {
  if (root.graph() != this) throw std::logic_error("backward root belongs to another graph");
  if (root.size() != 1) throw DimensionError("backward requires a scalar root, got " + shape_string(root.shape()));
  for (auto& n : nodes_) n.grad.clear();
  auto ensure = [this](std::size_t id) -> std::vector<double>& {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  };
  ensure(root.id())[0] = 1.0;

  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    const auto& gout = n.grad;
    auto in = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };
    auto gin = [&](std::size_t k) -> std::vector<double>* {
      if (!nodes_[n.inputs[k]].needs_grad) return nullptr;
      return &ensure(n.inputs[k]);
    };

    switch (n.kind) {
      case OpKind::Constant:
        break;
      case OpKind::Param: {
        auto& pg = n.param->grad;
        for (std::size_t i = 0; i < gout.size(); ++i) pg[i] += gout[i];
        break;
      }
      case OpKind::MatMul: {
        const auto& av = in(0).value;
        const auto& bv = in(1).value;
        std::size_t k = n.offset;
        std::size_t m = av.size() / k;
        std::size_t cols = bv.size() / k;
        if (auto* ga = gin(0))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              const double* brow = &bv[p * cols];
              const double* grow = &gout[i * cols];
              for (std::size_t j = 0; j < cols; ++j) s += grow[j] * brow[j];
              (*ga)[i * k + p] += s;
            }
        if (auto* gb = gin(1))
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double x = av[i * k + p];
              if (x == 0.0) continue;
              double* brow = &(*gb)[p * cols];
              const double* grow = &gout[i * cols];
              for (std::size_t j = 0; j < cols; ++j) brow[j] += x * grow[j];
            }
        break;
      }
      case OpKind::Add:
        for (std::size_t k = 0; k < 2; ++k)
          if (auto* g = gin(k))
            for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i];
        break;
      case OpKind::Sub:
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i];
        if (auto* g = gin(1))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] -= gout[i];
        break;
      case OpKind::Mul: {
        const auto& av = in(0).value;
        const auto& bv = in(1).value;
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i] * bv[i];
        if (auto* g = gin(1))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i] * av[i];
        break;
      }
      case OpKind::Scale:
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += n.scalar * gout[i];
        break;
      case OpKind::AddScalar:
      case OpKind::Reshape:
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i];
        break;
      case OpKind::ScalarMul: {
        double c = in(0).value[0];
        const auto& xv = in(1).value;
        if (auto* g = gin(0)) {
          double s = 0.0;
          for (std::size_t i = 0; i < gout.size(); ++i) s += gout[i] * xv[i];
          (*g)[0] += s;
        }
        if (auto* g = gin(1))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += c * gout[i];
        break;
      }
      case OpKind::Tanh:
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      case OpKind::Sigmoid:
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i] * n.value[i] * (1.0 - n.value[i]);
        break;
      case OpKind::Min: {
        const auto& av = in(0).value;
        const auto& bv = in(1).value;
        auto* ga = gin(0);
        auto* gb = gin(1);
        for (std::size_t i = 0; i < gout.size(); ++i) {
          if (bv[i] < av[i]) {
            if (gb) (*gb)[i] += gout[i];
          } else if (ga) {
            (*ga)[i] += gout[i];
          }
        }
        break;
      }
      case OpKind::Softmax:
        if (auto* g = gin(0)) {
          double dotp = 0.0;
          for (std::size_t i = 0; i < gout.size(); ++i) dotp += gout[i] * n.value[i];
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += n.value[i] * (gout[i] - dotp);
        }
        break;
      case OpKind::Concat: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          std::size_t len = in(k).value.size();
          if (auto* g = gin(k))
            for (std::size_t i = 0; i < len; ++i) (*g)[i] += gout[off + i];
          off += len;
        }
        break;
      }
      case OpKind::Slice:
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[n.offset + i] += gout[i];
        break;
      case OpKind::Sum:
        if (auto* g = gin(0))
          for (auto& x : *g) x += gout[0];
        break;
      case OpKind::Pick:
        if (auto* g = gin(0)) (*g)[n.offset] += gout[0];
        break;
      case OpKind::LogClamped: {
        const auto& av = in(0).value;
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i)
            if (av[i] > n.scalar) (*g)[i] += gout[i] / av[i];
        break;
      }
      case OpKind::ScatterAdd:
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < n.index.size(); ++i) (*g)[i] += gout[n.index[i]];
        break;
      case OpKind::AddRow: {
        std::size_t k = in(1).value.size();
        if (auto* g = gin(0))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i];
        if (auto* g = gin(1))
          for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i % k] += gout[i];
        break;
      }
      case OpKind::GatherRow:
        if (auto* g = gin(0)) {
          std::size_t k = gout.size();
          for (std::size_t i = 0; i < k; ++i) (*g)[n.offset * k + i] += gout[i];
        }
        break;
    }
  }
}

}  // namespace gpg
