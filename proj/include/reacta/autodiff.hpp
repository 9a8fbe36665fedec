#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "reacta/tensor.hpp"

namespace reacta {

// Named trainable tensor. Values and gradients are float32; the tape below
// accumulates in float64 and casts on write-back.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
    grad = Tensor(value.shape);
  }

  void zero_grad() {
    for (auto& g : grad.values) g = 0.0f;
  }
};

// Registration-ordered parameter collection; the order defines checkpoint
// layout and optimizer state alignment.
class ParamStore {
public:
  Param& add(const std::string& name, Tensor init) {
    if (by_name_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    items_.push_back(std::make_unique<Param>(name, std::move(init)));
    by_name_[name] = items_.size() - 1;
    return *items_.back();
  }

  Param& at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("ParamStore: no param " + name);
    return *items_[it->second];
  }

  std::size_t size() const { return items_.size(); }
  Param& operator[](std::size_t i) { return *items_[i]; }
  const Param& operator[](std::size_t i) const { return *items_[i]; }

  void zero_grads() {
    for (auto& p : items_) p->zero_grad();
  }

private:
  std::vector<std::unique_ptr<Param>> items_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

namespace ad {

enum class Op {
  Constant,
  Parameter,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Relu,
  Tanh,
  Sigmoid,
  Softplus,
  SoftmaxRows,
  LayerNormRows,
  ConcatRows,
  ConcatCols,
  SliceRows,
  SliceCols,
  GatherRows,
  RowSum,
  ReduceSum,
  ReduceMean,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Parameter: return "parameter";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::MatMul: return "matmul";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softplus: return "softplus";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::LayerNormRows: return "layer_norm_rows";
    case Op::ConcatRows: return "concat_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceRows: return "slice_rows";
    case Op::SliceCols: return "slice_cols";
    case Op::GatherRows: return "gather_rows";
    case Op::RowSum: return "row_sum";
    case Op::ReduceSum: return "reduce_sum";
    case Op::ReduceMean: return "reduce_mean";
  }
  return "?";
}

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// overflow-safe softplus and its derivative
inline double softplus_val(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double sigmoid_val(double x) { return x > 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// Reverse-mode tape over 2-D nodes. Values are computed eagerly on node
// creation (define-by-run), so callers may branch on intermediate values.
// Internals run in float64; parameters stay float32 at the boundary.
class Tape {
public:
  struct Node {
    Op op = Op::Constant;
    int a = -1, b = -1;
    std::int64_t rows = 0, cols = 0;
    std::vector<double> val;
    std::vector<double> grad;
    bool ta = false, tb = false;       // matmul transposes
    std::int64_t off = 0;              // slice offset
    std::vector<std::int64_t> idx;     // gather indices
    std::vector<int> parts;            // concat inputs
    Param* param = nullptr;
    double eps = 0.0;

    std::int64_t numel() const { return rows * cols; }
  };

  Var constant(const Tensor& t) {
    Node n;
    n.op = Op::Constant;
    n.rows = t.rows();
    n.cols = t.cols();
    n.val.assign(t.values.begin(), t.values.end());
    return push(std::move(n));
  }

  Var constant_raw(std::int64_t rows, std::int64_t cols, std::vector<double> data) {
    if (static_cast<std::int64_t>(data.size()) != rows * cols)
      throw std::invalid_argument("Tape::constant_raw: size mismatch");
    Node n;
    n.op = Op::Constant;
    n.rows = rows;
    n.cols = cols;
    n.val = std::move(data);
    return push(std::move(n));
  }

  Var scalar(double x) { return constant_raw(1, 1, {x}); }

  Var ones(std::int64_t rows, std::int64_t cols) {
    return constant_raw(rows, cols, std::vector<double>(static_cast<std::size_t>(rows * cols), 1.0));
  }

  // Registers a trainable parameter; repeated calls return the same node so
  // gradient contributions from every use accumulate in one place.
  Var param(Param& p) {
    auto it = param_vars_.find(&p);
    if (it != param_vars_.end()) return Var{it->second};
    Node n;
    n.op = Op::Parameter;
    n.rows = p.value.rows();
    n.cols = p.value.cols();
    n.val.assign(p.value.values.begin(), p.value.values.end());
    n.param = &p;
    Var v = push(std::move(n));
    param_vars_[&p] = v.id;
    return v;
  }

  Var add(Var a, Var b) { return binary(Op::Add, a, b); }
  Var sub(Var a, Var b) { return binary(Op::Sub, a, b); }
  Var mul(Var a, Var b) { return binary(Op::Mul, a, b); }
  Var div(Var a, Var b) { return binary(Op::Div, a, b); }

  Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
    const Node& na = node(a);
    const Node& nb = node(b);
    const std::int64_t m = ta ? na.cols : na.rows;
    const std::int64_t k = ta ? na.rows : na.cols;
    const std::int64_t k2 = tb ? nb.cols : nb.rows;
    const std::int64_t n2 = tb ? nb.rows : nb.cols;
    if (k != k2) throw std::invalid_argument("Tape::matmul: inner dimensions disagree");
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.ta = ta;
    n.tb = tb;
    n.rows = m;
    n.cols = n2;
    n.val.assign(static_cast<std::size_t>(m * n2), 0.0);
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n2; ++j) {
        double s = 0.0;
        for (std::int64_t t = 0; t < k; ++t)
          s += eff(na, i, t, ta) * eff(nb, t, j, tb);
        n.val[static_cast<std::size_t>(i * n2 + j)] = s;
      }
    return push(std::move(n));
  }

  Var relu(Var a) { return unary(Op::Relu, a); }
  Var tanh_(Var a) { return unary(Op::Tanh, a); }
  Var sigmoid(Var a) { return unary(Op::Sigmoid, a); }
  Var softplus(Var a) { return unary(Op::Softplus, a); }

  // max-subtraction stabilized, per row
  Var softmax_rows(Var a) { return unary(Op::SoftmaxRows, a); }

  // normalize-only layer norm (affine scale/shift composes via mul/add)
  Var layer_norm_rows(Var a, double eps = 1e-5) {
    Var v = unary(Op::LayerNormRows, a, eps);
    return v;
  }

  Var concat_rows(const std::vector<Var>& parts) { return concat(parts, /*along_rows=*/true); }
  Var concat_cols(const std::vector<Var>& parts) { return concat(parts, /*along_rows=*/false); }

  Var slice_rows(Var a, std::int64_t r0, std::int64_t n_rows) {
    const Node& na = node(a);
    if (r0 < 0 || r0 + n_rows > na.rows) throw std::invalid_argument("Tape::slice_rows: range out of bounds");
    Node n;
    n.op = Op::SliceRows;
    n.a = a.id;
    n.off = r0;
    n.rows = n_rows;
    n.cols = na.cols;
    n.val.assign(na.val.begin() + static_cast<std::size_t>(r0 * na.cols),
                 na.val.begin() + static_cast<std::size_t>((r0 + n_rows) * na.cols));
    return push(std::move(n));
  }

  Var slice_cols(Var a, std::int64_t c0, std::int64_t n_cols) {
    const Node& na = node(a);
    if (c0 < 0 || c0 + n_cols > na.cols) throw std::invalid_argument("Tape::slice_cols: range out of bounds");
    Node n;
    n.op = Op::SliceCols;
    n.a = a.id;
    n.off = c0;
    n.rows = na.rows;
    n.cols = n_cols;
    n.val.resize(static_cast<std::size_t>(n.rows * n_cols));
    for (std::int64_t i = 0; i < n.rows; ++i)
      for (std::int64_t j = 0; j < n_cols; ++j)
        n.val[static_cast<std::size_t>(i * n_cols + j)] = na.val[static_cast<std::size_t>(i * na.cols + c0 + j)];
    return push(std::move(n));
  }

  // embedding lookup: out[i, :] = a[idx[i], :]
  Var gather_rows(Var a, std::vector<std::int64_t> idx) {
    const Node& na = node(a);
    Node n;
    n.op = Op::GatherRows;
    n.a = a.id;
    n.rows = static_cast<std::int64_t>(idx.size());
    n.cols = na.cols;
    n.val.resize(static_cast<std::size_t>(n.rows * n.cols));
    for (std::int64_t i = 0; i < n.rows; ++i) {
      const std::int64_t r = idx[static_cast<std::size_t>(i)];
      if (r < 0 || r >= na.rows) throw std::invalid_argument("Tape::gather_rows: index out of range");
      for (std::int64_t j = 0; j < n.cols; ++j)
        n.val[static_cast<std::size_t>(i * n.cols + j)] = na.val[static_cast<std::size_t>(r * na.cols + j)];
    }
    n.idx = std::move(idx);
    return push(std::move(n));
  }

  Var row_sum(Var a) {
    const Node& na = node(a);
    Node n;
    n.op = Op::RowSum;
    n.a = a.id;
    n.rows = na.rows;
    n.cols = 1;
    n.val.assign(static_cast<std::size_t>(na.rows), 0.0);
    for (std::int64_t i = 0; i < na.rows; ++i) {
      double s = 0.0;
      for (std::int64_t j = 0; j < na.cols; ++j) s += na.val[static_cast<std::size_t>(i * na.cols + j)];
      n.val[static_cast<std::size_t>(i)] = s;
    }
    return push(std::move(n));
  }

  Var reduce_sum(Var a) { return reduce(Op::ReduceSum, a); }
  Var reduce_mean(Var a) { return reduce(Op::ReduceMean, a); }

  // ---- composite helpers ----

  Var dot(Var a, Var b) { return matmul(a, b, false, true); }  // (1 x d) . (1 x d) -> 1 x 1

  Var squared_error(Var a, Var b) {
    Var d = sub(a, b);
    return reduce_sum(mul(d, d));
  }

  Var scale(Var a, double c) { return mul(a, scalar(c)); }

  Var affine(Var x, Var w, Var b) { return add(matmul(x, w), b); }  // b broadcasts across rows

  // ---- execution ----

  const std::vector<double>& value(Var v) const { return node(v).val; }

  double value_scalar(Var v) const {
    const Node& n = node(v);
    if (n.numel() != 1) throw std::invalid_argument("Tape::value_scalar: not a scalar node");
    return n.val[0];
  }

  std::int64_t rows(Var v) const { return node(v).rows; }
  std::int64_t cols(Var v) const { return node(v).cols; }

  // Reverse sweep from a scalar loss. Gradients land in each Param's float32
  // grad tensor (accumulating onto whatever is already there) and stay
  // readable in float64 via grad_of.
  void backward(Var loss) {
    Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (ln.numel() != 1) throw std::invalid_argument("Tape::backward: loss must be scalar");
    for (auto& n : nodes_) n.grad.assign(n.val.size(), 0.0);
    ln.grad[0] = 1.0;
    for (std::int64_t i = static_cast<std::int64_t>(nodes_.size()) - 1; i >= 0; --i) backward_node(nodes_[static_cast<std::size_t>(i)]);
    for (auto& [p, id] : param_vars_) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      for (std::size_t k = 0; k < n.grad.size(); ++k)
        p->grad.values[k] += static_cast<float>(n.grad[k]);
    }
  }

  // float64 gradient of a registered parameter (valid after backward)
  const std::vector<double>& grad_of(const Param& p) const {
    auto it = param_vars_.find(const_cast<Param*>(&p));
    if (it == param_vars_.end()) throw std::out_of_range("Tape::grad_of: parameter not on tape");
    return nodes_[static_cast<std::size_t>(it->second)].grad;
  }

  std::size_t node_count() const { return nodes_.size(); }

private:
  std::deque<Node> nodes_;
  std::unordered_map<Param*, int> param_vars_;

  const Node& node(Var v) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("Tape: invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  static double eff(const Node& n, std::int64_t i, std::int64_t j, bool trans) {
    return trans ? n.val[static_cast<std::size_t>(j * n.cols + i)] : n.val[static_cast<std::size_t>(i * n.cols + j)];
  }

  Var push(Node&& n) {
    check_finite(n);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void check_finite(const Node& n) const {
    for (double v : n.val)
      if (!std::isfinite(v))
        throw std::runtime_error(std::string("Tape: non-finite value produced by op '") + op_name(n.op) + "'");
  }

  // broadcast of the second operand: same shape, 1x1 scalar, or 1xC row
  enum class Bcast { Same, Scalar, Row };

  static Bcast bcast_kind(const Node& a, const Node& b) {
    if (a.rows == b.rows && a.cols == b.cols) return Bcast::Same;
    if (b.rows == 1 && b.cols == 1) return Bcast::Scalar;
    if (b.rows == 1 && b.cols == a.cols) return Bcast::Row;
    throw std::invalid_argument("Tape: incompatible shapes for elementwise op");
  }

  static std::size_t bidx(Bcast k, std::int64_t i, std::int64_t j, std::int64_t cols) {
    switch (k) {
      case Bcast::Same: return static_cast<std::size_t>(i * cols + j);
      case Bcast::Scalar: return 0;
      case Bcast::Row: return static_cast<std::size_t>(j);
    }
    return 0;
  }

  Var binary(Op op, Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    const Bcast k = bcast_kind(na, nb);
    Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    n.rows = na.rows;
    n.cols = na.cols;
    n.val.resize(na.val.size());
    for (std::int64_t i = 0; i < na.rows; ++i)
      for (std::int64_t j = 0; j < na.cols; ++j) {
        const double x = na.val[static_cast<std::size_t>(i * na.cols + j)];
        const double y = nb.val[bidx(k, i, j, na.cols)];
        double r = 0.0;
        switch (op) {
          case Op::Add: r = x + y; break;
          case Op::Sub: r = x - y; break;
          case Op::Mul: r = x * y; break;
          case Op::Div: r = x / y; break;
          default: throw std::logic_error("binary: bad op");
        }
        n.val[static_cast<std::size_t>(i * na.cols + j)] = r;
      }
    return push(std::move(n));
  }

  Var unary(Op op, Var a, double eps = 0.0) {
    const Node& na = node(a);
    Node n;
    n.op = op;
    n.a = a.id;
    n.rows = na.rows;
    n.cols = na.cols;
    n.eps = eps;
    n.val.resize(na.val.size());
    switch (op) {
      case Op::Relu:
        for (std::size_t i = 0; i < na.val.size(); ++i) n.val[i] = na.val[i] > 0 ? na.val[i] : 0.0;
        break;
      case Op::Tanh:
        for (std::size_t i = 0; i < na.val.size(); ++i) n.val[i] = std::tanh(na.val[i]);
        break;
      case Op::Sigmoid:
        for (std::size_t i = 0; i < na.val.size(); ++i) n.val[i] = sigmoid_val(na.val[i]);
        break;
      case Op::Softplus:
        for (std::size_t i = 0; i < na.val.size(); ++i) n.val[i] = softplus_val(na.val[i]);
        break;
      case Op::SoftmaxRows:
        for (std::int64_t r = 0; r < na.rows; ++r) {
          const std::size_t base = static_cast<std::size_t>(r * na.cols);
          double mx = na.val[base];
          for (std::int64_t j = 1; j < na.cols; ++j) mx = std::max(mx, na.val[base + static_cast<std::size_t>(j)]);
          double s = 0.0;
          for (std::int64_t j = 0; j < na.cols; ++j) {
            const double e = std::exp(na.val[base + static_cast<std::size_t>(j)] - mx);
            n.val[base + static_cast<std::size_t>(j)] = e;
            s += e;
          }
          for (std::int64_t j = 0; j < na.cols; ++j) n.val[base + static_cast<std::size_t>(j)] /= s;
        }
        break;
      case Op::LayerNormRows:
        for (std::int64_t r = 0; r < na.rows; ++r) {
          const std::size_t base = static_cast<std::size_t>(r * na.cols);
          double mu = 0.0;
          for (std::int64_t j = 0; j < na.cols; ++j) mu += na.val[base + static_cast<std::size_t>(j)];
          mu /= static_cast<double>(na.cols);
          double var = 0.0;
          for (std::int64_t j = 0; j < na.cols; ++j) {
            const double d = na.val[base + static_cast<std::size_t>(j)] - mu;
            var += d * d;
          }
          var /= static_cast<double>(na.cols);
          const double inv = 1.0 / std::sqrt(var + eps);
          for (std::int64_t j = 0; j < na.cols; ++j)
            n.val[base + static_cast<std::size_t>(j)] = (na.val[base + static_cast<std::size_t>(j)] - mu) * inv;
        }
        break;
      default:
        throw std::logic_error("unary: bad op");
    }
    return push(std::move(n));
  }

  Var reduce(Op op, Var a) {
    const Node& na = node(a);
    Node n;
    n.op = op;
    n.a = a.id;
    n.rows = 1;
    n.cols = 1;
    double s = 0.0;
    for (double v : na.val) s += v;
    if (op == Op::ReduceMean) s /= static_cast<double>(na.val.size());
    n.val = {s};
    return push(std::move(n));
  }

  Var concat(const std::vector<Var>& parts, bool along_rows) {
    if (parts.empty()) throw std::invalid_argument("Tape::concat: no parts");
    Node n;
    n.op = along_rows ? Op::ConcatRows : Op::ConcatCols;
    std::int64_t rows = 0, cols = 0;
    for (Var p : parts) {
      const Node& np = node(p);
      if (along_rows) {
        if (cols == 0) cols = np.cols;
        if (np.cols != cols) throw std::invalid_argument("Tape::concat_rows: column mismatch");
        rows += np.rows;
      } else {
        if (rows == 0) rows = np.rows;
        if (np.rows != rows) throw std::invalid_argument("Tape::concat_cols: row mismatch");
        cols += np.cols;
      }
      n.parts.push_back(p.id);
    }
    n.rows = rows;
    n.cols = cols;
    n.val.resize(static_cast<std::size_t>(rows * cols));
    if (along_rows) {
      std::size_t at = 0;
      for (int pid : n.parts) {
        const Node& np = nodes_[static_cast<std::size_t>(pid)];
        for (double v : np.val) n.val[at++] = v;
      }
    } else {
      std::int64_t c0 = 0;
      for (int pid : n.parts) {
        const Node& np = nodes_[static_cast<std::size_t>(pid)];
        for (std::int64_t i = 0; i < np.rows; ++i)
          for (std::int64_t j = 0; j < np.cols; ++j)
            n.val[static_cast<std::size_t>(i * cols + c0 + j)] = np.val[static_cast<std::size_t>(i * np.cols + j)];
        c0 += np.cols;
      }
    }
    return push(std::move(n));
  }

  void backward_node(Node& n) {
    if (n.val.empty()) return;
    switch (n.op) {
      case Op::Constant:
      case Op::Parameter:
        return;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        Node& b = nodes_[static_cast<std::size_t>(n.b)];
        const Bcast k = bcast_kind(a, b);
        for (std::int64_t i = 0; i < n.rows; ++i)
          for (std::int64_t j = 0; j < n.cols; ++j) {
            const std::size_t oi = static_cast<std::size_t>(i * n.cols + j);
            const std::size_t bi = bidx(k, i, j, n.cols);
            const double g = n.grad[oi];
            switch (n.op) {
              case Op::Add:
                a.grad[oi] += g;
                b.grad[bi] += g;
                break;
              case Op::Sub:
                a.grad[oi] += g;
                b.grad[bi] -= g;
                break;
              case Op::Mul:
                a.grad[oi] += g * b.val[bi];
                b.grad[bi] += g * a.val[oi];
                break;
              case Op::Div: {
                const double y = b.val[bi];
                a.grad[oi] += g / y;
                b.grad[bi] -= g * a.val[oi] / (y * y);
                break;
              }
              default: break;
            }
          }
        return;
      }
      case Op::MatMul: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        Node& b = nodes_[static_cast<std::size_t>(n.b)];
        const std::int64_t m = n.rows, n2 = n.cols;
        const std::int64_t k = n.ta ? a.rows : a.cols;
        for (std::int64_t i = 0; i < m; ++i)
          for (std::int64_t j = 0; j < n2; ++j) {
            const double g = n.grad[static_cast<std::size_t>(i * n2 + j)];
            if (g == 0.0) continue;
            for (std::int64_t t = 0; t < k; ++t) {
              // d eff_a(i,t) += g * eff_b(t,j); d eff_b(t,j) += g * eff_a(i,t)
              const std::size_t ai = n.ta ? static_cast<std::size_t>(t * a.cols + i) : static_cast<std::size_t>(i * a.cols + t);
              const std::size_t bi2 = n.tb ? static_cast<std::size_t>(j * b.cols + t) : static_cast<std::size_t>(t * b.cols + j);
              a.grad[ai] += g * b.val[bi2];
              b.grad[bi2] += g * a.val[ai];
            }
          }
        return;
      }
      case Op::Relu: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < n.val.size(); ++i)
          if (a.val[i] > 0) a.grad[i] += n.grad[i];
        return;
      }
      case Op::Tanh: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < n.val.size(); ++i) a.grad[i] += n.grad[i] * (1.0 - n.val[i] * n.val[i]);
        return;
      }
      case Op::Sigmoid: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < n.val.size(); ++i) a.grad[i] += n.grad[i] * n.val[i] * (1.0 - n.val[i]);
        return;
      }
      case Op::Softplus: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < n.val.size(); ++i) a.grad[i] += n.grad[i] * sigmoid_val(a.val[i]);
        return;
      }
      case Op::SoftmaxRows: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (std::int64_t r = 0; r < n.rows; ++r) {
          const std::size_t base = static_cast<std::size_t>(r * n.cols);
          double gy = 0.0;
          for (std::int64_t j = 0; j < n.cols; ++j)
            gy += n.grad[base + static_cast<std::size_t>(j)] * n.val[base + static_cast<std::size_t>(j)];
          for (std::int64_t j = 0; j < n.cols; ++j) {
            const std::size_t i = base + static_cast<std::size_t>(j);
            a.grad[i] += n.val[i] * (n.grad[i] - gy);
          }
        }
        return;
      }
      case Op::LayerNormRows: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const double N = static_cast<double>(n.cols);
        for (std::int64_t r = 0; r < n.rows; ++r) {
          const std::size_t base = static_cast<std::size_t>(r * n.cols);
          double mu = 0.0, var = 0.0;
          for (std::int64_t j = 0; j < n.cols; ++j) mu += a.val[base + static_cast<std::size_t>(j)];
          mu /= N;
          for (std::int64_t j = 0; j < n.cols; ++j) {
            const double d = a.val[base + static_cast<std::size_t>(j)] - mu;
            var += d * d;
          }
          var /= N;
          const double inv = 1.0 / std::sqrt(var + n.eps);
          double gmean = 0.0, gymean = 0.0;
          for (std::int64_t j = 0; j < n.cols; ++j) {
            const std::size_t i = base + static_cast<std::size_t>(j);
            gmean += n.grad[i];
            gymean += n.grad[i] * n.val[i];
          }
          gmean /= N;
          gymean /= N;
          for (std::int64_t j = 0; j < n.cols; ++j) {
            const std::size_t i = base + static_cast<std::size_t>(j);
            a.grad[i] += inv * (n.grad[i] - gmean - n.val[i] * gymean);
          }
        }
        return;
      }
      case Op::ConcatRows: {
        std::size_t at = 0;
        for (int pid : n.parts) {
          Node& p = nodes_[static_cast<std::size_t>(pid)];
          for (std::size_t i = 0; i < p.val.size(); ++i) p.grad[i] += n.grad[at++];
        }
        return;
      }
      case Op::ConcatCols: {
        std::int64_t c0 = 0;
        for (int pid : n.parts) {
          Node& p = nodes_[static_cast<std::size_t>(pid)];
          for (std::int64_t i = 0; i < p.rows; ++i)
            for (std::int64_t j = 0; j < p.cols; ++j)
              p.grad[static_cast<std::size_t>(i * p.cols + j)] += n.grad[static_cast<std::size_t>(i * n.cols + c0 + j)];
          c0 += p.cols;
        }
        return;
      }
      case Op::SliceRows: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const std::size_t base = static_cast<std::size_t>(n.off * a.cols);
        for (std::size_t i = 0; i < n.val.size(); ++i) a.grad[base + i] += n.grad[i];
        return;
      }
      case Op::SliceCols: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (std::int64_t i = 0; i < n.rows; ++i)
          for (std::int64_t j = 0; j < n.cols; ++j)
            a.grad[static_cast<std::size_t>(i * a.cols + n.off + j)] += n.grad[static_cast<std::size_t>(i * n.cols + j)];
        return;
      }
      case Op::GatherRows: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (std::int64_t i = 0; i < n.rows; ++i) {
          const std::int64_t r = n.idx[static_cast<std::size_t>(i)];
          for (std::int64_t j = 0; j < n.cols; ++j)
            a.grad[static_cast<std::size_t>(r * a.cols + j)] += n.grad[static_cast<std::size_t>(i * n.cols + j)];
        }
        return;
      }
      case Op::RowSum: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (std::int64_t i = 0; i < a.rows; ++i)
          for (std::int64_t j = 0; j < a.cols; ++j)
            a.grad[static_cast<std::size_t>(i * a.cols + j)] += n.grad[static_cast<std::size_t>(i)];
        return;
      }
      case Op::ReduceSum: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        for (auto& g : a.grad) g += n.grad[0];
        return;
      }
      case Op::ReduceMean: {
        Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const double g = n.grad[0] / static_cast<double>(a.val.size());
        for (auto& ga : a.grad) ga += g;
        return;
      }
    }
  }
};

}  // namespace ad
}  // namespace reacta
