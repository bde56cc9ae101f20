#pragma once

// Define-by-run reverse-mode differentiation over dense Eigen matrices.
//
// A Tape owns every node built while evaluating one loss. Values are computed
// eagerly when an op is recorded; backward() walks the tape in reverse
// creation order, which is a topological order because a node can only refer
// to nodes that already exist.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slsrec/error.hpp"

namespace slsrec::ad {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class Op : std::uint8_t {
  kConstant,
  kVariable,
  kParameter,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kConcatRows,
  kConcatCols,
  kGatherRows,
  kMaskedSoftmax,
  kSigmoid,
  kTanh,
  kRelu,
  kMeanRows,
  kSumAll,
  kSquaredDistance,
  kHinge,
  kScale,
  kLog,
  kClamp,
  kTranspose,
  kReshape,
  kTileRows,
  kCustom,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kVariable: return "variable";
    case Op::kParameter: return "parameter";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kConcatRows: return "concat_rows";
    case Op::kConcatCols: return "concat_cols";
    case Op::kGatherRows: return "gather_rows";
    case Op::kMaskedSoftmax: return "masked_softmax";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kMeanRows: return "mean_rows";
    case Op::kSumAll: return "sum";
    case Op::kSquaredDistance: return "squared_distance";
    case Op::kHinge: return "hinge";
    case Op::kScale: return "scale";
    case Op::kLog: return "log";
    case Op::kClamp: return "clamp";
    case Op::kTranspose: return "transpose";
    case Op::kReshape: return "reshape";
    case Op::kTileRows: return "tile_rows";
    case Op::kCustom: return "custom";
  }
  return "?";
}

// A named trainable matrix. Gradients from every tape that reads it accumulate
// into `grad` until the optimizer consumes them.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
class Tape;

// Lightweight handle to a node on a tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const { return tape->value(id); }
  const Matrix<Scalar>& grad() const { return tape->grad(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }
  Op op() const { return tape->node_op(id); }
};

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << r << "x" << c;
  return os.str();
}

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using VarT = Var<Scalar>;
  // Receives the output gradient and adds into the parent gradients.
  using CustomBackward = std::function<void(const Mat& out_grad, std::span<Mat* const> parent_grads)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  VarT constant(Mat value) { return push(Op::kConstant, std::move(value), {}, false); }

  // Leaf whose gradient is kept on the tape (used by tests and gradcheck).
  VarT variable(Mat value) { return push(Op::kVariable, std::move(value), {}, true); }

  // Leaf bound to a Parameter; backward() accumulates straight into p.grad.
  VarT parameter(Parameter<Scalar>& p) {
    Node n;
    n.op = Op::kParameter;
    n.external_value = &p.value;
    n.external_grad = &p.grad;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Read-only view of a Parameter; no gradient flows into it.
  VarT frozen(const Parameter<Scalar>& p) {
    Node n;
    n.op = Op::kParameter;
    n.external_value = &p.value;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    return n.external_value ? *n.external_value : n.value;
  }

  // Gradient of a node after backward().
  const Mat& grad(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    return n.external_grad ? *n.external_grad : n.grad;
  }

  Op node_op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  std::size_t size() const { return nodes_.size(); }

  // Records a node with caller-defined forward value and VJP.
  VarT custom(Mat value, std::vector<VarT> parents, CustomBackward backward) {
    std::vector<int> ids;
    bool needs = false;
    for (const auto& p : parents) {
      check_same_tape(p);
      ids.push_back(p.id);
      needs = needs || nodes_[p.id].needs_grad;
    }
    VarT out = push(Op::kCustom, std::move(value), std::move(ids), needs);
    nodes_.back().custom = std::move(backward);
    return out;
  }

  void backward(VarT loss) {
    check_same_tape(loss);
    const Mat& lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractViolation("backward() requires a scalar loss, got " + shape_str(lv.rows(), lv.cols()));
    }
    grad_ref(loss.id)(0, 0) += Scalar(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || n.op == Op::kParameter || n.grad.size() == 0) continue;
      propagate(id);
    }
    for (Node& n : nodes_) {
      if (n.needs_grad && !n.external_grad && n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
  }

  // True when every gradient held on the tape is finite.
  bool gradients_finite() const {
    for (const Node& n : nodes_) {
      const Mat& g = n.external_grad ? *n.external_grad : n.grad;
      if (g.size() != 0 && !g.allFinite()) return false;
    }
    return true;
  }

  // ---- op recording (called by the free functions below) ----
  VarT record(Op op, Mat value, std::vector<int> inputs) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_[static_cast<std::size_t>(i)].needs_grad;
    return push(op, std::move(value), std::move(inputs), needs);
  }
  void set_index(VarT v, std::vector<int> index) { nodes_[v.id].index = std::move(index); }
  void set_scalars(VarT v, Scalar a, Scalar b = Scalar(0)) {
    nodes_[v.id].s0 = a;
    nodes_[v.id].s1 = b;
  }

  void check_same_tape(const VarT& v) const {
    if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
      throw ContractViolation("variable does not belong to this tape");
    }
  }

 private:
  struct Node {
    Op op = Op::kConstant;
    Mat value;
    Mat grad;
    std::vector<int> inputs;
    std::vector<int> index;
    Scalar s0 = 0;
    Scalar s1 = 0;
    const Mat* external_value = nullptr;
    Mat* external_grad = nullptr;
    bool needs_grad = false;
    CustomBackward custom;
  };

  VarT push(Op op, Mat value, std::vector<int> inputs, bool needs) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.needs_grad = needs;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Mat& grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.external_grad) return *n.external_grad;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool wants(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  // Sums a broadcast gradient back down to the operand's shape.
  static Mat reduce_to(const Mat& g, Eigen::Index rows, Eigen::Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    if (rows == 1 && cols == 1) return Mat::Constant(1, 1, g.sum());
    if (rows == 1) return g.colwise().sum();
    return g.rowwise().sum();
  }

  void propagate(int id) {
    // grad_ref() never resizes nodes_, so these references stay valid.
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    const Mat& g = n.grad;
    const std::vector<int>& in = n.inputs;
    switch (n.op) {
      case Op::kConstant:
      case Op::kVariable:
      case Op::kParameter:
        break;
      case Op::kMatMul: {
        const Mat& a = value(in[0]);
        const Mat& b = value(in[1]);
        if (wants(in[0])) grad_ref(in[0]).noalias() += g * b.transpose();
        if (wants(in[1])) grad_ref(in[1]).noalias() += a.transpose() * g;
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const Scalar sign = n.op == Op::kAdd ? Scalar(1) : Scalar(-1);
        if (wants(in[0])) {
          const Mat& a = value(in[0]);
          grad_ref(in[0]) += reduce_to(g, a.rows(), a.cols());
        }
        if (wants(in[1])) {
          const Mat& b = value(in[1]);
          grad_ref(in[1]) += sign * reduce_to(g, b.rows(), b.cols());
        }
        break;
      }
      case Op::kMul: {
        const Mat& a = value(in[0]);
        const Mat& b = value(in[1]);
        if (wants(in[0])) grad_ref(in[0]) += reduce_to(g.cwiseProduct(expand(b, g.rows(), g.cols())), a.rows(), a.cols());
        if (wants(in[1])) grad_ref(in[1]) += reduce_to(g.cwiseProduct(expand(a, g.rows(), g.cols())), b.rows(), b.cols());
        break;
      }
      case Op::kConcatRows: {
        Eigen::Index off = 0;
        for (int i : in) {
          const Eigen::Index r = value(i).rows();
          if (wants(i)) grad_ref(i) += g.middleRows(off, r);
          off += r;
        }
        break;
      }
      case Op::kConcatCols: {
        Eigen::Index off = 0;
        for (int i : in) {
          const Eigen::Index c = value(i).cols();
          if (wants(i)) grad_ref(i) += g.middleCols(off, c);
          off += c;
        }
        break;
      }
      case Op::kGatherRows: {
        if (!wants(in[0])) break;
        Mat& dst = grad_ref(in[0]);
        for (std::size_t r = 0; r < n.index.size(); ++r) dst.row(n.index[r]) += g.row(static_cast<Eigen::Index>(r));
        break;
      }
      case Op::kMaskedSoftmax: {
        if (!wants(in[0])) break;
        const Mat& y = n.value;
        Mat gy = g.cwiseProduct(y);
        Eigen::Matrix<Scalar, 1, Eigen::Dynamic> colsum = gy.colwise().sum();
        grad_ref(in[0]) += gy - y.cwiseProduct(colsum.replicate(y.rows(), 1));
        break;
      }
      case Op::kSigmoid: {
        const Mat& y = n.value;
        grad_ref(in[0]) += g.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix()));
        break;
      }
      case Op::kTanh: {
        const Mat& y = n.value;
        grad_ref(in[0]) += g.cwiseProduct((Scalar(1) - y.array().square()).matrix());
        break;
      }
      case Op::kRelu:
      case Op::kHinge: {
        const Mat& x = value(in[0]);
        grad_ref(in[0]) += (x.array() > Scalar(0)).select(g, Scalar(0)).matrix();
        break;
      }
      case Op::kMeanRows: {
        const Mat& x = value(in[0]);
        grad_ref(in[0]) += (g / Scalar(x.rows())).replicate(x.rows(), 1);
        break;
      }
      case Op::kSumAll: {
        grad_ref(in[0]).array() += g(0, 0);
        break;
      }
      case Op::kSquaredDistance: {
        // Per-row sum of squared differences; g is rows x 1.
        const Mat diff = value(in[0]) - value(in[1]);
        const Mat d = Scalar(2) * diff.cwiseProduct(g.replicate(1, diff.cols()));
        if (wants(in[0])) grad_ref(in[0]) += d;
        if (wants(in[1])) grad_ref(in[1]) -= d;
        break;
      }
      case Op::kScale:
        grad_ref(in[0]) += n.s0 * g;
        break;
      case Op::kLog:
        grad_ref(in[0]) += g.cwiseQuotient(value(in[0]));
        break;
      case Op::kClamp: {
        const Mat& x = value(in[0]);
        grad_ref(in[0]) += ((x.array() >= n.s0) && (x.array() <= n.s1)).select(g, Scalar(0)).matrix();
        break;
      }
      case Op::kTranspose:
        grad_ref(in[0]) += g.transpose();
        break;
      case Op::kReshape: {
        const Mat& x = value(in[0]);
        grad_ref(in[0]) += g.reshaped(x.rows(), x.cols());
        break;
      }
      case Op::kTileRows:
        grad_ref(in[0]) += g.colwise().sum();
        break;
      case Op::kCustom: {
        std::vector<Mat*> parents;
        for (int i : in) parents.push_back(wants(i) ? &grad_ref(i) : nullptr);
        n.custom(g, parents);
        break;
      }
    }
  }

 public:
  static auto expand(const Mat& m, Eigen::Index rows, Eigen::Index cols) {
    return m.replicate(rows / m.rows(), cols / m.cols());
  }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar>
Tape<Scalar>& tape_of(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractViolation("operands live on different tapes");
  a.tape->check_same_tape(a);
  a.tape->check_same_tape(b);
  return *a.tape;
}

template <typename Scalar>
Tape<Scalar>& tape_of(const Var<Scalar>& a) {
  if (a.tape == nullptr) throw ContractViolation("unbound variable");
  a.tape->check_same_tape(a);
  return *a.tape;
}

inline std::pair<Eigen::Index, Eigen::Index> broadcast_shape(const char* op, Eigen::Index ar, Eigen::Index ac,
                                                             Eigen::Index br, Eigen::Index bc) {
  auto dim = [](Eigen::Index x, Eigen::Index y) -> Eigen::Index {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    return -1;
  };
  const Eigen::Index r = dim(ar, br);
  const Eigen::Index c = dim(ac, bc);
  if (r < 0 || c < 0) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(ar, ac) + " and " + shape_str(br, bc));
  }
  return {r, c};
}

}  // namespace detail

// ---- primitive catalogue ----

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.rows(), av.cols()) + " and " +
                     shape_str(bv.rows(), bv.cols()));
  }
  Matrix<Scalar> out;
  out.noalias() = av * bv;
  return t.record(Op::kMatMul, std::move(out), {a.id, b.id});
}

// Elementwise ops broadcast an operand with a unit dimension across the other.
template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  auto [r, c] = detail::broadcast_shape("add", av.rows(), av.cols(), bv.rows(), bv.cols());
  Matrix<Scalar> out = Tape<Scalar>::expand(av, r, c) + Tape<Scalar>::expand(bv, r, c);
  return t.record(Op::kAdd, std::move(out), {a.id, b.id});
}

template <typename Scalar>
Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  auto [r, c] = detail::broadcast_shape("sub", av.rows(), av.cols(), bv.rows(), bv.cols());
  Matrix<Scalar> out = Tape<Scalar>::expand(av, r, c) - Tape<Scalar>::expand(bv, r, c);
  return t.record(Op::kSub, std::move(out), {a.id, b.id});
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  auto [r, c] = detail::broadcast_shape("mul", av.rows(), av.cols(), bv.rows(), bv.cols());
  Matrix<Scalar> out = Tape<Scalar>::expand(av, r, c).cwiseProduct(Tape<Scalar>::expand(bv, r, c));
  return t.record(Op::kMul, std::move(out), {a.id, b.id});
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no operands");
  auto& t = detail::tape_of(parts[0]);
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    detail::tape_of(parts[0], p);
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: incompatible shapes " + shape_str(parts[0].rows(), cols) + " and " +
                       shape_str(p.rows(), p.cols()));
    }
    rows += p.rows();
    ids.push_back(p.id);
  }
  Matrix<Scalar> out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return t.record(Op::kConcatRows, std::move(out), std::move(ids));
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no operands");
  auto& t = detail::tape_of(parts[0]);
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    detail::tape_of(parts[0], p);
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: incompatible shapes " + shape_str(rows, parts[0].cols()) + " and " +
                       shape_str(p.rows(), p.cols()));
    }
    cols += p.cols();
    ids.push_back(p.id);
  }
  Matrix<Scalar> out(rows, cols);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return t.record(Op::kConcatCols, std::move(out), std::move(ids));
}

template <typename Scalar>
Var<Scalar> concat_rows(std::initializer_list<Var<Scalar>> parts) {
  return concat_rows<Scalar>(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

template <typename Scalar>
Var<Scalar> concat_cols(std::initializer_list<Var<Scalar>> parts) {
  return concat_cols<Scalar>(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

// Row lookup; with a Parameter source this is an embedding lookup whose
// backward scatters into the touched rows only.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& x, std::span<const int> rows) {
  auto& t = detail::tape_of(x);
  const auto& xv = x.value();
  Matrix<Scalar> out(static_cast<Eigen::Index>(rows.size()), xv.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= xv.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(rows[r]) + " outside " + shape_str(xv.rows(), xv.cols()));
    }
    out.row(static_cast<Eigen::Index>(r)) = xv.row(rows[r]);
  }
  Var<Scalar> v = t.record(Op::kGatherRows, std::move(out), {x.id});
  t.set_index(v, std::vector<int>(rows.begin(), rows.end()));
  return v;
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& x, int begin, int count) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = begin + i;
  return gather_rows(x, std::span<const int>(idx));
}

// Column-wise softmax over rows where mask != 0; masked entries are exactly 0.
// `mask` has the shape of x, or is a single column applied to every column.
template <typename Scalar>
Var<Scalar> masked_softmax(const Var<Scalar>& x, const Matrix<Scalar>& mask) {
  auto& t = detail::tape_of(x);
  const auto& xv = x.value();
  if (mask.rows() != xv.rows() || (mask.cols() != xv.cols() && mask.cols() != 1)) {
    throw ShapeError("masked_softmax: incompatible shapes " + shape_str(xv.rows(), xv.cols()) + " and " +
                     shape_str(mask.rows(), mask.cols()));
  }
  Matrix<Scalar> out = Matrix<Scalar>::Zero(xv.rows(), xv.cols());
  for (Eigen::Index c = 0; c < xv.cols(); ++c) {
    const Eigen::Index mc = mask.cols() == 1 ? 0 : c;
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    bool any = false;
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      if (mask(r, mc) != Scalar(0)) {
        mx = std::max(mx, xv(r, c));
        any = true;
      }
    }
    if (!any) throw ContractViolation("masked_softmax: column " + std::to_string(c) + " is fully masked");
    Scalar z = 0;
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      if (mask(r, mc) != Scalar(0)) {
        out(r, c) = std::exp(xv(r, c) - mx);
        z += out(r, c);
      }
    }
    out.col(c) /= z;
  }
  return t.record(Op::kMaskedSoftmax, std::move(out), {x.id});
}

template <typename Scalar>
Var<Scalar> softmax(const Var<Scalar>& x) {
  return masked_softmax(x, Matrix<Scalar>(Matrix<Scalar>::Ones(x.rows(), 1)));
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  auto& t = detail::tape_of(x);
  Matrix<Scalar> out = x.value().unaryExpr([](Scalar v) {
    if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
    const Scalar e = std::exp(v);
    return e / (Scalar(1) + e);
  });
  return t.record(Op::kSigmoid, std::move(out), {x.id});
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& x) {
  auto& t = detail::tape_of(x);
  Matrix<Scalar> out = x.value().array().tanh().matrix();
  return t.record(Op::kTanh, std::move(out), {x.id});
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  auto& t = detail::tape_of(x);
  Matrix<Scalar> out = x.value().cwiseMax(Scalar(0));
  return t.record(Op::kRelu, std::move(out), {x.id});
}

// max(x, 0); same VJP as relu, kept separate so loss graphs read as hinges.
template <typename Scalar>
Var<Scalar> hinge(const Var<Scalar>& x) {
  auto& t = detail::tape_of(x);
  Matrix<Scalar> out = x.value().cwiseMax(Scalar(0));
  return t.record(Op::kHinge, std::move(out), {x.id});
}

template <typename Scalar>
Var<Scalar> mean_rows(const Var<Scalar>& x) {
  auto& t = detail::tape_of(x);
  if (x.rows() == 0) throw ContractViolation("mean_rows: empty input");
  Matrix<Scalar> out = x.value().colwise().mean();
  return t.record(Op::kMeanRows, std::move(out), {x.id});
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  auto& t = detail::tape_of(x);
  return t.record(Op::kSumAll, Matrix<Scalar>::Constant(1, 1, x.value().sum()), {x.id});
}

// Row-wise ||a_i - b_i||^2, shape rows x 1.
template <typename Scalar>
Var<Scalar> squared_distance(const Var<Scalar>& a, const Var<Scalar>& b) {
  auto& t = detail::tape_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("squared_distance: incompatible shapes " + shape_str(a.rows(), a.cols()) + " and " +
                     shape_str(b.rows(), b.cols()));
  }
  Matrix<Scalar> out = (a.value() - b.value()).rowwise().squaredNorm();
  return t.record(Op::kSquaredDistance, std::move(out), {a.id, b.id});
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, Scalar s) {
  auto& t = detail::tape_of(x);
  Var<Scalar> v = t.record(Op::kScale, s * x.value(), {x.id});
  t.set_scalars(v, s);
  return v;
}

template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& x) {
  auto& t = detail::tape_of(x);
  Matrix<Scalar> out = x.value().array().log().matrix();
  return t.record(Op::kLog, std::move(out), {x.id});
}

// Gradient passes through only where lo <= x <= hi.
template <typename Scalar>
Var<Scalar> clamp(const Var<Scalar>& x, Scalar lo, Scalar hi) {
  auto& t = detail::tape_of(x);
  Matrix<Scalar> out = x.value().cwiseMax(lo).cwiseMin(hi);
  Var<Scalar> v = t.record(Op::kClamp, std::move(out), {x.id});
  t.set_scalars(v, lo, hi);
  return v;
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& x) {
  auto& t = detail::tape_of(x);
  Matrix<Scalar> out = x.value().transpose();
  return t.record(Op::kTranspose, std::move(out), {x.id});
}

// Column-major reshape (Eigen storage order).
template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Eigen::Index rows, Eigen::Index cols) {
  auto& t = detail::tape_of(x);
  if (rows * cols != x.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.rows(), x.cols()) + " as " + shape_str(rows, cols));
  }
  Matrix<Scalar> out = x.value().reshaped(rows, cols);
  return t.record(Op::kReshape, std::move(out), {x.id});
}

// Repeats a single-row input n times.
template <typename Scalar>
Var<Scalar> tile_rows(const Var<Scalar>& x, Eigen::Index n) {
  auto& t = detail::tape_of(x);
  if (x.rows() != 1) throw ShapeError("tile_rows: expected one row, got " + shape_str(x.rows(), x.cols()));
  Matrix<Scalar> out = x.value().replicate(n, 1);
  return t.record(Op::kTileRows, std::move(out), {x.id});
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) { return sub(a, b); }

}  // namespace slsrec::ad
