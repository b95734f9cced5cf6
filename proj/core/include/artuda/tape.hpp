#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "artuda/tensor.hpp"

namespace artuda::autodiff {

/// Primitive operations recorded on the tape.
enum class Op {
  input,         // leaf
  add,           // elementwise, equal shapes
  sub,
  mul,
  div,
  matmul,        // [m,k] x [k,n] -> [m,n]
  transpose,     // [m,n] -> [n,m]
  relu,
  exp,
  log,
  sqrt,
  softplus,      // log(1 + e^x), numerically stable
  abs,
  log_softmax,   // rowwise on [n,k]
  sum,           // -> scalar
  mean,          // -> scalar
  rowsum,        // [n,m] -> [n]
  colsum,        // [n,m] -> [m]
  colmean,       // [n,m] -> [m]
  broadcast_rows,  // [m] -> [n,m], rows repeated
  broadcast_cols,  // [n] -> [n,m], cols repeated
  scale,           // x * c
  add_const,       // x + c
  concat_rows,     // stack matrices along the batch axis
  slice_rows,      // row range [r0, r1)
  grl,             // identity forward, gradient * -c backward
  stop_gradient,   // identity forward, no gradient flow
};

std::string_view op_name(Op op);

/// Handle to a tape node. Only valid for the tape that created it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Result of a backward pass: node id -> gradient. Nodes not reached from the
/// loss have no entry at all (absent, not zero), so "this tensor never
/// influenced the loss" is mechanically checkable.
class GradientMap {
 public:
  explicit GradientMap(std::size_t node_count) : grads_(node_count) {}

  bool has(Var v) const {
    return v.valid() && static_cast<std::size_t>(v.id) < grads_.size() &&
           grads_[v.id].has_value();
  }
  /// Gradient with the node's shape, or nullopt if disconnected.
  std::optional<Tensor> get(Var v) const;

  std::vector<std::optional<std::vector<double>>>& raw() { return grads_; }
  void set_shape(int id, Shape s) { shapes_[id] = std::move(s); }

 private:
  friend class Tape;
  std::vector<std::optional<std::vector<double>>> grads_;
  std::vector<Shape> shapes_;
};

// Single-threaded recording of a computation for reverse-mode
// differentiation. Nodes are appended in execution order, which is therefore
// a valid topological order; every primitive validates shapes and rejects
// non-finite outputs. Values entering the tape are copied, so mutating the
// source tensors afterwards cannot corrupt a recorded graph.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf. requires_grad marks it as a differentiation target.
  Var input(Tensor t, bool requires_grad);
  /// Leaf that is treated as a constant.
  Var constant(Tensor t) { return input(std::move(t), false); }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var softplus(Var a);
  Var abs(Var a);
  Var log_softmax(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var rowsum(Var a);
  Var colsum(Var a);
  Var colmean(Var a);
  Var broadcast_rows(Var a, std::size_t n_rows);
  Var broadcast_cols(Var a, std::size_t n_cols);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, std::size_t r0, std::size_t r1);
  Var grl(Var a, double coefficient);
  Var stop_gradient(Var a);

  /// Generic entry point: applies a recorded primitive by kind. Attrs are
  /// (scalar, i0, i1) as each op uses them; value-initialized when omitted.
  struct Attrs {
    double scalar;
    std::size_t i0;
    std::size_t i1;
  };
  Var apply(Op op, const std::vector<Var>& inputs,
            const Attrs& attrs = Attrs());

  /// Reverse pass from a scalar loss. Gradients accumulate as sums over all
  /// paths; repeated calls on the same tape give bit-identical results.
  GradientMap backward(Var loss) const;

  /// d(loss)/d(x): backward + lookup. A disconnected x yields zeros (the
  /// mathematical gradient); an x from another tape is an error.
  Tensor input_gradient(Var loss, Var x) const;

 private:
  struct Node {
    Op op;
    std::vector<int> parents;
    Tensor value;
    Attrs attrs;
    bool requires_grad;
  };

  Var record(Op op, std::vector<int> parents, Tensor value,
             Attrs attrs = Attrs());
  const Node& node(Var v) const;
  void check_var(Var v, const char* who) const;

  std::vector<Node> nodes_;
};

}  // namespace artuda::autodiff
