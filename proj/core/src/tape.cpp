#include "artuda/tape.hpp"

#include <cmath>
#include <cstdlib>

#include "artuda/errors.hpp"

namespace artuda::autodiff {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::relu: return "relu";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sqrt: return "sqrt";
    case Op::softplus: return "softplus";
    case Op::abs: return "abs";
    case Op::log_softmax: return "log_softmax";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::rowsum: return "rowsum";
    case Op::colsum: return "colsum";
    case Op::colmean: return "colmean";
    case Op::broadcast_rows: return "broadcast_rows";
    case Op::broadcast_cols: return "broadcast_cols";
    case Op::scale: return "scale";
    case Op::add_const: return "add_const";
    case Op::concat_rows: return "concat_rows";
    case Op::slice_rows: return "slice_rows";
    case Op::grl: return "grl";
    case Op::stop_gradient: return "stop_gradient";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const Tensor& a) {
  throw ShapeError(std::string(op_name(op)) + ": bad operand shape " +
                   shape_to_string(a.shape()));
}

[[noreturn]] void shape_fail2(Op op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op_name(op)) + ": operand shapes " +
                   shape_to_string(a.shape()) + " and " +
                   shape_to_string(b.shape()) + " do not conform");
}

void require_matrix(Op op, const Tensor& t) {
  if (t.rank() != 2) shape_fail(op, t);
}

double stable_softplus(double x) {
  // log(1+e^x) = max(x,0) + log1p(e^{-|x|})
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::optional<Tensor> GradientMap::get(Var v) const {
  if (!has(v)) return std::nullopt;
  return Tensor(shapes_[v.id], *grads_[v.id]);
}

void Tape::check_var(Var v, const char* who) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error(std::string(who) + ": variable is not on this tape");
  }
}

const Tape::Node& Tape::node(Var v) const {
  check_var(v, "tape");
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::input(Tensor t, bool requires_grad) {
  return record(Op::input, {}, std::move(t),
                Attrs{requires_grad ? 1.0 : 0.0, 0, 0});
}

Var Tape::record(Op op, std::vector<int> parents, Tensor value, Attrs attrs) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name(op)) + ": non-finite output");
  }
  bool req = false;
  if (op == Op::input) {
    req = attrs.scalar != 0.0;
  } else if (op != Op::stop_gradient) {
    for (int p : parents) req = req || nodes_[p].requires_grad;
  }
  nodes_.push_back(Node{op, std::move(parents), std::move(value), attrs, req});
  return Var{static_cast<int>(nodes_.size() - 1)};
}

// ---- elementwise binary ----

Var Tape::add(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  if (!ta.same_shape(tb)) shape_fail2(Op::add, ta, tb);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
  return record(Op::add, {a.id, b.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::sub(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  if (!ta.same_shape(tb)) shape_fail2(Op::sub, ta, tb);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] - tb[i];
  return record(Op::sub, {a.id, b.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::mul(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  if (!ta.same_shape(tb)) shape_fail2(Op::mul, ta, tb);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
  return record(Op::mul, {a.id, b.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::div(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  if (!ta.same_shape(tb)) shape_fail2(Op::div, ta, tb);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] / tb[i];
  return record(Op::div, {a.id, b.id}, Tensor(ta.shape(), std::move(out)));
}

// ---- linear algebra ----

Var Tape::matmul(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  require_matrix(Op::matmul, ta);
  require_matrix(Op::matmul, tb);
  if (ta.shape()[1] != tb.shape()[0]) shape_fail2(Op::matmul, ta, tb);
  std::size_t m = ta.shape()[0], k = ta.shape()[1], n = tb.shape()[1];
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double av = ta[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * tb[p * n + j];
    }
  }
  return record(Op::matmul, {a.id, b.id}, Tensor::matrix(m, n, std::move(out)));
}

Var Tape::transpose(Var a) {
  const Tensor& ta = value(a);
  require_matrix(Op::transpose, ta);
  std::size_t m = ta.shape()[0], n = ta.shape()[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = ta[i * n + j];
  return record(Op::transpose, {a.id}, Tensor::matrix(n, m, std::move(out)));
}

// ---- elementwise unary ----

Var Tape::relu(Var a) {
  const Tensor& ta = value(a);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(ta[i], 0.0);
  return record(Op::relu, {a.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::exp(Var a) {
  const Tensor& ta = value(a);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(ta[i]);
  return record(Op::exp, {a.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::log(Var a) {
  const Tensor& ta = value(a);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(ta[i]);
  return record(Op::log, {a.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::sqrt(Var a) {
  const Tensor& ta = value(a);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(ta[i]);
  return record(Op::sqrt, {a.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::softplus(Var a) {
  const Tensor& ta = value(a);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_softplus(ta[i]);
  return record(Op::softplus, {a.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::abs(Var a) {
  const Tensor& ta = value(a);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(ta[i]);
  return record(Op::abs, {a.id}, Tensor(ta.shape(), std::move(out)));
}

Var Tape::log_softmax(Var a) {
  const Tensor& ta = value(a);
  require_matrix(Op::log_softmax, ta);
  std::size_t n = ta.shape()[0], k = ta.shape()[1];
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = ta[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, ta[i * k + j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < k; ++j) lse += std::exp(ta[i * k + j] - mx);
    lse = std::log(lse) + mx;
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = ta[i * k + j] - lse;
  }
  return record(Op::log_softmax, {a.id}, Tensor::matrix(n, k, std::move(out)));
}

// ---- reductions ----

Var Tape::sum(Var a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (double v : ta.values()) s += v;
  return record(Op::sum, {a.id}, Tensor::scalar(s));
}

Var Tape::mean(Var a) {
  const Tensor& ta = value(a);
  double s = 0.0;
  for (double v : ta.values()) s += v;
  return record(Op::mean, {a.id},
                Tensor::scalar(s / static_cast<double>(ta.size())));
}

Var Tape::rowsum(Var a) {
  const Tensor& ta = value(a);
  require_matrix(Op::rowsum, ta);
  std::size_t n = ta.shape()[0], m = ta.shape()[1];
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i] += ta[i * m + j];
  return record(Op::rowsum, {a.id}, Tensor::vector(std::move(out)));
}

Var Tape::colsum(Var a) {
  const Tensor& ta = value(a);
  require_matrix(Op::colsum, ta);
  std::size_t n = ta.shape()[0], m = ta.shape()[1];
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += ta[i * m + j];
  return record(Op::colsum, {a.id}, Tensor::vector(std::move(out)));
}

Var Tape::colmean(Var a) {
  const Tensor& ta = value(a);
  require_matrix(Op::colmean, ta);
  std::size_t n = ta.shape()[0], m = ta.shape()[1];
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j] += ta[i * m + j];
  for (double& v : out) v /= static_cast<double>(n);
  return record(Op::colmean, {a.id}, Tensor::vector(std::move(out)));
}

// ---- shape ops ----

Var Tape::broadcast_rows(Var a, std::size_t n_rows) {
  const Tensor& ta = value(a);
  if (ta.rank() != 1) shape_fail(Op::broadcast_rows, ta);
  std::size_t m = ta.shape()[0];
  std::vector<double> out(n_rows * m);
  for (std::size_t i = 0; i < n_rows; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = ta[j];
  return record(Op::broadcast_rows, {a.id},
                Tensor::matrix(n_rows, m, std::move(out)),
                Attrs{0.0, n_rows, 0});
}

Var Tape::broadcast_cols(Var a, std::size_t n_cols) {
  const Tensor& ta = value(a);
  if (ta.rank() != 1) shape_fail(Op::broadcast_cols, ta);
  std::size_t n = ta.shape()[0];
  std::vector<double> out(n * n_cols);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n_cols; ++j) out[i * n_cols + j] = ta[i];
  return record(Op::broadcast_cols, {a.id},
                Tensor::matrix(n, n_cols, std::move(out)),
                Attrs{0.0, n_cols, 0});
}

Var Tape::scale(Var a, double c) {
  const Tensor& ta = value(a);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * c;
  return record(Op::scale, {a.id}, Tensor(ta.shape(), std::move(out)),
                Attrs{c, 0, 0});
}

Var Tape::add_const(Var a, double c) {
  const Tensor& ta = value(a);
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + c;
  return record(Op::add_const, {a.id}, Tensor(ta.shape(), std::move(out)),
                Attrs{c, 0, 0});
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    const Tensor& t = value(p);
    require_matrix(Op::concat_rows, t);
    if (t.shape()[1] != cols) shape_fail2(Op::concat_rows, value(parts[0]), t);
    rows += t.shape()[0];
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  std::vector<int> parents;
  for (Var p : parts) {
    const Tensor& t = value(p);
    out.insert(out.end(), t.values().begin(), t.values().end());
    parents.push_back(p.id);
  }
  return record(Op::concat_rows, std::move(parents),
                Tensor::matrix(rows, cols, std::move(out)));
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
  const Tensor& ta = value(a);
  require_matrix(Op::slice_rows, ta);
  std::size_t n = ta.shape()[0], m = ta.shape()[1];
  if (r0 >= r1 || r1 > n) {
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") out of " + std::to_string(n) +
                     " rows");
  }
  std::vector<double> out(ta.values().begin() + r0 * m,
                          ta.values().begin() + r1 * m);
  return record(Op::slice_rows, {a.id},
                Tensor::matrix(r1 - r0, m, std::move(out)), Attrs{0.0, r0, r1});
}

Var Tape::grl(Var a, double coefficient) {
  const Tensor& ta = value(a);
  return record(Op::grl, {a.id}, ta, Attrs{coefficient, 0, 0});
}

Var Tape::stop_gradient(Var a) {
  const Tensor& ta = value(a);
  return record(Op::stop_gradient, {a.id}, ta);
}

Var Tape::apply(Op op, const std::vector<Var>& inputs, const Attrs& attrs) {
  auto unary = [&](Var (Tape::*f)(Var)) {
    if (inputs.size() != 1)
      throw ShapeError(std::string(op_name(op)) + ": expects 1 input");
    return (this->*f)(inputs[0]);
  };
  auto binary = [&](Var (Tape::*f)(Var, Var)) {
    if (inputs.size() != 2)
      throw ShapeError(std::string(op_name(op)) + ": expects 2 inputs");
    return (this->*f)(inputs[0], inputs[1]);
  };
  switch (op) {
    case Op::add: return binary(&Tape::add);
    case Op::sub: return binary(&Tape::sub);
    case Op::mul: return binary(&Tape::mul);
    case Op::div: return binary(&Tape::div);
    case Op::matmul: return binary(&Tape::matmul);
    case Op::transpose: return unary(&Tape::transpose);
    case Op::relu: return unary(&Tape::relu);
    case Op::exp: return unary(&Tape::exp);
    case Op::log: return unary(&Tape::log);
    case Op::sqrt: return unary(&Tape::sqrt);
    case Op::softplus: return unary(&Tape::softplus);
    case Op::abs: return unary(&Tape::abs);
    case Op::log_softmax: return unary(&Tape::log_softmax);
    case Op::sum: return unary(&Tape::sum);
    case Op::mean: return unary(&Tape::mean);
    case Op::rowsum: return unary(&Tape::rowsum);
    case Op::colsum: return unary(&Tape::colsum);
    case Op::colmean: return unary(&Tape::colmean);
    case Op::broadcast_rows: return broadcast_rows(inputs.at(0), attrs.i0);
    case Op::broadcast_cols: return broadcast_cols(inputs.at(0), attrs.i0);
    case Op::scale: return scale(inputs.at(0), attrs.scalar);
    case Op::add_const: return add_const(inputs.at(0), attrs.scalar);
    case Op::concat_rows: return concat_rows(inputs);
    case Op::slice_rows: return slice_rows(inputs.at(0), attrs.i0, attrs.i1);
    case Op::grl: return grl(inputs.at(0), attrs.scalar);
    case Op::stop_gradient: return unary(&Tape::stop_gradient);
    case Op::input: break;
  }
  throw Error("apply: op is not applicable");
}

// ---- backward ----

GradientMap Tape::backward(Var loss) const {
  check_var(loss, "backward");
  const Node& ln = nodes_[loss.id];
  if (!ln.value.is_scalar()) {
    throw ShapeError("backward: loss has shape " +
                     shape_to_string(ln.value.shape()) + ", expected scalar");
  }

  GradientMap gm(nodes_.size());
  gm.shapes_.resize(nodes_.size());
  auto& grads = gm.grads_;
  grads[loss.id] = std::vector<double>{1.0};

  auto acc = [&](int id, std::size_t i, double v) { (*grads[id])[i] += v; };
  auto ensure = [&](int id) {
    if (!grads[id])
      grads[id] = std::vector<double>(nodes_[id].value.size(), 0.0);
  };

  for (int id = loss.id; id >= 0; --id) {
    const Node& nd = nodes_[id];
    if (!grads[id] || !nd.requires_grad) continue;
    gm.shapes_[id] = nd.value.shape();
    const std::vector<double>& g = *grads[id];
    if (nd.op == Op::input || nd.op == Op::stop_gradient) continue;

    auto parent_req = [&](std::size_t slot) {
      return nodes_[nd.parents[slot]].requires_grad;
    };
    auto pval = [&](std::size_t slot) -> const Tensor& {
      return nodes_[nd.parents[slot]].value;
    };
    auto pid = [&](std::size_t slot) { return nd.parents[slot]; };

    switch (nd.op) {
      case Op::add:
        for (std::size_t s = 0; s < 2; ++s) {
          if (!parent_req(s)) continue;
          ensure(pid(s));
          for (std::size_t i = 0; i < g.size(); ++i) acc(pid(s), i, g[i]);
        }
        break;
      case Op::sub:
        if (parent_req(0)) {
          ensure(pid(0));
          for (std::size_t i = 0; i < g.size(); ++i) acc(pid(0), i, g[i]);
        }
        if (parent_req(1)) {
          ensure(pid(1));
          for (std::size_t i = 0; i < g.size(); ++i) acc(pid(1), i, -g[i]);
        }
        break;
      case Op::mul:
        if (parent_req(0)) {
          ensure(pid(0));
          for (std::size_t i = 0; i < g.size(); ++i)
            acc(pid(0), i, g[i] * pval(1)[i]);
        }
        if (parent_req(1)) {
          ensure(pid(1));
          for (std::size_t i = 0; i < g.size(); ++i)
            acc(pid(1), i, g[i] * pval(0)[i]);
        }
        break;
      case Op::div:
        if (parent_req(0)) {
          ensure(pid(0));
          for (std::size_t i = 0; i < g.size(); ++i)
            acc(pid(0), i, g[i] / pval(1)[i]);
        }
        if (parent_req(1)) {
          ensure(pid(1));
          for (std::size_t i = 0; i < g.size(); ++i)
            acc(pid(1), i, -g[i] * pval(0)[i] / (pval(1)[i] * pval(1)[i]));
        }
        break;
      case Op::matmul: {
        std::size_t m = pval(0).shape()[0], k = pval(0).shape()[1],
                    n = pval(1).shape()[1];
        if (parent_req(0)) {  // dA = G * B^T
          ensure(pid(0));
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j)
                s += g[i * n + j] * pval(1)[p * n + j];
              acc(pid(0), i * k + p, s);
            }
        }
        if (parent_req(1)) {  // dB = A^T * G
          ensure(pid(1));
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t j = 0; j < n; ++j) {
              double s = 0.0;
              for (std::size_t i = 0; i < m; ++i)
                s += pval(0)[i * k + p] * g[i * n + j];
              acc(pid(1), p * n + j, s);
            }
        }
        break;
      }
      case Op::transpose: {
        std::size_t m = pval(0).shape()[0], n = pval(0).shape()[1];
        ensure(pid(0));
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            acc(pid(0), i * n + j, g[j * m + i]);
        break;
      }
      case Op::relu:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i)
          if (pval(0)[i] > 0.0) acc(pid(0), i, g[i]);
        break;
      case Op::exp:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i)
          acc(pid(0), i, g[i] * nd.value[i]);
        break;
      case Op::log:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i)
          acc(pid(0), i, g[i] / pval(0)[i]);
        break;
      case Op::sqrt:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i) {
          // subgradient 0 at the origin, same family as sign(0)=0
          if (nd.value[i] > 0.0) acc(pid(0), i, g[i] / (2.0 * nd.value[i]));
        }
        break;
      case Op::softplus:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i)
          acc(pid(0), i, g[i] * sigmoid(pval(0)[i]));
        break;
      case Op::abs:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i) {
          double x = pval(0)[i];
          double sg = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
          acc(pid(0), i, g[i] * sg);
        }
        break;
      case Op::log_softmax: {
        std::size_t n = nd.value.shape()[0], k = nd.value.shape()[1];
        ensure(pid(0));
        for (std::size_t i = 0; i < n; ++i) {
          double gs = 0.0;
          for (std::size_t j = 0; j < k; ++j) gs += g[i * k + j];
          for (std::size_t j = 0; j < k; ++j)
            acc(pid(0), i * k + j,
                g[i * k + j] - std::exp(nd.value[i * k + j]) * gs);
        }
        break;
      }
      case Op::sum:
        ensure(pid(0));
        for (std::size_t i = 0; i < pval(0).size(); ++i) acc(pid(0), i, g[0]);
        break;
      case Op::mean: {
        ensure(pid(0));
        double gv = g[0] / static_cast<double>(pval(0).size());
        for (std::size_t i = 0; i < pval(0).size(); ++i) acc(pid(0), i, gv);
        break;
      }
      case Op::rowsum: {
        std::size_t n = pval(0).shape()[0], m = pval(0).shape()[1];
        ensure(pid(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) acc(pid(0), i * m + j, g[i]);
        break;
      }
      case Op::colsum: {
        std::size_t n = pval(0).shape()[0], m = pval(0).shape()[1];
        ensure(pid(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) acc(pid(0), i * m + j, g[j]);
        break;
      }
      case Op::colmean: {
        std::size_t n = pval(0).shape()[0], m = pval(0).shape()[1];
        ensure(pid(0));
        double inv = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j)
            acc(pid(0), i * m + j, g[j] * inv);
        break;
      }
      case Op::broadcast_rows: {
        std::size_t n = nd.value.shape()[0], m = nd.value.shape()[1];
        ensure(pid(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) acc(pid(0), j, g[i * m + j]);
        break;
      }
      case Op::broadcast_cols: {
        std::size_t n = nd.value.shape()[0], m = nd.value.shape()[1];
        ensure(pid(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) acc(pid(0), i, g[i * m + j]);
        break;
      }
      case Op::scale:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i)
          acc(pid(0), i, g[i] * nd.attrs.scalar);
        break;
      case Op::add_const:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i) acc(pid(0), i, g[i]);
        break;
      case Op::concat_rows: {
        std::size_t m = nd.value.shape()[1];
        std::size_t row = 0;
        for (std::size_t s = 0; s < nd.parents.size(); ++s) {
          std::size_t rows = pval(s).shape()[0];
          if (parent_req(s)) {
            ensure(pid(s));
            for (std::size_t i = 0; i < rows * m; ++i)
              acc(pid(s), i, g[row * m + i]);
          }
          row += rows;
        }
        break;
      }
      case Op::slice_rows: {
        std::size_t m = pval(0).shape()[1];
        std::size_t r0 = nd.attrs.i0;
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i)
          acc(pid(0), r0 * m + i, g[i]);
        break;
      }
      case Op::grl:
        ensure(pid(0));
        for (std::size_t i = 0; i < g.size(); ++i)
          acc(pid(0), i, -nd.attrs.scalar * g[i]);
        break;
      case Op::input:
      case Op::stop_gradient:
        break;
    }
  }
  return gm;
}

Tensor Tape::input_gradient(Var loss, Var x) const {
  check_var(x, "input_gradient");
  GradientMap gm = backward(loss);
  if (auto g = gm.get(x)) return *g;
  return Tensor::zeros(value(x).shape());
}

}  // namespace artuda::autodiff
