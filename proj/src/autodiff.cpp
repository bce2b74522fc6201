#include "cdl/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "cdl/kernels.hpp"

namespace cdl {

namespace k = kernels::parallel;

namespace {

struct OpInfo {
  Op op;
  std::string_view name;
};

constexpr std::array kOps{
    OpInfo{Op::parameter, "parameter"},
    OpInfo{Op::constant, "constant"},
    OpInfo{Op::matmul, "matmul"},
    OpInfo{Op::add, "add"},
    OpInfo{Op::sub, "sub"},
    OpInfo{Op::elemwise_mul, "elemwise_mul"},
    OpInfo{Op::scalar_mul, "scalar_mul"},
    OpInfo{Op::concat_last_axis, "concat_last_axis"},
    OpInfo{Op::slice_last_axis, "slice_last_axis"},
    OpInfo{Op::relu, "relu"},
    OpInfo{Op::leaky_relu, "leaky_relu"},
    OpInfo{Op::tanh, "tanh"},
    OpInfo{Op::sigmoid, "sigmoid"},
    OpInfo{Op::abs, "abs"},
    OpInfo{Op::mean_all, "mean_all"},
    OpInfo{Op::sum_all, "sum_all"},
    OpInfo{Op::reshape, "reshape"},
};

std::optional<kernels::Unary> unary_kind(Op op) {
  switch (op) {
    case Op::relu: return kernels::Unary::relu;
    case Op::leaky_relu: return kernels::Unary::leaky_relu;
    case Op::tanh: return kernels::Unary::tanh;
    case Op::sigmoid: return kernels::Unary::sigmoid;
    case Op::abs: return kernels::Unary::abs;
    default: return std::nullopt;
  }
}

std::size_t expected_arity(Op op) {
  switch (op) {
    case Op::parameter:
    case Op::constant: return 0;
    case Op::matmul:
    case Op::add:
    case Op::sub:
    case Op::elemwise_mul:
    case Op::concat_last_axis: return 2;
    default: return 1;
  }
}

[[noreturn]] void shape_mismatch(Op op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + to_string(a) + " vs " +
                   to_string(b));
}

Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

}  // namespace

std::string_view op_name(Op op) {
  for (const auto& info : kOps)
    if (info.op == op) return info.name;
  return "unknown";
}

Op op_from_name(std::string_view name) {
  for (const auto& info : kOps)
    if (info.name == name && info.op != Op::parameter && info.op != Op::constant) return info.op;
  throw ValidationError("unknown primitive '" + std::string(name) + "'");
}

const Tensor& Gradients::at(NodeId leaf) const {
  auto it = grads_.find(leaf.index);
  if (it == grads_.end())
    throw ValidationError("no gradient recorded for node " + std::to_string(leaf.index));
  return it->second;
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id.index >= nodes_.size())
    throw ValidationError("node " + std::to_string(id.index) + " is not on this tape");
  return nodes_[id.index];
}

NodeId Tape::parameter(Tensor value) {
  nodes_.push_back(Node{Op::parameter, {}, {}, std::move(value), true});
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::constant(Tensor value) {
  nodes_.push_back(Node{Op::constant, {}, {}, std::move(value), false});
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Tape::apply(Op op, std::initializer_list<NodeId> inputs, const OpAttrs& attrs) {
  return apply(op, std::vector<NodeId>(inputs), attrs);
}

NodeId Tape::apply(Op op, const std::vector<NodeId>& inputs, const OpAttrs& attrs) {
  if (std::none_of(kOps.begin(), kOps.end(), [op](const OpInfo& i) { return i.op == op; }))
    throw ValidationError("unknown primitive tag " + std::to_string(static_cast<int>(op)));
  if (op == Op::parameter || op == Op::constant)
    throw ValidationError("leaves are created with Tape::parameter / Tape::constant");
  const std::size_t arity = expected_arity(op);
  const bool arity_ok = inputs.size() == arity || (op == Op::scalar_mul && inputs.size() == 2);
  if (!arity_ok)
    throw ValidationError(std::string(op_name(op)) + " expects " + std::to_string(arity) +
                          " inputs, got " + std::to_string(inputs.size()));
  bool rg = false;
  for (auto in : inputs) rg = rg || node(in).requires_grad;
  Tensor out = forward(op, inputs, attrs);
  nodes_.push_back(Node{op, inputs, attrs, std::move(out), rg});
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Tape::forward(Op op, const std::vector<NodeId>& in, const OpAttrs& attrs) const {
  auto val = [&](std::size_t i) -> const Tensor& { return node(in[i]).value; };

  if (auto u = unary_kind(op)) {
    const Tensor& x = val(0);
    Tensor out(x.shape());
    k::unary_forward(*u, attrs.alpha, x.values(), out.values());
    return out;
  }

  switch (op) {
    case Op::matmul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        shape_mismatch(op, a.shape(), b.shape());
      const std::size_t m = a.shape()[0], kk = a.shape()[1], n = b.shape()[1];
      Tensor out(Shape{m, n});
      k::gemm_nn(a.values(), b.values(), out.values(), m, kk, n);
      return out;
    }
    case Op::add:
    case Op::sub:
    case Op::elemwise_mul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (a.shape() != b.shape()) shape_mismatch(op, a.shape(), b.shape());
      Tensor out(a.shape());
      if (op == Op::add) k::add(a.values(), b.values(), out.values());
      else if (op == Op::sub) k::sub(a.values(), b.values(), out.values());
      else k::mul(a.values(), b.values(), out.values());
      return out;
    }
    case Op::scalar_mul: {
      double s = attrs.scalar;
      const Tensor* x = &val(0);
      if (in.size() == 2) {
        if (val(0).size() != 1) shape_mismatch(op, val(0).shape(), val(1).shape());
        s = val(0)[0];
        x = &val(1);
      }
      Tensor out(x->shape());
      k::scale(s, x->values(), out.values());
      return out;
    }
    case Op::concat_last_axis: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      if (a.rank() == 0 || a.rank() != b.rank() ||
          !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin()))
        shape_mismatch(op, a.shape(), b.shape());
      const std::size_t la = a.last_dim(), lb = b.last_dim(), rows = a.size() / la;
      Tensor out(with_last(a.shape(), la + lb));
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.data() + r * la, la, out.data() + r * (la + lb));
        std::copy_n(b.data() + r * lb, lb, out.data() + r * (la + lb) + la);
      }
      return out;
    }
    case Op::slice_last_axis: {
      const Tensor& x = val(0);
      if (x.rank() == 0 || attrs.length == 0 || attrs.offset + attrs.length > x.last_dim())
        throw ShapeError("slice_last_axis: range [" + std::to_string(attrs.offset) + ", " +
                         std::to_string(attrs.offset + attrs.length) + ") invalid for shape " +
                         to_string(x.shape()));
      const std::size_t l = x.last_dim(), rows = x.size() / l;
      Tensor out(with_last(x.shape(), attrs.length));
      for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(x.data() + r * l + attrs.offset, attrs.length, out.data() + r * attrs.length);
      return out;
    }
    case Op::mean_all:
    case Op::sum_all: {
      const Tensor& x = val(0);
      double s = k::sum(x.values());
      if (op == Op::mean_all) s /= static_cast<double>(x.size());
      return Tensor::scalar(s);
    }
    case Op::reshape: {
      const Tensor& x = val(0);
      if (numel(attrs.shape) != x.size()) shape_mismatch(op, x.shape(), attrs.shape);
      return x.reshaped(attrs.shape);
    }
    default: break;
  }
  throw ValidationError("unknown primitive tag " + std::to_string(static_cast<int>(op)));
}

namespace {

void accumulate_into(std::optional<Tensor>& slot, Tensor&& g) {
  if (!slot) slot = std::move(g);
  else k::accumulate(g.values(), slot->values());
}

}  // namespace

void Tape::propagate(const Node& n, const Tensor& g, std::vector<std::optional<Tensor>>& grads) const {
  auto needs = [&](std::size_t i) { return nodes_[n.inputs[i].index].requires_grad; };
  auto slot = [&](std::size_t i) -> std::optional<Tensor>& { return grads[n.inputs[i].index]; };
  auto val = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i].index].value; };

  if (auto u = unary_kind(n.op)) {
    const Tensor& x = val(0);
    Tensor gx(x.shape());
    k::unary_backward(*u, n.attrs.alpha, x.values(), n.value.values(), g.values(), gx.values());
    accumulate_into(slot(0), std::move(gx));
    return;
  }

  switch (n.op) {
    case Op::matmul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      const std::size_t m = a.shape()[0], kk = a.shape()[1], nn = b.shape()[1];
      if (needs(0)) {
        Tensor ga(a.shape());
        k::gemm_nt(g.values(), b.values(), ga.values(), m, kk, nn);
        accumulate_into(slot(0), std::move(ga));
      }
      if (needs(1)) {
        Tensor gb(b.shape());
        k::gemm_tn(a.values(), g.values(), gb.values(), m, kk, nn);
        accumulate_into(slot(1), std::move(gb));
      }
      return;
    }
    case Op::add:
      if (needs(0)) accumulate_into(slot(0), Tensor(g));
      if (needs(1)) accumulate_into(slot(1), Tensor(g));
      return;
    case Op::sub:
      if (needs(0)) accumulate_into(slot(0), Tensor(g));
      if (needs(1)) {
        Tensor gb(g.shape());
        k::scale(-1.0, g.values(), gb.values());
        accumulate_into(slot(1), std::move(gb));
      }
      return;
    case Op::elemwise_mul:
      for (std::size_t i = 0; i < 2; ++i) {
        if (!needs(i)) continue;
        Tensor gi(g.shape());
        k::mul(g.values(), val(1 - i).values(), gi.values());
        accumulate_into(slot(i), std::move(gi));
      }
      return;
    case Op::scalar_mul: {
      if (n.inputs.size() == 1) {
        Tensor gx(g.shape());
        k::scale(n.attrs.scalar, g.values(), gx.values());
        accumulate_into(slot(0), std::move(gx));
        return;
      }
      const double s = val(0)[0];
      if (needs(0)) {
        const Tensor& x = val(1);
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += g[i] * x[i];
        accumulate_into(slot(0), Tensor(val(0).shape(), acc));
      }
      if (needs(1)) {
        Tensor gx(g.shape());
        k::scale(s, g.values(), gx.values());
        accumulate_into(slot(1), std::move(gx));
      }
      return;
    }
    case Op::concat_last_axis: {
      const std::size_t la = val(0).last_dim(), lb = val(1).last_dim();
      const std::size_t rows = val(0).size() / la;
      if (needs(0)) {
        Tensor ga(val(0).shape());
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(g.data() + r * (la + lb), la, ga.data() + r * la);
        accumulate_into(slot(0), std::move(ga));
      }
      if (needs(1)) {
        Tensor gb(val(1).shape());
        for (std::size_t r = 0; r < rows; ++r)
          std::copy_n(g.data() + r * (la + lb) + la, lb, gb.data() + r * lb);
        accumulate_into(slot(1), std::move(gb));
      }
      return;
    }
    case Op::slice_last_axis: {
      const Tensor& x = val(0);
      const std::size_t l = x.last_dim(), rows = x.size() / l, len = n.attrs.length;
      auto& s = slot(0);
      if (!s) s = Tensor(x.shape());
      for (std::size_t r = 0; r < rows; ++r) {
        double* dst = s->data() + r * l + n.attrs.offset;
        const double* src = g.data() + r * len;
        for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
      }
      return;
    }
    case Op::mean_all:
    case Op::sum_all: {
      const Tensor& x = val(0);
      double v = g[0];
      if (n.op == Op::mean_all) v /= static_cast<double>(x.size());
      accumulate_into(slot(0), Tensor(x.shape(), v));
      return;
    }
    case Op::reshape:
      accumulate_into(slot(0), g.reshaped(val(0).shape()));
      return;
    default: return;
  }
}

Gradients Tape::backward(NodeId root) const {
  const Node& r = node(root);
  if (r.value.size() != 1)
    throw ShapeError("backward needs a scalar root, got shape " + to_string(r.value.shape()));

  std::vector<std::optional<Tensor>> grads(root.index + 1);
  grads[root.index] = Tensor(r.value.shape(), 1.0);
  for (std::size_t i = root.index + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!grads[i] || !n.requires_grad || n.inputs.empty()) continue;
    propagate(n, *grads[i], grads);
    if (n.op != Op::parameter) grads[i].reset();
  }

  Gradients out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != Op::parameter) continue;
    if (i < grads.size() && grads[i]) out.grads_.emplace(static_cast<std::uint32_t>(i), std::move(*grads[i]));
    else out.grads_.emplace(static_cast<std::uint32_t>(i), Tensor(nodes_[i].value.shape()));
  }
  return out;
}

NodeId matmul(Tape& t, NodeId a, NodeId b) { return t.apply(Op::matmul, {a, b}); }
NodeId add(Tape& t, NodeId a, NodeId b) { return t.apply(Op::add, {a, b}); }
NodeId sub(Tape& t, NodeId a, NodeId b) { return t.apply(Op::sub, {a, b}); }
NodeId mul(Tape& t, NodeId a, NodeId b) { return t.apply(Op::elemwise_mul, {a, b}); }
NodeId scale(Tape& t, double s, NodeId x) {
  OpAttrs at;
  at.scalar = s;
  return t.apply(Op::scalar_mul, {x}, at);
}
NodeId scale(Tape& t, NodeId s, NodeId x) { return t.apply(Op::scalar_mul, {s, x}); }
NodeId concat(Tape& t, NodeId a, NodeId b) { return t.apply(Op::concat_last_axis, {a, b}); }
NodeId slice(Tape& t, NodeId x, std::size_t offset, std::size_t length) {
  OpAttrs at;
  at.offset = offset;
  at.length = length;
  return t.apply(Op::slice_last_axis, {x}, at);
}
NodeId relu(Tape& t, NodeId x) { return t.apply(Op::relu, {x}); }
NodeId leaky_relu(Tape& t, NodeId x, double alpha) {
  OpAttrs at;
  at.alpha = alpha;
  return t.apply(Op::leaky_relu, {x}, at);
}
NodeId tanh(Tape& t, NodeId x) { return t.apply(Op::tanh, {x}); }
NodeId sigmoid(Tape& t, NodeId x) { return t.apply(Op::sigmoid, {x}); }
NodeId abs(Tape& t, NodeId x) { return t.apply(Op::abs, {x}); }
NodeId mean_all(Tape& t, NodeId x) { return t.apply(Op::mean_all, {x}); }
NodeId sum_all(Tape& t, NodeId x) { return t.apply(Op::sum_all, {x}); }
NodeId reshape(Tape& t, NodeId x, Shape shape) {
  OpAttrs at;
  at.shape = std::move(shape);
  return t.apply(Op::reshape, {x}, at);
}

GradCheckReport compare_with_finite_differences(const std::function<double(const Tensor&)>& f,
                                                const Tensor& analytic, const Tensor& point,
                                                double eps, double tol) {
  if (!(eps > 0.0)) throw ValidationError("grad_check: eps must be positive");
  if (analytic.shape() != point.shape())
    throw ShapeError("grad_check: gradient shape " + to_string(analytic.shape()) +
                     " differs from point shape " + to_string(point.shape()));
  GradCheckReport rep;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + eps;
    const double up = f(probe);
    probe[i] = point[i] - eps;
    const double down = f(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double err = std::abs(a - numeric) / denom;
    if (i == 0 || err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst_index = i;
      rep.analytic_at_worst = a;
      rep.numeric_at_worst = numeric;
    }
  }
  rep.passed = rep.max_rel_error <= tol;
  return rep;
}

GradCheckReport grad_check(const TapeBuilder& f, const Tensor& point, double eps, double tol) {
  Tape tape;
  const NodeId x = tape.parameter(point);
  const NodeId root = f(tape, x);
  const Tensor analytic = tape.backward(root).at(x);
  auto value = [&f](const Tensor& p) {
    Tape t;
    const NodeId leaf = t.parameter(p);
    const NodeId r = f(t, leaf);
    if (t.value(r).size() != 1) throw ShapeError("grad_check: builder produced a non-scalar output");
    return t.value(r)[0];
  };
  return compare_with_finite_differences(value, analytic, point, eps, tol);
}

}  // namespace cdl
