#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape is an append-only list of nodes. Leaves are either parameters
// (gradients are returned for them) or constants (data inputs, frozen
// weights). Interior nodes record a primitive, its inputs and the computed
// value; inputs always refer to earlier nodes, so the tape is topologically
// ordered by construction and a single reverse sweep computes every adjoint.
//
// Shapes must match exactly. The only broadcast is scalar_mul, which scales a
// tensor by a constant or by a one-element node.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdl/tensor.hpp"

namespace cdl {

enum class Op : std::uint8_t {
  parameter,
  constant,
  matmul,
  add,
  sub,
  elemwise_mul,
  scalar_mul,
  concat_last_axis,
  slice_last_axis,
  relu,
  leaky_relu,
  tanh,
  sigmoid,
  abs,
  mean_all,
  sum_all,
  reshape,
};

std::string_view op_name(Op op);
// Throws ValidationError for names that are not primitives.
Op op_from_name(std::string_view name);

struct NodeId {
  std::uint32_t index = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

struct OpAttrs {
  double scalar = 1.0;        // scalar_mul factor (single-input form)
  double alpha = 0.2;         // leaky_relu slope
  std::size_t offset = 0;     // slice_last_axis
  std::size_t length = 0;     // slice_last_axis
  Shape shape;                // reshape target
};

// Gradients of a scalar root with respect to every parameter leaf of a tape.
class Gradients {
 public:
  const Tensor& at(NodeId leaf) const;
  bool contains(NodeId leaf) const { return grads_.count(leaf.index) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::map<std::uint32_t, Tensor> grads_;
};

class Tape {
 public:
  NodeId parameter(Tensor value);
  NodeId constant(Tensor value);

  // Records a primitive. Shape errors name both operand shapes.
  NodeId apply(Op op, std::initializer_list<NodeId> inputs, const OpAttrs& attrs = {});
  NodeId apply(Op op, const std::vector<NodeId>& inputs, const OpAttrs& attrs = {});

  const Tensor& value(NodeId id) const { return node(id).value; }
  const Shape& shape(NodeId id) const { return node(id).value.shape(); }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }
  bool is_parameter(NodeId id) const { return node(id).op == Op::parameter; }
  std::size_t size() const { return nodes_.size(); }

  // d root / d leaf for every parameter leaf; unreachable leaves get zeros.
  // Throws ShapeError unless root holds exactly one element.
  Gradients backward(NodeId root) const;

 private:
  struct Node {
    Op op;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor value;
    bool requires_grad;
  };

  const Node& node(NodeId id) const;
  Tensor forward(Op op, const std::vector<NodeId>& inputs, const OpAttrs& attrs) const;
  void propagate(const Node& n, const Tensor& g, std::vector<std::optional<Tensor>>& grads) const;

  std::vector<Node> nodes_;
};

// Convenience wrappers around Tape::apply.
NodeId matmul(Tape& t, NodeId a, NodeId b);
NodeId add(Tape& t, NodeId a, NodeId b);
NodeId sub(Tape& t, NodeId a, NodeId b);
NodeId mul(Tape& t, NodeId a, NodeId b);
NodeId scale(Tape& t, double s, NodeId x);
NodeId scale(Tape& t, NodeId s, NodeId x);
NodeId concat(Tape& t, NodeId a, NodeId b);
NodeId slice(Tape& t, NodeId x, std::size_t offset, std::size_t length);
NodeId relu(Tape& t, NodeId x);
NodeId leaky_relu(Tape& t, NodeId x, double alpha = 0.2);
NodeId tanh(Tape& t, NodeId x);
NodeId sigmoid(Tape& t, NodeId x);
NodeId abs(Tape& t, NodeId x);
NodeId mean_all(Tape& t, NodeId x);
NodeId sum_all(Tape& t, NodeId x);
NodeId reshape(Tape& t, NodeId x, Shape shape);

// Builds a scalar-rooted tape from a parameter leaf holding the point.
using TapeBuilder = std::function<NodeId(Tape&, NodeId point)>;

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central differences against an arbitrary analytic gradient. Relative error
// per coordinate is |a - n| / max(|a|, |n|, 1e-8), so coordinates where both
// are below 1e-8 are judged on absolute error.
GradCheckReport compare_with_finite_differences(const std::function<double(const Tensor&)>& f,
                                                const Tensor& analytic, const Tensor& point,
                                                double eps, double tol);

// Compares Tape::backward against central finite differences.
GradCheckReport grad_check(const TapeBuilder& f, const Tensor& point, double eps = 1e-5,
                           double tol = 1e-4);

}  // namespace cdl
