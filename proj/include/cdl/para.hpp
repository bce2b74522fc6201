#pragma once

// Parametrized differentiable maps and their assignment to a schema.
//
// A ParamMorphism is a map P x A -> B recorded on a Tape. Composition pairs
// the parameter spaces by flat concatenation (first map's parameters first),
// which is strictly associative, and the identity has no parameters.
//
// Objects carry shapes only. Data crossing a morphism is flattened: inputs are
// [batch, numel(dom)] and outputs [batch, numel(cod)].

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdl/autodiff.hpp"
#include "cdl/schema.hpp"
#include "cdl/tensor.hpp"

namespace cdl {

enum class Activation { linear, relu, leaky_relu, tanh, sigmoid };

std::string_view to_string(Activation a);
Activation activation_from_name(std::string_view name);
NodeId apply_activation(Tape& t, Activation a, NodeId x, double leaky_slope = 0.2);

struct LayerSpec {
  enum class Kind { mlp, projection };

  Kind kind = Kind::mlp;
  // mlp: layer widths, first = input dim, last = output dim.
  // projection: {input dim, length}.
  std::vector<std::size_t> widths;
  Activation hidden = Activation::leaky_relu;
  Activation output = Activation::sigmoid;
  double leaky_slope = 0.2;
  std::size_t offset = 0;  // projection only

  static LayerSpec mlp(std::vector<std::size_t> widths, Activation hidden, Activation output);
  // Fixed, parameter-free map picking columns [offset, offset + length).
  static LayerSpec projection(std::size_t input_dim, std::size_t offset, std::size_t length);

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t param_count() const;
  // True when flat parameter index i is a bias (mlp layout: W row-major, then b, per layer).
  bool is_bias(std::size_t i) const;
  void validate() const;

  // "mlp 3 4 2 relu sigmoid" / "proj 6 0 3"
  std::string to_text() const;
};

// Parses the tokens after "arch <gen>" (generators: "mlp <w...> <hidden> <out>"
// or "proj <in> <offset> <len>") or after "disc <object>" (discriminators:
// "mlp <w...> <hidden>", linear output).
LayerSpec parse_layer_spec(const std::vector<std::string>& tokens, bool discriminator);

struct ParamMorphism {
  Shape dom;
  Shape cod;
  std::size_t param_count = 0;
  // params is a [param_count] node, absent when param_count == 0.
  std::function<NodeId(Tape&, std::optional<NodeId> params, NodeId input)> apply;

  Shape param_shape() const { return Shape{param_count}; }
};

// MLP: affine maps with weights and biases packed per layer (W then b),
// param count = sum over layers of (w_i * w_{i+1} + w_{i+1}).
ParamMorphism build_param_morphism(const LayerSpec& spec);
ParamMorphism para_compose(const ParamMorphism& f, const ParamMorphism& g);
ParamMorphism para_identity(const Shape& shape);

class ArchAssignment {
 public:
  ArchAssignment(std::shared_ptr<const Schema> schema, std::map<std::string, Shape> object_shapes,
                 std::map<std::string, LayerSpec> generator_archs);

  const Schema& schema() const { return *schema_; }
  const std::shared_ptr<const Schema>& schema_ptr() const { return schema_; }
  const Shape& object_shape(std::string_view object) const;
  std::size_t object_dim(std::string_view object) const { return numel(object_shape(object)); }
  const std::map<std::string, Shape>& object_shapes() const { return object_shapes_; }
  const LayerSpec& spec(std::string_view generator) const;
  const ParamMorphism& morphism(std::string_view generator) const;

 private:
  std::shared_ptr<const Schema> schema_;
  std::map<std::string, Shape> object_shapes_;
  std::map<std::string, LayerSpec> specs_;
  std::map<std::string, ParamMorphism> morphisms_;
};

// Composite of the per-generator morphisms along a path (identity for the
// empty path). A generator traversed twice contributes two parameter slots.
ParamMorphism arch_image_of_path(const ArchAssignment& arch, const Path& path);

struct ParamSlot {
  std::string generator;
  std::size_t offset;
  std::size_t count;
};
std::vector<ParamSlot> path_param_slots(const ArchAssignment& arch, const Path& path);

// One entry per generator, in declaration order.
std::vector<std::pair<std::string, std::size_t>> total_param_space(const ArchAssignment& arch);

// Per-generator parameter tensors. Generators without parameters have no entry.
class ParamBundle {
 public:
  void set(const std::string& name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t total_len() const;

  friend bool operator==(const ParamBundle&, const ParamBundle&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Weights ~ N(0, stddev^2), biases 0. Each generator draws from its own
// substream of seed, so adding a generator leaves the others unchanged.
ParamBundle init_params(const ArchAssignment& arch, std::uint64_t seed, double stddev);
// Same for a single spec (used for discriminators).
Tensor init_layer_params(const LayerSpec& spec, std::uint64_t seed, std::string_view stream, double stddev);

// Flat parameter vector for arch_image_of_path(path), slot by slot.
Tensor flatten_for_path(const ArchAssignment& arch, const ParamBundle& params, const Path& path);

class ModelInstance {
 public:
  ModelInstance(std::shared_ptr<const ArchAssignment> arch, ParamBundle params);

  const ArchAssignment& arch() const { return *arch_; }
  const std::shared_ptr<const ArchAssignment>& arch_ptr() const { return arch_; }
  const Schema& schema() const { return arch_->schema(); }
  const ParamBundle& params() const { return params_; }
  // Action on objects; depends on the architecture only.
  const std::map<std::string, Shape>& object_map() const { return arch_->object_shapes(); }

 private:
  std::shared_ptr<const ArchAssignment> arch_;
  ParamBundle params_;
};

ModelInstance instantiate(std::shared_ptr<const ArchAssignment> arch, ParamBundle params);

// Parameter leaves for every bundle entry; constants unless trainable.
std::map<std::string, NodeId> record_params(Tape& t, const ParamBundle& params, bool trainable);

// Applies the generators of path in order, each reading its single shared
// parameter node. input is [batch, dim(src)].
NodeId record_path(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& params,
                   const Path& path, NodeId input);

// input is either one sample (shape of path.src) or a batch [n, dim(src)];
// the result has the matching form for path.dst.
Tensor eval_path(const ModelInstance& model, const Path& path, const Tensor& input);

}  // namespace cdl
