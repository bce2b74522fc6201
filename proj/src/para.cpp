#include "cdl/para.hpp"

#include <algorithm>

#include "cdl/rng.hpp"

namespace cdl {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "linear";
}

Activation activation_from_name(std::string_view name) {
  for (auto a : {Activation::linear, Activation::relu, Activation::leaky_relu, Activation::tanh,
                 Activation::sigmoid})
    if (to_string(a) == name) return a;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

NodeId apply_activation(Tape& t, Activation a, NodeId x, double leaky_slope) {
  switch (a) {
    case Activation::linear: return x;
    case Activation::relu: return relu(t, x);
    case Activation::leaky_relu: return leaky_relu(t, x, leaky_slope);
    case Activation::tanh: return tanh(t, x);
    case Activation::sigmoid: return sigmoid(t, x);
  }
  return x;
}

LayerSpec LayerSpec::mlp(std::vector<std::size_t> widths, Activation hidden, Activation output) {
  LayerSpec s;
  s.kind = Kind::mlp;
  s.widths = std::move(widths);
  s.hidden = hidden;
  s.output = output;
  s.validate();
  return s;
}

LayerSpec LayerSpec::projection(std::size_t input_dim, std::size_t offset, std::size_t length) {
  LayerSpec s;
  s.kind = Kind::projection;
  s.widths = {input_dim, length};
  s.offset = offset;
  s.output = Activation::linear;
  s.validate();
  return s;
}

void LayerSpec::validate() const {
  if (widths.size() < 2) throw ValidationError("layer spec needs at least two widths");
  for (auto w : widths)
    if (w == 0) throw ValidationError("layer widths must be positive");
  if (kind == Kind::projection && (widths.size() != 2 || offset + widths[1] > widths[0]))
    throw ValidationError("projection range exceeds input width");
}

std::size_t LayerSpec::param_count() const {
  if (kind == Kind::projection) return 0;
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l] * widths[l + 1] + widths[l + 1];
  return n;
}

bool LayerSpec::is_bias(std::size_t i) const {
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t w = widths[l] * widths[l + 1], b = widths[l + 1];
    if (i < w) return false;
    if (i < w + b) return true;
    i -= w + b;
  }
  return false;
}

std::string LayerSpec::to_text() const {
  if (kind == Kind::projection)
    return "proj " + std::to_string(widths[0]) + " " + std::to_string(offset) + " " + std::to_string(widths[1]);
  std::string s = "mlp";
  for (auto w : widths) s += " " + std::to_string(w);
  s += " " + std::string(to_string(hidden)) + " " + std::string(to_string(output));
  return s;
}

LayerSpec parse_layer_spec(const std::vector<std::string>& tokens, bool discriminator) {
  auto count = [](const std::string& s) -> std::size_t {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &pos);
    } catch (...) {
      pos = 0;
    }
    if (pos != s.size() || v < 0) throw ValidationError("expected a non-negative integer, got '" + s + "'");
    return static_cast<std::size_t>(v);
  };
  if (tokens.empty()) throw ValidationError("missing layer kind");
  if (tokens[0] == "proj") {
    if (discriminator) throw ValidationError("discriminators must be mlp");
    if (tokens.size() != 4) throw ValidationError("expected: proj <in> <offset> <len>");
    return LayerSpec::projection(count(tokens[1]), count(tokens[2]), count(tokens[3]));
  }
  if (tokens[0] != "mlp") throw ValidationError("unknown layer kind '" + tokens[0] + "'");
  const std::size_t n_acts = discriminator ? 1 : 2;
  if (tokens.size() < 1 + n_acts) throw ValidationError("layer spec is missing activations");
  std::vector<std::size_t> widths;
  for (std::size_t i = 1; i + n_acts < tokens.size(); ++i) widths.push_back(count(tokens[i]));
  const Activation hidden = activation_from_name(tokens[tokens.size() - n_acts]);
  const Activation output = discriminator ? Activation::linear : activation_from_name(tokens.back());
  LayerSpec s = LayerSpec::mlp(std::move(widths), hidden, output);
  if (discriminator && s.output_dim() != 1) throw ValidationError("discriminator output width must be 1");
  return s;
}

ParamMorphism build_param_morphism(const LayerSpec& spec) {
  spec.validate();
  ParamMorphism m;
  m.dom = Shape{spec.input_dim()};
  m.cod = Shape{spec.output_dim()};
  m.param_count = spec.param_count();
  if (spec.kind == LayerSpec::Kind::projection) {
    const std::size_t off = spec.offset, len = spec.widths[1];
    m.apply = [off, len](Tape& t, std::optional<NodeId>, NodeId x) { return slice(t, x, off, len); };
    return m;
  }
  m.apply = [spec](Tape& t, std::optional<NodeId> params, NodeId x) {
    if (!params) throw ValidationError("mlp applied without parameters");
    const std::size_t batch = t.shape(x).front();
    // Bias folded into the matmul: [h, 1] * [W; b].
    const NodeId ones = t.constant(Tensor(Shape{batch, 1}, 1.0));
    NodeId h = x;
    std::size_t off = 0;
    const std::size_t layers = spec.widths.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
      const std::size_t len = (in + 1) * out;
      const NodeId w = reshape(t, slice(t, *params, off, len), Shape{in + 1, out});
      h = matmul(t, concat(t, h, ones), w);
      h = apply_activation(t, l + 1 == layers ? spec.output : spec.hidden, h, spec.leaky_slope);
      off += len;
    }
    return h;
  };
  return m;
}

ParamMorphism para_compose(const ParamMorphism& f, const ParamMorphism& g) {
  if (f.cod != g.dom)
    throw ShapeError("para_compose: codomain " + to_string(f.cod) + " does not match domain " + to_string(g.dom));
  ParamMorphism h;
  h.dom = f.dom;
  h.cod = g.cod;
  h.param_count = f.param_count + g.param_count;
  h.apply = [f, g](Tape& t, std::optional<NodeId> params, NodeId x) {
    std::optional<NodeId> pf, pg;
    if (f.param_count) pf = slice(t, *params, 0, f.param_count);
    if (g.param_count) pg = slice(t, *params, f.param_count, g.param_count);
    return g.apply(t, pg, f.apply(t, pf, x));
  };
  return h;
}

ParamMorphism para_identity(const Shape& shape) {
  ParamMorphism m;
  m.dom = shape;
  m.cod = shape;
  m.param_count = 0;
  m.apply = [](Tape&, std::optional<NodeId>, NodeId x) { return x; };
  return m;
}

ArchAssignment::ArchAssignment(std::shared_ptr<const Schema> schema, std::map<std::string, Shape> object_shapes,
                               std::map<std::string, LayerSpec> generator_archs)
    : schema_(std::move(schema)), object_shapes_(std::move(object_shapes)), specs_(std::move(generator_archs)) {
  for (const auto& o : schema_->objects())
    if (!object_shapes_.count(o)) throw ValidationError("no shape assigned to object " + o);
  for (const auto& [o, s] : object_shapes_) {
    if (!schema_->has_object(o)) throw ValidationError("shape given for unknown object " + o);
    if (s.empty() || numel(s) == 0) throw ValidationError("object " + o + " needs a non-empty shape");
  }
  for (const auto& [g, spec] : specs_)
    if (!schema_->generator_index(g)) throw ValidationError("architecture given for unknown generator " + g);
  for (const auto& g : schema_->generators()) {
    auto it = specs_.find(g.name);
    if (it == specs_.end()) throw ValidationError("no architecture for generator " + g.name);
    const LayerSpec& spec = it->second;
    spec.validate();
    if (spec.input_dim() != object_dim(g.src))
      throw ShapeError("generator " + g.name + ": input width " + std::to_string(spec.input_dim()) +
                       " differs from dim(" + g.src + ") = " + std::to_string(object_dim(g.src)));
    if (spec.output_dim() != object_dim(g.dst))
      throw ShapeError("generator " + g.name + ": output width " + std::to_string(spec.output_dim()) +
                       " differs from dim(" + g.dst + ") = " + std::to_string(object_dim(g.dst)));
    morphisms_.emplace(g.name, build_param_morphism(spec));
  }
}

const Shape& ArchAssignment::object_shape(std::string_view object) const {
  auto it = object_shapes_.find(std::string(object));
  if (it == object_shapes_.end()) throw ValidationError("unknown object " + std::string(object));
  return it->second;
}

const LayerSpec& ArchAssignment::spec(std::string_view generator) const {
  auto it = specs_.find(std::string(generator));
  if (it == specs_.end()) throw ValidationError("unknown generator '" + std::string(generator) + "'");
  return it->second;
}

const ParamMorphism& ArchAssignment::morphism(std::string_view generator) const {
  auto it = morphisms_.find(std::string(generator));
  if (it == morphisms_.end()) throw ValidationError("unknown generator '" + std::string(generator) + "'");
  return it->second;
}

ParamMorphism arch_image_of_path(const ArchAssignment& arch, const Path& path) {
  arch.schema().validate(path);
  if (path.is_identity()) return para_identity(Shape{arch.object_dim(path.src)});
  ParamMorphism m = arch.morphism(path.edges.front());
  for (std::size_t i = 1; i < path.edges.size(); ++i) m = para_compose(m, arch.morphism(path.edges[i]));
  return m;
}

std::vector<ParamSlot> path_param_slots(const ArchAssignment& arch, const Path& path) {
  arch.schema().validate(path);
  std::vector<ParamSlot> slots;
  std::size_t off = 0;
  for (const auto& e : path.edges) {
    const std::size_t n = arch.morphism(e).param_count;
    slots.push_back(ParamSlot{e, off, n});
    off += n;
  }
  return slots;
}

std::vector<std::pair<std::string, std::size_t>> total_param_space(const ArchAssignment& arch) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& g : arch.schema().generators()) out.emplace_back(g.name, arch.morphism(g.name).param_count);
  return out;
}

void ParamBundle::set(const std::string& name, Tensor value) {
  for (auto& [n, t] : entries_)
    if (n == name) {
      t = std::move(value);
      return;
    }
  entries_.emplace_back(name, std::move(value));
}

bool ParamBundle::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Tensor& ParamBundle::at(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ValidationError("no parameters for '" + std::string(name) + "'");
}

Tensor& ParamBundle::at(std::string_view name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw ValidationError("no parameters for '" + std::string(name) + "'");
}

std::size_t ParamBundle::total_len() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

Tensor init_layer_params(const LayerSpec& spec, std::uint64_t seed, std::string_view stream, double stddev) {
  if (stddev < 0.0) throw ValidationError("init stddev must be non-negative");
  const std::size_t n = spec.param_count();
  if (n == 0) throw ValidationError("layer has no parameters");
  Rng rng = Rng::substream(seed, stream);
  Tensor p(Shape{n});
  for (std::size_t i = 0; i < n; ++i) p[i] = spec.is_bias(i) ? 0.0 : stddev * rng.normal();
  return p;
}

ParamBundle init_params(const ArchAssignment& arch, std::uint64_t seed, double stddev) {
  ParamBundle b;
  for (const auto& g : arch.schema().generators()) {
    const LayerSpec& spec = arch.spec(g.name);
    if (spec.param_count() == 0) continue;
    b.set(g.name, init_layer_params(spec, seed, "init/gen/" + g.name, stddev));
  }
  return b;
}

Tensor flatten_for_path(const ArchAssignment& arch, const ParamBundle& params, const Path& path) {
  std::vector<double> flat;
  for (const auto& slot : path_param_slots(arch, path)) {
    if (!slot.count) continue;
    const auto v = params.at(slot.generator).values();
    flat.insert(flat.end(), v.begin(), v.end());
  }
  if (flat.empty()) throw ValidationError("path " + to_string(path) + " has no parameters");
  const std::size_t n = flat.size();
  return Tensor(Shape{n}, std::move(flat));
}

ModelInstance::ModelInstance(std::shared_ptr<const ArchAssignment> arch, ParamBundle params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  for (const auto& [name, t] : params_.entries())
    if (!arch_->schema().generator_index(name)) throw ValidationError("parameters for unknown generator " + name);
  for (const auto& g : arch_->schema().generators()) {
    const std::size_t n = arch_->morphism(g.name).param_count;
    if (n == 0) {
      if (params_.contains(g.name)) throw ShapeError("generator " + g.name + " takes no parameters");
      continue;
    }
    if (!params_.contains(g.name)) throw ShapeError("missing parameters for generator " + g.name);
    const Tensor& t = params_.at(g.name);
    if (t.shape() != Shape{n})
      throw ShapeError("generator " + g.name + ": parameter shape " + to_string(t.shape()) + ", expected " +
                       to_string(Shape{n}));
  }
}

ModelInstance instantiate(std::shared_ptr<const ArchAssignment> arch, ParamBundle params) {
  return ModelInstance(std::move(arch), std::move(params));
}

std::map<std::string, NodeId> record_params(Tape& t, const ParamBundle& params, bool trainable) {
  std::map<std::string, NodeId> nodes;
  for (const auto& [name, value] : params.entries())
    nodes.emplace(name, trainable ? t.parameter(value) : t.constant(value));
  return nodes;
}

NodeId record_path(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& params,
                   const Path& path, NodeId input) {
  const Shape& in = t.shape(input);
  if (in.size() != 2 || in[1] != arch.object_dim(path.src))
    throw ShapeError("path " + to_string(path) + " expects [batch, " + std::to_string(arch.object_dim(path.src)) +
                     "], got " + to_string(in));
  NodeId y = input;
  for (const auto& e : path.edges) {
    const ParamMorphism& m = arch.morphism(e);
    std::optional<NodeId> p;
    if (m.param_count) {
      auto it = params.find(e);
      if (it == params.end()) throw ValidationError("no parameters for generator " + e);
      p = it->second;
    }
    y = m.apply(t, p, y);
  }
  return y;
}

Tensor eval_path(const ModelInstance& model, const Path& path, const Tensor& input) {
  const ArchAssignment& arch = model.arch();
  arch.schema().validate(path);
  const std::size_t dim = arch.object_dim(path.src);
  const bool single = input.shape() == arch.object_shape(path.src) ||
                      (input.rank() == 1 && input.size() == dim);
  const bool batched = input.rank() == 2 && input.shape()[1] == dim;
  if (!single && !batched)
    throw ShapeError("eval_path " + to_string(path) + ": input shape " + to_string(input.shape()) +
                     " does not match object " + path.src + " " + to_string(arch.object_shape(path.src)));
  if (path.is_identity()) return input;
  Tape t;
  const auto params = record_params(t, model.params(), false);
  const NodeId x = t.constant(single ? input.reshaped(Shape{1, dim}) : input);
  const Tensor& out = t.value(record_path(t, arch, params, path, x));
  if (single) return out.reshaped(arch.object_shape(path.dst));
  return out;
}

}  // namespace cdl
