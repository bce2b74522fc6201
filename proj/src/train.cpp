#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cdl/train.hpp"

namespace cdl {

// ---- discriminators ----

DiscriminatorAssignment::DiscriminatorAssignment(const ArchAssignment& arch, std::map<std::string, LayerSpec> specs,
                                                 double clip_bound)
    : specs_(std::move(specs)), clip_bound_(clip_bound) {
  if (!(clip_bound > 0)) throw ValidationError("clip_bound must be positive");
  for (const auto& g : arch.schema().generators())
    if (!specs_.count(g.dst))
      throw ValidationError("missing discriminator for object " + g.dst + " (codomain of generator " + g.name + ")");
  for (const auto& [obj, spec] : specs_) {
    if (!arch.schema().has_object(obj)) throw ValidationError("discriminator given for unknown object " + obj);
    spec.validate();
    if (spec.kind != LayerSpec::Kind::mlp || spec.output_dim() != 1)
      throw ValidationError("discriminator for " + obj + " must be an mlp with a single output");
    if (spec.input_dim() != arch.object_dim(obj))
      throw ShapeError("discriminator for " + obj + " takes " + std::to_string(spec.input_dim()) +
                       " inputs but the object has dim " + std::to_string(arch.object_dim(obj)));
    morphisms_.emplace(obj, build_param_morphism(spec));
  }
}

const LayerSpec& DiscriminatorAssignment::spec(std::string_view object) const {
  auto it = specs_.find(std::string(object));
  if (it == specs_.end()) throw ValidationError("no discriminator for object " + std::string(object));
  return it->second;
}

const ParamMorphism& DiscriminatorAssignment::morphism(std::string_view object) const {
  auto it = morphisms_.find(std::string(object));
  if (it == morphisms_.end()) throw ValidationError("no discriminator for object " + std::string(object));
  return it->second;
}

// Initial weights are clipped too, so the bound holds from the start.
ParamBundle init_discriminators(const DiscriminatorAssignment& d, std::uint64_t seed, double stddev) {
  ParamBundle b;
  for (const auto& [obj, spec] : d.specs()) b.set(obj, init_layer_params(spec, seed, "init/disc/" + obj, stddev));
  clip_weights(b, d.clip_bound());
  return b;
}

void clip_weights(ParamBundle& p, double bound) {
  for (const auto& [name, _] : p.entries())
    for (double& v : p.at(name).values()) v = std::clamp(v, -bound, bound);
}

double max_abs_weight(const ParamBundle& p) {
  double m = 0;
  for (const auto& [_, t] : p.entries())
    for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

// ---- losses ----

NodeId l1_batch_mean(Tape& t, NodeId a, NodeId b) {
  const Shape& s = t.shape(a);
  if (s.size() != 2 || s != t.shape(b))
    throw ShapeError("l1 distance needs equal [batch, dim] operands, got " + to_string(s) + " and " +
                     to_string(t.shape(b)));
  return scale(t, 1.0 / static_cast<double>(s[0]), sum_all(t, abs(t, sub(t, a, b))));
}

NodeId adversarial_term(Tape& t, const ParamMorphism& disc, std::optional<NodeId> disc_params, NodeId real,
                        NodeId fake) {
  if (t.shape(real).size() != 2 || t.shape(fake).size() != 2 || t.shape(real)[1] != t.shape(fake)[1])
    throw ShapeError("adversarial term: real " + to_string(t.shape(real)) + " vs fake " + to_string(t.shape(fake)));
  const NodeId dr = mean_all(t, disc.apply(t, disc_params, real));
  const NodeId df = mean_all(t, disc.apply(t, disc_params, fake));
  return sub(t, dr, df);
}

NodeId adversarial_loss(Tape& t, const ParamMorphism& gen, std::optional<NodeId> gen_params,
                        const ParamMorphism& disc, std::optional<NodeId> disc_params, NodeId real, NodeId src) {
  return adversarial_term(t, disc, disc_params, real, gen.apply(t, gen_params, src));
}

NodeId path_eq_loss(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& params,
                    const Equation& eq, NodeId batch, const std::map<std::string, NodeId>* rhs_params) {
  if (eq.lhs.src != eq.rhs.src || eq.lhs.dst != eq.rhs.dst)
    throw ValidationError("equation sides are not parallel: " + to_string(eq.lhs) + " vs " + to_string(eq.rhs));
  if (eq.lhs == eq.rhs) return t.constant(Tensor::scalar(0.0));
  const NodeId l = record_path(t, arch, params, eq.lhs, batch);
  const NodeId r = record_path(t, arch, rhs_params ? *rhs_params : params, eq.rhs, batch);
  return l1_batch_mean(t, l, r);
}

NodeId identity_mapping_loss(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& params,
                             const Path& path, NodeId batch) {
  if (arch.object_dim(path.src) != arch.object_dim(path.dst))
    throw ShapeError("identity loss on " + to_string(path) + ": " + to_string(arch.object_shape(path.src)) +
                     " vs " + to_string(arch.object_shape(path.dst)));
  return l1_batch_mean(t, record_path(t, arch, params, path, batch), batch);
}

namespace {

Tensor as_batch(const Tensor& x, std::size_t dim) {
  if (x.rank() == 2 && x.shape()[1] == dim) return x;
  if (x.size() == dim) return x.reshaped(Shape{1, dim});
  throw ShapeError("expected a batch of dim " + std::to_string(dim) + ", got " + to_string(x.shape()));
}

}  // namespace

double path_eq_value(const ModelInstance& m, const Equation& eq, const Tensor& batch) {
  Tape t;
  const auto params = record_params(t, m.params(), false);
  const NodeId x = t.constant(as_batch(batch, m.arch().object_dim(eq.lhs.src)));
  return t.value(path_eq_loss(t, m.arch(), params, eq, x)).item();
}

double identity_mapping_value(const ModelInstance& m, const Path& path, const Tensor& batch) {
  Tape t;
  const auto params = record_params(t, m.params(), false);
  const NodeId x = t.constant(as_batch(batch, m.arch().object_dim(path.dst)));
  return t.value(identity_mapping_loss(t, m.arch(), params, path, x)).item();
}

namespace {

double fold(const std::vector<LossTerm>& terms) {
  double s = 0.0;
  for (const auto& x : terms) s += x.value;
  return s;
}

// Left fold of scalar nodes with add; empty -> constant 0 (0 + x == x exactly).
NodeId sum_nodes(Tape& t, const std::vector<LossTerm>& terms) {
  NodeId acc = t.constant(Tensor::scalar(0.0));
  for (const auto& x : terms) acc = add(t, acc, x.node);
  return acc;
}

// Evaluates paths over batches, reusing every already-recorded prefix.
class PrefixCache {
 public:
  PrefixCache(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& params)
      : t_(t), arch_(arch), params_(params) {}

  NodeId eval(const Path& p, NodeId batch) {
    NodeId y = batch;
    std::vector<std::string> prefix;
    for (const auto& e : p.edges) {
      prefix.push_back(e);
      auto key = std::make_pair(batch.index, prefix);
      if (auto it = cache_.find(key); it != cache_.end()) {
        y = it->second;
        continue;
      }
      y = record_path(t_, arch_, params_, Path{arch_.schema().generator(e).src, arch_.schema().generator(e).dst, {e}},
                      y);
      cache_.emplace(std::move(key), y);
    }
    return y;
  }

 private:
  Tape& t_;
  const ArchAssignment& arch_;
  const std::map<std::string, NodeId>& params_;
  std::map<std::pair<std::uint32_t, std::vector<std::string>>, NodeId> cache_;
};

}  // namespace

double LossReport::adversarial_sum() const { return fold(adversarial); }
double LossReport::path_eq_sum() const { return fold(path_eq); }
double LossReport::identity_sum() const { return fold(identity); }

std::map<std::string, Tensor> sample_object_batches(const TaskSpec& task, std::size_t batch, Rng& sampling,
                                                    Rng& latent) {
  std::map<std::string, Tensor> out;
  for (const auto& o : task.schema->objects()) {
    const Source& s = task.dataset.at(o);
    out.emplace(o, s.sample(s.is_finite() ? sampling : latent, batch));
  }
  return out;
}

LossReport total_loss(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& gen_params,
                      const DiscriminatorAssignment& discs, const std::map<std::string, NodeId>& disc_params,
                      const TaskSpec& task, const TrainingConfig& cfg, const std::vector<Path>& identity_paths,
                      const std::map<std::string, NodeId>& batches) {
  (void)task;
  const Schema& schema = arch.schema();
  auto batch_of = [&](const std::string& o) {
    auto it = batches.find(o);
    if (it == batches.end()) throw ValidationError("no batch for object " + o);
    return it->second;
  };
  auto disc_node = [&](const std::string& o) -> std::optional<NodeId> {
    if (!discs.morphism(o).param_count) return std::nullopt;
    auto it = disc_params.find(o);
    if (it == disc_params.end()) throw ValidationError("no discriminator parameters for object " + o);
    return it->second;
  };

  PrefixCache cache(t, arch, gen_params);
  LossReport r;
  r.gamma = cfg.gamma;
  r.identity_weight = cfg.identity_weight;

  // Identity morphisms are not generators, so they never get a term here.
  for (const auto& g : schema.generators()) {
    const NodeId fake = cache.eval(schema.make_path({g.name}), batch_of(g.src));
    const NodeId n = adversarial_term(t, discs.morphism(g.dst), disc_node(g.dst), batch_of(g.dst), fake);
    r.adversarial.push_back({g.name, n, t.value(n).item()});
  }

  std::map<std::string, NodeId> frozen;
  std::optional<PrefixCache> frozen_cache;
  if (cfg.patheq_stopgrad) {
    for (const auto& [name, id] : gen_params) frozen.emplace(name, t.constant(t.value(id)));
    frozen_cache.emplace(t, arch, frozen);
  }
  const auto& eqs = schema.equations();
  for (std::size_t k = 0; k < eqs.size(); ++k) {
    const Equation& eq = eqs[k];
    NodeId n;
    if (eq.lhs == eq.rhs) {
      n = t.constant(Tensor::scalar(0.0));
    } else {
      const NodeId x = batch_of(eq.lhs.src);
      const NodeId l = cache.eval(eq.lhs, x);
      const NodeId rr = frozen_cache ? frozen_cache->eval(eq.rhs, x) : cache.eval(eq.rhs, x);
      n = l1_batch_mean(t, l, rr);
    }
    r.path_eq.push_back({"patheq_" + std::to_string(k), n, t.value(n).item()});
  }

  for (const auto& p : identity_paths) {
    if (arch.object_dim(p.src) != arch.object_dim(p.dst))
      throw ShapeError("identity loss on " + to_string(p) + ": objects have different dims");
    const NodeId b = batch_of(p.dst);
    const NodeId n = l1_batch_mean(t, cache.eval(p, b), b);
    r.identity.push_back({to_string(p), n, t.value(n).item()});
  }

  const NodeId adv = sum_nodes(t, r.adversarial);
  const NodeId pe = sum_nodes(t, r.path_eq);
  const NodeId idt = sum_nodes(t, r.identity);
  r.total_node = add(t, add(t, adv, scale(t, cfg.gamma, pe)), scale(t, cfg.identity_weight, idt));
  r.total = t.value(r.total_node).item();
  return r;
}

std::vector<Path> resolve_identity_paths(const ArchAssignment& arch, const ExperimentConfig& cfg) {
  std::vector<Path> out;
  if (cfg.training.identity_weight == 0.0) return out;
  if (!cfg.identity_paths.empty()) {
    for (const auto& text : cfg.identity_paths) {
      Path p = arch.schema().parse_path(text);
      if (arch.object_dim(p.src) != arch.object_dim(p.dst))
        throw ShapeError("identity path " + text + " joins objects of different dims (" +
                         std::to_string(arch.object_dim(p.src)) + " vs " + std::to_string(arch.object_dim(p.dst)) +
                         ")");
      out.push_back(std::move(p));
    }
    return out;
  }
  for (const auto& g : arch.schema().generators())
    if (arch.object_dim(g.src) == arch.object_dim(g.dst)) out.push_back(arch.schema().make_path({g.name}));
  return out;
}

// ---- Adam ----

void adam_step(AdamState& state, ParamBundle& params, const std::map<std::string, Tensor>& grads,
               const AdamHyper& h) {
  for (const auto& [name, value] : params.entries()) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ValidationError("adam: missing gradient for " + name);
    if (it->second.shape() != value.shape())
      throw ShapeError("adam: gradient for " + name + " has shape " + to_string(it->second.shape()) +
                       ", parameter has " + to_string(value.shape()));
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (const auto& [name, _] : params.entries()) {
    Tensor& p = params.at(name);
    const Tensor& g = grads.at(name);
    auto& m = state.m.try_emplace(name, Tensor(p.shape())).first->second;
    auto& v = state.v.try_emplace(name, Tensor(p.shape())).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p[i] -= h.lr * mh / (std::sqrt(vh) + h.eps);
    }
  }
}

// ---- metrics ----

std::string metrics_header(const Schema& schema) {
  std::string h = "step,loss_total";
  for (const auto& g : schema.generators()) h += ",loss_adv_" + g.name;
  for (std::size_t k = 0; k < schema.equations().size(); ++k) h += ",loss_patheq_" + std::to_string(k);
  h += ",loss_idt,wallclock_s";
  return h;
}

std::string metrics_line(const MetricsRow& row) {
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string s = std::to_string(row.step) + "," + num(row.total);
  for (double v : row.adversarial) s += "," + num(v);
  for (double v : row.path_eq) s += "," + num(v);
  s += "," + num(row.identity);
  std::snprintf(buf, sizeof buf, "%.3f", row.wallclock_s);
  s += ",";
  s += buf;
  return s;
}

// ---- training loop ----

namespace {

std::map<std::string, NodeId> record_batches(Tape& t, const std::map<std::string, Tensor>& b) {
  std::map<std::string, NodeId> out;
  for (const auto& [o, x] : b) out.emplace(o, t.constant(x));
  return out;
}

std::map<std::string, Tensor> collect_grads(const Gradients& g, const std::map<std::string, NodeId>& nodes) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : nodes) out.emplace(name, g.at(id));
  return out;
}

AdamHyper hyper(const TrainingConfig& c) { return {c.lr, c.beta1, c.beta2, c.eps_adam}; }

}  // namespace

TrainState initial_state(const TrainSetup& s) {
  s.config.validate();
  if (std::abs(s.discs->clip_bound() - s.config.clip_bound) > 0)
    throw ValidationError("discriminator clip bound differs from the training config");
  TrainState st;
  st.gen = init_params(*s.arch, s.config.seed, s.config.init_stddev);
  st.disc = init_discriminators(*s.discs, s.config.seed, s.config.init_stddev);
  return st;
}

double critic_step(const TrainSetup& s, TrainState& st, Rng& sampling, Rng& latent) {
  const auto batches = sample_object_batches(s.task, s.config.batch, sampling, latent);
  Tape t;
  const auto gp = record_params(t, st.gen, false);
  const auto dp = record_params(t, st.disc, true);
  const auto bn = record_batches(t, batches);
  PrefixCache cache(t, *s.arch, gp);
  NodeId adv = t.constant(Tensor::scalar(0.0));
  for (const auto& g : s.arch->schema().generators()) {
    const NodeId fake = cache.eval(s.arch->schema().make_path({g.name}), bn.at(g.src));
    const ParamMorphism& d = s.discs->morphism(g.dst);
    std::optional<NodeId> dn;
    if (d.param_count) dn = dp.at(g.dst);
    adv = add(t, adv, adversarial_term(t, d, dn, bn.at(g.dst), fake));
  }
  const double value = t.value(adv).item();
  if (!std::isfinite(value))
    throw NumericError("non-finite critic objective at step " + std::to_string(st.step));
  // Critics ascend the adversarial sum.
  const NodeId loss = scale(t, -1.0, adv);
  adam_step(st.disc_adam, st.disc, collect_grads(t.backward(loss), dp), hyper(s.config));
  clip_weights(st.disc, s.discs->clip_bound());
  return value;
}

MetricsRow generator_step(const TrainSetup& s, TrainState& st, Rng& sampling, Rng& latent) {
  const auto batches = sample_object_batches(s.task, s.config.batch, sampling, latent);
  Tape t;
  const auto gp = record_params(t, st.gen, true);
  const auto dp = record_params(t, st.disc, false);
  const auto bn = record_batches(t, batches);
  const LossReport r = total_loss(t, *s.arch, gp, *s.discs, dp, s.task, s.config, s.identity_paths, bn);
  if (!std::isfinite(r.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << st.step << ":";
    for (const auto* group : {&r.adversarial, &r.path_eq, &r.identity})
      for (const auto& x : *group) msg << " " << x.name << "=" << x.value;
    throw NumericError(msg.str());
  }
  MetricsRow row;
  row.step = st.step;
  row.total = r.total;
  for (const auto& x : r.adversarial) row.adversarial.push_back(x.value);
  for (const auto& x : r.path_eq) row.path_eq.push_back(x.value);
  row.identity = r.identity_sum();
  adam_step(st.gen_adam, st.gen, collect_grads(t.backward(r.total_node), gp), hyper(s.config));
  ++st.step;
  return row;
}

TrainState train(const TrainSetup& s, const TrainObserver& obs) {
  validate_task(s.task, s.arch->object_shapes());
  TrainState st = initial_state(s);
  Rng sampling = Rng::substream(s.config.seed, "sampling");
  Rng latent = Rng::substream(s.config.seed, "latent");
  const auto start = std::chrono::steady_clock::now();
  if (obs.on_checkpoint) obs.on_checkpoint(st);
  const std::size_t total = s.config.total_steps;
  for (std::size_t step = 0; step < total; ++step) {
    const std::size_t nc = s.config.n_critic_at(step);
    for (std::size_t k = 0; k < nc; ++k) {
      critic_step(s, st, sampling, latent);
      if (obs.on_critic_step) obs.on_critic_step(step, st.disc);
    }
    MetricsRow row = generator_step(s, st, sampling, latent);
    if (s.config.record_wallclock)
      row.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (obs.on_metrics) obs.on_metrics(row);
    const bool last = st.step == total;
    if (obs.on_checkpoint && (last || (s.config.checkpoint_every && st.step % s.config.checkpoint_every == 0)))
      obs.on_checkpoint(st);
  }
  return st;
}

TrainResult train_collect(const TrainSetup& s) {
  TrainResult r;
  TrainObserver obs;
  obs.on_metrics = [&](const MetricsRow& m) { r.metrics.push_back(m); };
  obs.on_checkpoint = [&](const TrainState& st) { r.checkpoints.push_back(st); };
  train(s, obs);
  return r;
}

}  // namespace cdl
