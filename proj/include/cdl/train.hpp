#pragma once

// Joint training of every generator in a schema against per-object critics.
//
// Objective for the generators (minimised):
//   total = sum_f L_adv(f) + gamma * sum_eq L_eq + identity_weight * sum L_idt
// with
//   L_adv(f : A -> B) = mean_b D_B(b) - mean_a D_B(G_f(a))      (Wasserstein)
//   L_eq(p = q)       = mean_a |p(a) - q(a)|_1
//   L_idt(p : A -> B) = mean_b |p(b) - b|_1                     (dim A == dim B)
// where |.|_1 sums over features and the mean runs over the batch. Critics
// maximise sum_f L_adv(f) and are clipped to [-clip_bound, clip_bound] after
// every update (weight clipping stands in for a gradient penalty, which would
// need second-order derivatives).

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cdl/autodiff.hpp"
#include "cdl/data.hpp"
#include "cdl/para.hpp"
#include "cdl/rng.hpp"

namespace cdl {

struct TrainingConfig {
  double gamma = 20.0;
  double identity_weight = 0.0;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double eps_adam = 1e-8;
  std::size_t batch = 16;
  std::size_t n_critic_warm = 50;
  std::size_t warm_steps = 50;
  std::size_t n_critic = 5;
  std::size_t total_steps = 1000;
  double clip_bound = 0.01;
  std::uint64_t seed = 0;
  double init_stddev = 0.01;
  // Intermediate checkpoints every N generator steps; 0 keeps initial and final only.
  std::size_t checkpoint_every = 0;
  // Stop gradients through the right-hand side of every equation.
  bool patheq_stopgrad = false;
  // Fill the wallclock_s metrics column; off keeps metrics byte-reproducible.
  bool record_wallclock = false;

  std::size_t n_critic_at(std::size_t step) const { return step < warm_steps ? n_critic_warm : n_critic; }
  void validate() const;
};

// Everything a config file holds:
//   set <key> <value>
//   arch <gen> mlp <w0> ... <wk> <hidden-act> <out-act> | arch <gen> proj <in> <offset> <len>
//   disc <object> mlp <w0> ... 1 <hidden-act>
//   idt <path>                       identity-mapping term (dim src == dim dst)
//   shape <object> <d0> [<d1> ...]   explicit object shape
struct ExperimentConfig {
  TrainingConfig training;
  std::map<std::string, LayerSpec> archs;
  std::map<std::string, LayerSpec> discs;
  std::vector<std::string> identity_paths;
  std::map<std::string, Shape> shapes;

  std::string to_text() const;
};

ExperimentConfig parse_config(std::string_view text);
void set_config_value(TrainingConfig& c, const std::string& key, const std::string& value);

// Object shapes from explicit `shape` lines, generator widths and critic widths.
std::map<std::string, Shape> resolve_object_shapes(const Schema& schema, const ExperimentConfig& cfg);

class DiscriminatorAssignment {
 public:
  // Every codomain of a generator needs a critic; input width must match the object.
  DiscriminatorAssignment(const ArchAssignment& arch, std::map<std::string, LayerSpec> specs, double clip_bound);

  bool contains(std::string_view object) const { return specs_.count(std::string(object)) != 0; }
  const LayerSpec& spec(std::string_view object) const;
  const ParamMorphism& morphism(std::string_view object) const;
  const std::map<std::string, LayerSpec>& specs() const { return specs_; }
  double clip_bound() const { return clip_bound_; }

 private:
  std::map<std::string, LayerSpec> specs_;
  std::map<std::string, ParamMorphism> morphisms_;
  double clip_bound_;
};

ParamBundle init_discriminators(const DiscriminatorAssignment& d, std::uint64_t seed, double stddev);
void clip_weights(ParamBundle& p, double bound);
double max_abs_weight(const ParamBundle& p);

// ---- losses (tape level) ----

// mean(|a - b| summed over the last axis); a, b are [batch, dim].
NodeId l1_batch_mean(Tape& t, NodeId a, NodeId b);

// mean_b D(real) - mean_a D(fake).
NodeId adversarial_term(Tape& t, const ParamMorphism& disc, std::optional<NodeId> disc_params, NodeId real,
                        NodeId fake);
NodeId adversarial_loss(Tape& t, const ParamMorphism& gen, std::optional<NodeId> gen_params,
                        const ParamMorphism& disc, std::optional<NodeId> disc_params, NodeId real, NodeId src);

// Syntactically equal sides give an exact zero constant. With rhs_params the
// right-hand side reads those (e.g. frozen) parameter nodes instead.
NodeId path_eq_loss(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& params,
                    const Equation& eq, NodeId batch,
                    const std::map<std::string, NodeId>* rhs_params = nullptr);

NodeId identity_mapping_loss(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& params,
                             const Path& path, NodeId batch);

// Value-level versions on a model instance.
double path_eq_value(const ModelInstance& m, const Equation& eq, const Tensor& batch);
double identity_mapping_value(const ModelInstance& m, const Path& path, const Tensor& batch);

struct LossTerm {
  std::string name;
  NodeId node;
  double value;
};

struct LossReport {
  std::vector<LossTerm> adversarial;  // generator declaration order
  std::vector<LossTerm> path_eq;      // equation order
  std::vector<LossTerm> identity;     // identity path order
  double gamma = 0;
  double identity_weight = 0;
  NodeId total_node;
  double total = 0;

  double adversarial_sum() const;
  double path_eq_sum() const;
  double identity_sum() const;
};

// One batch per object per call, drawn in object declaration order.
std::map<std::string, Tensor> sample_object_batches(const TaskSpec& task, std::size_t batch, Rng& sampling,
                                                    Rng& latent);

// Assembles the generator objective on a tape. Shared sub-paths over the
// same batch are evaluated once.
LossReport total_loss(Tape& t, const ArchAssignment& arch, const std::map<std::string, NodeId>& gen_params,
                      const DiscriminatorAssignment& discs, const std::map<std::string, NodeId>& disc_params,
                      const TaskSpec& task, const TrainingConfig& cfg, const std::vector<Path>& identity_paths,
                      const std::map<std::string, NodeId>& batches);

// Identity paths from the config, or every generator with equal endpoint dims
// when none are listed. Empty when identity_weight is 0.
std::vector<Path> resolve_identity_paths(const ArchAssignment& arch, const ExperimentConfig& cfg);

// ---- optimiser ----

struct AdamHyper {
  double lr;
  double beta1;
  double beta2;
  double eps;
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::size_t t = 0;
};

// Bias-corrected Adam over every bundle entry; throws if a gradient is missing.
void adam_step(AdamState& state, ParamBundle& params, const std::map<std::string, Tensor>& grads,
               const AdamHyper& h);

// ---- training loop ----

struct TrainState {
  std::size_t step = 0;
  ParamBundle gen;
  ParamBundle disc;
  AdamState gen_adam;
  AdamState disc_adam;
};

struct MetricsRow {
  std::size_t step = 0;
  double total = 0;
  std::vector<double> adversarial;
  std::vector<double> path_eq;
  double identity = 0;
  double wallclock_s = 0;
};

std::string metrics_header(const Schema& schema);
std::string metrics_line(const MetricsRow& row);

struct TrainObserver {
  std::function<void(const MetricsRow&)> on_metrics;
  std::function<void(const TrainState&)> on_checkpoint;
  // After each critic update and clipping.
  std::function<void(std::size_t step, const ParamBundle& disc)> on_critic_step;
};

struct TrainSetup {
  TaskSpec task;
  std::shared_ptr<const ArchAssignment> arch;
  std::shared_ptr<const DiscriminatorAssignment> discs;
  TrainingConfig config;
  std::vector<Path> identity_paths;
};

TrainState initial_state(const TrainSetup& s);

// One critic update (ascent on the adversarial sum, then clipping). Returns
// the adversarial sum before the update.
double critic_step(const TrainSetup& s, TrainState& st, Rng& sampling, Rng& latent);
// One generator update. Returns the pre-update loss report values.
MetricsRow generator_step(const TrainSetup& s, TrainState& st, Rng& sampling, Rng& latent);

// Alternates n_critic_at(t) critic updates with one generator update for
// total_steps steps. Emits the initial checkpoint, periodic ones, and the
// final one; throws NumericError on a non-finite loss.
TrainState train(const TrainSetup& s, const TrainObserver& obs = {});

struct TrainResult {
  std::vector<TrainState> checkpoints;
  std::vector<MetricsRow> metrics;
};
TrainResult train_collect(const TrainSetup& s);

// ---- checkpoints ----
//
// "CDLCKPT1", then per tensor: u32 name length, name bytes, u32 rank,
// u32 extents, f64 values; all little-endian.

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

NamedTensors to_named(const TrainState& s);
TrainState from_named(const NamedTensors& t);

}  // namespace cdl
