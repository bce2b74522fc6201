#include "cdl/presets.hpp"

#include <cmath>

namespace cdl {

namespace {

const char* kGanSchema = R"(# latent space -> image space, no equations
object LS
object IS
gen h : LS -> IS
)";

const char* kGanConfig = R"(set batch 32
set lr 0.001
set n_critic_warm 20
set warm_steps 20
set n_critic 5
set total_steps 200
set clip_bound 0.05
set init_stddev 0.3
arch h mlp 2 16 2 leaky_relu linear
disc IS mlp 2 16 1 leaky_relu
)";

const char* kCycleSchema = R"(object A
object B
gen f : A -> B
gen g : B -> A
eq f ; g = id(A)
eq g ; f = id(B)
)";

const char* kCycleConfig = R"(set batch 32
set lr 0.001
set n_critic_warm 20
set warm_steps 20
set n_critic 5
set total_steps 200
set clip_bound 0.05
set init_stddev 0.3
arch f mlp 2 16 2 leaky_relu linear
arch g mlp 2 16 2 leaky_relu linear
disc A mlp 2 16 1 leaky_relu
disc B mlp 2 16 1 leaky_relu
)";

// Composition c and decomposition d are mutually inverse; the projections
// are fixed and give the identity terms their same-shaped endpoints.
const char* kCirclesSchema = R"(object AB
object AxB
object A
object B
gen d : AB -> AxB
gen c : AxB -> AB
gen pi_A : AxB -> A
gen pi_B : AxB -> B
eq d ; c = id(AB)
eq c ; d = id(AxB)
)";

const char* kCirclesConfig = R"(set gamma 20
set identity_weight 10
set lr 0.003
set batch 16
set n_critic_warm 50
set warm_steps 50
set n_critic 5
set total_steps 2000
set clip_bound 0.01
set init_stddev 0.05
set checkpoint_every 500
arch d mlp 768 128 6 128 1536 leaky_relu sigmoid
arch c mlp 1536 128 6 128 768 leaky_relu sigmoid
arch pi_A proj 1536 0 768
arch pi_B proj 1536 768 768
disc AB mlp 768 32 1 leaky_relu
disc AxB mlp 1536 32 1 leaky_relu
disc A mlp 768 32 1 leaky_relu
disc B mlp 768 32 1 leaky_relu
idt d ; pi_A
idt d ; pi_B
)";

std::vector<Tensor> ring_points(std::size_t n, Rng& rng, double cx, double cy, double radius) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * rng.uniform();
    const double r = radius * (1.0 + 0.05 * rng.normal());
    out.push_back(Tensor::vector({cx + r * std::cos(a), cy + r * std::sin(a)}));
  }
  return out;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"circles", "gan-toy", "cyclegan-toy"};
  return names;
}

Preset get_preset(const std::string& name) {
  if (name == "circles") return {name, kCirclesSchema, kCirclesConfig};
  if (name == "gan-toy") return {name, kGanSchema, kGanConfig};
  if (name == "cyclegan-toy") return {name, kCycleSchema, kCycleConfig};
  throw ValidationError("unknown preset '" + name + "' (circles, gan-toy, cyclegan-toy)");
}

DatasetFunctor circles_dataset_functor(const CirclesDataset& d) {
  DatasetFunctor f;
  f.set("A", Source::finite(d.circles));
  f.set("B", Source::finite(d.stripes));
  f.set("AB", Source::finite(d.composed));
  f.set("AxB", product_dataset(Source::finite(d.circles), Source::finite(d.stripes)));
  return f;
}

DatasetFunctor preset_dataset(const std::string& name, std::uint64_t seed) {
  if (name == "circles") return circles_dataset_functor(gen_circles_dataset(kCirclesSamples, kCirclesSide, seed));
  Rng rng = Rng::substream(seed, "toy/" + name);
  DatasetFunctor f;
  if (name == "gan-toy") {
    f.set("LS", Source::latent(2));
    f.set("IS", Source::finite(ring_points(64, rng, 0.0, 0.0, 1.0)));
  } else if (name == "cyclegan-toy") {
    f.set("A", Source::finite(ring_points(64, rng, -1.0, 0.0, 0.5)));
    f.set("B", Source::finite(ring_points(64, rng, 1.0, 1.0, 1.0)));
  } else {
    get_preset(name);  // throws
  }
  return f;
}

Experiment build_experiment(const std::string& schema_text, const std::string& config_text) {
  Experiment e;
  e.schema = std::make_shared<const Schema>(parse_schema(schema_text));
  e.config = parse_config(config_text);
  auto shapes = resolve_object_shapes(*e.schema, e.config);
  e.arch = std::make_shared<const ArchAssignment>(e.schema, std::move(shapes), e.config.archs);
  e.discs = std::make_shared<const DiscriminatorAssignment>(*e.arch, e.config.discs, e.config.training.clip_bound);
  e.identity_paths = resolve_identity_paths(*e.arch, e.config);
  return e;
}

TrainSetup make_setup(const Experiment& e, DatasetFunctor data) {
  TrainSetup s{TaskSpec{e.schema, std::move(data)}, e.arch, e.discs, e.config.training, e.identity_paths};
  validate_task(s.task, e.arch->object_shapes());
  return s;
}

}  // namespace cdl
