// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset (e.g. `acceptance 1 2`).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "analysischecks.hpp"
#include "cdl/analysis.hpp"
#include "cdl/kernels.hpp"
#include "cdl/presets.hpp"
#include "cdl/train.hpp"
#include "gradcases.hpp"
#include "helpers.hpp"
#include "oracles.hpp"
#include "paralaws.hpp"

using namespace cdl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. every primitive, 100 random instances, rel tol 1e-4 at eps 1e-5, < 30 s
Outcome gradients() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  std::size_t cases = 0, failed = 0;
  double worst = 0;
  std::string worst_family;
  for (const auto& [name, make] : gradcases::families())
    for (int i = 0; i < 100; ++i) {
      const auto c = make(rng);
      const auto rep = grad_check(c.f, c.point, 1e-5, 1e-4);
      ++cases;
      if (!rep.passed) ++failed;
      if (rep.max_rel_error > worst) {
        worst = rep.max_rel_error;
        worst_family = name;
      }
    }
  const double secs = seconds_since(t0);
  return {failed == 0 && secs < 30.0, fmt("%zu instances, %zu failed, worst rel err %.2e (%s), %.1f s", cases, failed,
                                          worst, worst_family.c_str(), secs)};
}

// 2. congruence vs exhaustive rewriting, >= 500 random schemas, < 60 s
Outcome congruence() {
  const auto t0 = Clock::now();
  Rng rng(2002);
  std::size_t mismatches = 0, cases = 0;
  std::set<std::size_t> bounds;
  for (; cases < 500; ++cases) {
    const Schema s = oracle::random_schema(rng, 3, 4, 2, 3);
    const std::size_t bound = rng.index(7);
    bounds.insert(bound);
    if (oracle::as_sets(congruence_classes(s, bound)) != oracle::congruence(s, bound)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && bounds.size() == 7 && secs < 60.0,
          fmt("%zu schemas (bounds 0..6), %zu mismatches, %.1f s", cases, mismatches, secs)};
}

// 3. para laws on 50 random stacks within 1e-12; object shapes independent of parameters
Outcome para_laws() {
  Rng rng(3003);
  double worst = 0;
  bool ok = true;
  for (int i = 0; i < 50; ++i) {
    const auto r = paralaws::check_stack(rng);
    ok = ok && r.ok;
    worst = std::max(worst, r.max_dev);
  }
  return {ok && worst <= 1e-12, fmt("50 stacks, max deviation %.3g, structural checks %s", worst, ok ? "ok" : "FAILED")};
}

// 4. restriction closure equals the least closed superset, <= 4 data elements, <= 2 generators, < 10 s
Outcome restriction() {
  const auto t0 = Clock::now();
  Rng rng(4004);
  std::size_t bad = 0;
  const std::size_t n = 300;
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = analysischecks::restriction_trial(rng, 2, 4);
    if (!(t.matches && t.provenance_ok && t.closed)) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 10.0, fmt("%zu instances, %zu mismatches, %.2f s", n, bad, secs)};
}

// 5. exact inverse pair certifies with deviation 0; a perturbed one gives a counterexample at eps 1e-6
Outcome factorization() {
  Rng rng(5005);
  std::map<std::string, std::vector<Tensor>> pts;
  for (const char* o : {"A", "B"})
    for (int i = 0; i < 32; ++i) pts[o].push_back(testing::random_tensor(rng, {2}, -5, 5));
  const auto [arch, exact] = analysischecks::inverse_pair(0.0);
  const auto good = factorization_check(ModelInstance(arch, exact), pts, 1e-6, 4);
  const auto [arch2, off] = analysischecks::inverse_pair(1e-3);
  const ModelInstance bent(arch2, off);
  const auto bad = factorization_check(bent, pts, 1e-6, 4);
  bool witness = false;
  if (bad.counterexample) {
    const auto& c = *bad.counterexample;
    witness = c.deviation > 1e-6 &&
              c.deviation == max_abs_diff(eval_path(bent, c.lhs, c.point), eval_path(bent, c.rhs, c.point));
  }
  return {good.certified && good.max_deviation == 0.0 && !bad.certified && witness,
          fmt("exact: certified=%d deviation %.3g over %zu pairs; perturbed: certified=%d, counterexample deviation %.3g",
              good.certified, good.max_deviation, good.pairs_checked, bad.certified,
              bad.counterexample ? bad.counterexample->deviation : 0.0)};
}

// 6. 10 Adam steps on a fixed quadratic against the reference
Outcome adam_trace() {
  // f(theta) = 1/2 sum a_i theta_i^2 - b_i theta_i
  const std::vector<double> a{1.0, 3.0, 0.5, 10.0}, b{0.5, -1.0, 2.0, 0.0};
  const AdamHyper h{0.05, 0.9, 0.999, 1e-8};
  ParamBundle p;
  p.set("theta", Tensor::vector({1.0, -2.0, 0.3, 0.7}));
  AdamState st;
  oracle::RefAdam ref{h.lr, h.beta1, h.beta2, h.eps, {}, {}, 0};
  std::vector<double> theta{1.0, -2.0, 0.3, 0.7};
  double worst = 0;
  for (int k = 0; k < 10; ++k) {
    // library gradient through the tape
    Tape t;
    const NodeId x = t.parameter(p.at("theta"));
    const NodeId ax = mul(t, t.constant(Tensor(Shape{4}, a)), x);
    const NodeId f = sub(t, scale(t, 0.5, sum_all(t, mul(t, ax, x))), sum_all(t, mul(t, t.constant(Tensor(Shape{4}, b)), x)));
    adam_step(st, p, {{"theta", t.backward(f).at(x)}}, h);
    std::vector<double> g(4);
    for (std::size_t i = 0; i < 4; ++i) g[i] = a[i] * theta[i] - b[i];
    ref.step(theta, g);
    for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(p.at("theta")[i] - theta[i]));
  }
  return {worst <= 1e-12 && st.t == 10, fmt("10 steps, max |theta - reference| %.3g", worst)};
}

// 7 + 8. two seeded circles runs
struct CirclesRun {
  std::string metrics;
  double initial_residual = 0;
  double final_residual = 0;
  CirclesReport report;
  double worst_disc_weight = 0;
  std::size_t critic_checks = 0;
  std::size_t steps = 0;
  double seconds = 0;
};

double mean_residual(const ModelInstance& m, const TaskSpec& task, std::uint64_t seed) {
  const auto r = residual_report(m, task, 64, seed);
  double s = 0;
  for (const auto& row : r.rows) s += row.mean;
  return s / static_cast<double>(r.rows.size());
}

CirclesRun circles_run() {
  const auto t0 = Clock::now();
  const Preset pre = get_preset("circles");
  const Experiment e = build_experiment(pre.schema_text, pre.config_text);
  TrainSetup setup = make_setup(e, preset_dataset("circles", 0));
  setup.config.seed = 0;
  CirclesRun out;
  out.steps = setup.config.total_steps;
  std::ostringstream csv;
  csv << metrics_header(*e.schema) << "\n";
  std::optional<ParamBundle> first, last;
  TrainObserver obs;
  obs.on_metrics = [&](const MetricsRow& r) { csv << metrics_line(r) << "\n"; };
  obs.on_checkpoint = [&](const TrainState& st) {
    if (!first) first = st.gen;
    last = st.gen;
  };
  obs.on_critic_step = [&](std::size_t, const ParamBundle& d) {
    out.worst_disc_weight = std::max(out.worst_disc_weight, max_abs_weight(d));
    ++out.critic_checks;
  };
  train(setup, obs);
  out.metrics = csv.str();
  const ModelInstance m0(e.arch, *first), m1(e.arch, *last);
  out.initial_residual = mean_residual(m0, setup.task, 0);
  out.final_residual = mean_residual(m1, setup.task, 0);
  out.report = eval_circles_metrics(m1, circles_test_pairs(64, 0), kCirclesSide);
  out.seconds = seconds_since(t0);
  return out;
}

std::optional<std::pair<CirclesRun, CirclesRun>> circles_cache;

const std::pair<CirclesRun, CirclesRun>& circles_runs() {
  if (!circles_cache) {
    kernels::parallel::set_num_threads(1);
    CirclesRun a = circles_run();
    CirclesRun b = circles_run();
    circles_cache.emplace(std::move(a), std::move(b));
  }
  return *circles_cache;
}

Outcome circles() {
  const auto& [a, b] = circles_runs();
  const double total = a.seconds + b.seconds;
  const auto& mae = a.report.decomposition.mae;
  const bool res_ok = a.final_residual < 0.2 * a.initial_residual;
  const bool mae_ok = mae[0] < 0.15 && mae[1] < 0.15 && mae[2] < 0.15;
  const bool same = a.metrics == b.metrics;
  return {res_ok && mae_ok && same && total < 15 * 60 && a.steps <= 3000,
          fmt("%zu steps x2 in %.0f s; (a) residual %.4f -> %.4f (ratio %.3f); (b) decomposition MAE r=%.4f g=%.4f "
              "b=%.4f [composition max %.4f]; (c) metrics %s",
              a.steps, total, a.initial_residual, a.final_residual, a.final_residual / a.initial_residual, mae[0],
              mae[1], mae[2], a.report.composition.max_mae(), same ? "bit-identical" : "DIFFER")};
}

Outcome clipping() {
  const auto& [a, b] = circles_runs();
  const double bound = parse_config(get_preset("circles").config_text).training.clip_bound;
  const double worst = std::max(a.worst_disc_weight, b.worst_disc_weight);
  return {worst <= bound && a.critic_checks > 0,
          fmt("%zu critic steps checked per run, max |w| %.6g <= %.6g", a.critic_checks, worst, bound)};
}

// 9. term counts on the presets; identities never get an adversarial term
Outcome loss_structure() {
  std::string detail;
  bool ok = true;
  for (const auto& [name, adv, eq] : {std::tuple{"gan-toy", 1u, 0u}, std::tuple{"cyclegan-toy", 2u, 2u},
                                      std::tuple{"circles", 4u, 2u}}) {
    const Preset pre = get_preset(name);
    const Experiment e = build_experiment(pre.schema_text, pre.config_text);
    TrainSetup setup = make_setup(e, preset_dataset(name, 0));
    const TrainState st = initial_state(setup);
    Rng s1(1), s2(2);
    const auto batches = sample_object_batches(setup.task, 4, s1, s2);
    Tape t;
    const auto gp = record_params(t, st.gen, true);
    const auto dp = record_params(t, st.disc, false);
    std::map<std::string, NodeId> bn;
    for (const auto& [o, x] : batches) bn[o] = t.constant(x);
    const LossReport r = total_loss(t, *e.arch, gp, *e.discs, dp, setup.task, setup.config, e.identity_paths, bn);
    bool names_ok = r.adversarial.size() == e.schema->generators().size();
    for (std::size_t i = 0; names_ok && i < r.adversarial.size(); ++i)
      names_ok = r.adversarial[i].name.find(e.schema->generators()[i].name) != std::string::npos &&
                 r.adversarial[i].name.find("id(") == std::string::npos;
    const bool formula = r.total == r.adversarial_sum() + setup.config.gamma * r.path_eq_sum() +
                                        setup.config.identity_weight * r.identity_sum();
    ok = ok && r.adversarial.size() == adv && r.path_eq.size() == eq && names_ok && formula;
    detail += fmt("%s%s %zu+%zu", detail.empty() ? "" : ", ", name, r.adversarial.size(), r.path_eq.size());
  }
  return {ok, detail + " (adversarial + path-eq terms)"};
}

// 10. PPM within 1/255, checkpoint byte-exact, schema parse/print/parse idempotent
Outcome round_trips() {
  Rng rng(1010);
  double ppm_worst = 0;
  const auto dir = testing::temp_dir("acceptance_io");
  for (int i = 0; i < 50; ++i) {
    const std::size_t w = 1 + rng.index(20), h = 1 + rng.index(20);
    const Tensor px = testing::random_tensor(rng, {3 * w * h}, 0.0, 1.0);
    write_ppm(dir / "x.ppm", px, w, h);
    const Image img = read_ppm(dir / "x.ppm");
    if (img.width != w || img.height != h) ppm_worst = 1;
    else ppm_worst = std::max(ppm_worst, max_abs_diff(img.pixels, px));
  }

  const Preset pre = get_preset("cyclegan-toy");
  TrainSetup setup = make_setup(build_experiment(pre.schema_text, pre.config_text), preset_dataset("cyclegan-toy", 0));
  setup.config.total_steps = 3;
  const TrainState st = train(setup);
  const NamedTensors named = to_named(st);
  save_checkpoint(dir / "c.cdl", named);
  std::ifstream in(dir / "c.cdl", std::ios::binary);
  const std::string file{std::istreambuf_iterator<char>(in), {}};
  const bool ckpt_ok = file == encode_checkpoint(named) &&
                       encode_checkpoint(to_named(from_named(load_checkpoint(dir / "c.cdl")))) == file;

  bool schema_ok = true;
  for (const auto& name : preset_names()) {
    const Schema s = parse_schema(get_preset(name).schema_text);
    schema_ok = schema_ok && parse_schema(s.to_text()) == s && parse_schema(s.to_text()).to_text() == s.to_text();
  }
  for (int i = 0; i < 200; ++i) {
    const Schema s = oracle::random_schema(rng, 3, 4, 2, 3);
    schema_ok = schema_ok && parse_schema(s.to_text()) == s && parse_schema(s.to_text()).to_text() == s.to_text();
  }
  return {ppm_worst <= 1.0 / 255 && ckpt_ok && schema_ok,
          fmt("PPM max error %.3g (limit %.3g); checkpoint %s; schemas %s", ppm_worst, 1.0 / 255,
              ckpt_ok ? "byte-exact" : "DIFFER", schema_ok ? "idempotent" : "NOT idempotent")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"congruence matches rewriting oracle", congruence},
      {"para laws", para_laws},
      {"restriction minimality", restriction},
      {"factorization witness", factorization},
      {"adam trace", adam_trace},
      {"circles desk-scale run", circles},
      {"weight-clipping invariant", clipping},
      {"loss structure", loss_structure},
      {"I/O round-trips", round_trips},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
