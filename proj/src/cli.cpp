#include "cdl/cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cdl/analysis.hpp"
#include "cdl/kernels.hpp"
#include "cdl/presets.hpp"
#include "json.hpp"

namespace cdl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "cdl 0.1.0";

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Content hash of the data a run actually sees.
std::string fingerprint_dataset(const DatasetFunctor& d) {
  std::uint64_t h = fnv1a64("dataset");
  std::function<void(const Source&)> visit = [&](const Source& s) {
    const auto& r = s.repr();
    if (const auto* f = std::get_if<Source::Finite>(&r)) {
      h = fnv1a64("finite " + std::to_string(f->items.size()), h);
      for (const auto& t : f->items)
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double)), h);
    } else if (const auto* l = std::get_if<Source::Latent>(&r)) {
      h = fnv1a64("latent " + std::to_string(l->dim), h);
    } else {
      const auto& p = std::get<Source::Product>(r);
      h = fnv1a64("product", h);
      visit(*p.left);
      visit(*p.right);
    }
  };
  for (const auto& [o, s] : d.sources()) {
    h = fnv1a64(o, h);
    visit(s);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::map<std::string, std::size_t> object_dims(const ArchAssignment& a) {
  std::map<std::string, std::size_t> d;
  for (const auto& [o, s] : a.object_shapes()) d[o] = numel(s);
  return d;
}

// Schema and config text from --preset and/or files, plus --set overrides.
struct Sources {
  std::string preset;
  std::string schema_file;
  std::string config_file;
  std::vector<std::string> overrides;
};

std::pair<std::string, std::string> resolve_texts(const Sources& s, const std::optional<std::uint64_t>& seed) {
  std::string schema, config;
  if (!s.preset.empty()) {
    const Preset p = get_preset(s.preset);
    schema = p.schema_text;
    config = p.config_text;
  }
  if (!s.schema_file.empty()) schema = read_text(s.schema_file);
  if (!s.config_file.empty()) config = read_text(s.config_file);
  if (schema.empty()) throw ValidationError("no schema: pass --schema FILE or --preset NAME");
  if (config.empty()) throw ValidationError("no config: pass --config FILE or --preset NAME");
  for (const auto& o : s.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + o + "'");
    config += "\nset " + o.substr(0, eq) + " " + o.substr(eq + 1) + "\n";
  }
  if (seed) config += "\nset seed " + std::to_string(*seed) + "\n";
  return {schema, config};
}

// Later `set` lines override earlier ones; the canonical text has one of each.
std::string canonical_config(const ExperimentConfig& c) { return c.to_text(); }

struct DataChoice {
  json descriptor;
  DatasetFunctor data;
};

DataChoice load_data(const json& desc, const ArchAssignment& arch) {
  const std::string kind = desc.at("kind").get<std::string>();
  if (kind == "dir") {
    const fs::path dir = desc.at("path").get<std::string>();
    return {desc, load_dataset_dir(dir, object_dims(arch))};
  }
  if (kind == "preset")
    return {desc, preset_dataset(desc.at("name").get<std::string>(), desc.at("seed").get<std::uint64_t>())};
  throw ValidationError("unknown data source kind '" + kind + "'");
}

json data_descriptor(const std::string& data_dir, const std::string& preset, std::uint64_t seed) {
  if (!data_dir.empty()) return json{{"kind", "dir"}, {"path", fs::absolute(data_dir).string()}};
  if (!preset.empty()) return json{{"kind", "preset"}, {"name", preset}, {"seed", seed}};
  throw ValidationError("no data: pass --data DIR (or --preset NAME for its built-in data)");
}

std::string ckpt_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%06zu.cdl", step);
  return buf;
}

// ---- commands ----

struct Globals {
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  int threads = 1;
};

int cmd_check(const Globals&, const Sources& src, std::size_t bound, std::ostream& out) {
  std::string text;
  if (!src.schema_file.empty()) text = read_text(src.schema_file);
  else if (!src.preset.empty()) text = get_preset(src.preset).schema_text;
  else throw ValidationError("check needs a schema file or --preset");
  const Schema s = parse_schema(text);
  out << "objects:";
  for (const auto& o : s.objects()) out << " " << o;
  out << "\ngenerators:\n";
  for (const auto& g : s.generators()) out << "  " << g.name << " : " << g.src << " -> " << g.dst << "\n";
  if (s.equations().empty()) {
    out << "no equations\n";
  } else {
    out << "equations:\n";
    for (const auto& e : s.equations()) out << "  " << to_string(e.lhs) << " = " << to_string(e.rhs) << "\n";
  }
  const EquivClasses ec = congruence_classes(s, bound);
  out << "congruence classes of paths with length <= " << bound << ":\n";
  std::size_t i = 0;
  while (i < ec.classes.size()) {
    const std::string a = ec.classes[i].front().src, b = ec.classes[i].front().dst;
    std::size_t j = i;
    while (j < ec.classes.size() && ec.classes[j].front().src == a && ec.classes[j].front().dst == b) ++j;
    out << "  " << a << " -> " << b << ": " << (j - i) << (j - i == 1 ? " class\n" : " classes\n");
    for (std::size_t k = i; k < j; ++k) {
      out << "    {";
      for (std::size_t m = 0; m < ec.classes[k].size(); ++m) out << (m ? ", " : "") << to_string(ec.classes[k][m]);
      out << "}\n";
    }
    i = j;
  }
  return 0;
}

int cmd_gen_data(const Globals& g, const std::string& preset, std::size_t n, std::size_t size, const std::string& outdir,
                 std::ostream& out) {
  if (preset != "circles") throw ValidationError("gen-data supports --preset circles only");
  const CirclesDataset d = gen_circles_dataset(n, size, g.seed.value_or(0));
  write_circles_dir(outdir, d);
  if (!g.quiet)
    out << "wrote " << 3 * n << " images (" << size << "x" << size << ") to " << outdir << "; fingerprint "
        << fingerprint_directory(outdir) << "\n";
  return 0;
}

int cmd_train(const Globals& g, const Sources& src, const std::string& data_dir, const std::string& manifest_path,
              const std::string& outdir, std::ostream& out) {
  std::string schema_text, config_text;
  json data_desc;
  std::optional<std::string> expected_fp;
  if (!manifest_path.empty()) {
    json m;
    try {
      m = json::parse(read_text(manifest_path));
      schema_text = m.at("schema").get<std::string>();
      config_text = m.at("config").get<std::string>();
      data_desc = m.at("data");
      expected_fp = m.at("dataset_fingerprint").get<std::string>();
    } catch (const json::exception& e) {
      throw ValidationError("bad manifest " + manifest_path + ": " + e.what());
    }
    if (!data_dir.empty()) data_desc = data_descriptor(data_dir, "", 0);
  } else {
    std::tie(schema_text, config_text) = resolve_texts(src, g.seed);
  }
  Experiment e = build_experiment(schema_text, config_text);
  if (manifest_path.empty()) data_desc = data_descriptor(data_dir, src.preset, e.config.training.seed);
  DataChoice dc = load_data(data_desc, *e.arch);
  const std::string fp = fingerprint_dataset(dc.data);
  if (expected_fp && *expected_fp != fp)
    throw ValidationError("dataset fingerprint " + fp + " does not match the manifest's " + *expected_fp);
  TrainSetup setup = make_setup(e, std::move(dc.data));

  const fs::path dir = outdir;
  fs::create_directories(dir);
  json manifest{{"artifact_version", kVersion},
                {"schema", e.schema->to_text()},
                {"config", canonical_config(e.config)},
                {"seed", e.config.training.seed},
                {"data", data_desc},
                {"dataset_fingerprint", fp},
                {"critic_regularizer", "weight clipping to [-clip_bound, clip_bound]"},
                {"start_time", utc_now()}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_text(dir / "schema.txt", e.schema->to_text());
  write_text(dir / "config.txt", canonical_config(e.config));

  std::ofstream metrics(dir / "metrics.csv");
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  metrics << metrics_header(*e.schema) << "\n";
  std::size_t last_step = 0;
  TrainObserver obs;
  obs.on_metrics = [&](const MetricsRow& r) {
    metrics << metrics_line(r) << "\n";
    metrics.flush();
    if (!g.quiet && (r.step % 100 == 0))
      out << "step " << r.step << " loss " << r.total << "\n" << std::flush;
  };
  obs.on_checkpoint = [&](const TrainState& st) {
    save_checkpoint(dir / ckpt_name(st.step), to_named(st));
    last_step = st.step;
  };
  train(setup, obs);
  // A zero-step run keeps only the initial checkpoint.
  if (last_step > 0)
    fs::copy_file(dir / ckpt_name(last_step), dir / "final.cdl", fs::copy_options::overwrite_existing);
  if (!g.quiet) out << "trained " << last_step << " steps; outputs in " << dir.string() << "\n";
  return 0;
}

struct Loaded {
  Experiment e;
  std::shared_ptr<ModelInstance> model;
};

Loaded load_model(const Globals& g, const std::string& ckpt, std::string schema_file, std::string config_file) {
  const fs::path run = fs::path(ckpt).parent_path();
  if (schema_file.empty()) schema_file = (run / "schema.txt").string();
  if (config_file.empty()) config_file = (run / "config.txt").string();
  Sources s{"", schema_file, config_file, {}};
  auto [schema, config] = resolve_texts(s, g.seed);
  Loaded l{build_experiment(schema, config), nullptr};
  const TrainState st = from_named(load_checkpoint(ckpt));
  l.model = std::make_shared<ModelInstance>(l.e.arch, st.gen);
  return l;
}

Tensor clamp01(Tensor t) {
  for (double& v : t.values()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

int cmd_infer(const Globals& g, const std::string& ckpt, const std::string& schema_file, const std::string& config_file,
              const std::string& path_text, const std::string& input, std::optional<std::uint64_t> latent_seed,
              const std::string& outfile, std::ostream& out) {
  Loaded l = load_model(g, ckpt, schema_file, config_file);
  const Path p = l.e.schema->parse_path(path_text);
  const std::size_t dim = l.e.arch->object_dim(p.src);
  Tensor x;
  std::size_t side_hint = 0;
  if (!input.empty()) {
    if (latent_seed) throw ValidationError("pass either --input or --latent-seed, not both");
    const Image img = read_ppm(input);
    if (img.pixels.size() != dim)
      throw ShapeError("input image has " + std::to_string(img.pixels.size()) + " values but " + p.src + " has dim " +
                       std::to_string(dim));
    x = img.pixels;
    side_hint = img.width;
  } else if (latent_seed) {
    Rng rng = Rng::substream(*latent_seed, "latent");
    std::vector<double> v(dim);
    for (double& z : v) z = rng.uniform();
    x = Tensor(Shape{dim}, std::move(v));
  } else {
    throw ValidationError("infer needs --input FILE.ppm or --latent-seed K");
  }
  const Tensor y = eval_path(*l.model, p, x.reshaped(Shape{dim}));
  if (fs::path(outfile).extension() == ".ppm") {
    const auto [w, h] = image_dims(y.size(), side_hint);
    write_ppm(outfile, clamp01(y), w, h);
  } else {
    std::ofstream o(outfile);
    if (!o) throw std::runtime_error("cannot write " + outfile);
    char buf[40];
    for (double v : y.values()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      o << buf << "\n";
    }
  }
  if (!g.quiet) out << "wrote " << to_string(p) << " output (" << y.size() << " values) to " << outfile << "\n";
  return 0;
}

int cmd_analyze(const Globals& g, const Sources& src, const std::string& ckpt, const std::string& data_dir,
                std::size_t bound, double eps, std::size_t n_eval, std::size_t cap, std::string outdir,
                std::ostream& out, std::ostream& err) {
  Loaded l = load_model(g, ckpt, src.schema_file, src.config_file);
  const fs::path run = fs::path(ckpt).parent_path();
  if (outdir.empty()) outdir = run.empty() ? "." : run.string();
  json desc;
  if (!data_dir.empty() || !src.preset.empty()) {
    desc = data_descriptor(data_dir, src.preset, l.e.config.training.seed);
  } else if (fs::exists(run / "manifest.json")) {
    desc = json::parse(read_text(run / "manifest.json")).at("data");
  } else {
    throw ValidationError("analyze needs --data DIR, --preset NAME or a manifest.json next to the checkpoint");
  }
  TaskSpec task{l.e.schema, load_data(desc, *l.e.arch).data};
  validate_task(task, l.e.arch->object_shapes());
  const std::uint64_t seed = g.seed.value_or(l.e.config.training.seed);
  fs::create_directories(outdir);

  const ResidualReport res = residual_report(*l.model, task, n_eval, seed);
  write_residuals_csv(fs::path(outdir) / "analysis_residuals.csv", res);
  out << format_report(res);

  std::map<std::string, std::vector<Tensor>> points;
  Rng rng = Rng::substream(seed, "factorization");
  for (const auto& o : l.e.schema->objects()) {
    const Tensor b = sample_batch(task.dataset, o, n_eval, rng);
    const std::size_t d = b.shape()[1];
    for (std::size_t i = 0; i < n_eval; ++i)
      points[o].emplace_back(Shape{d}, std::vector<double>(b.values().begin() + i * d, b.values().begin() + (i + 1) * d));
  }
  const FactorizationResult fr = factorization_check(*l.model, points, eps, bound);
  out << format_report(fr, eps);

  std::string skip;
  for (const auto& o : l.e.schema->objects()) {
    const Source& s = task.dataset.at(o);
    if (!s.is_finite()) skip = "object " + o + " has a latent source";
    else if (s.cardinality() > cap)
      skip = "object " + o + " has " + std::to_string(s.cardinality()) + " data elements (cap " + std::to_string(cap) + ")";
    if (!skip.empty()) break;
  }
  if (skip.empty()) {
    const RestrictionSets rs = restriction_closure(*l.model, task, cap);
    write_restriction_csv(fs::path(outdir) / "analysis_restriction.csv", *l.e.schema, rs);
    out << format_report(*l.e.schema, rs);
  } else {
    err << "warning: restriction closure skipped: " << skip << "\n";
  }

  // Colour recovery when the schema looks like the circles task.
  const Schema& s = *l.e.schema;
  if (s.generator_index("c") && s.generator_index("d")) {
    const std::size_t img = l.e.arch->object_dim(s.generator("d").src);
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(img / 3.0)));
    if (3 * side * side == img && l.e.arch->object_dim(s.generator("d").dst) == 2 * img &&
        l.e.arch->object_dim(s.generator("c").src) == 2 * img)
      out << format_report(eval_circles_metrics(*l.model, circles_test_pairs(n_eval, seed), side));
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compositional deep learning from categorical schemas", "cdl"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Root seed for all randomness");
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  app.add_option("--threads", g.threads, "OpenMP threads for the kernels")->check(CLI::PositiveNumber);

  Sources src;
  std::size_t bound = 4;
  auto* check = app.add_subcommand("check", "Validate a schema and print its bounded congruence classes");
  check->add_option("schema", src.schema_file, "Schema file");
  check->add_option("--preset", src.preset, "Use a preset's schema");
  check->add_option("--bound", bound, "Path length bound");

  std::string preset_gd = "circles", out_dir;
  std::size_t n = 200, size = 16;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset directory");
  gen->add_option("--preset", preset_gd, "Dataset preset (circles)");
  gen->add_option("--n", n, "Images per set");
  gen->add_option("--size", size, "Image side in pixels (>= 8)");
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string data_dir, manifest;
  auto* tr = app.add_subcommand("train", "Train every generator of a schema");
  tr->add_option("--schema", src.schema_file, "Schema file");
  tr->add_option("--config", src.config_file, "Config file");
  tr->add_option("--preset", src.preset, "Preset schema + config (+ built-in data)");
  tr->add_option("--data", data_dir, "Dataset directory");
  tr->add_option("--manifest", manifest, "Rerun from a run manifest");
  tr->add_option("--set", src.overrides, "Config override key=value (repeatable)");
  tr->add_option("--out", out_dir, "Run directory")->required();

  std::string ckpt, path_text, input, outfile;
  std::uint64_t latent_seed = 0;
  auto* inf = app.add_subcommand("infer", "Evaluate a path of a trained model");
  inf->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  inf->add_option("--schema", src.schema_file, "Schema file (default: next to the checkpoint)");
  inf->add_option("--config", src.config_file, "Config file (default: next to the checkpoint)");
  inf->add_option("--path", path_text, "Path, e.g. \"d;pi_A\" or \"id(A)\"")->required();
  inf->add_option("--input", input, "Input PPM");
  auto* latent_opt = inf->add_option("--latent-seed", latent_seed, "Uniform latent input from this seed");
  inf->add_option("--out", outfile, "Output .ppm (or text for other extensions)")->required();

  double eps = 1e-2;
  std::size_t n_eval = 64, cap = 1000;
  auto* an = app.add_subcommand("analyze", "Residuals, factorization witness and restriction closure");
  an->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  an->add_option("--schema", src.schema_file, "Schema file (default: next to the checkpoint)");
  an->add_option("--config", src.config_file, "Config file (default: next to the checkpoint)");
  an->add_option("--data", data_dir, "Dataset directory (default: the run manifest's data)");
  an->add_option("--preset", src.preset, "Use a preset's built-in data");
  an->add_option("--bound", bound, "Path length bound");
  an->add_option("--eps", eps, "Factorization tolerance");
  an->add_option("--n-eval", n_eval, "Evaluation samples");
  an->add_option("--cap", cap, "Closure cap per object");
  an->add_option("--out", out_dir, "Report directory (default: the checkpoint's directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  if (seed_opt->count()) g.seed = seed_value;
  kernels::parallel::set_num_threads(g.threads);

  try {
    if (*check) return cmd_check(g, src, bound, out);
    if (*gen) return cmd_gen_data(g, preset_gd, n, size, out_dir, out);
    if (*tr) return cmd_train(g, src, data_dir, manifest, out_dir, out);
    if (*inf)
      return cmd_infer(g, ckpt, src.schema_file, src.config_file, path_text, input,
                       latent_opt->count() ? std::optional<std::uint64_t>(latent_seed) : std::nullopt, outfile, out);
    if (*an) return cmd_analyze(g, src, ckpt, data_dir, bound, eps, n_eval, cap, out_dir, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace cdl
