#include <cstdio>
#include <sstream>

#include "cdl/train.hpp"

namespace cdl {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ValidationError("config: '" + key + "' expects a number, got '" + v + "'");
  return d;
}

std::uint64_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ValidationError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(v);
  } catch (...) {
    throw ValidationError("config: '" + key + "' is out of range: " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ValidationError("config: '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

void TrainingConfig::validate() const {
  if (batch < 1 || n_critic < 1 || n_critic_warm < 1)
    throw ValidationError("config: batch, n_critic and n_critic_warm must be at least 1");
  if (!(gamma >= 0)) throw ValidationError("config: gamma must be non-negative");
  if (!(identity_weight >= 0)) throw ValidationError("config: identity_weight must be non-negative");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ValidationError("config: beta1 and beta2 must lie in [0, 1)");
  if (!(lr > 0) || !(eps_adam > 0)) throw ValidationError("config: lr and eps_adam must be positive");
  if (!(clip_bound > 0)) throw ValidationError("config: clip_bound must be positive");
  if (!(init_stddev >= 0)) throw ValidationError("config: init_stddev must be non-negative");
}

void set_config_value(TrainingConfig& c, const std::string& key, const std::string& value) {
  if (key == "gamma") c.gamma = parse_double(key, value);
  else if (key == "identity_weight") c.identity_weight = parse_double(key, value);
  else if (key == "lr") c.lr = parse_double(key, value);
  else if (key == "beta1") c.beta1 = parse_double(key, value);
  else if (key == "beta2") c.beta2 = parse_double(key, value);
  else if (key == "eps_adam") c.eps_adam = parse_double(key, value);
  else if (key == "batch") c.batch = parse_count(key, value);
  else if (key == "n_critic_warm") c.n_critic_warm = parse_count(key, value);
  else if (key == "warm_steps") c.warm_steps = parse_count(key, value);
  else if (key == "n_critic") c.n_critic = parse_count(key, value);
  else if (key == "total_steps") c.total_steps = parse_count(key, value);
  else if (key == "clip_bound") c.clip_bound = parse_double(key, value);
  else if (key == "seed") c.seed = parse_count(key, value);
  else if (key == "init_stddev") c.init_stddev = parse_double(key, value);
  else if (key == "checkpoint_every") c.checkpoint_every = parse_count(key, value);
  else if (key == "patheq_stopgrad") c.patheq_stopgrad = parse_bool(key, value);
  else if (key == "record_wallclock") c.record_wallclock = parse_bool(key, value);
  else throw ValidationError("config: unknown key '" + key + "'");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string w; ls >> w;) tok.push_back(w);
    if (tok.empty()) continue;
    try {
      const std::string& kind = tok[0];
      if (kind == "set") {
        if (tok.size() != 3) throw ValidationError("expected: set <key> <value>");
        set_config_value(cfg.training, tok[1], tok[2]);
      } else if (kind == "arch" || kind == "disc") {
        if (tok.size() < 3) throw ValidationError("expected: " + kind + " <name> <layer spec>");
        LayerSpec spec = parse_layer_spec({tok.begin() + 2, tok.end()}, kind == "disc");
        auto& table = kind == "arch" ? cfg.archs : cfg.discs;
        if (!table.emplace(tok[1], std::move(spec)).second)
          throw ValidationError("duplicate " + kind + " entry for " + tok[1]);
      } else if (kind == "idt") {
        std::string rest;
        for (std::size_t i = 1; i < tok.size(); ++i) rest += tok[i];
        if (rest.empty()) throw ValidationError("expected: idt <path>");
        cfg.identity_paths.push_back(rest);
      } else if (kind == "shape") {
        if (tok.size() < 3) throw ValidationError("expected: shape <object> <dims...>");
        Shape s;
        for (std::size_t i = 2; i < tok.size(); ++i) {
          const auto d = parse_count("shape", tok[i]);
          if (d == 0) throw ValidationError("shape extents must be positive");
          s.push_back(d);
        }
        cfg.shapes[tok[1]] = s;
      } else {
        throw ValidationError("unknown directive '" + kind + "'");
      }
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.training.validate();
  return cfg;
}

std::string ExperimentConfig::to_text() const {
  const TrainingConfig& c = training;
  std::ostringstream os;
  os << "set gamma " << fmt_double(c.gamma) << "\n"
     << "set identity_weight " << fmt_double(c.identity_weight) << "\n"
     << "set lr " << fmt_double(c.lr) << "\n"
     << "set beta1 " << fmt_double(c.beta1) << "\n"
     << "set beta2 " << fmt_double(c.beta2) << "\n"
     << "set eps_adam " << fmt_double(c.eps_adam) << "\n"
     << "set batch " << c.batch << "\n"
     << "set n_critic_warm " << c.n_critic_warm << "\n"
     << "set warm_steps " << c.warm_steps << "\n"
     << "set n_critic " << c.n_critic << "\n"
     << "set total_steps " << c.total_steps << "\n"
     << "set clip_bound " << fmt_double(c.clip_bound) << "\n"
     << "set seed " << c.seed << "\n"
     << "set init_stddev " << fmt_double(c.init_stddev) << "\n"
     << "set checkpoint_every " << c.checkpoint_every << "\n"
     << "set patheq_stopgrad " << (c.patheq_stopgrad ? "true" : "false") << "\n"
     << "set record_wallclock " << (c.record_wallclock ? "true" : "false") << "\n";
  for (const auto& [o, s] : shapes) {
    os << "shape " << o;
    for (auto d : s) os << " " << d;
    os << "\n";
  }
  for (const auto& [g, spec] : archs) os << "arch " << g << " " << spec.to_text() << "\n";
  for (const auto& [o, spec] : discs) {
    os << "disc " << o << " mlp";
    for (auto w : spec.widths) os << " " << w;
    os << " " << to_string(spec.hidden) << "\n";
  }
  for (const auto& p : identity_paths) os << "idt " << p << "\n";
  return os.str();
}

std::map<std::string, Shape> resolve_object_shapes(const Schema& schema, const ExperimentConfig& cfg) {
  std::map<std::string, Shape> shapes;
  for (const auto& [o, s] : cfg.shapes) {
    if (!schema.has_object(o)) throw ValidationError("shape given for unknown object " + o);
    shapes[o] = s;
  }
  auto note = [&](const std::string& obj, std::size_t dim, const std::string& who) {
    auto it = shapes.find(obj);
    if (it == shapes.end()) {
      shapes[obj] = Shape{dim};
    } else if (numel(it->second) != dim) {
      throw ShapeError(who + " implies dim(" + obj + ") = " + std::to_string(dim) + " but it is already " +
                       to_string(it->second));
    }
  };
  for (const auto& g : schema.generators()) {
    auto it = cfg.archs.find(g.name);
    if (it == cfg.archs.end()) throw ValidationError("no architecture for generator " + g.name);
    note(g.src, it->second.input_dim(), "arch " + g.name);
    note(g.dst, it->second.output_dim(), "arch " + g.name);
  }
  for (const auto& [o, spec] : cfg.discs) {
    if (!schema.has_object(o)) throw ValidationError("discriminator given for unknown object " + o);
    note(o, spec.input_dim(), "disc " + o);
  }
  for (const auto& o : schema.objects())
    if (!shapes.count(o)) throw ValidationError("cannot infer the shape of object " + o + "; add 'shape " + o + " <dim>'");
  return shapes;
}

}  // namespace cdl
