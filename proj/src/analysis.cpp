#include "cdl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace cdl {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string eq_name(const Equation& e) { return to_string(e.lhs) + " = " + to_string(e.rhs); }

}  // namespace

ResidualRow residual_on_batch(const ModelInstance& model, const Equation& eq, const Tensor& batch) {
  const std::size_t dim = model.arch().object_dim(eq.lhs.src);
  if (batch.rank() != 2 || batch.shape()[1] != dim)
    throw ShapeError("residual batch must be [n, " + std::to_string(dim) + "], got " + to_string(batch.shape()));
  const std::size_t n = batch.shape()[0];
  const Tensor l = eval_path(model, eq.lhs, batch);
  const Tensor r = eval_path(model, eq.rhs, batch);
  const std::size_t out = l.size() / n;
  ResidualRow row{eq_name(eq), 0, 0, n};
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < out; ++j) s += std::abs(l[i * out + j] - r[i * out + j]);
    total += s;
    row.max = std::max(row.max, s);
  }
  row.mean = total / static_cast<double>(n);
  return row;
}

ResidualReport residual_report(const ModelInstance& model, const TaskSpec& task, std::size_t n_eval,
                               std::uint64_t seed) {
  if (n_eval < 1) throw ValidationError("residual report needs at least one sample");
  ResidualReport rep;
  Rng rng = Rng::substream(seed, "heldout");
  for (const auto& eq : model.schema().equations())
    rep.rows.push_back(residual_on_batch(model, eq, sample_batch(task.dataset, eq.lhs.src, n_eval, rng)));
  return rep;
}

FactorizationResult factorization_check(const ModelInstance& model,
                                        const std::map<std::string, std::vector<Tensor>>& points, double eps,
                                        std::size_t bound) {
  const Schema& s = model.schema();
  for (const auto& eq : s.equations())
    if (std::max(eq.lhs.length(), eq.rhs.length()) > bound)
      throw ValidationError("bound " + std::to_string(bound) + " is shorter than equation " + eq_name(eq));
  FactorizationResult res;
  const EquivClasses classes = congruence_classes(s, bound);
  for (const auto& cls : classes.classes) {
    if (cls.size() < 2) continue;
    auto it = points.find(cls.front().src);
    if (it == points.end() || it->second.empty()) continue;
    const std::size_t dim = model.arch().object_dim(cls.front().src);
    std::vector<double> flat;
    for (const auto& p : it->second) {
      if (p.size() != dim) throw ShapeError("evaluation point for " + cls.front().src + " has the wrong size");
      flat.insert(flat.end(), p.values().begin(), p.values().end());
    }
    const std::size_t n = it->second.size();
    const Tensor batch(Shape{n, dim}, std::move(flat));
    std::vector<Tensor> outs;
    for (const auto& p : cls) outs.push_back(eval_path(model, p, batch));
    res.evaluations += cls.size() * n;
    const std::size_t od = outs.front().size() / n;
    for (std::size_t a = 0; a < cls.size(); ++a)
      for (std::size_t b = a + 1; b < cls.size(); ++b) {
        ++res.pairs_checked;
        for (std::size_t i = 0; i < n; ++i) {
          double dev = 0;
          for (std::size_t j = 0; j < od; ++j)
            dev = std::max(dev, std::abs(outs[a][i * od + j] - outs[b][i * od + j]));
          res.max_deviation = std::max(res.max_deviation, dev);
          if (dev > eps && !res.counterexample)
            res.counterexample = Counterexample{cls[a], cls[b], i, it->second[i], dev};
        }
      }
  }
  res.certified = !res.counterexample;
  return res;
}

namespace {

std::string bytes_of(const Tensor& t) {
  std::string k(t.size() * sizeof(double), '\0');
  std::memcpy(k.data(), t.data(), k.size());
  return k;
}

}  // namespace

RestrictionSets restriction_closure(const ModelInstance& model, const TaskSpec& task, std::size_t cap) {
  const Schema& s = model.schema();
  RestrictionSets out;
  std::map<std::string, std::unordered_map<std::string, std::size_t>> seen;
  std::map<std::string, std::size_t> frontier;  // first index not yet pushed through the generators

  for (const auto& o : s.objects()) {
    if (!task.dataset.contains(o)) throw ValidationError("no dataset for object " + o);
    const Source& src = task.dataset.at(o);
    if (!src.is_finite()) throw ValidationError("restriction needs finite data, but object " + o + " has a latent source");
    if (src.cardinality() > cap)
      throw ValidationError("dataset for " + o + " has " + std::to_string(src.cardinality()) +
                            " elements, more than the closure cap " + std::to_string(cap));
    auto& elems = out.elements[o];
    auto& prov = out.provenance[o];
    const auto items = src.enumerate();
    for (std::size_t i = 0; i < items.size(); ++i) {
      Tensor x = items[i].reshaped(model.arch().object_shape(o));
      if (seen[o].emplace(bytes_of(x), elems.size()).second) {
        elems.push_back(std::move(x));
        prov.push_back({Provenance::Kind::dataset, "", o, i});
      }
    }
    frontier[o] = 0;
  }

  // Rounds: push every element added since the last round through every
  // generator (declaration order), as one batch per generator.
  while (true) {
    std::map<std::string, std::size_t> end;
    bool work = false;
    for (const auto& o : s.objects()) {
      end[o] = out.elements[o].size();
      work = work || frontier[o] < end[o];
    }
    if (!work) break;
    ++out.rounds;
    for (const auto& g : s.generators()) {
      const std::size_t lo = frontier[g.src], hi = end[g.src];
      if (lo == hi) continue;
      const std::size_t dim = model.arch().object_dim(g.src);
      std::vector<double> flat;
      flat.reserve((hi - lo) * dim);
      for (std::size_t i = lo; i < hi; ++i) {
        const auto v = out.elements[g.src][i].values();
        flat.insert(flat.end(), v.begin(), v.end());
      }
      const Tensor y = eval_path(model, s.make_path({g.name}), Tensor(Shape{hi - lo, dim}, std::move(flat)));
      const std::size_t od = model.arch().object_dim(g.dst);
      for (std::size_t i = 0; i < hi - lo; ++i) {
        Tensor img(model.arch().object_shape(g.dst),
                   std::vector<double>(y.values().begin() + i * od, y.values().begin() + (i + 1) * od));
        auto& elems = out.elements[g.dst];
        if (seen[g.dst].count(bytes_of(img))) continue;
        if (elems.size() >= cap) {
          out.minimal = false;
          continue;
        }
        seen[g.dst].emplace(bytes_of(img), elems.size());
        elems.push_back(std::move(img));
        out.provenance[g.dst].push_back({Provenance::Kind::image, g.name, g.src, lo + i});
      }
    }
    for (const auto& o : s.objects()) frontier[o] = end[o];
  }
  return out;
}

// ---- circles ----

std::vector<std::pair<Rgb, Rgb>> circles_test_pairs(std::size_t n, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "circles/test");
  auto color = [&] {
    const double r = rng.index(256) / 255.0;
    const double g = rng.index(256) / 255.0;
    const double b = rng.index(256) / 255.0;
    return Rgb{r, g, b};
  };
  std::vector<std::pair<Rgb, Rgb>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb c = color();
    const Rgb s = color();
    out.emplace_back(c, s);
  }
  return out;
}

namespace {

Tensor clamp01(Tensor t) {
  for (double& v : t.values()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

Tensor concat_rows(const std::vector<Tensor>& rows) {
  std::vector<double> v;
  for (const auto& r : rows) v.insert(v.end(), r.values().begin(), r.values().end());
  return Tensor(Shape{rows.size(), rows.front().size()}, std::move(v));
}

Tensor row(const Tensor& batch, std::size_t i) {
  const std::size_t d = batch.shape()[1];
  return Tensor(Shape{d}, std::vector<double>(batch.values().begin() + i * d, batch.values().begin() + (i + 1) * d));
}

void accumulate(DirectionMetrics& m, const Rgb& got, const Rgb& want) {
  for (std::size_t c = 0; c < 3; ++c) m.mae[c] += std::abs(got[c] - want[c]);
}

}  // namespace

CirclesReport eval_circles_metrics(const ModelInstance& model, const std::vector<std::pair<Rgb, Rgb>>& pairs,
                                   std::size_t side, const std::string& compose, const std::string& decompose) {
  if (pairs.empty()) throw ValidationError("circles metrics need at least one test pair");
  const Schema& s = model.schema();
  const Path cp = s.make_path({compose});
  const Path dp = s.make_path({decompose});
  const std::size_t img = 3 * side * side;
  if (model.arch().object_dim(dp.src) != img || model.arch().object_dim(dp.dst) != 2 * img ||
      model.arch().object_dim(cp.src) != 2 * img || model.arch().object_dim(cp.dst) != img)
    throw ShapeError("circles metrics need " + decompose + " : [" + std::to_string(img) + "] -> [" +
                     std::to_string(2 * img) + "] and " + compose + " the other way");

  std::vector<Tensor> composed, split;
  for (const auto& [c, st] : pairs) {
    composed.push_back(render_composed(side, c, st));
    Tensor a = render_circle(side, c), b = render_stripes(side, st);
    std::vector<double> v(a.values().begin(), a.values().end());
    v.insert(v.end(), b.values().begin(), b.values().end());
    split.emplace_back(Shape{v.size()}, std::move(v));
  }
  const Tensor dy = clamp01(eval_path(model, dp, concat_rows(composed)));
  const Tensor cy = clamp01(eval_path(model, cp, concat_rows(split)));

  CirclesReport r;
  r.decomposition.path = to_string(dp);
  r.composition.path = to_string(cp);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [c, st] = pairs[i];
    const Tensor both = row(dy, i);
    const Tensor a(Shape{img}, std::vector<double>(both.values().begin(), both.values().begin() + img));
    const Tensor b(Shape{img}, std::vector<double>(both.values().begin() + img, both.values().end()));
    accumulate(r.decomposition, decode_circle_color(a, side), c);
    accumulate(r.decomposition, decode_stripe_color(b, side), st);
    const Tensor ab = row(cy, i);
    accumulate(r.composition, decode_circle_color(ab, side), c);
    accumulate(r.composition, decode_stripe_color(ab, side), st);
  }
  for (auto* m : {&r.decomposition, &r.composition}) {
    m->count = pairs.size();
    for (double& v : m->mae) v /= 2.0 * static_cast<double>(pairs.size());
  }
  return r;
}

// ---- reports ----

void write_residuals_csv(const std::filesystem::path& path, const ResidualReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "equation,mean,max,count\n";
  for (const auto& row : r.rows) out << "\"" << row.equation << "\"," << fmt(row.mean) << "," << fmt(row.max) << "," << row.count << "\n";
}

void write_restriction_csv(const std::filesystem::path& path, const Schema& schema, const RestrictionSets& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "object,index,provenance,generator,from_object,from_index\n";
  for (const auto& o : schema.objects()) {
    const auto& prov = r.provenance.at(o);
    for (std::size_t i = 0; i < prov.size(); ++i) {
      const auto& p = prov[i];
      out << o << "," << i << "," << (p.kind == Provenance::Kind::dataset ? "dataset" : "image") << ","
          << p.generator << "," << p.from_object << "," << p.from_index << "\n";
    }
  }
}

std::string format_report(const ResidualReport& r) {
  std::ostringstream os;
  os << "path-equivalence residuals (mean / max L1 per sample):\n";
  if (r.rows.empty()) os << "  no equations\n";
  for (const auto& row : r.rows)
    os << "  " << row.equation << ": mean " << row.mean << ", max " << row.max << " (n=" << row.count << ")\n";
  return os.str();
}

std::string format_report(const FactorizationResult& r, double eps) {
  std::ostringstream os;
  os << "factorization through the bounded quotient (empirical, eps = " << eps << "):\n";
  if (r.certified) {
    os << "  certificate: " << r.pairs_checked << " equivalent path pairs agree within eps; max deviation "
       << r.max_deviation << "\n";
  } else {
    const auto& c = *r.counterexample;
    os << "  counterexample: " << to_string(c.lhs) << " vs " << to_string(c.rhs) << " at point #" << c.point_index
       << " differ by " << c.deviation << "\n";
  }
  return os.str();
}

std::string format_report(const Schema& schema, const RestrictionSets& r) {
  std::ostringstream os;
  os << "restriction to the dataset (image closure, " << r.rounds << " rounds"
     << (r.minimal ? "" : ", stopped at cap: NOT minimal") << "):\n";
  for (const auto& o : schema.objects()) {
    const auto& prov = r.provenance.at(o);
    const auto data = std::count_if(prov.begin(), prov.end(),
                                    [](const Provenance& p) { return p.kind == Provenance::Kind::dataset; });
    os << "  " << o << ": " << prov.size() << " elements (" << data << " from data, " << prov.size() - data
       << " images)\n";
  }
  return os.str();
}

std::string format_report(const CirclesReport& r) {
  std::ostringstream os;
  for (const auto* m : {&r.composition, &r.decomposition}) {
    os << (m == &r.composition ? "composition   " : "decomposition ") << m->path << ": MAE r/g/b " << m->mae[0]
       << " " << m->mae[1] << " " << m->mae[2] << " (n=" << m->count << ")\n";
  }
  return os.str();
}

}  // namespace cdl
