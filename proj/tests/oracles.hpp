#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. They are deliberately naive: no shared code with the
// library beyond the public data types.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cdl/analysis.hpp"
#include "cdl/schema.hpp"

namespace oracle {

using cdl::Path;
using cdl::Schema;

// All paths of length <= bound starting anywhere, by breadth-first growth.
inline std::vector<Path> all_paths(const Schema& s, std::size_t bound) {
  std::vector<Path> out;
  std::vector<Path> layer;
  for (const auto& o : s.objects()) layer.push_back(Path::identity(o));
  for (std::size_t len = 0; len <= bound; ++len) {
    out.insert(out.end(), layer.begin(), layer.end());
    std::vector<Path> next;
    if (len < bound)
      for (const auto& p : layer)
        for (const auto& g : s.generators())
          if (g.src == p.dst) {
            Path q = p;
            q.edges.push_back(g.name);
            q.dst = g.dst;
            next.push_back(q);
          }
    layer = std::move(next);
  }
  return out;
}

// Object at position i of p (0 = source, i = after the i-th edge).
inline std::string object_at(const Schema& s, const Path& p, std::size_t i) {
  return i == 0 ? p.src : s.generator(p.edges[i - 1]).dst;
}

// Every path obtained from p by replacing one occurrence of one side of an
// equation with the other side.
inline std::vector<Path> one_step_rewrites(const Schema& s, const Path& p) {
  std::vector<Path> out;
  for (const auto& eq : s.equations()) {
    for (int dir = 0; dir < 2; ++dir) {
      const Path& from = dir ? eq.rhs : eq.lhs;
      const Path& to = dir ? eq.lhs : eq.rhs;
      const std::size_t fl = from.edges.size();
      for (std::size_t pos = 0; pos + fl <= p.edges.size(); ++pos) {
        bool match = object_at(s, p, pos) == from.src;
        for (std::size_t j = 0; match && j < fl; ++j) match = p.edges[pos + j] == from.edges[j];
        if (!match) continue;
        Path q{p.src, p.dst, {}};
        q.edges.insert(q.edges.end(), p.edges.begin(), p.edges.begin() + pos);
        q.edges.insert(q.edges.end(), to.edges.begin(), to.edges.end());
        q.edges.insert(q.edges.end(), p.edges.begin() + pos + fl, p.edges.end());
        out.push_back(q);
      }
    }
  }
  return out;
}

// Bounded congruence as sets of path strings: components of the rewriting
// graph restricted to paths within the bound, then merged under one-edge
// contexts (pre and post) by relabelling until nothing changes.
inline std::set<std::set<std::string>> congruence(const Schema& s, std::size_t bound) {
  const auto paths = all_paths(s, bound);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < paths.size(); ++i) index[cdl::to_string(paths[i])] = i;
  std::vector<std::size_t> label(paths.size());
  for (std::size_t i = 0; i < label.size(); ++i) label[i] = i;
  auto merge = [&](std::size_t a, std::size_t b) {
    const std::size_t la = label[a], lb = label[b];
    if (la == lb) return false;
    const std::size_t keep = std::min(la, lb), drop = std::max(la, lb);
    for (auto& l : label)
      if (l == drop) l = keep;
    return true;
  };
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (const auto& q : one_step_rewrites(s, paths[i]))
      if (q.edges.size() <= bound) merge(i, index.at(cdl::to_string(q)));

  auto extend = [&](const Path& p, const cdl::Generator& g, bool post) -> std::optional<std::size_t> {
    if (p.edges.size() + 1 > bound) return std::nullopt;
    Path q = p;
    if (post) {
      if (g.src != p.dst) return std::nullopt;
      q.edges.push_back(g.name);
      q.dst = g.dst;
    } else {
      if (g.dst != p.src) return std::nullopt;
      q.edges.insert(q.edges.begin(), g.name);
      q.src = g.src;
    }
    return index.at(cdl::to_string(q));
  };
  bool changed = true;
  while (changed) {
    changed = false;
    // For every class and one-edge context, all extensions that fit must agree.
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < paths.size(); ++i) members[label[i]].push_back(i);
    for (const auto& [_, group] : members)
      for (const auto& g : s.generators())
        for (bool post : {true, false}) {
          std::vector<std::size_t> ext;
          for (std::size_t i : group)
            if (auto a = extend(paths[i], g, post)) ext.push_back(*a);
          for (std::size_t k = 1; k < ext.size(); ++k)
            if (merge(ext[0], ext[k])) changed = true;
        }
  }
  std::map<std::size_t, std::set<std::string>> groups;
  for (std::size_t i = 0; i < paths.size(); ++i) groups[label[i]].insert(cdl::to_string(paths[i]));
  std::set<std::set<std::string>> out;
  for (auto& [_, g] : groups) out.insert(std::move(g));
  return out;
}

inline std::set<std::set<std::string>> as_sets(const cdl::EquivClasses& ec) {
  std::set<std::set<std::string>> out;
  for (const auto& c : ec.classes) {
    std::set<std::string> g;
    for (const auto& p : c) g.insert(cdl::to_string(p));
    out.insert(std::move(g));
  }
  return out;
}

// Random schema: objects O0.., generators g0.. with random endpoints,
// equations between random parallel paths (identity sides allowed).
template <class Rng>
Schema random_schema(Rng& rng, std::size_t max_objects, std::size_t max_gens, std::size_t max_eqs,
                     std::size_t max_eq_len) {
  Schema s;
  const std::size_t no = 1 + rng.index(max_objects);
  for (std::size_t i = 0; i < no; ++i) s.add_object("O" + std::to_string(i));
  const std::size_t ng = 1 + rng.index(max_gens);
  for (std::size_t i = 0; i < ng; ++i)
    s.add_generator("g" + std::to_string(i), "O" + std::to_string(rng.index(no)), "O" + std::to_string(rng.index(no)));
  const std::size_t ne = rng.index(max_eqs + 1);
  const auto paths = all_paths(s, max_eq_len);
  for (std::size_t k = 0, tries = 0; k < ne && tries < 200; ++tries) {
    const Path& a = paths[rng.index(paths.size())];
    std::vector<const Path*> parallel;
    for (const auto& b : paths)
      if (b.src == a.src && b.dst == a.dst && !(b == a)) parallel.push_back(&b);
    if (parallel.empty()) continue;
    s.add_equation(a, *parallel[rng.index(parallel.size())]);
    ++k;
  }
  return s;
}

// ---- restriction lattice ----

inline std::string key_of(const cdl::Tensor& t) {
  std::string k(t.size() * sizeof(double), '\0');
  std::memcpy(k.data(), t.data(), k.size());
  return k;
}

// Universe: (object, element-bytes) pairs. Returns the intersection of every
// subset that contains the data and is closed under the generator tables.
// table[(obj, key)][g] = (dst obj, key).
using Elem = std::pair<std::string, std::string>;
inline std::set<Elem> smallest_closed_superset(const std::vector<Elem>& universe, const std::set<Elem>& data,
                                               const std::map<Elem, std::vector<Elem>>& images) {
  const std::size_t n = universe.size();
  std::set<Elem> meet(universe.begin(), universe.end());
  for (std::uint64_t mask = 0; mask < (1ull << n); ++mask) {
    std::set<Elem> sub;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) sub.insert(universe[i]);
    if (!std::includes(sub.begin(), sub.end(), data.begin(), data.end())) continue;
    bool closed = true;
    for (const auto& e : sub) {
      auto it = images.find(e);
      if (it == images.end()) continue;
      for (const auto& img : it->second)
        if (!sub.count(img)) {
          closed = false;
          break;
        }
      if (!closed) break;
    }
    if (!closed) continue;
    std::set<Elem> next;
    std::set_intersection(meet.begin(), meet.end(), sub.begin(), sub.end(), std::inserter(next, next.begin()));
    meet = std::move(next);
  }
  return meet;
}

// ---- Adam ----

// Textbook bias-corrected Adam on a flat vector.
struct RefAdam {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  int t = 0;

  void step(std::vector<double>& theta, const std::vector<double>& g) {
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mhat = m[i] / (1 - std::pow(b1, t));
      const double vhat = v[i] / (1 - std::pow(b2, t));
      theta[i] = theta[i] - lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

}  // namespace oracle
