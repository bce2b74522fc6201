#include "cdl/schema.hpp"

#include <algorithm>
#include <numeric>
#include <regex>
#include <sstream>
#include <unordered_map>

#include "cdl/tensor.hpp"

namespace cdl {

namespace {

const std::regex kName{"[A-Za-z_][A-Za-z0-9_]*"};

bool valid_name(const std::string& s) { return std::regex_match(s, kName); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string to_string(const Path& p) {
  if (p.edges.empty()) return "id(" + p.src + ")";
  std::string s;
  for (std::size_t i = 0; i < p.edges.size(); ++i) {
    if (i) s += ";";
    s += p.edges[i];
  }
  return s;
}

bool Schema::has_object(std::string_view name) const { return object_index(name).has_value(); }

std::optional<std::size_t> Schema::object_index(std::string_view name) const {
  for (std::size_t i = 0; i < objects_.size(); ++i)
    if (objects_[i] == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> Schema::generator_index(std::string_view name) const {
  for (std::size_t i = 0; i < generators_.size(); ++i)
    if (generators_[i].name == name) return i;
  return std::nullopt;
}

const Generator& Schema::generator(std::string_view name) const {
  auto i = generator_index(name);
  if (!i) throw ValidationError("unknown generator '" + std::string(name) + "'");
  return generators_[*i];
}

void Schema::check_new_name(const std::string& name) const {
  if (!valid_name(name)) throw ValidationError("invalid name '" + name + "'");
  if (has_object(name) || generator_index(name))
    throw ValidationError("duplicate name '" + name + "'");
}

void Schema::add_object(const std::string& name) {
  check_new_name(name);
  objects_.push_back(name);
}

void Schema::add_generator(const std::string& name, const std::string& src, const std::string& dst) {
  check_new_name(name);
  if (!has_object(src)) throw ValidationError("unknown object " + src);
  if (!has_object(dst)) throw ValidationError("unknown object " + dst);
  generators_.push_back(Generator{name, src, dst});
}

void Schema::add_equation(Path lhs, Path rhs) {
  validate(lhs);
  validate(rhs);
  if (lhs.src != rhs.src || lhs.dst != rhs.dst)
    throw ValidationError("equation endpoint mismatch: " + to_string(lhs) + " : " + lhs.src + " -> " +
                          lhs.dst + " but " + to_string(rhs) + " : " + rhs.src + " -> " + rhs.dst);
  equations_.push_back(Equation{std::move(lhs), std::move(rhs)});
}

void Schema::validate(const Path& p) const {
  if (!has_object(p.src)) throw ValidationError("unknown object " + p.src);
  if (!has_object(p.dst)) throw ValidationError("unknown object " + p.dst);
  std::string at = p.src;
  for (const auto& e : p.edges) {
    const Generator& g = generator(e);
    if (g.src != at)
      throw ValidationError("path " + to_string(p) + " is not composable at '" + e + "': expected source " +
                            at + ", got " + g.src);
    at = g.dst;
  }
  if (at != p.dst) throw ValidationError("path " + to_string(p) + " does not end at " + p.dst);
}

Path Schema::make_path(const std::vector<std::string>& edges) const {
  if (edges.empty()) throw ValidationError("an empty edge list needs an object; use id(<object>)");
  Path p{generator(edges.front()).src, generator(edges.back()).dst, edges};
  validate(p);
  return p;
}

Path Schema::parse_path(std::string_view text) const {
  static const std::regex id_re{R"(id\s*\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*\))"};
  const std::string t = trim(text);
  std::smatch m;
  if (std::regex_match(t, m, id_re)) {
    if (!has_object(m[1].str())) throw ValidationError("unknown object " + m[1].str());
    return Path::identity(m[1].str());
  }
  std::vector<std::string> edges;
  std::stringstream ss(t);
  std::string part;
  while (std::getline(ss, part, ';')) {
    std::string name = trim(part);
    if (!valid_name(name)) throw ValidationError("malformed path '" + t + "'");
    if (!generator_index(name)) throw ValidationError("unknown generator '" + name + "'");
    edges.push_back(std::move(name));
  }
  if (edges.empty() || (!t.empty() && t.back() == ';')) throw ValidationError("malformed path '" + t + "'");
  return make_path(edges);
}

std::string Schema::to_text() const {
  std::string out;
  for (const auto& o : objects_) out += "object " + o + "\n";
  for (const auto& g : generators_) out += "gen " + g.name + " : " + g.src + " -> " + g.dst + "\n";
  auto path_text = [](const Path& p) {
    if (p.is_identity()) return "id(" + p.src + ")";
    std::string s;
    for (std::size_t i = 0; i < p.edges.size(); ++i) s += (i ? " ; " : "") + p.edges[i];
    return s;
  };
  for (const auto& e : equations_) out += "eq " + path_text(e.lhs) + " = " + path_text(e.rhs) + "\n";
  return out;
}

bool operator==(const Schema& a, const Schema& b) {
  if (a.objects_ != b.objects_ || a.generators_.size() != b.generators_.size() ||
      a.equations_.size() != b.equations_.size())
    return false;
  for (std::size_t i = 0; i < a.generators_.size(); ++i) {
    const auto &x = a.generators_[i], &y = b.generators_[i];
    if (x.name != y.name || x.src != y.src || x.dst != y.dst) return false;
  }
  for (std::size_t i = 0; i < a.equations_.size(); ++i)
    if (!(a.equations_[i].lhs == b.equations_[i].lhs) || !(a.equations_[i].rhs == b.equations_[i].rhs))
      return false;
  return true;
}

Schema parse_schema(std::string_view text) {
  static const std::regex gen_re{
      R"(gen\s+([A-Za-z_][A-Za-z0-9_]*)\s*:\s*([A-Za-z_][A-Za-z0-9_]*)\s*->\s*([A-Za-z_][A-Za-z0-9_]*))"};
  static const std::regex obj_re{R"(object\s+([A-Za-z_][A-Za-z0-9_]*))"};
  static const std::regex eq_re{R"(eq\s+([^=]+)=([^=]+))"};

  Schema s;
  std::stringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    try {
      std::smatch m;
      if (std::regex_match(line, m, obj_re)) {
        s.add_object(m[1].str());
      } else if (std::regex_match(line, m, gen_re)) {
        s.add_generator(m[1].str(), m[2].str(), m[3].str());
      } else if (std::regex_match(line, m, eq_re)) {
        s.add_equation(s.parse_path(m[1].str()), s.parse_path(m[2].str()));
      } else {
        throw ValidationError("syntax error: '" + line + "'");
      }
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return s;
}

Path compose_paths(const Path& p, const Path& q) {
  if (p.dst != q.src)
    throw ValidationError("cannot compose " + to_string(p) + " : " + p.src + " -> " + p.dst + " with " +
                          to_string(q) + " : " + q.src + " -> " + q.dst);
  Path r{p.src, q.dst, p.edges};
  r.edges.insert(r.edges.end(), q.edges.begin(), q.edges.end());
  return r;
}

namespace {

void enumerate_from(const Schema& s, Path& cur, const std::string& dst, std::size_t max_len,
                    std::vector<Path>& out) {
  if (cur.dst == dst) out.push_back(cur);
  if (cur.length() == max_len) return;
  for (const auto& g : s.generators()) {
    if (g.src != cur.dst) continue;
    const std::string saved = cur.dst;
    cur.edges.push_back(g.name);
    cur.dst = g.dst;
    enumerate_from(s, cur, dst, max_len, out);
    cur.edges.pop_back();
    cur.dst = saved;
  }
}

// Paths as index vectors: key[0] is the source object, the rest generator indices.
using Key = std::vector<std::uint32_t>;

struct KeyHash {
  std::size_t operator()(const Key& k) const {
    std::size_t h = 1469598103934665603ull;
    for (auto v : k) h = (h ^ v) * 1099511628211ull;
    return h;
  }
};

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  // Smaller index becomes the root, so results do not depend on call order.
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

struct PathTable {
  std::vector<Key> keys;
  std::vector<std::uint32_t> dst;
  std::unordered_map<Key, std::size_t, KeyHash> index;

  std::optional<std::size_t> find(const Key& k) const {
    auto it = index.find(k);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
};

struct IndexedSchema {
  std::vector<std::uint32_t> gsrc, gdst;
};

void fill_table(const IndexedSchema& is, Key& cur, std::uint32_t at, std::size_t max_len, PathTable& t) {
  t.index.emplace(cur, t.keys.size());
  t.keys.push_back(cur);
  t.dst.push_back(at);
  if (cur.size() - 1 == max_len) return;
  for (std::uint32_t g = 0; g < is.gsrc.size(); ++g) {
    if (is.gsrc[g] != at) continue;
    cur.push_back(g);
    fill_table(is, cur, is.gdst[g], max_len, t);
    cur.pop_back();
  }
}

Key to_key(const Schema& s, const Path& p) {
  Key k{static_cast<std::uint32_t>(*s.object_index(p.src))};
  for (const auto& e : p.edges) k.push_back(static_cast<std::uint32_t>(*s.generator_index(e)));
  return k;
}

Path from_key(const Schema& s, const Key& k, std::uint32_t dst) {
  Path p{s.objects()[k[0]], s.objects()[dst], {}};
  for (std::size_t i = 1; i < k.size(); ++i) p.edges.push_back(s.generators()[k[i]].name);
  return p;
}

}  // namespace

std::vector<Path> enumerate_paths(const Schema& s, const std::string& src, const std::string& dst,
                                  std::size_t max_len) {
  if (!s.has_object(src)) throw ValidationError("unknown object " + src);
  if (!s.has_object(dst)) throw ValidationError("unknown object " + dst);
  std::vector<Path> out;
  Path cur = Path::identity(src);
  enumerate_from(s, cur, dst, max_len, out);
  return out;
}

std::optional<std::size_t> EquivClasses::class_of(const Path& p) const {
  if (p.length() > bound) return std::nullopt;
  for (std::size_t i = 0; i < classes.size(); ++i)
    for (const auto& q : classes[i])
      if (q == p) return i;
  return std::nullopt;
}

EquivClasses congruence_classes(const Schema& s, std::size_t max_len) {
  IndexedSchema is;
  for (const auto& g : s.generators()) {
    is.gsrc.push_back(static_cast<std::uint32_t>(*s.object_index(g.src)));
    is.gdst.push_back(static_cast<std::uint32_t>(*s.object_index(g.dst)));
  }
  PathTable table;
  for (std::uint32_t o = 0; o < s.objects().size(); ++o) {
    Key cur{o};
    fill_table(is, cur, o, max_len, table);
  }
  const std::size_t n = table.keys.size();
  UnionFind uf(n);

  // Object sitting at position i of path key k (0 = source).
  auto object_at = [&](const Key& k, std::size_t i) { return i == 0 ? k[0] : is.gdst[k[i]]; };

  struct Side {
    std::uint32_t obj;  // endpoint object, used when the side is an identity
    std::vector<std::uint32_t> edges;
  };
  std::vector<std::pair<Side, Side>> rules;
  for (const auto& eq : s.equations()) {
    Key l = to_key(s, eq.lhs), r = to_key(s, eq.rhs);
    Side ls{l[0], {l.begin() + 1, l.end()}}, rs{r[0], {r.begin() + 1, r.end()}};
    rules.emplace_back(ls, rs);
    rules.emplace_back(rs, ls);
  }

  // Seeds: every u;from;v rewritten to u;to;v when both fit in the bound.
  for (std::size_t id = 0; id < n; ++id) {
    const Key& k = table.keys[id];
    const std::size_t len = k.size() - 1;
    for (const auto& [from, to] : rules) {
      const std::size_t fl = from.edges.size();
      if (fl > len || len - fl + to.edges.size() > max_len) continue;
      for (std::size_t pos = 0; pos + fl <= len; ++pos) {
        if (fl == 0) {
          if (object_at(k, pos) != from.obj) continue;
        } else if (!std::equal(from.edges.begin(), from.edges.end(), k.begin() + 1 + pos)) {
          continue;
        }
        Key rewritten(k.begin(), k.begin() + 1 + pos);
        rewritten.insert(rewritten.end(), to.edges.begin(), to.edges.end());
        rewritten.insert(rewritten.end(), k.begin() + 1 + pos + fl, k.end());
        if (auto other = table.find(rewritten)) uf.unite(id, *other);
      }
    }
  }

  // Close under one-edge contexts. If p ~ q and p;e, q;e both fit then
  // anchor;e fits too for the shortest member of the class, so linking every
  // member's extension to the anchor's extension suffices.
  std::vector<std::size_t> length(n);
  for (std::size_t i = 0; i < n; ++i) length[i] = table.keys[i].size() - 1;
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::size_t> anchor(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& a = anchor[uf.find(i)];
      if (a == n || length[i] < length[a]) a = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = anchor[uf.find(i)];
      if (a == i || length[i] == max_len) continue;
      const Key& ki = table.keys[i];
      const Key& ka = table.keys[a];
      for (std::uint32_t g = 0; g < is.gsrc.size(); ++g) {
        if (is.gsrc[g] == table.dst[i]) {
          Key pi = ki, pa = ka;
          pi.push_back(g);
          pa.push_back(g);
          auto x = table.find(pi), y = table.find(pa);
          if (x && y && uf.unite(*x, *y)) changed = true;
        }
        if (is.gdst[g] == ki[0]) {
          Key pi{is.gsrc[g], g}, pa{is.gsrc[g], g};
          pi.insert(pi.end(), ki.begin() + 1, ki.end());
          pa.insert(pa.end(), ka.begin() + 1, ka.end());
          auto x = table.find(pi), y = table.find(pa);
          if (x && y && uf.unite(*x, *y)) changed = true;
        }
      }
    }
  }

  // Deterministic output: per (src, dst) pair, members in lexicographic order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Key &ka = table.keys[a], &kb = table.keys[b];
    if (ka[0] != kb[0]) return ka[0] < kb[0];
    if (table.dst[a] != table.dst[b]) return table.dst[a] < table.dst[b];
    return ka < kb;
  });
  EquivClasses out;
  out.bound = max_len;
  std::unordered_map<std::size_t, std::size_t> class_slot;
  for (std::size_t id : order) {
    const std::size_t root = uf.find(id);
    auto [it, fresh] = class_slot.emplace(root, out.classes.size());
    if (fresh) out.classes.emplace_back();
    out.classes[it->second].push_back(from_key(s, table.keys[id], table.dst[id]));
  }
  return out;
}

std::string_view to_string(Answer a) {
  switch (a) {
    case Answer::yes: return "yes";
    case Answer::no: return "no";
    case Answer::unknown: return "unknown";
  }
  return "unknown";
}

Answer paths_equivalent(const Schema& s, const Path& p, const Path& q, std::size_t max_len) {
  s.validate(p);
  s.validate(q);
  if (p.src != q.src || p.dst != q.dst)
    throw ValidationError("paths " + to_string(p) + " and " + to_string(q) + " are not parallel");
  if (p == q) return Answer::yes;
  if (p.length() > max_len || q.length() > max_len) return Answer::unknown;
  const EquivClasses ec = congruence_classes(s, max_len);
  if (ec.class_of(p) == ec.class_of(q)) return Answer::yes;
  if (s.equations().empty()) return Answer::no;
  const bool length_preserving = std::all_of(s.equations().begin(), s.equations().end(), [](const Equation& e) {
    return e.lhs.length() == e.rhs.length();
  });
  if (length_preserving) return Answer::no;
  return Answer::unknown;
}

}  // namespace cdl
