#pragma once

// Presentations of categories: a directed multigraph of objects and
// generating edges plus equations between parallel paths. Equivalence of
// paths is decided up to a length bound with a three-valued answer, since the
// word problem for presented categories is undecidable in general.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cdl {

struct Generator {
  std::string name;
  std::string src;
  std::string dst;
};

// A morphism of the free category. Edges are in diagrammatic order: the
// first edge leaves src. No edges means the identity on src (src == dst).
struct Path {
  std::string src;
  std::string dst;
  std::vector<std::string> edges;

  static Path identity(const std::string& object) { return Path{object, object, {}}; }
  bool is_identity() const { return edges.empty(); }
  std::size_t length() const { return edges.size(); }
  friend bool operator==(const Path&, const Path&) = default;
};

// "f;g;h" or "id(A)".
std::string to_string(const Path& p);

struct Equation {
  Path lhs;
  Path rhs;
};

class Schema {
 public:
  Schema() = default;

  // Builders validate eagerly and throw ValidationError.
  void add_object(const std::string& name);
  void add_generator(const std::string& name, const std::string& src, const std::string& dst);
  void add_equation(Path lhs, Path rhs);

  const std::vector<std::string>& objects() const { return objects_; }
  const std::vector<Generator>& generators() const { return generators_; }
  const std::vector<Equation>& equations() const { return equations_; }

  bool has_object(std::string_view name) const;
  std::optional<std::size_t> object_index(std::string_view name) const;
  std::optional<std::size_t> generator_index(std::string_view name) const;
  const Generator& generator(std::string_view name) const;

  // Path from a list of generator names; checks composability.
  Path make_path(const std::vector<std::string>& edges) const;
  // Parses "f ; g" or "id(A)" against this schema.
  Path parse_path(std::string_view text) const;
  // Throws unless every edge exists and consecutive edges compose.
  void validate(const Path& p) const;

  // Canonical text form; parse_schema(to_text()) reproduces the schema.
  std::string to_text() const;

  friend bool operator==(const Schema&, const Schema&);

 private:
  void check_new_name(const std::string& name) const;

  std::vector<std::string> objects_;
  std::vector<Generator> generators_;
  std::vector<Equation> equations_;
};

// Errors carry "line N: ..." for syntax problems.
Schema parse_schema(std::string_view text);

Path compose_paths(const Path& p, const Path& q);

// All paths src -> dst of length <= max_len in lexicographic order of
// generator declaration indices (the identity, if any, comes first).
std::vector<Path> enumerate_paths(const Schema& s, const std::string& src, const std::string& dst,
                                  std::size_t max_len);

struct EquivClasses {
  std::size_t bound = 0;
  // Each class is endpoint-homogeneous and sorted in enumeration order.
  // Classes are ordered by object pair (declaration order) then by first member.
  std::vector<std::vector<Path>> classes;

  // Index of the class containing p, or nullopt if p is longer than bound.
  std::optional<std::size_t> class_of(const Path& p) const;
};

// Congruence generated by the equations on the finite set of all paths of
// length <= max_len: seeded with every u;lhs;v ~ u;rhs;v whose two sides fit,
// then closed under one-edge pre/post-composition until a fixed point.
EquivClasses congruence_classes(const Schema& s, std::size_t max_len);

enum class Answer { yes, no, unknown };
std::string_view to_string(Answer a);

// yes: same bounded class. no: separated and the bound provably suffices
// (no equations, or all equations length-preserving and bound >= both
// lengths). unknown otherwise.
Answer paths_equivalent(const Schema& s, const Path& p, const Path& q, std::size_t max_len);

}  // namespace cdl
