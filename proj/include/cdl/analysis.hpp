#pragma once

// Post-hoc diagnostics on a trained model: equation residuals, an empirical
// check that the model factors through the bounded quotient, the image
// closure of the dataset, and colour recovery on the circles task.

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdl/data.hpp"
#include "cdl/para.hpp"
#include "cdl/schema.hpp"

namespace cdl {

struct ResidualRow {
  std::string equation;  // "lhs = rhs"
  double mean = 0;       // mean over samples of the per-sample L1 distance
  double max = 0;
  std::size_t count = 0;
};

struct ResidualReport {
  std::vector<ResidualRow> rows;  // schema equation order
};

// n_eval samples per equation from the "heldout" substream of seed.
ResidualReport residual_report(const ModelInstance& model, const TaskSpec& task, std::size_t n_eval,
                               std::uint64_t seed);

// The same statistics on a given [n, dim] batch.
ResidualRow residual_on_batch(const ModelInstance& model, const Equation& eq, const Tensor& batch);

struct Counterexample {
  Path lhs;
  Path rhs;
  std::size_t point_index = 0;
  Tensor point;
  double deviation = 0;  // max abs difference of the two outputs
};

// An eps-approximate witness on finite data, not a proof.
struct FactorizationResult {
  bool certified = false;
  std::size_t pairs_checked = 0;
  std::size_t evaluations = 0;
  double max_deviation = 0;
  std::optional<Counterexample> counterexample;
};

FactorizationResult factorization_check(const ModelInstance& model, const std::map<std::string, std::vector<Tensor>>& points,
                                        double eps, std::size_t bound);

struct Provenance {
  enum class Kind { dataset, image };
  Kind kind = Kind::dataset;
  std::string generator;  // image only
  std::string from_object;
  std::size_t from_index = 0;  // index in the source object's set (dataset: item index)
};

struct RestrictionSets {
  std::map<std::string, std::vector<Tensor>> elements;
  std::map<std::string, std::vector<Provenance>> provenance;
  std::size_t rounds = 0;
  // False when the per-object cap stopped the closure early.
  bool minimal = true;
};

// Image closure of the finite dataset under every generator, with exact
// bitwise deduplication. cap bounds the size of every object's set; a dataset
// larger than cap is rejected.
RestrictionSets restriction_closure(const ModelInstance& model, const TaskSpec& task, std::size_t cap = 1000);

// ---- circles colour recovery ----

struct DirectionMetrics {
  std::string path;
  std::size_t count = 0;
  double mae[3] = {0, 0, 0};  // per RGB channel
  double max_mae() const { return std::max({mae[0], mae[1], mae[2]}); }
};

struct CirclesReport {
  DirectionMetrics composition;    // c : A x B -> AB
  DirectionMetrics decomposition;  // d : AB -> A x B
};

// Held-out (circle, stripe) colour pairs on the 8-bit grid.
std::vector<std::pair<Rgb, Rgb>> circles_test_pairs(std::size_t n, std::uint64_t seed);

// Outputs are clamped to [0, 1] and decoded by mean colour over the circle /
// stripe masks; each direction averages over both recovered colours.
CirclesReport eval_circles_metrics(const ModelInstance& model, const std::vector<std::pair<Rgb, Rgb>>& pairs,
                                   std::size_t side, const std::string& compose = "c",
                                   const std::string& decompose = "d");

// ---- reports ----

void write_residuals_csv(const std::filesystem::path& path, const ResidualReport& r);
void write_restriction_csv(const std::filesystem::path& path, const Schema& schema, const RestrictionSets& r);
std::string format_report(const ResidualReport& r);
std::string format_report(const FactorizationResult& r, double eps);
std::string format_report(const Schema& schema, const RestrictionSets& r);
std::string format_report(const CirclesReport& r);

}  // namespace cdl
