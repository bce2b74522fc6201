#include <cmath>

#include "analysischecks.hpp"
#include "cdl/analysis.hpp"
#include "cdl/presets.hpp"
#include "cdl/train.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cdl;

namespace {

std::vector<Tensor> random_points(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(testing::random_tensor(rng, {dim}, -3, 3));
  return out;
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("residuals: exact model is zero, random init is not") {
    const auto [arch, exact] = analysischecks::inverse_pair(0.0);
    DatasetFunctor d;
    d.set("A", Source::latent(2));
    d.set("B", Source::latent(2));
    const TaskSpec task{arch->schema_ptr(), d};
    const ResidualReport r = residual_report(ModelInstance(arch, exact), task, 32, 1);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].equation == "f;g = id(A)");
    for (const auto& row : r.rows) {
      CHECK(row.count == 32);
      CHECK(row.mean == 0.0);
      CHECK(row.max == 0.0);
    }
    const ModelInstance rnd(arch, init_params(*arch, 3, 0.5));
    const ResidualReport r2 = residual_report(rnd, task, 32, 1);
    for (const auto& row : r2.rows) {
      CHECK(row.mean > 0.0);
      CHECK(row.max >= row.mean);
    }
    // same seed, same numbers
    CHECK(residual_report(rnd, task, 32, 1).rows[1].mean == r2.rows[1].mean);
  }

  TEST_CASE("residual mean equals the training path-equation loss on the same batch") {
    const auto [arch, p] = analysischecks::inverse_pair(0.0);
    const ModelInstance m(arch, init_params(*arch, 9, 0.7));
    Rng rng(2);
    const Tensor batch = testing::random_tensor(rng, {10, 2});
    for (const auto& eq : arch->schema().equations())
      CHECK(std::abs(residual_on_batch(m, eq, batch).mean - path_eq_value(m, eq, batch)) <= 1e-12);
  }

  TEST_CASE("restriction: GAN-shaped example") {
    auto schema = std::make_shared<Schema>(parse_schema("object Z\nobject X\ngen h : Z -> X\n"));
    auto arch = std::make_shared<ArchAssignment>(
        schema, std::map<std::string, Shape>{{"Z", Shape{1}}, {"X", Shape{1}}},
        std::map<std::string, LayerSpec>{{"h", LayerSpec::mlp({1, 1}, Activation::linear, Activation::linear)}});
    ParamBundle p;
    p.set("h", Tensor::vector({2, 1}));  // h(z) = 2z + 1
    DatasetFunctor d;
    d.set("Z", Source::finite({Tensor::vector({0}), Tensor::vector({3})}));
    d.set("X", Source::finite({Tensor::vector({7})}));  // equals h(3): deduplicated
    const RestrictionSets r = restriction_closure(ModelInstance(arch, p), TaskSpec{schema, d});
    CHECK(r.elements.at("Z").size() == 2);
    REQUIRE(r.elements.at("X").size() == 2);
    CHECK(r.elements.at("X")[0] == Tensor::vector({7}));
    CHECK(r.elements.at("X")[1] == Tensor::vector({1}));
    CHECK(r.provenance.at("X")[1].generator == "h");
    CHECK(r.provenance.at("X")[1].from_index == 0);
    CHECK(r.minimal);

    d.set("X", Source::finite({Tensor::vector({5})}));
    const RestrictionSets r2 = restriction_closure(ModelInstance(arch, p), TaskSpec{schema, d});
    CHECK(r2.elements.at("X").size() == 3);  // {x1, h(z1), h(z2)}

    DatasetFunctor lat = d;
    lat.set("Z", Source::latent(1));
    CHECK_THROWS_AS(restriction_closure(ModelInstance(arch, p), TaskSpec{schema, lat}), ValidationError);
    CHECK_THROWS_AS(restriction_closure(ModelInstance(arch, p), TaskSpec{schema, d}, 1), ValidationError);
  }

  TEST_CASE("restriction: no generators gives the dataset itself") {
    auto schema = std::make_shared<Schema>(parse_schema("object A\n"));
    auto arch = std::make_shared<ArchAssignment>(schema, std::map<std::string, Shape>{{"A", Shape{1}}},
                                                 std::map<std::string, LayerSpec>{});
    DatasetFunctor d;
    d.set("A", Source::finite({Tensor::vector({1}), Tensor::vector({2}), Tensor::vector({1})}));
    const RestrictionSets r = restriction_closure(ModelInstance(arch, {}), TaskSpec{schema, d});
    CHECK(r.elements.at("A").size() == 2);
    CHECK(r.rounds == 1);  // the dataset pass itself
  }

  TEST_CASE("restriction: least closed superset on random boolean models") {
    Rng rng(31);
    for (int i = 0; i < 40; ++i) {
      const auto t = analysischecks::restriction_trial(rng);
      CHECK(t.matches);
      CHECK(t.provenance_ok);
      CHECK(t.closed);
      CHECK(t.universe <= 12);
    }
  }

  TEST_CASE("restriction: the cap stops growth and clears the minimal flag") {
    auto schema = std::make_shared<Schema>(parse_schema("object A\ngen s : A -> A\n"));
    auto arch = std::make_shared<ArchAssignment>(
        schema, std::map<std::string, Shape>{{"A", Shape{1}}},
        std::map<std::string, LayerSpec>{{"s", LayerSpec::mlp({1, 1}, Activation::linear, Activation::linear)}});
    ParamBundle p;
    p.set("s", Tensor::vector({1, 1}));  // successor: an infinite orbit
    DatasetFunctor d;
    d.set("A", Source::finite({Tensor::vector({0})}));
    const RestrictionSets r = restriction_closure(ModelInstance(arch, p), TaskSpec{schema, d}, 25);
    CHECK(r.elements.at("A").size() == 25);
    CHECK_FALSE(r.minimal);
    // different parameters, different sets
    p.set("s", Tensor::vector({0, 5}));
    const RestrictionSets r2 = restriction_closure(ModelInstance(arch, p), TaskSpec{schema, d}, 25);
    CHECK(r2.elements.at("A").size() == 2);
    CHECK(r2.minimal);
  }

  TEST_CASE("factorization: exact inverses certify, perturbed ones give a counterexample") {
    Rng rng(12);
    std::map<std::string, std::vector<Tensor>> pts{{"A", random_points(rng, 20, 2)}, {"B", random_points(rng, 20, 2)}};
    {
      const auto [arch, p] = analysischecks::inverse_pair(0.0);
      const auto r = factorization_check(ModelInstance(arch, p), pts, 1e-6, 4);
      CHECK(r.certified);
      CHECK(r.max_deviation == 0.0);
      CHECK_FALSE(r.counterexample);
      // {id(A), f;g, f;g;f;g}, {id(B), g;f, g;f;g;f}: 3 pairs each; {f, f;g;f}, {g, g;f;g}: 1 each
      CHECK(r.pairs_checked == 8);
    }
    {
      const auto [arch, p] = analysischecks::inverse_pair(1e-3);
      const ModelInstance m(arch, p);
      const auto r = factorization_check(m, pts, 1e-6, 4);
      CHECK_FALSE(r.certified);
      REQUIRE(r.counterexample);
      const auto& c = *r.counterexample;
      CHECK(c.deviation > 1e-6);
      CHECK(c.deviation == max_abs_diff(eval_path(m, c.lhs, c.point), eval_path(m, c.rhs, c.point)));
      CHECK(bitwise_equal(c.point, pts.at(c.lhs.src)[c.point_index]));
      CHECK(factorization_check(m, pts, std::numeric_limits<double>::infinity(), 4).certified);
      CHECK_THROWS_AS(factorization_check(m, pts, 1e-6, 1), ValidationError);
    }
    {
      auto schema = std::make_shared<Schema>(parse_schema("object A\ngen f : A -> A\n"));
      auto arch = std::make_shared<ArchAssignment>(
          schema, std::map<std::string, Shape>{{"A", Shape{2}}},
          std::map<std::string, LayerSpec>{{"f", LayerSpec::mlp({2, 2}, Activation::tanh, Activation::tanh)}});
      const auto r = factorization_check(ModelInstance(arch, init_params(*arch, 1, 1.0)), {{"A", pts.at("A")}}, 1e-6, 3);
      CHECK(r.certified);
      CHECK(r.pairs_checked == 0);
    }
  }

  TEST_CASE("circles metrics: a constant grey model is off by about a quarter") {
    const Preset pre = get_preset("circles");
    const Experiment e = build_experiment(pre.schema_text, pre.config_text);
    ParamBundle zero;
    const ParamBundle shapes = init_params(*e.arch, 0, 1.0);
    for (const auto& [name, t] : shapes.entries()) zero.set(name, Tensor(t.shape(), 0.0));
    const auto pairs = circles_test_pairs(400, 0);
    CHECK(pairs.size() == 400);
    const CirclesReport r = eval_circles_metrics(ModelInstance(e.arch, zero), pairs, kCirclesSide);
    // E|U - 1/2| for U uniform on the 8-bit grid = 64/255
    for (double v : r.decomposition.mae) CHECK(std::abs(v - 64.0 / 255) < 0.02);
    for (double v : r.composition.mae) CHECK(std::abs(v - 64.0 / 255) < 0.02);
    CHECK(r.decomposition.path == "d");
    CHECK(r.decomposition.count == 400);
    // held-out pairs are reproducible and on the grid
    const auto again = circles_test_pairs(400, 0);
    CHECK(again == pairs);
    for (const auto& [c, s] : pairs)
      for (std::size_t k = 0; k < 3; ++k) CHECK(std::round(c[k] * 255) == c[k] * 255);
    CHECK_THROWS_AS(eval_circles_metrics(ModelInstance(e.arch, zero), pairs, 8), ShapeError);
  }

  TEST_CASE("reports") {
    const auto [arch, p] = analysischecks::inverse_pair(1e-3);
    const ModelInstance m(arch, p);
    Rng rng(4);
    const auto r = factorization_check(m, {{"A", random_points(rng, 3, 2)}, {"B", random_points(rng, 3, 2)}}, 1e-6, 2);
    const std::string text = format_report(r, 1e-6);
    CHECK(text.find("counterexample") != std::string::npos);
    const auto dir = testing::temp_dir("reports");
    DatasetFunctor d;
    d.set("A", Source::latent(2));
    d.set("B", Source::latent(2));
    write_residuals_csv(dir / "r.csv", residual_report(m, TaskSpec{arch->schema_ptr(), d}, 4, 0));
    CHECK(std::filesystem::file_size(dir / "r.csv") > 0);
  }
}
