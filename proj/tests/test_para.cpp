#include "cdl/para.hpp"
#include "doctest.h"
#include "paralaws.hpp"

using namespace cdl;

TEST_SUITE("para") {
  TEST_CASE("composition laws on random stacks") {
    Rng rng(21);
    for (int i = 0; i < 20; ++i) {
      const auto r = paralaws::check_stack(rng);
      CHECK(r.ok);
      CHECK(r.max_dev <= 1e-12);
    }
  }

  TEST_CASE("mlp parameter count and bias layout") {
    const LayerSpec s = LayerSpec::mlp({3, 4, 2}, Activation::relu, Activation::sigmoid);
    CHECK(s.param_count() == 3 * 4 + 4 + 4 * 2 + 2);
    CHECK(build_param_morphism(s).param_count == s.param_count());
    std::size_t biases = 0;
    for (std::size_t i = 0; i < s.param_count(); ++i) biases += s.is_bias(i);
    CHECK(biases == 6);
    CHECK_FALSE(s.is_bias(0));
    CHECK(s.is_bias(12));
    CHECK(s.is_bias(15));
    CHECK_FALSE(s.is_bias(16));
    CHECK(s.to_text() == "mlp 3 4 2 relu sigmoid");
  }

  TEST_CASE("a one-layer mlp is an affine map") {
    const LayerSpec s = LayerSpec::mlp({2, 2}, Activation::relu, Activation::linear);
    // W = [[1,2],[3,4]] row-major, then b = [10, 20]
    const auto y = paralaws::run(build_param_morphism(s), {1, 2, 3, 4, 10, 20}, Tensor::matrix(1, 2, {1, -1}));
    CHECK(y == Tensor::matrix(1, 2, {1 - 3 + 10, 2 - 4 + 20}));
  }

  TEST_CASE("layer spec parsing") {
    const LayerSpec g = parse_layer_spec({"mlp", "3", "8", "2", "tanh", "linear"}, false);
    CHECK(g.widths == std::vector<std::size_t>{3, 8, 2});
    CHECK(g.hidden == Activation::tanh);
    const LayerSpec d = parse_layer_spec({"mlp", "2", "16", "1", "leaky_relu"}, true);
    CHECK(d.output == Activation::linear);
    CHECK_THROWS_AS(parse_layer_spec({"mlp", "2", "16", "2", "leaky_relu"}, true), ValidationError);
    CHECK_THROWS_AS(parse_layer_spec({"mlp", "2", "x", "1", "relu", "relu"}, false), ValidationError);
    CHECK_THROWS_AS(parse_layer_spec({"conv", "2"}, false), ValidationError);
    CHECK_THROWS_AS(parse_layer_spec({"mlp", "2", "0", "1", "relu", "relu"}, false), ValidationError);
    CHECK_THROWS_AS(parse_layer_spec({"mlp", "2", "3", "1", "swish", "relu"}, false), ValidationError);
    const LayerSpec p = parse_layer_spec({"proj", "6", "2", "3"}, false);
    CHECK(p.param_count() == 0);
    CHECK(p.to_text() == "proj 6 2 3");
    CHECK_THROWS_AS(parse_layer_spec({"proj", "6", "4", "3"}, false), ValidationError);
  }

  TEST_CASE("projection selects a column range") {
    const ParamMorphism m = build_param_morphism(LayerSpec::projection(5, 1, 3));
    CHECK(m.param_count == 0);
    const auto y = paralaws::run(m, {}, Tensor::matrix(2, 5, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9}));
    CHECK(y == Tensor::matrix(2, 3, {1, 2, 3, 6, 7, 8}));
  }

  TEST_CASE("composition rejects mismatched shapes") {
    const auto f = build_param_morphism(LayerSpec::mlp({2, 3}, Activation::relu, Activation::relu));
    CHECK_THROWS_AS(para_compose(f, f), ShapeError);
  }

  TEST_CASE("arch assignment validation") {
    auto s = std::make_shared<Schema>(parse_schema("object A\nobject B\ngen f : A -> B\n"));
    const auto mlp = LayerSpec::mlp({2, 3}, Activation::relu, Activation::relu);
    CHECK_NOTHROW(ArchAssignment(s, {{"A", Shape{2}}, {"B", Shape{3}}}, {{"f", mlp}}));
    CHECK_THROWS_AS(ArchAssignment(s, {{"A", Shape{2}}, {"B", Shape{4}}}, {{"f", mlp}}), ShapeError);
    CHECK_THROWS_AS(ArchAssignment(s, {{"A", Shape{2}}}, {{"f", mlp}}), ValidationError);
    CHECK_THROWS_AS(ArchAssignment(s, {{"A", Shape{2}}, {"B", Shape{3}}}, {}), ValidationError);
    CHECK_THROWS_AS(ArchAssignment(s, {{"A", Shape{2}}, {"B", Shape{3}}}, {{"f", mlp}, {"g", mlp}}), ValidationError);
    // multi-axis shapes are flattened
    CHECK_NOTHROW(ArchAssignment(s, {{"A", Shape{1, 2}}, {"B", Shape{3}}}, {{"f", mlp}}));
  }

  TEST_CASE("init is deterministic, per-generator, with zero biases") {
    auto s = std::make_shared<Schema>(parse_schema("object A\ngen f : A -> A\ngen g : A -> A\n"));
    const auto mlp = LayerSpec::mlp({2, 4, 2}, Activation::relu, Activation::linear);
    auto arch = std::make_shared<ArchAssignment>(s, std::map<std::string, Shape>{{"A", Shape{2}}},
                                                 std::map<std::string, LayerSpec>{{"f", mlp}, {"g", mlp}});
    const ParamBundle a = init_params(*arch, 5, 0.1), b = init_params(*arch, 5, 0.1), c = init_params(*arch, 6, 0.1);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    CHECK_FALSE(bitwise_equal(a.at("f"), a.at("g")));
    for (std::size_t i = 0; i < mlp.param_count(); ++i)
      if (mlp.is_bias(i)) CHECK(a.at("f")[i] == 0.0);

    // adding a generator leaves existing draws alone
    auto s2 = std::make_shared<Schema>(parse_schema("object A\ngen f : A -> A\ngen g : A -> A\ngen h : A -> A\n"));
    auto arch2 = std::make_shared<ArchAssignment>(
        s2, std::map<std::string, Shape>{{"A", Shape{2}}},
        std::map<std::string, LayerSpec>{{"f", mlp}, {"g", mlp}, {"h", mlp}});
    CHECK(bitwise_equal(init_params(*arch2, 5, 0.1).at("f"), a.at("f")));
  }

  TEST_CASE("model instance checks parameter shapes; object map ignores parameters") {
    auto s = std::make_shared<Schema>(parse_schema("object A\nobject B\ngen f : A -> B\ngen p : B -> A\n"));
    auto arch = std::make_shared<ArchAssignment>(
        s, std::map<std::string, Shape>{{"A", Shape{2}}, {"B", Shape{4}}},
        std::map<std::string, LayerSpec>{{"f", LayerSpec::mlp({2, 4}, Activation::relu, Activation::linear)},
                                         {"p", LayerSpec::projection(4, 1, 2)}});
    ParamBundle ok = init_params(*arch, 1, 0.5);
    CHECK(ok.entries().size() == 1);  // the projection has no entry
    CHECK_NOTHROW(instantiate(arch, ok));
    ParamBundle bad = ok;
    bad.set("f", Tensor(Shape{3}));
    CHECK_THROWS_AS(instantiate(arch, bad), ShapeError);
    ParamBundle extra = ok;
    extra.set("p", Tensor(Shape{1}));
    CHECK_THROWS_AS(instantiate(arch, extra), ShapeError);
    CHECK_THROWS_AS(instantiate(arch, ParamBundle{}), ShapeError);

    const auto m1 = instantiate(arch, ok), m2 = instantiate(arch, init_params(*arch, 2, 3.0));
    CHECK(m1.object_map() == m2.object_map());
    const Tensor x = Tensor::vector({0.5, -1});
    CHECK(eval_path(m1, s->parse_path("f"), x).shape() == Shape{4});
    CHECK(eval_path(m1, s->parse_path("f;p"), x).shape() == Shape{2});
    CHECK_THROWS_AS(eval_path(m1, s->parse_path("f"), Tensor::vector({1, 2, 3})), ShapeError);
  }
}
