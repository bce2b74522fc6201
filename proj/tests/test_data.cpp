#include <cmath>
#include <fstream>

#include "cdl/data.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace cdl;
namespace fs = std::filesystem;

namespace {

void spit(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("ppm round-trip is within half a grey level") {
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
      const std::size_t w = 1 + rng.index(9), h = 1 + rng.index(9);
      const Tensor px = testing::random_tensor(rng, {3 * w * h}, 0.0, 1.0);
      const Image img = decode_ppm(encode_ppm(px, w, h));
      CHECK(img.width == w);
      CHECK(img.height == h);
      CHECK(max_abs_diff(img.pixels, px) <= 0.5 / 255 + 1e-15);
      // and a second pass is exact
      CHECK(bitwise_equal(decode_ppm(encode_ppm(img.pixels, w, h)).pixels, img.pixels));
    }
  }

  TEST_CASE("ppm header parsing") {
    const std::string body(3 * 2 * 1, '\x80');
    CHECK(decode_ppm("P6\n2 1\n255\n" + body).width == 2);
    CHECK(decode_ppm("P6 # comment\n2 1 255\n" + body).height == 1);
    CHECK_THROWS_AS(decode_ppm("P3\n2 1\n255\n" + body), ValidationError);
    CHECK_THROWS_AS(decode_ppm("P6\n2 1\n65535\n" + body), ValidationError);
    CHECK_THROWS_AS(decode_ppm("P6\n2 1\n255\n" + body.substr(1)), ValidationError);
    CHECK_THROWS_AS(decode_ppm("P6\n0 1\n255\n"), ValidationError);
    CHECK_THROWS_AS(decode_ppm(""), ValidationError);
    CHECK_THROWS_AS(encode_ppm(Tensor::vector({0, 0, 1.5}), 1, 1), ValidationError);
    CHECK_THROWS_AS(encode_ppm(Tensor::vector({0, 0}), 1, 1), ShapeError);
  }

  TEST_CASE("circles geometry decodes colours exactly") {
    Rng rng(8);
    for (std::size_t side : {8u, 16u, 32u}) {
      for (int i = 0; i < 10; ++i) {
        auto grid = [&] { return static_cast<double>(rng.index(256)) / 255.0; };
        const Rgb c{grid(), grid(), grid()}, s{grid(), grid(), grid()};
        const Tensor ab = render_composed(side, c, s);
        CHECK(decode_circle_color(ab, side, true) == c);
        CHECK(decode_stripe_color(ab, side, true) == s);
        CHECK(decode_circle_color(render_circle(side, c), side, true) == c);
        CHECK(decode_stripe_color(render_stripes(side, s), side, true) == s);
        // survives 8-bit storage
        const Image back = decode_ppm(encode_ppm(ab, side, side));
        CHECK(decode_circle_color(back.pixels, side, true) == c);
        CHECK(decode_stripe_color(back.pixels, side, true) == s);
      }
    }
    CHECK(in_circle(16, 8, 8));
    CHECK_FALSE(in_circle(16, 0, 0));
    CHECK(in_stripe(16, 0));
    CHECK_FALSE(in_stripe(16, 2));
  }

  TEST_CASE("finite, latent and product sources") {
    const Source a = Source::finite({Tensor::vector({1, 2}), Tensor::vector({3, 4})});
    const Source l = Source::latent(3);
    CHECK(a.dim() == 2);
    CHECK(a.is_finite());
    CHECK_FALSE(l.is_finite());
    CHECK_THROWS_AS(l.cardinality(), ValidationError);
    const Source p = Source::product(a, Source::finite({Tensor::vector({9}), Tensor::vector({8}), Tensor::vector({7})}));
    CHECK(p.dim() == 3);
    CHECK(p.cardinality() == 6);
    const auto all = p.enumerate();
    REQUIRE(all.size() == 6);
    CHECK(all[0] == Tensor::vector({1, 2, 9}));
    CHECK(all[1] == Tensor::vector({1, 2, 8}));
    CHECK(all[5] == Tensor::vector({3, 4, 7}));
    Rng rng(1);
    const Tensor s = l.sample(rng, 50);
    CHECK(s.shape() == Shape{50, 3});
    for (double v : s.values()) CHECK((v >= 0.0 && v < 1.0));
    CHECK_THROWS_AS(Source::finite({Tensor::vector({1}), Tensor::vector({1, 2})}), ShapeError);
    CHECK_THROWS_AS(Source::finite({}), ValidationError);
  }

  TEST_CASE("product sampling has independent uniform marginals") {
    std::vector<Tensor> left, right;
    for (int i = 0; i < 4; ++i) left.push_back(Tensor::vector({double(i)}));
    for (int j = 0; j < 5; ++j) right.push_back(Tensor::vector({double(j)}));
    const Source p = Source::product(Source::finite(left), Source::finite(right));
    Rng rng(99);
    const std::size_t n = 20000;
    const Tensor s = p.sample(rng, n);
    std::vector<double> count(20, 0.0);
    for (std::size_t r = 0; r < n; ++r) count[static_cast<std::size_t>(s[2 * r] * 5 + s[2 * r + 1])] += 1;
    double chi2 = 0;
    for (double c : count) chi2 += (c - n / 20.0) * (c - n / 20.0) / (n / 20.0);
    // 19 degrees of freedom, p = 0.001
    CHECK(chi2 < 43.82);
  }

  TEST_CASE("dataset generation is deterministic and unpaired") {
    const auto a = gen_circles_dataset(30, 8, 5), b = gen_circles_dataset(30, 8, 5), c = gen_circles_dataset(30, 8, 6);
    REQUIRE(a.circles.size() == 30);
    CHECK(a.stripes.size() == 30);
    CHECK(a.composed.size() == 30);
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(bitwise_equal(a.circles[i], b.circles[i]));
      CHECK(bitwise_equal(a.composed[i], b.composed[i]));
      CHECK(a.composed[i] == render_composed(8, a.composed_colors[i].first, a.composed_colors[i].second));
    }
    bool differs = false, unpaired = false;
    for (std::size_t i = 0; i < 30; ++i) {
      differs |= !(a.circles[i] == c.circles[i]);
      unpaired |= !(a.circle_colors[i] == a.composed_colors[i].first);
    }
    CHECK(differs);
    CHECK(unpaired);
    CHECK_THROWS_AS(gen_circles_dataset(0, 8, 1), ValidationError);
    CHECK_THROWS_AS(gen_circles_dataset(5, 4, 1), ValidationError);
  }

  TEST_CASE("dataset directories: write, load, fingerprint") {
    const auto d1 = testing::temp_dir("data_dir1"), d2 = testing::temp_dir("data_dir2");
    const auto ds = gen_circles_dataset(6, 8, 3);
    write_circles_dir(d1, ds);
    write_circles_dir(d2, ds);
    CHECK(fingerprint_directory(d1) == fingerprint_directory(d2));
    const std::size_t px = 3 * 8 * 8;
    const DatasetFunctor f = load_dataset_dir(d1, {{"A", px}, {"B", px}, {"AB", px}, {"AxB", 2 * px}});
    CHECK(f.at("A").cardinality() == 6);
    CHECK(f.at("AxB").cardinality() == 36);
    CHECK(f.all_finite());
    const auto a_items = f.at("A").enumerate();
    for (std::size_t i = 0; i < 6; ++i) CHECK(max_abs_diff(a_items[i], ds.circles[i]) <= 0.5 / 255);
    const auto gt = read_ground_truth(d1);
    CHECK(gt.size() == 18);

    spit(d2 / "A" / "zz.ppm", "garbage");
    CHECK(fingerprint_directory(d1) != fingerprint_directory(d2));
    CHECK_THROWS_AS(load_dataset_dir(d2, {{"A", px}, {"B", px}, {"AB", px}, {"AxB", 2 * px}}), ValidationError);
    CHECK_THROWS_AS(load_dataset_dir(d1, {{"A", px}, {"B", px}, {"AB", px}, {"AxB", 2 * px}, {"C", 3}}),
                    ValidationError);
    CHECK_THROWS_AS(load_dataset_dir(d1, {{"A", 3}, {"B", px}, {"AB", px}, {"AxB", 2 * px}}), ShapeError);
    CHECK_THROWS_AS(load_dataset_dir(d1 / "missing", {{"A", px}}), ValidationError);
  }

  TEST_CASE("manifest latent lines") {
    const auto d = testing::temp_dir("data_latent");
    spit(d / "manifest.txt", "latent Z 2\n");
    fs::create_directories(d / "X");
    write_ppm(d / "X" / "0.ppm", Tensor(Shape{12}, 0.5), 2, 2);
    const DatasetFunctor f = load_dataset_dir(d, {{"Z", 2}, {"X", 12}});
    CHECK_FALSE(f.at("Z").is_finite());
    CHECK_FALSE(f.all_finite());
    CHECK(f.at("X").cardinality() == 1);
    spit(d / "manifest.txt", "latent Z two\n");
    CHECK_THROWS_AS(load_dataset_dir(d, {{"Z", 2}, {"X", 12}}), ValidationError);
    spit(d / "manifest.txt", "teleport Z 2\n");
    CHECK_THROWS_AS(load_dataset_dir(d, {{"Z", 2}, {"X", 12}}), ValidationError);
  }

  TEST_CASE("task validation") {
    auto s = std::make_shared<Schema>(parse_schema("object A\nobject B\ngen f : A -> B\n"));
    DatasetFunctor d;
    d.set("A", Source::latent(2));
    CHECK_THROWS_AS(validate_task({s, d}, {{"A", Shape{2}}, {"B", Shape{1}}}), ValidationError);
    d.set("B", Source::finite({Tensor::vector({0.5})}));
    CHECK_NOTHROW(validate_task({s, d}, {{"A", Shape{2}}, {"B", Shape{1}}}));
    CHECK_THROWS_AS(validate_task({s, d}, {{"A", Shape{3}}, {"B", Shape{1}}}), ShapeError);
    d.set("C", Source::latent(1));
    CHECK_THROWS_AS(validate_task({s, d}, {{"A", Shape{2}}, {"B", Shape{1}}}), ValidationError);
  }

  TEST_CASE("image dims") {
    CHECK(image_dims(3 * 16 * 16) == std::pair<std::size_t, std::size_t>{16, 16});
    CHECK(image_dims(2 * 3 * 16 * 16, 16) == std::pair<std::size_t, std::size_t>{16, 32});
    CHECK_THROWS(image_dims(7));
  }
}
