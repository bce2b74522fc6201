#pragma once

// Per-object sample sources (the dataset functor), the synthetic circles /
// stripes generator, binary PPM I/O and dataset directories.
//
// Samples are flattened rank-1 tensors; batches are [n, dim]. Images are
// row-major interleaved RGB in [0, 1], exactly the PPM byte order.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cdl/rng.hpp"
#include "cdl/schema.hpp"
#include "cdl/tensor.hpp"

namespace cdl {

class Source {
 public:
  struct Finite {
    std::vector<Tensor> items;
    std::size_t dim;
  };
  // Uniform on [0, 1]^dim. dim 0 is the unit of products.
  struct Latent {
    std::size_t dim;
  };
  struct Product {
    std::shared_ptr<const Source> left;
    std::shared_ptr<const Source> right;
  };

  static Source finite(std::vector<Tensor> items);
  static Source latent(std::size_t dim) { return Source(Latent{dim}); }
  static Source product(Source left, Source right);

  std::size_t dim() const;
  // Finite, or a product of finite sources.
  bool is_finite() const;
  // Number of elements of a finite source (product: |left| * |right|).
  std::size_t cardinality() const;
  // Elements of a finite source in order (product: left-major).
  std::vector<Tensor> enumerate() const;

  // Finite: uniform with replacement. Latent: fresh uniforms, row by row.
  // Product: left batch, then right batch, concatenated per row.
  Tensor sample(Rng& rng, std::size_t n) const;

  const std::variant<Finite, Latent, Product>& repr() const { return repr_; }

 private:
  explicit Source(std::variant<Finite, Latent, Product> r) : repr_(std::move(r)) {}
  std::variant<Finite, Latent, Product> repr_;
};

Source product_dataset(Source left, Source right);

class DatasetFunctor {
 public:
  void set(const std::string& object, Source s);
  bool contains(std::string_view object) const;
  const Source& at(std::string_view object) const;
  const std::map<std::string, Source>& sources() const { return sources_; }
  bool all_finite() const;

 private:
  std::map<std::string, Source> sources_;
};

// [n, dim] batch from the object's source.
Tensor sample_batch(const DatasetFunctor& d, std::string_view object, std::size_t n, Rng& rng);

struct TaskSpec {
  std::shared_ptr<const Schema> schema;
  DatasetFunctor dataset;
};

// Sources must exist for exactly the schema's objects, with matching dims.
void validate_task(const TaskSpec& task, const std::map<std::string, Shape>& object_shapes);

// ---- circles / stripes ----

struct Rgb {
  double r = 0, g = 0, b = 0;
  double operator[](std::size_t c) const { return c == 0 ? r : (c == 1 ? g : b); }
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Geometry: circle centred in the image with radius side/4; horizontal
// stripes with period side/4 rows, the first half of each period coloured.
bool in_circle(std::size_t side, std::size_t x, std::size_t y);
bool in_stripe(std::size_t side, std::size_t y);

Tensor render_circle(std::size_t side, Rgb circle);
Tensor render_stripes(std::size_t side, Rgb stripe);
Tensor render_composed(std::size_t side, Rgb circle, Rgb stripe);

// Mean colour over the circle's pixels / over stripe pixels outside the
// circle. With quantize, rounds each channel to the nearest k/255.
Rgb decode_circle_color(const Tensor& img, std::size_t side, bool quantize = false);
Rgb decode_stripe_color(const Tensor& img, std::size_t side, bool quantize = false);

struct CirclesDataset {
  std::size_t side = 0;
  std::vector<Tensor> circles;   // A
  std::vector<Tensor> stripes;   // B
  std::vector<Tensor> composed;  // AB
  std::vector<Rgb> circle_colors;
  std::vector<Rgb> stripe_colors;
  std::vector<std::pair<Rgb, Rgb>> composed_colors;  // (circle, stripe)
};

// Colours are uniform over the 8-bit grid {0, 1/255, ..., 1} per channel and
// drawn from independent streams for A, B and AB, so the sets are unpaired.
CirclesDataset gen_circles_dataset(std::size_t n_per_set, std::size_t img_side, std::uint64_t seed);

// ---- PPM (binary P6, maxval 255) ----

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  Tensor pixels;  // [3 * width * height] in [0, 1]
};

// Byte = floor(255 * v + 0.5). Values outside [0, 1] are rejected.
std::string encode_ppm(const Tensor& pixels, std::size_t width, std::size_t height);
Image decode_ppm(std::string_view bytes);
void write_ppm(const std::filesystem::path& path, const Tensor& pixels, std::size_t width, std::size_t height);
Image read_ppm(const std::filesystem::path& path);

// Width and height for a flattened RGB vector: a square if possible,
// otherwise a vertical stack of `side`-wide squares.
std::pair<std::size_t, std::size_t> image_dims(std::size_t numel, std::size_t side_hint = 0);

// ---- dataset directories ----
//
//   <dir>/<object>/*.ppm          finite set, files in name order
//   <dir>/manifest.txt            optional; lines
//       latent <object> <dim>
//       product <object> <left-object> <right-object>

DatasetFunctor load_dataset_dir(const std::filesystem::path& dir, const std::map<std::string, std::size_t>& object_dims);

// Writes A/, B/, AB/, manifest.txt (with "product AxB A B") and a hidden
// .ground_truth.csv holding the colours behind every file.
void write_circles_dir(const std::filesystem::path& dir, const CirclesDataset& data);

struct GroundTruthRow {
  std::string set;
  std::string file;
  Rgb circle;
  Rgb stripe;
};
std::vector<GroundTruthRow> read_ground_truth(const std::filesystem::path& dir);

// Content hash of every regular file under dir (relative path + bytes), hex.
std::string fingerprint_directory(const std::filesystem::path& dir);

}  // namespace cdl
