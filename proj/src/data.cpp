#include "cdl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cdl {

namespace fs = std::filesystem;

Source Source::finite(std::vector<Tensor> items) {
  if (items.empty()) throw ValidationError("a finite dataset needs at least one element");
  const std::size_t dim = items.front().size();
  for (auto& t : items) {
    if (t.size() != dim)
      throw ShapeError("finite dataset elements differ in size: " + std::to_string(dim) + " vs " +
                       std::to_string(t.size()));
    if (t.rank() != 1) t = std::move(t).reshaped(Shape{dim});
  }
  return Source(Finite{std::move(items), dim});
}

Source Source::product(Source left, Source right) {
  return Source(Product{std::make_shared<const Source>(std::move(left)), std::make_shared<const Source>(std::move(right))});
}

Source product_dataset(Source left, Source right) { return Source::product(std::move(left), std::move(right)); }

std::size_t Source::dim() const {
  return std::visit(
      [](const auto& r) -> std::size_t {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, Finite>) return r.dim;
        else if constexpr (std::is_same_v<T, Latent>) return r.dim;
        else return r.left->dim() + r.right->dim();
      },
      repr_);
}

bool Source::is_finite() const {
  if (std::holds_alternative<Finite>(repr_)) return true;
  if (const auto* p = std::get_if<Product>(&repr_)) {
    auto finite_or_unit = [](const Source& s) { return s.is_finite() || s.dim() == 0; };
    return finite_or_unit(*p->left) && finite_or_unit(*p->right) && dim() > 0;
  }
  return false;
}

std::size_t Source::cardinality() const {
  if (!is_finite()) throw ValidationError("latent sources have no finite cardinality");
  if (const auto* f = std::get_if<Finite>(&repr_)) return f->items.size();
  const auto& p = std::get<Product>(repr_);
  const std::size_t l = p.left->dim() ? p.left->cardinality() : 1;
  const std::size_t r = p.right->dim() ? p.right->cardinality() : 1;
  return l * r;
}

std::vector<Tensor> Source::enumerate() const {
  if (!is_finite()) throw ValidationError("cannot enumerate a latent source");
  if (const auto* f = std::get_if<Finite>(&repr_)) return f->items;
  const auto& p = std::get<Product>(repr_);
  if (p.left->dim() == 0) return p.right->enumerate();
  if (p.right->dim() == 0) return p.left->enumerate();
  const auto ls = p.left->enumerate();
  const auto rs = p.right->enumerate();
  std::vector<Tensor> out;
  out.reserve(ls.size() * rs.size());
  for (const auto& l : ls)
    for (const auto& r : rs) {
      std::vector<double> v(l.values().begin(), l.values().end());
      v.insert(v.end(), r.values().begin(), r.values().end());
      out.emplace_back(Shape{v.size()}, std::move(v));
    }
  return out;
}

Tensor Source::sample(Rng& rng, std::size_t n) const {
  if (n == 0) throw ValidationError("batch size must be at least 1");
  const std::size_t d = dim();
  if (d == 0) throw ValidationError("cannot sample a 0-dimensional source");
  if (const auto* f = std::get_if<Finite>(&repr_)) {
    Tensor out(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& item = f->items[rng.index(f->items.size())];
      std::copy_n(item.data(), d, out.data() + i * d);
    }
    return out;
  }
  if (std::holds_alternative<Latent>(repr_)) {
    Tensor out(Shape{n, d});
    for (std::size_t i = 0; i < n * d; ++i) out[i] = rng.uniform();
    return out;
  }
  const auto& p = std::get<Product>(repr_);
  if (p.left->dim() == 0) return p.right->sample(rng, n);
  if (p.right->dim() == 0) return p.left->sample(rng, n);
  const Tensor l = p.left->sample(rng, n);
  const Tensor r = p.right->sample(rng, n);
  const std::size_t dl = l.shape()[1], dr = r.shape()[1];
  Tensor out(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(l.data() + i * dl, dl, out.data() + i * d);
    std::copy_n(r.data() + i * dr, dr, out.data() + i * d + dl);
  }
  return out;
}

void DatasetFunctor::set(const std::string& object, Source s) {
  sources_.insert_or_assign(object, std::move(s));
}

bool DatasetFunctor::contains(std::string_view object) const { return sources_.count(std::string(object)) != 0; }

const Source& DatasetFunctor::at(std::string_view object) const {
  auto it = sources_.find(std::string(object));
  if (it == sources_.end()) throw ValidationError("no dataset for object " + std::string(object));
  return it->second;
}

bool DatasetFunctor::all_finite() const {
  return std::all_of(sources_.begin(), sources_.end(), [](const auto& kv) { return kv.second.is_finite(); });
}

Tensor sample_batch(const DatasetFunctor& d, std::string_view object, std::size_t n, Rng& rng) {
  return d.at(object).sample(rng, n);
}

void validate_task(const TaskSpec& task, const std::map<std::string, Shape>& object_shapes) {
  for (const auto& o : task.schema->objects()) {
    if (!task.dataset.contains(o)) throw ValidationError("no dataset for object " + o);
    auto it = object_shapes.find(o);
    if (it != object_shapes.end() && numel(it->second) != task.dataset.at(o).dim())
      throw ShapeError("dataset for " + o + " has dim " + std::to_string(task.dataset.at(o).dim()) +
                       " but the object has shape " + to_string(it->second));
  }
  for (const auto& [o, s] : task.dataset.sources())
    if (!task.schema->has_object(o)) throw ValidationError("dataset given for unknown object " + o);
}

// ---- circles ----

namespace {

std::size_t stripe_period(std::size_t side) { return std::max<std::size_t>(2, side / 4); }

void paint(Tensor& img, std::size_t side, std::size_t x, std::size_t y, Rgb c) {
  const std::size_t i = 3 * (y * side + x);
  img[i] = c.r;
  img[i + 1] = c.g;
  img[i + 2] = c.b;
}

double quantize8(double v) { return std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5) / 255.0; }

Rgb random_color(Rng& rng) {
  const double r = static_cast<double>(rng.index(256)) / 255.0;
  const double g = static_cast<double>(rng.index(256)) / 255.0;
  const double b = static_cast<double>(rng.index(256)) / 255.0;
  return Rgb{r, g, b};
}

template <class Pred>
Rgb mean_color(const Tensor& img, std::size_t side, Pred pred, bool quantize) {
  if (img.size() < 3 * side * side)
    throw ShapeError("image of " + std::to_string(img.size()) + " values is smaller than " +
                     std::to_string(side) + "x" + std::to_string(side) + " RGB");
  double acc[3] = {0, 0, 0};
  std::size_t n = 0;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) {
      if (!pred(x, y)) continue;
      const std::size_t i = 3 * (y * side + x);
      for (std::size_t c = 0; c < 3; ++c) acc[c] += img[i + c];
      ++n;
    }
  Rgb out{acc[0] / n, acc[1] / n, acc[2] / n};
  if (quantize) out = Rgb{quantize8(out.r), quantize8(out.g), quantize8(out.b)};
  return out;
}

}  // namespace

bool in_circle(std::size_t side, std::size_t x, std::size_t y) {
  const double c = side / 2.0, r = side / 4.0;
  const double dx = x + 0.5 - c, dy = y + 0.5 - c;
  return dx * dx + dy * dy <= r * r;
}

bool in_stripe(std::size_t side, std::size_t y) {
  const std::size_t p = stripe_period(side);
  return y % p < p / 2;
}

Tensor render_circle(std::size_t side, Rgb circle) {
  Tensor img(Shape{3 * side * side}, 1.0);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x)
      if (in_circle(side, x, y)) paint(img, side, x, y, circle);
  return img;
}

Tensor render_stripes(std::size_t side, Rgb stripe) {
  Tensor img(Shape{3 * side * side}, 1.0);
  for (std::size_t y = 0; y < side; ++y)
    if (in_stripe(side, y))
      for (std::size_t x = 0; x < side; ++x) paint(img, side, x, y, stripe);
  return img;
}

Tensor render_composed(std::size_t side, Rgb circle, Rgb stripe) {
  Tensor img = render_stripes(side, stripe);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x)
      if (in_circle(side, x, y)) paint(img, side, x, y, circle);
  return img;
}

Rgb decode_circle_color(const Tensor& img, std::size_t side, bool quantize) {
  return mean_color(img, side, [side](std::size_t x, std::size_t y) { return in_circle(side, x, y); }, quantize);
}

Rgb decode_stripe_color(const Tensor& img, std::size_t side, bool quantize) {
  return mean_color(
      img, side, [side](std::size_t x, std::size_t y) { return in_stripe(side, y) && !in_circle(side, x, y); },
      quantize);
}

CirclesDataset gen_circles_dataset(std::size_t n_per_set, std::size_t img_side, std::uint64_t seed) {
  if (img_side < 8) throw ValidationError("image side must be at least 8, got " + std::to_string(img_side));
  if (n_per_set < 1) throw ValidationError("need at least one sample per set");
  CirclesDataset d;
  d.side = img_side;
  Rng ra = Rng::substream(seed, "circles/A");
  Rng rb = Rng::substream(seed, "circles/B");
  Rng rab = Rng::substream(seed, "circles/AB");
  for (std::size_t i = 0; i < n_per_set; ++i) {
    const Rgb c = random_color(ra);
    d.circle_colors.push_back(c);
    d.circles.push_back(render_circle(img_side, c));
  }
  for (std::size_t i = 0; i < n_per_set; ++i) {
    const Rgb s = random_color(rb);
    d.stripe_colors.push_back(s);
    d.stripes.push_back(render_stripes(img_side, s));
  }
  for (std::size_t i = 0; i < n_per_set; ++i) {
    const Rgb c = random_color(rab);
    const Rgb s = random_color(rab);
    d.composed_colors.emplace_back(c, s);
    d.composed.push_back(render_composed(img_side, c, s));
  }
  return d;
}

// ---- directories ----

namespace {

std::string file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.ppm", i);
  return buf;
}

std::string color_fields(const Rgb& c) {
  std::ostringstream os;
  os.precision(17);
  os << c.r << "," << c.g << "," << c.b;
  return os.str();
}

}  // namespace

DatasetFunctor load_dataset_dir(const fs::path& dir, const std::map<std::string, std::size_t>& object_dims) {
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory " + dir.string() + " does not exist");

  std::map<std::string, std::size_t> latent;
  std::map<std::string, std::pair<std::string, std::string>> products;
  const fs::path manifest = dir / "manifest.txt";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      std::istringstream ls(line);
      std::string kind;
      if (!(ls >> kind)) continue;
      std::string obj;
      if (kind == "latent") {
        long long dim = -1;
        if (!(ls >> obj >> dim) || dim < 0)
          throw ValidationError("manifest line " + std::to_string(lineno) + ": expected latent <object> <dim>");
        latent[obj] = static_cast<std::size_t>(dim);
      } else if (kind == "product") {
        std::string l, r;
        if (!(ls >> obj >> l >> r))
          throw ValidationError("manifest line " + std::to_string(lineno) + ": expected product <object> <left> <right>");
        products[obj] = {l, r};
      } else {
        throw ValidationError("manifest line " + std::to_string(lineno) + ": unknown entry '" + kind + "'");
      }
    }
  }

  std::map<std::string, Source> finite;
  auto load_finite = [&](const std::string& obj) -> const Source& {
    if (auto it = finite.find(obj); it != finite.end()) return it->second;
    const fs::path sub = dir / obj;
    if (!fs::is_directory(sub)) throw ValidationError("missing dataset for object " + obj + " (no " + sub.string() + ")");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(sub))
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("dataset for object " + obj + " has no .ppm files");
    std::vector<Tensor> items;
    for (const auto& f : files) items.push_back(read_ppm(f).pixels);
    return finite.emplace(obj, Source::finite(std::move(items))).first->second;
  };

  DatasetFunctor d;
  for (const auto& [obj, dim] : object_dims) {
    Source s = Source::latent(0);
    if (auto it = latent.find(obj); it != latent.end()) {
      s = Source::latent(it->second);
    } else if (auto pt = products.find(obj); pt != products.end()) {
      auto part = [&](const std::string& name) {
        if (auto lt = latent.find(name); lt != latent.end()) return Source::latent(lt->second);
        return load_finite(name);
      };
      s = Source::product(part(pt->second.first), part(pt->second.second));
    } else {
      s = load_finite(obj);
    }
    if (s.dim() != dim)
      throw ShapeError("dataset for object " + obj + " has dim " + std::to_string(s.dim()) + ", expected " +
                       std::to_string(dim));
    d.set(obj, std::move(s));
  }
  return d;
}

void write_circles_dir(const fs::path& dir, const CirclesDataset& data) {
  const std::size_t side = data.side;
  std::ofstream gt;
  fs::create_directories(dir);
  auto write_set = [&](const std::string& name, const std::vector<Tensor>& imgs) {
    fs::create_directories(dir / name);
    for (std::size_t i = 0; i < imgs.size(); ++i) write_ppm(dir / name / file_name(i), imgs[i], side, side);
  };
  write_set("A", data.circles);
  write_set("B", data.stripes);
  write_set("AB", data.composed);
  {
    std::ofstream m(dir / "manifest.txt");
    m << "product AxB A B\n";
  }
  gt.open(dir / ".ground_truth.csv");
  gt << "set,file,circle_r,circle_g,circle_b,stripe_r,stripe_g,stripe_b\n";
  for (std::size_t i = 0; i < data.circles.size(); ++i)
    gt << "A,A/" << file_name(i) << "," << color_fields(data.circle_colors[i]) << ",,,\n";
  for (std::size_t i = 0; i < data.stripes.size(); ++i)
    gt << "B,B/" << file_name(i) << ",,,," << color_fields(data.stripe_colors[i]) << "\n";
  for (std::size_t i = 0; i < data.composed.size(); ++i)
    gt << "AB,AB/" << file_name(i) << "," << color_fields(data.composed_colors[i].first) << ","
       << color_fields(data.composed_colors[i].second) << "\n";
}

std::vector<GroundTruthRow> read_ground_truth(const fs::path& dir) {
  std::ifstream in(dir / ".ground_truth.csv");
  if (!in) throw ValidationError("no ground-truth table in " + dir.string());
  std::vector<GroundTruthRow> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    f.resize(8);
    auto num = [](const std::string& s) { return s.empty() ? 0.0 : std::stod(s); };
    rows.push_back(GroundTruthRow{f[0], f[1], Rgb{num(f[2]), num(f[3]), num(f[4])}, Rgb{num(f[5]), num(f[6]), num(f[7])}});
  }
  return rows;
}

std::string fingerprint_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& f : files) {
    h = fnv1a64(fs::relative(f, dir).generic_string(), h);
    std::ifstream in(f, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    h = fnv1a64(ss.str(), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cdl
