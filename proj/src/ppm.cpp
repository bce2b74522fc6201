#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cdl/data.hpp"

namespace cdl {

std::string encode_ppm(const Tensor& pixels, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || pixels.size() != 3 * width * height)
    throw ShapeError("PPM " + std::to_string(width) + "x" + std::to_string(height) + " needs " +
                     std::to_string(3 * width * height) + " values, got " + std::to_string(pixels.size()));
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = pixels[i];
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("pixel value " + std::to_string(v) + " at index " + std::to_string(i) +
                            " is outside [0, 1]");
    out[header + i] = static_cast<char>(static_cast<unsigned char>(std::floor(v * 255.0 + 0.5)));
  }
  return out;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view b) : b_(b) {}

  std::string token() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (start == pos_) throw ValidationError("malformed PPM: truncated header");
    return std::string(b_.substr(start, pos_ - start));
  }

  std::size_t number() {
    const std::string t = token();
    if (t.find_first_not_of("0123456789") != std::string::npos || t.size() > 9)
      throw ValidationError("malformed PPM: bad header field '" + t + "'");
    return static_cast<std::size_t>(std::stoul(t));
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_])))
      throw ValidationError("malformed PPM: missing separator before raster");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_ppm(std::string_view bytes) {
  HeaderReader r(bytes);
  if (r.token() != "P6") throw ValidationError("malformed PPM: expected magic P6");
  Image img;
  img.width = r.number();
  img.height = r.number();
  const std::size_t maxval = r.number();
  if (img.width == 0 || img.height == 0) throw ValidationError("malformed PPM: zero dimension");
  if (maxval != 255) throw ValidationError("unsupported PPM maxval " + std::to_string(maxval) + " (need 255)");
  const std::size_t start = r.raster_start();
  const std::size_t n = 3 * img.width * img.height;
  if (bytes.size() < start + n)
    throw ValidationError("malformed PPM: raster has " + std::to_string(bytes.size() - start) + " bytes, expected " +
                          std::to_string(n));
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<unsigned char>(bytes[start + i]) / 255.0;
  img.pixels = Tensor(Shape{n}, std::move(v));
  return img;
}

void write_ppm(const std::filesystem::path& path, const Tensor& pixels, std::size_t width, std::size_t height) {
  const std::string bytes = encode_ppm(pixels, width, height);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_ppm(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::pair<std::size_t, std::size_t> image_dims(std::size_t n, std::size_t side_hint) {
  if (n == 0 || n % 3 != 0) throw ShapeError("a vector of " + std::to_string(n) + " values is not an RGB image");
  const std::size_t px = n / 3;
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(px))));
  if (side * side == px) return {side, side};
  if (side_hint && px % (side_hint * side_hint) == 0) return {side_hint, px / side_hint};
  // Largest square side dividing the pixel count into a vertical stack.
  for (std::size_t s = side; s >= 1; --s)
    if (px % (s * s) == 0) return {s, px / s};
  return {px, 1};
}

}  // namespace cdl
