#include <cstring>
#include <fstream>
#include <sstream>

#include "cdl/train.hpp"

namespace cdl {

namespace {

constexpr std::string_view kMagic = "CDLCKPT1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, sizeof v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  bool done() const { return pos_ == b_.size(); }

  std::uint64_t uint(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  double f64() {
    const std::uint64_t v = uint(8);
    double d;
    std::memcpy(&d, &v, sizeof d);
    return d;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw ValidationError("truncated checkpoint at byte " + std::to_string(pos_));
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const NamedTensors& tensors) {
  std::string out(kMagic);
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : t.values()) put_f64(out, v);
  }
  return out;
}

NamedTensors decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kMagic.size()) != kMagic) throw ValidationError("not a checkpoint (bad magic)");
  Reader r(bytes.substr(kMagic.size()));
  NamedTensors out;
  while (!r.done()) {
    std::string name(r.bytes(r.uint(4)));
    const auto rank = r.uint(4);
    if (rank > 8) throw ValidationError("checkpoint tensor " + name + " has implausible rank " + std::to_string(rank));
    Shape s;
    for (std::uint64_t i = 0; i < rank; ++i) {
      s.push_back(r.uint(4));
      if (s.back() == 0) throw ValidationError("checkpoint tensor " + name + " has a zero extent");
    }
    std::vector<double> v(numel(s));
    for (double& x : v) x = r.f64();
    out.emplace_back(std::move(name), Tensor(std::move(s), std::move(v)));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

NamedTensors to_named(const TrainState& s) {
  NamedTensors out;
  auto scalar = [](std::size_t v) { return Tensor(Shape{1}, std::vector<double>{static_cast<double>(v)}); };
  for (const auto& [n, t] : s.gen.entries()) out.emplace_back("gen/" + n, t);
  for (const auto& [n, t] : s.disc.entries()) out.emplace_back("disc/" + n, t);
  for (const auto* which : {"gen", "disc"}) {
    const AdamState& a = std::string(which) == "gen" ? s.gen_adam : s.disc_adam;
    for (const auto& [n, t] : a.m) out.emplace_back("adam/" + std::string(which) + "/m/" + n, t);
    for (const auto& [n, t] : a.v) out.emplace_back("adam/" + std::string(which) + "/v/" + n, t);
  }
  out.emplace_back("adam/gen/t", scalar(s.gen_adam.t));
  out.emplace_back("adam/disc/t", scalar(s.disc_adam.t));
  out.emplace_back("step", scalar(s.step));
  return out;
}

TrainState from_named(const NamedTensors& tensors) {
  TrainState s;
  auto starts = [](const std::string& n, std::string_view p) { return n.compare(0, p.size(), p) == 0; };
  auto count = [](const std::string& n, const Tensor& t) {
    if (t.size() != 1 || !(t[0] >= 0) || t[0] != std::floor(t[0]))
      throw ValidationError("checkpoint entry " + n + " is not a counter");
    return static_cast<std::size_t>(t[0]);
  };
  for (const auto& [n, t] : tensors) {
    if (starts(n, "gen/")) s.gen.set(n.substr(4), t);
    else if (starts(n, "disc/")) s.disc.set(n.substr(5), t);
    else if (starts(n, "adam/gen/m/")) s.gen_adam.m[n.substr(11)] = t;
    else if (starts(n, "adam/gen/v/")) s.gen_adam.v[n.substr(11)] = t;
    else if (starts(n, "adam/disc/m/")) s.disc_adam.m[n.substr(12)] = t;
    else if (starts(n, "adam/disc/v/")) s.disc_adam.v[n.substr(12)] = t;
    else if (n == "adam/gen/t") s.gen_adam.t = count(n, t);
    else if (n == "adam/disc/t") s.disc_adam.t = count(n, t);
    else if (n == "step") s.step = count(n, t);
    else throw ValidationError("unknown checkpoint entry " + n);
  }
  return s;
}

}  // namespace cdl
