#include "vd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vd/error.hpp"

namespace vd::ckpt {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'V', 'D', 'C', 'K'};
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const NamedArrays& arrays) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, a] : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.rank()));
    for (int d : a.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : a.data) put<double>(out, v);
  }
  return out;
}

NamedArrays deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string(kMagic, 4)) throw FormatError("not a VDCK checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  NamedArrays out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.take(r.get<std::uint32_t>());
    const auto dtype = r.get<std::uint8_t>();
    if (dtype != kDtypeF64) throw FormatError("array '" + name + "' has unknown dtype " + std::to_string(dtype));
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("array '" + name + "' has implausible rank " + std::to_string(rank));
    ag::Shape shape(rank);
    std::size_t n = 1;
    for (int& d : shape) {
      const auto e = r.get<std::uint32_t>();
      if (e == 0 || e > (1u << 28)) throw FormatError("array '" + name + "' has a bad extent");
      d = static_cast<int>(e);
      n *= e;
      if (n > (std::size_t{1} << 31)) throw FormatError("array '" + name + "' is too large");
    }
    std::vector<double> data(n);
    for (double& v : data) v = r.get<double>();
    out.emplace_back(std::move(name), ag::Array(shape.empty() ? ag::Shape{1} : shape, std::move(data)));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint arrays");
  return out;
}

void save(const NamedArrays& arrays, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize(arrays);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

NamedArrays load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

const ag::Array& find(const NamedArrays& arrays, const std::string& name) {
  for (const auto& [n, a] : arrays)
    if (n == name) return a;
  throw FormatError("checkpoint has no array '" + name + "'");
}

}  // namespace vd::ckpt
