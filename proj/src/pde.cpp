#include "vd/pde.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "vd/error.hpp"

namespace vd::pde {

void PdeConfig::validate() const {
  if (channels < 2 || channels % 2 != 0)
    throw ContractError("PDE channel count must be even and >= 2, got " + std::to_string(channels));
  if (!(temperature > 0.0 && temperature < 1.0))
    throw ContractError("PDE temperature must lie in (0, 1)");
  if (mode == MaxDepthMode::kGlobal && !(global_max_depth > 0.0))
    throw ContractError("global max depth must be positive");
}

FrequencyTable frequency_table(const PdeConfig& cfg, double max_d) {
  cfg.validate();
  if (!(max_d > 0.0)) throw ContractError("max depth must be positive");
  FrequencyTable table;
  table.wavelengths.resize(static_cast<std::size_t>(cfg.pairs()));
  for (int i = 0; i < cfg.pairs(); ++i)
    table.wavelengths[static_cast<std::size_t>(i)] =
        max_d * std::pow(cfg.temperature, 2.0 * i / cfg.channels);
  return table;
}

ag::Array pde_encode_values(std::span<const double> values, int height, int width,
                            const PdeConfig& cfg, double max_d) {
  cfg.validate();
  if (!(max_d > 0.0)) throw ContractError("max depth must be positive");
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (values.size() != plane) throw ContractError("value count does not match extent");
  ag::Array out(ag::Shape{cfg.channels, height, width});
  // Evaluated in the literal order 2π·(d/max_d)/T^(2i/Ch) so that scaling d
  // and max_d by a power of two leaves the encoding bit-identical.
  for (int i = 0; i < cfg.pairs(); ++i) {
    const double denom = std::pow(cfg.temperature, 2.0 * i / cfg.channels);
    double* s = out.data.data() + 2 * static_cast<std::size_t>(i) * plane;
    double* c = s + plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const double angle = 2.0 * std::numbers::pi * (values[p] / max_d) / denom;
      s[p] = std::sin(angle);
      c[p] = std::cos(angle);
    }
  }
  return out;
}

PdeEncoding pde_encode(const DepthMap& depth, const PdeConfig& cfg) {
  cfg.validate();
  double max_d = cfg.global_max_depth;
  if (cfg.mode == MaxDepthMode::kPerSample) {
    max_d = 0.0;
    for (double v : depth.values()) max_d = std::max(max_d, v);
    if (max_d <= 0.0) throw EmptySetError("per-sample max depth of an all-missing map");
  }
  return {pde_encode_values(depth.values(), depth.height(), depth.width(), cfg, max_d), max_d};
}

DepthMap pde_decode(const ag::Array& encoding, const PdeConfig& cfg, double max_d) {
  cfg.validate();
  if (encoding.rank() != 3 || encoding.dim(0) != cfg.channels)
    throw ContractError("encoding has " + ag::shape_str(encoding.shape) + ", expected " +
                        std::to_string(cfg.channels) + " channels");
  const auto table = frequency_table(cfg, max_d);
  const int h = encoding.dim(1), w = encoding.dim(2);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  const double upper = std::nextafter(max_d, 0.0);

  std::vector<double> out(plane);
  for (std::size_t p = 0; p < plane; ++p) {
    double estimate = 0.0;
    for (int i = 0; i < cfg.pairs(); ++i) {
      const double s = encoding[2 * static_cast<std::size_t>(i) * plane + p];
      const double c = encoding[(2 * static_cast<std::size_t>(i) + 1) * plane + p];
      double phase = std::atan2(s, c);
      if (phase < 0.0) phase += kTwoPi;
      const double lambda = table.wavelengths[static_cast<std::size_t>(i)];
      const double within = phase / kTwoPi * lambda;
      if (i == 0) {
        estimate = within;
      } else {
        const double turns = std::round((estimate - within) / lambda);
        estimate = turns * lambda + within;
      }
    }
    out[p] = std::clamp(estimate, 0.0, upper);
  }
  return DepthMap(h, w, std::move(out));
}

MaxDepthVector encode_maxd_vector(double max_d, int width) {
  if (!(max_d > 0.0) || !std::isfinite(max_d))
    throw ContractError("max depth must be positive and finite");
  if (width < 2 * kMaxDepthSplit) throw ContractError("token width must be >= 128");

  // Shortest fixed-point text that round-trips to max_d.
  char buf[512];
  auto res = std::to_chars(buf, buf + sizeof(buf), max_d, std::chars_format::fixed);
  if (res.ec != std::errc()) throw RangeError("max depth not representable");
  std::string text(buf, res.ptr);
  std::string integer = text, decimals;
  if (auto dot = text.find('.'); dot != std::string::npos) {
    integer = text.substr(0, dot);
    decimals = text.substr(dot + 1);
  }
  while (!decimals.empty() && decimals.back() == '0') decimals.pop_back();
  integer.erase(0, std::min(integer.find_first_not_of('0'), integer.size() - 1));
  if (integer.size() > kMaxDepthSplit || decimals.size() > kMaxDepthSplit)
    throw RangeError("max depth needs more than 64 integer or decimal digits");

  MaxDepthVector v{std::vector<double>(static_cast<std::size_t>(width), 0.0)};
  const std::size_t start = kMaxDepthSplit - integer.size();
  for (std::size_t i = 0; i < integer.size(); ++i)
    v.cells[start + i] = (integer[i] - '0' + 1) / 10.0;
  for (std::size_t i = 0; i < decimals.size(); ++i)
    v.cells[kMaxDepthSplit + i] = (decimals[i] - '0' + 1) / 10.0;
  return v;
}

double decode_maxd_vector(const MaxDepthVector& v) {
  if (v.cells.size() < 2 * kMaxDepthSplit) throw FormatError("max-depth vector too short");
  auto digit_of = [](double cell) -> int {
    if (cell == 0.0) return -1;
    if (!(cell >= 0.1 - 1e-9 && cell <= 1.0 + 1e-9))
      throw FormatError("cell value " + std::to_string(cell) + " outside the digit alphabet");
    const double scaled = 10.0 * cell;
    const double r = std::round(scaled);
    if (std::abs(scaled - r) > 1e-6)
      throw FormatError("cell value " + std::to_string(cell) + " is not a digit code");
    return static_cast<int>(r) - 1;
  };

  std::string integer, decimals;
  bool started = false;
  for (int i = 0; i < kMaxDepthSplit; ++i) {
    const int d = digit_of(v.cells[static_cast<std::size_t>(i)]);
    if (d < 0) {
      if (started) throw FormatError("gap inside integer digits");
      continue;
    }
    started = true;
    integer.push_back(static_cast<char>('0' + d));
  }
  bool ended = false;
  for (std::size_t i = kMaxDepthSplit; i < v.cells.size(); ++i) {
    const int d = digit_of(v.cells[i]);
    if (d < 0) {
      ended = true;
      continue;
    }
    if (ended || i >= 2 * kMaxDepthSplit) throw FormatError("stray digit after decimal run");
    decimals.push_back(static_cast<char>('0' + d));
  }
  if (integer.empty() && decimals.empty()) throw FormatError("max-depth vector holds no digits");
  const std::string text = (integer.empty() ? "0" : integer) + "." + (decimals.empty() ? "0" : decimals);
  double value = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc()) throw FormatError("unparseable digits '" + text + "'");
  if (!(value > 0.0)) throw FormatError("decoded max depth is not positive");
  return value;
}

P3deEncoding p3de_encode(const PointMap& points, const PdeConfig& cfg) {
  cfg.validate();
  const int h = points.height, w = points.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::array<std::vector<double>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    axes[static_cast<std::size_t>(a)].resize(plane);
    for (std::size_t p = 0; p < plane; ++p)
      axes[static_cast<std::size_t>(a)][p] = std::abs(points.xyz[a * plane + p]);
  }

  P3deEncoding enc;
  if (cfg.mode == MaxDepthMode::kGlobal) {
    enc.max_d.fill(cfg.global_max_depth);
  } else {
    for (int a = 0; a < 3; ++a) {
      const auto& vals = axes[static_cast<std::size_t>(a)];
      enc.max_d[static_cast<std::size_t>(a)] = *std::max_element(vals.begin(), vals.end());
    }
    if (enc.max_d[2] <= 0.0) throw EmptySetError("per-sample max depth of an all-missing map");
    for (int a = 0; a < 2; ++a)
      if (enc.max_d[static_cast<std::size_t>(a)] <= 0.0) enc.max_d[static_cast<std::size_t>(a)] = enc.max_d[2];
  }

  enc.tensor = ag::Array(ag::Shape{3 * cfg.channels, h, w});
  for (int a = 0; a < 3; ++a) {
    const ag::Array block =
        pde_encode_values(axes[static_cast<std::size_t>(a)], h, w, cfg, enc.max_d[static_cast<std::size_t>(a)]);
    std::copy(block.data.begin(), block.data.end(),
              enc.tensor.data.begin() + static_cast<std::ptrdiff_t>(a * block.size()));
  }
  return enc;
}

ag::Array normalize_encode(const DepthMap& depth, double mean, double std) {
  if (!(std > 0.0)) throw ContractError("normalization std must be positive");
  ag::Array out(ag::Shape{1, depth.height(), depth.width()});
  for (std::size_t i = 0; i < depth.size(); ++i) out[i] = (depth[i] - mean) / std;
  return out;
}

}  // namespace vd::pde
