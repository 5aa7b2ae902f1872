#include "vd/depth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "vd/error.hpp"
#include "vd/rng.hpp"

namespace vd {
namespace {

void check_extent(int height, int width) {
  if (height <= 0 || width <= 0)
    throw ContractError("image extent must be positive, got " + std::to_string(height) + "x" +
                        std::to_string(width));
}

void check_depth_value(double v) {
  if (!std::isfinite(v) || v < 0.0)
    throw ContractError("depth values must be finite and >= 0, got " + std::to_string(v));
}

}  // namespace

DepthMap::DepthMap(int height, int width, double fill) : height_(height), width_(width) {
  check_extent(height, width);
  check_depth_value(fill);
  values_.assign(static_cast<std::size_t>(height) * width, fill);
}

DepthMap::DepthMap(int height, int width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  check_extent(height, width);
  if (values_.size() != static_cast<std::size_t>(height) * width)
    throw ContractError("depth map value count does not match extent");
  for (double v : values_) check_depth_value(v);
}

void DepthMap::set(int y, int x, double meters) {
  check_depth_value(meters);
  values_[index(y, x)] = meters;
}

std::size_t BoolGrid::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

ValidityMask validity_mask(const DepthMap& depth) {
  ValidityMask m(depth.height(), depth.width());
  for (std::size_t i = 0; i < depth.size(); ++i) m.set(i, depth.valid(i));
  return m;
}

RgbImage::RgbImage(int height, int width, double fill) : height_(height), width_(width) {
  check_extent(height, width);
  if (!(fill >= 0.0 && fill <= 1.0)) throw ContractError("rgb values must lie in [0, 1]");
  data_.assign(3 * static_cast<std::size_t>(height) * width, fill);
}

RgbImage::RgbImage(int height, int width, std::vector<double> planar)
    : height_(height), width_(width), data_(std::move(planar)) {
  check_extent(height, width);
  if (data_.size() != 3 * static_cast<std::size_t>(height) * width)
    throw ContractError("rgb value count does not match 3×H×W");
  for (double v : data_)
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("rgb values must lie in [0, 1]");
}

void RgbImage::set(int c, int y, int x, double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw ContractError("rgb values must lie in [0, 1]");
  data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x] = v;
}

void Intrinsics::validate(int height, int width) const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractError("focal lengths must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw ContractError("principal point outside the image");
}

std::string format_intrinsics(const Intrinsics& k) {
  std::ostringstream os;
  os.precision(17);
  os << "fx " << k.fx << "\nfy " << k.fy << "\ncx " << k.cx << "\ncy " << k.cy << "\n";
  return os.str();
}

Intrinsics parse_intrinsics(const std::string& text) {
  std::istringstream is(text);
  std::map<std::string, double> fields;
  std::string key;
  double value;
  while (is >> key >> value) fields[key] = value;
  for (const char* k : {"fx", "fy", "cx", "cy"})
    if (!fields.count(k)) throw FormatError(std::string("intrinsics block missing '") + k + "'");
  return {fields["fx"], fields["fy"], fields["cx"], fields["cy"]};
}

Intrinsics random_intrinsics(std::uint64_t seed, int height, int width) {
  if (height < 2 || width < 2) throw ContractError("random_intrinsics needs at least 2x2");
  Rng rng(derive_seed(seed, 0x1a7));
  const double f = rng.uniform(0.5, 2.0) * std::min(height, width);
  const double cx = 0.5 * width * (1.0 + rng.uniform(-0.1, 0.1));
  const double cy = 0.5 * height * (1.0 + rng.uniform(-0.1, 0.1));
  return {f, f, cx, cy};
}

PointMap depth_to_points(const DepthMap& depth, const Intrinsics& k) {
  k.validate(depth.height(), depth.width());
  PointMap pm{depth.height(), depth.width(), std::vector<double>(3 * depth.size(), 0.0)};
  const std::size_t plane = depth.size();
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      const std::size_t i = depth.index(v, u);
      const double z = depth[i];
      if (z <= 0.0) continue;
      pm.xyz[i] = (u - k.cx) * z / k.fx;
      pm.xyz[plane + i] = (v - k.cy) * z / k.fy;
      pm.xyz[2 * plane + i] = z;
    }
  }
  return pm;
}

DepthStats depth_stats(const DepthMap& depth) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : depth.values())
    if (v > 0.0) {
      sum += v;
      ++n;
    }
  if (n == 0) throw EmptySetError("depth map has no valid pixels");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : depth.values())
    if (v > 0.0) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n)),
          static_cast<double>(n) / static_cast<double>(depth.size())};
}

}  // namespace vd
