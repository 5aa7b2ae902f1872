#pragma once

// Depth and colour image model. Depth is metric (meters) with 0.0 as the
// missing-value sentinel; colour is planar 3×H×W in [0, 1].

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vd {

class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int height, int width, double fill = 0.0);
  // Throws ContractError on negative or non-finite values.
  DepthMap(int height, int width, std::vector<double> values);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  double operator()(int y, int x) const { return values_[index(y, x)]; }
  double operator[](std::size_t i) const { return values_[i]; }
  bool valid(std::size_t i) const { return values_[i] > 0.0; }
  std::span<const double> values() const { return values_; }

  void set(int y, int x, double meters);

  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

// Boolean raster stored one byte per pixel.
class BoolGrid {
 public:
  BoolGrid() = default;
  BoolGrid(int height, int width, bool fill = false)
      : height_(height), width_(width),
        bits_(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill ? 1 : 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return bits_.size(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool operator()(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
  void set(int y, int x, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }

  std::size_t count() const;
  bool any() const { return count() > 0; }

  friend bool operator==(const BoolGrid&, const BoolGrid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// true = depth present.
class ValidityMask : public BoolGrid {
 public:
  using BoolGrid::BoolGrid;
};

ValidityMask validity_mask(const DepthMap& depth);

class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int height, int width, double fill = 0.0);
  // Planar 3×H×W; throws ContractError on values outside [0, 1].
  RgbImage(int height, int width, std::vector<double> planar);

  int height() const { return height_; }
  int width() const { return width_; }
  double operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  void set(int c, int y, int x, double v);
  std::span<const double> planar() const { return data_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  // Throws ContractError unless fx, fy > 0, cx ∈ [0, width), cy ∈ [0, height).
  void validate(int height, int width) const;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// Four "key value" lines: fx, fy, cx, cy.
std::string format_intrinsics(const Intrinsics& k);
Intrinsics parse_intrinsics(const std::string& text);

// fx = fy uniform in [0.5, 2.0]·min(h, w); principal point within ±10% of
// the image center.
Intrinsics random_intrinsics(std::uint64_t seed, int height, int width);

// 3×H×W camera-frame X, Y, Z in meters; (0, 0, 0) on missing pixels.
struct PointMap {
  int height = 0;
  int width = 0;
  std::vector<double> xyz;

  double x(int v, int u) const { return xyz[static_cast<std::size_t>(v) * width + u]; }
  double y(int v, int u) const {
    return xyz[(static_cast<std::size_t>(height) + v) * width + u];
  }
  double z(int v, int u) const {
    return xyz[(2 * static_cast<std::size_t>(height) + v) * width + u];
  }
};

PointMap depth_to_points(const DepthMap& depth, const Intrinsics& k);

struct DepthStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double density = 0.0;
};

// Statistics over valid pixels; throws EmptySetError when none are valid.
DepthStats depth_stats(const DepthMap& depth);

// ---- files ---------------------------------------------------------------
// 16-bit single-channel PNG in millimeters, 0 = missing.
DepthMap load_depth_png(const std::filesystem::path& path);
// Nearest-millimeter quantization; RangeError when a value rounds past 65535 mm.
void save_depth_png(const DepthMap& depth, const std::filesystem::path& path);

void save_rgb_png(const RgbImage& rgb, const std::filesystem::path& path);
RgbImage load_rgb_png(const std::filesystem::path& path);

// 8-bit grayscale PNG, 255 where set.
void save_mask_png(const BoolGrid& mask, const std::filesystem::path& path);

// Binary 8-bit PGM (P5) of `values` mapped linearly from [lo, hi] to [0, 255].
void save_pgm(std::span<const double> values, int height, int width, double lo, double hi,
              const std::filesystem::path& path);

}  // namespace vd
