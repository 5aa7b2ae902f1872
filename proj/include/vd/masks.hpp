#pragma once

// Vanish masks: which depth pixels are removed from the network input.

#include <cstdint>
#include <vector>

#include "vd/depth.hpp"

namespace vd::masks {

// true = pixel removed from the depth input (prediction target).
class VanishMask : public BoolGrid {
 public:
  using BoolGrid::BoolGrid;
  double removal_fraction() const {
    return size() ? static_cast<double>(count()) / static_cast<double>(size()) : 0.0;
  }
};

VanishMask operator|(const VanishMask& a, const VanishMask& b);

struct NoiseField {
  int height = 0;
  int width = 0;
  std::vector<double> values;
};

// Single-octave gradient noise over a cells×cells lattice of unit gradients.
// Lattice coordinates are (x·cells/W, y·cells/H), so corners sit on pixel
// centres whenever the extent is a multiple of `cells`.
class PerlinLattice {
 public:
  PerlinLattice(std::uint64_t seed, int cells);

  // Continuous evaluation at lattice coordinates u, v ∈ [0, cells].
  double operator()(double u, double v) const;
  int cells() const { return cells_; }

 private:
  int cells_;
  std::vector<double> gx_;
  std::vector<double> gy_;
};

// Quintic fade 6t⁵ − 15t⁴ + 10t³.
double perlin_fade(double t);

NoiseField perlin_noise(std::uint64_t seed, int height, int width, int cells);

// i.i.d. U[0, 1) on a ceil(H/k)×ceil(W/k) grid, nearest-upsampled so each
// value covers a k×k block.
NoiseField uniform_noise_multiscale(std::uint64_t seed, int height, int width, int scale_divisor);

// Removes exactly round(target·N) pixels with the lowest field values, ties
// broken by ascending pixel index. Without `eligible` N covers all pixels;
// with it only eligible pixels can be removed and count toward N.
VanishMask threshold_to_mask(const NoiseField& field, double target_removal);
VanishMask threshold_to_mask(const NoiseField& field, double target_removal,
                             const ValidityMask& eligible);

enum class MaskKind { kUniform, kPerlin };

struct MaskSpec {
  MaskKind kind = MaskKind::kPerlin;
  int cells = 4;          // perlin lattice cells
  int scale_divisor = 1;  // uniform block size
  double target_removal = 0.5;

  void validate(int height, int width) const;
};

VanishMask generate_mask(const MaskSpec& spec, std::uint64_t seed, int height, int width);
VanishMask generate_mask(const MaskSpec& spec, std::uint64_t seed, const ValidityMask& eligible);

// Training-time draw: kind uniform/perlin with equal odds, perlin cells in
// {2, 4, 8, 16}, uniform block size in {1, 2, 4, 8}, clipped to the extent.
MaskSpec sample_mask_spec(std::uint64_t seed, double target_removal, int height, int width);

// Upper bound of the removal fraction widens linearly from easy_hi to
// hard_hi over warmup_steps; the lower bound stays at lo. The linear shape
// is a stand-in for the drawn easy-to-hard shift and all four constants are
// configurable.
struct NoiseSchedule {
  std::int64_t warmup_steps = 1000;
  double easy_hi = 0.30;
  double hard_hi = 0.99;
  double lo = 0.01;

  void validate() const;
  double hi(std::int64_t step) const;
};

double sample_removal_fraction(const NoiseSchedule& schedule, std::int64_t step, std::uint64_t seed);

}  // namespace vd::masks
