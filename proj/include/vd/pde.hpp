#pragma once

// Positional depth encoding: each depth value becomes Ch/2 sin/cos pairs
// whose wavelengths decay geometrically from max_d by the temperature.

#include <array>
#include <cstdint>
#include <vector>

#include "vd/depth.hpp"
#include "vd/tensor.hpp"

namespace vd::pde {

enum class MaxDepthMode { kGlobal, kPerSample };

struct PdeConfig {
  int channels = 32;
  double temperature = 3e-4;
  MaxDepthMode mode = MaxDepthMode::kGlobal;
  double global_max_depth = 15.0;  // meters; used in kGlobal mode

  // Throws ContractError on odd/too few channels, T outside (0, 1) or a
  // nonpositive global max depth.
  void validate() const;
  int pairs() const { return channels / 2; }
};

// wavelengths[i] = max_d · T^(2i/Ch), in the unit of max_d.
struct FrequencyTable {
  std::vector<double> wavelengths;
};

FrequencyTable frequency_table(const PdeConfig& cfg, double max_d);

struct PdeEncoding {
  ag::Array tensor;  // Ch×H×W; channel 2i = sin, 2i+1 = cos of pair i
  double max_d = 0.0;
};

// Missing pixels encode like depth 0 (sin 0, cos 1 on every pair).
PdeEncoding pde_encode(const DepthMap& depth, const PdeConfig& cfg);

// Encodes raw values against an explicit max depth (no validity handling).
ag::Array pde_encode_values(std::span<const double> values, int height, int width,
                            const PdeConfig& cfg, double max_d);

// Coarse-to-fine phase unwrapping. Output lies in [0, max_d).
DepthMap pde_decode(const ag::Array& encoding, const PdeConfig& cfg, double max_d);

// ---- max-depth vector ----------------------------------------------------

inline constexpr int kMaxDepthSplit = 64;
inline constexpr int kDefaultTokenWidth = 768;

// Integer digits end at cell 63, decimals start at cell 64; each digit v is
// stored as (v + 1) / 10 and every other cell is 0.
struct MaxDepthVector {
  std::vector<double> cells;
};

MaxDepthVector encode_maxd_vector(double max_d, int width = kDefaultTokenWidth);
double decode_maxd_vector(const MaxDepthVector& v);

// ---- 3D variant ----------------------------------------------------------

struct P3deEncoding {
  ag::Array tensor;                 // 3·Ch×H×W: |X| block, |Y| block, Z block
  std::array<double, 3> max_d{};    // per axis
};

// In per-sample mode each axis uses its own max over valid pixels; an axis
// that is identically zero borrows the Z max. Signs of X and Y are not
// encoded; they follow from the pixel position relative to the principal
// point.
P3deEncoding p3de_encode(const PointMap& points, const PdeConfig& cfg);

// (d - mean) / std per pixel, missing pixels included. Shape 1×H×W.
ag::Array normalize_encode(const DepthMap& depth, double mean, double std);

}  // namespace vd::pde
