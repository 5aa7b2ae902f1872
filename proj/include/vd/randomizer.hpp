#pragma once

// Depth distribution randomization: jitter, bin rescale, offset or identity,
// always followed by the over-max clamp.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vd/depth.hpp"

namespace vd::randomize {

enum class Mode { kJitter = 0, kBinRescale = 1, kOffset = 2, kIdentity = 3 };

const char* mode_name(Mode m);

struct RandomizeConfig {
  double max_d = 15.0;
  double jitter_amplitude = 0.20;
  // Depth bins in meters. Both endpoints of a selected bin are jittered by
  // ±bin_jitter before a value is drawn inside it.
  std::vector<std::pair<double, double>> bins = {{0.0, 1.0}, {0.5, 2.0}, {0.5, 5.0}, {1.0, 15.0}, {5.0, 15.0}};
  double bin_jitter = 0.10;
  std::array<double, 4> mode_probabilities = {0.25, 0.25, 0.25, 0.25};  // indexed by Mode

  // Default bins with the last one ending at max_d.
  static RandomizeConfig with_max_depth(double max_d);
  void validate() const;
};

struct AppliedTransform {
  Mode mode = Mode::kIdentity;
  double scalar = 1.0;                  // jitter factor
  double src_lo = 0.0, src_hi = 0.0;    // bin rescale: valid range before
  double dst_lo = 0.0, dst_hi = 0.0;    // bin rescale: target range
  double offset = 0.0;
  bool floored = false;                 // offset or rescale hit the 1 mm floor
  bool clamped = false;
  double clamp_scalar = 1.0;
  bool fallback = false;                // bin rescale on a constant map

  std::string to_json() const;
};

inline constexpr double kFloorMeters = 0.001;

// s must lie in [1 - amplitude, 1 + amplitude].
DepthMap apply_jitter(const DepthMap& depth, double s, double amplitude = 0.20);

// Affine map of the valid range [min, max] onto [lo, hi]; results are floored
// at 1 mm. Throws DegenerateInputError when fewer than two distinct values.
DepthMap apply_bin_rescale(const DepthMap& depth, double lo, double hi);

// Shift valid pixels by o (|o| <= population std) and floor at 1 mm.
DepthMap apply_offset(const DepthMap& depth, double o);

// When max(valid) > max_d, scales every valid pixel so the max becomes
// max_d·(0.9 + 0.1·r). Returns the applied scalar (1 when untouched).
std::pair<DepthMap, double> clamp_over_max(const DepthMap& depth, double max_d, double r);

std::pair<DepthMap, AppliedTransform> randomize_depth(const DepthMap& depth,
                                                      const RandomizeConfig& cfg,
                                                      std::uint64_t seed);

// Undoes a recorded transform on valid pixels. Exact up to rounding unless
// the transform floored any pixel.
DepthMap invert_transform(const DepthMap& randomized, const AppliedTransform& t);

}  // namespace vd::randomize
