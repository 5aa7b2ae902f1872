#include "vd/randomizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include "json.hpp"

#include "vd/error.hpp"
#include "vd/rng.hpp"

namespace vd::randomize {
namespace {

template <typename F>
DepthMap map_valid(const DepthMap& depth, F f) {
  std::vector<double> out(depth.values().begin(), depth.values().end());
  for (double& v : out)
    if (v > 0.0) v = f(v);
  return DepthMap(depth.height(), depth.width(), std::move(out));
}

std::pair<double, double> valid_range(const DepthMap& depth) {
  double lo = INFINITY, hi = 0.0;
  for (double v : depth.values())
    if (v > 0.0) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  return {lo, hi};
}

}  // namespace

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kJitter: return "jitter";
    case Mode::kBinRescale: return "bin_rescale";
    case Mode::kOffset: return "offset";
    case Mode::kIdentity: return "identity";
  }
  return "?";
}

RandomizeConfig RandomizeConfig::with_max_depth(double max_d) {
  RandomizeConfig cfg;
  cfg.max_d = max_d;
  cfg.bins.back().second = max_d;
  return cfg;
}

void RandomizeConfig::validate() const {
  if (!(max_d > 0.0)) throw ContractError("max_d must be positive");
  if (!(jitter_amplitude >= 0.0 && jitter_amplitude < 1.0))
    throw ContractError("jitter amplitude must lie in [0, 1)");
  if (bins.size() < 2) throw ContractError("bin rescale needs at least two bins");
  for (const auto& [lo, hi] : bins)
    if (!(lo >= 0.0 && lo < hi)) throw ContractError("each bin needs 0 <= lo < hi");
  const double total = std::accumulate(mode_probabilities.begin(), mode_probabilities.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("mode probabilities must sum to 1");
  for (double p : mode_probabilities)
    if (p < 0.0) throw ContractError("mode probabilities must be nonnegative");
}

std::string AppliedTransform::to_json() const {
  nlohmann::json j;
  j["mode"] = mode_name(mode);
  j["scalar"] = scalar;
  j["src_lo"] = src_lo;
  j["src_hi"] = src_hi;
  j["dst_lo"] = dst_lo;
  j["dst_hi"] = dst_hi;
  j["offset"] = offset;
  j["floored"] = floored;
  j["clamped"] = clamped;
  j["clamp_scalar"] = clamp_scalar;
  j["fallback"] = fallback;
  return j.dump();
}

DepthMap apply_jitter(const DepthMap& depth, double s, double amplitude) {
  if (!(s >= 1.0 - amplitude && s <= 1.0 + amplitude))
    throw ContractError("jitter scalar " + std::to_string(s) + " outside ±amplitude");
  return map_valid(depth, [s](double v) { return v * s; });
}

DepthMap apply_bin_rescale(const DepthMap& depth, double lo, double hi) {
  if (!(lo < hi)) throw ContractError("bin rescale target needs lo < hi");
  const auto [src_lo, src_hi] = valid_range(depth);
  if (!(src_hi > src_lo)) throw DegenerateInputError("bin rescale of a constant depth map");
  const double gain = (hi - lo) / (src_hi - src_lo);
  return map_valid(depth, [&](double v) { return std::max(kFloorMeters, lo + (v - src_lo) * gain); });
}

DepthMap apply_offset(const DepthMap& depth, double o) {
  const double sd = depth_stats(depth).std;
  if (std::abs(o) > sd * (1.0 + 1e-12))
    throw ContractError("offset " + std::to_string(o) + " exceeds ±std " + std::to_string(sd));
  return map_valid(depth, [o](double v) { return std::max(kFloorMeters, v + o); });
}

std::pair<DepthMap, double> clamp_over_max(const DepthMap& depth, double max_d, double r) {
  const double top = valid_range(depth).second;
  if (!(top > max_d)) return {depth, 1.0};
  const double s = max_d * (0.9 + 0.1 * r) / top;
  return {map_valid(depth, [s](double v) { return v * s; }), s};
}

std::pair<DepthMap, AppliedTransform> randomize_depth(const DepthMap& depth,
                                                      const RandomizeConfig& cfg,
                                                      std::uint64_t seed) {
  cfg.validate();
  const DepthStats stats = depth_stats(depth);  // throws on all-missing
  Rng rng(derive_seed(seed, 0xdea7));

  AppliedTransform t;
  const double pick = rng.uniform();
  double cum = 0.0;
  t.mode = Mode::kIdentity;
  for (int m = 0; m < 4; ++m) {
    cum += cfg.mode_probabilities[static_cast<std::size_t>(m)];
    if (pick < cum) {
      t.mode = static_cast<Mode>(m);
      break;
    }
  }

  DepthMap out = depth;
  switch (t.mode) {
    case Mode::kJitter:
      t.scalar = rng.uniform(1.0 - cfg.jitter_amplitude, 1.0 + cfg.jitter_amplitude);
      out = apply_jitter(depth, t.scalar, cfg.jitter_amplitude);
      break;
    case Mode::kBinRescale: {
      const auto nb = static_cast<std::uint64_t>(cfg.bins.size());
      const std::size_t a = rng.index(nb);
      std::size_t b = rng.index(nb - 1);
      if (b >= a) ++b;
      auto draw = [&](std::size_t k) {
        const auto [lo, hi] = cfg.bins[k];
        const double jl = lo * (1.0 + rng.uniform(-cfg.bin_jitter, cfg.bin_jitter));
        const double jh = hi * (1.0 + rng.uniform(-cfg.bin_jitter, cfg.bin_jitter));
        return std::max(kFloorMeters, rng.uniform(jl, jh));
      };
      double v1 = draw(a), v2 = draw(b);
      if (v1 > v2) std::swap(v1, v2);
      const auto [src_lo, src_hi] = valid_range(depth);
      if (!(src_hi > src_lo) || !(v1 < v2)) {
        t.mode = Mode::kIdentity;
        t.fallback = true;
        break;
      }
      t.src_lo = src_lo;
      t.src_hi = src_hi;
      t.dst_lo = v1;
      t.dst_hi = v2;
      out = apply_bin_rescale(depth, v1, v2);
      t.floored = v1 < kFloorMeters;
      break;
    }
    case Mode::kOffset: {
      t.offset = rng.uniform(-stats.std, stats.std);
      out = apply_offset(depth, t.offset);
      for (double v : depth.values())
        if (v > 0.0 && v + t.offset < kFloorMeters) t.floored = true;
      break;
    }
    case Mode::kIdentity:
      break;
  }

  const double r = rng.uniform();
  auto [clamped, s] = clamp_over_max(out, cfg.max_d, r);
  t.clamped = s != 1.0;
  t.clamp_scalar = s;
  return {std::move(clamped), t};
}

DepthMap invert_transform(const DepthMap& randomized, const AppliedTransform& t) {
  return map_valid(randomized, [&](double v) {
    v /= t.clamp_scalar;
    switch (t.mode) {
      case Mode::kJitter: return v / t.scalar;
      case Mode::kBinRescale:
        return t.src_lo + (v - t.dst_lo) * (t.src_hi - t.src_lo) / (t.dst_hi - t.dst_lo);
      case Mode::kOffset: return v - t.offset;
      case Mode::kIdentity: return v;
    }
    return v;
  });
}

}  // namespace vd::randomize
