#include "vd/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "vd/error.hpp"
#include "vd/rng.hpp"

namespace vd::masks {

VanishMask operator|(const VanishMask& a, const VanishMask& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw ContractError("mask union of different extents");
  VanishMask out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] || b[i]);
  return out;
}

PerlinLattice::PerlinLattice(std::uint64_t seed, int cells) : cells_(cells) {
  if (cells < 1) throw ContractError("perlin lattice needs >= 1 cell");
  const std::size_t corners = static_cast<std::size_t>(cells + 1) * (cells + 1);
  gx_.resize(corners);
  gy_.resize(corners);
  Rng rng(derive_seed(seed, 0x9e71));
  for (std::size_t i = 0; i < corners; ++i) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    gx_[i] = std::cos(angle);
    gy_[i] = std::sin(angle);
  }
}

double perlin_fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double PerlinLattice::operator()(double u, double v) const {
  const int x0 = std::clamp(static_cast<int>(std::floor(u)), 0, cells_ - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(v)), 0, cells_ - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  auto dot = [&](int cx, int cy, double dx, double dy) {
    const std::size_t i = static_cast<std::size_t>(cy) * (cells_ + 1) + cx;
    return gx_[i] * dx + gy_[i] * dy;
  };
  const double n00 = dot(x0, y0, fx, fy);
  const double n10 = dot(x0 + 1, y0, fx - 1.0, fy);
  const double n01 = dot(x0, y0 + 1, fx, fy - 1.0);
  const double n11 = dot(x0 + 1, y0 + 1, fx - 1.0, fy - 1.0);
  const double sx = perlin_fade(fx);
  const double sy = perlin_fade(fy);
  const double top = n00 + sx * (n10 - n00);
  const double bot = n01 + sx * (n11 - n01);
  return top + sy * (bot - top);
}

NoiseField perlin_noise(std::uint64_t seed, int height, int width, int cells) {
  if (height < 1 || width < 1) throw ContractError("noise extent must be positive");
  if (cells < 1 || cells > std::min(height, width))
    throw ContractError("perlin cells must lie in [1, min(H, W)]");
  const PerlinLattice lattice(seed, cells);
  NoiseField f{height, width, std::vector<double>(static_cast<std::size_t>(height) * width)};
  for (int y = 0; y < height; ++y) {
    const double v = static_cast<double>(y) * cells / height;
    for (int x = 0; x < width; ++x)
      f.values[static_cast<std::size_t>(y) * width + x] =
          lattice(static_cast<double>(x) * cells / width, v);
  }
  return f;
}

NoiseField uniform_noise_multiscale(std::uint64_t seed, int height, int width, int scale_divisor) {
  if (height < 1 || width < 1) throw ContractError("noise extent must be positive");
  if (scale_divisor < 1 || scale_divisor > std::min(height, width))
    throw ContractError("scale divisor must lie in [1, min(H, W)]");
  const int gh = (height + scale_divisor - 1) / scale_divisor;
  const int gw = (width + scale_divisor - 1) / scale_divisor;
  Rng rng(derive_seed(seed, 0x0f0f));
  std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
  for (double& g : grid) g = rng.uniform();
  NoiseField f{height, width, std::vector<double>(static_cast<std::size_t>(height) * width)};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      f.values[static_cast<std::size_t>(y) * width + x] =
          grid[static_cast<std::size_t>(y / scale_divisor) * gw + x / scale_divisor];
  return f;
}

namespace {

VanishMask threshold_impl(const NoiseField& field, double target, const ValidityMask* eligible) {
  if (!(target >= 0.0 && target <= 1.0))
    throw ContractError("target removal fraction must lie in [0, 1]");
  for (double v : field.values)
    if (!std::isfinite(v)) throw ContractError("noise field must be finite");
  std::vector<std::size_t> order;
  order.reserve(field.values.size());
  for (std::size_t i = 0; i < field.values.size(); ++i)
    if (!eligible || (*eligible)[i]) order.push_back(i);
  const auto n = static_cast<std::size_t>(std::llround(target * static_cast<double>(order.size())));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return field.values[a] < field.values[b];
  });
  VanishMask mask(field.height, field.width);
  for (std::size_t k = 0; k < n; ++k) mask.set(order[k], true);
  return mask;
}

}  // namespace

VanishMask threshold_to_mask(const NoiseField& field, double target_removal) {
  return threshold_impl(field, target_removal, nullptr);
}

VanishMask threshold_to_mask(const NoiseField& field, double target_removal,
                             const ValidityMask& eligible) {
  if (eligible.height() != field.height || eligible.width() != field.width)
    throw ContractError("eligibility mask extent does not match the field");
  return threshold_impl(field, target_removal, &eligible);
}

void MaskSpec::validate(int height, int width) const {
  if (!(target_removal >= 0.01 - 1e-12 && target_removal <= 0.99 + 1e-12))
    throw ContractError("target removal must lie in [0.01, 0.99]");
  if (kind == MaskKind::kPerlin && (cells < 1 || cells > std::min(height, width)))
    throw ContractError("perlin cells out of range");
  if (kind == MaskKind::kUniform && (scale_divisor < 1 || scale_divisor > std::min(height, width)))
    throw ContractError("scale divisor out of range");
}

namespace {

NoiseField field_for(const MaskSpec& spec, std::uint64_t seed, int height, int width) {
  return spec.kind == MaskKind::kPerlin ? perlin_noise(seed, height, width, spec.cells)
                                        : uniform_noise_multiscale(seed, height, width, spec.scale_divisor);
}

}  // namespace

VanishMask generate_mask(const MaskSpec& spec, std::uint64_t seed, int height, int width) {
  spec.validate(height, width);
  return threshold_to_mask(field_for(spec, seed, height, width), spec.target_removal);
}

VanishMask generate_mask(const MaskSpec& spec, std::uint64_t seed, const ValidityMask& eligible) {
  spec.validate(eligible.height(), eligible.width());
  return threshold_to_mask(field_for(spec, seed, eligible.height(), eligible.width()),
                           spec.target_removal, eligible);
}

MaskSpec sample_mask_spec(std::uint64_t seed, double target_removal, int height, int width) {
  Rng rng(derive_seed(seed, 0x5bec));
  const int limit = std::min(height, width);
  MaskSpec spec;
  spec.target_removal = target_removal;
  spec.kind = rng.index(2) == 0 ? MaskKind::kUniform : MaskKind::kPerlin;
  const int choice = 1 << rng.index(4);
  spec.cells = std::min(2 * choice, limit);
  spec.scale_divisor = std::min(choice, limit);
  return spec;
}

void NoiseSchedule::validate() const {
  if (warmup_steps < 0) throw ContractError("warmup steps must be >= 0");
  if (!(lo < easy_hi && easy_hi <= hard_hi)) throw ContractError("schedule needs lo < easy_hi <= hard_hi");
}

double NoiseSchedule::hi(std::int64_t step) const {
  const double t = warmup_steps == 0 ? 1.0
                                     : std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
  return easy_hi + (hard_hi - easy_hi) * t;
}

double sample_removal_fraction(const NoiseSchedule& schedule, std::int64_t step, std::uint64_t seed) {
  schedule.validate();
  if (step < 0) throw ContractError("step must be >= 0");
  Rng rng(derive_seed(seed, 0x5c4e, static_cast<std::uint64_t>(step)));
  return rng.uniform(schedule.lo, schedule.hi(step));
}

}  // namespace vd::masks
