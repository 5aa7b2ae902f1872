#pragma once

// Scale-invariant log-depth loss, its reconstruction/prediction balance,
// the multi-scale sum and the place-value metric decode head.

#include <string>
#include <vector>

#include "vd/depth.hpp"
#include "vd/masks.hpp"
#include "vd/tensor.hpp"

namespace vd::loss {

struct SiLossParams {
  double lambda = 0.85;
  double alpha = 10.0;

  void validate() const;
};

// alpha · sqrt(mean(g²) − lambda · mean(g)²) with g = log(pred) − log(gt)
// over `pixel_set`. pred is H×W meters. The radicand is floored at 0 so that
// rounding on a constant-g set cannot produce a NaN.
ag::Node si_loss(const ag::Node& pred, const DepthMap& gt, const BoolGrid& pixel_set,
                 const SiLossParams& params = {});

struct BalancedLoss {
  ag::Node loss;
  double reconstruction = 0.0;  // SI loss on valid ∧ ¬vanish (0 when empty)
  double prediction = 0.0;      // SI loss on valid ∧ vanish (0 when empty)
  bool has_reconstruction = false;
  bool has_prediction = false;
};

// Mean of the reconstruction and prediction SI losses; when one set is
// empty the other is used at full weight.
BalancedLoss balanced_pixel_loss(const ag::Node& pred, const DepthMap& gt,
                                 const masks::VanishMask& vanish, const ValidityMask& validity,
                                 const SiLossParams& params = {});

struct MultiScaleSpec {
  std::vector<double> factors = {1.0, 0.5, 0.25, 0.125};
  std::vector<double> weights = {1.0, 1.0, 1.0, 1.0};

  void validate() const;
  // Extent of the target grid for `factor` at full size `full`.
  static int scaled_extent(int full, double factor);
};

struct ScaleTerms {
  double factor = 1.0;
  double reconstruction = 0.0;
  double prediction = 0.0;
  double combined = 0.0;
};

struct LossReport {
  std::vector<ScaleTerms> scales;
  double total = 0.0;
  ag::Node total_node;
};

// Nearest-neighbour resampling onto an out_h×out_w grid (pixel-centre
// aligned). Used for depth targets and masks.
DepthMap resize_nearest(const DepthMap& depth, int out_h, int out_w);
masks::VanishMask resize_nearest(const masks::VanishMask& mask, int out_h, int out_w);
ValidityMask resize_nearest(const ValidityMask& mask, int out_h, int out_w);

LossReport multi_scale_loss(const std::vector<ag::Node>& preds, const DepthMap& gt,
                            const masks::VanishMask& vanish, const ValidityMask& validity,
                            const MultiScaleSpec& spec = {}, const SiLossParams& params = {});

std::string loss_csv_header(std::size_t scales);
std::string loss_csv_row(long step, const LossReport& report);

// ---- metric decode -------------------------------------------------------

enum class DecodeTerms {
  kPlaceValue,  // max_d / 10^i
  kLinear,      // max_d / (10·i)
};

struct DecodeHeadParams {
  double max_d = 15.0;
  int n = 4;
  double slope = 0.01;
  DecodeTerms terms = DecodeTerms::kPlaceValue;

  // n chosen as the largest count whose smallest term still exceeds 1 mm.
  static DecodeHeadParams for_max_depth(double max_d, DecodeTerms terms = DecodeTerms::kPlaceValue);
  std::vector<double> term_values() const;  // meters, i = 1..n
};

int decode_term_count(double max_d, DecodeTerms terms = DecodeTerms::kPlaceValue);

// d = leaky_relu(Σ_i v_i · term_i); head is n×H×W, result H×W meters.
ag::Node metric_decode(const ag::Node& head, const DecodeHeadParams& params);

}  // namespace vd::loss
