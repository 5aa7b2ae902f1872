#include "vd/loss.hpp"

#include <cmath>
#include <sstream>

#include "vd/error.hpp"

namespace vd::loss {

using ag::Array;
using ag::Node;
using ag::Shape;

void SiLossParams::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("SI lambda must lie in [0, 1]");
  if (!(alpha > 0.0)) throw ContractError("SI alpha must be positive");
}

Node si_loss(const Node& pred, const DepthMap& gt, const BoolGrid& pixel_set,
             const SiLossParams& params) {
  params.validate();
  const Shape expected{gt.height(), gt.width()};
  if (pred.shape() != expected || pixel_set.height() != gt.height() || pixel_set.width() != gt.width())
    throw ContractError("si_loss: prediction " + ag::shape_str(pred.shape()) + " vs target " +
                        ag::shape_str(expected));
  const std::size_t pixel_count = pixel_set.count();
  if (pixel_count == 0) throw EmptySetError("si_loss over an empty pixel set");

  Array in_set(expected), outside(expected), log_gt(expected);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!pixel_set[i]) {
      outside[i] = 1.0;
      continue;
    }
    if (!gt.valid(i)) throw ContractError("si_loss: pixel set includes missing ground truth");
    if (!(pred.value()[i] > 0.0))
      throw DomainError("si_loss: nonpositive prediction " + std::to_string(pred.value()[i]));
    in_set[i] = 1.0;
    log_gt[i] = std::log(gt[i]);
  }
  const Node m = Node::constant(std::move(in_set));
  // Pixels outside the set see log(1) = 0 and are masked out of g anyway.
  const Node safe_pred = ag::add(ag::mul(pred, m), Node::constant(std::move(outside)));
  const Node g = ag::mul(ag::sub(ag::log(safe_pred), Node::constant(std::move(log_gt))), m);

  const double inv_t = 1.0 / static_cast<double>(pixel_count);
  const Node mean_sq = ag::scale(ag::reduce_sum(ag::square(g)), inv_t);
  const Node mean_g = ag::scale(ag::reduce_sum(g), inv_t);
  const Node radicand = ag::sub(mean_sq, ag::scale(ag::square(mean_g), params.lambda));
  return ag::scale(ag::sqrt(ag::clamp_min(radicand, 0.0)), params.alpha);
}

BalancedLoss balanced_pixel_loss(const Node& pred, const DepthMap& gt,
                                 const masks::VanishMask& vanish, const ValidityMask& validity,
                                 const SiLossParams& params) {
  if (vanish.height() != gt.height() || vanish.width() != gt.width() ||
      validity.height() != gt.height() || validity.width() != gt.width())
    throw ContractError("balanced_pixel_loss: mask extents do not match the target");
  BoolGrid rec(gt.height(), gt.width()), prd(gt.height(), gt.width());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!validity[i]) continue;
    (vanish[i] ? prd : rec).set(i, true);
  }
  BalancedLoss out;
  out.has_reconstruction = rec.any();
  out.has_prediction = prd.any();
  if (!out.has_reconstruction && !out.has_prediction)
    throw EmptySetError("balanced_pixel_loss: no valid pixels");

  Node rec_loss, prd_loss;
  if (out.has_reconstruction) {
    rec_loss = si_loss(pred, gt, rec, params);
    out.reconstruction = rec_loss.item();
  }
  if (out.has_prediction) {
    prd_loss = si_loss(pred, gt, prd, params);
    out.prediction = prd_loss.item();
  }
  if (out.has_reconstruction && out.has_prediction)
    out.loss = ag::scale(ag::add(rec_loss, prd_loss), 0.5);
  else
    out.loss = out.has_reconstruction ? rec_loss : prd_loss;
  return out;
}

void MultiScaleSpec::validate() const {
  if (factors.empty() || factors.size() != weights.size())
    throw ContractError("multi-scale spec needs one weight per factor");
  for (double f : factors)
    if (!(f > 0.0 && f <= 1.0)) throw ContractError("resize factors must lie in (0, 1]");
  for (double w : weights)
    if (!(w > 0.0)) throw ContractError("scale weights must be positive");
}

int MultiScaleSpec::scaled_extent(int full, double factor) {
  return std::max(1, static_cast<int>(std::lround(full * factor)));
}

namespace {

int nearest_source(int dst, int out, int in) {
  const int s = static_cast<int>(std::floor((dst + 0.5) * in / out));
  return std::min(s, in - 1);
}

}  // namespace

DepthMap resize_nearest(const DepthMap& depth, int out_h, int out_w) {
  if (out_h == depth.height() && out_w == depth.width()) return depth;
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = nearest_source(y, out_h, depth.height());
    for (int x = 0; x < out_w; ++x)
      out[static_cast<std::size_t>(y) * out_w + x] = depth(sy, nearest_source(x, out_w, depth.width()));
  }
  return DepthMap(out_h, out_w, std::move(out));
}

namespace {

template <typename Mask>
Mask resize_mask(const Mask& mask, int out_h, int out_w) {
  if (out_h == mask.height() && out_w == mask.width()) return mask;
  Mask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = nearest_source(y, out_h, mask.height());
    for (int x = 0; x < out_w; ++x) out.set(y, x, mask(sy, nearest_source(x, out_w, mask.width())));
  }
  return out;
}

}  // namespace

masks::VanishMask resize_nearest(const masks::VanishMask& mask, int out_h, int out_w) {
  return resize_mask(mask, out_h, out_w);
}

ValidityMask resize_nearest(const ValidityMask& mask, int out_h, int out_w) {
  return resize_mask(mask, out_h, out_w);
}

LossReport multi_scale_loss(const std::vector<Node>& preds, const DepthMap& gt,
                            const masks::VanishMask& vanish, const ValidityMask& validity,
                            const MultiScaleSpec& spec, const SiLossParams& params) {
  spec.validate();
  if (preds.size() != spec.factors.size())
    throw ContractError("multi_scale_loss: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(spec.factors.size()) + " scales");
  LossReport report;
  Node total;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const int h = MultiScaleSpec::scaled_extent(gt.height(), spec.factors[s]);
    const int w = MultiScaleSpec::scaled_extent(gt.width(), spec.factors[s]);
    if (preds[s].shape() != Shape{h, w})
      throw ContractError("multi_scale_loss: scale " + std::to_string(s) + " prediction " +
                          ag::shape_str(preds[s].shape()) + ", expected " + ag::shape_str({h, w}));
    const DepthMap gt_s = resize_nearest(gt, h, w);
    const auto vanish_s = resize_nearest(vanish, h, w);
    ValidityMask valid_s = resize_nearest(validity, h, w);
    for (std::size_t i = 0; i < gt_s.size(); ++i) valid_s.set(i, valid_s[i] && gt_s.valid(i));
    const BalancedLoss b = balanced_pixel_loss(preds[s], gt_s, vanish_s, valid_s, params);
    const Node weighted = spec.weights[s] == 1.0 ? b.loss : ag::scale(b.loss, spec.weights[s]);
    total = total ? ag::add(total, weighted) : weighted;
    report.scales.push_back({spec.factors[s], b.reconstruction, b.prediction, b.loss.item()});
  }
  report.total_node = total;
  report.total = total.item();
  return report;
}

std::string loss_csv_header(std::size_t scales) {
  std::ostringstream os;
  os << "step";
  for (std::size_t s = 0; s < scales; ++s) os << ",rec_s" << s;
  for (std::size_t s = 0; s < scales; ++s) os << ",pred_s" << s;
  os << ",total";
  return os.str();
}

std::string loss_csv_row(long step, const LossReport& report) {
  std::ostringstream os;
  os.precision(10);
  os << step;
  for (const auto& t : report.scales) os << ',' << t.reconstruction;
  for (const auto& t : report.scales) os << ',' << t.prediction;
  os << ',' << report.total;
  return os.str();
}

int decode_term_count(double max_d, DecodeTerms terms) {
  if (!(max_d > 0.001)) throw ContractError("max depth must exceed 1 mm for the decode head");
  int n = 0;
  if (terms == DecodeTerms::kPlaceValue) {
    while (max_d / std::pow(10.0, n + 1) > 0.001) ++n;
  } else {
    while (max_d / (10.0 * (n + 1)) > 0.001) ++n;
  }
  return n;
}

DecodeHeadParams DecodeHeadParams::for_max_depth(double max_d, DecodeTerms terms) {
  DecodeHeadParams p;
  p.max_d = max_d;
  p.terms = terms;
  p.n = decode_term_count(max_d, terms);
  return p;
}

std::vector<double> DecodeHeadParams::term_values() const {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i)
    out[static_cast<std::size_t>(i - 1)] =
        terms == DecodeTerms::kPlaceValue ? max_d / std::pow(10.0, i) : max_d / (10.0 * i);
  return out;
}

Node metric_decode(const Node& head, const DecodeHeadParams& params) {
  const Shape& s = head.shape();
  if (s.size() != 3 || s[0] != params.n)
    throw ContractError("metric_decode expects " + std::to_string(params.n) + "×H×W, got " +
                        ag::shape_str(s));
  const auto terms = params.term_values();
  const Node kernel = Node::constant(Array(Shape{1, params.n, 1, 1}, terms));
  const Node summed = ag::conv2d(head, kernel, 1, 0);
  return ag::leaky_relu(ag::reshape(summed, Shape{s[1], s[2]}), params.slope);
}

}  // namespace vd::loss
