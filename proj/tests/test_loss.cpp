#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vd/error.hpp"
#include "vd/loss.hpp"

namespace ag = vd::ag;
namespace loss = vd::loss;

namespace {

ag::Node pred_node(int h, int w, const std::vector<double>& v) {
  return ag::Node::constant(ag::Array(ag::Shape{h, w}, v));
}

// Plain-double evaluation of the SI formula.
double si_oracle(const std::vector<double>& pred, const std::vector<double>& gt, double lambda, double alpha) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double g = std::log(pred[i]) - std::log(gt[i]);
    s += g;
    s2 += g * g;
  }
  const double n = static_cast<double>(pred.size());
  return alpha * std::sqrt(s2 / n - lambda * (s / n) * (s / n));
}

vd::ValidityMask all_valid(int h, int w) { return vd::ValidityMask(h, w, true); }

}  // namespace

TEST(SiLoss, AnalyticValues) {
  const vd::DepthMap gt1(1, 1, {2.0});
  EXPECT_NEAR(loss::si_loss(pred_node(1, 1, {2.0 * std::exp(1.0)}), gt1, all_valid(1, 1)).item(), 3.872983, 1e-6);
  EXPECT_NEAR(loss::si_loss(pred_node(1, 1, {2.0 * std::exp(1.0)}), gt1, all_valid(1, 1)).item(),
              10.0 * std::sqrt(0.15), 1e-12);
  const vd::DepthMap gt2(1, 2, {1.5, 4.0});
  const double doubled = loss::si_loss(pred_node(1, 2, {3.0, 8.0}), gt2, all_valid(1, 2)).item();
  EXPECT_NEAR(doubled, 10.0 * std::log(2.0) * std::sqrt(0.15), 1e-12);
  EXPECT_NEAR(doubled, 2.6845475, 1e-7);
  EXPECT_EQ(loss::si_loss(pred_node(1, 2, {1.5, 4.0}), gt2, all_valid(1, 2)).item(), 0.0);
}

TEST(SiLoss, MatchesOracleOnRandomSets) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> dist(0.3, 12.0);
  std::vector<double> p(30), g(30);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = dist(gen);
    g[i] = dist(gen);
  }
  for (double lambda : {0.0, 0.5, 0.85, 1.0}) {
    const loss::SiLossParams params{lambda, 10.0};
    const double v = loss::si_loss(pred_node(5, 6, p), vd::DepthMap(5, 6, g), all_valid(5, 6), params).item();
    EXPECT_NEAR(v, si_oracle(p, g, lambda, 10.0), 1e-12);
    EXPECT_GE(v, 0.0);
  }
}

TEST(SiLoss, PureScaleInvarianceAtLambdaOne) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> dist(0.3, 12.0);
  std::vector<double> p(16), g(16);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = dist(gen);
    g[i] = dist(gen);
  }
  const loss::SiLossParams params{1.0, 10.0};
  const vd::DepthMap gt(4, 4, g);
  const double base = loss::si_loss(pred_node(4, 4, p), gt, all_valid(4, 4), params).item();
  for (double s : {0.01, 0.5, 3.0, 250.0}) {
    std::vector<double> q = p;
    for (double& x : q) x *= s;
    EXPECT_NEAR(loss::si_loss(pred_node(4, 4, q), gt, all_valid(4, 4), params).item(), base, 1e-9);
  }
}

TEST(SiLoss, PixelSetSelectsTerms) {
  const vd::DepthMap gt(1, 3, {1.0, 2.0, 0.0});
  vd::BoolGrid set(1, 3);
  set.set(0, 0, true);
  // Only pixel 0 counts; the disagreement at pixel 1 is ignored.
  EXPECT_EQ(loss::si_loss(pred_node(1, 3, {1.0, 9.0, 5.0}), gt, set).item(), 0.0);
  EXPECT_THROW(loss::si_loss(pred_node(1, 3, {1.0, 1.0, 1.0}), gt, vd::BoolGrid(1, 3)), vd::EmptySetError);
  set.set(0, 2, true);
  EXPECT_THROW(loss::si_loss(pred_node(1, 3, {1.0, 1.0, 1.0}), gt, set), vd::ContractError);
  set.set(0, 2, false);
  EXPECT_THROW(loss::si_loss(pred_node(1, 3, {-1.0, 1.0, 1.0}), gt, set), vd::DomainError);
  EXPECT_THROW(loss::si_loss(pred_node(3, 1, {1.0, 1.0, 1.0}), gt, set), vd::ContractError);
}

TEST(BalancedLoss, FallbacksAndAveraging) {
  const vd::DepthMap gt(1, 4, {1.0, 2.0, 3.0, 4.0});
  const auto valid = all_valid(1, 4);
  const auto pred = pred_node(1, 4, {2.0, 2.0, 3.0, 8.0});
  vd::masks::VanishMask none(1, 4), all(1, 4, true), half(1, 4);
  half.set(0, 2, true);
  half.set(0, 3, true);

  const double full = loss::si_loss(pred, gt, valid).item();
  const auto r = loss::balanced_pixel_loss(pred, gt, none, valid);
  EXPECT_TRUE(r.has_reconstruction);
  EXPECT_FALSE(r.has_prediction);
  EXPECT_DOUBLE_EQ(r.loss.item(), full);
  const auto p = loss::balanced_pixel_loss(pred, gt, all, valid);
  EXPECT_DOUBLE_EQ(p.loss.item(), full);
  EXPECT_DOUBLE_EQ(p.prediction, full);

  const auto b = loss::balanced_pixel_loss(pred, gt, half, valid);
  EXPECT_NEAR(b.loss.item(), 0.5 * (b.reconstruction + b.prediction), 1e-15);
  vd::BoolGrid rec(1, 4), prd(1, 4);
  rec.set(0, 0, true);
  rec.set(0, 1, true);
  prd.set(0, 2, true);
  prd.set(0, 3, true);
  EXPECT_DOUBLE_EQ(b.reconstruction, loss::si_loss(pred, gt, rec).item());
  EXPECT_DOUBLE_EQ(b.prediction, loss::si_loss(pred, gt, prd).item());
}

TEST(BalancedLoss, IndependentOfMaskDensityWhenSetLossesAgree) {
  // A constant log ratio gives every subset the same SI value.
  std::vector<double> g(64), p(64);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = 0.5 + 0.1 * static_cast<double>(i);
    p[i] = 1.7 * g[i];
  }
  const vd::DepthMap gt(8, 8, g);
  const auto pred = pred_node(8, 8, p);
  const double expected = 10.0 * std::log(1.7) * std::sqrt(0.15);
  for (int removed : {1, 10, 32, 63}) {
    vd::masks::VanishMask m(8, 8);
    for (int i = 0; i < removed; ++i) m.set(static_cast<std::size_t>(i * 7 % 64), true);
    EXPECT_NEAR(loss::balanced_pixel_loss(pred, gt, m, all_valid(8, 8)).loss.item(), expected, 1e-12);
  }
  EXPECT_THROW(loss::balanced_pixel_loss(pred, gt, vd::masks::VanishMask(8, 8), vd::ValidityMask(8, 8)),
               vd::EmptySetError);
}

TEST(MultiScale, SumsPerScaleTerms) {
  std::vector<double> g(16);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 1.0 + 0.25 * static_cast<double>(i);
  const vd::DepthMap gt(4, 4, g);
  std::vector<double> p_full(16), p_half(4);
  for (std::size_t i = 0; i < 16; ++i) p_full[i] = g[i] * (1.0 + 0.05 * static_cast<double>(i % 3));
  // Nearest half-resolution picks source pixel 2·k + 1 on each axis.
  const vd::DepthMap half_gt = loss::resize_nearest(gt, 2, 2);
  EXPECT_DOUBLE_EQ(half_gt(0, 0), gt(1, 1));
  EXPECT_DOUBLE_EQ(half_gt(1, 1), gt(3, 3));
  for (std::size_t i = 0; i < 4; ++i) p_half[i] = half_gt[i] * (i == 0 ? 2.0 : 1.0);

  loss::MultiScaleSpec spec;
  spec.factors = {1.0, 0.5};
  spec.weights = {1.0, 1.0};
  vd::masks::VanishMask m(4, 4);
  m.set(1, 1, true);
  m.set(2, 2, true);
  const auto valid = all_valid(4, 4);
  const auto preds = std::vector<ag::Node>{pred_node(4, 4, p_full), pred_node(2, 2, p_half)};
  const auto r = loss::multi_scale_loss(preds, gt, m, valid, spec);
  ASSERT_EQ(r.scales.size(), 2u);
  const double a = loss::balanced_pixel_loss(preds[0], gt, m, valid).loss.item();
  const double b = loss::balanced_pixel_loss(preds[1], half_gt, loss::resize_nearest(m, 2, 2),
                                             loss::resize_nearest(valid, 2, 2))
                       .loss.item();
  EXPECT_DOUBLE_EQ(r.scales[0].combined, a);
  EXPECT_DOUBLE_EQ(r.scales[1].combined, b);
  EXPECT_NEAR(r.total, a + b, 1e-14);
  EXPECT_DOUBLE_EQ(r.total_node.item(), r.total);

  loss::MultiScaleSpec single;
  single.factors = {1.0};
  single.weights = {1.0};
  EXPECT_DOUBLE_EQ(loss::multi_scale_loss({preds[0]}, gt, m, valid, single).total, a);
  EXPECT_THROW(loss::multi_scale_loss({preds[1], preds[0]}, gt, m, valid, spec), vd::ContractError);
  EXPECT_THROW(loss::multi_scale_loss({preds[0]}, gt, m, valid, spec), vd::ContractError);
}

TEST(MultiScale, PerfectPredictionsGiveZero) {
  const vd::DepthMap gt(8, 8, 2.5);
  loss::MultiScaleSpec spec;
  std::vector<ag::Node> preds;
  for (double f : spec.factors) {
    const int e = loss::MultiScaleSpec::scaled_extent(8, f);
    preds.push_back(pred_node(e, e, std::vector<double>(static_cast<std::size_t>(e * e), 2.5)));
  }
  vd::masks::VanishMask m(8, 8);
  m.set(3, 3, true);
  EXPECT_EQ(loss::multi_scale_loss(preds, gt, m, all_valid(8, 8), spec).total, 0.0);
}

TEST(MultiScale, CsvColumnsMatchScales) {
  EXPECT_EQ(loss::loss_csv_header(2), "step,rec_s0,rec_s1,pred_s0,pred_s1,total");
}

TEST(Decode, TermCountRule) {
  EXPECT_EQ(loss::decode_term_count(15.0), 4);
  EXPECT_EQ(loss::decode_term_count(500.0), 5);
  EXPECT_EQ(loss::decode_term_count(15.0, loss::DecodeTerms::kLinear), 1499);
  const auto p = loss::DecodeHeadParams::for_max_depth(15.0);
  const auto terms = p.term_values();
  ASSERT_EQ(terms.size(), 4u);
  EXPECT_DOUBLE_EQ(terms[0], 1.5);
  EXPECT_DOUBLE_EQ(terms[3], 0.0015);
  EXPECT_THROW(loss::decode_term_count(0.0005), vd::ContractError);
}

TEST(Decode, PlaceValueSum) {
  const auto p = loss::DecodeHeadParams::for_max_depth(15.0);
  const auto ones = ag::Node::constant(ag::Array(ag::Shape{4, 1, 2}, std::vector<double>{1, 0, 1, 0, 1, 0, 1, 0}));
  const auto d = loss::metric_decode(ones, p);
  EXPECT_EQ(d.shape(), (ag::Shape{1, 2}));
  EXPECT_NEAR(d.value()[0], 1.6665, 1e-12);
  EXPECT_EQ(d.value()[1], 0.0);
  const auto neg = ag::Node::constant(ag::Array(ag::Shape{4, 1, 1}, std::vector<double>{-1, 0, 0, 0}));
  EXPECT_NEAR(loss::metric_decode(neg, p).item(), -0.015, 1e-15);
  EXPECT_THROW(loss::metric_decode(ones, loss::DecodeHeadParams::for_max_depth(500.0)), vd::ContractError);
}

TEST(Gradients, MultiScaleThroughDecodeMatchesFiniteDifferences) {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> coef(0.5, 1.5), depth(0.5, 10.0);
  std::vector<double> g(64);
  for (double& x : g) x = depth(gen);
  g[5] = 0.0;  // one missing pixel
  const vd::DepthMap gt(8, 8, g);
  vd::masks::VanishMask m(8, 8);
  for (std::size_t i = 0; i < 64; i += 3) m.set(i, true);
  const auto valid = vd::validity_mask(gt);
  const auto params = loss::DecodeHeadParams::for_max_depth(15.0);
  loss::MultiScaleSpec spec;
  spec.factors = {1.0, 0.5, 0.25};
  spec.weights = {1.0, 1.0, 1.0};

  ag::ParameterStore store;
  for (int s = 0; s < 3; ++s) {
    const int e = 8 >> s;
    std::vector<double> v(static_cast<std::size_t>(4 * e * e));
    for (double& x : v) x = coef(gen);
    store.add("head" + std::to_string(s), ag::Array(ag::Shape{4, e, e}, v));
  }
  const ag::ScalarObjective f = [&](const ag::ParameterStore& ps) {
    std::vector<ag::Node> preds;
    for (int s = 0; s < 3; ++s) preds.push_back(loss::metric_decode(ps.at("head" + std::to_string(s)), params));
    return loss::multi_scale_loss(preds, gt, m, valid, spec).total_node;
  };
  EXPECT_LT(ag::finite_difference_check(f, store), 1e-5);
}
