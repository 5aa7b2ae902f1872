#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vd/error.hpp"
#include "vd/tensor.hpp"

namespace {

using vd::ag::Array;
using vd::ag::Node;
using vd::ag::ParameterStore;
using vd::ag::Shape;
namespace ag = vd::ag;

Array random_array(const Shape& s, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Array a(s);
  for (double& v : a.data) v = dist(gen);
  return a;
}

// Contracts the output with fixed random weights so every Jacobian entry
// reaches the scalar objective.
Node probe(const Node& y, unsigned seed) {
  return ag::reduce_sum(ag::mul(y, Node::constant(random_array(y.shape(), seed))));
}

double check(ParameterStore& store, const std::function<Node(const ParameterStore&)>& f) {
  return ag::finite_difference_check(f, store);
}

}  // namespace

TEST(Array, RejectsMismatchedData) {
  EXPECT_THROW(Array(Shape{2, 3}, std::vector<double>(5)), vd::ContractError);
  EXPECT_THROW(Array(Shape{2, 0}), vd::ContractError);
  EXPECT_EQ(Array(Shape{2, 3}, 1.5).size(), 6u);
}

TEST(Elementwise, ForwardValues) {
  const Node a = Node::constant(Array(Shape{3}, {1.0, -2.0, 4.0}));
  const Node b = Node::constant(Array(Shape{3}, {0.5, 3.0, -1.0}));
  EXPECT_EQ(ag::add(a, b).value().data, (std::vector<double>{1.5, 1.0, 3.0}));
  EXPECT_EQ(ag::sub(a, b).value().data, (std::vector<double>{0.5, -5.0, 5.0}));
  EXPECT_EQ(ag::mul(a, b).value().data, (std::vector<double>{0.5, -6.0, -4.0}));
  EXPECT_EQ(ag::square(a).value().data, (std::vector<double>{1.0, 4.0, 16.0}));
  EXPECT_DOUBLE_EQ(ag::leaky_relu(a, 0.1).value()[1], -0.2);
  EXPECT_DOUBLE_EQ(ag::sigmoid(Node::constant(Array::scalar(0.0))).item(), 0.5);
  EXPECT_DOUBLE_EQ(ag::clamp_min(a, 0.0).value()[1], 0.0);
  EXPECT_DOUBLE_EQ(ag::add_scalar(a, 2.0).value()[2], 6.0);
  EXPECT_DOUBLE_EQ(ag::scale(a, -0.5).value()[2], -2.0);
}

TEST(Elementwise, ScalarBroadcast) {
  const Node a = Node::constant(Array(Shape{2, 2}, {1.0, 2.0, 3.0, 4.0}));
  const Node s = Node::constant(Array::scalar(10.0));
  EXPECT_EQ(ag::mul(s, a).value().data, (std::vector<double>{10.0, 20.0, 30.0, 40.0}));
  EXPECT_EQ(ag::sub(a, s).value().data, (std::vector<double>{-9.0, -8.0, -7.0, -6.0}));
  EXPECT_THROW(ag::add(a, Node::constant(Array(Shape{3}))), vd::ContractError);
}

TEST(Elementwise, DomainErrors) {
  EXPECT_THROW(ag::log(Node::constant(Array(Shape{2}, {1.0, 0.0}))), vd::DomainError);
  EXPECT_THROW(ag::sqrt(Node::constant(Array(Shape{1}, {-1.0}))), vd::DomainError);
}

TEST(Gradients, BinaryOps) {
  ParameterStore store;
  store.add("a", random_array({2, 3}, 1));
  store.add("b", random_array({2, 3}, 2));
  store.add("s", Array::scalar(0.7));
  EXPECT_LT(check(store, [](const ParameterStore& p) { return probe(ag::add(p.at("a"), p.at("b")), 9); }), 1e-5);
  EXPECT_LT(check(store, [](const ParameterStore& p) { return probe(ag::sub(p.at("a"), p.at("b")), 9); }), 1e-5);
  EXPECT_LT(check(store, [](const ParameterStore& p) { return probe(ag::mul(p.at("a"), p.at("b")), 9); }), 1e-5);
  EXPECT_LT(check(store, [](const ParameterStore& p) { return probe(ag::mul(p.at("s"), p.at("b")), 9); }), 1e-5);
  EXPECT_LT(check(store, [](const ParameterStore& p) { return probe(ag::sub(p.at("a"), p.at("s")), 9); }), 1e-5);
}

TEST(Gradients, UnaryOps) {
  ParameterStore store;
  store.add("x", random_array({4, 5}, 3));
  store.add("pos", random_array({4, 5}, 4, 0.2, 3.0));
  const std::vector<std::function<Node(const ParameterStore&)>> cases = {
      [](const ParameterStore& p) { return probe(ag::log(p.at("pos")), 5); },
      [](const ParameterStore& p) { return probe(ag::sigmoid(p.at("x")), 5); },
      [](const ParameterStore& p) { return probe(ag::leaky_relu(p.at("x"), 0.01), 5); },
      [](const ParameterStore& p) { return probe(ag::square(p.at("x")), 5); },
      [](const ParameterStore& p) { return probe(ag::sqrt(p.at("pos")), 5); },
      [](const ParameterStore& p) { return probe(ag::scale(p.at("x"), -2.5), 5); },
      [](const ParameterStore& p) { return probe(ag::add_scalar(p.at("x"), 0.3), 5); },
      [](const ParameterStore& p) { return probe(ag::clamp_min(p.at("x"), 0.1), 5); },
      [](const ParameterStore& p) { return probe(ag::reshape(p.at("x"), {5, 4}), 5); },
  };
  for (std::size_t i = 0; i < cases.size(); ++i) EXPECT_LT(check(store, cases[i]), 1e-5) << "case " << i;
}

TEST(Gradients, StraightThroughClamp) {
  ParameterStore store;
  store.add("x", Array(Shape{3}, {-0.5, 0.2, 2.0}));
  store.zero_grad();
  const Node y = ag::clamp_min(store.at("x"), 1.0, true);
  EXPECT_EQ(y.value().data, (std::vector<double>{1.0, 1.0, 2.0}));
  ag::backward(ag::reduce_sum(ag::scale(y, 3.0)));
  EXPECT_EQ(store.at("x").grad().data, (std::vector<double>{3.0, 3.0, 3.0}));

  store.zero_grad();
  ag::backward(ag::reduce_sum(ag::scale(ag::clamp_min(store.at("x"), 1.0), 3.0)));
  EXPECT_EQ(store.at("x").grad().data, (std::vector<double>{0.0, 0.0, 3.0}));
}

TEST(Gradients, SqrtAtZeroIsFinite) {
  ParameterStore store;
  store.add("x", Array::scalar(0.0));
  store.zero_grad();
  ag::backward(ag::sqrt(store.at("x")));
  EXPECT_TRUE(std::isfinite(store.at("x").grad()[0]));
}

TEST(Gradients, Conv2d) {
  for (const auto& [stride, pad, k] : {std::tuple{1, 1, 3}, std::tuple{2, 1, 3}, std::tuple{1, 0, 1}, std::tuple{2, 0, 2}}) {
    ParameterStore store;
    store.add("x", random_array({3, 7, 6}, 10));
    store.add("w", random_array({4, 3, k, k}, 11));
    store.add("b", random_array({4}, 12));
    const double err = check(store, [s = stride, p = pad](const ParameterStore& ps) {
      return probe(ag::add_bias(ag::conv2d(ps.at("x"), ps.at("w"), s, p), ps.at("b")), 13);
    });
    EXPECT_LT(err, 1e-5) << "stride " << stride << " pad " << pad << " k " << k;
  }
}

TEST(Conv2d, MatchesHandComputedValue) {
  // 1×3×3 input, single 3×3 kernel of ones, padding 1: centre sees all nine.
  const Node x = Node::constant(Array(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  const Node w = Node::constant(Array(Shape{1, 1, 3, 3}, 1.0));
  const Node y = ag::conv2d(x, w, 1, 1);
  EXPECT_DOUBLE_EQ(y.value()[4], 45.0);
  EXPECT_DOUBLE_EQ(y.value()[0], 1 + 2 + 4 + 5);
  EXPECT_THROW(ag::conv2d(x, Node::constant(Array(Shape{1, 2, 3, 3})), 1, 1), vd::ContractError);
}

TEST(Gradients, Structural) {
  ParameterStore store;
  store.add("x", random_array({3, 4, 5}, 20));
  store.add("y", random_array({2, 4, 5}, 21));
  store.add("g", random_array({3}, 22, 0.1, 1.0));
  const std::vector<std::function<Node(const ParameterStore&)>> cases = {
      [](const ParameterStore& p) { return probe(ag::bilinear_resize(p.at("x"), 8, 10), 7); },
      [](const ParameterStore& p) { return probe(ag::bilinear_resize(p.at("x"), 3, 7), 7); },
      [](const ParameterStore& p) { return probe(ag::concat({p.at("x"), p.at("y")}), 7); },
      [](const ParameterStore& p) { return probe(ag::scale_channels(p.at("x"), p.at("g")), 7); },
      [](const ParameterStore& p) { return probe(ag::reduce_mean(p.at("x"), {1, 2}), 7); },
      [](const ParameterStore& p) { return probe(ag::reduce_sum(p.at("x"), {0}), 7); },
      [](const ParameterStore& p) { return ag::reduce_mean(ag::square(p.at("y"))); },
  };
  for (std::size_t i = 0; i < cases.size(); ++i) EXPECT_LT(check(store, cases[i]), 1e-5) << "case " << i;
}

TEST(Reduce, ShapesAndErrors) {
  const Node x = Node::constant(Array(Shape{2, 3, 4}, 1.0));
  EXPECT_EQ(ag::reduce_sum(x).shape(), (Shape{1}));
  EXPECT_DOUBLE_EQ(ag::reduce_sum(x).item(), 24.0);
  EXPECT_EQ(ag::reduce_mean(x, {1, 2}).shape(), (Shape{2}));
  EXPECT_EQ(ag::reduce_sum(x, {1}).shape(), (Shape{2, 4}));
  EXPECT_THROW(ag::reduce_sum(x, std::vector<int>{}), vd::ContractError);
  EXPECT_THROW(ag::reduce_sum(x, {3}), vd::ContractError);
  EXPECT_THROW(ag::reduce_sum(x, {1, 1}), vd::ContractError);
}

TEST(Bilinear, IdentityAndConstantPreserving) {
  const Array a = random_array({2, 4, 4}, 30);
  const Node x = Node::constant(a);
  EXPECT_EQ(ag::bilinear_resize(x, 4, 4).value().data, a.data);
  const Node c = ag::bilinear_resize(Node::constant(Array(Shape{1, 3, 5}, 2.5)), 7, 9);
  for (double v : c.value().data) EXPECT_NEAR(v, 2.5, 1e-15);
}

TEST(Backward, SharedSubgraphVisitedOnce) {
  ParameterStore store;
  store.add("x", Array::scalar(3.0));
  store.zero_grad();
  const Node sq = ag::square(store.at("x"));
  const Node y = ag::add(sq, ag::mul(sq, sq));  // x² + x⁴
  const std::size_t visited = ag::backward(y);
  EXPECT_EQ(visited, 3u);  // add, mul, square
  EXPECT_DOUBLE_EQ(store.at("x").grad()[0], 2 * 3.0 + 4 * 27.0);
}

TEST(Backward, LeavesAccumulateAcrossPasses) {
  ParameterStore store;
  store.add("x", Array::scalar(2.0));
  store.zero_grad();
  ag::backward(ag::square(store.at("x")));
  ag::backward(ag::square(store.at("x")));
  EXPECT_DOUBLE_EQ(store.at("x").grad()[0], 8.0);
  EXPECT_THROW(ag::backward(Node::constant(Array(Shape{2}))), vd::ContractError);
}

TEST(ParameterStore, NamesAreUniqueAndSorted) {
  ParameterStore store;
  store.add("b", Array(Shape{2}));
  store.add("a", Array(Shape{3}));
  EXPECT_THROW(store.add("a", Array(Shape{1})), vd::ContractError);
  EXPECT_EQ(store.names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(store.scalar_count(), 5u);
  EXPECT_THROW(store.at("missing"), vd::ContractError);
}

TEST(FiniteDifference, DetectsAWrongGradient) {
  // A hand-broken op: value x², gradient reported as x.
  ParameterStore store;
  store.add("x", Array::scalar(1.5));
  const double err = ag::finite_difference_check(
      [](const ParameterStore& p) {
        const Node& x = p.at("x");
        return ag::add(ag::scale(ag::square(x), 0.5), Node::constant(Array::scalar(0.5 * x.value()[0] * x.value()[0])));
      },
      store);
  EXPECT_GT(err, 0.1);
}
