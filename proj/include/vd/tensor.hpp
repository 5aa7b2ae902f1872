#pragma once

// Dense double-precision arrays and a small reverse-mode autodiff graph.
//
// Nodes are cheap shared handles. Operations build new nodes that record
// their inputs and a backward closure; backward() walks the graph once in
// reverse topological order and accumulates (+=) into every node that
// requires a gradient.

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vd::ag {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s, double fill = 0.0);
  Array(Shape s, std::vector<double> values);

  static Array scalar(double v) { return Array(Shape{1}, v); }

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }
};

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kLog,
  kSigmoid,
  kLeakyRelu,
  kSquare,
  kSqrt,
  kScale,
  kAddScalar,
  kClampMin,
  kConv2d,
  kAddBias,
  kReduceSum,
  kReduceMean,
  kBilinearResize,
  kConcat,
  kScaleChannels,
  kReshape,
};

const char* op_name(OpKind kind);

namespace detail {

struct NodeImpl {
  Array value;
  Array grad;  // allocated on first accumulation
  OpKind op = OpKind::kLeaf;
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeImpl>> inputs;
  std::function<void(NodeImpl& self)> backward;

  // Lazily sized accumulator for the gradient.
  Array& grad_buffer();
};

}  // namespace detail

class Node {
 public:
  Node() = default;

  static Node constant(Array value);
  static Node parameter(Array value);

  const Array& value() const { return impl_->value; }
  const Shape& shape() const { return impl_->value.shape; }
  std::size_t size() const { return impl_->value.size(); }
  bool requires_grad() const { return impl_->requires_grad; }
  OpKind op() const { return impl_->op; }
  double item() const;

  // Gradient accumulated so far; zeros when nothing has been accumulated.
  Array grad() const;
  void zero_grad();

  // In-place access for optimizers and finite-difference probes. Only valid
  // on leaves; mutating a node that feeds a live graph invalidates it.
  Array& mutable_value();

  explicit operator bool() const { return static_cast<bool>(impl_); }
  bool same_as(const Node& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::NodeImpl>& impl() const { return impl_; }
  static Node wrap(std::shared_ptr<detail::NodeImpl> impl);

 private:
  std::shared_ptr<detail::NodeImpl> impl_;
};

// ---- elementwise ---------------------------------------------------------
// Binary ops accept equal shapes or a single-element operand on either side.
Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
Node mul(const Node& a, const Node& b);
Node log(const Node& x);
Node sigmoid(const Node& x);
Node leaky_relu(const Node& x, double slope = 0.01);
Node square(const Node& x);
Node sqrt(const Node& x);
Node scale(const Node& x, double factor);
Node add_scalar(const Node& x, double offset);

// max(x, floor) in value. With straight_through the incoming gradient is
// passed unchanged below the floor; otherwise it is zeroed there.
Node clamp_min(const Node& x, double floor, bool straight_through = false);

// ---- structural ----------------------------------------------------------
// input C×H×W, kernel O×C×k×k, zero padding.
Node conv2d(const Node& input, const Node& kernel, int stride, int padding);
// x C×H×W (or C), bias C.
Node add_bias(const Node& x, const Node& bias);
// Without axes the reduction covers every axis and yields shape {1}. An
// explicit axis list must be nonempty, unique and in range.
Node reduce_sum(const Node& x);
Node reduce_sum(const Node& x, const std::vector<int>& axes);
Node reduce_mean(const Node& x);
Node reduce_mean(const Node& x, const std::vector<int>& axes);
// Half-pixel (align_corners = false) bilinear sampling with edge clamping.
Node bilinear_resize(const Node& x, int out_h, int out_w);
// Concatenate along axis 0.
Node concat(const std::vector<Node>& parts);
// x C×H×W times per-channel gate g (C).
Node scale_channels(const Node& x, const Node& gate);
Node reshape(const Node& x, Shape shape);

// Runs reverse-mode accumulation from a single-element root. Returns the
// number of graph nodes whose backward closure ran (each at most once).
std::size_t backward(const Node& root);

// ---- parameters ----------------------------------------------------------

class ParameterStore {
 public:
  Node& add(const std::string& name, Array value);
  const Node& at(const std::string& name) const;
  Node& at(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  std::vector<std::string> names() const;
  std::size_t count() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

 private:
  std::map<std::string, Node> params_;
};

using ScalarObjective = std::function<Node(const ParameterStore&)>;

struct GradCheckOptions {
  double eps = 1e-6;
  // Per-parameter cap on probed elements (0 = all). Probed indices are
  // chosen deterministically from `seed`.
  std::size_t max_elements_per_param = 0;
  unsigned seed = 0;
};

// Max over probed elements of |analytic - central difference| / max(1, |analytic|).
// The step is eps scaled by max(1, |x|).
double finite_difference_check(const ScalarObjective& f, ParameterStore& store,
                               const GradCheckOptions& options = {});

}  // namespace vd::ag
