#include "vd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "vd/error.hpp"
#include "vd/kernels.hpp"

namespace vd::ag {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& s) {
  if (s.empty()) throw ContractError("array shape must have at least one axis");
  for (int e : s)
    if (e <= 0) throw ContractError("array extents must be positive, got " + shape_str(s));
}

}  // namespace

Array::Array(Shape s, double fill) : shape(std::move(s)) {
  check_shape(shape);
  data.assign(numel(shape), fill);
}

Array::Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  check_shape(shape);
  if (data.size() != numel(shape))
    throw ContractError("array data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kLog: return "log";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kClampMin: return "clamp_min";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kReduceSum: return "reduce_sum";
    case OpKind::kReduceMean: return "reduce_mean";
    case OpKind::kBilinearResize: return "bilinear_resize";
    case OpKind::kConcat: return "concat";
    case OpKind::kScaleChannels: return "scale_channels";
    case OpKind::kReshape: return "reshape";
  }
  return "?";
}

namespace detail {

Array& NodeImpl::grad_buffer() {
  if (grad.size() != value.size()) grad = Array(value.shape, 0.0);
  return grad;
}

}  // namespace detail

using detail::NodeImpl;
using ImplPtr = std::shared_ptr<NodeImpl>;

Node Node::wrap(std::shared_ptr<detail::NodeImpl> impl) {
  Node n;
  n.impl_ = std::move(impl);
  return n;
}

Node Node::constant(Array value) {
  auto impl = std::make_shared<NodeImpl>();
  impl->value = std::move(value);
  return wrap(std::move(impl));
}

Node Node::parameter(Array value) {
  auto impl = std::make_shared<NodeImpl>();
  impl->value = std::move(value);
  impl->requires_grad = true;
  return wrap(std::move(impl));
}

double Node::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar node " + shape_str(shape()));
  return impl_->value[0];
}

Array Node::grad() const {
  if (impl_->grad.size() == impl_->value.size()) return impl_->grad;
  return Array(impl_->value.shape, 0.0);
}

void Node::zero_grad() {
  if (impl_->grad.size() == impl_->value.size())
    std::fill(impl_->grad.data.begin(), impl_->grad.data.end(), 0.0);
}

Array& Node::mutable_value() { return impl_->value; }

namespace {

Node make_node(Array value, OpKind op, std::vector<ImplPtr> inputs,
               std::function<void(NodeImpl&)> backward_fn) {
  auto impl = std::make_shared<NodeImpl>();
  impl->value = std::move(value);
  impl->op = op;
  impl->requires_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const ImplPtr& p) { return p->requires_grad; });
  if (impl->requires_grad) {
    impl->inputs = std::move(inputs);
    impl->backward = std::move(backward_fn);
  }
  return Node::wrap(std::move(impl));
}

// Adds `g` (sized like the op output) into the gradient of `in`, summing
// when `in` is a broadcast single element.
void accumulate(NodeImpl& in, std::span<const double> g) {
  if (!in.requires_grad) return;
  Array& buf = in.grad_buffer();
  if (buf.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  } else {
    buf[0] += std::accumulate(g.begin(), g.end(), 0.0);
  }
}

Shape broadcast_shape(const Node& a, const Node& b, const char* what) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == 1) return b.shape();
  throw ContractError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
}

inline double at_bc(const Array& a, std::size_t i) { return a.size() == 1 ? a[0] : a[i]; }

template <typename F, typename D>
Node unary(const Node& x, OpKind op, F f, D dfdx) {
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_node(std::move(out), op, {x.impl()}, [dfdx](NodeImpl& self) {
    NodeImpl& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Array& gi = in.grad_buffer();
    for (std::size_t i = 0; i < gi.size(); ++i)
      gi[i] += self.grad[i] * dfdx(in.value[i], self.value[i]);
  });
}

}  // namespace

Node add(const Node& a, const Node& b) {
  Array out(broadcast_shape(a, b, "add"));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at_bc(a.value(), i) + at_bc(b.value(), i);
  return make_node(std::move(out), OpKind::kAdd, {a.impl(), b.impl()}, [](NodeImpl& self) {
    accumulate(*self.inputs[0], self.grad.span());
    accumulate(*self.inputs[1], self.grad.span());
  });
}

Node sub(const Node& a, const Node& b) {
  Array out(broadcast_shape(a, b, "sub"));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at_bc(a.value(), i) - at_bc(b.value(), i);
  return make_node(std::move(out), OpKind::kSub, {a.impl(), b.impl()}, [](NodeImpl& self) {
    accumulate(*self.inputs[0], self.grad.span());
    if (self.inputs[1]->requires_grad) {
      std::vector<double> neg(self.grad.data);
      for (double& v : neg) v = -v;
      accumulate(*self.inputs[1], neg);
    }
  });
}

Node mul(const Node& a, const Node& b) {
  Array out(broadcast_shape(a, b, "mul"));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at_bc(a.value(), i) * at_bc(b.value(), i);
  return make_node(std::move(out), OpKind::kMul, {a.impl(), b.impl()}, [](NodeImpl& self) {
    const Array& av = self.inputs[0]->value;
    const Array& bv = self.inputs[1]->value;
    std::vector<double> g(self.grad.size());
    if (self.inputs[0]->requires_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * at_bc(bv, i);
      accumulate(*self.inputs[0], g);
    }
    if (self.inputs[1]->requires_grad) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * at_bc(av, i);
      accumulate(*self.inputs[1], g);
    }
  });
}

Node log(const Node& x) {
  for (double v : x.value().data)
    if (!(v > 0.0)) throw DomainError("log of nonpositive value " + std::to_string(v));
  return unary(
      x, OpKind::kLog, [](double v) { return std::log(v); },
      [](double in, double) { return 1.0 / in; });
}

Node sigmoid(const Node& x) {
  return unary(
      x, OpKind::kSigmoid, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double out) { return out * (1.0 - out); });
}

Node leaky_relu(const Node& x, double slope) {
  return unary(
      x, OpKind::kLeakyRelu, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double in, double) { return in > 0.0 ? 1.0 : slope; });
}

Node square(const Node& x) {
  return unary(
      x, OpKind::kSquare, [](double v) { return v * v; },
      [](double in, double) { return 2.0 * in; });
}

// The derivative at exactly 0 is taken as 0 so that a perfect fit yields a
// zero (not NaN) gradient.
Node sqrt(const Node& x) {
  for (double v : x.value().data)
    if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
  return unary(
      x, OpKind::kSqrt, [](double v) { return std::sqrt(v); },
      [](double, double out) { return out > 0.0 ? 0.5 / out : 0.0; });
}

Node scale(const Node& x, double factor) {
  return unary(
      x, OpKind::kScale, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Node add_scalar(const Node& x, double offset) {
  return unary(
      x, OpKind::kAddScalar, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Node clamp_min(const Node& x, double floor, bool straight_through) {
  return unary(
      x, OpKind::kClampMin, [floor](double v) { return v < floor ? floor : v; },
      [floor, straight_through](double in, double) {
        return (in >= floor || straight_through) ? 1.0 : 0.0;
      });
}

Node conv2d(const Node& input, const Node& kernel, int stride, int padding) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 3 || ks.size() != 4)
    throw ContractError("conv2d expects C×H×W input and O×C×k×k kernel, got " + shape_str(is) +
                        " and " + shape_str(ks));
  if (ks[1] != is[0] || ks[2] != ks[3])
    throw ContractError("conv2d kernel " + shape_str(ks) + " incompatible with input " +
                        shape_str(is));
  if (stride <= 0 || padding < 0)
    throw ContractError("conv2d needs stride > 0 and padding >= 0");
  if (ks[2] > is[1] + 2 * padding || ks[2] > is[2] + 2 * padding)
    throw ContractError("conv2d kernel larger than padded input");

  kernels::ConvGeometry g{is[0], is[1], is[2], ks[0], ks[2], stride, padding};
  Array out(Shape{g.out_c, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, input.value().span(), kernel.value().span(), out.span());
  return make_node(std::move(out), OpKind::kConv2d, {input.impl(), kernel.impl()},
                   [g](NodeImpl& self) {
                     NodeImpl& in = *self.inputs[0];
                     NodeImpl& ker = *self.inputs[1];
                     if (in.requires_grad)
                       kernels::conv2d_backward_input(g, ker.value.span(), self.grad.span(),
                                                      in.grad_buffer().span());
                     if (ker.requires_grad)
                       kernels::conv2d_backward_kernel(g, in.value.span(), self.grad.span(),
                                                       ker.grad_buffer().span());
                   });
}

Node add_bias(const Node& x, const Node& bias) {
  const Shape& s = x.shape();
  if ((s.size() != 3 && s.size() != 1) || bias.size() != static_cast<std::size_t>(s[0]))
    throw ContractError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(s));
  const std::size_t plane = x.size() / static_cast<std::size_t>(s[0]);
  Array out = x.value();
  for (int c = 0; c < s[0]; ++c)
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += bias.value()[c];
  return make_node(std::move(out), OpKind::kAddBias, {x.impl(), bias.impl()},
                   [plane](NodeImpl& self) {
                     accumulate(*self.inputs[0], self.grad.span());
                     NodeImpl& b = *self.inputs[1];
                     if (!b.requires_grad) return;
                     Array& gb = b.grad_buffer();
                     for (std::size_t c = 0; c < gb.size(); ++c) {
                       double acc = 0.0;
                       for (std::size_t i = 0; i < plane; ++i) acc += self.grad[c * plane + i];
                       gb[c] += acc;
                     }
                   });
}

namespace {

// Maps every input element to its output slot for a reduction over `axes`.
struct ReducePlan {
  Shape out_shape;
  std::vector<std::size_t> target;
  std::size_t reduced_count = 1;
};

ReducePlan plan_reduce(const Shape& in, const std::vector<int>& axes) {
  if (axes.empty()) throw ContractError("reduce: empty reduction axis set");
  std::vector<bool> reduced(in.size(), false);
  for (int a : axes) {
    if (a < 0 || a >= static_cast<int>(in.size()) || reduced[static_cast<std::size_t>(a)])
      throw ContractError("reduce: invalid axis " + std::to_string(a) + " for shape " +
                          shape_str(in));
    reduced[static_cast<std::size_t>(a)] = true;
  }
  ReducePlan plan;
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (reduced[d])
      plan.reduced_count *= static_cast<std::size_t>(in[d]);
    else
      plan.out_shape.push_back(in[d]);
  }
  if (plan.out_shape.empty()) plan.out_shape = {1};

  // Output strides expressed per input axis (0 on reduced axes).
  std::vector<std::size_t> out_stride(in.size(), 0);
  std::size_t stride = 1;
  for (std::size_t d = in.size(); d-- > 0;) {
    if (!reduced[d]) {
      out_stride[d] = stride;
      stride *= static_cast<std::size_t>(in[d]);
    }
  }
  const std::size_t n = numel(in);
  plan.target.resize(n);
  std::vector<int> idx(in.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t t = 0;
    for (std::size_t d = 0; d < in.size(); ++d) t += static_cast<std::size_t>(idx[d]) * out_stride[d];
    plan.target[i] = t;
    for (std::size_t d = in.size(); d-- > 0;) {
      if (++idx[d] < in[d]) break;
      idx[d] = 0;
    }
  }
  return plan;
}

Node reduce_impl(const Node& x, const std::vector<int>& axes, bool mean) {
  auto plan = std::make_shared<ReducePlan>(plan_reduce(x.shape(), axes));
  const double factor = mean ? 1.0 / static_cast<double>(plan->reduced_count) : 1.0;
  Array out(plan->out_shape);
  const Array& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[plan->target[i]] += xv[i];
  if (mean)
    for (double& v : out.data) v *= factor;
  return make_node(std::move(out), mean ? OpKind::kReduceMean : OpKind::kReduceSum, {x.impl()},
                   [plan, factor](NodeImpl& self) {
                     NodeImpl& in = *self.inputs[0];
                     if (!in.requires_grad) return;
                     Array& gi = in.grad_buffer();
                     for (std::size_t i = 0; i < gi.size(); ++i)
                       gi[i] += self.grad[plan->target[i]] * factor;
                   });
}

std::vector<int> all_axes(const Node& x) {
  std::vector<int> axes(x.shape().size());
  std::iota(axes.begin(), axes.end(), 0);
  return axes;
}

}  // namespace

Node reduce_sum(const Node& x) { return reduce_impl(x, all_axes(x), false); }
Node reduce_sum(const Node& x, const std::vector<int>& axes) { return reduce_impl(x, axes, false); }
Node reduce_mean(const Node& x) { return reduce_impl(x, all_axes(x), true); }
Node reduce_mean(const Node& x, const std::vector<int>& axes) { return reduce_impl(x, axes, true); }

Node bilinear_resize(const Node& x, int out_h, int out_w) {
  const Shape& s = x.shape();
  if (s.size() != 3) throw ContractError("bilinear_resize expects C×H×W, got " + shape_str(s));
  if (out_h < 1 || out_w < 1) throw ContractError("bilinear_resize target must be >= 1");
  const int c = s[0], h = s[1], w = s[2];
  if (h == out_h && w == out_w) {
    return make_node(x.value(), OpKind::kBilinearResize, {x.impl()},
                     [](NodeImpl& self) { accumulate(*self.inputs[0], self.grad.span()); });
  }
  Array out(Shape{c, out_h, out_w});
  kernels::bilinear_forward(c, h, w, out_h, out_w, x.value().span(), out.span());
  return make_node(std::move(out), OpKind::kBilinearResize, {x.impl()},
                   [c, h, w, out_h, out_w](NodeImpl& self) {
                     NodeImpl& in = *self.inputs[0];
                     if (!in.requires_grad) return;
                     kernels::bilinear_backward(c, h, w, out_h, out_w, self.grad.span(),
                                                in.grad_buffer().span());
                   });
}

Node concat(const std::vector<Node>& parts) {
  if (parts.empty()) throw ContractError("concat of zero parts");
  Shape s = parts[0].shape();
  int lead = 0;
  std::vector<ImplPtr> inputs;
  for (const Node& p : parts) {
    const Shape& ps = p.shape();
    if (ps.size() != s.size() || !std::equal(ps.begin() + 1, ps.end(), s.begin() + 1))
      throw ContractError("concat: trailing shape mismatch " + shape_str(ps) + " vs " +
                          shape_str(s));
    lead += ps[0];
    inputs.push_back(p.impl());
  }
  s[0] = lead;
  Array out(s);
  std::size_t off = 0;
  for (const Node& p : parts) {
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += p.size();
  }
  return make_node(std::move(out), OpKind::kConcat, std::move(inputs), [](NodeImpl& self) {
    std::size_t o = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->value.size();
      accumulate(*in, std::span<const double>(self.grad.data).subspan(o, n));
      o += n;
    }
  });
}

Node scale_channels(const Node& x, const Node& gate) {
  const Shape& s = x.shape();
  if (s.size() != 3 || gate.size() != static_cast<std::size_t>(s[0]))
    throw ContractError("scale_channels: gate " + shape_str(gate.shape()) + " vs input " +
                        shape_str(s));
  const std::size_t plane = static_cast<std::size_t>(s[1]) * s[2];
  Array out(s);
  for (int c = 0; c < s[0]; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      out[c * plane + i] = x.value()[c * plane + i] * gate.value()[c];
  return make_node(std::move(out), OpKind::kScaleChannels, {x.impl(), gate.impl()},
                   [plane](NodeImpl& self) {
                     NodeImpl& xi = *self.inputs[0];
                     NodeImpl& gi = *self.inputs[1];
                     const std::size_t channels = gi.value.size();
                     if (xi.requires_grad) {
                       Array& gx = xi.grad_buffer();
                       for (std::size_t c = 0; c < channels; ++c)
                         for (std::size_t i = 0; i < plane; ++i)
                           gx[c * plane + i] += self.grad[c * plane + i] * gi.value[c];
                     }
                     if (gi.requires_grad) {
                       Array& gg = gi.grad_buffer();
                       for (std::size_t c = 0; c < channels; ++c) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < plane; ++i)
                           acc += self.grad[c * plane + i] * xi.value[c * plane + i];
                         gg[c] += acc;
                       }
                     }
                   });
}

Node reshape(const Node& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ContractError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Array out(std::move(shape), x.value().data);
  return make_node(std::move(out), OpKind::kReshape, {x.impl()},
                   [](NodeImpl& self) { accumulate(*self.inputs[0], self.grad.span()); });
}

std::size_t backward(const Node& root) {
  if (!root) throw ContractError("backward on empty node");
  if (root.size() != 1)
    throw ContractError("backward root must be scalar, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return 0;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<NodeImpl*> order;
  std::unordered_set<NodeImpl*> seen;
  std::vector<std::pair<NodeImpl*, std::size_t>> stack;
  stack.emplace_back(root.impl().get(), 0);
  seen.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeImpl* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients belong to this pass only; leaves keep accumulating.
  for (NodeImpl* n : order) {
    if (n->backward) {
      Array& g = n->grad_buffer();
      std::fill(g.data.begin(), g.data.end(), 0.0);
    }
  }
  root.impl()->grad_buffer()[0] += 1.0;

  std::size_t visited = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeImpl* n = *it;
    if (!n->backward) continue;
    n->backward(*n);
    ++visited;
  }
  return visited;
}

Node& ParameterStore::add(const std::string& name, Array value) {
  if (params_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
  return params_.emplace(name, Node::parameter(std::move(value))).first->second;
}

const Node& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Node& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, node] : params_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, node] : params_) n += node.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, node] : params_) node.zero_grad();
}

double finite_difference_check(const ScalarObjective& f, ParameterStore& store,
                               const GradCheckOptions& options) {
  store.zero_grad();
  const Node root = f(store);
  if (!std::isfinite(root.item())) throw DomainError("objective is not finite");
  backward(root);

  std::mt19937_64 rng(options.seed);
  double worst = 0.0;
  for (auto& [name, node] : store) {
    const Array analytic = node.grad();
    Array& x = node.mutable_value();
    std::vector<std::size_t> probe(x.size());
    std::iota(probe.begin(), probe.end(), 0);
    if (options.max_elements_per_param > 0 && probe.size() > options.max_elements_per_param) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(options.max_elements_per_param);
    }
    for (std::size_t i : probe) {
      const double orig = x[i];
      const double h = options.eps * std::max(1.0, std::abs(orig));
      const double up = orig + h;
      const double down = orig - h;
      x[i] = up;
      const double fp = f(store).item();
      x[i] = down;
      const double fm = f(store).item();
      x[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw DomainError("objective is not finite near parameter '" + name + "'");
      const double numeric = (fp - fm) / (up - down);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
    }
  }
  return worst;
}

}  // namespace vd::ag
