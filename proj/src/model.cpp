#include "vd/model.hpp"

#include <algorithm>
#include <cmath>

#include "vd/error.hpp"
#include "vd/rng.hpp"

namespace vd::model {

using ag::Array;
using ag::Node;
using ag::Shape;

namespace {

int fusion_hidden(int channels) { return std::max(4, channels / 4); }

}  // namespace

void ModelConfig::validate() const {
  if (depth_channels < 1) throw ContractError("model needs at least one depth channel");
  if (widths.empty()) throw ContractError("model needs at least one encoder stage");
  for (int w : widths)
    if (w < 1) throw ContractError("encoder widths must be positive");
  if (heads < 1 || heads > stages())
    throw ContractError("head count " + std::to_string(heads) + " must lie in [1, " +
                        std::to_string(stages()) + "]");
  for (int s : fusion_stages)
    if (s < 0 || s >= stages()) throw ContractError("fusion stage " + std::to_string(s) + " out of range");
  if (head_n < 1 || decoder_width < 1 || full_res_width < 1)
    throw ContractError("decoder widths and head_n must be positive");
  if (maxd_conditioning && maxd_width < 1) throw ContractError("maxd vector width must be positive");
  if (!(slope >= 0.0 && slope < 1.0)) throw ContractError("leaky slope must lie in [0, 1)");
}

bool ModelConfig::fuses(int stage) const {
  return std::find(fusion_stages.begin(), fusion_stages.end(), stage) != fusion_stages.end();
}

std::vector<double> ModelConfig::to_vector() const {
  std::vector<double> v{static_cast<double>(depth_channels), static_cast<double>(widths.size())};
  for (int w : widths) v.push_back(w);
  v.push_back(static_cast<double>(fusion_stages.size()));
  for (int s : fusion_stages) v.push_back(s);
  v.insert(v.end(), {static_cast<double>(heads), static_cast<double>(head_n),
                     static_cast<double>(decoder_width), static_cast<double>(full_res_width),
                     rgb_frozen ? 1.0 : 0.0, maxd_conditioning ? 1.0 : 0.0,
                     static_cast<double>(maxd_width), slope});
  return v;
}

ModelConfig ModelConfig::from_vector(const std::vector<double>& v) {
  std::size_t i = 0;
  auto next = [&]() {
    if (i >= v.size()) throw FormatError("model config record is truncated");
    return v[i++];
  };
  auto next_int = [&]() {
    const double x = next();
    if (x != std::floor(x) || std::abs(x) > 1e9) throw FormatError("model config field is not an integer");
    return static_cast<int>(x);
  };
  ModelConfig c;
  c.depth_channels = next_int();
  c.widths.assign(static_cast<std::size_t>(std::max(0, next_int())), 0);
  for (int& w : c.widths) w = next_int();
  c.fusion_stages.assign(static_cast<std::size_t>(std::max(0, next_int())), 0);
  for (int& s : c.fusion_stages) s = next_int();
  c.heads = next_int();
  c.head_n = next_int();
  c.decoder_width = next_int();
  c.full_res_width = next_int();
  c.rgb_frozen = next() != 0.0;
  c.maxd_conditioning = next() != 0.0;
  c.maxd_width = next_int();
  c.slope = next();
  if (i != v.size()) throw FormatError("model config record has trailing fields");
  c.validate();
  return c;
}

RgbdModel::RgbdModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x30de1));
  // Weights and biases both draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  auto conv = [&](const std::string& prefix, int out, int in, int k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    Array w(Shape{out, in, k, k}), b(Shape{out});
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    for (double& v : b.data) v = rng.uniform(-bound, bound);
    params_.add(prefix + ".w", std::move(w));
    params_.add(prefix + ".b", std::move(b));
  };

  const int stages = cfg_.stages();
  int rgb_in = 3, depth_in = cfg_.depth_channels;
  for (int k = 0; k < stages; ++k) {
    const int width = cfg_.widths[static_cast<std::size_t>(k)];
    const std::string sk = ".stage" + std::to_string(k);
    conv("rgb" + sk, width, rgb_in, 3);
    conv("depth" + sk, width, depth_in, 3);
    if (cfg_.fuses(k)) {
      const int cat = 2 * width;
      conv("fuse" + sk + ".fc1", fusion_hidden(cat), cat, 1);
      conv("fuse" + sk + ".fc2", cat, fusion_hidden(cat), 1);
      conv("fuse" + sk + ".proj", width, cat, 1);
    }
    rgb_in = depth_in = width;
  }
  if (cfg_.maxd_conditioning) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.maxd_width));
    Array w(Shape{cfg_.widths[0], cfg_.maxd_width, 1, 1});
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    params_.add("maxd.proj.w", std::move(w));
  }

  const int dw = cfg_.decoder_width;
  for (int k = 0; k < stages; ++k)
    conv("dec.lat" + std::to_string(k), dw, cfg_.widths[static_cast<std::size_t>(k)], 1);
  conv("dec.up", cfg_.full_res_width, dw, 1);
  conv("dec.full", cfg_.full_res_width, 3 + cfg_.depth_channels, 1);
  for (int s = 0; s < cfg_.heads; ++s)
    conv("head.s" + std::to_string(s), cfg_.head_n, s == 0 ? cfg_.full_res_width : dw, 3);
}

bool RgbdModel::is_rgb_param(const std::string& name) { return name.rfind("rgb.", 0) == 0; }

std::vector<std::string> RgbdModel::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [name, node] : params_)
    if (!(cfg_.rgb_frozen && is_rgb_param(name))) out.push_back(name);
  return out;
}

RgbdModel build_model(const ModelConfig& cfg, std::uint64_t seed) { return RgbdModel(cfg, seed); }

FusedFeatures se_fuse(const Node& rgb_feat, const Node& depth_feat, const FusionBlockParams& block,
                      double slope) {
  const Shape& rs = rgb_feat.shape();
  const Shape& ds = depth_feat.shape();
  if (rs.size() != 3 || ds.size() != 3 || rs[1] != ds[1] || rs[2] != ds[2])
    throw ContractError("se_fuse: rgb " + ag::shape_str(rs) + " vs depth " + ag::shape_str(ds));
  const int cat_c = rs[0] + ds[0];
  if (block.fc1_w.shape().size() != 4 || block.fc1_w.shape()[1] != cat_c ||
      block.fc2_w.shape()[0] != cat_c || block.proj_w.shape()[0] != ds[0] ||
      block.proj_w.shape()[1] != cat_c)
    throw ContractError("se_fuse: block weights do not match " + std::to_string(rs[0]) + "+" +
                        std::to_string(ds[0]) + " channels");

  const Node cat = ag::concat({rgb_feat, depth_feat});
  const Node squeezed = ag::reshape(ag::reduce_mean(cat, {1, 2}), Shape{cat_c, 1, 1});
  const Node hidden = ag::leaky_relu(ag::add_bias(ag::conv2d(squeezed, block.fc1_w, 1, 0), block.fc1_b), slope);
  const Node gates = ag::reshape(
      ag::sigmoid(ag::add_bias(ag::conv2d(hidden, block.fc2_w, 1, 0), block.fc2_b)), Shape{cat_c});
  const Node gated = ag::scale_channels(cat, gates);
  const Node injected = ag::add_bias(ag::conv2d(gated, block.proj_w, 1, 0), block.proj_b);

  FusedFeatures out{ag::add(depth_feat, injected), gates, {}};
  const std::size_t split = rgb_feat.size();
  const Array& gv = gated.value();
  for (std::size_t i = 0; i < gv.size(); ++i)
    (i < split ? out.trace.rgb_l1 : out.trace.depth_l1) += std::abs(gv[i]);
  return out;
}

ForwardResult forward(const RgbdModel& model, const Array& rgb, const Array& depth_enc,
                      const pde::MaxDepthVector* maxd) {
  const ModelConfig& cfg = model.config();
  const ag::ParameterStore& ps = model.params();
  const int div = cfg.divisor();
  if (rgb.rank() != 3 || rgb.dim(0) != 3)
    throw ContractError("forward: rgb must be 3×H×W, got " + ag::shape_str(rgb.shape));
  if (depth_enc.rank() != 3 || depth_enc.dim(0) != cfg.depth_channels ||
      depth_enc.dim(1) != rgb.dim(1) || depth_enc.dim(2) != rgb.dim(2))
    throw ContractError("forward: depth input " + ag::shape_str(depth_enc.shape) + " vs rgb " +
                        ag::shape_str(rgb.shape) + " with " + std::to_string(cfg.depth_channels) +
                        " channels expected");
  const int h = rgb.dim(1), w = rgb.dim(2);
  if (h % div != 0 || w % div != 0)
    throw ContractError("forward: " + std::to_string(h) + "×" + std::to_string(w) +
                        " is not divisible by " + std::to_string(div));
  if (cfg.maxd_conditioning && maxd == nullptr)
    throw ContractError("forward: model is maxd-conditioned but no max-depth vector was given");
  if (maxd != nullptr && cfg.maxd_conditioning &&
      maxd->cells.size() != static_cast<std::size_t>(cfg.maxd_width))
    throw ContractError("forward: max-depth vector width " + std::to_string(maxd->cells.size()) +
                        ", expected " + std::to_string(cfg.maxd_width));

  // Frozen RGB weights enter the graph as constants so no gradient reaches them.
  auto param = [&](const std::string& name) -> Node {
    const Node& p = ps.at(name);
    if (cfg.rgb_frozen && RgbdModel::is_rgb_param(name)) return Node::constant(p.value());
    return p;
  };
  auto conv = [&](const Node& x, const std::string& prefix, int stride, int pad) {
    return ag::add_bias(ag::conv2d(x, param(prefix + ".w"), stride, pad), param(prefix + ".b"));
  };

  const Node rgb_in = Node::constant(rgb);
  const Node depth_in = Node::constant(depth_enc);
  ForwardResult result;
  std::vector<Node> enc;
  Node xr = rgb_in, xd = depth_in;
  for (int k = 0; k < cfg.stages(); ++k) {
    const std::string sk = ".stage" + std::to_string(k);
    const Node r = ag::leaky_relu(conv(xr, "rgb" + sk, 2, 1), cfg.slope);
    Node dpre = conv(xd, "depth" + sk, 2, 1);
    if (k == 0 && cfg.maxd_conditioning) {
      const Node cells = Node::constant(Array(Shape{cfg.maxd_width, 1, 1}, maxd->cells));
      const Node bias = ag::reshape(ag::conv2d(cells, param("maxd.proj.w"), 1, 0), Shape{cfg.widths[0]});
      dpre = ag::add_bias(dpre, bias);
    }
    Node d = ag::leaky_relu(dpre, cfg.slope);
    result.depth_pre_fusion.push_back(d);
    FusionTrace trace;
    if (cfg.fuses(k)) {
      const std::string fk = "fuse" + sk;
      const FusionBlockParams block{param(fk + ".fc1.w"), param(fk + ".fc1.b"), param(fk + ".fc2.w"),
                                    param(fk + ".fc2.b"), param(fk + ".proj.w"), param(fk + ".proj.b")};
      FusedFeatures f = se_fuse(r, d, block, cfg.slope);
      d = f.out;
      trace = f.trace;
    }
    result.fusion.push_back(trace);
    enc.push_back(d);
    xr = r;
    xd = d;
  }

  // Top-down pyramid: levels[k] lives at 1/2^(k+1) of the input.
  const int stages = cfg.stages();
  std::vector<Node> levels(static_cast<std::size_t>(stages));
  Node t = ag::leaky_relu(conv(enc.back(), "dec.lat" + std::to_string(stages - 1), 1, 0), cfg.slope);
  levels.back() = t;
  for (int k = stages - 2; k >= 0; --k) {
    const Shape& es = enc[static_cast<std::size_t>(k)].shape();
    const Node lat = conv(enc[static_cast<std::size_t>(k)], "dec.lat" + std::to_string(k), 1, 0);
    t = ag::leaky_relu(ag::add(lat, ag::bilinear_resize(t, es[1], es[2])), cfg.slope);
    levels[static_cast<std::size_t>(k)] = t;
  }
  const Node up = conv(ag::bilinear_resize(levels[0], h, w), "dec.up", 1, 0);
  const Node full = conv(ag::concat({rgb_in, depth_in}), "dec.full", 1, 0);
  const Node top = ag::leaky_relu(ag::add(up, full), cfg.slope);

  for (int s = 0; s < cfg.heads; ++s) {
    const Node& src = s == 0 ? top : levels[static_cast<std::size_t>(s - 1)];
    result.heads.push_back(conv(src, "head.s" + std::to_string(s), 1, 1));
  }
  return result;
}

std::vector<double> fusion_rgb_amplitude(const ForwardResult& result, const ModelConfig& cfg) {
  std::vector<double> out;
  for (int k = 0; k < static_cast<int>(result.fusion.size()); ++k) {
    if (!cfg.fuses(k)) continue;
    const FusionTrace& t = result.fusion[static_cast<std::size_t>(k)];
    const double total = t.rgb_l1 + t.depth_l1;
    out.push_back(total > 0.0 ? t.rgb_l1 / total : 0.0);
  }
  return out;
}

}  // namespace vd::model
