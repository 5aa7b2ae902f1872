#pragma once

// Toy dual-branch RGBD encoder with squeeze-and-excite fusion, an FPN-style
// decoder and one prediction head per output scale.

#include <cstdint>
#include <string>
#include <vector>

#include "vd/pde.hpp"
#include "vd/tensor.hpp"

namespace vd::model {

struct ModelConfig {
  int depth_channels = 32;                  // Ch, 1 for the norm baseline, 3·Ch for P3DE
  std::vector<int> widths = {16, 32, 64, 128};  // stride-2 encoder stages
  std::vector<int> fusion_stages = {0, 1, 2, 3};
  int heads = 4;                            // scales 1, 1/2, 1/4, ...
  int head_n = 4;                           // metric decode terms per pixel
  int decoder_width = 32;
  int full_res_width = 16;                  // decoder width at input resolution
  bool rgb_frozen = false;
  bool maxd_conditioning = false;
  int maxd_width = pde::kDefaultTokenWidth;
  double slope = 0.01;

  void validate() const;
  int stages() const { return static_cast<int>(widths.size()); }
  bool fuses(int stage) const;
  // Input extents must be multiples of this.
  int divisor() const { return 1 << stages(); }

  std::vector<double> to_vector() const;
  static ModelConfig from_vector(const std::vector<double>& v);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class RgbdModel {
 public:
  RgbdModel(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ag::ParameterStore& params() { return params_; }
  const ag::ParameterStore& params() const { return params_; }

  // Names the optimizer may update (RGB branch excluded when frozen).
  std::vector<std::string> trainable_names() const;
  static bool is_rgb_param(const std::string& name);

 private:
  ModelConfig cfg_;
  ag::ParameterStore params_;
};

RgbdModel build_model(const ModelConfig& cfg, std::uint64_t seed);

struct FusionTrace {
  double rgb_l1 = 0.0;    // ‖gated RGB part‖₁
  double depth_l1 = 0.0;  // ‖gated depth part‖₁
};

struct ForwardResult {
  std::vector<ag::Node> heads;             // head_n×h×w, finest scale first
  std::vector<ag::Node> depth_pre_fusion;  // per stage, before fusion
  std::vector<FusionTrace> fusion;         // per stage; zero where no fusion
};

// rgb is 3×H×W, depth_enc depth_channels×H×W. maxd is required iff the
// model was configured with maxd conditioning.
ForwardResult forward(const RgbdModel& model, const ag::Array& rgb, const ag::Array& depth_enc,
                      const pde::MaxDepthVector* maxd = nullptr);

struct FusionBlockParams {
  ag::Node fc1_w, fc1_b, fc2_w, fc2_b, proj_w, proj_b;
};

struct FusedFeatures {
  ag::Node out;
  ag::Node gates;
  FusionTrace trace;
};

// concat → global average → two-layer excitation → sigmoid gates → gated
// features projected 1×1 to the depth width and added to depth_feat.
FusedFeatures se_fuse(const ag::Node& rgb_feat, const ag::Node& depth_feat,
                      const FusionBlockParams& block, double slope = 0.01);

// Per fused stage: rgb / (rgb + depth) of the gated L1 amplitudes, 0 when
// both vanish. Non-fused stages are skipped.
std::vector<double> fusion_rgb_amplitude(const ForwardResult& result, const ModelConfig& cfg);

}  // namespace vd::model
