#pragma once

// Training loop and evaluation harness on synthetic scenes.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vd/checkpoint.hpp"
#include "vd/depth.hpp"
#include "vd/loss.hpp"
#include "vd/masks.hpp"
#include "vd/model.hpp"
#include "vd/optim.hpp"
#include "vd/pde.hpp"
#include "vd/randomizer.hpp"

namespace vd::pipeline {

enum class InputEncoding { kPde, kP3de, kNorm };

const char* encoding_name(InputEncoding e);
InputEncoding parse_encoding(const std::string& s);

struct EncodingConfig {
  InputEncoding kind = InputEncoding::kPde;
  pde::PdeConfig pde;
  double norm_mean = 5.0;
  double norm_std = 5.0;

  void validate() const;
  int input_channels() const;
};

struct TrainConfig {
  int steps = 2000;
  int batch = 8;
  int height = 64;
  int width = 64;
  optim::AdamConfig adam;
  std::uint64_t seed = 0;
  int train_scenes = 512;
  int eval_scenes = 16;
  int eval_every = 0;  // 0: evaluate only at the start and the end

  masks::NoiseSchedule schedule;
  randomize::RandomizeConfig randomize;
  bool randomize_depth = true;
  EncodingConfig encoding;
  loss::MultiScaleSpec scales;
  loss::SiLossParams si;
  bool augment_rgb = true;

  bool rgb_frozen = false;
  bool maxd_conditioning = false;
  std::vector<int> widths = {16, 32, 64, 128};
  int decoder_width = 32;
  int full_res_width = 16;

  void validate() const;
  model::ModelConfig model_config() const;
  loss::DecodeHeadParams decode_params(double max_d) const;
};

// Flat "key = value" text; '#' starts a comment. Unknown keys and malformed
// values raise FormatError naming the line.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& cfg);

// ---- data ----------------------------------------------------------------

struct Scene {
  RgbImage rgb;
  DepthMap depth;
  Intrinsics intrinsics;
};

Scene train_scene(const TrainConfig& cfg, int index);
Scene eval_scene(const TrainConfig& cfg, int index);
std::vector<Scene> make_eval_set(const TrainConfig& cfg);

struct EncodedInput {
  ag::Array tensor;
  double max_d = 0.0;  // decode key for the prediction head
};

// Encodes a (possibly sparse) depth map according to `enc`. Zero marks
// missing pixels in every variant.
EncodedInput encode_input(const DepthMap& sparse, const Intrinsics& k, const EncodingConfig& enc);

struct Sample {
  RgbImage rgb;
  DepthMap target;        // randomized dense depth
  DepthMap input_depth;   // target with vanished pixels zeroed
  masks::VanishMask vanish;
  double removal_target = 0.0;
  randomize::AppliedTransform transform;
  EncodedInput encoded;
  Intrinsics intrinsics;
};

struct Batch {
  std::int64_t step = 0;
  std::vector<Sample> samples;
};

// Colour jitter, grayscale and a horizontal flip shared with the depth and
// the principal point.
void augment_pair(RgbImage& rgb, DepthMap& depth, Intrinsics& k, std::uint64_t seed);

Batch make_batch(const TrainConfig& cfg, std::int64_t step, std::uint64_t seed);

// ---- training ------------------------------------------------------------

struct SampleForward {
  loss::LossReport report;
  model::ForwardResult forward;
};

// Predictions per head (meters, clamped at 1 mm with straight-through
// gradient) followed by the multi-scale loss.
SampleForward sample_loss(const model::RgbdModel& model, const Sample& sample, const TrainConfig& cfg);

struct StepReport {
  std::int64_t step = 0;
  double loss = 0.0;
  std::vector<loss::LossReport> samples;
};

StepReport train_step(model::RgbdModel& model, optim::Adam& adam, const Batch& batch,
                      const TrainConfig& cfg);

// ---- metrics -------------------------------------------------------------

double rmse_mm(const DepthMap& pred, const DepthMap& gt);

// 0.01, 0.06, ..., 0.96
std::vector<double> density_fractions();
// Trapezoid over `xs` normalized by the span of xs.
double trapezoid_mean(const std::vector<double>& xs, const std::vector<double>& ys);

using DepthPredictor = std::function<DepthMap(const Scene& scene, const DepthMap& sparse)>;

DepthPredictor model_predictor(const model::RgbdModel& model, const TrainConfig& cfg);

// Keeps a seeded uniform fraction of the valid pixels.
DepthMap subsample(const DepthMap& depth, double fraction, std::uint64_t seed);

struct DensitySweep {
  std::vector<double> fractions;
  std::vector<double> rmse_mm;  // mean over samples, one per fraction
  double auc_rmse_mm = 0.0;
};

DensitySweep auc_rmse_density_sweep(const DepthPredictor& predict, const std::vector<Scene>& eval_set,
                                    std::uint64_t seed);

struct MetricsRow {
  std::int64_t step = 0;
  std::string split = "eval";
  double rmse_mm = 0.0;  // dense input
  double auc_rmse_mm = 0.0;
  std::vector<double> density_rmse_mm;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

MetricsRow evaluate(const DepthPredictor& predict, const std::vector<Scene>& eval_set, std::int64_t step,
                    std::uint64_t seed);
MetricsRow evaluate(const model::RgbdModel& model, const std::vector<Scene>& eval_set,
                    const TrainConfig& cfg, std::int64_t step);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

// ---- checkpoints -----------------------------------------------------------

ckpt::NamedArrays make_checkpoint(const model::RgbdModel& model, const TrainConfig& cfg,
                                  const optim::Adam* adam = nullptr);

struct Restored {
  model::RgbdModel model;
  TrainConfig config;
  std::optional<optim::Adam> adam;
};

Restored restore_checkpoint(const ckpt::NamedArrays& arrays);

// ---- full run --------------------------------------------------------------

struct TrainResult {
  model::RgbdModel model;
  optim::Adam adam;
  MetricsRow initial;
  MetricsRow final;
  std::vector<double> losses;  // per step
};

struct RunOutputs {
  std::ostream* log = nullptr;          // progress lines
  std::ostream* metrics_csv = nullptr;
  std::ostream* loss_csv = nullptr;
  int log_every = 100;
};

TrainResult train(const TrainConfig& cfg, const RunOutputs& out = {});

}  // namespace vd::pipeline
