#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vd/error.hpp"
#include "vd/pipeline.hpp"
#include "vd/scene.hpp"

namespace pl = vd::pipeline;
namespace fs = std::filesystem;

namespace {

pl::TrainConfig tiny_config() {
  pl::TrainConfig c;
  c.steps = 3;
  c.batch = 2;
  c.height = 16;
  c.width = 16;
  c.train_scenes = 8;
  c.eval_scenes = 2;
  c.encoding.pde.channels = 8;
  c.widths = {4, 6};
  c.decoder_width = 6;
  c.full_res_width = 4;
  c.scales.factors = {1.0, 0.5};
  c.scales.weights = {1.0, 1.0};
  c.adam.lr = 1e-3;
  return c;
}

vd::scene::SceneSpec frontal_wall(double z) {
  vd::scene::SceneSpec s;
  s.height = 12;
  s.width = 16;
  s.intrinsics = {20.0, 20.0, 8.0, 6.0};
  s.background = {{0.0, 0.0, 1.0}, z, {0.5, 0.6, 0.7}};
  return s;
}

}  // namespace

// ---- scenes -------------------------------------------------------------------

TEST(Scene, FrontalPlaneHasConstantDepth) {
  const auto [rgb, depth] = vd::scene::render_scene(frontal_wall(2.0));
  for (double d : depth.values()) EXPECT_NEAR(d, 2.0, 1e-12);
  EXPECT_EQ(rgb.height(), 12);
}

TEST(Scene, SphereOccludesTheWall) {
  auto spec = frontal_wall(5.0);
  spec.spheres.push_back({{0.0, 0.0, 3.0}, 0.5, {1.0, 0.0, 0.0}});
  const auto [rgb, depth] = vd::scene::render_scene(spec);
  // The ray through the principal point (pixel 6, 8) hits the sphere front.
  EXPECT_NEAR(depth(6, 8), 2.5, 1e-12);
  int sphere_pixels = 0;
  for (double d : depth.values())
    if (d < 5.0 - 1e-9) {
      ++sphere_pixels;
      EXPECT_GE(d, 2.5 - 1e-12);
    }
  EXPECT_GT(sphere_pixels, 0);
  EXPECT_EQ(vd::scene::render_scene(spec).second, depth);
}

TEST(Scene, RandomScenesAreDenseAndInRange) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto spec = vd::scene::random_scene(seed, 32, 32);
    const auto [rgb, depth] = vd::scene::render_scene(spec);
    for (double d : depth.values()) {
      ASSERT_GT(d, vd::scene::kMinDepth) << seed;
      ASSERT_LT(d, vd::scene::kMaxDepth) << seed;
    }
    for (double v : rgb.planar()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
  const auto a = vd::scene::render_scene(vd::scene::random_scene(5, 16, 16));
  const auto b = vd::scene::render_scene(vd::scene::random_scene(5, 16, 16));
  EXPECT_EQ(a.second, b.second);
}

TEST(Scene, RenderedDepthBackProjectsOntoTheWall) {
  // A tilted camera still sees z-depth: points from depth_to_points lie on
  // the wall plane after rotation into the world frame.
  auto spec = frontal_wall(4.0);
  spec.pose.yaw = 0.2;
  spec.background.normal = spec.pose.to_world({0.0, 0.0, 1.0});
  const auto depth = vd::scene::render_scene(spec).second;
  const auto pts = vd::depth_to_points(depth, spec.intrinsics);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) {
      const auto w = spec.pose.to_world({pts.x(y, x), pts.y(y, x), pts.z(y, x)});
      const double along = w[0] * spec.background.normal[0] + w[1] * spec.background.normal[1] +
                           w[2] * spec.background.normal[2];
      EXPECT_NEAR(along, 4.0, 1e-9);
    }
}

// ---- config -------------------------------------------------------------------

TEST(Config, ParsesKeysCommentsAndRoundTrips) {
  const auto c = pl::parse_train_config(
      "# desk run\nsteps = 10  # short\nlr = 2e-5\nencoding = norm\nmodel.widths = 8, 16\nheight = 32\nwidth = 32\n"
      "scales.factors = 1, 0.5\nscales.weights = 1, 1\npde.max_depth_mode = per_sample\naugment_rgb = false\n");
  EXPECT_EQ(c.steps, 10);
  EXPECT_DOUBLE_EQ(c.adam.lr, 2e-5);
  EXPECT_EQ(c.encoding.kind, pl::InputEncoding::kNorm);
  EXPECT_EQ(c.widths, (std::vector<int>{8, 16}));
  EXPECT_FALSE(c.augment_rgb);
  EXPECT_EQ(c.encoding.pde.mode, vd::pde::MaxDepthMode::kPerSample);
  const auto again = pl::parse_train_config(pl::format_train_config(c));
  EXPECT_EQ(pl::format_train_config(again), pl::format_train_config(c));
  EXPECT_EQ(again.model_config(), c.model_config());

  // Doubles are written in their shortest exact form.
  pl::TrainConfig odd;
  odd.adam.lr = 0.1 + 0.2;
  odd.si.lambda = 0.85;
  const std::string text = pl::format_train_config(odd);
  EXPECT_NE(text.find("lr = 0.30000000000000004\n"), std::string::npos);
  EXPECT_NE(text.find("si.lambda = 0.85\n"), std::string::npos);
  EXPECT_EQ(pl::parse_train_config(text).adam.lr, 0.1 + 0.2);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    pl::parse_train_config("steps = 4\nbogus = 1\n");
    FAIL();
  } catch (const vd::FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(pl::parse_train_config("steps = four\n"), vd::FormatError);
  EXPECT_THROW(pl::parse_train_config("steps 4\n"), vd::FormatError);
  EXPECT_THROW(pl::parse_train_config("steps = 0\n"), vd::ContractError);
  EXPECT_THROW(pl::parse_train_config("height = 60\n"), vd::ContractError);
  EXPECT_THROW(pl::parse_train_config("scales.factors = 1, 0.4\nscales.weights = 1, 1\n"), vd::ContractError);
  EXPECT_THROW(pl::load_train_config("/nonexistent/cfg.txt"), vd::IoError);
}

TEST(Config, DefaultsMatchTheDeskRun) {
  const pl::TrainConfig c;
  EXPECT_EQ(c.steps, 2000);
  EXPECT_EQ(c.batch, 8);
  EXPECT_EQ(c.height, 64);
  EXPECT_DOUBLE_EQ(c.adam.lr, 1e-5);
  EXPECT_EQ(c.train_scenes, 512);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.model_config().head_n, 4);
  EXPECT_EQ(c.decode_params(7.5).n, 4);
  EXPECT_DOUBLE_EQ(c.decode_params(7.5).max_d, 7.5);
}

// ---- data ---------------------------------------------------------------------

TEST(Augment, FlipMirrorsDepthAndPrincipalPoint) {
  const auto spec = vd::scene::random_scene(1, 16, 16);
  const auto [rgb0, depth0] = vd::scene::render_scene(spec);
  int flips = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto rgb = rgb0;
    auto depth = depth0;
    vd::Intrinsics k = spec.intrinsics;
    pl::augment_pair(rgb, depth, k, seed);
    if (k.cx == spec.intrinsics.cx) {
      EXPECT_EQ(depth, depth0);
      continue;
    }
    ++flips;
    EXPECT_DOUBLE_EQ(k.cx, 15.0 - spec.intrinsics.cx);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) EXPECT_EQ(depth(y, x), depth0(y, 15 - x));
    // Back-projection is mirrored exactly.
    const auto p0 = vd::depth_to_points(depth0, spec.intrinsics), p1 = vd::depth_to_points(depth, k);
    EXPECT_NEAR(p1.x(3, 2), -p0.x(3, 13), 1e-12);
  }
  EXPECT_GT(flips, 5);
  EXPECT_LT(flips, 35);
}

TEST(Batch, MaskedPixelsEncodeAsZeroDepth) {
  const auto cfg = tiny_config();
  const auto batch = pl::make_batch(cfg, 0, 11);
  ASSERT_EQ(batch.samples.size(), 2u);
  const std::size_t plane = 256;
  for (const auto& s : batch.samples) {
    EXPECT_GT(s.vanish.count(), 0u);
    for (std::size_t p = 0; p < plane; ++p) {
      if (!s.vanish[p]) {
        EXPECT_EQ(s.input_depth[p], s.target[p]);
        continue;
      }
      EXPECT_EQ(s.input_depth[p], 0.0);
      for (int c = 0; c < 8; ++c) EXPECT_EQ(s.encoded.tensor[c * plane + p], c % 2 == 0 ? 0.0 : 1.0);
    }
    EXPECT_EQ(s.encoded.max_d, 15.0);
    double top = 0.0;
    for (double v : s.target.values()) top = std::max(top, v);
    EXPECT_LE(top, cfg.randomize.max_d);
  }
}

TEST(Batch, RemovalFollowsTheSchedule) {
  auto cfg = tiny_config();
  cfg.batch = 8;
  for (std::int64_t step : {0, 500, 1000, 4000}) {
    const auto batch = pl::make_batch(cfg, step, 3);
    for (const auto& s : batch.samples) {
      EXPECT_GE(s.removal_target, cfg.schedule.lo);
      EXPECT_LE(s.removal_target, cfg.schedule.hi(step));
      const double n = static_cast<double>(vd::validity_mask(s.target).count());
      EXPECT_LE(std::abs(static_cast<double>(s.vanish.count()) - s.removal_target * n), 1.0);
    }
  }
}

TEST(Batch, DeterministicPerStepAndSeed) {
  const auto cfg = tiny_config();
  const auto a = pl::make_batch(cfg, 7, 2), b = pl::make_batch(cfg, 7, 2), c = pl::make_batch(cfg, 8, 2);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].encoded.tensor.data, b.samples[i].encoded.tensor.data);
    EXPECT_EQ(a.samples[i].target, b.samples[i].target);
    EXPECT_EQ(a.samples[i].rgb, b.samples[i].rgb);
    EXPECT_EQ(a.samples[i].vanish, b.samples[i].vanish);
  }
  EXPECT_NE(a.samples[0].encoded.tensor.data, c.samples[0].encoded.tensor.data);
}

TEST(Encode, VariantsHaveTheirChannelCounts) {
  auto cfg = tiny_config();
  const auto scene = pl::train_scene(cfg, 0);
  for (auto kind : {pl::InputEncoding::kPde, pl::InputEncoding::kP3de, pl::InputEncoding::kNorm}) {
    cfg.encoding.kind = kind;
    const auto e = pl::encode_input(scene.depth, scene.intrinsics, cfg.encoding);
    EXPECT_EQ(e.tensor.dim(0), cfg.encoding.input_channels());
    EXPECT_EQ(e.max_d, 15.0);
  }
  EXPECT_EQ(pl::parse_encoding("p3de"), pl::InputEncoding::kP3de);
  EXPECT_THROW(pl::parse_encoding("xyz"), vd::FormatError);
}

// ---- training -----------------------------------------------------------------

TEST(TrainStep, LossGradientMatchesFiniteDifferences) {
  auto cfg = tiny_config();
  cfg.batch = 1;
  const auto batch = pl::make_batch(cfg, 0, 4);
  auto mdl = vd::model::build_model(cfg.model_config(), 1);
  // Shift the coarsest decode term so every prediction is well above the
  // 1 mm floor; the clamp is then inactive and the loss is smooth.
  for (const auto& name : mdl.params().names())
    if (name.rfind("head.", 0) == 0 && name.back() == 'b') mdl.params().at(name).mutable_value()[0] = 3.0;
  const auto& sample = batch.samples[0];
  const vd::ag::ScalarObjective f = [&](const vd::ag::ParameterStore&) {
    return pl::sample_loss(mdl, sample, cfg).report.total_node;
  };
  vd::ag::GradCheckOptions opt;
  opt.max_elements_per_param = 10;
  EXPECT_LT(vd::ag::finite_difference_check(f, mdl.params(), opt), 1e-5);
}

TEST(TrainStep, ClampPassesGradientThrough) {
  auto cfg = tiny_config();
  cfg.batch = 1;
  const auto batch = pl::make_batch(cfg, 0, 4);
  auto mdl = vd::model::build_model(cfg.model_config(), 1);
  // All predictions far below the floor.
  for (const auto& name : mdl.params().names())
    if (name.rfind("head.", 0) == 0 && name.back() == 'b') mdl.params().at(name).mutable_value()[0] = -5.0;
  mdl.params().zero_grad();
  vd::ag::backward(pl::sample_loss(mdl, batch.samples[0], cfg).report.total_node);
  double norm = 0.0;
  for (double g : mdl.params().at("head.s0.b").grad().data) norm += std::abs(g);
  EXPECT_GT(norm, 0.0);
}

TEST(TrainStep, DeterministicAndDecreasing) {
  const auto cfg = tiny_config();
  auto run = [&](int steps) {
    auto mdl = vd::model::build_model(cfg.model_config(), 2);
    vd::optim::Adam adam(cfg.adam, mdl.trainable_names());
    std::vector<double> losses;
    for (int s = 0; s < steps; ++s) losses.push_back(pl::train_step(mdl, adam, pl::make_batch(cfg, s, 5), cfg).loss);
    return std::pair{std::move(mdl), losses};
  };
  const auto [a, la] = run(2);
  const auto [b, lb] = run(2);
  EXPECT_EQ(la, lb);
  for (const auto& name : a.params().names()) EXPECT_EQ(a.params().at(name).value().data, b.params().at(name).value().data);
  for (double l : la) EXPECT_TRUE(std::isfinite(l));
}

TEST(TrainStep, FiniteLossAcrossScheduleExtremes) {
  auto cfg = tiny_config();
  cfg.schedule.lo = 0.98;
  cfg.schedule.easy_hi = 0.99;
  cfg.schedule.hard_hi = 0.99;
  auto mdl = vd::model::build_model(cfg.model_config(), 3);
  vd::optim::Adam adam(cfg.adam, mdl.trainable_names());
  EXPECT_TRUE(std::isfinite(pl::train_step(mdl, adam, pl::make_batch(cfg, 0, 1), cfg).loss));
  cfg.schedule = {};
  cfg.schedule.lo = 0.01;
  cfg.schedule.easy_hi = 0.02;
  EXPECT_TRUE(std::isfinite(pl::train_step(mdl, adam, pl::make_batch(cfg, 0, 1), cfg).loss));
  EXPECT_THROW(pl::train_step(mdl, adam, pl::Batch{}, cfg), vd::ContractError);
}

TEST(TrainStep, NonFiniteGradientIsReported) {
  const auto cfg = tiny_config();
  auto mdl = vd::model::build_model(cfg.model_config(), 3);
  vd::optim::Adam adam(cfg.adam, mdl.trainable_names());
  mdl.params().at("dec.up.w").mutable_value()[0] = NAN;
  try {
    pl::train_step(mdl, adam, pl::make_batch(cfg, 0, 1), cfg);
    FAIL();
  } catch (const vd::DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

// ---- metrics ------------------------------------------------------------------

TEST(Metrics, Rmse) {
  EXPECT_NEAR(pl::rmse_mm(vd::DepthMap(1, 2, {1.0, 2.0}), vd::DepthMap(1, 2, {1.0, 4.0})), 1414.2135623730951, 1e-9);
  EXPECT_EQ(pl::rmse_mm(vd::DepthMap(1, 2, {1.0, 2.0}), vd::DepthMap(1, 2, {1.0, 2.0})), 0.0);
  EXPECT_EQ(pl::rmse_mm(vd::DepthMap(1, 2, {1.0, 9.0}), vd::DepthMap(1, 2, {1.0, 0.0})), 0.0);
  EXPECT_THROW(pl::rmse_mm(vd::DepthMap(1, 1, {1.0}), vd::DepthMap(1, 1, {0.0})), vd::EmptySetError);
}

TEST(Metrics, FractionsAndTrapezoid) {
  const auto f = pl::density_fractions();
  ASSERT_EQ(f.size(), 20u);
  EXPECT_DOUBLE_EQ(f.front(), 0.01);
  EXPECT_DOUBLE_EQ(f.back(), 0.96);
  EXPECT_NEAR(pl::trapezoid_mean(f, std::vector<double>(20, 7.25)), 7.25, 1e-12);
  // Linear integrand: mean of the endpoints.
  EXPECT_NEAR(pl::trapezoid_mean({0.0, 1.0, 3.0}, {1.0, 2.0, 4.0}), 2.5, 1e-15);
  EXPECT_THROW(pl::trapezoid_mean({1.0}, {1.0}), vd::ContractError);
}

TEST(Metrics, SubsampleKeepsTheRequestedShare) {
  std::vector<double> v(100, 2.0);
  for (std::size_t i = 0; i < 100; i += 4) v[i] = 0.0;
  const vd::DepthMap d(10, 10, v);
  for (double frac : {0.01, 0.33, 0.5, 0.96, 1.0}) {
    const auto s = pl::subsample(d, frac, 9);
    const auto kept = vd::validity_mask(s).count();
    EXPECT_EQ(kept, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(frac * 75))));
    for (std::size_t i = 0; i < 100; ++i)
      if (s[i] > 0.0) EXPECT_EQ(s[i], d[i]);
  }
  EXPECT_EQ(pl::subsample(d, 0.5, 9), pl::subsample(d, 0.5, 9));
  EXPECT_NE(pl::subsample(d, 0.5, 9), pl::subsample(d, 0.5, 10));
  EXPECT_THROW(pl::subsample(d, 0.0, 1), vd::ContractError);
}

TEST(Metrics, ConstantErrorPredictorHasFlatSweep) {
  auto cfg = tiny_config();
  cfg.eval_scenes = 3;
  const auto eval_set = pl::make_eval_set(cfg);
  const pl::DepthPredictor shifted = [](const pl::Scene& s, const vd::DepthMap&) {
    std::vector<double> v(s.depth.values().begin(), s.depth.values().end());
    for (double& x : v) x += 0.25;
    return vd::DepthMap(s.depth.height(), s.depth.width(), v);
  };
  const auto sweep = pl::auc_rmse_density_sweep(shifted, eval_set, 1);
  ASSERT_EQ(sweep.rmse_mm.size(), 20u);
  for (double r : sweep.rmse_mm) EXPECT_NEAR(r, 250.0, 1e-9);
  EXPECT_NEAR(sweep.auc_rmse_mm, 250.0, 1e-9);
  EXPECT_THROW(pl::auc_rmse_density_sweep(shifted, {}, 1), vd::EmptySetError);
}

TEST(Metrics, EvaluateIsDeterministicAndAucWithinRange) {
  const auto cfg = tiny_config();
  const auto mdl = vd::model::build_model(cfg.model_config(), 4);
  const auto eval_set = pl::make_eval_set(cfg);
  const auto a = pl::evaluate(mdl, eval_set, cfg, 3), b = pl::evaluate(mdl, eval_set, cfg, 3);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.density_rmse_mm.size(), 20u);
  const auto [lo, hi] = std::minmax_element(a.density_rmse_mm.begin(), a.density_rmse_mm.end());
  EXPECT_GE(a.auc_rmse_mm, *lo);
  EXPECT_LE(a.auc_rmse_mm, *hi);
  EXPECT_GT(a.rmse_mm, 0.0);
}

TEST(Metrics, CsvLayout) {
  const std::string h = pl::metrics_csv_header();
  EXPECT_EQ(h.rfind("step,split,rmse_mm,auc_rmse_mm,d01,d06,d11,", 0), 0u);
  EXPECT_EQ(h.substr(h.size() - 4), ",d96");
  pl::MetricsRow r;
  r.step = 5;
  r.rmse_mm = 1.5;
  r.auc_rmse_mm = 2.0;
  r.density_rmse_mm = {3.0};
  EXPECT_EQ(pl::metrics_csv_row(r), "5,eval,1.5,2,3");
}

// ---- checkpoints --------------------------------------------------------------

TEST(Checkpoint, RoundTripPreservesEvaluation) {
  auto cfg = tiny_config();
  cfg.rgb_frozen = true;
  auto mdl = vd::model::build_model(cfg.model_config(), 6);
  vd::optim::Adam adam(cfg.adam, mdl.trainable_names());
  pl::train_step(mdl, adam, pl::make_batch(cfg, 0, 1), cfg);

  const fs::path path = fs::temp_directory_path() / "vd_test_pipeline.vdck";
  vd::ckpt::save(pl::make_checkpoint(mdl, cfg, &adam), path);
  const auto restored = pl::restore_checkpoint(vd::ckpt::load(path));
  EXPECT_EQ(pl::format_train_config(restored.config), pl::format_train_config(cfg));
  ASSERT_TRUE(restored.adam.has_value());
  EXPECT_EQ(restored.adam->steps(), 1);
  for (const auto& name : mdl.params().names())
    EXPECT_EQ(restored.model.params().at(name).value().data, mdl.params().at(name).value().data);
  const auto eval_set = pl::make_eval_set(cfg);
  EXPECT_EQ(pl::evaluate(restored.model, eval_set, restored.config, 1), pl::evaluate(mdl, eval_set, cfg, 1));

  // Continuing from the checkpoint matches continuing in memory.
  auto m2 = restored.model;
  auto a2 = *restored.adam;
  pl::train_step(mdl, adam, pl::make_batch(cfg, 1, 1), cfg);
  pl::train_step(m2, a2, pl::make_batch(cfg, 1, 1), cfg);
  for (const auto& name : mdl.params().names())
    EXPECT_EQ(m2.params().at(name).value().data, mdl.params().at(name).value().data) << name;
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto cfg = tiny_config();
  const auto mdl = vd::model::build_model(cfg.model_config(), 6);
  const std::string bytes = vd::ckpt::serialize(pl::make_checkpoint(mdl, cfg));
  EXPECT_THROW(vd::ckpt::deserialize(bytes.substr(0, bytes.size() - 3)), vd::FormatError);
  EXPECT_THROW(vd::ckpt::deserialize("XXXX" + bytes.substr(4)), vd::FormatError);
  auto arrays = vd::ckpt::deserialize(bytes);
  arrays.pop_back();
  EXPECT_THROW(pl::restore_checkpoint(arrays), vd::FormatError);
  EXPECT_THROW(vd::ckpt::load("/nonexistent/model.vdck"), vd::IoError);
}

TEST(Checkpoint, ByteLayout) {
  const vd::ckpt::NamedArrays one = {{"ab", vd::ag::Array(vd::ag::Shape{2}, std::vector<double>{1.0, -2.0})}};
  const std::string b = vd::ckpt::serialize(one);
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 4 + 2 + 1 + 4 + 4 + 16);
  EXPECT_EQ(b.substr(0, 4), "VDCK");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1u);  // version, little-endian
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 1u);  // count
  EXPECT_EQ(b.substr(16, 2), "ab");
  EXPECT_EQ(static_cast<unsigned char>(b[18]), 1u);  // f64 tag
  const auto back = vd::ckpt::deserialize(b);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].second.data, one[0].second.data);
}

// ---- full run -----------------------------------------------------------------

TEST(Train, ShortRunIsReproducibleAndWritesOutputs) {
  auto cfg = tiny_config();
  cfg.steps = 4;
  cfg.eval_every = 2;
  std::ostringstream m1, l1, m2, l2, log;
  const auto r1 = pl::train(cfg, {&log, &m1, &l1, 1});
  const auto r2 = pl::train(cfg, {nullptr, &m2, &l2, 1});
  EXPECT_EQ(m1.str(), m2.str());
  EXPECT_EQ(l1.str(), l2.str());
  EXPECT_EQ(r1.losses, r2.losses);
  EXPECT_EQ(r1.final, r2.final);
  // header + steps 0, 2 and 4
  const std::string metrics = m1.str(), losses = l1.str();
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 4);
  EXPECT_EQ(std::count(losses.begin(), losses.end(), '\n'), 5);
  EXPECT_NE(log.str().find("step 4/4"), std::string::npos);
  EXPECT_EQ(r1.initial.step, 0);
  EXPECT_EQ(r1.final.step, 4);
}
