#include "vd/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "CLI11.hpp"
#include "vd/checkpoint.hpp"
#include "vd/error.hpp"
#include "vd/masks.hpp"
#include "vd/pde.hpp"
#include "vd/pipeline.hpp"
#include "vd/randomizer.hpp"
#include "vd/rng.hpp"
#include "vd/scene.hpp"

namespace vd {
namespace fs = std::filesystem;

namespace {

std::string numbered(const std::string& stem, int i, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04d", i);
  return stem + buf + ext;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

struct PdeFlags {
  int channels = 32;
  double temperature = 3e-4;
  double max_depth = 15.0;
  bool per_sample = false;

  void attach(CLI::App* app) {
    app->add_option("--channels", channels, "encoding channels (even)");
    app->add_option("--temperature", temperature, "wavelength decay constant");
    app->add_option("--max-depth", max_depth, "global max depth in meters");
    app->add_flag("--per-sample", per_sample, "use the per-sample max depth");
  }
  pde::PdeConfig config() const {
    pde::PdeConfig c;
    c.channels = channels;
    c.temperature = temperature;
    c.global_max_depth = max_depth;
    c.mode = per_sample ? pde::MaxDepthMode::kPerSample : pde::MaxDepthMode::kGlobal;
    c.validate();
    return c;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vanishing-depth toolkit", "vdtool"};
  app.require_subcommand(1);

  // freqs
  PdeFlags freq_flags;
  std::string freq_unit = "mm";
  auto* freqs = app.add_subcommand("freqs", "print the wavelength of every sin/cos pair as CSV");
  freq_flags.attach(freqs);
  freqs->add_option("--unit", freq_unit, "mm or m")->check(CLI::IsMember({"mm", "m"}));

  // encode
  PdeFlags enc_flags;
  std::string enc_in, enc_out, enc_dump;
  auto* encode = app.add_subcommand("encode", "encode a 16-bit depth PNG");
  enc_flags.attach(encode);
  encode->add_option("--depth", enc_in, "input depth PNG (mm)")->required();
  encode->add_option("--out", enc_out, "output encoding (VDCK)")->required();
  encode->add_option("--dump-channels", enc_dump, "write every channel as PGM into this directory");

  // decode
  std::string dec_in, dec_out;
  auto* decode = app.add_subcommand("decode", "phase-unwrap an encoding back to a depth PNG");
  decode->add_option("--encoding", dec_in, "encoding written by encode")->required();
  decode->add_option("--out", dec_out, "output depth PNG")->required();

  // mask
  std::string mask_kind = "perlin", mask_out;
  int mask_cells = 4, mask_div = 1, mask_h = 64, mask_w = 64;
  double mask_target = 0.5;
  std::uint64_t mask_seed = 0;
  auto* mask = app.add_subcommand("mask", "generate a vanish mask");
  mask->add_option("--kind", mask_kind)->check(CLI::IsMember({"perlin", "uniform"}));
  mask->add_option("--cells", mask_cells, "perlin lattice cells");
  mask->add_option("--scale-divisor", mask_div, "uniform block size");
  mask->add_option("--target", mask_target, "removal fraction");
  mask->add_option("--seed", mask_seed);
  mask->add_option("--height", mask_h);
  mask->add_option("--width", mask_w);
  mask->add_option("--out", mask_out, "output mask PNG")->required();

  // augment
  std::string aug_in, aug_out;
  int aug_count = 1;
  double aug_max = 15.0;
  std::uint64_t aug_seed = 0;
  auto* augment = app.add_subcommand("augment", "randomize a depth map's distribution");
  augment->add_option("--depth", aug_in, "input depth PNG")->required();
  augment->add_option("--out", aug_out, "output directory")->required();
  augment->add_option("--count", aug_count, "number of draws")->check(CLI::PositiveNumber);
  augment->add_option("--seed", aug_seed);
  augment->add_option("--max-depth", aug_max, "clamp ceiling in meters");

  // synth
  int synth_count = 8, synth_h = 64, synth_w = 64;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "render synthetic RGBD scenes");
  synth->add_option("--count", synth_count)->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--height", synth_h)->check(CLI::PositiveNumber);
  synth->add_option("--width", synth_w)->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  std::string train_cfg, train_out = "run";
  auto* train = app.add_subcommand("train", "run the vanishing-depth training loop");
  train->add_option("--config", train_cfg, "key = value config file")->required();
  train->add_option("--out", train_out, "output directory");

  // eval
  std::string eval_ckpt;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its held-out scenes");
  eval->add_option("--checkpoint", eval_ckpt)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (freqs->parsed()) {
      const pde::PdeConfig cfg = freq_flags.config();
      const double scale = freq_unit == "mm" ? 1000.0 : 1.0;
      const auto table = pde::frequency_table(cfg, freq_flags.max_depth);
      for (std::size_t i = 0; i < table.wavelengths.size(); ++i)
        out << i << ',' << std::setprecision(6) << table.wavelengths[i] * scale << '\n';
    } else if (encode->parsed()) {
      const pde::PdeConfig cfg = enc_flags.config();
      const DepthMap depth = load_depth_png(enc_in);
      const pde::PdeEncoding e = pde::pde_encode(depth, cfg);
      ckpt::save({{"encoding", e.tensor},
                  {"max_d", ag::Array(ag::Shape{1}, std::vector<double>{e.max_d})},
                  {"pde", ag::Array(ag::Shape{2}, std::vector<double>{double(cfg.channels), cfg.temperature})}},
                 enc_out);
      if (!enc_dump.empty()) {
        ensure_dir(enc_dump);
        const std::size_t plane = depth.size();
        for (int c = 0; c < cfg.channels; ++c)
          save_pgm(e.tensor.span().subspan(c * plane, plane), depth.height(), depth.width(), -1.0, 1.0,
                   fs::path(enc_dump) / numbered("channel", c, ".pgm"));
      }
      out << "encoded " << depth.height() << "x" << depth.width() << " with max_d " << e.max_d << " m\n";
    } else if (decode->parsed()) {
      const auto arrays = ckpt::load(dec_in);
      const ag::Array& meta = ckpt::find(arrays, "pde");
      pde::PdeConfig cfg;
      cfg.channels = static_cast<int>(meta[0]);
      cfg.temperature = meta[1];
      const DepthMap d = pde::pde_decode(ckpt::find(arrays, "encoding"), cfg, ckpt::find(arrays, "max_d")[0]);
      save_depth_png(d, dec_out);
    } else if (mask->parsed()) {
      masks::MaskSpec spec;
      spec.kind = mask_kind == "perlin" ? masks::MaskKind::kPerlin : masks::MaskKind::kUniform;
      spec.cells = mask_cells;
      spec.scale_divisor = mask_div;
      spec.target_removal = mask_target;
      const masks::VanishMask m = masks::generate_mask(spec, mask_seed, mask_h, mask_w);
      save_mask_png(m, mask_out);
      out << "removed " << m.count() << " of " << m.size() << " pixels\n";
    } else if (augment->parsed()) {
      const DepthMap depth = load_depth_png(aug_in);
      const auto cfg = randomize::RandomizeConfig::with_max_depth(aug_max);
      ensure_dir(aug_out);
      for (int i = 0; i < aug_count; ++i) {
        const auto [d, t] = randomize::randomize_depth(depth, cfg, derive_seed(aug_seed, static_cast<std::uint64_t>(i)));
        save_depth_png(d, fs::path(aug_out) / numbered("depth", i, ".png"));
        out << t.to_json() << '\n';
      }
    } else if (synth->parsed()) {
      ensure_dir(synth_out);
      for (int i = 0; i < synth_count; ++i) {
        const auto spec = scene::random_scene(derive_seed(synth_seed, static_cast<std::uint64_t>(i)), synth_h, synth_w);
        const auto [rgb, depth] = scene::render_scene(spec);
        save_rgb_png(rgb, fs::path(synth_out) / numbered("rgb", i, ".png"));
        save_depth_png(depth, fs::path(synth_out) / numbered("depth", i, ".png"));
        std::ofstream k(fs::path(synth_out) / numbered("intrinsics", i, ".txt"));
        k << format_intrinsics(spec.intrinsics);
        if (!k) throw IoError("cannot write intrinsics into " + synth_out);
      }
      out << "wrote " << synth_count << " scenes to " << synth_out << '\n';
    } else if (train->parsed()) {
      const pipeline::TrainConfig cfg = pipeline::load_train_config(train_cfg);
      ensure_dir(train_out);
      const fs::path dir(train_out);
      std::ofstream metrics(dir / "metrics.csv"), losses(dir / "loss.csv"), copy(dir / "config.txt");
      if (!metrics || !losses || !copy) throw IoError("cannot write outputs into " + train_out);
      copy << pipeline::format_train_config(cfg);
      pipeline::RunOutputs outputs;
      outputs.log = &out;
      outputs.metrics_csv = &metrics;
      outputs.loss_csv = &losses;
      const pipeline::TrainResult r = pipeline::train(cfg, outputs);
      ckpt::save(pipeline::make_checkpoint(r.model, cfg, &r.adam), dir / "model.vdck");
      out << "rmse " << r.initial.rmse_mm << " -> " << r.final.rmse_mm << " mm\n";
    } else if (eval->parsed()) {
      const pipeline::Restored r = pipeline::restore_checkpoint(ckpt::load(eval_ckpt));
      const auto eval_set = pipeline::make_eval_set(r.config);
      const std::int64_t step = r.adam ? r.adam->steps() : 0;
      out << pipeline::metrics_csv_header() << '\n'
          << pipeline::metrics_csv_row(pipeline::evaluate(r.model, eval_set, r.config, step)) << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace vd
