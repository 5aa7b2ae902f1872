#include "vd/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <type_traits>

#include "vd/error.hpp"
#include "vd/rng.hpp"
#include "vd/scene.hpp"

namespace vd::pipeline {

using ag::Array;
using ag::Node;

namespace {

constexpr std::uint64_t kTrainStream = 0x7a1;
constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kSweepSeed = 0x5eed;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw FormatError("'" + s + "' is not a finite number");
  return v;
}

long long to_int(const std::string& s) {
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("'" + s + "' is not an integer");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw FormatError("'" + s + "' is not a boolean");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& s, F conv) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<T>(conv(trim(item))));
  if (out.empty()) throw FormatError("empty list");
  return out;
}

// Shortest text that parses back to the same double.
struct Num {
  double v;
};

std::ostream& operator<<(std::ostream& os, Num n) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, n.v);
  return os.write(buf, r.ptr - buf);
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  if constexpr (std::is_floating_point_v<T>) {
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << Num{v[i]};
    return os.str();
  }
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

using Setter = void (*)(TrainConfig&, const std::string&);

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"steps", [](TrainConfig& c, const std::string& v) { c.steps = static_cast<int>(to_int(v)); }},
      {"batch", [](TrainConfig& c, const std::string& v) { c.batch = static_cast<int>(to_int(v)); }},
      {"height", [](TrainConfig& c, const std::string& v) { c.height = static_cast<int>(to_int(v)); }},
      {"width", [](TrainConfig& c, const std::string& v) { c.width = static_cast<int>(to_int(v)); }},
      {"lr", [](TrainConfig& c, const std::string& v) { c.adam.lr = to_double(v); }},
      {"beta1", [](TrainConfig& c, const std::string& v) { c.adam.beta1 = to_double(v); }},
      {"beta2", [](TrainConfig& c, const std::string& v) { c.adam.beta2 = to_double(v); }},
      {"adam_eps", [](TrainConfig& c, const std::string& v) { c.adam.eps = to_double(v); }},
      {"seed", [](TrainConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_int(v)); }},
      {"train_scenes", [](TrainConfig& c, const std::string& v) { c.train_scenes = static_cast<int>(to_int(v)); }},
      {"eval_scenes", [](TrainConfig& c, const std::string& v) { c.eval_scenes = static_cast<int>(to_int(v)); }},
      {"eval_every", [](TrainConfig& c, const std::string& v) { c.eval_every = static_cast<int>(to_int(v)); }},
      {"schedule.warmup_steps", [](TrainConfig& c, const std::string& v) { c.schedule.warmup_steps = to_int(v); }},
      {"schedule.easy_hi", [](TrainConfig& c, const std::string& v) { c.schedule.easy_hi = to_double(v); }},
      {"schedule.hard_hi", [](TrainConfig& c, const std::string& v) { c.schedule.hard_hi = to_double(v); }},
      {"schedule.lo", [](TrainConfig& c, const std::string& v) { c.schedule.lo = to_double(v); }},
      {"randomize", [](TrainConfig& c, const std::string& v) { c.randomize_depth = to_bool(v); }},
      {"randomize.max_d",
       [](TrainConfig& c, const std::string& v) {
         const auto bins = c.randomize;
         c.randomize = randomize::RandomizeConfig::with_max_depth(to_double(v));
         c.randomize.jitter_amplitude = bins.jitter_amplitude;
         c.randomize.bin_jitter = bins.bin_jitter;
       }},
      {"randomize.jitter_amplitude",
       [](TrainConfig& c, const std::string& v) { c.randomize.jitter_amplitude = to_double(v); }},
      {"randomize.bin_jitter", [](TrainConfig& c, const std::string& v) { c.randomize.bin_jitter = to_double(v); }},
      {"encoding", [](TrainConfig& c, const std::string& v) { c.encoding.kind = parse_encoding(v); }},
      {"pde.channels", [](TrainConfig& c, const std::string& v) { c.encoding.pde.channels = static_cast<int>(to_int(v)); }},
      {"pde.temperature", [](TrainConfig& c, const std::string& v) { c.encoding.pde.temperature = to_double(v); }},
      {"pde.max_depth_mode",
       [](TrainConfig& c, const std::string& v) {
         if (v == "global") c.encoding.pde.mode = pde::MaxDepthMode::kGlobal;
         else if (v == "per_sample") c.encoding.pde.mode = pde::MaxDepthMode::kPerSample;
         else throw FormatError("max depth mode must be global or per_sample");
       }},
      {"pde.global_max_depth", [](TrainConfig& c, const std::string& v) { c.encoding.pde.global_max_depth = to_double(v); }},
      {"norm.mean", [](TrainConfig& c, const std::string& v) { c.encoding.norm_mean = to_double(v); }},
      {"norm.std", [](TrainConfig& c, const std::string& v) { c.encoding.norm_std = to_double(v); }},
      {"scales.factors", [](TrainConfig& c, const std::string& v) { c.scales.factors = to_list<double>(v, to_double); }},
      {"scales.weights", [](TrainConfig& c, const std::string& v) { c.scales.weights = to_list<double>(v, to_double); }},
      {"si.lambda", [](TrainConfig& c, const std::string& v) { c.si.lambda = to_double(v); }},
      {"si.alpha", [](TrainConfig& c, const std::string& v) { c.si.alpha = to_double(v); }},
      {"augment_rgb", [](TrainConfig& c, const std::string& v) { c.augment_rgb = to_bool(v); }},
      {"rgb_frozen", [](TrainConfig& c, const std::string& v) { c.rgb_frozen = to_bool(v); }},
      {"maxd_conditioning", [](TrainConfig& c, const std::string& v) { c.maxd_conditioning = to_bool(v); }},
      {"model.widths", [](TrainConfig& c, const std::string& v) { c.widths = to_list<int>(v, to_int); }},
      {"model.decoder_width", [](TrainConfig& c, const std::string& v) { c.decoder_width = static_cast<int>(to_int(v)); }},
      {"model.full_res_width", [](TrainConfig& c, const std::string& v) { c.full_res_width = static_cast<int>(to_int(v)); }},
  };
  return table;
}

Array rgb_array(const RgbImage& rgb) {
  const auto p = rgb.planar();
  return Array(ag::Shape{3, rgb.height(), rgb.width()}, std::vector<double>(p.begin(), p.end()));
}

DepthMap to_depth(const Array& v, int h, int w) {
  std::vector<double> out(v.data.begin(), v.data.end());
  for (double& x : out) x = std::max(x, randomize::kFloorMeters);
  return DepthMap(h, w, std::move(out));
}

Scene scene_from(std::uint64_t seed, int h, int w) {
  const scene::SceneSpec spec = scene::random_scene(seed, h, w);
  auto [rgb, depth] = scene::render_scene(spec);
  return {std::move(rgb), std::move(depth), spec.intrinsics};
}

}  // namespace

const char* encoding_name(InputEncoding e) {
  switch (e) {
    case InputEncoding::kPde: return "pde";
    case InputEncoding::kP3de: return "p3de";
    case InputEncoding::kNorm: return "norm";
  }
  return "?";
}

InputEncoding parse_encoding(const std::string& s) {
  if (s == "pde") return InputEncoding::kPde;
  if (s == "p3de") return InputEncoding::kP3de;
  if (s == "norm") return InputEncoding::kNorm;
  throw FormatError("unknown encoding '" + s + "' (pde, p3de, norm)");
}

void EncodingConfig::validate() const {
  pde.validate();
  if (!(norm_std > 0.0)) throw ContractError("norm.std must be positive");
}

int EncodingConfig::input_channels() const {
  switch (kind) {
    case InputEncoding::kPde: return pde.channels;
    case InputEncoding::kP3de: return 3 * pde.channels;
    case InputEncoding::kNorm: return 1;
  }
  return 0;
}

void TrainConfig::validate() const {
  if (steps < 1 || batch < 1) throw ContractError("steps and batch must be at least 1");
  if (train_scenes < 1 || eval_scenes < 1) throw ContractError("scene counts must be at least 1");
  if (eval_every < 0) throw ContractError("eval_every must be nonnegative");
  adam.validate();
  schedule.validate();
  randomize.validate();
  encoding.validate();
  scales.validate();
  si.validate();
  for (std::size_t k = 0; k < scales.factors.size(); ++k)
    if (scales.factors[k] != std::ldexp(1.0, -static_cast<int>(k)))
      throw ContractError("scale factors must be 1, 1/2, 1/4, ... to match the decoder heads");
  if (randomize.max_d > encoding.pde.global_max_depth)
    throw ContractError("randomize.max_d exceeds the global max depth of the encoder");
  model_config().validate();
  const int div = model_config().divisor();
  if (height % div != 0 || width % div != 0)
    throw ContractError("resolution must be divisible by " + std::to_string(div));
}

model::ModelConfig TrainConfig::model_config() const {
  model::ModelConfig m;
  m.depth_channels = encoding.input_channels();
  m.widths = widths;
  m.fusion_stages.clear();
  for (int k = 0; k < static_cast<int>(widths.size()); ++k) m.fusion_stages.push_back(k);
  m.heads = static_cast<int>(scales.factors.size());
  m.head_n = loss::decode_term_count(encoding.pde.global_max_depth);
  m.decoder_width = decoder_width;
  m.full_res_width = full_res_width;
  m.rgb_frozen = rgb_frozen;
  m.maxd_conditioning = maxd_conditioning;
  return m;
}

loss::DecodeHeadParams TrainConfig::decode_params(double max_d) const {
  // Term count is fixed by the architecture; per-sample keys only rescale.
  loss::DecodeHeadParams p = loss::DecodeHeadParams::for_max_depth(encoding.pde.global_max_depth);
  p.max_d = max_d;
  return p;
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const auto it = setters().find(key);
    if (it == setters().end()) throw FormatError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_train_config(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream os;
  os << std::boolalpha;
  os << "steps = " << c.steps << "\nbatch = " << c.batch << "\nheight = " << c.height
     << "\nwidth = " << c.width << "\nlr = " << Num{c.adam.lr} << "\nbeta1 = " << Num{c.adam.beta1}
     << "\nbeta2 = " << Num{c.adam.beta2} << "\nadam_eps = " << Num{c.adam.eps} << "\nseed = " << c.seed
     << "\ntrain_scenes = " << c.train_scenes << "\neval_scenes = " << c.eval_scenes
     << "\neval_every = " << c.eval_every << "\nschedule.warmup_steps = " << c.schedule.warmup_steps
     << "\nschedule.easy_hi = " << Num{c.schedule.easy_hi} << "\nschedule.hard_hi = " << Num{c.schedule.hard_hi}
     << "\nschedule.lo = " << Num{c.schedule.lo} << "\nrandomize = " << c.randomize_depth
     << "\nrandomize.max_d = " << Num{c.randomize.max_d}
     << "\nrandomize.jitter_amplitude = " << Num{c.randomize.jitter_amplitude}
     << "\nrandomize.bin_jitter = " << Num{c.randomize.bin_jitter}
     << "\nencoding = " << encoding_name(c.encoding.kind) << "\npde.channels = " << c.encoding.pde.channels
     << "\npde.temperature = " << Num{c.encoding.pde.temperature} << "\npde.max_depth_mode = "
     << (c.encoding.pde.mode == pde::MaxDepthMode::kGlobal ? "global" : "per_sample")
     << "\npde.global_max_depth = " << Num{c.encoding.pde.global_max_depth}
     << "\nnorm.mean = " << Num{c.encoding.norm_mean} << "\nnorm.std = " << Num{c.encoding.norm_std}
     << "\nscales.factors = " << join(c.scales.factors) << "\nscales.weights = " << join(c.scales.weights)
     << "\nsi.lambda = " << Num{c.si.lambda} << "\nsi.alpha = " << Num{c.si.alpha}
     << "\naugment_rgb = " << c.augment_rgb << "\nrgb_frozen = " << c.rgb_frozen
     << "\nmaxd_conditioning = " << c.maxd_conditioning << "\nmodel.widths = " << join(c.widths)
     << "\nmodel.decoder_width = " << c.decoder_width << "\nmodel.full_res_width = " << c.full_res_width << "\n";
  return os.str();
}

// ---- data ----------------------------------------------------------------

Scene train_scene(const TrainConfig& cfg, int index) {
  return scene_from(derive_seed(cfg.seed, kTrainStream, static_cast<std::uint64_t>(index)), cfg.height, cfg.width);
}

Scene eval_scene(const TrainConfig& cfg, int index) {
  return scene_from(derive_seed(cfg.seed, kEvalStream, static_cast<std::uint64_t>(index)), cfg.height, cfg.width);
}

std::vector<Scene> make_eval_set(const TrainConfig& cfg) {
  std::vector<Scene> out;
  for (int i = 0; i < cfg.eval_scenes; ++i) out.push_back(eval_scene(cfg, i));
  return out;
}

EncodedInput encode_input(const DepthMap& sparse, const Intrinsics& k, const EncodingConfig& enc) {
  enc.validate();
  switch (enc.kind) {
    case InputEncoding::kPde: {
      pde::PdeEncoding e = pde::pde_encode(sparse, enc.pde);
      return {std::move(e.tensor), e.max_d};
    }
    case InputEncoding::kP3de: {
      pde::P3deEncoding e = pde::p3de_encode(depth_to_points(sparse, k), enc.pde);
      return {std::move(e.tensor), e.max_d[2]};
    }
    case InputEncoding::kNorm:
      return {pde::normalize_encode(sparse, enc.norm_mean, enc.norm_std), enc.pde.global_max_depth};
  }
  throw ContractError("unknown input encoding");
}

void augment_pair(RgbImage& rgb, DepthMap& depth, Intrinsics& k, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xa06));
  const int h = rgb.height(), w = rgb.width();
  const double brightness = rng.uniform(0.8, 1.2);
  const double contrast = rng.uniform(0.8, 1.2);
  const double saturation = rng.uniform(0.8, 1.2);
  const bool gray = rng.uniform() < 0.1;
  const bool flip = rng.uniform() < 0.5;

  double mean = 0.0;
  for (double v : rgb.planar()) mean += v;
  mean /= static_cast<double>(rgb.planar().size());
  RgbImage out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sx = flip ? w - 1 - x : x;
      double c[3];
      for (int k = 0; k < 3; ++k) c[k] = (rgb(k, y, sx) * brightness - mean) * contrast + mean;
      const double luma = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
      for (int k = 0; k < 3; ++k) {
        const double v = gray ? luma : luma + (c[k] - luma) * saturation;
        out.set(k, y, x, std::clamp(v, 0.0, 1.0));
      }
    }
  rgb = std::move(out);
  if (flip) {
    k.cx = (w - 1) - k.cx;  // pixel u maps to w - 1 - u
    DepthMap d(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) d.set(y, x, depth(y, w - 1 - x));
    depth = std::move(d);
  }
}

Batch make_batch(const TrainConfig& cfg, std::int64_t step, std::uint64_t seed) {
  cfg.validate();
  Batch batch;
  batch.step = step;
  batch.samples.resize(static_cast<std::size_t>(cfg.batch));
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cfg.batch; ++i) {
    try {
      const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i));
      Rng rng(s);
      Scene scene = train_scene(cfg, static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.train_scenes))));
      Sample& out = batch.samples[static_cast<std::size_t>(i)];
      out.intrinsics = scene.intrinsics;
      if (cfg.augment_rgb) augment_pair(scene.rgb, scene.depth, out.intrinsics, derive_seed(s, 1));
      out.rgb = std::move(scene.rgb);
      if (cfg.randomize_depth) {
        auto [d, t] = randomize::randomize_depth(scene.depth, cfg.randomize, derive_seed(s, 2));
        out.target = std::move(d);
        out.transform = t;
      } else {
        out.target = std::move(scene.depth);
      }
      out.removal_target = masks::sample_removal_fraction(cfg.schedule, step, derive_seed(s, 3));
      const masks::MaskSpec spec = masks::sample_mask_spec(derive_seed(s, 4), out.removal_target, cfg.height, cfg.width);
      out.vanish = masks::generate_mask(spec, derive_seed(s, 5), validity_mask(out.target));
      std::vector<double> kept(out.target.values().begin(), out.target.values().end());
      for (std::size_t p = 0; p < kept.size(); ++p)
        if (out.vanish[p]) kept[p] = 0.0;
      out.input_depth = DepthMap(cfg.height, cfg.width, std::move(kept));
      out.encoded = encode_input(out.input_depth, out.intrinsics, cfg.encoding);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return batch;
}

// ---- training ------------------------------------------------------------

SampleForward sample_loss(const model::RgbdModel& model, const Sample& sample, const TrainConfig& cfg) {
  std::optional<pde::MaxDepthVector> maxd;
  if (cfg.maxd_conditioning) maxd = pde::encode_maxd_vector(sample.encoded.max_d, model.config().maxd_width);
  SampleForward out;
  out.forward = model::forward(model, rgb_array(sample.rgb), sample.encoded.tensor, maxd ? &*maxd : nullptr);
  const loss::DecodeHeadParams dp = cfg.decode_params(sample.encoded.max_d);
  std::vector<Node> preds;
  for (const Node& head : out.forward.heads)
    preds.push_back(ag::clamp_min(loss::metric_decode(head, dp), randomize::kFloorMeters, true));
  for (std::size_t s = 0; s < preds.size(); ++s)
    for (double v : preds[s].value().data)
      if (!std::isfinite(v)) throw DivergenceError("non-finite prediction at scale " + std::to_string(s));
  out.report = loss::multi_scale_loss(preds, sample.target, sample.vanish, validity_mask(sample.target),
                                      cfg.scales, cfg.si);
  return out;
}

StepReport train_step(model::RgbdModel& model, optim::Adam& adam, const Batch& batch, const TrainConfig& cfg) {
  if (batch.samples.empty()) throw ContractError("train_step on an empty batch");
  model.params().zero_grad();
  StepReport report;
  report.step = batch.step;
  const double inv_b = 1.0 / static_cast<double>(batch.samples.size());
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    const Sample& s = batch.samples[i];
    SampleForward f = sample_loss(model, s, cfg);
    if (!std::isfinite(f.report.total)) {
      std::ostringstream os;
      os << "non-finite loss at step " << batch.step << ", sample " << i << ": total=" << f.report.total
         << " removal_target=" << s.removal_target << " max_d=" << s.encoded.max_d
         << " transform=" << s.transform.to_json() << " scales=[";
      for (const auto& t : f.report.scales)
        os << "{factor=" << t.factor << " rec=" << t.reconstruction << " pred=" << t.prediction << "}";
      os << "]";
      throw DivergenceError(os.str());
    }
    ag::backward(ag::scale(f.report.total_node, inv_b));
    report.loss += f.report.total * inv_b;
    report.samples.push_back(std::move(f.report));
  }
  for (const std::string& name : adam.names()) {
    const Array g = model.params().at(name).grad();
    for (double v : g.data)
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient in '" + name + "' at step " + std::to_string(batch.step));
  }
  adam.step(model.params());
  return report;
}

// ---- metrics -------------------------------------------------------------

double rmse_mm(const DepthMap& pred, const DepthMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw ContractError("rmse: prediction and ground truth extents differ");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.valid(i)) continue;
    const double e = (pred[i] - gt[i]) * 1000.0;
    acc += e * e;
    ++n;
  }
  if (n == 0) throw EmptySetError("rmse: ground truth has no valid pixel");
  return std::sqrt(acc / static_cast<double>(n));
}

std::vector<double> density_fractions() {
  std::vector<double> out;
  for (int p = 1; p <= 96; p += 5) out.push_back(p / 100.0);
  return out;
}

double trapezoid_mean(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw ContractError("trapezoid needs matching lists of >= 2 points");
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (!(xs[i] > xs[i - 1])) throw ContractError("trapezoid abscissae must increase");
    area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
  }
  return area / (xs.back() - xs.front());
}

DepthPredictor model_predictor(const model::RgbdModel& model, const TrainConfig& cfg) {
  return [&model, cfg](const Scene& scene, const DepthMap& sparse) {
    const EncodedInput enc = encode_input(sparse, scene.intrinsics, cfg.encoding);
    std::optional<pde::MaxDepthVector> maxd;
    if (cfg.maxd_conditioning) maxd = pde::encode_maxd_vector(enc.max_d, model.config().maxd_width);
    const model::ForwardResult f = model::forward(model, rgb_array(scene.rgb), enc.tensor, maxd ? &*maxd : nullptr);
    const Node d = loss::metric_decode(f.heads.front(), cfg.decode_params(enc.max_d));
    return to_depth(d.value(), sparse.height(), sparse.width());
  };
}

DepthMap subsample(const DepthMap& depth, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("subsample fraction must lie in (0, 1]");
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < depth.size(); ++i)
    if (depth.valid(i)) valid.push_back(i);
  if (valid.empty()) throw EmptySetError("subsample of an all-missing depth map");
  const std::size_t keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(valid.size()))), 1, valid.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < keep; ++i)
    std::swap(valid[i], valid[i + rng.index(valid.size() - i)]);
  std::vector<double> out(depth.size(), 0.0);
  for (std::size_t i = 0; i < keep; ++i) out[valid[i]] = depth[valid[i]];
  return DepthMap(depth.height(), depth.width(), std::move(out));
}

DensitySweep auc_rmse_density_sweep(const DepthPredictor& predict, const std::vector<Scene>& eval_set,
                                    std::uint64_t seed) {
  if (eval_set.empty()) throw EmptySetError("density sweep over an empty eval set");
  DensitySweep sweep;
  sweep.fractions = density_fractions();
  sweep.rmse_mm.assign(sweep.fractions.size(), 0.0);
  for (std::size_t s = 0; s < eval_set.size(); ++s)
    for (std::size_t f = 0; f < sweep.fractions.size(); ++f) {
      const DepthMap sparse = subsample(eval_set[s].depth, sweep.fractions[f], derive_seed(seed, s, f));
      sweep.rmse_mm[f] += rmse_mm(predict(eval_set[s], sparse), eval_set[s].depth);
    }
  for (double& r : sweep.rmse_mm) r /= static_cast<double>(eval_set.size());
  // The trapezoid is linear in the samples, so the AUC of the mean curve
  // equals the mean of per-sample AUCs.
  sweep.auc_rmse_mm = trapezoid_mean(sweep.fractions, sweep.rmse_mm);
  return sweep;
}

MetricsRow evaluate(const DepthPredictor& predict, const std::vector<Scene>& eval_set, std::int64_t step,
                    std::uint64_t seed) {
  if (eval_set.empty()) throw EmptySetError("evaluation over an empty eval set");
  MetricsRow row;
  row.step = step;
  for (const Scene& s : eval_set) row.rmse_mm += rmse_mm(predict(s, s.depth), s.depth);
  row.rmse_mm /= static_cast<double>(eval_set.size());
  const DensitySweep sweep = auc_rmse_density_sweep(predict, eval_set, seed);
  row.auc_rmse_mm = sweep.auc_rmse_mm;
  row.density_rmse_mm = sweep.rmse_mm;
  return row;
}

MetricsRow evaluate(const model::RgbdModel& model, const std::vector<Scene>& eval_set, const TrainConfig& cfg,
                    std::int64_t step) {
  return evaluate(model_predictor(model, cfg), eval_set, step, kSweepSeed);
}

std::string metrics_csv_header() {
  std::ostringstream os;
  os << "step,split,rmse_mm,auc_rmse_mm";
  for (double f : density_fractions()) os << ",d" << std::setw(2) << std::setfill('0') << std::lround(f * 100);
  return os.str();
}

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream os;
  os << std::setprecision(10) << row.step << ',' << row.split << ',' << row.rmse_mm << ',' << row.auc_rmse_mm;
  for (double v : row.density_rmse_mm) os << ',' << v;
  return os.str();
}

// ---- checkpoints -----------------------------------------------------------

ckpt::NamedArrays make_checkpoint(const model::RgbdModel& model, const TrainConfig& cfg, const optim::Adam* adam) {
  ckpt::NamedArrays out;
  const std::string text = format_train_config(cfg);
  out.emplace_back("meta.train_config",
                   Array(ag::Shape{static_cast<int>(text.size())}, std::vector<double>(text.begin(), text.end())));
  const auto mv = model.config().to_vector();
  out.emplace_back("meta.model", Array(ag::Shape{static_cast<int>(mv.size())}, mv));
  for (const auto& [name, node] : model.params()) out.emplace_back("param." + name, node.value());
  if (adam != nullptr) {
    out.emplace_back("adam.t", Array(ag::Shape{1}, std::vector<double>{static_cast<double>(adam->steps())}));
    for (const auto& [name, slot] : adam->slots()) {
      out.emplace_back("adam.m." + name, slot.m);
      out.emplace_back("adam.v." + name, slot.v);
    }
  }
  return out;
}

Restored restore_checkpoint(const ckpt::NamedArrays& arrays) {
  const Array& text_arr = ckpt::find(arrays, "meta.train_config");
  std::string text;
  for (double c : text_arr.data) {
    if (c < 0.0 || c > 127.0 || c != std::floor(c)) throw FormatError("checkpoint config text is corrupt");
    text.push_back(static_cast<char>(c));
  }
  const TrainConfig cfg = parse_train_config(text);
  const model::ModelConfig mc = model::ModelConfig::from_vector(ckpt::find(arrays, "meta.model").data);
  if (!(mc == cfg.model_config())) throw FormatError("checkpoint model record disagrees with its train config");

  Restored r{model::RgbdModel(mc, 0), cfg, std::nullopt};
  std::size_t loaded = 0;
  for (const auto& [name, a] : arrays) {
    if (name.rfind("param.", 0) != 0) continue;
    const std::string pname = name.substr(6);
    if (!r.model.params().contains(pname)) throw FormatError("checkpoint has unknown parameter '" + pname + "'");
    Array& dst = r.model.params().at(pname).mutable_value();
    if (dst.shape != a.shape)
      throw FormatError("parameter '" + pname + "' has shape " + ag::shape_str(a.shape) + ", expected " +
                        ag::shape_str(dst.shape));
    dst = a;
    ++loaded;
  }
  if (loaded != r.model.params().count())
    throw FormatError("checkpoint holds " + std::to_string(loaded) + " of " +
                      std::to_string(r.model.params().count()) + " parameters");

  bool has_adam = false;
  for (const auto& entry : arrays) has_adam = has_adam || entry.first == "adam.t";
  if (has_adam) {
    optim::Adam adam(cfg.adam, r.model.trainable_names());
    std::map<std::string, optim::AdamSlot> slots;
    for (const auto& [name, a] : arrays) {
      if (name.rfind("adam.m.", 0) == 0) slots[name.substr(7)].m = a;
      if (name.rfind("adam.v.", 0) == 0) slots[name.substr(7)].v = a;
    }
    adam.restore(static_cast<std::int64_t>(ckpt::find(arrays, "adam.t")[0]), std::move(slots));
    r.adam.emplace(std::move(adam));
  }
  return r;
}

// ---- full run --------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, const RunOutputs& out) {
  cfg.validate();
  model::RgbdModel model = model::build_model(cfg.model_config(), derive_seed(cfg.seed, 0x30de1));
  TrainResult result{std::move(model), optim::Adam(cfg.adam, {}), {}, {}, {}};
  result.adam = optim::Adam(cfg.adam, result.model.trainable_names());
  const std::vector<Scene> eval_set = make_eval_set(cfg);

  auto record = [&](std::int64_t step) {
    MetricsRow row = evaluate(result.model, eval_set, cfg, step);
    if (out.metrics_csv) *out.metrics_csv << metrics_csv_row(row) << std::endl;
    if (out.log)
      *out.log << "eval step " << step << ": rmse " << row.rmse_mm << " mm, auc " << row.auc_rmse_mm << " mm"
               << std::endl;
    return row;
  };
  if (out.metrics_csv) *out.metrics_csv << metrics_csv_header() << '\n';
  if (out.loss_csv) *out.loss_csv << loss::loss_csv_header(cfg.scales.factors.size()) << '\n';
  result.initial = record(0);

  for (int step = 0; step < cfg.steps; ++step) {
    const Batch batch = make_batch(cfg, step, cfg.seed);
    const StepReport rep = train_step(result.model, result.adam, batch, cfg);
    result.losses.push_back(rep.loss);
    if (out.loss_csv) {
      loss::LossReport mean;
      mean.scales.resize(cfg.scales.factors.size());
      for (const auto& s : rep.samples)
        for (std::size_t k = 0; k < s.scales.size(); ++k) {
          mean.scales[k].factor = s.scales[k].factor;
          mean.scales[k].reconstruction += s.scales[k].reconstruction / static_cast<double>(rep.samples.size());
          mean.scales[k].prediction += s.scales[k].prediction / static_cast<double>(rep.samples.size());
        }
      mean.total = rep.loss;
      *out.loss_csv << loss::loss_csv_row(step, mean) << '\n';
    }
    if (out.log && out.log_every > 0 && (step + 1) % out.log_every == 0)
      *out.log << "step " << step + 1 << "/" << cfg.steps << " loss " << rep.loss << std::endl;
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 < cfg.steps) record(step + 1);
  }
  result.final = record(cfg.steps);
  return result;
}

}  // namespace vd::pipeline
