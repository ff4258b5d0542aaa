#include "cli.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "noisylab/checkpoint.h"
#include "noisylab/errors.h"
#include "noisylab/train.h"

namespace noisylab::cli {
namespace fs = std::filesystem;

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string();
    return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(path + ":" + std::to_string(number) + ": expected key=value");
    }
    entries.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return entries;
}

namespace {

std::string text_of(const std::string& v) { return v; }
std::string text_of(bool v) { return v ? "true" : "false"; }
std::string text_of(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
template <class T>
  requires std::is_integral_v<T>
std::string text_of(T v) {
  return std::to_string(v);
}
std::string text_of(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + text_of(v[i]);
  return out;
}

// Options of one subcommand, remembered so the resolved values can be
// written back as a config file that reproduces the run.
class Frozen {
 public:
  explicit Frozen(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* option(const std::string& name, T& var, const std::string& help) {
    entries_.emplace_back(name, [&var] { return text_of(var); });
    return app_->add_option("--" + name, var, help)->capture_default_str();
  }
  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    entries_.emplace_back(name, [&var] { return text_of(var); });
    return app_->add_flag("--" + name, var, help);
  }

  void write(const fs::path& path) const {
    std::ofstream out(path);
    out << "# noisylab " << app_->get_name() << " resolved configuration\n";
    out << "# rerun: noisylab " << app_->get_name() << " --config " << path.filename().string() << "\n";
    for (const auto& [name, value] : entries_) out << name << "=" << value() << "\n";
    if (!out) throw FormatError("cannot write config '" + path.string() + "'");
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<std::string()>>> entries_;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

void write_key_values(const fs::path& path, const KeyValues& rows) {
  std::ofstream out(path);
  for (const auto& [k, v] : rows) out << k << "=" << v << "\n";
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
}

// ---- synth ----------------------------------------------------------------------

struct SynthArgs {
  double beta1 = 1e-2;
  double beta2 = 1e-4;
  std::string camera = "SYN";
  std::uint32_t iso = 800;
  int pairs = 5000;
  int pairs_per_scene = 50;
  int size = 32;
  int channels = 1;
  std::string clean_source = "smooth";
  double ramp = 1.0;
  std::uint64_t seed = 0;
  std::string out;
};

void add_synth(Frozen& f, SynthArgs& a) {
  f.option("beta1", a.beta1, "signal-dependent variance slope");
  f.option("beta2", a.beta2, "signal-independent variance");
  f.option("camera", a.camera, "camera id recorded in every record");
  f.option("iso", a.iso, "ISO recorded in every record");
  f.option("pairs", a.pairs, "number of noisy pairs");
  f.option("pairs-per-scene", a.pairs_per_scene, "pairs sharing one scene id");
  f.option("size", a.size, "patch height and width");
  f.option("channels", a.channels, "channels per patch (1, or 4 for packed Bayer)");
  f.option("clean-source", a.clean_source, "'smooth' or an NPDS file with clean patches");
  f.option("ramp", a.ramp, "smooth source: slope scale in [0, 1], 0 gives flat patches");
  f.option("seed", a.seed, "random seed");
  f.option("out", a.out, "output NPDS file")->required();
}

int cmd_synth(const SynthArgs& a, const Frozen& f, std::ostream& out) {
  SynthOptions options;
  options.camera = a.camera;
  options.iso = a.iso;
  options.n_pairs = a.pairs;
  options.pairs_per_scene = a.pairs_per_scene;
  options.seed = a.seed;
  if (a.size <= 0 || a.channels <= 0) throw ConfigError("size and channels must be positive");

  std::unique_ptr<CleanSource> source;
  std::optional<Dataset> clean_data;
  if (a.clean_source == "smooth") {
    source = std::make_unique<SmoothCleanSource>(a.channels, a.size, a.size, a.ramp);
  } else {
    clean_data = read_dataset(a.clean_source).data;
    source = std::make_unique<DatasetCleanSource>(*clean_data);
  }
  const Dataset data = synth_hgn_dataset(*source, {a.beta1, a.beta2}, options);
  write_dataset(a.out, data);
  f.write(a.out + ".cfg");
  out << "wrote " << data.size() << " pairs to " << a.out << "\n";
  return kExitOk;
}

// ---- ingest ---------------------------------------------------------------------

struct IngestArgs {
  std::string manifest;
  float black = 0.0f;
  float white = 1023.0f;
  int patch = 32;
  std::string out;
};

void add_ingest(Frozen& f, IngestArgs& a) {
  f.option("manifest", a.manifest,
           "CSV: path,camera,iso,scene,illumination,height,width; one little-endian uint16 RGGB frame per row, "
           "captures of a scene in order")
      ->required();
  f.option("black", a.black, "sensor black level");
  f.option("white", a.white, "sensor white level");
  f.option("patch", a.patch, "patch size in packed pixels");
  f.option("out", a.out, "output NPDS file")->required();
}

int cmd_ingest(const IngestArgs& a, const Frozen& f, std::ostream& out) {
  std::ifstream in(a.manifest);
  if (!in) throw DataError("cannot open manifest '" + a.manifest + "'");
  const fs::path base = fs::path(a.manifest).parent_path();
  std::map<std::uint32_t, std::vector<Capture>> scenes;
  std::vector<std::uint32_t> scene_order;
  std::uint64_t clamped = 0;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#' || line.rfind("path,", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != 7) throw DataError(a.manifest + ":" + std::to_string(number) + ": expected 7 columns");
    const int height = std::stoi(cells[5]);
    const int width = std::stoi(cells[6]);
    std::ifstream raw(base / cells[0], std::ios::binary);
    if (!raw) throw DataError("cannot open capture '" + cells[0] + "'");
    std::vector<std::uint16_t> samples(static_cast<std::size_t>(height) * width);
    std::vector<unsigned char> bytes(samples.size() * 2);
    raw.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (raw.gcount() != static_cast<std::streamsize>(bytes.size())) {
      throw FormatError("capture '" + cells[0] + "' is shorter than " + cells[5] + "x" + cells[6]);
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
      samples[i] = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    }
    Capture capture;
    capture.meta.camera_id = cells[1];
    capture.meta.iso = static_cast<std::uint32_t>(std::stoul(cells[2]));
    capture.meta.scene_id = static_cast<std::uint32_t>(std::stoul(cells[3]));
    capture.meta.illumination = cells[4] == "low" ? Illumination::kLow : Illumination::kNormal;
    validate_meta(capture.meta);
    std::uint64_t clamped_here = 0;
    capture.image = pack_bayer(samples, height, width, a.black, a.white, &clamped_here);
    clamped += clamped_here;
    if (!scenes.count(capture.meta.scene_id)) scene_order.push_back(capture.meta.scene_id);
    scenes[capture.meta.scene_id].push_back(std::move(capture));
  }
  Dataset data;
  data.header.channels = 4;
  data.header.patch_h = data.header.patch_w = static_cast<std::uint16_t>(a.patch);
  data.header.white_level = a.white;
  data.header.black_level = a.black;
  data.clamped_values = clamped;
  for (auto scene : scene_order) {
    auto pairs = extract_pairs(scenes[scene], a.patch);
    for (auto& p : pairs) data.pairs.push_back(std::move(p));
  }
  if (data.empty()) throw DataError("manifest produced no pairs");
  write_dataset(a.out, data);
  f.write(a.out + ".cfg");
  write_key_values(a.out + ".ingest.txt", {{"pairs", std::to_string(data.size())},
                                          {"scenes", std::to_string(scene_order.size())},
                                          {"clamped_values", std::to_string(clamped)}});
  out << "wrote " << data.size() << " pairs from " << scene_order.size() << " scenes to " << a.out << " ("
      << clamped << " samples clamped)\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string eval_data;
  double train_fraction = 0.7;
  std::string mode = "cross";
  std::string noise_model = "nlf";
  std::string denoiser = "dncnn9";
  int width = 64;
  double lambda = 262144.0;
  int epochs = 10;
  std::size_t batch_size = 128;
  std::string schedule = "default";
  double lr_mult = 1.0;
  double nm_lr_mult = 1.0;
  double r2r_alpha = 0.5;
  double r2r_sigma = 0.0;
  double divergence_floor = -8.0;
  std::size_t eval_cap = 2000;
  bool per_condition = false;
  std::string flow_layers = "default";
  int flow_blocks = 1;
  int flow_hidden = 16;
  int pretrain_epochs = 0;
  int checkpoint_every = 1;
  std::string resume;
  std::uint64_t seed = 0;
  std::string out;
};

void add_train(Frozen& f, TrainArgs& a, bool with_out = true) {
  f.option("data", a.data, "training NPDS dataset")->required();
  f.option("eval-data", a.eval_data, "held-out NPDS dataset; default: scene split of --data");
  f.option("train-fraction", a.train_fraction, "scene fraction used for training when splitting");
  f.option("mode", a.mode, "cross, self, r2r, n2n, supervised or supervised-nf");
  f.option("noise-model", a.noise_model, "awgn, nlf or noiseflow");
  f.option("denoiser", a.denoiser, "dncnn9 or unet");
  f.option("width", a.width, "denoiser feature width");
  f.option("lambda", a.lambda, "weight of the denoiser term");
  f.option("epochs", a.epochs, "epochs to train");
  f.option("batch-size", a.batch_size, "pairs per batch");
  f.option("schedule", a.schedule, "learning-rate schedule: default, joint or supervised");
  f.option("lr-mult", a.lr_mult, "multiplier on the scheduled learning rate");
  f.option("nm-lr-mult", a.nm_lr_mult, "extra multiplier for the noise model");
  f.option("r2r-alpha", a.r2r_alpha, "scale of the r2r corruption");
  f.option("r2r-sigma", a.r2r_sigma, "std of the r2r perturbation (0: estimate from the data)");
  f.option("divergence-floor", a.divergence_floor, "abort when NLL/dim falls below this");
  f.option("eval-cap", a.eval_cap, "held-out pairs evaluated per epoch");
  f.flag("per-condition", a.per_condition, "nlf: one (beta1, beta2) per camera and ISO");
  f.option("flow-layers", a.flow_layers, "flow block layers, e.g. sdt,mix,coupling,gain");
  f.option("flow-blocks", a.flow_blocks, "repeats of the flow block");
  f.option("flow-hidden", a.flow_hidden, "coupling subnet width");
  f.option("pretrain-epochs", a.pretrain_epochs, "Noise2Noise denoiser pretraining epochs");
  f.option("checkpoint-every", a.checkpoint_every, "checkpoint cadence in epochs (0: final only)");
  f.option("resume", a.resume, "checkpoint to resume from");
  f.option("seed", a.seed, "random seed");
  if (with_out) f.option("out", a.out, "output directory")->required();
}

ConditionSpace union_space(const Dataset& a, const Dataset& b) {
  std::set<std::string> cameras;
  std::set<std::uint32_t> isos;
  for (const Dataset* d : {&a, &b}) {
    for (const auto& p : d->pairs) {
      cameras.insert(p.a.meta.camera_id);
      isos.insert(p.a.meta.iso);
    }
  }
  return ConditionSpace({cameras.begin(), cameras.end()}, {isos.begin(), isos.end()});
}

KeyValues noise_parameters(const NoiseModel& model) {
  KeyValues rows;
  if (const auto* nlf = dynamic_cast<const NlfModel*>(&model)) {
    const int k = model.spec().per_condition ? model.conditions().joint_count() : 1;
    for (int i = 0; i < k; ++i) {
      const std::string suffix = k == 1 ? "" : "_" + std::to_string(i);
      rows.emplace_back("beta1" + suffix, text_of(nlf->beta1(i)));
      rows.emplace_back("beta2" + suffix, text_of(nlf->beta2(i)));
    }
  } else if (const auto* awgn = dynamic_cast<const AwgnModel*>(&model)) {
    rows.emplace_back("sigma", text_of(awgn->sigma()));
  }
  return rows;
}

struct TrainOutcome {
  bool diverged = false;
  int diverged_epoch = -1;
  std::string reason;
  std::vector<EpochRecord> history;
};

void log_epoch(std::ostream& log, const std::string& tag, const EpochRecord& r) {
  log << tag << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.train_loss << " nll/dim " << r.eval_nll_per_dim
      << " kl " << r.eval_kl << " psnr " << r.eval_psnr << " ssim " << r.eval_ssim << " (" << r.wallclock_s << " s)"
      << std::endl;
}

TrainOutcome run_training(const TrainArgs& a, const fs::path& out_dir, std::ostream& log) {
  fs::create_directories(out_dir);
  const LossMode mode = parse_loss_mode(a.mode);
  TrainConfig config;
  config.mode = mode;
  config.lambda = a.lambda;
  config.epochs = a.epochs;
  config.batch_size = a.batch_size;
  if (a.schedule != "default") config.schedule = parse_schedule(a.schedule);
  config.lr_multiplier = a.lr_mult;
  config.noise_model_lr_multiplier = a.nm_lr_mult;
  config.r2r_alpha = a.r2r_alpha;
  config.r2r_sigma = a.r2r_sigma;
  config.divergence_floor = a.divergence_floor;
  config.eval_cap = a.eval_cap;
  config.seed = a.seed;
  config.validate();
  if (a.checkpoint_every < 0 || a.pretrain_epochs < 0) throw ConfigError("cadence and pretrain epochs must be >= 0");

  Dataset train, eval;
  if (!a.eval_data.empty()) {
    train = read_dataset(a.data).data;
    eval = read_dataset(a.eval_data).data;
  } else {
    auto loaded = read_dataset(a.data);
    auto parts = split(loaded.data, a.train_fraction, a.seed);
    std::ofstream split_file(out_dir / "split.txt");
    split_file << "# scene,split\n";
    for (auto s : parts.train_scenes) split_file << s << ",train\n";
    for (auto s : parts.test_scenes) split_file << s << ",test\n";
    train = std::move(parts.train);
    eval = std::move(parts.test);
  }
  if (train.dims_per_patch() != eval.dims_per_patch() || train.header.channels != eval.header.channels) {
    throw DataError("training and evaluation data have different patch layouts");
  }
  const ConditionSpace space = union_space(train, eval);
  const int channels = train.header.channels;

  Rng init_rng(Rng::derive(a.seed, 11));
  std::unique_ptr<NoiseModel> model;
  if (trains_noise_model(mode)) {
    NoiseModelSpec spec;
    spec.kind = parse_noise_model_kind(a.noise_model);
    spec.channels = channels;
    spec.per_condition = a.per_condition;
    spec.layers = a.flow_layers;
    spec.blocks = a.flow_blocks;
    spec.hidden = a.flow_hidden;
    model = make_noise_model(spec, space, init_rng);
  }
  std::unique_ptr<Denoiser> denoiser;
  if (trains_denoiser(mode)) denoiser = make_denoiser({parse_denoiser_kind(a.denoiser), channels, a.width}, init_rng);

  if (a.pretrain_epochs > 0 && denoiser) {
    TrainConfig pre = config;
    pre.mode = LossMode::kN2n;
    pre.epochs = a.pretrain_epochs;
    pre.schedule = Schedule::kSupervised;
    pre.seed = Rng::derive(a.seed, 12);
    Trainer pretrainer(pre, nullptr, denoiser.get(), train, eval, space);
    pretrainer.run([&](const EpochRecord& r) {
      log_epoch(log, "pretrain ", r);
      return true;
    });
    write_history_csv((out_dir / "pretrain_history.csv").string(), pretrainer.history());
  }

  Trainer trainer(config, model.get(), denoiser.get(), train, eval, space);
  if (!a.resume.empty()) trainer.load(Checkpoint::load(a.resume));

  TrainOutcome outcome;
  try {
    trainer.run([&](const EpochRecord& r) {
      log_epoch(log, "", r);
      if (a.checkpoint_every > 0 && (r.epoch + 1) % a.checkpoint_every == 0) {
        Checkpoint ckpt;
        trainer.save(ckpt);
        char name[64];
        std::snprintf(name, sizeof name, "checkpoint_epoch%04d.nlab", r.epoch);
        ckpt.save((out_dir / name).string());
      }
      return true;
    });
  } catch (const DivergenceError& e) {
    outcome.diverged = true;
    outcome.diverged_epoch = e.epoch();
    outcome.reason = e.reason();
    log << e.what() << std::endl;
  }
  outcome.history = trainer.history();
  write_history_csv((out_dir / "history.csv").string(), outcome.history);
  if (!outcome.diverged) {
    Checkpoint ckpt;
    trainer.save(ckpt);
    ckpt.save((out_dir / "final.nlab").string());
  }

  KeyValues summary{{"status", outcome.diverged ? "diverged" : "completed"},
                    {"mode", a.mode},
                    {"epochs_completed", std::to_string(outcome.history.size() - (outcome.diverged ? 1 : 0))}};
  if (outcome.diverged) {
    summary.emplace_back("diverged_epoch", std::to_string(outcome.diverged_epoch));
    summary.emplace_back("reason", outcome.reason);
  }
  if (!outcome.history.empty()) {
    const auto& last = outcome.history.back();
    summary.emplace_back("final_train_loss", text_of(last.train_loss));
    summary.emplace_back("final_eval_nll_per_dim", text_of(last.eval_nll_per_dim));
    summary.emplace_back("final_eval_kl", text_of(last.eval_kl));
    summary.emplace_back("final_eval_psnr", text_of(last.eval_psnr));
    summary.emplace_back("final_eval_ssim", text_of(last.eval_ssim));
  }
  if (model) {
    for (auto& row : noise_parameters(*model)) summary.push_back(row);
  }
  if (trainer.config().mode == LossMode::kR2r) summary.emplace_back("r2r_sigma", text_of(trainer.config().r2r_sigma));
  for (const auto& w : trainer.warnings()) summary.emplace_back("warning", w);
  write_key_values(out_dir / "summary.txt", summary);
  return outcome;
}

int cmd_train(const TrainArgs& a, const Frozen& f, std::ostream& out) {
  fs::create_directories(a.out);
  f.write(fs::path(a.out) / "config.txt");
  const auto outcome = run_training(a, a.out, out);
  if (outcome.diverged) throw DivergenceError(outcome.diverged_epoch, a.mode, outcome.reason);
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string report;
  std::size_t eval_cap = 1000000;
  int bins = 256;
  double range = 0.2;
  std::uint64_t seed = 0;
};

void add_eval(Frozen& f, EvalArgs& a) {
  f.option("ckpt", a.ckpt, "checkpoint holding a noise model and/or a denoiser")->required();
  f.option("data", a.data, "NPDS dataset to evaluate")->required();
  f.option("report", a.report, "output metrics CSV")->required();
  f.option("eval-cap", a.eval_cap, "maximum pairs evaluated");
  f.option("bins", a.bins, "noise histogram bins");
  f.option("range", a.range, "noise histogram half range");
  f.option("seed", a.seed, "seed for model sampling");
}

int cmd_eval(const EvalArgs& a, const Frozen& f, std::ostream& out) {
  const Checkpoint ckpt = Checkpoint::load(a.ckpt);
  std::unique_ptr<NoiseModel> model;
  std::unique_ptr<Denoiser> denoiser;
  if (ckpt.contains("noise_model/__arch__")) model = load_noise_model(ckpt);
  if (ckpt.contains("denoiser/__arch__")) denoiser = load_denoiser(ckpt);
  const Dataset data = read_dataset(a.data).data;
  const ConditionSpace space = model ? model->conditions() : ConditionSpace::from_dataset(data);

  EvalOptions options;
  options.cap = a.eval_cap;
  options.seed = a.seed;
  options.histogram.bins = a.bins;
  options.histogram.range = a.range;
  const auto rows = evaluate_strata(model.get(), denoiser.get(), data, space, options);
  write_metrics_csv(a.report, rows, options.histogram);
  f.write(a.report + ".cfg");
  const auto& all = rows.back().metrics;
  out << "patches " << all.patches << " nll/dim " << all.nll_per_dim << " kl " << all.kl << " psnr " << all.psnr
      << " ssim " << all.ssim << " noisy psnr " << all.noisy_psnr << "\n";
  return kExitOk;
}

// ---- sample ---------------------------------------------------------------------

struct SampleArgs {
  std::string ckpt;
  std::string clean_source = "smooth";
  int n = 1;
  int size = 32;
  double ramp = 1.0;
  std::string camera;
  std::uint32_t iso = 0;
  std::uint64_t seed = 0;
  std::string out;
};

void add_sample(Frozen& f, SampleArgs& a) {
  f.option("ckpt", a.ckpt, "checkpoint holding a noise model")->required();
  f.option("clean-source", a.clean_source, "'smooth' or an NPDS file with clean patches");
  f.option("n", a.n, "number of samples");
  f.option("size", a.size, "smooth source: patch size");
  f.option("ramp", a.ramp, "smooth source: slope scale in [0, 1]");
  f.option("camera", a.camera, "conditioning camera (default: from data or the model's first)");
  f.option("iso", a.iso, "conditioning ISO (default: from data or the model's first)");
  f.option("seed", a.seed, "random seed");
  f.option("out", a.out, "output directory")->required();
}

constexpr double kNoiseDisplayRange = 0.2;

// [C, H, W] -> 8-bit rows: grayscale for one channel, RGB from packed Bayer
// (R, mean of the greens, B) for four, channel 0 otherwise.
struct Image {
  int width = 0, height = 0, channels = 1;
  std::vector<unsigned char> pixels;
};

Image to_image(const Tensor& t, bool noise) {
  const auto c = t.shape()[0], h = t.shape()[1], w = t.shape()[2];
  Image img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.channels = c == 4 ? 3 : 1;
  img.pixels.resize(static_cast<std::size_t>(w * h * img.channels));
  auto at = [&](std::int64_t ch, std::int64_t y, std::int64_t x) { return double(t[(ch * h + y) * w + x]); };
  auto byte = [&](double v) {
    if (noise) v = 0.5 + v / (2 * kNoiseDisplayRange);
    return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  };
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      auto* px = &img.pixels[static_cast<std::size_t>((y * w + x) * img.channels)];
      if (c == 4) {
        px[0] = byte(at(0, y, x));
        px[1] = byte(0.5 * (at(1, y, x) + at(2, y, x)));
        px[2] = byte(at(3, y, x));
      } else {
        px[0] = byte(at(0, y, x));
      }
    }
  }
  return img;
}

// Tiles side by side with a 2-pixel black gap, written as PGM or PPM.
void write_grid(const fs::path& path, const std::vector<Image>& tiles) {
  const int gap = 2;
  const int h = tiles.front().height, ch = tiles.front().channels;
  int w = -gap;
  for (const auto& t : tiles) w += t.width + gap;
  std::vector<unsigned char> canvas(static_cast<std::size_t>(w * h * ch), 0);
  int x0 = 0;
  for (const auto& t : tiles) {
    for (int y = 0; y < h; ++y) {
      std::copy_n(&t.pixels[static_cast<std::size_t>(y * t.width * ch)], t.width * ch,
                  &canvas[static_cast<std::size_t>((y * w + x0) * ch)]);
    }
    x0 += t.width + gap;
  }
  std::ofstream out(path, std::ios::binary);
  out << (ch == 3 ? "P6" : "P5") << "\n# noise maps: 0.5 + noise / " << 2 * kNoiseDisplayRange << "\n"
      << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(canvas.data()), static_cast<std::streamsize>(canvas.size()));
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
}

Tensor difference(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

double stddev(const Tensor& noisy, const Tensor& clean) {
  double s = 0, s2 = 0;
  for (std::int64_t i = 0; i < noisy.numel(); ++i) {
    const double d = double(noisy[i]) - clean[i];
    s += d;
    s2 += d * d;
  }
  const double n = static_cast<double>(noisy.numel());
  return std::sqrt(std::max(0.0, s2 / n - (s / n) * (s / n)));
}

int cmd_sample(const SampleArgs& a, const Frozen& f, std::ostream& out) {
  if (a.n <= 0) throw ConfigError("--n must be positive");
  const Checkpoint ckpt = Checkpoint::load(a.ckpt);
  if (!ckpt.contains("noise_model/__arch__")) throw DataError("checkpoint '" + a.ckpt + "' has no noise model");
  const auto model = load_noise_model(ckpt);
  const auto& space = model->conditions();
  const int channels = model->spec().channels;

  struct Item {
    Tensor clean;
    std::optional<Tensor> real;
    SceneMeta meta;
  };
  std::vector<Item> items;
  if (a.clean_source == "smooth") {
    SmoothCleanSource source(channels, a.size, a.size, a.ramp);
    Rng rng(Rng::derive(a.seed, 1));
    for (int i = 0; i < a.n; ++i) {
      items.push_back({source.next(rng), std::nullopt, {space.cameras().front(), space.isos().front(), 0, {}}});
    }
  } else {
    const Dataset data = read_dataset(a.clean_source).data;
    if (!data.has_clean()) throw DataError("clean source '" + a.clean_source + "' has no clean patches");
    if (static_cast<std::size_t>(a.n) > data.size()) throw DataError("clean source has fewer than --n pairs");
    for (int i = 0; i < a.n; ++i) {
      const auto& p = data.pairs[static_cast<std::size_t>(i)];
      items.push_back({p.clean->data, p.a.data, p.a.meta});
    }
  }

  fs::create_directories(a.out);
  f.write(fs::path(a.out) / "config.txt");
  Checkpoint tensors;
  std::ofstream table(fs::path(a.out) / "samples.csv");
  table << "index,camera,iso,clean_mean,sampled_noise_std,real_noise_std\n";
  for (int i = 0; i < a.n; ++i) {
    auto& item = items[static_cast<std::size_t>(i)];
    if (!a.camera.empty()) item.meta.camera_id = a.camera;
    if (a.iso != 0) item.meta.iso = a.iso;
    const std::vector<SceneMeta> metas{item.meta};
    const auto cond = space.encode(metas);
    const Shape shape = item.clean.shape();
    const Tensor batch = item.clean.reshaped({1, shape[0], shape[1], shape[2]});
    Rng rng(Rng::derive(a.seed, 2, static_cast<std::uint64_t>(i)));
    const Tensor sampled = model->sample(batch, cond, rng).reshaped(shape);

    std::vector<Image> tiles{to_image(item.clean, false)};
    if (item.real) tiles.push_back(to_image(*item.real, false));
    tiles.push_back(to_image(sampled, false));
    if (item.real) tiles.push_back(to_image(difference(*item.real, item.clean), true));
    tiles.push_back(to_image(difference(sampled, item.clean), true));
    char name[32];
    std::snprintf(name, sizeof name, "grid_%04d.%s", i, tiles.front().channels == 3 ? "ppm" : "pgm");
    write_grid(fs::path(a.out) / name, tiles);

    const std::string key = std::to_string(i);
    tensors.put("clean/" + key, item.clean);
    tensors.put("sampled/" + key, sampled);
    if (item.real) tensors.put("real/" + key, *item.real);
    double mean = 0;
    for (auto v : item.clean.values()) mean += v;
    mean /= static_cast<double>(item.clean.numel());
    table << i << "," << item.meta.camera_id << "," << item.meta.iso << "," << text_of(mean) << ","
          << text_of(stddev(sampled, item.clean)) << ","
          << (item.real ? text_of(stddev(*item.real, item.clean)) : std::string("nan")) << "\n";
  }
  tensors.save((fs::path(a.out) / "samples.nlab").string());
  out << "wrote " << a.n << " sample grid(s) to " << a.out << "\n";
  return kExitOk;
}

// ---- ablate ---------------------------------------------------------------------

struct AblateArgs {
  std::string sweep = "lambda";
  std::vector<double> values;
  TrainArgs train;
};

void add_ablate(Frozen& f, AblateArgs& a) {
  f.option("sweep", a.sweep, "swept setting: lambda or r2r-alpha");
  f.option("values", a.values, "comma-separated values")->required()->delimiter(',');
  add_train(f, a.train, true);
}

int cmd_ablate(const AblateArgs& a, const Frozen& f, std::ostream& out) {
  if (a.values.empty()) throw ConfigError("--values needs at least one value");
  if (a.sweep != "lambda" && a.sweep != "r2r-alpha") throw ConfigError("unknown sweep '" + a.sweep + "'");
  fs::create_directories(a.train.out);
  f.write(fs::path(a.train.out) / "config.txt");
  std::ofstream table(fs::path(a.train.out) / "ablation.csv");
  table << "sweep,value,status,epochs_completed,diverged_epoch,final_nll_per_dim,final_psnr,final_kl\n";
  for (double v : a.values) {
    TrainArgs run = a.train;
    (a.sweep == "lambda" ? run.lambda : run.r2r_alpha) = v;
    const fs::path dir = fs::path(a.train.out) / (a.sweep + "_" + text_of(v));
    out << "== " << a.sweep << "=" << text_of(v) << std::endl;
    const auto outcome = run_training(run, dir, out);
    // Report the last finite epoch, i.e. the one before a divergence.
    const EpochRecord* last = nullptr;
    for (const auto& r : outcome.history) {
      if (!outcome.diverged || r.epoch < outcome.diverged_epoch) last = &r;
    }
    const std::size_t completed = outcome.history.size() - (outcome.diverged ? 1 : 0);
    table << a.sweep << "," << text_of(v) << "," << (outcome.diverged ? "diverged" : "completed") << ","
          << completed << "," << (outcome.diverged ? std::to_string(outcome.diverged_epoch) : std::string()) << ","
          << (last ? text_of(last->eval_nll_per_dim) : "nan") << "," << (last ? text_of(last->eval_psnr) : "nan")
          << "," << (last ? text_of(last->eval_kl) : "nan") << "\n";
    table.flush();
  }
  return kExitOk;
}

// ---- dispatch -------------------------------------------------------------------

int report_error(std::ostream& err, const std::string& kind, const std::string& message, int code,
                 nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json j = {{"error", kind}, {"message", message}, {"exit_code", code}};
  j.update(extra);
  err << j.dump() << std::endl;
  return code;
}

// Splices config-file entries in front of the command-line flags; keys given
// on the command line win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  std::set<std::string> given;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& t = args[i];
    if (t == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file");
      path = args[++i];
      continue;
    }
    if (t.rfind("--config=", 0) == 0) {
      path = t.substr(9);
      continue;
    }
    if (t.rfind("--", 0) == 0) given.insert(t.substr(2, t.find('=') - 2));
    rest.push_back(t);
  }
  if (path.empty() || rest.size() < 2) return rest;
  std::vector<std::string> out{rest[0], rest[1]};
  for (const auto& [key, value] : read_config_file(path)) {
    // An empty value leaves the option at its default.
    if (!given.count(key) && !value.empty()) out.push_back("--" + key + "=" + value);
  }
  out.insert(out.end(), rest.begin() + 2, rest.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app("Joint noise-model and denoiser training from noisy pairs", "noisylab");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthArgs synth;
  IngestArgs ingest;
  TrainArgs train;
  EvalArgs eval;
  SampleArgs sample;
  AblateArgs ablate;
  const std::string config_help = "key=value file of option values (command-line flags win)";

  Frozen f_synth(app.add_subcommand("synth", "write a synthetic heteroscedastic Gaussian pair dataset"));
  Frozen f_ingest(app.add_subcommand("ingest", "pack raw Bayer captures into a pair dataset"));
  Frozen f_train(app.add_subcommand("train", "train a noise model and/or denoiser"));
  Frozen f_eval(app.add_subcommand("eval", "evaluate a checkpoint per (camera, ISO, scene)"));
  Frozen f_sample(app.add_subcommand("sample", "draw noise samples from a trained noise model"));
  Frozen f_ablate(app.add_subcommand("ablate", "one training run per value of a swept setting"));
  add_synth(f_synth, synth);
  add_ingest(f_ingest, ingest);
  add_train(f_train, train);
  add_eval(f_eval, eval);
  add_sample(f_sample, sample);
  add_ablate(f_ablate, ablate);
  for (auto* f : {&f_synth, &f_ingest, &f_train, &f_eval, &f_sample, &f_ablate}) {
    // Consumed by expand_config(); registered for --help.
    f->app()->add_option("--config", config_help);
  }

  try {
    const auto args = expand_config(raw_args);
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());

    if (f_synth.app()->parsed()) return cmd_synth(synth, f_synth, out);
    if (f_ingest.app()->parsed()) return cmd_ingest(ingest, f_ingest, out);
    if (f_train.app()->parsed()) return cmd_train(train, f_train, out);
    if (f_eval.app()->parsed()) return cmd_eval(eval, f_eval, out);
    if (f_sample.app()->parsed()) return cmd_sample(sample, f_sample, out);
    if (f_ablate.app()->parsed()) return cmd_ablate(ablate, f_ablate, out);
    return report_error(err, "UsageError", "no command", kExitUsage);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    return report_error(err, "UsageError", e.what(), kExitUsage);
  } catch (const ConfigError& e) {
    return report_error(err, "ConfigError", e.what(), kExitUsage);
  } catch (const DivergenceError& e) {
    return report_error(err, "DivergenceError", e.what(), kExitDivergence,
                        {{"epoch", e.epoch()}, {"mode", e.mode()}});
  } catch (const DataError& e) {
    return report_error(err, "DataError", e.what(), kExitData);
  } catch (const FormatError& e) {
    return report_error(err, "FormatError", e.what(), kExitData);
  } catch (const ConditionError& e) {
    return report_error(err, "ConditionError", e.what(), kExitData);
  } catch (const ShapeError& e) {
    return report_error(err, "ShapeError", e.what(), kExitData);
  } catch (const fs::filesystem_error& e) {
    return report_error(err, "IoError", e.what(), kExitData);
  } catch (const std::exception& e) {
    return report_error(err, "InternalError", e.what(), kExitCrash);
  }
}

}  // namespace noisylab::cli
