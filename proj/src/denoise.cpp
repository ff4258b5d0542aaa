#include "noisylab/denoise.h"

#include <sstream>

#include "noisylab/checkpoint.h"
#include "noisylab/errors.h"
#include "noisylab/init.h"
#include "noisylab/ops.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

constexpr const char* kArchKey = "denoiser/__arch__";

}  // namespace

std::string to_string(DenoiserKind kind) { return kind == DenoiserKind::kDnCnn ? "dncnn9" : "unet"; }

DenoiserKind parse_denoiser_kind(const std::string& text) {
  if (text == "dncnn9" || text == "dncnn") return DenoiserKind::kDnCnn;
  if (text == "unet") return DenoiserKind::kUNet;
  throw ConfigError("unknown denoiser '" + text + "' (expected dncnn9 or unet)");
}

std::string DenoiserSpec::describe() const {
  std::ostringstream os;
  os << "kind=" << to_string(kind) << ";channels=" << channels << ";width=" << width;
  return os.str();
}

DenoiserSpec DenoiserSpec::parse(const std::string& text) {
  DenoiserSpec spec;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("denoiser descriptor: bad field '" + field + "'");
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    try {
      if (key == "kind") spec.kind = parse_denoiser_kind(value);
      if (key == "channels") spec.channels = std::stoi(value);
      if (key == "width") spec.width = std::stoi(value);
    } catch (const std::invalid_argument&) {
      throw FormatError("denoiser descriptor: bad value for " + key);
    }
  }
  return spec;
}

// ---- Base -------------------------------------------------------------------

Denoiser::Conv Denoiser::add_conv(const std::string& name, int out, int in, Rng& rng, int kernel) {
  return {&params_.add(name + "/weight", orthogonal_init({out, in, kernel, kernel}, rng)),
          &params_.add(name + "/bias", Tensor({out}))};
}

Var Denoiser::apply(Tape& tape, const Conv& conv, const Var& x, int stride) {
  return conv2d(x, tape.param(*conv.weight), tape.param(*conv.bias), {stride, -1});
}

void Denoiser::check_extent(const Shape&) const {}

Var Denoiser::forward(Tape& tape, const Var& x) const {
  const Shape& shape = x.shape();
  if (shape.size() != 4) throw ShapeError("denoiser expects [N, C, H, W], got " + shape_str(shape));
  if (shape[1] != spec_.channels) {
    throw ShapeError("denoiser built for " + std::to_string(spec_.channels) + " channels, got " + shape_str(shape));
  }
  check_extent(shape);
  if (!x.value().all_finite()) throw DomainError("denoiser input is not finite");
  return x - predict_noise(tape, x);
}

void Denoiser::save(Checkpoint& ckpt) const {
  ckpt.put_string(kArchKey, descriptor());
  params_.save(ckpt);
}

void Denoiser::load(const Checkpoint& ckpt) {
  const auto stored = ckpt.get_string(kArchKey);
  if (stored != descriptor()) {
    throw FormatError("denoiser architecture mismatch: checkpoint has '" + stored + "', model is '" + descriptor() +
                      "'");
  }
  params_.load(ckpt);
}

// ---- DnCNN ------------------------------------------------------------------

DnCnn9::DnCnn9(DenoiserSpec spec, Rng& rng) : Denoiser(spec) {
  if (spec_.channels < 1 || spec_.width < 1) throw ConfigError("denoiser channels and width must be positive");
  for (int i = 0; i < kLayers; ++i) {
    const int in = i == 0 ? spec_.channels : spec_.width;
    const int out = i == kLayers - 1 ? spec_.channels : spec_.width;
    convs_.push_back(add_conv("conv" + std::to_string(i), out, in, rng));
  }
}

Var DnCnn9::predict_noise(Tape& tape, const Var& x) const {
  Var h = x;
  for (int i = 0; i < kLayers - 1; ++i) h = relu(apply(tape, convs_[static_cast<std::size_t>(i)], h));
  return apply(tape, convs_.back(), h);
}

// ---- U-Net ------------------------------------------------------------------

UNetSmall::UNetSmall(DenoiserSpec spec, Rng& rng) : Denoiser(spec) {
  if (spec_.channels < 1 || spec_.width < 1) throw ConfigError("denoiser channels and width must be positive");
  const int c = spec_.channels, w = spec_.width;
  enc0a_ = add_conv("enc0a", w, c, rng);
  enc0b_ = add_conv("enc0b", w, w, rng);
  down1_ = add_conv("down1", 2 * w, w, rng);
  enc1_ = add_conv("enc1", 2 * w, 2 * w, rng);
  down2_ = add_conv("down2", 4 * w, 2 * w, rng);
  mid_ = add_conv("mid", 4 * w, 4 * w, rng);
  up1a_ = add_conv("up1a", 2 * w, 6 * w, rng);
  up1b_ = add_conv("up1b", 2 * w, 2 * w, rng);
  up2a_ = add_conv("up2a", w, 3 * w, rng);
  up2b_ = add_conv("up2b", w, w, rng);
  out_ = add_conv("out", c, w, rng);
}

void UNetSmall::check_extent(const Shape& shape) const {
  if (shape[2] < 4 || shape[3] < 4 || shape[2] % 4 || shape[3] % 4) {
    throw ShapeError("U-Net needs H and W divisible by 4, got " + shape_str(shape));
  }
}

Var UNetSmall::predict_noise(Tape& tape, const Var& x) const {
  auto e0 = relu(apply(tape, enc0b_, relu(apply(tape, enc0a_, x))));
  auto e1 = relu(apply(tape, enc1_, relu(apply(tape, down1_, e0, 2))));
  auto mid = relu(apply(tape, mid_, relu(apply(tape, down2_, e1, 2))));
  const Var skip1[] = {upsample2x(mid), e1};
  auto u1 = relu(apply(tape, up1b_, relu(apply(tape, up1a_, concat_channels(skip1)))));
  const Var skip0[] = {upsample2x(u1), e0};
  auto u0 = relu(apply(tape, up2b_, relu(apply(tape, up2a_, concat_channels(skip0)))));
  return apply(tape, out_, u0);
}

// ---- Factory ----------------------------------------------------------------

std::unique_ptr<Denoiser> make_denoiser(const DenoiserSpec& spec, Rng& rng) {
  if (spec.kind == DenoiserKind::kUNet) return std::make_unique<UNetSmall>(spec, rng);
  return std::make_unique<DnCnn9>(spec, rng);
}

std::unique_ptr<Denoiser> load_denoiser(const Checkpoint& ckpt) {
  Rng rng(0);
  auto model = make_denoiser(DenoiserSpec::parse(ckpt.get_string(kArchKey)), rng);
  model->load(ckpt);
  return model;
}

Tensor denoise(const Denoiser& model, const Tensor& noisy) {
  Tape tape(GradMode::kDisabled);
  return model.forward(tape, tape.constant(noisy)).value();
}

NOISYLAB_NAMESPACE_END
