#include "noisylab/noise_model.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "noisylab/checkpoint.h"
#include "noisylab/errors.h"
#include "noisylab/ops.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

constexpr const char* kArchKey = "noise_model/__arch__";
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Tensor normal_like(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.mutable_values()) v = static_cast<Real>(rng.normal());
  return t;
}

int check_positive(const std::string& key, const std::string& value) {
  try {
    const int v = std::stoi(value);
    if (v > 0) return v;
  } catch (const std::exception&) {
  }
  throw FormatError("noise model descriptor: " + key + " must be a positive integer, got '" + value + "'");
}

}  // namespace

std::string to_string(NoiseModelKind kind) {
  switch (kind) {
    case NoiseModelKind::kAwgn:
      return "awgn";
    case NoiseModelKind::kNlf:
      return "nlf";
    case NoiseModelKind::kFlow:
      return "flow";
  }
  return "?";
}

NoiseModelKind parse_noise_model_kind(const std::string& text) {
  if (text == "awgn") return NoiseModelKind::kAwgn;
  if (text == "nlf") return NoiseModelKind::kNlf;
  if (text == "flow" || text == "noiseflow") return NoiseModelKind::kFlow;
  throw ConfigError("unknown noise model '" + text + "' (expected awgn, nlf or flow)");
}

std::vector<std::string> NoiseModelSpec::layer_list() const {
  std::vector<std::string> block;
  if (layers == "default") {
    block = {"sdt", "mix"};
    if (channels % 2 == 0) block.push_back("coupling");
    block.push_back("gain");
  } else {
    block = split_list(layers, ',');
  }
  if (block.empty()) throw ConfigError("flow needs at least one layer");
  for (const auto& name : block) {
    if (name != "sdt" && name != "mix" && name != "coupling" && name != "gain") {
      throw ConfigError("unknown flow layer '" + name + "'");
    }
  }
  std::vector<std::string> out;
  for (int k = 0; k < blocks; ++k) out.insert(out.end(), block.begin(), block.end());
  return out;
}

std::string NoiseModelSpec::describe() const {
  std::ostringstream os;
  os << "kind=" << to_string(kind) << ";channels=" << channels << ";per_condition=" << (per_condition ? 1 : 0)
     << ";layers=" << layers << ";blocks=" << blocks << ";hidden=" << hidden;
  return os.str();
}

NoiseModelSpec NoiseModelSpec::parse(const std::string& text) {
  NoiseModelSpec spec;
  for (const auto& field : split_list(text, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("noise model descriptor: bad field '" + field + "'");
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    if (key == "kind") {
      spec.kind = parse_noise_model_kind(value);
    } else if (key == "channels") {
      spec.channels = check_positive(key, value);
    } else if (key == "per_condition") {
      spec.per_condition = value == "1";
    } else if (key == "layers") {
      spec.layers = value;
    } else if (key == "blocks") {
      spec.blocks = check_positive(key, value);
    } else if (key == "hidden") {
      spec.hidden = check_positive(key, value);
    }
  }
  return spec;
}

// ---- Base -------------------------------------------------------------------

NoiseModel::NoiseModel(NoiseModelSpec spec, ConditionSpace space) : spec_(std::move(spec)), space_(std::move(space)) {
  if (spec_.channels < 1) throw ConfigError("noise model needs at least one channel");
}

std::string NoiseModel::descriptor() const { return spec_.describe() + ";" + space_.describe(); }

void NoiseModel::save(Checkpoint& ckpt) const {
  ckpt.put_string(kArchKey, descriptor());
  params_.save(ckpt);
}

void NoiseModel::load(const Checkpoint& ckpt) {
  const auto stored = ckpt.get_string(kArchKey);
  if (stored != descriptor()) {
    throw FormatError("noise model architecture mismatch: checkpoint has '" + stored + "', model is '" +
                      descriptor() + "'");
  }
  params_.load(ckpt);
}

void NoiseModel::check_batch(const Var& noisy, const Var& clean, const Conditioning& cond) const {
  if (noisy.shape().size() != 4 || noisy.shape() != clean.shape()) {
    throw ShapeError("noise model expects matching [N, C, H, W] batches, got " + shape_str(noisy.shape()) + " and " +
                     shape_str(clean.shape()));
  }
  if (noisy.shape()[1] != spec_.channels) {
    throw ShapeError("noise model built for " + std::to_string(spec_.channels) + " channels, got " +
                     shape_str(noisy.shape()));
  }
  if (cond.size() != static_cast<std::size_t>(noisy.shape()[0])) {
    throw ConditionError("conditioning has " + std::to_string(cond.size()) + " entries for a batch of " +
                         std::to_string(noisy.shape()[0]));
  }
}

// ---- AWGN -------------------------------------------------------------------

AwgnModel::AwgnModel(NoiseModelSpec spec, ConditionSpace space)
    : NoiseModel(std::move(spec), std::move(space)),
      log_sigma_(&params_.add("awgn/log_sigma", Tensor::scalar(static_cast<Real>(spec_.init_log_sigma)))) {}

Var AwgnModel::nll(Tape& tape, const Var& noisy, const Var& clean, const Conditioning& cond) const {
  check_batch(noisy, clean, cond);
  const double dims = static_cast<double>(noisy.numel() / noisy.shape()[0]);
  auto log_sigma = tape.param(*log_sigma_);
  auto quad = scale(sum_per_sample(square(noisy - clean) * exp(scale(log_sigma, -2.0))), 0.5);
  return quad + add_scalar(scale(log_sigma, dims), dims * kHalfLog2Pi);
}

Tensor AwgnModel::sample(const Tensor& clean, const Conditioning&, Rng& rng) const {
  Tensor out = normal_like(clean.shape(), rng);
  const double sigma = this->sigma();
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<Real>(clean[i] + sigma * out[i]);
  return out;
}

void AwgnModel::set_sigma(double sigma) {
  if (!(sigma > 0)) throw DomainError("sigma must be > 0");
  log_sigma_->value[0] = static_cast<Real>(std::log(sigma));
}

double AwgnModel::sigma() const { return std::exp(static_cast<double>(log_sigma_->value[0])); }

// ---- NLF --------------------------------------------------------------------

NlfModel::NlfModel(NoiseModelSpec spec, ConditionSpace space) : NoiseModel(std::move(spec), std::move(space)) {
  const std::int64_t k = spec_.per_condition ? space_.joint_count() : 1;
  log_beta1_ = &params_.add("nlf/log_beta1", Tensor({k}, static_cast<Real>(spec_.init_log_beta1)));
  log_beta2_ = &params_.add("nlf/log_beta2", Tensor({k}, static_cast<Real>(spec_.init_log_beta2)));
}

Var NlfModel::variance(Tape& tape, const Var& clean, const Conditioning& cond) const {
  const std::vector<int> index = spec_.per_condition ? cond.joint : std::vector<int>(cond.size(), 0);
  const Shape per_sample{static_cast<std::int64_t>(cond.size()), 1, 1, 1};
  auto beta1 = reshape(exp(gather(tape.param(*log_beta1_), index)), per_sample);
  auto beta2 = reshape(exp(gather(tape.param(*log_beta2_), index)), per_sample);
  return beta1 * clamp(clean, 0.0, 1.0) + beta2;
}

Var NlfModel::nll(Tape& tape, const Var& noisy, const Var& clean, const Conditioning& cond) const {
  check_batch(noisy, clean, cond);
  const double dims = static_cast<double>(noisy.numel() / noisy.shape()[0]);
  auto var = variance(tape, clean, cond);
  auto per_pixel = square(noisy - clean) / var + log(var);
  return add_scalar(scale(sum_per_sample(per_pixel), 0.5), dims * kHalfLog2Pi);
}

Tensor NlfModel::sample(const Tensor& clean, const Conditioning& cond, Rng& rng) const {
  if (clean.rank() != 4 || cond.size() != static_cast<std::size_t>(clean.dim(0))) {
    throw ShapeError("sample expects a [N, C, H, W] batch matching its conditioning");
  }
  Tensor out = normal_like(clean.shape(), rng);
  const std::int64_t per = clean.numel() / clean.dim(0);
  for (std::int64_t n = 0; n < clean.dim(0); ++n) {
    const int k = spec_.per_condition ? cond.joint[static_cast<std::size_t>(n)] : 0;
    const double b1 = beta1(k), b2 = beta2(k);
    for (std::int64_t i = n * per; i < (n + 1) * per; ++i) {
      const double c = std::clamp(static_cast<double>(clean[i]), 0.0, 1.0);
      out[i] = static_cast<Real>(clean[i] + std::sqrt(b1 * c + b2) * out[i]);
    }
  }
  return out;
}

void NlfModel::set_betas(double beta1, double beta2) {
  if (!(beta1 >= 0) || !(beta2 > 0)) throw DomainError("need beta1 >= 0 and beta2 > 0");
  for (auto& v : log_beta1_->value.mutable_values()) v = static_cast<Real>(std::log(beta1));
  for (auto& v : log_beta2_->value.mutable_values()) v = static_cast<Real>(std::log(beta2));
}

double NlfModel::beta1(int condition) const { return std::exp(static_cast<double>(log_beta1_->value[condition])); }
double NlfModel::beta2(int condition) const { return std::exp(static_cast<double>(log_beta2_->value[condition])); }

// ---- Flow -------------------------------------------------------------------

NoiseFlowModel::NoiseFlowModel(NoiseModelSpec spec, ConditionSpace space, Rng& rng)
    : NoiseModel(std::move(spec), std::move(space)) {
  const auto names = spec_.layer_list();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string prefix = "flow/" + std::to_string(i) + "_" + names[i] + "/";
    if (names[i] == "sdt") {
      layers_.push_back(std::make_unique<SdtLayer>(params_, prefix, spec_.init_log_beta1, spec_.init_log_beta2));
    } else if (names[i] == "gain") {
      layers_.push_back(std::make_unique<GainLayer>(params_, prefix, space_));
    } else if (names[i] == "mix") {
      layers_.push_back(std::make_unique<Mix1x1Layer>(params_, prefix, spec_.channels));
    } else {
      layers_.push_back(std::make_unique<CouplingLayer>(params_, prefix, spec_.channels, spec_.hidden, rng));
    }
  }
}

Var NoiseFlowModel::nll(Tape& tape, const Var& noisy, const Var& clean, const Conditioning& cond) const {
  check_batch(noisy, clean, cond);
  const double dims = static_cast<double>(noisy.numel() / noisy.shape()[0]);
  const FlowContext ctx{clean, &cond};
  Var z = noisy - clean;
  Var logdet;
  for (const auto& layer : layers_) {
    auto step = layer->forward(tape, z, ctx);
    z = step.z;
    logdet = logdet.valid() ? logdet + step.logdet : step.logdet;
  }
  auto base = add_scalar(scale(sum_per_sample(square(z)), 0.5), dims * kHalfLog2Pi);
  return base - logdet;
}

Tensor NoiseFlowModel::sample(const Tensor& clean, const Conditioning& cond, Rng& rng) const {
  Tape tape(GradMode::kDisabled);
  auto clean_var = tape.constant(clean);
  const FlowContext ctx{clean_var, &cond};
  Var x = tape.constant(normal_like(clean.shape(), rng));
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) x = (*it)->inverse(tape, x, ctx);
  return (clean_var + x).value();
}

// ---- Factory ----------------------------------------------------------------

std::unique_ptr<NoiseModel> make_noise_model(const NoiseModelSpec& spec, const ConditionSpace& space, Rng& rng) {
  switch (spec.kind) {
    case NoiseModelKind::kAwgn:
      return std::make_unique<AwgnModel>(spec, space);
    case NoiseModelKind::kNlf:
      return std::make_unique<NlfModel>(spec, space);
    case NoiseModelKind::kFlow:
      return std::make_unique<NoiseFlowModel>(spec, space, rng);
  }
  throw ConfigError("unknown noise model kind");
}

std::unique_ptr<NoiseModel> load_noise_model(const Checkpoint& ckpt) {
  const auto text = ckpt.get_string(kArchKey);
  Rng rng(0);
  auto model = make_noise_model(NoiseModelSpec::parse(text), ConditionSpace::parse(text), rng);
  model->load(ckpt);
  return model;
}

double nll_per_dim(const NoiseModel& model, const Tensor& noisy, const Tensor& clean, const Conditioning& cond) {
  Tape tape(GradMode::kDisabled);
  auto total = sum(model.nll(tape, tape.constant(noisy), tape.constant(clean), cond));
  const double value = static_cast<double>(total.value().item()) / static_cast<double>(noisy.numel());
  if (!std::isfinite(value)) throw DomainError("non-finite density (singular noise model parameters?)");
  return value;
}

NOISYLAB_NAMESPACE_END
