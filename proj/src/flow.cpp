#include "noisylab/flow.h"

#include <Eigen/Dense>
#include <cmath>

#include "noisylab/errors.h"
#include "noisylab/init.h"
#include "noisylab/ops.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

using MatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::int64_t dims_per_sample(const Var& x) { return x.numel() / x.shape()[0]; }

void check_input(const Var& x, const char* layer) {
  if (x.shape().size() != 4) {
    throw ShapeError(std::string(layer) + " layer expects [N, C, H, W], got " + shape_str(x.shape()));
  }
}

MatrixXd to_matrix(const Tensor& t) {
  const auto rows = t.dim(0);
  const auto cols = t.dim(1);
  MatrixXd m(rows, cols);
  for (std::int64_t i = 0; i < rows * cols; ++i) m.data()[i] = static_cast<double>(t[i]);
  return m;
}

Tensor from_matrix(const MatrixXd& m) {
  Tensor t({m.rows(), m.cols()});
  for (std::int64_t i = 0; i < m.size(); ++i) t[i] = static_cast<Real>(m.data()[i]);
  return t;
}

const Conditioning& require_cond(const FlowContext& ctx, const Var& x) {
  if (!ctx.cond || ctx.cond->size() != static_cast<std::size_t>(x.shape()[0])) {
    throw ConditionError("conditioning does not match the batch size");
  }
  return *ctx.cond;
}

}  // namespace

// ---- SDT --------------------------------------------------------------------

SdtLayer::SdtLayer(ParameterStore& store, const std::string& prefix, double log_beta1, double log_beta2)
    : log_beta1_(&store.add(prefix + "log_beta1", Tensor::scalar(static_cast<Real>(log_beta1)))),
      log_beta2_(&store.add(prefix + "log_beta2", Tensor::scalar(static_cast<Real>(log_beta2)))) {}

Var SdtLayer::scale_of(Tape& tape, const FlowContext& ctx) const {
  if (!ctx.clean.valid()) throw ConditionError("signal-dependent layer needs a clean estimate");
  auto clean = clamp(ctx.clean, 0.0, 1.0);
  auto variance = exp(tape.param(*log_beta1_)) * clean + exp(tape.param(*log_beta2_));
  return variance;
}

FlowStep SdtLayer::forward(Tape& tape, const Var& x, const FlowContext& ctx) const {
  check_input(x, "sdt");
  auto variance = scale_of(tape, ctx);
  if (variance.shape() != x.shape()) throw ShapeError("clean estimate shape differs from the noise shape");
  return {x / sqrt(variance), scale(sum_per_sample(log(variance)), -0.5)};
}

Var SdtLayer::inverse(Tape& tape, const Var& z, const FlowContext& ctx) const {
  return z * sqrt(scale_of(tape, ctx));
}

// ---- Gain -------------------------------------------------------------------

GainLayer::GainLayer(ParameterStore& store, const std::string& prefix, const ConditionSpace& space)
    : iso_(&store.add(prefix + "log_gain_iso", Tensor({space.iso_count()}))),
      camera_(&store.add(prefix + "log_gain_camera", Tensor({space.camera_count()}))) {}

Var GainLayer::log_gain(Tape& tape, const Var& x, const FlowContext& ctx) const {
  const auto& cond = require_cond(ctx, x);
  return gather(tape.param(*iso_), cond.iso) + gather(tape.param(*camera_), cond.camera);
}

FlowStep GainLayer::forward(Tape& tape, const Var& x, const FlowContext& ctx) const {
  check_input(x, "gain");
  auto g = log_gain(tape, x, ctx);
  auto inv_gain = exp(neg(reshape(g, {x.shape()[0], 1, 1, 1})));
  return {x * inv_gain, scale(g, -static_cast<double>(dims_per_sample(x)))};
}

Var GainLayer::inverse(Tape& tape, const Var& z, const FlowContext& ctx) const {
  auto g = log_gain(tape, z, ctx);
  return z * exp(reshape(g, {z.shape()[0], 1, 1, 1}));
}

// ---- 1x1 mixing ---------------------------------------------------------------

Mix1x1Layer::Mix1x1Layer(ParameterStore& store, const std::string& prefix, int channels) : channels_(channels) {
  if (channels < 1) throw ShapeError("mix layer needs at least one channel");
  const std::int64_t c = channels;
  eye_ = Tensor({c, c});
  lower_mask_ = Tensor({c, c});
  upper_mask_ = Tensor({c, c});
  for (std::int64_t i = 0; i < c; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      eye_[i * c + j] = i == j ? 1 : 0;
      lower_mask_[i * c + j] = j < i ? 1 : 0;
      upper_mask_[i * c + j] = j > i ? 1 : 0;
    }
  }
  perm_ = &store.add(prefix + "perm", eye_, false);
  sign_ = &store.add(prefix + "sign", Tensor({c}, Real(1)), false);
  lower_ = &store.add(prefix + "lower", Tensor({c, c}));
  upper_ = &store.add(prefix + "upper", Tensor({c, c}));
  log_scale_ = &store.add(prefix + "log_scale", Tensor({c}));
}

Var Mix1x1Layer::weight(Tape& tape) const {
  const std::int64_t c = channels_;
  auto lower = tape.param(*lower_) * tape.constant(lower_mask_) + tape.constant(eye_);
  auto diag = reshape(tape.param(*sign_) * exp(tape.param(*log_scale_)), {1, c}) * tape.constant(eye_);
  auto upper = tape.param(*upper_) * tape.constant(upper_mask_) + diag;
  return matmul(tape.param(*perm_), matmul(lower, upper));
}

FlowStep Mix1x1Layer::forward(Tape& tape, const Var& x, const FlowContext&) const {
  check_input(x, "mix");
  if (x.shape()[1] != channels_) {
    throw ShapeError("mix layer built for " + std::to_string(channels_) + " channels, got " + shape_str(x.shape()));
  }
  const std::int64_t c = channels_;
  auto w = reshape(weight(tape), {c, c, 1, 1});
  const double pixels = static_cast<double>(x.shape()[2] * x.shape()[3]);
  return {conv2d(x, w, Var{}, {1, 0}), scale(sum(tape.param(*log_scale_)), pixels)};
}

Var Mix1x1Layer::inverse(Tape& tape, const Var& z, const FlowContext&) const {
  check_input(z, "mix");
  const std::int64_t c = channels_;
  Tensor inv = from_matrix(to_matrix(matrix()).inverse()).reshaped({c, c, 1, 1});
  return conv2d(z, tape.constant(std::move(inv)), Var{}, {1, 0});
}

Tensor Mix1x1Layer::matrix() const {
  const auto c = channels_;
  MatrixXd lower = MatrixXd::Identity(c, c);
  MatrixXd upper = MatrixXd::Zero(c, c);
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      if (j < i) lower(i, j) = lower_->value[i * c + j];
      if (j > i) upper(i, j) = upper_->value[i * c + j];
    }
    upper(i, i) = static_cast<double>(sign_->value[i]) * std::exp(static_cast<double>(log_scale_->value[i]));
  }
  return from_matrix(to_matrix(perm_->value) * lower * upper);
}

void Mix1x1Layer::set_matrix(const Tensor& w) {
  const std::int64_t c = channels_;
  if (w.shape() != Shape{c, c}) throw ShapeError("mix matrix must be [C, C], got " + shape_str(w.shape()));
  const MatrixXd a = to_matrix(w);
  Eigen::PartialPivLU<MatrixXd> lu(a);
  const MatrixXd packed = lu.matrixLU();
  for (std::int64_t i = 0; i < c; ++i) {
    if (packed(i, i) == 0.0) throw DomainError("mix matrix is singular");
  }
  // P a = L U, so a = P^T L U.
  const MatrixXd p = lu.permutationP().transpose() * MatrixXd::Identity(c, c);
  perm_->value = from_matrix(p);
  for (std::int64_t i = 0; i < c; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      lower_->value[i * c + j] = j < i ? static_cast<Real>(packed(i, j)) : Real(0);
      upper_->value[i * c + j] = j > i ? static_cast<Real>(packed(i, j)) : Real(0);
    }
    sign_->value[i] = packed(i, i) > 0 ? Real(1) : Real(-1);
    log_scale_->value[i] = static_cast<Real>(std::log(std::abs(packed(i, i))));
  }
}

// ---- Affine coupling --------------------------------------------------------

CouplingLayer::CouplingLayer(ParameterStore& store, const std::string& prefix, int channels, int hidden, Rng& rng)
    : channels_(channels) {
  if (channels < 2 || channels % 2 != 0) {
    throw ShapeError("coupling layer needs an even channel count >= 2, got " + std::to_string(channels));
  }
  if (hidden < 1) throw ConfigError("coupling width must be positive");
  const std::int64_t half = channels / 2;
  w0_ = &store.add(prefix + "conv0/weight", orthogonal_init({hidden, half, 3, 3}, rng));
  b0_ = &store.add(prefix + "conv0/bias", Tensor({hidden}));
  w1_ = &store.add(prefix + "conv1/weight", orthogonal_init({hidden, hidden, 1, 1}, rng));
  b1_ = &store.add(prefix + "conv1/bias", Tensor({hidden}));
  w2_ = &store.add(prefix + "conv2/weight", Tensor({channels, hidden, 3, 3}));
  b2_ = &store.add(prefix + "conv2/bias", Tensor({channels}));
}

std::pair<Var, Var> CouplingLayer::log_scale_and_shift(Tape& tape, const Var& x1) const {
  auto h = relu(conv2d(x1, tape.param(*w0_), tape.param(*b0_)));
  h = relu(conv2d(h, tape.param(*w1_), tape.param(*b1_)));
  auto out = conv2d(h, tape.param(*w2_), tape.param(*b2_));
  const std::int64_t half = channels_ / 2;
  return {tanh(slice_channels(out, 0, half)), slice_channels(out, half, channels_)};
}

FlowStep CouplingLayer::forward(Tape& tape, const Var& x, const FlowContext&) const {
  check_input(x, "coupling");
  if (x.shape()[1] != channels_) {
    throw ShapeError("coupling layer built for " + std::to_string(channels_) + " channels, got " +
                     shape_str(x.shape()));
  }
  const std::int64_t half = channels_ / 2;
  auto x1 = slice_channels(x, 0, half);
  auto x2 = slice_channels(x, half, channels_);
  auto [s, t] = log_scale_and_shift(tape, x1);
  const Var parts[] = {x1, x2 * exp(s) + t};
  return {concat_channels(parts), sum_per_sample(s)};
}

Var CouplingLayer::inverse(Tape& tape, const Var& z, const FlowContext&) const {
  check_input(z, "coupling");
  const std::int64_t half = channels_ / 2;
  auto z1 = slice_channels(z, 0, half);
  auto z2 = slice_channels(z, half, channels_);
  auto [s, t] = log_scale_and_shift(tape, z1);
  const Var parts[] = {z1, (z2 - t) * exp(neg(s))};
  return concat_channels(parts);
}

NOISYLAB_NAMESPACE_END
