// Numerical oracles for the noise models, run on the double-precision build:
// log-determinants against finite-difference Jacobians, density
// normalization by quadrature, model nesting and parameter gradients.

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "gradcheck.h"
#include "model_fixtures.h"
#include "noisylab/noise_model.h"
#include "noisylab/ops.h"

namespace noisylab {
namespace {

using testing::cond_for;
using testing::uniform_tensor;

Tensor forward_z(const FlowLayer& layer, const Tensor& x, const Tensor& clean, const Conditioning& cond) {
  Tape tape(GradMode::kDisabled);
  return layer.forward(tape, tape.constant(x), {tape.constant(clean), &cond}).z.value();
}

double reported_logdet(const FlowLayer& layer, const Tensor& x, const Tensor& clean, const Conditioning& cond) {
  Tape tape(GradMode::kDisabled);
  return static_cast<double>(layer.forward(tape, tape.constant(x), {tape.constant(clean), &cond}).logdet.value()[0]);
}

// log|det J| from a central-difference Jacobian.
double numeric_logdet(const FlowLayer& layer, const Tensor& x, const Tensor& clean, const Conditioning& cond) {
  const auto n = x.numel();
  Eigen::MatrixXd jac(n, n);
  const double h = 1e-6;
  for (std::int64_t j = 0; j < n; ++j) {
    Tensor up = x, down = x;
    up[j] += h;
    down[j] -= h;
    const Tensor zu = forward_z(layer, up, clean, cond);
    const Tensor zd = forward_z(layer, down, clean, cond);
    for (std::int64_t i = 0; i < n; ++i) jac(i, j) = (zu[i] - zd[i]) / (2 * h);
  }
  return std::log(std::abs(jac.determinant()));
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-3); }

NoiseModelSpec flow_spec(int channels, std::string layers) {
  NoiseModelSpec spec;
  spec.kind = NoiseModelKind::kFlow;
  spec.channels = channels;
  spec.layers = std::move(layers);
  return spec;
}

TEST(LogDet, EveryLayerMatchesNumericJacobian) {
  const auto space = ConditionSpace({"IP", "GP"}, {100, 800, 1600});
  Rng rng(21);
  struct Case {
    int channels;
    Shape shape;
    double tol;
  };
  // Channel counts keep every input at <= 16 elements.
  for (const auto& c : {Case{1, {1, 1, 2, 2}, 1e-6}, Case{2, {1, 2, 2, 2}, 1e-4}, Case{4, {1, 4, 2, 2}, 1e-4}}) {
    NoiseFlowModel model(flow_spec(c.channels, "sdt,mix,gain" + std::string(c.channels % 2 ? "" : ",coupling")),
                         space, rng);
    for (int trial = 0; trial < 10; ++trial) {
      testing::perturb_flow(model, rng);
      std::vector<SceneMeta> metas{{trial % 2 ? "IP" : "GP", trial % 3 ? 800u : 1600u, 0, Illumination::kNormal}};
      const auto cond = space.encode(metas);
      const auto clean = uniform_tensor(c.shape, rng, 0, 1);
      const auto x = uniform_tensor(c.shape, rng, -2, 2);
      for (const auto& layer : model.layers()) {
        const double tol = layer->kind() == "sdt" ? 1e-6 : c.tol;
        EXPECT_LT(rel(reported_logdet(*layer, x, clean, cond), numeric_logdet(*layer, x, clean, cond)), tol)
            << layer->kind() << " C=" << c.channels;
      }
    }
  }
}

TEST(LogDet, SdtCentralExample) {
  ParameterStore store;
  SdtLayer sdt(store, "", -3.0, -2.0);
  Rng rng(3);
  const auto clean = uniform_tensor({1, 1, 2, 2}, rng, 0, 1);
  const auto x = uniform_tensor({1, 1, 2, 2}, rng, -1, 1);
  EXPECT_LT(rel(reported_logdet(sdt, x, clean, {}), numeric_logdet(sdt, x, clean, {})), 1e-6);
}

// Quadrature of exp(-nll) over one pixel, [-10 sigma, 10 sigma].
double integrate_1px(const NoiseModel& model, double clean, double sigma, const Conditioning& cond) {
  const int n = 20001;
  const double lo = -10 * sigma, dx = 20 * sigma / (n - 1);
  Tensor noisy({n, 1, 1, 1}), clean_t({n, 1, 1, 1}, static_cast<Real>(clean));
  for (int i = 0; i < n; ++i) noisy[i] = static_cast<Real>(clean + lo + i * dx);
  std::vector<int> zero(n, 0);
  Conditioning batch{std::vector<int>(n, cond.camera[0]), std::vector<int>(n, cond.iso[0]),
                     std::vector<int>(n, cond.joint[0])};
  Tape tape(GradMode::kDisabled);
  const Tensor nll = model.nll(tape, tape.constant(noisy), tape.constant(clean_t), batch).value();
  double total = 0;
  for (int i = 0; i < n; ++i) total += (i == 0 || i == n - 1 ? 0.5 : 1.0) * std::exp(-double(nll[i]));
  return total * dx;
}

TEST(Normalization, SinglePixelDensitiesIntegrateToOne) {
  const auto space = testing::two_isos();
  const auto cond = cond_for(space, 1, 800);
  NoiseModelSpec spec;
  spec.channels = 1;

  spec.kind = NoiseModelKind::kAwgn;
  AwgnModel awgn(spec, space);
  awgn.set_sigma(0.03);
  EXPECT_NEAR(integrate_1px(awgn, 0.4, 0.03, cond), 1.0, 1e-3);

  spec.kind = NoiseModelKind::kNlf;
  NlfModel nlf(spec, space);
  nlf.set_betas(1e-2, 1e-4);
  EXPECT_NEAR(integrate_1px(nlf, 0.7, std::sqrt(0.7e-2 + 1e-4), cond), 1.0, 1e-3);

  Rng rng(4);
  NoiseFlowModel flow(flow_spec(1, "sdt,mix,gain"), space, rng);
  testing::perturb_flow(flow, rng);
  // Bound the flow's spread from its own layer scales.
  auto& sdt = dynamic_cast<SdtLayer&>(flow.layer(0));
  const auto* mix = dynamic_cast<Mix1x1Layer*>(&flow.layer(1));
  auto& gain = dynamic_cast<GainLayer&>(flow.layer(2));
  const double s =
      std::sqrt(std::exp(double(sdt.log_beta1().value[0])) * 0.5 + std::exp(double(sdt.log_beta2().value[0])));
  const double g = std::exp(double(gain.iso_gain().value[cond.iso[0]]) + double(gain.camera_gain().value[0]));
  const double sigma = s * g / std::abs(double(mix->matrix()[0]));
  EXPECT_NEAR(integrate_1px(flow, 0.5, sigma, cond), 1.0, 1e-3);
}

TEST(Normalization, TwoChannelFlowWithCoupling) {
  const auto space = testing::two_isos();
  Rng rng(9);
  NoiseFlowModel flow(flow_spec(2, "coupling,mix"), space, rng);
  testing::perturb_flow(flow, rng);
  const int n = 601;
  const double lo = -12, dx = 24.0 / (n - 1);
  Tensor noisy({n * n, 2, 1, 1}), clean({n * n, 2, 1, 1});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      noisy[2 * (i * n + j)] = lo + i * dx;
      noisy[2 * (i * n + j) + 1] = lo + j * dx;
    }
  }
  Tape tape(GradMode::kDisabled);
  const Tensor nll = flow.nll(tape, tape.constant(noisy), tape.constant(clean), cond_for(space, n * n)).value();
  double total = 0;
  for (std::int64_t k = 0; k < nll.numel(); ++k) total += std::exp(-double(nll[k]));
  EXPECT_NEAR(total * dx * dx, 1.0, 1e-3);
}

TEST(Nesting, NlfWithZeroBetaOneEqualsAwgn) {
  const auto space = testing::two_isos();
  NoiseModelSpec spec;
  spec.channels = 1;
  spec.kind = NoiseModelKind::kNlf;
  NlfModel nlf(spec, space);
  spec.kind = NoiseModelKind::kAwgn;
  AwgnModel awgn(spec, space);
  nlf.set_betas(0.0, 4e-4);
  awgn.set_sigma(0.02);
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto clean = uniform_tensor({3, 1, 8, 8}, rng, 0, 1);
    auto cond = cond_for(space, 3);
    auto noisy = awgn.sample(clean, cond, rng);
    EXPECT_NEAR(nll_per_dim(nlf, noisy, clean, cond), nll_per_dim(awgn, noisy, clean, cond), 1e-7);
  }
}

TEST(Nesting, SdtGainFlowEqualsNlf) {
  const auto space = testing::two_isos();
  Rng rng(2);
  NoiseFlowModel flow(flow_spec(1, "sdt,gain"), space, rng);
  NoiseModelSpec spec;
  spec.channels = 1;
  spec.kind = NoiseModelKind::kNlf;
  NlfModel nlf(spec, space);
  for (int trial = 0; trial < 20; ++trial) {
    const double b1 = std::exp(rng.uniform(-6, -2)), b2 = std::exp(rng.uniform(-10, -6));
    nlf.set_betas(b1, b2);
    auto& sdt = dynamic_cast<SdtLayer&>(flow.layer(0));
    sdt.log_beta1().value[0] = std::log(b1);
    sdt.log_beta2().value[0] = std::log(b2);
    auto clean = uniform_tensor({2, 1, 8, 8}, rng, 0, 1);
    auto cond = cond_for(space, 2);
    auto noisy = nlf.sample(clean, cond, rng);
    EXPECT_NEAR(nll_per_dim(flow, noisy, clean, cond), nll_per_dim(nlf, noisy, clean, cond), 1e-6);
  }
}

TEST(ParameterGradients, EveryModelClass) {
  const auto space = ConditionSpace({"IP", "GP"}, {100, 800});
  Rng rng(12);
  std::vector<SceneMeta> metas{{"IP", 100, 0, Illumination::kNormal}, {"GP", 800, 1, Illumination::kNormal}};
  const auto cond = space.encode(metas);
  auto clean = uniform_tensor({2, 2, 4, 4}, rng, 0.05, 0.95);
  auto noisy = uniform_tensor({2, 2, 4, 4}, rng, -0.2, 0.2);
  for (std::int64_t i = 0; i < noisy.numel(); ++i) noisy[i] += clean[i];

  std::vector<std::unique_ptr<NoiseModel>> models;
  NoiseModelSpec spec;
  spec.channels = 2;
  spec.kind = NoiseModelKind::kAwgn;
  models.push_back(make_noise_model(spec, space, rng));
  spec.kind = NoiseModelKind::kNlf;
  spec.per_condition = true;
  models.push_back(make_noise_model(spec, space, rng));
  spec = flow_spec(2, "default");
  spec.hidden = 4;
  auto flow = std::make_unique<NoiseFlowModel>(spec, space, rng);
  testing::perturb_flow(*flow, rng);
  models.push_back(std::move(flow));

  for (auto& model : models) {
    auto loss = [&](Tape& tape) {
      return sum(model->nll(tape, tape.constant(noisy), tape.constant(clean), cond));
    };
    auto result = testing::param_grad_check(loss, model->params().all());
    EXPECT_LT(result.worst_rel_err, 1e-3) << model->descriptor();
    EXPECT_GT(result.checked, 0u);
  }
}

}  // namespace
}  // namespace noisylab
