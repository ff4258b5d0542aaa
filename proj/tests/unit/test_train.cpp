#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "noisylab/checkpoint.h"
#include "noisylab/errors.h"
#include "noisylab/ops.h"
#include "noisylab/train.h"
#include "train_fixtures.h"

namespace noisylab {
namespace {

using testing::small_denoiser;
using testing::small_model;
using testing::small_synthetic;

const double kHalfLog2Pi = 0.5 * std::log(2 * std::numbers::pi);

TEST(Schedule, StepValues) {
  EXPECT_DOUBLE_EQ(lr_schedule(Schedule::kSupervised, 0), 1e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(Schedule::kSupervised, 29), 1e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(Schedule::kSupervised, 30), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(Schedule::kSupervised, 45), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(Schedule::kSupervised, 60), 5e-5);
  for (int e : {0, 7, 500, 1999}) EXPECT_DOUBLE_EQ(lr_schedule(Schedule::kJoint, e), 1e-4);
  EXPECT_THROW(parse_schedule("cosine"), ConfigError);
  EXPECT_THROW(lr_schedule(Schedule::kJoint, -1), DomainError);
}

TEST(Modes, ParseAndProperties) {
  EXPECT_EQ(parse_loss_mode("supervised-nf"), LossMode::kSupervisedNf);
  EXPECT_THROW(parse_loss_mode("noisier2noise"), ConfigError);
  EXPECT_TRUE(needs_clean(LossMode::kSupervised));
  EXPECT_FALSE(needs_clean(LossMode::kCross));
  EXPECT_FALSE(trains_noise_model(LossMode::kN2n));
  EXPECT_FALSE(trains_denoiser(LossMode::kSupervisedNf));
}

TEST(N2n, IdentityDenoiser) {
  auto d = small_denoiser();
  testing::zero_weights(*d);
  Rng rng(1);
  Tensor a({2, 1, 4, 4}), b({2, 1, 4, 4});
  for (auto& v : a.mutable_values()) v = static_cast<Real>(rng.uniform());
  for (auto& v : b.mutable_values()) v = static_cast<Real>(rng.uniform());
  Tape tape(GradMode::kDisabled);
  auto terms = loss_n2n(tape, *d, tape.constant(a), tape.constant(b)).value();
  for (int n = 0; n < 2; ++n) {
    double expected = 0;
    for (int i = 0; i < 16; ++i) expected += 2 * std::pow(double(a[n * 16 + i]) - b[n * 16 + i], 2);
    EXPECT_NEAR(terms[n], expected, 1e-5);
  }
  auto same = loss_n2n(tape, *d, tape.constant(a), tape.constant(a)).value();
  EXPECT_EQ(same[0], 0.0f);
}

TEST(N2n, OnePixelHandOracle) {
  // Zero weights and a final bias of 0.25: D(x) = x - 0.25.
  auto d = small_denoiser();
  testing::zero_weights(*d);
  d->params().get("conv8/bias").value[0] = 0.25f;
  Tensor a({1, 1, 1, 1}, 0.7f), b({1, 1, 1, 1}, 0.4f);
  Tape tape(GradMode::kDisabled);
  const double v = loss_n2n(tape, *d, tape.constant(a), tape.constant(b)).value()[0];
  // (0.7 - 0.25 - 0.4)^2 + (0.4 - 0.25 - 0.7)^2
  EXPECT_NEAR(v, 0.05 * 0.05 + 0.55 * 0.55, 1e-6);
}

TEST(NmCross, UnitGaussianAtMode) {
  const auto space = ConditionSpace({"SYN"}, {800});
  auto model = small_model(NoiseModelKind::kAwgn, space);
  dynamic_cast<AwgnModel&>(*model).set_sigma(1.0);
  auto d = small_denoiser();
  testing::zero_weights(*d);
  Tensor a({1, 1, 4, 4}, 0.3f);
  std::vector<SceneMeta> metas{{"SYN", 800, 0, Illumination::kNormal}};
  const auto cond = space.encode(metas);
  Tape tape(GradMode::kDisabled);
  auto v = loss_nm_cross(tape, *model, *d, tape.constant(a), tape.constant(a), cond).value()[0];
  EXPECT_NEAR(v, 2 * 16 * kHalfLog2Pi, 1e-4);
}

TEST(NmSelf, CollapseChannelClosedForm) {
  const auto space = ConditionSpace({"SYN"}, {800});
  auto model = small_model(NoiseModelKind::kAwgn, space);
  auto d = small_denoiser();
  testing::zero_weights(*d);
  Rng rng(2);
  Tensor a({1, 1, 4, 4}), b({1, 1, 4, 4});
  for (auto& v : a.mutable_values()) v = static_cast<Real>(rng.uniform());
  for (auto& v : b.mutable_values()) v = static_cast<Real>(rng.uniform());
  std::vector<SceneMeta> metas{{"SYN", 800, 0, Illumination::kNormal}};
  const auto cond = space.encode(metas);
  double prev = INFINITY;
  for (double sigma : {1.0, 1e-1, 1e-3, 1e-6}) {
    dynamic_cast<AwgnModel&>(*model).set_sigma(sigma);
    Tape tape(GradMode::kDisabled);
    const double v = loss_nm_self(tape, *model, *d, tape.constant(a), tape.constant(b), cond).value()[0];
    EXPECT_NEAR(v, 2 * 16 * 0.5 * std::log(2 * std::numbers::pi * sigma * sigma), 1e-3);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

PairBatch batch_of(const Dataset& data, const ConditionSpace& space, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return make_batch(data, idx, space);
}

PairBatch swapped(PairBatch batch) {
  std::swap(batch.a, batch.b);
  return batch;
}

TEST(JointLoss, AssemblyMatchesIndependentParts) {
  auto data = small_synthetic(6);
  const auto space = ConditionSpace::from_dataset(data);
  auto model = small_model(NoiseModelKind::kNlf, space);
  auto d = small_denoiser();
  const auto batch = batch_of(data, space, 6);
  for (double lambda : {0.0, 1.0, 1024.0, 262144.0}) {
    Rng rng(1);
    Tape tape(GradMode::kDisabled);
    auto terms = batch_loss(tape, model.get(), d.get(), batch, LossMode::kCross, lambda, 0.5, rng);
    auto a = tape.constant(batch.a), b = tape.constant(batch.b);
    double nm = 0, dn = 0;
    const auto nm_terms = loss_nm_cross(tape, *model, *d, a, b, batch.cond).value();
    const auto dn_terms = loss_n2n(tape, *d, a, b).value();
    for (int i = 0; i < 6; ++i) nm += nm_terms[i] / 6.0, dn += dn_terms[i] / 6.0;
    EXPECT_NEAR(terms.nm.value().item(), nm, 1e-5 * std::abs(nm));
    EXPECT_NEAR(terms.dn.value().item(), dn, 1e-5 * dn);
    const double total = terms.nm.value().item() + lambda * terms.dn.value().item();
    EXPECT_NEAR(terms.total.value().item(), total, 1e-6 * std::max(1.0, std::abs(total)));
  }
}

TEST(JointLoss, SymmetricUnderSwap) {
  auto data = small_synthetic(4);
  const auto space = ConditionSpace::from_dataset(data);
  auto model = small_model(NoiseModelKind::kNlf, space);
  auto d = small_denoiser();
  const auto batch = batch_of(data, space, 4);
  for (auto mode : {LossMode::kCross, LossMode::kSelf, LossMode::kN2n, LossMode::kSupervised,
                    LossMode::kSupervisedNf}) {
    Rng r1(1), r2(1);
    Tape t1(GradMode::kDisabled), t2(GradMode::kDisabled);
    const double x = batch_loss(t1, model.get(), d.get(), batch, mode, 8.0, 0.5, r1).total.value().item();
    const double y = batch_loss(t2, model.get(), d.get(), swapped(batch), mode, 8.0, 0.5, r2).total.value().item();
    EXPECT_NEAR(x, y, 1e-6 * std::max(1.0, std::abs(x))) << to_string(mode);
  }
}

TEST(JointLoss, GradientsReachBothModels) {
  auto data = small_synthetic(4);
  const auto space = ConditionSpace::from_dataset(data);
  auto model = small_model(NoiseModelKind::kNlf, space);
  auto d = small_denoiser();
  Rng rng(1);
  Tape tape;
  auto terms = batch_loss(tape, model.get(), d.get(), batch_of(data, space, 4), LossMode::kCross, 0.0, 0.5, rng);
  auto grads = tape.backward(terms.total);
  for (auto* p : model->params().trainable()) EXPECT_NE(grads.find(*p), nullptr) << p->name;
  // With lambda = 0 the denoiser still learns through the conditioning path.
  EXPECT_NE(grads.find(d->params().get("conv0/weight")), nullptr);
}

TEST(JointLoss, SupervisedNeedsClean) {
  auto data = small_synthetic(2);
  for (auto& p : data.pairs) p.clean.reset();
  const auto space = ConditionSpace::from_dataset(data);
  auto d = small_denoiser();
  Rng rng(1);
  Tape tape;
  EXPECT_THROW(batch_loss(tape, nullptr, d.get(), batch_of(data, space, 2), LossMode::kSupervised, 1, 0.5, rng),
               DataError);
  EXPECT_THROW(Trainer({.mode = LossMode::kSupervised}, nullptr, d.get(), data, data, space), DataError);
  EXPECT_THROW(Trainer({.mode = LossMode::kCross}, nullptr, d.get(), data, data, space), ConfigError);
}

TEST(R2r, CorruptionStatistics) {
  Rng rng(3);
  Tensor y({100000}, 0.4f);
  for (double alpha : {0.5, 1.0, 2.0}) {
    auto r = r2r_corrupt(y, alpha, rng);
    double mi = 0, mt = 0, vi = 0, vt = 0, cov = 0, vd = 0;
    const double n = double(y.numel());
    for (std::int64_t i = 0; i < y.numel(); ++i) mi += r.input[i], mt += r.target[i];
    mi /= n;
    mt /= n;
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      const double pi = r.input[i] - 0.4, pt = r.target[i] - 0.4;
      vi += pi * pi;
      vt += pt * pt;
      cov += pi * pt;
      vd += std::pow(double(r.input[i]) - r.target[i], 2);
    }
    EXPECT_NEAR(mi, 0.4, 5 * alpha / std::sqrt(n));
    EXPECT_NEAR(mt, 0.4, 5 / alpha / std::sqrt(n));
    EXPECT_NEAR(cov / std::sqrt(vi * vt), -1.0, 0.01);
    // cov(alpha z, -z / alpha) = -1 per dimension.
    EXPECT_NEAR(cov / n, -1.0, 0.02);
    if (alpha == 1.0) {
      EXPECT_NEAR(vd / n, 4.0, 0.08);
    }
  }
  EXPECT_THROW(r2r_corrupt(y, 0.0, rng), ConfigError);
}

TEST(R2r, GivenPerturbation) {
  const Tensor y({3}, {0.1f, 0.5f, 0.9f});
  const Tensor z({3}, {0.02f, -0.04f, 0.0f});
  const auto r = r2r_corrupt(y, z, 0.5);
  EXPECT_FLOAT_EQ(r.input[0], 0.11f);
  EXPECT_FLOAT_EQ(r.target[1], 0.58f);
  EXPECT_FLOAT_EQ(r.target[2], 0.9f);
  EXPECT_THROW(r2r_corrupt(y, Tensor({2}), 0.5), ShapeError);
}

TEST(R2r, NoiseLevelEstimateOnFlatPatches) {
  SmoothCleanSource source(1, 16, 16, 0.0);
  SynthOptions options;
  options.n_pairs = 200;
  Dataset data = synth_hgn_dataset(source, {0.0, 4e-4}, options);
  EXPECT_NEAR(estimate_noise_sigma(data), 0.02, 0.02 * 0.03);
}

TEST(R2r, TrainingImprovesOnSingleNoisyData) {
  auto data = small_synthetic(120, 8, 2, 10);
  for (auto& p : data.pairs) p.b = p.a;
  const auto space = ConditionSpace::from_dataset(data);
  auto model = small_model(NoiseModelKind::kNlf, space);
  auto den = small_denoiser(1, 8);
  TrainConfig config;
  config.mode = LossMode::kR2r;
  config.epochs = 6;
  config.batch_size = 8;
  config.lr_multiplier = 10;
  Trainer trainer(config, model.get(), den.get(), data, data, space);
  trainer.run();
  EXPECT_GT(trainer.config().r2r_sigma, 0.0);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto m = evaluate(model.get(), den.get(), data, idx, space, {});
  EXPECT_GT(m.psnr, m.noisy_psnr);
}

TEST(Evaluate, IdentityDenoiserReproducesNoisyPsnr) {
  auto data = small_synthetic(10);
  const auto space = ConditionSpace::from_dataset(data);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto m = evaluate(nullptr, nullptr, data, idx, space, {});
  EXPECT_EQ(m.psnr, m.noisy_psnr);
  EXPECT_TRUE(std::isnan(m.nll_per_dim));
  EXPECT_EQ(m.patches, 10);
}

TEST(Evaluate, GeneratorNllAndStrata) {
  auto data = small_synthetic(20);
  const auto space = ConditionSpace::from_dataset(data);
  auto model = small_model(NoiseModelKind::kNlf, space);
  dynamic_cast<NlfModel&>(*model).set_betas(1e-2, 1e-4);
  const auto rows = evaluate_strata(model.get(), nullptr, data, space, {});
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows.back().camera, "ALL");
  EXPECT_EQ(rows.back().metrics.patches, 20);
  for (const auto& r : rows) {
    EXPECT_TRUE(std::isfinite(r.metrics.nll_per_dim));
    EXPECT_GE(r.metrics.kl, 0.0);
  }
  const auto path = (std::filesystem::temp_directory_path() / "noisylab_metrics.csv").string();
  write_metrics_csv(path, rows, {});
  std::ifstream in(path);
  std::string first, header;
  std::getline(in, first);
  std::getline(in, header);
  EXPECT_EQ(first.rfind("# histogram bins=256", 0), 0u);
  EXPECT_EQ(header, "camera,iso,scene,patches,nll_per_dim,kl,psnr,ssim,noisy_psnr");
  std::filesystem::remove(path);
}

TrainConfig quick_config(LossMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.epochs = 3;
  c.batch_size = 4;
  c.lr_multiplier = 10;
  c.eval_cap = 4;
  c.seed = 9;
  return c;
}

TEST(Trainer, DeterministicTrajectory) {
  auto data = small_synthetic(12);
  const auto space = ConditionSpace::from_dataset(data);
  std::vector<std::vector<double>> runs;
  for (int r = 0; r < 2; ++r) {
    auto model = small_model(NoiseModelKind::kFlow, space);
    auto d = small_denoiser();
    Trainer trainer(quick_config(LossMode::kCross), model.get(), d.get(), data, data, space);
    trainer.run();
    std::vector<double> losses;
    for (const auto& rec : trainer.history()) losses.push_back(rec.train_loss);
    runs.push_back(losses);
  }
  ASSERT_EQ(runs[0].size(), 3u);
  EXPECT_EQ(runs[0], runs[1]);
}

TEST(Trainer, ResumeMatchesUninterrupted) {
  auto data = small_synthetic(12);
  const auto space = ConditionSpace::from_dataset(data);
  for (auto mode : {LossMode::kCross, LossMode::kR2r}) {
    auto model_a = small_model(NoiseModelKind::kNlf, space);
    auto den_a = small_denoiser();
    Trainer full(quick_config(mode), model_a.get(), den_a.get(), data, data, space);
    full.run();

    auto model_b = small_model(NoiseModelKind::kNlf, space);
    auto den_b = small_denoiser();
    auto config = quick_config(mode);
    config.epochs = 2;
    Trainer first(config, model_b.get(), den_b.get(), data, data, space);
    first.run();
    Checkpoint ckpt;
    first.save(ckpt);

    auto model_c = small_model(NoiseModelKind::kNlf, space, 1, 77);
    auto den_c = small_denoiser(1, 4, 78);
    Trainer resumed(quick_config(mode), model_c.get(), den_c.get(), data, data, space);
    resumed.load(Checkpoint::deserialize(ckpt.serialize()));
    EXPECT_EQ(resumed.epoch(), 2);
    resumed.run();
    ASSERT_EQ(resumed.history().size(), 3u);
    EXPECT_NEAR(resumed.history()[1].train_loss, full.history()[1].train_loss,
                1e-12 * std::abs(full.history()[1].train_loss));
    EXPECT_NEAR(resumed.history()[2].train_loss, full.history()[2].train_loss,
                1e-6 * std::abs(full.history()[2].train_loss));
    auto pa = den_a->params().all(), pc = den_c->params().all();
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_LT(max_abs_diff(pa[i]->value, pc[i]->value), 1e-6);
  }
}

TEST(Trainer, ZeroEpochsLeavesModelsUnchanged) {
  auto data = small_synthetic(4);
  const auto space = ConditionSpace::from_dataset(data);
  auto d = small_denoiser();
  auto before = d->params().get("conv3/weight").value;
  auto config = quick_config(LossMode::kSupervised);
  config.epochs = 0;
  Trainer trainer(config, nullptr, d.get(), data, data, space);
  trainer.run();
  EXPECT_TRUE(trainer.history().empty());
  EXPECT_EQ(d->params().get("conv3/weight").value.vec(), before.vec());
}

TEST(Trainer, DivergenceGuardReportsEpochAndMode) {
  auto data = small_synthetic(4);
  const auto space = ConditionSpace::from_dataset(data);
  auto model = small_model(NoiseModelKind::kNlf, space);
  auto d = small_denoiser();
  auto config = quick_config(LossMode::kSelf);
  config.divergence_floor = 100.0;
  Trainer trainer(config, model.get(), d.get(), data, data, space);
  try {
    trainer.run();
    FAIL() << "guard did not fire";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.epoch(), 0);
    EXPECT_EQ(e.mode(), "self");
  }
  EXPECT_EQ(trainer.history().size(), 1u);
}

TEST(Trainer, NonFiniteParametersAbort) {
  auto data = small_synthetic(4);
  const auto space = ConditionSpace::from_dataset(data);
  auto model = small_model(NoiseModelKind::kNlf, space);
  auto d = small_denoiser();
  d->params().get("conv2/bias").value[0] = NAN;
  Trainer trainer(quick_config(LossMode::kCross), model.get(), d.get(), data, data, space);
  EXPECT_THROW(trainer.run_epoch(), DivergenceError);
}

TEST(Trainer, SupervisedImprovesOverNoisy) {
  auto data = small_synthetic(60, 8, 2);
  const auto space = ConditionSpace::from_dataset(data);
  auto d = small_denoiser(1, 8);
  auto config = quick_config(LossMode::kSupervised);
  config.epochs = 8;
  config.lr_multiplier = 1;
  config.eval_cap = 60;
  Trainer trainer(config, nullptr, d.get(), data, data, space);
  trainer.run();
  std::vector<std::size_t> idx(60);
  for (std::size_t i = 0; i < 60; ++i) idx[i] = i;
  const auto m = evaluate(nullptr, d.get(), data, idx, space, {});
  EXPECT_GT(m.psnr, m.noisy_psnr + 3.0);
}

TEST(HistoryCsv, HeaderAndRows) {
  std::vector<EpochRecord> h(2);
  h[1].epoch = 1;
  h[1].eval_kl = NAN;
  const auto path = (std::filesystem::temp_directory_path() / "noisylab_hist.csv").string();
  write_history_csv(path, h);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,lr,train_loss,eval_nll_per_dim,eval_kl,eval_psnr,eval_ssim,wallclock_s");
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line.rfind("1,", 0), 0u);
  EXPECT_NE(line.find("nan"), std::string::npos);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace noisylab
