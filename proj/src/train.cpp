#include "noisylab/train.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "noisylab/checkpoint.h"
#include "noisylab/errors.h"
#include "noisylab/ops.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double value_of(const Var& v) { return static_cast<double>(v.value().item()); }

Var n2n_terms(const Var& da, const Var& db, const Var& a, const Var& b) {
  return sum_per_sample(square(da - b)) + sum_per_sample(square(db - a));
}

const Denoiser& require_denoiser(const Denoiser* d, LossMode mode) {
  if (!d) throw ConfigError("mode '" + to_string(mode) + "' needs a denoiser");
  return *d;
}

const NoiseModel& require_model(const NoiseModel* m, LossMode mode) {
  if (!m) throw ConfigError("mode '" + to_string(mode) + "' needs a noise model");
  return *m;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Doubles survive the f32 checkpoint payload as a (hi, lo) float pair.
void put_doubles(Checkpoint& ckpt, const std::string& name, const std::vector<double>& values, std::int64_t cols) {
  if (values.empty()) return;
  std::vector<Real> packed;
  for (double v : values) {
    const float hi = static_cast<float>(v);
    const float lo = std::isfinite(v) ? static_cast<float>(v - static_cast<double>(hi)) : 0.0f;
    packed.push_back(static_cast<Real>(hi));
    packed.push_back(static_cast<Real>(lo));
  }
  const auto rows = static_cast<std::int64_t>(values.size()) / cols;
  ckpt.put(name, Tensor({rows, cols, 2}, std::move(packed)));
}

std::vector<double> get_doubles(const Checkpoint& ckpt, const std::string& name) {
  const Tensor& t = ckpt.get(name);
  std::vector<double> out;
  for (std::int64_t i = 0; i + 1 < t.numel(); i += 2) {
    out.push_back(static_cast<double>(static_cast<float>(t[i])) + static_cast<double>(static_cast<float>(t[i + 1])));
  }
  return out;
}

}  // namespace

// ---- Modes and schedules --------------------------------------------------------

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kCross:
      return "cross";
    case LossMode::kSelf:
      return "self";
    case LossMode::kR2r:
      return "r2r";
    case LossMode::kN2n:
      return "n2n";
    case LossMode::kSupervised:
      return "supervised";
    case LossMode::kSupervisedNf:
      return "supervised-nf";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& text) {
  for (auto mode : {LossMode::kCross, LossMode::kSelf, LossMode::kR2r, LossMode::kN2n, LossMode::kSupervised,
                    LossMode::kSupervisedNf}) {
    if (to_string(mode) == text) return mode;
  }
  throw ConfigError("unknown mode '" + text + "' (expected cross, self, r2r, n2n, supervised or supervised-nf)");
}

bool needs_clean(LossMode mode) { return mode == LossMode::kSupervised || mode == LossMode::kSupervisedNf; }

bool trains_noise_model(LossMode mode) {
  return mode == LossMode::kCross || mode == LossMode::kSelf || mode == LossMode::kR2r ||
         mode == LossMode::kSupervisedNf;
}

bool trains_denoiser(LossMode mode) { return mode != LossMode::kSupervisedNf; }

std::string to_string(Schedule schedule) { return schedule == Schedule::kJoint ? "joint" : "supervised"; }

Schedule parse_schedule(const std::string& text) {
  if (text == "joint") return Schedule::kJoint;
  if (text == "supervised") return Schedule::kSupervised;
  throw ConfigError("unknown learning-rate schedule '" + text + "' (expected joint or supervised)");
}

Schedule default_schedule(LossMode mode) {
  return mode == LossMode::kN2n || mode == LossMode::kSupervised ? Schedule::kSupervised : Schedule::kJoint;
}

double lr_schedule(Schedule schedule, int epoch) {
  if (epoch < 0) throw DomainError("epoch must be >= 0");
  if (schedule == Schedule::kJoint) return 1e-4;
  if (epoch < 30) return 1e-3;
  if (epoch < 60) return 1e-4;
  return 5e-5;
}

// ---- Batches and losses -----------------------------------------------------------

PairBatch make_batch(const Dataset& data, std::span<const std::size_t> indices, const ConditionSpace& space) {
  if (indices.empty()) throw DataError("empty batch");
  std::vector<Tensor> a, b, clean;
  std::vector<SceneMeta> metas;
  bool all_clean = true;
  for (auto i : indices) {
    const auto& pair = data.pairs.at(i);
    a.push_back(pair.a.data);
    b.push_back(pair.b.data);
    metas.push_back(pair.a.meta);
    if (pair.clean) {
      clean.push_back(pair.clean->data);
    } else {
      all_clean = false;
    }
  }
  PairBatch batch{stack_patches(a), stack_patches(b), std::nullopt, space.encode(metas)};
  if (all_clean) batch.clean = stack_patches(clean);
  return batch;
}

R2rPair r2r_corrupt(const Tensor& noisy, double alpha, Rng& rng) {
  if (!(alpha > 0)) throw ConfigError("r2r alpha must be > 0");
  R2rPair out{Tensor(noisy.shape()), Tensor(noisy.shape())};
  for (std::int64_t i = 0; i < noisy.numel(); ++i) {
    const double z = rng.normal();
    out.input[i] = static_cast<Real>(noisy[i] + alpha * z);
    out.target[i] = static_cast<Real>(noisy[i] - z / alpha);
  }
  return out;
}

R2rPair r2r_corrupt(const Tensor& noisy, const Tensor& z, double alpha) {
  if (!(alpha > 0)) throw ConfigError("r2r alpha must be > 0");
  if (!same_shape(noisy, z)) throw ShapeError("r2r perturbation shape " + shape_str(z.shape()) + " vs " +
                                              shape_str(noisy.shape()));
  R2rPair out{Tensor(noisy.shape()), Tensor(noisy.shape())};
  for (std::int64_t i = 0; i < noisy.numel(); ++i) {
    out.input[i] = static_cast<Real>(noisy[i] + alpha * z[i]);
    out.target[i] = static_cast<Real>(noisy[i] - z[i] / alpha);
  }
  return out;
}

Var loss_n2n(Tape& tape, const Denoiser& denoiser, const Var& a, const Var& b) {
  return n2n_terms(denoiser.forward(tape, a), denoiser.forward(tape, b), a, b);
}

Var loss_nm_cross(Tape& tape, const NoiseModel& model, const Denoiser& denoiser, const Var& a, const Var& b,
                  const Conditioning& cond) {
  return model.nll(tape, a, denoiser.forward(tape, b), cond) + model.nll(tape, b, denoiser.forward(tape, a), cond);
}

Var loss_nm_self(Tape& tape, const NoiseModel& model, const Denoiser& denoiser, const Var& a, const Var& b,
                 const Conditioning& cond) {
  return model.nll(tape, a, denoiser.forward(tape, a), cond) + model.nll(tape, b, denoiser.forward(tape, b), cond);
}

LossTerms batch_loss(Tape& tape, const NoiseModel* model, const Denoiser* denoiser, const PairBatch& batch,
                     LossMode mode, double lambda, double r2r_alpha, Rng& rng, double r2r_sigma) {
  if (!(lambda >= 0)) throw ConfigError("lambda must be >= 0");
  auto a = tape.constant(batch.a);
  auto b = tape.constant(batch.b);
  const double dims = static_cast<double>(batch.a.numel()) / static_cast<double>(batch.size());
  auto clean = [&] {
    if (!batch.clean) throw DataError("mode '" + to_string(mode) + "' requires clean patches");
    return tape.constant(*batch.clean);
  };

  LossTerms out;
  switch (mode) {
    case LossMode::kCross:
    case LossMode::kSelf: {
      const auto& nm = require_model(model, mode);
      const auto& d = require_denoiser(denoiser, mode);
      auto da = d.forward(tape, a);
      auto db = d.forward(tape, b);
      auto nm_terms = mode == LossMode::kCross ? nm.nll(tape, a, db, batch.cond) + nm.nll(tape, b, da, batch.cond)
                                               : nm.nll(tape, a, da, batch.cond) + nm.nll(tape, b, db, batch.cond);
      out.nm = mean(nm_terms);
      out.dn = mean(n2n_terms(da, db, a, b));
      out.nm_dims = 2 * dims;
      break;
    }
    case LossMode::kR2r: {
      const auto& nm = require_model(model, mode);
      const auto& d = require_denoiser(denoiser, mode);
      Tensor z(batch.a.shape());
      for (auto& v : z.mutable_values()) v = static_cast<Real>(r2r_sigma * rng.normal());
      auto corrupted = r2r_corrupt(batch.a, z, r2r_alpha);
      auto estimate = d.forward(tape, tape.constant(std::move(corrupted.input)));
      out.nm = mean(nm.nll(tape, a, estimate, batch.cond));
      out.dn = mean(sum_per_sample(square(tape.constant(std::move(corrupted.target)) - estimate)));
      out.nm_dims = dims;
      break;
    }
    case LossMode::kN2n: {
      out.dn = mean(loss_n2n(tape, require_denoiser(denoiser, mode), a, b));
      out.total = out.dn;
      return out;
    }
    case LossMode::kSupervised: {
      const auto& d = require_denoiser(denoiser, mode);
      auto c = clean();
      out.dn = mean(sum_per_sample(square(d.forward(tape, a) - c)) + sum_per_sample(square(d.forward(tape, b) - c)));
      out.total = out.dn;
      return out;
    }
    case LossMode::kSupervisedNf: {
      const auto& nm = require_model(model, mode);
      auto c = clean();
      out.nm = mean(nm.nll(tape, a, c, batch.cond) + nm.nll(tape, b, c, batch.cond));
      out.nm_dims = 2 * dims;
      out.total = out.nm;
      return out;
    }
  }
  out.total = out.nm + scale(out.dn, lambda);
  return out;
}

// ---- Evaluation -------------------------------------------------------------------

EvalMetrics evaluate(const NoiseModel* model, const Denoiser* denoiser, const Dataset& data,
                     std::span<const std::size_t> indices, const ConditionSpace& space, const EvalOptions& options) {
  EvalMetrics m;
  const std::size_t n = std::min(indices.size(), options.cap);
  if (n == 0) {
    m.nll_per_dim = m.kl = m.psnr = m.ssim = m.noisy_psnr = kNaN;
    return m;
  }
  const std::size_t step = std::max<std::size_t>(1, options.batch_size);
  NoiseHistogram real(options.histogram), sampled(options.histogram);
  Rng sample_rng(Rng::derive(options.seed, 7));
  double nll_sum = 0, nll_count = 0, psnr_sum = 0, ssim_sum = 0, noisy_psnr_sum = 0;
  std::int64_t scored = 0;
  bool have_clean = true;

  for (std::size_t start = 0; start < n; start += step) {
    const auto slice = indices.subspan(start, std::min(step, n - start));
    const auto batch = make_batch(data, slice, space);
    have_clean = have_clean && batch.clean.has_value();
    const Tensor da = denoiser ? denoise(*denoiser, batch.a) : batch.a;
    const Tensor db = denoiser ? denoise(*denoiser, batch.b) : batch.b;

    if (model) {
      Tape tape(GradMode::kDisabled);
      auto a = tape.constant(batch.a), b = tape.constant(batch.b);
      Var terms;
      if (batch.clean) {
        auto c = tape.constant(*batch.clean);
        terms = model->nll(tape, a, c, batch.cond) + model->nll(tape, b, c, batch.cond);
      } else {
        terms = model->nll(tape, a, tape.constant(db), batch.cond) + model->nll(tape, b, tape.constant(da), batch.cond);
      }
      nll_sum += value_of(sum(terms));
      nll_count += 2.0 * static_cast<double>(batch.a.numel());
    }
    if (!batch.clean) continue;

    const Tensor& clean = *batch.clean;
    if (model) {
      accumulate_noise(real, batch.a, clean);
      accumulate_noise(real, batch.b, clean);
      accumulate_noise(sampled, model->sample(clean, batch.cond, sample_rng), clean);
      accumulate_noise(sampled, model->sample(clean, batch.cond, sample_rng), clean);
    }
    const auto cleans = unstack_patches(clean);
    const auto das = unstack_patches(da), dbs = unstack_patches(db);
    const auto as = unstack_patches(batch.a), bs = unstack_patches(batch.b);
    for (std::size_t i = 0; i < cleans.size(); ++i) {
      psnr_sum += psnr(das[i], cleans[i]) + psnr(dbs[i], cleans[i]);
      noisy_psnr_sum += psnr(as[i], cleans[i]) + psnr(bs[i], cleans[i]);
      const int window = static_cast<int>(std::min<std::int64_t>({8, cleans[i].dim(-1), cleans[i].dim(-2)}));
      ssim_sum += ssim(das[i], cleans[i], 1.0, window) + ssim(dbs[i], cleans[i], 1.0, window);
      scored += 2;
    }
  }
  m.patches = static_cast<std::int64_t>(n);
  m.nll_per_dim = model ? nll_sum / nll_count : kNaN;
  if (have_clean) {
    m.kl = model ? kl_divergence(real, sampled) : kNaN;
    m.psnr = psnr_sum / static_cast<double>(scored);
    m.ssim = ssim_sum / static_cast<double>(scored);
    m.noisy_psnr = noisy_psnr_sum / static_cast<double>(scored);
  } else {
    m.kl = m.psnr = m.ssim = m.noisy_psnr = kNaN;
  }
  return m;
}

std::vector<StratumMetrics> evaluate_strata(const NoiseModel* model, const Denoiser* denoiser, const Dataset& data,
                                            const ConditionSpace& space, const EvalOptions& options) {
  std::map<std::tuple<std::string, std::uint32_t, std::uint32_t>, std::vector<std::size_t>> strata;
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  for (auto i : all) {
    const auto& meta = data.pairs[i].a.meta;
    strata[{meta.camera_id, meta.iso, meta.scene_id}].push_back(i);
  }
  std::vector<StratumMetrics> rows;
  for (const auto& [key, indices] : strata) {
    rows.push_back({std::get<0>(key), std::to_string(std::get<1>(key)), std::to_string(std::get<2>(key)),
                    evaluate(model, denoiser, data, indices, space, options)});
  }
  rows.push_back({"ALL", "ALL", "ALL", evaluate(model, denoiser, data, all, space, options)});
  return rows;
}

void write_metrics_csv(const std::string& path, std::span<const StratumMetrics> rows, const HistogramSpec& histogram) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "# histogram " << histogram.describe() << "\n";
  out << "camera,iso,scene,patches,nll_per_dim,kl,psnr,ssim,noisy_psnr\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.camera << ',' << r.iso << ',' << r.scene << ',' << m.patches << ',' << format_double(m.nll_per_dim)
        << ',' << format_double(m.kl) << ',' << format_double(m.psnr) << ',' << format_double(m.ssim) << ','
        << format_double(m.noisy_psnr) << "\n";
  }
  if (!out) throw Error("failed writing " + path);
}

// ---- Training ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a finite value >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(lr_multiplier > 0) || !(noise_model_lr_multiplier > 0)) {
    throw ConfigError("learning-rate multipliers must be > 0");
  }
  if (!(r2r_alpha > 0)) throw ConfigError("r2r alpha must be > 0");
  if (!(r2r_sigma >= 0) || !std::isfinite(r2r_sigma)) throw ConfigError("r2r sigma must be a finite value >= 0");
}

double estimate_noise_sigma(const Dataset& data) {
  std::vector<double> diffs;
  for (const auto& p : data.pairs) {
    const Tensor& t = p.a.data;
    const auto w = t.dim(-1), rows = t.numel() / w;
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t x = 0; x + 1 < w; ++x) diffs.push_back(std::abs(double(t[r * w + x + 1]) - t[r * w + x]));
    }
  }
  if (diffs.empty()) throw DataError("noise level estimate needs patches at least 2 pixels wide");
  auto mid = diffs.begin() + static_cast<std::ptrdiff_t>(diffs.size() / 2);
  std::nth_element(diffs.begin(), mid, diffs.end());
  // MAD of a difference of two independent N(0, s^2) draws is 0.6745 * sqrt(2) s.
  return *mid / (0.6744897501960817 * std::sqrt(2.0));
}

Trainer::Trainer(TrainConfig config, NoiseModel* model, Denoiser* denoiser, const Dataset& train, const Dataset& eval,
                 ConditionSpace space)
    : config_(std::move(config)),
      model_(model),
      denoiser_(denoiser),
      train_(train),
      eval_(eval),
      space_(std::move(space)) {
  config_.validate();
  if (train_.empty()) throw DataError("training set is empty");
  if (needs_clean(config_.mode) && !train_.has_clean()) {
    throw DataError("mode '" + to_string(config_.mode) + "' requires clean patches in every training record");
  }
  if (trains_noise_model(config_.mode)) require_model(model_, config_.mode);
  if (config_.mode != LossMode::kSupervisedNf) require_denoiser(denoiser_, config_.mode);
  const std::size_t n_eval = std::min(eval_.size(), config_.eval_cap);
  eval_indices_.resize(n_eval);
  std::iota(eval_indices_.begin(), eval_indices_.end(), 0);
  if (config_.mode == LossMode::kR2r && config_.r2r_sigma == 0) config_.r2r_sigma = estimate_noise_sigma(train_);
}

std::vector<ParamGroup> Trainer::param_groups(double lr) const {
  std::vector<ParamGroup> groups;
  if (denoiser_ && trains_denoiser(config_.mode)) groups.push_back({denoiser_->params().trainable(), lr});
  if (model_ && trains_noise_model(config_.mode)) {
    groups.push_back({model_->params().trainable(), lr * config_.noise_model_lr_multiplier});
  }
  return groups;
}

EpochRecord Trainer::run_epoch() {
  const auto started = std::chrono::steady_clock::now();
  const int epoch = epoch_;
  const double lr = lr_schedule(config_.resolved_schedule(), epoch) * config_.lr_multiplier;
  const auto groups = param_groups(lr);
  const std::string mode = to_string(config_.mode);

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(Rng::derive(config_.seed, 1, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

  EpochRecord record;
  record.epoch = epoch;
  record.lr = lr;
  double loss_sum = 0, nm_sum = 0, nm_dims = 0;
  std::size_t seen = 0;
  auto fail = [&](const std::string& reason) {
    record.train_loss = seen ? loss_sum / static_cast<double>(seen) : kNaN;
    record.eval_nll_per_dim = record.eval_kl = record.eval_psnr = record.eval_ssim = kNaN;
    record.objective_nll_per_dim = kNaN;
    record.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    history_.push_back(record);
    ++epoch_;
    throw DivergenceError(epoch, mode, reason);
  };

  std::uint64_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size, ++batch_index) {
    const std::span<const std::size_t> slice(order.data() + start, std::min(config_.batch_size, order.size() - start));
    const auto batch = make_batch(train_, slice, space_);
    Rng rng(Rng::derive(config_.seed, 2, static_cast<std::uint64_t>(epoch), batch_index));
    Tape tape;
    const auto terms = batch_loss(tape, model_, denoiser_, batch, config_.mode, config_.lambda, config_.r2r_alpha, rng,
                                  config_.r2r_sigma);
    const double total = value_of(terms.total);
    if (!std::isfinite(total)) fail("non-finite training loss");
    const auto grads = tape.backward(terms.total);
    const auto report = adam_.step(groups, grads);
    if (!report.applied) warnings_.push_back("epoch " + std::to_string(epoch) + ": " + report.warning);

    const double n = static_cast<double>(slice.size());
    loss_sum += total * n;
    if (terms.nm.valid()) {
      nm_sum += value_of(terms.nm) * n;
      nm_dims = terms.nm_dims;
    }
    seen += slice.size();
  }
  record.train_loss = loss_sum / static_cast<double>(seen);
  record.objective_nll_per_dim = nm_dims > 0 ? nm_sum / static_cast<double>(seen) / nm_dims : kNaN;

  if ((model_ && !model_->params().all_finite()) || (denoiser_ && !denoiser_->params().all_finite())) {
    fail("non-finite parameters");
  }
  if (record.objective_nll_per_dim < config_.divergence_floor) {
    fail("objective NLL/dim " + format_double(record.objective_nll_per_dim) + " below floor " +
         format_double(config_.divergence_floor));
  }

  const bool uses_model = trains_noise_model(config_.mode);
  const bool uses_denoiser = config_.mode != LossMode::kSupervisedNf;
  EvalOptions options;
  options.cap = config_.eval_cap;
  options.batch_size = config_.batch_size;
  options.seed = config_.seed;
  const auto m = evaluate(uses_model ? model_ : nullptr, uses_denoiser ? denoiser_ : nullptr, eval_, eval_indices_,
                          space_, options);
  record.eval_nll_per_dim = m.nll_per_dim;
  record.eval_kl = m.kl;
  record.eval_psnr = m.psnr;
  record.eval_ssim = m.ssim;
  record.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (record.eval_nll_per_dim < config_.divergence_floor) {
    history_.push_back(record);
    ++epoch_;
    throw DivergenceError(epoch, mode,
                          "eval NLL/dim " + format_double(record.eval_nll_per_dim) + " below floor " +
                              format_double(config_.divergence_floor));
  }
  history_.push_back(record);
  ++epoch_;
  return record;
}

void Trainer::run(const EpochCallback& on_epoch) {
  while (epoch_ < config_.epochs) {
    const auto record = run_epoch();
    if (on_epoch && !on_epoch(record)) break;
  }
}

void Trainer::save(Checkpoint& ckpt) const {
  if (model_) model_->save(ckpt);
  if (denoiser_) denoiser_->save(ckpt);
  adam_.save(ckpt);
  ckpt.put_string("train/mode", to_string(config_.mode));
  ckpt.put_integer("train/epoch", epoch_);
  std::vector<double> rows;
  for (const auto& r : history_) {
    rows.insert(rows.end(), {static_cast<double>(r.epoch), r.lr, r.train_loss, r.eval_nll_per_dim, r.eval_kl,
                             r.eval_psnr, r.eval_ssim, r.wallclock_s, r.objective_nll_per_dim});
  }
  put_doubles(ckpt, "train/history", rows, 9);
}

void Trainer::load(const Checkpoint& ckpt) {
  const auto mode = ckpt.get_string("train/mode");
  if (mode != to_string(config_.mode)) {
    throw FormatError("checkpoint was trained in mode '" + mode + "', resuming as '" + to_string(config_.mode) + "'");
  }
  if (model_) model_->load(ckpt);
  if (denoiser_) denoiser_->load(ckpt);
  adam_.load(ckpt);
  epoch_ = static_cast<int>(ckpt.get_integer("train/epoch"));
  history_.clear();
  if (ckpt.contains("train/history")) {
    const auto v = get_doubles(ckpt, "train/history");
    for (std::size_t i = 0; i + 9 <= v.size(); i += 9) {
      history_.push_back({static_cast<int>(v[i]), v[i + 1], v[i + 2], v[i + 3], v[i + 4], v[i + 5], v[i + 6],
                          v[i + 7], v[i + 8]});
    }
  }
}

void write_history_csv(const std::string& path, std::span<const EpochRecord> history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "epoch,lr,train_loss,eval_nll_per_dim,eval_kl,eval_psnr,eval_ssim,wallclock_s\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.train_loss) << ','
        << format_double(r.eval_nll_per_dim) << ',' << format_double(r.eval_kl) << ',' << format_double(r.eval_psnr)
        << ',' << format_double(r.eval_ssim) << ',' << format_double(r.wallclock_s) << "\n";
  }
  if (!out) throw Error("failed writing " + path);
}

NOISYLAB_NAMESPACE_END
