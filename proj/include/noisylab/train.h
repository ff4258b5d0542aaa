#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisylab/adam.h"
#include "noisylab/conditioning.h"
#include "noisylab/data.h"
#include "noisylab/denoise.h"
#include "noisylab/metrics.h"
#include "noisylab/noise_model.h"

NOISYLAB_NAMESPACE_BEGIN

class Checkpoint;

// cross: -log p(a | D(b)) - log p(b | D(a))       + lambda * n2n
// self:  -log p(a | D(a)) - log p(b | D(b))       + lambda * n2n
// r2r:   -log p(a | D(a + alpha z)) + lambda * |a - z / alpha - D(a + alpha z)|^2, using `a` only,
//        z ~ N(0, r2r_sigma^2 I)
// n2n:   |D(a) - b|^2 + |D(b) - a|^2
// supervised:    |D(a) - clean|^2 + |D(b) - clean|^2
// supervised-nf: -log p(a | clean) - log p(b | clean)
enum class LossMode { kCross, kSelf, kR2r, kN2n, kSupervised, kSupervisedNf };

std::string to_string(LossMode mode);
LossMode parse_loss_mode(const std::string& text);
bool needs_clean(LossMode mode);
bool trains_noise_model(LossMode mode);
bool trains_denoiser(LossMode mode);

// joint: constant 1e-4. supervised: 1e-3, 1e-4 from epoch 30, 5e-5 from epoch 60.
enum class Schedule { kJoint, kSupervised };

std::string to_string(Schedule schedule);
Schedule parse_schedule(const std::string& text);
Schedule default_schedule(LossMode mode);
double lr_schedule(Schedule schedule, int epoch);

// ---- Batches and losses -------------------------------------------------------

struct PairBatch {
  Tensor a;  // [N, C, H, W]
  Tensor b;
  std::optional<Tensor> clean;
  Conditioning cond;
  std::size_t size() const { return cond.size(); }
};

PairBatch make_batch(const Dataset& data, std::span<const std::size_t> indices, const ConditionSpace& space);

struct R2rPair {
  Tensor input;   // noisy + alpha z
  Tensor target;  // noisy - z / alpha
};

// noisy + alpha z, noisy - z / alpha with z ~ N(0, I).
R2rPair r2r_corrupt(const Tensor& noisy, double alpha, Rng& rng);
// Same with a given perturbation z.
R2rPair r2r_corrupt(const Tensor& noisy, const Tensor& z, double alpha);

/// Blind noise level of the `a` observations: median absolute horizontal
/// difference / (0.6745 sqrt 2). Biased upward by image structure.
double estimate_noise_sigma(const Dataset& data);

// Per-pair terms, shape [N]. Each runs the denoiser itself.
Var loss_n2n(Tape& tape, const Denoiser& denoiser, const Var& a, const Var& b);
Var loss_nm_cross(Tape& tape, const NoiseModel& model, const Denoiser& denoiser, const Var& a, const Var& b,
                  const Conditioning& cond);
Var loss_nm_self(Tape& tape, const NoiseModel& model, const Denoiser& denoiser, const Var& a, const Var& b,
                 const Conditioning& cond);

struct LossTerms {
  // Batch means of the per-pair sums. `nm` / `dn` are invalid when the mode
  // has no such term.
  Var total;
  Var nm;
  Var dn;
  // Elements scored by the noise model per pair (for NLL per dimension).
  double nm_dims = 0.0;
};

/// total = nm + lambda * dn for the joint modes; the single term otherwise.
/// `rng` is only drawn from in r2r mode.
LossTerms batch_loss(Tape& tape, const NoiseModel* model, const Denoiser* denoiser, const PairBatch& batch,
                     LossMode mode, double lambda, double r2r_alpha, Rng& rng, double r2r_sigma = 1.0);

// ---- Evaluation ---------------------------------------------------------------

struct EvalOptions {
  // Pairs evaluated (the first `cap` of the given order).
  std::size_t cap = 2000;
  std::size_t batch_size = 128;
  HistogramSpec histogram;
  std::uint64_t seed = 0;
};

/// Metrics over a set of pairs. With clean data: NLL/dim of both noisy
/// patches given the clean one, KL between real and model-sampled noise
/// histograms, PSNR/SSIM of the denoised patches. Without clean data only
/// the cross NLL -log p(a | D(b)) is defined; the rest are NaN. A null
/// denoiser is the identity; a null noise model leaves NLL and KL NaN.
struct EvalMetrics {
  std::int64_t patches = 0;
  double nll_per_dim = 0.0;
  double kl = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double noisy_psnr = 0.0;
};

EvalMetrics evaluate(const NoiseModel* model, const Denoiser* denoiser, const Dataset& data,
                     std::span<const std::size_t> indices, const ConditionSpace& space, const EvalOptions& options);

struct StratumMetrics {
  std::string camera;
  std::string iso;
  std::string scene;
  EvalMetrics metrics;
};

// One row per (camera, ISO, scene) in sorted order, then the aggregate "ALL".
std::vector<StratumMetrics> evaluate_strata(const NoiseModel* model, const Denoiser* denoiser, const Dataset& data,
                                            const ConditionSpace& space, const EvalOptions& options);

void write_metrics_csv(const std::string& path, std::span<const StratumMetrics> rows, const HistogramSpec& histogram);

// ---- Training -----------------------------------------------------------------

struct TrainConfig {
  LossMode mode = LossMode::kCross;
  double lambda = 262144.0;  // 2^18
  int epochs = 10;
  std::size_t batch_size = 128;
  std::optional<Schedule> schedule;  // default_schedule(mode) when unset
  double lr_multiplier = 1.0;
  // Extra factor on the noise model's learning rate.
  double noise_model_lr_multiplier = 1.0;
  double r2r_alpha = 0.5;
  // Standard deviation of the r2r perturbation; 0 estimates it from the
  // training data when the trainer is built.
  double r2r_sigma = 0.0;
  // Abort when an epoch's objective NLL/dim falls below this.
  double divergence_floor = -8.0;
  std::size_t eval_cap = 2000;
  std::uint64_t seed = 0;

  Schedule resolved_schedule() const { return schedule.value_or(default_schedule(mode)); }
  // Validates ranges; throws ConfigError.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double eval_nll_per_dim = 0.0;
  double eval_kl = 0.0;
  double eval_psnr = 0.0;
  double eval_ssim = 0.0;
  double wallclock_s = 0.0;
  // Noise-model term of the training objective per scored element.
  double objective_nll_per_dim = 0.0;
};

/// One training run. Owns the optimizer; borrows the models and datasets.
/// Shuffling and r2r noise use generators derived from (seed, epoch, batch),
/// so a run restored from a checkpoint continues the same trajectory.
class Trainer {
 public:
  Trainer(TrainConfig config, NoiseModel* model, Denoiser* denoiser, const Dataset& train, const Dataset& eval,
          ConditionSpace space);

  /// Trains one epoch and evaluates. Throws DivergenceError (after the
  /// record has been appended to history()).
  EpochRecord run_epoch();

  using EpochCallback = std::function<bool(const EpochRecord&)>;
  // Runs until config.epochs or until the callback returns false.
  void run(const EpochCallback& on_epoch = nullptr);

  int epoch() const { return epoch_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const TrainConfig& config() const { return config_; }

  // Models, optimizer state, epoch counter and history.
  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  std::vector<ParamGroup> param_groups(double lr) const;

  TrainConfig config_;
  NoiseModel* model_;
  Denoiser* denoiser_;
  const Dataset& train_;
  const Dataset& eval_;
  ConditionSpace space_;
  std::vector<std::size_t> eval_indices_;
  Adam adam_;
  int epoch_ = 0;
  std::vector<EpochRecord> history_;
  std::vector<std::string> warnings_;
};

// Header plus one row per record, columns as in EpochRecord minus the
// objective term.
void write_history_csv(const std::string& path, std::span<const EpochRecord> history);

NOISYLAB_NAMESPACE_END
