#pragma once

#include <memory>
#include <string>
#include <vector>

#include "noisylab/conditioning.h"
#include "noisylab/flow.h"
#include "noisylab/module.h"
#include "noisylab/rng.h"

NOISYLAB_NAMESPACE_BEGIN

class Checkpoint;

enum class NoiseModelKind { kAwgn, kNlf, kFlow };

std::string to_string(NoiseModelKind kind);
NoiseModelKind parse_noise_model_kind(const std::string& text);

struct NoiseModelSpec {
  NoiseModelKind kind = NoiseModelKind::kFlow;
  int channels = 4;
  // nlf: one (beta1, beta2) per (camera, ISO) instead of a single pair.
  bool per_condition = false;
  // flow: normalizing-direction layer order of one block, repeated `blocks`
  // times. "default" is sdt,mix,coupling,gain, dropping coupling for odd C.
  std::string layers = "default";
  int blocks = 1;
  // Coupling subnet width.
  int hidden = 16;
  double init_log_beta1 = -5.0;
  double init_log_beta2 = -5.0;
  double init_log_sigma = -2.5;

  std::vector<std::string> layer_list() const;
  std::string describe() const;
  static NoiseModelSpec parse(const std::string& text);
};

/// Conditional density of a noisy batch around a clean estimate.
class NoiseModel {
 public:
  NoiseModel(NoiseModelSpec spec, ConditionSpace space);
  virtual ~NoiseModel() = default;
  NoiseModel(const NoiseModel&) = delete;
  NoiseModel& operator=(const NoiseModel&) = delete;

  /// Per-sample -log p(noisy | clean), shape [N]. noisy and clean are
  /// [N, C, H, W]; gradients flow into both and into the parameters.
  virtual Var nll(Tape& tape, const Var& noisy, const Var& clean, const Conditioning& cond) const = 0;

  /// noisy = clean + noise drawn from the model.
  virtual Tensor sample(const Tensor& clean, const Conditioning& cond, Rng& rng) const = 0;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const NoiseModelSpec& spec() const { return spec_; }
  const ConditionSpace& conditions() const { return space_; }

  std::string descriptor() const;
  // Parameters under "noise_model/" plus the descriptor in "noise_model/__arch__".
  void save(Checkpoint& ckpt) const;
  // Loads parameters after checking the stored descriptor matches this model.
  void load(const Checkpoint& ckpt);

 protected:
  void check_batch(const Var& noisy, const Var& clean, const Conditioning& cond) const;

  NoiseModelSpec spec_;
  ConditionSpace space_;
  ParameterStore params_{"noise_model/"};
};

class AwgnModel : public NoiseModel {
 public:
  AwgnModel(NoiseModelSpec spec, ConditionSpace space);
  Var nll(Tape& tape, const Var& noisy, const Var& clean, const Conditioning& cond) const override;
  Tensor sample(const Tensor& clean, const Conditioning& cond, Rng& rng) const override;

  void set_sigma(double sigma);
  double sigma() const;

 private:
  Parameter* log_sigma_;
};

// variance = beta1 * clamp(clean, 0, 1) + beta2
class NlfModel : public NoiseModel {
 public:
  NlfModel(NoiseModelSpec spec, ConditionSpace space);
  Var nll(Tape& tape, const Var& noisy, const Var& clean, const Conditioning& cond) const override;
  Tensor sample(const Tensor& clean, const Conditioning& cond, Rng& rng) const override;

  // Sets every condition's pair; beta1 may be 0.
  void set_betas(double beta1, double beta2);
  double beta1(int condition = 0) const;
  double beta2(int condition = 0) const;

 private:
  Var variance(Tape& tape, const Var& clean, const Conditioning& cond) const;
  Parameter* log_beta1_;
  Parameter* log_beta2_;
};

class NoiseFlowModel : public NoiseModel {
 public:
  NoiseFlowModel(NoiseModelSpec spec, ConditionSpace space, Rng& rng);
  Var nll(Tape& tape, const Var& noisy, const Var& clean, const Conditioning& cond) const override;
  Tensor sample(const Tensor& clean, const Conditioning& cond, Rng& rng) const override;

  const std::vector<std::unique_ptr<FlowLayer>>& layers() const { return layers_; }
  FlowLayer& layer(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<FlowLayer>> layers_;
};

std::unique_ptr<NoiseModel> make_noise_model(const NoiseModelSpec& spec, const ConditionSpace& space, Rng& rng);
// Rebuilds a model from "noise_model/__arch__" and loads its parameters.
std::unique_ptr<NoiseModel> load_noise_model(const Checkpoint& ckpt);

/// Mean negative log-likelihood per dimension over a batch, in nats.
/// Throws DomainError when the density is not finite.
double nll_per_dim(const NoiseModel& model, const Tensor& noisy, const Tensor& clean, const Conditioning& cond);

NOISYLAB_NAMESPACE_END
