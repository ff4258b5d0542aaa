#pragma once

#include <memory>
#include <string>

#include "noisylab/conditioning.h"
#include "noisylab/module.h"
#include "noisylab/rng.h"

NOISYLAB_NAMESPACE_BEGIN

struct FlowContext {
  // Clean estimate the noise is conditioned on, [N, C, H, W].
  Var clean;
  const Conditioning* cond = nullptr;
};

struct FlowStep {
  Var z;
  // Per-sample log|det J| of the step, [N] or [1] (shared by all samples).
  Var logdet;
};

/// Bijection on noise tensors [N, C, H, W]. forward() runs in the
/// normalizing direction (noise -> base); inverse() is used for sampling.
class FlowLayer {
 public:
  virtual ~FlowLayer() = default;
  virtual std::string kind() const = 0;
  virtual FlowStep forward(Tape& tape, const Var& x, const FlowContext& ctx) const = 0;
  virtual Var inverse(Tape& tape, const Var& z, const FlowContext& ctx) const = 0;
};

// z = x / s with s = sqrt(beta1 * clamp(clean, 0, 1) + beta2).
class SdtLayer : public FlowLayer {
 public:
  SdtLayer(ParameterStore& store, const std::string& prefix, double log_beta1 = -5.0, double log_beta2 = -5.0);
  std::string kind() const override { return "sdt"; }
  FlowStep forward(Tape& tape, const Var& x, const FlowContext& ctx) const override;
  Var inverse(Tape& tape, const Var& z, const FlowContext& ctx) const override;

  Parameter& log_beta1() { return *log_beta1_; }
  Parameter& log_beta2() { return *log_beta2_; }

 private:
  Var scale_of(Tape& tape, const FlowContext& ctx) const;
  Parameter* log_beta1_;
  Parameter* log_beta2_;
};

// z = x / exp(g_iso + g_camera), one learnable log-gain per ISO and per camera.
class GainLayer : public FlowLayer {
 public:
  GainLayer(ParameterStore& store, const std::string& prefix, const ConditionSpace& space);
  std::string kind() const override { return "gain"; }
  FlowStep forward(Tape& tape, const Var& x, const FlowContext& ctx) const override;
  Var inverse(Tape& tape, const Var& z, const FlowContext& ctx) const override;

  Parameter& iso_gain() { return *iso_; }
  Parameter& camera_gain() { return *camera_; }

 private:
  Var log_gain(Tape& tape, const Var& x, const FlowContext& ctx) const;
  Parameter* iso_;
  Parameter* camera_;
};

/// Invertible 1x1 channel mixing W = P L (U + diag(sign * exp(log_scale))),
/// with P and sign fixed and L unit lower triangular. Starts as identity.
class Mix1x1Layer : public FlowLayer {
 public:
  Mix1x1Layer(ParameterStore& store, const std::string& prefix, int channels);
  std::string kind() const override { return "mix"; }
  FlowStep forward(Tape& tape, const Var& x, const FlowContext& ctx) const override;
  Var inverse(Tape& tape, const Var& z, const FlowContext& ctx) const override;

  // Re-parameterizes to the given nonsingular [C, C] matrix via partial-pivot LU.
  void set_matrix(const Tensor& w);
  Tensor matrix() const;

 private:
  Var weight(Tape& tape) const;
  int channels_;
  Parameter* perm_;
  Parameter* sign_;
  Parameter* lower_;
  Parameter* upper_;
  Parameter* log_scale_;
  Tensor lower_mask_, upper_mask_, eye_;
};

/// Affine coupling: the first half of the channels passes through and drives
/// a small CNN predicting (raw, t) for the second half;
/// z2 = x2 * exp(tanh(raw)) + t. The last subnet conv starts at zero.
class CouplingLayer : public FlowLayer {
 public:
  CouplingLayer(ParameterStore& store, const std::string& prefix, int channels, int hidden, Rng& rng);
  std::string kind() const override { return "coupling"; }
  FlowStep forward(Tape& tape, const Var& x, const FlowContext& ctx) const override;
  Var inverse(Tape& tape, const Var& z, const FlowContext& ctx) const override;

  std::vector<Parameter*> subnet_parameters() { return {w0_, b0_, w1_, b1_, w2_, b2_}; }

 private:
  std::pair<Var, Var> log_scale_and_shift(Tape& tape, const Var& x1) const;
  int channels_;
  Parameter *w0_, *b0_, *w1_, *b1_, *w2_, *b2_;
};

NOISYLAB_NAMESPACE_END
