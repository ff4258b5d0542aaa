#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "noisylab/autodiff.h"

NOISYLAB_NAMESPACE_BEGIN

class Checkpoint;

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Parameters sharing one learning rate for a step.
struct ParamGroup {
  std::vector<Parameter*> params;
  double lr = 1e-3;
};

struct AdamStepReport {
  bool applied = true;
  std::string warning;
};

/// Bias-corrected Adam. Moments are keyed by parameter name; a parameter
/// absent from the gradients is treated as having a zero gradient.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Skips the whole step (no state change) when any gradient is non-finite.
  AdamStepReport step(std::span<const ParamGroup> groups, const Gradients& grads);

  std::int64_t step_count() const { return t_; }
  const AdamOptions& options() const { return options_; }

  const Tensor* first_moment(const std::string& name) const;
  const Tensor* second_moment(const std::string& name) const;

  // Stored under "adam/m/<name>", "adam/v/<name>" and "adam/step".
  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 private:
  struct Slot {
    Tensor m;
    Tensor v;
  };

  AdamOptions options_;
  std::map<std::string, Slot> slots_;
  std::int64_t t_ = 0;
};

NOISYLAB_NAMESPACE_END
