#pragma once

// Central finite-difference oracle for scalar functions of a few tensors.
// Meant for the double-precision build, where a 1e-3 step resolves
// gradients to well below the 1e-3 relative tolerance.

#include <cmath>
#include <functional>
#include <vector>

#include "noisylab/autodiff.h"

namespace noisylab::testing {

using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double worst_rel_err = 0.0;
  std::size_t checked = 0;
};

inline double rel_err(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-7) return std::abs(analytic - numeric) / 1e-7;
  return std::abs(analytic - numeric) / scale;
}

inline double eval_loss(const LossFn& fn, const std::vector<Tensor>& inputs) {
  Tape tape(GradMode::kDisabled);
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return static_cast<double>(fn(tape, vars).value().item());
}

inline GradCheckResult grad_check(const LossFn& fn, const std::vector<Tensor>& inputs, double step = 1e-3) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  tape.backward(fn(tape, vars));

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = tape.grad(vars[k]);
    for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
      auto plus = inputs;
      auto minus = inputs;
      plus[k][i] += static_cast<Real>(step);
      minus[k][i] -= static_cast<Real>(step);
      const double numeric = (eval_loss(fn, plus) - eval_loss(fn, minus)) / (2.0 * step);
      const double a = analytic.empty() ? 0.0 : static_cast<double>(analytic[i]);
      result.worst_rel_err = std::max(result.worst_rel_err, rel_err(a, numeric));
      ++result.checked;
    }
  }
  return result;
}

using ParamLossFn = std::function<Var(Tape&)>;

// Same check for parameters read through Tape::param(). `stride` > 1 checks
// every stride-th element only.
inline GradCheckResult param_grad_check(const ParamLossFn& fn, const std::vector<Parameter*>& params,
                                        double step = 1e-3, std::int64_t stride = 1) {
  Gradients grads;
  {
    Tape tape;
    grads = tape.backward(fn(tape));
  }
  auto value = [&] {
    Tape tape(GradMode::kDisabled);
    return static_cast<double>(fn(tape).value().item());
  };
  GradCheckResult result;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    const Tensor* analytic = grads.find(*p);
    for (std::int64_t i = 0; i < p->value.numel(); i += stride) {
      const Real saved = p->value[i];
      p->value[i] = saved + static_cast<Real>(step);
      const double up = value();
      p->value[i] = saved - static_cast<Real>(step);
      const double down = value();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic ? static_cast<double>((*analytic)[i]) : 0.0;
      result.worst_rel_err = std::max(result.worst_rel_err, rel_err(a, numeric));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace noisylab::testing
