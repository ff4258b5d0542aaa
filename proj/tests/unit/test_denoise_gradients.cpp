// Denoiser gradients against finite differences (double-precision build):
// about 1% of the weights per architecture, plus the input.

#include <gtest/gtest.h>

#include "gradcheck.h"
#include "noisylab/denoise.h"
#include "noisylab/ops.h"

namespace noisylab {
namespace {

class Kinds : public ::testing::TestWithParam<DenoiserKind> {};

TEST_P(Kinds, WeightsAndInput) {
  Rng rng(31);
  auto model = make_denoiser({GetParam(), 2, 6}, rng);
  // Non-zero biases so every unit is exercised.
  for (auto* p : model->params().all()) {
    if (p->value.rank() == 1) {
      for (auto& v : p->value.mutable_values()) v = static_cast<Real>(rng.uniform(-0.1, 0.1));
    }
  }
  Tensor x({1, 2, 8, 8}), proj({1, 2, 8, 8});
  for (auto& v : x.mutable_values()) v = static_cast<Real>(rng.uniform(0, 1));
  for (auto& v : proj.mutable_values()) v = static_cast<Real>(rng.uniform(-1, 1));

  auto loss = [&](Tape& tape) { return sum(model->forward(tape, tape.constant(x)) * tape.constant(proj)); };
  const auto result = testing::param_grad_check(loss, model->params().all(), 1e-5, 97);
  EXPECT_LT(result.worst_rel_err, 1e-3);
  EXPECT_GT(result.checked, 20u);

  auto input_loss = [&](Tape& tape, const std::vector<Var>& in) {
    return sum(model->forward(tape, in[0]) * tape.constant(proj));
  };
  EXPECT_LT(testing::grad_check(input_loss, {x}, 1e-5).worst_rel_err, 1e-3);
}

INSTANTIATE_TEST_SUITE_P(Denoisers, Kinds, ::testing::Values(DenoiserKind::kDnCnn, DenoiserKind::kUNet));

}  // namespace
}  // namespace noisylab
