// Property tests: analytic gradients of every differentiable op against
// central finite differences, 100 random cases per op (double-precision build).

#include <gtest/gtest.h>

#include <functional>
#include <string>

#include "gradcheck.h"
#include "noisylab/ops.h"
#include "noisylab/rng.h"

namespace noisylab {
namespace {

using testing::grad_check;
using testing::LossFn;

constexpr int kCases = 100;
constexpr double kTolerance = 1e-3;

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.mutable_values()) v = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

// Values bounded away from a kink at `kink` by more than the FD step.
Tensor away_from(const Shape& shape, Rng& rng, double kink, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.mutable_values()) {
    double x;
    do {
      x = rng.uniform(lo, hi);
    } while (std::abs(x - kink) < 0.01);
    v = static_cast<Real>(x);
  }
  return t;
}

Shape random_shape(Rng& rng) {
  return {1 + static_cast<std::int64_t>(rng.next() % 3), 1 + static_cast<std::int64_t>(rng.next() % 4)};
}

// Weighted sum keeps every output element's gradient distinct.
Var weighted_sum(Tape& tape, const Var& y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(y.shape());
  for (auto& v : w.mutable_values()) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
  return sum(y * tape.constant(w));
}

struct UnaryCase {
  std::string name;
  std::function<Var(const Var&)> op;
  double lo, hi, kink;
};

class UnaryGradient : public ::testing::TestWithParam<UnaryCase> {};

TEST_P(UnaryGradient, MatchesFiniteDifferences) {
  const auto& c = GetParam();
  Rng rng(17);
  for (int i = 0; i < kCases; ++i) {
    const Shape shape = random_shape(rng);
    Tensor x = std::isnan(c.kink) ? random_tensor(shape, rng, c.lo, c.hi) : away_from(shape, rng, c.kink, c.lo, c.hi);
    const std::uint64_t wseed = rng.next();
    LossFn fn = [&](Tape& tape, const std::vector<Var>& v) { return weighted_sum(tape, c.op(v[0]), wseed); };
    auto r = grad_check(fn, {x});
    ASSERT_LT(r.worst_rel_err, kTolerance) << c.name << " case " << i;
  }
}

const double kNoKink = std::nan("");

INSTANTIATE_TEST_SUITE_P(
    Ops, UnaryGradient,
    ::testing::Values(UnaryCase{"exp", [](const Var& x) { return exp(x); }, -2, 2, kNoKink},
                      UnaryCase{"log", [](const Var& x) { return log(x); }, 0.1, 3, kNoKink},
                      UnaryCase{"sqrt", [](const Var& x) { return sqrt(x); }, 0.1, 3, kNoKink},
                      UnaryCase{"tanh", [](const Var& x) { return tanh(x); }, -2, 2, kNoKink},
                      UnaryCase{"relu", [](const Var& x) { return relu(x); }, -2, 2, 0.0},
                      UnaryCase{"square", [](const Var& x) { return square(x); }, -2, 2, kNoKink},
                      UnaryCase{"neg", [](const Var& x) { return neg(x); }, -2, 2, kNoKink},
                      UnaryCase{"scale", [](const Var& x) { return scale(x, -2.5); }, -2, 2, kNoKink},
                      UnaryCase{"add_scalar", [](const Var& x) { return add_scalar(x, 0.7); }, -2, 2, kNoKink},
                      UnaryCase{"clamp", [](const Var& x) { return clamp(x, 0.0, 1.0); }, -0.5, 0.45, 0.0},
                      UnaryCase{"mean", [](const Var& x) { return mean(x); }, -2, 2, kNoKink},
                      UnaryCase{"sum_per_sample", [](const Var& x) { return sum_per_sample(x); }, -2, 2, kNoKink}),
    [](const auto& info) { return info.param.name; });

struct BinaryCase {
  std::string name;
  std::function<Var(const Var&, const Var&)> op;
};

class BinaryGradient : public ::testing::TestWithParam<BinaryCase> {};

TEST_P(BinaryGradient, MatchesFiniteDifferencesWithBroadcasting) {
  const auto& c = GetParam();
  Rng rng(23);
  for (int i = 0; i < kCases; ++i) {
    const Shape shape = random_shape(rng);
    Shape other = shape;
    switch (i % 3) {
      case 1: other = {1}; break;                 // scalar broadcast
      case 2: other = {shape[1]}; break;          // row broadcast
      default: break;
    }
    const bool swap = (i % 2) == 1;
    Tensor a = random_tensor(swap ? other : shape, rng, 0.5, 2.0);
    Tensor b = random_tensor(swap ? shape : other, rng, 0.5, 2.0);
    const std::uint64_t wseed = rng.next();
    LossFn fn = [&](Tape& tape, const std::vector<Var>& v) { return weighted_sum(tape, c.op(v[0], v[1]), wseed); };
    auto r = grad_check(fn, {a, b});
    ASSERT_LT(r.worst_rel_err, kTolerance) << c.name << " case " << i;
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, BinaryGradient,
                         ::testing::Values(BinaryCase{"add", [](const Var& a, const Var& b) { return a + b; }},
                                           BinaryCase{"sub", [](const Var& a, const Var& b) { return a - b; }},
                                           BinaryCase{"mul", [](const Var& a, const Var& b) { return a * b; }},
                                           BinaryCase{"div", [](const Var& a, const Var& b) { return a / b; }}),
                         [](const auto& info) { return info.param.name; });

TEST(StructuralGradient, Conv2dSameAndStrided) {
  Rng rng(5);
  for (int i = 0; i < kCases; ++i) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.next() % 2);
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng.next() % 2);
    const std::int64_t o = 1 + static_cast<std::int64_t>(rng.next() % 2);
    const std::int64_t k = (i % 2) ? 3 : 1;
    const int stride = (i % 4 == 3) ? 2 : 1;
    Tensor x = random_tensor({n, c, 4, 4}, rng, -1, 1);
    Tensor w = random_tensor({o, c, k, k}, rng, -1, 1);
    Tensor b = random_tensor({o}, rng, -1, 1);
    const std::uint64_t wseed = rng.next();
    LossFn fn = [&](Tape& tape, const std::vector<Var>& v) {
      return weighted_sum(tape, conv2d(v[0], v[1], v[2], {stride, -1}), wseed);
    };
    auto r = grad_check(fn, {x, w, b});
    ASSERT_LT(r.worst_rel_err, kTolerance) << "case " << i;
  }
}

TEST(StructuralGradient, ChannelOpsUpsampleReshapeGatherMatmul) {
  Rng rng(9);
  for (int i = 0; i < kCases; ++i) {
    Tensor a = random_tensor({2, 2, 2, 2}, rng, -1, 1);
    Tensor b = random_tensor({2, 1, 2, 2}, rng, -1, 1);
    Tensor table = random_tensor({3}, rng, -1, 1);
    Tensor m1 = random_tensor({2, 3}, rng, -1, 1);
    Tensor m2 = random_tensor({3, 2}, rng, -1, 1);
    const std::uint64_t wseed = rng.next();
    LossFn fn = [&](Tape& tape, const std::vector<Var>& v) {
      std::vector<Var> parts{v[0], v[1]};
      Var cat = concat_channels(parts);
      Var sliced = slice_channels(cat, 1, 3);
      Var up = upsample2x(sliced);
      Var flat = reshape(up, {2, 32});
      Var g = gather(v[2], {2, 0, 2});
      Var mm = matmul(v[3], v[4]);
      return weighted_sum(tape, flat, wseed) + weighted_sum(tape, g, wseed + 1) + weighted_sum(tape, mm, wseed + 2);
    };
    auto r = grad_check(fn, {a, b, table, m1, m2});
    ASSERT_LT(r.worst_rel_err, kTolerance) << "case " << i;
  }
}

}  // namespace
}  // namespace noisylab
