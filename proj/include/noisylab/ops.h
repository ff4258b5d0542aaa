#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "noisylab/autodiff.h"

NOISYLAB_NAMESPACE_BEGIN

// Elementwise binary ops broadcast NumPy-style (right-aligned extents, size-1
// dimensions stretch).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

Var neg(const Var& x);
inline Var operator-(const Var& x) { return neg(x); }
Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double offset);

Var exp(const Var& x);
// Throws DomainError unless every element is > 0.
Var log(const Var& x);
// Throws DomainError on negative elements.
Var sqrt(const Var& x);
Var tanh(const Var& x);
Var relu(const Var& x);
Var square(const Var& x);
// Gradient passes only where lo <= x <= hi.
Var clamp(const Var& x, double lo, double hi);

// Reductions accumulate in double.
Var sum(const Var& x);
Var mean(const Var& x);
// [N, ...] -> [N]
Var sum_per_sample(const Var& x);

Var reshape(const Var& x, Shape shape);

struct Conv2dOptions {
  int stride = 1;
  // Zero padding on every border; -1 selects "same" padding (kernel / 2).
  int padding = -1;
};

// x: [N, C, H, W], weight: [O, C, kh, kw], bias: [O] or an invalid Var.
Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions options = {});

// Nearest-neighbour 2x spatial upsampling of [N, C, H, W].
Var upsample2x(const Var& x);

Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& x, std::int64_t begin, std::int64_t end);

// table: [K]; returns [indices.size()] with out[i] = table[indices[i]].
Var gather(const Var& table, const std::vector<int>& indices);

// [m, k] x [k, n] -> [m, n]
Var matmul(const Var& a, const Var& b);

NOISYLAB_NAMESPACE_END
