#pragma once

#include "noisylab/rng.h"
#include "noisylab/tensor.h"

NOISYLAB_NAMESPACE_BEGIN

/// Orthogonal initialization of a weight tensor viewed as a matrix
/// [shape[0], numel / shape[0]]. Rows are orthonormal when shape[0] <= fan-in,
/// columns otherwise. Same generator state gives the same matrix bit for bit.
Tensor orthogonal_init(const Shape& shape, Rng& rng, double gain = 1.0);

NOISYLAB_NAMESPACE_END
