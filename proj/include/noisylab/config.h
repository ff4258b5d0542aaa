#pragma once

// Scalar type selection. The library is normally built with 32-bit floats;
// a double-precision twin (NOISYLAB_REAL_DOUBLE) is built for numerical
// oracles. Each variant lives in its own inline namespace so both can be
// linked into one binary.

#if defined(NOISYLAB_REAL_DOUBLE)
#define NOISYLAB_ABI_NAMESPACE f64
#else
#define NOISYLAB_ABI_NAMESPACE f32
#endif

#define NOISYLAB_NAMESPACE_BEGIN \
  namespace noisylab {           \
  inline namespace NOISYLAB_ABI_NAMESPACE {
#define NOISYLAB_NAMESPACE_END \
  }                            \
  }

NOISYLAB_NAMESPACE_BEGIN

#if defined(NOISYLAB_REAL_DOUBLE)
using Real = double;
#else
using Real = float;
#endif

NOISYLAB_NAMESPACE_END
