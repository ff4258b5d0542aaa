#pragma once

#include <memory>

#include "noisylab/data.h"
#include "noisylab/denoise.h"
#include "noisylab/noise_model.h"
#include "noisylab/train.h"

namespace noisylab::testing {

inline Dataset small_synthetic(int pairs, int size = 8, std::uint64_t seed = 1, int pairs_per_scene = 5) {
  SmoothCleanSource source(1, size, size);
  SynthOptions options;
  options.n_pairs = pairs;
  options.pairs_per_scene = pairs_per_scene;
  options.seed = seed;
  return synth_hgn_dataset(source, {1e-2, 1e-4}, options);
}

inline std::unique_ptr<NoiseModel> small_model(NoiseModelKind kind, const ConditionSpace& space, int channels = 1,
                                               std::uint64_t seed = 3) {
  NoiseModelSpec spec;
  spec.kind = kind;
  spec.channels = channels;
  spec.hidden = 4;
  Rng rng(seed);
  return make_noise_model(spec, space, rng);
}

inline std::unique_ptr<Denoiser> small_denoiser(int channels = 1, int width = 4, std::uint64_t seed = 4,
                                                DenoiserKind kind = DenoiserKind::kDnCnn) {
  Rng rng(seed);
  return make_denoiser({kind, channels, width}, rng);
}

inline void zero_weights(Denoiser& d) {
  for (auto* p : d.params().all()) p->value = Tensor(p->value.shape());
}

}  // namespace noisylab::testing
