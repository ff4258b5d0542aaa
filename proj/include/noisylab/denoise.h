#pragma once

#include <memory>
#include <string>
#include <vector>

#include "noisylab/module.h"
#include "noisylab/rng.h"

NOISYLAB_NAMESPACE_BEGIN

class Checkpoint;

enum class DenoiserKind { kDnCnn, kUNet };

std::string to_string(DenoiserKind kind);
DenoiserKind parse_denoiser_kind(const std::string& text);

struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::kDnCnn;
  int channels = 4;
  int width = 64;

  std::string describe() const;
  static DenoiserSpec parse(const std::string& text);
};

/// Residual denoiser: output = input - predicted_noise(input). Convolutions
/// are 3x3 with zero "same" padding, orthogonal weights and zero biases at
/// construction.
class Denoiser {
 public:
  explicit Denoiser(DenoiserSpec spec) : spec_(spec) {}
  virtual ~Denoiser() = default;
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;

  // x: [N, C, H, W] -> clean estimate of the same shape.
  Var forward(Tape& tape, const Var& x) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const DenoiserSpec& spec() const { return spec_; }

  std::string descriptor() const { return spec_.describe(); }
  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt);

 protected:
  virtual Var predict_noise(Tape& tape, const Var& x) const = 0;
  virtual void check_extent(const Shape& shape) const;

  struct Conv {
    Parameter* weight;
    Parameter* bias;
  };
  Conv add_conv(const std::string& name, int out, int in, Rng& rng, int kernel = 3);
  static Var apply(Tape& tape, const Conv& conv, const Var& x, int stride = 1);

  DenoiserSpec spec_;
  ParameterStore params_{"denoiser/"};
};

// conv+relu, 7 x (conv+relu), conv.
class DnCnn9 : public Denoiser {
 public:
  static constexpr int kLayers = 9;
  DnCnn9(DenoiserSpec spec, Rng& rng);

 protected:
  Var predict_noise(Tape& tape, const Var& x) const override;

 private:
  std::vector<Conv> convs_;
};

/// Two stride-2 downsampling stages, a bottleneck and two nearest-neighbour
/// upsampling stages with skip concatenation. H and W must be multiples of 4.
class UNetSmall : public Denoiser {
 public:
  UNetSmall(DenoiserSpec spec, Rng& rng);

 protected:
  Var predict_noise(Tape& tape, const Var& x) const override;
  void check_extent(const Shape& shape) const override;

 private:
  Conv enc0a_, enc0b_, down1_, enc1_, down2_, mid_, up1a_, up1b_, up2a_, up2b_, out_;
};

std::unique_ptr<Denoiser> make_denoiser(const DenoiserSpec& spec, Rng& rng);
// Rebuilds from "denoiser/__arch__" and loads the weights.
std::unique_ptr<Denoiser> load_denoiser(const Checkpoint& ckpt);

// Gradient-free batch denoising.
Tensor denoise(const Denoiser& model, const Tensor& noisy);

NOISYLAB_NAMESPACE_END
