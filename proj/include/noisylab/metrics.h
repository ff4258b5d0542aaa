#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noisylab/tensor.h"

NOISYLAB_NAMESPACE_BEGIN

struct HistogramSpec {
  int bins = 256;
  // Bins cover [-range, range] uniformly.
  double range = 0.2;
  // Added to every bin count before normalizing.
  double epsilon = 1e-9;

  bool operator==(const HistogramSpec&) const = default;
  std::vector<double> edges() const;
  // "bins=256;range=0.2;epsilon=1e-09"
  std::string describe() const;
};

/// Histogram of noise values. Values outside the range land in the end bins.
class NoiseHistogram {
 public:
  explicit NoiseHistogram(HistogramSpec spec = {});

  void add(double value);
  void add_mass(int bin, double mass);

  const HistogramSpec& spec() const { return spec_; }
  const std::vector<double>& counts() const { return counts_; }
  double total() const { return total_; }
  int bin_of(double value) const;
  // Smoothed probabilities (count + eps) / (total + bins * eps).
  std::vector<double> probabilities() const;

 private:
  HistogramSpec spec_;
  std::vector<double> counts_;
  double total_ = 0.0;
};

// Histogram of noisy - clean over every element.
NoiseHistogram noise_histogram(const Tensor& noisy, const Tensor& clean, const HistogramSpec& spec = {});
void accumulate_noise(NoiseHistogram& hist, const Tensor& noisy, const Tensor& clean);

/// Expected histogram of zero-mean Gaussian noise where element i has
/// standard deviation stddevs[i]; mass beyond the range goes to the end bins.
NoiseHistogram gaussian_histogram(std::span<const double> stddevs, const HistogramSpec& spec = {});

// KL(p || q) in nats over smoothed probabilities. Throws ShapeError when the
// binnings differ.
double kl_divergence(const NoiseHistogram& p, const NoiseHistogram& q);

inline constexpr double kPsnrCap = 100.0;

// 10 log10(peak^2 / MSE), capped at `cap` (also used when MSE is 0).
double psnr(const Tensor& estimate, const Tensor& clean, double peak = 1.0, double cap = kPsnrCap);

/// Mean SSIM over all window x window positions (stride 1, uniform weights)
/// of every 2-D plane of the trailing two dimensions. Throws ShapeError when
/// a plane is smaller than the window.
double ssim(const Tensor& estimate, const Tensor& clean, double peak = 1.0, int window = 8);

NOISYLAB_NAMESPACE_END
