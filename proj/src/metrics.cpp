#include "noisylab/metrics.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

std::vector<double> HistogramSpec::edges() const {
  std::vector<double> out(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) out[static_cast<std::size_t>(i)] = -range + 2.0 * range * i / bins;
  return out;
}

std::string HistogramSpec::describe() const {
  std::ostringstream os;
  os << "bins=" << bins << ";range=" << range << ";epsilon=" << epsilon;
  return os.str();
}

NoiseHistogram::NoiseHistogram(HistogramSpec spec) : spec_(spec) {
  if (spec_.bins < 1 || !(spec_.range > 0) || !(spec_.epsilon >= 0)) {
    throw ConfigError("histogram needs bins >= 1, range > 0 and epsilon >= 0");
  }
  counts_.assign(static_cast<std::size_t>(spec_.bins), 0.0);
}

int NoiseHistogram::bin_of(double value) const {
  const double pos = (value + spec_.range) / (2.0 * spec_.range) * spec_.bins;
  if (!(pos >= 0)) return 0;  // also NaN
  return std::min(static_cast<int>(pos), spec_.bins - 1);
}

void NoiseHistogram::add(double value) { add_mass(bin_of(value), 1.0); }

void NoiseHistogram::add_mass(int bin, double mass) {
  if (bin < 0 || bin >= spec_.bins || !(mass >= 0)) throw DomainError("bad histogram bin or mass");
  counts_[static_cast<std::size_t>(bin)] += mass;
  total_ += mass;
}

std::vector<double> NoiseHistogram::probabilities() const {
  const double denom = total_ + spec_.bins * spec_.epsilon;
  if (!(denom > 0)) throw DomainError("empty histogram with zero smoothing");
  std::vector<double> p(counts_.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (counts_[i] + spec_.epsilon) / denom;
  return p;
}

void accumulate_noise(NoiseHistogram& hist, const Tensor& noisy, const Tensor& clean) {
  check_same_shape(noisy, clean, "noise histogram");
  for (std::int64_t i = 0; i < noisy.numel(); ++i) {
    hist.add(static_cast<double>(noisy[i]) - static_cast<double>(clean[i]));
  }
}

NoiseHistogram noise_histogram(const Tensor& noisy, const Tensor& clean, const HistogramSpec& spec) {
  NoiseHistogram hist(spec);
  accumulate_noise(hist, noisy, clean);
  return hist;
}

NoiseHistogram gaussian_histogram(std::span<const double> stddevs, const HistogramSpec& spec) {
  NoiseHistogram hist(spec);
  const auto edges = spec.edges();
  std::vector<double> mass(static_cast<std::size_t>(spec.bins), 0.0);
  for (double sigma : stddevs) {
    if (!(sigma > 0)) throw DomainError("gaussian histogram needs positive standard deviations");
    double prev = 0.0;  // CDF at -inf
    for (int b = 0; b < spec.bins; ++b) {
      const double upper = b == spec.bins - 1 ? 1.0 : normal_cdf(edges[static_cast<std::size_t>(b) + 1] / sigma);
      mass[static_cast<std::size_t>(b)] += upper - prev;
      prev = upper;
    }
  }
  for (int b = 0; b < spec.bins; ++b) hist.add_mass(b, mass[static_cast<std::size_t>(b)]);
  return hist;
}

double kl_divergence(const NoiseHistogram& p, const NoiseHistogram& q) {
  if (!(p.spec() == q.spec())) {
    throw ShapeError("KL needs identical binning: " + p.spec().describe() + " vs " + q.spec().describe());
  }
  const auto pp = p.probabilities();
  const auto qq = q.probabilities();
  double kl = 0.0;
  for (std::size_t i = 0; i < pp.size(); ++i) {
    if (pp[i] > 0) kl += pp[i] * std::log(pp[i] / qq[i]);
  }
  return std::max(kl, 0.0);
}

double psnr(const Tensor& estimate, const Tensor& clean, double peak, double cap) {
  check_same_shape(estimate, clean, "psnr");
  if (estimate.empty()) throw ShapeError("psnr of an empty tensor");
  double se = 0.0;
  for (std::int64_t i = 0; i < estimate.numel(); ++i) {
    const double d = static_cast<double>(estimate[i]) - static_cast<double>(clean[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(estimate.numel());
  if (mse <= 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const Tensor& estimate, const Tensor& clean, double peak, int window) {
  check_same_shape(estimate, clean, "ssim");
  if (estimate.rank() < 2) throw ShapeError("ssim needs at least 2-D input");
  const std::int64_t h = estimate.dim(-2), w = estimate.dim(-1);
  if (window < 1 || h < window || w < window) {
    throw ShapeError("ssim window " + std::to_string(window) + " larger than plane " + shape_str(estimate.shape()));
  }
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const std::int64_t planes = estimate.numel() / (h * w);
  const double n = static_cast<double>(window) * window;

  // Summed-area tables of x, y, x^2, y^2, xy.
  const std::int64_t sw = w + 1;
  std::vector<double> sx((h + 1) * sw), sy(sx.size()), sxx(sx.size()), syy(sx.size()), sxy(sx.size());
  double total = 0.0;
  std::int64_t count = 0;
  for (std::int64_t p = 0; p < planes; ++p) {
    const std::int64_t base = p * h * w;
    for (std::int64_t r = 0; r < h; ++r) {
      for (std::int64_t c = 0; c < w; ++c) {
        const double x = estimate[base + r * w + c];
        const double y = clean[base + r * w + c];
        const std::int64_t k = (r + 1) * sw + c + 1;
        const std::int64_t up = r * sw + c + 1, left = (r + 1) * sw + c, diag = r * sw + c;
        sx[k] = x + sx[up] + sx[left] - sx[diag];
        sy[k] = y + sy[up] + sy[left] - sy[diag];
        sxx[k] = x * x + sxx[up] + sxx[left] - sxx[diag];
        syy[k] = y * y + syy[up] + syy[left] - syy[diag];
        sxy[k] = x * y + sxy[up] + sxy[left] - sxy[diag];
      }
    }
    auto box = [&](const std::vector<double>& s, std::int64_t r, std::int64_t c) {
      const std::int64_t r1 = r + window, c1w = c + window;
      return s[r1 * sw + c1w] - s[r * sw + c1w] - s[r1 * sw + c] + s[r * sw + c];
    };
    for (std::int64_t r = 0; r + window <= h; ++r) {
      for (std::int64_t c = 0; c + window <= w; ++c) {
        const double mx = box(sx, r, c) / n, my = box(sy, r, c) / n;
        const double vx = box(sxx, r, c) / n - mx * mx;
        const double vy = box(syy, r, c) / n - my * my;
        const double cov = box(sxy, r, c) / n - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

NOISYLAB_NAMESPACE_END
