#include <algorithm>
#include <cmath>
#include <set>

#include "noisylab/data.h"
#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

bool is_allowed_iso(std::uint32_t iso) {
  return std::find(kAllowedIsos.begin(), kAllowedIsos.end(), iso) != kAllowedIsos.end();
}

void validate_meta(const SceneMeta& meta) {
  if (!is_allowed_iso(meta.iso)) {
    throw DataError("ISO " + std::to_string(meta.iso) + " is not one of 100, 400, 800, 1600, 3200");
  }
  if (meta.camera_id.empty()) throw DataError("empty camera id");
}

bool Dataset::has_clean() const {
  return !pairs.empty() && std::all_of(pairs.begin(), pairs.end(), [](const NoisyPair& p) { return p.clean.has_value(); });
}

void Dataset::validate() const {
  const Shape expected{header.channels, header.patch_h, header.patch_w};
  auto check_patch = [&](const Patch& p, std::size_t i, const char* role) {
    if (p.data.shape() != expected) {
      throw DataError("pair " + std::to_string(i) + " " + role + " has shape " + shape_str(p.data.shape()) +
                      ", header says " + shape_str(expected));
    }
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    validate_meta(pair.a.meta);
    check_patch(pair.a, i, "a");
    check_patch(pair.b, i, "b");
    if (!(pair.a.meta == pair.b.meta)) throw DataError("pair " + std::to_string(i) + " has mismatched meta");
    if (pair.clean) {
      check_patch(*pair.clean, i, "clean");
      if (!(pair.clean->meta == pair.a.meta)) {
        throw DataError("pair " + std::to_string(i) + " clean meta differs from its noisy patches");
      }
    }
  }
}

SplitResult split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in [0, 1]");
  }
  std::set<std::uint32_t> scene_set;
  for (const auto& p : data.pairs) scene_set.insert(p.a.meta.scene_id);
  if (scene_set.size() < 2) throw DataError("cannot split by scene: dataset has fewer than 2 scenes");

  std::vector<std::uint32_t> scenes(scene_set.begin(), scene_set.end());
  Rng rng(seed);
  std::shuffle(scenes.begin(), scenes.end(), rng.engine());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(scenes.size())));
  if (n_train == 0) throw DataError("split leaves the train set empty");
  if (n_train == scenes.size()) throw DataError("split leaves the test set empty");

  SplitResult result;
  result.train.header = data.header;
  result.test.header = data.header;
  result.train_scenes.assign(scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(n_train));
  result.test_scenes.assign(scenes.begin() + static_cast<std::ptrdiff_t>(n_train), scenes.end());
  std::sort(result.train_scenes.begin(), result.train_scenes.end());
  std::sort(result.test_scenes.begin(), result.test_scenes.end());
  const std::set<std::uint32_t> train_set(result.train_scenes.begin(), result.train_scenes.end());
  for (const auto& p : data.pairs) {
    (train_set.count(p.a.meta.scene_id) ? result.train : result.test).pairs.push_back(p);
  }
  return result;
}

void record_split(DatasetManifest& manifest, const SplitResult& result) {
  manifest.scene_split.clear();
  for (auto s : result.train_scenes) manifest.scene_split[s] = Split::kTrain;
  for (auto s : result.test_scenes) manifest.scene_split[s] = Split::kTest;
}

std::vector<NoisyPair> extract_pairs(std::span<const Capture> captures, int patch_size) {
  if (captures.size() < 2) throw DataError("extract_pairs needs at least 2 captures");
  if (patch_size <= 0) throw ConfigError("patch size must be positive");
  const Shape& shape = captures.front().image.shape();
  if (shape.size() != 3) throw DataError("captures must be [C, H, W] images");
  for (const auto& c : captures) {
    if (c.image.shape() != shape) {
      throw DataError("capture dimensions differ: " + shape_str(c.image.shape()) + " vs " + shape_str(shape));
    }
    if (!(c.meta == captures.front().meta)) throw DataError("captures of one scene must share meta");
  }
  validate_meta(captures.front().meta);
  const std::int64_t channels = shape[0];
  const std::int64_t rows = shape[1] / patch_size;
  const std::int64_t cols = shape[2] / patch_size;

  auto crop = [&](const Tensor& image, std::int64_t py, std::int64_t px) {
    Tensor out({channels, patch_size, patch_size});
    for (std::int64_t c = 0; c < channels; ++c) {
      for (std::int64_t y = 0; y < patch_size; ++y) {
        for (std::int64_t x = 0; x < patch_size; ++x) {
          out[(c * patch_size + y) * patch_size + x] =
              image[(c * shape[1] + py * patch_size + y) * shape[2] + px * patch_size + x];
        }
      }
    }
    return out;
  };

  std::vector<NoisyPair> pairs;
  for (std::size_t i = 0; i + 1 < captures.size(); i += 2) {
    for (std::int64_t py = 0; py < rows; ++py) {
      for (std::int64_t px = 0; px < cols; ++px) {
        NoisyPair pair;
        pair.a = {crop(captures[i].image, py, px), captures[i].meta};
        pair.b = {crop(captures[i + 1].image, py, px), captures[i + 1].meta};
        pairs.push_back(std::move(pair));
      }
    }
  }
  return pairs;
}

Tensor pack_bayer(std::span<const std::uint16_t> raw, int height, int width, float black_level, float white_level,
                  std::uint64_t* clamped) {
  if (height < 2 || width < 2 || height % 2 || width % 2) throw DataError("Bayer mosaic extents must be even");
  if (raw.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw DataError("Bayer mosaic size does not match its extents");
  }
  if (!(white_level > black_level)) throw DataError("white level must exceed black level");
  const int h = height / 2;
  const int w = width / 2;
  Tensor out({4, h, w});
  std::uint64_t n_clamped = 0;
  const double range = static_cast<double>(white_level) - black_level;
  static constexpr int kOffsets[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (int c = 0; c < 4; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto v = raw[static_cast<std::size_t>((2 * y + kOffsets[c][0]) * width + 2 * x + kOffsets[c][1])];
        double norm = (static_cast<double>(v) - black_level) / range;
        if (norm < 0.0 || norm > 1.0) {
          ++n_clamped;
          norm = std::clamp(norm, 0.0, 1.0);
        }
        out[(static_cast<std::int64_t>(c) * h + y) * w + x] = static_cast<Real>(norm);
      }
    }
  }
  if (clamped) *clamped = n_clamped;
  return out;
}

SmoothCleanSource::SmoothCleanSource(int channels, int height, int width, double ramp)
    : channels_(channels), height_(height), width_(width), ramp_(ramp) {
  if (!(ramp >= 0.0 && ramp <= 1.0)) throw ConfigError("ramp must lie in [0, 1]");
}

Tensor SmoothCleanSource::next(Rng& rng) {
  const double base = rng.uniform(0.05, 0.95);
  const double cy = 0.5 * (height_ - 1);
  const double cx = 0.5 * (width_ - 1);
  // Keep the ramp inside [0.02, 0.98].
  const double margin = ramp_ * std::max(0.0, std::min(base, 1.0 - base) - 0.02);
  const double reach = std::max(1.0, cy + cx);
  const double gy = rng.uniform(-1.0, 1.0) * margin / reach;
  const double gx = rng.uniform(-1.0, 1.0) * margin / reach;
  Tensor out({channels_, height_, width_});
  for (int c = 0; c < channels_; ++c) {
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) {
        out[(static_cast<std::int64_t>(c) * height_ + y) * width_ + x] =
            static_cast<Real>(base + gy * (y - cy) + gx * (x - cx));
      }
    }
  }
  return out;
}

Tensor ConstantCleanSource::next(Rng&) { return Tensor({channels_, height_, width_}, static_cast<Real>(value_)); }

DatasetCleanSource::DatasetCleanSource(const Dataset& data) {
  for (const auto& p : data.pairs) {
    if (p.clean) patches_.push_back(p.clean->data);
  }
  if (patches_.empty()) throw DataError("clean source dataset has no clean patches");
}

Tensor DatasetCleanSource::next(Rng&) {
  Tensor out = patches_[cursor_];
  cursor_ = (cursor_ + 1) % patches_.size();
  return out;
}

Dataset synth_hgn_dataset(CleanSource& source, const HgnParams& params, const SynthOptions& options) {
  if (!(params.beta2 > 0.0)) throw ConfigError("beta2 must be > 0");
  if (!(params.beta1 >= 0.0)) throw ConfigError("beta1 must be >= 0");
  if (options.n_pairs <= 0) throw ConfigError("number of pairs must be positive");
  if (options.pairs_per_scene <= 0) throw ConfigError("pairs per scene must be positive");

  Rng clean_rng(Rng::derive(options.seed, 1));
  Rng noise_rng(Rng::derive(options.seed, 2));
  Dataset data;
  data.pairs.reserve(static_cast<std::size_t>(options.n_pairs));
  for (int i = 0; i < options.n_pairs; ++i) {
    Tensor clean = source.next(clean_rng);
    if (clean.rank() != 3) throw DataError("clean source must produce [C, H, W] patches");
    if (i == 0) {
      data.header.channels = static_cast<std::uint8_t>(clean.dim(0));
      data.header.patch_h = static_cast<std::uint16_t>(clean.dim(1));
      data.header.patch_w = static_cast<std::uint16_t>(clean.dim(2));
    }
    for (Real v : clean.values()) {
      if (!(v >= 0 && v <= 1)) throw DataError("clean intensities must lie in [0, 1]");
    }
    SceneMeta meta{options.camera, options.iso, static_cast<std::uint32_t>(i / options.pairs_per_scene),
                   Illumination::kNormal};
    validate_meta(meta);
    auto noisy = [&] {
      Tensor out(clean.shape());
      for (std::int64_t k = 0; k < clean.numel(); ++k) {
        const double sigma = std::sqrt(params.beta1 * static_cast<double>(clean[k]) + params.beta2);
        out[k] = static_cast<Real>(static_cast<double>(clean[k]) + sigma * noise_rng.normal());
      }
      return out;
    };
    NoisyPair pair;
    pair.a = {noisy(), meta};
    pair.b = {noisy(), meta};
    pair.clean = Patch{std::move(clean), meta};
    data.pairs.push_back(std::move(pair));
  }
  return data;
}

NOISYLAB_NAMESPACE_END
