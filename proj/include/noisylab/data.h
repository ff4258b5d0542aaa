#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noisylab/rng.h"
#include "noisylab/tensor.h"

NOISYLAB_NAMESPACE_BEGIN

enum class Illumination : std::uint8_t { kNormal = 0, kLow = 1 };

inline constexpr std::array<std::uint32_t, 5> kAllowedIsos{100, 400, 800, 1600, 3200};

bool is_allowed_iso(std::uint32_t iso);

struct SceneMeta {
  std::string camera_id;
  std::uint32_t iso = 100;
  std::uint32_t scene_id = 0;
  Illumination illumination = Illumination::kNormal;

  bool operator==(const SceneMeta&) const = default;
};

// Throws DataError when the ISO is outside the allowed set or the camera id
// is empty.
void validate_meta(const SceneMeta& meta);

// One [C, H, W] patch of normalized raw intensities.
struct Patch {
  Tensor data;
  SceneMeta meta;
};

// Two independent noisy observations of one latent clean signal.
struct NoisyPair {
  Patch a;
  Patch b;
  std::optional<Patch> clean;
};

struct DatasetHeader {
  std::uint8_t channels = 1;
  std::uint16_t patch_h = 32;
  std::uint16_t patch_w = 32;
  float black_level = 0.0f;
  float white_level = 1.0f;
};

struct Dataset {
  DatasetHeader header;
  std::vector<NoisyPair> pairs;
  // Count of raw samples clamped into [0, 1] during ingestion.
  std::uint64_t clamped_values = 0;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  bool has_clean() const;
  std::int64_t dims_per_patch() const {
    return static_cast<std::int64_t>(header.channels) * header.patch_h * header.patch_w;
  }
  // Checks shapes against the header, meta consistency inside each pair and
  // the allowed ISO set. Throws DataError.
  void validate() const;
};

enum class Split : std::uint8_t { kTrain, kTest };

struct DatasetManifest {
  std::uint32_t version = 1;
  // Byte offset of each record in the file it was read from.
  std::vector<std::uint64_t> offsets;
  std::map<std::uint32_t, Split> scene_split;
};

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<std::uint32_t> train_scenes;
  std::vector<std::uint32_t> test_scenes;
};

/// Scene-level split: every scene lands wholly in train or in test. Scenes
/// are shuffled with `seed` and the first round(fraction * scenes) go to
/// train. Throws DataError for a single-scene dataset or an empty side.
SplitResult split(const Dataset& data, double train_fraction, std::uint64_t seed);

void record_split(DatasetManifest& manifest, const SplitResult& result);

// ---- Capture ingestion ------------------------------------------------------

// A full-frame co-registered noisy capture, already normalized, [C, H, W].
struct Capture {
  Tensor image;
  SceneMeta meta;
};

/// Pairs consecutive captures (1,2), (3,4), ... (an odd trailing capture is
/// dropped) and tiles each pair on a non-overlapping patch grid; border
/// remainders are dropped.
std::vector<NoisyPair> extract_pairs(std::span<const Capture> captures, int patch_size = 32);

/// Packs an RGGB Bayer mosaic into [4, H/2, W/2] planes (R, G1, G2, B)
/// normalized by (v - black) / (white - black) and clamped into [0, 1].
/// `clamped` receives the number of clamped samples.
Tensor pack_bayer(std::span<const std::uint16_t> raw, int height, int width, float black_level,
                  float white_level, std::uint64_t* clamped = nullptr);

// ---- Synthetic heteroscedastic Gaussian data -----------------------------

class CleanSource {
 public:
  virtual ~CleanSource() = default;
  // Next clean [C, H, W] patch with values in [0, 1].
  virtual Tensor next(Rng& rng) = 0;
};

// Planar intensity ramps around a uniformly drawn base level. `ramp` in
// [0, 1] scales the largest slope that keeps the patch inside [0.02, 0.98];
// 0 gives flat patches.
class SmoothCleanSource : public CleanSource {
 public:
  SmoothCleanSource(int channels, int height, int width, double ramp = 1.0);
  Tensor next(Rng& rng) override;

 private:
  int channels_, height_, width_;
  double ramp_;
};

class ConstantCleanSource : public CleanSource {
 public:
  ConstantCleanSource(int channels, int height, int width, double value)
      : channels_(channels), height_(height), width_(width), value_(value) {}
  Tensor next(Rng&) override;

 private:
  int channels_, height_, width_;
  double value_;
};

// Cycles through the clean patches of an existing dataset.
class DatasetCleanSource : public CleanSource {
 public:
  explicit DatasetCleanSource(const Dataset& data);
  Tensor next(Rng&) override;

 private:
  std::vector<Tensor> patches_;
  std::size_t cursor_ = 0;
};

struct HgnParams {
  double beta1 = 1e-2;
  double beta2 = 1e-4;
};

struct SynthOptions {
  std::string camera = "SYN";
  std::uint32_t iso = 800;
  int n_pairs = 1000;
  int pairs_per_scene = 50;
  std::uint64_t seed = 0;
};

/// Draws pairs noisy = clean + N with N ~ Normal(0, beta1 * clean + beta2)
/// independently per pixel and per observation. Noisy values are not
/// clipped. The clean patch is retained in every pair.
Dataset synth_hgn_dataset(CleanSource& source, const HgnParams& params, const SynthOptions& options);

// ---- NPDS file format ----------------------------------------------------

struct LoadedDataset {
  DatasetManifest manifest;
  Dataset data;
};

std::string serialize_dataset(const Dataset& data);
LoadedDataset parse_dataset(const std::string& bytes);

void write_dataset(const std::string& path, const Dataset& data);
LoadedDataset read_dataset(const std::string& path);

NOISYLAB_NAMESPACE_END
