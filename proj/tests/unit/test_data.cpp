#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "noisylab/binary_io.h"
#include "noisylab/data.h"
#include "noisylab/errors.h"

namespace noisylab {
namespace {

std::vector<Capture> captures(int n, int h, int w, int channels = 4) {
  std::vector<Capture> out;
  for (int i = 0; i < n; ++i) {
    Tensor image({channels, h, w});
    for (std::int64_t k = 0; k < image.numel(); ++k) image[k] = static_cast<Real>(i * 1000 + k);
    out.push_back({image, {"IP", 800, 3, Illumination::kNormal}});
  }
  return out;
}

Dataset scenes_dataset(int n_scenes, int per_scene) {
  Dataset data;
  data.header = {1, 2, 2, 0.0f, 1.0f};
  for (int s = 0; s < n_scenes; ++s) {
    for (int k = 0; k < per_scene; ++k) {
      SceneMeta meta{"S6", 100, static_cast<std::uint32_t>(s), Illumination::kLow};
      data.pairs.push_back({{Tensor({1, 2, 2}, 0.1f), meta}, {Tensor({1, 2, 2}, 0.2f), meta}, std::nullopt});
    }
  }
  return data;
}

TEST(ExtractPairs, FourCapturesOf64) {
  auto caps = captures(4, 64, 64);
  auto pairs = extract_pairs(caps);
  ASSERT_EQ(pairs.size(), 8u);
  EXPECT_EQ(pairs[0].a.data.shape(), (Shape{4, 32, 32}));
  // Patch (0, 1) of pair 0 starts at column 32 of capture 0.
  EXPECT_EQ(pairs[1].a.data[0], static_cast<Real>(32));
  EXPECT_EQ(pairs[4].a.data[0], static_cast<Real>(2000));
  EXPECT_EQ(pairs[4].b.data[0], static_cast<Real>(3000));
}

TEST(ExtractPairs, OddCaptureDropped) {
  auto caps = captures(3, 32, 32);
  EXPECT_EQ(extract_pairs(caps).size(), 1u);
}

TEST(ExtractPairs, HundredFiftyCaptures) {
  auto caps = captures(150, 32, 32, 1);
  auto pairs = extract_pairs(caps);
  ASSERT_EQ(pairs.size(), 75u);
  // No capture is used twice.
  std::set<Real> firsts;
  for (const auto& p : pairs) {
    firsts.insert(p.a.data[0]);
    firsts.insert(p.b.data[0]);
  }
  EXPECT_EQ(firsts.size(), 150u);
}

TEST(ExtractPairs, RemainderDropped) {
  auto caps = captures(2, 70, 40, 1);
  EXPECT_EQ(extract_pairs(caps).size(), 2u);
}

TEST(ExtractPairs, MismatchedDimensions) {
  auto caps = captures(2, 32, 32);
  caps[1].image = Tensor({4, 64, 32});
  EXPECT_THROW(extract_pairs(caps), DataError);
}

TEST(PackBayer, PlanesAndClamp) {
  std::vector<std::uint16_t> raw{64, 200, 300, 1100};  // R G1 / G2 B
  std::uint64_t clamped = 0;
  auto t = pack_bayer(raw, 2, 2, 64.0f, 1023.0f, &clamped);
  ASSERT_EQ(t.shape(), (Shape{4, 1, 1}));
  EXPECT_FLOAT_EQ(t[0], 0.0f);
  EXPECT_NEAR(t[1], (200.0 - 64) / 959.0, 1e-6);
  EXPECT_NEAR(t[2], (300.0 - 64) / 959.0, 1e-6);
  EXPECT_FLOAT_EQ(t[3], 1.0f);
  EXPECT_EQ(clamped, 1u);
}

TEST(Split, TenEqualScenes) {
  auto data = scenes_dataset(10, 4);
  auto result = split(data, 0.7, 11);
  EXPECT_EQ(result.train_scenes.size(), 7u);
  EXPECT_EQ(result.test_scenes.size(), 3u);
  EXPECT_EQ(result.train.size(), 28u);
  EXPECT_EQ(result.test.size(), 12u);
  std::set<std::uint32_t> train(result.train_scenes.begin(), result.train_scenes.end());
  for (const auto& p : result.test.pairs) EXPECT_EQ(train.count(p.a.meta.scene_id), 0u);
}

TEST(Split, SeedReproducible) {
  auto data = scenes_dataset(20, 3);
  auto a = split(data, 0.7, 5);
  auto b = split(data, 0.7, 5);
  EXPECT_EQ(a.train_scenes, b.train_scenes);
  bool differs = false;
  for (std::uint64_t seed = 6; seed < 16 && !differs; ++seed) {
    differs = split(data, 0.7, seed).train_scenes != a.train_scenes;
  }
  EXPECT_TRUE(differs);
}

TEST(Split, Errors) {
  EXPECT_THROW(split(scenes_dataset(1, 5), 0.7, 0), DataError);
  EXPECT_THROW(split(scenes_dataset(10, 1), 0.0, 0), DataError);
  EXPECT_THROW(split(scenes_dataset(10, 1), 1.5, 0), ConfigError);
}

TEST(Split, RecordedInManifest) {
  auto result = split(scenes_dataset(4, 1), 0.5, 2);
  DatasetManifest manifest;
  record_split(manifest, result);
  EXPECT_EQ(manifest.scene_split.size(), 4u);
  for (auto s : result.test_scenes) EXPECT_EQ(manifest.scene_split[s], Split::kTest);
}

struct NoiseStats {
  double mean = 0, var = 0, corr = 0;
  std::int64_t n = 0;
};

NoiseStats noise_stats(const Dataset& data) {
  std::vector<double> na, nb;
  for (const auto& p : data.pairs) {
    for (std::int64_t k = 0; k < p.a.data.numel(); ++k) {
      na.push_back(double(p.a.data[k]) - double(p.clean->data[k]));
      nb.push_back(double(p.b.data[k]) - double(p.clean->data[k]));
    }
  }
  NoiseStats s;
  s.n = static_cast<std::int64_t>(na.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < na.size(); ++i) ma += na[i], mb += nb[i];
  ma /= s.n;
  mb /= s.n;
  double va = 0, vb = 0, cov = 0;
  for (std::size_t i = 0; i < na.size(); ++i) {
    va += (na[i] - ma) * (na[i] - ma);
    vb += (nb[i] - mb) * (nb[i] - mb);
    cov += (na[i] - ma) * (nb[i] - mb);
  }
  s.mean = ma;
  s.var = va / (s.n - 1);
  s.corr = cov / std::sqrt(va * vb);
  return s;
}

TEST(Synth, ConstantVarianceMatchesBeta2) {
  ConstantCleanSource source(1, 10, 10, 0.5);
  auto data = synth_hgn_dataset(source, {0.0, 1e-4}, {.n_pairs = 1000, .seed = 3});
  ASSERT_TRUE(data.has_clean());
  auto s = noise_stats(data);
  EXPECT_EQ(s.n, 100000);
  EXPECT_NEAR(s.var, 1e-4, 3e-6);
  EXPECT_LT(std::abs(s.corr), 0.01);
  EXPECT_LT(std::abs(s.mean), 3.0 * std::sqrt(1e-4 / s.n));
}

TEST(Synth, VarianceRatioFollowsIntensity) {
  const HgnParams params{1e-2, 1e-4};
  ConstantCleanSource bright(1, 10, 10, 1.0), dark(1, 10, 10, 0.0);
  auto vb = noise_stats(synth_hgn_dataset(bright, params, {.n_pairs = 500, .seed = 1})).var;
  auto vd = noise_stats(synth_hgn_dataset(dark, params, {.n_pairs = 500, .seed = 2})).var;
  EXPECT_NEAR(vb / vd, (1e-2 + 1e-4) / 1e-4, 0.05 * 101);
}

TEST(Synth, NoClipping) {
  ConstantCleanSource source(1, 8, 8, 0.0);
  auto data = synth_hgn_dataset(source, {0.0, 1e-2}, {.n_pairs = 10, .seed = 1});
  bool negative = false;
  for (const auto& p : data.pairs) {
    for (Real v : p.a.data.values()) negative |= v < 0;
  }
  EXPECT_TRUE(negative);
}

TEST(Synth, ScenesAndErrors) {
  SmoothCleanSource source(1, 8, 8);
  auto data = synth_hgn_dataset(source, {}, {.n_pairs = 120, .pairs_per_scene = 50});
  EXPECT_EQ(data.pairs.back().a.meta.scene_id, 2u);
  for (const auto& p : data.pairs) {
    for (Real v : p.clean->data.values()) {
      EXPECT_GE(v, 0);
      EXPECT_LE(v, 1);
    }
  }
  EXPECT_THROW(synth_hgn_dataset(source, {1e-2, 0.0}, {}), ConfigError);
  EXPECT_THROW(synth_hgn_dataset(source, {}, {.iso = 123}), DataError);
  EXPECT_THROW(synth_hgn_dataset(source, {}, {.n_pairs = 0}), ConfigError);
}

TEST(Synth, SeedReproducible) {
  SmoothCleanSource s1(1, 4, 4), s2(1, 4, 4);
  auto a = synth_hgn_dataset(s1, {}, {.n_pairs = 5, .seed = 9});
  auto b = synth_hgn_dataset(s2, {}, {.n_pairs = 5, .seed = 9});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.pairs[i].b.data.vec(), b.pairs[i].b.data.vec());
}

TEST(Npds, RoundTripHundredPairs) {
  SmoothCleanSource source(1, 4, 4);
  auto data = synth_hgn_dataset(source, {}, {.camera = "GP", .iso = 1600, .n_pairs = 100, .pairs_per_scene = 7});
  data.pairs[3].clean.reset();
  data.pairs[5].a.meta.illumination = data.pairs[5].b.meta.illumination = Illumination::kLow;
  data.pairs[5].clean->meta.illumination = Illumination::kLow;
  data.header.black_level = 64;
  data.header.white_level = 1023;
  const auto path = (std::filesystem::temp_directory_path() / "noisylab_rt.npds").string();
  write_dataset(path, data);
  auto loaded = read_dataset(path);
  std::filesystem::remove(path);
  ASSERT_EQ(loaded.data.size(), 100u);
  EXPECT_EQ(loaded.manifest.offsets.size(), 100u);
  EXPECT_EQ(loaded.data.header.white_level, 1023.0f);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data.pairs[i];
    const auto& y = loaded.data.pairs[i];
    EXPECT_EQ(x.a.meta, y.a.meta);
    EXPECT_EQ(x.a.data.vec(), y.a.data.vec());
    EXPECT_EQ(x.b.data.vec(), y.b.data.vec());
    ASSERT_EQ(x.clean.has_value(), y.clean.has_value());
    if (x.clean) EXPECT_EQ(x.clean->data.vec(), y.clean->data.vec());
  }
}

TEST(Npds, HeaderLayout) {
  auto data = scenes_dataset(1, 1);
  auto bytes = serialize_dataset(data);
  ByteReader r(bytes, "t");
  EXPECT_EQ(r.raw(4), "NPDS");
  EXPECT_EQ(r.u32(), 1u);
  EXPECT_EQ(r.u8(), 1u);
  EXPECT_EQ(r.u16(), 2u);
  EXPECT_EQ(r.u16(), 2u);
  r.f32();
  r.f32();
  EXPECT_EQ(r.u64(), 1u);
  EXPECT_EQ(r.str(), "S6");
  EXPECT_EQ(r.u32(), 100u);
  EXPECT_EQ(r.u32(), 0u);
  EXPECT_EQ(r.u8(), 1u);
  EXPECT_EQ(r.u8(), 0u);
  EXPECT_EQ(r.remaining(), 2u * 4 * 4);
}

TEST(Npds, CorruptMagic) {
  auto bytes = serialize_dataset(scenes_dataset(2, 2));
  bytes[0] = 'X';
  try {
    parse_dataset(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
}

TEST(Npds, TruncatedPayload) {
  auto bytes = serialize_dataset(scenes_dataset(2, 2));
  bytes.resize(bytes.size() - 3);
  try {
    parse_dataset(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(Npds, VersionMismatch) {
  auto bytes = serialize_dataset(scenes_dataset(2, 2));
  bytes[4] = 9;
  EXPECT_THROW(parse_dataset(bytes), FormatError);
}

}  // namespace
}  // namespace noisylab
