#include <cstring>

#include "noisylab/binary_io.h"
#include "noisylab/data.h"
#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

constexpr char kMagic[4] = {'N', 'P', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kFlagClean = 0x1;

void write_tensor(ByteWriter& w, const Tensor& t) {
  for (Real v : t.values()) w.f32(static_cast<float>(v));
}

Tensor read_tensor(ByteReader& r, const Shape& shape) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  if (r.remaining() / 4 < n) {
    throw FormatError("dataset: truncated tensor payload at byte " + std::to_string(r.offset()));
  }
  std::vector<Real> values(n);
  for (auto& v : values) v = static_cast<Real>(r.f32());
  return Tensor(shape, std::move(values));
}

}  // namespace

std::string serialize_dataset(const Dataset& data) {
  data.validate();
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u8(data.header.channels);
  w.u16(data.header.patch_h);
  w.u16(data.header.patch_w);
  w.f32(data.header.black_level);
  w.f32(data.header.white_level);
  w.u64(data.pairs.size());
  for (const auto& pair : data.pairs) {
    const auto& meta = pair.a.meta;
    w.str(meta.camera_id);
    w.u32(meta.iso);
    w.u32(meta.scene_id);
    w.u8(static_cast<std::uint8_t>(meta.illumination));
    w.u8(pair.clean ? kFlagClean : 0);
    write_tensor(w, pair.a.data);
    write_tensor(w, pair.b.data);
    if (pair.clean) write_tensor(w, pair.clean->data);
  }
  return w.take();
}

LoadedDataset parse_dataset(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("dataset: bad magic (expected \"NPDS\")");
  }
  ByteReader r(bytes, "dataset");
  r.raw(4);
  LoadedDataset out;
  out.manifest.version = r.u32();
  if (out.manifest.version != kVersion) {
    throw FormatError("dataset: unsupported version " + std::to_string(out.manifest.version));
  }
  auto& header = out.data.header;
  header.channels = r.u8();
  header.patch_h = r.u16();
  header.patch_w = r.u16();
  header.black_level = r.f32();
  header.white_level = r.f32();
  if (header.channels == 0 || header.patch_h == 0 || header.patch_w == 0) {
    throw FormatError("dataset: zero extent in header");
  }
  const std::uint64_t count = r.u64();
  const Shape shape{header.channels, header.patch_h, header.patch_w};
  out.manifest.offsets.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    out.manifest.offsets.push_back(r.offset());
    SceneMeta meta;
    meta.camera_id = r.str();
    meta.iso = r.u32();
    meta.scene_id = r.u32();
    const std::uint8_t illum = r.u8();
    if (illum > 1) throw FormatError("dataset: bad illumination tag in record " + std::to_string(i));
    meta.illumination = static_cast<Illumination>(illum);
    const std::uint8_t flags = r.u8();
    NoisyPair pair;
    pair.a = {read_tensor(r, shape), meta};
    pair.b = {read_tensor(r, shape), meta};
    if (flags & kFlagClean) pair.clean = Patch{read_tensor(r, shape), meta};
    out.data.pairs.push_back(std::move(pair));
  }
  if (!r.at_end()) throw FormatError("dataset: trailing bytes after last record");
  try {
    out.data.validate();
  } catch (const DataError& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return out;
}

void write_dataset(const std::string& path, const Dataset& data) { write_file_bytes(path, serialize_dataset(data)); }

LoadedDataset read_dataset(const std::string& path) { return parse_dataset(read_file_bytes(path)); }

NOISYLAB_NAMESPACE_END
