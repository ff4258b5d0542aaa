#include "noisylab/checkpoint.h"

#include <cmath>
#include <cstring>

#include "noisylab/binary_io.h"
#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

void Checkpoint::put(const std::string& name, const Tensor& value) {
  if (value.empty()) throw ShapeError("checkpoint entry '" + name + "' is empty");
  if (entries_.insert_or_assign(name, value).second) order_.push_back(name);
}

void Checkpoint::put_string(const std::string& name, const std::string& text) {
  std::vector<Real> bytes;
  bytes.reserve(text.size() + 1);
  // A leading marker keeps empty strings representable.
  bytes.push_back(Real(1));
  for (unsigned char c : text) bytes.push_back(static_cast<Real>(c));
  const auto count = static_cast<std::int64_t>(bytes.size());
  put(name, Tensor({count}, std::move(bytes)));
}

void Checkpoint::put_integer(const std::string& name, std::int64_t value) {
  const auto u = static_cast<std::uint64_t>(value);
  std::vector<Real> limbs(4);
  for (int i = 0; i < 4; ++i) limbs[static_cast<std::size_t>(i)] = static_cast<Real>((u >> (16 * i)) & 0xFFFFu);
  put(name, Tensor({4}, std::move(limbs)));
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw FormatError("checkpoint has no entry '" + name + "'");
  return it->second;
}

std::string Checkpoint::get_string(const std::string& name) const {
  const Tensor& t = get(name);
  std::string text;
  for (std::int64_t i = 1; i < t.numel(); ++i) text.push_back(static_cast<char>(static_cast<int>(t[i])));
  return text;
}

std::int64_t Checkpoint::get_integer(const std::string& name) const {
  const Tensor& t = get(name);
  if (t.numel() != 4) throw FormatError("checkpoint entry '" + name + "' is not an integer");
  std::uint64_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint64_t>(t[i]) << (16 * i);
  return static_cast<std::int64_t>(u);
}

std::string Checkpoint::serialize() const {
  ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    const Tensor& t = entries_.at(name);
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto extent : t.shape()) w.u32(static_cast<std::uint32_t>(extent));
    for (Real v : t.values()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.remaining() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic (expected \"NLAB\")");
  }
  r.raw(4);
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  Checkpoint ckpt;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw FormatError("checkpoint: bad rank for '" + name + "'");
    Shape shape(rank);
    for (auto& extent : shape) {
      extent = r.u32();
      if (extent == 0) throw FormatError("checkpoint: zero extent for '" + name + "'");
    }
    const auto n = static_cast<std::size_t>(shape_numel(shape));
    if (r.remaining() / 4 < n) throw FormatError("checkpoint: truncated payload for '" + name + "'");
    std::vector<Real> values(n);
    for (auto& v : values) v = static_cast<Real>(r.f32());
    ckpt.put(name, Tensor(std::move(shape), std::move(values)));
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after last entry");
  return ckpt;
}

void Checkpoint::save(const std::string& path) const { write_file_bytes(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) { return deserialize(read_file_bytes(path)); }

NOISYLAB_NAMESPACE_END
