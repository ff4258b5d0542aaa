#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "noisylab/tensor.h"

NOISYLAB_NAMESPACE_BEGIN

/// Named-tensor archive.
///
/// Layout: magic "NLAB", u32 version, u32 entry count, then per entry a
/// u32-length-prefixed UTF-8 name, u32 rank, u32 extents and the payload as
/// little-endian f32. Strings and integers are stored as small f32 tensors
/// (one byte or one 16-bit limb per element) so every entry shares the
/// tensor layout.
class Checkpoint {
 public:
  static constexpr char kMagic[4] = {'N', 'L', 'A', 'B'};
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, const Tensor& value);
  void put_string(const std::string& name, const std::string& text);
  void put_integer(const std::string& name, std::int64_t value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  std::string get_string(const std::string& name) const;
  std::int64_t get_integer(const std::string& name) const;

  // Names in insertion order.
  const std::vector<std::string>& names() const { return order_; }

  std::string serialize() const;
  static Checkpoint deserialize(const std::string& bytes);

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, Tensor> entries_;
  std::vector<std::string> order_;
};

NOISYLAB_NAMESPACE_END
