#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noisylab/data.h"

NOISYLAB_NAMESPACE_BEGIN

// Per-sample indices into the camera and ISO embedding tables.
struct Conditioning {
  std::vector<int> camera;
  std::vector<int> iso;
  // camera * iso_count + iso
  std::vector<int> joint;
  std::size_t size() const { return camera.size(); }
};

/// The discrete camera and ISO keys a model was built for. Unseen keys are
/// rejected with ConditionError.
class ConditionSpace {
 public:
  ConditionSpace() = default;
  ConditionSpace(std::vector<std::string> cameras, std::vector<std::uint32_t> isos);

  static ConditionSpace from_dataset(const Dataset& data);

  const std::vector<std::string>& cameras() const { return cameras_; }
  const std::vector<std::uint32_t>& isos() const { return isos_; }
  int camera_count() const { return static_cast<int>(cameras_.size()); }
  int iso_count() const { return static_cast<int>(isos_.size()); }
  int joint_count() const { return camera_count() * iso_count(); }

  int camera_index(const std::string& camera) const;
  int iso_index(std::uint32_t iso) const;
  Conditioning encode(std::span<const SceneMeta> metas) const;

  // "cameras=IP,GP;isos=100,800"
  std::string describe() const;
  static ConditionSpace parse(const std::string& text);

 private:
  std::vector<std::string> cameras_;
  std::vector<std::uint32_t> isos_;
};

// Stacks [C, H, W] patches into one [N, C, H, W] batch.
Tensor stack_patches(std::span<const Tensor> patches);
// Splits a [N, C, H, W] batch back into N patches.
std::vector<Tensor> unstack_patches(const Tensor& batch);

NOISYLAB_NAMESPACE_END
