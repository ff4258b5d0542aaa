#pragma once

#include <deque>
#include <string>
#include <vector>

#include "noisylab/autodiff.h"

NOISYLAB_NAMESPACE_BEGIN

class Checkpoint;

/// Owns named parameters at stable addresses. Names are stored with the
/// store's prefix ("noise_model/", "denoiser/").
class ParameterStore {
 public:
  explicit ParameterStore(std::string prefix = "") : prefix_(std::move(prefix)) {}
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(const std::string& name, Tensor value, bool trainable = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<Parameter*> trainable();
  std::int64_t trainable_count() const;
  bool all_finite() const;
  const std::string& prefix() const { return prefix_; }

  void save(Checkpoint& ckpt) const;
  // Every parameter must be present with a matching shape; throws FormatError.
  void load(const Checkpoint& ckpt);

 private:
  std::string prefix_;
  std::deque<Parameter> params_;
};

NOISYLAB_NAMESPACE_END
