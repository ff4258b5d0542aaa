#include "noisylab/module.h"

#include "noisylab/checkpoint.h"
#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

Parameter& ParameterStore::add(const std::string& name, Tensor value, bool trainable) {
  const std::string full = prefix_ + name;
  for (const auto& p : params_) {
    if (p.name == full) throw StateError("duplicate parameter '" + full + "'");
  }
  return params_.emplace_back(full, std::move(value), trainable);
}

Parameter& ParameterStore::get(const std::string& name) {
  return const_cast<Parameter&>(static_cast<const ParameterStore&>(*this).get(name));
}

const Parameter& ParameterStore::get(const std::string& name) const {
  const std::string full = prefix_ + name;
  for (const auto& p : params_) {
    if (p.name == full) return p;
  }
  throw StateError("no parameter '" + full + "'");
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : params_) {
    if (p.trainable) out.push_back(&p);
  }
  return out;
}

std::int64_t ParameterStore::trainable_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.numel();
  }
  return n;
}

bool ParameterStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.all_finite()) return false;
  }
  return true;
}

void ParameterStore::save(Checkpoint& ckpt) const {
  for (const auto& p : params_) ckpt.put(p.name, p.value);
}

void ParameterStore::load(const Checkpoint& ckpt) {
  for (auto& p : params_) {
    const Tensor& t = ckpt.get(p.name);
    if (t.shape() != p.value.shape()) {
      throw FormatError("checkpoint entry '" + p.name + "' has shape " + shape_str(t.shape()) + ", model expects " +
                        shape_str(p.value.shape()));
    }
    p.value = t;
  }
}

NOISYLAB_NAMESPACE_END
