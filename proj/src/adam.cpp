#include "noisylab/adam.h"

#include <cmath>

#include "noisylab/checkpoint.h"
#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

AdamStepReport Adam::step(std::span<const ParamGroup> groups, const Gradients& grads) {
  for (const auto& group : groups) {
    for (const Parameter* p : group.params) {
      const Tensor* g = grads.find(*p);
      if (!g) continue;
      if (!same_shape(*g, p->value)) throw ShapeError("gradient/parameter shape mismatch for " + p->name);
      if (!g->all_finite()) {
        return {false, "non-finite gradient for '" + p->name + "'; step skipped"};
      }
    }
  }

  ++t_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (const auto& group : groups) {
    for (Parameter* p : group.params) {
      if (!p->trainable) continue;
      Slot& slot = slots_[p->name];
      if (slot.m.empty()) {
        slot.m = Tensor(p->value.shape());
        slot.v = Tensor(p->value.shape());
      }
      const Tensor* g = grads.find(*p);
      auto pv = p->value.mutable_values();
      auto mv = slot.m.mutable_values();
      auto vv = slot.v.mutable_values();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double gi = g ? static_cast<double>(g->values()[i]) : 0.0;
        const double m = b1 * static_cast<double>(mv[i]) + (1.0 - b1) * gi;
        const double v = b2 * static_cast<double>(vv[i]) + (1.0 - b2) * gi * gi;
        mv[i] = static_cast<Real>(m);
        vv[i] = static_cast<Real>(v);
        const double update = group.lr * (m / c1) / (std::sqrt(v / c2) + options_.eps);
        pv[i] = static_cast<Real>(static_cast<double>(pv[i]) - update);
      }
    }
  }
  return {};
}

const Tensor* Adam::first_moment(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second.m;
}

const Tensor* Adam::second_moment(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? nullptr : &it->second.v;
}

void Adam::save(Checkpoint& ckpt) const {
  ckpt.put_integer("adam/step", t_);
  for (const auto& [name, slot] : slots_) {
    ckpt.put("adam/m/" + name, slot.m);
    ckpt.put("adam/v/" + name, slot.v);
  }
}

void Adam::load(const Checkpoint& ckpt) {
  slots_.clear();
  t_ = ckpt.contains("adam/step") ? ckpt.get_integer("adam/step") : 0;
  const std::string m_prefix = "adam/m/";
  for (const auto& name : ckpt.names()) {
    if (name.rfind(m_prefix, 0) != 0) continue;
    const std::string param = name.substr(m_prefix.size());
    Slot slot;
    slot.m = ckpt.get(name);
    slot.v = ckpt.get("adam/v/" + param);
    slots_[param] = std::move(slot);
  }
}

NOISYLAB_NAMESPACE_END
