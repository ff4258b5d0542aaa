#include "noisylab/autodiff.h"

#include <cmath>

#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

Tape& Var::tape() const {
  if (!tape_) throw StateError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(*this); }

bool GradSink::wants(int input) const {
  const int id = inputs_[static_cast<std::size_t>(input)];
  return tape_.nodes_[static_cast<std::size_t>(id)].requires_grad;
}

std::span<Real> GradSink::grad(int input) {
  const auto id = static_cast<std::size_t>(inputs_[static_cast<std::size_t>(input)]);
  Tensor& g = tape_.grads_[id];
  if (g.empty()) g = Tensor(tape_.nodes_[id].value.shape());
  return g.mutable_values();
}

const Tensor* Gradients::find(const Parameter& p) const {
  auto it = grads_.find(&p);
  return it == grads_.end() ? nullptr : &it->second;
}

void Gradients::accumulate(const Parameter& p, const Tensor& g) {
  auto [it, inserted] = grads_.try_emplace(&p, g);
  if (inserted) return;
  if (!same_shape(it->second, g)) throw ShapeError("gradient shape mismatch for " + p.name);
  auto dst = it->second.mutable_values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

bool Gradients::all_finite() const {
  for (const auto& [p, g] : grads_) {
    if (!g.all_finite()) return false;
  }
  return true;
}

int Tape::push(Node node) {
  if (consumed_) throw StateError("cannot record on a consumed tape");
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_owned(const Var& v) const {
  if (&v.tape() != this) throw StateError("Var belongs to a different tape");
  if (v.id() < 0 || static_cast<std::size_t>(v.id()) >= nodes_.size()) {
    throw StateError("Var id out of range");
  }
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  return Var(this, push(std::move(node)));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad && grad_enabled();
  return Var(this, push(std::move(node)));
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.value = p.value;
  node.requires_grad = p.trainable && grad_enabled();
  node.param = node.requires_grad ? &p : nullptr;
  const int id = push(std::move(node));
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(in.id())].requires_grad;
  }
  if (node.requires_grad) {
    node.backward = std::move(backward);
  } else {
    node.inputs.clear();
  }
  return Var(this, push(std::move(node)));
}

Gradients Tape::backward(const Var& loss, const VisitFn& on_visit) {
  if (consumed_) throw StateError("backward() called on a consumed tape");
  check_owned(loss);
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  }
  consumed_ = true;
  grads_.assign(nodes_.size(), Tensor());
  Gradients out;
  const auto root = static_cast<std::size_t>(loss.id());
  if (!nodes_[root].requires_grad) return out;
  grads_[root] = Tensor(nodes_[root].value.shape(), Real(1));

  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    const Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (!node.requires_grad || g.empty()) continue;
    if (node.backward) {
      if (on_visit) on_visit(id);
      GradSink sink(*this, node.inputs);
      node.backward(g, sink);
    } else if (node.param) {
      out.accumulate(*node.param, g);
    }
  }
  for (auto& node : nodes_) node.backward = nullptr;
  return out;
}

const Tensor& Tape::value(const Var& v) const {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.id())].value;
}

bool Tape::requires_grad(const Var& v) const {
  check_owned(v);
  return nodes_[static_cast<std::size_t>(v.id())].requires_grad;
}

const Tensor& Tape::grad(const Var& v) const {
  check_owned(v);
  static const Tensor kEmpty;
  if (grads_.empty()) return kEmpty;
  return grads_[static_cast<std::size_t>(v.id())];
}

NOISYLAB_NAMESPACE_END
