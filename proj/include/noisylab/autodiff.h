#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "noisylab/tensor.h"

NOISYLAB_NAMESPACE_BEGIN

class Tape;

/// A named model tensor. Trainable parameters are updated by the optimizer;
/// non-trainable ones (fixed permutations, signs) are only checkpointed.
struct Parameter {
  Parameter(std::string name, Tensor value, bool trainable = true)
      : name(std::move(name)), value(std::move(value)), trainable(trainable) {}

  std::string name;
  Tensor value;
  bool trainable;
};

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  int id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::int64_t numel() const { return value().numel(); }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Gradient accumulators handed to an op's backward function, one per input.
class GradSink {
 public:
  bool wants(int input) const;
  // Zero-initialized buffer (allocated on first use) for input `input`.
  std::span<Real> grad(int input);

 private:
  friend class Tape;
  GradSink(Tape& tape, const std::vector<int>& inputs) : tape_(tape), inputs_(inputs) {}
  Tape& tape_;
  const std::vector<int>& inputs_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

/// Gradients of a scalar loss with respect to watched parameters.
class Gradients {
 public:
  const Tensor* find(const Parameter& p) const;
  void accumulate(const Parameter& p, const Tensor& g);
  bool all_finite() const;
  std::size_t size() const { return grads_.size(); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

enum class GradMode { kEnabled, kDisabled };

/// Record of executed differentiable ops. Single owner, single thread.
///
/// backward() visits recorded ops in exact reverse execution order and sums
/// gradient contributions across fan-out. A tape can be consumed only once.
class Tape {
 public:
  explicit Tape(GradMode mode = GradMode::kEnabled) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return mode_ == GradMode::kEnabled; }

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);
  // Leaf bound to a parameter. Repeated calls return the same Var. On a
  // no-grad tape, or for non-trainable parameters, this is a constant.
  Var param(const Parameter& p);

  // Appends an op result. `backward` is dropped when no input needs grad.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  using VisitFn = std::function<void(int node_id)>;
  Gradients backward(const Var& loss, const VisitFn& on_visit = nullptr);

  const Tensor& value(const Var& v) const;
  bool requires_grad(const Var& v) const;
  // Gradient of the last backward() pass w.r.t. a recorded value; empty
  // tensor when none flowed there.
  const Tensor& grad(const Var& v) const;

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class GradSink;
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    const Parameter* param = nullptr;
  };

  int push(Node node);
  void check_owned(const Var& v) const;

  GradMode mode_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  bool consumed_ = false;
};

NOISYLAB_NAMESPACE_END
