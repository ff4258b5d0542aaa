#include "noisylab/ops.h"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<std::int64_t> a_strides;
  std::vector<std::int64_t> b_strides;
  bool same = false;
};

std::vector<std::int64_t> contiguous_strides(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (int d = static_cast<int>(shape.size()) - 2; d >= 0; --d) {
    strides[static_cast<std::size_t>(d)] =
        strides[static_cast<std::size_t>(d) + 1] * shape[static_cast<std::size_t>(d) + 1];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  const auto as = contiguous_strides(a);
  const auto bs = contiguous_strides(b);
  plan.out.assign(rank, 1);
  plan.a_strides.assign(rank, 0);
  plan.b_strides.assign(rank, 0);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t d = rank - 1 - k;
    const bool has_a = k < a.size();
    const bool has_b = k < b.size();
    const std::int64_t da = has_a ? a[a.size() - 1 - k] : 1;
    const std::int64_t db = has_b ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    plan.out[d] = std::max(da, db);
    if (has_a && da != 1) plan.a_strides[d] = as[a.size() - 1 - k];
    if (has_b && db != 1) plan.b_strides[d] = bs[b.size() - 1 - k];
  }
  return plan;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const std::int64_t n = shape_numel(plan.out);
  if (plan.same) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t ia = 0;
  std::int64_t ib = 0;
  for (std::int64_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++idx[du];
      ia += plan.a_strides[du];
      ib += plan.b_strides[du];
      if (idx[du] < plan.out[du]) break;
      ia -= plan.a_strides[du] * plan.out[du];
      ib -= plan.b_strides[du] * plan.out[du];
      idx[du] = 0;
    }
  }
}

// fwd(x, y) -> z; grad_a(x, y, g) and grad_b(x, y, g) give the contributions.
template <class Fwd, class GradA, class GradB>
Var binary_op(const Var& a, const Var& b, Fwd fwd, GradA grad_a, GradB grad_b) {
  Tape& tape = a.tape();
  if (&b.tape() != &tape) throw StateError("binary op across different tapes");
  auto plan = plan_broadcast(a.shape(), b.shape());
  Tensor out(plan.out);
  {
    auto av = a.value().values();
    auto bv = b.value().values();
    auto ov = out.mutable_values();
    for_each_broadcast(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
      ov[static_cast<std::size_t>(o)] = fwd(av[static_cast<std::size_t>(ia)], bv[static_cast<std::size_t>(ib)]);
    });
  }
  return tape.record(std::move(out), {a, b},
                     [a, b, plan = std::move(plan), grad_a, grad_b](const Tensor& g, GradSink& sink) {
                       auto av = a.value().values();
                       auto bv = b.value().values();
                       auto gv = g.values();
                       const bool want_a = sink.wants(0);
                       const bool want_b = sink.wants(1);
                       std::span<Real> ga = want_a ? sink.grad(0) : std::span<Real>();
                       std::span<Real> gb = want_b ? sink.grad(1) : std::span<Real>();
                       for_each_broadcast(plan, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
                         const Real x = av[static_cast<std::size_t>(ia)];
                         const Real y = bv[static_cast<std::size_t>(ib)];
                         const Real go = gv[static_cast<std::size_t>(o)];
                         if (want_a) ga[static_cast<std::size_t>(ia)] += grad_a(x, y, go);
                         if (want_b) gb[static_cast<std::size_t>(ib)] += grad_b(x, y, go);
                       });
                     });
}

// fwd(x) -> y; deriv(x, y) -> dy/dx.
template <class Fwd, class Deriv>
Var unary_op(const Var& x, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  {
    auto xv = x.value().values();
    auto ov = out.mutable_values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  }
  return x.tape().record(std::move(out), {x}, [x, deriv](const Tensor& g, GradSink& sink) {
    auto xv = x.value().values();
    auto gv = g.values();
    auto gx = sink.grad(0);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gv[i] * deriv(xv[i]);
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x + y; }, [](Real, Real, Real g) { return g; },
      [](Real, Real, Real g) { return g; });
}

Var sub(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x - y; }, [](Real, Real, Real g) { return g; },
      [](Real, Real, Real g) { return -g; });
}

Var mul(const Var& a, const Var& b) {
  return binary_op(
      a, b, [](Real x, Real y) { return x * y; }, [](Real, Real y, Real g) { return g * y; },
      [](Real x, Real, Real g) { return g * x; });
}

Var div(const Var& a, const Var& b) {
  for (Real v : b.value().values()) {
    if (v == Real(0)) throw DomainError("division by zero");
  }
  return binary_op(
      a, b, [](Real x, Real y) { return x / y; }, [](Real, Real y, Real g) { return g / y; },
      [](Real x, Real y, Real g) { return -g * x / (y * y); });
}

Var neg(const Var& x) {
  return unary_op(x, [](Real v) { return -v; }, [](Real) { return Real(-1); });
}

Var scale(const Var& x, double factor) {
  const Real f = static_cast<Real>(factor);
  return unary_op(x, [f](Real v) { return v * f; }, [f](Real) { return f; });
}

Var add_scalar(const Var& x, double offset) {
  const Real c = static_cast<Real>(offset);
  return unary_op(x, [c](Real v) { return v + c; }, [](Real) { return Real(1); });
}

Var exp(const Var& x) {
  return unary_op(x, [](Real v) { return std::exp(v); }, [](Real v) { return std::exp(v); });
}

Var log(const Var& x) {
  for (Real v : x.value().values()) {
    if (!(v > Real(0))) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary_op(x, [](Real v) { return std::log(v); }, [](Real v) { return Real(1) / v; });
}

Var sqrt(const Var& x) {
  for (Real v : x.value().values()) {
    if (!(v >= Real(0))) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  return unary_op(
      x, [](Real v) { return std::sqrt(v); }, [](Real v) { return Real(0.5) / std::sqrt(v); });
}

Var tanh(const Var& x) {
  return unary_op(
      x, [](Real v) { return std::tanh(v); },
      [](Real v) {
        const Real t = std::tanh(v);
        return Real(1) - t * t;
      });
}

Var relu(const Var& x) {
  return unary_op(
      x, [](Real v) { return v > Real(0) ? v : Real(0); },
      [](Real v) { return v > Real(0) ? Real(1) : Real(0); });
}

Var square(const Var& x) {
  return unary_op(x, [](Real v) { return v * v; }, [](Real v) { return Real(2) * v; });
}

Var clamp(const Var& x, double lo, double hi) {
  const Real l = static_cast<Real>(lo);
  const Real h = static_cast<Real>(hi);
  return unary_op(
      x, [l, h](Real v) { return std::min(std::max(v, l), h); },
      [l, h](Real v) { return (v >= l && v <= h) ? Real(1) : Real(0); });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (Real v : x.value().values()) acc += static_cast<double>(v);
  return x.tape().record(Tensor::scalar(static_cast<Real>(acc)), {x}, [](const Tensor& g, GradSink& sink) {
    const Real go = g[0];
    for (Real& v : sink.grad(0)) v += go;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Var sum_per_sample(const Var& x) {
  const std::int64_t n = x.shape().front();
  const std::int64_t per = x.numel() / n;
  Tensor out({n});
  auto xv = x.value().values();
  for (std::int64_t s = 0; s < n; ++s) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < per; ++i) acc += static_cast<double>(xv[static_cast<std::size_t>(s * per + i)]);
    out[s] = static_cast<Real>(acc);
  }
  return x.tape().record(std::move(out), {x}, [n, per](const Tensor& g, GradSink& sink) {
    auto gx = sink.grad(0);
    for (std::int64_t s = 0; s < n; ++s) {
      for (std::int64_t i = 0; i < per; ++i) gx[static_cast<std::size_t>(s * per + i)] += g[s];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](const Tensor& g, GradSink& sink) {
    auto gx = sink.grad(0);
    auto gv = g.values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gv[i];
  });
}

Var upsample2x(const Var& x) {
  if (x.value().rank() != 4) throw ShapeError("upsample2x expects [N, C, H, W]");
  const auto& s = x.shape();
  const std::int64_t nc = s[0] * s[1];
  const std::int64_t h = s[2];
  const std::int64_t w = s[3];
  Tensor out({s[0], s[1], 2 * h, 2 * w});
  auto xv = x.value().values();
  auto ov = out.mutable_values();
  for (std::int64_t p = 0; p < nc; ++p) {
    for (std::int64_t y = 0; y < 2 * h; ++y) {
      for (std::int64_t xx = 0; xx < 2 * w; ++xx) {
        ov[static_cast<std::size_t>((p * 2 * h + y) * 2 * w + xx)] =
            xv[static_cast<std::size_t>((p * h + y / 2) * w + xx / 2)];
      }
    }
  }
  return x.tape().record(std::move(out), {x}, [nc, h, w](const Tensor& g, GradSink& sink) {
    auto gx = sink.grad(0);
    auto gv = g.values();
    for (std::int64_t p = 0; p < nc; ++p) {
      for (std::int64_t y = 0; y < 2 * h; ++y) {
        for (std::int64_t xx = 0; xx < 2 * w; ++xx) {
          gx[static_cast<std::size_t>((p * h + y / 2) * w + xx / 2)] +=
              gv[static_cast<std::size_t>((p * 2 * h + y) * 2 * w + xx)];
        }
      }
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels needs at least one input");
  const Shape& first = parts.front().shape();
  if (first.size() != 4) throw ShapeError("concat_channels expects [N, C, H, W] inputs");
  std::int64_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeError("concat_channels: " + shape_str(s) + " incompatible with " + shape_str(first));
    }
    channels += s[1];
  }
  const std::int64_t n = first[0];
  const std::int64_t hw = first[2] * first[3];
  Tensor out({n, channels, first[2], first[3]});
  auto ov = out.mutable_values();
  std::vector<std::int64_t> offsets;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::int64_t c = p.shape()[1];
    auto pv = p.value().values();
    for (std::int64_t s = 0; s < n; ++s) {
      std::copy_n(pv.begin() + s * c * hw, c * hw, ov.begin() + (s * channels + offset) * hw);
    }
    offset += c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[1]);
  return parts.front().tape().record(
      std::move(out), inputs, [n, hw, channels, offsets, widths](const Tensor& g, GradSink& sink) {
        auto gv = g.values();
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (!sink.wants(static_cast<int>(k))) continue;
          auto gp = sink.grad(static_cast<int>(k));
          const std::int64_t c = widths[k];
          for (std::int64_t s = 0; s < n; ++s) {
            for (std::int64_t i = 0; i < c * hw; ++i) {
              gp[static_cast<std::size_t>(s * c * hw + i)] +=
                  gv[static_cast<std::size_t>((s * channels + offsets[k]) * hw + i)];
            }
          }
        }
      });
}

Var slice_channels(const Var& x, std::int64_t begin, std::int64_t end) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("slice_channels expects [N, C, H, W]");
  if (begin < 0 || end > s[1] || begin >= end) {
    throw ShapeError("slice_channels: bad range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") for " + shape_str(s));
  }
  const std::int64_t n = s[0];
  const std::int64_t c = s[1];
  const std::int64_t hw = s[2] * s[3];
  const std::int64_t width = end - begin;
  Tensor out({n, width, s[2], s[3]});
  auto xv = x.value().values();
  auto ov = out.mutable_values();
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(xv.begin() + (i * c + begin) * hw, width * hw, ov.begin() + i * width * hw);
  }
  return x.tape().record(std::move(out), {x}, [n, c, hw, begin, width](const Tensor& g, GradSink& sink) {
    auto gx = sink.grad(0);
    auto gv = g.values();
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t k = 0; k < width * hw; ++k) {
        gx[static_cast<std::size_t>((i * c + begin) * hw + k)] += gv[static_cast<std::size_t>(i * width * hw + k)];
      }
    }
  });
}

Var gather(const Var& table, const std::vector<int>& indices) {
  if (table.value().rank() != 1) throw ShapeError("gather expects a rank-1 table");
  if (indices.empty()) throw ShapeError("gather needs at least one index");
  const std::int64_t k = table.numel();
  Tensor out({static_cast<std::int64_t>(indices.size())});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= k) {
      throw ShapeError("gather index " + std::to_string(indices[i]) + " out of range " + std::to_string(k));
    }
    out[static_cast<std::int64_t>(i)] = table.value()[indices[i]];
  }
  return table.tape().record(std::move(out), {table}, [indices](const Tensor& g, GradSink& sink) {
    auto gt = sink.grad(0);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      gt[static_cast<std::size_t>(indices[i])] += g[static_cast<std::int64_t>(i)];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto m = a.shape()[0];
  const auto k = a.shape()[1];
  const auto n = b.shape()[1];
  Tensor out({m, n});
  MMap(out.mutable_values().data(), m, n).noalias() =
      CMap(a.value().values().data(), m, k) * CMap(b.value().values().data(), k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](const Tensor& g, GradSink& sink) {
    CMap gm(g.values().data(), m, n);
    if (sink.wants(0)) {
      MMap(sink.grad(0).data(), m, k).noalias() += gm * CMap(b.value().values().data(), k, n).transpose();
    }
    if (sink.wants(1)) {
      MMap(sink.grad(1).data(), k, n).noalias() += CMap(a.value().values().data(), m, k).transpose() * gm;
    }
  });
}

NOISYLAB_NAMESPACE_END
