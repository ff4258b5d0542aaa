#include <algorithm>
#include <vector>

#include <Eigen/Dense>

#include "noisylab/errors.h"
#include "noisylab/ops.h"
#include "noisylab/parallel.h"

NOISYLAB_NAMESPACE_BEGIN

namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;

// Column budget per GEMM chunk. Chunking depends only on the problem size so
// chunk-ordered reductions are identical for any worker count.
constexpr std::int64_t kColumnsPerChunk = 4096;

struct ConvGeometry {
  std::int64_t n, c, h, w;
  std::int64_t o, kh, kw;
  std::int64_t stride, pad;
  std::int64_t ho, wo;

  std::int64_t k() const { return c * kh * kw; }
  std::int64_t hw_out() const { return ho * wo; }
  std::int64_t samples_per_chunk() const { return std::max<std::int64_t>(1, kColumnsPerChunk / hw_out()); }
  std::int64_t chunks() const {
    const auto per = samples_per_chunk();
    return (n + per - 1) / per;
  }
};

// col[(ci, ky, kx), (s, oy, ox)] for samples [s0, s0 + count).
void im2col(const ConvGeometry& g, const Real* x, std::int64_t s0, std::int64_t count, Mat& col) {
  const std::int64_t hw = g.hw_out();
  col.resize(g.k(), count * hw);
  for (std::int64_t ci = 0; ci < g.c; ++ci) {
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        Real* row = col.row((ci * g.kh + ky) * g.kw + kx).data();
        for (std::int64_t s = 0; s < count; ++s) {
          const Real* plane = x + ((s0 + s) * g.c + ci) * g.h * g.w;
          Real* dst = row + s * hw;
          for (std::int64_t oy = 0; oy < g.ho; ++oy) {
            const std::int64_t iy = oy * g.stride - g.pad + ky;
            for (std::int64_t ox = 0; ox < g.wo; ++ox) {
              const std::int64_t ix = ox * g.stride - g.pad + kx;
              dst[oy * g.wo + ox] =
                  (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : Real(0);
            }
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const Mat& dcol, std::int64_t s0, std::int64_t count, Real* dx) {
  const std::int64_t hw = g.hw_out();
  for (std::int64_t ci = 0; ci < g.c; ++ci) {
    for (std::int64_t ky = 0; ky < g.kh; ++ky) {
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        const Real* row = dcol.row((ci * g.kh + ky) * g.kw + kx).data();
        for (std::int64_t s = 0; s < count; ++s) {
          Real* plane = dx + ((s0 + s) * g.c + ci) * g.h * g.w;
          const Real* src = row + s * hw;
          for (std::int64_t oy = 0; oy < g.ho; ++oy) {
            const std::int64_t iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            for (std::int64_t ox = 0; ox < g.wo; ++ox) {
              const std::int64_t ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += src[oy * g.wo + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions options) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4) {
    throw ShapeError("conv2d expects x [N,C,H,W] and weight [O,C,kh,kw], got " + shape_str(xs) +
                     " and " + shape_str(ws));
  }
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(xs) + ", weight " + shape_str(ws));
  }
  if (options.stride < 1) throw ShapeError("conv2d stride must be >= 1");
  ConvGeometry g{};
  g.n = xs[0];
  g.c = xs[1];
  g.h = xs[2];
  g.w = xs[3];
  g.o = ws[0];
  g.kh = ws[2];
  g.kw = ws[3];
  g.stride = options.stride;
  g.pad = options.padding < 0 ? g.kh / 2 : options.padding;
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d kernel larger than padded input");
  const bool has_bias = bias.valid();
  if (has_bias && (bias.value().rank() != 1 || bias.numel() != g.o)) {
    throw ShapeError("conv2d bias must be [O], got " + shape_str(bias.shape()));
  }

  Tensor out({g.n, g.o, g.ho, g.wo});
  const Real* xv = x.value().values().data();
  const CMap wmat(weight.value().values().data(), g.o, g.k());
  Real* ov = out.mutable_values().data();
  const Real* bv = has_bias ? bias.value().values().data() : nullptr;
  const std::int64_t per = g.samples_per_chunk();
  const std::int64_t hw = g.hw_out();

  parallel_for(g.chunks(), [&](std::int64_t chunk) {
    const std::int64_t s0 = chunk * per;
    const std::int64_t count = std::min(per, g.n - s0);
    Mat col;
    im2col(g, xv, s0, count, col);
    Mat prod = wmat * col;
    for (std::int64_t s = 0; s < count; ++s) {
      for (std::int64_t oc = 0; oc < g.o; ++oc) {
        Real* dst = ov + ((s0 + s) * g.o + oc) * hw;
        const Real* src = prod.row(oc).data() + s * hw;
        const Real b = bv ? bv[oc] : Real(0);
        for (std::int64_t i = 0; i < hw; ++i) dst[i] = src[i] + b;
      }
    }
  });

  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return x.tape().record(std::move(out), inputs, [x, weight, g, has_bias](const Tensor& grad, GradSink& sink) {
    const bool want_x = sink.wants(0);
    const bool want_w = sink.wants(1);
    const bool want_b = has_bias && sink.wants(2);
    const std::int64_t per = g.samples_per_chunk();
    const std::int64_t hw = g.hw_out();
    const std::int64_t chunks = g.chunks();
    const Real* xv = x.value().values().data();
    const Real* gv = grad.values().data();
    const CMap wmat(weight.value().values().data(), g.o, g.k());
    Real* dx = want_x ? sink.grad(0).data() : nullptr;

    std::vector<Mat> dw_parts(want_w ? static_cast<std::size_t>(chunks) : 0);
    std::vector<std::vector<double>> db_parts(want_b ? static_cast<std::size_t>(chunks) : 0);
    parallel_for(chunks, [&](std::int64_t chunk) {
      const std::int64_t s0 = chunk * per;
      const std::int64_t count = std::min(per, g.n - s0);
      Mat gmat(g.o, count * hw);
      for (std::int64_t s = 0; s < count; ++s) {
        for (std::int64_t oc = 0; oc < g.o; ++oc) {
          std::copy_n(gv + ((s0 + s) * g.o + oc) * hw, hw, gmat.row(oc).data() + s * hw);
        }
      }
      if (want_w) {
        Mat col;
        im2col(g, xv, s0, count, col);
        dw_parts[static_cast<std::size_t>(chunk)].noalias() = gmat * col.transpose();
      }
      if (want_b) {
        auto& part = db_parts[static_cast<std::size_t>(chunk)];
        part.assign(static_cast<std::size_t>(g.o), 0.0);
        for (std::int64_t oc = 0; oc < g.o; ++oc) {
          double acc = 0.0;
          const Real* row = gmat.row(oc).data();
          for (std::int64_t i = 0; i < count * hw; ++i) acc += static_cast<double>(row[i]);
          part[static_cast<std::size_t>(oc)] = acc;
        }
      }
      if (want_x) {
        Mat dcol = wmat.transpose() * gmat;
        col2im_add(g, dcol, s0, count, dx);
      }
    });
    if (want_w) {
      MMap dw(sink.grad(1).data(), g.o, g.k());
      for (const auto& part : dw_parts) dw += part;
    }
    if (want_b) {
      auto db = sink.grad(2);
      for (std::int64_t oc = 0; oc < g.o; ++oc) {
        double acc = 0.0;
        for (const auto& part : db_parts) acc += part[static_cast<std::size_t>(oc)];
        db[static_cast<std::size_t>(oc)] += static_cast<Real>(acc);
      }
    }
  });
}

NOISYLAB_NAMESPACE_END
