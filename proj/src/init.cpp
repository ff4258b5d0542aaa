#include "noisylab/init.h"

#include <Eigen/Dense>

#include "noisylab/errors.h"

NOISYLAB_NAMESPACE_BEGIN

Tensor orthogonal_init(const Shape& shape, Rng& rng, double gain) {
  if (shape.empty()) throw ShapeError("orthogonal_init: empty shape");
  for (auto extent : shape) {
    if (extent <= 0) throw ShapeError("orthogonal_init: degenerate shape " + shape_str(shape));
  }
  const std::int64_t rows = shape[0];
  const std::int64_t cols = shape_numel(shape) / rows;
  const std::int64_t tall = std::max(rows, cols);
  const std::int64_t thin = std::min(rows, cols);

  Eigen::MatrixXd a(tall, thin);
  for (std::int64_t j = 0; j < thin; ++j) {
    for (std::int64_t i = 0; i < tall; ++i) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, thin);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(thin).triangularView<Eigen::Upper>();
  // Sign fix makes the result uniformly distributed over orthogonal matrices.
  for (std::int64_t j = 0; j < thin; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Eigen::MatrixXd w = rows < cols ? Eigen::MatrixXd(q.transpose()) : q;

  Tensor out(shape);
  auto ov = out.mutable_values();
  for (std::int64_t i = 0; i < rows; ++i) {
    for (std::int64_t j = 0; j < cols; ++j) {
      ov[static_cast<std::size_t>(i * cols + j)] = static_cast<Real>(gain * w(i, j));
    }
  }
  return out;
}

NOISYLAB_NAMESPACE_END
