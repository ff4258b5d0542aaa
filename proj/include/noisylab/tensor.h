#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noisylab/config.h"

NOISYLAB_NAMESPACE_BEGIN

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of Real values with a fixed shape.
///
/// Every extent is positive and numel() == values().size(). A default
/// constructed tensor is the empty "absent" tensor with rank 0 and no data.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real value);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<const Real> values() const { return data_; }
  std::span<Real> mutable_values() { return data_; }
  const std::vector<Real>& vec() const { return data_; }

  Real operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  Real& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }

  // Value of a single-element tensor.
  Real item() const;

  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);

// Largest |a - b| over all elements; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

NOISYLAB_NAMESPACE_END
