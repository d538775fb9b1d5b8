#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "panet/errors.hpp"

namespace panet {

using Extents = std::vector<std::size_t>;

inline std::size_t shape_numel(const Extents& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Extents& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of 64-bit reals.
///
/// Tensors are immutable once built: the storage is shared between copies,
/// so passing and saving them is cheap. New values are produced by building
/// a fresh std::vector and handing it to the constructor.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Extents shape, std::vector<double> data)
      : shape_(std::move(shape)),
        data_(std::make_shared<const std::vector<double>>(std::move(data))) {
    for (std::size_t d : shape_)
      if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
    if (shape_.empty()) throw DimensionError("tensor must have at least one axis");
    if (shape_numel(shape_) != data_->size())
      throw DimensionError("shape " + shape_str(shape_) + " does not match " +
                           std::to_string(data_->size()) + " elements");
  }

  Tensor(Extents shape, std::initializer_list<double> values)
      : Tensor(std::move(shape), std::vector<double>(values)) {}

  static Tensor full(Extents shape, double value) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }
  static Tensor zeros(Extents shape) { return full(std::move(shape), 0.0); }
  static Tensor ones(Extents shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  bool empty() const { return !data_; }
  const Extents& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }

  std::span<const double> data() const {
    return data_ ? std::span<const double>(*data_) : std::span<const double>();
  }
  const double* ptr() const { return data_->data(); }

  double operator[](std::size_t i) const { return (*data_)[i]; }

  double at(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) throw DimensionError("index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape_[axis]) throw DimensionError("index out of range");
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return (*data_)[flat];
  }

  double item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    return (*data_)[0];
  }

  // Same storage, new extents.
  Tensor reshaped(Extents shape) const {
    if (shape_numel(shape) != numel())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  std::vector<double> to_vector() const { return {data().begin(), data().end()}; }

  bool all_finite() const {
    for (double v : data())
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Bit-exact equality of shape and contents.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_) return false;
    if (a.data_ == b.data_) return true;
    if (!a.data_ || !b.data_) return false;
    return *a.data_ == *b.data_;
  }

 private:
  Extents shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace panet
