#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mpcnn/errors.hpp"

namespace mpcnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor. 4-D activations use NCHW.
///
/// A default-constructed tensor is the empty placeholder (rank 0, no data).
/// Every other tensor has only positive dimensions and exactly
/// product(shape) elements.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  /// Same elements in the same order under a new shape of equal volume.
  void reshape(Shape shape);
  BasicTensor reshaped(Shape shape) const;

  void fill(T value);

  bool operator==(const BasicTensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return BasicTensor<To>(t.shape(), std::move(out));
}

template <typename T>
BasicTensor<T> alloc(const Shape& shape, T fill) {
  return BasicTensor<T>(shape, fill);
}

enum class ElementwiseOp { Add, Sub, Mul, Max, Scale };

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b);
/// Tensor-scalar form; Scale multiplies, the other ops combine with the scalar.
template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, T b);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::Add, a, b);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::Sub, a, b);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::Mul, a, b);
}
template <typename T>
BasicTensor<T> maximum(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::Max, a, b);
}
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  return elementwise(ElementwiseOp::Scale, a, s);
}

/// C = op(A) * op(B) (+ C when accumulate), row-major, with op = transpose
/// when the flag is set. A is M x K after op, B is K x N after op.
/// The K loop always runs in ascending order for every output element, so
/// results are reproducible bit for bit.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T>& a);

template <typename T>
T sum(const BasicTensor<T>& a);
template <typename T>
T max(const BasicTensor<T>& a);
/// Flat index of the first maximum.
template <typename T>
std::size_t argmax(const BasicTensor<T>& a);

/// Reductions along one axis. The axis is removed from the shape, except that
/// reducing a rank-1 tensor yields shape [1].
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a, std::size_t axis);
template <typename T>
BasicTensor<T> max(const BasicTensor<T>& a, std::size_t axis);
/// Indices along `axis`; the returned vector is laid out like the reduced shape.
template <typename T>
std::vector<std::size_t> argmax(const BasicTensor<T>& a, std::size_t axis);

}  // namespace mpcnn
