#include "mpcnn/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace mpcnn {

std::size_t shape_volume(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t v = 1;
  for (auto d : shape) v *= d;
  return v;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) fail(ErrorKind::InvalidShape, "tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) fail(ErrorKind::InvalidShape, "zero dimension in shape " + shape_to_string(shape));
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_volume(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_volume(shape_))
    fail(ErrorKind::InvalidShape, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                      shape_to_string(shape_));
}

template <typename T>
void BasicTensor<T>::reshape(Shape shape) {
  check_shape(shape);
  if (shape_volume(shape) != data_.size())
    fail(ErrorKind::InvalidShape, "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  shape_ = std::move(shape);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  BasicTensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
static T apply(ElementwiseOp op, T x, T y) {
  switch (op) {
    case ElementwiseOp::Add: return x + y;
    case ElementwiseOp::Sub: return x - y;
    case ElementwiseOp::Mul:
    case ElementwiseOp::Scale: return x * y;
    case ElementwiseOp::Max: return std::max(x, y);
  }
  return x;
}

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    fail(ErrorKind::InvalidShape,
         "elementwise shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(op, a[i], b[i]);
  return out;
}

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, T b) {
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(op, a[i], b);
  return out;
}

namespace {

// C[m x n] (+)= A[m x k] * B[k x n], A addressed through strides so the
// transposed case shares the kernel. Four output rows share each B row load.
template <typename T>
void gemm_kernel(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_row, std::size_t a_col,
                 const T* b, T* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* c0 = c + i * n;
    T* c1 = c0 + n;
    T* c2 = c1 + n;
    T* c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const T a0 = a[i * a_row + p * a_col];
      const T a1 = a[(i + 1) * a_row + p * a_col];
      const T a2 = a[(i + 2) * a_row + p * a_col];
      const T a3 = a[(i + 3) * a_row + p * a_col];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = brow[j];
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * a_row + p * a_col];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  std::vector<T> bt;
  if (trans_b) {
    // B is stored n x k; materialize it as k x n.
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    b = bt.data();
  }
  if (trans_a)
    gemm_kernel(m, n, k, a, 1, m, b, c);
  else
    gemm_kernel(m, n, k, a, k, 1, b, c);
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    fail(ErrorKind::InvalidShape, "matmul " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  BasicTensor<T> out({a.dim(0), b.dim(1)});
  gemm(false, false, a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), out.ptr(), false);
  return out;
}

template <typename T>
BasicTensor<T> transpose2d(const BasicTensor<T>& a) {
  if (a.rank() != 2) fail(ErrorKind::InvalidShape, "transpose2d needs rank 2, got " + shape_to_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  BasicTensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return out;
}

template <typename T>
T sum(const BasicTensor<T>& a) {
  T s = 0;
  for (auto v : a.data()) s += v;
  return s;
}

template <typename T>
T max(const BasicTensor<T>& a) {
  if (a.empty()) fail(ErrorKind::InvalidShape, "max of empty tensor");
  return a[argmax(a)];
}

template <typename T>
std::size_t argmax(const BasicTensor<T>& a) {
  if (a.empty()) fail(ErrorKind::InvalidShape, "argmax of empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.size(); ++i)
    if (a[i] > a[best]) best = i;
  return best;
}

namespace {

struct AxisSplit {
  std::size_t outer, extent, inner;
  Shape reduced;
};

template <typename T>
AxisSplit split_axis(const BasicTensor<T>& a, std::size_t axis) {
  if (axis >= a.rank())
    fail(ErrorKind::InvalidAxis,
         "axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(a.shape()));
  AxisSplit s{1, a.dim(axis), 1, {}};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= a.dim(i);
  for (std::size_t i = axis + 1; i < a.rank(); ++i) s.inner *= a.dim(i);
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) s.reduced.push_back(a.dim(i));
  if (s.reduced.empty()) s.reduced.push_back(1);
  return s;
}

}  // namespace

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a, std::size_t axis) {
  const auto s = split_axis(a, axis);
  BasicTensor<T> out(s.reduced);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += a[(o * s.extent + e) * s.inner + i];
  return out;
}

template <typename T>
BasicTensor<T> max(const BasicTensor<T>& a, std::size_t axis) {
  const auto idx = argmax(a, axis);
  const auto s = split_axis(a, axis);
  BasicTensor<T> out(s.reduced);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i)
      out[o * s.inner + i] = a[(o * s.extent + idx[o * s.inner + i]) * s.inner + i];
  return out;
}

template <typename T>
std::vector<std::size_t> argmax(const BasicTensor<T>& a, std::size_t axis) {
  const auto s = split_axis(a, axis);
  std::vector<std::size_t> out(s.outer * s.inner, 0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      for (std::size_t e = 1; e < s.extent; ++e)
        if (a[(o * s.extent + e) * s.inner + i] > a[(o * s.extent + best) * s.inner + i]) best = e;
      out[o * s.inner + i] = best;
    }
  return out;
}

#define MPCNN_INSTANTIATE(T)                                                                                    \
  template class BasicTensor<T>;                                                                                \
  template BasicTensor<T> elementwise(ElementwiseOp, const BasicTensor<T>&, const BasicTensor<T>&);            \
  template BasicTensor<T> elementwise(ElementwiseOp, const BasicTensor<T>&, T);                                 \
  template void gemm(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);           \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                 \
  template BasicTensor<T> transpose2d(const BasicTensor<T>&);                                                   \
  template T sum(const BasicTensor<T>&);                                                                        \
  template T max(const BasicTensor<T>&);                                                                        \
  template std::size_t argmax(const BasicTensor<T>&);                                                           \
  template BasicTensor<T> sum(const BasicTensor<T>&, std::size_t);                                              \
  template BasicTensor<T> max(const BasicTensor<T>&, std::size_t);                                              \
  template std::vector<std::size_t> argmax(const BasicTensor<T>&, std::size_t);

MPCNN_INSTANTIATE(float)
MPCNN_INSTANTIATE(double)

#undef MPCNN_INSTANTIATE

}  // namespace mpcnn
