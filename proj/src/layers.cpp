#include "mpcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mpcnn {

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad_lo,
                             std::size_t pad_hi) {
  if (kernel == 0 || stride == 0) fail(ErrorKind::InvalidParameter, "kernel and stride must be positive");
  const std::size_t padded = in + pad_lo + pad_hi;
  if (padded < kernel)
    fail(ErrorKind::InvalidShape, "kernel " + std::to_string(kernel) + " larger than padded input " +
                                      std::to_string(padded));
  return (padded - kernel) / stride + 1;
}

namespace {

template <typename T>
void require_rank4(const BasicTensor<T>& t, const char* what) {
  if (t.rank() != 4) fail(ErrorKind::InvalidShape, std::string(what) + " expects NCHW, got " + shape_to_string(t.shape()));
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, out_h, out_w;
  Padding pad;

  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const ConvParams<T>& p) {
  require_rank4(input, "conv2d");
  const auto& w = p.weights.shape();
  if (w.size() != 4 || w[0] != p.out_channels || w[2] != p.kernel || w[3] != p.kernel)
    fail(ErrorKind::InvalidShape, "conv weights " + shape_to_string(w) + " inconsistent with " +
                                      std::to_string(p.out_channels) + " filters of " + std::to_string(p.kernel) +
                                      "x" + std::to_string(p.kernel));
  if (p.bias.shape() != Shape{p.out_channels})
    fail(ErrorKind::InvalidShape, "conv bias shape " + shape_to_string(p.bias.shape()));
  if (w[1] != input.dim(1))
    fail(ErrorKind::InvalidShape, "conv expects " + std::to_string(w[1]) + " input channels, got " +
                                      std::to_string(input.dim(1)));
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), p.kernel, p.stride, 0, 0, p.pad};
  g.out_h = conv_output_size(g.height, g.kernel, g.stride, g.pad.top, g.pad.bottom);
  g.out_w = conv_output_size(g.width, g.kernel, g.stride, g.pad.left, g.pad.right);
  return g;
}

// col[(c*k + ki)*k + kj, oh*out_w + ow] = image[c, oh*s + ki - top, ow*s + kj - left] (0 outside).
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad.top);
          T* out = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(out, out + g.out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad.left);
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : src[iw];
          }
        }
      }
  }
}

template <typename T>
void col2im_accumulate(const T* col, const ConvGeometry& g, T* image) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad.top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t iw =
                static_cast<std::ptrdiff_t>(ow * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad.left);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) dst[iw] += row[oh * g.out_w + ow];
          }
        }
      }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p) {
  const auto g = conv_geometry(input, p);
  const std::size_t n_batch = input.dim(0);
  BasicTensor<T> out({n_batch, p.out_channels, g.out_h, g.out_w});
  std::vector<T> col(g.col_rows() * g.col_cols());
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = p.out_channels * g.col_cols();
  for (std::size_t n = 0; n < n_batch; ++n) {
    im2col(input.ptr() + n * in_stride, g, col.data());
    T* o = out.ptr() + n * out_stride;
    for (std::size_t f = 0; f < p.out_channels; ++f) std::fill(o + f * g.col_cols(), o + (f + 1) * g.col_cols(), p.bias[f]);
    gemm(false, false, p.out_channels, g.col_cols(), g.col_rows(), p.weights.ptr(), col.data(), o, true);
  }
  return out;
}

template <typename T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& p,
                                 const BasicTensor<T>& grad_output) {
  const auto g = conv_geometry(input, p);
  const std::size_t n_batch = input.dim(0);
  if (grad_output.shape() != Shape{n_batch, p.out_channels, g.out_h, g.out_w})
    fail(ErrorKind::InvalidShape, "conv upstream gradient shape " + shape_to_string(grad_output.shape()));
  ConvGradients<T> grads{BasicTensor<T>(input.shape()), BasicTensor<T>(p.weights.shape()),
                         BasicTensor<T>(p.bias.shape())};
  std::vector<T> col(g.col_rows() * g.col_cols());
  std::vector<T> dcol(col.size());
  const std::size_t in_stride = g.channels * g.height * g.width;
  const std::size_t out_stride = p.out_channels * g.col_cols();
  for (std::size_t n = 0; n < n_batch; ++n) {
    const T* go = grad_output.ptr() + n * out_stride;
    for (std::size_t f = 0; f < p.out_channels; ++f) {
      T s = 0;
      for (std::size_t i = 0; i < g.col_cols(); ++i) s += go[f * g.col_cols() + i];
      grads.bias[f] += s;
    }
    im2col(input.ptr() + n * in_stride, g, col.data());
    gemm(false, true, p.out_channels, g.col_rows(), g.col_cols(), go, col.data(), grads.weights.ptr(), true);
    gemm(true, false, g.col_rows(), g.col_cols(), p.out_channels, p.weights.ptr(), go, dcol.data(), false);
    col2im_accumulate(dcol.data(), g, grads.input.ptr() + n * in_stride);
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, std::size_t kernel, std::size_t stride) {
  require_rank4(input, "maxpool2d");
  const std::size_t n_batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel > h || kernel > w)
    fail(ErrorKind::InvalidShape, "pool kernel " + std::to_string(kernel) + " larger than input " +
                                      shape_to_string(input.shape()));
  const std::size_t oh = conv_output_size(h, kernel, stride, 0, 0);
  const std::size_t ow = conv_output_size(w, kernel, stride, 0, 0);
  PoolResult<T> r{BasicTensor<T>({n_batch, channels, oh, ow}), std::vector<std::size_t>(n_batch * channels * oh * ow)};
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n_batch * channels; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x, ++o) {
        std::size_t best = base + y * stride * w + x * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = base + (y * stride + ky) * w + x * stride + kx;
            if (input[idx] > input[best]) best = idx;
          }
        r.output[o] = input[best];
        r.argmax[o] = best;
      }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_output, std::span<const std::size_t> argmax,
                                  const Shape& input_shape) {
  if (argmax.size() != grad_output.size())
    fail(ErrorKind::InvalidShape, "pool argmax/gradient size mismatch");
  BasicTensor<T> grad_input(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= grad_input.size()) fail(ErrorKind::InvalidShape, "pool argmax index out of range");
    grad_input[argmax[i]] += grad_output[i];
  }
  return grad_input;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out = input;
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
  if (input.shape() != grad_output.shape()) fail(ErrorKind::InvalidShape, "relu gradient shape mismatch");
  BasicTensor<T> out = grad_output;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!(input[i] > T(0))) out[i] = T(0);
  return out;
}

void validate(const LrnParams& p) {
  if (p.depth_radius < 1 || !(p.k > 0) || !(p.alpha >= 0) || !(p.beta > 0))
    fail(ErrorKind::InvalidParameter, "LRN needs n >= 1, k > 0, alpha >= 0, beta > 0");
}

namespace {

struct ChannelWindow {
  std::size_t lo, hi;  // inclusive
};

ChannelWindow lrn_window(std::size_t c, std::size_t channels, std::size_t n) {
  const std::size_t before = (n - 1) / 2;
  const std::size_t after = n - 1 - before;
  return {c >= before ? c - before : 0, std::min(channels - 1, c + after)};
}

// k + alpha/n * windowed sum of squares, per element.
template <typename T>
std::vector<T> lrn_scale(const BasicTensor<T>& x, const LrnParams& p) {
  const std::size_t n_batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
  const T coeff = static_cast<T>(p.alpha / static_cast<double>(p.depth_radius));
  std::vector<T> s(x.size());
  std::vector<T> sq(channels);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = n * channels * plane + i;
      for (std::size_t c = 0; c < channels; ++c) {
        const T v = x[base + c * plane];
        sq[c] = v * v;
      }
      for (std::size_t c = 0; c < channels; ++c) {
        const auto win = lrn_window(c, channels, p.depth_radius);
        T acc = 0;
        for (std::size_t j = win.lo; j <= win.hi; ++j) acc += sq[j];
        s[base + c * plane] = static_cast<T>(p.k) + coeff * acc;
      }
    }
  return s;
}

}  // namespace

template <typename T>
BasicTensor<T> lrn_forward(const BasicTensor<T>& input, const LrnParams& p) {
  validate(p);
  require_rank4(input, "lrn");
  const auto s = lrn_scale(input, p);
  BasicTensor<T> out = input;
  const T beta = static_cast<T>(p.beta);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = input[i] * std::pow(s[i], -beta);
  return out;
}

template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& input, const LrnParams& p, const BasicTensor<T>& grad_output) {
  validate(p);
  require_rank4(input, "lrn");
  if (input.shape() != grad_output.shape()) fail(ErrorKind::InvalidShape, "lrn gradient shape mismatch");
  const auto s = lrn_scale(input, p);
  const std::size_t n_batch = input.dim(0), channels = input.dim(1), plane = input.dim(2) * input.dim(3);
  const T beta = static_cast<T>(p.beta);
  const T cross = static_cast<T>(2.0 * p.alpha * p.beta / static_cast<double>(p.depth_radius));
  BasicTensor<T> grad(input.shape());
  std::vector<T> t(channels);
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t base = n * channels * plane + i;
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t idx = base + c * plane;
        t[c] = grad_output[idx] * input[idx] * std::pow(s[idx], -beta - T(1));
        grad[idx] = grad_output[idx] * std::pow(s[idx], -beta);
      }
      // out[c] depends on every input channel in window(c).
      for (std::size_t c = 0; c < channels; ++c) {
        const auto win = lrn_window(c, channels, p.depth_radius);
        for (std::size_t j = win.lo; j <= win.hi; ++j) {
          const std::size_t idx = base + j * plane;
          grad[idx] -= cross * input[idx] * t[c];
        }
      }
    }
  return grad;
}

template <typename T>
BasicTensor<T> fully_connected_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                       const BasicTensor<T>& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || input.dim(1) != weights.dim(0))
    fail(ErrorKind::InvalidShape,
         "fully connected " + shape_to_string(input.shape()) + " x " + shape_to_string(weights.shape()));
  if (bias.shape() != Shape{weights.dim(1)}) fail(ErrorKind::InvalidShape, "fully connected bias shape");
  const std::size_t n = input.dim(0), m = weights.dim(1);
  BasicTensor<T> out({n, m});
  for (std::size_t i = 0; i < n; ++i) std::copy(bias.ptr(), bias.ptr() + m, out.ptr() + i * m);
  gemm(false, false, n, m, input.dim(1), input.ptr(), weights.ptr(), out.ptr(), true);
  return out;
}

template <typename T>
FcGradients<T> fully_connected_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                        const BasicTensor<T>& grad_output) {
  const std::size_t n = input.dim(0), d = input.dim(1), m = weights.dim(1);
  if (weights.dim(0) != d || grad_output.shape() != Shape{n, m})
    fail(ErrorKind::InvalidShape, "fully connected gradient shapes");
  FcGradients<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()), BasicTensor<T>({m})};
  gemm(true, false, d, m, n, input.ptr(), grad_output.ptr(), g.weights.ptr(), false);
  gemm(false, true, n, d, m, grad_output.ptr(), weights.ptr(), g.input.ptr(), false);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) g.bias[j] += grad_output[i * m + j];
  return g;
}

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& input, double rate, Rng& rng, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::InvalidParameter, "dropout rate must lie in [0, 1)");
  if (mode == Mode::Infer || rate == 0.0) return {input, {}};
  DropoutResult<T> r{input, BasicTensor<T>(input.shape())};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < input.size(); ++i) {
    r.mask[i] = rng.bernoulli(rate) ? T(0) : keep_scale;
    r.output[i] = input[i] * r.mask[i];
  }
  return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& mask) {
  if (mask.empty()) return grad_output;
  return mul(grad_output, mask);
}

template <typename T>
BasicTensor<T> concat_flatten_forward(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) fail(ErrorKind::InvalidShape, "concat needs at least one input");
  const std::size_t n = parts[0].dim(0);
  std::size_t width = 0;
  for (const auto& p : parts) {
    if (p.rank() < 2 || p.dim(0) != n) fail(ErrorKind::InvalidShape, "concat inputs disagree on batch size");
    width += p.size() / n;
  }
  BasicTensor<T> out({n, width});
  for (std::size_t i = 0; i < n; ++i) {
    T* dst = out.ptr() + i * width;
    for (const auto& p : parts) {
      const std::size_t v = p.size() / n;
      dst = std::copy(p.ptr() + i * v, p.ptr() + (i + 1) * v, dst);
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_flatten_forward(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    fail(ErrorKind::InvalidShape, "concat shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  const BasicTensor<T> parts[] = {a, b};
  return concat_flatten_forward<T>(std::span<const BasicTensor<T>>(parts));
}

template <typename T>
std::vector<BasicTensor<T>> concat_flatten_backward(const BasicTensor<T>& grad_output,
                                                    std::span<const Shape> part_shapes) {
  if (grad_output.rank() != 2) fail(ErrorKind::InvalidShape, "concat gradient must be [N, D]");
  const std::size_t n = grad_output.dim(0), width = grad_output.dim(1);
  std::size_t total = 0;
  for (const auto& s : part_shapes) {
    if (s.empty() || s[0] != n) fail(ErrorKind::InvalidShape, "concat part batch mismatch");
    total += shape_volume(s) / n;
  }
  if (total != width) fail(ErrorKind::InvalidShape, "concat gradient width does not match parts");
  std::vector<BasicTensor<T>> out;
  for (const auto& s : part_shapes) out.emplace_back(s);
  for (std::size_t i = 0; i < n; ++i) {
    const T* src = grad_output.ptr() + i * width;
    for (auto& p : out) {
      const std::size_t v = p.size() / n;
      std::copy(src, src + v, p.ptr() + i * v);
      src += v;
    }
  }
  return out;
}

namespace {

template <typename T>
void check_labels(const BasicTensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) fail(ErrorKind::InvalidShape, "logits must be [N, K]");
  if (labels.size() != logits.dim(0)) fail(ErrorKind::InvalidShape, "label count does not match batch size");
  const auto k = static_cast<long>(logits.dim(1));
  for (int l : labels)
    if (l < 0 || l >= k)
      fail(ErrorKind::InvalidLabel, "label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
}

}  // namespace

template <typename T>
SoftmaxLoss<T> softmax_logloss(const BasicTensor<T>& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  SoftmaxLoss<T> r{BasicTensor<T>(logits.shape()), 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.ptr() + i * k;
    T* p = r.probs.ptr() + i * k;
    const T zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(z[j] - zmax));
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < k; ++j) p[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - zmax) - log_denom));
    total -= static_cast<double>(z[labels[i]] - zmax) - log_denom;
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

template <typename T>
BasicTensor<T> softmax_logloss_backward(const BasicTensor<T>& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  BasicTensor<T> grad = probs;
  for (std::size_t i = 0; i < n; ++i) grad[i * k + static_cast<std::size_t>(labels[i])] -= T(1);
  const T inv_n = T(1) / static_cast<T>(n);
  for (auto& v : grad.data()) v *= inv_n;
  return grad;
}

template <typename T>
void sgd_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, SgdState<T>& state) {
  if (params.size() != grads.size()) fail(ErrorKind::InvalidShape, "sgd: parameter/gradient count mismatch");
  if (!(state.learning_rate >= 0.0)) fail(ErrorKind::InvalidParameter, "sgd: learning rate must be non-negative");
  if (state.velocity.empty())
    for (const auto& p : params) state.velocity.emplace_back(p.shape());
  if (state.velocity.size() != params.size()) fail(ErrorKind::InvalidShape, "sgd: velocity count mismatch");
  const T lr = static_cast<T>(state.learning_rate);
  const T mom = static_cast<T>(state.momentum);
  const T wd = static_cast<T>(state.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& v = state.velocity[i];
    const auto& g = grads[i];
    if (p.shape() != g.shape() || p.shape() != v.shape())
      fail(ErrorKind::InvalidShape, "sgd: shape mismatch for parameter " + std::to_string(i));
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mom * v[j] - lr * (g[j] + wd * p[j]);
      p[j] += v[j];
    }
  }
}

#define MPCNN_INSTANTIATE(T)                                                                                     \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvParams<T>&);                          \
  template ConvGradients<T> conv2d_backward(const BasicTensor<T>&, const ConvParams<T>&, const BasicTensor<T>&); \
  template PoolResult<T> maxpool2d_forward(const BasicTensor<T>&, std::size_t, std::size_t);                     \
  template BasicTensor<T> maxpool2d_backward(const BasicTensor<T>&, std::span<const std::size_t>, const Shape&);  \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> lrn_forward(const BasicTensor<T>&, const LrnParams&);                                  \
  template BasicTensor<T> lrn_backward(const BasicTensor<T>&, const LrnParams&, const BasicTensor<T>&);          \
  template BasicTensor<T> fully_connected_forward(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                                  const BasicTensor<T>&);                                        \
  template FcGradients<T> fully_connected_backward(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                                   const BasicTensor<T>&);                                       \
  template DropoutResult<T> dropout_forward(const BasicTensor<T>&, double, Rng&, Mode);                          \
  template BasicTensor<T> dropout_backward(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> concat_flatten_forward(std::span<const BasicTensor<T>>);                               \
  template BasicTensor<T> concat_flatten_forward(const BasicTensor<T>&, const BasicTensor<T>&);                  \
  template std::vector<BasicTensor<T>> concat_flatten_backward(const BasicTensor<T>&, std::span<const Shape>);   \
  template SoftmaxLoss<T> softmax_logloss(const BasicTensor<T>&, std::span<const int>);                          \
  template BasicTensor<T> softmax_logloss_backward(const BasicTensor<T>&, std::span<const int>);                 \
  template void sgd_step(std::span<BasicTensor<T>>, std::span<const BasicTensor<T>>, SgdState<T>&);

MPCNN_INSTANTIATE(float)
MPCNN_INSTANTIATE(double)

#undef MPCNN_INSTANTIATE

}  // namespace mpcnn
