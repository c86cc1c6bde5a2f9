#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpcnn/random.hpp"
#include "mpcnn/tensor.hpp"

namespace mpcnn {

enum class Mode { Train, Infer };

/// Zero padding per border. The full-size layers pad symmetrically; the 224-pixel
/// input variant pads conv1 by (1, 2) to recover a 55x55 output.
struct Padding {
  std::size_t top = 0, left = 0, bottom = 0, right = 0;

  static Padding symmetric(std::size_t p) { return {p, p, p, p}; }
  bool operator==(const Padding&) const = default;
};

/// floor((in + pad_lo + pad_hi - kernel) / stride) + 1; throws when the result
/// would be below 1.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad_lo,
                             std::size_t pad_hi);

// --- convolution -----------------------------------------------------------

template <typename T>
struct ConvParams {
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  Padding pad;
  BasicTensor<T> weights;  // [out, in, k, k]
  BasicTensor<T> bias;     // [out]
};

template <typename T>
struct ConvGradients {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

/// Cross-correlation plus per-channel bias, NCHW.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& p);

/// Gradients w.r.t. input, weights and bias; weight and bias gradients are
/// summed over the batch.
template <typename T>
ConvGradients<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& p,
                                 const BasicTensor<T>& grad_output);

// --- max pooling -------------------------------------------------------------

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// The first maximum in row-major window order wins ties.
template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, std::size_t kernel, std::size_t stride);

/// Routes each upstream value to its window's argmax; overlapping windows accumulate.
template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& grad_output, std::span<const std::size_t> argmax,
                                  const Shape& input_shape);

// --- relu ----------------------------------------------------------------------

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

/// Passes the gradient where input > 0. The gradient at exactly 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

// --- local response normalization ---------------------------------------------

struct LrnParams {
  std::size_t depth_radius = 5;  // window size n across channels
  double k = 2.0;
  double alpha = 1e-4;
  double beta = 0.75;

  bool operator==(const LrnParams&) const = default;
};

void validate(const LrnParams& p);

/// out[c] = in[c] / (k + alpha/n * sum_{c' in window(c)} in[c']^2)^beta.
/// The window spans channels [c - (n-1)/2, c + n/2], clipped at the bounds.
template <typename T>
BasicTensor<T> lrn_forward(const BasicTensor<T>& input, const LrnParams& p);

template <typename T>
BasicTensor<T> lrn_backward(const BasicTensor<T>& input, const LrnParams& p, const BasicTensor<T>& grad_output);

// --- fully connected ---------------------------------------------------------------

template <typename T>
struct FcGradients {
  BasicTensor<T> input;
  BasicTensor<T> weights;
  BasicTensor<T> bias;
};

/// input[N, D] * weights[D, M] + bias[M].
template <typename T>
BasicTensor<T> fully_connected_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                       const BasicTensor<T>& bias);

template <typename T>
FcGradients<T> fully_connected_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                        const BasicTensor<T>& grad_output);

// --- dropout ----------------------------------------------------------------

template <typename T>
struct DropoutResult {
  BasicTensor<T> output;
  BasicTensor<T> mask;  // per-element multiplier (0 or 1/(1-rate)); empty in infer mode
};

/// Inverted dropout: survivors are scaled at train time, inference is identity.
template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& input, double rate, Rng& rng, Mode mode);

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_output, const BasicTensor<T>& mask);

// --- concat ---------------------------------------------------------------

/// Flattens every part per sample and concatenates them in order: [N, sum(volume)].
template <typename T>
BasicTensor<T> concat_flatten_forward(std::span<const BasicTensor<T>> parts);

/// Two-path form; both parts must have identical shapes.
template <typename T>
BasicTensor<T> concat_flatten_forward(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
std::vector<BasicTensor<T>> concat_flatten_backward(const BasicTensor<T>& grad_output,
                                                    std::span<const Shape> part_shapes);

// --- softmax + multinomial log-loss ---------------------------------------------

template <typename T>
struct SoftmaxLoss {
  BasicTensor<T> probs;
  double loss = 0.0;  // mean negative log-probability of the labels
};

template <typename T>
SoftmaxLoss<T> softmax_logloss(const BasicTensor<T>& logits, std::span<const int> labels);

/// (probs - onehot) / N.
template <typename T>
BasicTensor<T> softmax_logloss_backward(const BasicTensor<T>& probs, std::span<const int> labels);

// --- SGD ------------------------------------------------------------------------

template <typename T>
struct SgdState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<BasicTensor<T>> velocity;  // filled with zeros on first use
};

/// v <- momentum*v - lr*(grad + weight_decay*param); param <- param + v.
template <typename T>
void sgd_step(std::span<BasicTensor<T>> params, std::span<const BasicTensor<T>> grads, SgdState<T>& state);

}  // namespace mpcnn
