#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpcnn/layers.hpp"
#include "mpcnn/tensor.hpp"

namespace mpcnn {

// --- declarative architecture ------------------------------------------------

enum class LayerKind { Conv, Relu, Lrn, MaxPool };

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t out_channels = 0;  // conv
  std::size_t kernel = 0;        // conv, pool
  std::size_t stride = 1;        // conv, pool
  Padding pad;                   // conv
  LrnParams lrn;                 // lrn

  static LayerSpec conv(std::size_t out_channels, std::size_t kernel, std::size_t stride, Padding pad);
  static LayerSpec relu();
  static LayerSpec local_response_norm(const LrnParams& p = {});
  static LayerSpec maxpool(std::size_t kernel, std::size_t stride);

  bool operator==(const LayerSpec&) const = default;
};

enum class InputTransform { Source, Bilateral };

struct PathSpec {
  InputTransform input = InputTransform::Source;
  std::vector<LayerSpec> layers;

  bool operator==(const PathSpec&) const = default;
};

/// Paths run side by side over their own input version; their final maps are
/// flattened and concatenated, then go through
/// dropout -> FC(D -> hidden) -> ReLU -> dropout -> FC(hidden -> n_classes) -> softmax.
struct NetworkSpec {
  std::size_t in_channels = 3;
  std::size_t input_size = 227;
  std::size_t n_classes = 100;
  std::vector<PathSpec> paths;
  std::size_t hidden = 0;   // FC1 width; 0 means "same as the concat width"
  double dropout = 0.5;     // applied to the inputs of both FC layers; 0 disables
  double init_std = 0.01;   // weight init N(0, std^2); <= 0 selects sqrt(2 / fan_in)
  double input_scale = 1.0; // multiplies the mean-subtracted pixels before the first layer

  bool operator==(const NetworkSpec&) const = default;
};

/// Per path, the [C, H, W] output of every layer, computed statically.
/// Throws invalid-shape when some layer would produce an empty output.
std::vector<std::vector<Shape>> infer_path_shapes(const NetworkSpec& spec);
std::size_t concat_width(const NetworkSpec& spec);
std::size_t hidden_width(const NetworkSpec& spec);

/// The two-path layout (one path for the baseline):
/// conv(48,11,s4)-relu-lrn-pool(3,2), conv(192,5,p2)-relu-lrn-pool(3,2),
/// conv(256,3,p1)-relu-lrn, conv(256,3,p1)-relu-lrn, conv(192,3)-relu-lrn-pool(3,2).
/// crop 227 is native; crop 224 pads conv1 by 1 (top/left) and 2 (bottom/right).
NetworkSpec build_paper_architecture(std::size_t n_classes, std::size_t n_paths, std::size_t crop);

/// Desk-scale counterpart with the same block structure:
/// conv(16,5,p2)-relu-lrn-pool(3,2), conv(32,3,p1)-relu-lrn-pool(3,2),
/// conv(32,3,p1)-relu-lrn; FC hidden width 128, fan-in scaled init, inputs scaled by 1/64.
/// Any crop >= 16 works; 28 from 32-pixel images is the intended use.
NetworkSpec build_compact_architecture(std::size_t n_classes, std::size_t n_paths, std::size_t crop);

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

// --- runtime network -----------------------------------------------------------

template <typename T>
struct Batch {
  BasicTensor<T> source;     // [N, C, S, S]
  BasicTensor<T> bilateral;  // [N, C, S, S]; ignored unless a path consumes it
  std::vector<int> labels;   // may be empty for pure prediction
};

template <typename T>
struct ForwardResult {
  BasicTensor<T> probs;
  double loss = 0.0;  // 0 when the batch has no labels
};

template <typename T>
class Network {
 public:
  /// Weights drawn from N(0, init_std^2) in parameter order, biases zero.
  Network(NetworkSpec spec, std::uint64_t init_seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const std::vector<std::string>& param_names() const noexcept { return names_; }
  std::vector<BasicTensor<T>>& params() noexcept { return params_; }
  const std::vector<BasicTensor<T>>& params() const noexcept { return params_; }
  const std::vector<BasicTensor<T>>& gradients() const noexcept { return grads_; }
  std::size_t parameter_count() const;
  /// Index range [first, last) of the parameters owned by a path.
  std::pair<std::size_t, std::size_t> path_param_range(std::size_t path) const;

  /// Caches every intermediate needed by backward. Dropout masks are drawn
  /// from `dropout_seed` in train mode; infer mode never masks.
  ForwardResult<T> forward(const Batch<T>& batch, Mode mode, std::uint64_t dropout_seed = 0);

  /// Full backward pass into gradients(). Requires a labelled forward pass.
  void backward();
  /// Head only; returns the gradient w.r.t. the concatenated feature vector.
  BasicTensor<T> backward_head();
  /// Path stacks only, given the gradient of the concat output.
  void backward_paths(const BasicTensor<T>& concat_grad);

  /// backward() followed by one SGD update of every parameter; returns the
  /// loss of the cached forward pass.
  double backward_and_step(SgdState<T>& state);

  /// Output of layer `layer` of `path` from the last forward pass.
  const BasicTensor<T>& layer_output(std::size_t path, std::size_t layer) const;
  /// Layer index where conv block `block` (1-based) ends: its pool, or its
  /// last LRN/ReLU when the block has no pool.
  std::size_t block_end(std::size_t path, std::size_t block) const;
  std::size_t conv_block_count(std::size_t path) const;

  /// Hash of the ReLU sign pattern, pool argmax choices and dropout masks of
  /// the last forward pass. Finite differences are only meaningful between
  /// evaluations that share it.
  std::uint64_t activation_pattern() const;

  bool has_forward_cache() const noexcept { return cached_; }

 private:
  struct PathCache {
    std::vector<BasicTensor<T>> acts;  // acts[0] input, acts[i+1] output of layer i
    std::vector<std::vector<std::size_t>> argmax;
  };
  struct HeadCache {
    BasicTensor<T> concat, drop1_mask, fc1_in, fc1_out, relu_out, drop2_mask, fc2_in, probs;
    std::vector<int> labels;
    double loss = 0.0;
  };

  ConvParams<T> conv_view(std::size_t param_index, const LayerSpec& layer) const;
  void ensure_grads();

  NetworkSpec spec_;
  std::vector<std::string> names_;
  std::vector<BasicTensor<T>> params_;
  std::vector<BasicTensor<T>> grads_;
  std::vector<std::vector<std::size_t>> layer_param_;  // per path/layer: index of weights, or npos
  std::vector<std::pair<std::size_t, std::size_t>> path_ranges_;
  std::size_t fc1_ = 0, fc2_ = 0;

  std::vector<PathCache> path_cache_;
  HeadCache head_;
  bool cached_ = false;
};

extern template class Network<float>;
extern template class Network<double>;

/// Fraction of rows whose label is not among the k most probable classes;
/// equal probabilities rank the lower class index first.
template <typename T>
double topk_error(const BasicTensor<T>& probs, std::span<const int> labels, std::size_t k);

}  // namespace mpcnn
