#include "mpcnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace mpcnn {

using json = nlohmann::json;

namespace {
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
}

LayerSpec LayerSpec::conv(std::size_t out_channels, std::size_t kernel, std::size_t stride, Padding pad) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.out_channels = out_channels;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = pad;
  return l;
}

LayerSpec LayerSpec::relu() { return {}; }

LayerSpec LayerSpec::local_response_norm(const LrnParams& p) {
  LayerSpec l;
  l.kind = LayerKind::Lrn;
  l.lrn = p;
  return l;
}

LayerSpec LayerSpec::maxpool(std::size_t kernel, std::size_t stride) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool;
  l.kernel = kernel;
  l.stride = stride;
  return l;
}

std::vector<std::vector<Shape>> infer_path_shapes(const NetworkSpec& spec) {
  if (spec.paths.empty()) fail(ErrorKind::InvalidParameter, "network needs at least one path");
  std::vector<std::vector<Shape>> out;
  for (const auto& path : spec.paths) {
    Shape cur{spec.in_channels, spec.input_size, spec.input_size};
    std::vector<Shape> shapes;
    for (const auto& l : path.layers) {
      switch (l.kind) {
        case LayerKind::Conv:
          if (l.out_channels == 0) fail(ErrorKind::InvalidParameter, "conv layer with zero filters");
          cur = {l.out_channels, conv_output_size(cur[1], l.kernel, l.stride, l.pad.top, l.pad.bottom),
                 conv_output_size(cur[2], l.kernel, l.stride, l.pad.left, l.pad.right)};
          break;
        case LayerKind::MaxPool:
          if (l.kernel > cur[1] || l.kernel > cur[2])
            fail(ErrorKind::InvalidShape, "pool kernel larger than its input");
          cur = {cur[0], conv_output_size(cur[1], l.kernel, l.stride, 0, 0),
                 conv_output_size(cur[2], l.kernel, l.stride, 0, 0)};
          break;
        case LayerKind::Lrn:
          validate(l.lrn);
          break;
        case LayerKind::Relu:
          break;
      }
      shapes.push_back(cur);
    }
    out.push_back(std::move(shapes));
  }
  return out;
}

std::size_t concat_width(const NetworkSpec& spec) {
  const auto shapes = infer_path_shapes(spec);
  std::size_t d = 0;
  for (std::size_t p = 0; p < spec.paths.size(); ++p) {
    const Shape last = shapes[p].empty() ? Shape{spec.in_channels, spec.input_size, spec.input_size} : shapes[p].back();
    d += shape_volume(last);
  }
  return d;
}

std::size_t hidden_width(const NetworkSpec& spec) { return spec.hidden ? spec.hidden : concat_width(spec); }

NetworkSpec build_paper_architecture(std::size_t n_classes, std::size_t n_paths, std::size_t crop) {
  if (n_paths != 1 && n_paths != 2) fail(ErrorKind::InvalidParameter, "the full architecture has 1 or 2 paths");
  if (crop != 224 && crop != 227) fail(ErrorKind::InvalidParameter, "crop must be 224 or 227");
  if (n_classes < 1) fail(ErrorKind::InvalidParameter, "need at least one class");
  const Padding conv1_pad = crop == 227 ? Padding{} : Padding{1, 1, 2, 2};
  const LrnParams lrn{};
  PathSpec path;
  auto& L = path.layers;
  const auto block = [&](std::size_t filters, std::size_t k, std::size_t stride, Padding pad, bool pool) {
    L.push_back(LayerSpec::conv(filters, k, stride, pad));
    L.push_back(LayerSpec::relu());
    L.push_back(LayerSpec::local_response_norm(lrn));
    if (pool) L.push_back(LayerSpec::maxpool(3, 2));
  };
  block(48, 11, 4, conv1_pad, true);
  block(192, 5, 1, Padding::symmetric(2), true);
  block(256, 3, 1, Padding::symmetric(1), false);
  block(256, 3, 1, Padding::symmetric(1), false);
  block(192, 3, 1, Padding{}, true);

  NetworkSpec spec;
  spec.in_channels = 3;
  spec.input_size = crop;
  spec.n_classes = n_classes;
  spec.paths.push_back(path);
  if (n_paths == 2) {
    path.input = InputTransform::Bilateral;
    spec.paths.push_back(path);
  }
  spec.hidden = 0;
  spec.dropout = 0.5;
  spec.init_std = 0.01;
  return spec;
}

NetworkSpec build_compact_architecture(std::size_t n_classes, std::size_t n_paths, std::size_t crop) {
  if (n_paths != 1 && n_paths != 2) fail(ErrorKind::InvalidParameter, "compact architecture has 1 or 2 paths");
  if (crop < 16) fail(ErrorKind::InvalidParameter, "compact architecture needs crop >= 16");
  if (n_classes < 1) fail(ErrorKind::InvalidParameter, "need at least one class");
  PathSpec path;
  path.layers = {LayerSpec::conv(16, 5, 1, Padding::symmetric(2)), LayerSpec::relu(), LayerSpec::local_response_norm(),
                 LayerSpec::maxpool(3, 2),
                 LayerSpec::conv(32, 3, 1, Padding::symmetric(1)), LayerSpec::relu(), LayerSpec::local_response_norm(),
                 LayerSpec::maxpool(3, 2),
                 LayerSpec::conv(32, 3, 1, Padding::symmetric(1)), LayerSpec::relu(), LayerSpec::local_response_norm()};
  NetworkSpec spec;
  spec.input_size = crop;
  spec.n_classes = n_classes;
  spec.paths.push_back(path);
  if (n_paths == 2) {
    path.input = InputTransform::Bilateral;
    spec.paths.push_back(path);
  }
  spec.hidden = 128;
  spec.dropout = 0.5;
  spec.init_std = 0.0;
  spec.input_scale = 1.0 / 64.0;
  return spec;
}

// --- JSON ----------------------------------------------------------------------

namespace {

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Relu: return "relu";
    case LayerKind::Lrn: return "lrn";
    case LayerKind::MaxPool: return "maxpool";
  }
  return "?";
}

LayerKind kind_from(const std::string& s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "relu") return LayerKind::Relu;
  if (s == "lrn") return LayerKind::Lrn;
  if (s == "maxpool") return LayerKind::MaxPool;
  fail(ErrorKind::CorruptCheckpoint, "unknown layer kind '" + s + "'");
}

json layer_json(const LayerSpec& l) {
  json j{{"kind", kind_name(l.kind)}};
  switch (l.kind) {
    case LayerKind::Conv:
      j["filters"] = l.out_channels;
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      j["pad"] = {l.pad.top, l.pad.left, l.pad.bottom, l.pad.right};
      break;
    case LayerKind::MaxPool:
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
      break;
    case LayerKind::Lrn:
      j["n"] = l.lrn.depth_radius;
      j["k"] = l.lrn.k;
      j["alpha"] = l.lrn.alpha;
      j["beta"] = l.lrn.beta;
      break;
    case LayerKind::Relu:
      break;
  }
  return j;
}

LayerSpec layer_from(const json& j) {
  const auto kind = kind_from(j.at("kind").get<std::string>());
  switch (kind) {
    case LayerKind::Conv: {
      const auto pad = j.at("pad").get<std::vector<std::size_t>>();
      if (pad.size() != 4) fail(ErrorKind::CorruptCheckpoint, "conv pad needs 4 entries");
      return LayerSpec::conv(j.at("filters"), j.at("kernel"), j.at("stride"), Padding{pad[0], pad[1], pad[2], pad[3]});
    }
    case LayerKind::MaxPool: return LayerSpec::maxpool(j.at("kernel"), j.at("stride"));
    case LayerKind::Lrn: return LayerSpec::local_response_norm({j.at("n"), j.at("k"), j.at("alpha"), j.at("beta")});
    case LayerKind::Relu: return LayerSpec::relu();
  }
  return {};
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) {
  json paths = json::array();
  for (const auto& p : spec.paths) {
    json layers = json::array();
    for (const auto& l : p.layers) layers.push_back(layer_json(l));
    paths.push_back({{"input", p.input == InputTransform::Source ? "source" : "bilateral"}, {"layers", layers}});
  }
  json j{{"in_channels", spec.in_channels}, {"input_size", spec.input_size}, {"n_classes", spec.n_classes},
         {"hidden", spec.hidden},           {"dropout", spec.dropout},       {"init_std", spec.init_std},
         {"input_scale", spec.input_scale}, {"paths", paths}};
  return j.dump();
}

NetworkSpec spec_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    NetworkSpec spec;
    spec.in_channels = j.at("in_channels");
    spec.input_size = j.at("input_size");
    spec.n_classes = j.at("n_classes");
    spec.hidden = j.at("hidden");
    spec.dropout = j.at("dropout");
    spec.init_std = j.at("init_std");
    spec.input_scale = j.value("input_scale", 1.0);
    for (const auto& pj : j.at("paths")) {
      PathSpec p;
      const auto input = pj.at("input").get<std::string>();
      if (input != "source" && input != "bilateral") fail(ErrorKind::CorruptCheckpoint, "unknown path input " + input);
      p.input = input == "source" ? InputTransform::Source : InputTransform::Bilateral;
      for (const auto& lj : pj.at("layers")) p.layers.push_back(layer_from(lj));
      spec.paths.push_back(std::move(p));
    }
    return spec;
  } catch (const json::exception& e) {
    fail(ErrorKind::CorruptCheckpoint, std::string("architecture header: ") + e.what());
  }
}

// --- Network -------------------------------------------------------------------

template <typename T>
Network<T>::Network(NetworkSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  if (spec_.n_classes < 1) fail(ErrorKind::InvalidParameter, "need at least one class");
  if (!(spec_.dropout >= 0.0 && spec_.dropout < 1.0)) fail(ErrorKind::InvalidParameter, "dropout must lie in [0, 1)");
  const auto shapes = infer_path_shapes(spec_);
  Rng rng(init_seed);
  const auto add_weights = [&](std::string name, Shape shape, std::size_t fan_in) {
    const double std_dev = spec_.init_std > 0 ? spec_.init_std : std::sqrt(2.0 / static_cast<double>(fan_in));
    BasicTensor<T> w(std::move(shape));
    for (auto& v : w.data()) v = static_cast<T>(rng.normal(0.0, std_dev));
    names_.push_back(std::move(name));
    params_.push_back(std::move(w));
  };
  const auto add_bias = [&](std::string name, std::size_t n) {
    names_.push_back(std::move(name));
    params_.emplace_back(Shape{n});
  };
  for (std::size_t p = 0; p < spec_.paths.size(); ++p) {
    const std::size_t first = params_.size();
    std::size_t channels = spec_.in_channels;
    std::size_t conv_index = 0;
    std::vector<std::size_t> lp;
    for (std::size_t i = 0; i < spec_.paths[p].layers.size(); ++i) {
      const auto& l = spec_.paths[p].layers[i];
      if (l.kind != LayerKind::Conv) {
        lp.push_back(kNone);
        continue;
      }
      const std::string prefix = "path" + std::to_string(p) + ".conv" + std::to_string(++conv_index);
      lp.push_back(params_.size());
      add_weights(prefix + ".weight", {l.out_channels, channels, l.kernel, l.kernel}, channels * l.kernel * l.kernel);
      add_bias(prefix + ".bias", l.out_channels);
      channels = shapes[p][i][0];
    }
    layer_param_.push_back(std::move(lp));
    path_ranges_.emplace_back(first, params_.size());
  }
  const std::size_t d = concat_width(spec_), h = hidden_width(spec_);
  fc1_ = params_.size();
  add_weights("fc1.weight", {d, h}, d);
  add_bias("fc1.bias", h);
  fc2_ = params_.size();
  add_weights("fc2.weight", {h, spec_.n_classes}, h);
  add_bias("fc2.bias", spec_.n_classes);
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename T>
std::pair<std::size_t, std::size_t> Network<T>::path_param_range(std::size_t path) const {
  return path_ranges_.at(path);
}

template <typename T>
ConvParams<T> Network<T>::conv_view(std::size_t param_index, const LayerSpec& layer) const {
  // Copies the parameter tensors; conv kernels only need read access.
  return ConvParams<T>{layer.out_channels, layer.kernel, layer.stride, layer.pad, params_[param_index],
                       params_[param_index + 1]};
}

template <typename T>
ForwardResult<T> Network<T>::forward(const Batch<T>& batch, Mode mode, std::uint64_t dropout_seed) {
  const Shape expected_tail{spec_.in_channels, spec_.input_size, spec_.input_size};
  const auto check_input = [&](const BasicTensor<T>& t, const char* what) {
    if (t.rank() != 4 || Shape(t.shape().begin() + 1, t.shape().end()) != expected_tail)
      fail(ErrorKind::InvalidShape, std::string(what) + " input " + shape_to_string(t.shape()) + " does not match [N," +
                                        shape_to_string(expected_tail).substr(1));
  };
  cached_ = false;
  path_cache_.assign(spec_.paths.size(), {});
  std::vector<BasicTensor<T>> finals;
  const std::size_t n = batch.source.empty() ? batch.bilateral.dim(0) : batch.source.dim(0);
  for (std::size_t p = 0; p < spec_.paths.size(); ++p) {
    const auto& path = spec_.paths[p];
    const BasicTensor<T>& input = path.input == InputTransform::Source ? batch.source : batch.bilateral;
    check_input(input, path.input == InputTransform::Source ? "source" : "bilateral");
    if (input.dim(0) != n) fail(ErrorKind::InvalidShape, "path inputs disagree on batch size");
    auto& cache = path_cache_[p];
    cache.acts.reserve(path.layers.size() + 1);
    cache.acts.push_back(input);
    if (spec_.input_scale != 1.0)
      for (auto& v : cache.acts.back().data()) v *= static_cast<T>(spec_.input_scale);
    cache.argmax.resize(path.layers.size());
    for (std::size_t i = 0; i < path.layers.size(); ++i) {
      const auto& l = path.layers[i];
      const auto& x = cache.acts.back();
      switch (l.kind) {
        case LayerKind::Conv: cache.acts.push_back(conv2d_forward(x, conv_view(layer_param_[p][i], l))); break;
        case LayerKind::Relu: cache.acts.push_back(relu_forward(x)); break;
        case LayerKind::Lrn: cache.acts.push_back(lrn_forward(x, l.lrn)); break;
        case LayerKind::MaxPool: {
          auto r = maxpool2d_forward(x, l.kernel, l.stride);
          cache.argmax[i] = std::move(r.argmax);
          cache.acts.push_back(std::move(r.output));
          break;
        }
      }
    }
    finals.push_back(cache.acts.back());
  }

  Rng rng(dropout_seed);
  head_ = {};
  head_.concat = concat_flatten_forward<T>(finals);
  auto d1 = dropout_forward(head_.concat, spec_.dropout, rng, mode);
  head_.fc1_in = std::move(d1.output);
  head_.drop1_mask = std::move(d1.mask);
  head_.fc1_out = fully_connected_forward(head_.fc1_in, params_[fc1_], params_[fc1_ + 1]);
  head_.relu_out = relu_forward(head_.fc1_out);
  auto d2 = dropout_forward(head_.relu_out, spec_.dropout, rng, mode);
  head_.fc2_in = std::move(d2.output);
  head_.drop2_mask = std::move(d2.mask);
  const auto logits = fully_connected_forward(head_.fc2_in, params_[fc2_], params_[fc2_ + 1]);

  ForwardResult<T> result;
  if (batch.labels.empty()) {
    std::vector<int> dummy(n, 0);
    result.probs = softmax_logloss(logits, dummy).probs;
  } else {
    auto sl = softmax_logloss(logits, batch.labels);
    result.probs = std::move(sl.probs);
    result.loss = sl.loss;
    head_.loss = sl.loss;
    head_.labels = batch.labels;
  }
  head_.probs = result.probs;
  cached_ = true;
  return result;
}

template <typename T>
void Network<T>::ensure_grads() {
  if (grads_.size() != params_.size()) {
    grads_.clear();
    for (const auto& p : params_) grads_.emplace_back(p.shape());
  }
}

template <typename T>
BasicTensor<T> Network<T>::backward_head() {
  if (!cached_) fail(ErrorKind::InvalidState, "backward called without a cached forward pass");
  if (head_.labels.empty()) fail(ErrorKind::InvalidState, "backward needs a labelled forward pass");
  ensure_grads();
  const auto dlogits = softmax_logloss_backward(head_.probs, head_.labels);
  auto g2 = fully_connected_backward(head_.fc2_in, params_[fc2_], dlogits);
  grads_[fc2_] = std::move(g2.weights);
  grads_[fc2_ + 1] = std::move(g2.bias);
  auto drelu = relu_backward(head_.fc1_out, dropout_backward(g2.input, head_.drop2_mask));
  auto g1 = fully_connected_backward(head_.fc1_in, params_[fc1_], drelu);
  grads_[fc1_] = std::move(g1.weights);
  grads_[fc1_ + 1] = std::move(g1.bias);
  return dropout_backward(g1.input, head_.drop1_mask);
}

template <typename T>
void Network<T>::backward_paths(const BasicTensor<T>& concat_grad) {
  if (!cached_) fail(ErrorKind::InvalidState, "backward called without a cached forward pass");
  ensure_grads();
  std::vector<Shape> shapes;
  for (const auto& c : path_cache_) shapes.push_back(c.acts.back().shape());
  auto grads = concat_flatten_backward<T>(concat_grad, shapes);
  for (std::size_t p = 0; p < spec_.paths.size(); ++p) {
    const auto& path = spec_.paths[p];
    auto& cache = path_cache_[p];
    BasicTensor<T> g = std::move(grads[p]);
    for (std::size_t i = path.layers.size(); i-- > 0;) {
      const auto& l = path.layers[i];
      const auto& x = cache.acts[i];
      switch (l.kind) {
        case LayerKind::Conv: {
          const std::size_t w = layer_param_[p][i];
          auto cg = conv2d_backward(x, conv_view(w, l), g);
          grads_[w] = std::move(cg.weights);
          grads_[w + 1] = std::move(cg.bias);
          // The input gradient of the first layer is never used.
          g = i == 0 ? BasicTensor<T>() : std::move(cg.input);
          break;
        }
        case LayerKind::Relu: g = relu_backward(x, g); break;
        case LayerKind::Lrn: g = lrn_backward(x, l.lrn, g); break;
        case LayerKind::MaxPool: g = maxpool2d_backward(g, cache.argmax[i], x.shape()); break;
      }
    }
  }
}

template <typename T>
void Network<T>::backward() {
  backward_paths(backward_head());
}

template <typename T>
double Network<T>::backward_and_step(SgdState<T>& state) {
  backward();
  sgd_step<T>(params_, grads_, state);
  return head_.loss;
}

template <typename T>
const BasicTensor<T>& Network<T>::layer_output(std::size_t path, std::size_t layer) const {
  if (!cached_) fail(ErrorKind::InvalidState, "no cached forward pass");
  return path_cache_.at(path).acts.at(layer + 1);
}

template <typename T>
std::size_t Network<T>::conv_block_count(std::size_t path) const {
  const auto& layers = spec_.paths.at(path).layers;
  return static_cast<std::size_t>(
      std::count_if(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.kind == LayerKind::Conv; }));
}

template <typename T>
std::size_t Network<T>::block_end(std::size_t path, std::size_t block) const {
  const auto& layers = spec_.paths.at(path).layers;
  if (block < 1 || block > conv_block_count(path))
    fail(ErrorKind::InvalidParameter, "layer " + std::to_string(block) + " outside [1, " +
                                          std::to_string(conv_block_count(path)) + "]");
  std::size_t seen = 0, i = 0;
  for (; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::Conv && ++seen == block) break;
  std::size_t end = i;
  while (end + 1 < layers.size() && layers[end + 1].kind != LayerKind::Conv) ++end;
  return end;
}

template <typename T>
std::uint64_t Network<T>::activation_pattern() const {
  if (!cached_) return 0;
  std::uint64_t h = 0x12345678ULL;
  const auto mix = [&h](std::uint64_t v) { h = mix64(h ^ v); };
  for (std::size_t p = 0; p < path_cache_.size(); ++p) {
    const auto& layers = spec_.paths[p].layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].kind == LayerKind::Relu)
        for (auto v : path_cache_[p].acts[i].data()) mix(v > T(0));
      for (auto a : path_cache_[p].argmax[i]) mix(a);
    }
  }
  for (auto v : head_.fc1_out.data()) mix(v > T(0));
  for (auto v : head_.drop1_mask.data()) mix(v != T(0));
  for (auto v : head_.drop2_mask.data()) mix(v != T(0));
  return h;
}

template class Network<float>;
template class Network<double>;

template <typename T>
double topk_error(const BasicTensor<T>& probs, std::span<const int> labels, std::size_t k) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size()) fail(ErrorKind::InvalidShape, "topk: probs/labels mismatch");
  if (labels.empty()) fail(ErrorKind::EmptyDataset, "topk over zero samples");
  const std::size_t n = probs.dim(0), classes = probs.dim(1);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::size_t>(labels[i]);
    if (label >= classes) fail(ErrorKind::InvalidLabel, "label outside class range");
    const T* row = probs.ptr() + i * classes;
    std::size_t ahead = 0;  // classes ranked before the true label
    for (std::size_t j = 0; j < classes; ++j)
      if (row[j] > row[label] || (row[j] == row[label] && j < label)) ++ahead;
    wrong += ahead >= k;
  }
  return static_cast<double>(wrong) / static_cast<double>(n);
}

template double topk_error(const BasicTensor<float>&, std::span<const int>, std::size_t);
template double topk_error(const BasicTensor<double>&, std::span<const int>, std::size_t);

}  // namespace mpcnn
