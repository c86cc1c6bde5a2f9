#include "mpcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpcnn/layers.hpp"
#include "mpcnn/network.hpp"
#include "mpcnn/random.hpp"

namespace mpcnn {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double check_gradient(Tensor64& x, const Tensor64& analytic, const std::function<double()>& loss,
                      const GradcheckOptions& opt) {
  if (x.shape() != analytic.shape()) fail(ErrorKind::InvalidShape, "gradcheck: gradient shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + opt.epsilon;
    const double up = loss();
    x[i] = saved - opt.epsilon;
    const double down = loss();
    x[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2 * opt.epsilon), opt.floor));
  }
  return worst;
}

void check_gradient_piecewise(Tensor64& x, const Tensor64& analytic, const std::function<double()>& loss,
                              const std::function<std::uint64_t()>& pattern, std::uint64_t base_pattern,
                              const GradcheckOptions& opt, GradcheckResult& result) {
  if (x.shape() != analytic.shape()) fail(ErrorKind::InvalidShape, "gradcheck: gradient shape mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + opt.epsilon;
    const double up = loss();
    const bool up_same = pattern() == base_pattern;
    x[i] = saved - opt.epsilon;
    const double down = loss();
    const bool down_same = pattern() == base_pattern;
    x[i] = saved;
    if (!up_same || !down_same) {
      ++result.skipped;
      continue;
    }
    ++result.checked;
    result.max_relative_error = std::max(
        result.max_relative_error, relative_error(analytic[i], (up - down) / (2 * opt.epsilon), opt.floor));
  }
}

namespace {

Tensor64 random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor64& a, const Tensor64& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

GradcheckResult finish(std::string name, double err, std::size_t checked, const GradcheckOptions& opt) {
  return {std::move(name), err, checked, 0, err <= opt.tolerance};
}

GradcheckResult check_conv(Rng& rng, const GradcheckOptions& opt) {
  ConvParams<double> p;
  p.out_channels = 4;
  p.kernel = 3;
  p.stride = 1;
  p.pad = Padding::symmetric(1);
  p.weights = random_tensor({4, 3, 3, 3}, rng);
  p.bias = random_tensor({4}, rng);
  auto x = random_tensor({2, 3, 8, 8}, rng);
  const auto upstream = random_tensor(conv2d_forward(x, p).shape(), rng);
  const auto g = conv2d_backward(x, p, upstream);
  const auto loss = [&] { return dot(conv2d_forward(x, p), upstream); };
  double err = check_gradient(x, g.input, loss, opt);
  err = std::max(err, check_gradient(p.weights, g.weights, loss, opt));
  err = std::max(err, check_gradient(p.bias, g.bias, loss, opt));
  return finish("conv2d", err, x.size() + p.weights.size() + p.bias.size(), opt);
}

GradcheckResult check_strided_conv(Rng& rng, const GradcheckOptions& opt) {
  ConvParams<double> p;
  p.out_channels = 3;
  p.kernel = 4;
  p.stride = 3;
  p.pad = {1, 1, 2, 2};
  p.weights = random_tensor({3, 2, 4, 4}, rng);
  p.bias = random_tensor({3}, rng);
  auto x = random_tensor({2, 2, 9, 9}, rng);
  const auto upstream = random_tensor(conv2d_forward(x, p).shape(), rng);
  const auto g = conv2d_backward(x, p, upstream);
  const auto loss = [&] { return dot(conv2d_forward(x, p), upstream); };
  double err = check_gradient(x, g.input, loss, opt);
  err = std::max(err, check_gradient(p.weights, g.weights, loss, opt));
  err = std::max(err, check_gradient(p.bias, g.bias, loss, opt));
  return finish("conv2d_strided_asymmetric_pad", err, x.size() + p.weights.size() + p.bias.size(), opt);
}

GradcheckResult check_maxpool(Rng& rng, const GradcheckOptions& opt) {
  // Distinct values at least 0.01 apart keep every window's argmax stable
  // under a 1e-3 perturbation.
  Tensor64 x({2, 2, 7, 7});
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>(order[i]) - 1.0;
  const auto fwd = maxpool2d_forward(x, 3, 2);
  const auto upstream = random_tensor(fwd.output.shape(), rng);
  const auto g = maxpool2d_backward(upstream, fwd.argmax, x.shape());
  const auto loss = [&] { return dot(maxpool2d_forward(x, 3, 2).output, upstream); };
  return finish("maxpool2d", check_gradient(x, g, loss, opt), x.size(), opt);
}

GradcheckResult check_relu(Rng& rng, const GradcheckOptions& opt) {
  auto x = random_tensor({3, 17}, rng);
  for (auto& v : x.data()) v += v >= 0 ? 0.05 : -0.05;  // away from the kink
  const auto upstream = random_tensor(x.shape(), rng);
  const auto g = relu_backward(x, upstream);
  const auto loss = [&] { return dot(relu_forward(x), upstream); };
  return finish("relu", check_gradient(x, g, loss, opt), x.size(), opt);
}

GradcheckResult check_lrn(Rng& rng, const GradcheckOptions& opt, const LrnParams& p, std::string name) {
  auto x = random_tensor({2, 7, 3, 3}, rng, -2.0, 2.0);
  const auto upstream = random_tensor(x.shape(), rng);
  const auto g = lrn_backward(x, p, upstream);
  const auto loss = [&] { return dot(lrn_forward(x, p), upstream); };
  return finish(std::move(name), check_gradient(x, g, loss, opt), x.size(), opt);
}

GradcheckResult check_fc(Rng& rng, const GradcheckOptions& opt) {
  auto x = random_tensor({3, 5}, rng);
  auto w = random_tensor({5, 4}, rng);
  auto b = random_tensor({4}, rng);
  const auto upstream = random_tensor({3, 4}, rng);
  const auto g = fully_connected_backward(x, w, upstream);
  const auto loss = [&] { return dot(fully_connected_forward(x, w, b), upstream); };
  double err = check_gradient(x, g.input, loss, opt);
  err = std::max(err, check_gradient(w, g.weights, loss, opt));
  err = std::max(err, check_gradient(b, g.bias, loss, opt));
  return finish("fully_connected", err, x.size() + w.size() + b.size(), opt);
}

GradcheckResult check_dropout(Rng& rng, const GradcheckOptions& opt) {
  auto x = random_tensor({4, 25}, rng);
  Rng mask_rng(rng.next_u64());
  const auto mask = dropout_forward(x, 0.5, mask_rng, Mode::Train).mask;  // frozen
  const auto upstream = random_tensor(x.shape(), rng);
  const auto g = dropout_backward(upstream, mask);
  const auto loss = [&] { return dot(mul(x, mask), upstream); };
  return finish("dropout", check_gradient(x, g, loss, opt), x.size(), opt);
}

GradcheckResult check_concat(Rng& rng, const GradcheckOptions& opt) {
  auto a = random_tensor({2, 3, 2, 2}, rng);
  auto b = random_tensor({2, 3, 2, 2}, rng);
  const auto upstream = random_tensor({2, 24}, rng);
  const Shape shapes[] = {a.shape(), b.shape()};
  const auto g = concat_flatten_backward<double>(upstream, shapes);
  const auto loss = [&] { return dot(concat_flatten_forward(a, b), upstream); };
  double err = check_gradient(a, g[0], loss, opt);
  err = std::max(err, check_gradient(b, g[1], loss, opt));
  return finish("concat_flatten", err, a.size() + b.size(), opt);
}

GradcheckResult check_softmax(Rng& rng, const GradcheckOptions& opt) {
  auto logits = random_tensor({4, 6}, rng, -3.0, 3.0);
  const std::vector<int> labels{0, 5, 2, 2};
  const auto g = softmax_logloss_backward(softmax_logloss(logits, labels).probs, labels);
  const auto loss = [&] { return softmax_logloss(logits, labels).loss; };
  return finish("softmax_logloss", check_gradient(logits, g, loss, opt), logits.size(), opt);
}

}  // namespace

std::vector<GradcheckResult> run_layer_gradchecks(std::uint64_t seed, const GradcheckOptions& opt) {
  Rng rng(seed);
  std::vector<GradcheckResult> out;
  out.push_back(check_conv(rng, opt));
  out.push_back(check_strided_conv(rng, opt));
  out.push_back(check_maxpool(rng, opt));
  out.push_back(check_relu(rng, opt));
  out.push_back(check_lrn(rng, opt, LrnParams{}, "lrn"));
  out.push_back(check_lrn(rng, opt, LrnParams{5, 2.0, 0.5, 0.75}, "lrn_strong"));
  out.push_back(check_lrn(rng, opt, LrnParams{4, 1.0, 0.3, 0.6}, "lrn_even_window"));
  out.push_back(check_fc(rng, opt));
  out.push_back(check_dropout(rng, opt));
  out.push_back(check_concat(rng, opt));
  out.push_back(check_softmax(rng, opt));
  return out;
}

GradcheckResult run_network_gradcheck(std::uint64_t seed, const GradcheckOptions& opt) {
  NetworkSpec spec;
  spec.in_channels = 3;
  spec.input_size = 8;
  spec.n_classes = 3;
  spec.hidden = 0;
  spec.dropout = 0.5;
  spec.init_std = 0.0;  // fan-in scaled, keeps pre-activations well away from 0
  PathSpec path;
  path.layers = {LayerSpec::conv(4, 3, 1, Padding::symmetric(1)),
                 LayerSpec::relu(),
                 LayerSpec::local_response_norm(LrnParams{5, 2.0, 0.5, 0.75}),
                 LayerSpec::maxpool(2, 2),
                 LayerSpec::conv(4, 3, 1, Padding::symmetric(1)),
                 LayerSpec::relu()};
  spec.paths.push_back(path);
  path.input = InputTransform::Bilateral;
  spec.paths.push_back(path);

  Network<double> net(spec, seed);
  Rng rng(derive_seed(seed, {1}));
  // Biases start at zero; randomize them so their gradients are exercised too.
  for (std::size_t i = 0; i < net.params().size(); ++i)
    if (net.params()[i].rank() == 1)
      for (auto& v : net.params()[i].data()) v = rng.uniform(-0.1, 0.1);
  Batch<double> batch{random_tensor({2, 3, 8, 8}, rng), random_tensor({2, 3, 8, 8}, rng), {0, 2}};
  const std::uint64_t dropout_seed = derive_seed(seed, {2});

  net.forward(batch, Mode::Train, dropout_seed);
  const auto base_pattern = net.activation_pattern();
  net.backward();
  const auto grads = net.gradients();

  GradcheckResult result{"network_two_path", 0.0, 0, 0, false};
  const auto loss = [&] { return net.forward(batch, Mode::Train, dropout_seed).loss; };
  const auto pattern = [&] { return net.activation_pattern(); };
  for (std::size_t i = 0; i < net.params().size(); ++i)
    check_gradient_piecewise(net.params()[i], grads[i], loss, pattern, base_pattern, opt, result);
  result.passed = result.max_relative_error <= opt.tolerance && result.checked > 0;
  return result;
}

}  // namespace mpcnn
