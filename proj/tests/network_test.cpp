#include <gtest/gtest.h>

#include <cmath>

#include "mpcnn/errors.hpp"
#include "mpcnn/gradcheck.hpp"
#include "mpcnn/network.hpp"

using namespace mpcnn;

namespace {

template <typename T>
BasicTensor<T> random_input(std::size_t n, std::size_t size, Rng& rng, double amp = 1.0) {
  BasicTensor<T> t({n, 3, size, size});
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-amp, amp));
  return t;
}

NetworkSpec tiny_spec(std::size_t n_paths, double dropout = 0.0) {
  NetworkSpec spec;
  spec.input_size = 8;
  spec.n_classes = 3;
  spec.hidden = 12;
  spec.dropout = dropout;
  spec.init_std = 0.0;
  PathSpec path;
  path.layers = {LayerSpec::conv(4, 3, 1, Padding::symmetric(1)), LayerSpec::relu(),
                 LayerSpec::local_response_norm(), LayerSpec::maxpool(2, 2),
                 LayerSpec::conv(5, 3, 1, Padding::symmetric(1)), LayerSpec::relu()};
  spec.paths.push_back(path);
  if (n_paths == 2) {
    path.input = InputTransform::Bilateral;
    spec.paths.push_back(path);
  }
  return spec;
}

// Parameter count worked out from the layer table: per conv,
// filters * (in_channels * k * k + 1); the FC head is D*D + D + D*K + K.
std::size_t hand_parameter_count(std::size_t n_paths, std::size_t classes) {
  const std::size_t convs[5][3] = {{48, 3, 11}, {192, 48, 5}, {256, 192, 3}, {256, 256, 3}, {192, 256, 3}};
  std::size_t per_path = 0;
  for (const auto& c : convs) per_path += c[0] * (c[1] * c[2] * c[2] + 1);
  const std::size_t d = n_paths * 192 * 5 * 5;
  return n_paths * per_path + d * d + d + d * classes + classes;
}

}  // namespace

TEST(Architecture, ShapeChainAt227) {
  const auto spec = build_paper_architecture(100, 2, 227);
  const auto shapes = infer_path_shapes(spec);
  ASSERT_EQ(shapes.size(), 2u);
  for (const auto& path : shapes) {
    std::vector<std::size_t> sides{227};
    for (std::size_t i = 0; i < path.size(); ++i)
      if (spec.paths[0].layers[i].kind == LayerKind::Conv || spec.paths[0].layers[i].kind == LayerKind::MaxPool)
        sides.push_back(path[i][1]);
    EXPECT_EQ(sides, (std::vector<std::size_t>{227, 55, 27, 27, 13, 13, 13, 11, 5}));
    EXPECT_EQ(path.back(), (Shape{192, 5, 5}));
  }
  EXPECT_EQ(concat_width(spec), 9600u);
  EXPECT_EQ(concat_width(build_paper_architecture(100, 1, 227)), 4800u);
}

TEST(Architecture, Crop224UsesAsymmetricPadding) {
  const auto spec = build_paper_architecture(100, 2, 224);
  EXPECT_EQ(spec.paths[0].layers[0].pad, (Padding{1, 1, 2, 2}));
  const auto shapes = infer_path_shapes(spec);
  EXPECT_EQ(shapes[0][0], (Shape{48, 55, 55}));
  EXPECT_EQ(concat_width(spec), 9600u);
}

TEST(Architecture, UnsupportedConfigurations) {
  for (std::size_t crop : {200u, 225u, 256u}) EXPECT_THROW(build_paper_architecture(100, 2, crop), Error);
  EXPECT_THROW(build_paper_architecture(100, 3, 227), Error);
}

TEST(Architecture, LayerOrderPerBlock) {
  const auto spec = build_paper_architecture(10, 1, 227);
  std::string kinds;
  for (const auto& l : spec.paths[0].layers) kinds += "CRLP"[static_cast<int>(l.kind)];
  EXPECT_EQ(kinds, "CRLPCRLPCRLCRLCRLP");
}

TEST(Architecture, JsonRoundTrip) {
  auto spec = build_paper_architecture(37, 2, 224);
  spec.hidden = 17;
  EXPECT_EQ(spec_from_json(spec_to_json(spec)), spec);
  EXPECT_THROW(spec_from_json("{\"paths\": 3}"), Error);
  EXPECT_THROW(spec_from_json("not json"), Error);
}

TEST(FullNetwork, ParameterCountMatchesLayerTable) {
  EXPECT_EQ(hand_parameter_count(2, 100), 96576356u);
  const Network<float> two(build_paper_architecture(100, 2, 227), 1);
  EXPECT_EQ(two.parameter_count(), hand_parameter_count(2, 100));
  const Network<float> one(build_paper_architecture(100, 1, 227), 1);
  EXPECT_EQ(one.parameter_count(), hand_parameter_count(1, 100));
}

TEST(FullNetwork, RuntimeShapesMatchStaticChainAndFreshLossIsLogK) {
  for (std::size_t crop : {227u, 224u}) {
    const auto spec = build_paper_architecture(100, 2, crop);
    Network<float> net(spec, 7);
    Rng rng(crop);
    Batch<float> batch{random_input<float>(2, crop, rng, 128.0), random_input<float>(2, crop, rng, 128.0), {3, 99}};
    const auto r = net.forward(batch, Mode::Train, 5);
    EXPECT_NEAR(r.loss, std::log(100.0), 0.15) << crop;
    EXPECT_EQ(r.probs.shape(), (Shape{2, 100}));
    const auto shapes = infer_path_shapes(spec);
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t i = 0; i < shapes[p].size(); ++i) {
        Shape expected{2};
        expected.insert(expected.end(), shapes[p][i].begin(), shapes[p][i].end());
        EXPECT_EQ(net.layer_output(p, i).shape(), expected) << "crop " << crop << " path " << p << " layer " << i;
      }
  }
}

TEST(Network, InferIsDeterministicAndIgnoresDropoutSeed) {
  Network<float> net(tiny_spec(2, 0.5), 3);
  Rng rng(1);
  Batch<float> batch{random_input<float>(4, 8, rng), random_input<float>(4, 8, rng), {0, 1, 2, 0}};
  const auto a = net.forward(batch, Mode::Infer, 1);
  const auto b = net.forward(batch, Mode::Infer, 999);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.loss, b.loss);
  const auto t1 = net.forward(batch, Mode::Train, 1);
  const auto t2 = net.forward(batch, Mode::Train, 1);
  EXPECT_EQ(t1.probs, t2.probs);
  EXPECT_NE(net.forward(batch, Mode::Train, 2).probs, t1.probs);
}

TEST(Network, SinglePathIgnoresBilateralInput) {
  Network<float> net(tiny_spec(1), 4);
  Rng rng(2);
  Batch<float> batch{random_input<float>(2, 8, rng), random_input<float>(2, 8, rng), {0, 1}};
  const auto a = net.forward(batch, Mode::Infer);
  batch.bilateral = random_input<float>(2, 8, rng);
  EXPECT_EQ(net.forward(batch, Mode::Infer).probs, a.probs);
  batch.bilateral = {};
  EXPECT_EQ(net.forward(batch, Mode::Infer).probs, a.probs);
}

TEST(Network, TwoPathDependsOnBilateralInput) {
  Network<float> net(tiny_spec(2), 4);
  Rng rng(2);
  Batch<float> batch{random_input<float>(2, 8, rng), random_input<float>(2, 8, rng), {0, 1}};
  const auto a = net.forward(batch, Mode::Infer);
  batch.bilateral = random_input<float>(2, 8, rng);
  EXPECT_NE(net.forward(batch, Mode::Infer).probs, a.probs);
}

TEST(Network, ShapeMismatchIsRejected) {
  Network<float> net(tiny_spec(2), 4);
  Rng rng(2);
  Batch<float> batch{random_input<float>(2, 8, rng), random_input<float>(2, 9, rng), {0, 1}};
  try {
    net.forward(batch, Mode::Infer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidShape);
  }
  batch.bilateral = random_input<float>(3, 8, rng);
  EXPECT_THROW(net.forward(batch, Mode::Infer), Error);
}

TEST(Network, BackwardWithoutForwardIsInvalidState) {
  Network<float> net(tiny_spec(1), 4);
  SgdState<float> sgd;
  try {
    net.backward_and_step(sgd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidState);
  }
  Rng rng(3);
  net.forward({random_input<float>(1, 8, rng), {}, {}}, Mode::Infer);
  EXPECT_THROW(net.backward(), Error);  // unlabelled forward pass
}

TEST(Network, ParameterNamesAndPathRanges) {
  const Network<float> net(tiny_spec(2), 1);
  const std::vector<std::string> expected{"path0.conv1.weight", "path0.conv1.bias", "path0.conv2.weight",
                                          "path0.conv2.bias",   "path1.conv1.weight", "path1.conv1.bias",
                                          "path1.conv2.weight", "path1.conv2.bias",   "fc1.weight",
                                          "fc1.bias",           "fc2.weight",         "fc2.bias"};
  EXPECT_EQ(net.param_names(), expected);
  EXPECT_EQ(net.path_param_range(1), (std::pair<std::size_t, std::size_t>{4, 8}));
  EXPECT_EQ(net.params()[8].shape(), (Shape{2 * 5 * 4 * 4, 12}));
}

TEST(Network, BiasesStartAtZeroWeightsAtRequestedScale) {
  const Network<float> net(build_paper_architecture(10, 1, 227), 9);
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& p = net.params()[i];
    double sq = 0;
    for (float v : p.data()) sq += double(v) * v;
    const double rms = std::sqrt(sq / p.size());
    if (p.rank() == 1)
      EXPECT_EQ(rms, 0.0) << net.param_names()[i];
    else
      EXPECT_NEAR(rms, 0.01, 0.001) << net.param_names()[i];
  }
}

TEST(Network, WholeNetworkGradcheck) {
  const auto r = run_network_gradcheck(11);
  EXPECT_TRUE(r.passed) << r.max_relative_error;
  EXPECT_LE(r.max_relative_error, 1e-4);
  EXPECT_GT(r.checked, 10 * r.skipped);
}

TEST(Network, LayerGradchecks) {
  for (std::uint64_t seed : {1u, 2u, 3u})
    for (const auto& r : run_layer_gradchecks(seed)) EXPECT_LE(r.max_relative_error, 1e-4) << r.name << " seed " << seed;
}

TEST(Network, ConcatGradientIsolation) {
  Network<double> net(tiny_spec(2), 5);
  Rng rng(4);
  Batch<double> batch{random_input<double>(3, 8, rng), random_input<double>(3, 8, rng), {0, 1, 2}};
  net.forward(batch, Mode::Train, 8);
  auto g = net.backward_head();
  const std::size_t half = g.dim(1) / 2;
  for (std::size_t n = 0; n < g.dim(0); ++n)
    for (std::size_t j = half; j < g.dim(1); ++j) g.at(n, j) = 0.0;
  net.backward_paths(g);
  const auto [b0, e0] = net.path_param_range(0);
  const auto [b1, e1] = net.path_param_range(1);
  for (std::size_t i = b1; i < e1; ++i)
    for (double v : net.gradients()[i].data()) EXPECT_EQ(v, 0.0) << net.param_names()[i];
  double path0 = 0;
  for (std::size_t i = b0; i < e0; ++i)
    for (double v : net.gradients()[i].data()) path0 += std::abs(v);
  EXPECT_GT(path0, 0.0);
}

TEST(Network, FixedBatchLossNeverIncreasesOver50Steps) {
  Network<float> net(tiny_spec(2), 6);
  Rng rng(5);
  Batch<float> batch{random_input<float>(6, 8, rng), random_input<float>(6, 8, rng), {0, 1, 2, 0, 1, 2}};
  SgdState<float> sgd;
  sgd.learning_rate = 0.01;
  double prev = INFINITY;
  for (int step = 0; step < 50; ++step) {
    net.forward(batch, Mode::Train);
    const double loss = net.backward_and_step(sgd);
    EXPECT_LE(loss, prev + 1e-6) << "step " << step;
    prev = loss;
  }
}

TEST(Network, ZeroLearningRateLeavesParametersUnchanged) {
  Network<float> net(tiny_spec(2, 0.5), 6);
  const auto before = net.params();
  Rng rng(6);
  Batch<float> batch{random_input<float>(2, 8, rng), random_input<float>(2, 8, rng), {1, 2}};
  SgdState<float> sgd;
  sgd.learning_rate = 0.0;
  for (int i = 0; i < 3; ++i) {
    net.forward(batch, Mode::Train, i);
    net.backward_and_step(sgd);
  }
  EXPECT_EQ(net.params(), before);
}

TEST(Network, BlockEnds) {
  const Network<float> net(build_paper_architecture(10, 1, 227), 1);
  EXPECT_EQ(net.conv_block_count(0), 5u);
  EXPECT_EQ(net.block_end(0, 1), 3u);
  EXPECT_EQ(net.block_end(0, 3), 10u);
  EXPECT_EQ(net.block_end(0, 5), 17u);
  EXPECT_THROW(net.block_end(0, 0), Error);
  EXPECT_THROW(net.block_end(0, 6), Error);
}

// --- top-k --------------------------------------------------------------------------

TEST(TopK, PerfectPredictionsAndTies) {
  const Tensor probs({3, 4}, std::vector<float>{0.7f, 0.1f, 0.1f, 0.1f, 0.1f, 0.6f, 0.2f, 0.1f, 0.25f, 0.25f, 0.25f, 0.25f});
  const std::vector<int> labels{0, 1, 0};
  EXPECT_DOUBLE_EQ(topk_error(probs, labels, 1), 0.0);
  // A four-way tie ranks class 3 last, so it is outside the top 3.
  const std::vector<int> tie{0, 1, 3};
  EXPECT_DOUBLE_EQ(topk_error(probs, tie, 3), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(topk_error(probs, tie, 4), 0.0);
}

TEST(TopK, UniformRandomPredictorSimulation) {
  Rng rng(2024);
  const std::size_t n = 20000, k = 100;
  Tensor probs({n, k});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) probs.at(i, j) = static_cast<float>(rng.uniform());
    labels[i] = static_cast<int>(rng.below(k));
  }
  const double top1 = topk_error(probs, labels, 1), top5 = topk_error(probs, labels, 5);
  EXPECT_NEAR(top1, 0.99, 0.005);
  EXPECT_NEAR(top5, 0.95, 0.01);
  EXPECT_LE(top5, top1);
}

TEST(TopK, Top5NeverExceedsTop1) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor probs({30, 8});
    std::vector<int> labels(30);
    for (auto& v : probs.data()) v = static_cast<float>(rng.below(4));  // plenty of ties
    for (auto& l : labels) l = static_cast<int>(rng.below(8));
    EXPECT_LE(topk_error(probs, labels, 5), topk_error(probs, labels, 1));
  }
}

TEST(TopK, EmptyAndOutOfRange) {
  EXPECT_THROW(topk_error(Tensor({1, 3}), std::vector<int>{3}, 1), Error);
}
