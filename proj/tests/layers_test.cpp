#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mpcnn/layers.hpp"

using namespace mpcnn;

namespace {

template <typename T = float>
BasicTensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  BasicTensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Direct sliding-window convolution: loops over n, f, oh, ow, c, ki, kj.
Tensor64 naive_conv(const Tensor64& x, const Tensor64& w, const Tensor64& b, std::size_t stride, Padding pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t f = w.dim(0), k = w.dim(2);
  const std::size_t oh = (h + pad.top + pad.bottom - k) / stride + 1;
  const std::size_t ow = (wd + pad.left + pad.right - k) / stride + 1;
  Tensor64 out({n, f, oh, ow});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < f; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = b[o];
          for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long iy = long(y * stride + ki) - long(pad.top);
                const long ix = long(xx * stride + kj) - long(pad.left);
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(wd)) continue;
                acc += x.at(i, ch, iy, ix) * w.at(o, ch, ki, kj);
              }
          out.at(i, o, y, xx) = acc;
        }
  return out;
}

template <typename T>
ConvParams<T> make_conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, Padding pad, Rng& rng) {
  ConvParams<T> p;
  p.out_channels = out;
  p.kernel = k;
  p.stride = stride;
  p.pad = pad;
  p.weights = random_tensor<T>({out, in, k, k}, rng);
  p.bias = random_tensor<T>({out}, rng);
  return p;
}

}  // namespace

TEST(Conv2d, FirstLayerShape) {
  ConvParams<float> p;
  p.out_channels = 48;
  p.kernel = 11;
  p.stride = 4;
  p.weights = Tensor({48, 3, 11, 11});
  p.bias = Tensor({48});
  EXPECT_EQ(conv2d_forward(Tensor({1, 3, 227, 227}), p).shape(), (Shape{1, 48, 55, 55}));
  // 224 input with (1, 2) padding recovers 55.
  p.pad = {1, 1, 2, 2};
  EXPECT_EQ(conv2d_forward(Tensor({1, 3, 224, 224}), p).shape(), (Shape{1, 48, 55, 55}));
}

TEST(Conv2d, OneByOneIdentity) {
  Rng rng(1);
  auto x = random_tensor({2, 1, 5, 4}, rng);
  ConvParams<float> p{1, 1, 1, {}, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1})};
  EXPECT_EQ(conv2d_forward(x, p), x);
}

TEST(Conv2d, OnesWindowSums) {
  ConvParams<float> p{1, 2, 1, {}, Tensor({1, 1, 2, 2}, 1.0f), Tensor({1})};
  auto out = conv2d_forward(Tensor({1, 1, 3, 3}, 1.0f), p);
  ASSERT_EQ(out.shape(), (Shape{1, 1, 2, 2}));
  for (auto v : out.data()) EXPECT_EQ(v, 4.0f);
}

TEST(Conv2d, Errors) {
  ConvParams<float> p{4, 3, 1, {}, Tensor({4, 2, 3, 3}), Tensor({4})};
  EXPECT_THROW(conv2d_forward(Tensor({1, 3, 8, 8}), p), Error);
  EXPECT_THROW(conv2d_forward(Tensor({1, 2, 2, 2}), p), Error);
}

TEST(Conv2d, MatchesNaiveOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng.below(3), f = 1 + rng.below(4), k = 1 + rng.below(4);
    const std::size_t stride = 1 + rng.below(3), pad = rng.below(3);
    const std::size_t h = k + rng.below(8), w = k + rng.below(8);
    auto p = make_conv<float>(c, f, k, stride, Padding::symmetric(pad), rng);
    auto x = random_tensor({2, c, h, w}, rng);
    auto got = conv2d_forward(x, p);
    auto ref = naive_conv(tensor_cast<double>(x), tensor_cast<double>(p.weights), tensor_cast<double>(p.bias), stride,
                          p.pad);
    ASSERT_EQ(got.shape(), ref.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
      EXPECT_LE(std::abs(got[i] - ref[i]), 1e-5 * std::max(1.0, std::abs(ref[i])));
  }
}

TEST(MaxPool, FirstPoolShapeAndConstant) {
  EXPECT_EQ(maxpool2d_forward(Tensor({1, 48, 55, 55}), 3, 2).output.shape(), (Shape{1, 48, 27, 27}));
  auto r = maxpool2d_forward(Tensor({1, 2, 6, 6}, 3.5f), 3, 2);
  for (auto v : r.output.data()) EXPECT_EQ(v, 3.5f);
  EXPECT_THROW(maxpool2d_forward(Tensor({1, 1, 2, 2}), 3, 1), Error);
}

TEST(MaxPool, WindowMax) {
  Tensor x({1, 1, 4, 4});
  std::iota(x.data().begin(), x.data().end(), 1.0f);
  auto r = maxpool2d_forward(x, 2, 2);
  EXPECT_EQ(r.output.values(), (std::vector<float>{6, 8, 14, 16}));
}

TEST(MaxPool, TieGoesToLowestIndex) {
  auto r = maxpool2d_forward(Tensor({1, 1, 2, 2}, 1.0f), 2, 2);
  EXPECT_EQ(r.argmax[0], 0u);
}

TEST(MaxPool, BackwardConservesGradientMass) {
  Rng rng(13);
  for (std::size_t stride : {2u, 3u}) {  // overlapping and disjoint windows
    auto x = random_tensor({2, 3, 9, 9}, rng);
    auto r = maxpool2d_forward(x, 3, stride);
    auto g = random_tensor(r.output.shape(), rng);
    auto gi = maxpool2d_backward(g, r.argmax, x.shape());
    EXPECT_NEAR(sum(gi), sum(g), 1e-4);
  }
}

TEST(Relu, ForwardBackward) {
  Tensor x({3}, {-2, 0, 3});
  EXPECT_EQ(relu_forward(x).values(), (std::vector<float>{0, 0, 3}));
  EXPECT_EQ(relu_forward(Tensor({4})), Tensor({4}));
  EXPECT_EQ(relu_backward(x, Tensor({3}, 1.0f)).values(), (std::vector<float>{0, 0, 1}));
}

TEST(Relu, Idempotent) {
  Rng rng(2);
  auto x = random_tensor({100}, rng);
  EXPECT_EQ(relu_forward(relu_forward(x)), relu_forward(x));
}

TEST(Lrn, Examples) {
  LrnParams p;  // k=2, n=5, alpha=1e-4, beta=0.75
  EXPECT_EQ(lrn_forward(Tensor({1, 4, 2, 2}), p), Tensor({1, 4, 2, 2}));

  Tensor x({1, 5, 1, 1});
  x[2] = 1.0f;
  auto y = lrn_forward(x, p);
  EXPECT_NEAR(y[2], 1.0 / std::pow(2.0 + 1e-4 / 5.0, 0.75), 1e-6);
  EXPECT_NEAR(y[2], 0.59459, 1e-5);

  EXPECT_EQ(lrn_forward(Tensor({1, 48, 55, 55}), p).shape(), (Shape{1, 48, 55, 55}));
  EXPECT_THROW(lrn_forward(x, LrnParams{0, 2, 1e-4, 0.75}), Error);
}

TEST(Lrn, MatchesDirectFormula) {
  Rng rng(19);
  LrnParams p{5, 2.0, 0.5, 0.75};  // large alpha so the window actually matters
  auto x = random_tensor<double>({2, 7, 3, 3}, rng, -2.0, 2.0);
  auto y = lrn_forward(x, p);
  for (std::size_t n = 0; n < 2; ++n)
    for (long c = 0; c < 7; ++c)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          double acc = 0;
          for (long cc = std::max(0L, c - 2); cc <= std::min(6L, c + 2); ++cc) acc += x.at(n, cc, i, j) * x.at(n, cc, i, j);
          const double ref = x.at(n, c, i, j) / std::pow(p.k + p.alpha / 5.0 * acc, p.beta);
          EXPECT_NEAR(y.at(n, c, i, j), ref, 1e-12);
        }
}

TEST(FullyConnected, Examples) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor x({1, 2}, {1, 2});
  EXPECT_EQ(fully_connected_forward(x, eye, Tensor({2})), x);
  EXPECT_EQ(fully_connected_forward(x, eye, Tensor({2}, 1.0f)).values(), (std::vector<float>{2, 3}));
  EXPECT_THROW(fully_connected_forward(x, Tensor({3, 2}), Tensor({2})), Error);
}

TEST(Dropout, IdentityCases) {
  Rng rng(1);
  auto x = random_tensor({50}, rng);
  EXPECT_EQ(dropout_forward(x, 0.0, rng, Mode::Train).output, x);
  EXPECT_EQ(dropout_forward(x, 0.0, rng, Mode::Infer).output, x);
  EXPECT_EQ(dropout_forward(x, 0.5, rng, Mode::Infer).output, x);
  EXPECT_THROW(dropout_forward(x, 1.0, rng, Mode::Train), Error);
  EXPECT_THROW(dropout_forward(x, -0.1, rng, Mode::Train), Error);
}

TEST(Dropout, KeepFractionAndMean) {
  Rng rng(42);
  Tensor x({10000}, 1.0f);
  auto r = dropout_forward(x, 0.5, rng, Mode::Train);
  std::size_t kept = 0;
  for (auto m : r.mask.data()) kept += m != 0.0f;
  EXPECT_NEAR(kept / 10000.0, 0.5, 0.02);
  EXPECT_NEAR(sum(r.output) / 10000.0, 1.0, 0.03);
  // backward uses the saved mask
  EXPECT_EQ(dropout_backward(Tensor({10000}, 1.0f), r.mask), r.mask);
}

TEST(Concat, FullWidthAndSlicing) {
  Rng rng(4);
  auto a = random_tensor({1, 192, 5, 5}, rng);
  auto out = concat_flatten_forward(a, a);
  ASSERT_EQ(out.shape(), (Shape{1, 9600}));
  for (std::size_t i = 0; i < 4800; ++i) EXPECT_EQ(out[i], out[i + 4800]);

  const Shape shapes[] = {a.shape(), a.shape()};
  auto parts = concat_flatten_backward(Tensor({1, 9600}, 1.0f), std::span<const Shape>(shapes));
  ASSERT_EQ(parts.size(), 2u);
  for (const auto& p : parts) EXPECT_EQ(p, Tensor({1, 192, 5, 5}, 1.0f));

  EXPECT_THROW(concat_flatten_forward(Tensor({1, 2, 5, 5}), Tensor({1, 3, 5, 5})), Error);
}

TEST(Concat, ForwardPlacesFirstPathFirstPerSample) {
  Tensor a({2, 1, 1, 2}, {1, 2, 3, 4});
  Tensor b({2, 1, 1, 2}, {5, 6, 7, 8});
  EXPECT_EQ(concat_flatten_forward(a, b).values(), (std::vector<float>{1, 2, 5, 6, 3, 4, 7, 8}));
}

TEST(SoftmaxLogLoss, Examples) {
  std::vector<int> labels(3, 7);
  auto r = softmax_logloss(Tensor({3, 100}), labels);
  EXPECT_NEAR(r.loss, std::log(100.0), 1e-6);
  EXPECT_NEAR(r.loss, 4.605170, 1e-6);

  Tensor logits({1, 2}, {1, 0});
  std::vector<int> one{0};
  auto r2 = softmax_logloss(logits, one);
  EXPECT_NEAR(r2.probs[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-6);
  EXPECT_NEAR(r2.probs[0], 0.731059, 1e-6);
  EXPECT_NEAR(r2.probs[1], 0.268941, 1e-6);

  std::vector<int> bad{2};
  try {
    softmax_logloss(logits, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidLabel);
  }
}

TEST(SoftmaxLogLoss, RowsNormalizeAndGradientRowsSumToZero) {
  Rng rng(8);
  auto logits = random_tensor({6, 10}, rng, -30.0, 30.0);
  std::vector<int> labels{0, 1, 2, 3, 9, 5};
  auto r = softmax_logloss(logits, labels);
  auto g = softmax_logloss_backward(r.probs, labels);
  for (std::size_t i = 0; i < 6; ++i) {
    double ps = 0, gs = 0;
    for (std::size_t j = 0; j < 10; ++j) {
      ps += r.probs[i * 10 + j];
      gs += g[i * 10 + j];
    }
    EXPECT_NEAR(ps, 1.0, 1e-6);
    EXPECT_NEAR(gs, 0.0, 1e-6);
  }
}

TEST(Sgd, Examples) {
  std::vector<Tensor> params{Tensor({1}, 1.0f)};
  std::vector<Tensor> zero_grad{Tensor({1})};
  SgdState<float> still{0.01, 0.9, 0.0, {}};
  sgd_step<float>(params, zero_grad, still);
  EXPECT_EQ(params[0][0], 1.0f);

  std::vector<Tensor> grads{Tensor({1}, 0.5f)};
  SgdState<float> plain{0.01, 0.0, 0.0, {}};
  sgd_step<float>(params, grads, plain);
  EXPECT_NEAR(params[0][0], 0.995, 1e-7);

  params[0][0] = 1.0f;
  SgdState<float> mom{0.01, 0.9, 0.0, {}};
  sgd_step<float>(params, grads, mom);
  EXPECT_NEAR(mom.velocity[0][0], -0.005, 1e-8);
  sgd_step<float>(params, grads, mom);
  EXPECT_NEAR(mom.velocity[0][0], -0.0095, 1e-8);
  EXPECT_NEAR(params[0][0], 0.9855, 1e-6);

  std::vector<Tensor> wrong{Tensor({2})};
  EXPECT_THROW(sgd_step<float>(params, wrong, mom), Error);
}

TEST(Sgd, NoMomentumNoDecayIsPlainGradientDescent) {
  Rng rng(31);
  std::vector<Tensor> params{random_tensor({3, 4}, rng)};
  std::vector<Tensor> grads{random_tensor({3, 4}, rng)};
  auto expected = params[0];
  const float lr = 0.05f;
  for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = expected[i] + (0.0f - lr * grads[0][i]);
  SgdState<float> s{lr, 0.0, 0.0, {}};
  sgd_step<float>(params, grads, s);
  EXPECT_EQ(params[0], expected);
}
