#include <gtest/gtest.h>

#include <cmath>

#include "mpcnn/random.hpp"
#include "mpcnn/tensor.hpp"

using namespace mpcnn;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void expect_error(ErrorKind kind, const auto& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected error " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

}  // namespace

TEST(Tensor, AllocFills) {
  auto zeros = alloc<float>({2, 3}, 0.0f);
  EXPECT_EQ(zeros.size(), 6u);
  for (auto v : zeros.data()) EXPECT_EQ(v, 0.0f);

  auto single = alloc<float>({1}, 7.5f);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0], 7.5f);

  auto ones = alloc<float>({4, 4, 4}, 1.0f);
  EXPECT_EQ(ones.size(), 64u);
  EXPECT_EQ(sum(ones), 64.0f);
}

TEST(Tensor, AllocRejectsZeroDimension) {
  expect_error(ErrorKind::InvalidShape, [] { alloc<float>({2, 0}, 0.0f); });
  expect_error(ErrorKind::InvalidShape, [] { Tensor({3}, std::vector<float>{1, 2}); });
}

TEST(Tensor, Elementwise) {
  Tensor a({2}, {1, 2});
  Tensor b({2}, {3, 4});
  EXPECT_EQ(add(a, b).values(), (std::vector<float>{4, 6}));
  EXPECT_EQ(sub(b, a).values(), (std::vector<float>{2, 2}));
  EXPECT_EQ(mul(a, b).values(), (std::vector<float>{3, 8}));

  auto s = scale(Tensor({2}, {1, -2}), 0.1f);
  EXPECT_FLOAT_EQ(s[0], 0.1f);
  EXPECT_FLOAT_EQ(s[1], -0.2f);

  Tensor x({2}, {-1, 5});
  Tensor zero({2}, {0, 0});
  auto m = maximum(x, zero);
  // loop oracle
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(m[i], x[i] > zero[i] ? x[i] : zero[i]);
  EXPECT_EQ(m.values(), (std::vector<float>{0, 5}));

  expect_error(ErrorKind::InvalidShape, [] { add(Tensor({2}), Tensor({3})); });
}

TEST(Tensor, ElementwiseCommutesWithReshape) {
  Rng rng(3);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 3, 4}, rng);
  auto direct = add(a, b).reshaped({6, 4});
  auto reshaped = add(a.reshaped({6, 4}), b.reshaped({6, 4}));
  EXPECT_EQ(direct, reshaped);
}

TEST(Tensor, ReshapeRoundTripIsBitExact) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_tensor({2, 3, 4, 5}, rng);
    auto back = t.reshaped({6, 20}).reshaped({120}).reshaped({2, 3, 4, 5});
    EXPECT_EQ(back, t);
  }
  Tensor t({2, 3});
  expect_error(ErrorKind::InvalidShape, [&] { t.reshape({4, 2}); });
}

TEST(Tensor, MatmulSmallCases) {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {1, 1});
  EXPECT_EQ(matmul(a, b).values(), (std::vector<float>{3, 7}));

  Rng rng(5);
  auto x = random_tensor({3, 4}, rng);
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
  EXPECT_EQ(matmul(eye, x), x);

  EXPECT_EQ(matmul(Tensor({1, 9600}), Tensor({9600, 100})).shape(), (Shape{1, 100}));
  expect_error(ErrorKind::InvalidShape, [] { matmul(Tensor({2, 3}), Tensor({2, 3})); });
}

TEST(Tensor, MatmulMatchesTripleLoopOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor({8, 8}, rng);
    auto b = random_tensor({8, 8}, rng);
    auto c = matmul(a, b);
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) {
        double ref = 0.0;
        for (std::size_t k = 0; k < 8; ++k) ref += double(a.at(i, k)) * double(b.at(k, j));
        EXPECT_LE(std::abs(c.at(i, j) - ref), 1e-5 * std::max(1.0, std::abs(ref)));
      }
  }
}

TEST(Tensor, GemmTransposedVariantsAgree) {
  Rng rng(23);
  auto a = random_tensor({5, 7}, rng);
  auto b = random_tensor({7, 6}, rng);
  auto ref = matmul(a, b);
  auto at = transpose2d(a);
  auto bt = transpose2d(b);
  Tensor c1({5, 6}), c2({5, 6});
  gemm(true, false, 5, 6, 7, at.ptr(), b.ptr(), c1.ptr(), false);
  gemm(false, true, 5, 6, 7, a.ptr(), bt.ptr(), c2.ptr(), false);
  EXPECT_EQ(c1, ref);
  EXPECT_EQ(c2, ref);
}

TEST(Tensor, MatmulIsDeterministic) {
  Rng rng(29);
  auto a = random_tensor({33, 65}, rng);
  auto b = random_tensor({65, 17}, rng);
  EXPECT_EQ(matmul(a, b), matmul(a, b));
}

TEST(Tensor, Reductions) {
  EXPECT_EQ(sum(Tensor({3}, {1, 2, 3})), 6.0f);
  EXPECT_EQ(argmax(Tensor({3}, {0.1f, 0.7f, 0.2f})), 1u);
  EXPECT_EQ(argmax(Tensor({3}, {0.5f, 0.5f, 0.2f})), 0u);

  Tensor m({2, 2}, {1, 5, 4, 2});
  auto col_max = max(m, 0);
  EXPECT_EQ(col_max.shape(), (Shape{2}));
  for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(col_max[j], std::max(m.at(0, j), m.at(1, j)));
  EXPECT_EQ(col_max.values(), (std::vector<float>{4, 5}));
  EXPECT_EQ(sum(m, 1).values(), (std::vector<float>{6, 6}));
  EXPECT_EQ(argmax(m, 1), (std::vector<std::size_t>{1, 0}));
  EXPECT_EQ(max(Tensor({3}, {1, 9, 2}), 0).shape(), (Shape{1}));

  expect_error(ErrorKind::InvalidAxis, [&] { sum(m, 2); });
}
