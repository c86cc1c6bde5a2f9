#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mpcnn/image.hpp"
#include "mpcnn/tensor.hpp"

namespace mpcnn {

// Image complexity: the count of large first-level wavelet detail
// coefficients, used to rank the images of each class from simple to complex.
// Computed in double precision so threshold decisions are stable.

/// Luma 0.299 R + 0.587 G + 0.114 B on the [0, 1] scale, shape [H, W].
Tensor64 to_grayscale(const ImageU8& img);

struct WaveletDetail {
  Tensor64 horizontal;
  Tensor64 vertical;
  Tensor64 diagonal;
};

struct HaarLevel {
  Tensor64 approx;
  WaveletDetail detail;
};

/// One level of the orthonormal 2-D Haar transform. For each 2x2 block
/// {a, b; c, d}: approx = (a+b+c+d)/2, horizontal = (a+b-c-d)/2,
/// vertical = (a-b+c-d)/2, diagonal = (a-b-c+d)/2.
HaarLevel haar_level1(const Tensor64& gray);

/// Number of detail coefficients whose magnitude, divided by the largest
/// magnitude over all three subbands, is strictly above `threshold`.
std::size_t complexity_index(const WaveletDetail& detail, double threshold = 0.5);

/// Grayscale, one Haar level, then complexity_index.
std::size_t image_complexity(const ImageU8& img, double threshold = 0.5);

struct ComplexityScore {
  std::size_t id = 0;  // stable image id, used to break ties
  int label = 0;
  std::size_t c = 0;
};

/// Group per input score (1..n_groups), 0 for images beyond the kept ranks.
struct GroupAssignment {
  std::vector<int> group;
};

/// Within each class, sorts by (C, id) ascending and hands ranks
/// [g*per_group, (g+1)*per_group) to group g+1. Ranks past
/// n_groups*per_group are dropped. Fails if a class is too small.
GroupAssignment partition_groups(std::span<const ComplexityScore> scores, std::size_t n_groups,
                                 std::size_t per_group);

}  // namespace mpcnn
