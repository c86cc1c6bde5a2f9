#include "mpcnn/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace mpcnn {

Tensor64 to_grayscale(const ImageU8& img) {
  if (img.height == 0 || img.width == 0) fail(ErrorKind::InvalidShape, "grayscale of an empty image");
  Tensor64 gray({img.height, img.width});
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    const auto* p = &img.pixels[i * 3];
    gray[i] = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
  }
  return gray;
}

HaarLevel haar_level1(const Tensor64& gray) {
  if (gray.rank() != 2) fail(ErrorKind::InvalidShape, "haar expects [H, W], got " + shape_to_string(gray.shape()));
  const std::size_t h = gray.dim(0), w = gray.dim(1);
  if (h % 2 || w % 2)
    fail(ErrorKind::InvalidShape, "haar needs even dimensions, got " + shape_to_string(gray.shape()));
  const Shape half{h / 2, w / 2};
  HaarLevel out{Tensor64(half), {Tensor64(half), Tensor64(half), Tensor64(half)}};
  for (std::size_t y = 0; y < h / 2; ++y)
    for (std::size_t x = 0; x < w / 2; ++x) {
      const double a = gray.at(2 * y, 2 * x), b = gray.at(2 * y, 2 * x + 1);
      const double c = gray.at(2 * y + 1, 2 * x), d = gray.at(2 * y + 1, 2 * x + 1);
      out.approx.at(y, x) = (a + b + c + d) / 2;
      out.detail.horizontal.at(y, x) = (a + b - c - d) / 2;
      out.detail.vertical.at(y, x) = (a - b + c - d) / 2;
      out.detail.diagonal.at(y, x) = (a - b - c + d) / 2;
    }
  return out;
}

std::size_t complexity_index(const WaveletDetail& detail, double threshold) {
  const Tensor64* bands[] = {&detail.horizontal, &detail.vertical, &detail.diagonal};
  if (detail.horizontal.empty()) fail(ErrorKind::InvalidShape, "empty wavelet subbands");
  for (const auto* b : bands)
    if (b->shape() != detail.horizontal.shape()) fail(ErrorKind::InvalidShape, "subband shapes differ");
  double peak = 0.0;
  for (const auto* b : bands)
    for (double v : b->data()) peak = std::max(peak, std::abs(v));
  if (peak == 0.0) return 0;
  std::size_t count = 0;
  for (const auto* b : bands)
    for (double v : b->data()) count += std::abs(v) / peak > threshold;
  return count;
}

std::size_t image_complexity(const ImageU8& img, double threshold) {
  return complexity_index(haar_level1(to_grayscale(img)).detail, threshold);
}

GroupAssignment partition_groups(std::span<const ComplexityScore> scores, std::size_t n_groups,
                                 std::size_t per_group) {
  if (n_groups == 0 || per_group == 0) fail(ErrorKind::InvalidParameter, "group count and size must be positive");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < scores.size(); ++i) by_class[scores[i].label].push_back(i);

  GroupAssignment out{std::vector<int>(scores.size(), 0)};
  const std::size_t keep = n_groups * per_group;
  for (auto& [label, idx] : by_class) {
    if (idx.size() < keep)
      fail(ErrorKind::Partition, "class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                                     " images, needs " + std::to_string(keep));
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a].c != scores[b].c) return scores[a].c < scores[b].c;
      return scores[a].id < scores[b].id;
    });
    for (std::size_t rank = 0; rank < keep; ++rank) out.group[idx[rank]] = static_cast<int>(rank / per_group) + 1;
  }
  return out;
}

}  // namespace mpcnn
