#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpcnn/image.hpp"

namespace mpcnn {

namespace {

std::uint8_t round_to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

void require_nonempty(const ImageU8& img) {
  if (img.height == 0 || img.width == 0 || img.pixels.size() != img.height * img.width * 3)
    fail(ErrorKind::Decode, "empty or malformed image");
}

}  // namespace

ImageU8 resize_bilinear(const ImageU8& img, std::size_t height, std::size_t width) {
  require_nonempty(img);
  if (height == 0 || width == 0) fail(ErrorKind::InvalidParameter, "resize target must be positive");
  if (height == img.height && width == img.width) return img;
  ImageU8 out(height, width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    // Pixel centers map onto pixel centers.
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        const double bottom = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = round_to_u8(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

ImageU8 crop(const ImageU8& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  if (top + height > img.height || left + width > img.width)
    fail(ErrorKind::InvalidParameter, "crop window exceeds image bounds");
  ImageU8 out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const auto* src = &img.pixels[((top + y) * img.width + left) * 3];
    std::copy(src, src + width * 3, &out.pixels[y * width * 3]);
  }
  return out;
}

ImageU8 flip_horizontal(const ImageU8& img) {
  ImageU8 out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

ImageU8 canonicalize(const ImageU8& img, std::size_t size) {
  require_nonempty(img);
  if (img.height == size && img.width == size) return img;
  const std::size_t shorter = std::min(img.height, img.width);
  const double s = static_cast<double>(size) / static_cast<double>(shorter);
  const std::size_t h = img.height == shorter ? size : std::max<std::size_t>(size, std::lround(img.height * s));
  const std::size_t w = img.width == shorter ? size : std::max<std::size_t>(size, std::lround(img.width * s));
  const ImageU8 scaled = resize_bilinear(img, h, w);
  return crop(scaled, (h - size) / 2, (w - size) / 2, size, size);
}

void MeanAccumulator::add(const ImageU8& img) {
  if (n_ == 0) {
    h_ = img.height;
    w_ = img.width;
    acc_.assign(h_ * w_ * 3, 0.0);
  } else if (img.height != h_ || img.width != w_) {
    fail(ErrorKind::InvalidShape, "mean over images of different sizes");
  }
  for (std::size_t i = 0; i < acc_.size(); ++i) acc_[i] += img.pixels[i];
  ++n_;
}

MeanImage MeanAccumulator::finish(MeanMode mode) const {
  if (n_ == 0) fail(ErrorKind::EmptyDataset, "cannot compute a mean over zero images");
  const double n = static_cast<double>(n_);
  MeanImage mean{Tensor({h_, w_, 3})};
  if (mode == MeanMode::PerPosition) {
    for (std::size_t i = 0; i < acc_.size(); ++i) mean.values[i] = static_cast<float>(acc_[i] / n);
  } else {
    std::array<double, 3> channel{0, 0, 0};
    for (std::size_t i = 0; i < acc_.size(); ++i) channel[i % 3] += acc_[i];
    for (std::size_t i = 0; i < acc_.size(); ++i)
      mean.values[i] = static_cast<float>(channel[i % 3] / (n * static_cast<double>(h_ * w_)));
  }
  return mean;
}

MeanImage compute_mean(std::span<const ImageU8> images, MeanMode mode) {
  MeanAccumulator acc;
  for (const auto& img : images) acc.add(img);
  return acc.finish(mode);
}

void save_mean(const MeanImage& mean, const std::filesystem::path& ppm_path, const std::filesystem::path& txt_path) {
  const std::size_t h = mean.values.dim(0), w = mean.values.dim(1);
  ImageU8 rounded(h, w);
  for (std::size_t i = 0; i < rounded.pixels.size(); ++i) rounded.pixels[i] = round_to_u8(mean.values[i]);
  write_ppm(ppm_path, rounded);

  std::ofstream out(txt_path);
  if (!out) fail(ErrorKind::Io, "cannot write " + txt_path.string());
  out << "mpcnn-mean " << h << ' ' << w << '\n';
  char buf[64];
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof buf, "%a", static_cast<double>(mean.values[i * 3 + c]));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "short write to " + txt_path.string());
}

MeanImage load_mean(const std::filesystem::path& txt_path) {
  std::ifstream in(txt_path);
  if (!in) fail(ErrorKind::Io, "cannot open " + txt_path.string());
  std::string magic;
  std::size_t h = 0, w = 0;
  in >> magic >> h >> w;
  if (magic != "mpcnn-mean" || h == 0 || w == 0) fail(ErrorKind::Decode, txt_path.string() + ": not a mean sidecar");
  MeanImage mean{Tensor({h, w, 3})};
  std::string token;
  for (std::size_t i = 0; i < mean.values.size(); ++i) {
    if (!(in >> token)) fail(ErrorKind::Decode, txt_path.string() + ": truncated mean sidecar");
    mean.values[i] = std::strtof(token.c_str(), nullptr);
  }
  return mean;
}

Tensor subtract_mean(const ImageU8& img, const MeanImage& mean) {
  if (mean.values.shape() != Shape{img.height, img.width, 3})
    fail(ErrorKind::InvalidShape, "mean image " + shape_to_string(mean.values.shape()) + " does not match image " +
                                      std::to_string(img.height) + "x" + std::to_string(img.width));
  Tensor out({img.height, img.width, 3});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(img.pixels[i]) - mean.values[i];
  return out;
}

namespace {

void check_crop(std::size_t size, std::size_t crop) {
  if (crop == 0 || crop > size)
    fail(ErrorKind::InvalidParameter,
         "crop " + std::to_string(crop) + " must lie in [1, " + std::to_string(size) + "]");
}

}  // namespace

CropWindow draw_augmentation(std::size_t size, std::size_t crop, Rng& rng) {
  check_crop(size, crop);
  CropWindow w;
  w.top = rng.below(size - crop + 1);
  w.left = rng.below(size - crop + 1);
  w.flip = rng.bernoulli(0.5);
  return w;
}

CropWindow center_window(std::size_t size, std::size_t crop) {
  check_crop(size, crop);
  return {(size - crop) / 2, (size - crop) / 2, false};
}

Tensor extract_crop(const Tensor& hwc, const CropWindow& window, std::size_t crop) {
  if (hwc.rank() != 3 || hwc.dim(2) != 3) fail(ErrorKind::InvalidShape, "expected an H x W x 3 image tensor");
  const std::size_t h = hwc.dim(0), w = hwc.dim(1);
  check_crop(std::min(h, w), crop);
  if (window.top + crop > h || window.left + crop > w) fail(ErrorKind::InvalidParameter, "crop window out of bounds");
  Tensor out({3, crop, crop});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < crop; ++y)
      for (std::size_t x = 0; x < crop; ++x) {
        const std::size_t sx = window.left + (window.flip ? crop - 1 - x : x);
        out[(c * crop + y) * crop + x] = hwc[((window.top + y) * w + sx) * 3 + c];
      }
  return out;
}

Tensor augment_train(const Tensor& hwc, std::size_t crop, Rng& rng) {
  if (hwc.rank() != 3) fail(ErrorKind::InvalidShape, "expected an H x W x 3 image tensor");
  // Square canonical images are the norm; fall back to the shorter side otherwise.
  const std::size_t size = std::min(hwc.dim(0), hwc.dim(1));
  return extract_crop(hwc, draw_augmentation(size, crop, rng), crop);
}

Tensor center_crop(const Tensor& hwc, std::size_t crop) {
  if (hwc.rank() != 3) fail(ErrorKind::InvalidShape, "expected an H x W x 3 image tensor");
  return extract_crop(hwc, center_window(std::min(hwc.dim(0), hwc.dim(1)), crop), crop);
}

std::vector<std::size_t> oversample_choices(std::size_t count, std::size_t target, Rng& rng) {
  if (count == 0) fail(ErrorKind::EmptyClass, "cannot oversample an empty class");
  if (target < count)
    fail(ErrorKind::InvalidParameter,
         "oversample target " + std::to_string(target) + " below class size " + std::to_string(count));
  std::vector<std::size_t> picks;
  picks.reserve(target - count);
  for (std::size_t i = count; i < target; ++i) picks.push_back(rng.below(count));
  return picks;
}

std::vector<ImageU8> oversample(std::vector<ImageU8> images, std::size_t target, Rng& rng) {
  const auto picks = oversample_choices(images.size(), target, rng);
  images.reserve(target);
  for (auto idx : picks) images.push_back(flip_horizontal(images[idx]));
  return images;
}

ImageU8 bilateral_filter(const ImageU8& img, const BilateralParams& p) {
  if (p.half_kernel < 1 || !(p.sigma_spatial > 0) || !(p.sigma_range > 0))
    fail(ErrorKind::InvalidParameter, "bilateral filter needs half_kernel >= 1 and positive sigmas");
  if (img.pixels.empty()) return img;
  const auto r = static_cast<long>(p.half_kernel);
  const std::size_t side = 2 * p.half_kernel + 1;
  std::vector<double> spatial(side * side);
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx)
      spatial[(dy + r) * side + (dx + r)] =
          std::exp(-static_cast<double>(dy * dy + dx * dx) / (2.0 * p.sigma_spatial * p.sigma_spatial));
  // Intensity differences are multiples of 1/255, so the range kernel is a table.
  std::array<double, 256> range{};
  for (int d = 0; d < 256; ++d) {
    const double diff = d / 255.0;
    range[d] = std::exp(-diff * diff / (2.0 * p.sigma_range * p.sigma_range));
  }
  const long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  ImageU8 out(img.height, img.width);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const int center = img.at(y, x, c);
        double num = 0.0, den = 0.0;
        for (long dy = -r; dy <= r; ++dy) {
          const long yy = std::clamp(y + dy, 0L, h - 1);
          const double* srow = &spatial[(dy + r) * side];
          for (long dx = -r; dx <= r; ++dx) {
            const long xx = std::clamp(x + dx, 0L, w - 1);
            const int v = img.at(yy, xx, c);
            const double wgt = srow[dx + r] * range[std::abs(v - center)];
            num += wgt * v;
            den += wgt;
          }
        }
        out.at(y, x, c) = round_to_u8(num / den);
      }
  return out;
}

}  // namespace mpcnn
