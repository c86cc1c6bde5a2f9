#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mpcnn/random.hpp"
#include "mpcnn/tensor.hpp"

namespace mpcnn {

/// Interleaved 8-bit RGB, row-major (H x W x 3).
struct ImageU8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  ImageU8() = default;
  ImageU8(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w * 3, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  bool operator==(const ImageU8&) const = default;
};

// --- I/O -----------------------------------------------------------------------

/// Decodes PNG or binary PNM (P6, and P5 promoted to RGB) by content, not by
/// extension. Grayscale, palette and alpha PNGs come back as 3-channel RGB.
ImageU8 read_image(const std::filesystem::path& path);
ImageU8 decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const std::filesystem::path& path, const ImageU8& img);
void write_png(const std::filesystem::path& path, const ImageU8& img);

// --- geometry --------------------------------------------------------------------

constexpr std::size_t kCanonicalSize = 256;

ImageU8 resize_bilinear(const ImageU8& img, std::size_t height, std::size_t width);
ImageU8 crop(const ImageU8& img, std::size_t top, std::size_t left, std::size_t height, std::size_t width);
ImageU8 flip_horizontal(const ImageU8& img);

/// Scales the shorter side to `size` (bilinear) and center-crops to size x size.
ImageU8 canonicalize(const ImageU8& img, std::size_t size = kCanonicalSize);

// --- mean image ------------------------------------------------------------------

enum class MeanMode { PerPosition, GlobalScalar };

/// Per-position, per-channel means (H x W x 3, HWC layout). In GlobalScalar
/// mode every position holds the per-channel mean over the whole set.
struct MeanImage {
  Tensor values;
};

MeanImage compute_mean(std::span<const ImageU8> images, MeanMode mode = MeanMode::PerPosition);

/// Streaming form of compute_mean, for sets read one image at a time.
class MeanAccumulator {
 public:
  void add(const ImageU8& img);
  std::size_t count() const noexcept { return n_; }
  MeanImage finish(MeanMode mode = MeanMode::PerPosition) const;

 private:
  std::size_t h_ = 0, w_ = 0, n_ = 0;
  std::vector<double> acc_;
};

/// Writes the rounded mean as a P6 PPM and the exact values (hex floats) to a
/// text sidecar; load_mean reads the sidecar.
void save_mean(const MeanImage& mean, const std::filesystem::path& ppm_path, const std::filesystem::path& txt_path);
MeanImage load_mean(const std::filesystem::path& txt_path);

/// Float HWC image minus the mean.
Tensor subtract_mean(const ImageU8& img, const MeanImage& mean);

// --- crops ------------------------------------------------------------------------

struct CropWindow {
  std::size_t top = 0;
  std::size_t left = 0;
  bool flip = false;

  bool operator==(const CropWindow&) const = default;
};

/// Uniform top-left offset in [0, size - crop]^2 and a fair coin for the mirror.
CropWindow draw_augmentation(std::size_t size, std::size_t crop, Rng& rng);
CropWindow center_window(std::size_t size, std::size_t crop);

/// Cuts a crop x crop window out of a float HWC image (optionally mirrored)
/// and returns it as CHW.
Tensor extract_crop(const Tensor& hwc, const CropWindow& window, std::size_t crop);

Tensor augment_train(const Tensor& hwc, std::size_t crop, Rng& rng);
Tensor center_crop(const Tensor& hwc, std::size_t crop);

// --- oversampling -------------------------------------------------------------------

/// Indices of existing items to duplicate (each drawn uniformly from the
/// original `count`) so the class grows to `target`.
std::vector<std::size_t> oversample_choices(std::size_t count, std::size_t target, Rng& rng);

/// Appends horizontally flipped copies of uniformly chosen originals until the
/// list holds `target` images.
std::vector<ImageU8> oversample(std::vector<ImageU8> images, std::size_t target, Rng& rng);

// --- bilateral filter -----------------------------------------------------------------

struct BilateralParams {
  std::size_t half_kernel = 5;
  double sigma_spatial = 3.0;
  double sigma_range = 0.15;  // on the [0, 1] intensity scale
};

/// Edge-preserving smoothing, each RGB channel independently, coordinates
/// clamped at the borders; results are rounded half-up back to 8 bits.
ImageU8 bilateral_filter(const ImageU8& img, const BilateralParams& p = {});

}  // namespace mpcnn
