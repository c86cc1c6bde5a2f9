#include "mpcnn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "mpcnn/errors.hpp"

namespace mpcnn {

namespace {

std::uint8_t to_u8(double v01) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v01 * 255.0 + 0.5), 0.0, 255.0));
}

// Ten saturated colors, far apart in RGB.
constexpr std::array<std::array<double, 3>, kShapeKinds> kPalette{{
    {0.90, 0.10, 0.10},
    {0.10, 0.75, 0.15},
    {0.15, 0.25, 0.95},
    {0.95, 0.85, 0.10},
    {0.80, 0.15, 0.85},
    {0.10, 0.85, 0.85},
    {0.98, 0.55, 0.05},
    {0.55, 0.30, 0.10},
    {0.98, 0.98, 0.98},
    {0.05, 0.05, 0.05},
}};

// Inside test for a shape centered at the origin with half-extent r.
bool inside(ShapeKind kind, double dx, double dy, double r) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  const double bar = 0.28 * r;
  switch (kind) {
    case ShapeKind::Disk: return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square: return ax <= 0.8 * r && ay <= 0.8 * r;
    case ShapeKind::Triangle: return dy <= 0.8 * r && dy >= -r && ax <= (dy + r) * 0.55;
    case ShapeKind::Cross: return (ax <= bar && ay <= r) || (ay <= bar && ax <= r);
    case ShapeKind::Ring: {
      const double d2 = dx * dx + dy * dy;
      return d2 <= r * r && d2 >= 0.5 * r * r;
    }
    case ShapeKind::HBar: return ax <= r && ay <= 0.3 * r;
    case ShapeKind::VBar: return ay <= r && ax <= 0.3 * r;
    case ShapeKind::Diamond: return ax + ay <= r;
    case ShapeKind::XMark: return std::abs(ax - ay) <= bar && ax <= 0.85 * r;
    case ShapeKind::Frame: return ax <= 0.85 * r && ay <= 0.85 * r && (ax >= 0.5 * r || ay >= 0.5 * r);
  }
  return false;
}

}  // namespace

ImageU8 noise_image(std::size_t size, Rng& rng) {
  ImageU8 img(size, size);
  for (std::size_t i = 0; i < size * size; ++i)
    img.pixels[3 * i] = img.pixels[3 * i + 1] = img.pixels[3 * i + 2] = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

ImageU8 texture_image(std::size_t size, Rng& rng, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) fail(ErrorKind::InvalidParameter, "texture fraction outside [0, 1]");
  ImageU8 img(size, size, 170);
  const auto first = static_cast<std::size_t>(std::lround(static_cast<double>(size) * (1.0 - fraction)));
  for (std::size_t y = first; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x)
      img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

ImageU8 gradient_image(std::size_t size, double width) {
  ImageU8 img(size, size);
  const double mid = static_cast<double>(size) / 2.0;
  for (std::size_t x = 0; x < size; ++x) {
    const auto v = to_u8(1.0 / (1.0 + std::exp(-(static_cast<double>(x) - mid) / width)));
    for (std::size_t y = 0; y < size; ++y) img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = v;
  }
  return img;
}

ImageU8 constant_image(std::size_t size, std::uint8_t value) { return ImageU8(size, size, value); }

ImageU8 render_shape(ShapeKind kind, const ShapeSetOptions& opt, Rng& rng, int color_index) {
  const std::size_t n = opt.size;
  ImageU8 img(n, n);
  // Background.
  const double base = opt.background == Background::Plain ? rng.uniform(0.35, 0.65) : 0.5;
  for (std::size_t i = 0; i < n * n; ++i) {
    double v = base;
    if (opt.background == Background::Noise) v += rng.uniform(-opt.noise_amplitude, opt.noise_amplitude);
    img.pixels[3 * i] = img.pixels[3 * i + 1] = img.pixels[3 * i + 2] = to_u8(v);
  }
  // Foreground color.
  std::array<double, 3> color;
  if (color_index >= 0) {
    color = kPalette[static_cast<std::size_t>(color_index) % kShapeKinds];
  } else {
    color = kPalette[rng.below(kShapeKinds)];
  }
  const double r = 0.5 * n * rng.uniform(opt.min_scale, opt.max_scale);
  const double margin = std::min(r, 0.5 * n - 1.0);
  const double cx = rng.uniform(margin, n - margin), cy = rng.uniform(margin, n - margin);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      if (!inside(kind, x + 0.5 - cx, y + 0.5 - cy, r)) continue;
      for (std::size_t c = 0; c < 3; ++c) {
        double v = color[c];
        if (opt.foreground_jitter > 0) v += rng.uniform(-opt.foreground_jitter, opt.foreground_jitter);
        img.at(y, x, c) = to_u8(v);
      }
    }
  return img;
}

LabeledImages make_shape_dataset(std::size_t n_classes, std::size_t per_class, const ShapeSetOptions& opt,
                                 std::uint64_t seed) {
  if (n_classes == 0 || n_classes > kShapeKinds)
    fail(ErrorKind::InvalidParameter, "shape datasets support 1.." + std::to_string(kShapeKinds) + " classes");
  if (opt.size < 8) fail(ErrorKind::InvalidParameter, "synthetic images need at least 8 pixels per side");
  LabeledImages out;
  for (std::size_t i = 0; i < per_class; ++i)
    for (std::size_t c = 0; c < n_classes; ++c) {
      Rng rng(derive_seed(seed, {c, i}));
      out.images.push_back(render_shape(static_cast<ShapeKind>(c), opt, rng,
                                        opt.color_by_class ? static_cast<int>(c) : -1));
      out.labels.push_back(static_cast<int>(c));
    }
  return out;
}

}  // namespace mpcnn
