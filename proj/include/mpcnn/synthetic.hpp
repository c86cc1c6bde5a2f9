#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mpcnn/image.hpp"
#include "mpcnn/random.hpp"

namespace mpcnn {

// Seeded synthetic images for desk-scale experiments.

/// Independent uniform gray level per pixel.
ImageU8 noise_image(std::size_t size, Rng& rng);
/// A textured field under a flat sky: the bottom `fraction` of the rows is
/// uniform gray noise, the rest a constant level.
ImageU8 texture_image(std::size_t size, Rng& rng, double fraction = 0.5);
/// Left-to-right sigmoid ramp from dark to light, `width` pixels wide.
ImageU8 gradient_image(std::size_t size, double width = 4.0);
ImageU8 constant_image(std::size_t size, std::uint8_t value = 128);

enum class ShapeKind { Disk, Square, Triangle, Cross, Ring, HBar, VBar, Diamond, XMark, Frame };
constexpr std::size_t kShapeKinds = 10;

enum class Background { Plain, Noise };

struct ShapeSetOptions {
  std::size_t size = 32;
  Background background = Background::Plain;
  /// Noise backgrounds: per-pixel gray level uniform in mid +- amplitude
  /// (on the [0, 1] scale).
  double noise_amplitude = 0.5;
  /// When set, class c always draws in palette color c; otherwise the color
  /// is random and only the shape identifies the class.
  bool color_by_class = true;
  /// Small per-pixel jitter on the foreground (low-texture objects).
  double foreground_jitter = 0.0;
  /// Shape extent as a fraction of the image side.
  double min_scale = 0.45;
  double max_scale = 0.7;
};

struct LabeledImages {
  std::vector<ImageU8> images;
  std::vector<int> labels;
};

/// `per_class` images for each of `n_classes` (<= kShapeKinds) classes, class
/// c drawing ShapeKind c at a random position and scale. Deterministic in
/// `seed`; image i depends only on (seed, class, index within class).
LabeledImages make_shape_dataset(std::size_t n_classes, std::size_t per_class, const ShapeSetOptions& opt,
                                 std::uint64_t seed);

/// Renders one shape; exposed for tests.
ImageU8 render_shape(ShapeKind kind, const ShapeSetOptions& opt, Rng& rng, int color_index);

}  // namespace mpcnn
