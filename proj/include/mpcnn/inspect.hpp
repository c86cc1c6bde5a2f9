#pragma once

#include <filesystem>
#include <vector>

#include "mpcnn/image.hpp"
#include "mpcnn/network.hpp"

namespace mpcnn {

/// Activations of conv block `layer` (1-based, taken after its pool, or after
/// its LRN when the block has no pool) for the single sample in `batch`.
/// Shape [C, H, W]. Runs an inference-mode forward pass.
Tensor feature_maps(Network<float>& net, const Batch<float>& batch, std::size_t layer, std::size_t path = 0);

/// Min-max scales a [H, W] map to 0..255; a constant map becomes black.
ImageU8 map_to_image(std::span<const float> values, std::size_t height, std::size_t width);

/// Writes one grayscale P6 image per channel of feature_maps(), named
/// path<P>_layer<L>_ch<NNN>.ppm. Returns the written paths in channel order.
std::vector<std::filesystem::path> dump_feature_maps(Network<float>& net, const Batch<float>& batch, std::size_t layer,
                                                     const std::filesystem::path& out_dir, std::size_t path = 0);

/// Writes each first-layer filter of `path` as a k x k RGB tile, min-max
/// scaled per filter, named path<P>_filter<NN>.ppm.
std::vector<std::filesystem::path> dump_filters(const Network<float>& net, std::size_t path,
                                                const std::filesystem::path& out_dir);

}  // namespace mpcnn
