#include "mpcnn/inspect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mpcnn/errors.hpp"

namespace mpcnn {

namespace {

std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

std::uint8_t scaled(float v, float lo, float hi) {
  if (!(hi > lo)) return 0;
  return static_cast<std::uint8_t>(std::clamp(std::floor((v - lo) / (hi - lo) * 255.0f + 0.5f), 0.0f, 255.0f));
}

}  // namespace

Tensor feature_maps(Network<float>& net, const Batch<float>& batch, std::size_t layer, std::size_t path) {
  if (path >= net.spec().paths.size())
    fail(ErrorKind::InvalidParameter, "path " + std::to_string(path) + " does not exist");
  const std::size_t blocks = net.conv_block_count(path);
  if (layer < 1 || layer > blocks)
    fail(ErrorKind::InvalidParameter, "layer must lie in [1, " + std::to_string(blocks) + "], got " + std::to_string(layer));
  if (batch.source.empty() ? batch.bilateral.dim(0) != 1 : batch.source.dim(0) != 1)
    fail(ErrorKind::InvalidShape, "feature maps are dumped for one image at a time");
  net.forward(batch, Mode::Infer);
  const auto& out = net.layer_output(path, net.block_end(path, layer));
  return out.reshaped({out.dim(1), out.dim(2), out.dim(3)});
}

ImageU8 map_to_image(std::span<const float> values, std::size_t height, std::size_t width) {
  if (values.size() != height * width) fail(ErrorKind::InvalidShape, "map size does not match its dimensions");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  ImageU8 img(height, width);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto v = scaled(values[i], *lo, *hi);
    img.pixels[3 * i] = img.pixels[3 * i + 1] = img.pixels[3 * i + 2] = v;
  }
  return img;
}

std::vector<std::filesystem::path> dump_feature_maps(Network<float>& net, const Batch<float>& batch, std::size_t layer,
                                                     const std::filesystem::path& out_dir, std::size_t path) {
  const auto maps = feature_maps(net, batch, layer, path);
  prepare_dir(out_dir);
  const std::size_t c = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  std::vector<std::filesystem::path> written;
  char name[64];
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::snprintf(name, sizeof name, "path%zu_layer%zu_ch%03zu.ppm", path, layer, ch);
    written.push_back(out_dir / name);
    write_ppm(written.back(), map_to_image(maps.data().subspan(ch * h * w, h * w), h, w));
  }
  return written;
}

std::vector<std::filesystem::path> dump_filters(const Network<float>& net, std::size_t path,
                                                const std::filesystem::path& out_dir) {
  if (path >= net.spec().paths.size())
    fail(ErrorKind::InvalidParameter, "path " + std::to_string(path) + " does not exist");
  const auto& w = net.params()[net.path_param_range(path).first];  // first conv weights [F, C, k, k]
  if (w.dim(1) != 3) fail(ErrorKind::InvalidParameter, "filter tiles need 3 input channels");
  prepare_dir(out_dir);
  const std::size_t filters = w.dim(0), k = w.dim(2), per = 3 * k * k;
  std::vector<std::filesystem::path> written;
  char name[64];
  for (std::size_t f = 0; f < filters; ++f) {
    const auto vals = w.data().subspan(f * per, per);
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    ImageU8 tile(k, k);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) tile.at(y, x, c) = scaled(vals[(c * k + y) * k + x], *lo, *hi);
    std::snprintf(name, sizeof name, "path%zu_filter%02zu.ppm", path, f);
    written.push_back(out_dir / name);
    write_ppm(written.back(), tile);
  }
  return written;
}

}  // namespace mpcnn
