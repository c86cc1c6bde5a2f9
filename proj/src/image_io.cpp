#include <png.h>

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "mpcnn/image.hpp"

namespace mpcnn {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Decode, "cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageU8 decode_png(std::span<const std::uint8_t> bytes, const std::string& name) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    fail(ErrorKind::Decode, name + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    fail(ErrorKind::Decode, name + ": empty image");
  }
  ImageU8 out(image.height, image.width);
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::Decode, name + ": " + msg);
  }
  return out;
}

struct PnmCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t read_uint() {
    skip_space_and_comments();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail(ErrorKind::Decode, "malformed PNM header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1u << 24)) fail(ErrorKind::Decode, "PNM header value too large");
    }
    return v;
  }
};

}  // namespace

ImageU8 decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5'))
    fail(ErrorKind::Decode, "not a binary PPM/PGM");
  const bool gray = bytes[1] == '5';
  PnmCursor cur{bytes, 2};
  const std::size_t w = cur.read_uint();
  const std::size_t h = cur.read_uint();
  const std::size_t maxval = cur.read_uint();
  if (w == 0 || h == 0) fail(ErrorKind::Decode, "empty PNM image");
  if (maxval == 0 || maxval > 255) fail(ErrorKind::Decode, "only 8-bit PNM is supported");
  if (cur.pos >= bytes.size() || !std::isspace(bytes[cur.pos])) fail(ErrorKind::Decode, "malformed PNM header");
  ++cur.pos;
  const std::size_t channels = gray ? 1 : 3;
  if (bytes.size() - cur.pos < w * h * channels) fail(ErrorKind::Decode, "truncated PNM data");
  ImageU8 out(h, w);
  const std::uint8_t* src = bytes.data() + cur.pos;
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const unsigned v = src[i * channels + (gray ? 0 : c)];
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
    }
  return out;
}

ImageU8 read_image(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  static constexpr std::uint8_t kPngMagic[] = {0x89, 'P', 'N', 'G'};
  if (bytes.size() >= 4 && std::equal(std::begin(kPngMagic), std::end(kPngMagic), bytes.begin()))
    return decode_png(bytes, path.string());
  if (bytes.size() >= 2 && bytes[0] == 'P') {
    try {
      return decode_ppm(bytes);
    } catch (const Error& e) {
      fail(ErrorKind::Decode, path.string() + ": " + e.what());
    }
  }
  fail(ErrorKind::Decode, path.string() + ": unsupported or unreadable image format");
}

void write_ppm(const std::filesystem::path& path, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    fail(ErrorKind::Io, "cannot write " + path.string() + ": " + image.message);
}

}  // namespace mpcnn
