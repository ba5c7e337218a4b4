#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "msrf/error.hpp"
#include "msrf/imagecore.hpp"

namespace msrf {
namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool ends_with(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

ImageBuffer decode_png(const std::vector<unsigned char>& bytes, const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DataError("cannot decode PNG '" + path + "': " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int n_channels = color ? 3 : 1;
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);
  if (width == 0 || height == 0) {
    png_image_free(&image);
    throw DataError("image '" + path + "' has zero dimensions");
  }
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    throw DataError("cannot decode PNG '" + path + "': " + image.message);
  }
  ImageBuffer img(width, height, n_channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * width + x) * n_channels;
      for (int c = 0; c < n_channels; ++c) img.channels[c](y, x) = buffer[base + c] / 255.0;
    }
  }
  return img;
}

// Skips whitespace and '#' comments between PNM header tokens.
std::size_t pnm_token(const std::vector<unsigned char>& b, std::size_t pos, long& value) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw DataError("malformed PNM header");
  value = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    value = value * 10 + (b[pos] - '0');
    if (value > (1L << 30)) throw DataError("malformed PNM header");
    ++pos;
  }
  return pos;
}

ImageBuffer decode_pnm(const std::vector<unsigned char>& bytes, const std::string& path) {
  const int n_channels = bytes[1] == '6' ? 3 : 1;
  long width = 0, height = 0, maxval = 0;
  std::size_t pos = 2;
  pos = pnm_token(bytes, pos, width);
  pos = pnm_token(bytes, pos, height);
  pos = pnm_token(bytes, pos, maxval);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw DataError("malformed PNM header in '" + path + "'");
  ++pos;
  if (width == 0 || height == 0) throw DataError("image '" + path + "' has zero dimensions");
  if (maxval <= 0 || maxval > 65535) throw DataError("unsupported PNM maxval in '" + path + "'");
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t needed = static_cast<std::size_t>(width) * height * n_channels * sample_bytes;
  if (bytes.size() - pos < needed) throw DataError("truncated PNM payload in '" + path + "'");

  ImageBuffer img(static_cast<int>(width), static_cast<int>(height), n_channels);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (long y = 0; y < height; ++y) {
    for (long x = 0; x < width; ++x) {
      for (int c = 0; c < n_channels; ++c) {
        unsigned v = bytes[pos];
        if (sample_bytes == 2) v = (v << 8) | bytes[pos + 1];
        pos += sample_bytes;
        img.channels[c](y, x) = std::min(1.0, v * scale);
      }
    }
  }
  return img;
}

unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

ImageBuffer load_image(const std::string& path) {
  const auto bytes = read_file(path);
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 3 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_pnm(bytes, path);
  }
  throw DataError("unsupported image format in '" + path + "'");
}

void save_image(const ImageBuffer& img, const std::string& path) {
  const int n = img.channel_count();
  if (n != 1 && n != 3) throw DataError("save_image: expected 1 or 3 channels");
  const int width = img.width(), height = img.height();
  if (width == 0 || height == 0) throw DataError("save_image: empty image");
  std::vector<unsigned char> buffer(static_cast<std::size_t>(width) * height * n);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < n; ++c)
        buffer[(static_cast<std::size_t>(y) * width + x) * n + c] = quantize(img.channels[c](y, x));

  if (ends_with(path, ".ppm") || ends_with(path, ".pgm")) {
    std::ofstream out(path, std::ios::binary);
    out << (n == 3 ? "P6" : "P5") << '\n' << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    if (!out) throw DataError("cannot write image '" + path + "'");
    return;
  }

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = n == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw DataError("cannot write PNG '" + path + "': " + image.message);
  }
}

}  // namespace msrf
