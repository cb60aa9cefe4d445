#pragma once

#include <png.h>

#include <cstdint>
#include <vector>

#include "chartrl/errors.hpp"
#include "chartrl/render_status.hpp"

namespace chartrl {

/// 8-bit RGB raster, row-major.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Raster() = default;
  Raster(int w, int h, std::uint8_t fill = 255)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
};

inline ImageBytes encode_png(const Raster& r) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, r.rgb.data(), 0, nullptr)) {
    throw ImageDecodeError(std::string("png encode failed: ") + img.message);
  }
  ImageBytes out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, r.rgb.data(), 0, nullptr)) {
    throw ImageDecodeError(std::string("png encode failed: ") + img.message);
  }
  out.resize(size);
  return out;
}

/// Throws ImageDecodeError when `bytes` is not a decodable PNG.
inline Raster decode_png(const ImageBytes& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw ImageDecodeError("not a decodable PNG image");
  }
  img.format = PNG_FORMAT_RGB;
  Raster r(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, r.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ImageDecodeError(std::string("png decode failed: ") + img.message);
  }
  return r;
}

}  // namespace chartrl
