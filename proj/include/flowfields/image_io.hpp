#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowfields/image.hpp"

namespace flowfields {

// 16-bit interleaved image (used for the KITTI flow encoding).
struct Image16 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint16_t> data;

  std::uint16_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Loads an 8-bit PNG (RGB/gray) or binary PPM/PGM. 16-bit inputs are
// rejected with a descriptive error.
Rgb8Image load_rgb(const std::string& path);

void write_png8(const std::string& path, const Rgb8Image& img);
Image16 load_png16(const std::string& path);
void write_png16(const std::string& path, const Image16& img);

}  // namespace flowfields
