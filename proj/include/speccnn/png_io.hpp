#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace speccnn {

// Minimal 8-bit grayscale PNG writer/reader (zlib-backed). The reader only
// accepts files this writer produces (color type 0, bit depth 8, filter 0).
void write_gray8_png(const std::string& path, int width, int height,
                     const std::vector<uint8_t>& pixels);

struct Gray8Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;
};

Gray8Image read_gray8_png(const std::string& path);

}  // namespace speccnn
