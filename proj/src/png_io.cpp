#include "speccnn/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace speccnn {

namespace {

constexpr uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_be32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

uint32_t get_be32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_chunk(std::vector<uint8_t>& out, const char type[4],
                 const std::vector<uint8_t>& data) {
  put_be32(out, static_cast<uint32_t>(data.size()));
  std::vector<uint8_t> body(type, type + 4);
  body.insert(body.end(), data.begin(), data.end());
  out.insert(out.end(), body.begin(), body.end());
  const uint32_t crc =
      crc32(0, body.data(), static_cast<uInt>(body.size()));
  put_be32(out, crc);
}

}  // namespace

void write_gray8_png(const std::string& path, int width, int height,
                     const std::vector<uint8_t>& pixels) {
  if (width <= 0 || height <= 0 ||
      pixels.size() != static_cast<size_t>(width) * static_cast<size_t>(height))
    throw std::invalid_argument("write_gray8_png: bad dimensions");

  std::vector<uint8_t> out(kSignature, kSignature + 8);

  std::vector<uint8_t> ihdr;
  put_be32(ihdr, static_cast<uint32_t>(width));
  put_be32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  write_chunk(out, "IHDR", ihdr);

  // Scanlines with filter byte 0.
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (width + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const uint8_t* row = pixels.data() + static_cast<size_t>(y) * width;
    raw.insert(raw.end(), row, row + width);
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> packed(packed_len);
  if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 6) !=
      Z_OK)
    throw std::runtime_error("write_gray8_png: deflate failed");
  packed.resize(packed_len);
  write_chunk(out, "IDAT", packed);
  write_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_gray8_png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write_gray8_png: write failed for " + path);
}

Gray8Image read_gray8_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_gray8_png: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    throw std::runtime_error("read_gray8_png: not a PNG file");

  Gray8Image img;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = get_be32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw std::runtime_error("read_gray8_png: truncated");
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const uint8_t* data = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      img.width = static_cast<int>(get_be32(data));
      img.height = static_cast<int>(get_be32(data + 4));
      if (data[8] != 8 || data[9] != 0)
        throw std::runtime_error("read_gray8_png: only 8-bit grayscale is supported");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (img.width <= 0 || img.height <= 0)
    throw std::runtime_error("read_gray8_png: missing IHDR");

  const size_t raw_len = static_cast<size_t>(img.height) * (img.width + 1);
  std::vector<uint8_t> raw(raw_len);
  uLongf dest_len = static_cast<uLongf>(raw_len);
  if (uncompress(raw.data(), &dest_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      dest_len != raw_len)
    throw std::runtime_error("read_gray8_png: inflate failed");

  img.pixels.resize(static_cast<size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    const uint8_t* row = raw.data() + static_cast<size_t>(y) * (img.width + 1);
    if (row[0] != 0) throw std::runtime_error("read_gray8_png: unsupported filter");
    std::memcpy(img.pixels.data() + static_cast<size_t>(y) * img.width, row + 1, img.width);
  }
  return img;
}

}  // namespace speccnn
