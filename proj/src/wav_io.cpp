#include "speccnn/wav_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace speccnn {

namespace {

void put_u32(std::ofstream& f, uint32_t x) {
  char b[4] = {static_cast<char>(x), static_cast<char>(x >> 8), static_cast<char>(x >> 16),
               static_cast<char>(x >> 24)};
  f.write(b, 4);
}

void put_u16(std::ofstream& f, uint16_t x) {
  char b[2] = {static_cast<char>(x), static_cast<char>(x >> 8)};
  f.write(b, 2);
}

}  // namespace

void write_wav16(const std::string& path, const std::vector<double>& samples,
                 int sample_rate_hz) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav16: cannot open " + path);

  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  f.write("RIFF", 4);
  put_u32(f, 36 + data_bytes);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(f, 16);
  put_u16(f, 1);  // PCM
  put_u16(f, 1);  // mono
  put_u32(f, static_cast<uint32_t>(sample_rate_hz));
  put_u32(f, static_cast<uint32_t>(sample_rate_hz) * 2);
  put_u16(f, 2);   // block align
  put_u16(f, 16);  // bits per sample
  f.write("data", 4);
  put_u32(f, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const int16_t q = static_cast<int16_t>(std::lround(c * 32767.0));
    put_u16(f, static_cast<uint16_t>(q));
  }
  if (!f) throw std::runtime_error("write_wav16: write failed for " + path);
}

}  // namespace speccnn
