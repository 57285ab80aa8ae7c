#pragma once

#include <string>
#include <vector>

namespace speccnn {

// 16-bit PCM mono WAV. Samples are clamped to [-1, 1] before quantization.
void write_wav16(const std::string& path, const std::vector<double>& samples,
                 int sample_rate_hz);

}  // namespace speccnn
