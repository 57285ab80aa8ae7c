#pragma once

#include <complex>
#include <string>
#include <vector>

#include "speccnn/signal_synth.hpp"

namespace speccnn {

enum class WindowFn { rect, hann };
enum class Scaling { linear, log };

struct StftConfig {
  int window_len = 1024;
  int hop = 512;
  WindowFn window_fn = WindowFn::hann;
  int keep_bins = 64;
  Scaling scaling = Scaling::log;
};

using Spectrum = std::vector<std::complex<double>>;

// Magnitude matrix [keep_bins x n_frames], min-max normalized to [0, 1].
struct Spectrogram {
  std::vector<double> mag;  // row-major, row = frequency bin
  int bins = 0;
  int frames = 0;
  StftConfig config;
  double bin_hz = 0.0;
  double frame_s = 0.0;

  double at(int bin, int frame) const { return mag[static_cast<size_t>(bin) * frames + frame]; }
  double& at(int bin, int frame) { return mag[static_cast<size_t>(bin) * frames + frame]; }
};

// Windowed DFT frames at stride hop; trailing partial window dropped.
// Log scaling stores log(1 + |A_k|). If max == min the matrix is all zeros.
Spectrogram stft(const AudioSignal& signal, const StftConfig& cfg);

// Grayscale image, dark = high magnitude, low frequencies at the bottom.
void export_png(const Spectrogram& spec, const std::string& path);

// Cache file: one JSON header line, then the raw little-endian float32
// matrix row-major.
void write_spectrogram_cache(const Spectrogram& spec, const std::string& path);
Spectrogram read_spectrogram_cache(const std::string& path);

}  // namespace speccnn
