#include "speccnn/spectrogram.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "speccnn/fft.hpp"
#include "speccnn/png_io.hpp"

namespace speccnn {

namespace {

void validate(const StftConfig& cfg) {
  if (cfg.window_len < 1) throw std::invalid_argument("stft: window_len must be >= 1");
  if (cfg.hop < 1 || cfg.hop > cfg.window_len)
    throw std::invalid_argument("stft: hop must lie in [1, window_len]");
  if (cfg.keep_bins < 1 || cfg.keep_bins > cfg.window_len / 2 + 1)
    throw std::invalid_argument("stft: keep_bins must lie in [1, N/2 + 1]");
}

std::vector<double> make_window(const StftConfig& cfg) {
  std::vector<double> w(cfg.window_len, 1.0);
  if (cfg.window_fn == WindowFn::hann && cfg.window_len > 1) {
    for (int i = 0; i < cfg.window_len; ++i)
      w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (cfg.window_len - 1)));
  }
  return w;
}

}  // namespace

Spectrogram stft(const AudioSignal& signal, const StftConfig& cfg) {
  validate(cfg);
  const int n = cfg.window_len;
  const int len = static_cast<int>(signal.samples.size());
  if (len < n) throw std::invalid_argument("stft: signal shorter than one window");

  Spectrogram spec;
  spec.config = cfg;
  spec.bins = cfg.keep_bins;
  spec.frames = (len - n) / cfg.hop + 1;
  spec.bin_hz = static_cast<double>(signal.sample_rate_hz) / n;
  spec.frame_s = static_cast<double>(cfg.hop) / signal.sample_rate_hz;
  spec.mag.assign(static_cast<size_t>(spec.bins) * spec.frames, 0.0);

  const std::vector<double> window = make_window(cfg);
  const DftPlan plan(n);

#pragma omp parallel for schedule(static) if (spec.frames > 1)
  for (int t = 0; t < spec.frames; ++t) {
    std::vector<std::complex<double>> frame(n), spectrum(n);
    const double* src = signal.samples.data() + static_cast<size_t>(t) * cfg.hop;
    for (int i = 0; i < n; ++i) frame[i] = {src[i] * window[i], 0.0};
    plan.forward(frame.data(), spectrum.data());
    for (int k = 0; k < spec.bins; ++k) {
      double m = std::abs(spectrum[k]);
      if (cfg.scaling == Scaling::log) m = std::log1p(m);
      spec.at(k, t) = m;
    }
  }

  const auto [mn, mx] = std::minmax_element(spec.mag.begin(), spec.mag.end());
  if (*mx > *mn) {
    const double lo = *mn, inv = 1.0 / (*mx - *mn);
    for (double& v : spec.mag) v = (v - lo) * inv;
  } else {
    std::fill(spec.mag.begin(), spec.mag.end(), 0.0);
  }
  return spec;
}

void export_png(const Spectrogram& spec, const std::string& path) {
  std::vector<uint8_t> pixels(static_cast<size_t>(spec.bins) * spec.frames);
  // Row 0 of the image is the highest kept bin; dark pixels mark energy.
  for (int y = 0; y < spec.bins; ++y) {
    const int bin = spec.bins - 1 - y;
    for (int x = 0; x < spec.frames; ++x) {
      const double v = std::clamp(spec.at(bin, x), 0.0, 1.0);
      pixels[static_cast<size_t>(y) * spec.frames + x] =
          static_cast<uint8_t>(255 - std::lround(v * 255.0));
    }
  }
  write_gray8_png(path, spec.frames, spec.bins, pixels);
}

void write_spectrogram_cache(const Spectrogram& spec, const std::string& path) {
  nlohmann::json header;
  header["version"] = 1;
  header["bins"] = spec.bins;
  header["frames"] = spec.frames;
  header["bin_hz"] = spec.bin_hz;
  header["frame_s"] = spec.frame_s;
  header["config"] = {
      {"window_len", spec.config.window_len},
      {"hop", spec.config.hop},
      {"window", spec.config.window_fn == WindowFn::hann ? "hann" : "rect"},
      {"keep_bins", spec.config.keep_bins},
      {"scaling", spec.config.scaling == Scaling::log ? "log" : "linear"},
  };
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_spectrogram_cache: cannot open " + path);
  f << header.dump() << '\n';
  std::vector<float> row(spec.mag.size());
  for (size_t i = 0; i < spec.mag.size(); ++i) row[i] = static_cast<float>(spec.mag[i]);
  f.write(reinterpret_cast<const char*>(row.data()),
          static_cast<std::streamsize>(row.size() * sizeof(float)));
  if (!f) throw std::runtime_error("write_spectrogram_cache: write failed for " + path);
}

Spectrogram read_spectrogram_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_spectrogram_cache: cannot open " + path);
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("read_spectrogram_cache: missing header in " + path);
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.value("version", 0) != 1)
    throw std::runtime_error("read_spectrogram_cache: unsupported version in " + path);

  Spectrogram spec;
  spec.bins = header.at("bins").get<int>();
  spec.frames = header.at("frames").get<int>();
  spec.bin_hz = header.at("bin_hz").get<double>();
  spec.frame_s = header.at("frame_s").get<double>();
  const auto& cfg = header.at("config");
  spec.config.window_len = cfg.at("window_len").get<int>();
  spec.config.hop = cfg.at("hop").get<int>();
  spec.config.window_fn =
      cfg.at("window").get<std::string>() == "hann" ? WindowFn::hann : WindowFn::rect;
  spec.config.keep_bins = cfg.at("keep_bins").get<int>();
  spec.config.scaling =
      cfg.at("scaling").get<std::string>() == "log" ? Scaling::log : Scaling::linear;

  const size_t count = static_cast<size_t>(spec.bins) * spec.frames;
  std::vector<float> raw(count);
  f.read(reinterpret_cast<char*>(raw.data()),
         static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<size_t>(f.gcount()) != count * sizeof(float))
    throw std::runtime_error("read_spectrogram_cache: truncated matrix in " + path);
  spec.mag.assign(raw.begin(), raw.end());
  return spec;
}

}  // namespace speccnn
