#include "speccnn/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace speccnn {

namespace {

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_pow2(int n) {
  int m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace

DftPlan::DftPlan(int n) : n_(n) {
  if (n < 1) throw std::invalid_argument("DftPlan: size must be >= 1");
  m_ = is_pow2(n) ? n : next_pow2(2 * n - 1);

  bitrev_.assign(m_, 0);
  for (int i = 1, j = 0; i < m_; ++i) {
    int bit = m_ >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    bitrev_[i] = j;
  }

  twiddle_.resize(m_ / 2);
  for (int j = 0; j < m_ / 2; ++j) {
    const double ang = -2.0 * std::numbers::pi * j / m_;
    twiddle_[j] = {std::cos(ang), std::sin(ang)};
  }

  if (m_ != n_) {
    // Bluestein: w_k = e^{-i*pi*k^2/n}; k^2 reduced mod 2n keeps the angle small.
    chirp_.resize(n_);
    for (int k = 0; k < n_; ++k) {
      const long long k2 = (static_cast<long long>(k) * k) % (2LL * n_);
      const double ang = -std::numbers::pi * static_cast<double>(k2) / n_;
      chirp_[k] = {std::cos(ang), std::sin(ang)};
    }
    chirp_fft_.assign(m_, {0.0, 0.0});
    for (int k = 0; k < n_; ++k) {
      chirp_fft_[k] = std::conj(chirp_[k]);
      if (k > 0) chirp_fft_[m_ - k] = std::conj(chirp_[k]);
    }
    fft_pow2(chirp_fft_.data(), false);
  }
}

void DftPlan::fft_pow2(std::complex<double>* a, bool inverse) const {
  const int n = m_;
  for (int i = 0; i < n; ++i) {
    if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const int half = len / 2;
    const int step = n / len;
    for (int i = 0; i < n; i += len) {
      for (int j = 0; j < half; ++j) {
        std::complex<double> w = twiddle_[j * step];
        if (inverse) w = std::conj(w);
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + half] * w;
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= inv;
  }
}

void DftPlan::forward(const std::complex<double>* in, std::complex<double>* out) const {
  if (n_ == 1) {
    out[0] = in[0];
    return;
  }
  if (m_ == n_) {
    for (int i = 0; i < n_; ++i) out[i] = in[i];
    fft_pow2(out, false);
    return;
  }
  std::vector<std::complex<double>> buf(m_, {0.0, 0.0});
  for (int k = 0; k < n_; ++k) buf[k] = in[k] * chirp_[k];
  fft_pow2(buf.data(), false);
  for (int k = 0; k < m_; ++k) buf[k] *= chirp_fft_[k];
  fft_pow2(buf.data(), true);
  for (int k = 0; k < n_; ++k) out[k] = buf[k] * chirp_[k];
}

std::vector<std::complex<double>> DftPlan::forward(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != n_)
    throw std::invalid_argument("DftPlan::forward: length mismatch");
  std::vector<std::complex<double>> in(n_);
  for (int i = 0; i < n_; ++i) in[i] = {x[i], 0.0};
  std::vector<std::complex<double>> out(n_);
  forward(in.data(), out.data());
  return out;
}

std::vector<std::complex<double>> dft(const std::vector<double>& frame) {
  if (frame.empty()) throw std::invalid_argument("dft: empty frame");
  DftPlan plan(static_cast<int>(frame.size()));
  return plan.forward(frame);
}

}  // namespace speccnn
