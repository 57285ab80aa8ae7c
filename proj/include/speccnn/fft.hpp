#pragma once

#include <complex>
#include <vector>

namespace speccnn {

// Forward discrete Fourier transform, X_k = sum_n x_n e^{-2*pi*i*k*n/N}.
// Radix-2 for powers of two, Bluestein's chirp-z otherwise, so any N is
// O(N log N). Plans precompute twiddles; reuse one plan across frames.
class DftPlan {
 public:
  explicit DftPlan(int n);

  int size() const { return n_; }

  void forward(const std::complex<double>* in, std::complex<double>* out) const;
  std::vector<std::complex<double>> forward(const std::vector<double>& x) const;

 private:
  void fft_pow2(std::complex<double>* a, bool inverse) const;

  int n_ = 0;
  int m_ = 0;  // pow2 working size (== n_ when n_ is a power of two)
  std::vector<int> bitrev_;                      // size m_
  std::vector<std::complex<double>> twiddle_;    // size m_/2, forward sign
  std::vector<std::complex<double>> chirp_;      // Bluestein w_k, size n_
  std::vector<std::complex<double>> chirp_fft_;  // FFT of the chirp filter, size m_
};

// One-shot convenience for tests and small frames.
std::vector<std::complex<double>> dft(const std::vector<double>& frame);

}  // namespace speccnn
