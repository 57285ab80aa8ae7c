#pragma once

#include <complex>
#include <vector>

#include "speccnn/tensor.hpp"

// Serial reference implementations kept for testing and benchmarking.
// Deliberately naive: straight loops, no OpenMP, no tap-range tricks.
// Production code must never link this; tests compare against it, the
// bench target times it against the parallel kernels.
namespace speccnn::reference {

// Naive O(N^2) evaluation of X_k = sum_n x_n e^{-2*pi*i*k*n/N}.
std::vector<std::complex<double>> dft_naive(const std::vector<double>& x);
std::vector<std::complex<double>> dft_naive(const std::vector<std::complex<double>>& x);

void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& bias, int sh, int sw,
                    int ph, int pw, Tensor& out);
void conv2d_backward_input(const Tensor& dout, const Tensor& w, int sh, int sw, int ph, int pw,
                           Tensor& din);
void conv2d_backward_weights(const Tensor& dout, const Tensor& in, int kh, int kw, int sh,
                             int sw, int ph, int pw, std::vector<double>& dw,
                             std::vector<double>& db);

void dense_forward(const Tensor& in, const Tensor& w, const Tensor& bias, Tensor& out);
void dense_backward_input(const Tensor& dout, const Tensor& w, Tensor& din);
void dense_backward_weights(const Tensor& dout, const Tensor& in, std::vector<double>& dw,
                            std::vector<double>& db);

}  // namespace speccnn::reference
