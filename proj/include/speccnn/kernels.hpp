#pragma once

#include "speccnn/tensor.hpp"

namespace speccnn::kernels {

// Conv2d over NCHW tensors, weights {OC, IC, KH, KW}, explicit padding.
// out_h = (H + 2*ph - kh)/sh + 1, likewise for width.
// All OpenMP loops write disjoint outputs or reduce serially per output
// element, so results do not depend on the thread count.

std::vector<int> conv2d_out_shape(const std::vector<int>& in_shape, int oc, int kh, int kw,
                                  int sh, int sw, int ph, int pw);

void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& bias, int sh, int sw,
                    int ph, int pw, Tensor& out);

void conv2d_backward_input(const Tensor& dout, const Tensor& w, int sh, int sw, int ph, int pw,
                           Tensor& din);

// Accumulates (+=) into dw/db.
void conv2d_backward_weights(const Tensor& dout, const Tensor& in, int kh, int kw, int sh,
                             int sw, int ph, int pw, std::vector<double>& dw,
                             std::vector<double>& db);

// Dense affine layer: in {B, D}, w {U, D}, bias {U}, out {B, U}.
void dense_forward(const Tensor& in, const Tensor& w, const Tensor& bias, Tensor& out);
void dense_backward_input(const Tensor& dout, const Tensor& w, Tensor& din);
void dense_backward_weights(const Tensor& dout, const Tensor& in, std::vector<double>& dw,
                            std::vector<double>& db);

}  // namespace speccnn::kernels
