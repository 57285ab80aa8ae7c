#include "speccnn/reference.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace speccnn::reference {

std::vector<std::complex<double>> dft_naive(const std::vector<std::complex<double>>& x) {
  const int n = static_cast<int>(x.size());
  if (n == 0) throw std::invalid_argument("dft_naive: empty input");
  std::vector<std::complex<double>> out(n);
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (int i = 0; i < n; ++i) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(
                                                       (static_cast<long long>(k) * i) % n) /
                         n;
      acc += x[i] * std::complex<double>{std::cos(ang), std::sin(ang)};
    }
    out[k] = acc;
  }
  return out;
}

std::vector<std::complex<double>> dft_naive(const std::vector<double>& x) {
  std::vector<std::complex<double>> cx(x.size());
  for (size_t i = 0; i < x.size(); ++i) cx[i] = {x[i], 0.0};
  return dft_naive(cx);
}

void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& bias, int sh, int sw,
                    int ph, int pw, Tensor& out) {
  const int B = in.shape[0], IC = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int OC = w.shape[0], KH = w.shape[2], KW = w.shape[3];
  const int OH = out.shape[2], OW = out.shape[3];
  for (int b = 0; b < B; ++b)
    for (int oc = 0; oc < OC; ++oc)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = bias.values[oc];
          for (int ic = 0; ic < IC; ++ic)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const int y = oy * sh - ph + ky;
                const int x = ox * sw - pw + kx;
                if (y < 0 || y >= H || x < 0 || x >= W) continue;
                acc += w.at4(oc, ic, ky, kx) * in.at4(b, ic, y, x);
              }
          out.at4(b, oc, oy, ox) = acc;
        }
}

void conv2d_backward_input(const Tensor& dout, const Tensor& w, int sh, int sw, int ph, int pw,
                           Tensor& din) {
  const int B = din.shape[0], IC = din.shape[1], H = din.shape[2], W = din.shape[3];
  const int OC = w.shape[0], KH = w.shape[2], KW = w.shape[3];
  const int OH = dout.shape[2], OW = dout.shape[3];
  std::fill(din.values.begin(), din.values.end(), 0.0);
  for (int b = 0; b < B; ++b)
    for (int oc = 0; oc < OC; ++oc)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          const double g = dout.at4(b, oc, oy, ox);
          for (int ic = 0; ic < IC; ++ic)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const int y = oy * sh - ph + ky;
                const int x = ox * sw - pw + kx;
                if (y < 0 || y >= H || x < 0 || x >= W) continue;
                din.at4(b, ic, y, x) += g * w.at4(oc, ic, ky, kx);
              }
        }
}

void conv2d_backward_weights(const Tensor& dout, const Tensor& in, int kh, int kw, int sh,
                             int sw, int ph, int pw, std::vector<double>& dw,
                             std::vector<double>& db) {
  const int B = in.shape[0], IC = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int OC = dout.shape[1], OH = dout.shape[2], OW = dout.shape[3];
  for (int b = 0; b < B; ++b)
    for (int oc = 0; oc < OC; ++oc)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          const double g = dout.at4(b, oc, oy, ox);
          db[oc] += g;
          for (int ic = 0; ic < IC; ++ic)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int y = oy * sh - ph + ky;
                const int x = ox * sw - pw + kx;
                if (y < 0 || y >= H || x < 0 || x >= W) continue;
                dw[((static_cast<size_t>(oc) * IC + ic) * kh + ky) * kw + kx] +=
                    g * in.at4(b, ic, y, x);
              }
        }
}

void dense_forward(const Tensor& in, const Tensor& w, const Tensor& bias, Tensor& out) {
  const int B = in.shape[0], D = in.shape[1], U = w.shape[0];
  for (int b = 0; b < B; ++b)
    for (int u = 0; u < U; ++u) {
      double acc = bias.values[u];
      for (int d = 0; d < D; ++d) acc += w.at2(u, d) * in.at2(b, d);
      out.at2(b, u) = acc;
    }
}

void dense_backward_input(const Tensor& dout, const Tensor& w, Tensor& din) {
  const int B = din.shape[0], D = din.shape[1], U = w.shape[0];
  std::fill(din.values.begin(), din.values.end(), 0.0);
  for (int b = 0; b < B; ++b)
    for (int u = 0; u < U; ++u)
      for (int d = 0; d < D; ++d) din.at2(b, d) += dout.at2(b, u) * w.at2(u, d);
}

void dense_backward_weights(const Tensor& dout, const Tensor& in, std::vector<double>& dw,
                            std::vector<double>& db) {
  const int B = in.shape[0], D = in.shape[1], U = dout.shape[1];
  for (int b = 0; b < B; ++b)
    for (int u = 0; u < U; ++u) {
      const double g = dout.at2(b, u);
      db[u] += g;
      for (int d = 0; d < D; ++d) dw[static_cast<size_t>(u) * D + d] += g * in.at2(b, d);
    }
}

}  // namespace speccnn::reference
