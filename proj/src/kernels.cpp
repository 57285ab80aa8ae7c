#include "speccnn/kernels.hpp"

#include <algorithm>
#include <stdexcept>

namespace speccnn::kernels {

namespace {

// Valid output range [lo, hi) for one kernel tap so that the input index
// ox*sw - pw + kx stays inside [0, W).
inline void tap_range(int out_w, int in_w, int sw, int pw, int kx, int& lo, int& hi) {
  const int off = kx - pw;
  lo = off < 0 ? (-off + sw - 1) / sw : 0;
  hi = std::min(out_w, off < in_w ? (in_w - 1 - off) / sw + 1 : 0);
}

}  // namespace

std::vector<int> conv2d_out_shape(const std::vector<int>& in_shape, int oc, int kh, int kw,
                                  int sh, int sw, int ph, int pw) {
  if (in_shape.size() != 4) throw std::invalid_argument("conv2d: expected NCHW input");
  const int h = in_shape[2], w = in_shape[3];
  const int oh = (h + 2 * ph - kh) / sh + 1;
  const int ow = (w + 2 * pw - kw) / sw + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: kernel larger than padded input");
  return {in_shape[0], oc, oh, ow};
}

void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& bias, int sh, int sw,
                    int ph, int pw, Tensor& out) {
  const int B = in.shape[0], IC = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int OC = w.shape[0], KH = w.shape[2], KW = w.shape[3];
  const int OH = out.shape[2], OW = out.shape[3];

#pragma omp parallel for collapse(2) schedule(static) if (B * OC > 1 && out.size() > 4096)
  for (int b = 0; b < B; ++b) {
    for (int oc = 0; oc < OC; ++oc) {
      const double bv = bias.values[oc];
      for (int oy = 0; oy < OH; ++oy) {
        double* orow = &out.values[((static_cast<size_t>(b) * OC + oc) * OH + oy) * OW];
        std::fill(orow, orow + OW, bv);
        const int y0 = oy * sh - ph;
        for (int ic = 0; ic < IC; ++ic) {
          for (int ky = 0; ky < KH; ++ky) {
            const int y = y0 + ky;
            if (y < 0 || y >= H) continue;
            const double* irow = &in.values[((static_cast<size_t>(b) * IC + ic) * H + y) * W];
            const double* wrow =
                &w.values[((static_cast<size_t>(oc) * IC + ic) * KH + ky) * KW];
            for (int kx = 0; kx < KW; ++kx) {
              const double wv = wrow[kx];
              int lo, hi;
              tap_range(OW, W, sw, pw, kx, lo, hi);
              const double* ip = irow + kx - pw;
              if (sw == 1) {
                for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * ip[ox];
              } else {
                for (int ox = lo; ox < hi; ++ox) orow[ox] += wv * ip[ox * sw];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const Tensor& dout, const Tensor& w, int sh, int sw, int ph, int pw,
                           Tensor& din) {
  const int B = din.shape[0], IC = din.shape[1], H = din.shape[2], W = din.shape[3];
  const int OC = w.shape[0], KH = w.shape[2], KW = w.shape[3];
  const int OH = dout.shape[2], OW = dout.shape[3];
  std::fill(din.values.begin(), din.values.end(), 0.0);

#pragma omp parallel for schedule(static) if (B > 1 && din.size() > 4096)
  for (int b = 0; b < B; ++b) {
    for (int oc = 0; oc < OC; ++oc) {
      for (int oy = 0; oy < OH; ++oy) {
        const double* drow = &dout.values[((static_cast<size_t>(b) * OC + oc) * OH + oy) * OW];
        const int y0 = oy * sh - ph;
        for (int ic = 0; ic < IC; ++ic) {
          for (int ky = 0; ky < KH; ++ky) {
            const int y = y0 + ky;
            if (y < 0 || y >= H) continue;
            double* irow = &din.values[((static_cast<size_t>(b) * IC + ic) * H + y) * W];
            const double* wrow =
                &w.values[((static_cast<size_t>(oc) * IC + ic) * KH + ky) * KW];
            for (int kx = 0; kx < KW; ++kx) {
              const double wv = wrow[kx];
              int lo, hi;
              tap_range(OW, W, sw, pw, kx, lo, hi);
              double* ip = irow + kx - pw;
              if (sw == 1) {
                for (int ox = lo; ox < hi; ++ox) ip[ox] += wv * drow[ox];
              } else {
                for (int ox = lo; ox < hi; ++ox) ip[ox * sw] += wv * drow[ox];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weights(const Tensor& dout, const Tensor& in, int kh, int kw, int sh,
                             int sw, int ph, int pw, std::vector<double>& dw,
                             std::vector<double>& db) {
  const int B = in.shape[0], IC = in.shape[1], H = in.shape[2], W = in.shape[3];
  const int OC = dout.shape[1], OH = dout.shape[2], OW = dout.shape[3];

  // One (oc, ic, ky, kx) weight per iteration; the batch/spatial sum runs
  // serially inside, so the result is thread-count independent.
#pragma omp parallel for collapse(2) schedule(static) if (OC * IC > 1)
  for (int oc = 0; oc < OC; ++oc) {
    for (int ic = 0; ic < IC; ++ic) {
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (int b = 0; b < B; ++b) {
            const double* dbase = &dout.values[(static_cast<size_t>(b) * OC + oc) * OH * OW];
            const double* ibase = &in.values[(static_cast<size_t>(b) * IC + ic) * H * W];
            for (int oy = 0; oy < OH; ++oy) {
              const int y = oy * sh - ph + ky;
              if (y < 0 || y >= H) continue;
              const double* drow = dbase + static_cast<size_t>(oy) * OW;
              const double* irow = ibase + static_cast<size_t>(y) * W + kx - pw;
              int lo, hi;
              tap_range(OW, W, sw, pw, kx, lo, hi);
              if (sw == 1) {
                for (int ox = lo; ox < hi; ++ox) acc += drow[ox] * irow[ox];
              } else {
                for (int ox = lo; ox < hi; ++ox) acc += drow[ox] * irow[ox * sw];
              }
            }
          }
          dw[((static_cast<size_t>(oc) * IC + ic) * kh + ky) * kw + kx] += acc;
        }
      }
    }
  }

#pragma omp parallel for schedule(static) if (OC > 1 && dout.size() > 4096)
  for (int oc = 0; oc < OC; ++oc) {
    double acc = 0.0;
    for (int b = 0; b < B; ++b) {
      const double* dbase = &dout.values[(static_cast<size_t>(b) * OC + oc) * OH * OW];
      for (int i = 0; i < OH * OW; ++i) acc += dbase[i];
    }
    db[oc] += acc;
  }
}

void dense_forward(const Tensor& in, const Tensor& w, const Tensor& bias, Tensor& out) {
  const int B = in.shape[0], D = in.shape[1], U = w.shape[0];
#pragma omp parallel for schedule(static) if (B > 1 && static_cast<int64_t>(B) * U * D > 65536)
  for (int b = 0; b < B; ++b) {
    const double* x = &in.values[static_cast<size_t>(b) * D];
    double* o = &out.values[static_cast<size_t>(b) * U];
    for (int u = 0; u < U; ++u) {
      const double* wrow = &w.values[static_cast<size_t>(u) * D];
      double acc = bias.values[u];
      for (int d = 0; d < D; ++d) acc += wrow[d] * x[d];
      o[u] = acc;
    }
  }
}

void dense_backward_input(const Tensor& dout, const Tensor& w, Tensor& din) {
  const int B = din.shape[0], D = din.shape[1], U = w.shape[0];
#pragma omp parallel for schedule(static) if (B > 1 && static_cast<int64_t>(B) * U * D > 65536)
  for (int b = 0; b < B; ++b) {
    const double* dy = &dout.values[static_cast<size_t>(b) * U];
    double* dx = &din.values[static_cast<size_t>(b) * D];
    std::fill(dx, dx + D, 0.0);
    for (int u = 0; u < U; ++u) {
      const double g = dy[u];
      if (g == 0.0) continue;
      const double* wrow = &w.values[static_cast<size_t>(u) * D];
      for (int d = 0; d < D; ++d) dx[d] += g * wrow[d];
    }
  }
}

void dense_backward_weights(const Tensor& dout, const Tensor& in, std::vector<double>& dw,
                            std::vector<double>& db) {
  const int B = in.shape[0], D = in.shape[1], U = dout.shape[1];
#pragma omp parallel for schedule(static) if (U > 1 && static_cast<int64_t>(B) * U * D > 65536)
  for (int u = 0; u < U; ++u) {
    double* dwrow = &dw[static_cast<size_t>(u) * D];
    double bacc = 0.0;
    for (int b = 0; b < B; ++b) {
      const double g = dout.values[static_cast<size_t>(b) * U + u];
      bacc += g;
      if (g == 0.0) continue;
      const double* x = &in.values[static_cast<size_t>(b) * D];
      for (int d = 0; d < D; ++d) dwrow[d] += g * x[d];
    }
    db[u] += bacc;
  }
}

}  // namespace speccnn::kernels
