#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace speccnn {

// Dense row-major tensor of doubles. `grad`, when non-empty, has the same
// length as `values`.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    values.assign(static_cast<size_t>(numel(shape)), 0.0);
  }

  static int64_t numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
      n *= d;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  double* data() { return values.data(); }
  const double* data() const { return values.data(); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // 4-D accessors (NCHW); used by kernels and tests.
  double& at4(int b, int c, int y, int x) {
    return values[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  double at4(int b, int c, int y, int x) const {
    return values[((static_cast<size_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  double& at2(int r, int c) { return values[static_cast<size_t>(r) * shape[1] + c]; }
  double at2(int r, int c) const { return values[static_cast<size_t>(r) * shape[1] + c]; }
};

inline Tensor tensor_like(const Tensor& t) {
  Tensor out;
  out.shape = t.shape;
  out.values.assign(t.values.size(), 0.0);
  return out;
}

}  // namespace speccnn
