#include "speccnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace speccnn {

namespace {

int batch_of(const Tensor& pred, const std::vector<int>& target) {
  const int b = pred.shape.empty() ? 0 : pred.shape[0];
  if (b == 0 || target.size() != static_cast<size_t>(b))
    throw std::invalid_argument("loss: prediction/target size mismatch");
  return b;
}

}  // namespace

double loss_bce(const Tensor& pred, const std::vector<int>& target) {
  const int b = batch_of(pred, target);
  if (pred.size() != b) throw std::invalid_argument("loss_bce: expected one output per item");
  double acc = 0.0;
  for (int i = 0; i < b; ++i) {
    const double p = std::clamp(pred.values[i], kLossEpsilon, 1.0 - kLossEpsilon);
    acc += target[i] ? -std::log(p) : -std::log(1.0 - p);
  }
  return acc / b;
}

double loss_bce_grad(const Tensor& pred, const std::vector<int>& target, Tensor& dpred) {
  const int b = batch_of(pred, target);
  dpred = tensor_like(pred);
  double acc = 0.0;
  for (int i = 0; i < b; ++i) {
    const double p = std::clamp(pred.values[i], kLossEpsilon, 1.0 - kLossEpsilon);
    if (target[i]) {
      acc += -std::log(p);
      dpred.values[i] = -1.0 / (p * b);
    } else {
      acc += -std::log(1.0 - p);
      dpred.values[i] = 1.0 / ((1.0 - p) * b);
    }
  }
  return acc / b;
}

double loss_cce(const Tensor& pred, const std::vector<int>& target) {
  const int b = batch_of(pred, target);
  const int k = pred.shape[1];
  double acc = 0.0;
  for (int i = 0; i < b; ++i) {
    const int cls = target[i];
    if (cls < 0 || cls >= k) throw std::invalid_argument("loss_cce: label out of range");
    const double p = std::clamp(pred.at2(i, cls), kLossEpsilon, 1.0);
    acc += -std::log(p);
  }
  return acc / b;
}

double loss_cce_grad(const Tensor& pred, const std::vector<int>& target, Tensor& dpred) {
  const int b = batch_of(pred, target);
  const int k = pred.shape[1];
  dpred = tensor_like(pred);
  double acc = 0.0;
  for (int i = 0; i < b; ++i) {
    const int cls = target[i];
    if (cls < 0 || cls >= k) throw std::invalid_argument("loss_cce: label out of range");
    const double p = std::clamp(pred.at2(i, cls), kLossEpsilon, 1.0);
    acc += -std::log(p);
    dpred.at2(i, cls) = -1.0 / (p * b);
  }
  return acc / b;
}

double loss_contrastive(double d, bool same, double margin) {
  if (d < 0.0) throw std::invalid_argument("loss_contrastive: distance must be >= 0");
  if (margin <= 0.0) throw std::invalid_argument("loss_contrastive: margin must be > 0");
  if (same) return d * d;
  const double gap = margin - d;
  return gap > 0.0 ? gap * gap : 0.0;
}

double loss_triplet(double d_ap, double d_an, double margin) {
  if (d_ap < 0.0 || d_an < 0.0) throw std::invalid_argument("loss_triplet: distances must be >= 0");
  if (margin <= 0.0) throw std::invalid_argument("loss_triplet: margin must be > 0");
  const double v = d_ap - d_an + margin;
  return v > 0.0 ? v : 0.0;
}

}  // namespace speccnn
