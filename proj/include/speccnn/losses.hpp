#pragma once

#include <vector>

#include "speccnn/tensor.hpp"

namespace speccnn {

// Clamp inside the log losses.
inline constexpr double kLossEpsilon = 1e-7;

// Mean binary cross-entropy; pred is {B, 1} (or {B}) of sigmoid outputs.
double loss_bce(const Tensor& pred, const std::vector<int>& target);
double loss_bce_grad(const Tensor& pred, const std::vector<int>& target, Tensor& dpred);

// Mean categorical cross-entropy; pred is {B, K}, rows sum to 1.
double loss_cce(const Tensor& pred, const std::vector<int>& target);
double loss_cce_grad(const Tensor& pred, const std::vector<int>& target, Tensor& dpred);

// L = same * d^2 + (1 - same) * max(0, margin - d)^2 for an embedding
// distance d >= 0.
double loss_contrastive(double d, bool same, double margin);

// L = max(0, d_ap - d_an + margin).
double loss_triplet(double d_ap, double d_an, double margin);

}  // namespace speccnn
