#pragma once

#include <cstdint>
#include <vector>

#include "speccnn/layers.hpp"
#include "speccnn/losses.hpp"

namespace speccnn {

enum class LossKind { bce, cce, contrastive, triplet };
enum class OptimizerKind { sgd, adam };

const char* loss_kind_name(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 20;
  int batch_size = 20;
  LossKind loss = LossKind::bce;
  double margin = 1.0;  // contrastive/triplet
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool early_stop = false;      // stop after `patience` epochs without a new
  int patience = 3;             // best validation accuracy; keeps best weights
  double val_fraction = 0.2;
  uint64_t seed = 1;
  bool verbose = false;
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochMetrics> epochs;
  int best_epoch = -1;
};

// Adam/SGD over ModelGraph weights; consumes Tensor::grad.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg);
  void step(ModelGraph& g);

 private:
  TrainConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<std::vector<double>>> m_, v_;
};

// Gathers rows `idx` of X {N, ...} into a batch tensor {|idx|, ...}.
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

// Batched inference-mode predictions (bounded memory).
Tensor predict(const ModelGraph& g, const Tensor& x, int chunk = 64);

// Fraction of argmax/thresholded predictions matching labels.
double classification_accuracy(const Tensor& pred, const std::vector<int>& y);

// Mini-batch training with bce or cce. Deterministic for a fixed seed.
TrainLog train_classifier(ModelGraph& model, const Tensor& x, const std::vector<int>& y,
                          const TrainConfig& cfg);

// Finite-difference gradient checking -------------------------------------

double relative_error(double a, double b);

struct GradCheckEntry {
  int layer = 0, tensor = 0, index = 0;
  double analytic = 0.0, numeric = 0.0, rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
  std::vector<GradCheckEntry> failures;
  bool passed = true;
};

// Compares analytic gradients against central finite differences on a random
// subset of weights (classification losses).
GradCheckReport grad_check(const ModelGraph& model, const Tensor& x, const std::vector<int>& y,
                           LossKind loss, double tolerance, int max_checks = 200,
                           double step = 1e-4, uint64_t seed = 99);

}  // namespace speccnn
