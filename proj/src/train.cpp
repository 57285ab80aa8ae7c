#include "speccnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "speccnn/rng.hpp"

namespace speccnn {

const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::bce: return "bce";
    case LossKind::cce: return "cce";
    case LossKind::contrastive: return "contrastive";
    case LossKind::triplet: return "triplet";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "bce") return LossKind::bce;
  if (s == "cce") return LossKind::cce;
  if (s == "contrastive") return LossKind::contrastive;
  if (s == "triplet") return LossKind::triplet;
  throw std::invalid_argument("unknown loss: " + s);
}

Optimizer::Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

void Optimizer::step(ModelGraph& g) {
  if (cfg_.optimizer == OptimizerKind::sgd) {
    for (auto& lw : g.weights)
      for (Tensor& t : lw) {
        if (t.grad.empty()) continue;
        for (size_t i = 0; i < t.values.size(); ++i)
          t.values[i] -= cfg_.learning_rate * t.grad[i];
      }
    return;
  }

  if (m_.empty()) {
    m_.resize(g.weights.size());
    v_.resize(g.weights.size());
    for (size_t l = 0; l < g.weights.size(); ++l) {
      m_[l].resize(g.weights[l].size());
      v_[l].resize(g.weights[l].size());
      for (size_t j = 0; j < g.weights[l].size(); ++j) {
        m_[l][j].assign(g.weights[l][j].values.size(), 0.0);
        v_[l][j].assign(g.weights[l][j].values.size(), 0.0);
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
  for (size_t l = 0; l < g.weights.size(); ++l) {
    for (size_t j = 0; j < g.weights[l].size(); ++j) {
      Tensor& t = g.weights[l][j];
      if (t.grad.empty()) continue;
      double* m = m_[l][j].data();
      double* v = v_[l][j].data();
      for (size_t i = 0; i < t.values.size(); ++i) {
        const double gr = t.grad[i];
        m[i] = cfg_.adam_beta1 * m[i] + (1.0 - cfg_.adam_beta1) * gr;
        v[i] = cfg_.adam_beta2 * v[i] + (1.0 - cfg_.adam_beta2) * gr * gr;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        t.values[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
      }
    }
  }
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  const size_t row = x.values.size() / x.shape[0];
  std::vector<int> shape = x.shape;
  shape[0] = static_cast<int>(idx.size());
  Tensor out(shape);
  for (size_t i = 0; i < idx.size(); ++i)
    std::memcpy(&out.values[i * row], &x.values[static_cast<size_t>(idx[i]) * row],
                row * sizeof(double));
  return out;
}

Tensor predict(const ModelGraph& g, const Tensor& x, int chunk) {
  const int n = x.shape[0];
  Tensor out;
  for (int start = 0; start < n; start += chunk) {
    std::vector<int> idx;
    for (int i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    Tensor part = forward(g, gather_rows(x, idx));
    if (start == 0) {
      std::vector<int> shape = part.shape;
      shape[0] = n;
      out = Tensor(shape);
    }
    std::memcpy(&out.values[static_cast<size_t>(start) * (part.values.size() / part.shape[0])],
                part.values.data(), part.values.size() * sizeof(double));
  }
  return out;
}

double classification_accuracy(const Tensor& pred, const std::vector<int>& y) {
  const int b = pred.shape[0];
  const int k = pred.size() == b ? 1 : pred.shape[1];
  int hits = 0;
  for (int i = 0; i < b; ++i) {
    int guess;
    if (k == 1) {
      guess = pred.values[i] >= 0.5 ? 1 : 0;
    } else {
      const double* row = &pred.values[static_cast<size_t>(i) * k];
      guess = static_cast<int>(std::max_element(row, row + k) - row);
    }
    hits += guess == y[i];
  }
  return static_cast<double>(hits) / b;
}

namespace {

std::vector<std::vector<double>> snapshot_weights(const ModelGraph& g) {
  std::vector<std::vector<double>> snap;
  for (const auto& lw : g.weights)
    for (const Tensor& t : lw) snap.push_back(t.values);
  return snap;
}

void restore_weights(ModelGraph& g, const std::vector<std::vector<double>>& snap) {
  size_t k = 0;
  for (auto& lw : g.weights)
    for (Tensor& t : lw) t.values = snap[k++];
}

}  // namespace

TrainLog train_classifier(ModelGraph& model, const Tensor& x, const std::vector<int>& y,
                          const TrainConfig& cfg) {
  const int n = x.shape[0];
  if (n == 0 || y.size() != static_cast<size_t>(n))
    throw std::invalid_argument("train: empty data or label size mismatch");
  if (cfg.epochs < 1 || cfg.batch_size < 1)
    throw std::invalid_argument("train: epochs and batch_size must be >= 1");

  std::vector<int> all(n);
  for (int i = 0; i < n; ++i) all[i] = i;

  std::vector<int> train_idx = all, val_idx;
  if (cfg.early_stop && n >= 5) {
    Rng rng(derive_seed(cfg.seed, 0x5a11));
    for (int i = n - 1; i > 0; --i) std::swap(all[i], all[rng.uniform_int(0, i)]);
    const int n_val = std::clamp(static_cast<int>(std::lround(cfg.val_fraction * n)), 1, n - 1);
    val_idx.assign(all.end() - n_val, all.end());
    train_idx.assign(all.begin(), all.end() - n_val);
  }
  std::vector<int> val_y;
  for (int i : val_idx) val_y.push_back(y[i]);
  Tensor val_x;
  if (!val_idx.empty()) val_x = gather_rows(x, val_idx);

  Optimizer opt(cfg);
  TrainLog log;
  double best_val = -1.0;
  int bad_epochs = 0;
  std::vector<std::vector<double>> best_snap;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 1000 + static_cast<uint64_t>(epoch)));
    std::vector<int> order = train_idx;
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);

    double loss_sum = 0.0;
    int correct = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<int> idx(order.begin() + start,
                           order.begin() + std::min(order.size(),
                                                    start + static_cast<size_t>(cfg.batch_size)));
      std::vector<int> by;
      for (int i : idx) by.push_back(y[i]);
      Tensor bx = gather_rows(x, idx);

      ForwardTrace trace;
      const Tensor& pred = forward(model, bx, trace);
      Tensor dpred;
      const double loss = cfg.loss == LossKind::bce ? loss_bce_grad(pred, by, dpred)
                                                    : loss_cce_grad(pred, by, dpred);
      if (!std::isfinite(loss))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch + 1));
      loss_sum += loss * static_cast<double>(idx.size());
      correct += static_cast<int>(
          std::lround(classification_accuracy(pred, by) * static_cast<double>(idx.size())));

      zero_grads(model);
      backward(model, trace, dpred);
      opt.step(model);
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.loss = loss_sum / static_cast<double>(train_idx.size());
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_idx.size());
    if (!val_idx.empty())
      m.val_accuracy = classification_accuracy(predict(model, val_x), val_y);
    log.epochs.push_back(m);
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d loss %.4f train_acc %.3f val_acc %.3f\n", m.epoch, m.loss,
                   m.train_accuracy, m.val_accuracy);

    if (cfg.early_stop && !val_idx.empty()) {
      if (m.val_accuracy > best_val) {
        best_val = m.val_accuracy;
        log.best_epoch = m.epoch;
        best_snap = snapshot_weights(model);
        bad_epochs = 0;
      } else if (++bad_epochs >= cfg.patience) {
        break;
      }
    }
  }
  if (cfg.early_stop && !best_snap.empty()) restore_weights(model, best_snap);
  if (log.best_epoch < 0 && !log.epochs.empty()) log.best_epoch = log.epochs.back().epoch;
  return log;
}

double relative_error(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / denom;
}

GradCheckReport grad_check(const ModelGraph& model, const Tensor& x, const std::vector<int>& y,
                           LossKind loss, double tolerance, int max_checks, double step,
                           uint64_t seed) {
  if (loss != LossKind::bce && loss != LossKind::cce)
    throw std::invalid_argument("grad_check: classification losses only");

  ModelGraph m = model;
  auto eval_loss = [&]() {
    const Tensor pred = forward(m, x);
    return loss == LossKind::bce ? loss_bce(pred, y) : loss_cce(pred, y);
  };

  // Analytic gradients.
  ForwardTrace trace;
  const Tensor& pred = forward(m, x, trace);
  Tensor dpred;
  if (loss == LossKind::bce)
    loss_bce_grad(pred, y, dpred);
  else
    loss_cce_grad(pred, y, dpred);
  zero_grads(m);
  backward(m, trace, dpred);

  // Random weight subset.
  struct Slot {
    int layer, tensor, index;
  };
  std::vector<Slot> slots;
  for (size_t l = 0; l < m.weights.size(); ++l)
    for (size_t j = 0; j < m.weights[l].size(); ++j)
      for (int i = 0; i < m.weights[l][j].size(); ++i)
        slots.push_back({static_cast<int>(l), static_cast<int>(j), i});
  Rng rng(seed);
  for (int i = static_cast<int>(slots.size()) - 1; i > 0; --i)
    std::swap(slots[i], slots[rng.uniform_int(0, i)]);
  if (static_cast<int>(slots.size()) > max_checks) slots.resize(max_checks);

  GradCheckReport report;
  for (const Slot& s : slots) {
    double& wv = m.weights[s.layer][s.tensor].values[s.index];
    const double orig = wv;
    wv = orig + step;
    const double lp = eval_loss();
    wv = orig - step;
    const double lm = eval_loss();
    wv = orig;

    GradCheckEntry e;
    e.layer = s.layer;
    e.tensor = s.tensor;
    e.index = s.index;
    e.analytic = m.weights[s.layer][s.tensor].grad[s.index];
    e.numeric = (lp - lm) / (2.0 * step);
    e.rel_error = relative_error(e.analytic, e.numeric);
    report.entries.push_back(e);
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    if (e.rel_error > tolerance) {
      report.failures.push_back(e);
      report.passed = false;
    }
  }
  return report;
}

}  // namespace speccnn
