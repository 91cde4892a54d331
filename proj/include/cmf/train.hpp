#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cmf/data.hpp"
#include "cmf/error.hpp"
#include "cmf/metrics.hpp"
#include "cmf/model.hpp"
#include "cmf/rng.hpp"
#include "cmf/tensor.hpp"

namespace cmf {

// ---------------------------------------------------------------------------
// Cross-entropy over masked utterance positions
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t count_valid(const Mask& mask) {
  std::size_t n = 0;
  for (auto m : mask) n += (m != 0);
  return n;
}

}  // namespace detail

// Sum over valid positions of -log softmax(logits)[label], log-sum-exp form.
// The mean variant below divides by the valid count; the sum form lets batch
// losses compose into an exact utterance-level mean.
inline Tensor cross_entropy_sum(const Tensor& logits,
                                const std::vector<int>& labels,
                                const Mask& mask) {
  detail::require_2d(logits, "cross_entropy");
  const std::size_t t_len = logits.shape()[0], n_classes = logits.shape()[1];
  if (labels.size() != t_len || mask.size() != t_len) {
    throw ShapeError("cross_entropy: logits rows " + std::to_string(t_len) +
                     ", labels " + std::to_string(labels.size()) + ", mask " +
                     std::to_string(mask.size()));
  }
  if (detail::count_valid(mask) == 0)
    throw ContractError("cross_entropy: no valid positions under mask");
  for (std::size_t i = 0; i < t_len; ++i) {
    if (!mask[i]) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes)
      throw DataError("cross_entropy: label " + std::to_string(labels[i]) +
                      " outside [0, " + std::to_string(n_classes) +
                      ") at position " + std::to_string(i));
  }

  const auto& x = logits.data();
  std::vector<double> probs(t_len * n_classes, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < t_len; ++i) {
    if (!mask[i]) continue;
    const double* row = x.data() + i * n_classes;
    double mx = row[0];
    for (std::size_t j = 1; j < n_classes; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n_classes; ++j) denom += std::exp(row[j] - mx);
    const double lse = mx + std::log(denom);
    loss += lse - row[static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < n_classes; ++j)
      probs[i * n_classes + j] = std::exp(row[j] - mx) / denom;
  }

  std::vector<int> labels_c = labels;
  Mask mask_c = mask;
  return detail::make_op(
      {1}, {loss}, {logits},
      [probs = std::move(probs), labels_c = std::move(labels_c),
       mask_c = std::move(mask_c), t_len, n_classes](detail::Node& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        const double g = n.grad[0];
        for (std::size_t i = 0; i < t_len; ++i) {
          if (!mask_c[i]) continue;
          const std::size_t y = static_cast<std::size_t>(labels_c[i]);
          for (std::size_t j = 0; j < n_classes; ++j) {
            p->grad[i * n_classes + j] +=
                g * (probs[i * n_classes + j] - (j == y ? 1.0 : 0.0));
          }
        }
      });
}

// Mean over valid positions.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                            const Mask& mask) {
  const std::size_t n = detail::count_valid(mask);
  Tensor total = cross_entropy_sum(logits, labels, mask);
  return scale(total, 1.0 / static_cast<double>(n));
}

inline std::vector<int> predict_labels(const Tensor& logits) {
  detail::require_2d(logits, "predict_labels");
  std::vector<int> out(logits.shape()[0]);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<int>(argmax_row(logits, i));
  return out;
}

// ---------------------------------------------------------------------------
// Adam with L2 weight decay
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 3e-4;
  std::size_t batch_size = 32;  // dialogues per batch
  std::size_t max_epochs = 200;
  std::size_t patience = 15;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Default couples decay into the gradient (classic L2 regularization);
  // set for decoupled decay applied directly to the weights.
  bool decoupled_weight_decay = false;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  std::uint64_t seed = 0;

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (patience == 0 || patience > max_epochs)
      throw ConfigError("patience must be in [1, max_epochs]");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
      throw ConfigError("adam betas must lie in (0, 1)");
    if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be nonnegative");
  }
};

class AdamOptimizer {
 public:
  struct Slot {
    std::vector<double> m, v;
  };

  AdamOptimizer(ParamList params, const TrainConfig& cfg)
      : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    slots_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      slots_[i].m.assign(params_[i].second.size(), 0.0);
      slots_[i].v.assign(params_[i].second.size(), 0.0);
    }
  }

  const ParamList& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return t_; }
  const std::vector<Slot>& slots() const { return slots_; }

  void set_state(std::uint64_t t, std::vector<Slot> slots) {
    if (slots.size() != params_.size())
      throw ContractError("adam state has " + std::to_string(slots.size()) +
                          " slots for " + std::to_string(params_.size()) +
                          " parameters");
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i].m.size() != params_[i].second.size() ||
          slots[i].v.size() != params_[i].second.size())
        throw ContractError("adam slot size mismatch for parameter '" +
                            params_[i].first + "'");
    }
    t_ = t;
    slots_ = std::move(slots);
  }

  void zero_grad() {
    for (auto& [name, p] : params_) Tensor(p).zero_grad();
  }

  void step() {
    ++t_;
    double clip_scale = 1.0;
    if (cfg_.grad_clip > 0.0) {
      double sq = 0.0;
      for (auto& [name, p] : params_)
        for (double g : p.grad()) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) clip_scale = cfg_.grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor p = params_[i].second;
      auto& theta = p.data();
      const auto& grad = p.grad();
      auto& slot = slots_[i];
      for (std::size_t j = 0; j < theta.size(); ++j) {
        double g = grad[j] * clip_scale;
        if (!cfg_.decoupled_weight_decay) g += cfg_.weight_decay * theta[j];
        slot.m[j] = cfg_.beta1 * slot.m[j] + (1.0 - cfg_.beta1) * g;
        slot.v[j] = cfg_.beta2 * slot.v[j] + (1.0 - cfg_.beta2) * g * g;
        double update = cfg_.learning_rate * (slot.m[j] / bc1) /
                        (std::sqrt(slot.v[j] / bc2) + cfg_.adam_eps);
        if (cfg_.decoupled_weight_decay)
          update += cfg_.learning_rate * cfg_.weight_decay * theta[j];
        theta[j] -= update;
      }
    }
  }

 private:
  ParamList params_;
  TrainConfig cfg_;
  std::vector<Slot> slots_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  EvaluationReport report;
  double mean_loss = 0.0;
};

namespace detail {

inline void check_dataset_compat(const FusionModel& model,
                                 const DatasetSplit& split, const char* role) {
  const auto& cfg = model.config();
  const auto& h = split.header;
  if (h.d_audio != cfg.d_audio_in)
    throw ShapeError(std::string(role) + " dataset d_audio " +
                     std::to_string(h.d_audio) + " != model d_audio_in " +
                     std::to_string(cfg.d_audio_in));
  if (h.d_text != cfg.d_text_in)
    throw ShapeError(std::string(role) + " dataset d_text " +
                     std::to_string(h.d_text) + " != model d_text_in " +
                     std::to_string(cfg.d_text_in));
  if (h.n_classes != cfg.n_classes)
    throw ShapeError(std::string(role) + " dataset n_classes " +
                     std::to_string(h.n_classes) + " != model n_classes " +
                     std::to_string(cfg.n_classes));
}

}  // namespace detail

inline EvalResult evaluate(const FusionModel& model,
                           const DatasetSplit& split) {
  detail::check_dataset_compat(model, split, "eval");
  if (split.dialogues.empty()) throw ConfigError("evaluate: empty dataset split");
  NoGradGuard no_grad;
  std::vector<int> preds, labels;
  double loss_total = 0.0;
  std::size_t n_total = 0;
  for (const auto& dia : split.dialogues) {
    const Mask mask = full_mask(dia.utterances.size());
    Tensor logits = model.forward(dialogue_audio(dia, split.header),
                                  dialogue_text(dia, split.header), mask);
    const std::vector<int> dia_labels = dialogue_labels(dia);
    loss_total += cross_entropy_sum(logits, dia_labels, mask).item();
    n_total += dia.utterances.size();
    for (int p : predict_labels(logits)) preds.push_back(p);
    for (int y : dia_labels) labels.push_back(y);
  }
  EvalResult res;
  res.report = weighted_f1_report(preds, labels, split.header.n_classes,
                                  split.header.label_names);
  res.mean_loss = loss_total / static_cast<double>(n_total);
  return res;
}

// ---------------------------------------------------------------------------
// Training loop with validation-loss early stopping
// ---------------------------------------------------------------------------

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_weighted_f1;
  std::size_t best_epoch = 0;  // 1-based
  std::size_t stop_epoch = 0;  // epochs actually run
  std::string stop_reason;     // "patience" or "max_epochs"

  nlohmann::json to_json() const {
    return nlohmann::json{{"train_loss", train_loss},
                          {"val_loss", val_loss},
                          {"val_weighted_f1", val_weighted_f1},
                          {"best_epoch", best_epoch},
                          {"stop_epoch", stop_epoch},
                          {"stop_reason", stop_reason}};
  }
};

// Trains up to max_epochs, stopping once `patience` consecutive epochs fail
// to strictly improve the best validation loss. Best-epoch weights are
// restored before returning. When opt_out is given it receives the optimizer
// with its end-of-run state (for checkpointing).
inline TrainReport fit(FusionModel& model, const DatasetSplit& train_split,
                       const DatasetSplit& val_split, const TrainConfig& cfg,
                       std::unique_ptr<AdamOptimizer>* opt_out = nullptr) {
  cfg.validate();
  if (train_split.dialogues.empty()) throw ConfigError("fit: empty train split");
  if (val_split.dialogues.empty()) throw ConfigError("fit: empty validation split");
  detail::check_dataset_compat(model, train_split, "train");
  detail::check_dataset_compat(model, val_split, "validation");

  ParamList params = model.named_parameters();
  AdamOptimizer opt(params, cfg);

  auto snapshot = [&]() {
    std::vector<std::vector<double>> s;
    s.reserve(params.size());
    for (auto& [name, p] : params) s.push_back(p.data());
    return s;
  };
  auto restore = [&](const std::vector<std::vector<double>>& s) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor p = params[i].second;
      p.data() = s[i];
    }
  };

  TrainReport report;
  std::vector<std::vector<double>> best_params = snapshot();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto batches =
        make_batches(train_split, cfg.batch_size, Rng::mix(cfg.seed, epoch));
    double epoch_loss = 0.0;
    std::size_t epoch_n = 0;
    for (const auto& batch : batches) {
      opt.zero_grad();
      Tensor loss_sum;
      std::size_t n_batch = 0;
      for (std::size_t d = 0; d < batch.size(); ++d) {
        Tensor logits =
            model.forward(batch.audio[d], batch.text[d], batch.mask[d]);
        Tensor ls = cross_entropy_sum(logits, batch.labels[d], batch.mask[d]);
        loss_sum = (d == 0) ? ls : add(loss_sum, ls);
        n_batch += detail::count_valid(batch.mask[d]);
      }
      Tensor loss = scale(loss_sum, 1.0 / static_cast<double>(n_batch));
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw NumericalError("non-finite training loss at epoch " +
                             std::to_string(epoch));
      loss.backward();
      opt.step();
      epoch_loss += loss_value * static_cast<double>(n_batch);
      epoch_n += n_batch;
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(epoch_n));

    EvalResult val = evaluate(model, val_split);
    report.val_loss.push_back(val.mean_loss);
    report.val_weighted_f1.push_back(val.report.weighted_f1);
    if (!std::isfinite(val.mean_loss))
      throw NumericalError("non-finite validation loss at epoch " +
                           std::to_string(epoch));

    if (val.mean_loss < best_val) {
      best_val = val.mean_loss;
      report.best_epoch = epoch;
      best_params = snapshot();
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.patience) {
      report.stop_epoch = epoch;
      report.stop_reason = "patience";
      break;
    }
  }
  if (report.stop_reason.empty()) {
    report.stop_epoch = cfg.max_epochs;
    report.stop_reason = "max_epochs";
  }
  restore(best_params);
  if (opt_out) *opt_out = std::make_unique<AdamOptimizer>(std::move(opt));
  return report;
}

}  // namespace cmf
