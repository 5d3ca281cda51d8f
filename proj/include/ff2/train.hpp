#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ff2/errors.hpp"
#include "ff2/eval.hpp"
#include "ff2/model.hpp"
#include "ff2/rng.hpp"

namespace ff2 {

struct TrainConfig {
  double learning_rate = 5e-6;
  int batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_epochs = 0;  // required; intentionally has no default
  int patience = 8;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;  // 0 disables gradient clipping

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_epochs < 1) {
      throw ConfigError("train: max_epochs is required and must be >= 1");
    }
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw ConfigError("train: adam betas must lie in [0, 1)");
    }
    if (eps <= 0.0) throw ConfigError("train: adam eps must be positive");
    if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{
      {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
      {"beta1", c.beta1},                 {"beta2", c.beta2},
      {"eps", c.eps},                     {"max_epochs", c.max_epochs},
      {"patience", c.patience},           {"seed", c.seed},
      {"clip_norm", c.clip_norm},
  };
}

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long long step = 0;
};

inline AdamState init_adam_state(const std::vector<NamedTensor>& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const NamedTensor& p : params) {
    state.m.emplace_back(p.tensor.size(), 0.0);
    state.v.emplace_back(p.tensor.size(), 0.0);
  }
  return state;
}

// One Adam update with bias correction:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
// Throws NumericError naming the parameter on a non-finite gradient.
inline void adam_step(const std::vector<NamedTensor>& params, AdamState& state,
                      const TrainConfig& config) {
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: state does not match parameter list");
  }
  double clip_scale = 1.0;
  if (config.clip_norm > 0.0) {
    double sq = 0.0;
    for (const NamedTensor& p : params) {
      for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config.clip_norm) clip_scale = config.clip_norm / norm;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    std::vector<double>& m = state.m[pi];
    std::vector<double>& v = state.v[pi];
    if (m.size() != t.size()) {
      throw ContractError("adam_step: moment shape mismatch for '" +
                          params[pi].name + "'");
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      double g = t.grad()[i];
      if (!std::isfinite(g)) {
        throw NumericError("divergence: non-finite gradient in parameter '" +
                           params[pi].name + "'");
      }
      g *= clip_scale;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      t.values()[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  EvalReport val;
};

// Patience counter for validation-metric early stopping. Strictly better
// metrics reset the counter (ties keep the earlier best); observe() returns
// true when `patience` consecutive epochs brought no improvement.
struct EarlyStopping {
  int patience = 1;
  double best = -1.0;
  int best_epoch = 0;
  int since_best = 0;

  bool observe(int epoch, double metric) {
    if (metric > best) {
      best = metric;
      best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    return since_best >= patience;
  }
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_f1 = 0.0;
  int epochs_since_best = 0;
  long long adam_steps = 0;
};

// Eval-mode predictions over a sequence set, scored at unmasked positions.
inline EvalReport evaluate_model(const FF2Model& model,
                                 const std::vector<LabeledSequence>& data) {
  std::vector<Label> pred_all, gold_all;
  for (const LabeledSequence& seq : data) {
    const std::vector<Label> pred = predict(model, seq.token_ids, seq.mask);
    for (std::size_t i = 0; i < seq.labels.size(); ++i) {
      if (!seq.mask[i]) continue;
      pred_all.push_back(pred[i]);
      gold_all.push_back(seq.labels[i]);
    }
  }
  return score(pred_all, gold_all);
}

using StopPredicate = std::function<bool(const EpochRecord&)>;

// Epoch loop of seeded shuffled mini-batches; selection metric is overall
// (micro) F1 on the validation split. Keeps the best checkpoint, stops after
// `patience` consecutive epochs without improvement (ties keep the earlier
// epoch), and restores the best parameters before returning.
inline TrainResult train(FF2Model& model,
                         const std::vector<LabeledSequence>& train_set,
                         const std::vector<LabeledSequence>& val_set,
                         const TrainConfig& config, Rng& rng,
                         const StopPredicate& extra_stop = {}) {
  config.validate();
  if (train_set.empty()) throw ConfigError("train: training split is empty");
  if (val_set.empty()) throw ConfigError("train: validation split is empty");

  std::vector<NamedTensor> params = model_parameters(model);
  AdamState adam = init_adam_state(params);

  auto snapshot = [&params] {
    std::vector<std::vector<double>> values;
    values.reserve(params.size());
    for (const NamedTensor& p : params) values.push_back(p.tensor.values());
    return values;
  };
  auto restore = [&params](const std::vector<std::vector<double>>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor t = params[i].tensor;
      t.values() = values[i];
    }
  };

  std::vector<std::vector<double>> best_values = snapshot();
  TrainResult result;
  EarlyStopping stopper;
  stopper.patience = config.patience;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), pos + static_cast<std::size_t>(config.batch_size));
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      for (const NamedTensor& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
      }
      Tensor loss = batch_loss(model, train_set, batch, true, rng);
      loss.backward();
      adam_step(params, adam, config);
      loss_sum += loss.value() * static_cast<double>(batch.size());
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train_set.size());
    record.val = evaluate_model(model, val_set);
    result.history.push_back(record);

    const bool stop = stopper.observe(epoch, record.val.overall.f1);
    if (stopper.since_best == 0) best_values = snapshot();
    if (extra_stop && extra_stop(record)) break;
    if (stop) break;
  }

  restore(best_values);
  result.best_epoch = stopper.best_epoch;
  result.best_val_f1 = stopper.best;
  result.epochs_since_best = stopper.since_best;
  result.adam_steps = adam.step;
  return result;
}

}  // namespace ff2
