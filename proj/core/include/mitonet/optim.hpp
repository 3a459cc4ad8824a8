#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mitonet/nn.hpp"

namespace mitonet::optim {

struct OptimConfig {
  double head_lr = 1e-3;
  double backbone_lr_ratio = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.05;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 50;

  double backbone_lr() const noexcept { return head_lr * backbone_lr_ratio; }
  void validate() const;
};

template <typename T>
struct AdamWState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t t = 0;

  friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

template <typename T>
AdamWState<T> make_adamw_state(const nn::ModelParams<T>& params);

// One AdamW update of a flat parameter array. `step` is the already
// incremented step counter. Weight decay is applied to the pre-update value
// and does not pass through the moment estimates.
template <typename T>
void adamw_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::int64_t step, double lr, const OptimConfig& cfg);

// Adam without decay, kept as an independent reference for the wd = 0 case.
template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t step, double lr, const OptimConfig& cfg);

// Increments state.t, then updates every tensor with the learning rate of its
// group (head: head_lr, backbone: head_lr * backbone_lr_ratio).
template <typename T>
void adamw_step(nn::ModelParams<T>& params, const nn::Gradients<T>& grads, AdamWState<T>& state,
                const OptimConfig& cfg, const nn::ParamGroups& groups);

struct EarlyStopState {
  double best_bacc = -1.0;  // no epoch evaluated yet
  int best_epoch = 0;
  int epochs_since_improve = 0;
};

struct EarlyStopDecision {
  EarlyStopState state;
  bool improved = false;
  bool stop = false;
};

// Strict improvement on validation BAcc; an undefined BAcc never improves.
EarlyStopDecision early_stop_update(const EarlyStopState& state, int epoch,
                                    std::optional<double> val_bacc, int patience);

}  // namespace mitonet::optim
