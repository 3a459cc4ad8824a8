#include "mitonet/optim.hpp"

#include <cmath>
#include <string>

#include "mitonet/errors.hpp"

namespace mitonet::optim {

void OptimConfig::validate() const {
  if (!(head_lr > 0.0)) throw ConfigError("optim.head_lr must be > 0");
  if (!(backbone_lr_ratio > 0.0)) throw ConfigError("optim.backbone_lr_ratio must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("optim.beta1 and optim.beta2 must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("optim.epsilon must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("optim.batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("optim.max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("optim.patience must be >= 1");
}

template <typename T>
AdamWState<T> make_adamw_state(const nn::ModelParams<T>& params) {
  AdamWState<T> s;
  for (const auto& t : params.tensors()) {
    s.m.emplace_back(t.data.size(), T(0));
    s.v.emplace_back(t.data.size(), T(0));
  }
  return s;
}

template <typename T>
void adamw_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                  std::int64_t step, double lr, const OptimConfig& cfg) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw ShapeMismatch("adamw_update: parameter, gradient and moment sizes differ");
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / bc1;
    const double v_hat = vi / bc2;
    const double old = theta[i];
    theta[i] = static_cast<T>(old - lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon) -
                              lr * cfg.weight_decay * old);
  }
}

template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t step, double lr, const OptimConfig& cfg) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double m_hat = mi / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
    const double v_hat = vi / (1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
    theta[i] = static_cast<T>(theta[i] - lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
  }
}

template <typename T>
void adamw_step(nn::ModelParams<T>& params, const nn::Gradients<T>& grads, AdamWState<T>& state,
                const OptimConfig& cfg, const nn::ParamGroups& groups) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeMismatch("adamw_step: parameter, gradient and state layouts differ");
  }
  ++state.t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (grads[i].name != p.name) {
      throw ShapeMismatch("adamw_step: gradient order differs at " + p.name);
    }
    const double lr = groups.is_head(p.name) ? cfg.head_lr : cfg.backbone_lr();
    adamw_update<T>(p.data, grads[i].data, state.m[i], state.v[i], state.t, lr, cfg);
  }
}

EarlyStopDecision early_stop_update(const EarlyStopState& state, int epoch,
                                    std::optional<double> val_bacc, int patience) {
  EarlyStopDecision d{state, false, false};
  if (val_bacc && *val_bacc > state.best_bacc) {
    d.state.best_bacc = *val_bacc;
    d.state.best_epoch = epoch;
    d.improved = true;
  }
  d.state.epochs_since_improve = epoch - d.state.best_epoch;
  d.stop = d.state.epochs_since_improve >= patience;
  return d;
}

#define MITONET_INSTANTIATE(T)                                                                  \
  template AdamWState<T> make_adamw_state<T>(const nn::ModelParams<T>&);                        \
  template void adamw_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,  \
                                std::int64_t, double, const OptimConfig&);                      \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<T>, std::span<T>,   \
                               std::int64_t, double, const OptimConfig&);                       \
  template void adamw_step<T>(nn::ModelParams<T>&, const nn::Gradients<T>&, AdamWState<T>&,    \
                              const OptimConfig&, const nn::ParamGroups&);

MITONET_INSTANTIATE(float)
MITONET_INSTANTIATE(double)

#undef MITONET_INSTANTIATE

}  // namespace mitonet::optim
