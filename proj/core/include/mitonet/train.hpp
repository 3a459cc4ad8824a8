#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mitonet/augment.hpp"
#include "mitonet/config.hpp"
#include "mitonet/data.hpp"
#include "mitonet/imbalance.hpp"
#include "mitonet/metrics.hpp"
#include "mitonet/nn.hpp"
#include "mitonet/optim.hpp"

namespace mitonet::train {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  metrics::MetricRow val;
  double head_lr = 0.0;
  double backbone_lr = 0.0;
  optim::EarlyStopState early_stop;
  bool improved = false;
  bool stop = false;
};

nlohmann::json to_json(const EpochRecord& rec);

template <typename T>
struct TrainResult {
  nn::ModelParams<T> best_params;
  optim::AdamWState<T> best_optim_state;
  std::vector<EpochRecord> history;
  metrics::DomainReport final_report;  // validation report of best_params
  imbalance::Split split;
  imbalance::LossConfig loss;          // after resolving "auto" weights
  int best_epoch = 0;
  double best_bacc = 0.0;
  std::size_t stain_passthrough = 0;   // patches left un-normalized
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  int jobs = 1;
};

template <typename T>
nn::Tensor4<T> stack(std::span<const ImageTensor> images);

// Sigmoid scores in inference mode, batched.
template <typename T>
std::vector<double> predict_scores(const nn::ModelParams<T>& params, const nn::ModelConfig& model,
                                   std::span<const data::LabeledPatch> samples,
                                   const augment::AugmentConfig& aug,
                                   const augment::StainPolicy& stain, int batch_size = 64,
                                   int jobs = 1);

template <typename T>
metrics::DomainReport evaluate(const nn::ModelParams<T>& params, const nn::ModelConfig& model,
                               std::span<const data::LabeledPatch> samples,
                               const augment::AugmentConfig& aug,
                               const augment::StainPolicy& stain, double threshold,
                               int jobs = 1);

// Resolves "auto" class weights against the class mix the loss will see.
// With balanced sampling every batch is 1:1 in expectation, so "auto" gives
// unit weights; otherwise the N / (2 n_c) rule over `labels` applies.
imbalance::LossConfig resolve_loss(const LossSection& loss, std::span<const int> labels,
                                   bool balanced_sampling);

template <typename T>
TrainResult<T> train_loop(std::span<const data::LabeledPatch> dataset, const RunConfig& cfg,
                          const TrainHooks& hooks = {});

// One optimizer step on an already transformed batch; returns the batch loss
// before the update.
template <typename T>
double train_step(nn::ModelParams<T>& params, optim::AdamWState<T>& state,
                  const nn::ModelConfig& model, const nn::Tensor4<T>& batch,
                  std::span<const int> labels, const imbalance::LossConfig& loss,
                  const optim::OptimConfig& optim, const nn::ParamGroups& groups);

template <typename T>
double batch_loss(const nn::ModelParams<T>& params, const nn::ModelConfig& model,
                  const nn::Tensor4<T>& batch, std::span<const int> labels,
                  const imbalance::LossConfig& loss);

}  // namespace mitonet::train
