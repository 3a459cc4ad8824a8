#include "mitonet/train.hpp"

#include <algorithm>
#include <numeric>

#include "mitonet/errors.hpp"
#include "mitonet/parallel.hpp"
#include "mitonet/random.hpp"
#include "mitonet/stain.hpp"

namespace mitonet::train {
namespace {

// Stream keys under the run seed.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kBatchStream = 3;
constexpr std::uint64_t kAugmentStream = 4;

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::vector<double> score_tensors(const nn::ModelParams<T>& params, const nn::ModelConfig& model,
                                  std::span<const ImageTensor> tensors, int batch_size) {
  std::vector<double> scores;
  scores.reserve(tensors.size());
  const std::size_t step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < tensors.size(); start += step) {
    const std::size_t count = std::min(step, tensors.size() - start);
    const auto logits = nn::infer(params, model, stack<T>(tensors.subspan(start, count)));
    for (T z : logits) scores.push_back(imbalance::sigmoid_stable(static_cast<double>(z)));
  }
  return scores;
}

std::vector<ImageTensor> eval_tensors(std::span<const data::LabeledPatch> samples,
                                      const augment::AugmentConfig& aug,
                                      const augment::StainPolicy& stain, int jobs) {
  std::vector<ImageTensor> out(samples.size());
  parallel_for(samples.size(), jobs,
               [&](std::size_t i) { out[i] = augment::eval_transform(samples[i].patch, aug, stain); });
  return out;
}

metrics::DomainReport report_from_scores(std::span<const data::LabeledPatch> samples,
                                         const std::vector<double>& scores, double threshold) {
  std::vector<metrics::ScoredSample> scored(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    scored[i] = {scores[i], samples[i].label, samples[i].domain};
  }
  return metrics::domain_report(scored, threshold);
}

template <typename T>
std::vector<imbalance::LabeledLogit> labeled(const std::vector<T>& logits,
                                             std::span<const int> labels) {
  if (logits.size() != labels.size()) {
    throw ShapeMismatch("batch holds " + std::to_string(logits.size()) + " samples but " +
                        std::to_string(labels.size()) + " labels");
  }
  std::vector<imbalance::LabeledLogit> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = {labels[i], static_cast<double>(logits[i])};
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const EpochRecord& rec) {
  return {
      {"epoch", rec.epoch},
      {"train_loss", rec.train_loss},
      {"val",
       {{"bacc", optional_json(rec.val.bacc)},
        {"accuracy", optional_json(rec.val.accuracy)},
        {"sensitivity", optional_json(rec.val.sensitivity)},
        {"specificity", optional_json(rec.val.specificity)},
        {"roc_auc", optional_json(rec.val.roc_auc)}}},
      {"head_lr", rec.head_lr},
      {"backbone_lr", rec.backbone_lr},
      {"early_stop",
       {{"best_bacc", rec.early_stop.best_bacc},
        {"best_epoch", rec.early_stop.best_epoch},
        {"epochs_since_improve", rec.early_stop.epochs_since_improve}}},
      {"improved", rec.improved},
      {"stop", rec.stop},
  };
}

template <typename T>
nn::Tensor4<T> stack(std::span<const ImageTensor> images) {
  if (images.empty()) throw EmptyBatch("cannot stack an empty batch");
  const ImageTensor& first = images.front();
  nn::Tensor4<T> out(static_cast<int>(images.size()), first.channels, first.height, first.width);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageTensor& img = images[i];
    if (img.channels != first.channels || img.height != first.height || img.width != first.width) {
      throw ShapeMismatch("images in a batch must share one shape");
    }
    auto dst = out.sample(static_cast<int>(i));
    std::transform(img.data.begin(), img.data.end(), dst.begin(),
                   [](double v) { return static_cast<T>(v); });
  }
  return out;
}

template <typename T>
std::vector<double> predict_scores(const nn::ModelParams<T>& params, const nn::ModelConfig& model,
                                   std::span<const data::LabeledPatch> samples,
                                   const augment::AugmentConfig& aug,
                                   const augment::StainPolicy& stain, int batch_size, int jobs) {
  if (samples.empty()) return {};
  const auto tensors = eval_tensors(samples, aug, stain, jobs);
  return score_tensors(params, model, std::span<const ImageTensor>(tensors), batch_size);
}

template <typename T>
metrics::DomainReport evaluate(const nn::ModelParams<T>& params, const nn::ModelConfig& model,
                               std::span<const data::LabeledPatch> samples,
                               const augment::AugmentConfig& aug,
                               const augment::StainPolicy& stain, double threshold, int jobs) {
  if (samples.empty()) throw EmptyInput("evaluate needs at least one sample");
  const auto scores = predict_scores(params, model, samples, aug, stain, 64, jobs);
  return report_from_scores(samples, scores, threshold);
}

imbalance::LossConfig resolve_loss(const LossSection& loss, std::span<const int> labels,
                                   bool balanced_sampling) {
  imbalance::LossConfig out = loss.cfg;
  if (loss.auto_w1 || loss.auto_w0) {
    auto w = imbalance::class_weights(imbalance::count_classes(labels));
    if (balanced_sampling) w = imbalance::class_weights({1, 1});
    if (loss.auto_w1) out.w1 = w.w1;
    if (loss.auto_w0) out.w0 = w.w0;
  }
  out.validate();
  return out;
}

template <typename T>
double batch_loss(const nn::ModelParams<T>& params, const nn::ModelConfig& model,
                  const nn::Tensor4<T>& batch, std::span<const int> labels,
                  const imbalance::LossConfig& loss) {
  const auto logits = nn::infer(params, model, batch);
  return imbalance::combined_loss(labeled(logits, labels), loss);
}

template <typename T>
double train_step(nn::ModelParams<T>& params, optim::AdamWState<T>& state,
                  const nn::ModelConfig& model, const nn::Tensor4<T>& batch,
                  std::span<const int> labels, const imbalance::LossConfig& loss,
                  const optim::OptimConfig& optim, const nn::ParamGroups& groups) {
  auto result = nn::forward(params, model, batch);
  const auto scored = labeled(result.logits, labels);
  const double value = imbalance::combined_loss(scored, loss);
  const auto dz = imbalance::combined_grad(scored, loss);
  std::vector<T> dlogits(dz.size());
  std::transform(dz.begin(), dz.end(), dlogits.begin(), [](double g) { return static_cast<T>(g); });
  const auto grads = nn::backward(result.cache, std::span<const T>(dlogits));
  optim::adamw_step(params, grads, state, optim, groups);
  return value;
}

template <typename T>
TrainResult<T> train_loop(std::span<const data::LabeledPatch> dataset, const RunConfig& cfg,
                          const TrainHooks& hooks) {
  cfg.validate();
  std::vector<int> labels(dataset.size());
  std::transform(dataset.begin(), dataset.end(), labels.begin(),
                 [](const data::LabeledPatch& s) { return s.label; });
  const auto all_counts = imbalance::count_classes(labels);
  if (all_counts.n_pos == 0 || all_counts.n_neg == 0) {
    throw MissingClass("training data must contain both classes");
  }

  TrainResult<T> result;
  {
    Rng split_rng = make_rng(cfg.seed, {kSplitStream});
    result.split = imbalance::stratified_split(labels, cfg.data.val_fraction, split_rng);
  }
  const auto& train_idx = result.split.train;
  const std::size_t n_train = train_idx.size();

  std::vector<int> train_labels(n_train);
  for (std::size_t i = 0; i < n_train; ++i) train_labels[i] = labels[train_idx[i]];
  result.loss = resolve_loss(cfg.loss, train_labels, cfg.data.use_sampler);

  // Stain normalization is deterministic, so it is applied once up front.
  const auto train_policy = cfg.train_stain_policy();
  std::vector<Patch> train_patches(n_train);
  std::vector<char> passthrough(n_train, 0);
  parallel_for(n_train, hooks.jobs, [&](std::size_t i) {
    const Patch& src = dataset[train_idx[i]].patch;
    validate(src);
    if (train_policy.normalize) {
      auto outcome = stain::normalize_or_passthrough(src, train_policy.params);
      passthrough[i] = outcome.normalized ? 0 : 1;
      train_patches[i] = std::move(outcome.patch);
    } else {
      train_patches[i] = src;
    }
  });
  result.stain_passthrough =
      static_cast<std::size_t>(std::count(passthrough.begin(), passthrough.end(), 1));

  std::vector<data::LabeledPatch> val_samples;
  val_samples.reserve(result.split.val.size());
  for (std::size_t i : result.split.val) val_samples.push_back(dataset[i]);
  const auto val_tensors =
      eval_tensors(val_samples, cfg.augment, cfg.eval_stain_policy(), hooks.jobs);

  nn::ModelParams<T> params;
  {
    Rng init_rng = make_rng(cfg.seed, {kInitStream});
    params = nn::init_model<T>(cfg.model, init_rng);
  }
  const auto groups = nn::param_groups(params);
  auto state = optim::make_adamw_state(params);
  const imbalance::InverseFrequencySampler sampler(train_labels);

  const std::size_t batch_size = static_cast<std::size_t>(cfg.optim.batch_size);
  const std::size_t batches = (n_train + batch_size - 1) / batch_size;
  optim::EarlyStopState early;
  bool have_best = false;

  for (int epoch = 1; epoch <= cfg.optim.max_epochs; ++epoch) {
    const auto ue = static_cast<std::uint64_t>(epoch);
    std::vector<std::size_t> order;
    if (!cfg.data.use_sampler) {
      order.resize(n_train);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle_rng = make_rng(cfg.seed, {kBatchStream, ue});
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<std::size_t> members;
      if (cfg.data.use_sampler) {
        Rng batch_rng = make_rng(cfg.seed, {kBatchStream, ue, b});
        members = sampler.draw(batch_size, batch_rng);
      } else {
        const auto first = order.begin() + static_cast<std::ptrdiff_t>(b * batch_size);
        const auto last = order.begin() +
                          static_cast<std::ptrdiff_t>(std::min(n_train, (b + 1) * batch_size));
        members.assign(first, last);
      }

      std::vector<ImageTensor> images(members.size());
      std::vector<int> batch_labels(members.size());
      parallel_for(members.size(), hooks.jobs, [&](std::size_t slot) {
        Rng aug_rng = make_rng(cfg.seed, {kAugmentStream, ue, b, slot});
        images[slot] = augment::train_augment(train_patches[members[slot]], cfg.augment, aug_rng,
                                              train_policy.params);
        batch_labels[slot] = train_labels[members[slot]];
      });
      const auto batch = stack<T>(images);
      const double value = train_step(params, state, cfg.model, batch, batch_labels, result.loss,
                                      cfg.optim, groups);
      loss_sum += value * static_cast<double>(members.size());
      loss_count += members.size();
    }

    const auto scores =
        score_tensors(params, cfg.model, std::span<const ImageTensor>(val_tensors), 64);
    const auto report = report_from_scores(val_samples, scores, cfg.data.threshold);
    const auto decision =
        optim::early_stop_update(early, epoch, report.overall_pooled.bacc, cfg.optim.patience);
    early = decision.state;

    if (decision.improved) {
      result.best_params = params;
      result.best_optim_state = state;
      result.final_report = report;
      result.best_epoch = epoch;
      result.best_bacc = early.best_bacc;
      have_best = true;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(loss_count, 1));
    rec.val = report.overall_pooled;
    rec.head_lr = cfg.optim.head_lr;
    rec.backbone_lr = cfg.optim.backbone_lr();
    rec.early_stop = early;
    rec.improved = decision.improved;
    rec.stop = decision.stop;
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (decision.stop) break;
  }

  if (!have_best) {
    // No epoch produced a defined BAcc; fall back to the final state.
    result.best_params = params;
    result.best_optim_state = state;
    result.final_report = report_from_scores(
        val_samples, score_tensors(params, cfg.model, std::span<const ImageTensor>(val_tensors), 64),
        cfg.data.threshold);
    result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
    result.best_bacc = 0.0;
  }
  return result;
}

#define MITONET_TRAIN_INSTANTIATE(T)                                                               \
  template nn::Tensor4<T> stack<T>(std::span<const ImageTensor>);                                  \
  template std::vector<double> predict_scores<T>(                                                  \
      const nn::ModelParams<T>&, const nn::ModelConfig&, std::span<const data::LabeledPatch>,      \
      const augment::AugmentConfig&, const augment::StainPolicy&, int, int);                       \
  template metrics::DomainReport evaluate<T>(                                                      \
      const nn::ModelParams<T>&, const nn::ModelConfig&, std::span<const data::LabeledPatch>,      \
      const augment::AugmentConfig&, const augment::StainPolicy&, double, int);                    \
  template double batch_loss<T>(const nn::ModelParams<T>&, const nn::ModelConfig&,                 \
                                const nn::Tensor4<T>&, std::span<const int>,                       \
                                const imbalance::LossConfig&);                                     \
  template double train_step<T>(nn::ModelParams<T>&, optim::AdamWState<T>&,                       \
                                const nn::ModelConfig&, const nn::Tensor4<T>&,                     \
                                std::span<const int>, const imbalance::LossConfig&,                \
                                const optim::OptimConfig&, const nn::ParamGroups&);                \
  template TrainResult<T> train_loop<T>(std::span<const data::LabeledPatch>, const RunConfig&,     \
                                        const TrainHooks&);

MITONET_TRAIN_INSTANTIATE(float)
MITONET_TRAIN_INSTANTIATE(double)

#undef MITONET_TRAIN_INSTANTIATE

}  // namespace mitonet::train
