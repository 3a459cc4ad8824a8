#include "mitonet/imbalance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mitonet/errors.hpp"

namespace mitonet::imbalance {

void LossConfig::validate() const {
  if (!(w1 > 0.0) || !(w0 > 0.0)) throw ConfigError("loss.w1 and loss.w0 must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss.alpha must lie in [0, 1]");
  if (!(gamma >= 0.0)) throw ConfigError("loss.gamma must be >= 0");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("loss.lambda must lie in [0, 1]");
}

ClassCounts count_classes(std::span<const int> labels) {
  ClassCounts c;
  for (int y : labels) (y == 1 ? c.n_pos : c.n_neg)++;
  return c;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_stable(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// With p = sigmoid(z):  -ln p = softplus(-z),  -ln(1 - p) = softplus(z).

double wbce(const LabeledLogit& s, const LossConfig& cfg) {
  return s.y == 1 ? cfg.w1 * softplus(-s.z) : cfg.w0 * softplus(s.z);
}

double focal(const LabeledLogit& s, const LossConfig& cfg) {
  if (s.y == 1) {
    const double nll = softplus(-s.z);
    const double modulator = std::exp(-cfg.gamma * softplus(s.z));  // (1 - p)^gamma
    return cfg.alpha * modulator * nll;
  }
  const double nll = softplus(s.z);
  const double modulator = std::exp(-cfg.gamma * softplus(-s.z));  // p^gamma
  return (1.0 - cfg.alpha) * modulator * nll;
}

double wbce_grad(const LabeledLogit& s, const LossConfig& cfg) {
  return s.y == 1 ? -cfg.w1 * sigmoid_stable(-s.z) : cfg.w0 * sigmoid_stable(s.z);
}

double focal_grad(const LabeledLogit& s, const LossConfig& cfg) {
  const double p = sigmoid_stable(s.z);
  const double q = sigmoid_stable(-s.z);  // 1 - p without cancellation
  if (s.y == 1) {
    // d/dz [alpha (1-p)^g (-ln p)] = alpha (1-p)^g [g p ln p - (1-p)]
    const double modulator = std::exp(-cfg.gamma * softplus(s.z));
    const double log_p = -softplus(-s.z);
    return cfg.alpha * modulator * (cfg.gamma * p * log_p - q);
  }
  // d/dz [(1-alpha) p^g (-ln(1-p))] = (1-alpha) p^g [g (1-p) (-ln(1-p)) + p]
  const double modulator = std::exp(-cfg.gamma * softplus(-s.z));
  const double nll = softplus(s.z);
  return (1.0 - cfg.alpha) * modulator * (cfg.gamma * q * nll + p);
}

double combined_loss(std::span<const LabeledLogit> batch, const LossConfig& cfg) {
  if (batch.empty()) throw EmptyBatch("combined_loss: empty batch");
  double sum = 0.0;
  for (const auto& s : batch) sum += cfg.lambda * wbce(s, cfg) + (1.0 - cfg.lambda) * focal(s, cfg);
  return sum / static_cast<double>(batch.size());
}

std::vector<double> combined_grad(std::span<const LabeledLogit> batch, const LossConfig& cfg) {
  if (batch.empty()) throw EmptyBatch("combined_grad: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> g(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    g[i] = inv_b * (cfg.lambda * wbce_grad(batch[i], cfg) +
                    (1.0 - cfg.lambda) * focal_grad(batch[i], cfg));
  }
  return g;
}

ClassWeights class_weights(const ClassCounts& counts) {
  if (counts.n_pos == 0 || counts.n_neg == 0) {
    throw MissingClass("class weights need at least one sample of each class");
  }
  const double total = static_cast<double>(counts.n_pos + counts.n_neg);
  return {total / (2.0 * static_cast<double>(counts.n_neg)),
          total / (2.0 * static_cast<double>(counts.n_pos))};
}

InverseFrequencySampler::InverseFrequencySampler(std::span<const int> labels)
    : labels_(labels.begin(), labels.end()) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == 1 ? positives_ : negatives_).push_back(i);
  }
  counts_ = {positives_.size(), negatives_.size()};
  if (positives_.empty() || negatives_.empty()) {
    throw MissingClass("inverse-frequency sampling needs both classes");
  }
}

// Choosing a class with probability 1/2 and then a member uniformly gives each
// index probability 1 / (2 n_class), i.e. proportional to 1 / n_class.
std::vector<std::size_t> InverseFrequencySampler::draw(std::size_t batch_size, Rng& rng) const {
  std::vector<std::size_t> out(batch_size);
  for (auto& idx : out) {
    const auto& pool = bernoulli(rng, 0.5) ? positives_ : negatives_;
    idx = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(pool.size()) - 1))];
  }
  return out;
}

double InverseFrequencySampler::probability(std::size_t i) const {
  const std::size_t n = labels_.at(i) == 1 ? counts_.n_pos : counts_.n_neg;
  return 0.5 / static_cast<double>(n);
}

std::vector<std::size_t> sampler_draw(std::span<const int> labels, std::size_t batch_size,
                                      Rng& rng) {
  return InverseFrequencySampler(labels).draw(batch_size, rng);
}

std::size_t stratum_val_count(std::size_t n, double val_fraction) {
  if (n < 2) return 0;
  auto k = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

Split stratified_split(std::span<const int> labels, double val_fraction, Rng& rng) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw MissingClass("stratified split needs both classes");

  Split split;
  for (auto* stratum : {&neg, &pos}) {
    std::shuffle(stratum->begin(), stratum->end(), rng);
    const std::size_t k = stratum_val_count(stratum->size(), val_fraction);
    split.val.insert(split.val.end(), stratum->begin(), stratum->begin() + static_cast<std::ptrdiff_t>(k));
    split.train.insert(split.train.end(), stratum->begin() + static_cast<std::ptrdiff_t>(k), stratum->end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

}  // namespace mitonet::imbalance
