#pragma once

// Imbalance-aware objective: class-weighted BCE mixed with focal loss, both
// evaluated from logits in log space, plus the sampling and splitting helpers
// that go with it.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mitonet/random.hpp"

namespace mitonet::imbalance {

struct LossConfig {
  double w1 = 1.0;
  double w0 = 1.0;
  double alpha = 0.25;
  double gamma = 2.0;
  double lambda = 0.5;

  void validate() const;
};

struct LabeledLogit {
  int y = 0;
  double z = 0.0;
};

struct ClassCounts {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

ClassCounts count_classes(std::span<const int> labels);

// log(1 + exp(x)) without overflow.
double softplus(double x);
double sigmoid_stable(double z);

double wbce(const LabeledLogit& s, const LossConfig& cfg);
double focal(const LabeledLogit& s, const LossConfig& cfg);

// d/dz of the per-sample terms.
double wbce_grad(const LabeledLogit& s, const LossConfig& cfg);
double focal_grad(const LabeledLogit& s, const LossConfig& cfg);

// Mean over the batch of lambda * WBCE + (1 - lambda) * Focal.
double combined_loss(std::span<const LabeledLogit> batch, const LossConfig& cfg);

// Per-logit derivative of combined_loss (includes the 1/B factor).
std::vector<double> combined_grad(std::span<const LabeledLogit> batch, const LossConfig& cfg);

struct ClassWeights {
  double w0 = 1.0;
  double w1 = 1.0;
};

// w_c = N / (2 n_c); throws MissingClass if a class is absent.
ClassWeights class_weights(const ClassCounts& counts);

// Draws indices with replacement, each with probability proportional to the
// inverse frequency of its class, so both classes are equally likely per draw.
class InverseFrequencySampler {
 public:
  explicit InverseFrequencySampler(std::span<const int> labels);

  std::vector<std::size_t> draw(std::size_t batch_size, Rng& rng) const;

  // Probability that a single draw returns index i.
  double probability(std::size_t i) const;

  const ClassCounts& counts() const noexcept { return counts_; }

 private:
  std::vector<std::size_t> positives_;
  std::vector<std::size_t> negatives_;
  std::vector<int> labels_;
  ClassCounts counts_;
};

std::vector<std::size_t> sampler_draw(std::span<const int> labels, std::size_t batch_size,
                                      Rng& rng);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Number of validation samples taken from a class of size n.
std::size_t stratum_val_count(std::size_t n, double val_fraction);

// Class-stratified split; both index lists come back sorted ascending.
Split stratified_split(std::span<const int> labels, double val_fraction, Rng& rng);

}  // namespace mitonet::imbalance
