#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mitonet {

using Rng = std::mt19937_64;

// Derives an independent, reproducible stream from a root seed and a path of
// integer keys (epoch, batch, slot, ...). Streams with different key paths do
// not share state, so work items can be processed in any order or in parallel.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys);

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> keys = {}) {
  return Rng(derive_seed(root, keys));
}

// Uniform real in [lo, hi).
double uniform(Rng& rng, double lo, double hi);

// Uniform integer in [lo, hi].
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);

bool bernoulli(Rng& rng, double p);

double normal(Rng& rng, double mean, double stddev);

}  // namespace mitonet
