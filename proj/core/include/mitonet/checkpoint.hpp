#pragma once

// Checkpoint = directory holding
//   checkpoint.json  header: format_version, numeric_mode, run config, epoch,
//                    best_bacc, seed, AdamW step, tensor table and blob checksum
//   params.bin       little-endian floats (f64 in reference64, f32 in fast32):
//                    all parameters in canonical order, then AdamW first
//                    moments, then second moments, same order.

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "mitonet/config.hpp"
#include "mitonet/nn.hpp"
#include "mitonet/optim.hpp"

namespace mitonet {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointHeader = "checkpoint.json";
inline constexpr const char* kCheckpointBlob = "params.bin";

template <typename T>
struct Checkpoint {
  RunConfig config;
  nn::ModelParams<T> params;
  optim::AdamWState<T> optim_state;
  int epoch = 0;
  double best_bacc = 0.0;
};

template <typename T>
void checkpoint_save(const Checkpoint<T>& ckpt, const std::filesystem::path& dir);

// Validates the header against the stored config's parameter layout, the blob
// size and its checksum. Throws CorruptCheckpoint on any mismatch.
template <typename T>
Checkpoint<T> checkpoint_load(const std::filesystem::path& dir);

// Reads only the header's numeric mode.
NumericMode checkpoint_numeric_mode(const std::filesystem::path& dir);

std::uint64_t fnv1a64(const void* data, std::size_t size);

}  // namespace mitonet
