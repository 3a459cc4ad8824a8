#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "mitonet/augment.hpp"
#include "mitonet/imbalance.hpp"
#include "mitonet/nn.hpp"
#include "mitonet/optim.hpp"
#include "mitonet/stain.hpp"

namespace mitonet {

enum class NumericMode { reference64, fast32 };

std::string to_string(NumericMode mode);
NumericMode parse_numeric_mode(const std::string& text);

struct StainSection {
  stain::StainParams params;
  bool normalize_train = true;
  bool normalize_eval = false;
};

// w1 / w0 may be "auto": filled from the training split's class counts.
struct LossSection {
  imbalance::LossConfig cfg;
  bool auto_w1 = true;
  bool auto_w0 = true;
};

struct DataSection {
  double val_fraction = 0.2;
  bool use_sampler = true;
  double threshold = 0.5;
};

struct RunConfig {
  StainSection stain;
  augment::AugmentConfig augment;
  LossSection loss;
  nn::ModelConfig model;
  optim::OptimConfig optim;
  DataSection data;
  std::uint64_t seed = 0;
  NumericMode numeric_mode = NumericMode::reference64;

  // Section invariants plus cross-section consistency
  // (model.input_size == augment.out_size). Throws ConfigError.
  void validate() const;

  augment::StainPolicy train_stain_policy() const { return {stain.normalize_train, stain.params}; }
  augment::StainPolicy eval_stain_policy() const { return {stain.normalize_eval, stain.params}; }
};

nlohmann::json to_json(const RunConfig& cfg);
// Missing keys take defaults; unknown keys and type errors raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& doc);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace mitonet
