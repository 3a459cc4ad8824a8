#pragma once

// Desk-scale dense-connectivity CNN with a single-logit head.
//
// Topology: 3x3 stem conv + ReLU, then dense blocks. Each dense layer is a
// 3x3 conv (pad 1) + ReLU over the channel concatenation of the block input
// and every earlier layer output in the block, appending growth_rate channels.
// Between blocks a 1x1 conv compresses channels to floor(compression * C) and
// a 2x2 average pool halves the resolution. A global average pool feeds a
// linear head producing one logit per sample.
//
// Within a block the concatenation is stored as one channel-major buffer, so
// the input of layer j is the channel prefix [0, C_in + j * growth_rate).
//
// Canonical parameter order (checkpoint contract):
//   stem.weight [S,3,3,3], stem.bias [S],
//   block{b}.layer{l}.weight [k, C_in + l*k, 3, 3], block{b}.layer{l}.bias [k],
//   transition{b}.weight [C_out, C_in, 1, 1], transition{b}.bias [C_out]
//     (after every block but the last, interleaved in block order),
//   head.weight [1, C_final], head.bias [1].

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mitonet/random.hpp"

namespace mitonet::nn {

struct BlockSpec {
  int layers = 2;
  int growth_rate = 4;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct ModelConfig {
  int in_channels = 3;
  int stem_channels = 8;
  std::vector<BlockSpec> blocks{{2, 4}, {2, 4}};
  double transition_compression = 0.5;
  int input_size = 224;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Channel and spatial bookkeeping derived from a ModelConfig.
struct StagePlan {
  int in_channels = 0;   // channels entering the block
  int out_channels = 0;  // in_channels + layers * growth_rate
  int size = 0;          // spatial side length inside the block
  int transition_out = 0;  // channels after the following transition (0 for last)
};

std::vector<StagePlan> plan_stages(const ModelConfig& cfg);
int head_input_channels(const ModelConfig& cfg);

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  int fan_in = 0;
  bool is_bias = false;

  std::size_t size() const;
};

std::vector<ParamSpec> param_specs(const ModelConfig& cfg);

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> data;

  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

template <typename T>
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const std::vector<ParamSpec>& specs);

  std::vector<ParamTensor<T>>& tensors() noexcept { return tensors_; }
  const std::vector<ParamTensor<T>>& tensors() const noexcept { return tensors_; }

  std::size_t size() const noexcept { return tensors_.size(); }
  std::size_t scalar_count() const;

  ParamTensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const ParamTensor<T>& operator[](std::size_t i) const { return tensors_[i]; }

  const ParamTensor<T>& find(const std::string& name) const;
  ParamTensor<T>& find(const std::string& name);

  // True when names and shapes agree with the specs, in order.
  bool matches(const std::vector<ParamSpec>& specs) const;

  void fill(T value);
  ModelParams& operator*=(T factor);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<ParamTensor<T>> tensors_;
};

template <typename T>
using Gradients = ModelParams<T>;

struct ParamGroups {
  std::vector<std::string> backbone;
  std::vector<std::string> head;

  bool is_head(const std::string& name) const;
};

template <typename T>
ParamGroups param_groups(const ModelParams<T>& params);

template <typename T>
struct Tensor4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_) {}

  std::size_t sample_stride() const { return static_cast<std::size_t>(c) * h * w; }
  std::span<T> sample(int i) { return {data.data() + i * sample_stride(), sample_stride()}; }
  std::span<const T> sample(int i) const {
    return {data.data() + i * sample_stride(), sample_stride()};
  }
};

// He initialization: weights ~ N(0, sqrt(2 / fan_in)), biases 0.
template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, Rng& rng);

template <typename T>
ModelParams<T> zero_model(const ModelConfig& cfg);

// Everything backward needs: a copy of the parameters, the inputs and the
// post-activation block buffers of every sample.
template <typename T>
struct ForwardCache {
  ModelConfig cfg;
  ModelParams<T> params;
  std::vector<StagePlan> plan;
  int batch = 0;
  std::vector<std::vector<T>> inputs;                 // [n][3*H*W]
  std::vector<std::vector<std::vector<T>>> blocks;    // [n][block][C*H*W]
  std::vector<std::vector<T>> pooled;                 // [n][C_final]
};

template <typename T>
struct ForwardResult {
  std::vector<T> logits;
  ForwardCache<T> cache;
};

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& cfg,
                         const Tensor4<T>& batch);

// Forward pass that keeps no cache.
template <typename T>
std::vector<T> infer(const ModelParams<T>& params, const ModelConfig& cfg,
                     const Tensor4<T>& batch);

template <typename T>
Gradients<T> backward(const ForwardCache<T>& cache, std::span<const T> dlogits);

}  // namespace mitonet::nn
