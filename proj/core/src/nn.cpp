#include "mitonet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "mitonet/errors.hpp"

namespace mitonet::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// Positions of each parameter tensor in the canonical order.
struct ParamIndex {
  std::size_t stem_w = 0;
  std::size_t stem_b = 1;
  std::vector<std::vector<std::size_t>> layer_w;  // [block][layer]
  std::vector<std::size_t> trans_w;               // [block], for all but the last
  std::size_t head_w = 0;
  std::size_t head_b = 0;

  explicit ParamIndex(const ModelConfig& cfg) {
    std::size_t i = 2;
    for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
      layer_w.emplace_back();
      for (int l = 0; l < cfg.blocks[b].layers; ++l) {
        layer_w.back().push_back(i);
        i += 2;
      }
      if (b + 1 < cfg.blocks.size()) {
        trans_w.push_back(i);
        i += 2;
      }
    }
    head_w = i;
    head_b = i + 1;
  }
};

// 3x3, pad 1 patch extraction: cols[(c*9 + ky*3 + kx), y*W + x].
template <typename T>
void im2col3(const T* in, int channels, int h, int w, T* cols) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = in + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          T* row = dst + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, T(0));
            continue;
          }
          // Valid output columns are those with 0 <= x + kx - 1 < w.
          const T* src = plane + static_cast<std::size_t>(sy) * w;
          const int x0 = kx == 0 ? 1 : 0;
          const int x1 = kx == 2 ? w - 1 : w;
          if (x0 > 0) row[0] = T(0);
          if (x1 < w) row[w - 1] = T(0);
          if (x1 > x0) std::copy(src + x0 + kx - 1, src + x1 + kx - 1, row + x0);
        }
      }
    }
  }
}

template <typename T>
void col2im3_add(const T* cols, int channels, int h, int w, T* din) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    T* plane = din + c * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = cols + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const T* row = src + static_cast<std::size_t>(y) * w;
          T* dst = plane + static_cast<std::size_t>(sy) * w;
          const int x0 = kx == 0 ? 1 : 0;
          const int x1 = kx == 2 ? w - 1 : w;
          for (int x = x0; x < x1; ++x) dst[x + kx - 1] += row[x];
        }
      }
    }
  }
}

template <typename T>
void relu_inplace(T* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) data[i] = std::max(data[i], T(0));
}

// out[cout, hw] = W[cout, cin*9] * im2col(in) + b
template <typename T>
void conv3x3(const ParamTensor<T>& weight, const ParamTensor<T>& bias, const T* in, int cin,
             int size, T* out, std::vector<T>& scratch) {
  const int hw = size * size;
  const int cout = weight.shape[0];
  scratch.resize(static_cast<std::size_t>(cin) * 9 * hw);
  im2col3(in, cin, size, size, scratch.data());
  Map<T> o(out, cout, hw);
  o.noalias() = ConstMap<T>(weight.data.data(), cout, cin * 9) *
                ConstMap<T>(scratch.data(), cin * 9, hw);
  o.colwise() += ConstVecMap<T>(bias.data.data(), cout);
}

template <typename T>
struct SampleActs {
  std::vector<std::vector<T>> blocks;
  std::vector<T> pooled;
};

template <typename T>
T run_sample(const ModelParams<T>& params, const ModelConfig& cfg, const ParamIndex& idx,
             const std::vector<StagePlan>& plan, const T* input, SampleActs<T>& acts) {
  std::vector<T> scratch;
  acts.blocks.resize(plan.size());
  for (std::size_t b = 0; b < plan.size(); ++b) {
    const std::size_t hw = static_cast<std::size_t>(plan[b].size) * plan[b].size;
    acts.blocks[b].assign(static_cast<std::size_t>(plan[b].out_channels) * hw, T(0));
  }

  {  // stem
    const std::size_t hw = static_cast<std::size_t>(plan[0].size) * plan[0].size;
    T* out = acts.blocks[0].data();
    conv3x3(params[idx.stem_w], params[idx.stem_w + 1], input, cfg.in_channels, plan[0].size,
            out, scratch);
    relu_inplace(out, static_cast<std::size_t>(cfg.stem_channels) * hw);
  }

  for (std::size_t b = 0; b < plan.size(); ++b) {
    const int size = plan[b].size;
    const std::size_t hw = static_cast<std::size_t>(size) * size;
    T* buf = acts.blocks[b].data();
    const int k = cfg.blocks[b].growth_rate;
    for (int l = 0; l < cfg.blocks[b].layers; ++l) {
      const int cin = plan[b].in_channels + l * k;
      const std::size_t wi = idx.layer_w[b][l];
      T* out = buf + cin * hw;
      conv3x3(params[wi], params[wi + 1], buf, cin, size, out, scratch);
      relu_inplace(out, static_cast<std::size_t>(k) * hw);
    }
    if (b + 1 == plan.size()) break;

    // 1x1 compression then 2x2 average pool into the next block's prefix.
    const int cb = plan[b].out_channels;
    const int ct = plan[b].transition_out;
    const std::size_t ti = idx.trans_w[b];
    RowMat<T> t = ConstMap<T>(params[ti].data.data(), ct, cb) *
                  ConstMap<T>(buf, cb, static_cast<Eigen::Index>(hw));
    t.colwise() += ConstVecMap<T>(params[ti + 1].data.data(), ct);
    const int next = plan[b + 1].size;
    T* dst = acts.blocks[b + 1].data();
    for (int c = 0; c < ct; ++c) {
      for (int y = 0; y < next; ++y) {
        for (int x = 0; x < next; ++x) {
          const T s = t(c, (2 * y) * size + 2 * x) + t(c, (2 * y) * size + 2 * x + 1) +
                      t(c, (2 * y + 1) * size + 2 * x) + t(c, (2 * y + 1) * size + 2 * x + 1);
          dst[(static_cast<std::size_t>(c) * next + y) * next + x] = s / T(4);
        }
      }
    }
  }

  const StagePlan& last = plan.back();
  const std::size_t hw = static_cast<std::size_t>(last.size) * last.size;
  acts.pooled.assign(last.out_channels, T(0));
  const T* buf = acts.blocks.back().data();
  for (int c = 0; c < last.out_channels; ++c) {
    T s = 0;
    for (std::size_t p = 0; p < hw; ++p) s += buf[c * hw + p];
    acts.pooled[c] = s / static_cast<T>(hw);
  }
  const auto& hw_t = params[idx.head_w].data;
  T logit = params[idx.head_b].data[0];
  for (int c = 0; c < last.out_channels; ++c) logit += hw_t[c] * acts.pooled[c];
  return logit;
}

template <typename T>
void check_inputs(const ModelParams<T>& params, const ModelConfig& cfg, const Tensor4<T>& batch) {
  if (batch.c != cfg.in_channels || batch.h != cfg.input_size || batch.w != cfg.input_size) {
    throw ShapeMismatch("batch shape " + std::to_string(batch.c) + "x" + std::to_string(batch.h) +
                        "x" + std::to_string(batch.w) + " does not match model input " +
                        std::to_string(cfg.in_channels) + "x" + std::to_string(cfg.input_size) +
                        "x" + std::to_string(cfg.input_size));
  }
  if (batch.data.size() != static_cast<std::size_t>(batch.n) * batch.sample_stride()) {
    throw ShapeMismatch("batch data length does not match its extents");
  }
  if (!params.matches(param_specs(cfg))) {
    throw ShapeMismatch("parameters do not match the model configuration");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (in_channels != 3) throw ConfigError("model.in_channels must be 3");
  if (stem_channels < 1) throw ConfigError("model.stem_channels must be >= 1");
  if (blocks.empty()) throw ConfigError("model.blocks must not be empty");
  for (const auto& b : blocks) {
    if (b.layers < 1 || b.growth_rate < 1) {
      throw ConfigError("model.blocks entries need layers >= 1 and growth_rate >= 1");
    }
  }
  if (!(transition_compression > 0.0 && transition_compression <= 1.0)) {
    throw ConfigError("model.transition_compression must lie in (0, 1]");
  }
  if (input_size < 1) throw ConfigError("model.input_size must be >= 1");
  int size = input_size;
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    size /= 2;
    if (size < 1) throw ConfigError("model.input_size too small for the number of transitions");
  }
}

std::vector<StagePlan> plan_stages(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<StagePlan> plan;
  int channels = cfg.stem_channels;
  int size = cfg.input_size;
  for (std::size_t b = 0; b < cfg.blocks.size(); ++b) {
    StagePlan s;
    s.in_channels = channels;
    s.out_channels = channels + cfg.blocks[b].layers * cfg.blocks[b].growth_rate;
    s.size = size;
    if (b + 1 < cfg.blocks.size()) {
      s.transition_out = std::max(
          1, static_cast<int>(std::floor(cfg.transition_compression * s.out_channels)));
      channels = s.transition_out;
      size /= 2;
    }
    plan.push_back(s);
  }
  return plan;
}

int head_input_channels(const ModelConfig& cfg) { return plan_stages(cfg).back().out_channels; }

std::size_t ParamSpec::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  const auto plan = plan_stages(cfg);
  std::vector<ParamSpec> specs;
  auto add = [&](std::string name, std::vector<int> shape, int fan_in) {
    const int out = shape[0];
    specs.push_back({name + ".weight", std::move(shape), fan_in, false});
    specs.push_back({name + ".bias", {out}, fan_in, true});
  };
  add("stem", {cfg.stem_channels, cfg.in_channels, 3, 3}, cfg.in_channels * 9);
  for (std::size_t b = 0; b < plan.size(); ++b) {
    const int k = cfg.blocks[b].growth_rate;
    for (int l = 0; l < cfg.blocks[b].layers; ++l) {
      const int cin = plan[b].in_channels + l * k;
      add("block" + std::to_string(b) + ".layer" + std::to_string(l), {k, cin, 3, 3}, cin * 9);
    }
    if (b + 1 < plan.size()) {
      add("transition" + std::to_string(b),
          {plan[b].transition_out, plan[b].out_channels, 1, 1}, plan[b].out_channels);
    }
  }
  add("head", {1, plan.back().out_channels}, plan.back().out_channels);
  return specs;
}

template <typename T>
ModelParams<T>::ModelParams(const std::vector<ParamSpec>& specs) {
  tensors_.reserve(specs.size());
  for (const auto& s : specs) tensors_.push_back({s.name, s.shape, std::vector<T>(s.size(), T(0))});
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

template <typename T>
const ParamTensor<T>& ModelParams<T>::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ShapeMismatch("no parameter named " + name);
}

template <typename T>
ParamTensor<T>& ModelParams<T>::find(const std::string& name) {
  return const_cast<ParamTensor<T>&>(std::as_const(*this).find(name));
}

template <typename T>
bool ModelParams<T>::matches(const std::vector<ParamSpec>& specs) const {
  if (specs.size() != tensors_.size()) return false;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name != tensors_[i].name || specs[i].shape != tensors_[i].shape ||
        specs[i].size() != tensors_[i].data.size()) {
      return false;
    }
  }
  return true;
}

template <typename T>
void ModelParams<T>::fill(T value) {
  for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), value);
}

template <typename T>
ModelParams<T>& ModelParams<T>::operator*=(T factor) {
  for (auto& t : tensors_) {
    for (auto& v : t.data) v *= factor;
  }
  return *this;
}

bool ParamGroups::is_head(const std::string& name) const {
  return std::find(head.begin(), head.end(), name) != head.end();
}

template <typename T>
ParamGroups param_groups(const ModelParams<T>& params) {
  ParamGroups g;
  for (const auto& t : params.tensors()) {
    (t.name == "head.weight" || t.name == "head.bias" ? g.head : g.backbone).push_back(t.name);
  }
  return g;
}

template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg, Rng& rng) {
  const auto specs = param_specs(cfg);
  ModelParams<T> params(specs);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].is_bias) continue;
    const double stddev = std::sqrt(2.0 / specs[i].fan_in);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : params[i].data) v = static_cast<T>(dist(rng));
  }
  return params;
}

template <typename T>
ModelParams<T> zero_model(const ModelConfig& cfg) {
  return ModelParams<T>(param_specs(cfg));
}

template <typename T>
ForwardResult<T> forward(const ModelParams<T>& params, const ModelConfig& cfg,
                         const Tensor4<T>& batch) {
  check_inputs(params, cfg, batch);
  ForwardResult<T> result;
  auto& cache = result.cache;
  cache.cfg = cfg;
  cache.params = params;
  cache.plan = plan_stages(cfg);
  cache.batch = batch.n;
  cache.inputs.resize(batch.n);
  cache.blocks.resize(batch.n);
  cache.pooled.resize(batch.n);
  result.logits.resize(batch.n);
  const ParamIndex idx(cfg);
  for (int i = 0; i < batch.n; ++i) {
    const auto in = batch.sample(i);
    cache.inputs[i].assign(in.begin(), in.end());
    SampleActs<T> acts;
    result.logits[i] = run_sample(params, cfg, idx, cache.plan, in.data(), acts);
    cache.blocks[i] = std::move(acts.blocks);
    cache.pooled[i] = std::move(acts.pooled);
  }
  return result;
}

template <typename T>
std::vector<T> infer(const ModelParams<T>& params, const ModelConfig& cfg,
                     const Tensor4<T>& batch) {
  check_inputs(params, cfg, batch);
  const auto plan = plan_stages(cfg);
  const ParamIndex idx(cfg);
  std::vector<T> logits(batch.n);
  SampleActs<T> acts;
  for (int i = 0; i < batch.n; ++i) {
    logits[i] = run_sample(params, cfg, idx, plan, batch.sample(i).data(), acts);
  }
  return logits;
}

template <typename T>
Gradients<T> backward(const ForwardCache<T>& cache, std::span<const T> dlogits) {
  const ModelConfig& cfg = cache.cfg;
  const auto& plan = cache.plan;
  if (dlogits.size() != static_cast<std::size_t>(cache.batch) ||
      cache.blocks.size() != static_cast<std::size_t>(cache.batch) ||
      cache.plan.size() != cfg.blocks.size() || !cache.params.matches(param_specs(cfg))) {
    throw StaleCache("cache does not match the gradient request");
  }
  const ModelParams<T>& params = cache.params;
  const ParamIndex idx(cfg);
  Gradients<T> grads(param_specs(cfg));
  std::vector<T> cols;
  std::vector<T> dcols;
  std::vector<std::vector<T>> gbufs(plan.size());

  auto accumulate_conv = [&](std::size_t wi, const T* gout, int cout, const T* in, int cin,
                             int size, T* din) {
    const int hw = size * size;
    cols.resize(static_cast<std::size_t>(cin) * 9 * hw);
    im2col3(in, cin, size, size, cols.data());
    ConstMap<T> g(gout, cout, hw);
    ConstMap<T> c(cols.data(), cin * 9, hw);
    Map<T>(grads[wi].data.data(), cout, cin * 9).noalias() += g * c.transpose();
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grads[wi + 1].data.data(), cout) +=
        g.rowwise().sum();
    if (din == nullptr) return;
    dcols.resize(cols.size());
    Map<T>(dcols.data(), cin * 9, hw).noalias() =
        ConstMap<T>(params[wi].data.data(), cout, cin * 9).transpose() * g;
    col2im3_add(dcols.data(), cin, size, size, din);
  };

  for (int i = 0; i < cache.batch; ++i) {
    const T g = dlogits[i];
    const auto& blocks = cache.blocks[i];
    const auto& pooled = cache.pooled[i];
    for (std::size_t b = 0; b < plan.size(); ++b) gbufs[b].assign(blocks[b].size(), T(0));

    // Head and global average pool.
    const StagePlan& last = plan.back();
    const std::size_t last_hw = static_cast<std::size_t>(last.size) * last.size;
    for (int c = 0; c < last.out_channels; ++c) {
      grads[idx.head_w].data[c] += g * pooled[c];
      const T per_pixel = g * params[idx.head_w].data[c] / static_cast<T>(last_hw);
      std::fill_n(gbufs.back().data() + c * last_hw, last_hw, per_pixel);
    }
    grads[idx.head_b].data[0] += g;

    for (std::size_t bi = plan.size(); bi-- > 0;) {
      const int size = plan[bi].size;
      const std::size_t hw = static_cast<std::size_t>(size) * size;
      const T* buf = blocks[bi].data();
      T* gbuf = gbufs[bi].data();
      const int k = cfg.blocks[bi].growth_rate;

      for (int l = cfg.blocks[bi].layers; l-- > 0;) {
        const int cin = plan[bi].in_channels + l * k;
        T* gout = gbuf + cin * hw;
        const T* out = buf + cin * hw;
        for (std::size_t p = 0; p < static_cast<std::size_t>(k) * hw; ++p) {
          if (!(out[p] > T(0))) gout[p] = T(0);
        }
        accumulate_conv(idx.layer_w[bi][l], gout, k, buf, cin, size, gbuf);
      }

      if (bi == 0) {
        T* gstem = gbuf;
        for (std::size_t p = 0; p < static_cast<std::size_t>(cfg.stem_channels) * hw; ++p) {
          if (!(buf[p] > T(0))) gstem[p] = T(0);
        }
        accumulate_conv(idx.stem_w, gstem, cfg.stem_channels, cache.inputs[i].data(),
                        cfg.in_channels, size, nullptr);
        break;
      }

      // Transition (bi - 1): average-pool backward, then 1x1 conv backward.
      const StagePlan& prev = plan[bi - 1];
      const int psize = prev.size;
      const std::size_t phw = static_cast<std::size_t>(psize) * psize;
      const int ct = prev.transition_out;
      const int cb = prev.out_channels;
      RowMat<T> gt = RowMat<T>::Zero(ct, static_cast<Eigen::Index>(phw));
      for (int c = 0; c < ct; ++c) {
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) {
            const T v = gbuf[(static_cast<std::size_t>(c) * size + y) * size + x] / T(4);
            gt(c, (2 * y) * psize + 2 * x) = v;
            gt(c, (2 * y) * psize + 2 * x + 1) = v;
            gt(c, (2 * y + 1) * psize + 2 * x) = v;
            gt(c, (2 * y + 1) * psize + 2 * x + 1) = v;
          }
        }
      }
      const std::size_t ti = idx.trans_w[bi - 1];
      ConstMap<T> prev_buf(blocks[bi - 1].data(), cb, static_cast<Eigen::Index>(phw));
      Map<T>(grads[ti].data.data(), ct, cb).noalias() += gt * prev_buf.transpose();
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grads[ti + 1].data.data(), ct) +=
          gt.rowwise().sum();
      Map<T>(gbufs[bi - 1].data(), cb, static_cast<Eigen::Index>(phw)).noalias() +=
          ConstMap<T>(params[ti].data.data(), ct, cb).transpose() * gt;
    }
  }
  return grads;
}

#define MITONET_INSTANTIATE(T)                                                                \
  template class ModelParams<T>;                                                              \
  template ParamGroups param_groups<T>(const ModelParams<T>&);                                \
  template ModelParams<T> init_model<T>(const ModelConfig&, Rng&);                            \
  template ModelParams<T> zero_model<T>(const ModelConfig&);                                  \
  template ForwardResult<T> forward<T>(const ModelParams<T>&, const ModelConfig&,             \
                                       const Tensor4<T>&);                                    \
  template std::vector<T> infer<T>(const ModelParams<T>&, const ModelConfig&, const Tensor4<T>&); \
  template Gradients<T> backward<T>(const ForwardCache<T>&, std::span<const T>);

MITONET_INSTANTIATE(float)
MITONET_INSTANTIATE(double)

#undef MITONET_INSTANTIATE

}  // namespace mitonet::nn
