#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "locrel/errors.hpp"
#include "locrel/graph.hpp"

namespace locrel {

/// Stack of Conv1D+ReLU+MaxPool1D blocks followed by a dense regression
/// head emitting cartesian coordinates in meters.
struct LocCnnConfig {
  size_t input_samples = 5120;
  size_t input_channels = 16;
  size_t output_dim = 3;
  std::vector<size_t> channels = {96, 96, 128, 128, 128};
  std::vector<size_t> kernels = {7, 7, 7, 7, 7};
  std::vector<size_t> pools = {7, 7, 7, 7, 2};
  size_t dense_width = 500;
  double dropout_rate = 0.0;

  size_t n_blocks() const { return channels.size(); }

  void check() const {
    if (channels.empty() || channels.size() != kernels.size() || channels.size() != pools.size())
      throw ConfigError("loccnn config: channels/kernels/pools must have equal nonzero length");
    if (output_dim == 0 || dense_width == 0) throw ConfigError("loccnn config: zero head width");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("loccnn config: dropout rate in [0,1)");
  }
};

/// Residual squeeze-and-excitation blocks over raw waveforms; channel
/// adapters between stages, global average pooling into a 3-unit head.
struct SampleCnnConfig {
  size_t input_samples = 5120;
  size_t input_channels = 16;
  size_t output_dim = 3;
  std::vector<size_t> channels = {128, 128, 256, 256, 512};
  size_t kernel = 3;
  size_t pool = 3;
  size_t se_ratio = 16;
  double dropout_rate = 0.0;

  size_t n_blocks() const { return channels.size(); }

  void check() const {
    if (channels.empty()) throw ConfigError("samplecnn config: no blocks");
    if (kernel == 0 || pool == 0 || se_ratio == 0) throw ConfigError("samplecnn config: zero hyperparameter");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("samplecnn config: dropout rate in [0,1)");
  }
};

namespace detail {

template <class T>
Layer<T> conv1d(int input, size_t in_ch, size_t out_ch, size_t kernel, Padding pad, InitScheme init) {
  Layer<T> l;
  l.kind = LayerKind::Conv1D;
  l.inputs = {input};
  l.in_channels = in_ch;
  l.out_channels = out_ch;
  l.kernel = kernel;
  l.stride = 1;
  l.padding = pad;
  l.init = init;
  l.weights = Tensor<T>({out_ch, in_ch, kernel});
  l.bias = Tensor<T>({out_ch});
  return l;
}

template <class T>
Layer<T> dense(int input, size_t in_dim, size_t out_dim, InitScheme init) {
  Layer<T> l;
  l.kind = LayerKind::Dense;
  l.inputs = {input};
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.init = init;
  l.weights = Tensor<T>({out_dim, in_dim});
  l.bias = Tensor<T>({out_dim});
  return l;
}

template <class T>
Layer<T> unary(LayerKind kind, int input) {
  Layer<T> l;
  l.kind = kind;
  l.inputs = {input};
  return l;
}

template <class T>
Layer<T> maxpool(int input, size_t pool) {
  Layer<T> l;
  l.kind = LayerKind::MaxPool1D;
  l.inputs = {input};
  l.pool = pool;
  return l;
}

}  // namespace detail

template <class T = float>
LayerGraph<T> build_loccnn(const LocCnnConfig& cfg) {
  cfg.check();
  LayerGraph<T> g;
  g.input_shape = {cfg.input_channels, cfg.input_samples};
  g.output_dim = cfg.output_dim;

  int prev = kGraphInput;
  size_t ch = cfg.input_channels;
  size_t len = cfg.input_samples;
  for (size_t b = 0; b < cfg.n_blocks(); ++b) {
    prev = g.add(detail::conv1d<T>(prev, ch, cfg.channels[b], cfg.kernels[b], Padding::Same, InitScheme::He));
    prev = g.add(detail::unary<T>(LayerKind::ReLU, prev));
    prev = g.add(detail::maxpool<T>(prev, cfg.pools[b]));
    ch = cfg.channels[b];
    if (len < cfg.pools[b])
      throw ShapeError("loccnn: pooled length reaches 0 at block " + std::to_string(b));
    len /= cfg.pools[b];
  }
  prev = g.add(detail::dense<T>(prev, ch * len, cfg.dense_width, InitScheme::He));
  prev = g.add(detail::unary<T>(LayerKind::ReLU, prev));
  {
    Layer<T> drop = detail::unary<T>(LayerKind::Dropout, prev);
    drop.rate = cfg.dropout_rate;
    prev = g.add(std::move(drop));
  }
  g.add(detail::dense<T>(prev, cfg.dense_width, cfg.output_dim, InitScheme::Glorot));
  g.validate();
  return g;
}

template <class T = float>
LayerGraph<T> build_samplecnn(const SampleCnnConfig& cfg) {
  cfg.check();
  LayerGraph<T> g;
  g.input_shape = {cfg.input_channels, cfg.input_samples};
  g.output_dim = cfg.output_dim;

  // input adapter: the first convolution seen by relevance propagation
  int prev = g.add(detail::conv1d<T>(kGraphInput, cfg.input_channels, cfg.channels[0], cfg.kernel,
                                     Padding::Same, InitScheme::He));
  prev = g.add(detail::unary<T>(LayerKind::ReLU, prev));
  size_t ch = cfg.channels[0];

  for (size_t b = 0; b < cfg.n_blocks(); ++b) {
    if (cfg.channels[b] != ch) {
      prev = g.add(detail::conv1d<T>(prev, ch, cfg.channels[b], cfg.kernel, Padding::Same, InitScheme::He));
      prev = g.add(detail::unary<T>(LayerKind::ReLU, prev));
      ch = cfg.channels[b];
    }
    const int block_in = prev;
    int main = g.add(detail::conv1d<T>(block_in, ch, ch, cfg.kernel, Padding::Same, InitScheme::He));
    main = g.add(detail::unary<T>(LayerKind::ReLU, main));
    Layer<T> add;
    add.kind = LayerKind::ResidualAdd;
    add.inputs = {main, block_in};
    const int res = g.add(std::move(add));

    // squeeze-and-excitation gate
    const size_t bottleneck = std::max<size_t>(1, ch / cfg.se_ratio);
    int se = g.add(detail::unary<T>(LayerKind::GlobalAvgPool1D, res));
    se = g.add(detail::dense<T>(se, ch, bottleneck, InitScheme::He));
    se = g.add(detail::unary<T>(LayerKind::ReLU, se));
    se = g.add(detail::dense<T>(se, bottleneck, ch, InitScheme::Glorot));
    se = g.add(detail::unary<T>(LayerKind::Sigmoid, se));
    Layer<T> mul;
    mul.kind = LayerKind::ElementwiseMultiply;
    mul.inputs = {res, se};  // signal, gate
    prev = g.add(std::move(mul));

    prev = g.add(detail::maxpool<T>(prev, cfg.pool));
  }

  prev = g.add(detail::unary<T>(LayerKind::GlobalAvgPool1D, prev));
  if (cfg.dropout_rate > 0.0) {
    Layer<T> drop = detail::unary<T>(LayerKind::Dropout, prev);
    drop.rate = cfg.dropout_rate;
    prev = g.add(std::move(drop));
  }
  g.add(detail::dense<T>(prev, ch, cfg.output_dim, InitScheme::Glorot));
  g.validate();
  return g;
}

// --- config (de)serialization ------------------------------------------

inline void to_json(nlohmann::json& j, const LocCnnConfig& c) {
  j = {{"input_samples", c.input_samples}, {"input_channels", c.input_channels},
       {"output_dim", c.output_dim},       {"channels", c.channels},
       {"kernels", c.kernels},             {"pools", c.pools},
       {"dense_width", c.dense_width},     {"dropout_rate", c.dropout_rate}};
}

inline void from_json(const nlohmann::json& j, LocCnnConfig& c) {
  c.input_samples = j.value("input_samples", c.input_samples);
  c.input_channels = j.value("input_channels", c.input_channels);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.channels = j.value("channels", c.channels);
  c.kernels = j.value("kernels", c.kernels);
  c.pools = j.value("pools", c.pools);
  c.dense_width = j.value("dense_width", c.dense_width);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
}

inline void to_json(nlohmann::json& j, const SampleCnnConfig& c) {
  j = {{"input_samples", c.input_samples}, {"input_channels", c.input_channels},
       {"output_dim", c.output_dim},       {"channels", c.channels},
       {"kernel", c.kernel},               {"pool", c.pool},
       {"se_ratio", c.se_ratio},           {"dropout_rate", c.dropout_rate}};
}

inline void from_json(const nlohmann::json& j, SampleCnnConfig& c) {
  c.input_samples = j.value("input_samples", c.input_samples);
  c.input_channels = j.value("input_channels", c.input_channels);
  c.output_dim = j.value("output_dim", c.output_dim);
  c.channels = j.value("channels", c.channels);
  c.kernel = j.value("kernel", c.kernel);
  c.pool = j.value("pool", c.pool);
  c.se_ratio = j.value("se_ratio", c.se_ratio);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
}

}  // namespace locrel
