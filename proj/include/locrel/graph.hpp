#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "locrel/errors.hpp"
#include "locrel/rng.hpp"
#include "locrel/tensor.hpp"

namespace locrel {

enum class LayerKind {
  Conv1D,
  MaxPool1D,
  Dense,
  ReLU,
  Sigmoid,
  Dropout,
  GlobalAvgPool1D,
  ElementwiseMultiply,
  ResidualAdd,
};

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv1D: return "Conv1D";
    case LayerKind::MaxPool1D: return "MaxPool1D";
    case LayerKind::Dense: return "Dense";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::Sigmoid: return "Sigmoid";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::GlobalAvgPool1D: return "GlobalAvgPool1D";
    case LayerKind::ElementwiseMultiply: return "ElementwiseMultiply";
    case LayerKind::ResidualAdd: return "ResidualAdd";
  }
  return "?";
}

enum class Padding { Valid, Same };
enum class InitScheme { He, Glorot };

constexpr int kGraphInput = -1;

/// One node of a LayerGraph. Conv activations are {channels, length};
/// Dense consumes any shape flattened row-major and emits {out_dim}.
/// ElementwiseMultiply: inputs[0] is the signal branch, inputs[1] the gate.
/// ResidualAdd: inputs[0] is the main branch, inputs[1] the skip.
template <class T>
struct Layer {
  LayerKind kind{};
  int id = -1;
  std::vector<int> inputs;  // node ids, or kGraphInput

  size_t in_channels = 0, out_channels = 0, kernel = 0, stride = 1;  // Conv1D
  Padding padding = Padding::Valid;
  size_t pool = 0;                // MaxPool1D
  size_t in_dim = 0, out_dim = 0; // Dense
  double rate = 0.0;              // Dropout
  InitScheme init = InitScheme::He;

  Tensor<T> weights;  // Conv: {out_ch, in_ch, kernel}; Dense: {out_dim, in_dim}
  Tensor<T> bias;     // {out_ch} / {out_dim}

  bool has_params() const { return kind == LayerKind::Conv1D || kind == LayerKind::Dense; }
};

/// Recorded activations of one forward pass, keyed by node id.
template <class T>
struct ForwardTrace {
  Tensor<T> input;
  std::vector<Tensor<T>> outputs;
  std::vector<std::vector<uint32_t>> pool_argmax;  // MaxPool1D winners
  std::vector<std::vector<uint8_t>> dropout_mask;  // training-mode Dropout
  bool training = false;
  uint64_t graph_version = 0;

  const Tensor<T>& output_of(int id) const { return id == kGraphInput ? input : outputs.at(static_cast<size_t>(id)); }
};

template <class T>
struct Gradients {
  // indexed by node id; empty tensors for parameterless layers
  std::vector<Tensor<T>> weights;
  std::vector<Tensor<T>> bias;
};

/// Ordered DAG of layers with a single input and a single output (the last
/// node). Node ids equal their position, so topological order is implied.
template <class T>
struct LayerGraph {
  std::vector<Layer<T>> layers;
  std::vector<size_t> input_shape;  // {M channels, N samples} for the models here
  size_t output_dim = 0;

  int add(Layer<T> l) {
    l.id = static_cast<int>(layers.size());
    for (int in : l.inputs)
      if (in != kGraphInput && (in < 0 || in >= l.id))
        throw ShapeError("graph: edge from unknown node " + std::to_string(in));
    layers.push_back(std::move(l));
    bump();
    return layers.back().id;
  }

  uint64_t version() const { return version_; }
  void bump() { ++version_; }

  size_t parameter_count() const {
    size_t n = 0;
    for (const auto& l : layers)
      if (l.has_params()) n += l.weights.size() + l.bias.size();
    return n;
  }

  /// Static shape inference from a given input shape; throws ShapeError if
  /// the chain breaks (e.g. a pooled length reaches zero).
  std::vector<std::vector<size_t>> infer_shapes(const std::vector<size_t>& in_shape) const {
    std::vector<std::vector<size_t>> shapes(layers.size());
    auto shape_of = [&](int id) -> const std::vector<size_t>& {
      return id == kGraphInput ? in_shape : shapes[static_cast<size_t>(id)];
    };
    for (const auto& l : layers) {
      const std::string where = std::string(kind_name(l.kind)) + " node " + std::to_string(l.id);
      switch (l.kind) {
        case LayerKind::Conv1D: {
          const auto& s = shape_of(l.inputs.at(0));
          if (s.size() != 2 || s[0] != l.in_channels)
            throw ShapeError(where + ": expects {" + std::to_string(l.in_channels) + ",L}, got " + shape_str(s));
          const size_t L = s[1];
          size_t pad = l.padding == Padding::Same ? l.kernel - 1 : 0;
          if (L + pad < l.kernel) throw ShapeError(where + ": input shorter than kernel");
          const size_t lout = (L + pad - l.kernel) / l.stride + 1;
          shapes[l.id] = {l.out_channels, lout};
          break;
        }
        case LayerKind::MaxPool1D: {
          const auto& s = shape_of(l.inputs.at(0));
          if (s.size() != 2) throw ShapeError(where + ": expects {C,L}");
          if (s[1] < l.pool) throw ShapeError(where + ": pooled length reaches 0 (L=" + std::to_string(s[1]) + ")");
          shapes[l.id] = {s[0], s[1] / l.pool};
          break;
        }
        case LayerKind::Dense: {
          const auto& s = shape_of(l.inputs.at(0));
          if (Tensor<T>::count(s) != l.in_dim)
            throw ShapeError(where + ": in_dim " + std::to_string(l.in_dim) + " vs input " + shape_str(s));
          shapes[l.id] = {l.out_dim};
          break;
        }
        case LayerKind::ReLU:
        case LayerKind::Sigmoid:
        case LayerKind::Dropout:
          shapes[l.id] = shape_of(l.inputs.at(0));
          break;
        case LayerKind::GlobalAvgPool1D: {
          const auto& s = shape_of(l.inputs.at(0));
          if (s.size() != 2) throw ShapeError(where + ": expects {C,L}");
          shapes[l.id] = {s[0]};
          break;
        }
        case LayerKind::ElementwiseMultiply: {
          if (l.inputs.size() != 2) throw ShapeError(where + ": needs signal and gate branches");
          const auto& sig = shape_of(l.inputs[0]);
          const auto& gate = shape_of(l.inputs[1]);
          const bool channel_gate = sig.size() == 2 && gate.size() == 1 && gate[0] == sig[0];
          if (!channel_gate && sig != gate)
            throw ShapeError(where + ": gate " + shape_str(gate) + " does not match signal " + shape_str(sig));
          shapes[l.id] = sig;
          break;
        }
        case LayerKind::ResidualAdd: {
          if (l.inputs.size() != 2) throw ShapeError(where + ": needs exactly two in-edges");
          const auto& a = shape_of(l.inputs[0]);
          const auto& b = shape_of(l.inputs[1]);
          if (a != b) throw ShapeError(where + ": branch shapes differ: " + shape_str(a) + " vs " + shape_str(b));
          shapes[l.id] = a;
          break;
        }
      }
    }
    return shapes;
  }

  void validate() const {
    if (input_shape.empty()) throw ShapeError("graph: input shape not set");
    for (const auto& l : layers) {
      if (l.kind == LayerKind::Conv1D) {
        std::vector<size_t> w{l.out_channels, l.in_channels, l.kernel};
        if (l.weights.shape != w || l.bias.shape != std::vector<size_t>{l.out_channels})
          throw ShapeError("Conv1D node " + std::to_string(l.id) + ": weight shapes inconsistent with channel counts");
        if (l.stride == 0) throw ShapeError("Conv1D: zero stride");
      }
      if (l.kind == LayerKind::Dense) {
        std::vector<size_t> w{l.out_dim, l.in_dim};
        if (l.weights.shape != w || l.bias.shape != std::vector<size_t>{l.out_dim})
          throw ShapeError("Dense node " + std::to_string(l.id) + ": weight shapes inconsistent");
      }
      if (l.kind == LayerKind::Dropout && (l.rate < 0.0 || l.rate >= 1.0))
        throw ShapeError("Dropout rate must be in [0,1)");
      if (l.kind == LayerKind::MaxPool1D && l.pool == 0) throw ShapeError("MaxPool1D: zero pool size");
    }
    const auto shapes = infer_shapes(input_shape);
    if (!layers.empty()) {
      const auto& out = shapes.back();
      if (output_dim != 0 && Tensor<T>::count(out) != output_dim)
        throw ShapeError("graph output " + shape_str(out) + " != declared output_dim " + std::to_string(output_dim));
    }
  }

  /// Fan-in scaled uniform init: He for layers feeding ReLU, Glorot otherwise.
  void init_params(Rng& rng) {
    for (auto& l : layers) {
      if (!l.has_params()) continue;
      size_t fan_in, fan_out;
      if (l.kind == LayerKind::Conv1D) {
        fan_in = l.in_channels * l.kernel;
        fan_out = l.out_channels * l.kernel;
      } else {
        fan_in = l.in_dim;
        fan_out = l.out_dim;
      }
      const double bound = l.init == InitScheme::He
                               ? std::sqrt(6.0 / static_cast<double>(fan_in))
                               : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& w : l.weights.data) w = static_cast<T>(rng.uniform(-bound, bound));
      l.bias.fill(T(0));
    }
    bump();
  }

 private:
  uint64_t version_ = 0;
};

namespace detail {

template <class T>
void pad_input(const Tensor<T>& x, size_t pad_l, size_t pad_r, Tensor<T>& out) {
  const size_t c = x.shape[0], len = x.shape[1];
  out.shape = {c, len + pad_l + pad_r};
  out.data.assign(c * (len + pad_l + pad_r), T(0));
  for (size_t i = 0; i < c; ++i)
    std::copy_n(&x.data[i * len], len, &out.data[i * out.shape[1] + pad_l]);
}

template <class T>
inline void conv_pads(const Layer<T>& l, size_t& pad_l, size_t& pad_r) {
  if (l.padding == Padding::Same) {
    pad_l = (l.kernel - 1) / 2;
    pad_r = l.kernel - 1 - pad_l;
  } else {
    pad_l = pad_r = 0;
  }
}

template <class T>
Tensor<T> conv1d_forward(const Layer<T>& l, const Tensor<T>& x) {
  size_t pad_l, pad_r;
  conv_pads(l, pad_l, pad_r);
  Tensor<T> xp;
  const Tensor<T>* src = &x;
  if (pad_l + pad_r > 0) {
    pad_input(x, pad_l, pad_r, xp);
    src = &xp;
  }
  const size_t lp = src->shape[1];
  const size_t lout = (lp - l.kernel) / l.stride + 1;
  Tensor<T> y({l.out_channels, lout});
  for (size_t o = 0; o < l.out_channels; ++o) {
    T* yr = &y.data[o * lout];
    std::fill_n(yr, lout, l.bias[o]);
    for (size_t i = 0; i < l.in_channels; ++i) {
      const T* xr = &src->data[i * lp];
      const T* wr = &l.weights.data[(o * l.in_channels + i) * l.kernel];
      for (size_t k = 0; k < l.kernel; ++k) {
        const T w = wr[k];
        if (l.stride == 1) {
          const T* xs = xr + k;
          for (size_t t = 0; t < lout; ++t) yr[t] += w * xs[t];
        } else {
          for (size_t t = 0; t < lout; ++t) yr[t] += w * xr[t * l.stride + k];
        }
      }
    }
  }
  return y;
}

}  // namespace detail

/// Runs the graph on one input. With training=false the pass is
/// deterministic and bit-identical across calls; rng is only consulted by
/// Dropout in training mode.
template <class T>
std::pair<Tensor<T>, ForwardTrace<T>> forward(const LayerGraph<T>& g, const Tensor<T>& x,
                                              bool training = false, Rng* rng = nullptr) {
  if (x.shape != g.input_shape)
    throw ShapeError("forward: input shape " + shape_str(x.shape) + " != graph input " + shape_str(g.input_shape));
  if (!x.all_finite()) throw NumericError("forward: non-finite input");

  ForwardTrace<T> tr;
  tr.input = x;
  tr.training = training;
  tr.graph_version = g.version();
  tr.outputs.resize(g.layers.size());
  tr.pool_argmax.resize(g.layers.size());
  tr.dropout_mask.resize(g.layers.size());

  for (const auto& l : g.layers) {
    const Tensor<T>& in0 = tr.output_of(l.inputs.empty() ? kGraphInput : l.inputs[0]);
    Tensor<T>& out = tr.outputs[l.id];
    switch (l.kind) {
      case LayerKind::Conv1D:
        out = detail::conv1d_forward(l, in0);
        break;
      case LayerKind::MaxPool1D: {
        const size_t c = in0.shape[0], len = in0.shape[1], lo = len / l.pool;
        out = Tensor<T>({c, lo});
        auto& arg = tr.pool_argmax[l.id];
        arg.resize(c * lo);
        for (size_t i = 0; i < c; ++i) {
          const T* xr = &in0.data[i * len];
          for (size_t t = 0; t < lo; ++t) {
            size_t best = t * l.pool;
            T bv = xr[best];
            for (size_t p = 1; p < l.pool; ++p) {
              const size_t idx = t * l.pool + p;
              if (xr[idx] > bv) {  // ties keep the lowest index
                bv = xr[idx];
                best = idx;
              }
            }
            out.data[i * lo + t] = bv;
            arg[i * lo + t] = static_cast<uint32_t>(i * len + best);
          }
        }
        break;
      }
      case LayerKind::Dense: {
        out = Tensor<T>({l.out_dim});
        for (size_t o = 0; o < l.out_dim; ++o) {
          double acc = static_cast<double>(l.bias[o]);
          const T* wr = &l.weights.data[o * l.in_dim];
          for (size_t j = 0; j < l.in_dim; ++j) acc += static_cast<double>(wr[j]) * static_cast<double>(in0.data[j]);
          out[o] = static_cast<T>(acc);
        }
        break;
      }
      case LayerKind::ReLU:
        out = in0;
        for (auto& v : out.data) v = v > T(0) ? v : T(0);
        break;
      case LayerKind::Sigmoid:
        out = in0;
        for (auto& v : out.data) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
        break;
      case LayerKind::Dropout:
        out = in0;
        if (training && l.rate > 0.0) {
          if (!rng) throw ConfigError("forward: training-mode Dropout needs an rng");
          auto& mask = tr.dropout_mask[l.id];
          mask.resize(out.size());
          const T scale = static_cast<T>(1.0 / (1.0 - l.rate));
          for (size_t i = 0; i < out.size(); ++i) {
            mask[i] = rng->uniform() >= l.rate ? 1 : 0;
            out.data[i] = mask[i] ? out.data[i] * scale : T(0);
          }
        }
        break;
      case LayerKind::GlobalAvgPool1D: {
        const size_t c = in0.shape[0], len = in0.shape[1];
        out = Tensor<T>({c});
        for (size_t i = 0; i < c; ++i) {
          double acc = 0.0;
          for (size_t t = 0; t < len; ++t) acc += static_cast<double>(in0.data[i * len + t]);
          out[i] = static_cast<T>(acc / static_cast<double>(len));
        }
        break;
      }
      case LayerKind::ElementwiseMultiply: {
        const Tensor<T>& sig = tr.output_of(l.inputs[0]);
        const Tensor<T>& gate = tr.output_of(l.inputs[1]);
        out = sig;
        if (gate.shape == sig.shape) {
          for (size_t i = 0; i < out.size(); ++i) out.data[i] *= gate.data[i];
        } else {  // per-channel gate {C} on {C,L}
          const size_t c = sig.shape[0], len = sig.shape[1];
          for (size_t i = 0; i < c; ++i) {
            const T gv = gate[i];
            for (size_t t = 0; t < len; ++t) out.data[i * len + t] *= gv;
          }
        }
        break;
      }
      case LayerKind::ResidualAdd: {
        const Tensor<T>& a = tr.output_of(l.inputs[0]);
        const Tensor<T>& b = tr.output_of(l.inputs[1]);
        out = a;
        for (size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
        break;
      }
    }
    if (!out.all_finite())
      throw NumericError("forward: non-finite activation at " + std::string(kind_name(l.kind)) + " node " +
                         std::to_string(l.id));
  }

  Tensor<T> y = g.layers.empty() ? x : tr.outputs.back();
  return {std::move(y), std::move(tr)};
}

/// Reverse-mode gradients of a scalar loss with respect to every learnable
/// parameter, given d(loss)/d(output) in loss_grad.
template <class T>
Gradients<T> backward(const LayerGraph<T>& g, const ForwardTrace<T>& tr, const Tensor<T>& loss_grad) {
  if (tr.graph_version != g.version())
    throw ConfigError("backward: stale trace (graph mutated since forward)");
  if (g.layers.empty()) throw ConfigError("backward: empty graph");
  if (loss_grad.size() != tr.outputs.back().size())
    throw ShapeError("backward: loss gradient shape mismatch");

  Gradients<T> grads;
  grads.weights.resize(g.layers.size());
  grads.bias.resize(g.layers.size());

  // d(loss)/d(output of node), accumulated across consumers
  std::vector<Tensor<T>> gout(g.layers.size());
  Tensor<T> ginput;  // gradient wrt graph input (fan-out from first layers)
  auto accumulate = [&](int id, const Tensor<T>& add, const std::vector<size_t>& shape) {
    Tensor<T>& dst = id == kGraphInput ? ginput : gout[static_cast<size_t>(id)];
    if (dst.size() == 0) {
      dst = add;
      dst.shape = shape;
    } else {
      for (size_t i = 0; i < dst.size(); ++i) dst.data[i] += add.data[i];
    }
  };

  gout.back() = loss_grad;
  gout.back().shape = tr.outputs.back().shape;

  for (size_t ri = g.layers.size(); ri-- > 0;) {
    const auto& l = g.layers[ri];
    Tensor<T>& dy = gout[ri];
    if (dy.size() == 0) {  // node feeds nothing that matters
      dy = Tensor<T>(tr.outputs[ri].shape);
    }
    const Tensor<T>& in0 = tr.output_of(l.inputs.empty() ? kGraphInput : l.inputs[0]);
    const auto in_shape = [&](int slot) { return tr.output_of(l.inputs[slot]).shape; };

    switch (l.kind) {
      case LayerKind::Conv1D: {
        size_t pad_l, pad_r;
        detail::conv_pads(l, pad_l, pad_r);
        Tensor<T> xp;
        const Tensor<T>* src = &in0;
        if (pad_l + pad_r > 0) {
          detail::pad_input(in0, pad_l, pad_r, xp);
          src = &xp;
        }
        const size_t lp = src->shape[1];
        const size_t lout = dy.shape[1];
        grads.weights[ri] = Tensor<T>(l.weights.shape);
        grads.bias[ri] = Tensor<T>(l.bias.shape);
        Tensor<T> dxp({l.in_channels, lp});
        for (size_t o = 0; o < l.out_channels; ++o) {
          const T* dyr = &dy.data[o * lout];
          double db = 0.0;
          for (size_t t = 0; t < lout; ++t) db += static_cast<double>(dyr[t]);
          grads.bias[ri][o] = static_cast<T>(db);
          for (size_t i = 0; i < l.in_channels; ++i) {
            const T* xr = &src->data[i * lp];
            T* dxr = &dxp.data[i * lp];
            const T* wr = &l.weights.data[(o * l.in_channels + i) * l.kernel];
            T* dwr = &grads.weights[ri].data[(o * l.in_channels + i) * l.kernel];
            for (size_t k = 0; k < l.kernel; ++k) {
              double dw = 0.0;
              const T w = wr[k];
              if (l.stride == 1) {
                const T* xs = xr + k;
                T* dxs = dxr + k;
                for (size_t t = 0; t < lout; ++t) {
                  dw += static_cast<double>(dyr[t]) * static_cast<double>(xs[t]);
                  dxs[t] += w * dyr[t];
                }
              } else {
                for (size_t t = 0; t < lout; ++t) {
                  dw += static_cast<double>(dyr[t]) * static_cast<double>(xr[t * l.stride + k]);
                  dxr[t * l.stride + k] += w * dyr[t];
                }
              }
              dwr[k] += static_cast<T>(dw);
            }
          }
        }
        // strip padding
        Tensor<T> dx(in0.shape);
        const size_t len = in0.shape[1];
        for (size_t i = 0; i < l.in_channels; ++i)
          std::copy_n(&dxp.data[i * lp + pad_l], len, &dx.data[i * len]);
        accumulate(l.inputs[0], dx, in0.shape);
        break;
      }
      case LayerKind::MaxPool1D: {
        Tensor<T> dx(in0.shape);
        const auto& arg = tr.pool_argmax[ri];
        for (size_t j = 0; j < dy.size(); ++j) dx.data[arg[j]] += dy.data[j];
        accumulate(l.inputs[0], dx, in0.shape);
        break;
      }
      case LayerKind::Dense: {
        grads.weights[ri] = Tensor<T>(l.weights.shape);
        grads.bias[ri] = Tensor<T>(l.bias.shape);
        Tensor<T> dx({in0.size()});
        for (size_t o = 0; o < l.out_dim; ++o) {
          const T go = dy[o];
          grads.bias[ri][o] = go;
          const T* wr = &l.weights.data[o * l.in_dim];
          T* dwr = &grads.weights[ri].data[o * l.in_dim];
          for (size_t j = 0; j < l.in_dim; ++j) {
            dwr[j] += go * in0.data[j];
            dx.data[j] += go * wr[j];
          }
        }
        accumulate(l.inputs[0], dx, in0.shape);
        break;
      }
      case LayerKind::ReLU: {
        Tensor<T> dx(in0.shape);
        for (size_t i = 0; i < dx.size(); ++i) dx.data[i] = in0.data[i] > T(0) ? dy.data[i] : T(0);
        accumulate(l.inputs[0], dx, in0.shape);
        break;
      }
      case LayerKind::Sigmoid: {
        const Tensor<T>& y = tr.outputs[ri];
        Tensor<T> dx(in0.shape);
        for (size_t i = 0; i < dx.size(); ++i) dx.data[i] = dy.data[i] * y.data[i] * (T(1) - y.data[i]);
        accumulate(l.inputs[0], dx, in0.shape);
        break;
      }
      case LayerKind::Dropout: {
        Tensor<T> dx = dy;
        dx.shape = in0.shape;
        if (tr.training && l.rate > 0.0) {
          const auto& mask = tr.dropout_mask[ri];
          const T scale = static_cast<T>(1.0 / (1.0 - l.rate));
          for (size_t i = 0; i < dx.size(); ++i) dx.data[i] = mask[i] ? dx.data[i] * scale : T(0);
        }
        accumulate(l.inputs[0], dx, in0.shape);
        break;
      }
      case LayerKind::GlobalAvgPool1D: {
        const size_t c = in0.shape[0], len = in0.shape[1];
        Tensor<T> dx(in0.shape);
        for (size_t i = 0; i < c; ++i) {
          const T gv = dy[i] / static_cast<T>(len);
          for (size_t t = 0; t < len; ++t) dx.data[i * len + t] = gv;
        }
        accumulate(l.inputs[0], dx, in0.shape);
        break;
      }
      case LayerKind::ElementwiseMultiply: {
        const Tensor<T>& sig = tr.output_of(l.inputs[0]);
        const Tensor<T>& gate = tr.output_of(l.inputs[1]);
        Tensor<T> dsig(sig.shape);
        Tensor<T> dgate(gate.shape);
        if (gate.shape == sig.shape) {
          for (size_t i = 0; i < sig.size(); ++i) {
            dsig.data[i] = dy.data[i] * gate.data[i];
            dgate.data[i] = dy.data[i] * sig.data[i];
          }
        } else {
          const size_t c = sig.shape[0], len = sig.shape[1];
          for (size_t i = 0; i < c; ++i) {
            double dg = 0.0;
            const T gv = gate[i];
            for (size_t t = 0; t < len; ++t) {
              const size_t idx = i * len + t;
              dsig.data[idx] = dy.data[idx] * gv;
              dg += static_cast<double>(dy.data[idx]) * static_cast<double>(sig.data[idx]);
            }
            dgate[i] = static_cast<T>(dg);
          }
        }
        accumulate(l.inputs[0], dsig, sig.shape);
        accumulate(l.inputs[1], dgate, gate.shape);
        break;
      }
      case LayerKind::ResidualAdd: {
        accumulate(l.inputs[0], dy, in_shape(0));
        accumulate(l.inputs[1], dy, in_shape(1));
        break;
      }
    }
    if (l.has_params() && (!grads.weights[ri].all_finite() || !grads.bias[ri].all_finite()))
      throw NumericError("backward: non-finite gradient at " + std::string(kind_name(l.kind)) + " node " +
                         std::to_string(l.id));
  }
  return grads;
}

}  // namespace locrel
