#pragma once

// Test-side oracles, independent of the library implementation paths they
// check: central finite differences, naive DFT, brute-force correlation,
// and a random-network generator for conservation/gradient sweeps.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "locrel/graph.hpp"
#include "locrel/lrp.hpp"
#include "locrel/rng.hpp"

namespace oracle {

// scalar loss L = sum_i seed[i] * y_i for gradient checks
inline double loss_of(const locrel::Tensor<double>& y, const std::vector<double>& seed) {
  double acc = 0.0;
  for (size_t i = 0; i < y.size(); ++i) acc += seed[i] * y[i];
  return acc;
}

struct FdReport {
  double max_rel_err = 0.0;
  size_t n_params = 0;
  size_t kinks_skipped = 0;  // parameters sitting on a ReLU/argmax kink
};

// Central finite differences over every learnable parameter, step 1e-4.
// ReLU and max-pool make the loss piecewise smooth: when the +/-h interval
// straddles a kink, the h=1e-4 quotient is off even though the gradient is
// right. Such parameters are re-checked at shrinking steps; a genuine
// backward bug stays wrong as h shrinks, a kink converges to the analytic
// value and is counted instead of failed.
inline FdReport fd_gradient_check(locrel::LayerGraph<double>& g, const locrel::Tensor<double>& x,
                                  const std::vector<double>& seed, double h = 1e-4) {
  auto [y0, tr] = locrel::forward(g, x, true);
  locrel::Tensor<double> lg(y0.shape);
  for (size_t i = 0; i < lg.size(); ++i) lg[i] = seed[i];
  const auto grads = locrel::backward(g, tr, lg);

  FdReport rep;
  for (auto& l : g.layers) {
    if (!l.has_params()) continue;
    for (auto* tens : {&l.weights, &l.bias}) {
      const bool is_w = tens == &l.weights;
      for (size_t i = 0; i < tens->size(); ++i) {
        const double orig = tens->data[i];
        const double an = is_w ? grads.weights[l.id][i] : grads.bias[l.id][i];
        double rel = 0.0;
        for (double step : {h, h / 10.0, h / 100.0}) {
          tens->data[i] = orig + step;
          g.bump();
          const double lp = loss_of(locrel::forward(g, x, true).first, seed);
          tens->data[i] = orig - step;
          g.bump();
          const double lm = loss_of(locrel::forward(g, x, true).first, seed);
          tens->data[i] = orig;
          g.bump();
          const double fd = (lp - lm) / (2.0 * step);
          rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
          if (rel < 1e-4) {
            if (step != h) ++rep.kinks_skipped;
            break;
          }
        }
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.n_params;
      }
    }
  }
  return rep;
}

// O(n^2) reference DFT
inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Brute-force time-domain cross-correlation: cc(l) = sum_n a[n] * b[n+l].
inline std::vector<double> brute_xcorr(const std::vector<double>& a, const std::vector<double>& b, int maxlag) {
  std::vector<double> out(2 * maxlag + 1, 0.0);
  const int n = static_cast<int>(a.size());
  for (int l = -maxlag; l <= maxlag; ++l) {
    double acc = 0.0;
    for (int t = 0; t < n; ++t) {
      const int u = t + l;
      if (u >= 0 && u < static_cast<int>(b.size())) acc += a[t] * b[u];
    }
    out[l + maxlag] = acc;
  }
  return out;
}

inline int brute_xcorr_peak(const std::vector<double>& a, const std::vector<double>& b, int maxlag) {
  const auto cc = brute_xcorr(a, b, maxlag);
  int best = 0;
  for (int i = 1; i < static_cast<int>(cc.size()); ++i)
    if (cc[i] > cc[best]) best = i;
  return best - maxlag;
}

// Random mixed network in the style of the localization models: conv
// stages with ReLU (optionally pooled), residual squeeze-and-excitation
// stages, then a dense head. Branch activations entering residual joins
// are post-ReLU, as in the real architectures.
template <class T>
locrel::LayerGraph<T> random_mixed_graph(locrel::Rng& rng, size_t* first_conv_node = nullptr) {
  using namespace locrel;
  LayerGraph<T> g;
  const size_t c0 = 1 + rng.below(3);
  const size_t len0 = 12 + rng.below(12);
  g.input_shape = {c0, len0};

  int prev = kGraphInput;
  size_t ch = c0;
  size_t len = len0;
  bool first = true;
  const size_t n_stages = 1 + rng.below(3);
  for (size_t s = 0; s < n_stages; ++s) {
    const size_t out_ch = 2 + rng.below(4);
    const size_t kernel = 3;
    Layer<T> conv;
    conv.kind = LayerKind::Conv1D;
    conv.inputs = {prev};
    conv.in_channels = ch;
    conv.out_channels = out_ch;
    conv.kernel = kernel;
    conv.stride = 1;
    conv.padding = Padding::Same;
    conv.weights = Tensor<T>({out_ch, ch, kernel});
    conv.bias = Tensor<T>({out_ch});
    prev = g.add(std::move(conv));
    if (first_conv_node && first) *first_conv_node = static_cast<size_t>(prev);
    first = false;
    Layer<T> relu;
    relu.kind = LayerKind::ReLU;
    relu.inputs = {prev};
    prev = g.add(std::move(relu));
    ch = out_ch;

    if (rng.uniform() < 0.5) {  // residual + gate stage
      const int block_in = prev;
      Layer<T> conv2;
      conv2.kind = LayerKind::Conv1D;
      conv2.inputs = {block_in};
      conv2.in_channels = ch;
      conv2.out_channels = ch;
      conv2.kernel = 3;
      conv2.stride = 1;
      conv2.padding = Padding::Same;
      conv2.weights = Tensor<T>({ch, ch, 3});
      conv2.bias = Tensor<T>({ch});
      int main = g.add(std::move(conv2));
      Layer<T> relu2;
      relu2.kind = LayerKind::ReLU;
      relu2.inputs = {main};
      main = g.add(std::move(relu2));
      Layer<T> add;
      add.kind = LayerKind::ResidualAdd;
      add.inputs = {main, block_in};
      const int res = g.add(std::move(add));

      Layer<T> gap;
      gap.kind = LayerKind::GlobalAvgPool1D;
      gap.inputs = {res};
      int se = g.add(std::move(gap));
      Layer<T> d1;
      d1.kind = LayerKind::Dense;
      d1.inputs = {se};
      d1.in_dim = ch;
      d1.out_dim = std::max<size_t>(1, ch / 2);
      d1.weights = Tensor<T>({d1.out_dim, d1.in_dim});
      d1.bias = Tensor<T>({d1.out_dim});
      const size_t mid = d1.out_dim;
      se = g.add(std::move(d1));
      Layer<T> relu3;
      relu3.kind = LayerKind::ReLU;
      relu3.inputs = {se};
      se = g.add(std::move(relu3));
      Layer<T> d2;
      d2.kind = LayerKind::Dense;
      d2.inputs = {se};
      d2.in_dim = mid;
      d2.out_dim = ch;
      d2.weights = Tensor<T>({ch, mid});
      d2.bias = Tensor<T>({ch});
      se = g.add(std::move(d2));
      Layer<T> sig;
      sig.kind = LayerKind::Sigmoid;
      sig.inputs = {se};
      se = g.add(std::move(sig));
      Layer<T> mul;
      mul.kind = LayerKind::ElementwiseMultiply;
      mul.inputs = {res, se};
      prev = g.add(std::move(mul));
    }

    if (rng.uniform() < 0.5 && len >= 4) {
      Layer<T> pool;
      pool.kind = LayerKind::MaxPool1D;
      pool.inputs = {prev};
      pool.pool = 2;
      prev = g.add(std::move(pool));
      len /= 2;
    }
  }

  const size_t out_dim = 1 + rng.below(3);
  Layer<T> head;
  head.kind = LayerKind::Dense;
  head.inputs = {prev};
  head.in_dim = ch * len;
  head.out_dim = out_dim;
  head.weights = Tensor<T>({out_dim, head.in_dim});
  head.bias = Tensor<T>({out_dim});
  g.add(std::move(head));
  g.output_dim = out_dim;

  for (auto& l : g.layers) {
    if (!l.has_params()) continue;
    for (auto& w : l.weights.data) w = static_cast<T>(rng.normal(0.0, 0.5));
    for (auto& b : l.bias.data) b = static_cast<T>(rng.normal(0.0, 0.1));
  }
  g.bump();
  g.validate();
  return g;
}

}  // namespace oracle
