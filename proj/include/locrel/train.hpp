#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "locrel/errors.hpp"
#include "locrel/graph.hpp"
#include "locrel/rng.hpp"

namespace locrel {

template <class T>
struct Example {
  Tensor<T> input;
  Tensor<T> target;
};

struct TrainConfig {
  size_t batch = 100;
  size_t max_epochs = 1000;
  double lr = 1e-3;
  size_t lr_patience = 100;    // halve LR after this many stale epochs
  size_t stop_patience = 200;  // stop after this many stale epochs
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool verbose = false;
};

struct EpochRecord {
  size_t epoch;
  double train_mse;
  double val_mse;
  double lr;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<size_t> lr_halving_epochs;
  size_t best_epoch = 0;
  double best_val_mse = std::numeric_limits<double>::infinity();
};

/// Adam with 64-bit moment accumulators; learning rate only ever decreases.
class AdamState {
 public:
  AdamState(size_t n_params, double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n_params, 0.0), v_(n_params, 0.0) {}

  double learning_rate() const { return lr_; }
  void halve_lr() { lr_ *= 0.5; }
  size_t step_count() const { return t_; }

  // flat view over all parameters, in graph order
  template <class T>
  void step(std::span<T*> params, std::span<const T*> grads, std::span<const size_t> sizes) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    size_t off = 0;
    for (size_t p = 0; p < params.size(); ++p) {
      T* w = params[p];
      const T* g = grads[p];
      for (size_t i = 0; i < sizes[p]; ++i) {
        const double gi = static_cast<double>(g[i]);
        m_[off + i] = beta1_ * m_[off + i] + (1.0 - beta1_) * gi;
        v_[off + i] = beta2_ * v_[off + i] + (1.0 - beta2_) * gi * gi;
        const double mhat = m_[off + i] / bc1;
        const double vhat = v_[off + i] / bc2;
        w[i] = static_cast<T>(static_cast<double>(w[i]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
      off += sizes[p];
    }
  }

 private:
  double lr_;
  double beta1_, beta2_, eps_;
  size_t t_ = 0;
  std::vector<double> m_, v_;
};

namespace detail {

template <class T>
double mse_of(const Tensor<T>& pred, const Tensor<T>& target) {
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

template <class T>
struct ParamViews {
  std::vector<T*> params;
  std::vector<size_t> sizes;
  size_t total = 0;

  explicit ParamViews(LayerGraph<T>& g) {
    for (auto& l : g.layers) {
      if (!l.has_params()) continue;
      params.push_back(l.weights.data.data());
      sizes.push_back(l.weights.size());
      params.push_back(l.bias.data.data());
      sizes.push_back(l.bias.size());
    }
    for (size_t s : sizes) total += s;
  }
};

}  // namespace detail

template <class T>
double evaluate_mse(const LayerGraph<T>& g, std::span<const Example<T>> set) {
  double acc = 0.0;
  for (const auto& ex : set) {
    auto [pred, tr] = forward(g, ex.input, false);
    acc += detail::mse_of(pred, ex.target);
  }
  return set.empty() ? 0.0 : acc / static_cast<double>(set.size());
}

/// MSE training with LR halving on validation plateaus and early stopping.
/// Restores the parameters of the best-validation epoch before returning.
/// Deterministic given the seed: batch order, dropout draws and therefore
/// the entire loss history repeat exactly.
template <class T>
TrainHistory train(LayerGraph<T>& g, std::span<const Example<T>> train_set, std::span<const Example<T>> val_set,
                   const TrainConfig& cfg) {
  if (train_set.empty() || val_set.empty()) throw DataError("train: empty dataset");
  if (cfg.lr <= 0.0) throw ConfigError("train: learning rate must be positive");
  g.validate();

  detail::ParamViews<T> views(g);
  AdamState adam(views.total, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  Rng rng(derive_seed(cfg.seed, 0x7261696eull));  // batch order + dropout stream

  TrainHistory hist;
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Tensor<T>> best_w, best_b;
  auto snapshot = [&] {
    best_w.clear();
    best_b.clear();
    for (const auto& l : g.layers) {
      if (!l.has_params()) continue;
      best_w.push_back(l.weights);
      best_b.push_back(l.bias);
    }
  };
  snapshot();

  size_t plateau = 0;
  for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss_acc = 0.0;
    size_t seen = 0;

    for (size_t start = 0; start < order.size(); start += cfg.batch) {
      const size_t bsz = std::min(cfg.batch, order.size() - start);
      std::vector<Tensor<T>> acc_w(g.layers.size()), acc_b(g.layers.size());
      for (size_t b = 0; b < bsz; ++b) {
        const auto& ex = train_set[order[start + b]];
        auto [pred, tr] = forward(g, ex.input, true, &rng);
        train_loss_acc += detail::mse_of(pred, ex.target);
        Tensor<T> lg(pred.shape);
        const double scale = 2.0 / static_cast<double>(bsz * pred.size());
        for (size_t i = 0; i < pred.size(); ++i)
          lg[i] = static_cast<T>(scale * (static_cast<double>(pred[i]) - static_cast<double>(ex.target[i])));
        auto grads = backward(g, tr, lg);
        for (size_t n = 0; n < g.layers.size(); ++n) {
          if (!g.layers[n].has_params()) continue;
          if (acc_w[n].size() == 0) {
            acc_w[n] = std::move(grads.weights[n]);
            acc_b[n] = std::move(grads.bias[n]);
          } else {
            for (size_t i = 0; i < acc_w[n].size(); ++i) acc_w[n][i] += grads.weights[n][i];
            for (size_t i = 0; i < acc_b[n].size(); ++i) acc_b[n][i] += grads.bias[n][i];
          }
        }
      }
      seen += bsz;
      std::vector<const T*> gptr;
      std::vector<size_t> gsz;
      for (size_t n = 0; n < g.layers.size(); ++n) {
        if (!g.layers[n].has_params()) continue;
        gptr.push_back(acc_w[n].data.data());
        gsz.push_back(acc_w[n].size());
        gptr.push_back(acc_b[n].data.data());
        gsz.push_back(acc_b[n].size());
      }
      adam.step<T>(views.params, gptr, gsz);
      g.bump();
    }

    const double train_mse = train_loss_acc / static_cast<double>(seen);
    const double val_mse = evaluate_mse<T>(g, val_set);
    if (!std::isfinite(val_mse) || !std::isfinite(train_mse))
      throw NumericError("train: loss diverged at epoch " + std::to_string(epoch) +
                         " (train=" + std::to_string(train_mse) + ", val=" + std::to_string(val_mse) + ")");

    hist.epochs.push_back({epoch, train_mse, val_mse, adam.learning_rate()});
    if (cfg.verbose && (epoch % 10 == 0 || epoch == 1))
      std::fprintf(stderr, "epoch %zu train %.6f val %.6f lr %g\n", epoch, train_mse, val_mse,
                   adam.learning_rate());

    if (val_mse < hist.best_val_mse) {
      hist.best_val_mse = val_mse;
      hist.best_epoch = epoch;
      plateau = 0;
      snapshot();
    } else {
      ++plateau;
      if (plateau >= cfg.stop_patience) break;
      if (plateau % cfg.lr_patience == 0) {
        adam.halve_lr();
        hist.lr_halving_epochs.push_back(epoch);
      }
    }
  }

  // restore best-validation parameters
  size_t pi = 0;
  for (auto& l : g.layers) {
    if (!l.has_params()) continue;
    l.weights = best_w[pi];
    l.bias = best_b[pi];
    ++pi;
  }
  g.bump();
  return hist;
}

inline void write_history_csv(const TrainHistory& h, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot open " + path);
  std::fprintf(f, "epoch,train_mse,val_mse,lr\n");
  for (const auto& e : h.epochs)
    std::fprintf(f, "%zu,%.9g,%.9g,%.9g\n", e.epoch, e.train_mse, e.val_mse, e.lr);
  std::fclose(f);
}

}  // namespace locrel
