#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "locrel/errors.hpp"
#include "locrel/graph.hpp"

namespace locrel {

enum class RuleKind { WSquare, Gamma, Epsilon, PassThrough, SignalTakesAll, ResidualSplit };

inline const char* rule_name(RuleKind k) {
  switch (k) {
    case RuleKind::WSquare: return "WSquare";
    case RuleKind::Gamma: return "Gamma";
    case RuleKind::Epsilon: return "Epsilon";
    case RuleKind::PassThrough: return "PassThrough";
    case RuleKind::SignalTakesAll: return "SignalTakesAll";
    case RuleKind::ResidualSplit: return "ResidualSplit";
  }
  return "?";
}

struct Rule {
  RuleKind kind = RuleKind::PassThrough;
  double gamma = 0.25;
  double epsilon = 1e-6;
  double stabilizer = 1e-9;  // sign-matched floor on denominator magnitudes
};

struct LrpOptions {
  double gamma = 0.25;
  double epsilon = 1e-6;
  double stabilizer = 1e-9;
};

/// One rule per node. Defaults: w^2 at the input convolution, gamma for
/// hidden convolutions, epsilon for dense layers, pass-through for
/// activations/dropout/pooling, signal-takes-it-all at gates, proportional
/// split at residual joins.
struct RuleAssignment {
  std::vector<Rule> rules;

  template <class T>
  static RuleAssignment defaults(const LayerGraph<T>& g, const LrpOptions& opt = {}) {
    RuleAssignment ra;
    ra.rules.resize(g.layers.size());
    for (const auto& l : g.layers) {
      Rule r;
      r.gamma = opt.gamma;
      r.epsilon = opt.epsilon;
      r.stabilizer = opt.stabilizer;
      switch (l.kind) {
        case LayerKind::Conv1D:
          r.kind = (!l.inputs.empty() && l.inputs[0] == kGraphInput) ? RuleKind::WSquare : RuleKind::Gamma;
          break;
        case LayerKind::Dense:
          r.kind = RuleKind::Epsilon;
          break;
        case LayerKind::ElementwiseMultiply:
          r.kind = RuleKind::SignalTakesAll;
          break;
        case LayerKind::ResidualAdd:
          r.kind = RuleKind::ResidualSplit;
          break;
        default:
          r.kind = RuleKind::PassThrough;
          break;
      }
      ra.rules[l.id] = r;
    }
    return ra;
  }
};

/// Relevance start point at the output layer: the summed output or a
/// single coordinate (0=x, 1=y, 2=z for the localization heads).
struct OutputSelector {
  int coordinate = -1;  // -1 selects the sum over all outputs

  static OutputSelector sum() { return {-1}; }
  static OutputSelector coord(int k) { return {k}; }
};

struct LayerAudit {
  int node = -1;
  double received = 0.0;  // sum of relevance arriving at the node's output
  double passed = 0.0;    // sum of relevance redistributed to its inputs
  size_t uniform_fallbacks = 0;     // all-zero w^2 columns split uniformly
  size_t stabilized_zero_sums = 0;  // zero denominators rescued by the stabilizer
};

struct RelevanceMap {
  Tensor<double> output_seed;
  Tensor<double> input_relevance;
  std::vector<Tensor<double>> node_relevance;  // received at each node's output
  std::vector<LayerAudit> audit;

  double seed_sum() const {
    double s = 0.0;
    for (double v : output_seed.data) s += v;
    return s;
  }
  double input_sum() const {
    double s = 0.0;
    for (double v : input_relevance.data) s += v;
    return s;
  }
};

namespace lrp_detail {

inline double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }

// Sign-matched zero guard: leaves the denominator alone unless its
// magnitude falls below the stabilizer, so conservation stays a ratio
// identity everywhere the division is well posed.
inline double guarded(double denom, double stab) {
  return std::abs(denom) >= stab ? denom : sign_of(denom) * stab;
}

// z_jk for a single weight/activation pair under a linear-layer rule
inline double z_term(RuleKind kind, double gamma, double a, double w) {
  switch (kind) {
    case RuleKind::WSquare: return w * w;
    case RuleKind::Gamma: return a * (w + (w > 0.0 ? gamma * w : 0.0));
    default: return a * w;  // Epsilon / basic rule
  }
}

}  // namespace lrp_detail

/// w^2 redistribution through a dense weight matrix {out, in}: splits are
/// proportional to squared weights and independent of the activations.
inline Tensor<double> propagate_wsquare(const Tensor<double>& weights, const Tensor<double>& r_out) {
  const size_t out_dim = weights.shape.at(0), in_dim = weights.shape.at(1);
  if (r_out.size() != out_dim) throw ShapeError("propagate_wsquare: relevance size mismatch");
  Tensor<double> r_in({in_dim});
  for (size_t k = 0; k < out_dim; ++k) {
    double denom = 0.0;
    for (size_t j = 0; j < in_dim; ++j) denom += weights.at(k, j) * weights.at(k, j);
    if (denom == 0.0) {  // all-zero column: uniform split
      for (size_t j = 0; j < in_dim; ++j) r_in[j] += r_out[k] / static_cast<double>(in_dim);
      continue;
    }
    for (size_t j = 0; j < in_dim; ++j) r_in[j] += weights.at(k, j) * weights.at(k, j) / denom * r_out[k];
  }
  return r_in;
}

/// Gating rule: the signal branch keeps everything, the gate gets nothing.
inline std::pair<Tensor<double>, Tensor<double>> propagate_signal_takes_all(const Tensor<double>& r_out,
                                                                            const std::vector<size_t>& gate_shape) {
  return {r_out, Tensor<double>(gate_shape)};
}

/// Residual canonizer: split relevance between branches in proportion to
/// their recorded activations, with a sign-matched stabilizer.
inline std::pair<Tensor<double>, Tensor<double>> canonize_residual(const Tensor<double>& a_main,
                                                                   const Tensor<double>& a_skip,
                                                                   const Tensor<double>& r_out,
                                                                   double stabilizer = 1e-9) {
  if (!a_main.same_shape(a_skip) || a_main.size() != r_out.size())
    throw ShapeError("canonize_residual: branch shapes differ");
  Tensor<double> r_main(a_main.shape), r_skip(a_skip.shape);
  for (size_t i = 0; i < r_out.size(); ++i) {
    const double denom = lrp_detail::guarded(a_main[i] + a_skip[i], stabilizer);
    r_main[i] = a_main[i] / denom * r_out[i];
    r_skip[i] = a_skip[i] / denom * r_out[i];
  }
  return {r_main, r_skip};
}

/// Propagates relevance from the selected output back to the input over an
/// inference-mode trace. Pure in (graph, trace): identical traces give
/// bit-identical maps.
template <class T>
RelevanceMap attribute(const LayerGraph<T>& g, const ForwardTrace<T>& tr, OutputSelector sel = {},
                       const RuleAssignment& ra_in = {}) {
  if (g.layers.empty()) throw ConfigError("attribute: empty graph");
  if (tr.training) throw ConfigError("attribute: trace must come from an inference-mode forward");
  if (tr.graph_version != g.version()) throw ConfigError("attribute: stale trace");
  const RuleAssignment ra = ra_in.rules.empty() ? RuleAssignment::defaults(g) : ra_in;
  if (ra.rules.size() != g.layers.size())
    throw ConfigError("attribute: rule assignment does not cover every layer");

  RelevanceMap map;
  map.node_relevance.assign(g.layers.size(), Tensor<double>());
  map.audit.assign(g.layers.size(), LayerAudit{});
  map.input_relevance = Tensor<double>(g.input_shape);

  // seed at the output node
  const Tensor<T>& out_act = tr.outputs.back();
  map.output_seed = Tensor<double>(out_act.shape);
  if (sel.coordinate < 0) {
    for (size_t i = 0; i < out_act.size(); ++i) map.output_seed[i] = static_cast<double>(out_act[i]);
  } else {
    if (static_cast<size_t>(sel.coordinate) >= out_act.size())
      throw ConfigError("attribute: selector coordinate out of range");
    map.output_seed[sel.coordinate] = static_cast<double>(out_act[sel.coordinate]);
  }
  map.node_relevance.back() = map.output_seed;

  auto relevance_into = [&](int id, const std::vector<size_t>& shape) -> Tensor<double>& {
    if (id == kGraphInput) return map.input_relevance;
    Tensor<double>& r = map.node_relevance[static_cast<size_t>(id)];
    if (r.size() == 0) r = Tensor<double>(shape);
    return r;
  };

  for (size_t ri = g.layers.size(); ri-- > 0;) {
    const Layer<T>& l = g.layers[ri];
    const Rule& rule = ra.rules[ri];
    LayerAudit& audit = map.audit[ri];
    audit.node = l.id;

    Tensor<double>& r_out = map.node_relevance[ri];
    if (r_out.size() == 0) r_out = Tensor<double>(tr.outputs[ri].shape);
    for (double v : r_out.data) audit.received += v;

    const Tensor<T>& in0 = tr.output_of(l.inputs.empty() ? kGraphInput : l.inputs[0]);

    auto check_rule = [&](std::initializer_list<RuleKind> allowed) {
      for (RuleKind k : allowed)
        if (rule.kind == k) return;
      throw ConfigError(std::string("attribute: rule ") + rule_name(rule.kind) + " cannot apply to " +
                        kind_name(l.kind) + " node " + std::to_string(l.id));
    };

    switch (l.kind) {
      case LayerKind::Conv1D: {
        check_rule({RuleKind::WSquare, RuleKind::Gamma, RuleKind::Epsilon});
        Tensor<double>& r_in = relevance_into(l.inputs[0], in0.shape);
        size_t pad_l, pad_r;
        detail::conv_pads(l, pad_l, pad_r);
        const size_t len = in0.shape[1];
        const size_t lout = tr.outputs[ri].shape[1];
        const double extra = rule.kind == RuleKind::Epsilon ? rule.epsilon : 0.0;
        std::vector<double> z(l.in_channels * l.kernel);
        for (size_t o = 0; o < l.out_channels; ++o) {
          for (size_t t = 0; t < lout; ++t) {
            const double rk = r_out.data[o * lout + t];
            if (rk == 0.0) continue;
            double denom = 0.0;
            size_t n_valid = 0;
            for (size_t i = 0; i < l.in_channels; ++i) {
              const T* wr = &l.weights.data[(o * l.in_channels + i) * l.kernel];
              for (size_t k = 0; k < l.kernel; ++k) {
                const long p = static_cast<long>(t * l.stride + k) - static_cast<long>(pad_l);
                double& zt = z[i * l.kernel + k];
                if (p < 0 || p >= static_cast<long>(len)) {  // padding carries no relevance
                  zt = 0.0;
                  continue;
                }
                ++n_valid;
                zt = lrp_detail::z_term(rule.kind, rule.gamma, static_cast<double>(in0.data[i * len + p]),
                                        static_cast<double>(wr[k]));
                denom += zt;
              }
            }
            const double with_eps = denom + lrp_detail::sign_of(denom) * extra;
            if (std::abs(with_eps) < rule.stabilizer) {
              // degenerate column (all-zero w^2 or a purely bias-driven
              // activation): split uniformly so no relevance is lost
              ++audit.uniform_fallbacks;
              const double share = rk / static_cast<double>(n_valid);
              for (size_t i = 0; i < l.in_channels; ++i)
                for (size_t k = 0; k < l.kernel; ++k) {
                  const long p = static_cast<long>(t * l.stride + k) - static_cast<long>(pad_l);
                  if (p >= 0 && p < static_cast<long>(len)) r_in.data[i * len + p] += share;
                }
              audit.passed += rk;
              continue;
            }
            const double scale = rk / with_eps;
            for (size_t i = 0; i < l.in_channels; ++i)
              for (size_t k = 0; k < l.kernel; ++k) {
                const long p = static_cast<long>(t * l.stride + k) - static_cast<long>(pad_l);
                if (p < 0 || p >= static_cast<long>(len)) continue;
                const double r = z[i * l.kernel + k] * scale;
                r_in.data[i * len + p] += r;
                audit.passed += r;
              }
          }
        }
        break;
      }
      case LayerKind::Dense: {
        check_rule({RuleKind::WSquare, RuleKind::Gamma, RuleKind::Epsilon});
        Tensor<double>& r_in = relevance_into(l.inputs[0], in0.shape);
        const double extra = rule.kind == RuleKind::Epsilon ? rule.epsilon : 0.0;
        for (size_t k = 0; k < l.out_dim; ++k) {
          const double rk = r_out[k];
          if (rk == 0.0) continue;
          const T* wr = &l.weights.data[k * l.in_dim];
          double denom = 0.0;
          for (size_t j = 0; j < l.in_dim; ++j)
            denom += lrp_detail::z_term(rule.kind, rule.gamma, static_cast<double>(in0.data[j]),
                                        static_cast<double>(wr[j]));
          const double with_eps = denom + lrp_detail::sign_of(denom) * extra;
          if (std::abs(with_eps) < rule.stabilizer) {
            ++audit.uniform_fallbacks;
            for (size_t j = 0; j < l.in_dim; ++j) r_in.data[j] += rk / static_cast<double>(l.in_dim);
            audit.passed += rk;
            continue;
          }
          const double scale = rk / with_eps;
          for (size_t j = 0; j < l.in_dim; ++j) {
            const double r = lrp_detail::z_term(rule.kind, rule.gamma, static_cast<double>(in0.data[j]),
                                                static_cast<double>(wr[j])) *
                             scale;
            r_in.data[j] += r;
            audit.passed += r;
          }
        }
        break;
      }
      case LayerKind::ReLU:
      case LayerKind::Sigmoid:
      case LayerKind::Dropout: {
        check_rule({RuleKind::PassThrough});
        Tensor<double>& r_in = relevance_into(l.inputs[0], in0.shape);
        for (size_t i = 0; i < r_out.size(); ++i) r_in.data[i] += r_out.data[i];
        audit.passed = audit.received;
        break;
      }
      case LayerKind::MaxPool1D: {
        check_rule({RuleKind::PassThrough});
        Tensor<double>& r_in = relevance_into(l.inputs[0], in0.shape);
        const auto& arg = tr.pool_argmax[ri];
        for (size_t j = 0; j < r_out.size(); ++j) r_in.data[arg[j]] += r_out.data[j];
        audit.passed = audit.received;
        break;
      }
      case LayerKind::GlobalAvgPool1D: {
        check_rule({RuleKind::PassThrough});
        Tensor<double>& r_in = relevance_into(l.inputs[0], in0.shape);
        const size_t c = in0.shape[0], len = in0.shape[1];
        for (size_t i = 0; i < c; ++i) {
          const double rk = r_out[i];
          if (rk == 0.0) continue;
          double denom = 0.0;
          for (size_t t = 0; t < len; ++t) denom += static_cast<double>(in0.data[i * len + t]);
          if (std::abs(denom) < rule.stabilizer) {
            ++audit.uniform_fallbacks;
            for (size_t t = 0; t < len; ++t) r_in.data[i * len + t] += rk / static_cast<double>(len);
            audit.passed += rk;
            continue;
          }
          for (size_t t = 0; t < len; ++t) {
            const double r = static_cast<double>(in0.data[i * len + t]) / denom * rk;
            r_in.data[i * len + t] += r;
            audit.passed += r;
          }
        }
        break;
      }
      case LayerKind::ElementwiseMultiply: {
        check_rule({RuleKind::SignalTakesAll});
        if (l.inputs.size() != 2) throw ConfigError("attribute: gate node lacks signal/gate branches");
        const Tensor<T>& sig = tr.output_of(l.inputs[0]);
        Tensor<double>& r_sig = relevance_into(l.inputs[0], sig.shape);
        for (size_t i = 0; i < r_out.size(); ++i) r_sig.data[i] += r_out.data[i];
        // gate branch receives exactly zero; ensure it exists for the audit
        relevance_into(l.inputs[1], tr.output_of(l.inputs[1]).shape);
        audit.passed = audit.received;
        break;
      }
      case LayerKind::ResidualAdd: {
        check_rule({RuleKind::ResidualSplit});
        const Tensor<T>& am = tr.output_of(l.inputs[0]);
        const Tensor<T>& as = tr.output_of(l.inputs[1]);
        Tensor<double>& r_main = relevance_into(l.inputs[0], am.shape);
        Tensor<double>& r_skip = relevance_into(l.inputs[1], as.shape);
        for (size_t i = 0; i < r_out.size(); ++i) {
          const double s = static_cast<double>(am.data[i]) + static_cast<double>(as.data[i]);
          if (std::abs(s) < rule.stabilizer) {
            if (r_out.data[i] != 0.0) ++audit.stabilized_zero_sums;
            const double half = 0.5 * r_out.data[i];
            r_main.data[i] += half;
            r_skip.data[i] += half;
            audit.passed += r_out.data[i];
            continue;
          }
          const double rm = static_cast<double>(am.data[i]) / s * r_out.data[i];
          const double rs = static_cast<double>(as.data[i]) / s * r_out.data[i];
          r_main.data[i] += rm;
          r_skip.data[i] += rs;
          audit.passed += rm + rs;
        }
        break;
      }
    }

    if (!r_out.all_finite())
      throw NumericError("attribute: non-finite relevance at " + std::string(kind_name(l.kind)) + " node " +
                         std::to_string(l.id));
  }

  if (!map.input_relevance.all_finite()) throw NumericError("attribute: non-finite input relevance");
  return map;
}

/// Concatenates per-window input relevance into one time series per
/// microphone, sample-aligned with the concatenated audio.
inline Tensor<double> relevance_signal(const std::vector<Tensor<double>>& windows) {
  if (windows.empty()) throw DataError("relevance_signal: no windows");
  const auto& s0 = windows.front().shape;
  if (s0.size() != 2) throw ShapeError("relevance_signal: expects {channels, samples} windows");
  for (const auto& w : windows)
    if (w.shape != s0) throw DataError("relevance_signal: window shape mismatch");
  const size_t m = s0[0], n = s0[1], count = windows.size();
  Tensor<double> out({m, n * count});
  for (size_t wi = 0; wi < count; ++wi)
    for (size_t c = 0; c < m; ++c)
      std::copy_n(&windows[wi].data[c * n], n, &out.data[c * n * count + wi * n]);
  return out;
}

}  // namespace locrel
