#include <catch2/catch_amalgamated.hpp>

#include "locrel/lrp.hpp"
#include "locrel/models.hpp"
#include "support/oracles.hpp"

using namespace locrel;

namespace {

// single dense layer graph with explicit weights, bias zero
LayerGraph<double> dense_graph(size_t in, size_t out, std::vector<double> w = {}) {
  LayerGraph<double> g;
  g.input_shape = {in};
  g.output_dim = out;
  Layer<double> d;
  d.kind = LayerKind::Dense;
  d.inputs = {kGraphInput};
  d.in_dim = in;
  d.out_dim = out;
  d.weights = w.empty() ? Tensor<double>({out, in}) : Tensor<double>({out, in}, std::move(w));
  d.bias = Tensor<double>({out});
  g.add(std::move(d));
  return g;
}

RuleAssignment one_rule(const LayerGraph<double>& g, RuleKind kind, double gamma = 0.25, double eps = 0.0,
                        double stab = 1e-9) {
  RuleAssignment ra = RuleAssignment::defaults(g);
  ra.rules[0].kind = kind;
  ra.rules[0].gamma = gamma;
  ra.rules[0].epsilon = eps;
  ra.rules[0].stabilizer = stab;
  return ra;
}

}  // namespace

TEST_CASE("identity dense layer: relevance lands on the active inputs") {
  auto g = dense_graph(2, 2, {1, 0, 0, 1});
  Tensor<double> x({2}, {2, 0});
  auto [y, tr] = forward(g, x);
  auto map = attribute(g, tr, OutputSelector::sum(), one_rule(g, RuleKind::Epsilon, 0.25, 0.0, 0.0));
  REQUIRE(map.input_relevance[0] == 2.0);
  REQUIRE(map.input_relevance[1] == 0.0);
}

TEST_CASE("epsilon rule with eps=0 splits evenly for symmetric contributions") {
  // two-input neuron a=(1,1), w=(1,1), R_k=4 -> R=(2,2)
  auto g = dense_graph(2, 1, {1, 1});
  Tensor<double> x({2}, {1, 1});
  auto [y, tr] = forward(g, x);
  REQUIRE(y[0] == 2.0);
  auto map = attribute(g, tr, OutputSelector::sum(), one_rule(g, RuleKind::Epsilon, 0.25, 0.0, 0.0));
  // seed is the output (2); rescale to the spec's R_k = 4 by linearity
  REQUIRE_THAT(map.input_relevance[0] * 2.0, Catch::Matchers::WithinRel(2.0, 1e-12));
  REQUIRE_THAT(map.input_relevance[1] * 2.0, Catch::Matchers::WithinRel(2.0, 1e-12));
}

TEST_CASE("gamma rule hand example: a=(1,1), w=(1,-1), gamma=0.25 -> (5,-4)") {
  auto g = dense_graph(2, 1, {1, -1});
  Tensor<double> x({2}, {1, 1});
  auto [y, tr] = forward(g, x);
  REQUIRE(y[0] == 0.0);
  // output activation is 0, so seed manually through a unit output: use a
  // second layer? Simpler: the rule math is checked through the ratio with
  // a forced seed of 1 via the standalone path below; here check engine
  // distribution with seed equal to the output of a shifted neuron.
  // Shift the bias so the seed is exactly 1, the denominator is unchanged
  // (bias is excluded from Eq-style denominators).
  g.layers[0].bias[0] = 1.0;
  g.bump();
  auto [y2, tr2] = forward(g, x);
  REQUIRE(y2[0] == 1.0);
  auto map = attribute(g, tr2, OutputSelector::sum(), one_rule(g, RuleKind::Gamma, 0.25, 0.0, 0.0));
  REQUIRE_THAT(map.input_relevance[0], Catch::Matchers::WithinRel(5.0, 1e-9));
  REQUIRE_THAT(map.input_relevance[1], Catch::Matchers::WithinRel(-4.0, 1e-9));
}

TEST_CASE("wsquare standalone: weights (3,4), R=1 -> (9/25, 16/25)") {
  Tensor<double> w({1, 2}, {3, 4});
  Tensor<double> r({1}, {1.0});
  auto rin = propagate_wsquare(w, r);
  REQUIRE_THAT(rin[0], Catch::Matchers::WithinRel(9.0 / 25.0, 1e-12));
  REQUIRE_THAT(rin[1], Catch::Matchers::WithinRel(16.0 / 25.0, 1e-12));
  REQUIRE_THAT(rin[0] + rin[1], Catch::Matchers::WithinRel(1.0, 1e-12));  // exact conservation
}

TEST_CASE("wsquare all-zero column falls back to a uniform split") {
  Tensor<double> w({1, 4});
  Tensor<double> r({1}, {2.0});
  auto rin = propagate_wsquare(w, r);
  for (size_t i = 0; i < 4; ++i) REQUIRE(rin[i] == 0.5);
}

TEST_CASE("wsquare split is independent of the input activations") {
  LayerGraph<double> g;
  g.input_shape = {1, 8};
  Layer<double> c;
  c.kind = LayerKind::Conv1D;
  c.inputs = {kGraphInput};
  c.in_channels = 1;
  c.out_channels = 2;
  c.kernel = 3;
  c.stride = 1;
  c.padding = Padding::Same;
  c.weights = Tensor<double>({2, 1, 3});
  c.bias = Tensor<double>({2});
  Rng rng(3);
  for (auto& v : c.weights.data) v = rng.normal();
  g.add(std::move(c));
  RuleAssignment ra = RuleAssignment::defaults(g);
  REQUIRE(ra.rules[0].kind == RuleKind::WSquare);

  Tensor<double> x({1, 8});
  for (auto& v : x.data) v = rng.normal();
  auto [y1, t1] = forward(g, x);
  auto m1 = attribute(g, t1, OutputSelector::sum(), ra);
  Tensor<double> x2 = x;
  for (auto& v : x2.data) v *= 2.0;
  auto [y2, t2] = forward(g, x2);
  auto m2 = attribute(g, t2, OutputSelector::sum(), ra);
  // doubling the input doubles the seed but leaves the split fractions alone
  for (size_t i = 0; i < m1.input_relevance.size(); ++i)
    REQUIRE_THAT(m2.input_relevance[i], Catch::Matchers::WithinRel(2.0 * m1.input_relevance[i], 1e-9));
  // and conservation is exact for this rule
  REQUIRE_THAT(m1.input_sum(), Catch::Matchers::WithinRel(m1.seed_sum(), 1e-12));
}

TEST_CASE("signal-takes-it-all: gate branch receives exactly zero") {
  LayerGraph<double> g;
  g.input_shape = {2, 4};
  Layer<double> relu;
  relu.kind = LayerKind::ReLU;
  relu.inputs = {kGraphInput};
  const int a = g.add(std::move(relu));
  Layer<double> gap;
  gap.kind = LayerKind::GlobalAvgPool1D;
  gap.inputs = {a};
  const int gp = g.add(std::move(gap));
  Layer<double> sig;
  sig.kind = LayerKind::Sigmoid;
  sig.inputs = {gp};
  const int s = g.add(std::move(sig));
  Layer<double> mul;
  mul.kind = LayerKind::ElementwiseMultiply;
  mul.inputs = {a, s};
  const int m = g.add(std::move(mul));
  Layer<double> head;
  head.kind = LayerKind::Dense;
  head.inputs = {m};
  head.in_dim = 8;
  head.out_dim = 1;
  head.weights = Tensor<double>({1, 8}, {1, 1, 1, 1, 1, 1, 1, 1});
  head.bias = Tensor<double>({1});
  g.add(std::move(head));

  Tensor<double> x({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto [y, tr] = forward(g, x);
  auto map = attribute(g, tr);
  // relevance of the sigmoid/gap gate chain is identically zero
  for (int node : {gp, s}) {
    for (double v : map.node_relevance[node].data) REQUIRE(v == 0.0);
  }
  // signal branch got everything the multiply received
  REQUIRE_THAT(map.audit[m].passed, Catch::Matchers::WithinRel(map.audit[m].received, 1e-12));
}

TEST_CASE("standalone signal-takes-all splits as documented") {
  Tensor<double> r({3}, {1.0, -2.0, 0.5});
  auto [rs, rg] = propagate_signal_takes_all(r, {3});
  REQUIRE(rs.data == r.data);
  for (double v : rg.data) REQUIRE(v == 0.0);
}

TEST_CASE("residual canonizer splits proportionally") {
  SECTION("degenerate skip gets nothing") {
    Tensor<double> am({3}, {1.0, 2.0, 0.5});
    Tensor<double> as({3});
    Tensor<double> r({3}, {3.0, -1.0, 2.0});
    auto [rm, rs] = canonize_residual(am, as, r);
    for (size_t i = 0; i < 3; ++i) {
      REQUIRE_THAT(rm[i], Catch::Matchers::WithinRel(r[i], 1e-8));
      REQUIRE(rs[i] == 0.0);
    }
  }
  SECTION("equal branches split evenly") {
    Tensor<double> am({2}, {1.0, 4.0});
    Tensor<double> r({2}, {2.0, 2.0});
    auto [rm, rs] = canonize_residual(am, am, r);
    for (size_t i = 0; i < 2; ++i) {
      REQUIRE_THAT(rm[i], Catch::Matchers::WithinRel(1.0, 1e-8));
      REQUIRE_THAT(rs[i], Catch::Matchers::WithinRel(1.0, 1e-8));
    }
  }
  SECTION("randomized conservation within stabilizer absorption") {
    Rng rng(17);
    for (int t = 0; t < 200; ++t) {
      Tensor<double> am({5}), as({5}), r({5});
      for (auto& v : am.data) v = std::abs(rng.normal()) + 0.01;
      for (auto& v : as.data) v = std::abs(rng.normal()) + 0.01;
      for (auto& v : r.data) v = rng.normal();
      auto [rm, rs] = canonize_residual(am, as, r);
      for (size_t i = 0; i < 5; ++i)
        REQUIRE_THAT(rm[i] + rs[i], Catch::Matchers::WithinAbs(r[i], 1e-6 * std::abs(r[i]) + 1e-12));
    }
  }
}

TEST_CASE("saturated gate attribution equals the gate-free graph") {
  // graph A: conv-relu, residual, saturated SE gate, dense head
  auto build = [](bool with_gate) {
    LayerGraph<double> g;
    g.input_shape = {2, 6};
    Layer<double> c;
    c.kind = LayerKind::Conv1D;
    c.inputs = {kGraphInput};
    c.in_channels = 2;
    c.out_channels = 2;
    c.kernel = 3;
    c.stride = 1;
    c.padding = Padding::Same;
    c.weights = Tensor<double>({2, 2, 3});
    c.bias = Tensor<double>({2});
    Rng rng(4);
    for (auto& v : c.weights.data) v = rng.normal();
    const int n1 = g.add(std::move(c));
    Layer<double> relu;
    relu.kind = LayerKind::ReLU;
    relu.inputs = {n1};
    const int n2 = g.add(std::move(relu));
    Layer<double> c2;
    c2.kind = LayerKind::Conv1D;
    c2.inputs = {n2};
    c2.in_channels = 2;
    c2.out_channels = 2;
    c2.kernel = 3;
    c2.stride = 1;
    c2.padding = Padding::Same;
    c2.weights = Tensor<double>({2, 2, 3});
    c2.bias = Tensor<double>({2});
    for (auto& v : c2.weights.data) v = rng.normal();
    int main = g.add(std::move(c2));
    Layer<double> relu2;
    relu2.kind = LayerKind::ReLU;
    relu2.inputs = {main};
    main = g.add(std::move(relu2));
    Layer<double> add;
    add.kind = LayerKind::ResidualAdd;
    add.inputs = {main, n2};
    int top = g.add(std::move(add));
    if (with_gate) {
      Layer<double> gap;
      gap.kind = LayerKind::GlobalAvgPool1D;
      gap.inputs = {top};
      int se = g.add(std::move(gap));
      Layer<double> d;
      d.kind = LayerKind::Dense;
      d.inputs = {se};
      d.in_dim = 2;
      d.out_dim = 2;
      d.weights = Tensor<double>({2, 2});
      d.bias = Tensor<double>({2}, {100.0, 100.0});  // saturates the sigmoid at 1
      se = g.add(std::move(d));
      Layer<double> sg;
      sg.kind = LayerKind::Sigmoid;
      sg.inputs = {se};
      se = g.add(std::move(sg));
      Layer<double> mul;
      mul.kind = LayerKind::ElementwiseMultiply;
      mul.inputs = {top, se};
      top = g.add(std::move(mul));
    }
    Layer<double> head;
    head.kind = LayerKind::Dense;
    head.inputs = {top};
    head.in_dim = 12;
    head.out_dim = 1;
    head.weights = Tensor<double>({1, 12});
    head.bias = Tensor<double>({1});
    Rng hr(8);
    for (auto& v : head.weights.data) v = hr.normal();
    g.add(std::move(head));
    return g;
  };

  auto ga = build(true);
  auto gb = build(false);
  Tensor<double> x({2, 6});
  Rng xr(9);
  for (auto& v : x.data) v = xr.normal();
  auto [ya, ta] = forward(ga, x);
  auto [yb, tb] = forward(gb, x);
  REQUIRE_THAT(ya[0], Catch::Matchers::WithinRel(yb[0], 1e-12));
  auto ma = attribute(ga, ta);
  auto mb = attribute(gb, tb);
  for (size_t i = 0; i < ma.input_relevance.size(); ++i)
    REQUIRE_THAT(ma.input_relevance[i], Catch::Matchers::WithinAbs(mb.input_relevance[i], 1e-9));
}

TEST_CASE("pass-through layers keep relevance elementwise; maxpool routes to the argmax") {
  LayerGraph<double> g;
  g.input_shape = {1, 6};
  Layer<double> relu;
  relu.kind = LayerKind::ReLU;
  relu.inputs = {kGraphInput};
  const int a = g.add(std::move(relu));
  Layer<double> p;
  p.kind = LayerKind::MaxPool1D;
  p.inputs = {a};
  p.pool = 3;
  const int b = g.add(std::move(p));
  Layer<double> head;
  head.kind = LayerKind::Dense;
  head.inputs = {b};
  head.in_dim = 2;
  head.out_dim = 1;
  head.weights = Tensor<double>({1, 2}, {1.0, 1.0});
  head.bias = Tensor<double>({1});
  g.add(std::move(head));

  Tensor<double> x({1, 6}, {0.5, 3.0, 1.0, 2.0, 0.1, 2.0});
  auto [y, tr] = forward(g, x);
  auto map = attribute(g, tr);
  // pool winners are positions 1 and 3 (lowest index on the tie at 3,5)
  REQUIRE(map.input_relevance[0] == 0.0);
  REQUIRE(map.input_relevance[1] != 0.0);
  REQUIRE(map.input_relevance[3] != 0.0);
  REQUIRE(map.input_relevance[5] == 0.0);
  // relu pass-through preserved the per-element values
  REQUIRE_THAT(map.audit[a].passed, Catch::Matchers::WithinRel(map.audit[a].received, 1e-12));
}

TEST_CASE("gamma(0) and epsilon(0) coincide on the same layer") {
  Rng rng(23);
  auto g = dense_graph(6, 3);
  g.layers[0].weights = Tensor<double>({3, 6});
  for (auto& v : g.layers[0].weights.data) v = rng.normal();
  g.bump();
  Tensor<double> x({6});
  for (auto& v : x.data) v = rng.normal();
  auto [y, tr] = forward(g, x);
  auto m_gamma = attribute(g, tr, OutputSelector::sum(), one_rule(g, RuleKind::Gamma, 0.0, 0.0));
  auto m_eps = attribute(g, tr, OutputSelector::sum(), one_rule(g, RuleKind::Epsilon, 0.25, 0.0));
  for (size_t i = 0; i < x.size(); ++i) REQUIRE(m_gamma.input_relevance[i] == m_eps.input_relevance[i]);
}

TEST_CASE("epsilon > 0 absorbs relevance but stays magnitude bounded") {
  Rng rng(29);
  auto g = dense_graph(8, 1);
  g.layers[0].weights = Tensor<double>({1, 8});
  for (auto& v : g.layers[0].weights.data) v = std::abs(rng.normal()) + 0.05;
  g.layers[0].bias[0] = 0.5;
  g.bump();
  Tensor<double> x({8});
  for (auto& v : x.data) v = std::abs(rng.normal()) + 0.05;
  auto [y, tr] = forward(g, x);
  auto map = attribute(g, tr, OutputSelector::sum(), one_rule(g, RuleKind::Epsilon, 0.25, 0.1));
  REQUIRE(std::abs(map.input_sum()) <= std::abs(map.seed_sum()) * (1.0 + 1e-4));
  // deficit visible in the per-layer audit
  REQUIRE(map.audit[0].passed < map.audit[0].received);
}

TEST_CASE("conservation holds on random mixed networks with eps=0") {
  Rng rng(31);
  size_t checked = 0;
  for (int t = 0; t < 50; ++t) {
    auto g = oracle::random_mixed_graph<double>(rng);
    Tensor<double> x(g.input_shape);
    double out_mag = 0.0;
    Tensor<double> y0;
    ForwardTrace<double> tr;
    for (int tries = 0; tries < 50; ++tries) {
      for (auto& v : x.data) v = rng.normal();
      auto [y, trc] = forward(g, x);
      out_mag = 0.0;
      for (double v : y.data) out_mag += v;
      if (std::abs(out_mag) > 0.05) {
        y0 = y;
        tr = std::move(trc);
        break;
      }
    }
    if (std::abs(out_mag) <= 0.05) continue;  // degenerate draw, skip
    LrpOptions opt;
    opt.epsilon = 0.0;
    auto map = attribute(g, tr, OutputSelector::sum(), RuleAssignment::defaults(g, opt));
    REQUIRE_THAT(map.input_sum(), Catch::Matchers::WithinRel(map.seed_sum(), 1e-4));
    ++checked;
  }
  REQUIRE(checked >= 45);
}

TEST_CASE("attribution is deterministic given the same trace") {
  Rng rng(37);
  auto g = oracle::random_mixed_graph<double>(rng);
  Tensor<double> x(g.input_shape);
  for (auto& v : x.data) v = rng.normal();
  auto [y, tr] = forward(g, x);
  auto m1 = attribute(g, tr);
  auto m2 = attribute(g, tr);
  REQUIRE(m1.input_relevance.data == m2.input_relevance.data);
}

TEST_CASE("coordinate selector seeds only the chosen output") {
  Rng rng(41);
  auto g = build_loccnn<double>([] {
    LocCnnConfig cfg;
    cfg.input_samples = 256;
    cfg.input_channels = 2;
    cfg.channels = {4, 4};
    cfg.kernels = {5, 5};
    cfg.pools = {4, 4};
    cfg.dense_width = 8;
    return cfg;
  }());
  g.init_params(rng);
  Tensor<double> x(g.input_shape);
  for (auto& v : x.data) v = rng.normal();
  auto [y, tr] = forward(g, x);
  auto mx = attribute(g, tr, OutputSelector::coord(1));
  REQUIRE(mx.output_seed[0] == 0.0);
  REQUIRE(mx.output_seed[1] == static_cast<double>(y[1]));
  REQUIRE(mx.output_seed[2] == 0.0);
  // sum over coordinates reconstructs the sum selector by linearity
  auto m_sum = attribute(g, tr, OutputSelector::sum());
  auto m0 = attribute(g, tr, OutputSelector::coord(0));
  auto m2 = attribute(g, tr, OutputSelector::coord(2));
  for (size_t i = 0; i < m_sum.input_relevance.size(); ++i)
    REQUIRE_THAT(m0.input_relevance[i] + mx.input_relevance[i] + m2.input_relevance[i],
                 Catch::Matchers::WithinAbs(m_sum.input_relevance[i], 1e-9));
}

TEST_CASE("attribute rejects bad preconditions") {
  auto g = dense_graph(2, 1, {1, 1});
  Tensor<double> x({2}, {1, 1});
  SECTION("training trace") {
    auto [y, tr] = forward(g, x, true);
    REQUIRE_THROWS_AS(attribute(g, tr), ConfigError);
  }
  SECTION("stale trace") {
    auto [y, tr] = forward(g, x);
    g.layers[0].weights[0] = 2.0;
    g.bump();
    REQUIRE_THROWS_AS(attribute(g, tr), ConfigError);
  }
  SECTION("incomplete rule assignment") {
    auto [y, tr] = forward(g, x);
    RuleAssignment ra;
    ra.rules.resize(2);  // graph has 1 layer
    REQUIRE_THROWS_AS(attribute(g, tr, OutputSelector::sum(), ra), ConfigError);
  }
  SECTION("selector out of range") {
    auto [y, tr] = forward(g, x);
    REQUIRE_THROWS_AS(attribute(g, tr, OutputSelector::coord(5)), ConfigError);
  }
}

TEST_CASE("zero input window yields zero relevance through a zero-bias net") {
  Rng rng(43);
  auto g = oracle::random_mixed_graph<double>(rng);
  for (auto& l : g.layers)
    if (l.has_params()) l.bias.fill(0.0);
  g.bump();
  Tensor<double> x(g.input_shape);  // zeros
  auto [y, tr] = forward(g, x);
  auto map = attribute(g, tr);
  for (double v : map.input_relevance.data) REQUIRE(v == 0.0);
}

TEST_CASE("relevance_signal concatenates aligned windows per microphone") {
  Tensor<double> w1({2, 4}, {1, 2, 3, 4, 10, 20, 30, 40});
  Tensor<double> w2({2, 4}, {5, 6, 7, 8, 50, 60, 70, 80});
  auto sig = relevance_signal({w1, w2});
  REQUIRE(sig.shape == std::vector<size_t>{2, 8});
  REQUIRE(sig.data == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 10, 20, 30, 40, 50, 60, 70, 80});
  Tensor<double> bad({2, 5});
  REQUIRE_THROWS_AS(relevance_signal({w1, bad}), DataError);
}
