#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "locrel/models.hpp"
#include "locrel/train.hpp"

using namespace locrel;

namespace {

LayerGraph<float> tiny_net(uint64_t seed, size_t in = 4, size_t hidden = 8, size_t out = 2) {
  LayerGraph<float> g;
  g.input_shape = {in};
  g.output_dim = out;
  Layer<float> d1;
  d1.kind = LayerKind::Dense;
  d1.inputs = {kGraphInput};
  d1.in_dim = in;
  d1.out_dim = hidden;
  d1.weights = Tensor<float>({hidden, in});
  d1.bias = Tensor<float>({hidden});
  const int n1 = g.add(std::move(d1));
  Layer<float> r;
  r.kind = LayerKind::ReLU;
  r.inputs = {n1};
  const int n2 = g.add(std::move(r));
  Layer<float> d2;
  d2.kind = LayerKind::Dense;
  d2.inputs = {n2};
  d2.in_dim = hidden;
  d2.out_dim = out;
  d2.weights = Tensor<float>({out, hidden});
  d2.bias = Tensor<float>({out});
  g.add(std::move(d2));
  Rng rng(seed);
  g.init_params(rng);
  return g;
}

std::vector<Example<float>> one_example() {
  std::vector<Example<float>> set;
  set.push_back({Tensor<float>({4}, {0.3f, -0.2f, 0.9f, 0.1f}), Tensor<float>({2}, {0.5f, -0.7f})});
  return set;
}

}  // namespace

TEST_CASE("overfitting a single example drives MSE below 1e-3") {
  auto g = tiny_net(1);
  auto set = one_example();
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_epochs = 400;
  cfg.lr = 0.01;
  cfg.lr_patience = 100;
  cfg.stop_patience = 200;
  cfg.seed = 1;
  auto hist = train<float>(g, set, set, cfg);
  REQUIRE(hist.best_val_mse < 1e-3);
}

TEST_CASE("zero targets with zero-initialized output layer start at zero loss") {
  auto g = tiny_net(2);
  g.layers[2].weights.fill(0.0f);
  g.layers[2].bias.fill(0.0f);
  g.bump();
  std::vector<Example<float>> set;
  set.push_back({Tensor<float>({4}, {1, 2, 3, 4}), Tensor<float>({2}, {0, 0})});
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_epochs = 1;
  cfg.lr = 1e-3;
  auto hist = train<float>(g, set, set, cfg);
  REQUIRE(hist.epochs.at(0).train_mse == 0.0);
}

TEST_CASE("plateau of exactly lr_patience epochs logs one halving at that epoch") {
  auto g = tiny_net(3);
  auto set = one_example();
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_epochs = 150;
  cfg.lr = 1e-30;  // updates vanish below float resolution: loss never improves
  cfg.lr_patience = 100;
  cfg.stop_patience = 200;
  cfg.seed = 3;
  auto hist = train<float>(g, set, set, cfg);
  REQUIRE(hist.epochs.size() == 150);
  REQUIRE(hist.best_epoch == 1);
  REQUIRE(hist.lr_halving_epochs == std::vector<size_t>{101});
  REQUIRE(hist.epochs[99].lr == 1e-30);
  REQUIRE(hist.epochs[101].lr == 0.5e-30);
}

TEST_CASE("early stopping fires after stop_patience stale epochs") {
  auto g = tiny_net(4);
  auto set = one_example();
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_epochs = 100;
  cfg.lr = 1e-30;
  cfg.lr_patience = 10;
  cfg.stop_patience = 25;
  cfg.seed = 4;
  auto hist = train<float>(g, set, set, cfg);
  REQUIRE(hist.epochs.size() == 26);  // 1 improving + 25 stale
  REQUIRE(hist.lr_halving_epochs == std::vector<size_t>{11, 21});
}

TEST_CASE("learning rate only decreases over a run") {
  auto g = tiny_net(5);
  auto set = one_example();
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_epochs = 120;
  cfg.lr = 0.005;
  cfg.lr_patience = 20;
  cfg.stop_patience = 60;
  cfg.seed = 5;
  auto hist = train<float>(g, set, set, cfg);
  for (size_t i = 1; i < hist.epochs.size(); ++i) REQUIRE(hist.epochs[i].lr <= hist.epochs[i - 1].lr);
}

TEST_CASE("same seed reproduces the loss history exactly") {
  TrainConfig cfg;
  cfg.batch = 2;
  cfg.max_epochs = 30;
  cfg.lr = 0.01;
  cfg.seed = 77;

  std::vector<Example<float>> set;
  Rng rng(8);
  for (int i = 0; i < 6; ++i) {
    Tensor<float> x({4}), y({2});
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    for (auto& v : y.data) v = static_cast<float>(rng.normal());
    set.push_back({x, y});
  }

  auto g1 = tiny_net(9);
  auto h1 = train<float>(g1, set, set, cfg);
  auto g2 = tiny_net(9);
  auto h2 = train<float>(g2, set, set, cfg);
  REQUIRE(h1.epochs.size() == h2.epochs.size());
  for (size_t i = 0; i < h1.epochs.size(); ++i) {
    REQUIRE(h1.epochs[i].train_mse == h2.epochs[i].train_mse);
    REQUIRE(h1.epochs[i].val_mse == h2.epochs[i].val_mse);
  }
}

TEST_CASE("returned parameters are those of the best validation epoch") {
  auto g = tiny_net(10);
  auto set = one_example();
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_epochs = 50;
  cfg.lr = 0.05;
  cfg.seed = 10;
  auto hist = train<float>(g, set, set, cfg);
  const double val_now = evaluate_mse<float>(g, set);
  REQUIRE_THAT(val_now, Catch::Matchers::WithinRel(hist.best_val_mse, 1e-12));
}

TEST_CASE("divergence aborts with a numeric diagnostic") {
  auto g = tiny_net(11);
  auto set = one_example();
  for (auto& w : g.layers[0].weights.data) w *= 1e20f;
  for (auto& w : g.layers[2].weights.data) w *= 1e20f;
  g.bump();
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_epochs = 5;
  cfg.lr = 1e3;
  REQUIRE_THROWS_AS(train<float>(g, set, set, cfg), NumericError);
}

TEST_CASE("empty datasets and non-positive lr are rejected") {
  auto g = tiny_net(12);
  std::vector<Example<float>> empty, set = one_example();
  TrainConfig cfg;
  REQUIRE_THROWS_AS(train<float>(g, empty, set, cfg), DataError);
  cfg.lr = 0.0;
  REQUIRE_THROWS_AS(train<float>(g, set, set, cfg), ConfigError);
}

TEST_CASE("history csv has the documented columns") {
  auto g = tiny_net(13);
  auto set = one_example();
  TrainConfig cfg;
  cfg.batch = 1;
  cfg.max_epochs = 3;
  cfg.lr = 0.01;
  auto hist = train<float>(g, set, set, cfg);
  const auto path = std::filesystem::temp_directory_path() / "locrel_hist_test.csv";
  write_history_csv(hist, path.string());
  std::FILE* f = std::fopen(path.c_str(), "rb");
  REQUIRE(f != nullptr);
  char line[256];
  REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
  REQUIRE(std::string(line) == "epoch,train_mse,val_mse,lr\n");
  int rows = 0;
  while (std::fgets(line, sizeof line, f)) ++rows;
  std::fclose(f);
  std::filesystem::remove(path);
  REQUIRE(rows == 3);
}
