#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "doctest.h"
#include "dqmp/errors.hpp"
#include "dqmp/nnet.hpp"

using namespace dqmp;
using namespace dqmp::nnet;
using dqmp::kvfd::ParameterVector;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / (std::string("dqmp_nnet_") + name)).string();
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Network small_drn(std::uint64_t seed) { return init_network(NetworkSpec{10, 1, {4, 4, 4}, 8}, seed); }

Network small_din(std::uint64_t seed) { return init_network(NetworkSpec{12, 1, {4, 3}, 3}, seed); }

LossSpec initial_loss(std::size_t m) {
  LossSpec ls;
  ls.kind = LossKind::Initial;
  ls.curve_points = m;
  return ls;
}

}  // namespace

TEST_CASE("outputs lie strictly inside the unit interval") {
  std::mt19937_64 rng(1);
  const auto net = small_drn(3);
  for (int i = 0; i < 20; ++i) {
    const auto out = forward(net, random_vector(rng, 10, -50, 50));
    REQUIRE(out.size() == 8);
    for (double v : out) CHECK((v > 0.0 && v < 1.0));
  }
}

TEST_CASE("zero weights give one half everywhere") {
  auto net = small_din(1);
  for (auto& [name, t] : net.weights) {
    if (name != "meta.input_len") std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  std::mt19937_64 rng(2);
  for (double v : forward(net, random_vector(rng, 12, -1, 1))) CHECK(v == 0.5);
}

TEST_CASE("forward is a pure function of weights and input") {
  std::mt19937_64 rng(3);
  const auto net = small_drn(4);
  const auto x = random_vector(rng, 10, -1, 1);
  CHECK(forward(net, x) == forward(net, x));
  CHECK(init_network(net.spec, 4).weights == net.weights);
  // Batched columns equal single-sequence passes.
  Eigen::MatrixXd batch(10, 3);
  std::vector<std::vector<double>> cols;
  for (int b = 0; b < 3; ++b) {
    cols.push_back(random_vector(rng, 10, -1, 1));
    for (int j = 0; j < 10; ++j) batch(j, b) = cols.back()[j];
  }
  const auto out = forward_batch(net, batch);
  for (int b = 0; b < 3; ++b) {
    const auto single = forward(net, cols[b]);
    for (int r = 0; r < 8; ++r) CHECK(std::abs(out(r, b) - single[r]) < 1e-14);
  }
  CHECK_THROWS_AS(forward(net, std::vector<double>(9)), DomainError);
}

TEST_CASE("reward loss arithmetic") {
  const double p[2] = {0.2, 0.5}, t[2] = {0.1, 0.9};
  CHECK(std::abs(loss_reward(p, t) - 0.5) < 1e-15);
  CHECK(loss_reward(t, t) == 0.0);
  const std::vector<double> zeros(8, 0.0), ones(8, 1.0);
  CHECK(loss_reward(zeros, ones) == 8.0);
  CHECK_THROWS_AS(loss_reward(p, ones), DomainError);
}

TEST_CASE("initial loss arithmetic") {
  const LossWeights w;
  const ParameterVector th{20000, 0.2, 50};
  const std::vector<double> y{1.0, 2.0, 4.0};
  CHECK(loss_initial(th, th, y, y, w) == 0.0);
  const ParameterVector off{22000, 0.22, 55};
  CHECK(std::abs(loss_initial(th, off, y, y, w) - 0.1) < 1e-12);
  const std::vector<double> shifted{1.5, 2.5, 4.5};
  CHECK(std::abs(loss_initial(th, th, y, shifted, w) - 0.5 / 4.0) < 1e-15);
  CHECK_THROWS_AS(loss_initial({0.0, 0.2, 50}, th, y, y, w), DomainError);
  const std::vector<double> flat{0.0, 0.0, 0.0};
  CHECK_THROWS_AS(loss_initial(th, th, flat, flat, w), DomainError);
}

TEST_CASE("gradient check on the reward architecture") {
  std::mt19937_64 rng(11);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto net = small_drn(seed);
    const auto x = random_vector(rng, 10, -0.5, 0.5);
    const auto t = random_vector(rng, 8, 0.0, 1.0);
    const double dev = grad_check(net, x, t, LossSpec{}, 1e-5);
    CAPTURE(seed);
    CHECK(dev < 1e-4);
  }
}

TEST_CASE("gradient check on the initial-guess architecture") {
  std::mt19937_64 rng(12);
  const auto ls = initial_loss(12);
  // Seed 2 leaves every first-layer unit rectified to exactly zero, which puts
  // the second layer on the rectifier kink; central differences are one-sided there.
  for (std::uint64_t seed : {1, 3, 4}) {
    const auto net = small_din(seed);
    const auto x = random_vector(rng, 12, 0.0, 1.0);
    const auto t = random_vector(rng, 3, 0.05, 0.95);
    const double dev = grad_check(net, x, t, ls, 1e-4);
    CAPTURE(seed);
    CHECK(dev < 1e-4);
  }
}

TEST_CASE("gradient check without recurrent layers") {
  std::mt19937_64 rng(13);
  const auto net = init_network(NetworkSpec{6, 1, {}, 4}, 5);
  const auto x = random_vector(rng, 6, -1, 1);
  const auto t = random_vector(rng, 4, 0, 1);
  CHECK(grad_check(net, x, t, LossSpec{}, 1e-5) < 1e-8);
  CHECK_THROWS_AS(grad_check(net, x, t, LossSpec{}, 1e-2), DomainError);
}

TEST_CASE("weight containers round-trip bit-exactly") {
  auto net = small_drn(9);
  round_to_float(net.weights);
  const auto path = temp_path("w.nn");
  save_network(path, net);
  const auto back = load_network(path);
  CHECK(back.spec == net.spec);
  CHECK(back.weights == net.weights);
  const auto lin = init_network(NetworkSpec{7, 1, {}, 2}, 1);
  save_network(path, lin);
  CHECK(load_network(path).spec == lin.spec);
  CHECK_THROWS_AS(load_network(temp_path("nope.nn")), IoError);
  TensorStore broken = net.weights;
  broken.erase("fc.b");
  CHECK_THROWS_AS(network_from_tensors(broken), FormatError);
}

TEST_CASE("training reduces the validation loss on a toy initial-guess set") {
  DinGenConfig g;
  g.count = 240;
  g.m = 20;
  const auto parts = split_dataset(gen_din_dataset(g, 1), {200.0 / 240, 20.0 / 240, 20.0 / 240}, 2);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  cfg.loss = initial_loss(20);
  const auto init = init_network(NetworkSpec{20, 1, {8, 8}, 3}, 7);
  const auto res = train(init, parts[0], parts[1], cfg);
  REQUIRE(res.history.size() == 21);
  double best = res.history[0].val_loss;
  for (const auto& e : res.history) best = std::min(best, e.val_loss);
  CHECK(best < res.history[0].val_loss);
  CHECK(evaluate_loss(res.net, parts[1], cfg.loss) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves the weights unchanged") {
  DrnGenConfig g;
  g.count = 30;
  g.m = 10;
  const auto ds = gen_drn_dataset(g, 3);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.0;
  const auto init = small_drn(2);
  const auto res = train(init, ds, ds, cfg);
  CHECK(res.net.weights == init.weights);
  for (const auto& e : res.history) {
    CHECK(e.val_loss == res.history[0].val_loss);
    CHECK(e.train_loss == doctest::Approx(res.history[0].train_loss).epsilon(1e-12));
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  DrnGenConfig g;
  g.count = 40;
  g.m = 10;
  const auto ds = gen_drn_dataset(g, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  const auto a = train(small_drn(1), ds, ds, cfg);
  const auto b = train(small_drn(1), ds, ds, cfg);
  CHECK(a.net.weights == b.net.weights);
  cfg.seed = 2;
  const auto c = train(small_drn(1), ds, ds, cfg);
  CHECK(c.history.back().train_loss != a.history.back().train_loss);
}

TEST_CASE("a single record is memorized") {
  Dataset ds(DatasetKind::Drn, 10, 3);
  std::mt19937_64 rng(5);
  ds.append(random_vector(rng, 10, -0.5, 0.5), random_vector(rng, 8, 0.1, 0.9));
  TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.batch_size = 1;
  cfg.learning_rate = 1e-2;
  const auto res = train(small_drn(6), ds, ds, cfg);
  CHECK(res.history[res.best_epoch].val_loss < 1e-3 * res.history[0].val_loss);
}

TEST_CASE("non-finite losses raise a divergence error") {
  Dataset ds(DatasetKind::Drn, 10, 3);
  std::vector<double> x(10, 0.0), t(8, 0.5);
  x[3] = std::nan("");
  ds.append(x, t);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(small_drn(1), ds, ds, cfg), DivergenceError);
}

TEST_CASE("dataset shape mismatches are rejected") {
  DinGenConfig g;
  g.count = 5;
  g.m = 10;
  const auto din = gen_din_dataset(g, 1);
  CHECK_THROWS_AS(train(small_drn(1), din, din, TrainConfig{}), DomainError);
}

TEST_CASE("loss history csv") {
  const auto path = temp_path("hist.csv");
  write_loss_history(path, {{0, 1.0, 2.0}, {1, 0.5, 0.25}});
  std::ifstream is(path);
  std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(all == "epoch,train_loss,val_loss\n0,1,2\n1,0.5,0.25\n");
}

TEST_CASE("inference helpers") {
  const ParameterBox box;
  const auto din = init_network(din_spec(30), 1);
  const auto curve = kvfd::sample_curve({20000, 0.2, 50}, kvfd::preset(kvfd::Protocol::RampRelaxation), 30);
  const auto p = din_init(curve.values, din, box);
  CHECK(box.contains(p));
  CHECK(din_init(curve.values, din, box) == p);
  const auto drn = init_network(drn_spec(30), 1);
  std::vector<double> residual(30, 0.01);
  const auto r = drn_predict(residual, drn);
  CHECK(r.size() == 8);
  for (double v : r) CHECK((v > 0.0 && v < 1.0));
}
