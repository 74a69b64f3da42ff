#include "selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "dqmp/kvfd.hpp"
#include "dqmp/nnet.hpp"
#include "dqmp/params.hpp"
#include "dqmp/rewards.hpp"
#include "dqmp/specfn.hpp"

namespace dqmp::tool {

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

struct Check {
  const char* name;
  double worst;
  double limit;
};

Check exp_identity() {
  double worst = 0.0;
  for (int i = 0; i <= 80; ++i) {
    const double z = -10.0 + 0.25 * i;
    worst = std::max(worst, rel(specfn::mittag_leffler(1, 1, z), std::exp(z)));
  }
  return {"specfn.ml_1_1_is_exp", worst, 1e-10};
}

Check cos_identity() {
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double x = 0.05 * i;
    const double c = std::cos(x);
    if (std::abs(c) < 1e-3) continue;
    worst = std::max(worst, rel(specfn::mittag_leffler(2, 1, -x * x), c));
  }
  return {"specfn.ml_2_1_is_cos", worst, 1e-10};
}

Check gamma_factorial() {
  double worst = 0.0;
  double fact = 1.0;
  for (int n = 1; n <= 20; ++n) {
    worst = std::max(worst, rel(specfn::gamma(n), fact));
    fact *= n;
  }
  return {"specfn.gamma_factorial", worst, 1e-12};
}

Check beta_complete_limit() {
  double worst = 0.0;
  for (double x : {0.5, 1.5, 2.0, 3.7}) {
    for (double y : {0.2, 0.8, 1.0, 2.5}) {
      worst = std::max(worst, rel(specfn::beta_incomplete(1.0, x, y), specfn::beta_complete(x, y)));
    }
  }
  return {"specfn.beta_incomplete_at_one", worst, 1e-9};
}

Check branch_continuity() {
  std::mt19937_64 rng(31);
  const ParameterBox box;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto p = sample_params(rng, box);
    for (auto pr : {kvfd::Protocol::RampRelaxation, kvfd::Protocol::LoadUnload, kvfd::Protocol::RampCreepSphere,
                    kvfd::Protocol::RampCreepPlate}) {
      const auto c = kvfd::preset(pr);
      const double below = kvfd::response(p, c, c.ramp_time, kvfd::Side::Ramp);
      const double above = kvfd::response(p, c, c.ramp_time, kvfd::Side::AfterRamp);
      worst = std::max(worst, rel(below, above));
    }
  }
  return {"kvfd.branch_continuity", worst, 1e-8};
}

std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Check grad_reward_net() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto net = nnet::init_network(nnet::NetworkSpec{10, 1, {4, 4, 4}, 8}, seed);
    const auto x = uniform_vector(rng, 10, -0.5, 0.5);
    const auto t = uniform_vector(rng, 8, 0.0, 1.0);
    worst = std::max(worst, nnet::grad_check(net, x, t, nnet::LossSpec{}, 1e-5));
  }
  return {"nnet.grad_check_reward", worst, 1e-4};
}

Check grad_initial_net() {
  std::mt19937_64 rng(12);
  nnet::LossSpec ls;
  ls.kind = nnet::LossKind::Initial;
  ls.curve_points = 12;
  double worst = 0.0;
  for (std::uint64_t seed : {1, 3, 4}) {
    const auto net = nnet::init_network(nnet::NetworkSpec{12, 1, {4, 3}, 3}, seed);
    const auto x = uniform_vector(rng, 12, 0.0, 1.0);
    const auto t = uniform_vector(rng, 3, 0.05, 0.95);
    worst = std::max(worst, nnet::grad_check(net, x, t, ls, 1e-4));
  }
  return {"nnet.grad_check_initial", worst, 1e-4};
}

Check q_arithmetic() {
  const RewardConfig cfg;
  double worst = 0.0;
  auto dev = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  dev(q_update(0.0, 1.0, 1.0, 0.6, 0.5), 0.9);
  dev(q_update(0.0, 0.5, 0.8, 0.6, 0.5), 0.54);
  dev(q_update(0.37, 1.0, 1.0, 0.0, 0.5), 0.37);
  dev(q_update(1.25, 1.0, 0.5, 0.6, 0.5), 1.25);
  dev(reward_curve(1e-12, cfg), 1.0);
  dev(reward_curve(2.0, cfg), 0.0);
  dev(reward_curve(1e-5, cfg), 0.5);
  dev(reward_global(1.0, 0.0, cfg), 0.6);
  dev(reward_total(1.0, 0.0, cfg), 0.02);
  dev(reward_total(0.0, 1.0, cfg), 0.98);
  const double a[3] = {0.2, 0.4, 0.6};
  const double b[3] = {0.5, 0.4, 0.6};
  dev(reward_theta(a, b), 1.0 - 0.3 / std::sqrt(3.0));
  return {"rewards.q_update_arithmetic", worst, 1e-12};
}

}  // namespace

int run_selftest(std::FILE* out) {
  using Fn = Check (*)();
  const Fn checks[] = {exp_identity,  cos_identity,    gamma_factorial,  beta_complete_limit, branch_continuity,
                       grad_reward_net, grad_initial_net, q_arithmetic};
  int failed = 0;
  for (Fn fn : checks) {
    Check c{"", 0.0, 0.0};
    std::string error;
    try {
      c = fn();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const bool ok = error.empty() && c.worst <= c.limit;
    if (!ok) ++failed;
    if (error.empty()) {
      std::fprintf(out, "%s %-30s worst=%.3e limit=%.0e\n", ok ? "PASS" : "FAIL", c.name, c.worst, c.limit);
    } else {
      std::fprintf(out, "FAIL exception: %s\n", error.c_str());
    }
  }
  std::fprintf(out, "selftest: %zu checks, %d failed\n", std::size(checks), failed);
  return failed;
}

}  // namespace dqmp::tool
