#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dqmp/dqmp.hpp"

namespace dqmp {

/// Plain Q-learning: the DQMP loop under ql_variant_hook, from the DIN guess.
FitResult ql_fit(const kvfd::Curve& experimental, const nnet::Network& din, const DqmpConfig& cfg,
                 const RewardConfig& reward);

enum class LmInit { BoxMidpoint, RandomSeeded, Din };

const char* lm_init_name(LmInit m);
LmInit lm_init_from_name(const std::string& name);

struct LmConfig {
  double lambda0 = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  std::size_t max_iters = 200;
  double gradient_tol = 1e-10;
  double fd_step = 1e-5;      // central-difference step in normalized coordinates
  double lambda_max = 1e12;   // stalled beyond this damping
  LmInit init_mode = LmInit::RandomSeeded;
  ParameterBox box;

  void validate() const;
};

/// Residual vector r(u) for normalized parameters u.
using ResidualFn = std::function<void(const Normalized& u, std::span<double> r)>;

struct LmOutcome {
  Normalized u{};
  double cost = 0.0;            // 0.5 |r|^2 at u
  std::size_t iterations = 0;   // Jacobian evaluations
  Termination terminated_by = Termination::MaxIters;
  std::vector<double> accepted_costs;  // cost after each accepted step, starting with the initial cost
  std::vector<Normalized> iterates;    // u after each accepted step, starting with u0
};

/// Levenberg-Marquardt on the unit box: damped normal equations
/// (J'J + lambda diag(J'J)) du = -J'r with a central-difference Jacobian,
/// steps clamped to [0, 1]^k. Converged when |J'r|_inf < gradient_tol or the
/// accepted step is below 1e-14; stalled when lambda exceeds lambda_max or
/// the equations cannot be solved.
LmOutcome lm_minimize(const ResidualFn& residual, std::size_t n_residuals, const Normalized& u0, const LmConfig& cfg);

/// Least-squares fit of the model curve to `experimental` (residuals scaled
/// by 1 / max|Y|). `seed` drives the RandomSeeded start; `din` is required
/// for the Din start.
FitResult lm_fit(const kvfd::Curve& experimental, const LmConfig& cfg, std::uint64_t seed,
                 const nnet::Network* din = nullptr);

}  // namespace dqmp
