#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dqmp/params.hpp"

namespace dqmp {

/// One corner of the step lattice: a +1/-1 sign per parameter.
struct Action {
  std::vector<int> signs;

  bool operator==(const Action&) const = default;
};

/// All 2^k sign vectors. Action i has sign -1 on parameter j iff bit j of i is
/// set, so action 0 is all +1 and action 2^k - 1 is all -1.
std::vector<Action> enumerate_actions(int k);

/// theta_i * (1 + sign_i * step_frac) per component, then clamped to the box.
kvfd::ParameterVector apply_action(const kvfd::ParameterVector& p, const Action& a, double step_frac,
                                   const ParameterBox& box);

struct RewardConfig {
  double beta_g = 0.02;
  double beta_theta = 0.6;
  double beta_c = 0.4;
  double e_min = 1e-10;
  double e_max = 1.0;
  bool global_term = true;  // false: R_g is taken as 0 and never predicted

  /// Throws DomainError unless all betas lie in [0, 1], beta_theta + beta_c = 1
  /// and 0 < e_min < e_max.
  void validate() const;
};

/// Curve-fit reward: 1 below e_min, 0 above e_max, log-linear in between.
double reward_curve(double mae, const RewardConfig& cfg);
/// 1 - ||u_hat - u_true|| / sqrt(k) on normalized parameters.
double reward_theta(std::span<const double> u_true, std::span<const double> u_hat);
double reward_global(double r_theta, double r_curve, const RewardConfig& cfg);
double reward_total(double r_g, double r_curve, const RewardConfig& cfg);
double q_update(double q, double r, double max_next, double xi, double gamma);

/// mean |y_exp - y_hat| / max |y_exp|: the curve mismatch every reward and
/// stopping rule uses, so thresholds mean the same thing for all protocols.
double mae_normalized(std::span<const double> y_exp, std::span<const double> y_hat);

}  // namespace dqmp
