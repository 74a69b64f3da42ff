#include "dqmp/rewards.hpp"

#include <algorithm>
#include <cmath>

#include "dqmp/errors.hpp"

namespace dqmp {

std::vector<Action> enumerate_actions(int k) {
  if (k < 1 || k > 16) throw DomainError("enumerate_actions: k must lie in [1, 16]");
  const std::uint32_t n = 1u << k;
  std::vector<Action> out(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    out[i].signs.resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) out[i].signs[static_cast<std::size_t>(j)] = ((i >> j) & 1u) ? -1 : 1;
  }
  return out;
}

kvfd::ParameterVector apply_action(const kvfd::ParameterVector& p, const Action& a, double step_frac,
                                   const ParameterBox& box) {
  if (a.signs.size() != kParamCount) throw DomainError("apply_action: action length must be 3");
  auto v = to_array(p);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    v[i] = std::clamp(v[i] * (1.0 + a.signs[i] * step_frac), box.lo[i], box.hi[i]);
  }
  return from_array(v);
}

void RewardConfig::validate() const {
  for (double b : {beta_g, beta_theta, beta_c}) {
    if (!(b >= 0.0 && b <= 1.0)) throw DomainError("RewardConfig: betas must lie in [0, 1]");
  }
  if (std::abs(beta_theta + beta_c - 1.0) > 1e-12) throw DomainError("RewardConfig: beta_theta + beta_c must be 1");
  if (!(e_min > 0.0 && e_min < e_max)) throw DomainError("RewardConfig: need 0 < e_min < e_max");
}

double reward_curve(double mae, const RewardConfig& cfg) {
  if (mae < cfg.e_min) return 1.0;
  if (mae > cfg.e_max) return 0.0;
  const double hi = std::log(cfg.e_max);
  return (hi - std::log(mae)) / (hi - std::log(cfg.e_min));
}

double reward_theta(std::span<const double> u_true, std::span<const double> u_hat) {
  if (u_true.size() != u_hat.size() || u_true.empty()) throw DomainError("reward_theta: length mismatch");
  double ss = 0.0;
  for (std::size_t i = 0; i < u_true.size(); ++i) {
    const double d = u_hat[i] - u_true[i];
    ss += d * d;
  }
  return 1.0 - std::sqrt(ss) / std::sqrt(static_cast<double>(u_true.size()));
}

double reward_global(double r_theta, double r_curve, const RewardConfig& cfg) {
  return cfg.beta_theta * r_theta + cfg.beta_c * r_curve;
}

double reward_total(double r_g, double r_curve, const RewardConfig& cfg) {
  return cfg.beta_g * r_g + (1.0 - cfg.beta_g) * r_curve;
}

double q_update(double q, double r, double max_next, double xi, double gamma) {
  return q + xi * (r + gamma * max_next - q);
}

double mae_normalized(std::span<const double> y_exp, std::span<const double> y_hat) {
  if (y_exp.size() != y_hat.size() || y_exp.empty()) throw DomainError("mae_normalized: length mismatch");
  double sum = 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < y_exp.size(); ++i) {
    sum += std::abs(y_exp[i] - y_hat[i]);
    peak = std::max(peak, std::abs(y_exp[i]));
  }
  if (peak == 0.0) throw DomainError("mae_normalized: reference curve is identically zero");
  return sum / static_cast<double>(y_exp.size()) / peak;
}

}  // namespace dqmp
