#include "dqmp/dqmp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "dqmp/datagen.hpp"
#include "dqmp/errors.hpp"
#include "dqmp/metrics.hpp"

namespace dqmp {

namespace {

double peak_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

void fill_residual(std::span<const double> y_exp, std::span<const double> y_hat, double peak, double* col) {
  for (std::size_t j = 0; j < y_exp.size(); ++j) col[j] = (y_exp[j] - y_hat[j]) / peak;
}

}  // namespace

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::Converged:
      return "converged";
    case Termination::Stalled:
      return "stalled";
    case Termination::MaxIters:
      return "max_iters";
  }
  return "?";
}

void DqmpConfig::validate() const {
  if (!(xi >= 0.0 && xi <= 1.0)) throw DomainError("DqmpConfig: xi must lie in [0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("DqmpConfig: gamma must lie in [0, 1]");
  if (!(step_frac > 0.0 && step_frac < 1.0)) throw DomainError("DqmpConfig: step_frac must lie in (0, 1)");
  if (!(mae_tol >= 0.0)) throw DomainError("DqmpConfig: mae_tol must be non-negative");
  if (stall_window < 1) throw DomainError("DqmpConfig: stall_window must be >= 1");
  box.validate();
}

Eigen::MatrixXd NetworkPredictor::predict(const Eigen::MatrixXd& residuals, std::span<const kvfd::ParameterVector>) {
  return nnet::forward_batch(net_, residuals);
}

OraclePredictor::OraclePredictor(const kvfd::ParameterVector& theta_true, const kvfd::Curve& experimental,
                                 const ParameterBox& box, double step_frac, const RewardConfig& reward)
    : theta_true_(theta_true),
      y_exp_(experimental.values),
      eval_(experimental.protocol, experimental.times),
      box_(box),
      step_frac_(step_frac),
      reward_(reward) {}

Eigen::MatrixXd OraclePredictor::predict(const Eigen::MatrixXd& residuals,
                                         std::span<const kvfd::ParameterVector> thetas) {
  const Eigen::Index n = Eigen::Index{1} << kParamCount;
  Eigen::MatrixXd out(n, residuals.cols());
  for (Eigen::Index j = 0; j < residuals.cols(); ++j) {
    const auto rg = global_reward_targets(theta_true_, thetas[j], y_exp_, eval_, step_frac_, box_, reward_);
    for (Eigen::Index a = 0; a < n; ++a) out(a, j) = rg[a];
  }
  return out;
}

FitResult dqmp_search(const kvfd::Curve& experimental, const kvfd::ParameterVector& init, RewardPredictor* predictor,
                      const DqmpConfig& cfg, const RewardConfig& reward, const IterationObserver& observer) {
  cfg.validate();
  reward.validate();
  if (experimental.times.size() != experimental.values.size() || experimental.values.empty()) {
    throw DomainError("dqmp_search: malformed experimental curve");
  }
  if (reward.global_term && !predictor) throw DomainError("dqmp_search: a reward predictor is required");
  const std::span<const double> y_exp = experimental.values;
  const double peak = peak_abs(y_exp);
  if (!(peak > 0.0) || !std::isfinite(peak)) throw DomainError("dqmp_search: experimental curve must be non-zero");

  const auto actions = enumerate_actions(static_cast<int>(kParamCount));
  const std::size_t n = actions.size();
  const auto m = static_cast<Eigen::Index>(y_exp.size());
  const double q_cap = cfg.next_value == NextValue::RewardLookahead ? 1.0 + cfg.gamma
                                                                    : 1.0 / std::max(1.0 - cfg.gamma, 1e-300);

  kvfd::CurveEvaluator eval(experimental.protocol, experimental.times);
  FitResult res;
  std::vector<double> q(n, 0.0), r(n), rc(n), max_next(n), cand_mae(n);
  std::vector<kvfd::ParameterVector> cand(n);
  std::vector<std::vector<double>> cand_y(n, std::vector<double>(y_exp.size()));
  std::vector<double> y2(y_exp.size());
  Eigen::MatrixXd residual(m, 1), cand_residuals(m, static_cast<Eigen::Index>(n));
  Eigen::MatrixXd rg_now, rg_next;

  kvfd::ParameterVector theta = cfg.box.clamp(init);
  std::vector<double> y_hat = eval.evaluate(theta);
  double mae = mae_normalized(y_exp, y_hat);
  kvfd::ParameterVector best_theta = theta;
  double best_mae = std::numeric_limits<double>::infinity();
  std::vector<double> best_hist;

  for (std::size_t iter = 0;; ++iter) {
    if (cfg.record_trajectory) res.trajectory.push_back({iter, theta, mae});
    if (mae < best_mae) {
      best_mae = mae;
      best_theta = theta;
    }
    best_hist.push_back(best_mae);
    res.iterations = iter;
    if (mae < cfg.mae_tol) {
      res.terminated_by = Termination::Converged;
      break;
    }
    if (iter >= cfg.stall_window && best_hist[iter] > 0.99 * best_hist[iter - cfg.stall_window]) {
      res.terminated_by = Termination::Stalled;
      break;
    }
    if (iter >= cfg.max_iters) {
      res.terminated_by = Termination::MaxIters;
      break;
    }

    for (std::size_t a = 0; a < n; ++a) {
      cand[a] = apply_action(theta, actions[a], cfg.step_frac, cfg.box);
      eval.evaluate(cand[a], cand_y[a]);
      cand_mae[a] = mae_normalized(y_exp, cand_y[a]);
      rc[a] = reward_curve(cand_mae[a], reward);
    }
    if (reward.global_term) {
      fill_residual(y_exp, y_hat, peak, residual.data());
      rg_now = predictor->predict(residual, std::span(&theta, 1));
      res.predictor_calls += 1;
      if (rg_now.rows() != static_cast<Eigen::Index>(n) || rg_now.cols() != 1) {
        throw DomainError("dqmp_search: reward predictor returned the wrong shape");
      }
    }
    for (std::size_t a = 0; a < n; ++a) {
      r[a] = reward_total(reward.global_term ? rg_now(a, 0) : 0.0, rc[a], reward);
    }

    if (cfg.next_value == NextValue::QValue) {
      std::fill(max_next.begin(), max_next.end(), *std::max_element(q.begin(), q.end()));
    } else {
      const bool second_call = reward.global_term && !cfg.reuse_prediction;
      if (second_call) {
        for (std::size_t a = 0; a < n; ++a) {
          fill_residual(y_exp, cand_y[a], peak, cand_residuals.col(static_cast<Eigen::Index>(a)).data());
        }
        rg_next = predictor->predict(cand_residuals, cand);
        res.predictor_calls += n;
        if (rg_next.rows() != static_cast<Eigen::Index>(n) || rg_next.cols() != static_cast<Eigen::Index>(n)) {
          throw DomainError("dqmp_search: reward predictor returned the wrong shape");
        }
      }
      for (std::size_t a = 0; a < n; ++a) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < n; ++b) {
          eval.evaluate(apply_action(cand[a], actions[b], cfg.step_frac, cfg.box), y2);
          const double rc2 = reward_curve(mae_normalized(y_exp, y2), reward);
          double rg2 = 0.0;
          if (reward.global_term) rg2 = second_call ? rg_next(b, a) : rg_now(b, 0);
          best = std::max(best, reward_total(rg2, rc2, reward));
        }
        max_next[a] = best;
      }
    }

    std::size_t chosen = 0;
    for (std::size_t a = 0; a < n; ++a) {
      q[a] = q_update(q[a], r[a], max_next[a], cfg.xi, cfg.gamma);
      if (!(q[a] >= 0.0 && q[a] <= q_cap + 1e-12)) {
        throw std::logic_error("dqmp_search: Q-value left its contraction bound");
      }
      if (q[a] > q[chosen]) chosen = a;
    }
    if (observer) observer(IterationTrace{iter, theta, mae, r, q, chosen});

    theta = cand[chosen];
    y_hat = cand_y[chosen];
    mae = cand_mae[chosen];
  }

  res.theta_hat = best_theta;
  res.mae = best_mae;
  res.r_squared = r_squared(y_exp, eval.evaluate(best_theta));
  return res;
}

RewardConfig ql_variant_hook(RewardConfig reward) {
  reward.global_term = false;
  return reward;
}

kvfd::ParameterVector rescale_e0(const kvfd::ParameterVector& theta, const kvfd::Curve& experimental,
                                 const ParameterBox& box) {
  const auto y = kvfd::CurveEvaluator(experimental.protocol, experimental.times).evaluate(theta);
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    num += experimental.values[j] * y[j];
    den += y[j] * y[j];
  }
  const double c = num / den;
  if (!(c > 0.0) || !std::isfinite(c)) return theta;
  auto out = theta;
  out.e0 = experimental.protocol.force_controlled() ? theta.e0 / c : theta.e0 * c;
  return box.clamp(out);
}

kvfd::ParameterVector initial_guess(const kvfd::Curve& experimental, const nnet::Network& din, const ParameterBox& box,
                                    bool rescale) {
  const auto theta = nnet::din_init(experimental.values, din, box);
  return rescale ? rescale_e0(theta, experimental, box) : theta;
}

FitResult dqmp_fit(const kvfd::Curve& experimental, const nnet::Network& din, const nnet::Network& drn,
                   const DqmpConfig& cfg, const RewardConfig& reward) {
  NetworkPredictor predictor(drn);
  const auto init = initial_guess(experimental, din, cfg.box, cfg.rescale_e0);
  return dqmp_search(experimental, init, &predictor, cfg, reward);
}

std::string fit_report(const FitResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "e0 = %.17g\nalpha = %.17g\ntau = %.17g\nr_squared = %.17g\nmae = %.17g\niterations = %zu\n"
                "terminated_by = %s\npredictor_calls = %zu\n",
                r.theta_hat.e0, r.theta_hat.alpha, r.theta_hat.tau, r.r_squared, r.mae, r.iterations,
                termination_name(r.terminated_by), r.predictor_calls);
  return buf;
}

void write_fit_report(const std::string& path, const FitResult& r) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fputs(fit_report(r).c_str(), f);
  if (std::fclose(f) != 0) throw IoError("write failed for '" + path + "'");
}

void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fputs("iter,e0,alpha,tau,mae\n", f);
  for (const auto& row : rows) {
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.17g\n", row.iter, row.theta.e0, row.theta.alpha, row.theta.tau, row.mae);
  }
  if (std::fclose(f) != 0) throw IoError("write failed for '" + path + "'");
}

}  // namespace dqmp
