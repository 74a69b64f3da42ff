#include "dqmp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "dqmp/errors.hpp"
#include "dqmp/metrics.hpp"

namespace dqmp {

namespace {

constexpr Eigen::Index kK = static_cast<Eigen::Index>(kParamCount);

Normalized clamp_unit(const Normalized& u) {
  Normalized out{};
  for (std::size_t i = 0; i < kParamCount; ++i) out[i] = std::clamp(u[i], 0.0, 1.0);
  return out;
}

double half_sq(const Eigen::VectorXd& r) { return 0.5 * r.squaredNorm(); }

}  // namespace

FitResult ql_fit(const kvfd::Curve& experimental, const nnet::Network& din, const DqmpConfig& cfg,
                 const RewardConfig& reward) {
  const auto init = initial_guess(experimental, din, cfg.box, cfg.rescale_e0);
  return dqmp_search(experimental, init, nullptr, cfg, ql_variant_hook(reward));
}

const char* lm_init_name(LmInit m) {
  switch (m) {
    case LmInit::BoxMidpoint:
      return "box_midpoint";
    case LmInit::RandomSeeded:
      return "random_seeded";
    case LmInit::Din:
      return "din";
  }
  return "?";
}

LmInit lm_init_from_name(const std::string& name) {
  for (auto m : {LmInit::BoxMidpoint, LmInit::RandomSeeded, LmInit::Din}) {
    if (name == lm_init_name(m)) return m;
  }
  throw DomainError("unknown LM init mode '" + name + "'");
}

void LmConfig::validate() const {
  if (!(lambda0 > 0.0)) throw DomainError("LmConfig: lambda0 must be positive");
  if (!(lambda_up > 1.0)) throw DomainError("LmConfig: lambda_up must exceed 1");
  if (!(lambda_down > 0.0 && lambda_down < 1.0)) throw DomainError("LmConfig: lambda_down must lie in (0, 1)");
  if (!(gradient_tol >= 0.0)) throw DomainError("LmConfig: gradient_tol must be non-negative");
  if (!(fd_step > 0.0 && fd_step < 0.5)) throw DomainError("LmConfig: fd_step must lie in (0, 0.5)");
  if (!(lambda_max > lambda0)) throw DomainError("LmConfig: lambda_max must exceed lambda0");
  box.validate();
}

LmOutcome lm_minimize(const ResidualFn& residual, std::size_t n_residuals, const Normalized& u0, const LmConfig& cfg) {
  cfg.validate();
  if (n_residuals < 1) throw DomainError("lm_minimize: need at least one residual");
  const auto n = static_cast<Eigen::Index>(n_residuals);
  auto eval = [&](const Normalized& u, Eigen::VectorXd& r) {
    r.resize(n);
    residual(u, std::span<double>(r.data(), n_residuals));
  };

  LmOutcome out;
  out.u = clamp_unit(u0);
  Eigen::VectorXd r, r_new, r_plus, r_minus;
  eval(out.u, r);
  out.cost = half_sq(r);
  if (!std::isfinite(out.cost)) throw DomainError("lm_minimize: non-finite residual at the start");
  out.accepted_costs.push_back(out.cost);
  out.iterates.push_back(out.u);
  double lambda = cfg.lambda0;
  Eigen::MatrixXd J(n, kK);

  for (;;) {
    for (Eigen::Index i = 0; i < kK; ++i) {
      auto up = out.u, dn = out.u;
      up[i] = std::min(1.0, out.u[i] + cfg.fd_step);
      dn[i] = std::max(0.0, out.u[i] - cfg.fd_step);
      eval(up, r_plus);
      eval(dn, r_minus);
      J.col(i) = (r_plus - r_minus) / (up[i] - dn[i]);
    }
    const Eigen::VectorXd g = J.transpose() * r;
    if (g.cwiseAbs().maxCoeff() < cfg.gradient_tol) {
      out.terminated_by = Termination::Converged;
      return out;
    }
    if (out.iterations >= cfg.max_iters) {
      out.terminated_by = Termination::MaxIters;
      return out;
    }
    ++out.iterations;
    const Eigen::MatrixXd A = J.transpose() * J;
    const double diag_floor = std::max(A.diagonal().maxCoeff(), 1e-300) * 1e-12;
    for (;;) {
      Eigen::MatrixXd M = A;
      for (Eigen::Index i = 0; i < kK; ++i) M(i, i) += lambda * std::max(A(i, i), diag_floor);
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
      Eigen::VectorXd du;
      bool ok = ldlt.info() == Eigen::Success;
      if (ok) {
        du = ldlt.solve(-g);
        ok = du.allFinite();
      }
      if (ok) {
        Normalized cand{};
        for (std::size_t i = 0; i < kParamCount; ++i) cand[i] = out.u[i] + du[static_cast<Eigen::Index>(i)];
        cand = clamp_unit(cand);
        eval(cand, r_new);
        const double c = half_sq(r_new);
        if (std::isfinite(c) && c < out.cost) {
          double step = 0.0;
          for (std::size_t i = 0; i < kParamCount; ++i) step = std::max(step, std::abs(cand[i] - out.u[i]));
          out.u = cand;
          out.cost = c;
          r.swap(r_new);
          out.accepted_costs.push_back(c);
          out.iterates.push_back(cand);
          lambda = std::max(lambda * cfg.lambda_down, 1e-300);
          if (step < 1e-14) {
            out.terminated_by = Termination::Converged;
            return out;
          }
          break;
        }
      }
      lambda *= cfg.lambda_up;
      if (lambda > cfg.lambda_max) {
        out.terminated_by = Termination::Stalled;
        return out;
      }
    }
  }
}

FitResult lm_fit(const kvfd::Curve& experimental, const LmConfig& cfg, std::uint64_t seed, const nnet::Network* din) {
  cfg.validate();
  if (experimental.times.size() != experimental.values.size() || experimental.values.empty()) {
    throw DomainError("lm_fit: malformed experimental curve");
  }
  double peak = 0.0;
  for (double v : experimental.values) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0) || !std::isfinite(peak)) throw DomainError("lm_fit: experimental curve must be non-zero");

  Normalized u0{};
  switch (cfg.init_mode) {
    case LmInit::BoxMidpoint:
      u0.fill(0.5);
      break;
    case LmInit::RandomSeeded: {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (auto& v : u0) v = unit(rng);
      break;
    }
    case LmInit::Din:
      if (!din) throw DomainError("lm_fit: the din start needs a network");
      u0 = normalize_params(nnet::din_init(experimental.values, *din, cfg.box), cfg.box);
      break;
  }

  kvfd::CurveEvaluator eval(experimental.protocol, experimental.times);
  std::vector<double> y(experimental.values.size());
  const auto residual = [&](const Normalized& u, std::span<double> r) {
    eval.evaluate(denormalize_params(u, cfg.box), y);
    for (std::size_t j = 0; j < y.size(); ++j) r[j] = (y[j] - experimental.values[j]) / peak;
  };
  const auto lm = lm_minimize(residual, y.size(), u0, cfg);

  FitResult res;
  res.theta_hat = denormalize_params(lm.u, cfg.box);
  eval.evaluate(res.theta_hat, y);
  res.mae = mae_normalized(experimental.values, y);
  res.r_squared = r_squared(experimental.values, y);
  res.iterations = lm.iterations;
  res.terminated_by = lm.terminated_by;
  return res;
}

}  // namespace dqmp
