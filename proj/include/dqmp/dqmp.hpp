#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dqmp/kvfd.hpp"
#include "dqmp/nnet.hpp"
#include "dqmp/params.hpp"
#include "dqmp/rewards.hpp"

namespace dqmp {

enum class Termination { Converged, Stalled, MaxIters };

const char* termination_name(Termination t);

/// Value of the next state in the Q update.
enum class NextValue {
  RewardLookahead,  // max over a' of r(s', a'), one step ahead of each candidate
  QValue,           // max over the current Q-values
};

struct DqmpConfig {
  double xi = 0.6;
  double gamma = 0.5;
  double step_frac = 0.01;
  std::size_t max_iters = 2000;
  double mae_tol = 1e-8;
  std::size_t stall_window = 50;  // stalled when the best mae gained < 1% over this many iterations
  NextValue next_value = NextValue::RewardLookahead;
  bool reuse_prediction = false;  // next-state R_g reuses the current prediction instead of a second call
  bool rescale_e0 = false;        // least-squares amplitude correction of the initial E0
  bool record_trajectory = false;
  ParameterBox box;

  void validate() const;
};

struct TrajectoryRow {
  std::size_t iter = 0;
  kvfd::ParameterVector theta;
  double mae = 0.0;
};

struct FitResult {
  kvfd::ParameterVector theta_hat;  // lowest-mae iterate visited
  double r_squared = 0.0;           // against the experimental curve
  double mae = 0.0;                 // normalized mae of theta_hat
  std::size_t iterations = 0;       // moves taken
  Termination terminated_by = Termination::MaxIters;
  std::vector<TrajectoryRow> trajectory;
  std::size_t predictor_calls = 0;  // sequences passed to the reward predictor
};

/// Supplies predicted global rewards R_g, one row per action, for a batch of
/// states. Column j of `residuals` is (Y_exp - f(thetas[j])) / max|Y_exp|.
class RewardPredictor {
 public:
  virtual ~RewardPredictor() = default;
  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& residuals, std::span<const kvfd::ParameterVector> thetas) = 0;
};

/// Predictions of a trained reward network; reads only the residuals.
class NetworkPredictor : public RewardPredictor {
 public:
  explicit NetworkPredictor(const nnet::Network& net) : net_(net) {}
  Eigen::MatrixXd predict(const Eigen::MatrixXd& residuals, std::span<const kvfd::ParameterVector> thetas) override;

 private:
  const nnet::Network& net_;
};

/// Exact R_g computed from the true parameters (testing and diagnostics).
class OraclePredictor : public RewardPredictor {
 public:
  OraclePredictor(const kvfd::ParameterVector& theta_true, const kvfd::Curve& experimental, const ParameterBox& box,
                  double step_frac, const RewardConfig& reward);
  Eigen::MatrixXd predict(const Eigen::MatrixXd& residuals, std::span<const kvfd::ParameterVector> thetas) override;

 private:
  kvfd::ParameterVector theta_true_;
  std::vector<double> y_exp_;
  kvfd::CurveEvaluator eval_;
  ParameterBox box_;
  double step_frac_;
  RewardConfig reward_;
};

struct IterationTrace {
  std::size_t iter = 0;
  kvfd::ParameterVector theta;  // state before the move
  double mae = 0.0;
  std::vector<double> rewards;  // r(s, a) per action
  std::vector<double> q;        // after the update
  std::size_t action = 0;       // chosen
};

using IterationObserver = std::function<void(const IterationTrace&)>;

/// The Q-learning search from a given start. Rewards r(s, a) combine the
/// curve reward of each candidate with R_g from `predictor` (ignored, and may
/// be null, when reward.global_term is false). One persistent Q-value per
/// action, zero-initialized; greedy argmax with ties to the lowest index.
FitResult dqmp_search(const kvfd::Curve& experimental, const kvfd::ParameterVector& init, RewardPredictor* predictor,
                      const DqmpConfig& cfg, const RewardConfig& reward, const IterationObserver& observer = {});

/// Initial guess from the DIN, optionally amplitude-corrected, then dqmp_search
/// with the reward network.
FitResult dqmp_fit(const kvfd::Curve& experimental, const nnet::Network& din, const nnet::Network& drn,
                   const DqmpConfig& cfg, const RewardConfig& reward);

/// The reward configuration of the plain Q-learning baseline: R_g = 0 and
/// the reward network is never called.
RewardConfig ql_variant_hook(RewardConfig reward);

/// E0 scaled so that f(theta) best matches the curve in least squares
/// (the responses are proportional to E0, or to 1/E0 for creep), then clamped.
kvfd::ParameterVector rescale_e0(const kvfd::ParameterVector& theta, const kvfd::Curve& experimental,
                                 const ParameterBox& box);

/// Initial guess used by the fitters: din_init, then rescale_e0 if enabled.
kvfd::ParameterVector initial_guess(const kvfd::Curve& experimental, const nnet::Network& din, const ParameterBox& box,
                                    bool rescale);

/// Flat "key = value" report.
std::string fit_report(const FitResult& r);
void write_fit_report(const std::string& path, const FitResult& r);
/// "iter,e0,alpha,tau,mae" rows.
void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows);

}  // namespace dqmp
