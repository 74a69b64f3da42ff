#include "dqmp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dqmp/errors.hpp"
#include "dqmp/specfn.hpp"

namespace dqmp {

namespace {

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double r_squared(std::span<const double> observed, std::span<const double> fitted) {
  if (observed.size() != fitted.size()) throw DomainError("r_squared: length mismatch");
  if (observed.size() < 2) throw DomainError("r_squared: need at least 2 points");
  const double mu = mean(observed);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    ss_res += (observed[i] - fitted[i]) * (observed[i] - fitted[i]);
    ss_tot += (observed[i] - mu) * (observed[i] - mu);
  }
  if (!(ss_tot > 0.0)) throw DomainError("r_squared: observed series is constant");
  return 1.0 - ss_res / ss_tot;
}

std::array<double, kParamCount> relative_error(const kvfd::ParameterVector& est, const kvfd::ParameterVector& truth) {
  const auto e = to_array(est);
  const auto t = to_array(truth);
  std::array<double, kParamCount> out{};
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (t[i] == 0.0 || !std::isfinite(t[i])) throw DomainError("relative_error: truth components must be nonzero");
    out[i] = 100.0 * (e[i] - t[i]) / t[i];
  }
  return out;
}

double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DomainError("pearson_r: length mismatch");
  if (xs.size() < 3) throw DomainError("pearson_r: need at least 3 points");
  const double mx = mean(xs), my = mean(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DomainError("pearson_r: constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson_p_value(double r, std::size_t n) {
  if (n < 3) throw DomainError("pearson_p_value: need at least 3 points");
  if (!(std::abs(r) <= 1.0)) throw DomainError("pearson_p_value: |r| must not exceed 1");
  if (std::abs(r) == 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t2 = r * r * df / (1.0 - r * r);
  // P(|T| > t) = I_{df / (df + t^2)}(df / 2, 1 / 2).
  const double a = df / (df + t2);
  if (a <= 0.0) return 0.0;
  return specfn::beta_incomplete(a, df / 2.0, 0.5) / specfn::beta_complete(df / 2.0, 0.5);
}

}  // namespace dqmp
