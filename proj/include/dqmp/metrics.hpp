#pragma once

#include <array>
#include <span>

#include "dqmp/kvfd.hpp"
#include "dqmp/params.hpp"

namespace dqmp {

/// 1 - SS_res / SS_tot, SS_tot about the mean of `observed`. Throws
/// DomainError on length mismatch, fewer than 2 points or constant observed.
double r_squared(std::span<const double> observed, std::span<const double> fitted);

/// 100 (est_i - truth_i) / truth_i per parameter, signed.
std::array<double, kParamCount> relative_error(const kvfd::ParameterVector& est, const kvfd::ParameterVector& truth);

/// Sample correlation coefficient; at least 3 points, neither series constant.
double pearson_r(std::span<const double> xs, std::span<const double> ys);

/// Two-sided p-value of the t-test for zero correlation, t = r sqrt((n - 2) / (1 - r^2)).
double pearson_p_value(double r, std::size_t n);

}  // namespace dqmp
