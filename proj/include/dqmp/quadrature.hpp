#pragma once

#include <cmath>
#include <limits>
#include <numbers>

#include "dqmp/errors.hpp"

namespace dqmp::quad {

struct Result {
  double value = 0.0;
  double error_estimate = 0.0;
  int levels = 0;
};

// Double-exponential (tanh-sinh) quadrature on a finite interval. Tolerates
// integrable algebraic singularities at either endpoint. Refines the step by
// halving until two consecutive levels agree to rel_tol.
template <class F>
Result tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-12, int max_levels = 10) {
  if (!(b > a)) {
    return {};
  }
  constexpr double half_pi = std::numbers::pi / 2.0;
  constexpr double t_max = 3.5;
  const double half = 0.5 * (b - a);

  // Node at parameter t: x = (a+b)/2 + half * tanh(pi/2 sinh t). The distance to
  // the nearer endpoint is computed directly so it never rounds to zero.
  auto node = [&](double t, double& weight) {
    const double u = half_pi * std::sinh(t);
    const double ch = std::cosh(u);
    weight = half * half_pi * std::cosh(t) / (ch * ch);
    const double e = std::exp(-2.0 * std::abs(u));
    const double gap = half * 2.0 * e / (1.0 + e);  // half * (1 - tanh|u|)
    return t >= 0.0 ? b - gap : a + gap;
  };

  double h = 1.0;
  double sum = 0.0;
  {
    double w = 0.0;
    const double x0 = node(0.0, w);
    sum = w * f(x0);
    for (double t = h; t <= t_max; t += h) {
      double wp = 0.0;
      double wm = 0.0;
      const double xp = node(t, wp);
      const double xm = node(-t, wm);
      if (xp < b) sum += wp * f(xp);
      if (xm > a) sum += wm * f(xm);
    }
  }
  double estimate = sum * h;
  for (int level = 1; level <= max_levels; ++level) {
    h *= 0.5;
    double add = 0.0;
    for (double t = h; t <= t_max; t += 2.0 * h) {
      double wp = 0.0;
      double wm = 0.0;
      const double xp = node(t, wp);
      const double xm = node(-t, wm);
      if (xp < b) add += wp * f(xp);
      if (xm > a) add += wm * f(xm);
    }
    sum += add;
    const double next = sum * h;
    const double err = std::abs(next - estimate);
    estimate = next;
    if (level >= 3 && err <= rel_tol * std::abs(estimate)) {
      return {estimate, err, level};
    }
    if (level >= 3 && estimate == 0.0 && err == 0.0) {
      return {estimate, err, level};
    }
  }
  throw AccuracyError("tanh_sinh: no convergence to requested tolerance");
}

}  // namespace dqmp::quad
