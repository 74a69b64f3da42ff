#pragma once

namespace dqmp::specfn {

struct AccuracySpec {
  double rel_tol = 1e-10;
  int max_terms = 10000;
};

/// Gamma function for x > 0. Throws DomainError for x <= 0 or non-finite x.
double gamma(double x);

/// ln Gamma(x) for x > 0.
double log_gamma(double x);

/// 1/Gamma(x) for any finite real x; zero at the poles 0, -1, -2, ...
double reciprocal_gamma(double x);

/// B(x, y) = Gamma(x) Gamma(y) / Gamma(x + y) for x, y > 0.
double beta_complete(double x, double y);

/// Non-regularized incomplete beta: integral of t^(x-1) (1-t)^(y-1) over [0, a].
double beta_incomplete(double a, double x, double y, const AccuracySpec& acc = {});

/// Two-parameter Mittag-Leffler function E_{alpha,beta}(z) for real z,
/// alpha in (0, 2], beta > 0.
///
/// Strategy for z < 0 and alpha <= 1: Taylor series near the origin,
/// algebraic asymptotic expansion once |z|^(1/alpha) is large, and a
/// parabolic-contour Laplace inversion in between. Positive z and
/// alpha > 1 use the series and throw AccuracyError when cancellation
/// makes the result uncertifiable.
double mittag_leffler(double alpha, double beta, double z, const AccuracySpec& acc = {});

}  // namespace dqmp::specfn
