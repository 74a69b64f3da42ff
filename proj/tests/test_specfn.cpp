#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "dqmp/errors.hpp"
#include "dqmp/specfn.hpp"

namespace sf = dqmp::specfn;
using sf::beta_complete;
using sf::beta_incomplete;
using sf::log_gamma;
using sf::mittag_leffler;
using sf::reciprocal_gamma;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Defining integral of the incomplete beta by Boost tanh-sinh. The two-argument
// form gives the distance to the nearer endpoint so (1-t)^(y-1) stays accurate.
double beta_inc_oracle(double a, double x, double y) {
  boost::math::quadrature::tanh_sinh<double> ts;
  auto f = [&](double t, double tc) {
    const double one_minus = (t > 0.5 * a && a == 1.0) ? tc : 1.0 - t;
    return std::pow(t, x - 1.0) * std::pow(one_minus, y - 1.0);
  };
  return ts.integrate(f, 0.0, a, 1e-14);
}

using mp50 = boost::multiprecision::cpp_bin_float_50;

// Extended-precision Taylor series oracle.
template <class Real>
double ml_series_oracle(double alpha, double beta, double z) {
  Real sum = 0;
  Real zk = 1;
  const Real zz = z;
  for (int k = 0; k < 20000; ++k) {
    const Real arg = Real(alpha) * k + Real(beta);
    const Real term = zk / boost::math::tgamma(arg);
    sum += term;
    if (k > 10 && abs(term) < Real(1e-40) * abs(sum) && abs(zk) < 1) break;
    if (k > 10 && abs(term) < Real(1e-40) * abs(sum) && arg > 5 * pow(abs(zz), Real(1) / Real(alpha)))
      break;
    zk *= zz;
  }
  return static_cast<double>(sum);
}

// Real-line spectral representation for 0 < alpha < 1 and z = -t^alpha, written
// in w = alpha ln r so the kernel becomes sin(a pi) / (2 a pi (cosh w + cos a pi)).
double ml_spectral_oracle(double alpha, double beta, double z) {
  const double log_t = std::log(-z) / alpha;
  const double c = std::cos(alpha * std::numbers::pi);
  const double s = std::sin(alpha * std::numbers::pi);
  auto kern = [&](double w) { return s / (2.0 * alpha * std::numbers::pi * (std::cosh(w) + c)); };
  const double w0 = -std::log(-z);
  const double hi = w0 + alpha * std::log(800.0);
  using gk = boost::math::quadrature::gauss_kronrod<double, 61>;
  if (beta == 1.0) {
    auto f = [&](double w) { return std::exp(-std::exp(log_t + w / alpha)) * kern(w); };
    return gk::integrate(f, -80.0, w0, 15, 1e-13) + gk::integrate(f, w0, hi, 15, 1e-13);
  }
  // (1 - exp(-r t)) / (r t) with r t = exp(log_t + w / alpha).
  auto f = [&](double w) {
    const double rt = std::exp(log_t + w / alpha);
    const double ratio = rt < 1e-8 ? 1.0 - 0.5 * rt : -std::expm1(-rt) / rt;
    return ratio * kern(w);
  };
  return gk::integrate(f, -80.0, w0, 15, 1e-13) + gk::integrate(f, w0, 80.0, 15, 1e-13);
}

}  // namespace

TEST_CASE("gamma known values") {
  CHECK(sf::gamma(1.0) == 1.0);
  CHECK(rel(sf::gamma(0.5), 1.7724538509055160) < 1e-15);
  CHECK(sf::gamma(5.0) == 24.0);
  CHECK_THROWS_AS(sf::gamma(0.0), dqmp::DomainError);
  CHECK_THROWS_AS(sf::gamma(-1.5), dqmp::DomainError);
  CHECK_THROWS_AS(sf::gamma(std::nan("")), dqmp::DomainError);
}

TEST_CASE("gamma matches Boost to 1e-12 across its range") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lg(-6.0, std::log(170.0));
  double worst = 0;
  for (int i = 0; i < 2000; ++i) {
    const double x = std::exp(lg(rng));
    worst = std::max(worst, rel(sf::gamma(x), boost::math::tgamma(x)));
    worst = std::max(worst, std::abs(log_gamma(x) - boost::math::lgamma(x)) / std::max(1.0, std::abs(boost::math::lgamma(x))));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("reciprocal gamma on the negative axis") {
  CHECK(reciprocal_gamma(0.0) == 0.0);
  CHECK(reciprocal_gamma(-3.0) == 0.0);
  for (double x : {-0.5, -1.3, -2.7, -7.25, -40.6}) {
    CHECK(rel(reciprocal_gamma(x), 1.0 / boost::math::tgamma(x)) < 1e-12);
  }
  CHECK(rel(reciprocal_gamma(200.0), 1.0 / boost::math::tgamma(mp50(200)).convert_to<double>()) < 1e-11);
}

TEST_CASE("complete beta") {
  CHECK(rel(beta_complete(1, 1), 1.0) < 1e-15);
  CHECK(rel(beta_complete(2, 2), 1.0 / 6.0) < 1e-14);
  // Oracle: 40-digit quadrature of the defining integral.
  CHECK(rel(beta_complete(1.5, 0.8), 0.88434146863383452453) < 1e-11);
  CHECK(rel(beta_complete(1.5, 0.8), beta_inc_oracle(1.0, 1.5, 0.8)) < 1e-11);
  CHECK_THROWS_AS(beta_complete(0.0, 1.0), dqmp::DomainError);
  CHECK_THROWS_AS(beta_complete(1.0, -2.0), dqmp::DomainError);
}

TEST_CASE("incomplete beta") {
  CHECK(rel(beta_incomplete(1.0, 1.5, 0.8), beta_complete(1.5, 0.8)) < 1e-14);
  CHECK(rel(beta_incomplete(0.5, 1, 1), 0.5) < 1e-14);
  CHECK(rel(beta_incomplete(0.3, 1.5, 0.8), 0.11410364899886458205) < 1e-9);
  CHECK(beta_incomplete(0.0, 2.0, 3.0) == 0.0);
  CHECK_THROWS_AS(beta_incomplete(1.2, 1.0, 1.0), dqmp::DomainError);
  CHECK_THROWS_AS(beta_incomplete(-0.1, 1.0, 1.0), dqmp::DomainError);
  CHECK_THROWS_AS(beta_incomplete(0.5, 0.0, 1.0), dqmp::DomainError);
}

TEST_CASE("incomplete beta vs quadrature on 100 random triples") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ua(0.0, 1.0);
  std::uniform_real_distribution<double> ux(0.2, 5.0);
  std::uniform_real_distribution<double> uy(0.01, 3.0);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const double a = ua(rng), x = ux(rng), y = uy(rng);
    worst = std::max(worst, rel(beta_incomplete(a, x, y), beta_inc_oracle(a, x, y)));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("incomplete beta is monotone in the limit") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(0.1, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double x = ux(rng), y = ux(rng);
    double prev = 0;
    for (int i = 0; i <= 200; ++i) {
      const double v = beta_incomplete(i / 200.0, x, y);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("Mittag-Leffler closed forms") {
  for (double b : {0.5, 1.0, 2.0, 3.7}) {
    CHECK(rel(mittag_leffler(0.3, b, 0.0), 1.0 / boost::math::tgamma(b)) < 1e-14);
  }
  CHECK(rel(mittag_leffler(1, 1, -1), 0.36787944117144233) < 1e-15);
  CHECK(rel(mittag_leffler(2, 1, -1), 0.54030230586813972) < 1e-15);
  // Oracle: 40-digit series summation.
  CHECK(rel(mittag_leffler(0.5, 2, -3), 0.28490429471865863023) < 1e-10);
}

TEST_CASE("Mittag-Leffler domain checks") {
  CHECK_THROWS_AS(mittag_leffler(0.0, 1.0, -1.0), dqmp::DomainError);
  CHECK_THROWS_AS(mittag_leffler(2.5, 1.0, -1.0), dqmp::DomainError);
  CHECK_THROWS_AS(mittag_leffler(0.5, 0.0, -1.0), dqmp::DomainError);
  CHECK_THROWS_AS(mittag_leffler(0.5, 1.0, INFINITY), dqmp::DomainError);
}

TEST_CASE("E_{1,1} is exp and E_{2,1}(-x^2) is cos on grids") {
  double worst = 0;
  for (int i = 0; i <= 80; ++i) {
    const double z = -10.0 + 0.25 * i;
    worst = std::max(worst, rel(mittag_leffler(1, 1, z), std::exp(z)));
  }
  CHECK(worst < 1e-10);
  worst = 0;
  for (int i = 0; i <= 100; ++i) {
    const double x = 0.05 * i;
    const double c = std::cos(x);
    if (std::abs(c) < 1e-3) continue;  // relative error is ill-posed at the zero of cos
    worst = std::max(worst, rel(mittag_leffler(2, 1, -x * x), c));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("Mittag-Leffler agrees with extended-precision series for moderate z") {
  double worst = 0;
  for (double a : {0.05, 0.2, 0.5, 0.8, 0.95, 0.999}) {
    for (double b : {1.0, 2.0, 1.3}) {
      for (double z : {-0.1, -0.45, -0.6, -1.0, -2.5, -5.0, -8.0}) {
        // Series terms peak near exp(|z|^(1/a)); keep that within 50 digits.
        if (std::pow(-z, 1.0 / a) > 30.0) continue;
        const double ref = ml_series_oracle<mp50>(a, b, z);
        const double got = mittag_leffler(a, b, z);
        CAPTURE(a);
        CAPTURE(b);
        CAPTURE(z);
        CHECK(rel(got, ref) < 1e-8);
        worst = std::max(worst, rel(got, ref));
      }
    }
  }
  MESSAGE("worst relative deviation vs series oracle: " << worst);
}

TEST_CASE("Mittag-Leffler agrees with spectral integral for large negative z") {
  double worst = 0;
  for (double a : {0.01, 0.1, 0.2, 0.5, 0.8, 0.95, 0.99}) {
    for (double b : {1.0, 2.0}) {
      for (double z : {-0.7, -3.0, -12.0, -30.0, -45.0, -100.0, -800.0, -1e4}) {
        const double ref = ml_spectral_oracle(a, b, z);
        const double got = mittag_leffler(a, b, z);
        CAPTURE(a);
        CAPTURE(b);
        CAPTURE(z);
        CHECK(rel(got, ref) < 1e-8);
        worst = std::max(worst, rel(got, ref));
      }
    }
  }
  MESSAGE("worst relative deviation vs spectral oracle: " << worst);
}

TEST_CASE("Mittag-Leffler recurrence E_{a,b} = z E_{a,a+b} + 1/Gamma(b)") {
  for (double a : {0.2, 0.5, 0.8}) {
    for (double b : {1.0, 2.0}) {
      for (int i = 0; i <= 100; ++i) {
        const double z = -0.5 * i;
        const double lhs = mittag_leffler(a, b, z);
        const double shifted = z * mittag_leffler(a, a + b, z);
        const double g = reciprocal_gamma(b);
        CAPTURE(a);
        CAPTURE(b);
        CAPTURE(z);
        CHECK(std::abs(lhs - shifted - g) <= 1e-8 * (std::abs(lhs) + std::abs(shifted) + g));
      }
    }
  }
}

TEST_CASE("Mittag-Leffler is positive and non-increasing on the negative axis") {
  for (double a : {0.01, 0.15, 0.4, 0.65, 0.9, 0.99}) {
    for (double b : {1.0, 2.0}) {
      double prev = reciprocal_gamma(b);
      for (int i = 1; i <= 400; ++i) {
        const double z = -std::pow(10.0, -3.0 + 7.0 * i / 400.0);
        const double v = mittag_leffler(a, b, z);
        CAPTURE(a);
        CAPTURE(b);
        CAPTURE(z);
        CHECK(v > 0.0);
        CHECK(v <= prev * (1.0 + 1e-12));
        prev = v;
      }
    }
  }
}

TEST_CASE("Mittag-Leffler is continuous across strategy switch points") {
  for (double a : {0.1, 0.5, 0.9}) {
    for (double b : {1.0, 2.0}) {
      for (double zc : {-0.5, -std::pow(40.0, a)}) {
        const double lo = mittag_leffler(a, b, zc * (1 - 1e-9));
        const double hi = mittag_leffler(a, b, zc * (1 + 1e-9));
        CHECK(rel(lo, hi) < 1e-8);
      }
    }
  }
}

TEST_CASE("Mittag-Leffler positive arguments and alpha above one via series") {
  CHECK(rel(mittag_leffler(0.5, 1.0, 2.0), ml_series_oracle<mp50>(0.5, 1.0, 2.0)) < 1e-10);
  CHECK(rel(mittag_leffler(1.5, 1.0, -2.0), ml_series_oracle<mp50>(1.5, 1.0, -2.0)) < 1e-8);
  CHECK_THROWS_AS(mittag_leffler(1.5, 1.0, -5000.0), dqmp::AccuracyError);
}

TEST_CASE("Mittag-Leffler random sweep against spectral oracle") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ua(0.01, 0.99);
  std::uniform_real_distribution<double> lz(-3.0, 4.0);
  double worst = 0;
  for (int i = 0; i < 400; ++i) {
    const double a = ua(rng);
    const double b = (i % 2 == 0) ? 1.0 : 2.0;
    const double z = -std::pow(10.0, lz(rng));
    const double d = rel(mittag_leffler(a, b, z), ml_spectral_oracle(a, b, z));
    CAPTURE(a);
    CAPTURE(b);
    CAPTURE(z);
    CHECK(d < 1e-8);
    worst = std::max(worst, d);
  }
  MESSAGE("worst relative deviation in random sweep: " << worst);
}
