#pragma once

// Special functions behind every closed-form density in the library. Gamma
// prefactors are combined in log space throughout, since the ensemble
// dimension K enters as exponents of order K/2.

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ensemble_forge/error.hpp"
#include "ensemble_forge/quadrature.hpp"

namespace ensemble_forge {

struct SpecFunResult {
  double value = 0.0;
  double est_rel_err = 0.0;
};

/// log Gamma(x) for x > 0.
inline double ln_gamma(double x) {
  detail::require(x > 0.0 && std::isfinite(x), "ln_gamma: argument must be positive");
  return std::lgamma(x);
}

inline double log_chi2_pdf(double z, double n) {
  detail::require(n > 0.0, "chi2_pdf: degrees of freedom must be positive");
  detail::require(z >= 0.0, "chi2_pdf: argument must be nonnegative");
  const double k = 0.5 * n;
  if (z == 0.0) {
    if (k < 1.0) return std::numeric_limits<double>::infinity();
    if (k == 1.0) return -std::log(2.0);
    return -std::numeric_limits<double>::infinity();
  }
  return (k - 1.0) * std::log(z) - 0.5 * z - k * std::numbers::ln2 - ln_gamma(k);
}

/// Chi-square density with (possibly non-integer) n degrees of freedom.
inline double chi2_pdf(double z, double n) { return std::exp(log_chi2_pdf(z, n)); }

inline double chi2_cdf(double z, double n) {
  detail::require(n > 0.0 && z >= 0.0, "chi2_cdf: invalid arguments");
  return boost::math::gamma_p(0.5 * n, 0.5 * z);
}

/// log U(a, b, z) for a > 0, z >= 0, from the integral representation
///   U(a, b, z) = 1/Gamma(a) * int_0^inf y^(a-1) (1+y)^(b-a-1) exp(-y z) dy.
///
/// The integral is taken over u = log y, centred on the maximum of the
/// log-integrand, so parameters with a in the hundreds stay in range.
/// est_rel_err is the quadrature's error estimate relative to U, which equals
/// the absolute error of the returned logarithm.
inline SpecFunResult log_tricomi_u(double a, double b, double z) {
  detail::require(a > 0.0 && std::isfinite(a), "tricomi_u: a must be positive");
  detail::require(z >= 0.0 && std::isfinite(z), "tricomi_u: z must be nonnegative");
  detail::require(std::isfinite(b), "tricomi_u: b must be finite");
  if (z == 0.0) {
    if (b < 1.0 && a - b + 1.0 > 0.0) return {ln_gamma(1.0 - b) - ln_gamma(a - b + 1.0), 0.0};
    return {std::numeric_limits<double>::infinity(), 0.0};
  }

  const double c = b - a - 1.0;
  // log of y^a (1+y)^c exp(-y z), i.e. the integrand times the Jacobian y.
  auto g = [=](double u) {
    const double y = std::exp(u);
    const double log1p_y = u > 30.0 ? u + std::log1p(std::exp(-u)) : std::log1p(y);
    return a * u + c * log1p_y - z * y;
  };
  auto dg = [=](double u) {
    const double s = 1.0 / (1.0 + std::exp(-u));
    return a + c * s - z * std::exp(u);
  };
  auto d2g = [=](double u) {
    const double s = 1.0 / (1.0 + std::exp(-u));
    return c * s * (1.0 - s) - z * std::exp(u);
  };

  // dg -> a > 0 as u -> -inf and -> -inf as u -> +inf; bracket a root.
  double lo = std::log(a / z) - 1.0;
  double hi = lo + 2.0;
  while (dg(lo) <= 0.0) lo -= 2.0 * (hi - lo);
  while (dg(hi) >= 0.0) hi += 2.0 * (hi - lo);
  for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + std::abs(lo)); ++i) {
    const double mid = 0.5 * (lo + hi);
    (dg(mid) > 0.0 ? lo : hi) = mid;
  }
  const double peak = 0.5 * (lo + hi);
  const double g_peak = g(peak);
  const double curvature = d2g(peak);
  const double width = curvature < 0.0 ? 1.0 / std::sqrt(-curvature) : 1.0;

  QuadratureOptions opts;
  opts.abs_tol = 0.0;
  opts.rel_tol = 1e-12;
  opts.max_evals = 2'000'000;
  auto integrand = [&](double u) { return std::exp(g(u) - g_peak); };
  const auto r = integrate_real_line(integrand, peak, 2.0 * width, opts);
  const double log_value = g_peak + std::log(r.value) - ln_gamma(a);
  if (!r.converged || !(r.value > 0.0)) {
    throw NumericalError("tricomi_u: quadrature did not converge", std::exp(log_value));
  }
  return {log_value, r.abs_error / r.value};
}

/// log U(a, b, z) given log z, for arguments where z itself under- or
/// overflows; there the leading asymptotic term is exact to double precision.
inline double log_tricomi_u_log_arg(double a, double b, double log_z) {
  detail::require(!std::isnan(log_z), "tricomi_u: log z is NaN");
  const double z = std::exp(log_z);
  if (z >= std::numeric_limits<double>::min() && std::isfinite(z)) return log_tricomi_u(a, b, z).value;
  if (log_z > 0.0) return -a * log_z;
  if (log_z == -std::numeric_limits<double>::infinity()) return log_tricomi_u(a, b, 0.0).value;
  if (b > 1.0) return ln_gamma(b - 1.0) - ln_gamma(a) + (1.0 - b) * log_z;
  if (b < 1.0) return log_tricomi_u(a, b, 0.0).value;
  return std::log(-log_z - boost::math::digamma(a) - 2.0 * std::numbers::egamma) - ln_gamma(a);
}

/// Confluent hypergeometric function of the second kind U(a, b, z), a > 0, z >= 0.
inline SpecFunResult tricomi_u(double a, double b, double z) {
  const auto lr = log_tricomi_u(a, b, z);
  return {std::exp(lr.value), lr.est_rel_err};
}

/// Modified Bessel function of the second kind K_nu(x), x > 0.
inline double bessel_k(double nu, double x) {
  detail::require(x > 0.0 && std::isfinite(x), "bessel_k: x must be positive");
  detail::require(std::isfinite(nu), "bessel_k: order must be finite");
  return boost::math::cyl_bessel_k(std::abs(nu), x);
}

namespace detail {

inline void check_beta_prime(double n, double l) {
  require(n > 0.0 && std::isfinite(n), "beta_prime: N must be positive");
  require(l > 0.0 && std::isfinite(l), "beta_prime: L must be positive");
}

}  // namespace detail

/// log p(x|N,L) for the beta prime law x^(N/2-1) (1+x)^-(N+L/2), i.e. shape
/// parameters alpha = N/2 and beta = (N+L)/2.
inline double log_beta_prime_pdf(double x, double n, double l) {
  detail::check_beta_prime(n, l);
  detail::require(x >= 0.0, "beta_prime_pdf: x must be nonnegative");
  const double alpha = 0.5 * n;
  const double beta = 0.5 * (n + l);
  const double log_norm = ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta);
  if (x == 0.0) {
    if (alpha < 1.0) return std::numeric_limits<double>::infinity();
    if (alpha == 1.0) return log_norm;
    return -std::numeric_limits<double>::infinity();
  }
  return log_norm + (alpha - 1.0) * std::log(x) - (alpha + beta) * std::log1p(x);
}

inline double beta_prime_pdf(double x, double n, double l) {
  return std::exp(log_beta_prime_pdf(x, n, l));
}

inline double beta_prime_cdf(double x, double n, double l) {
  detail::check_beta_prime(n, l);
  detail::require(x >= 0.0, "beta_prime_cdf: x must be nonnegative");
  if (std::isinf(x)) return 1.0;
  return boost::math::ibeta(0.5 * n, 0.5 * (n + l), x / (1.0 + x));
}

namespace detail {

inline void check_log_logistic(double b, double c) {
  require(b > 0.0 && std::isfinite(b), "log_logistic: b must be positive");
  require(c > 0.0 && std::isfinite(c), "log_logistic: c must be positive");
}

}  // namespace detail

inline double log_log_logistic_pdf(double x, double b, double c) {
  detail::check_log_logistic(b, c);
  detail::require(x >= 0.0, "log_logistic_pdf: x must be nonnegative");
  if (x == 0.0) {
    if (b < 1.0) return std::numeric_limits<double>::infinity();
    if (b == 1.0) return -std::log(c);
    return -std::numeric_limits<double>::infinity();
  }
  const double t = std::log(x / c);
  // log(1 + e^(b t)) without overflow
  const double bt = b * t;
  const double softplus = bt > 0.0 ? bt + std::log1p(std::exp(-bt)) : std::log1p(std::exp(bt));
  return std::log(b / c) + (b - 1.0) * t - 2.0 * softplus;
}

/// Log-logistic density (b/c)(x/c)^(b-1) / (1 + (x/c)^b)^2.
inline double log_logistic_pdf(double x, double b, double c) {
  return std::exp(log_log_logistic_pdf(x, b, c));
}

inline double log_logistic_cdf(double x, double b, double c) {
  detail::check_log_logistic(b, c);
  detail::require(x >= 0.0, "log_logistic_cdf: x must be nonnegative");
  if (x == 0.0) return 0.0;
  return 1.0 / (1.0 + std::pow(x / c, -b));
}

}  // namespace ensemble_forge
