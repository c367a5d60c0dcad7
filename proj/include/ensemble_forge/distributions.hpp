#pragma once

// Closed-form densities of the beta prime (chi2_(N+L)) deformed Wishart
// ensemble. Sigma enters as N Sigma / eta throughout.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <numbers>

#include "ensemble_forge/covariance.hpp"
#include "ensemble_forge/deformation.hpp"
#include "ensemble_forge/error.hpp"
#include "ensemble_forge/quadrature.hpp"
#include "ensemble_forge/specfun.hpp"

namespace ensemble_forge {

struct EnsembleParams {
  double n = 1.0;
  double l = 1.0;
  CovarianceMatrix sigma;
  EigenBasis basis;  // of sigma.matrix
  bool integer_n = false;

  static EnsembleParams make(double n, double l, const Eigen::MatrixXd& sigma, bool integer_n = false) {
    detail::require(n > 0.0 && std::isfinite(n), "EnsembleParams: N must be positive");
    detail::require(l > 0.0 && std::isfinite(l), "EnsembleParams: L must be positive");
    detail::require(sigma.rows() >= 1 && sigma.rows() == sigma.cols(), "EnsembleParams: Sigma must be square");
    detail::require(sigma.isApprox(sigma.transpose(), 1e-12), "EnsembleParams: Sigma must be symmetric");
    if (integer_n) {
      detail::require(n == std::round(n), "EnsembleParams: integer-flagged N must be an integer");
    }
    EnsembleParams ep;
    ep.n = n;
    ep.l = l;
    ep.sigma.matrix = sigma;
    ep.basis = eigendecompose(sigma);
    ep.integer_n = integer_n;
    return ep;
  }

  static EnsembleParams identity(std::size_t k, double n, double l, bool integer_n = false) {
    return make(n, l, Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)),
                integer_n);
  }

  std::size_t k() const { return static_cast<std::size_t>(sigma.matrix.rows()); }
};

namespace detail {

inline int integer_dof(double n, const char* who) {
  if (n != std::round(n) || n < 1.0) {
    throw InvalidArgument(std::string(who) + ": N must be an integer >= 1 for a K x N matrix");
  }
  return static_cast<int>(n);
}

/// log of Gamma(N + L/2) Gamma(a) / (Gamma(N/2) Gamma((N+L)/2)), shared by
/// every compound return density; a is the first Tricomi parameter.
inline double compound_log_gammas(double n, double l, double a) {
  return ln_gamma(n + 0.5 * l) + ln_gamma(a) - ln_gamma(0.5 * n) - ln_gamma(0.5 * (n + l));
}

}  // namespace detail

/// log of the algebraic deformed Wishart density
///   Gamma((N+NK+L)/2) / (Gamma((N+L)/2) det^(N/2)(pi N Sigma)) (1 + Tr A^T Sigma^-1 A / N)^(-(N+NK+L)/2).
inline double deformed_wishart_logpdf(const Eigen::MatrixXd& a, const EnsembleParams& ep) {
  const int n_int = detail::integer_dof(ep.n, "deformed_wishart_logpdf");
  const auto k = static_cast<double>(ep.k());
  detail::require(a.rows() == static_cast<Eigen::Index>(ep.k()) && a.cols() == n_int,
                  "deformed_wishart_logpdf: A must be K x N");
  double t = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) t += ep.basis.quadratic_form(a.col(j));
  const double n = ep.n;
  const double power = 0.5 * (n + n * k + ep.l);
  return ln_gamma(power) - ln_gamma(0.5 * (n + ep.l)) -
         0.5 * n * (k * std::log(std::numbers::pi * n) + ep.basis.log_det()) - power * std::log1p(t / n);
}

/// log of the ensemble-averaged return density <g>(r | Sigma, N, L).
inline double log_averaged_pdf(const Eigen::VectorXd& r, const EnsembleParams& ep) {
  detail::require(r.size() == static_cast<Eigen::Index>(ep.k()), "averaged_pdf: r must have length K");
  const auto k = static_cast<double>(ep.k());
  const double n = ep.n, l = ep.l;
  const double a = 0.5 * (n + k + l);
  const double b = 0.5 * (k - n + 2.0);
  const double q = ep.basis.quadratic_form(r);
  return detail::compound_log_gammas(n, l, a) - 0.5 * k * std::log(2.0 * std::numbers::pi) -
         0.5 * ep.basis.log_det() + log_tricomi_u(a, b, 0.5 * q).value;
}

inline double averaged_pdf(const Eigen::VectorXd& r, const EnsembleParams& ep) {
  return std::exp(log_averaged_pdf(r, ep));
}

/// Density of one rotated and scaled component r~_k.
inline double marginal_pdf(double r_tilde, double n, double l) {
  detail::require(n > 0.0 && l > 0.0, "marginal_pdf: N and L must be positive");
  const double a = 0.5 * (n + l + 1.0);
  const double b = 0.5 * (3.0 - n);
  return std::exp(detail::compound_log_gammas(n, l, a) - 0.5 * std::log(2.0 * std::numbers::pi) +
                  log_tricomi_u_log_arg(a, b, 2.0 * std::log(std::abs(r_tilde)) - std::numbers::ln2));
}

/// log density of the generalized radius rho = sqrt(r^T Sigma^-1 r).
inline double log_radial_pdf(double rho, std::size_t k_dim, double n, double l) {
  detail::require(rho >= 0.0, "radial_pdf: rho must be nonnegative");
  detail::require(k_dim >= 1, "radial_pdf: K must be >= 1");
  detail::require(n > 0.0 && l > 0.0, "radial_pdf: N and L must be positive");
  const auto k = static_cast<double>(k_dim);
  if (rho == 0.0 && k_dim > 1) return -std::numeric_limits<double>::infinity();
  const double a = 0.5 * (n + k + l);
  const double b = 0.5 * (k - n + 2.0);
  const double log_rho_power = k_dim > 1 ? (k - 1.0) * std::log(rho) : 0.0;
  return detail::compound_log_gammas(n, l, a) - (0.5 * k - 1.0) * std::numbers::ln2 - ln_gamma(0.5 * k) +
         log_rho_power + log_tricomi_u_log_arg(a, b, 2.0 * std::log(rho) - std::numbers::ln2);
}

inline double radial_pdf(double rho, std::size_t k_dim, double n, double l) {
  return std::exp(log_radial_pdf(rho, k_dim, n, l));
}

inline double radial_pdf(double rho, const EnsembleParams& ep) { return radial_pdf(rho, ep.k(), ep.n, ep.l); }

/// Marginal of the non-deformed ensemble: the Gaussian compounded with the
/// delta-deformation variance law x = z / N, z ~ chi2_N, which keeps the
/// second moment at one.
inline double baseline_marginal_pdf(double r_tilde, double n) {
  detail::require(n > 0.0 && std::isfinite(n), "baseline_marginal_pdf: N must be positive");
  const double r2 = r_tilde * r_tilde;
  auto integrand = [&](double x) {
    return std::exp(std::log(n) + log_chi2_pdf(n * x, n) - 0.5 * std::log(2.0 * std::numbers::pi * x) -
                    0.5 * r2 / x);
  };
  const double scale = detail::bulk_location(integrand);
  return integrate_half_line_or_throw(integrand, scale, detail::tight_quadrature(), "baseline_marginal_pdf");
}

/// Sigma^(d) = N / (N + L - 2) Sigma.
inline CovarianceMatrix sigma_deformed(const EnsembleParams& ep) {
  CovarianceMatrix out = ep.sigma;
  out.matrix *= sigma_deformed_factor(ep.n, ep.l);
  return out;
}

}  // namespace ensemble_forge
