#pragma once

// Deformation pairs (p, f) of the deformed Wishart ensemble.
//
// f(eta) is the ensemble deformation function: the mixing density of the
// inverse scale eta in w(A | N Sigma / eta). p(x) is the amplitude
// deformation function: the density of the variance scale x = z / eta,
// z ~ chi2_N, in the compound Gaussian g(r | x Sigma). They are related by
//
//   p(x) = x^(N/2-1) / (2^(N/2) Gamma(N/2)) int_0^inf f(eta) eta^(N/2) exp(-eta x / 2) deta,
//
// a Laplace transform. Only the closed-form inversions are provided
// (beta prime p <-> chi2_(N+L) f); everything else goes through quadrature
// in the forward direction.

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ensemble_forge/covariance.hpp"
#include "ensemble_forge/error.hpp"
#include "ensemble_forge/goodness.hpp"
#include "ensemble_forge/marketdata.hpp"
#include "ensemble_forge/optimize.hpp"
#include "ensemble_forge/quadrature.hpp"
#include "ensemble_forge/specfun.hpp"

namespace ensemble_forge {

class DeformationModel;

struct BetaPrimeModel {
  double n;
  double l;
};
struct LogLogisticModel {
  double b;
  double c;
};
/// f(eta) = delta(eta - 1) in the N Sigma / eta convention: the non-deformed ensemble.
struct DeltaModel {};
struct ChiSqModel {
  double dof;
};
/// f^(eta^) = int h(xi)/xi f(eta^/xi) dxi.
struct ComposedModel {
  std::shared_ptr<const DeformationModel> base;
  std::shared_ptr<const DeformationModel> h;
};

class DeformationModel {
 public:
  using Kind = std::variant<BetaPrimeModel, LogLogisticModel, DeltaModel, ChiSqModel, ComposedModel>;

  static DeformationModel beta_prime(double n, double l) {
    detail::require(n > 0.0 && l > 0.0 && std::isfinite(n) && std::isfinite(l),
                    "BetaPrime: N and L must be positive");
    return DeformationModel(BetaPrimeModel{n, l});
  }
  static DeformationModel log_logistic(double b, double c) {
    detail::require(b > 0.0 && c > 0.0 && std::isfinite(b) && std::isfinite(c),
                    "LogLogistic: b and c must be positive");
    return DeformationModel(LogLogisticModel{b, c});
  }
  static DeformationModel delta() { return DeformationModel(DeltaModel{}); }
  static DeformationModel chi_sq(double dof) {
    detail::require(dof > 0.0 && std::isfinite(dof), "ChiSq: degrees of freedom must be positive");
    return DeformationModel(ChiSqModel{dof});
  }
  static DeformationModel composed(DeformationModel base, DeformationModel h) {
    return DeformationModel(ComposedModel{std::make_shared<const DeformationModel>(std::move(base)),
                                          std::make_shared<const DeformationModel>(std::move(h))});
  }

  const Kind& kind() const noexcept { return kind_; }

  template <class T>
  bool is() const noexcept {
    return std::holds_alternative<T>(kind_);
  }
  template <class T>
  const T& as() const {
    return std::get<T>(kind_);
  }

  std::string name() const {
    return std::visit(
        [](const auto& m) -> std::string {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, BetaPrimeModel>) return "beta_prime";
          if constexpr (std::is_same_v<T, LogLogisticModel>) return "log_logistic";
          if constexpr (std::is_same_v<T, DeltaModel>) return "delta";
          if constexpr (std::is_same_v<T, ChiSqModel>) return "chi_sq";
          if constexpr (std::is_same_v<T, ComposedModel>) return "composed";
        },
        kind_);
  }

 private:
  explicit DeformationModel(Kind k) : kind_(std::move(k)) {}
  Kind kind_;
};

double compose_h(const DeformationModel& f, const DeformationModel& h, double eta_hat);

/// Pointwise density of a model read as a law on (0, inf). Delta has none.
inline double density(const DeformationModel& model, double t) {
  detail::require(t >= 0.0, "density: argument must be nonnegative");
  return std::visit(
      [t](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BetaPrimeModel>) return beta_prime_pdf(t, m.n, m.l);
        if constexpr (std::is_same_v<T, LogLogisticModel>) return log_logistic_pdf(t, m.b, m.c);
        if constexpr (std::is_same_v<T, ChiSqModel>) return chi2_pdf(t, m.dof);
        if constexpr (std::is_same_v<T, ComposedModel>) return compose_h(*m.base, *m.h, t);
        if constexpr (std::is_same_v<T, DeltaModel>) {
          throw InvalidArgument("density: the delta deformation has no pointwise density");
          return 0.0;
        }
      },
      model.kind());
}

namespace detail {

/// Locate the bulk of a positive integrand on (0, inf) by scanning log x.
template <class F>
double bulk_location(F&& g) {
  double best_u = 0.0;
  double best = -1.0;
  for (double u = -40.0; u <= 40.0; u += 0.25) {
    const double x = std::exp(u);
    const double v = g(x) * x;
    if (std::isfinite(v) && v > best) {
      best = v;
      best_u = u;
    }
  }
  return std::exp(best_u);
}

inline QuadratureOptions tight_quadrature() {
  QuadratureOptions q;
  q.abs_tol = 0.0;
  q.rel_tol = 1e-11;
  q.max_evals = 2'000'000;
  return q;
}

}  // namespace detail

/// Deformation-function composition for a non-Gaussian static distribution
/// (h-deformation), f^(eta^) = int_0^inf h(xi)/xi f(eta^/xi) dxi.
inline double compose_h(const DeformationModel& f, const DeformationModel& h, double eta_hat) {
  detail::require(eta_hat > 0.0, "compose_h: eta_hat must be positive");
  if (h.is<DeltaModel>() && f.is<DeltaModel>()) {
    throw InvalidArgument("compose_h: delta composed with delta has no pointwise density");
  }
  if (h.is<DeltaModel>()) return density(f, eta_hat);
  if (f.is<DeltaModel>()) return density(h, eta_hat);
  auto integrand = [&](double xi) {
    const double hv = density(h, xi);
    if (hv == 0.0) return 0.0;
    return hv / xi * density(f, eta_hat / xi);
  };
  const double scale = detail::bulk_location(integrand);
  return integrate_half_line_or_throw(integrand, scale, detail::tight_quadrature(), "compose_h");
}

/// Closed form of compose_h for f = chi2_(N+L), h = chi2_M: the density of a
/// product of two independent chi-square variables,
///   eta^^((N+L+M)/4 - 1) K_((N+L-M)/2)(sqrt(eta^)) / (2^((N+L+M)/2 - 1) Gamma((N+L)/2) Gamma(M/2)).
inline double fhat_chi2_chi2(double n, double l, double m, double eta_hat) {
  detail::require(n + l > 0.0 && m > 0.0, "fhat_chi2_chi2: N+L and M must be positive");
  detail::require(eta_hat > 0.0, "fhat_chi2_chi2: eta_hat must be positive");
  const double nl = n + l;
  const double k = bessel_k(0.5 * (nl - m), std::sqrt(eta_hat));
  if (k == 0.0) return 0.0;
  const double log_value = (0.25 * (nl + m) - 1.0) * std::log(eta_hat) + std::log(k) -
                           (0.5 * (nl + m) - 1.0) * std::numbers::ln2 - ln_gamma(0.5 * nl) - ln_gamma(0.5 * m);
  return std::exp(log_value);
}

enum class LaplaceRoute {
  automatic,   // closed form when the model has one
  quadrature,  // always integrate (delta still collapses exactly)
};

/// p(x) induced by an ensemble deformation function f for model dof N.
inline double p_from_f(const DeformationModel& f, double n, double x, LaplaceRoute route = LaplaceRoute::automatic) {
  detail::require(n > 0.0, "p_from_f: N must be positive");
  detail::require(x >= 0.0, "p_from_f: x must be nonnegative");
  if (f.is<DeltaModel>()) return chi2_pdf(x, n);
  if (f.is<LogLogisticModel>()) {
    throw InvalidArgument("p_from_f: a log-logistic model describes p, not f");
  }
  const double k = 0.5 * n;
  if (route == LaplaceRoute::automatic && f.is<ChiSqModel>()) {
    // chi2_d mixed against the Gaussian gives beta prime with shapes (N/2, d/2).
    const double d = f.as<ChiSqModel>().dof;
    const double beta = 0.5 * d;
    if (x == 0.0) {
      if (k < 1.0) return std::numeric_limits<double>::infinity();
      if (k > 1.0) return 0.0;
    }
    const double log_x = x == 0.0 ? 0.0 : std::log(x);
    return std::exp(ln_gamma(k + beta) - ln_gamma(k) - ln_gamma(beta) + (k - 1.0) * log_x -
                    (k + beta) * std::log1p(x));
  }
  if (x == 0.0) {
    if (k > 1.0) return 0.0;
    if (k < 1.0) return std::numeric_limits<double>::infinity();
    // N = 2: p(0) = E_f[eta] / 2.
    auto mean_integrand = [&](double eta) { return density(f, eta) * eta; };
    const double scale = detail::bulk_location(mean_integrand);
    return 0.5 * integrate_half_line_or_throw(mean_integrand, scale, detail::tight_quadrature(), "p_from_f");
  }
  // Factor out the peak of eta^(N/2) exp(-eta x / 2), which sits at eta = N / x.
  const double shift = k * std::log(n / x) - k;
  auto integrand = [&](double eta) {
    const double fv = density(f, eta);
    if (fv == 0.0) return 0.0;
    return fv * std::exp(k * std::log(eta) - 0.5 * eta * x - shift);
  };
  const double scale = detail::bulk_location(integrand);
  const double integral =
      integrate_half_line_or_throw(integrand, scale, detail::tight_quadrature(), "p_from_f");
  const double log_prefactor = (k - 1.0) * std::log(x) - k * std::numbers::ln2 - ln_gamma(k);
  return std::exp(log_prefactor + shift) * integral;
}

/// Closed-form inverse Laplace transform of the beta prime p: f = chi2_(N+L).
inline DeformationModel f_from_p_betaprime(double n, double l) {
  detail::require(n > 0.0 && l > 0.0, "f_from_p_betaprime: N and L must be positive");
  return DeformationModel::chi_sq(n + l);
}

/// Scalar s with Sigma^(d) = s Sigma for the beta prime ensemble: N / (N + L - 2).
inline double sigma_deformed_factor(double n, double l) {
  detail::require(n > 0.0 && l > 0.0, "sigma_deformed_factor: N and L must be positive");
  if (n + l <= 2.0) {
    throw InvalidArgument("sigma_deformed_factor: N+L <= 2, first moment of x diverges");
  }
  return n / (n + l - 2.0);
}

// ---------------------------------------------------------------------------
// Fitting

struct FitReport {
  DeformationModel model = DeformationModel::delta();
  std::size_t n_samples = 0;
  double log_likelihood = 0.0;
  /// Aligned with the model parameters: (N, L) for beta prime, (b, c) for log-logistic.
  std::vector<double> param_std_errors;
  bool integer_constrained = false;
  double ks = 0.0;
  std::optional<std::size_t> delta_t;
};

namespace detail {

inline void check_fit_sample(std::span<const double> x, const char* who) {
  const std::string name(who);
  if (x.size() < 100) {
    throw InvalidArgument(name + ": need at least 100 samples, got " + std::to_string(x.size()));
  }
  double lo = x[0], hi = x[0];
  for (double v : x) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidArgument(name + ": samples must be finite and nonnegative");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo == hi) throw InvalidArgument("degenerate sample: all values equal");
  if (lo == 0.0) throw InvalidArgument("degenerate sample: contains zero variances");
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= sorted.size()) return sorted.back();
  return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
}

struct BetaPrimeStats {
  double n = 0.0;
  double mean_log_x = 0.0;
  double mean_log1p_x = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

inline BetaPrimeStats beta_prime_stats(std::span<const double> x) {
  BetaPrimeStats s;
  s.n = static_cast<double>(x.size());
  for (double v : x) {
    s.mean_log_x += std::log(v);
    s.mean_log1p_x += std::log1p(v);
    s.mean += v;
  }
  s.mean_log_x /= s.n;
  s.mean_log1p_x /= s.n;
  s.mean /= s.n;
  for (double v : x) s.variance += (v - s.mean) * (v - s.mean);
  s.variance /= s.n;
  return s;
}

/// Log-likelihood in shape parameters alpha = N/2, beta = (N+L)/2.
inline double beta_prime_loglik(const BetaPrimeStats& s, double alpha, double beta) {
  return s.n * (std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta) +
                (alpha - 1.0) * s.mean_log_x - (alpha + beta) * s.mean_log1p_x);
}

/// Hessian of the log-likelihood with respect to (N, L).
inline Eigen::Matrix2d beta_prime_hessian_nl(const BetaPrimeStats& s, double n, double l) {
  const double alpha = 0.5 * n;
  const double beta = 0.5 * (n + l);
  const double t_ab = boost::math::trigamma(alpha + beta);
  const double h_aa = s.n * (t_ab - boost::math::trigamma(alpha));
  const double h_bb = s.n * (t_ab - boost::math::trigamma(beta));
  const double h_ab = s.n * t_ab;
  // alpha = N/2, beta = (N+L)/2
  Eigen::Matrix2d h;
  h(0, 0) = 0.25 * (h_aa + 2.0 * h_ab + h_bb);
  h(0, 1) = h(1, 0) = 0.25 * (h_ab + h_bb);
  h(1, 1) = 0.25 * h_bb;
  return h;
}

inline std::vector<double> std_errors_from_hessian(const Eigen::Matrix2d& h) {
  const Eigen::Matrix2d info = -h;
  const Eigen::Matrix2d cov = info.inverse();
  return {std::sqrt(std::max(cov(0, 0), 0.0)), std::sqrt(std::max(cov(1, 1), 0.0))};
}

}  // namespace detail

struct FitOptions {
  NelderMeadOptions optimizer{};
};

/// Maximum-likelihood beta prime fit of p(x | N, L) to pooled variances.
/// With integer_n the likelihood is profiled over integer N around the
/// unconstrained optimum.
inline FitReport fit_beta_prime(std::span<const double> x, bool integer_n = false, const FitOptions& opts = {}) {
  detail::check_fit_sample(x, "fit_beta_prime");
  const auto stats = detail::beta_prime_stats(x);

  // Moment match: mean = a/(b-1), var = a(a+b-1)/((b-2)(b-1)^2).
  double beta0 = 2.0 + stats.mean * (stats.mean + 1.0) / stats.variance;
  double alpha0 = stats.mean * (beta0 - 1.0);
  double n0 = 2.0 * alpha0;
  double l0 = 2.0 * beta0 - n0;
  if (!(n0 > 0.0) || !(l0 > 0.0) || !std::isfinite(n0) || !std::isfinite(l0)) {
    n0 = 4.0;
    l0 = 2.0;
  }

  auto negloglik = [&](const Eigen::VectorXd& theta) {
    const double n = std::exp(theta(0));
    const double l = std::exp(theta(1));
    return -detail::beta_prime_loglik(stats, 0.5 * n, 0.5 * (n + l));
  };
  Eigen::VectorXd start(2);
  start << std::log(n0), std::log(l0);
  const auto nm = nelder_mead(negloglik, start, opts.optimizer);
  if (!nm.converged) {
    throw NumericalError("fit_beta_prime: optimizer did not converge after restart schedule", std::exp(nm.x(0)));
  }
  double n_hat = std::exp(nm.x(0));
  double l_hat = std::exp(nm.x(1));

  // Newton polish in (N, L); the log-likelihood is concave in the shapes.
  for (int it = 0; it < 20; ++it) {
    const double alpha = 0.5 * n_hat;
    const double beta = 0.5 * (n_hat + l_hat);
    const double d_ab = boost::math::digamma(alpha + beta);
    const double g_a = stats.n * (d_ab - boost::math::digamma(alpha) + stats.mean_log_x - stats.mean_log1p_x);
    const double g_b = stats.n * (d_ab - boost::math::digamma(beta) - stats.mean_log1p_x);
    const Eigen::Vector2d grad(0.5 * (g_a + g_b), 0.5 * g_b);
    const Eigen::Matrix2d hess = detail::beta_prime_hessian_nl(stats, n_hat, l_hat);
    Eigen::Vector2d step = -hess.ldlt().solve(grad);
    const double base = detail::beta_prime_loglik(stats, alpha, beta);
    double scale = 1.0;
    bool improved = false;
    for (int k = 0; k < 30; ++k, scale *= 0.5) {
      const double n_try = n_hat + scale * step(0);
      const double l_try = l_hat + scale * step(1);
      if (n_try > 0.0 && l_try > 0.0 &&
          detail::beta_prime_loglik(stats, 0.5 * n_try, 0.5 * (n_try + l_try)) >= base) {
        n_hat = n_try;
        l_hat = l_try;
        improved = true;
        break;
      }
    }
    if (!improved || scale * step.cwiseAbs().maxCoeff() < 1e-12 * (1.0 + n_hat)) break;
  }

  FitReport report;
  report.n_samples = x.size();
  const auto hess = detail::beta_prime_hessian_nl(stats, n_hat, l_hat);
  report.param_std_errors = detail::std_errors_from_hessian(hess);

  if (integer_n) {
    report.integer_constrained = true;
    double best_ll = -std::numeric_limits<double>::infinity();
    double best_n = 1.0, best_l = l_hat;
    const long lo = std::max(1L, static_cast<long>(std::floor(n_hat)) - 2);
    const long hi = static_cast<long>(std::ceil(n_hat)) + 2;
    for (long ni = lo; ni <= hi; ++ni) {
      const double n_int = static_cast<double>(ni);
      auto profile = [&](double log_l) {
        const double l = std::exp(log_l);
        return -detail::beta_prime_loglik(stats, 0.5 * n_int, 0.5 * (n_int + l));
      };
      const double l_opt = std::exp(golden_section(profile, std::log(1e-4), std::log(1e4), 1e-13));
      const double ll = detail::beta_prime_loglik(stats, 0.5 * n_int, 0.5 * (n_int + l_opt));
      if (ll > best_ll) {
        best_ll = ll;
        best_n = n_int;
        best_l = l_opt;
      }
    }
    n_hat = best_n;
    l_hat = best_l;
    const auto h_int = detail::beta_prime_hessian_nl(stats, n_hat, l_hat);
    report.param_std_errors[1] = std::sqrt(1.0 / std::max(-h_int(1, 1), 1e-300));
  }

  report.model = DeformationModel::beta_prime(n_hat, l_hat);
  report.log_likelihood = detail::beta_prime_loglik(stats, 0.5 * n_hat, 0.5 * (n_hat + l_hat));
  report.ks = ks_distance(x, [&](double v) { return beta_prime_cdf(v, n_hat, l_hat); });
  return report;
}

inline FitReport fit_beta_prime(const VarianceSample& vs, bool integer_n = false, const FitOptions& opts = {}) {
  auto r = fit_beta_prime(std::span<const double>(vs.values), integer_n, opts);
  r.delta_t = vs.delta_t;
  return r;
}

/// Least-squares fit of the beta prime density to a log-binned histogram of
/// the sample, for visual comparison with a plotted histogram. Standard
/// errors are the observed-information values at the least-squares optimum.
inline FitReport fit_beta_prime_binned(std::span<const double> x, std::size_t bins = 60,
                                       const FitOptions& opts = {}) {
  detail::check_fit_sample(x, "fit_beta_prime_binned");
  detail::require(bins >= 5, "fit_beta_prime_binned: need at least 5 bins");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = std::log(detail::quantile_sorted(sorted, 0.001));
  const double hi = std::log(detail::quantile_sorted(sorted, 0.999));
  detail::require(hi > lo, "degenerate sample: no spread between extreme quantiles");
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> centers(bins), density(bins, 0.0);
  for (double v : sorted) {
    const double u = std::log(v);
    if (u < lo || u >= hi) continue;
    density[std::min(bins - 1, static_cast<std::size_t>((u - lo) / width))] += 1.0;
  }
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < bins; ++i) {
    const double a = std::exp(lo + width * i), b = std::exp(lo + width * (i + 1));
    centers[i] = std::sqrt(a * b);
    density[i] /= n * (b - a);
  }
  const FitReport mle = fit_beta_prime(x, false, opts);
  const auto& start_model = mle.model.as<BetaPrimeModel>();
  auto sse = [&](const Eigen::VectorXd& theta) {
    const double nn = std::exp(theta(0)), ll = std::exp(theta(1));
    double s = 0.0;
    for (std::size_t i = 0; i < bins; ++i) {
      const double d = density[i] - beta_prime_pdf(centers[i], nn, ll);
      s += d * d;
    }
    return s;
  };
  Eigen::VectorXd start(2);
  start << std::log(start_model.n), std::log(start_model.l);
  NelderMeadOptions nm_opts = opts.optimizer;
  nm_opts.f_tol = 1e-14;
  const auto nm = nelder_mead(sse, start, nm_opts);
  const double n_hat = std::exp(nm.x(0)), l_hat = std::exp(nm.x(1));
  const auto stats = detail::beta_prime_stats(x);
  FitReport report;
  report.model = DeformationModel::beta_prime(n_hat, l_hat);
  report.n_samples = x.size();
  report.log_likelihood = detail::beta_prime_loglik(stats, 0.5 * n_hat, 0.5 * (n_hat + l_hat));
  report.param_std_errors = detail::std_errors_from_hessian(detail::beta_prime_hessian_nl(stats, n_hat, l_hat));
  report.ks = ks_distance(x, [&](double v) { return beta_prime_cdf(v, n_hat, l_hat); });
  return report;
}

namespace detail {

inline double log_logistic_loglik(std::span<const double> x, double b, double c) {
  double sum = 0.0;
  for (double v : x) sum += log_log_logistic_pdf(v, b, c);
  return sum;
}

}  // namespace detail

/// Maximum-likelihood log-logistic fit of p(x | b, c); N = 2b is the implied model dof.
inline FitReport fit_log_logistic(std::span<const double> x, const FitOptions& opts = {}) {
  detail::check_fit_sample(x, "fit_log_logistic");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  // Quartiles of the log-logistic are c 3^(-1/b) and c 3^(1/b).
  const double c0 = detail::quantile_sorted(sorted, 0.5);
  const double spread = std::log(detail::quantile_sorted(sorted, 0.75) / detail::quantile_sorted(sorted, 0.25));
  const double b0 = spread > 0.0 ? 2.0 * std::log(3.0) / spread : 1.0;

  auto negloglik = [&](const Eigen::VectorXd& theta) {
    return -detail::log_logistic_loglik(x, std::exp(theta(0)), std::exp(theta(1)));
  };
  Eigen::VectorXd start(2);
  start << std::log(b0), std::log(c0);
  const auto nm = nelder_mead(negloglik, start, opts.optimizer);
  if (!nm.converged) {
    throw NumericalError("fit_log_logistic: optimizer did not converge after restart schedule", std::exp(nm.x(0)));
  }
  const double b_hat = std::exp(nm.x(0));
  const double c_hat = std::exp(nm.x(1));

  // Observed information by central differences in (b, c).
  const double hb = 1e-4 * b_hat;
  const double hc = 1e-4 * c_hat;
  auto ll = [&](double b, double c) { return detail::log_logistic_loglik(x, b, c); };
  const double f0 = ll(b_hat, c_hat);
  Eigen::Matrix2d h;
  h(0, 0) = (ll(b_hat + hb, c_hat) - 2.0 * f0 + ll(b_hat - hb, c_hat)) / (hb * hb);
  h(1, 1) = (ll(b_hat, c_hat + hc) - 2.0 * f0 + ll(b_hat, c_hat - hc)) / (hc * hc);
  h(0, 1) = h(1, 0) = (ll(b_hat + hb, c_hat + hc) - ll(b_hat + hb, c_hat - hc) - ll(b_hat - hb, c_hat + hc) +
                       ll(b_hat - hb, c_hat - hc)) /
                      (4.0 * hb * hc);

  FitReport report;
  report.model = DeformationModel::log_logistic(b_hat, c_hat);
  report.n_samples = x.size();
  report.log_likelihood = f0;
  report.param_std_errors = detail::std_errors_from_hessian(h);
  report.ks = ks_distance(x, [&](double v) { return log_logistic_cdf(v, b_hat, c_hat); });
  return report;
}

inline FitReport fit_log_logistic(const VarianceSample& vs, const FitOptions& opts = {}) {
  auto r = fit_log_logistic(std::span<const double>(vs.values), opts);
  r.delta_t = vs.delta_t;
  return r;
}

// ---------------------------------------------------------------------------
// Pipeline

enum class FitModel { beta_prime, log_logistic };

struct PipelineOptions {
  std::size_t agg_window = 5;
  LocalVarianceOptions local{};
  FitModel model = FitModel::beta_prime;
  bool integer_n = false;
  std::size_t stride = 1;
  FitOptions fit{};
};

/// Returns -> total demeaning -> total covariance -> eigenbasis rotation and
/// rescaling -> pooled block variances.
inline VarianceSample extract_variances(const ReturnPanel& returns, std::size_t agg_window,
                                        LocalVarianceOptions local = {}) {
  const ReturnPanel centered = demean(returns, DemeanWindow::total());
  const CovarianceMatrix sigma = total_covariance(centered);
  const EigenBasis basis = eigendecompose(sigma);
  const NormalizedPanel normalized = rotate_and_scale(centered, basis);
  return local_variances(normalized, agg_window, local);
}

inline FitReport fit_panel(const ReturnPanel& returns, const PipelineOptions& opts = {}) {
  const VarianceSample vs = extract_variances(returns, opts.agg_window, opts.local);
  FitReport report = opts.model == FitModel::beta_prime ? fit_beta_prime(vs, opts.integer_n, opts.fit)
                                                        : fit_log_logistic(vs, opts.fit);
  report.delta_t = returns.horizon;
  return report;
}

/// The full pipeline once per return horizon, starting from prices.
inline std::vector<FitReport> fit_over_horizons(const PriceTable& prices, std::span<const std::size_t> dts,
                                                const PipelineOptions& opts = {}) {
  std::vector<FitReport> reports;
  reports.reserve(dts.size());
  for (std::size_t dt : dts) reports.push_back(fit_panel(compute_returns(prices, dt, opts.stride), opts));
  return reports;
}

/// The full pipeline once per return horizon, starting from raw one-day
/// returns that are compounded to each horizon.
inline std::vector<FitReport> fit_over_horizons(const ReturnPanel& daily, std::span<const std::size_t> dts,
                                                const PipelineOptions& opts = {}) {
  std::vector<FitReport> reports;
  reports.reserve(dts.size());
  for (std::size_t dt : dts) {
    reports.push_back(fit_panel(dt == 1 && opts.stride == 1 ? daily : aggregate_returns(daily, dt, opts.stride), opts));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Permissibility

enum class Verdict { permissible, non_permissible, inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::permissible:
      return "permissible";
    case Verdict::non_permissible:
      return "non-permissible";
    case Verdict::inconclusive:
      return "inconclusive";
  }
  return "inconclusive";
}

struct PermissibilityOptions {
  /// Grid bounds; zero selects [s0/100, 100 s0] around the typical trace s0.
  double s_min = 0.0;
  double s_max = 0.0;
  std::size_t points = 400;
  double negativity_tol = 1e-10;  // relative to max |u|
  double imag_tol = 1e-8;         // relative to max |u|
};

struct PermissibilityReport {
  std::vector<double> s_grid;
  std::vector<double> u_values;
  double min_value = 0.0;
  double max_abs_value = 0.0;
  Verdict verdict = Verdict::inconclusive;
  double max_imag_residual = 0.0;
};

namespace detail {

inline std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  std::vector<double> grid(points);
  if (points == 1) {
    grid[0] = lo;
    return grid;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < points; ++i) grid[i] = std::exp(a + (b - a) * static_cast<double>(i) / (points - 1));
  return grid;
}

/// u(s) for the log-logistic p with even N = 2b, from the pole expansion of
/// 1 / (c^(N/2) + s^(N/2))^2. Returns the complex sum; its imaginary part
/// should vanish.
inline std::complex<double> log_logistic_trace_density(int n_dof, double c, int k, double s) {
  using cplx = std::complex<double>;
  const int half = n_dof / 2;
  const long m = static_cast<long>(k - 1) * half;  // derivative order (K-1) N/2
  const double kn2 = static_cast<double>(k) * half;

  // Far from the poles the residue terms cancel to O(s^-(1+N/2)); there the
  // expansion of the kernel in powers of (c/s)^(N/2) is used instead, once its
  // terms shrink geometrically from the first one.
  {
    const double b = half, md = static_cast<double>(m);
    auto log_term = [&](double j) {
      const double q = b * (j + 2.0);
      return std::log(j + 1.0) + std::lgamma(q + md) - std::lgamma(q) + b * (j + 1.0) * std::log(c / s);
    };
    if (log_term(1.0) - log_term(0.0) < -std::numbers::ln2) {
      const double lead = log_term(0.0);
      double sum = 0.0;
      for (int j = 0; j < 100000; ++j) {
        const double term = std::exp(log_term(j) - lead);
        sum += (j % 2 == 0 ? term : -term);
        if (term < 1e-18 * std::abs(sum)) break;
      }
      return cplx(std::exp(std::lgamma(b) - std::lgamma(kn2) + std::log(b) - std::log(s) + lead) * sum, 0.0);
    }
  }
  std::vector<cplx> poles(static_cast<std::size_t>(half));
  for (int n = 1; n <= half; ++n) {
    poles[static_cast<std::size_t>(n - 1)] =
        c * std::exp(cplx(0.0, 2.0 * std::numbers::pi * (2.0 * n + 1.0) / n_dof));
  }
  const double log_prefactor = std::log(static_cast<double>(n_dof)) + half * std::log(c) +
                               std::lgamma(static_cast<double>(half)) - std::numbers::ln2 - std::lgamma(kn2);
  const double log_s_power = (kn2 - 1.0) * std::log(s);
  const double lg2 = std::lgamma(static_cast<double>(m) + 2.0);
  const double lg1 = std::lgamma(static_cast<double>(m) + 1.0);
  cplx total = 0.0;
  for (std::size_t n = 0; n < poles.size(); ++n) {
    cplx log_prod = 0.0;  // log prod_{m != n} (a_n - a_m)^2
    cplx inv_sum = 0.0;   // sum_{l != n} 1 / (a_n - a_l)
    for (std::size_t j = 0; j < poles.size(); ++j) {
      if (j == n) continue;
      const cplx diff = poles[n] - poles[j];
      log_prod += 2.0 * std::log(diff);
      inv_sum += 1.0 / diff;
    }
    const cplx log_dist = std::log(s - poles[n]);
    const cplx common = log_prefactor + log_s_power - log_prod;
    total += std::exp(common + lg2 - (static_cast<double>(m) + 2.0) * log_dist);
    total -= 2.0 * inv_sum * std::exp(common + lg1 - (static_cast<double>(m) + 1.0) * log_dist);
  }
  return total;
}

}  // namespace detail

/// Evaluate the trace distribution u(s) of s = Tr(A^T Sigma^-1 A) / N that a
/// candidate p induces in K dimensions, and decide whether the ensemble is a
/// genuine (nonnegative) distribution.
///
/// Log-logistic p with even N = 2b goes through the closed pole expansion in
/// complex arithmetic. Beta prime p induces s ~ BetaPrime(KN/2, (N+L)/2)
/// exactly.
inline PermissibilityReport permissibility_check(const DeformationModel& model, int k,
                                                 const PermissibilityOptions& opts = {}) {
  detail::require(k >= 2, "permissibility_check: K must be >= 2");
  detail::require(opts.points >= 1, "permissibility_check: need at least one grid point");
  PermissibilityReport report;

  double s0 = 0.0;
  int n_dof = 0;
  double c = 1.0;
  if (model.is<LogLogisticModel>()) {
    const auto& ll = model.as<LogLogisticModel>();
    const double n_real = 2.0 * ll.b;
    const double rounded = std::round(n_real);
    if (std::abs(n_real - rounded) > 1e-9 || rounded < 1.0) {
      throw InvalidArgument("permissibility_check: N = 2b must be a positive integer");
    }
    n_dof = static_cast<int>(rounded);
    if (n_dof % 2 != 0) throw InvalidArgument("permissibility_check: odd N is not supported");
    c = ll.c;
    s0 = k * c;
  } else if (model.is<BetaPrimeModel>()) {
    const auto& bp = model.as<BetaPrimeModel>();
    s0 = k * bp.n / (bp.n + bp.l);
  } else {
    throw InvalidArgument("permissibility_check: model must be log_logistic or beta_prime");
  }

  const double lo = opts.s_min > 0.0 ? opts.s_min : s0 / 100.0;
  const double hi = opts.s_max > 0.0 ? opts.s_max : s0 * 100.0;
  detail::require(hi >= lo, "permissibility_check: s_max must be >= s_min");
  report.s_grid = detail::log_grid(lo, hi, opts.points);
  report.u_values.resize(report.s_grid.size());
  std::vector<double> imag(report.s_grid.size(), 0.0);

  if (model.is<LogLogisticModel>()) {
    for (std::size_t i = 0; i < report.s_grid.size(); ++i) {
      const auto u = detail::log_logistic_trace_density(n_dof, c, k, report.s_grid[i]);
      report.u_values[i] = u.real();
      imag[i] = std::abs(u.imag());
    }
  } else {
    const auto& bp = model.as<BetaPrimeModel>();
    const double alpha = 0.5 * k * bp.n;
    const double beta = 0.5 * (bp.n + bp.l);
    const double log_norm = ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta);
    for (std::size_t i = 0; i < report.s_grid.size(); ++i) {
      const double s = report.s_grid[i];
      report.u_values[i] = std::exp(log_norm + (alpha - 1.0) * std::log(s) - (alpha + beta) * std::log1p(s));
    }
  }

  report.min_value = *std::min_element(report.u_values.begin(), report.u_values.end());
  for (double u : report.u_values) report.max_abs_value = std::max(report.max_abs_value, std::abs(u));
  report.max_imag_residual = *std::max_element(imag.begin(), imag.end());

  const bool finite = std::isfinite(report.max_abs_value) && std::isfinite(report.max_imag_residual) &&
                      std::isfinite(report.min_value);
  if (!finite || report.max_abs_value == 0.0 ||
      report.max_imag_residual >= opts.imag_tol * report.max_abs_value) {
    report.verdict = Verdict::inconclusive;
  } else if (report.min_value < -opts.negativity_tol * report.max_abs_value) {
    report.verdict = Verdict::non_permissible;
  } else {
    report.verdict = Verdict::permissible;
  }
  return report;
}

}  // namespace ensemble_forge
