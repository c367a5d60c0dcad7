#pragma once

// Globally adaptive Gauss-Kronrod (10/21) quadrature with interval maps for
// the half line and the real line.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <algorithm>
#include <string>
#include <vector>

#include "ensemble_forge/error.hpp"

namespace ensemble_forge {

struct QuadratureOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-8;
  std::size_t max_evals = 10'000'000;
  /// Number of equal panels the interval is split into before refinement.
  int initial_panels = 8;
};

struct QuadratureResult {
  double value = 0.0;
  double abs_error = 0.0;
  std::size_t evals = 0;
  bool converged = false;
};

namespace detail {

struct Panel {
  double a;
  double b;
  double value;
  double error;
  bool operator<(const Panel& other) const { return error < other.error; }
};

template <class F>
Panel gk21(F& f, double a, double b) {
  using Kronrod = boost::math::quadrature::gauss_kronrod<double, 21>;
  using Gauss = boost::math::quadrature::gauss<double, 10>;
  const auto& x = Kronrod::abscissa();
  const auto& wk = Kronrod::weights();
  const auto& wg = Gauss::weights();

  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = wk[0] * fc;
  double gauss = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double dx = half * x[i];
    const double pair = f(center - dx) + f(center + dx);
    kronrod += wk[i] * pair;
    // The 10-point Gauss nodes are the odd Kronrod abscissae.
    if (i % 2 == 1) gauss += wg[i / 2] * pair;
  }
  kronrod *= half;
  gauss *= half;
  return Panel{a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

/// Integrate f over the finite interval [a, b].
///
/// Refinement always bisects the panel with the largest error estimate, and
/// stops once the summed estimate is below max(abs_tol, rel_tol * |I|) or the
/// evaluation budget is exhausted (converged = false in that case). Panel
/// sums are accumulated in a fixed order, so results are deterministic.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, const QuadratureOptions& opts = {}) {
  detail::require(std::isfinite(a) && std::isfinite(b), "integrate: interval must be finite");
  QuadratureResult result;
  if (a == b) {
    result.converged = true;
    return result;
  }
  constexpr std::size_t kEvalsPerPanel = 21;
  std::vector<detail::Panel> heap;
  const int panels = opts.initial_panels > 0 ? opts.initial_panels : 1;
  const double width = (b - a) / panels;
  for (int i = 0; i < panels; ++i) {
    const double lo = a + i * width;
    const double hi = (i + 1 == panels) ? b : a + (i + 1) * width;
    heap.push_back(detail::gk21(f, lo, hi));
    result.evals += kEvalsPerPanel;
  }
  std::make_heap(heap.begin(), heap.end());

  // Exact totals in storage order; the running sums below drift slightly.
  auto exact_totals = [&heap](double& value, double& error) {
    value = 0.0;
    error = 0.0;
    for (const auto& p : heap) {
      value += p.value;
      error += p.error;
    }
  };
  auto tolerance = [&opts](double value) {
    return std::max(opts.abs_tol, opts.rel_tol * std::abs(value));
  };

  double value = 0.0;
  double error = 0.0;
  exact_totals(value, error);
  while (true) {
    if (!std::isfinite(value)) {
      throw NumericalError("integrate: integrand produced a non-finite value", value);
    }
    if (error <= tolerance(value)) {
      exact_totals(value, error);
      if (error <= tolerance(value)) {
        result.converged = true;
        break;
      }
    }
    if (result.evals + 2 * kEvalsPerPanel > opts.max_evals) break;
    std::pop_heap(heap.begin(), heap.end());
    const detail::Panel worst = heap.back();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      // Cannot split further in double precision.
      std::push_heap(heap.begin(), heap.end());
      break;
    }
    heap.pop_back();
    const detail::Panel left = detail::gk21(f, worst.a, mid);
    const detail::Panel right = detail::gk21(f, mid, worst.b);
    heap.push_back(left);
    std::push_heap(heap.begin(), heap.end());
    heap.push_back(right);
    std::push_heap(heap.begin(), heap.end());
    result.evals += 2 * kEvalsPerPanel;
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
  }
  exact_totals(value, error);
  result.value = value;
  result.abs_error = error;
  return result;
}

/// Integrate f over the whole real line. The map u = center + scale * t / (1 - t^2)
/// sends t in (-1, 1) onto the line; center and scale should roughly locate the bulk.
template <class F>
QuadratureResult integrate_real_line(F&& f, double center = 0.0, double scale = 1.0,
                                     const QuadratureOptions& opts = {}) {
  detail::require(scale > 0.0, "integrate_real_line: scale must be positive");
  auto mapped = [&](double t) {
    const double d = 1.0 - t * t;
    const double u = center + scale * t / d;
    const double jac = scale * (1.0 + t * t) / (d * d);
    if (!std::isfinite(u) || !std::isfinite(jac)) return 0.0;
    const double v = f(u);
    return v == 0.0 ? 0.0 : v * jac;
  };
  return integrate(mapped, -1.0, 1.0, opts);
}

/// Integrate f over (0, inf) through x = scale * exp(u), which turns power-law
/// endpoint behaviour into exponential decay.
template <class F>
QuadratureResult integrate_half_line(F&& f, double scale = 1.0, const QuadratureOptions& opts = {},
                                     double log_width = 1.0) {
  detail::require(scale > 0.0, "integrate_half_line: scale must be positive");
  auto in_log = [&](double u) {
    const double x = scale * std::exp(u);
    if (x == 0.0 || !std::isfinite(x)) return 0.0;
    const double v = f(x);
    return v == 0.0 ? 0.0 : v * x;
  };
  return integrate_real_line(in_log, 0.0, log_width, opts);
}

/// Same as integrate() but throws NumericalError instead of returning an
/// unconverged result.
template <class F>
double integrate_or_throw(F&& f, double a, double b, const QuadratureOptions& opts,
                          const std::string& context) {
  const auto r = integrate(f, a, b, opts);
  if (!r.converged) throw NumericalError(context + ": quadrature did not converge", r.value);
  return r.value;
}

template <class F>
double integrate_half_line_or_throw(F&& f, double scale, const QuadratureOptions& opts,
                                    const std::string& context, double log_width = 1.0) {
  const auto r = integrate_half_line(f, scale, opts, log_width);
  if (!r.converged) throw NumericalError(context + ": quadrature did not converge", r.value);
  return r.value;
}

}  // namespace ensemble_forge
