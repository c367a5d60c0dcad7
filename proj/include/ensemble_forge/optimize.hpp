#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace ensemble_forge {

struct NelderMeadOptions {
  double f_tol = 1e-9;        // spread of simplex values
  double x_tol = 1e-6;        // simplex diameter, checked together with f_tol
  int max_iterations = 20000;
  double initial_step = 0.25;
  int restarts = 5;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Minimize f by Nelder-Mead. Each restart rebuilds the simplex around the
/// incumbent; the run is converged when a full restart improves the minimum
/// by no more than f_tol.
template <class F>
NelderMeadResult nelder_mead(F&& f, Eigen::VectorXd start, const NelderMeadOptions& opts = {}) {
  const Eigen::Index n = start.size();
  auto safe = [&](const Eigen::VectorXd& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  NelderMeadResult best;
  best.x = start;
  best.value = safe(start);
  for (int restart = 0; restart <= opts.restarts; ++restart) {
    std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(n + 1), best.x);
    std::vector<double> values(static_cast<std::size_t>(n + 1));
    for (Eigen::Index i = 0; i < n; ++i) simplex[static_cast<std::size_t>(i + 1)](i) += opts.initial_step;
    for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i) values[i] = safe(simplex[i]);

    std::vector<std::size_t> order(static_cast<std::size_t>(n + 1));
    int iter = 0;
    bool inner_converged = false;
    for (; iter < opts.max_iterations; ++iter) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
      const std::size_t lo = order.front();
      const std::size_t hi = order.back();
      const std::size_t second = order[order.size() - 2];
      double diameter = 0.0;
      for (const auto& p : simplex) diameter = std::max(diameter, (p - simplex[lo]).cwiseAbs().maxCoeff());
      if ((std::abs(values[hi] - values[lo]) <= opts.f_tol && diameter <= opts.x_tol) || diameter <= 1e-13) {
        inner_converged = true;
        break;
      }
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (std::size_t i = 0; i < simplex.size(); ++i) {
        if (i != hi) centroid += simplex[i];
      }
      centroid /= static_cast<double>(n);

      const Eigen::VectorXd reflected = centroid + (centroid - simplex[hi]);
      const double fr = safe(reflected);
      if (fr < values[lo]) {
        const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[hi]);
        const double fe = safe(expanded);
        if (fe < fr) {
          simplex[hi] = expanded;
          values[hi] = fe;
        } else {
          simplex[hi] = reflected;
          values[hi] = fr;
        }
        continue;
      }
      if (fr < values[second]) {
        simplex[hi] = reflected;
        values[hi] = fr;
        continue;
      }
      const bool outside = fr < values[hi];
      const Eigen::VectorXd contracted =
          outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (simplex[hi] - centroid));
      const double fc = safe(contracted);
      if (fc < (outside ? fr : values[hi])) {
        simplex[hi] = contracted;
        values[hi] = fc;
        continue;
      }
      for (std::size_t i = 0; i < simplex.size(); ++i) {
        if (i == lo) continue;
        simplex[i] = simplex[lo] + 0.5 * (simplex[i] - simplex[lo]);
        values[i] = safe(simplex[i]);
      }
    }
    best.iterations += iter;
    const auto lo = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
    const double improvement = best.value - values[lo];
    if (values[lo] < best.value) {
      best.value = values[lo];
      best.x = simplex[lo];
    }
    if (restart > 0 && inner_converged && improvement <= opts.f_tol) {
      best.converged = true;
      break;
    }
  }
  return best;
}

/// Golden-section minimization on [lo, hi].
template <class F>
double golden_section(F&& f, double lo, double hi, double tol = 1e-10) {
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - ratio * (b - a);
  double d = a + ratio * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace ensemble_forge
