#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ensemble_forge/error.hpp"
#include "ensemble_forge/quadrature.hpp"

namespace ensemble_forge {

/// Kolmogorov-Smirnov distance sup_x |F_n(x) - F(x)| between the empirical
/// CDF of `sample` and a monotone `cdf`.
template <class Cdf>
double ks_distance(std::span<const double> sample, Cdf&& cdf) {
  detail::require(!sample.empty(), "ks_distance: empty sample");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Piecewise-linear CDF built from a density by adaptive quadrature between
/// consecutive knots. Below the first knot it returns left_mass, above the
/// last the accumulated total.
class TabulatedCdf {
 public:
  template <class Pdf>
  static TabulatedCdf from_pdf(Pdf&& pdf, std::vector<double> knots, double left_mass = 0.0,
                               const QuadratureOptions& opts = {}) {
    detail::require(knots.size() >= 2, "TabulatedCdf: need at least two knots");
    detail::require(std::is_sorted(knots.begin(), knots.end()), "TabulatedCdf: knots must be increasing");
    TabulatedCdf t;
    t.x_ = std::move(knots);
    t.f_.resize(t.x_.size());
    t.f_[0] = left_mass;
    for (std::size_t i = 1; i < t.x_.size(); ++i) {
      t.f_[i] = t.f_[i - 1] + integrate_or_throw(pdf, t.x_[i - 1], t.x_[i], opts, "TabulatedCdf");
    }
    return t;
  }

  double operator()(double x) const {
    if (x <= x_.front()) return f_.front();
    if (x >= x_.back()) return f_.back();
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    const auto i = static_cast<std::size_t>(it - x_.begin());
    const double w = (x - x_[i - 1]) / (x_[i] - x_[i - 1]);
    return f_[i - 1] + w * (f_[i] - f_[i - 1]);
  }

  double total() const { return f_.back(); }

 private:
  std::vector<double> x_;
  std::vector<double> f_;
};

}  // namespace ensemble_forge
