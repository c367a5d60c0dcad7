#pragma once

// Stochastic oracles for the deformed ensemble. Every sampler takes its
// stream explicitly; multi-draw samplers split work into fixed-size chunks
// with their own substreams so results do not depend on the thread count.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ensemble_forge/distributions.hpp"
#include "ensemble_forge/error.hpp"
#include "ensemble_forge/marketdata.hpp"
#include "ensemble_forge/parallel.hpp"
#include "ensemble_forge/rng.hpp"

namespace ensemble_forge {

/// gaussian fixes eta = 1 (x = 1): the non-deformed ensemble.
enum class SamplingMode { deformed, gaussian };

inline constexpr std::size_t kSampleChunk = 4096;

/// One chi2_(N+L) draw of the inverse scale eta.
inline double sample_eta(double dof, RandomStream& rng) {
  detail::require(dof > 0.0 && std::isfinite(dof), "sample_eta: dof must be positive");
  return rng.chi2(dof);
}

/// x = z / eta with z ~ chi2_N and eta ~ chi2_(N+L): a BetaPrime(N, L) draw.
inline double sample_beta_prime(double n, double l, RandomStream& rng) {
  detail::require(n > 0.0 && l > 0.0, "sample_beta_prime: N and L must be positive");
  const double z = rng.chi2(n);
  return z / sample_eta(n + l, rng);
}

namespace detail {

/// V diag(sqrt(lambda)), so that coloring * z has covariance Sigma.
inline Eigen::MatrixXd coloring_matrix(const EnsembleParams& ep) {
  return ep.basis.eigenvectors * ep.basis.eigenvalues.cwiseSqrt().asDiagonal();
}

inline std::uint64_t chunk_stream(const RngSpec& spec, std::size_t chunk) {
  return (spec.stream << 32) | static_cast<std::uint64_t>(chunk);
}

}  // namespace detail

/// A K x N matrix with i.i.d. N(0, N Sigma / eta) columns, eta ~ chi2_(N+L).
inline Eigen::MatrixXd sample_wishart_matrix(const EnsembleParams& ep, RandomStream& rng,
                                             SamplingMode mode = SamplingMode::deformed) {
  const int n_int = detail::integer_dof(ep.n, "sample_wishart_matrix");
  const auto k = static_cast<Eigen::Index>(ep.k());
  const double eta = mode == SamplingMode::deformed ? sample_eta(ep.n + ep.l, rng) : 1.0;
  Eigen::MatrixXd z(k, n_int);
  for (Eigen::Index j = 0; j < n_int; ++j) {
    for (Eigen::Index i = 0; i < k; ++i) z(i, j) = rng.normal();
  }
  return std::sqrt(ep.n / eta) * (detail::coloring_matrix(ep) * z);
}

/// `count` compound return vectors as the columns of a K x count matrix:
/// x ~ BetaPrime(N, L), then r ~ N(0, x Sigma). Gaussian mode uses x = 1.
inline Eigen::MatrixXd sample_returns(const EnsembleParams& ep, std::size_t count, RngSpec spec,
                                      SamplingMode mode = SamplingMode::deformed) {
  detail::require(count >= 1, "sample_returns: count must be >= 1");
  const auto k = static_cast<Eigen::Index>(ep.k());
  const Eigen::MatrixXd color = detail::coloring_matrix(ep);
  Eigen::MatrixXd out(k, static_cast<Eigen::Index>(count));
  const std::size_t chunks = (count + kSampleChunk - 1) / kSampleChunk;
  parallel_for(chunks, [&](std::size_t c) {
    RandomStream rng({spec.seed, detail::chunk_stream(spec, c)});
    const std::size_t first = c * kSampleChunk;
    const std::size_t last = std::min(count, first + kSampleChunk);
    Eigen::VectorXd z(k);
    for (std::size_t t = first; t < last; ++t) {
      const double x = mode == SamplingMode::deformed ? sample_beta_prime(ep.n, ep.l, rng) : 1.0;
      for (Eigen::Index i = 0; i < k; ++i) z(i) = rng.normal();
      out.col(static_cast<Eigen::Index>(t)) = std::sqrt(x) * (color * z);
    }
  });
  return out;
}

namespace detail {

/// Consecutive weekdays from 2000-01-03, ISO formatted.
inline std::vector<std::string> synthetic_dates(std::size_t count) {
  using namespace std::chrono;
  std::vector<std::string> dates;
  dates.reserve(count);
  sys_days day = sys_days{year{2000} / January / 3};
  while (dates.size() < count) {
    const weekday wd{day};
    if (wd != Saturday && wd != Sunday) {
      const year_month_day ymd{day};
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      dates.emplace_back(buf);
    }
    day += days{1};
  }
  return dates;
}

}  // namespace detail

/// A ReturnPanel of t_tot i.i.d. compound draws with tickers S001, S002, ...
inline ReturnPanel synthetic_panel(const EnsembleParams& ep, std::size_t t_tot, RngSpec spec,
                                   SamplingMode mode = SamplingMode::deformed) {
  if (t_tot <= ep.k()) {
    throw InvalidArgument("synthetic_panel: t_tot must exceed K for a full-rank covariance");
  }
  ReturnPanel rp;
  rp.values = sample_returns(ep, t_tot, spec, mode);
  rp.timestamps = detail::synthetic_dates(t_tot);
  const std::size_t width = std::max<std::size_t>(3, std::to_string(ep.k()).size());
  for (std::size_t i = 1; i <= ep.k(); ++i) {
    std::string id = std::to_string(i);
    rp.tickers.push_back("S" + std::string(width - id.size(), '0') + id);
  }
  rp.horizon = 1;
  return rp;
}

}  // namespace ensemble_forge
