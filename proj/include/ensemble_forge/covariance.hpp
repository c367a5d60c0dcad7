#pragma once

// Covariance estimation and the variance-extraction path: rotate amplitudes
// into the eigenbasis of the total-interval covariance, rescale by the
// eigenvalues, and pool block variances across all components.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ensemble_forge/error.hpp"
#include "ensemble_forge/marketdata.hpp"
#include "ensemble_forge/parallel.hpp"

namespace ensemble_forge {

/// Sampling window of a covariance estimate: [first, last] column indices
/// (inclusive), or the total interval.
struct SampleWindow {
  std::optional<std::size_t> first;
  std::optional<std::size_t> last;
  bool is_total() const { return !first.has_value(); }
};

struct CovarianceMatrix {
  Eigen::MatrixXd matrix;
  SampleWindow window;
  std::size_t n_obs = 0;

  Eigen::Index dim() const { return matrix.rows(); }
};

using CovarianceSequence = std::vector<CovarianceMatrix>;

struct EigenBasis {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // orthonormal columns

  Eigen::Index dim() const { return eigenvalues.size(); }

  /// r^T Sigma^-1 r without forming the inverse.
  double quadratic_form(const Eigen::Ref<const Eigen::VectorXd>& r) const {
    const Eigen::VectorXd y = eigenvectors.transpose() * r;
    return (y.array().square() / eigenvalues.array()).sum();
  }

  double log_det() const { return eigenvalues.array().log().sum(); }

  Eigen::MatrixXd reconstruct() const {
    return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
  }
};

/// Amplitudes rotated into the eigenbasis and divided by sqrt(eigenvalue).
struct NormalizedPanel {
  std::vector<std::string> timestamps;
  Eigen::MatrixXd values;  // K x T
  std::size_t horizon = 1;
};

struct VarianceSample {
  std::vector<double> values;
  std::size_t agg_window = 0;
  std::size_t delta_t = 1;
  std::size_t assets = 0;
  std::size_t t_tot = 0;
};

struct TraceHistogram {
  std::vector<double> edges;   // bins + 1 edges
  std::vector<std::size_t> counts;
  std::vector<double> density;  // empty unless normalized
  bool normalized = false;
  std::vector<double> traces;   // the underlying observations s
};

inline constexpr double kEigenvalueFloor = 1e-12;

/// Sigma = (1/T_tot) R R^T of a total-interval demeaned panel.
inline CovarianceMatrix total_covariance(const ReturnPanel& rp) {
  detail::require(rp.demeaned && rp.demean_window.is_total(),
                  "total_covariance: panel must be demeaned over the total interval");
  if (rp.days() <= rp.assets()) {
    throw InvalidArgument("covariance rank-deficient: T_tot=" + std::to_string(rp.days()) +
                          " must exceed K=" + std::to_string(rp.assets()));
  }
  CovarianceMatrix cm;
  Eigen::MatrixXd s = rp.values * rp.values.transpose() / static_cast<double>(rp.days());
  cm.matrix = 0.5 * (s + s.transpose());
  cm.n_obs = rp.days();
  return cm;
}

/// Covariance of one window with its own sample means removed.
inline Eigen::MatrixXd window_covariance(const Eigen::MatrixXd& values, Eigen::Index first, Eigen::Index length) {
  const auto block = values.middleCols(first, length);
  const Eigen::VectorXd mean = block.rowwise().mean();
  const Eigen::MatrixXd centered = block.colwise() - mean;
  Eigen::MatrixXd s = centered * centered.transpose() / static_cast<double>(length);
  return 0.5 * (s + s.transpose());
}

/// One covariance per window [t-T+1, t], starting at the first full window
/// and advancing by `stride` columns.
inline CovarianceSequence rolling_covariance(const ReturnPanel& rp, std::size_t window, std::size_t stride = 1) {
  detail::require(window >= 2, "rolling_covariance: window must be >= 2");
  detail::require(stride >= 1, "rolling_covariance: stride must be >= 1");
  detail::require(window <= rp.days(), "rolling_covariance: window T=" + std::to_string(window) +
                                           " exceeds T_tot=" + std::to_string(rp.days()));
  const std::size_t positions = (rp.days() - window) / stride + 1;
  CovarianceSequence seq(positions);
  parallel_for(positions, [&](std::size_t i) {
    const std::size_t first = i * stride;
    auto& cm = seq[i];
    cm.matrix = window_covariance(rp.values, static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(window));
    cm.window = {first, first + window - 1};
    cm.n_obs = window;
  });
  return seq;
}

/// Symmetric eigendecomposition with eigenvalues sorted descending. Fails when
/// the smallest eigenvalue is below 1e-12 times the largest.
inline EigenBasis eigendecompose(const Eigen::MatrixXd& m) {
  detail::require(m.rows() == m.cols() && m.rows() > 0, "eigendecompose: matrix must be square");
  const double scale = m.cwiseAbs().maxCoeff();
  detail::require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(scale, 1e-300),
                  "eigendecompose: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecompose: solver failed", 0.0);
  const Eigen::Index k = m.rows();
  EigenBasis eb;
  eb.eigenvalues.resize(k);
  eb.eigenvectors.resize(k, k);
  // Eigen returns ascending order.
  for (Eigen::Index i = 0; i < k; ++i) {
    eb.eigenvalues(i) = solver.eigenvalues()(k - 1 - i);
    eb.eigenvectors.col(i) = solver.eigenvectors().col(k - 1 - i);
  }
  const double largest = eb.eigenvalues(0);
  const double smallest = eb.eigenvalues(k - 1);
  if (!(largest > 0.0) || smallest < kEigenvalueFloor * largest) {
    throw NumericalError("near-singular covariance: eigenvalue ratio " + std::to_string(smallest / largest),
                         smallest);
  }
  return eb;
}

inline EigenBasis eigendecompose(const CovarianceMatrix& cm) { return eigendecompose(cm.matrix); }

/// r~(t) = diag(lambda)^(-1/2) V^T r(t) for every column.
inline NormalizedPanel rotate_and_scale(const ReturnPanel& rp, const EigenBasis& eb) {
  if (static_cast<Eigen::Index>(rp.assets()) != eb.dim()) {
    throw InvalidArgument("rotate_and_scale: dimension mismatch, panel K=" + std::to_string(rp.assets()) +
                          " vs basis K=" + std::to_string(eb.dim()));
  }
  NormalizedPanel np;
  np.timestamps = rp.timestamps;
  np.horizon = rp.horizon;
  np.values = eb.eigenvalues.array().rsqrt().matrix().asDiagonal() * (eb.eigenvectors.transpose() * rp.values);
  return np;
}

struct LocalVarianceOptions {
  /// Advance blocks by one day instead of by w.
  bool overlapping = false;
  /// Subtract each block's own mean before taking its variance.
  bool recenter = false;
};

/// Biased (1/w) variance of every component over blocks of w consecutive days,
/// pooled over components.
inline VarianceSample local_variances(const NormalizedPanel& np, std::size_t w, LocalVarianceOptions opts = {}) {
  detail::require(w >= 2, "local_variances: aggregation window must be >= 2");
  const auto t_len = static_cast<std::size_t>(np.values.cols());
  detail::require(t_len >= w, "local_variances: panel shorter than aggregation window");
  const std::size_t step = opts.overlapping ? 1 : w;
  const std::size_t blocks = (t_len - w) / step + 1;
  const auto k = static_cast<std::size_t>(np.values.rows());
  VarianceSample vs;
  vs.agg_window = w;
  vs.delta_t = np.horizon;
  vs.assets = k;
  vs.t_tot = t_len;
  vs.values.resize(k * blocks);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t b = 0; b < blocks; ++b) {
      const auto seg = np.values.row(static_cast<Eigen::Index>(c))
                           .segment(static_cast<Eigen::Index>(b * step), static_cast<Eigen::Index>(w));
      double v;
      if (opts.recenter) {
        v = (seg.array() - seg.mean()).square().mean();
      } else {
        v = seg.array().square().mean();
      }
      vs.values[c * blocks + b] = v;
    }
  }
  return vs;
}

/// Histogram of s = Tr Sigma(t) / K, or Tr(Sigma^-1 Sigma(t)) / K when a
/// normalizing covariance is supplied. An all-equal sequence yields a single
/// zero-width bin holding every observation.
inline TraceHistogram trace_distribution(const CovarianceSequence& cs,
                                         const std::optional<Eigen::MatrixXd>& normalize_by = std::nullopt,
                                         std::size_t bins = 50) {
  detail::require(!cs.empty(), "trace_distribution: empty covariance sequence");
  detail::require(bins >= 1, "trace_distribution: need at least one bin");
  TraceHistogram h;
  h.traces.reserve(cs.size());
  std::optional<EigenBasis> basis;
  if (normalize_by) basis = eigendecompose(*normalize_by);
  for (const auto& cm : cs) {
    const double k = static_cast<double>(cm.dim());
    if (basis) {
      detail::require(cm.dim() == basis->dim(), "trace_distribution: dimension mismatch");
      // Tr(Sigma^-1 S) = sum_i (v_i^T S v_i) / lambda_i
      const Eigen::MatrixXd rotated = basis->eigenvectors.transpose() * cm.matrix * basis->eigenvectors;
      h.traces.push_back((rotated.diagonal().array() / basis->eigenvalues.array()).sum() / k);
    } else {
      h.traces.push_back(cm.matrix.trace() / k);
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(h.traces.begin(), h.traces.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi == lo) {
    h.edges = {lo, hi};
    h.counts = {h.traces.size()};
    return h;
  }
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
  h.counts.assign(bins, 0);
  for (double s : h.traces) {
    auto idx = static_cast<std::size_t>((s - lo) / (hi - lo) * static_cast<double>(bins));
    if (idx >= bins) idx = bins - 1;
    ++h.counts[idx];
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  h.density.resize(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    h.density[i] = static_cast<double>(h.counts[i]) / (static_cast<double>(h.traces.size()) * width);
  }
  h.normalized = true;
  return h;
}

inline void write_covariance_tsv(std::ostream& out, const CovarianceMatrix& cm,
                                 const std::vector<std::string>& tickers) {
  out << "ticker";
  for (const auto& t : tickers) out << '\t' << t;
  out << '\n';
  for (Eigen::Index i = 0; i < cm.matrix.rows(); ++i) {
    out << tickers[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < cm.matrix.cols(); ++j) out << '\t' << detail::format_shortest(cm.matrix(i, j));
    out << '\n';
  }
}

inline void write_variance_sample_tsv(std::ostream& out, const VarianceSample& vs) {
  out << "# delta_t=" << vs.delta_t << " agg_window=" << vs.agg_window << " K=" << vs.assets
      << " T_tot=" << vs.t_tot << '\n';
  out << "x\n";
  for (double v : vs.values) out << detail::format_shortest(v) << '\n';
}

/// One value per line, nothing else.
inline void write_variance_sample_column(std::ostream& out, const VarianceSample& vs) {
  for (double v : vs.values) out << detail::format_shortest(v) << '\n';
}

inline void write_trace_histogram_tsv(std::ostream& out, const TraceHistogram& h) {
  out << "lower\tupper\tcount\tdensity\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << detail::format_shortest(h.edges[i]) << '\t' << detail::format_shortest(h.edges[i + 1]) << '\t'
        << h.counts[i] << '\t' << (h.normalized ? detail::format_shortest(h.density[i]) : std::string("nan"))
        << '\n';
  }
}

}  // namespace ensemble_forge
