#pragma once

// Price panels in, demeaned return panels out.
//
// Matrices are stored K x T: row k is one asset, column t one trading day.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ensemble_forge/error.hpp"

namespace ensemble_forge {

struct PriceTable {
  std::vector<std::string> timestamps;
  std::vector<std::string> tickers;
  Eigen::MatrixXd prices;  // K x T_raw

  std::size_t assets() const { return static_cast<std::size_t>(prices.rows()); }
  std::size_t days() const { return static_cast<std::size_t>(prices.cols()); }
};

/// Demeaning window: either the whole panel, or a trailing window of `length` days.
struct DemeanWindow {
  std::optional<std::size_t> length;

  static DemeanWindow total() { return {}; }
  static DemeanWindow trailing(std::size_t t) { return {t}; }
  bool is_total() const { return !length.has_value(); }
};

struct ReturnPanel {
  std::vector<std::string> tickers;
  std::vector<std::string> timestamps;  // date of the starting price S(t)
  Eigen::MatrixXd values;               // K x T_tot
  std::size_t horizon = 1;              // return horizon in trading days
  std::size_t stride = 1;
  DemeanWindow demean_window;
  bool demeaned = false;

  std::size_t assets() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t days() const { return static_cast<std::size_t>(values.cols()); }
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool getline_lf_or_crlf(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  const int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Shortest decimal that round-trips to the same double.
inline std::string format_shortest(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct TextTable {
  std::vector<std::string> columns;  // header after the date column
  std::vector<std::string> dates;
  std::vector<std::vector<double>> rows;  // one row per date
};

inline TextTable read_text_table(std::istream& in, char sep, bool require_positive) {
  TextTable table;
  std::string line;
  std::size_t row = 1;
  if (!getline_lf_or_crlf(in, line)) throw ParseError("empty input: missing header", 1, 0);
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
    line.erase(0, 3);
  }
  const auto header = split(line, sep);
  if (header.empty() || header[0] != "date") throw ParseError("header must start with 'date'", 1, 1);
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c].empty()) throw ParseError("empty ticker name in header", 1, c + 1);
    table.columns.emplace_back(header[c]);
  }
  while (getline_lf_or_crlf(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split(line, sep);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(cells.size()),
                       row, std::min(cells.size(), header.size()) + 1);
    }
    if (!is_iso_date(cells[0])) throw ParseError("malformed date '" + std::string(cells[0]) + "'", row, 1);
    std::string date(cells[0]);
    if (!table.dates.empty()) {
      if (date == table.dates.back()) throw ParseError("duplicate timestamp " + date, row, 1);
      if (date < table.dates.back()) throw ParseError("timestamps not increasing at " + date, row, 1);
    }
    std::vector<double> values;
    values.reserve(cells.size() - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (cells[c].empty()) throw ParseError("missing value", row, c + 1);
      const auto v = parse_double(cells[c]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError("malformed number '" + std::string(cells[c]) + "'", row, c + 1);
      }
      if (require_positive && !(*v > 0.0)) throw ParseError("non-positive price", row, c + 1);
      values.push_back(*v);
    }
    table.dates.push_back(std::move(date));
    table.rows.push_back(std::move(values));
  }
  return table;
}

inline Eigen::MatrixXd to_asset_major(const TextTable& t) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.columns.size()), static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t d = 0; d < t.rows.size(); ++d) {
    for (std::size_t k = 0; k < t.columns.size(); ++k) {
      m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) = t.rows[d][k];
    }
  }
  return m;
}

inline void write_text_table(std::ostream& out, char sep, const std::vector<std::string>& columns,
                             const std::vector<std::string>& dates, const Eigen::MatrixXd& values) {
  out << "date";
  for (const auto& c : columns) out << sep << c;
  out << '\n';
  for (Eigen::Index t = 0; t < values.cols(); ++t) {
    out << dates[static_cast<std::size_t>(t)];
    for (Eigen::Index k = 0; k < values.rows(); ++k) out << sep << format_shortest(values(k, t));
    out << '\n';
  }
}

}  // namespace detail

/// Parse a price CSV: header `date,<ticker1>,...`, ISO dates strictly
/// increasing, every price present and positive. LF or CRLF line endings.
inline PriceTable read_price_table(std::istream& in) {
  auto table = detail::read_text_table(in, ',', true);
  if (table.columns.size() < 2) throw ParseError("need at least 2 tickers", 1, 0);
  if (table.dates.size() < 2) throw ParseError("need at least 2 trading days", 0, 0);
  PriceTable pt;
  pt.prices = detail::to_asset_major(table);
  pt.tickers = std::move(table.columns);
  pt.timestamps = std::move(table.dates);
  return pt;
}

inline PriceTable load_price_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open price file '" + path + "'");
  return read_price_table(in);
}

inline void write_price_table(std::ostream& out, const PriceTable& pt) {
  detail::write_text_table(out, ',', pt.tickers, pt.timestamps, pt.prices);
}

/// Simple returns R_k(t) = (S_k(t+dt) - S_k(t)) / S_k(t) for t = 0, stride, 2 stride, ...
/// The result is not demeaned.
inline ReturnPanel compute_returns(const PriceTable& pt, std::size_t dt, std::size_t stride = 1) {
  const std::size_t t_raw = pt.days();
  detail::require(dt >= 1 && dt + 1 <= t_raw,
                  "compute_returns: horizon dt=" + std::to_string(dt) + " out of range [1, " +
                      std::to_string(t_raw > 0 ? t_raw - 1 : 0) + "]");
  detail::require(stride >= 1, "compute_returns: stride must be >= 1");
  const std::size_t count = (t_raw - dt - 1) / stride + 1;
  ReturnPanel rp;
  rp.tickers = pt.tickers;
  rp.horizon = dt;
  rp.stride = stride;
  rp.values.resize(pt.prices.rows(), static_cast<Eigen::Index>(count));
  rp.timestamps.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto t = static_cast<Eigen::Index>(i * stride);
    const auto t2 = t + static_cast<Eigen::Index>(dt);
    rp.values.col(static_cast<Eigen::Index>(i)) =
        (pt.prices.col(t2) - pt.prices.col(t)).cwiseQuotient(pt.prices.col(t));
    rp.timestamps.push_back(pt.timestamps[static_cast<std::size_t>(t)]);
  }
  return rp;
}

/// Compound a one-day return panel into non-demeaned dt-day returns,
/// (1 + R_dt(t)) = prod_{i<dt} (1 + R_1(t+i)), exact for simple returns.
inline ReturnPanel aggregate_returns(const ReturnPanel& daily, std::size_t dt, std::size_t stride = 1) {
  detail::require(daily.horizon == 1 && daily.stride == 1 && !daily.demeaned,
                  "aggregate_returns: input must be raw one-day returns with stride 1");
  detail::require(dt >= 1 && dt <= daily.days(), "aggregate_returns: horizon out of range");
  detail::require(stride >= 1, "aggregate_returns: stride must be >= 1");
  const std::size_t count = (daily.days() - dt) / stride + 1;
  ReturnPanel rp;
  rp.tickers = daily.tickers;
  rp.horizon = dt;
  rp.stride = stride;
  rp.values.resize(daily.values.rows(), static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    const auto t = static_cast<Eigen::Index>(i * stride);
    Eigen::VectorXd growth = Eigen::VectorXd::Ones(daily.values.rows());
    for (std::size_t j = 0; j < dt; ++j) {
      growth = growth.cwiseProduct(Eigen::VectorXd::Ones(daily.values.rows()) +
                                   daily.values.col(t + static_cast<Eigen::Index>(j)));
    }
    rp.values.col(static_cast<Eigen::Index>(i)) = growth - Eigen::VectorXd::Ones(daily.values.rows());
    rp.timestamps.push_back(daily.timestamps[static_cast<std::size_t>(t)]);
  }
  return rp;
}

/// Subtract sample means. With the total window every row ends with mean zero;
/// with a trailing window of T days, column t becomes R(t) minus the mean over
/// [t-T+1, t], and only columns t >= T-1 (0-based) are kept.
inline ReturnPanel demean(const ReturnPanel& rp, DemeanWindow window = DemeanWindow::total()) {
  ReturnPanel out = rp;
  out.demean_window = window;
  out.demeaned = true;
  if (window.is_total()) {
    const Eigen::VectorXd mean = rp.values.rowwise().mean();
    out.values = rp.values.colwise() - mean;
    // A second pass removes the roundoff left by the first.
    const Eigen::VectorXd residual = out.values.rowwise().mean();
    out.values.colwise() -= residual;
    return out;
  }
  const std::size_t t_len = *window.length;
  detail::require(t_len >= 1 && t_len <= rp.days(),
                  "demean: window T=" + std::to_string(t_len) + " exceeds panel length " +
                      std::to_string(rp.days()));
  const std::size_t count = rp.days() - t_len + 1;
  out.values.resize(rp.values.rows(), static_cast<Eigen::Index>(count));
  out.timestamps.assign(rp.timestamps.begin() + static_cast<std::ptrdiff_t>(t_len - 1), rp.timestamps.end());
  for (std::size_t i = 0; i < count; ++i) {
    const auto end = static_cast<Eigen::Index>(i + t_len - 1);
    const Eigen::VectorXd mean =
        rp.values.middleCols(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t_len)).rowwise().mean();
    out.values.col(static_cast<Eigen::Index>(i)) = rp.values.col(end) - mean;
  }
  return out;
}

inline void write_return_panel(std::ostream& out, const ReturnPanel& rp) {
  detail::write_text_table(out, '\t', rp.tickers, rp.timestamps, rp.values);
}

/// Read a panel written by write_return_panel. Metadata that the TSV does not
/// carry (horizon, demeaning) is supplied by the caller.
inline ReturnPanel read_return_panel(std::istream& in, std::size_t horizon = 1, bool demeaned = false) {
  auto table = detail::read_text_table(in, '\t', false);
  if (table.columns.empty()) throw ParseError("return panel has no tickers", 1, 0);
  ReturnPanel rp;
  rp.values = detail::to_asset_major(table);
  rp.tickers = std::move(table.columns);
  rp.timestamps = std::move(table.dates);
  rp.horizon = horizon;
  rp.demeaned = demeaned;
  return rp;
}

inline ReturnPanel load_return_panel(const std::string& path, std::size_t horizon = 1) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open return panel '" + path + "'");
  return read_return_panel(in, horizon);
}

}  // namespace ensemble_forge
