#pragma once

// JSON and TSV writers for the CLI artifacts. JSON doubles use the shortest
// representation that round-trips exactly; plot data uses 9 significant digits.

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "ensemble_forge/deformation.hpp"
#include "ensemble_forge/error.hpp"

namespace ensemble_forge {

inline nlohmann::ordered_json to_json(const FitReport& r) {
  nlohmann::ordered_json j;
  if (r.delta_t) {
    j["delta_t"] = *r.delta_t;
  } else {
    j["delta_t"] = nullptr;
  }
  j["model"] = r.model.name();
  if (r.model.is<BetaPrimeModel>()) {
    const auto& m = r.model.as<BetaPrimeModel>();
    j["N"] = m.n;
    j["L"] = m.l;
    j["stderr_N"] = r.param_std_errors.at(0);
    j["stderr_L"] = r.param_std_errors.at(1);
  } else if (r.model.is<LogLogisticModel>()) {
    const auto& m = r.model.as<LogLogisticModel>();
    j["b"] = m.b;
    j["c"] = m.c;
    j["N"] = 2.0 * m.b;
    j["stderr_b"] = r.param_std_errors.at(0);
    j["stderr_c"] = r.param_std_errors.at(1);
  }
  j["loglik"] = r.log_likelihood;
  j["n_samples"] = r.n_samples;
  j["ks"] = r.ks;
  j["integer_constrained"] = r.integer_constrained;
  return j;
}

inline nlohmann::ordered_json to_json(const std::vector<FitReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  return arr;
}

inline nlohmann::ordered_json to_json(const PermissibilityReport& r, const DeformationModel& model, int k) {
  nlohmann::ordered_json j;
  j["model"] = model.name();
  if (model.is<LogLogisticModel>()) {
    j["N"] = 2.0 * model.as<LogLogisticModel>().b;
    j["c"] = model.as<LogLogisticModel>().c;
  } else if (model.is<BetaPrimeModel>()) {
    j["N"] = model.as<BetaPrimeModel>().n;
    j["L"] = model.as<BetaPrimeModel>().l;
  }
  j["K"] = k;
  j["verdict"] = to_string(r.verdict);
  j["min_value"] = r.min_value;
  j["max_abs_value"] = r.max_abs_value;
  j["max_imag_residual"] = r.max_imag_residual;
  j["s_grid"] = r.s_grid;
  j["u_values"] = r.u_values;
  return j;
}

inline std::string format_plot(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Two-column TSV curve with a header row.
inline void write_curve_tsv(std::ostream& out, const std::string& x_name, const std::string& y_name,
                            const std::vector<double>& xs, const std::vector<double>& ys) {
  detail::require(xs.size() == ys.size(), "write_curve_tsv: column lengths differ");
  out << x_name << '\t' << y_name << '\n';
  for (std::size_t i = 0; i < xs.size(); ++i) out << format_plot(xs[i]) << '\t' << format_plot(ys[i]) << '\n';
}

/// Write via a sibling temporary file and rename, so readers never observe a
/// partially written artifact.
template <class Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    writer(out);
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace ensemble_forge
