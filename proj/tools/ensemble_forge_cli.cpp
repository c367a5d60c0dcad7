// Batch front end: one verb per invocation, artifacts written atomically.

#include <CLI11.hpp>

#include <ensemble_forge/ensemble_forge.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace ef = ensemble_forge;

namespace {

struct RunConfig {
  std::string verb;
  std::string input;
  std::string output;
  std::vector<std::size_t> dts{1};
  std::optional<std::size_t> t_window;
  std::size_t agg_window = 5;
  std::string model = "beta_prime";
  std::optional<double> n;
  std::optional<double> l;
  std::optional<double> c;
  std::optional<int> k;
  std::uint64_t seed = 0;
  std::size_t stride = 1;
  bool integer_n = false;
  std::string curve = "marginal";
  std::string grid = "-8:8:400";
  std::size_t bins = 50;
  bool normalize = false;
};

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

template <class T>
T need(const std::optional<T>& v, const char* flag) {
  if (!v) throw ef::InvalidArgument(std::string("missing required flag ") + flag);
  return *v;
}

void need_path(const std::string& p, const char* flag) {
  if (p.empty()) throw ef::InvalidArgument(std::string("missing required flag ") + flag);
}

bool has_extension(const std::string& path, const char* ext) {
  return std::filesystem::path(path).extension() == ext;
}

std::vector<double> parse_grid(const std::string& spec) {
  const auto first = spec.find(':');
  const auto second = first == std::string::npos ? std::string::npos : spec.find(':', first + 1);
  if (second == std::string::npos) throw ef::InvalidArgument("grid must be lo:hi:count, got '" + spec + "'");
  auto number = [&](std::string_view s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ef::InvalidArgument("bad grid field '" + std::string(s) + "'");
    return v;
  };
  const std::string_view sv(spec);
  const double lo = number(sv.substr(0, first));
  const double hi = number(sv.substr(first + 1, second - first - 1));
  const double count = number(sv.substr(second + 1));
  if (!(count >= 2.0) || count != std::floor(count) || !(hi > lo)) {
    throw ef::InvalidArgument("grid needs hi > lo and an integer count >= 2");
  }
  const auto m = static_cast<std::size_t>(count);
  std::vector<double> xs(m);
  for (std::size_t i = 0; i < m; ++i) xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);
  return xs;
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  ef::write_atomically(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

ef::DeformationModel model_from(const RunConfig& cfg) {
  if (cfg.model == "beta_prime") return ef::DeformationModel::beta_prime(need(cfg.n, "--N"), need(cfg.l, "--L"));
  if (cfg.model == "log_logistic") {
    return ef::DeformationModel::log_logistic(0.5 * need(cfg.n, "--N"), need(cfg.c, "--c"));
  }
  if (cfg.model == "delta") return ef::DeformationModel::delta();
  throw ef::InvalidArgument("unknown model '" + cfg.model + "'");
}

ef::ReturnPanel daily_returns(const RunConfig& cfg) {
  if (has_extension(cfg.input, ".tsv")) return ef::load_return_panel(cfg.input);
  return ef::compute_returns(ef::load_price_table(cfg.input), 1);
}

void run_ingest(const RunConfig& cfg) {
  need_path(cfg.input, "--input");
  need_path(cfg.output, "--output");
  if (cfg.dts.size() != 1) throw StageError("config", "ingest takes a single --dt");
  const auto prices = stage("ingest", [&] { return ef::load_price_table(cfg.input); });
  auto returns = stage("returns", [&] { return ef::compute_returns(prices, cfg.dts.front(), cfg.stride); });
  if (cfg.t_window) {
    returns = stage("demean", [&] { return ef::demean(returns, ef::DemeanWindow::trailing(*cfg.t_window)); });
  }
  stage("write", [&] { ef::write_atomically(cfg.output, [&](std::ostream& out) { ef::write_return_panel(out, returns); }); });
}

void run_fit(const RunConfig& cfg) {
  need_path(cfg.input, "--input");
  need_path(cfg.output, "--output");
  ef::PipelineOptions opts;
  opts.agg_window = cfg.agg_window;
  opts.integer_n = cfg.integer_n;
  opts.stride = cfg.stride;
  if (cfg.model == "beta_prime") {
    opts.model = ef::FitModel::beta_prime;
  } else if (cfg.model == "log_logistic") {
    opts.model = ef::FitModel::log_logistic;
  } else {
    throw StageError("config", "fit supports --model beta_prime or log_logistic");
  }
  const std::span<const std::size_t> dts(cfg.dts);
  std::vector<ef::FitReport> reports;
  if (has_extension(cfg.input, ".tsv")) {
    const auto daily = stage("ingest", [&] { return ef::load_return_panel(cfg.input); });
    reports = stage("fit", [&] { return ef::fit_over_horizons(daily, dts, opts); });
  } else {
    const auto prices = stage("ingest", [&] { return ef::load_price_table(cfg.input); });
    reports = stage("fit", [&] { return ef::fit_over_horizons(prices, dts, opts); });
  }
  nlohmann::ordered_json j;
  j["agg_window"] = cfg.agg_window;
  j["stride"] = cfg.stride;
  j["fits"] = ef::to_json(reports);
  stage("write", [&] { write_json(cfg.output, j); });
}

void run_eval(const RunConfig& cfg) {
  need_path(cfg.output, "--output");
  const auto xs = stage("config", [&] { return parse_grid(cfg.grid); });
  const auto model = stage("config", [&] { return model_from(cfg); });
  std::string x_name = "x";
  std::function<double(double)> curve;
  stage("config", [&] {
    if (cfg.curve == "marginal") {
      x_name = "r";
      if (model.is<ef::BetaPrimeModel>()) {
        const auto m = model.as<ef::BetaPrimeModel>();
        curve = [m](double r) { return ef::marginal_pdf(r, m.n, m.l); };
      } else if (model.is<ef::DeltaModel>()) {
        const double n = need(cfg.n, "--N");
        curve = [n](double r) { return ef::baseline_marginal_pdf(r, n); };
      } else {
        throw ef::InvalidArgument("marginal curve needs --model beta_prime or delta");
      }
    } else if (cfg.curve == "baseline") {
      x_name = "r";
      const double n = need(cfg.n, "--N");
      curve = [n](double r) { return ef::baseline_marginal_pdf(r, n); };
    } else if (cfg.curve == "radial") {
      x_name = "rho";
      if (!model.is<ef::BetaPrimeModel>()) throw ef::InvalidArgument("radial curve needs --model beta_prime");
      const auto m = model.as<ef::BetaPrimeModel>();
      const int k = need(cfg.k, "--K");
      if (k < 1) throw ef::InvalidArgument("--K must be >= 1");
      curve = [m, k](double rho) { return ef::radial_pdf(rho, static_cast<std::size_t>(k), m.n, m.l); };
    } else if (cfg.curve == "p") {
      if (!model.is<ef::BetaPrimeModel>()) throw ef::InvalidArgument("p curve needs --model beta_prime");
      const auto m = model.as<ef::BetaPrimeModel>();
      curve = [m](double x) { return ef::beta_prime_pdf(x, m.n, m.l); };
    } else if (cfg.curve == "f") {
      x_name = "eta";
      curve = [model](double t) { return ef::density(model, t); };
    } else {
      throw ef::InvalidArgument("unknown curve '" + cfg.curve + "'");
    }
  });
  std::vector<double> ys(xs.size());
  stage("eval", [&] {
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = curve(xs[i]);
  });
  stage("write", [&] {
    ef::write_atomically(cfg.output, [&](std::ostream& out) { ef::write_curve_tsv(out, x_name, "pdf", xs, ys); });
  });
}

void run_sample(const RunConfig& cfg) {
  need_path(cfg.output, "--output");
  const auto mode = cfg.model == "delta" ? ef::SamplingMode::gaussian : ef::SamplingMode::deformed;
  if (cfg.model != "delta" && cfg.model != "beta_prime") {
    throw StageError("config", "sample supports --model beta_prime or delta");
  }
  const auto ep = stage("config", [&] {
    const int k = need(cfg.k, "--K");
    if (k < 1) throw ef::InvalidArgument("--K must be >= 1");
    const double l = mode == ef::SamplingMode::gaussian ? cfg.l.value_or(1.0) : need(cfg.l, "--L");
    return ef::EnsembleParams::identity(static_cast<std::size_t>(k), need(cfg.n, "--N"), l, true);
  });
  const auto t_tot = stage("config", [&] { return need(cfg.t_window, "--T"); });
  const auto panel = stage("sample", [&] { return ef::synthetic_panel(ep, t_tot, {cfg.seed, 0}, mode); });
  stage("write", [&] { ef::write_atomically(cfg.output, [&](std::ostream& out) { ef::write_return_panel(out, panel); }); });
}

void run_check_positivity(const RunConfig& cfg) {
  need_path(cfg.output, "--output");
  const auto model = stage("config", [&] { return model_from(cfg); });
  const int k = stage("config", [&] { return need(cfg.k, "--K"); });
  const auto report = stage("check-positivity", [&] { return ef::permissibility_check(model, k); });
  stage("write", [&] { write_json(cfg.output, ef::to_json(report, model, k)); });
  std::cout << ef::to_string(report.verdict) << '\n';
}

void run_trace_hist(const RunConfig& cfg) {
  need_path(cfg.input, "--input");
  need_path(cfg.output, "--output");
  if (cfg.dts.size() != 1) throw StageError("config", "trace-hist takes a single --dt");
  const auto window = stage("config", [&] { return need(cfg.t_window, "--T"); });
  const auto daily = stage("ingest", [&] { return daily_returns(cfg); });
  const auto returns = stage("returns", [&] {
    const std::size_t dt = cfg.dts.front();
    return dt == 1 ? daily : ef::aggregate_returns(daily, dt);
  });
  const auto hist = stage("trace-hist", [&] {
    const auto cs = ef::rolling_covariance(returns, window, cfg.stride);
    std::optional<Eigen::MatrixXd> norm;
    if (cfg.normalize) norm = ef::total_covariance(ef::demean(returns)).matrix;
    return ef::trace_distribution(cs, norm, cfg.bins);
  });
  stage("write", [&] {
    ef::write_atomically(cfg.output, [&](std::ostream& out) { ef::write_trace_histogram_tsv(out, hist); });
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformed Wishart ensemble toolkit"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_io = [&](CLI::App* sub, bool input) {
    if (input) sub->add_option("--input,-i", cfg.input, "input file (.csv prices or .tsv daily returns)");
    sub->add_option("--output,-o", cfg.output, "output file");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "beta_prime | log_logistic | delta");
    sub->add_option("--N", cfg.n, "N parameter");
    sub->add_option("--L", cfg.l, "L parameter");
    sub->add_option("--c", cfg.c, "log-logistic scale c");
    sub->add_option("--K", cfg.k, "dimension K");
  };

  auto* ingest = app.add_subcommand("ingest", "price CSV to return TSV");
  add_io(ingest, true);
  ingest->add_option("--dt", cfg.dts, "return horizon in trading days")->delimiter(',');
  ingest->add_option("--stride", cfg.stride, "step between return start dates");
  ingest->add_option("--T", cfg.t_window, "trailing demeaning window");

  auto* fit = app.add_subcommand("fit", "fit the deformation over horizons");
  add_io(fit, true);
  fit->add_option("--dt", cfg.dts, "comma-separated horizons")->delimiter(',');
  fit->add_option("--window,-w", cfg.agg_window, "aggregation window w");
  fit->add_option("--model", cfg.model, "beta_prime | log_logistic");
  fit->add_option("--stride", cfg.stride, "step between return start dates");
  fit->add_flag("--integer-N", cfg.integer_n, "constrain N to integers");

  auto* eval = app.add_subcommand("eval", "tabulate a density on a grid");
  add_io(eval, false);
  add_model(eval);
  eval->add_option("--curve", cfg.curve, "marginal | baseline | radial | p | f");
  eval->add_option("--grid", cfg.grid, "lo:hi:count");

  auto* sample = app.add_subcommand("sample", "synthetic return panel");
  add_io(sample, false);
  add_model(sample);
  sample->add_option("--T", cfg.t_window, "number of days");
  sample->add_option("--seed", cfg.seed, "random seed");

  auto* check = app.add_subcommand("check-positivity", "permissibility of the induced trace law");
  add_io(check, false);
  add_model(check);

  auto* trace = app.add_subcommand("trace-hist", "histogram of rolling covariance traces");
  add_io(trace, true);
  trace->add_option("--dt", cfg.dts, "return horizon")->delimiter(',');
  trace->add_option("--T", cfg.t_window, "rolling window length");
  trace->add_option("--stride", cfg.stride, "step between windows");
  trace->add_option("--bins", cfg.bins, "histogram bins");
  trace->add_flag("--normalize", cfg.normalize, "normalize by the total covariance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: stage=config: " << one_line(e.what()) << '\n';
    return 2;
  }
  cfg.verb = app.get_subcommands().front()->get_name();

  try {
    if (cfg.verb == "ingest") run_ingest(cfg);
    else if (cfg.verb == "fit") run_fit(cfg);
    else if (cfg.verb == "eval") run_eval(cfg);
    else if (cfg.verb == "sample") run_sample(cfg);
    else if (cfg.verb == "check-positivity") run_check_positivity(cfg);
    else if (cfg.verb == "trace-hist") run_trace_hist(cfg);
  } catch (const StageError& e) {
    std::cerr << "error: stage=" << e.stage() << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: stage=config: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
