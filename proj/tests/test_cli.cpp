#include <gtest/gtest.h>

#include <ensemble_forge/ensemble_forge.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

using namespace ensemble_forge;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int status;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ef_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  RunResult run(const std::string& args) const {
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = std::string("\"") + EF_CLI_PATH + "\" " + args + " > \"" + (dir_ / "stdout.txt").string() +
                            "\" 2> \"" + err.string() + "\"";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(err)};
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // Prices whose one-day returns are a synthetic deformed panel scaled by 1%.
  PriceTable write_prices(const std::string& name, std::size_t k, std::size_t t_tot, std::uint64_t seed) const {
    const auto rp = synthetic_panel(EnsembleParams::identity(k, 8.0, 2.0), t_tot, {seed, 0});
    PriceTable pt;
    pt.tickers = rp.tickers;
    pt.timestamps = detail::synthetic_dates(t_tot + 1);
    pt.prices.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t_tot + 1));
    pt.prices.col(0).setConstant(100.0);
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(t_tot); ++t) {
      pt.prices.col(t + 1) = pt.prices.col(t).array() * (1.0 + 0.01 * rp.values.col(t).array());
    }
    std::ofstream out(path(name), std::ios::binary);
    write_price_table(out, pt);
    out.close();
    return load_price_table(path(name).string());
  }

  fs::path dir_;
};

bool single_error_line(const std::string& err, const std::string& stage) {
  const std::string prefix = "error: stage=" + stage + ": ";
  return err.rfind(prefix, 0) == 0 && err.find('\n') == err.size() - 1;
}

}  // namespace

TEST_F(CliTest, FitMatchesLibraryPipeline) {
  const auto pt = write_prices("prices.csv", 10, 2000, 21);
  const auto r = run("fit --input \"" + path("prices.csv").string() + "\" --dt 1 --window 5 --output \"" +
                     path("fit.json").string() + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("fit.json")));
  ASSERT_EQ(j["fits"].size(), 1u);
  const auto& fit = j["fits"][0];
  EXPECT_EQ(fit["model"], "beta_prime");
  EXPECT_EQ(fit["delta_t"], 1);

  const std::size_t dts[] = {1};
  const auto want = fit_over_horizons(pt, dts).front().model.as<BetaPrimeModel>();
  EXPECT_DOUBLE_EQ(fit["N"].get<double>(), want.n);
  EXPECT_DOUBLE_EQ(fit["L"].get<double>(), want.l);
  EXPECT_GT(fit["stderr_N"].get<double>(), 0.0);
}

TEST_F(CliTest, FitOverSeveralHorizonsFromReturnPanel) {
  const auto rp = synthetic_panel(EnsembleParams::identity(6, 8.0, 2.0), 3000, {22, 0});
  {
    std::ofstream out(path("returns.tsv"), std::ios::binary);
    write_return_panel(out, rp);
  }
  const auto r = run("fit --input \"" + path("returns.tsv").string() + "\" --dt 1,2,4 --output \"" +
                     path("fit.json").string() + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("fit.json")));
  ASSERT_EQ(j["fits"].size(), 3u);
  EXPECT_EQ(j["fits"][2]["delta_t"], 4);
}

TEST_F(CliTest, EvalMarginalCurve) {
  const std::string out = path("curve.tsv").string();
  const auto r = run("eval --model beta_prime --N 8.13 --L 2.24 --curve marginal --grid -8:8:400 --output \"" + out + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream in(slurp(out));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "r\tpdf");
  std::vector<std::pair<double, double>> rows;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    double x = 0.0, y = 0.0;
    ls >> x >> y;
    rows.emplace_back(x, y);
  }
  ASSERT_EQ(rows.size(), 400u);
  EXPECT_DOUBLE_EQ(rows.front().first, -8.0);
  EXPECT_DOUBLE_EQ(rows.back().first, 8.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(rows[i].second, marginal_pdf(rows[i].first, 8.13, 2.24), 1e-7 * rows[i].second);
    EXPECT_DOUBLE_EQ(rows[i].second, rows[rows.size() - 1 - i].second);
  }
}

TEST_F(CliTest, RerunsAreByteIdentical) {
  const std::string a = path("a.tsv").string(), b = path("b.tsv").string();
  ASSERT_EQ(run("sample --N 8 --L 2 --K 4 --T 200 --seed 5 --output \"" + a + "\"").status, 0);
  ASSERT_EQ(run("sample --N 8 --L 2 --K 4 --T 200 --seed 5 --output \"" + b + "\"").status, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  ASSERT_EQ(run("sample --N 8 --L 2 --K 4 --T 200 --seed 6 --output \"" + b + "\"").status, 0);
  EXPECT_NE(slurp(a), slurp(b));
  EXPECT_FALSE(fs::exists(a + ".tmp"));
}

TEST_F(CliTest, CheckPositivityLogLogistic) {
  const std::string out = path("perm.json").string();
  const auto r = run("check-positivity --model log_logistic --N 4 --c 1 --K 306 --output \"" + out + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j["verdict"], "non-permissible");
  EXPECT_EQ(j["K"], 306);
  EXPECT_LT(j["min_value"].get<double>(), 0.0);
  EXPECT_EQ(slurp(path("stdout.txt")), "non-permissible\n");
}

TEST_F(CliTest, IngestAndTraceHistogram) {
  write_prices("prices.csv", 4, 400, 23);
  const std::string returns = path("returns.tsv").string();
  ASSERT_EQ(run("ingest --input \"" + path("prices.csv").string() + "\" --dt 1 --output \"" + returns + "\"").status, 0);
  const auto rp = load_return_panel(returns);
  EXPECT_EQ(rp.assets(), 4u);
  EXPECT_EQ(rp.days(), 400u);

  const std::string hist = path("hist.tsv").string();
  const auto r = run("trace-hist --input \"" + returns + "\" --T 50 --bins 10 --normalize --output \"" + hist + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  std::istringstream in(slurp(hist));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "lower\tupper\tcount\tdensity");
  std::size_t rows = 0, total = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    double lo = 0.0, hi = 0.0;
    std::size_t count = 0;
    ls >> lo >> hi >> count;
    total += count;
    ++rows;
  }
  EXPECT_EQ(rows, 10u);
  EXPECT_EQ(total, 351u);
}

TEST_F(CliTest, ErrorsAreSingleLineWithStage) {
  auto r = run("fit --input \"" + path("missing.csv").string() + "\" --output \"" + path("x.json").string() + "\"");
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(single_error_line(r.err, "ingest")) << r.err;
  EXPECT_FALSE(fs::exists(path("x.json")));

  r = run("eval --model beta_prime --N 8 --L 2 --grid 1:2 --output \"" + path("c.tsv").string() + "\"");
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(single_error_line(r.err, "config")) << r.err;

  r = run("eval --model beta_prime --N 8 --output \"" + path("c.tsv").string() + "\"");
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(single_error_line(r.err, "config")) << r.err;

  r = run("sample --N 8 --L 2 --K 30 --T 20 --output \"" + path("s.tsv").string() + "\"");
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(single_error_line(r.err, "sample")) << r.err;

  r = run("frobnicate");
  EXPECT_NE(r.status, 0);
  EXPECT_TRUE(single_error_line(r.err, "config")) << r.err;
}
