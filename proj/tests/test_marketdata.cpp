#include <gtest/gtest.h>

#include <ensemble_forge/marketdata.hpp>
#include <ensemble_forge/rng.hpp>

#include <sstream>

using namespace ensemble_forge;

namespace {

const char* kThreeByFive =
    "date,AAA,BBB,CCC\n"
    "2005-10-03,100,20.5,7.25\n"
    "2005-10-04,101,20.25,7.5\n"
    "2005-10-05,102.5,20.75,7.0\n"
    "2005-10-06,101.5,21,7.125\n"
    "2005-10-07,103,21.5,7.375\n";

PriceTable parse(const std::string& text) {
  std::istringstream in(text);
  return read_price_table(in);
}

template <class Fn>
std::string error_of(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(PriceTable, ParsesThreeTickersFiveDays) {
  const auto pt = parse(kThreeByFive);
  EXPECT_EQ(pt.assets(), 3u);
  EXPECT_EQ(pt.days(), 5u);
  EXPECT_EQ(pt.tickers[1], "BBB");
  EXPECT_EQ(pt.timestamps.back(), "2005-10-07");
  EXPECT_DOUBLE_EQ(pt.prices(2, 1), 7.5);
}

TEST(PriceTable, AcceptsCrlf) {
  std::string text = kThreeByFive;
  std::string crlf;
  for (char c : text) {
    if (c == '\n') crlf += '\r';
    crlf += c;
  }
  const auto pt = parse(crlf);
  EXPECT_EQ(pt.days(), 5u);
  EXPECT_DOUBLE_EQ(pt.prices(2, 4), 7.375);
}

TEST(PriceTable, RejectsZeroPriceWithPosition) {
  const std::string msg = error_of([] { parse("date,A,B\n2001-01-02,1,2\n2001-01-03,0.0,2\n"); });
  EXPECT_NE(msg.find("non-positive price"), std::string::npos);
  EXPECT_NE(msg.find("row 3, column 2"), std::string::npos);
}

TEST(PriceTable, RejectsDuplicateTimestamp) {
  const std::string msg = error_of([] { parse("date,A,B\n2001-01-02,1,2\n2001-01-02,1,2\n"); });
  EXPECT_NE(msg.find("duplicate timestamp"), std::string::npos);
  EXPECT_NE(msg.find("row 3, column 1"), std::string::npos);
}

TEST(PriceTable, RejectsMalformedRows) {
  EXPECT_THROW(parse("date,A,B\n2001-01-02,1\n"), ParseError);
  EXPECT_THROW(parse("date,A,B\n2001-01-02,1,x\n2001-01-03,1,2\n"), ParseError);
  EXPECT_THROW(parse("date,A,B\n2001-01-02,1,\n2001-01-03,1,2\n"), ParseError);
  EXPECT_THROW(parse("date,A,B\n01/02/2001,1,2\n2001-01-03,1,2\n"), ParseError);
  EXPECT_THROW(parse("date,A,B\n2001-01-03,1,2\n2001-01-02,1,2\n"), ParseError);
  EXPECT_THROW(parse("day,A,B\n2001-01-02,1,2\n2001-01-03,1,2\n"), ParseError);
  EXPECT_THROW(parse("date,A\n2001-01-02,1\n2001-01-03,1\n"), ParseError);
  EXPECT_THROW(parse("date,A,B\n2001-01-02,1,2\n"), ParseError);
}

TEST(PriceTable, RoundTripsBitIdentically) {
  const std::string text =
      "date,A,B\n2001-01-02,100.125,0.1\n2001-01-03,99.99,1e-05\n2001-01-04,123456.789,3\n";
  const auto pt = parse(text);
  std::ostringstream out;
  write_price_table(out, pt);
  EXPECT_EQ(out.str(), text);
  const auto again = parse(out.str());
  EXPECT_EQ((again.prices.array() == pt.prices.array()).all(), true);
}

TEST(Returns, SimpleReturnFormula) {
  const auto pt = parse("date,A,B\n2001-01-02,100,50\n2001-01-03,101,50\n");
  const auto rp = compute_returns(pt, 1);
  ASSERT_EQ(rp.days(), 1u);
  EXPECT_NEAR(rp.values(0, 0), 0.01, 1e-15);
  EXPECT_EQ(rp.values(1, 0), 0.0);
  EXPECT_FALSE(rp.demeaned);
  EXPECT_EQ(rp.timestamps[0], "2001-01-02");
}

TEST(Returns, HorizonSetsLength) {
  const auto pt = parse(kThreeByFive);
  for (std::size_t dt = 1; dt <= 4; ++dt) {
    const auto rp = compute_returns(pt, dt);
    EXPECT_EQ(rp.days(), pt.days() - dt);
    EXPECT_EQ(rp.horizon, dt);
  }
  EXPECT_THROW(compute_returns(pt, 0), InvalidArgument);
  EXPECT_THROW(compute_returns(pt, 5), InvalidArgument);
}

TEST(Returns, LongPanelHorizonTwenty) {
  PriceTable pt;
  const std::size_t t_raw = 5290;
  pt.tickers = {"A", "B"};
  pt.prices.resize(2, t_raw);
  for (std::size_t t = 0; t < t_raw; ++t) {
    pt.timestamps.push_back(std::to_string(t));
    pt.prices(0, static_cast<Eigen::Index>(t)) = 100.0 + std::sin(0.01 * t);
    pt.prices(1, static_cast<Eigen::Index>(t)) = 50.0 + std::cos(0.02 * t);
  }
  EXPECT_EQ(compute_returns(pt, 20).days(), t_raw - 20);
}

TEST(Returns, ConstantPricesGiveZero) {
  const auto pt = parse("date,A,B\n2001-01-02,7,3\n2001-01-03,7,3\n2001-01-04,7,3\n");
  EXPECT_EQ(compute_returns(pt, 1).values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(compute_returns(pt, 2).values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Returns, ScaleInvariant) {
  auto pt = parse(kThreeByFive);
  const auto base = compute_returns(pt, 2);
  pt.prices.row(1) *= 37.25;
  const auto scaled = compute_returns(pt, 2);
  EXPECT_LT((scaled.values - base.values).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Returns, StrideSkipsStartDays) {
  const auto pt = parse(kThreeByFive);
  const auto rp = compute_returns(pt, 1, 2);
  ASSERT_EQ(rp.days(), 2u);
  EXPECT_EQ(rp.timestamps[1], "2005-10-05");
  EXPECT_NEAR(rp.values(0, 1), (101.5 - 102.5) / 102.5, 1e-15);
}

TEST(Returns, CompoundingMatchesPriceRatios) {
  const auto pt = parse(kThreeByFive);
  const auto daily = compute_returns(pt, 1);
  for (std::size_t dt = 1; dt <= 4; ++dt) {
    for (std::size_t stride : {1u, 2u}) {
      const auto direct = compute_returns(pt, dt, stride);
      const auto compounded = aggregate_returns(daily, dt, stride);
      ASSERT_EQ(direct.days(), compounded.days());
      EXPECT_LT((direct.values - compounded.values).cwiseAbs().maxCoeff(), 1e-14);
      EXPECT_EQ(direct.timestamps, compounded.timestamps);
    }
  }
}

TEST(Demean, TotalWindowExample) {
  ReturnPanel rp;
  rp.values.resize(1, 3);
  rp.values << 1, 2, 3;
  rp.timestamps = {"a", "b", "c"};
  const auto out = demean(rp);
  EXPECT_NEAR(out.values(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(out.values(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(out.values(0, 2), 1.0, 1e-15);
  EXPECT_TRUE(out.demeaned);
  EXPECT_TRUE(out.demean_window.is_total());
}

TEST(Demean, TotalWindowZeroMean) {
  RandomStream rng({11, 0});
  ReturnPanel rp;
  rp.values.resize(4, 997);
  for (Eigen::Index k = 0; k < 4; ++k) {
    for (Eigen::Index t = 0; t < 997; ++t) rp.values(k, t) = 0.03 * rng.normal() + 0.7 * k;
  }
  rp.timestamps.assign(997, "x");
  const auto out = demean(rp);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_LT(std::abs(out.values.row(k).mean()), 1e-12);
}

TEST(Demean, PricesToZeroMeanRows) {
  const auto out = demean(compute_returns(parse(kThreeByFive), 1));
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_LT(std::abs(out.values.row(k).mean()), 1e-12);
}

TEST(Demean, TrailingWindowMatchesLoop) {
  RandomStream rng({5, 1});
  const std::size_t t_tot = 200, window = 5;
  ReturnPanel rp;
  rp.values.resize(1, t_tot);
  for (std::size_t t = 0; t < t_tot; ++t) {
    rp.values(0, static_cast<Eigen::Index>(t)) = rng.normal();
    rp.timestamps.push_back("d" + std::to_string(t));
  }
  const auto out = demean(rp, DemeanWindow::trailing(window));
  ASSERT_EQ(out.days(), t_tot - window + 1);
  for (std::size_t i = 0; i < out.days(); ++i) {
    const std::size_t t = i + window - 1;
    double mean = 0.0;
    for (std::size_t s = t + 1 - window; s <= t; ++s) mean += rp.values(0, static_cast<Eigen::Index>(s));
    mean /= static_cast<double>(window);
    EXPECT_NEAR(out.values(0, static_cast<Eigen::Index>(i)), rp.values(0, static_cast<Eigen::Index>(t)) - mean,
                1e-15);
    EXPECT_EQ(out.timestamps[i], rp.timestamps[t]);
  }
}

TEST(Demean, WindowLongerThanPanelFails) {
  ReturnPanel rp;
  rp.values = Eigen::MatrixXd::Zero(2, 4);
  rp.timestamps.assign(4, "x");
  EXPECT_THROW(demean(rp, DemeanWindow::trailing(5)), InvalidArgument);
}

TEST(ReturnPanelIo, TsvRoundTrip) {
  const auto rp = demean(compute_returns(parse(kThreeByFive), 1));
  std::ostringstream out;
  write_return_panel(out, rp);
  EXPECT_EQ(out.str().substr(0, 16), "date\tAAA\tBBB\tCCC");
  std::istringstream in(out.str());
  const auto back = read_return_panel(in, 1, true);
  EXPECT_EQ(back.tickers, rp.tickers);
  EXPECT_EQ(back.timestamps, rp.timestamps);
  EXPECT_EQ((back.values.array() == rp.values.array()).all(), true);
}
