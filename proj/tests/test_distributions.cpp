#include <gtest/gtest.h>

#include <boost/math/special_functions/beta.hpp>

#include <ensemble_forge/distributions.hpp>
#include <ensemble_forge/goodness.hpp>
#include <ensemble_forge/montecarlo.hpp>

#include <numbers>

#include "oracles.hpp"

using namespace ensemble_forge;
using oracle::rel_err;

namespace {

constexpr double kPi = std::numbers::pi;

/// Scale-mixture oracle: int p(x) (2 pi x)^(-K/2) det(Sigma)^(-1/2) exp(-q / 2x) dx.
double compound_density(double q, double k, double log_det, double n, double l) {
  auto integrand = [&](double x) {
    if (x == 0.0) return 0.0;
    return std::exp(log_beta_prime_pdf(x, n, l) - 0.5 * k * std::log(2.0 * kPi * x) - 0.5 * log_det - 0.5 * q / x);
  };
  return oracle::half_line_split(integrand, 1.0);
}

}  // namespace

TEST(DeformedWishart, UnitExample) {
  const auto ep = EnsembleParams::identity(1, 1.0, 2.0, true);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1, 1);
  // Gamma((N+NK+L)/2) / (Gamma((N+L)/2) sqrt(pi)) with (N+NK+L)/2 = 2.
  EXPECT_NEAR(deformed_wishart_logpdf(a, ep), std::log(1.0 / (std::tgamma(1.5) * std::sqrt(kPi))), 1e-14);
}

TEST(DeformedWishart, NormalizedOverOneByTwoMatrices) {
  const auto ep = EnsembleParams::identity(1, 2.0, 2.0, true);
  // Density depends on A only through |A|^2; integrate in polar coordinates.
  const double mass = oracle::half_line([&](double r) {
    Eigen::MatrixXd a(1, 2);
    a << r, 0.0;
    return 2.0 * kPi * r * std::exp(deformed_wishart_logpdf(a, ep));
  });
  EXPECT_NEAR(mass, 1.0, 1e-6);
}

TEST(DeformedWishart, NormalizedWithGeneralSigma) {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2.0, 0.6, 0.6, 0.5;
  const auto ep = EnsembleParams::make(1.0, 3.0, sigma, true);
  // K=2, N=1: A is a 2-vector; integrate in whitened polar coordinates.
  const Eigen::MatrixXd chol = sigma.llt().matrixL();
  const double jac = chol.determinant();
  const double mass = oracle::half_line([&](double r) {
    Eigen::MatrixXd a = chol * Eigen::Vector2d(r, 0.0);
    return jac * 2.0 * kPi * r * std::exp(deformed_wishart_logpdf(a, ep));
  });
  EXPECT_NEAR(mass, 1.0, 1e-6);
}

TEST(DeformedWishart, TraceLawMatchesSampler) {
  // A depends only on t = Tr A^T Sigma^-1 A; the NK-dimensional shell volume
  // makes t/N ~ BetaPrime with shapes (NK/2, (N+L)/2).
  const double n = 4.0, l = 2.0;
  const auto ep = EnsembleParams::identity(3, n, l, true);
  RandomStream rng({42, 0});
  std::vector<double> ts(100000);
  for (auto& t : ts) {
    const Eigen::MatrixXd a = sample_wishart_matrix(ep, rng);
    t = (a.transpose() * a).trace();
  }
  const double alpha = n * 3.0 / 2.0, beta = (n + l) / 2.0;
  EXPECT_LT(ks_distance(std::span<const double>(ts),
                        [&](double t) { return boost::math::ibeta(alpha, beta, (t / n) / (1.0 + t / n)); }),
            0.01);
}

TEST(DeformedWishart, Preconditions) {
  const auto ep = EnsembleParams::identity(2, 2.5, 2.0);
  EXPECT_THROW(deformed_wishart_logpdf(Eigen::MatrixXd::Zero(2, 2), ep), InvalidArgument);
  const auto ep2 = EnsembleParams::identity(2, 2.0, 2.0, true);
  EXPECT_THROW(deformed_wishart_logpdf(Eigen::MatrixXd::Zero(2, 3), ep2), InvalidArgument);
  Eigen::MatrixXd singular(2, 2);
  singular << 1.0, 1.0, 1.0, 1.0;
  EXPECT_THROW(EnsembleParams::make(2.0, 2.0, singular), NumericalError);
}

TEST(AveragedPdf, MatchesCompoundIntegral) {
  const auto ep = EnsembleParams::identity(3, 8.0, 2.0);
  Eigen::VectorXd r(3);
  r << 1.0, 0.0, -1.0;
  EXPECT_LT(rel_err(averaged_pdf(r, ep), compound_density(2.0, 3.0, 0.0, 8.0, 2.0)), 1e-6);
}

TEST(AveragedPdf, MatchesCompoundIntegralGeneralSigma) {
  Eigen::MatrixXd sigma(3, 3);
  sigma << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5;
  const auto ep = EnsembleParams::make(8.13, 2.24, sigma);
  Eigen::VectorXd r(3);
  r << 0.4, -1.1, 2.0;
  const double q = r.dot(sigma.ldlt().solve(r));
  EXPECT_LT(rel_err(averaged_pdf(r, ep), compound_density(q, 3.0, std::log(sigma.determinant()), 8.13, 2.24)),
            1e-6);
}

TEST(AveragedPdf, DependsOnlyOnQuadraticForm) {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2.0, 0.5, 0.5, 1.0;
  const auto ep = EnsembleParams::make(8.0, 2.0, sigma);
  const Eigen::MatrixXd chol = sigma.llt().matrixL();
  const Eigen::VectorXd r1 = chol * Eigen::Vector2d(1.5, 0.0);
  const Eigen::VectorXd r2 = chol * Eigen::Vector2d(1.5 * std::cos(1.0), 1.5 * std::sin(1.0));
  EXPECT_LT(rel_err(averaged_pdf(r1, ep), averaged_pdf(r2, ep)), 1e-12);
}

TEST(AveragedPdf, UnitMassInTwoDimensions) {
  const auto ep = EnsembleParams::identity(2, 8.0, 2.0);
  const double mass =
      oracle::half_line([&](double rho) { return 2.0 * kPi * rho * averaged_pdf(Eigen::Vector2d(rho, 0.0), ep); });
  EXPECT_NEAR(mass, 1.0, 1e-5);
}

TEST(MarginalPdf, Symmetric) {
  for (double x : {0.3, 1.0, 4.5}) EXPECT_LT(rel_err(marginal_pdf(x, 8.13, 2.24), marginal_pdf(-x, 8.13, 2.24)), 1e-12);
}

TEST(MarginalPdf, NormalizationAndSecondMoment) {
  const double n = 8.13, l = 2.24;
  const double mass = 2.0 * oracle::half_line([&](double x) { return marginal_pdf(x, n, l); });
  const double m2 = 2.0 * oracle::half_line([&](double x) { return x * x * marginal_pdf(x, n, l); });
  EXPECT_NEAR(mass, 1.0, 1e-7);
  EXPECT_NEAR(m2, n / (n + l - 2.0), 1e-6);
}

TEST(MarginalPdf, EqualsOneDimensionalAveragedPdf) {
  const auto ep = EnsembleParams::identity(1, 8.13, 2.24);
  for (double x : {0.0, 0.5, 3.0, 9.0}) {
    Eigen::VectorXd r(1);
    r << x;
    EXPECT_LT(rel_err(marginal_pdf(x, 8.13, 2.24), averaged_pdf(r, ep)), 1e-12);
    EXPECT_LT(rel_err(marginal_pdf(x, 8.13, 2.24), compound_density(x * x, 1.0, 0.0, 8.13, 2.24)), 1e-6);
  }
}

TEST(MarginalPdf, HeavierTailsThanBaseline) {
  for (double x = 3.25; x <= 10.0; x += 0.25) EXPECT_GT(marginal_pdf(x, 8.13, 2.24), baseline_marginal_pdf(x, 8.13));
}

TEST(MarginalPdf, LargerLMovesTowardBaseline) {
  const double n = 8.0;
  double prev = std::numeric_limits<double>::infinity();
  for (double l : {2.0, 5.0, 10.0, 20.0, 50.0}) {
    const double v = marginal_pdf(6.0, n, l);
    EXPECT_LT(v, prev) << l;
    EXPECT_GT(v, 0.0);
    prev = v;
  }
}

TEST(RadialPdf, NormalizedAtK306) {
  const double mass = integrate_half_line_or_throw([](double rho) { return radial_pdf(rho, 306, 8.13, 2.24); }, 17.0,
                                                   {.abs_tol = 0.0, .rel_tol = 1e-10}, "mass", 0.2);
  EXPECT_NEAR(mass, 1.0, 1e-6);
  EXPECT_NEAR(oracle::half_line_split([](double rho) { return radial_pdf(rho, 306, 8.13, 2.24); }, 17.0), 1.0, 1e-6);
}

TEST(RadialPdf, OneDimensionalChangeOfVariables) {
  const auto ep = EnsembleParams::identity(1, 8.0, 2.0);
  for (double rho : {0.0, 0.2, 1.0, 5.0}) {
    Eigen::VectorXd r(1);
    r << rho;
    EXPECT_LT(rel_err(radial_pdf(rho, ep), 2.0 * averaged_pdf(r, ep)), 1e-8);
  }
}

TEST(RadialPdf, ShellVolumeTimesAveragedPdf) {
  const auto ep = EnsembleParams::identity(10, 8.0, 2.0);
  for (double rho : {0.5, 3.0, 8.0}) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(10);
    r(0) = rho;
    const double shell = 2.0 * std::pow(kPi, 5.0) / std::tgamma(5.0) * std::pow(rho, 9.0);
    EXPECT_LT(rel_err(radial_pdf(rho, ep), shell * averaged_pdf(r, ep)), 1e-10);
  }
  EXPECT_EQ(radial_pdf(0.0, ep), 0.0);
  EXPECT_THROW(radial_pdf(-1.0, ep), InvalidArgument);
}

TEST(RadialPdf, AlgebraicTailExponentAsymptotically) {
  // rho^(K-1) U(a, b, rho^2/2) ~ rho^(K-1-2a) = rho^-(N+L+1) once rho^2 >> K(N+L/2).
  const double slope = (log_radial_pdf(1e4, 306, 8.0, 2.0) - log_radial_pdf(3e3, 306, 8.0, 2.0)) /
                       (std::log(1e4) - std::log(3e3));
  EXPECT_NEAR(slope, -11.0, 0.1);
}

TEST(BaselineMarginal, SymmetricNormalizedUnitVariance) {
  EXPECT_EQ(baseline_marginal_pdf(1.3, 8.0), baseline_marginal_pdf(-1.3, 8.0));
  const double mass = 2.0 * oracle::half_line([](double x) { return baseline_marginal_pdf(x, 8.0); });
  const double m2 = 2.0 * oracle::half_line([](double x) { return x * x * baseline_marginal_pdf(x, 8.0); });
  EXPECT_NEAR(mass, 1.0, 1e-7);
  EXPECT_NEAR(m2, 1.0, 1e-6);
}

TEST(BaselineMarginal, VarianceGammaClosedForm) {
  // x ~ Gamma(N/2, scale 2/N) mixed into a unit Gaussian, using
  // int x^(nu-1) exp(-a x - b/x) dx = 2 (b/a)^(nu/2) K_nu(2 sqrt(ab)).
  const double n = 8.0, k = n / 2.0, theta = 2.0 / n, nu = k - 0.5;
  for (double r : {0.4, 2.0, 5.0}) {
    const double want = 2.0 / (std::tgamma(k) * std::pow(theta, k) * std::sqrt(2.0 * kPi)) *
                        std::pow(r * r / n, 0.5 * nu) * boost::math::cyl_bessel_k(nu, std::abs(r) * std::sqrt(n));
    EXPECT_LT(rel_err(baseline_marginal_pdf(r, n), want), 1e-9) << r;
  }
}

TEST(BaselineMarginal, BelowDeformedTails) {
  for (int i = 0; i < 50; ++i) {
    const double r = 4.0 + 4.0 * i / 49.0;
    EXPECT_LT(baseline_marginal_pdf(r, 8.0), marginal_pdf(r, 8.13, 2.24));
  }
}

TEST(SigmaDeformed, Examples) {
  const auto ep = EnsembleParams::identity(3, 8.0, 2.0);
  EXPECT_EQ((sigma_deformed(ep).matrix - ep.sigma.matrix).cwiseAbs().maxCoeff(), 0.0);
  Eigen::MatrixXd sigma = Eigen::Vector2d(2.0, 3.0).asDiagonal();
  const auto ep2 = EnsembleParams::make(20.98, 2.07, sigma);
  const Eigen::MatrixXd want = sigma * (20.98 / 21.05);
  EXPECT_LT((sigma_deformed(ep2).matrix - want).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(sigma_deformed(EnsembleParams::identity(2, 1.0, 0.5)), InvalidArgument);
}
