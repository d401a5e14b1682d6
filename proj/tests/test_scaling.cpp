#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "lrdext/scaling.hpp"

using namespace lrdext;

namespace {

const SlowlyVaryingFn kOne = SlowlyVaryingFn::constant(1.0);

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double upper_phi(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

// Composite Simpson on [a, b], independent of the library's quadrature.
double simpson(const std::function<double(double)>& f, double a, double b, int panels = 40000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

struct CaseSetup {
  const char* name;
  MarginalX mx;
  TargetMarginalY ty;
  MdaCase expected;
};

std::vector<CaseSetup> analytic_cases() {
  return {
      {"case1 a0=2", MarginalX::pareto(4.0), TargetMarginalY::pareto(2.0), MdaCase::case1},
      {"case1 a0=6", MarginalX::pareto(4.0), TargetMarginalY::pareto(6.0), MdaCase::case1},
      {"case2", MarginalX::pareto(4.0), TargetMarginalY::exponential(), MdaCase::case2},
      {"case3 a0=2", MarginalX::gaussian(1.0), TargetMarginalY::pareto(2.0), MdaCase::case3},
      {"case3 a0=6", MarginalX::gaussian(1.0), TargetMarginalY::pareto(6.0), MdaCase::case3},
      {"case4", MarginalX::gaussian(1.0), TargetMarginalY::exponential(), MdaCase::case4},
  };
}

}  // namespace

TEST(SelectP, Examples) {
  EXPECT_EQ(select_p(0.8), 1);
  EXPECT_EQ(select_p(0.75), 2);
  EXPECT_EQ(select_p(0.6), 5);
  EXPECT_THROW(select_p(0.5), DomainError);
}

TEST(SelectP, AlwaysLegalForDnp) {
  for (double beta = 0.51; beta < 1.0; beta += 0.01) {
    const int p = select_p(beta);
    EXPECT_GT((p + 1) * (2.0 * beta - 1.0), 1.0);
    if (p > 1) {
      EXPECT_LE(p * (2.0 * beta - 1.0), 1.0);
    }
    EXPECT_GT(d_np(1e4, p, beta, kOne), 0.0);
  }
}

TEST(SigmaNp, Examples) {
  EXPECT_NEAR(sigma_np_asymptotic(1e4, 1, 0.8, kOne), std::pow(10.0, 2.8), 1e-9);
  EXPECT_THROW(sigma_np_asymptotic(1e4, 5, 0.8, kOne), DomainError);
  // sigma_{n,2} is only defined when 2 < 1/(2 beta - 1); use beta = 0.7.
  const double ratio = sigma_np_asymptotic(1e4, 2, 0.7, kOne) / sigma_np_asymptotic(1e4, 1, 0.7, kOne);
  EXPECT_NEAR(ratio, std::pow(1e4, -0.2), 1e-12);
}

TEST(SigmaNp, RatioRelationWithSlowlyVaryingL0) {
  const auto L = SlowlyVaryingFn::log_power(1.0, 0.5);
  const double n = 1e5;
  const double beta = 0.7;
  const double ratio = sigma_np_asymptotic(n, 2, beta, L) / sigma_np_asymptotic(n, 1, beta, L);
  EXPECT_NEAR(ratio, std::pow(n, -(beta - 0.5)) * L(n), 1e-12);
}

TEST(Dnp, Examples) {
  const double expected = std::pow(1e4, -0.2) * std::pow(std::log(1e4), 2.5) * std::pow(std::log(std::log(1e4)), 0.75);
  EXPECT_NEAR(expected, 74.2, 0.05);
  EXPECT_NEAR(d_np(1e4, 1, 0.8, kOne), expected, 1e-10);
  EXPECT_THROW(d_np(10.0, 1, 0.8, kOne), DomainError);
}

TEST(Dnp, EventuallyDecreasing) {
  // d log d_np / d log n = -0.2 + 2.5 / log n + 0.75 / (log n log log n): the
  // log powers win until log n is roughly 14.
  for (double n = std::pow(2.0, 21); n < 1e15; n *= 2.0) {
    EXPECT_LT(d_np(2.0 * n, 1, 0.8, kOne), d_np(n, 1, 0.8, kOne)) << n;
  }
  EXPECT_GT(d_np(2048.0, 1, 0.8, kOne), d_np(1024.0, 1, 0.8, kOne));
}

TEST(Dnp, SecondBranch) {
  // beta = 0.55, p = 1: (p + 1)(2 beta - 1) = 0.2 < 1.
  const double n = 1e6;
  const double expected = std::pow(n, -0.05) * std::sqrt(std::log(n)) * std::pow(std::log(std::log(n)), 0.75);
  EXPECT_NEAR(d_np(n, 1, 0.55, kOne), expected, 1e-12);
}

TEST(XiThreshold, Examples) {
  EXPECT_NEAR(xi_threshold(MdaCase::case1, 0.7, 4.0, 5.0), 0.95 / 1.05, 1e-14);
  EXPECT_DOUBLE_EQ(xi_threshold(MdaCase::case4, 0.8, std::nullopt, std::nullopt), 0.8);
  EXPECT_NEAR(xi_threshold(MdaCase::case3, 0.8, std::nullopt, 6.0), 0.96, 1e-14);
  EXPECT_NEAR(xi_threshold(MdaCase::case2, 0.8, 4.0, std::nullopt), 1.05 / 1.25, 1e-14);
}

TEST(XiThreshold, Infeasible) {
  EXPECT_THROW(xi_threshold(MdaCase::case3, 0.8, std::nullopt, 5.0), InfeasibleError);
  EXPECT_THROW(xi_threshold(MdaCase::case2, 0.8, 3.0, std::nullopt), InfeasibleError);
  EXPECT_THROW(xi_threshold(MdaCase::case1, 0.8, std::nullopt, 6.0), ConfigError);
  try {
    xi_threshold(MdaCase::case3, 0.8, std::nullopt, 4.0);
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("1/(1-beta)"), std::string::npos);
  }
}

TEST(XiThreshold, InUnitIntervalWhenFeasible) {
  for (double beta = 0.55; beta < 1.0; beta += 0.05) {
    for (double alpha : {4.0, 6.0, 20.0}) {
      for (double alpha0 : {1.0 / (1.0 - beta) + 0.01, 30.0}) {
        for (auto kase : {MdaCase::case1, MdaCase::case2, MdaCase::case3, MdaCase::case4}) {
          const double t = xi_threshold(kase, beta, alpha, alpha0);
          EXPECT_GT(t, 0.0);
          EXPECT_LT(t, 1.0);
        }
      }
    }
  }
}

TEST(ExtremeCount, Ceil) {
  EXPECT_EQ(extreme_count(32768, 0.9), 11586u);
  EXPECT_EQ(extreme_count(100, 0.5), 10u);
}

TEST(BigA, Examples) {
  LFamily lf;
  lf.kase = MdaCase::case4;
  lf.L24 = kOne;
  EXPECT_NEAR(big_A(MdaCase::case4, 1000, 100, lf), 10.0, 1e-12);

  const auto f2 = build_l_family(MarginalX::pareto(4.0), TargetMarginalY::exponential());
  EXPECT_EQ(f2.kase, MdaCase::case2);
  EXPECT_NEAR(big_A(MdaCase::case2, 1e4, 1e2, f2), std::pow(100.0, 1.25) * 0.3125, 1e-9);
  EXPECT_NEAR(big_A(MdaCase::case2, 1e4, 1e2, f2), 98.821, 1e-3);
}

TEST(BigA, MissingComponentAndRange) {
  LFamily lf;
  EXPECT_THROW(big_A(MdaCase::case1, 1000, 10, lf), ConfigError);
  lf.L24 = kOne;
  EXPECT_THROW(big_A(MdaCase::case4, 100, 100, lf), DomainError);
}

TEST(BigA, IncreasingInN) {
  for (const auto& c : analytic_cases()) {
    const auto lf = build_l_family(c.mx, c.ty);
    EXPECT_EQ(lf.kase, c.expected) << c.name;
    double prev = 0.0;
    for (double n = 1e3; n <= 1e8; n *= 10.0) {
      const double a = big_A(lf.kase, n, 0.01 * n, lf);
      EXPECT_GT(a, 0.0);
      EXPECT_GE(a, prev) << c.name;
      prev = a;
    }
  }
}

TEST(BigA, ExponentWhenCorrectionsConstant) {
  for (const auto& c : analytic_cases()) {
    const auto lf = build_l_family(c.mx, c.ty);
    const double e = big_A_exponent(lf.kase, lf.alpha, lf.alpha0);
    const auto* L = lf.kase == MdaCase::case1   ? &lf.L21
                    : lf.kase == MdaCase::case2 ? &lf.L22
                    : lf.kase == MdaCase::case3 ? &lf.L23
                                                : &lf.L24;
    ASSERT_TRUE(L->has_value());
    if (!(*L)->constant_value()) {
      // Gaussian-based corrections: A_n / L2j(n/k_n) carries the pure power.
      const double u = 1e3;
      EXPECT_NEAR(std::log(big_A(lf.kase, 1e6, 1e3, lf) / (**L)(u)) / std::log(u), e, 1e-6) << c.name;
      continue;
    }
    const double a1 = big_A(lf.kase, 1e5, 1e2, lf);
    const double a2 = big_A(lf.kase, 1e7, 1e2, lf);
    EXPECT_NEAR(std::log(a2 / a1) / std::log(100.0), e, 1e-6) << c.name;
  }
  EXPECT_DOUBLE_EQ(big_A_exponent(MdaCase::case1, 4.0, 6.0), 1.0 + 0.25 - 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(big_A_exponent(MdaCase::case3, kNaN, 6.0), 1.0 - 1.0 / 6.0);
}

TEST(KaramataK, ParetoExponentialExample) {
  const auto mx = MarginalX::pareto(4.0);
  const auto ty = TargetMarginalY::exponential();
  const double closed = 3.2 * (std::pow(1e-2, 1.25) - std::pow(1e4, -1.25));
  const double K = karamata_K(mx, ty, 1e4, 1e2);
  EXPECT_NEAR(K, closed, 1e-6 * closed);
  EXPECT_NEAR(K, 0.0100873, 1e-7);
  const auto lf = build_l_family(mx, ty);
  EXPECT_NEAR(big_A(lf.kase, 1e4, 1e2, lf) * K, 0.9969, 1e-4);
}

TEST(KaramataK, IdenticalMarginals) {
  for (const auto& mx : {MarginalX::gaussian(1.0), MarginalX::gaussian(2.5), MarginalX::pareto(5.0)}) {
    EXPECT_NEAR(karamata_K(mx, TargetMarginalY::same_as(mx), 1e4, 250), 249.0 / 1e4, 1e-12);
  }
}

TEST(KaramataK, ProductTendsToOneInAllCases) {
  // k_n fixed at 1000, n = k_n u.
  for (const auto& c : analytic_cases()) {
    const auto lf = build_l_family(c.mx, c.ty);
    std::vector<double> dev;
    for (double u : {1e2, 1e3, 1e4, 1e5}) {
      dev.push_back(std::abs(big_A(lf.kase, 1e3 * u, 1e3, lf) * karamata_K(c.mx, c.ty, 1e3 * u, 1e3) - 1.0));
    }
    EXPECT_LE(dev[2], 0.05) << c.name;
    for (std::size_t i = 1; i < dev.size(); ++i) EXPECT_LE(dev[i], dev[i - 1] + 1e-9) << c.name << " step " << i;
  }
}

TEST(Centering, Examples) {
  EXPECT_NEAR(centering(TargetMarginalY::pareto(2.0), 100, 10), 200.0 * std::sqrt(0.1), 1e-8);
  EXPECT_NEAR(centering(TargetMarginalY::pareto(2.0), 100, 10), 63.2456, 1e-4);
  EXPECT_NEAR(centering(TargetMarginalY::exponential(), 100, 10), 10.0 * (1.0 - std::log(0.1)), 1e-10);
  EXPECT_NEAR(centering(TargetMarginalY::exponential(), 100, 10), 33.0259, 1e-4);
  EXPECT_NEAR(centering(TargetMarginalY::exponential(), 100, 100), 100.0, 1e-10);
}

TEST(Centering, InfiniteMean) {
  EXPECT_THROW(centering(TargetMarginalY::pareto(1.0), 100, 10), NumericError);
  EXPECT_THROW(centering(TargetMarginalY::exponential(), 100, 0), DomainError);
}

TEST(IidScale, Examples) {
  EXPECT_NEAR(iid_scale(1e4, 1e2, 4.0), 0.031623, 1e-6);
  EXPECT_NEAR(iid_scale(1e6, 1e3, 1e15), 1.0 / std::sqrt(1e3), 1e-9);
  EXPECT_THROW(iid_scale(1e4, 1e2, 2.0), DomainError);
}

TEST(IidScale, ContrastOnGrid) {
  const double beta = 0.8;
  const auto coeffs = CoefficientModel::regularly_varying(beta, kOne, 1 << 20);
  double prev_rel = 0.0, prev_raw = std::numeric_limits<double>::infinity();
  for (int e = 10; e <= 20; e += 2) {
    const std::size_t n = std::size_t{1} << e;
    const double k = static_cast<double>(extreme_count(n, 0.9));
    const double s = sigma_n1_exact(coeffs.coefficients(), 1.0, n);
    const auto c = iid_contrast(static_cast<double>(n), k, s, 4.0);
    EXPECT_GT(c.relative, prev_rel) << n;
    // With the whole-sum scalings kept, the power is beta - 1 + (1 - xi)(1/2 + 1/alpha) < 0.
    EXPECT_LT(c.raw, prev_raw) << n;
    prev_rel = c.relative;
    prev_raw = c.raw;
  }
}

TEST(PowerRank, IdenticalMarginalsGiveOne) {
  const auto mx = MarginalX::gaussian(1.0);
  EXPECT_NEAR(power_rank_integral(mx, TargetMarginalY::same_as(mx)), 1.0, 1e-8);
}

TEST(PowerRank, GaussianExponentialCrossCheck) {
  const double v = power_rank_integral(MarginalX::gaussian(1.0), TargetMarginalY::exponential());
  const double oracle = simpson([](double x) { return phi(x) * phi(x) / upper_phi(x); }, -38.0, 30.0);
  EXPECT_GT(v, 0.0);
  EXPECT_NEAR(v, oracle, 1e-7);
}

TEST(PowerRank, GaussianParetoCrossCheck) {
  // f_Y Q_Y(y) = 2 (1 - y)^{3/2} on the whole unit interval.
  const double v = power_rank_integral(MarginalX::gaussian(1.0), TargetMarginalY::pareto(2.0));
  const double oracle =
      simpson([](double x) { return phi(x) * phi(x) / (2.0 * std::pow(upper_phi(x), 1.5)); }, -38.0, 30.0);
  EXPECT_GT(v, 0.0);
  EXPECT_NEAR(v, oracle, 1e-7);
}

TEST(ConditionDr, GaussianExponential) {
  const double v = check_condition_Dr(MarginalX::gaussian(1.0), TargetMarginalY::exponential(), 1);
  const double oracle = simpson([](double x) { return phi(x) * phi(x) / upper_phi(x); }, 0.0, 30.0);
  EXPECT_NEAR(v, oracle, 1e-7);
}

TEST(ConditionDr, GaussianPareto) {
  const double v = check_condition_Dr(MarginalX::gaussian(1.0), TargetMarginalY::pareto(4.0), 1);
  const double oracle =
      simpson([](double x) { return phi(x) * phi(x) / (4.0 * std::pow(upper_phi(x), 1.25)); }, 0.0, 30.0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, oracle, 1e-7);
}

TEST(ConditionDr, SecondOrder) {
  // F''(x) = -x phi(x).
  const double v = check_condition_Dr(MarginalX::gaussian(1.0), TargetMarginalY::exponential(), 2);
  const double oracle = simpson([](double x) { return -x * phi(x) * phi(x) / upper_phi(x); }, 0.0, 30.0);
  EXPECT_NEAR(v, oracle, 1e-7);
}

TEST(ConditionDr, Preconditions) {
  EXPECT_THROW(check_condition_Dr(MarginalX::gaussian(1.0), TargetMarginalY::exponential(), 0), DomainError);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  std::vector<double> sample(20000);
  for (auto& v : sample) v = nd(rng);
  const auto emp = fit_empirical_marginal(sample, 0.05, TailModel::gumbel);
  EXPECT_THROW(check_condition_Dr(emp, TargetMarginalY::exponential(), 1), UnsupportedError);
}

TEST(Bundle, ReferenceCase4) {
  const auto coeffs = truncated_coefficients(0.8, kOne);
  const auto dist = InnovationDist::gaussian(1.0);
  const auto mx = MarginalX::gaussian_for(coeffs, dist);
  const auto ty = TargetMarginalY::exponential();
  const auto b = make_scaling_bundle(coeffs, dist, mx, ty, 1 << 15, 0.9);
  EXPECT_EQ(b.kase, MdaCase::case4);
  EXPECT_EQ(b.p, 1);
  EXPECT_EQ(b.k_n, 11586u);
  EXPECT_GT(b.A_n, 0.0);
  EXPECT_GT(b.sigma_n1, 0.0);
  EXPECT_NEAR(b.mu_n, centering(ty, 32768.0, 11586.0), 1e-9);
  EXPECT_NEAR(b.AK(), 1.0, 0.1);
  EXPECT_DOUBLE_EQ(b.xi_threshold, 0.8);
}

TEST(Bundle, InfeasibleXiRejected) {
  const auto coeffs = truncated_coefficients(0.8, kOne);
  const auto dist = InnovationDist::gaussian(1.0);
  const auto mx = MarginalX::gaussian_for(coeffs, dist);
  EXPECT_THROW(make_scaling_bundle(coeffs, dist, mx, TargetMarginalY::exponential(), 1 << 12, 0.7), InfeasibleError);
  EXPECT_THROW(make_scaling_bundle(coeffs, dist, mx, TargetMarginalY::pareto(6.0), 1 << 12, 0.95), InfeasibleError);
}
