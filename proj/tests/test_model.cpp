#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "lrdext/model.hpp"
#include "lrdext/numerics.hpp"

using namespace lrdext;

namespace {

// Independent normal CDF from the C library, inverted by bisection.
double oracle_normal_quantile(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::numbers::sqrt2) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

// --- slowly varying functions ---------------------------------------------

TEST(SlowlyVarying, Examples) {
  EXPECT_DOUBLE_EQ(sv_eval(SlowlyVaryingFn::constant(1.0), 100.0), 1.0);
  EXPECT_NEAR(sv_eval(SlowlyVaryingFn::log_power(1.0, 0.5), std::numbers::e), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(
      sv_eval(SlowlyVaryingFn::ratio(SlowlyVaryingFn::constant(4.0), SlowlyVaryingFn::constant(1.0)), 10.0), 4.0);
  EXPECT_DOUBLE_EQ(sv_eval(SlowlyVaryingFn::scaled(3.0, SlowlyVaryingFn::constant(2.0)), 5.0), 6.0);
}

TEST(SlowlyVarying, DomainError) {
  EXPECT_THROW(sv_eval(SlowlyVaryingFn::constant(1.0), 1.0), DomainError);
  EXPECT_THROW(sv_eval(SlowlyVaryingFn::constant(1.0), 0.5), DomainError);
  EXPECT_THROW(SlowlyVaryingFn::constant(0.0), DomainError);
}

TEST(SlowlyVarying, PositiveAndSlowlyVarying) {
  const std::vector<SlowlyVaryingFn> fns = {
      SlowlyVaryingFn::constant(2.0), SlowlyVaryingFn::log_power(1.0, 0.5), SlowlyVaryingFn::log_power(2.0, -1.0),
      SlowlyVaryingFn::ratio(SlowlyVaryingFn::log_power(1.0, 1.0), SlowlyVaryingFn::constant(3.0)),
      *MarginalX::gaussian(1.0).L3()};
  for (const auto& L : fns) {
    for (double u : {1.5, 10.0, 1e3, 1e6}) {
      EXPECT_GT(L(u), 0.0) << L.describe();
    }
    // log-power defect at u = 1e6 is about |b| log 2 / log u.
    EXPECT_LT(slow_variation_defect(L), 0.1) << L.describe();
  }
}

TEST(SlowlyVarying, ConstantFolding) {
  const auto r = SlowlyVaryingFn::ratio(SlowlyVaryingFn::constant(6.0), SlowlyVaryingFn::constant(3.0));
  ASSERT_TRUE(r.constant_value());
  EXPECT_DOUBLE_EQ(*r.constant_value(), 2.0);
  EXPECT_FALSE(SlowlyVaryingFn::log_power(1.0, 0.5).constant_value());
}

TEST(SlowlyVarying, NumericRejectsNonPositive) {
  const auto L = SlowlyVaryingFn::numeric("bad", [](double) { return -1.0; });
  EXPECT_THROW(L(10.0), NumericError);
}

// --- coefficients and innovations ----------------------------------------

TEST(Coefficients, Convention) {
  const auto m = CoefficientModel::regularly_varying(0.75, SlowlyVaryingFn::constant(1.0), 1000);
  const auto c = m.coefficients();
  ASSERT_EQ(c.size(), 1001u);
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_DOUBLE_EQ(c[1], 1.0);
  EXPECT_NEAR(c[16], std::pow(16.0, -0.75), 1e-15);
  for (std::size_t k = 1; k < c.size(); ++k) {
    EXPECT_GT(c[k], 0.0);
    if (k > 1) {
      EXPECT_LE(c[k], c[k - 1]);
    }
  }
}

TEST(Coefficients, LogPowerL0ReadAtLeastE) {
  const auto L0 = SlowlyVaryingFn::log_power(1.0, 1.0);
  const auto m = CoefficientModel::regularly_varying(0.8, L0, 10);
  EXPECT_NEAR(m.coefficients()[2], std::pow(2.0, -0.8) * 1.0, 1e-15);
  EXPECT_NEAR(m.coefficients()[10], std::pow(10.0, -0.8) * std::log(10.0), 1e-15);
}

TEST(Coefficients, Rejections) {
  EXPECT_THROW(CoefficientModel::regularly_varying(0.5, SlowlyVaryingFn::constant(1.0), 10), DomainError);
  EXPECT_THROW(CoefficientModel::regularly_varying(1.0, SlowlyVaryingFn::constant(1.0), 10), DomainError);
  EXPECT_THROW(CoefficientModel::explicit_values({}), ShapeError);
}

TEST(Innovations, StudentTNeedsFourMoments) {
  EXPECT_THROW(InnovationDist::student_t(4.0, 1.0), DomainError);
  EXPECT_NO_THROW(InnovationDist::student_t(5.0, 1.0));
  EXPECT_DOUBLE_EQ(InnovationDist::student_t(5.0, 2.0).variance(), 4.0);
}

// --- marginal of X --------------------------------------------------------

TEST(MarginalX, Examples) {
  const auto g = MarginalX::gaussian(1.0);
  EXPECT_NEAR(marginal_eval(g, MarginalFn::Q, 0.5), 0.0, 1e-15);
  EXPECT_NEAR(marginal_eval(g, MarginalFn::Q, 0.975), oracle_normal_quantile(0.975), 1e-9);
  EXPECT_NEAR(marginal_eval(g, MarginalFn::Q, 0.975), 1.95996, 1e-5);
  EXPECT_NEAR(marginal_eval(g, MarginalFn::fQ, 0.5), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
}

TEST(MarginalX, DomainAndState) {
  const auto g = MarginalX::gaussian(1.0);
  EXPECT_THROW(marginal_eval(g, MarginalFn::Q, 0.0), DomainError);
  EXPECT_THROW(marginal_eval(g, MarginalFn::fQ, 1.0), DomainError);
  const auto e = MarginalX::empirical_unfitted();
  EXPECT_THROW(marginal_eval(e, MarginalFn::F, 0.0), StateError);
}

TEST(MarginalX, CdfInvertsQuantile) {
  for (const auto& m : {MarginalX::gaussian(1.0), MarginalX::gaussian(2.5), MarginalX::pareto(4.0)}) {
    for (int i = 1; i <= 99; ++i) {
      const double y = i / 100.0;
      EXPECT_NEAR(m.cdf(m.quantile(y)), y, 1e-8) << m.describe();
      EXPECT_NEAR(m.sf(m.upper_quantile(1.0 - y)), 1.0 - y, 1e-8) << m.describe();
    }
  }
}

TEST(MarginalX, DensityQuantileMatchesPdf) {
  const auto g = MarginalX::gaussian(1.3);
  for (double y : {0.01, 0.3, 0.7, 0.999}) {
    EXPECT_NEAR(g.density_quantile(y), g.pdf(g.quantile(y)), 1e-12);
  }
}

TEST(MarginalX, CdfDerivativesByFiniteDifference) {
  const auto g = MarginalX::gaussian(1.4);
  const double h = 1e-4;
  for (double x : {-1.0, 0.3, 2.0}) {
    EXPECT_NEAR(g.cdf_derivative(1, x), g.pdf(x), 1e-14);
    const double d2 = (g.pdf(x + h) - g.pdf(x - h)) / (2 * h);
    EXPECT_NEAR(g.cdf_derivative(2, x), d2, 1e-7);
    const double d3 = (g.cdf_derivative(2, x + h) - g.cdf_derivative(2, x - h)) / (2 * h);
    EXPECT_NEAR(g.cdf_derivative(3, x), d3, 1e-7);
  }
}

TEST(MarginalX, ParetoTailParts) {
  const auto p = MarginalX::pareto(4.0);
  for (double y : {1e-2, 1e-5, 1e-9}) {
    EXPECT_NEAR(p.upper_quantile(y) * std::pow(y, 0.25), (*p.L1())(1.0 / y), 1e-9);
    EXPECT_NEAR(p.upper_density_quantile(y) / std::pow(y, 1.25), (*p.L2())(1.0 / y), 1e-9);
  }
}

TEST(MarginalX, GaussianL3IsTheTailIntegralForm) {
  const auto g = MarginalX::gaussian(1.7);
  const auto L3 = *g.L3();
  // Oracle: y / int_0^y t / fQ(1-t) dt by quadrature.
  for (double y : {1e-2, 1e-4}) {
    const double integral =
        numerics::integrate_from_zero([&](double t) { return t / g.upper_density_quantile(t); }, y, {1e-14, 1e-11});
    EXPECT_NEAR(L3(1.0 / y), y / integral, 1e-7 * (y / integral));
  }
  // fQ(1-y) / (y L3(1/y)) -> 1, monotonically along a decreasing grid.
  double prev = 1e9;
  for (double y : {1e-3, 1e-6, 1e-9, 1e-12}) {
    const double dev = std::abs(g.upper_density_quantile(y) / (y * L3(1.0 / y)) - 1.0);
    EXPECT_LT(dev, prev);
    prev = dev;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(MdaCase, DerivationIsTotalAndConsistent) {
  EXPECT_EQ(derive_case(MdaTag::frechet(4), MdaTag::frechet(6)), MdaCase::case1);
  EXPECT_EQ(derive_case(MdaTag::frechet(4), MdaTag::gumbel()), MdaCase::case2);
  EXPECT_EQ(derive_case(MdaTag::gumbel(), MdaTag::frechet(6)), MdaCase::case3);
  EXPECT_EQ(derive_case(MdaTag::gumbel(), MdaTag::gumbel()), MdaCase::case4);
  const auto a = derive_case(MarginalX::gaussian(1).mda(), TargetMarginalY::pareto(3).mda());
  const auto b = derive_case(MarginalX::gaussian(1).mda(), TargetMarginalY::pareto(3).mda());
  EXPECT_EQ(a, b);
  EXPECT_EQ(condition_label(MdaCase::case4), "(****)");
}

// --- target marginal ------------------------------------------------------

TEST(TargetY, ParetoRelationIsExact) {
  const auto t = TargetMarginalY::pareto(6.0);
  for (double y : {0.9, 0.5, 1e-3, 1e-10}) {
    EXPECT_NEAR(t.upper_density_quantile(y) / (6.0 * std::pow(y, 1.0 + 1.0 / 6.0)), 1.0, 1e-14);
    EXPECT_NEAR((*t.L2())(1.0 / y), 6.0 / (*t.L1())(1.0 / y), 1e-14);
  }
}

TEST(TargetY, ExponentialRelationIsExact) {
  const auto t = TargetMarginalY::exponential();
  for (double y : {0.9, 0.5, 1e-3, 1e-10}) EXPECT_DOUBLE_EQ(t.upper_density_quantile(y), y);
  EXPECT_DOUBLE_EQ((*t.L3())(50.0), 1.0);
}

TEST(TargetY, LowerTailDensityQuantile) {
  EXPECT_NEAR(TargetMarginalY::exponential().density_quantile(1e-19), 1.0, 1e-15);
  EXPECT_NEAR(TargetMarginalY::pareto(2.0).density_quantile(1e-19), 2.0, 1e-15);
}

TEST(TargetY, LogParetoSpliceAndTail) {
  const auto t = TargetMarginalY::log_pareto(3.0, 0.5);
  const double w0 = std::pow(1.5, -3.0);
  EXPECT_NEAR(t.upper_quantile(w0 * (1 - 1e-12)), t.upper_quantile(w0 * (1 + 1e-12)), 1e-9);
  for (double w : {1e-2, 1e-6}) {
    EXPECT_NEAR(t.upper_quantile(w), 3.0 * std::log(std::pow(w, -1.0 / 3.0) - 0.5), 1e-12);
  }
  EXPECT_EQ(t.mda().kind, MdaKind::gumbel);
  // f_Y Q_Y from the derivative of the quantile.
  const double w = 1e-3, h = 1e-9;
  const double dq = (t.upper_quantile(w - h) - t.upper_quantile(w + h)) / (2 * h);
  EXPECT_NEAR(t.upper_density_quantile(w), 1.0 / dq, 1e-6 * (1.0 / dq));
}

TEST(TargetY, SegmentIncrementsMatchQuadrature) {
  for (const auto& t : {TargetMarginalY::exponential(), TargetMarginalY::pareto(6.0), TargetMarginalY::log_pareto(3.0, 0.5)}) {
    for (auto [lo, hi] : {std::pair{1e-4, 1.3e-4}, std::pair{0.01, 0.2}, std::pair{0.3, 0.3000001}}) {
      const double drop = numerics::integrate([&](double w) { return 1.0 / t.upper_density_quantile(w); }, lo, hi,
                                              {1e-300, 1e-12});
      const double wdrop =
          numerics::integrate([&](double w) { return w / t.upper_density_quantile(w); }, lo, hi, {1e-300, 1e-12});
      EXPECT_NEAR(t.quantile_drop(lo, hi), drop, 1e-8 * drop) << t.describe();
      EXPECT_NEAR(t.weighted_drop(lo, hi), wdrop, 1e-8 * wdrop) << t.describe();
    }
    const double w1 = 1e-3;
    const double from_zero =
        numerics::integrate_from_zero([&](double w) { return w / t.upper_density_quantile(w); }, w1, {1e-300, 1e-12});
    EXPECT_NEAR(t.weighted_drop(0.0, w1), from_zero, 1e-8 * from_zero) << t.describe();
  }
}

TEST(TargetY, TailIntegralClosedFormsAgreeWithQuadrature) {
  for (const auto& t : {TargetMarginalY::exponential(), TargetMarginalY::pareto(2.0), TargetMarginalY::pareto(6.0)}) {
    for (double w : {0.1, 0.01, 1e-4}) {
      EXPECT_NEAR(t.tail_integral(w) / t.tail_integral_numeric(w), 1.0, 1e-6) << t.describe();
    }
  }
}

TEST(TargetY, InfiniteMeanRejectedAtIntegration) {
  const auto t = TargetMarginalY::pareto(0.8);
  EXPECT_FALSE(t.has_finite_mean());
  EXPECT_THROW(t.tail_integral(0.1), NumericError);
}

// --- subordination --------------------------------------------------------

TEST(Subordinate, Examples) {
  const auto g = MarginalX::gaussian(1.0);
  EXPECT_NEAR(subordinate(g, TargetMarginalY::exponential(), 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(subordinate(g, TargetMarginalY::same_as(g), 1.3), 1.3, 1e-12);
  EXPECT_NEAR(subordinate(g, TargetMarginalY::pareto(2.0), 0.0), std::sqrt(2.0), 1e-14);
}

TEST(Subordinate, MonotoneAndClamped) {
  const auto g = MarginalX::gaussian(1.0);
  const auto t = TargetMarginalY::exponential();
  double prev = -1.0;
  for (double x = -8.0; x <= 8.0; x += 0.01) {
    const double y = subordinate(g, t, x);
    EXPECT_GE(y, prev);
    prev = y;
  }
  ClampCounter cc;
  const double far = subordinate(g, t, 40.0, &cc);
  EXPECT_TRUE(std::isfinite(far));
  EXPECT_EQ(cc.events.load(), 1u);
  EXPECT_NEAR(far, -std::log(kClampEpsilon), 1e-9);
}

// --- empirical fit --------------------------------------------------------

TEST(EmpiricalFit, HillOnExactPareto) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(100000);
  for (auto& v : s) v = std::pow(1.0 - u(rng), -0.25);
  const auto m = fit_empirical_marginal(s, 0.05);
  ASSERT_EQ(m.mda().kind, MdaKind::frechet);
  EXPECT_GE(m.mda().index, 3.6);
  EXPECT_LE(m.mda().index, 4.4);
  for (int i = 1; i <= 99; ++i) {
    const double y = i / 100.0;
    EXPECT_NEAR(m.cdf(m.quantile(y)), y, 1e-3);
  }
  // Continuous across the threshold and monotone.
  const double t = m.empirical_fit().threshold;
  EXPECT_NEAR(m.cdf(t * (1 + 1e-12)), m.cdf(t), 1e-9);
  double prev = 0.0;
  for (double x = 0.5; x < 20.0; x += 0.01) {
    EXPECT_GE(m.cdf(x), prev);
    prev = m.cdf(x);
  }
}

TEST(EmpiricalFit, Failures) {
  EXPECT_THROW(fit_empirical_marginal(std::vector<double>(20000, 3.0), 0.05), FitError);
  EXPECT_THROW(fit_empirical_marginal(std::vector<double>(5000, 1.0), 0.05), SizeError);
  EXPECT_THROW(fit_empirical_marginal(std::vector<double>(20000, 1.0), 0.001), SizeError);
}

TEST(EmpiricalFit, GumbelFitOnNormalSample) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d;
  std::vector<double> s(100000);
  for (auto& v : s) v = d(rng);
  const auto m = fit_empirical_marginal(s, 0.05, TailModel::gumbel);
  ASSERT_EQ(m.mda().kind, MdaKind::gumbel);
  const auto L3 = *m.L3();
  EXPECT_LT(L3(1e2), L3(1e4));
  EXPECT_LT(L3(1e4), L3(1e6));
  for (int i = 1; i <= 99; ++i) EXPECT_NEAR(m.cdf(m.quantile(i / 100.0)), i / 100.0, 1e-3);
  EXPECT_THROW(m.cdf_derivative(1, 0.0), UnsupportedError);
}
