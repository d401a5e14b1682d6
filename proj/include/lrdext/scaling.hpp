#ifndef LRDEXT_SCALING_HPP_
#define LRDEXT_SCALING_HPP_

// Deterministic asymptotic quantities for extreme sums of subordinated LRD
// sequences: reduction order p, sigma_{n,p}, the reduction-principle rate
// d_{n,p}, the xi thresholds, the normalizer A_n and its slowly varying
// corrections, the Karamata integral K_n, the centering mu_n, the i.i.d.
// scale a_n, and the hypothesis checks (power rank, D_r finiteness).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "lrdext/errors.hpp"
#include "lrdext/model.hpp"
#include "lrdext/numerics.hpp"
#include "lrdext/simulate.hpp"
#include "lrdext/slowly_varying.hpp"

namespace lrdext {

// Smallest p >= 1 with (p + 1)(2 beta - 1) > 1.
inline int select_p(double beta) {
  if (!(beta > 0.5 && beta < 1.0)) throw DomainError("beta must lie in (1/2, 1)");
  const double e = 2.0 * beta - 1.0;
  int p = 1;
  while ((p + 1) * e <= 1.0) ++p;
  return p;
}

// (n^{2 - p(2beta-1)} L0(n)^{2p})^{1/2}, valid for p < 1/(2 beta - 1).
inline double sigma_np_asymptotic(double n, int p, double beta, const SlowlyVaryingFn& L0) {
  if (!(beta > 0.5 && beta < 1.0)) throw DomainError("beta must lie in (1/2, 1)");
  if (p < 1) throw DomainError("p must be positive");
  if (!(p * (2.0 * beta - 1.0) < 1.0)) {
    throw DomainError("sigma_np_asymptotic requires p < 1/(2 beta - 1)");
  }
  const double l = L0(n);
  return std::sqrt(std::pow(n, 2.0 - p * (2.0 * beta - 1.0)) * std::pow(l, 2.0 * p));
}

/// Almost-sure rate in the uniform reduction principle. The first branch,
/// n^{-(1-beta)} L0^{-1}(n) (log n)^{5/2} (log log n)^{3/4}, applies when
/// (p + 1)(2 beta - 1) >= 1; otherwise
/// n^{-p(beta-1/2)} L0^p(n) (log n)^{1/2} (log log n)^{3/4}.
inline double d_np(double n, int p, double beta, const SlowlyVaryingFn& L0) {
  if (!(n >= 16.0)) throw DomainError("d_np requires n >= 16");
  if (p < 1) throw DomainError("p must be positive");
  const double ln = std::log(n);
  const double lln = std::log(ln);
  const double l = L0(n);
  if ((p + 1) * (2.0 * beta - 1.0) >= 1.0) {
    return std::pow(n, -(1.0 - beta)) / l * std::pow(ln, 2.5) * std::pow(lln, 0.75);
  }
  return std::pow(n, -p * (beta - 0.5)) * std::pow(l, p) * std::sqrt(ln) * std::pow(lln, 0.75);
}

/// Lower bound for xi in the given case. Enforces the tail-index feasibility
/// constraints: alpha >= 4 when X is Frechet, alpha0 > 1/(1 - beta) when Y is
/// Frechet. Infeasible configurations throw InfeasibleError.
inline double xi_threshold(MdaCase kase, double beta, std::optional<double> alpha,
                           std::optional<double> alpha0) {
  if (!(beta > 0.5 && beta < 1.0)) throw DomainError("beta must lie in (1/2, 1)");
  const bool x_frechet = kase == MdaCase::case1 || kase == MdaCase::case2;
  const bool y_frechet = kase == MdaCase::case1 || kase == MdaCase::case3;
  const std::string label = "case " + std::to_string(case_number(kase)) + " " + condition_label(kase);
  if (x_frechet) {
    if (!alpha) throw ConfigError(label + ": tail index alpha of X is required");
    if (!(*alpha >= 4.0)) {
      throw InfeasibleError(label + ": alpha = " + std::to_string(*alpha) +
                            " violates alpha >= 4 (finite fourth moment of the innovations)");
    }
  }
  if (y_frechet) {
    if (!alpha0) throw ConfigError(label + ": tail index alpha0 of Y is required");
    const double bound = 1.0 / (1.0 - beta);
    if (!(*alpha0 > bound)) {
      throw InfeasibleError(label + ": alpha0 = " + std::to_string(*alpha0) +
                            " violates alpha0 > 1/(1-beta) = " + std::to_string(bound) +
                            "; no xi < 1 satisfies the threshold");
    }
  }
  double t = 0.0;
  switch (kase) {
    case MdaCase::case1: t = (beta + 1.0 / *alpha) / (1.0 + 1.0 / *alpha - 1.0 / *alpha0); break;
    case MdaCase::case2: t = (beta + 1.0 / *alpha) / (1.0 + 1.0 / *alpha); break;
    case MdaCase::case3: t = beta / (1.0 - 1.0 / *alpha0); break;
    case MdaCase::case4: t = beta; break;
  }
  if (!(t < 1.0)) {
    throw InfeasibleError(label + ": xi threshold " + std::to_string(t) + " is not below 1");
  }
  return t;
}

// k_n = ceil(n^xi).
inline std::size_t extreme_count(std::size_t n, double xi) {
  if (!(xi > 0.0 && xi < 1.0)) throw DomainError("xi must lie in (0,1)");
  return static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), xi)));
}

// ---------------------------------------------------------------------------
// Slowly varying corrections

/// Ratios of the X and Y slowly varying parts and the constants that turn
/// them into the normalizer's corrections:
///   case 1: L11 = L2* / L2, L21 = (1/alpha - 1/alpha0 + 1) L11
///   case 2: L12 = L3* / L2, L22 = (1/alpha + 1) L12
///   case 3: L13 = L2* / L3, L23 = (1 - 1/alpha0) L13
///   case 4: L14 = L3* / L3, L24 = L14
struct LFamily {
  MdaCase kase = MdaCase::case4;
  double alpha = kNaN;
  double alpha0 = kNaN;
  std::optional<SlowlyVaryingFn> L11, L12, L13, L14;
  std::optional<SlowlyVaryingFn> L21, L22, L23, L24;
};

inline LFamily build_l_family(const MarginalX& mx, const TargetMarginalY& ty) {
  LFamily f;
  const MdaTag xt = mx.mda();
  const MdaTag yt = ty.mda();
  f.kase = derive_case(xt, yt);
  f.alpha = xt.is_frechet() ? xt.index : kNaN;
  f.alpha0 = yt.is_frechet() ? yt.index : kNaN;
  const auto L2 = mx.L2();
  const auto L3 = mx.L3();
  const auto L2s = ty.L2();
  const auto L3s = ty.L3();
  if (L2 && L2s) {
    f.L11 = SlowlyVaryingFn::ratio(*L2s, *L2);
    f.L21 = SlowlyVaryingFn::scaled(1.0 / f.alpha - 1.0 / f.alpha0 + 1.0, *f.L11);
  }
  if (L2 && L3s) {
    f.L12 = SlowlyVaryingFn::ratio(*L3s, *L2);
    f.L22 = SlowlyVaryingFn::scaled(1.0 / f.alpha + 1.0, *f.L12);
  }
  if (L3 && L2s) {
    f.L13 = SlowlyVaryingFn::ratio(*L2s, *L3);
    f.L23 = SlowlyVaryingFn::scaled(1.0 - 1.0 / f.alpha0, *f.L13);
  }
  if (L3 && L3s) {
    f.L14 = SlowlyVaryingFn::ratio(*L3s, *L3);
    f.L24 = f.L14;
  }
  return f;
}

// Exponent of n/k_n in A_n.
inline double big_A_exponent(MdaCase kase, double alpha, double alpha0) {
  switch (kase) {
    case MdaCase::case1: return 1.0 + 1.0 / alpha - 1.0 / alpha0;
    case MdaCase::case2: return 1.0 + 1.0 / alpha;
    case MdaCase::case3: return 1.0 - 1.0 / alpha0;
    case MdaCase::case4: return 1.0;
  }
  return kNaN;
}

/// A_n = (n/k_n)^{exponent} L2j(n/k_n) for the case's row.
inline double big_A(MdaCase kase, double n, double k_n, const LFamily& lf) {
  if (!(k_n >= 1.0 && k_n < n)) throw DomainError("big_A requires 1 <= k_n < n");
  const std::optional<SlowlyVaryingFn>* L = nullptr;
  switch (kase) {
    case MdaCase::case1: L = &lf.L21; break;
    case MdaCase::case2: L = &lf.L22; break;
    case MdaCase::case3: L = &lf.L23; break;
    case MdaCase::case4: L = &lf.L24; break;
  }
  if (!*L) {
    throw ConfigError("big_A: slowly varying correction missing for case " +
                      std::to_string(case_number(kase)));
  }
  const double u = n / k_n;
  const double e = big_A_exponent(kase, lf.alpha, lf.alpha0);
  if (!std::isfinite(e)) throw ConfigError("big_A: tail index missing for this case");
  return std::pow(u, e) * (**L)(u);
}

/// K_n = int_{1-k_n/n}^{1-1/n} fQ(y) / f_YQ_Y(y) dy, integrated in u = 1 - y
/// on a logarithmic scale.
inline double karamata_K(const MarginalX& mx, const TargetMarginalY& ty, double n, double k_n) {
  if (!(k_n >= 1.0 && k_n < n)) throw DomainError("karamata_K requires 1 <= k_n < n");
  const auto f = [&](double u) { return mx.upper_density_quantile(u) / ty.upper_density_quantile(u); };
  return numerics::integrate_log_scale(f, 1.0 / n, k_n / n, {1e-300, 1e-10});
}

// mu_n = n int_{1-k_n/n}^1 Q_Y(y) dy.
inline double centering(const TargetMarginalY& ty, double n, double k_n) {
  if (!(k_n >= 1.0 && k_n <= n)) throw DomainError("centering requires 1 <= k_n <= n");
  return n * ty.tail_integral(k_n / n);
}

// i.i.d. Pareto scale a_n = (n/k_n)^{1/2 - 1/alpha} n^{-1/2}.
inline double iid_scale(double n, double k_n, double alpha) {
  if (!(alpha > 2.0)) throw DomainError("iid_scale requires alpha > 2");
  return std::pow(n / k_n, 0.5 - 1.0 / alpha) / std::sqrt(n);
}

/// LRD-vs-iid comparison of the extreme-sum normalizers. `raw` is
/// (n/k_n) sigma_{n,1}^{-1} / a_n; `relative` first strips the whole-sum
/// scalings sigma_{n,1}^{-1} and n^{-1/2}, leaving (n/k_n) / (a_n n^{1/2}).
struct IidContrast {
  double raw = kNaN;
  double relative = kNaN;
};

inline IidContrast iid_contrast(double n, double k_n, double sigma_n1, double alpha) {
  if (!(sigma_n1 > 0.0)) throw DomainError("iid_contrast needs sigma_{n,1} > 0");
  const double a = iid_scale(n, k_n, alpha);
  return {(n / k_n) / sigma_n1 / a, (n / k_n) / (a * std::sqrt(n))};
}

/// int_0^1 fQ(y) / f_YQ_Y(y) dy: the derivative at 0 of the smoothed
/// subordinator. A non-zero finite value means power rank 1.
inline double power_rank_integral(const MarginalX& mx, const TargetMarginalY& ty) {
  const auto lower = [&](double y) { return mx.density_quantile(y) / ty.density_quantile(y); };
  const auto upper = [&](double w) {
    return mx.upper_density_quantile(w) / ty.upper_density_quantile(w);
  };
  const numerics::QuadratureTolerance tol{1e-12, 1e-9};
  return numerics::integrate_from_zero(lower, 0.5, tol) + numerics::integrate_from_zero(upper, 0.5, tol);
}

// D_r = int_{1/2}^1 F^{(r)}(Q(y)) / f_YQ_Y(y) dy.
inline double check_condition_Dr(const MarginalX& mx, const TargetMarginalY& ty, int r) {
  if (r < 1) throw DomainError("condition D_r needs r >= 1");
  if (!mx.has_derivatives()) throw UnsupportedError("D_r needs analytic CDF derivatives of X");
  const auto g = [&](double w) {
    return mx.cdf_derivative(r, mx.upper_quantile(w)) / ty.upper_density_quantile(w);
  };
  return numerics::integrate_from_zero(g, 0.5, {1e-12, 1e-9});
}

// ---------------------------------------------------------------------------
// Bundle

struct ScalingBundle {
  MdaCase kase = MdaCase::case4;
  std::size_t n = 0;
  std::size_t k_n = 0;
  double xi = kNaN;
  int p = 1;
  double beta = kNaN;
  double sigma_n1 = kNaN;
  double A_n = kNaN;
  double d_np = kNaN;
  double mu_n = kNaN;
  double K_n = kNaN;
  double xi_threshold = kNaN;
  LFamily lfam;
  std::uint64_t spec_hash = 0;

  double AK() const { return A_n * K_n; }
};

/// All constants for one (model, n, xi). The xi threshold is checked here;
/// an infeasible configuration never yields a bundle.
inline ScalingBundle make_scaling_bundle(const CoefficientModel& coeffs, const InnovationDist& dist,
                                         const MarginalX& mx, const TargetMarginalY& ty,
                                         std::size_t n, double xi,
                                         std::optional<int> p_override = std::nullopt) {
  if (!coeffs.beta()) throw ConfigError("scaling bundle needs a regularly varying coefficient model");
  ScalingBundle b;
  b.beta = *coeffs.beta();
  b.lfam = build_l_family(mx, ty);
  b.kase = b.lfam.kase;
  const auto opt = [](double v) { return std::isfinite(v) ? std::optional<double>(v) : std::nullopt; };
  b.xi_threshold = xi_threshold(b.kase, b.beta, opt(b.lfam.alpha), opt(b.lfam.alpha0));
  if (!(xi > b.xi_threshold && xi < 1.0)) {
    throw InfeasibleError("xi = " + std::to_string(xi) + " must exceed the case " +
                          std::to_string(case_number(b.kase)) + " " + condition_label(b.kase) +
                          " threshold " + std::to_string(b.xi_threshold) + " and stay below 1");
  }
  b.n = n;
  b.xi = xi;
  b.k_n = extreme_count(n, xi);
  if (b.k_n < 2 || b.k_n >= n) throw InfeasibleError("k_n = ceil(n^xi) must lie in [2, n-1]");
  b.p = p_override.value_or(select_p(b.beta));
  b.sigma_n1 = sigma_n1_exact(coeffs.coefficients(), dist.variance(), n);
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(b.k_n);
  b.A_n = big_A(b.kase, nd, kd, b.lfam);
  b.K_n = karamata_K(mx, ty, nd, kd);
  b.mu_n = centering(ty, nd, kd);
  b.d_np = d_np(nd, b.p, b.beta, *coeffs.L0());
  b.spec_hash = config_hash(coeffs, dist, mx, ty, n);
  return b;
}

}  // namespace lrdext

#endif  // LRDEXT_SCALING_HPP_
