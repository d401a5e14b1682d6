#ifndef LRDEXT_SIMULATE_HPP_
#define LRDEXT_SIMULATE_HPP_

// Path generation for the truncated linear process X_i = sum_k c_k eps_{i-k}
// and the subordinated sequence Y_i = Q_Y(F(X_i)), plus exact second-moment
// bookkeeping (autocovariances and Var(sum X_i)).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/zeta.hpp>

#include "lrdext/errors.hpp"
#include "lrdext/model.hpp"
#include "lrdext/numerics.hpp"

namespace lrdext {

// ---------------------------------------------------------------------------
// Seeding

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of replicate r under a master seed:
///   h(m, r) = splitmix64(splitmix64(m) ^ (r + 1) * 0x9E3779B97F4A7C15).
/// Depends only on (m, r), never on scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate) {
  return splitmix64(splitmix64(master) ^ ((replicate + 1) * 0x9E3779B97F4A7C15ULL));
}

// FNV-1a, used to fingerprint generating configurations.
class Fingerprint {
 public:
  Fingerprint& add(std::string_view s) {
    for (unsigned char ch : s) mix(ch);
    mix(0xff);
    return *this;
  }
  Fingerprint& add(std::span<const double> values) {
    for (double v : values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) mix(static_cast<unsigned char>(bits >> (8 * b)));
    }
    return *this;
  }
  Fingerprint& add(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) mix(static_cast<unsigned char>(v >> (8 * b)));
    return *this;
  }
  std::uint64_t value() const { return h_; }

 private:
  void mix(unsigned char c) {
    h_ ^= c;
    h_ *= 0x100000001B3ULL;
  }
  std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

inline std::uint64_t config_hash(const CoefficientModel& coeffs, const InnovationDist& dist,
                                 const MarginalX& mx, const TargetMarginalY& ty, std::size_t n) {
  return Fingerprint{}
      .add(coeffs.coefficients())
      .add(dist.describe())
      .add(mx.describe())
      .add(ty.describe())
      .add(static_cast<std::uint64_t>(n))
      .value();
}

// ---------------------------------------------------------------------------
// Truncation

inline constexpr std::size_t kDefaultTruncationCap = std::size_t{1} << 22;
inline constexpr double kDefaultTruncationTol = 1e-3;

struct Truncation {
  std::size_t length = 0;  // M
  bool capped = false;
  double total_variance = 0.0;  // sum_{k>=0} c_k^2 of the untruncated filter
};

/// Smallest M whose neglected variance sum_{k>M} c_k^2 is at most tol times
/// the total, using the integral bound sum_{k>M} k^{-2beta} <= M^{1-2beta}/(2beta-1)
/// (exact for constant L0; for other L0 the bound integrates x^{-2beta} L0(x)^2).
inline Truncation truncation_length(double beta, const SlowlyVaryingFn& L0, double tol,
                                    std::size_t cap = kDefaultTruncationCap) {
  if (!(beta > 0.5 && beta < 1.0)) throw DomainError("beta must lie in (1/2, 1)");
  if (!(tol > 0.0 && tol < 0.1)) throw DomainError("truncation tolerance must lie in (0, 0.1)");
  const double e = 2.0 * beta - 1.0;
  Truncation t;
  if (const auto c = L0.constant_value()) {
    const double c2 = *c * *c;
    t.total_variance = 1.0 + c2 * boost::math::zeta(2.0 * beta);
    const double m = std::pow(c2 / (e * tol * t.total_variance), 1.0 / e);
    t.capped = !(m <= static_cast<double>(cap));
    t.length = t.capped ? cap : std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(m)));
    return t;
  }
  const auto sq = [&](double x) {
    const double l = L0(std::max(x, std::numbers::e));
    return std::pow(x, -2.0 * beta) * l * l;
  };
  // Tail bound int_M^inf x^{-2beta} L0(x)^2 dx via v = 1/x.
  // L0 is frozen below e, so the piece under e is a plain power integral.
  const double le = L0(std::numbers::e);
  const auto tail = [&](double M) {
    double below = 0.0;
    if (M < std::numbers::e) {
      below = le * le * (std::pow(M, -e) - std::pow(std::numbers::e, -e)) / e;
      M = std::numbers::e;
    }
    return below + numerics::integrate_from_zero([&](double v) { return sq(1.0 / v) / (v * v); },
                                                 1.0 / M, {1e-14, 1e-8});
  };
  constexpr std::size_t head = 100000;
  long double s = 1.0L;
  for (std::size_t k = 1; k <= head; ++k) s += sq(static_cast<double>(k));
  t.total_variance = static_cast<double>(s) + tail(head + 0.5);
  const double target = tol * t.total_variance;
  double lo = 1.0;
  double hi = 2.0;
  while (tail(hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e15) break;
  }
  for (int it = 0; it < 200 && hi - lo > 0.5; ++it) {
    const double mid = 0.5 * (lo + hi);
    (tail(mid) > target ? lo : hi) = mid;
  }
  t.capped = !(hi <= static_cast<double>(cap));
  t.length = t.capped ? cap : static_cast<std::size_t>(std::ceil(hi));
  return t;
}

// Coefficient model truncated per truncation_length, with the cap recorded.
inline CoefficientModel truncated_coefficients(double beta, const SlowlyVaryingFn& L0,
                                               double tol = kDefaultTruncationTol,
                                               std::size_t cap = kDefaultTruncationCap) {
  const Truncation t = truncation_length(beta, L0, tol, cap);
  return CoefficientModel::regularly_varying(beta, L0, t.length, t.capped);
}

// ---------------------------------------------------------------------------
// Innovations and filtering

inline std::vector<double> gen_innovations(const InnovationDist& dist, std::size_t count,
                                           std::uint64_t seed) {
  if (count < 1) throw SizeError("gen_innovations: count must be positive");
  std::mt19937_64 rng(seed);
  std::vector<double> out(count);
  if (dist.kind() == InnovationDist::Kind::gaussian) {
    std::normal_distribution<double> d(0.0, dist.sigma());
    for (auto& v : out) v = d(rng);
  } else {
    std::student_t_distribution<double> d(dist.nu());
    const double scale = dist.sigma() * std::sqrt((dist.nu() - 2.0) / dist.nu());
    for (auto& v : out) v = scale * d(rng);
  }
  return out;
}

/// X_i = sum_{k=0}^M c_k eps_{i-k}, i = 1..n, by FFT convolution. eps holds
/// eps_{1-M}, ..., eps_n (length n + M).
inline std::vector<double> moving_average(std::span<const double> c, std::span<const double> eps) {
  if (c.empty()) throw ShapeError("moving_average: empty coefficient vector");
  const std::size_t M = c.size() - 1;
  if (eps.size() < M + 1) {
    throw ShapeError("moving_average: need n + M innovations with n >= 1 (got " +
                     std::to_string(eps.size()) + " for M = " + std::to_string(M) + ")");
  }
  const std::size_t n = eps.size() - M;
  const auto full = numerics::convolve(c, eps);
  return {full.begin() + static_cast<std::ptrdiff_t>(M),
          full.begin() + static_cast<std::ptrdiff_t>(M + n)};
}

struct PathPair {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> innovations;  // eps_{1-M} .. eps_n
  std::uint64_t seed = 0;
  std::uint64_t spec_hash = 0;
  std::size_t clamp_events = 0;
};

inline void check_marginal_consistency(const CoefficientModel& coeffs, const InnovationDist& dist,
                                       const MarginalX& mx) {
  if (dist.kind() != InnovationDist::Kind::gaussian) return;
  if (!mx.is_gaussian()) {
    throw ConfigError("Gaussian innovations require the Gaussian marginal for X");
  }
  const double expected = dist.variance() * coeffs.sum_of_squares();
  const double s = mx.gaussian_sd();
  const double rel = std::abs(s * s / expected - 1.0);
  if (rel > 1e-6) {
    throw ConfigError("marginal variance " + std::to_string(s * s) +
                      " inconsistent with sigma_eps^2 * sum c_k^2 = " + std::to_string(expected));
  }
}

/// One stationary path of length n. Exactly M pre-sample innovations are
/// drawn so X_1 already sees the full truncated filter.
inline PathPair simulate_path(const CoefficientModel& coeffs, const InnovationDist& dist,
                              const MarginalX& mx, const TargetMarginalY& ty, std::size_t n,
                              std::uint64_t seed) {
  if (n < 1) throw SizeError("simulate_path: n must be positive");
  check_marginal_consistency(coeffs, dist, mx);
  PathPair p;
  p.seed = seed;
  p.spec_hash = config_hash(coeffs, dist, mx, ty, n);
  p.innovations = gen_innovations(dist, n + coeffs.truncation(), seed);
  p.x = moving_average(coeffs.coefficients(), p.innovations);
  p.y.resize(n);
  ClampCounter clamps;
  for (std::size_t i = 0; i < n; ++i) p.y[i] = subordinate(mx, ty, p.x[i], &clamps);
  p.clamp_events = clamps.events.load();
  return p;
}

// ---------------------------------------------------------------------------
// Second moments

struct Autocovariance {
  double value = 0.0;
  bool truncated = false;  // lag beyond the filter length
};

// rho_k = sigma_eps^2 sum_j c_j c_{j+k}, exact finite sum.
inline Autocovariance autocovariance(std::span<const double> c, double sigma_eps2, std::size_t k) {
  if (k >= c.size()) return {0.0, true};
  long double s = 0.0L;
  for (std::size_t j = 0; j + k < c.size(); ++j) s += static_cast<long double>(c[j]) * c[j + k];
  return {sigma_eps2 * static_cast<double>(s), false};
}

// rho_0 .. rho_{max_lag} in one FFT correlation; lags beyond M are zero.
inline std::vector<double> autocovariances(std::span<const double> c, double sigma_eps2,
                                           std::size_t max_lag) {
  const std::size_t M = c.size() - 1;
  std::vector<double> rho(max_lag + 1, 0.0);
  std::vector<double> rev(c.rbegin(), c.rend());
  const auto corr = numerics::convolve(c, rev);
  for (std::size_t k = 0; k <= std::min(max_lag, M); ++k) rho[k] = sigma_eps2 * corr[M + k];
  return rho;
}

/// Autocovariance of the untruncated filter c_k = k^{-beta} L0(k): the first
/// M coefficients are summed exactly and the remainder sum_{j > M-k} c_j c_{j+k}
/// is replaced by its midpoint integral.
inline double model_autocovariance(double beta, const SlowlyVaryingFn& L0, double sigma_eps2,
                                   std::size_t M, std::size_t k) {
  if (k > M) throw DomainError("model_autocovariance: lag must not exceed the explicit length");
  const auto coef = [&](double j) {
    if (j < 0.5) return 1.0;
    return std::pow(j, -beta) * L0(std::max(j, std::numbers::e));
  };
  long double s = 0.0L;
  for (std::size_t j = 0; j + k <= M; ++j) {
    s += static_cast<long double>(coef(static_cast<double>(j))) * coef(static_cast<double>(j + k));
  }
  const double a = static_cast<double>(M - k) + 0.5;
  const double kd = static_cast<double>(k);
  // int_a^inf c(j) c(j+k) dj with j = 1/v.
  const double tail = numerics::integrate_from_zero(
      [&](double v) {
        const double j = 1.0 / v;
        return coef(j) * coef(j + kd) / (v * v);
      },
      1.0 / a, {1e-16, 1e-10});
  return sigma_eps2 * (static_cast<double>(s) + tail);
}

// sigma_{n,1} from autocovariances rho_0, rho_1, ... (missing lags are zero).
inline double sigma_n1_from_autocovariance(std::span<const double> rho, std::size_t n) {
  if (n < 1) throw SizeError("sigma_n1: n must be positive");
  if (rho.empty()) throw ShapeError("sigma_n1: empty autocovariance vector");
  const long double nd = static_cast<long double>(n);
  long double s = nd * rho[0];
  for (std::size_t k = 1; k < std::min(n, rho.size()); ++k) {
    s += 2.0L * (nd - static_cast<long double>(k)) * rho[k];
  }
  if (!(s > 0.0L)) throw NumericError("Var(sum X_i) is not positive");
  return std::sqrt(static_cast<double>(s));
}

/// sigma_{n,1} = sqrt(Var(sum_{i<=n} X_i)) = sqrt(n rho_0 + 2 sum_{k<n} (n-k) rho_k).
inline double sigma_n1_exact(std::span<const double> c, double sigma_eps2, std::size_t n) {
  if (n < 1) throw SizeError("sigma_n1: n must be positive");
  const std::size_t lags = std::min(n - 1, c.size() - 1);
  const auto rho = autocovariances(c, sigma_eps2, lags);
  return sigma_n1_from_autocovariance(rho, n);
}

}  // namespace lrdext

#endif  // LRDEXT_SIMULATE_HPP_
