#ifndef LRDEXT_NUMERICS_HPP_
#define LRDEXT_NUMERICS_HPP_

// Shared numerical kernels: normal-distribution functions, Hermite
// polynomials, adaptive quadrature with endpoint-singularity handling and
// FFT-based linear convolution.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "lrdext/errors.hpp"

namespace lrdext::numerics {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

inline double normal_cdf(double x) {
  return 0.5 * boost::math::erfc(-x / std::numbers::sqrt2);
}

// Upper tail 1 - Phi(x), accurate for large x.
inline double normal_sf(double x) {
  return 0.5 * boost::math::erfc(x / std::numbers::sqrt2);
}

// Inverse of the upper tail: returns x with normal_sf(x) = w.
inline double normal_isf(double w) {
  if (!(w > 0.0 && w < 1.0)) throw DomainError("normal_isf: argument must lie in (0,1)");
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * w);
}

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: argument must lie in (0,1)");
  return p <= 0.5 ? -normal_isf(p) : normal_isf(1.0 - p);
}

// Probabilists' Hermite polynomial He_n(x).
inline double hermite_he(int n, double x) {
  if (n < 0) throw DomainError("hermite_he: negative order");
  if (n == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int k = 1; k < n; ++k) {
    const double next = x * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

// ---------------------------------------------------------------------------
// Quadrature

struct QuadratureTolerance {
  double absolute = 1e-8;
  double relative = 1e-6;
};

// Adaptive Gauss-Kronrod on a finite interval. Throws NumericError if the
// result is not finite or the error estimate misses the requested tolerance.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        QuadratureTolerance tol = {}) {
  if (a == b) return 0.0;
  double error = 0.0;
  double l1 = 0.0;
  // Map onto [-1, 1] ourselves; the library's error estimate degrades on short
  // intervals far from the origin.
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const auto g = [&f, mid, half](double t) { return f(mid + half * t) * half; };
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      g, -1.0, 1.0, 20, std::min(tol.relative, 1e-10), &error, &l1);
  if (!std::isfinite(value) || !std::isfinite(error)) {
    throw NumericError("quadrature produced a non-finite value");
  }
  // The estimate cannot drop below rounding noise of the Kronrod sum.
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * l1;
  if (error > std::max({tol.absolute, tol.relative * std::abs(value), floor})) {
    throw NumericError("quadrature did not converge (error estimate " + std::to_string(error) +
                       ", value " + std::to_string(value) + ")");
  }
  return value;
}

// Integral of f over (0, hi] where f may have an integrable singularity at 0.
// Works in t = log u, walking down in blocks of twelve decades (the first block
// ends at hi * 1e-12) until the contribution is negligible. A non-shrinking
// block sequence is reported as divergence.
inline double integrate_from_zero(const std::function<double(double)>& f, double hi,
                                  QuadratureTolerance tol = {}) {
  if (!(hi > 0.0)) throw DomainError("integrate_from_zero: upper limit must be positive");
  const double block = 12.0 * std::numbers::ln10;
  const double log_floor = std::log(1e-300);
  const auto g = [&f](double t) {
    const double u = std::exp(t);
    return f(u) * u;
  };
  // Per-block tolerance is tightened so the sum still meets the caller's bound.
  const QuadratureTolerance block_tol{tol.absolute * 0.1, tol.relative * 0.1};
  double top = std::log(hi);
  double total = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  int negligible_run = 0;
  int growth_run = 0;
  while (true) {
    const double bottom = std::max(top - block, log_floor);
    const double piece = integrate(g, bottom, top, block_tol);
    total += piece;
    const double mag = std::abs(piece);
    if (mag <= 1e-15 * std::abs(total) || mag == 0.0) {
      if (++negligible_run >= 2) return total;
    } else {
      negligible_run = 0;
    }
    if (mag > 0.9 * previous && mag > 1e-15 * std::abs(total)) {
      if (++growth_run >= 3) throw NumericError("integral diverges at the lower endpoint");
    } else {
      growth_run = 0;
    }
    previous = mag;
    if (bottom <= log_floor) {
      if (mag > tol.relative * std::abs(total) + tol.absolute) {
        throw NumericError("integral diverges at the lower endpoint");
      }
      return total;
    }
    top = bottom;
  }
}

// Integral of f over [lo, hi] with 0 < lo < hi, using t = log u. Suited to
// integrands that vary on a logarithmic scale near the origin.
inline double integrate_log_scale(const std::function<double(double)>& f, double lo, double hi,
                                  QuadratureTolerance tol = {}) {
  if (!(lo > 0.0 && hi >= lo)) throw DomainError("integrate_log_scale: need 0 < lo <= hi");
  const auto g = [&f](double t) {
    const double u = std::exp(t);
    return f(u) * u;
  };
  return integrate(g, std::log(lo), std::log(hi), tol);
}

// ---------------------------------------------------------------------------
// FFT convolution

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::size_t fft_size(std::size_t min_len) {
  // Smallest 2^a 3^b 5^c >= min_len.
  std::size_t best = 1;
  while (best < min_len) best <<= 1;
  for (std::size_t p3 = 1; p3 <= best; p3 *= 3) {
    for (std::size_t p5 = p3; p5 <= best; p5 *= 5) {
      std::size_t v = p5;
      while (v < min_len) v <<= 1;
      best = std::min(best, v);
    }
  }
  return best;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

// Plan creation and destruction are not thread safe in FFTW; execution is.
class FftwPlan {
 public:
  template <class Make>
  explicit FftwPlan(Make&& make) {
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = make();
  }
  ~FftwPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan_);
  }
  FftwPlan(const FftwPlan&) = delete;
  FftwPlan& operator=(const FftwPlan&) = delete;
  void execute() const { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

}  // namespace detail

// Full linear convolution (length a.size() + b.size() - 1) via real FFTs.
inline std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ShapeError("convolve: empty input");
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = detail::fft_size(out_len);
  const std::size_t nc = n / 2 + 1;

  detail::FftwBuffer ra(sizeof(double) * n), rb(sizeof(double) * n);
  detail::FftwBuffer ca(sizeof(fftw_complex) * nc), cb(sizeof(fftw_complex) * nc);
  auto* xa = static_cast<double*>(ra.ptr);
  auto* xb = static_cast<double*>(rb.ptr);
  auto* fa = static_cast<fftw_complex*>(ca.ptr);
  auto* fb = static_cast<fftw_complex*>(cb.ptr);

  const int ni = static_cast<int>(n);
  detail::FftwPlan pa([&] { return fftw_plan_dft_r2c_1d(ni, xa, fa, FFTW_ESTIMATE); });
  detail::FftwPlan pb([&] { return fftw_plan_dft_r2c_1d(ni, xb, fb, FFTW_ESTIMATE); });
  detail::FftwPlan inv([&] { return fftw_plan_dft_c2r_1d(ni, fa, xa, FFTW_ESTIMATE); });

  std::fill(xa, xa + n, 0.0);
  std::fill(xb, xb + n, 0.0);
  std::copy(a.begin(), a.end(), xa);
  std::copy(b.begin(), b.end(), xb);
  pa.execute();
  pb.execute();
  for (std::size_t k = 0; k < nc; ++k) {
    const double re = fa[k][0] * fb[k][0] - fa[k][1] * fb[k][1];
    const double im = fa[k][0] * fb[k][1] + fa[k][1] * fb[k][0];
    fa[k][0] = re;
    fa[k][1] = im;
  }
  inv.execute();
  std::vector<double> out(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < out_len; ++k) out[k] = xa[k] * scale;
  return out;
}

// Sum with compensation; used where many terms of mixed magnitude accumulate.
inline double stable_sum(std::span<const double> values) {
  long double s = 0.0L;
  long double c = 0.0L;
  for (double v : values) {
    const long double y = static_cast<long double>(v) - c;
    const long double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return static_cast<double>(s);
}

}  // namespace lrdext::numerics

#endif  // LRDEXT_NUMERICS_HPP_
