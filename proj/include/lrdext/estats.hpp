#ifndef LRDEXT_ESTATS_HPP_
#define LRDEXT_ESTATS_HPP_

// Order-statistic functionals and empirical-process machinery: extreme and
// trimmed sums, the uniform empirical and quantile processes, the multilinear
// forms Y_{n,r}, the reduction-principle statistic, the normalized extreme
// sum Z_n and its three-term decomposition.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "lrdext/errors.hpp"
#include "lrdext/model.hpp"
#include "lrdext/numerics.hpp"
#include "lrdext/scaling.hpp"
#include "lrdext/simulate.hpp"

namespace lrdext {

namespace detail {

inline double ascending_sum(std::span<const double> sorted) {
  long double s = 0.0L;
  for (double v : sorted) s += v;
  return static_cast<double>(s);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Extreme and trimmed sums

/// Sum of the k largest entries. The top block is selected, sorted and summed
/// in ascending order, so the result depends only on the multiset of values.
inline double top_k_sum(std::span<const double> sample, std::size_t k) {
  const std::size_t n = sample.size();
  if (k < 1 || k > n) throw DomainError("top_k_sum: k must lie in [1, n]");
  std::vector<double> v(sample.begin(), sample.end());
  const auto first = v.begin() + static_cast<std::ptrdiff_t>(n - k);
  std::nth_element(v.begin(), first, v.end());
  std::sort(first, v.end());
  return detail::ascending_sum({&*first, k});
}

// T_n(m, k) = sum_{i=m+1}^{n-k} X_{i:n}.
inline double trimmed_sum(std::span<const double> sample, std::size_t m, std::size_t k) {
  const std::size_t n = sample.size();
  if (m + k >= n) throw DomainError("trimmed_sum: need m + k < n");
  std::vector<double> v(sample.begin(), sample.end());
  std::sort(v.begin(), v.end());
  return detail::ascending_sum({v.data() + m, n - k - m});
}

/// n int_{m/n}^{1-k/n} Q_n(y) dy with the left-continuous sample quantile
/// Q_n(y) = X_{j:n} on ((j-1)/n, j/n]. Integrates the step function directly.
inline double trimmed_sum_quantile_integral(std::span<const double> sample, std::size_t m,
                                            std::size_t k) {
  const std::size_t n = sample.size();
  if (m + k >= n) throw DomainError("trimmed_sum: need m + k < n");
  std::vector<double> v(sample.begin(), sample.end());
  std::sort(v.begin(), v.end());
  const double nd = static_cast<double>(n);
  const double a = static_cast<double>(m) / nd;
  const double b = 1.0 - static_cast<double>(k) / nd;
  long double s = 0.0L;
  for (std::size_t j = 1; j <= n; ++j) {
    const double lo = std::max(static_cast<double>(j - 1) / nd, a);
    const double hi = std::min(static_cast<double>(j) / nd, b);
    if (hi > lo) s += static_cast<long double>(nd * (hi - lo)) * v[j - 1];
  }
  return static_cast<double>(s);
}

// ---------------------------------------------------------------------------
// Process frame

/// Sorted views of one sample together with the uniformized values
/// U_i = F(X_i). The upper tails W_i = 1 - U_i are kept separately (computed
/// from the survival function) because the extreme-sum functionals live near 1.
class ProcessFrame {
 public:
  static ProcessFrame from_path(std::span<const double> x, const MarginalX& mx,
                                const TargetMarginalY& ty, double sigma_n1) {
    ProcessFrame f(sigma_n1);
    f.mx_ = mx;
    f.ty_ = ty;
    f.analytic_ = mx.is_analytic();
    f.sorted_x_.assign(x.begin(), x.end());
    std::sort(f.sorted_x_.begin(), f.sorted_x_.end());
    f.tails_.resize(x.size());
    // Sorted ascending in X means descending in the upper tail.
    for (std::size_t i = 0; i < x.size(); ++i) f.tails_[x.size() - 1 - i] = mx.sf(f.sorted_x_[i]);
    f.finish();
    return f;
  }

  // Frame over given uniforms only (no marginals attached).
  static ProcessFrame from_uniforms(std::span<const double> u, double sigma_n1) {
    ProcessFrame f(sigma_n1);
    f.analytic_ = true;
    f.tails_.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!(u[i] > 0.0 && u[i] < 1.0)) throw DomainError("uniforms must lie in (0,1)");
      f.tails_[i] = 1.0 - u[i];
    }
    std::sort(f.tails_.begin(), f.tails_.end());
    f.finish();
    return f;
  }

  std::size_t n() const { return tails_.size(); }
  double sigma() const { return sigma_; }
  bool analytic() const { return analytic_; }
  bool has_marginals() const { return mx_.has_value(); }
  const MarginalX& mx() const { return need(mx_); }
  const TargetMarginalY& ty() const { return need(ty_); }

  // X_{1:n} <= ... <= X_{n:n} (empty for uniform-only frames).
  std::span<const double> sorted_x() const { return sorted_x_; }
  // U_{1:n} <= ... <= U_{n:n}.
  std::span<const double> sorted_u() const { return sorted_u_; }
  // W_(1) <= ... <= W_(n) with W = 1 - U; W_(i) belongs to U_{n+1-i:n}.
  std::span<const double> sorted_tails() const { return tails_; }

  // Number of W_i strictly below w, i.e. n (1 - E_n(1 - w)).
  std::size_t tails_below(double w) const {
    return static_cast<std::size_t>(std::lower_bound(tails_.begin(), tails_.end(), w) - tails_.begin());
  }

  // Subordinated values Q_Y(U_i), largest first.
  std::vector<double> subordinated_descending() const {
    std::vector<double> y(tails_.size());
    for (std::size_t i = 0; i < tails_.size(); ++i) y[i] = subordinate_upper(ty(), tails_[i]);
    return y;
  }

 private:
  explicit ProcessFrame(double sigma) : sigma_(sigma) {
    if (!(sigma > 0.0)) throw DomainError("sigma_n1 must be positive");
  }

  void finish() {
    if (tails_.empty()) throw SizeError("empty sample");
    sorted_u_.resize(tails_.size());
    for (std::size_t i = 0; i < tails_.size(); ++i) sorted_u_[i] = 1.0 - tails_[tails_.size() - 1 - i];
  }

  template <class T>
  static const T& need(const std::optional<T>& v) {
    if (!v) throw StateError("frame has no marginals attached");
    return *v;
  }

  double sigma_;
  bool analytic_ = false;
  std::optional<MarginalX> mx_;
  std::optional<TargetMarginalY> ty_;
  std::vector<double> sorted_x_;
  std::vector<double> sorted_u_;
  std::vector<double> tails_;
};

// alpha_n(y) = sigma_{n,1}^{-1} n (E_n(y) - y).
inline double alpha_n(const ProcessFrame& frame, double y) {
  if (!frame.analytic()) throw UnsupportedError("alpha_n needs an analytic X-marginal");
  if (!(y > 0.0 && y < 1.0)) throw DomainError("alpha_n: y must lie in (0,1)");
  const auto u = frame.sorted_u();
  const auto count = static_cast<double>(std::upper_bound(u.begin(), u.end(), y) - u.begin());
  return (count - static_cast<double>(frame.n()) * y) / frame.sigma();
}

// Q_n(y) = X_{j:n} for (j-1)/n < y <= j/n.
inline double sample_quantile(std::span<const double> sorted, double y) {
  if (!(y > 0.0 && y <= 1.0)) throw DomainError("sample_quantile: y must lie in (0,1]");
  const std::size_t n = sorted.size();
  const double nd = static_cast<double>(n);
  auto j = static_cast<std::size_t>(std::ceil(y * nd));
  j = std::clamp<std::size_t>(j, 1, n);
  if (j > 1 && y <= static_cast<double>(j - 1) / nd) --j;
  return sorted[j - 1];
}

// q_n(y) = sigma_{n,1}^{-1} n (Q(y) - Q_n(y)).
inline double quantile_process(const ProcessFrame& frame, double y) {
  if (!(y > 0.0 && y < 1.0)) throw DomainError("quantile_process: y must lie in (0,1)");
  const double q = frame.mx().quantile(y);
  return static_cast<double>(frame.n()) * (q - sample_quantile(frame.sorted_x(), y)) / frame.sigma();
}

/// sup_{y in [y0, y1]} |q_n(y) + sigma_{n,1}^{-1} sum X_i|. On each step of
/// Q_n the expression is monotone in y, so step endpoints suffice.
inline double quantile_partial_sum_gap(const ProcessFrame& frame, double sum_x, double y0 = 0.25,
                                       double y1 = 0.75) {
  if (!(0.0 < y0 && y0 < y1 && y1 < 1.0)) throw DomainError("need 0 < y0 < y1 < 1");
  const auto xs = frame.sorted_x();
  const double nd = static_cast<double>(frame.n());
  const double shift = sum_x / frame.sigma();
  const auto j_lo = static_cast<std::size_t>(std::max(1.0, std::ceil(y0 * nd)));
  const auto j_hi = static_cast<std::size_t>(std::min(nd, std::ceil(y1 * nd)));
  double best = 0.0;
  for (std::size_t j = j_lo; j <= j_hi; ++j) {
    const double lo = std::max(static_cast<double>(j - 1) / nd, y0);
    const double hi = std::min(static_cast<double>(j) / nd, y1);
    for (double y : {lo, hi}) {
      const double v = nd * (frame.mx().quantile(y) - xs[j - 1]) / frame.sigma() + shift;
      best = std::max(best, std::abs(v));
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Multilinear forms

/// Y_{n,r} for r = 1..r_max: at each time i, the elementary symmetric function
/// of order r of {c_j eps_{i-j} : j = 0..M}, summed over i = 1..n. Power sums
/// p_m(i) = sum_j c_j^m eps_{i-j}^m are FFT convolutions; Newton's identities
/// turn them into elementary symmetric functions.
inline std::vector<double> multilinear_Y_all(std::span<const double> eps, std::span<const double> c,
                                             int r_max) {
  if (r_max < 1) throw DomainError("multilinear_Y: order must be at least 1");
  if (r_max > 4) throw UnsupportedError("multilinear_Y: orders above 4 are not supported");
  std::vector<std::vector<double>> p(static_cast<std::size_t>(r_max) + 1);
  for (int m = 1; m <= r_max; ++m) {
    std::vector<double> cm(c.begin(), c.end());
    std::vector<double> em(eps.begin(), eps.end());
    for (auto& v : cm) v = std::pow(v, m);
    for (auto& v : em) v = std::pow(v, m);
    p[static_cast<std::size_t>(m)] = moving_average(cm, em);
  }
  const std::size_t n = p[1].size();
  std::vector<long double> totals(static_cast<std::size_t>(r_max) + 1, 0.0L);
  std::vector<double> e(static_cast<std::size_t>(r_max) + 1);
  for (std::size_t i = 0; i < n; ++i) {
    e[0] = 1.0;
    for (int r = 1; r <= r_max; ++r) {
      double acc = 0.0;
      for (int m = 1; m <= r; ++m) {
        const double term = e[static_cast<std::size_t>(r - m)] * p[static_cast<std::size_t>(m)][i];
        acc += (m % 2 == 1) ? term : -term;
      }
      e[static_cast<std::size_t>(r)] = acc / r;
      totals[static_cast<std::size_t>(r)] += e[static_cast<std::size_t>(r)];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(r_max));
  for (int r = 1; r <= r_max; ++r) out[static_cast<std::size_t>(r - 1)] = static_cast<double>(totals[static_cast<std::size_t>(r)]);
  return out;
}

inline double multilinear_Y(std::span<const double> eps, std::span<const double> c, int r) {
  return multilinear_Y_all(eps, c, r).back();
}

// ---------------------------------------------------------------------------
// Reduction principle

/// S_{n,p}(x) = sum_i (1{X_i <= x} - F(x)) + sum_{r=1}^p (-1)^{r-1} F^{(r)}(x) Y_{n,r},
/// evaluated from a sorted sample. left_limit selects the value just below x.
inline double reduction_process(std::span<const double> sorted_x, std::span<const double> Y,
                                const MarginalX& mx, double x, bool left_limit = false) {
  const auto count = left_limit
                         ? std::lower_bound(sorted_x.begin(), sorted_x.end(), x) - sorted_x.begin()
                         : std::upper_bound(sorted_x.begin(), sorted_x.end(), x) - sorted_x.begin();
  double s = static_cast<double>(count) - static_cast<double>(sorted_x.size()) * mx.cdf(x);
  for (std::size_t r = 1; r <= Y.size(); ++r) {
    const double term = mx.cdf_derivative(static_cast<int>(r), x) * Y[r - 1];
    s += (r % 2 == 1) ? term : -term;
  }
  return s;
}

struct ReductionSup {
  double value = 0.0;  // sup |S_{n,p}| / sigma_{n,1}
  std::size_t grid_points = 0;
};

inline constexpr std::size_t kReductionTailGrid = 512;

/// sup_x |S_{n,p}(x)| / sigma_{n,1} over the jump set of the empirical term
/// (each sample point and its left limit), the midpoints between neighbouring
/// sample points, and 512 log-spaced quantile points beyond the sample range
/// (256 per side).
inline ReductionSup reduction_sup(std::span<const double> x, std::span<const double> eps,
                                  std::span<const double> c, int p, const MarginalX& mx,
                                  double sigma_n1) {
  if (p < 0) throw DomainError("reduction_sup: p must be non-negative");
  if (p > 2) throw UnsupportedError("reduction_sup: p above 2 is not supported");
  if (!mx.has_derivatives()) throw UnsupportedError("reduction_sup needs analytic CDF derivatives");
  if (x.empty()) throw SizeError("reduction_sup: empty sample");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> Y;
  if (p >= 1) Y.push_back(detail::ascending_sum(sorted));
  if (p >= 2) Y.push_back(multilinear_Y(eps, c, 2));

  ReductionSup out;
  const auto visit_point = [&](double pt, bool both) {
    out.value = std::max(out.value, std::abs(reduction_process(sorted, Y, mx, pt)));
    ++out.grid_points;
    if (both) {
      out.value = std::max(out.value, std::abs(reduction_process(sorted, Y, mx, pt, true)));
      ++out.grid_points;
    }
  };
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i] == sorted[i - 1]) continue;
    visit_point(sorted[i], true);
    if (i + 1 < sorted.size() && sorted[i + 1] > sorted[i]) {
      visit_point(0.5 * (sorted[i] + sorted[i + 1]), false);
    }
  }
  const std::size_t half = kReductionTailGrid / 2;
  const double w_lo = std::min(mx.cdf(sorted.front()), 0.5);
  const double w_hi = std::min(mx.sf(sorted.back()), 0.5);
  const double floor_w = 1e-12;
  for (std::size_t j = 0; j < half; ++j) {
    const double t = (static_cast<double>(j) + 0.5) / static_cast<double>(half);
    if (w_lo > floor_w) {
      const double w = std::exp(std::log(floor_w) + t * (std::log(w_lo) - std::log(floor_w)));
      const double pt = mx.quantile(w);
      if (pt < sorted.front()) visit_point(pt, false);
    }
    if (w_hi > floor_w) {
      const double w = std::exp(std::log(floor_w) + t * (std::log(w_hi) - std::log(floor_w)));
      const double pt = mx.upper_quantile(w);
      if (pt > sorted.back()) visit_point(pt, false);
    }
  }
  out.value /= sigma_n1;
  return out;
}

// ---------------------------------------------------------------------------
// Z statistic and its decomposition

// A_n sigma^{-1} (top - mu).
inline double z_from_parts(double A_n, double sigma_n1, double top_sum, double mu_n) {
  return A_n / sigma_n1 * (top_sum - mu_n);
}

/// Z_n = A_n sigma_{n,1}^{-1} (sum of the k_n largest y - mu_n).
inline double z_statistic(std::span<const double> y, const ScalingBundle& b) {
  if (y.size() != b.n) throw ConfigError("z_statistic: sample length does not match the bundle");
  return z_from_parts(b.A_n, b.sigma_n1, top_k_sum(y, b.k_n), b.mu_n);
}

// Hash-checked form: the path must come from the configuration the bundle describes.
inline double z_statistic(const PathPair& path, const ScalingBundle& b) {
  if (path.spec_hash != b.spec_hash) {
    throw ConfigError("z_statistic: path and scaling bundle come from different configurations");
  }
  return z_statistic(path.y, b);
}

struct Decomposition {
  double I1 = kNaN;
  double I2 = kNaN;
  double I3 = kNaN;         // Z - I1 - I2
  double Z = kNaN;
  double I3_direct = kNaN;  // the third integral evaluated on its own
  double u_ratio = kNaN;    // U_{n-k_n:n} / (1 - k_n/n)
  double alpha_tail_sup = kNaN;  // sup over (1 - k_n/n, 1) of |alpha_n|
};

/// Splits Z_n into
///   I1 = -A_n int_{1-k/n}^{1-1/n} alpha_n dQ_Y,
///   I2 = -A_n int_{1-1/n}^{1} alpha_n dQ_Y,
///   I3 = Z_n - I1 - I2.
/// The Stieltjes integrals are exact: between jumps of E_n the integrand is
/// affine in y, so each segment reduces to increments of Q_Y and of
/// int (1-y) dQ_Y, evaluated in the upper-tail variable w = 1 - y.
inline Decomposition decompose_I(const ProcessFrame& frame, const ScalingBundle& b) {
  if (!frame.analytic()) throw UnsupportedError("decomposition needs an analytic X-marginal");
  if (b.k_n < 2) throw DomainError("decomposition needs k_n >= 2");
  if (frame.n() != b.n) throw ConfigError("decomposition: frame length does not match the bundle");
  const auto& ty = frame.ty();
  const auto w = frame.sorted_tails();
  const std::size_t n = frame.n();
  const double nd = static_cast<double>(n);
  const std::size_t k = b.k_n;
  const double scale = b.A_n * nd / b.sigma_n1;
  const double w_one = 1.0 / nd;
  const double w_k = static_cast<double>(k) / nd;

  // int over w in [lo, hi] of (a/n - w) d(-Q_Y(1-w)), with a = #{W_i < w} constant on the segment.
  const auto segment = [&](double lo, double hi, std::size_t a) {
    if (hi <= lo) return 0.0;
    const double drop = a == 0 ? 0.0 : static_cast<double>(a) / nd * ty.quantile_drop(lo, hi);
    return drop - ty.weighted_drop(lo, hi);
  };
  // Integral over w in [lo, hi] of (a/n - w) d(-Q_Y), splitting at every W_i inside.
  const auto integrate_range = [&](double lo, double hi) {
    std::size_t a = frame.tails_below(lo);
    long double acc = 0.0L;
    double cur = lo;
    // Points equal to lo do not change the count inside (lo, hi).
    while (a < n && w[a] <= lo) ++a;
    while (a < n && w[a] < hi) {
      acc += segment(cur, w[a], a);
      cur = w[a];
      ++a;
    }
    acc += segment(cur, hi, a);
    return static_cast<double>(acc);
  };

  Decomposition d;
  const auto y_desc = frame.subordinated_descending();
  d.Z = z_statistic(y_desc, b);
  d.I1 = scale * integrate_range(w_one, w_k);
  d.I2 = scale * integrate_range(0.0, w_one);
  d.I3 = d.Z - d.I1 - d.I2;

  // Third integral: A_n sigma^{-1} n int_{U_{n-k:n}}^{1-k/n} (1 - k/n - E_n) dQ_Y,
  // oriented. In w, 1 - k/n - E_n = (a - k)/n.
  const double w0 = w[k];  // W_(k+1), the tail of U_{n-k:n}
  {
    const double lo = std::min(w0, w_k);
    const double hi = std::max(w0, w_k);
    std::size_t a = frame.tails_below(lo);
    while (a < n && w[a] <= lo) ++a;
    long double acc = 0.0L;
    double cur = lo;
    const auto piece = [&](double s_lo, double s_hi, std::size_t count) {
      if (s_hi <= s_lo) return 0.0;
      return (static_cast<double>(k) - static_cast<double>(count)) / nd * ty.quantile_drop(s_lo, s_hi);
    };
    while (a < n && w[a] < hi) {
      acc += piece(cur, w[a], a);
      cur = w[a];
      ++a;
    }
    acc += piece(cur, hi, a);
    const double oriented = (w0 < w_k) ? static_cast<double>(acc) : -static_cast<double>(acc);
    d.I3_direct = scale * oriented;
  }

  d.u_ratio = (1.0 - w0) / (1.0 - w_k);

  double sup = 0.0;
  for (std::size_t i = 0; i < n && w[i] < w_k; ++i) {
    const double base = nd * w[i];
    sup = std::max({sup, std::abs(base - static_cast<double>(i)), std::abs(base - static_cast<double>(i + 1))});
  }
  sup = std::max(sup, std::abs(nd * w_k - static_cast<double>(frame.tails_below(w_k))));
  d.alpha_tail_sup = sup / b.sigma_n1;
  return d;
}

}  // namespace lrdext

#endif  // LRDEXT_ESTATS_HPP_
