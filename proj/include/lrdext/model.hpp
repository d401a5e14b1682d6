#ifndef LRDEXT_MODEL_HPP_
#define LRDEXT_MODEL_HPP_

// Declarative description of the stochastic model: moving-average
// coefficients, innovation laws, the marginal law of X together with its
// domain-of-attraction classification, and the target marginal of the
// subordinated sequence Y = Q_Y(F(X)).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "lrdext/errors.hpp"
#include "lrdext/numerics.hpp"
#include "lrdext/slowly_varying.hpp"

namespace lrdext {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------------------
// Domain-of-attraction tags

enum class MdaKind { frechet, gumbel };

struct MdaTag {
  MdaKind kind = MdaKind::gumbel;
  double index = kNaN;  // tail index for Frechet, unused for Gumbel

  static MdaTag frechet(double alpha) { return {MdaKind::frechet, alpha}; }
  static MdaTag gumbel() { return {MdaKind::gumbel, kNaN}; }

  bool is_frechet() const { return kind == MdaKind::frechet; }
};

enum class MdaCase { case1 = 1, case2 = 2, case3 = 3, case4 = 4 };

inline MdaCase derive_case(const MdaTag& x, const MdaTag& y) {
  if (x.is_frechet()) return y.is_frechet() ? MdaCase::case1 : MdaCase::case2;
  return y.is_frechet() ? MdaCase::case3 : MdaCase::case4;
}

inline int case_number(MdaCase c) { return static_cast<int>(c); }

// Label of the xi condition attached to each case.
inline std::string condition_label(MdaCase c) {
  switch (c) {
    case MdaCase::case1: return "(*)";
    case MdaCase::case2: return "(**)";
    case MdaCase::case3: return "(***)";
    case MdaCase::case4: return "(****)";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Coefficients

/// Moving-average coefficients c_0..c_M. For the regularly varying family
/// c_0 = 1 and c_k = k^{-beta} L0(k); L0 is read at max(k, e) so that the
/// first coefficients stay inside the domain of L0.
class CoefficientModel {
 public:
  static CoefficientModel regularly_varying(double beta, SlowlyVaryingFn L0, std::size_t M,
                                            bool capped = false) {
    if (!(beta > 0.5 && beta < 1.0)) throw DomainError("beta must lie in (1/2, 1)");
    if (M < 1) throw DomainError("truncation length must be positive");
    std::vector<double> c(M + 1);
    c[0] = 1.0;
    const auto L0_const = L0.constant_value();
    for (std::size_t k = 1; k <= M; ++k) {
      const double kd = static_cast<double>(k);
      const double l = L0_const ? *L0_const : L0(std::max(kd, std::numbers::e));
      c[k] = std::pow(kd, -beta) * l;
    }
    CoefficientModel m(std::move(c));
    m.beta_ = beta;
    m.L0_ = std::move(L0);
    m.capped_ = capped;
    return m;
  }

  static CoefficientModel explicit_values(std::vector<double> c) {
    if (c.empty()) throw ShapeError("coefficient vector must not be empty");
    return CoefficientModel(std::move(c));
  }

  std::span<const double> coefficients() const { return c_; }
  std::size_t truncation() const { return c_.size() - 1; }
  std::optional<double> beta() const { return beta_; }
  const std::optional<SlowlyVaryingFn>& L0() const { return L0_; }
  bool truncation_capped() const { return capped_; }

  double sum_of_squares() const {
    long double s = 0.0L;
    for (double v : c_) s += static_cast<long double>(v) * v;
    return static_cast<double>(s);
  }

  std::string describe() const {
    std::string s = "coeffs(M=" + std::to_string(truncation());
    if (beta_) s += ",beta=" + std::to_string(*beta_) + ",L0=" + L0_->describe();
    else s += ",explicit,sumsq=" + std::to_string(sum_of_squares());
    return s + ")";
  }

 private:
  explicit CoefficientModel(std::vector<double> c) : c_(std::move(c)) {}

  std::vector<double> c_;
  std::optional<double> beta_;
  std::optional<SlowlyVaryingFn> L0_;
  bool capped_ = false;
};

// ---------------------------------------------------------------------------
// Innovations

class InnovationDist {
 public:
  enum class Kind { gaussian, student_t };

  static InnovationDist gaussian(double sigma) {
    if (!(sigma > 0.0)) throw DomainError("innovation scale must be positive");
    return InnovationDist(Kind::gaussian, sigma, kNaN);
  }

  // Student-t with nu degrees of freedom rescaled to variance sigma^2.
  static InnovationDist student_t(double nu, double sigma) {
    if (!(nu > 4.0)) throw DomainError("student_t innovations need nu > 4 (finite fourth moment)");
    if (!(sigma > 0.0)) throw DomainError("innovation scale must be positive");
    return InnovationDist(Kind::student_t, sigma, nu);
  }

  Kind kind() const { return kind_; }
  double sigma() const { return sigma_; }
  double nu() const { return nu_; }
  double variance() const { return sigma_ * sigma_; }

  std::string describe() const {
    if (kind_ == Kind::gaussian) return "gaussian(" + std::to_string(sigma_) + ")";
    return "student_t(" + std::to_string(nu_) + "," + std::to_string(sigma_) + ")";
  }

 private:
  InnovationDist(Kind k, double s, double nu) : kind_(k), sigma_(s), nu_(nu) {}
  Kind kind_;
  double sigma_;
  double nu_;
};

// ---------------------------------------------------------------------------
// Marginal of X

enum class TailModel { frechet, gumbel };

// Fitted state of an empirical marginal: piecewise-linear CDF through the
// sample in the body, exponential lower tail, and a parametric upper tail
// spliced at the threshold order statistic.
struct EmpiricalFit {
  std::vector<double> knots_x;
  std::vector<double> knots_p;
  double lower_scale = 1.0;
  TailModel tail = TailModel::frechet;
  double threshold = 0.0;       // last knot
  double threshold_tail = 0.0;  // 1 - F(threshold)
  double alpha = kNaN;          // Frechet: 1 - F(x) = w_t (x / x_t)^{-alpha}
  double tau = kNaN;            // Gumbel: 1 - F(x) = exp(-(x / scale)^tau)
  double scale = kNaN;
  std::size_t sample_size = 0;
  std::size_t tail_count = 0;
};

class MarginalX {
 public:
  struct Gaussian {
    double s;
  };
  // Unit Pareto, Q(y) = (1 - y)^{-1/alpha}.
  struct Pareto {
    double alpha;
  };
  struct Empirical {
    std::shared_ptr<const EmpiricalFit> fit;
  };

  static MarginalX gaussian(double s) {
    if (!(s > 0.0)) throw DomainError("gaussian marginal needs a positive standard deviation");
    return MarginalX(Gaussian{s});
  }
  // Marginal of a linear process with Gaussian innovations.
  static MarginalX gaussian_for(const CoefficientModel& c, const InnovationDist& d) {
    return gaussian(std::sqrt(d.variance() * c.sum_of_squares()));
  }
  static MarginalX pareto(double alpha) {
    if (!(alpha > 0.0)) throw DomainError("pareto tail index must be positive");
    return MarginalX(Pareto{alpha});
  }
  static MarginalX empirical(std::shared_ptr<const EmpiricalFit> fit) {
    return MarginalX(Empirical{std::move(fit)});
  }
  // Placeholder that rejects every evaluation until replaced by a fitted one.
  static MarginalX empirical_unfitted() { return MarginalX(Empirical{nullptr}); }

  bool is_gaussian() const { return std::holds_alternative<Gaussian>(v_); }
  bool is_empirical() const { return std::holds_alternative<Empirical>(v_); }
  // F and its derivatives are available in closed form.
  bool is_analytic() const { return !is_empirical(); }
  double gaussian_sd() const { return std::get<Gaussian>(v_).s; }
  const EmpiricalFit& empirical_fit() const { return fit(); }

  double cdf(double x) const {
    return visit(
        [&](const Gaussian& g) { return numerics::normal_cdf(x / g.s); },
        [&](const Pareto& p) { return x <= 1.0 ? 0.0 : -std::expm1(-p.alpha * std::log(x)); },
        [&](const EmpiricalFit& e) { return x > e.threshold ? 1.0 - sf(x) : body_cdf(e, x); });
  }

  // 1 - F(x) without cancellation in the upper tail.
  double sf(double x) const {
    return visit(
        [&](const Gaussian& g) { return numerics::normal_sf(x / g.s); },
        [&](const Pareto& p) { return x <= 1.0 ? 1.0 : std::pow(x, -p.alpha); },
        [&](const EmpiricalFit& e) {
          if (x <= e.threshold) return 1.0 - body_cdf(e, x);
          if (e.tail == TailModel::frechet) return e.threshold_tail * std::pow(x / e.threshold, -e.alpha);
          return std::exp(-std::pow(x / e.scale, e.tau));
        });
  }

  double pdf(double x) const {
    return visit(
        [&](const Gaussian& g) { return numerics::normal_pdf(x / g.s) / g.s; },
        [&](const Pareto& p) { return x <= 1.0 ? 0.0 : p.alpha * std::pow(x, -p.alpha - 1.0); },
        [&](const EmpiricalFit& e) {
          if (x > e.threshold) {
            const double t = sf(x);
            if (e.tail == TailModel::frechet) return e.alpha * t / x;
            return e.tau / e.scale * std::pow(x / e.scale, e.tau - 1.0) * t;
          }
          return body_pdf(e, x);
        });
  }

  double quantile(double y) const {
    check_unit(y, "quantile");
    return visit(
        [&](const Gaussian& g) { return g.s * numerics::normal_quantile(y); },
        [&](const Pareto& p) { return std::exp(-std::log1p(-y) / p.alpha); },
        [&](const EmpiricalFit& e) {
          if (1.0 - y < e.threshold_tail) return upper_quantile(1.0 - y);
          return body_quantile(e, y);
        });
  }

  // Q(1 - w), accurate for small w.
  double upper_quantile(double w) const {
    check_unit(w, "upper_quantile");
    return visit(
        [&](const Gaussian& g) { return g.s * numerics::normal_isf(w); },
        [&](const Pareto& p) { return std::pow(w, -1.0 / p.alpha); },
        [&](const EmpiricalFit& e) {
          if (w >= e.threshold_tail) return body_quantile(e, 1.0 - w);
          if (e.tail == TailModel::frechet) return e.threshold * std::pow(w / e.threshold_tail, -1.0 / e.alpha);
          return e.scale * std::pow(-std::log(w), 1.0 / e.tau);
        });
  }

  // fQ(y) = f(Q(y)).
  double density_quantile(double y) const {
    check_unit(y, "density_quantile");
    if (y > 0.5) return upper_density_quantile(1.0 - y);
    return pdf(quantile(y));
  }

  // fQ(1 - w).
  double upper_density_quantile(double w) const {
    check_unit(w, "upper_density_quantile");
    return visit(
        [&](const Gaussian& g) { return numerics::normal_pdf(numerics::normal_isf(w)) / g.s; },
        [&](const Pareto& p) { return p.alpha * std::pow(w, 1.0 + 1.0 / p.alpha); },
        [&](const EmpiricalFit& e) {
          if (w < e.threshold_tail) {
            if (e.tail == TailModel::frechet) return e.alpha * w / upper_quantile(w);
            return w * e.tau / e.scale * std::pow(-std::log(w), 1.0 - 1.0 / e.tau);
          }
          return body_pdf(e, body_quantile(e, 1.0 - w));
        });
  }

  bool has_derivatives() const { return is_analytic(); }

  // r-th derivative of F.
  double cdf_derivative(int r, double x) const {
    if (r < 1) throw DomainError("cdf_derivative: order must be at least 1");
    return visit(
        [&](const Gaussian& g) {
          const double z = x / g.s;
          const double sign = (r % 2 == 1) ? 1.0 : -1.0;
          return sign * numerics::hermite_he(r - 1, z) * numerics::normal_pdf(z) / std::pow(g.s, r);
        },
        [&](const Pareto& p) {
          if (x <= 1.0) return 0.0;
          double rising = 1.0;
          for (int j = 0; j < r; ++j) rising *= p.alpha + j;
          const double sign = (r % 2 == 1) ? 1.0 : -1.0;
          return sign * rising * std::pow(x, -p.alpha - r);
        },
        [&](const EmpiricalFit&) -> double {
          throw UnsupportedError("empirical marginal has no stable CDF derivatives");
        });
  }

  MdaTag mda() const {
    return visit([](const Gaussian&) { return MdaTag::gumbel(); },
                 [](const Pareto& p) { return MdaTag::frechet(p.alpha); },
                 [](const EmpiricalFit& e) {
                   return e.tail == TailModel::frechet ? MdaTag::frechet(e.alpha) : MdaTag::gumbel();
                 });
  }

  // Q(1 - 1/u) = u^{1/alpha} L1(u). Frechet marginals only.
  std::optional<SlowlyVaryingFn> L1() const {
    return visit(
        [](const Gaussian&) -> std::optional<SlowlyVaryingFn> { return std::nullopt; },
        [](const Pareto&) -> std::optional<SlowlyVaryingFn> { return SlowlyVaryingFn::constant(1.0); },
        [](const EmpiricalFit& e) -> std::optional<SlowlyVaryingFn> {
          if (e.tail != TailModel::frechet) return std::nullopt;
          return SlowlyVaryingFn::constant(e.threshold * std::pow(e.threshold_tail, 1.0 / e.alpha));
        });
  }

  // fQ(1 - 1/u) = u^{-1-1/alpha} L2(u), with L2 = alpha / L1. Frechet marginals only.
  std::optional<SlowlyVaryingFn> L2() const {
    const auto l1 = L1();
    if (!l1) return std::nullopt;
    return SlowlyVaryingFn::constant(mda().index / *l1->constant_value());
  }

  /// Gumbel marginals only. Defined through the tail integral,
  /// L3(1/y) = y / int_{1-y}^1 (1-u)/fQ(u) du, which makes fQ(1-y) ~ y L3(1/y).
  /// The Gaussian integral has the closed form s (phi(z) - z y) with z the
  /// standardized upper quantile; the Weibull-type empirical tail reduces to an
  /// upper incomplete gamma function.
  std::optional<SlowlyVaryingFn> L3() const {
    return visit(
        [](const Gaussian& g) -> std::optional<SlowlyVaryingFn> {
          const double s = g.s;
          return SlowlyVaryingFn::numeric("gaussian_L3", [s](double u) {
            const double y = 1.0 / u;
            const double z = numerics::normal_isf(y);
            return y / (s * (numerics::normal_pdf(z) - z * y));
          });
        },
        [](const Pareto&) -> std::optional<SlowlyVaryingFn> { return std::nullopt; },
        [](const EmpiricalFit& e) -> std::optional<SlowlyVaryingFn> {
          if (e.tail != TailModel::gumbel) return std::nullopt;
          const double tau = e.tau;
          const double scale = e.scale;
          return SlowlyVaryingFn::numeric("weibull_tail_L3", [tau, scale](double u) {
            const double g = boost::math::tgamma(1.0 / tau, std::log(u));
            return tau / (scale * u * g);
          });
        });
  }

  std::string describe() const {
    return visit(
        [](const Gaussian& g) { return "gaussian(" + std::to_string(g.s) + ")"; },
        [](const Pareto& p) { return "pareto(" + std::to_string(p.alpha) + ")"; },
        [](const EmpiricalFit& e) {
          return std::string("empirical(") + (e.tail == TailModel::frechet ? "frechet," : "gumbel,") +
                 std::to_string(e.sample_size) + "," + std::to_string(e.tail_count) + ")";
        });
  }

 private:
  using Variant = std::variant<Gaussian, Pareto, Empirical>;
  explicit MarginalX(Variant v) : v_(std::move(v)) {}

  const EmpiricalFit& fit() const {
    const auto* e = std::get_if<Empirical>(&v_);
    if (!e) throw StateError("marginal is not empirical");
    if (!e->fit) throw StateError("empirical marginal used before fitting");
    return *e->fit;
  }

  template <class G, class P, class E>
  auto visit(G&& g, P&& p, E&& e) const -> std::invoke_result_t<G, const Gaussian&> {
    if (const auto* a = std::get_if<Gaussian>(&v_)) return g(*a);
    if (const auto* b = std::get_if<Pareto>(&v_)) return p(*b);
    return e(fit());
  }

  static void check_unit(double y, const char* what) {
    if (!(y > 0.0 && y < 1.0)) throw DomainError(std::string(what) + ": argument must lie in (0,1)");
  }

  static double body_cdf(const EmpiricalFit& e, double x) {
    const auto& xs = e.knots_x;
    const auto& ps = e.knots_p;
    if (x < xs.front()) return ps.front() * std::exp((x - xs.front()) / e.lower_scale);
    if (x >= xs.back()) return ps.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - xs.begin());
    const double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return ps[j - 1] + t * (ps[j] - ps[j - 1]);
  }

  static double body_pdf(const EmpiricalFit& e, double x) {
    const auto& xs = e.knots_x;
    const auto& ps = e.knots_p;
    if (x < xs.front()) return body_cdf(e, x) / e.lower_scale;
    std::size_t j = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    j = std::clamp<std::size_t>(j, 1, xs.size() - 1);
    return (ps[j] - ps[j - 1]) / (xs[j] - xs[j - 1]);
  }

  static double body_quantile(const EmpiricalFit& e, double y) {
    const auto& xs = e.knots_x;
    const auto& ps = e.knots_p;
    if (y < ps.front()) return xs.front() + e.lower_scale * std::log(y / ps.front());
    if (y >= ps.back()) return xs.back();
    const auto it = std::upper_bound(ps.begin(), ps.end(), y);
    const std::size_t j = static_cast<std::size_t>(it - ps.begin());
    const double t = (y - ps[j - 1]) / (ps[j] - ps[j - 1]);
    return xs[j - 1] + t * (xs[j] - xs[j - 1]);
  }

  Variant v_;
};

enum class MarginalFn { F, f, Q, fQ };

inline double marginal_eval(const MarginalX& m, MarginalFn which, double arg) {
  switch (which) {
    case MarginalFn::F: return m.cdf(arg);
    case MarginalFn::f: return m.pdf(arg);
    case MarginalFn::Q: return m.quantile(arg);
    case MarginalFn::fQ: return m.density_quantile(arg);
  }
  throw DomainError("marginal_eval: unknown function");
}

/// Fits a continuous, strictly increasing marginal to a sample: linear
/// interpolation of the empirical CDF in the body and a parametric upper tail
/// above the (1 - tail_fraction) order statistic. The Frechet tail uses the
/// Hill estimator with a pure Pareto splice (constant L1); the Gumbel tail is
/// Weibull-type, 1 - F(x) = exp(-(x/scale)^tau), with tau from a log-log
/// regression on the tail order statistics.
inline MarginalX fit_empirical_marginal(std::span<const double> sample, double tail_fraction,
                                        TailModel model = TailModel::frechet) {
  if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) {
    throw DomainError("tail_fraction must lie in (0,1)");
  }
  const std::size_t n = sample.size();
  if (n < 10000) throw SizeError("empirical fit needs at least 10^4 observations");
  const auto k = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n)));
  if (k < 100) throw SizeError("empirical fit needs at least 100 tail observations");
  if (k >= n - 1) throw SizeError("tail fraction leaves no body");

  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double nd = static_cast<double>(n);
  const std::size_t j = n - k - 1;  // index of the threshold order statistic

  auto fit = std::make_shared<EmpiricalFit>();
  fit->tail = model;
  fit->sample_size = n;
  fit->tail_count = k;
  for (std::size_t i = 0; i <= j; ++i) {
    if (i + 1 <= j && s[i + 1] == s[i]) continue;  // keep the last of equal values
    fit->knots_x.push_back(s[i]);
    fit->knots_p.push_back(static_cast<double>(i + 1) / (nd + 1.0));
  }
  if (fit->knots_x.size() < 2 || s.back() <= s[j]) {
    throw FitError("sample is degenerate: no spread in the body or tail");
  }
  fit->threshold = s[j];
  fit->threshold_tail = 1.0 - fit->knots_p.back();
  const double slope0 =
      (fit->knots_p[1] - fit->knots_p[0]) / (fit->knots_x[1] - fit->knots_x[0]);
  fit->lower_scale = fit->knots_p[0] / slope0;

  if (!(fit->threshold > 0.0)) {
    throw FitError("tail fit needs positive values above the threshold");
  }
  if (model == TailModel::frechet) {
    long double acc = 0.0L;
    for (std::size_t i = j + 1; i < n; ++i) acc += std::log(s[i] / fit->threshold);
    const double mean_log = static_cast<double>(acc / static_cast<long double>(k));
    if (!(mean_log > 0.0)) throw FitError("Hill estimator undefined on a flat tail");
    fit->alpha = 1.0 / mean_log;
  } else {
    // Regress log x on log(-log w) over the tail points, w the plotting position.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t m = 0;
    for (std::size_t i = j; i < n; ++i) {
      const double w = 1.0 - static_cast<double>(i + 1) / (nd + 1.0);
      const double a = std::log(-std::log(w));
      const double b = std::log(s[i]);
      sx += a;
      sy += b;
      sxx += a * a;
      sxy += a * b;
      ++m;
    }
    const double md = static_cast<double>(m);
    const double slope = (sxy - sx * sy / md) / (sxx - sx * sx / md);
    if (!(slope > 0.0) || !std::isfinite(slope)) throw FitError("Weibull-type tail fit failed");
    fit->tau = 1.0 / slope;
    fit->scale = fit->threshold / std::pow(-std::log(fit->threshold_tail), 1.0 / fit->tau);
  }
  return MarginalX::empirical(std::move(fit));
}

// ---------------------------------------------------------------------------
// Target marginal of Y

class TargetMarginalY {
 public:
  struct Pareto {
    double alpha0;
  };
  struct Exponential {};
  // Y = alpha log(X) in the upper tail for X with Q(1-w) = w^{-1/alpha} - shift;
  // below the point where that quantile equals 1 the quantile of Y continues
  // linearly with matching slope.
  struct LogPareto {
    double alpha;
    double shift;
  };
  struct Custom {
    std::string name;
    std::function<double(double)> upper_quantile;          // w -> Q_Y(1-w)
    std::function<double(double)> upper_density_quantile;  // w -> f_Y Q_Y(1-w)
    std::function<double(double)> density_quantile;        // y -> f_Y Q_Y(y), optional
    MdaTag mda;
    std::optional<SlowlyVaryingFn> L1, L2, L3;
  };

  static TargetMarginalY pareto(double alpha0) {
    if (!(alpha0 > 0.0)) throw DomainError("pareto tail index must be positive");
    return TargetMarginalY(Pareto{alpha0});
  }
  static TargetMarginalY exponential() { return TargetMarginalY(Exponential{}); }
  static TargetMarginalY log_pareto(double alpha, double shift = 0.0) {
    if (!(alpha > 1.0)) throw DomainError("log-pareto needs alpha > 1");
    if (!(shift >= 0.0)) throw DomainError("log-pareto shift must be non-negative");
    return TargetMarginalY(LogPareto{alpha, shift});
  }
  static TargetMarginalY custom(Custom c) { return TargetMarginalY(std::move(c)); }

  // F_Y = F: the subordination is the identity map.
  static TargetMarginalY same_as(const MarginalX& mx) {
    Custom c;
    c.name = "same_as:" + mx.describe();
    c.upper_quantile = [mx](double w) { return mx.upper_quantile(w); };
    c.upper_density_quantile = [mx](double w) { return mx.upper_density_quantile(w); };
    c.density_quantile = [mx](double y) { return mx.density_quantile(y); };
    c.mda = mx.mda();
    c.L1 = mx.L1();
    c.L2 = mx.L2();
    c.L3 = mx.L3();
    return custom(std::move(c));
  }

  bool is_pareto() const { return std::holds_alternative<Pareto>(v_); }
  bool is_exponential() const { return std::holds_alternative<Exponential>(v_); }
  bool is_custom() const { return std::holds_alternative<Custom>(v_); }

  // Q_Y(1 - w).
  double upper_quantile(double w) const {
    check_unit(w);
    return std::visit(
        [w](const auto& v) -> double {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Pareto>) {
            return std::pow(w, -1.0 / v.alpha0);
          } else if constexpr (std::is_same_v<T, Exponential>) {
            return -std::log(w);
          } else if constexpr (std::is_same_v<T, LogPareto>) {
            const double w0 = log_pareto_splice(v);
            if (w <= w0) return v.alpha * std::log(std::pow(w, -1.0 / v.alpha) - v.shift);
            return -log_pareto_slope(v) * (w - w0);
          } else {
            return v.upper_quantile(w);
          }
        },
        v_);
  }

  double quantile(double y) const {
    check_unit(y);
    if (is_exponential()) return -std::log1p(-y);
    if (const auto* p = std::get_if<Pareto>(&v_)) return std::exp(-std::log1p(-y) / p->alpha0);
    return upper_quantile(1.0 - y);
  }

  // f_Y Q_Y(1 - w).
  double upper_density_quantile(double w) const {
    check_unit(w);
    return std::visit(
        [w](const auto& v) -> double {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Pareto>) {
            return v.alpha0 * std::pow(w, 1.0 + 1.0 / v.alpha0);
          } else if constexpr (std::is_same_v<T, Exponential>) {
            return w;
          } else if constexpr (std::is_same_v<T, LogPareto>) {
            if (w <= log_pareto_splice(v)) return w * (1.0 - v.shift * std::pow(w, 1.0 / v.alpha));
            return 1.0 / log_pareto_slope(v);
          } else {
            return v.upper_density_quantile(w);
          }
        },
        v_);
  }

  double density_quantile(double y) const {
    check_unit(y);
    if (is_exponential()) return 1.0 - y;
    if (const auto* p = std::get_if<Pareto>(&v_)) {
      return p->alpha0 * std::exp((1.0 + 1.0 / p->alpha0) * std::log1p(-y));
    }
    if (const auto* c = std::get_if<Custom>(&v_); c && c->density_quantile && y < 0.5) {
      return c->density_quantile(y);
    }
    // 1 - y rounds to 1 for tiny y; stay just inside the domain.
    return upper_density_quantile(std::min(1.0 - y, std::nextafter(1.0, 0.0)));
  }

  bool has_finite_mean() const {
    if (const auto* p = std::get_if<Pareto>(&v_)) return p->alpha0 > 1.0;
    return true;
  }

  /// int_{1-w}^1 Q_Y(t) dt: closed form for Pareto and exponential, quadrature otherwise.
  double tail_integral(double w) const {
    if (!(w > 0.0 && w <= 1.0)) throw DomainError("tail_integral: argument must lie in (0,1]");
    if (!has_finite_mean()) throw NumericError("tail integral diverges: E Y is infinite (alpha0 <= 1)");
    if (const auto* p = std::get_if<Pareto>(&v_)) {
      const double e = 1.0 - 1.0 / p->alpha0;
      return std::pow(w, e) / e;
    }
    if (is_exponential()) return w * (1.0 - std::log(w));
    return tail_integral_numeric(w);
  }

  // Quadrature route for tail_integral, available for every variant.
  double tail_integral_numeric(double w) const {
    if (!has_finite_mean()) throw NumericError("tail integral diverges: E Y is infinite (alpha0 <= 1)");
    const auto g = [this](double t) { return upper_quantile(std::min(t, 1.0 - 1e-16)); };
    return numerics::integrate_from_zero(g, w, {1e-12, 1e-10});
  }

  /// Q_Y(1 - lo) - Q_Y(1 - hi) for 0 < lo <= hi < 1, without cancellation on
  /// short segments.
  double quantile_drop(double lo, double hi) const {
    if (!(lo > 0.0 && lo <= hi && hi < 1.0)) throw DomainError("quantile_drop: need 0 < lo <= hi < 1");
    if (lo == hi) return 0.0;
    const double r = std::log1p((hi - lo) / lo);
    if (is_exponential()) return r;
    if (const auto* p = std::get_if<Pareto>(&v_)) {
      return -std::pow(lo, -1.0 / p->alpha0) * std::expm1(-r / p->alpha0);
    }
    return upper_quantile(lo) - upper_quantile(hi);
  }

  /// int_{lo}^{hi} w dQ_Y(1 - w), i.e. int (1 - y) dQ_Y(y) over the matching
  /// y-range; lo may be 0.
  double weighted_drop(double lo, double hi) const {
    if (!(lo >= 0.0 && lo <= hi && hi < 1.0)) throw DomainError("weighted_drop: need 0 <= lo <= hi < 1");
    if (lo == hi) return 0.0;
    if (is_exponential()) return hi - lo;
    if (const auto* p = std::get_if<Pareto>(&v_)) {
      const double e = 1.0 - 1.0 / p->alpha0;
      if (lo == 0.0) return std::pow(hi, e) / (e * p->alpha0);
      const double r = std::log1p((hi - lo) / lo);
      return std::pow(lo, e) * std::expm1(e * r) / (e * p->alpha0);
    }
    const auto f = [this](double w) { return w / upper_density_quantile(w); };
    if (lo == 0.0) return numerics::integrate_from_zero(f, hi, {1e-300, 1e-12});
    return numerics::integrate(f, lo, hi, {1e-300, 1e-12});
  }

  MdaTag mda() const {
    return std::visit(
        [](const auto& v) -> MdaTag {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Pareto>) return MdaTag::frechet(v.alpha0);
          else if constexpr (std::is_same_v<T, Custom>) return v.mda;
          else return MdaTag::gumbel();
        },
        v_);
  }

  std::optional<SlowlyVaryingFn> L1() const {
    if (is_pareto()) return SlowlyVaryingFn::constant(1.0);
    if (const auto* c = std::get_if<Custom>(&v_)) return c->L1;
    return std::nullopt;
  }

  // L2* = alpha0 / L1*.
  std::optional<SlowlyVaryingFn> L2() const {
    if (const auto* p = std::get_if<Pareto>(&v_)) return SlowlyVaryingFn::constant(p->alpha0);
    if (const auto* c = std::get_if<Custom>(&v_)) return c->L2;
    return std::nullopt;
  }

  // L3*, defined through the same tail integral as MarginalX::L3.
  std::optional<SlowlyVaryingFn> L3() const {
    if (is_exponential()) return SlowlyVaryingFn::constant(1.0);
    if (const auto* lp = std::get_if<LogPareto>(&v_)) {
      const LogPareto v = *lp;
      return SlowlyVaryingFn::numeric("log_pareto_L3", [v](double u) {
        const double y = 1.0 / u;
        const TargetMarginalY ty(v);
        const double integral = numerics::integrate_from_zero(
            [&ty](double t) { return t / ty.upper_density_quantile(t); }, y, {1e-14, 1e-10});
        return y / integral;
      });
    }
    if (const auto* c = std::get_if<Custom>(&v_)) return c->L3;
    return std::nullopt;
  }

  std::string describe() const {
    return std::visit(
        [](const auto& v) -> std::string {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Pareto>) return "pareto(" + std::to_string(v.alpha0) + ")";
          else if constexpr (std::is_same_v<T, Exponential>) return "exponential";
          else if constexpr (std::is_same_v<T, LogPareto>)
            return "log_pareto(" + std::to_string(v.alpha) + "," + std::to_string(v.shift) + ")";
          else return "custom(" + v.name + ")";
        },
        v_);
  }

 private:
  using Variant = std::variant<Pareto, Exponential, LogPareto, Custom>;
  explicit TargetMarginalY(Variant v) : v_(std::move(v)) {}

  static void check_unit(double y) {
    if (!(y > 0.0 && y < 1.0)) throw DomainError("target marginal: argument must lie in (0,1)");
  }

  // Upper-tail probability at which the underlying quantile equals 1.
  static double log_pareto_splice(const LogPareto& v) { return std::pow(1.0 + v.shift, -v.alpha); }
  // Slope of Q_Y at the splice point.
  static double log_pareto_slope(const LogPareto& v) {
    const double w0 = log_pareto_splice(v);
    return std::pow(w0, -1.0 / v.alpha - 1.0);
  }

  Variant v_;
};

// ---------------------------------------------------------------------------
// Subordination

inline constexpr double kClampEpsilon = 1e-15;

struct ClampCounter {
  std::atomic<std::size_t> events{0};
};

/// Upper-tail version of G: maps w = 1 - F(x) to Q_Y(1 - w), clamping w into
/// [1e-15, 1 - 1e-15] so saturation of F never produces infinities.
inline double subordinate_upper(const TargetMarginalY& ty, double w, ClampCounter* clamps = nullptr) {
  if (!(w >= kClampEpsilon && w <= 1.0 - kClampEpsilon)) {
    if (clamps) clamps->events.fetch_add(1, std::memory_order_relaxed);
    w = std::clamp(w, kClampEpsilon, 1.0 - kClampEpsilon);
  }
  return ty.upper_quantile(w);
}

// G(x) = Q_Y(F(x)).
inline double subordinate(const MarginalX& mx, const TargetMarginalY& ty, double x,
                          ClampCounter* clamps = nullptr) {
  return subordinate_upper(ty, mx.sf(x), clamps);
}

}  // namespace lrdext

#endif  // LRDEXT_MODEL_HPP_
