#ifndef LRDEXT_MC_HPP_
#define LRDEXT_MC_HPP_

// Monte Carlo harness: replicate execution over a worker pool with results
// reduced by replicate index, the Kolmogorov-Smirnov test against N(0,1),
// convergence tables over n, and CSV output.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "lrdext/config.hpp"
#include "lrdext/errors.hpp"
#include "lrdext/estats.hpp"
#include "lrdext/model.hpp"
#include "lrdext/numerics.hpp"
#include "lrdext/scaling.hpp"
#include "lrdext/simulate.hpp"

namespace lrdext {

// ---------------------------------------------------------------------------
// Goodness of fit

/// P(K > t) for the Kolmogorov distribution. The alternating series is used
/// for t >= 1, the Jacobi theta form below.
inline double kolmogorov_sf(double t) {
  if (!(t > 0.0)) return 1.0;
  if (t < 1.0) {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double s = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double m = 2.0 * k - 1.0;
      const double term = std::exp(-m * m * pi2 / (8.0 * t * t));
      s += term;
      if (term < 1e-300) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / t * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 == 1) ? term : -term;
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double D = 0.0;
  double p = 1.0;
};

/// One-sample KS test of `sample` against the standard normal; p from the
/// asymptotic distribution of sqrt(m) D.
inline KsResult ks_test(std::span<const double> sample) {
  const std::size_t m = sample.size();
  if (m < 8) throw SizeError("ks_test needs at least 8 observations");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double md = static_cast<double>(m);
  double D = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double F = numerics::normal_cdf(s[i]);
    D = std::max({D, static_cast<double>(i + 1) / md - F, F - static_cast<double>(i) / md});
  }
  return {D, D == 0.0 ? 1.0 : kolmogorov_sf(std::sqrt(md) * D)};
}

struct QqPoint {
  double probability;
  double normal_quantile;
  double sample_quantile;
};

// Sample quantiles (type-7 interpolation) against N(0,1) at 0.05, 0.10, ..., 0.95.
inline std::vector<QqPoint> qq_table(std::span<const double> sample) {
  if (sample.empty()) throw SizeError("qq_table: empty sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  std::vector<QqPoint> out;
  for (int j = 1; j <= 19; ++j) {
    const double p = 0.05 * j;
    const double h = (static_cast<double>(s.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double q = s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
    out.push_back({p, numerics::normal_quantile(p), q});
  }
  return out;
}

struct Summary {
  std::size_t count = 0;
  double mean = kNaN;
  double variance = kNaN;  // unbiased
  KsResult ks;
  std::vector<QqPoint> qq;
};

// Deterministic in the order of z.
inline Summary summarize(std::span<const double> z) {
  Summary s;
  s.count = z.size();
  if (z.empty()) return s;
  long double acc = 0.0L;
  for (double v : z) acc += v;
  s.mean = static_cast<double>(acc / static_cast<long double>(z.size()));
  if (z.size() > 1) {
    long double ss = 0.0L;
    for (double v : z) ss += static_cast<long double>(v - s.mean) * (v - s.mean);
    s.variance = static_cast<double>(ss / static_cast<long double>(z.size() - 1));
  }
  if (z.size() >= 8) s.ks = ks_test(z);
  else s.ks = {kNaN, kNaN};
  s.qq = qq_table(z);
  return s;
}

inline double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ---------------------------------------------------------------------------
// Replicates

/// Runs f(i) for i in [0, count) on at most `threads` workers (0 = hardware
/// width). Results are placed by index; the exception of the lowest failing
/// index is rethrown.
template <class F>
void parallel_for_index(std::size_t count, unsigned threads, F&& f) {
  unsigned width = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  width = static_cast<unsigned>(std::min<std::size_t>(width, std::max<std::size_t>(count, 1)));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(width);
    for (unsigned t = 0; t < width; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct McOptions {
  unsigned threads = 0;
  bool decomposition = true;
  bool reduction = true;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  double z = kNaN;
  double i1 = kNaN;
  double i2 = kNaN;
  double i3 = kNaN;
  double i3_direct = kNaN;
  double u_ratio = kNaN;
  double alpha_tail_sup = kNaN;
  double reduction_sup = kNaN;
  double quantile_gap = kNaN;
  double sum_x = kNaN;
  std::size_t clamp_events = 0;
};

// Hypothesis checks run once per configuration before any simulation.
struct HypothesisChecks {
  double xi_threshold = kNaN;
  double power_rank_integral = kNaN;
  std::vector<double> D_r;  // r = 1..p where derivatives exist
};

struct McRunResult {
  std::string config_echo;
  std::uint64_t master_seed = 0;
  ScalingBundle bundle;
  HypothesisChecks checks;
  std::vector<double> z_samples;
  std::vector<ReplicateRecord> records;
  Summary summary;
};

/// Power-rank and D_r checks. A vanishing or divergent power-rank integral and
/// a divergent D_r reject the configuration.
inline HypothesisChecks run_hypothesis_checks(const Experiment& e, const ScalingBundle& b) {
  HypothesisChecks h;
  h.xi_threshold = b.xi_threshold;
  try {
    h.power_rank_integral = power_rank_integral(e.mx, e.ty);
  } catch (const NumericError& err) {
    throw NumericError(std::string("power-rank integral: ") + err.what());
  }
  if (!(std::abs(h.power_rank_integral) > 0.0)) {
    throw InfeasibleError("power-rank integral vanishes; the subordinated sequence does not have power rank 1");
  }
  if (e.mx.has_derivatives()) {
    for (int r = 1; r <= b.p; ++r) {
      try {
        h.D_r.push_back(check_condition_Dr(e.mx, e.ty, r));
      } catch (const NumericError& err) {
        throw NumericError("condition D_" + std::to_string(r) + ": " + std::string(err.what()));
      }
    }
  }
  return h;
}

/// Everything computed for one replicate. The path is fully determined by
/// derive_seed(master_seed, replicate).
inline ReplicateRecord run_one_replicate(const Experiment& e, const ScalingBundle& b,
                                         std::uint64_t master_seed, std::size_t replicate,
                                         const McOptions& opt) {
  ReplicateRecord rec;
  rec.replicate = replicate;
  rec.seed = derive_seed(master_seed, replicate);
  const PathPair path = simulate_path(e.coeffs, e.dist, e.mx, e.ty, b.n, rec.seed);
  rec.clamp_events = path.clamp_events;
  rec.z = z_statistic(path, b);
  rec.sum_x = detail::ascending_sum(path.x);
  if (e.mx.is_analytic() && opt.decomposition) {
    const auto frame = ProcessFrame::from_path(path.x, e.mx, e.ty, b.sigma_n1);
    const Decomposition d = decompose_I(frame, b);
    rec.i1 = d.I1;
    rec.i2 = d.I2;
    rec.i3 = rec.z - d.I1 - d.I2;
    rec.i3_direct = d.I3_direct;
    rec.u_ratio = d.u_ratio;
    rec.alpha_tail_sup = d.alpha_tail_sup;
    rec.quantile_gap = quantile_partial_sum_gap(frame, rec.sum_x);
  }
  if (e.mx.has_derivatives() && opt.reduction && b.p <= 2) {
    rec.reduction_sup = reduction_sup(path.x, path.innovations, e.coeffs.coefficients(), b.p, e.mx,
                                      b.sigma_n1).value;
  }
  return rec;
}

inline McRunResult run_replicates(const Experiment& e, std::size_t n, std::size_t R,
                                  std::uint64_t master_seed, const McOptions& opt = {}) {
  if (R < 1) throw DomainError("run_replicates needs R >= 1");
  if (e.dist.kind() == InnovationDist::Kind::gaussian) check_marginal_consistency(e.coeffs, e.dist, e.mx);
  McRunResult res;
  res.config_echo = serialize_config(e.config);
  res.master_seed = master_seed;
  res.bundle = make_scaling_bundle(e, n);
  res.checks = run_hypothesis_checks(e, res.bundle);
  res.records.resize(R);
  parallel_for_index(R, opt.threads, [&](std::size_t r) {
    res.records[r] = run_one_replicate(e, res.bundle, master_seed, r, opt);
  });
  res.z_samples.reserve(R);
  for (const auto& rec : res.records) res.z_samples.push_back(rec.z);
  res.summary = summarize(res.z_samples);
  return res;
}

// The config's single n, replicate count and master seed.
inline McRunResult run_replicates(const ExperimentConfig& c, const McOptions& opt = {}) {
  const Experiment e = build_experiment(c);
  return run_replicates(e, c.single_n(), c.replicates, c.master_seed, opt);
}

// ---------------------------------------------------------------------------
// Convergence

struct ConvergenceRow {
  std::size_t n = 0;
  std::size_t k_n = 0;
  double ks_d = kNaN;
  double ks_p = kNaN;
  double mean = kNaN;
  double variance = kNaN;
  double median_abs_i1 = kNaN;
  double median_abs_i2 = kNaN;
  double median_abs_i3 = kNaN;
  double median_u_ratio_dev = kNaN;
  double median_reduction_sup = kNaN;
  double median_alpha_tail_sup = kNaN;
  double median_quantile_gap = kNaN;
  double d_np = kNaN;
  double AK = kNaN;
  double iid_contrast = kNaN;           // (n/k_n) sigma_{n,1}^{-1} / a_n
  double iid_contrast_relative = kNaN;  // same with whole-sum scalings removed
};

inline ConvergenceRow convergence_row(const McRunResult& r, double contrast_alpha) {
  ConvergenceRow row;
  const auto& b = r.bundle;
  row.n = b.n;
  row.k_n = b.k_n;
  row.ks_d = r.summary.ks.D;
  row.ks_p = r.summary.ks.p;
  row.mean = r.summary.mean;
  row.variance = r.summary.variance;
  const auto col = [&](auto get) {
    std::vector<double> v;
    v.reserve(r.records.size());
    for (const auto& rec : r.records) v.push_back(get(rec));
    return median(std::move(v));
  };
  row.median_abs_i1 = col([](const ReplicateRecord& x) { return std::abs(x.i1); });
  row.median_abs_i2 = col([](const ReplicateRecord& x) { return std::abs(x.i2); });
  row.median_abs_i3 = col([](const ReplicateRecord& x) { return std::abs(x.i3); });
  row.median_u_ratio_dev = col([](const ReplicateRecord& x) { return std::abs(x.u_ratio - 1.0); });
  row.median_reduction_sup = col([](const ReplicateRecord& x) { return x.reduction_sup; });
  row.median_alpha_tail_sup = col([](const ReplicateRecord& x) { return x.alpha_tail_sup; });
  row.median_quantile_gap = col([](const ReplicateRecord& x) { return x.quantile_gap; });
  row.d_np = b.d_np;
  row.AK = b.AK();
  const double nd = static_cast<double>(b.n);
  const double kd = static_cast<double>(b.k_n);
  const auto c = iid_contrast(nd, kd, b.sigma_n1, contrast_alpha);
  row.iid_contrast = c.raw;
  row.iid_contrast_relative = c.relative;
  return row;
}

/// One run_replicates per n with the same R and master seed. Every n is
/// checked for feasibility before the first simulation.
inline std::vector<ConvergenceRow> convergence_study(const Experiment& e, const std::vector<std::size_t>& n_grid,
                                                     std::size_t R, std::uint64_t master_seed,
                                                     const McOptions& opt = {}) {
  if (n_grid.empty()) throw ConfigError("convergence_study: empty n_grid");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1]) throw ConfigError("convergence_study: n_grid must be increasing");
  }
  for (std::size_t n : n_grid) (void)make_scaling_bundle(e, n);
  std::vector<ConvergenceRow> rows;
  for (std::size_t n : n_grid) {
    rows.push_back(convergence_row(run_replicates(e, n, R, master_seed, opt), e.config.contrast_alpha));
  }
  return rows;
}

// True when v is non-increasing up to at most `allowed` inversions.
inline bool non_increasing_trend(std::span<const double> v, int allowed = 0) {
  int inversions = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) ++inversions;
  }
  return inversions <= allowed;
}

// ---------------------------------------------------------------------------
// CSV

namespace csv {

inline std::string num(double v) { return format_double(v); }

inline void write_z_samples(std::ostream& o, const McRunResult& r) {
  o << "replicate,seed,z,i1,i2,i3,u_ratio,reduction_sup\n";
  for (const auto& x : r.records) {
    o << x.replicate << ',' << x.seed << ',' << num(x.z) << ',' << num(x.i1) << ',' << num(x.i2) << ','
      << num(x.i3) << ',' << num(x.u_ratio) << ',' << num(x.reduction_sup) << '\n';
  }
}

inline void write_summary(std::ostream& o, const McRunResult& r) {
  const auto& b = r.bundle;
  const auto& s = r.summary;
  o << "metric,value\n";
  const auto row = [&o](const char* k, const std::string& v) { o << k << ',' << v << '\n'; };
  row("case", std::to_string(case_number(b.kase)));
  row("n", std::to_string(b.n));
  row("k_n", std::to_string(b.k_n));
  row("xi", num(b.xi));
  row("p", std::to_string(b.p));
  row("replicates", std::to_string(s.count));
  row("master_seed", std::to_string(r.master_seed));
  row("mean", num(s.mean));
  row("variance", num(s.variance));
  row("ks_d", num(s.ks.D));
  row("ks_p", num(s.ks.p));
  row("sigma_n1", num(b.sigma_n1));
  row("A_n", num(b.A_n));
  row("K_n", num(b.K_n));
  row("A_n_K_n", num(b.AK()));
  row("mu_n", num(b.mu_n));
  row("d_np", num(b.d_np));
  row("xi_threshold", num(b.xi_threshold));
  row("power_rank_integral", num(r.checks.power_rank_integral));
  for (std::size_t i = 0; i < r.checks.D_r.size(); ++i) {
    o << "D_" << (i + 1) << ',' << num(r.checks.D_r[i]) << '\n';
  }
  for (const auto& q : s.qq) {
    o << "qq_" << num(q.probability) << ',' << num(q.sample_quantile) << '\n';
  }
}

inline void write_convergence(std::ostream& o, const std::vector<ConvergenceRow>& rows) {
  o << "n,k_n,ks_d,ks_p,mean,variance,median_abs_i1,median_abs_i2,median_abs_i3,median_u_ratio_dev,"
       "median_reduction_sup,median_alpha_tail_sup,median_quantile_gap,d_np,a_n_k_n,iid_contrast,"
       "iid_contrast_relative\n";
  for (const auto& r : rows) {
    o << r.n << ',' << r.k_n << ',' << num(r.ks_d) << ',' << num(r.ks_p) << ',' << num(r.mean) << ','
      << num(r.variance) << ',' << num(r.median_abs_i1) << ',' << num(r.median_abs_i2) << ','
      << num(r.median_abs_i3) << ',' << num(r.median_u_ratio_dev) << ',' << num(r.median_reduction_sup) << ','
      << num(r.median_alpha_tail_sup) << ',' << num(r.median_quantile_gap) << ',' << num(r.d_np) << ','
      << num(r.AK) << ',' << num(r.iid_contrast) << ',' << num(r.iid_contrast_relative) << '\n';
  }
}

inline void write_path(std::ostream& o, const PathPair& p) {
  o << "i,x,y\n";
  for (std::size_t i = 0; i < p.x.size(); ++i) o << (i + 1) << ',' << num(p.x[i]) << ',' << num(p.y[i]) << '\n';
}

}  // namespace csv

}  // namespace lrdext

#endif  // LRDEXT_MC_HPP_
