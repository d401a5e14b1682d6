#ifndef LRDEXT_CONFIG_HPP_
#define LRDEXT_CONFIG_HPP_

// Flat key = value experiment configuration and the model it describes.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lrdext/errors.hpp"
#include "lrdext/model.hpp"
#include "lrdext/scaling.hpp"
#include "lrdext/simulate.hpp"
#include "lrdext/slowly_varying.hpp"

namespace lrdext {

// Shortest decimal that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct ExperimentConfig {
  double beta = 0.0;
  double l0 = 1.0;
  double l0_log_exponent = 0.0;
  std::string innovation = "gaussian";  // gaussian | student_t
  double sigma_eps = 1.0;
  std::optional<double> nu;
  std::string x_marginal = "gaussian";  // gaussian | empirical | pareto
  std::optional<double> x_alpha;        // tail index for x_marginal = pareto
  double x_tail_fraction = 0.05;
  std::string x_tail_model = "frechet";  // frechet | gumbel
  std::size_t x_fit_size = std::size_t{1} << 16;
  std::string y_marginal = "exponential";  // exponential | pareto | log_pareto | same_as_x
  std::optional<double> alpha0;
  std::optional<double> y_log_alpha;
  double y_log_shift = 0.0;
  double xi = 0.0;
  std::vector<std::size_t> n_grid;
  bool grid_key = false;  // written back as n_grid rather than n
  std::size_t replicates = 100;
  std::optional<int> p;
  std::uint64_t master_seed = 0;
  double truncation_tol = kDefaultTruncationTol;
  std::size_t truncation_cap = kDefaultTruncationCap;
  std::string output_dir = "out";
  double contrast_alpha = 4.0;

  bool operator==(const ExperimentConfig&) const = default;

  std::size_t single_n() const {
    if (n_grid.size() != 1) throw ConfigError("this command needs a single n, not an n_grid");
    return n_grid.front();
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
  return v;
}

inline const std::set<std::string, std::less<>>& known_keys() {
  static const std::set<std::string, std::less<>> keys = {
      "beta",       "l0",          "l0_log_exponent", "innovation",     "sigma_eps",
      "nu",         "x_marginal",  "x_alpha",         "x_tail_fraction", "x_tail_model",
      "x_fit_size", "y_marginal",  "alpha0",          "y_log_alpha",    "y_log_shift",
      "xi",         "n",           "n_grid",          "replicates",     "p",
      "master_seed", "truncation_tol", "truncation_cap", "output_dir",   "contrast_alpha"};
  return keys;
}

}  // namespace detail

inline TargetMarginalY build_target(const ExperimentConfig& c, const MarginalX& mx) {
  if (c.y_marginal == "exponential") return TargetMarginalY::exponential();
  if (c.y_marginal == "pareto") return TargetMarginalY::pareto(c.alpha0.value());
  if (c.y_marginal == "log_pareto") return TargetMarginalY::log_pareto(c.y_log_alpha.value(), c.y_log_shift);
  return TargetMarginalY::same_as(mx);
}

inline SlowlyVaryingFn build_L0(const ExperimentConfig& c) {
  if (c.l0_log_exponent == 0.0) return SlowlyVaryingFn::constant(c.l0);
  return SlowlyVaryingFn::log_power(c.l0, c.l0_log_exponent);
}

inline InnovationDist build_innovations(const ExperimentConfig& c) {
  if (c.innovation == "student_t") return InnovationDist::student_t(c.nu.value(), c.sigma_eps);
  return InnovationDist::gaussian(c.sigma_eps);
}

namespace detail {

// Semantic checks after all keys were read; appends every violation found.
inline void validate(const ExperimentConfig& c, std::vector<std::string>& bad, bool& infeasible) {
  const std::size_t before = bad.size();
  if (!(c.beta > 0.5 && c.beta < 1.0)) bad.push_back("beta must lie in (1/2, 1)");
  if (!(c.l0 > 0.0)) bad.push_back("l0 must be positive");
  if (c.innovation != "gaussian" && c.innovation != "student_t") {
    bad.push_back("innovation must be gaussian or student_t");
  }
  if (!(c.sigma_eps > 0.0)) bad.push_back("sigma_eps must be positive");
  if (c.innovation == "student_t" && !(c.nu && *c.nu > 4.0)) bad.push_back("student_t innovations need nu > 4");
  if (c.x_marginal != "gaussian" && c.x_marginal != "empirical" && c.x_marginal != "pareto") {
    bad.push_back("x_marginal must be gaussian, empirical or pareto");
  }
  if (c.innovation == "gaussian" && c.x_marginal == "empirical") {
    bad.push_back("x_marginal = empirical is meant for non-Gaussian innovations");
  }
  if (c.innovation == "student_t" && c.x_marginal == "gaussian") {
    bad.push_back("student_t innovations need x_marginal = empirical");
  }
  if (c.x_marginal == "pareto" && !(c.x_alpha && *c.x_alpha > 0.0)) {
    bad.push_back("x_marginal = pareto needs x_alpha > 0");
  }
  if (!(c.x_tail_fraction > 0.0 && c.x_tail_fraction < 0.5)) bad.push_back("x_tail_fraction must lie in (0, 0.5)");
  if (c.x_tail_model != "frechet" && c.x_tail_model != "gumbel") {
    bad.push_back("x_tail_model must be frechet or gumbel");
  }
  if (c.x_fit_size < 10000) bad.push_back("x_fit_size must be at least 10000");
  if (c.y_marginal == "pareto") {
    if (!(c.alpha0 && *c.alpha0 > 1.0)) bad.push_back("y_marginal = pareto needs alpha0 > 1 (finite mean)");
  } else if (c.y_marginal == "log_pareto") {
    if (!(c.y_log_alpha && *c.y_log_alpha > 1.0)) bad.push_back("y_marginal = log_pareto needs y_log_alpha > 1");
    if (!(c.y_log_shift >= 0.0)) bad.push_back("y_log_shift must be non-negative");
  } else if (c.y_marginal != "exponential" && c.y_marginal != "same_as_x") {
    bad.push_back("y_marginal must be exponential, pareto, log_pareto or same_as_x");
  }
  if (!(c.xi > 0.0 && c.xi < 1.0)) bad.push_back("xi must lie in (0,1)");
  for (std::size_t i = 0; i < c.n_grid.size(); ++i) {
    if (c.n_grid[i] < 16) bad.push_back("n = " + std::to_string(c.n_grid[i]) + " is below 16");
    if (i > 0 && c.n_grid[i] <= c.n_grid[i - 1]) bad.push_back("n_grid must be strictly increasing");
  }
  if (c.replicates < 1) bad.push_back("replicates must be at least 1");
  if (c.p && *c.p < 1) bad.push_back("p must be at least 1");
  if (!(c.truncation_tol > 0.0 && c.truncation_tol < 0.1)) bad.push_back("truncation_tol must lie in (0, 0.1)");
  if (c.truncation_cap < 1) bad.push_back("truncation_cap must be positive");
  if (c.output_dir.empty()) bad.push_back("output_dir must not be empty");
  if (!(c.contrast_alpha > 2.0)) bad.push_back("contrast_alpha must exceed 2");
  if (bad.size() != before) return;

  // Feasibility needs the case, which is known up front unless X is fitted.
  if (c.x_marginal == "empirical" || c.n_grid.empty()) return;
  try {
    const MarginalX mx = c.x_marginal == "pareto" ? MarginalX::pareto(*c.x_alpha) : MarginalX::gaussian(1.0);
    const TargetMarginalY ty = build_target(c, mx);
    const MdaTag xt = mx.mda();
    const MdaTag yt = ty.mda();
    const MdaCase kase = derive_case(xt, yt);
    const auto opt = [](const MdaTag& t) { return t.is_frechet() ? std::optional<double>(t.index) : std::nullopt; };
    const double th = xi_threshold(kase, c.beta, opt(xt), opt(yt));
    if (!(c.xi > th)) {
      bad.push_back("xi = " + format_double(c.xi) + " is not above the case " + std::to_string(case_number(kase)) +
                    " " + condition_label(kase) + " threshold " + format_double(th));
      infeasible = true;
    }
    for (std::size_t n : c.n_grid) {
      const std::size_t k = extreme_count(n, c.xi);
      if (k < 2 || k >= n) {
        bad.push_back("k_n = ceil(n^xi) = " + std::to_string(k) + " outside [2, n-1] at n = " + std::to_string(n));
        infeasible = true;
      }
    }
  } catch (const InfeasibleError& e) {
    bad.push_back(e.what());
    infeasible = true;
  } catch (const std::exception& e) {
    bad.push_back(e.what());
  }
}

}  // namespace detail

/// Parses flat `key = value` text. Blank lines and lines starting with '#' are
/// ignored; lists are comma-separated. Every violation is collected before
/// throwing; InfeasibleError is used when only feasibility checks failed.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::vector<std::string> bad;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) {
      bad.push_back(where + "expected key = value");
      continue;
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view val = detail::trim(line.substr(eq + 1));
    if (!detail::known_keys().contains(key)) {
      bad.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (!seen.insert(key).second) {
      bad.push_back(where + "duplicate key '" + key + "'");
      continue;
    }
    const auto num = [&](double& dst) {
      if (auto v = detail::parse_number<double>(val)) dst = *v;
      else bad.push_back(where + key + ": not a number: '" + std::string(val) + "'");
    };
    const auto opt_num = [&](std::optional<double>& dst) {
      double v = 0.0;
      const std::size_t b = bad.size();
      num(v);
      if (bad.size() == b) dst = v;
    };
    const auto count = [&](std::size_t& dst) {
      if (auto v = detail::parse_number<std::size_t>(val)) dst = *v;
      else bad.push_back(where + key + ": not a non-negative integer: '" + std::string(val) + "'");
    };
    if (key == "beta") num(c.beta);
    else if (key == "l0") num(c.l0);
    else if (key == "l0_log_exponent") num(c.l0_log_exponent);
    else if (key == "innovation") c.innovation = std::string(val);
    else if (key == "sigma_eps") num(c.sigma_eps);
    else if (key == "nu") opt_num(c.nu);
    else if (key == "x_marginal") c.x_marginal = std::string(val);
    else if (key == "x_alpha") opt_num(c.x_alpha);
    else if (key == "x_tail_fraction") num(c.x_tail_fraction);
    else if (key == "x_tail_model") c.x_tail_model = std::string(val);
    else if (key == "x_fit_size") count(c.x_fit_size);
    else if (key == "y_marginal") c.y_marginal = std::string(val);
    else if (key == "alpha0") opt_num(c.alpha0);
    else if (key == "y_log_alpha") opt_num(c.y_log_alpha);
    else if (key == "y_log_shift") num(c.y_log_shift);
    else if (key == "xi") num(c.xi);
    else if (key == "n" || key == "n_grid") {
      c.grid_key = key == "n_grid";
      std::string_view rest = val;
      while (true) {
        const auto comma = rest.find(',');
        const auto item = detail::trim(rest.substr(0, comma));
        if (auto v = detail::parse_number<std::size_t>(item)) c.n_grid.push_back(*v);
        else bad.push_back(where + key + ": not an integer: '" + std::string(item) + "'");
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
    } else if (key == "replicates") count(c.replicates);
    else if (key == "p") {
      if (auto v = detail::parse_number<int>(val)) c.p = *v;
      else bad.push_back(where + "p: not an integer: '" + std::string(val) + "'");
    } else if (key == "master_seed") {
      if (auto v = detail::parse_number<std::uint64_t>(val)) c.master_seed = *v;
      else bad.push_back(where + "master_seed: not an unsigned 64-bit integer: '" + std::string(val) + "'");
    } else if (key == "truncation_tol") num(c.truncation_tol);
    else if (key == "truncation_cap") count(c.truncation_cap);
    else if (key == "output_dir") c.output_dir = std::string(val);
    else if (key == "contrast_alpha") num(c.contrast_alpha);
  }
  for (const char* req : {"beta", "xi", "master_seed"}) {
    if (!seen.contains(req)) bad.push_back(std::string("missing required key '") + req + "'");
  }
  if (seen.contains("n") && seen.contains("n_grid")) bad.push_back("give either n or n_grid, not both");
  if (!seen.contains("n") && !seen.contains("n_grid")) bad.push_back("missing required key 'n' (or 'n_grid')");
  bool infeasible = false;
  if (bad.empty()) detail::validate(c, bad, infeasible);
  if (!bad.empty()) {
    if (infeasible) throw InfeasibleError(bad);
    throw ConfigError(bad);
  }
  return c;
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  const auto kv = [&o](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  kv("beta", format_double(c.beta));
  kv("l0", format_double(c.l0));
  kv("l0_log_exponent", format_double(c.l0_log_exponent));
  kv("innovation", c.innovation);
  kv("sigma_eps", format_double(c.sigma_eps));
  if (c.nu) kv("nu", format_double(*c.nu));
  kv("x_marginal", c.x_marginal);
  if (c.x_alpha) kv("x_alpha", format_double(*c.x_alpha));
  kv("x_tail_fraction", format_double(c.x_tail_fraction));
  kv("x_tail_model", c.x_tail_model);
  kv("x_fit_size", std::to_string(c.x_fit_size));
  kv("y_marginal", c.y_marginal);
  if (c.alpha0) kv("alpha0", format_double(*c.alpha0));
  if (c.y_log_alpha) kv("y_log_alpha", format_double(*c.y_log_alpha));
  kv("y_log_shift", format_double(c.y_log_shift));
  kv("xi", format_double(c.xi));
  std::string ns;
  for (std::size_t i = 0; i < c.n_grid.size(); ++i) ns += (i ? "," : "") + std::to_string(c.n_grid[i]);
  kv(c.grid_key ? "n_grid" : "n", ns);
  kv("replicates", std::to_string(c.replicates));
  if (c.p) kv("p", std::to_string(*c.p));
  kv("master_seed", std::to_string(c.master_seed));
  kv("truncation_tol", format_double(c.truncation_tol));
  kv("truncation_cap", std::to_string(c.truncation_cap));
  kv("output_dir", c.output_dir);
  kv("contrast_alpha", format_double(c.contrast_alpha));
  return o.str();
}

// ---------------------------------------------------------------------------
// Model assembly

// Seed of the auxiliary path used to fit an empirical X-marginal.
inline std::uint64_t fit_seed(std::uint64_t master_seed) {
  return derive_seed(master_seed, ~std::uint64_t{0});
}

struct Experiment {
  ExperimentConfig config;
  CoefficientModel coeffs;
  InnovationDist dist;
  MarginalX mx;
  TargetMarginalY ty;
};

inline Experiment build_experiment(const ExperimentConfig& c) {
  const SlowlyVaryingFn L0 = build_L0(c);
  CoefficientModel coeffs = truncated_coefficients(c.beta, L0, c.truncation_tol, c.truncation_cap);
  InnovationDist dist = build_innovations(c);
  MarginalX mx = MarginalX::gaussian(1.0);
  if (c.x_marginal == "gaussian") {
    mx = MarginalX::gaussian_for(coeffs, dist);
  } else if (c.x_marginal == "pareto") {
    mx = MarginalX::pareto(*c.x_alpha);
  } else {
    const auto aux = gen_innovations(dist, c.x_fit_size + coeffs.truncation(), fit_seed(c.master_seed));
    const auto x = moving_average(coeffs.coefficients(), aux);
    mx = fit_empirical_marginal(x, c.x_tail_fraction,
                                c.x_tail_model == "gumbel" ? TailModel::gumbel : TailModel::frechet);
  }
  TargetMarginalY ty = build_target(c, mx);
  return Experiment{c, std::move(coeffs), std::move(dist), std::move(mx), std::move(ty)};
}

inline ScalingBundle make_scaling_bundle(const Experiment& e, std::size_t n) {
  return make_scaling_bundle(e.coeffs, e.dist, e.mx, e.ty, n, e.config.xi, e.config.p);
}

}  // namespace lrdext

#endif  // LRDEXT_CONFIG_HPP_
