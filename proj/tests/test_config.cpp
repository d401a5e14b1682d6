#include <gtest/gtest.h>

#include <string>

#include "lrdext/config.hpp"

using namespace lrdext;

namespace {

const char* kMinimal = "beta = 0.8\nxi = 0.9\nn = 32768\nmaster_seed = 1\n";

std::string message_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(ParseConfig, MinimalCase4) {
  const auto c = parse_config(kMinimal);
  EXPECT_DOUBLE_EQ(c.beta, 0.8);
  EXPECT_DOUBLE_EQ(c.xi, 0.9);
  EXPECT_EQ(c.single_n(), 32768u);
  EXPECT_EQ(c.master_seed, 1u);
  EXPECT_EQ(c.y_marginal, "exponential");
  EXPECT_FALSE(c.p.has_value());
  const auto e = build_experiment(c);
  const auto b = make_scaling_bundle(e, 4096);
  EXPECT_EQ(b.p, 1);
  EXPECT_EQ(b.kase, MdaCase::case4);
}

TEST(ParseConfig, CommentsAndWhitespace) {
  const auto c = parse_config("# reference\n\n  beta=0.8 \nxi =0.9\n n_grid = 2048, 4096 ,8192\nmaster_seed=7\n");
  EXPECT_EQ(c.n_grid, (std::vector<std::size_t>{2048, 4096, 8192}));
  EXPECT_TRUE(c.grid_key);
  EXPECT_THROW(c.single_n(), ConfigError);
}

TEST(ParseConfig, XiBelowCase4Threshold) {
  try {
    parse_config("beta = 0.8\nxi = 0.7\nn = 32768\nmaster_seed = 1\n");
    FAIL();
  } catch (const InfeasibleError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("(****)"), std::string::npos) << m;
    EXPECT_NE(m.find("0.8"), std::string::npos) << m;
  }
}

TEST(ParseConfig, Case3AlphaInfeasible) {
  try {
    parse_config("beta = 0.8\nxi = 0.97\nn = 32768\nmaster_seed = 1\ny_marginal = pareto\nalpha0 = 4\n");
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha0"), std::string::npos) << e.what();
  }
}

TEST(ParseConfig, UnknownKeyNamed) {
  const std::string m = message_of(std::string(kMinimal) + "gamma = 1\n");
  EXPECT_NE(m.find("unknown key 'gamma'"), std::string::npos) << m;
}

TEST(ParseConfig, AllViolationsListed) {
  try {
    parse_config("beta = 1.5\nxi = abc\ngamma = 2\nn = 32768\nn = 1024\n");
    FAIL();
  } catch (const ConfigError& e) {
    const auto& v = e.violations();
    const auto has = [&](const std::string& s) {
      for (const auto& x : v) {
        if (x.find(s) != std::string::npos) return true;
      }
      return false;
    };
    EXPECT_TRUE(has("not a number")) << e.what();
    EXPECT_TRUE(has("unknown key 'gamma'")) << e.what();
    EXPECT_TRUE(has("duplicate key 'n'")) << e.what();
    EXPECT_TRUE(has("missing required key 'master_seed'")) << e.what();
    EXPECT_GE(v.size(), 4u);
  }
}

TEST(ParseConfig, SemanticViolationsCollected) {
  try {
    parse_config("beta = 1.5\nxi = 0.9\nn = 8\nmaster_seed = 1\nreplicates = 0\ninnovation = cauchy\n");
    FAIL();
  } catch (const InfeasibleError&) {
    FAIL() << "plain validation errors are not feasibility errors";
  } catch (const ConfigError& e) {
    EXPECT_GE(e.violations().size(), 4u) << e.what();
  }
}

TEST(ParseConfig, MissingMasterSeed) {
  const std::string m = message_of("beta = 0.8\nxi = 0.9\nn = 4096\n");
  EXPECT_NE(m.find("master_seed"), std::string::npos) << m;
}

TEST(ParseConfig, KnRange) {
  // ceil(16^0.999) = 16 = n.
  try {
    parse_config("beta = 0.8\nxi = 0.999\nn = 16\nmaster_seed = 1\n");
    FAIL();
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("k_n"), std::string::npos) << e.what();
  }
}

TEST(ParseConfig, RoundTrip) {
  const std::string text =
      "beta = 0.75\nl0 = 1.5\nl0_log_exponent = 0.5\nxi = 0.97\nn_grid = 2048,8192\nmaster_seed = 99\n"
      "y_marginal = pareto\nalpha0 = 6\nreplicates = 40\np = 2\ntruncation_tol = 0.002\noutput_dir = runs/a\n";
  const auto c = parse_config(text);
  const auto again = parse_config(serialize_config(c));
  EXPECT_EQ(c, again);
  EXPECT_EQ(serialize_config(c), serialize_config(again));
}

TEST(ParseConfig, RoundTripStudentT) {
  const std::string text =
      "beta = 0.8\nxi = 0.9\nn = 4096\nmaster_seed = 3\ninnovation = student_t\nnu = 6\n"
      "x_marginal = empirical\nx_tail_model = gumbel\n";
  const auto c = parse_config(text);
  EXPECT_EQ(c, parse_config(serialize_config(c)));
}

TEST(Experiment, GaussianMarginalMatchesFilter) {
  const auto e = build_experiment(parse_config(kMinimal));
  ASSERT_TRUE(e.mx.is_gaussian());
  EXPECT_NEAR(e.mx.gaussian_sd() * e.mx.gaussian_sd(), e.coeffs.sum_of_squares(), 1e-12);
  EXPECT_FALSE(e.coeffs.truncation_capped());
}

TEST(Experiment, EmpiricalFitIsSeeded) {
  const auto c = parse_config(
      "beta = 0.8\nxi = 0.9\nn = 4096\nmaster_seed = 3\ninnovation = student_t\nnu = 6\nx_marginal = empirical\n"
      "x_tail_model = gumbel\nx_fit_size = 20000\n");
  const auto a = build_experiment(c);
  const auto b = build_experiment(c);
  EXPECT_EQ(a.mx.quantile(0.99), b.mx.quantile(0.99));
  EXPECT_FALSE(a.mx.is_analytic());
}
