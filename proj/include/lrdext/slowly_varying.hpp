#ifndef LRDEXT_SLOWLY_VARYING_HPP_
#define LRDEXT_SLOWLY_VARYING_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

#include "lrdext/errors.hpp"

namespace lrdext {

/// A slowly varying function L on (1, inf), built from a small closed family:
/// constants, c * (log u)^b, ratios, scalar multiples, and numerically defined
/// functions (used where L only exists through a quadrature or special function).
///
/// Values are immutable and cheap to copy.
class SlowlyVaryingFn {
 public:
  struct Constant {
    double c;
  };
  // c * (log u)^b for u > e; flat at c below e so the value stays positive.
  struct LogPower {
    double c;
    double b;
  };
  struct Ratio {
    std::shared_ptr<const SlowlyVaryingFn> numerator;
    std::shared_ptr<const SlowlyVaryingFn> denominator;
  };
  struct Scaled {
    double c;
    std::shared_ptr<const SlowlyVaryingFn> inner;
  };
  struct Numeric {
    std::string name;
    std::function<double(double)> fn;
  };
  using Node = std::variant<Constant, LogPower, Ratio, Scaled, Numeric>;

  static SlowlyVaryingFn constant(double c) {
    if (!(c > 0.0)) throw DomainError("slowly varying constant must be positive");
    return SlowlyVaryingFn(Constant{c});
  }
  static SlowlyVaryingFn log_power(double c, double b) {
    if (!(c > 0.0)) throw DomainError("log-power scale must be positive");
    return SlowlyVaryingFn(LogPower{c, b});
  }
  static SlowlyVaryingFn ratio(SlowlyVaryingFn num, SlowlyVaryingFn den) {
    return SlowlyVaryingFn(Ratio{std::make_shared<const SlowlyVaryingFn>(std::move(num)),
                                 std::make_shared<const SlowlyVaryingFn>(std::move(den))});
  }
  static SlowlyVaryingFn scaled(double c, SlowlyVaryingFn inner) {
    if (!(c > 0.0)) throw DomainError("slowly varying scale factor must be positive");
    return SlowlyVaryingFn(Scaled{c, std::make_shared<const SlowlyVaryingFn>(std::move(inner))});
  }
  static SlowlyVaryingFn numeric(std::string name, std::function<double(double)> fn) {
    return SlowlyVaryingFn(Numeric{std::move(name), std::move(fn)});
  }

  double operator()(double u) const {
    if (!(u > 1.0)) throw DomainError("slowly varying function evaluated at u <= 1");
    return eval(u);
  }

  // Closed-form constant value, if the function is constant.
  std::optional<double> constant_value() const {
    return std::visit(
        [](const auto& n) -> std::optional<double> {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Constant>) {
            return n.c;
          } else if constexpr (std::is_same_v<T, LogPower>) {
            if (n.b == 0.0) return n.c;
            return std::nullopt;
          } else if constexpr (std::is_same_v<T, Ratio>) {
            auto a = n.numerator->constant_value();
            auto b = n.denominator->constant_value();
            if (a && b) return *a / *b;
            return std::nullopt;
          } else if constexpr (std::is_same_v<T, Scaled>) {
            auto a = n.inner->constant_value();
            if (a) return n.c * *a;
            return std::nullopt;
          } else {
            return std::nullopt;
          }
        },
        *node_);
  }

  std::string describe() const {
    return std::visit(
        [](const auto& n) -> std::string {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Constant>) {
            return "constant(" + std::to_string(n.c) + ")";
          } else if constexpr (std::is_same_v<T, LogPower>) {
            return "log_power(" + std::to_string(n.c) + "," + std::to_string(n.b) + ")";
          } else if constexpr (std::is_same_v<T, Ratio>) {
            return "ratio(" + n.numerator->describe() + "," + n.denominator->describe() + ")";
          } else if constexpr (std::is_same_v<T, Scaled>) {
            return "scaled(" + std::to_string(n.c) + "," + n.inner->describe() + ")";
          } else {
            return "numeric(" + n.name + ")";
          }
        },
        *node_);
  }

  const Node& node() const { return *node_; }

 private:
  explicit SlowlyVaryingFn(Node node) : node_(std::make_shared<const Node>(std::move(node))) {}

  double eval(double u) const {
    return std::visit(
        [u](const auto& n) -> double {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Constant>) {
            return n.c;
          } else if constexpr (std::is_same_v<T, LogPower>) {
            return n.c * std::pow(std::log(std::max(u, std::numbers::e)), n.b);
          } else if constexpr (std::is_same_v<T, Ratio>) {
            return n.numerator->eval(u) / n.denominator->eval(u);
          } else if constexpr (std::is_same_v<T, Scaled>) {
            return n.c * n.inner->eval(u);
          } else {
            const double v = n.fn(u);
            if (!(v > 0.0) || !std::isfinite(v)) {
              throw NumericError("slowly varying function '" + n.name +
                                 "' is not positive and finite at u = " + std::to_string(u));
            }
            return v;
          }
        },
        *node_);
  }

  std::shared_ptr<const Node> node_;
};

inline double sv_eval(const SlowlyVaryingFn& L, double u) { return L(u); }

// |L(lambda u) / L(u) - 1|; small values at large u indicate slow variation.
inline double slow_variation_defect(const SlowlyVaryingFn& L, double u = 1e6, double lambda = 2.0) {
  return std::abs(L(lambda * u) / L(u) - 1.0);
}

}  // namespace lrdext

#endif  // LRDEXT_SLOWLY_VARYING_HPP_
