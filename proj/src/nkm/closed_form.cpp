#include <algorithm>
#include <cmath>

#include "quann/errors.hpp"
#include "quann/nkm.hpp"

namespace quann {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require_positive(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!(v > 0.0)) throw DomainError(std::string(what) + " generator needs positive values, got " + std::to_string(v));
  }
}

void check_generator(const ScalarGenerator& f) {
  std::visit(overloaded{
                 [](const AffineFn& a) {
                   if (a.w1 == 0.0) throw DomainError("affine generator needs w1 != 0");
                 },
                 [](const ExpFn& e) {
                   if (e.w == 0.0) throw DomainError("exponential generator needs w != 0");
                 },
                 [](const LogFn&) {},
                 [](const PowerFn& p) {
                   if (p.p == 0.0) throw DomainError("power generator needs p != 0");
                 },
             },
             f);
}

}  // namespace

double closed_form_kolmogorov(const ScalarGenerator& f, std::span<const double> values) {
  if (values.empty()) throw EmptySetError("Kolmogorov mean of an empty set");
  check_generator(f);
  const double n = static_cast<double>(values.size());
  return std::visit(
      overloaded{
          [&](const AffineFn& a) {
            double s = 0.0;
            for (double x : values) s += a.w1 * x + a.w2;
            return (s / n - a.w2) / a.w1;
          },
          [&](const ExpFn& e) {
            // (1/w) (logsumexp(w x) - log n)
            double top = -INFINITY;
            for (double x : values) top = std::max(top, e.w * x);
            double s = 0.0;
            for (double x : values) s += std::exp(e.w * x - top);
            return (top + std::log(s) - std::log(n)) / e.w;
          },
          [&](const LogFn&) {
            require_positive(values, "log");
            double s = 0.0;
            for (double x : values) s += std::log(x);
            return std::exp(s / n);
          },
          [&](const PowerFn& p) {
            require_positive(values, "power");
            // scale by the extreme value that dominates the sum so x^p stays finite
            const double ref = p.p > 0.0 ? *std::max_element(values.begin(), values.end())
                                         : *std::min_element(values.begin(), values.end());
            double s = 0.0;
            for (double x : values) s += std::pow(x / ref, p.p);
            return ref * std::pow(s / n, 1.0 / p.p);
          },
      },
      f);
}

double generator_value(const ScalarGenerator& f, double x) {
  check_generator(f);
  return std::visit(overloaded{
                        [&](const AffineFn& a) { return a.w1 * x + a.w2; },
                        [&](const ExpFn& e) { return std::exp(e.w * x); },
                        [&](const LogFn&) {
                          if (!(x > 0.0)) throw DomainError("log generator needs positive values");
                          return std::log(x);
                        },
                        [&](const PowerFn& p) {
                          if (!(x > 0.0)) throw DomainError("power generator needs positive values");
                          return std::pow(x, p.p);
                        },
                    },
                    f);
}

double generator_derivative(const ScalarGenerator& f, double x) {
  check_generator(f);
  return std::visit(overloaded{
                        [&](const AffineFn& a) { return a.w1; },
                        [&](const ExpFn& e) { return e.w * std::exp(e.w * x); },
                        [&](const LogFn&) {
                          if (!(x > 0.0)) throw DomainError("log generator needs positive values");
                          return 1.0 / x;
                        },
                        [&](const PowerFn& p) {
                          if (!(x > 0.0)) throw DomainError("power generator needs positive values");
                          return p.p * std::pow(x, p.p - 1.0);
                        },
                    },
                    f);
}

double closed_form_derivative(const ScalarGenerator& f, std::span<const double> values, std::size_t j) {
  if (j >= values.size()) throw ShapeError("closed_form_derivative: index out of range");
  const double m = closed_form_kolmogorov(f, values);
  const double n = static_cast<double>(values.size());
  if (const auto* e = std::get_if<ExpFn>(&f)) return std::exp(e->w * (values[j] - m)) / n;
  return generator_derivative(f, values[j]) / (n * generator_derivative(f, m));
}

}  // namespace quann
