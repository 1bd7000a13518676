#include "rerand/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rerand/error.hpp"

namespace rerand {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 100000;

// Series for P(a, x); converges quickly for x < a + 1. Returns log P.
double log_gamma_p_series(double a, double x, double lgamma_a) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < kMaxTerms; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return std::log(sum) - x + a * std::log(x) - lgamma_a;
}

// Lentz continued fraction for Q(a, x); used for x >= a + 1. Returns log Q.
double log_gamma_q_fraction(double a, double x, double lgamma_a) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::log(h) - x + a * std::log(x) - lgamma_a;
}

void check_gamma_args(double a, double x) {
  if (!(a > 0.0) || !std::isfinite(a))
    throw DomainError("incomplete gamma: shape must be positive and finite");
  if (std::isnan(x)) throw DomainError("incomplete gamma: x is NaN");
}

// log P(a, x) and log Q(a, x) together.
struct GammaTails {
  double log_p;
  double log_q;
};

GammaTails gamma_tails(double a, double x, double lgamma_a) {
  if (x <= 0.0) return {-std::numeric_limits<double>::infinity(), 0.0};
  if (std::isinf(x)) return {0.0, -std::numeric_limits<double>::infinity()};
  if (x < a + 1.0) {
    const double lp = log_gamma_p_series(a, x, lgamma_a);
    return {lp, std::log1p(-std::exp(lp))};
  }
  const double lq = log_gamma_q_fraction(a, x, lgamma_a);
  return {std::log1p(-std::exp(lq)), lq};
}

// Solve P(a, x) = p (lower = true) or Q(a, x) = q (lower = false) for x.
// Safeguarded Newton iteration on t = log x; both log P and -log Q are
// increasing in t.
double gamma_inverse(double a, double target, bool lower, double lgamma_a) {
  const double log_target = std::log(target);
  double t;
  if (lower) {
    // Small-x expansion P(a, x) ~ x^a / Gamma(a + 1).
    t = (log_target + std::lgamma(a + 1.0)) / a;
    t = std::min(t, std::log(std::max(a, 1.0)) + 1.0);
  } else {
    t = std::log(std::max(a, 1.0) - log_target);
  }
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 400; ++iter) {
    const double x = std::exp(t);
    const GammaTails tails = gamma_tails(a, x, lgamma_a);
    const double g = lower ? tails.log_p - log_target : log_target - tails.log_q;
    if (g == 0.0) return x;
    if (g < 0.0) lo = t; else hi = t;
    // d/dt log P = x f(x) / P, d/dt (-log Q) = x f(x) / Q with f the gamma density.
    const double log_xf = a * t - x - lgamma_a;
    const double slope = std::exp(log_xf - (lower ? tails.log_p : tails.log_q));
    double next = t - g / slope;
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      if (std::isfinite(lo) && std::isfinite(hi)) {
        next = 0.5 * (lo + hi);
      } else if (std::isfinite(lo)) {
        next = lo + 1.0;
      } else {
        next = hi - 1.0;
      }
    }
    if (std::abs(next - t) <= 4e-16 * std::max(1.0, std::abs(t))) return std::exp(next);
    if (std::isfinite(lo) && std::isfinite(hi) &&
        hi - lo <= 4e-16 * std::max(1.0, std::abs(hi)))
      return std::exp(0.5 * (lo + hi));
    t = next;
  }
  return std::exp(t);
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  check_gamma_args(a, x);
  return std::exp(gamma_tails(a, x, std::lgamma(a)).log_p);
}

double regularized_gamma_q(double a, double x) {
  check_gamma_args(a, x);
  return std::exp(gamma_tails(a, x, std::lgamma(a)).log_q);
}

double chisq_cdf(int dof, double x) {
  if (dof < 1) throw DomainError("chi-square: dof must be >= 1");
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chisq_quantile(int dof, double p) {
  if (dof < 1) throw DomainError("chi-square: dof must be >= 1");
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("chi-square quantile: p must lie in (0, 1), got " + std::to_string(p));
  const double a = 0.5 * dof;
  const double lg = std::lgamma(a);
  if (p <= 0.5) return 2.0 * gamma_inverse(a, p, true, lg);
  return 2.0 * gamma_inverse(a, 1.0 - p, false, lg);
}

TruncatedChiSqSpec::TruncatedChiSqSpec(int dof, double bound) : dof_(dof), bound_(bound) {
  if (dof < 1) throw DomainError("truncated chi-square: dof must be >= 1");
  if (!(bound > 0.0)) throw DomainError("truncated chi-square: bound must be positive");
  mass_ = std::isinf(bound) ? 1.0 : chisq_cdf(dof, bound);
  if (!(mass_ > 0.0)) throw NumericError("truncated chi-square: bound has zero probability");
}

double TruncatedChiSqSpec::cdf(double x) const {
  if (x <= 0.0) return 0.0;
  if (x >= bound_) return 1.0;
  return chisq_cdf(dof_, x) / mass_;
}

double sample_truncated_chisq(RngStream& stream, const TruncatedChiSqSpec& spec) {
  const double a = 0.5 * spec.dof();
  const double lg = std::lgamma(a);
  const double u = stream.uniform() * spec.mass();
  double x = u <= 0.5 ? 2.0 * gamma_inverse(a, u, true, lg)
                      : 2.0 * gamma_inverse(a, 1.0 - u, false, lg);
  // Inversion noise may land a hair past the bound.
  return std::min(x, spec.bound());
}

double sample_gamma(RngStream& stream, double shape) {
  if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
  if (shape < 1.0) {
    const double g = sample_gamma(stream, shape + 1.0);
    return g * std::pow(stream.uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = stream.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = stream.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta_half(RngStream& stream, int K) {
  if (K < 1) throw DomainError("beta: K must be >= 1");
  if (K == 1) return 1.0;
  const double g1 = sample_gamma(stream, 0.5);
  const double g2 = sample_gamma(stream, 0.5 * (K - 1));
  return g1 / (g1 + g2);
}

double sample_inverse_gamma(RngStream& stream, double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw DomainError("inverse gamma: shape and scale must be positive");
  return scale / sample_gamma(stream, shape);
}

double sample_standard(RngStream& stream, StandardDist dist) {
  switch (dist) {
    case StandardDist::Normal01:
      return stream.normal();
    case StandardDist::Exp1Centered:
      return stream.exponential() - 1.0;
    case StandardDist::Exp1:
      return stream.exponential();
    case StandardDist::Rademacher:
      return (stream() >> 63) ? 1.0 : -1.0;
  }
  return 0.0;
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile: p must lie in (0, 1)");
  if (sorted.empty()) throw SizeError("quantile of an empty sample");
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace rerand
