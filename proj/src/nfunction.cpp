#include "plap/nfunction.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace plap {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonnegative(double t, const char* what) {
  if (!(t >= 0.0)) {
    throw std::domain_error(std::string(what) + ": argument must be nonnegative, got " +
                            std::to_string(t));
  }
}

// scale * exp(log_factor) with scale = exp(log_scale); avoids 0 * inf when the
// scale alone under- or overflows.
double scaled(double log_scale, double factor) {
  if (factor <= 0.0) return 0.0;
  return std::exp(log_scale + std::log(factor));
}

// log(x / ref), through the quotient when ref is a normal double (accurate
// near x = ref), otherwise through the given log(ref).
double log_ratio(double x, double ref, double log_ref) {
  if (ref >= std::numeric_limits<double>::min() && std::isfinite(ref)) return std::log(x / ref);
  return std::log(x) - log_ref;
}

}  // namespace

namespace detail {

double expm1_quotient_gap(double a, double b, double x) {
  if (std::abs(a * x) <= 1.0) {
    // sum_{k>=2} x^k (a^{k-1} - b^{k-1}) / k!
    double sum = 0.0;
    double xk_over_fact = x;  // x^k / k!
    double ak = 1.0;          // a^{k-1}
    double bk = 1.0;
    for (int k = 2; k < 40; ++k) {
      xk_over_fact *= x / k;
      ak *= a;
      bk *= b;
      const double term = xk_over_fact * (ak - bk);
      sum += term;
      if (std::abs(term) <= 1e-18 * std::abs(sum)) break;
    }
    return std::max(sum, 0.0);
  }
  const double value = std::expm1(a * x) / a - std::expm1(b * x) / b;
  return std::max(value, 0.0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PowerNFunction

PowerNFunction::PowerNFunction(double p) : p_(p), q_(p / (p - 1.0)) {
  if (!(p > 1.0) || !std::isfinite(p)) {
    throw std::invalid_argument("PowerNFunction: exponent must satisfy 1 < p < inf, got " +
                                std::to_string(p));
  }
}

// std::pow saturates to +inf / 0 without producing NaN, which is the overflow
// policy for every evaluation below.
double PowerNFunction::phi(double t) const {
  require_nonnegative(t, "phi");
  return std::pow(t, p_) / p_;
}

double PowerNFunction::phi_prime(double t) const {
  require_nonnegative(t, "phi_prime");
  return std::pow(t, p_ - 1.0);
}

double PowerNFunction::conj(double r) const {
  require_nonnegative(r, "conj");
  return std::pow(r, q_) / q_;
}

double PowerNFunction::conj_prime(double r) const {
  require_nonnegative(r, "conj_prime");
  return std::pow(r, q_ - 1.0);
}

double PowerNFunction::phi_prime_ratio(double t) const {
  require_nonnegative(t, "phi_prime_ratio");
  if (p_ == 2.0) return 1.0;
  if (t == 0.0) return p_ > 2.0 ? 0.0 : kInf;
  return std::pow(t, p_ - 2.0);
}

double PowerNFunction::log_conj_prime_ratio(double r) const {
  require_nonnegative(r, "log_conj_prime_ratio");
  if (p_ == 2.0) return 0.0;
  if (r == 0.0) return q_ < 2.0 ? kInf : -kInf;
  return (q_ - 2.0) * std::log(r);
}

GrowthBounds PowerNFunction::growth_bounds() const {
  if (p_ != 2.0) {
    throw std::domain_error("growth_bounds: phi'(t)/t of t^p/p is unbounded for p != 2 (p = " +
                            std::to_string(p_) + "); use a regularized integrand");
  }
  return {1.0, 1.0, 0.0, 0.0};
}

// ---------------------------------------------------------------------------
// RelaxationInterval

RelaxationInterval::RelaxationInterval(double lo, double hi) : lower(lo), upper(hi) {
  if (!(lo > 0.0) || !(lo <= hi) || !std::isfinite(hi)) {
    throw std::invalid_argument("RelaxationInterval: need 0 < delta_- <= delta_+ < inf, got [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

// ---------------------------------------------------------------------------
// RegularizedNFunction

RegularizedNFunction::RegularizedNFunction(PowerNFunction base, RelaxationInterval delta)
    : base_(base), delta_(delta) {
  const double p = base_.p();
  if (p < 2.0) {
    throw std::invalid_argument("RegularizedNFunction: requires p >= 2, got " + std::to_string(p));
  }
  const double log_lo = std::log(delta_.lower);
  const double log_hi = std::log(delta_.upper);
  bounds_.log_lower = (p - 2.0) * log_lo;
  bounds_.log_upper = (p - 2.0) * log_hi;
  bounds_.lower = std::exp(bounds_.log_lower);
  bounds_.upper = std::exp(bounds_.log_upper);
  r_lo_ = std::exp((p - 1.0) * log_lo);
  r_hi_ = std::exp((p - 1.0) * log_hi);
  // phi(d) - d phi'(d) / 2 = d^p (1/p - 1/2)
  shift_ = -scaled(p * log_lo, 0.5 - 1.0 / p);
  upper_shift_ = -scaled(p * log_hi, 0.5 - 1.0 / p);
}

double RegularizedNFunction::phi(double t) const {
  require_nonnegative(t, "phi");
  if (t < delta_.lower) return 0.5 * bounds_.lower * t * t + shift_;
  if (t <= delta_.upper) return base_.phi(t);
  // d^p ((T^2 - 1)/2 + 1/p), T = t/d; saturates to +inf instead of inf - inf.
  const double big = t / delta_.upper;
  return scaled(base_.p() * std::log(delta_.upper), 0.5 * (big - 1.0) * (big + 1.0) + 1.0 / base_.p());
}

double RegularizedNFunction::phi_prime(double t) const {
  require_nonnegative(t, "phi_prime");
  return t * phi_prime_ratio(t);
}

double RegularizedNFunction::phi_prime_ratio(double t) const {
  require_nonnegative(t, "phi_prime_ratio");
  if (t <= delta_.lower) return bounds_.lower;
  if (t >= delta_.upper) return bounds_.upper;
  return std::pow(t, base_.p() - 2.0);
}

double RegularizedNFunction::conj(double r) const {
  require_nonnegative(r, "conj");
  if (r < r_lo_) return 0.5 * r * (r / bounds_.lower) - shift_;
  if (r <= r_hi_) return base_.conj(r);
  return 0.5 * r * (r / bounds_.upper) - upper_shift_;
}

double RegularizedNFunction::conj_prime(double r) const {
  require_nonnegative(r, "conj_prime");
  if (r == 0.0) return 0.0;
  if (r <= r_lo_) return r / bounds_.lower;
  if (r <= r_hi_) return base_.conj_prime(r);
  return r / bounds_.upper;
}

double RegularizedNFunction::log_conj_prime_ratio(double r) const {
  require_nonnegative(r, "log_conj_prime_ratio");
  if (r <= r_lo_) return -bounds_.log_lower;
  if (r <= r_hi_) {
    return std::clamp((base_.dual_exponent() - 2.0) * std::log(r), -bounds_.log_upper,
                      -bounds_.log_lower);
  }
  return -bounds_.log_upper;
}

double RegularizedNFunction::primal_error(double t) const {
  require_nonnegative(t, "primal_error");
  const double p = base_.p();
  if (t < delta_.lower) {
    // d^p [ (1 - x^2)/2 - (1 - x^p)/p ],  x = t/d
    if (t == 0.0) return scaled(p * std::log(delta_.lower), 0.5 - 1.0 / p);
    const double x = std::log(t / delta_.lower);
    return scaled(p * std::log(delta_.lower), detail::expm1_quotient_gap(p, 2.0, x));
  }
  if (t <= delta_.upper) return 0.0;
  // d^p [ (T^p - 1)/p - (T^2 - 1)/2 ],  T = t/d
  const double x = std::log(t / delta_.upper);
  return scaled(p * std::log(delta_.upper), detail::expm1_quotient_gap(p, 2.0, x));
}

double RegularizedNFunction::dual_error(double r) const {
  require_nonnegative(r, "dual_error");
  const double p = base_.p();
  const double q = base_.dual_exponent();
  if (r < r_lo_) {
    // d^p [ (1 - y^q)/q - (1 - y^2)/2 ],  y = r / phi'(d)
    if (r == 0.0) return scaled(p * std::log(delta_.lower), 0.5 - 1.0 / p);
    const double y = log_ratio(r, r_lo_, (p - 1.0) * std::log(delta_.lower));
    return scaled(p * std::log(delta_.lower), detail::expm1_quotient_gap(2.0, q, y));
  }
  if (r <= r_hi_) return 0.0;
  const double y = log_ratio(r, r_hi_, (p - 1.0) * std::log(delta_.upper));
  return scaled(p * std::log(delta_.upper), detail::expm1_quotient_gap(2.0, q, y));
}

double RegularizedNFunction::primal_error_bound(double t) const {
  require_nonnegative(t, "primal_error_bound");
  if (t < delta_.lower) return -shift_;
  if (t <= delta_.upper) return 0.0;
  return base_.phi(t) - base_.phi(delta_.upper);
}

double RegularizedNFunction::dual_error_bound(double r) const {
  require_nonnegative(r, "dual_error_bound");
  if (r < r_lo_) return -shift_;  // phi*(phi'(d)) - d phi'(d)/2 = d^p (1/2 - 1/p)
  if (r <= r_hi_) return 0.0;
  // (r^2 - phi'(d)^2) d / (2 phi'(d)) = (r - r_hi)(r + r_hi) / (2 C)
  return 0.5 * (r - r_hi_) * ((r + r_hi_) / bounds_.upper);
}

// ---------------------------------------------------------------------------
// Integrand

double Integrand::p() const {
  return std::visit([](const auto& f) { return f.p(); }, impl_);
}

std::optional<RelaxationInterval> Integrand::delta() const {
  if (const auto* r = regularized()) return r->delta();
  return std::nullopt;
}

double Integrand::phi(double t) const {
  return std::visit([t](const auto& f) { return f.phi(t); }, impl_);
}
double Integrand::phi_prime(double t) const {
  return std::visit([t](const auto& f) { return f.phi_prime(t); }, impl_);
}
double Integrand::conj(double r) const {
  return std::visit([r](const auto& f) { return f.conj(r); }, impl_);
}
double Integrand::conj_prime(double r) const {
  return std::visit([r](const auto& f) { return f.conj_prime(r); }, impl_);
}
double Integrand::phi_prime_ratio(double t) const {
  return std::visit([t](const auto& f) { return f.phi_prime_ratio(t); }, impl_);
}
double Integrand::log_conj_prime_ratio(double r) const {
  return std::visit([r](const auto& f) { return f.log_conj_prime_ratio(r); }, impl_);
}
GrowthBounds Integrand::growth_bounds() const {
  return std::visit([](const auto& f) { return f.growth_bounds(); }, impl_);
}

}  // namespace plap
