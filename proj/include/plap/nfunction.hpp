#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <variant>

namespace plap {

/// Scalar N-function interface: phi with right derivative, its Fenchel conjugate
/// and the conjugate's derivative, all on [0, inf).
template <class F>
concept NFunction = requires(const F& f, double t) {
  { f.phi(t) } -> std::convertible_to<double>;
  { f.phi_prime(t) } -> std::convertible_to<double>;
  { f.conj(t) } -> std::convertible_to<double>;
  { f.conj_prime(t) } -> std::convertible_to<double>;
};

/// Derivative ratio bounds c <= phi'(t)/t <= C, with logarithms kept for the
/// cases where the bounds themselves leave double range (p = 80, delta = 1e9).
struct GrowthBounds {
  double lower;
  double upper;
  double log_lower;
  double log_upper;
};

/// phi(t) = t^p / p.
class PowerNFunction {
 public:
  explicit PowerNFunction(double p);

  double p() const noexcept { return p_; }
  double dual_exponent() const noexcept { return q_; }

  double phi(double t) const;
  double phi_prime(double t) const;
  double conj(double r) const;
  double conj_prime(double r) const;

  /// phi'(t)/t, with the right limit at t = 0 (0 for p > 2, inf for p < 2).
  double phi_prime_ratio(double t) const;
  /// log((phi*)'(r)/r), with the right limit at r = 0.
  double log_conj_prime_ratio(double r) const;

  /// Only finite for p = 2.
  GrowthBounds growth_bounds() const;

 private:
  double p_;
  double q_;
};

struct RelaxationInterval {
  double lower;
  double upper;

  RelaxationInterval(double lower, double upper);

  bool contains(const RelaxationInterval& inner) const noexcept {
    return lower <= inner.lower && inner.upper <= upper;
  }
};

/// Shifted quadratic continuation of a power N-function outside [delta_-, delta_+].
///
/// The derivative is phi_d'(t) = t * clamp(t, delta_-, delta_+)^(p-2); the value
/// at zero is phi(delta_-) - delta_- phi'(delta_-) / 2, and the conjugate carries
/// the opposite shift so that the pair stays Fenchel conjugate.
class RegularizedNFunction {
 public:
  RegularizedNFunction(PowerNFunction base, RelaxationInterval delta);

  const PowerNFunction& base() const noexcept { return base_; }
  const RelaxationInterval& delta() const noexcept { return delta_; }
  double p() const noexcept { return base_.p(); }

  double phi(double t) const;
  double phi_prime(double t) const;
  double conj(double r) const;
  double conj_prime(double r) const;

  double phi_prime_ratio(double t) const;
  double log_conj_prime_ratio(double r) const;

  GrowthBounds growth_bounds() const noexcept { return bounds_; }

  /// phi_d(0); negative for p > 2.
  double shift() const noexcept { return shift_; }

  /// e(t) = phi(t) - phi_d(t) >= 0, zero on [delta_-, delta_+].
  double primal_error(double t) const;
  /// e*(r) = phi_d*(r) - phi*(r) >= 0, zero on [phi'(delta_-), phi'(delta_+)].
  double dual_error(double r) const;
  /// Pointwise upper bounds for primal_error / dual_error.
  double primal_error_bound(double t) const;
  double dual_error_bound(double r) const;

  /// phi'(delta_-) and phi'(delta_+): the breakpoints of the conjugate.
  double dual_lower_breakpoint() const noexcept { return r_lo_; }
  double dual_upper_breakpoint() const noexcept { return r_hi_; }

 private:
  PowerNFunction base_;
  RelaxationInterval delta_;
  GrowthBounds bounds_;
  double r_lo_;
  double r_hi_;
  double shift_;
  double upper_shift_;  // phi(delta_+) - delta_+ phi'(delta_+) / 2
};

/// Closed set of integrands used by problem specifications.
class Integrand {
 public:
  Integrand(PowerNFunction f) : impl_(f) {}  // NOLINT(google-explicit-constructor)
  Integrand(RegularizedNFunction f) : impl_(f) {}  // NOLINT(google-explicit-constructor)

  static Integrand power(double p) { return PowerNFunction(p); }
  static Integrand regularized(double p, double delta_lower, double delta_upper) {
    return RegularizedNFunction(PowerNFunction(p), RelaxationInterval(delta_lower, delta_upper));
  }

  double p() const;
  bool is_regularized() const noexcept { return std::holds_alternative<RegularizedNFunction>(impl_); }
  std::optional<RelaxationInterval> delta() const;
  const RegularizedNFunction* regularized() const noexcept {
    return std::get_if<RegularizedNFunction>(&impl_);
  }

  double phi(double t) const;
  double phi_prime(double t) const;
  double conj(double r) const;
  double conj_prime(double r) const;
  double phi_prime_ratio(double t) const;
  double log_conj_prime_ratio(double r) const;
  GrowthBounds growth_bounds() const;

 private:
  std::variant<PowerNFunction, RegularizedNFunction> impl_;
};

// Odd extensions. All vanish at zero.

/// A_phi(t) = phi'(|t|) / |t| * t.
template <NFunction F>
double a_phi(const F& f, double t) {
  return t == 0.0 ? 0.0 : std::copysign(f.phi_prime(std::abs(t)), t);
}

/// A_phi*(t) = (phi*)'(|t|) / |t| * t.
template <NFunction F>
double a_phi_star(const F& f, double t) {
  return t == 0.0 ? 0.0 : std::copysign(f.conj_prime(std::abs(t)), t);
}

/// V_phi(t) = sqrt(phi'(|t|) / |t|) * t.
template <NFunction F>
double v_phi(const F& f, double t) {
  if (t == 0.0) return 0.0;
  const double s = std::abs(t);
  return std::copysign(std::sqrt(f.phi_prime(s)) * std::sqrt(s), t);
}

/// V_phi*(t) = sqrt((phi*)'(|t|) / |t|) * t.
template <NFunction F>
double v_phi_star(const F& f, double t) {
  if (t == 0.0) return 0.0;
  const double s = std::abs(t);
  return std::copysign(std::sqrt(f.conj_prime(s)) * std::sqrt(s), t);
}

namespace detail {

/// expm1(a x) / a - expm1(b x) / b for a > b > 0, evaluated without
/// cancellation for small |a x|. Nonnegative for every x.
double expm1_quotient_gap(double a, double b, double x);

}  // namespace detail

}  // namespace plap
