#pragma once

// Standard-normal probability functions for probit likelihoods.
//
// Phi is evaluated through erfc, which keeps full relative precision in the
// lower tail down to about z = -37 (Phi(-37) ~ 6e-300). Below that point the
// log-CDF and the inverse Mills ratio switch to a continued fraction for the
// Mills ratio, so both stay finite and monotone.

#include <cmath>
#include <numbers>

#include "eopfair/errors.hpp"

namespace eopfair::probit {

inline constexpr double kTailSwitch = -37.0;

namespace detail {

inline void require_finite(double z, const char* fn) {
  if (!std::isfinite(z)) throw DomainError(std::string(fn) + ": non-finite argument");
}

inline double log_pdf(double z) {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)
  return -0.5 * z * z - kHalfLog2Pi;
}

/// Mills ratio Phi(-t) / phi(t) for large t > 0, by Laplace's continued fraction
///   1 / (t + 1/(t + 2/(t + 3/(t + ...)))).
inline double mills_ratio_tail(double t) {
  double acc = t;
  for (int n = 60; n >= 1; --n) acc = t + n / acc;
  return 1.0 / acc;
}

}  // namespace detail

inline double std_normal_pdf(double z) {
  detail::require_finite(z, "std_normal_pdf");
  return std::exp(detail::log_pdf(z));
}

/// Phi(z).
inline double std_normal_cdf(double z) {
  detail::require_finite(z, "std_normal_cdf");
  return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0);
}

/// log Phi(z); never NaN or -inf for finite moderate z.
inline double log_std_normal_cdf(double z) {
  detail::require_finite(z, "log_std_normal_cdf");
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z * std::numbers::sqrt2 / 2.0));
  if (z >= kTailSwitch) return std::log(0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0));
  return detail::log_pdf(z) + std::log(detail::mills_ratio_tail(-z));
}

/// phi(z) / Phi(z), i.e. minus the derivative of -log Phi(z).
inline double inverse_mills(double z) {
  detail::require_finite(z, "inverse_mills");
  if (z >= kTailSwitch) return std::exp(detail::log_pdf(z)) / (0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0));
  return 1.0 / detail::mills_ratio_tail(-z);
}

}  // namespace eopfair::probit
