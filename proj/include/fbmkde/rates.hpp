#pragma once

// Bandwidth exponents and MSE / variance rate exponents as pure arithmetic.
//
// Sign convention for the slack eps: whenever eps appears it is subtracted
// from the exponent as displayed, i.e. a = (1-H)/(beta+d) - eps for the basic
// rule with H > 1/2 and the improved MSE exponent is
// min(2beta/(2beta+alpha), 2beta(1-H)/(beta+d)) - eps.

#include "fbmkde/error.hpp"
#include "fbmkde/fbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

namespace fbmkde {

enum class RateVariant { basic, improved };

inline RateVariant parse_rate_variant(const std::string& s) {
  if (s == "basic") return RateVariant::basic;
  if (s == "improved") return RateVariant::improved;
  throw InvalidRegime("unknown rate variant '" + s + "'");
}

inline const char* to_string(RateVariant v) { return v == RateVariant::basic ? "basic" : "improved"; }

class RateRegime {
public:
  RateRegime(RateVariant variant, HurstParameter hurst, double beta, std::size_t d, double eps = 0.01)
      : variant_(variant), hurst_(hurst), beta_(beta), d_(d), eps_(eps) {
    if (hurst.value() == 0.5) throw InvalidRegime("H = 1/2 is excluded from both rate regimes");
    if (variant == RateVariant::improved && !(hurst.value() < 0.5)) throw InvalidRegime("improved rate requires H < 1/2");
    if (!(beta >= 1.0)) throw InvalidRegime("Hoelder smoothness beta must be >= 1");
    if (d < 1) throw InvalidRegime("dimension must be >= 1");
    if (!(eps >= 0.0)) throw InvalidRegime("eps must be nonnegative");
  }
  RateVariant variant() const noexcept { return variant_; }
  double hurst() const noexcept { return hurst_.value(); }
  double beta() const noexcept { return beta_; }
  std::size_t dim() const noexcept { return d_; }
  double eps() const noexcept { return eps_; }
  double d() const noexcept { return static_cast<double>(d_); }

private:
  RateVariant variant_;
  HurstParameter hurst_;
  double beta_;
  std::size_t d_;
  double eps_;
};

//! max(2d - 1/H, 4d/(5-2H)), defined for H < 1/2.
inline double alpha_dH(std::size_t d, HurstParameter hurst) {
  const double h = hurst.value();
  if (!(h < 0.5)) throw InvalidRegime("alpha_{d,H} requires H < 1/2");
  const double dd = static_cast<double>(d);
  return std::max(2.0 * dd - 1.0 / h, 4.0 * dd / (5.0 - 2.0 * h));
}

//! Exponent a of the rate-optimal bandwidth h(T) = T^{-a}.
inline double optimal_exponent(const RateRegime& r) {
  const double h = r.hurst(), b = r.beta(), d = r.d(), eps = r.eps();
  if (r.variant() == RateVariant::improved) {
    const double alpha = alpha_dH(r.dim(), HurstParameter(h));
    return std::min(1.0 / (2.0 * b + alpha), (1.0 - h - eps) / (b + d));
  }
  if (h < 0.5) return 1.0 / (2.0 * b + 2.0 * d);
  return (1.0 - h) / (b + d) - eps;
}

//! Exponent of 1/T in the MSE upper bound, without the eps slack.
inline double mse_exponent_before_eps(const RateRegime& r) {
  const double h = r.hurst(), b = r.beta(), d = r.d();
  if (r.variant() == RateVariant::improved) {
    const double alpha = alpha_dH(r.dim(), HurstParameter(h));
    return std::min(2.0 * b / (2.0 * b + alpha), 2.0 * b * (1.0 - h) / (b + d));
  }
  if (h < 0.5) return b / (b + d);
  return 2.0 * (1.0 - h) * b / (b + d);
}

//! Exponent of 1/T in the MSE upper bound.
inline double theoretical_mse_exponent(const RateRegime& r) {
  const double base = mse_exponent_before_eps(r);
  if (r.variant() == RateVariant::basic && r.hurst() < 0.5) return base;
  return base - r.eps();
}

//! T^{-a}; the estimator assumes h < 1, see bandwidth_warns.
inline double bandwidth(double horizon, double a) { return std::pow(horizon, -a); }
inline bool bandwidth_warns(double h) { return !(h < 1.0); }

struct VarianceBoundExponents {
  //! Var <= c T^{basic_T} h^{basic_h}
  double basic_T;
  double basic_h;
  //! Refined bracket (H < 1/2 only): Var <= h^{-2d} T^{-1} max(h^{e1}, h^{e2}, T^{eT})
  bool has_improved = false;
  double improved_h_inv_hurst = 0.0;
  double improved_h_dimension = 0.0;
  double improved_T = 0.0;
  //! min(e1, e2): the h-exponent that binds once the T term is negligible
  double binding_h = 0.0;
};

inline VarianceBoundExponents variance_bound_exponents(HurstParameter hurst, std::size_t d, double eps) {
  const double h = hurst.value(), dd = static_cast<double>(d);
  VarianceBoundExponents v{};
  v.basic_h = -2.0 * dd;
  v.basic_T = h < 0.5 ? -1.0 : 2.0 * h - 2.0 + eps;
  if (h < 0.5) {
    v.has_improved = true;
    v.improved_h_inv_hurst = 1.0 / h;
    v.improved_h_dimension = 2.0 * dd * (3.0 - 2.0 * h) / (5.0 - 2.0 * h);
    v.improved_T = 2.0 * h - 1.0 + eps;
    v.binding_h = std::min(v.improved_h_inv_hurst, v.improved_h_dimension);
  }
  return v;
}

//! max(h^{1/H}, h^{2d(3-2H)/(5-2H)}, T^{2H-1+eps}) with unit constants.
inline double improved_variance_bracket(HurstParameter hurst, std::size_t d, double h, double horizon, double eps) {
  const auto v = variance_bound_exponents(hurst, d, eps);
  if (!v.has_improved) throw InvalidRegime("refined variance bracket requires H < 1/2");
  return std::max({std::pow(h, v.improved_h_inv_hurst), std::pow(h, v.improved_h_dimension), std::pow(horizon, v.improved_T)});
}

} // namespace fbmkde
