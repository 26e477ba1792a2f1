#pragma once

// Compactly supported kernels of order M and the isotropic product kernel.

#include "fbmkde/quadrature.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fbmkde {

//! Legendre polynomial P_m(0): zero for odd m, (-1)^{m/2} (m-1)!!/m!! otherwise.
inline double legendre_at_zero(std::size_t m) {
  if (m % 2 == 1) return 0.0;
  double v = 1.0;
  for (std::size_t k = 2; k <= m; k += 2) v *= -static_cast<double>(k - 1) / static_cast<double>(k);
  return v;
}

/// Univariate kernel supported on [-1, 1], stored as a Legendre expansion
/// K(u) = sum_m c_m P_m(u). Values may be negative for order >= 2.
class Kernel1D {
public:
  Kernel1D(std::size_t order, std::vector<double> coeffs) : order_(order), coeffs_(std::move(coeffs)) {
    if (coeffs_.empty()) throw std::invalid_argument("kernel needs at least one coefficient");
  }

  std::size_t order() const noexcept { return order_; }
  std::size_t degree() const noexcept { return coeffs_.size() - 1; }
  const std::vector<double>& coefficients() const noexcept { return coeffs_; }

  double operator()(double u) const noexcept {
    if (!(u >= -1.0 && u <= 1.0)) return 0.0;
    double p0 = 1.0, p1 = u;
    double acc = coeffs_[0];
    if (coeffs_.size() > 1) acc += coeffs_[1] * u;
    for (std::size_t m = 2; m < coeffs_.size(); ++m) {
      const double mm = static_cast<double>(m);
      const double p2 = ((2.0 * mm - 1.0) * u * p1 - (mm - 1.0) * p0) / mm;
      p0 = p1;
      p1 = p2;
      acc += coeffs_[m] * p2;
    }
    return acc;
  }

  //! K(0), the supremum of |K| for Legendre projection kernels.
  double peak() const noexcept {
    double acc = 0.0;
    for (std::size_t m = 0; m < coeffs_.size(); ++m) acc += coeffs_[m] * legendre_at_zero(m);
    return acc;
  }

  //! a K1 + (1-a) K2, of the smaller order.
  static Kernel1D mix(double a, const Kernel1D& k1, const Kernel1D& k2) {
    std::vector<double> c(std::max(k1.coeffs_.size(), k2.coeffs_.size()), 0.0);
    for (std::size_t m = 0; m < k1.coeffs_.size(); ++m) c[m] += a * k1.coeffs_[m];
    for (std::size_t m = 0; m < k2.coeffs_.size(); ++m) c[m] += (1.0 - a) * k2.coeffs_[m];
    return {std::min(k1.order_, k2.order_), std::move(c)};
  }

private:
  std::size_t order_;
  std::vector<double> coeffs_;
};

/// Order-M kernel K(u) = sum_{m<=M} (2m+1)/2 P_m(0) P_m(u) on [-1,1]: the
/// L2 projection of the point evaluation at 0 onto polynomials of degree M,
/// so int u^j K(u) du = delta_{j0} for j <= M.
inline Kernel1D legendre_kernel(std::size_t order) {
  std::vector<double> c(order + 1);
  for (std::size_t m = 0; m <= order; ++m) c[m] = 0.5 * (2.0 * static_cast<double>(m) + 1.0) * legendre_at_zero(m);
  return {order, std::move(c)};
}

//! int_{-1}^{1} u^i K(u) du by Gauss-Legendre; exact up to rounding when 2*nodes-1 >= degree + i.
inline double kernel_moment(const Kernel1D& k, std::size_t i, std::size_t nodes = 64) {
  if (2 * nodes < k.degree() + i + 1) throw std::invalid_argument("too few quadrature nodes for an exact moment");
  const auto rule = gauss_legendre(nodes);
  double acc = 0.0;
  for (std::size_t j = 0; j < nodes; ++j) acc += rule.weights[j] * std::pow(rule.nodes[j], static_cast<double>(i)) * k(rule.nodes[j]);
  return acc;
}

//! h^{-d} prod_i K(z_i / h); zero as soon as one |z_i| > h.
inline double product_kernel_eval(const Kernel1D& k, double h, std::span<const double> z) {
  double p = 1.0;
  for (double zi : z) {
    p *= k(zi / h);
    if (p == 0.0) return 0.0;
  }
  return std::pow(h, -static_cast<double>(z.size())) * p;
}

} // namespace fbmkde
