#pragma once

// Occupation-time kernel density estimator pi_hat_{h,T}(x) = (1/T) int_0^T K_h(x - X_u) du.

#include "fbmkde/error.hpp"
#include "fbmkde/kernels.hpp"
#include "fbmkde/quadrature.hpp"
#include "fbmkde/sde.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fbmkde {

struct KdeQuery {
  std::vector<double> x;
  double h;
  Kernel1D kernel;
};

//! The estimator assumes h < 1; callers warn when this returns true.
inline bool bandwidth_out_of_range(double h) { return !(h > 0.0 && h < 1.0); }

/// Trapezoidal time discretisation (dt/T) sum_k w_k K_h(x - X_{t_k}),
/// w_0 = w_n = 1/2. The result is signed for kernels of order >= 2.
inline double kde_at_point(const Trajectory& traj, std::span<const double> x, double h, const Kernel1D& kernel) {
  if (traj.states.empty() || traj.dim == 0) throw EmptyTrajectory();
  if (!(h > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  const std::size_t d = traj.dim;
  if (x.size() != d) throw std::invalid_argument("query point dimension mismatch");
  const std::size_t rows = traj.size();
  const double inv_h = 1.0 / h;
  double acc = 0.0;
  for (std::size_t k = 0; k < rows; ++k) {
    const double* s = traj.states.data() + k * d;
    double p = 1.0;
    for (std::size_t i = 0; i < d && p != 0.0; ++i) {
      const double z = x[i] - s[i];
      p = std::abs(z) > h ? 0.0 : p * kernel(z * inv_h);
    }
    if (p == 0.0) continue;
    acc += (k == 0 || k + 1 == rows) ? 0.5 * p : p;
  }
  const double horizon = traj.grid.horizon();
  return traj.grid.dt() / horizon * std::pow(h, -static_cast<double>(d)) * acc;
}

inline double kde_at_point(const Trajectory& traj, const KdeQuery& q) { return kde_at_point(traj, q.x, q.h, q.kernel); }

/// Estimator at every row of `points` (row-major, d per row) in a single
/// pass over the trajectory.
inline std::vector<double> kde_on_grid(const Trajectory& traj, std::span<const double> points, double h,
                                       const Kernel1D& kernel) {
  if (traj.states.empty() || traj.dim == 0) throw EmptyTrajectory();
  if (!(h > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  const std::size_t d = traj.dim;
  if (points.size() % d != 0) throw std::invalid_argument("grid is not a whole number of points");
  const std::size_t np = points.size() / d;
  const std::size_t rows = traj.size();
  const double inv_h = 1.0 / h;
  std::vector<double> acc(np, 0.0);
  for (std::size_t k = 0; k < rows; ++k) {
    const double* s = traj.states.data() + k * d;
    const double w = (k == 0 || k + 1 == rows) ? 0.5 : 1.0;
    for (std::size_t p = 0; p < np; ++p) {
      double v = 1.0;
      for (std::size_t i = 0; i < d && v != 0.0; ++i) {
        const double z = points[p * d + i] - s[i];
        v = std::abs(z) > h ? 0.0 : v * kernel(z * inv_h);
      }
      if (v != 0.0) acc[p] += w * v;
    }
  }
  const double scale = traj.grid.dt() / traj.grid.horizon() * std::pow(h, -static_cast<double>(d));
  for (auto& v : acc) v *= scale;
  return acc;
}

using DensityFn = std::function<double(std::span<const double>)>;

/// (K_h * pi)(x) - pi(x) by tensor Gauss-Legendre quadrature over the
/// window [x-h, x+h]^d. Under stationarity this is E[pi_hat] - pi(x).
inline double bias_convolution_oracle(const DensityFn& target, const Kernel1D& kernel, double h,
                                      std::span<const double> x, std::size_t nodes = 32) {
  if (!(h > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  const std::size_t d = x.size();
  if (d < 1 || d > 3) throw std::invalid_argument("tensor quadrature supports d in {1,2,3}");
  const auto rule = gauss_legendre(nodes);
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> y(d);
  double acc = 0.0;
  for (;;) {
    double w = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double u = rule.nodes[idx[i]];
      y[i] = x[i] - h * u;
      w *= rule.weights[idx[i]] * kernel(u);
    }
    acc += w * target(y);
    std::size_t i = 0;
    for (; i < d; ++i) {
      if (++idx[i] < nodes) break;
      idx[i] = 0;
    }
    if (i == d) break;
  }
  return acc - target(x);
}

} // namespace fbmkde
