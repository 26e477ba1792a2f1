#pragma once

// Exact-in-law fractional Brownian motion on uniform grids.

#include "fbmkde/error.hpp"
#include "fbmkde/fft.hpp"
#include "fbmkde/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbmkde {

class HurstParameter {
public:
  explicit HurstParameter(double h) : value_(h) {
    if (!(h > 0.0 && h < 1.0))
      throw std::invalid_argument("Hurst parameter must lie in (0,1), got " + std::to_string(h));
  }
  double value() const noexcept { return value_; }
  operator double() const noexcept { return value_; }

private:
  double value_;
};

//! Points t0 + k dt for k = 0..n.
class UniformGrid {
public:
  UniformGrid(double t0, double dt, std::size_t n) : t0_(t0), dt_(dt), n_(n) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("grid step must be positive");
    if (n < 1) throw std::invalid_argument("grid needs at least one step");
  }
  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return dt_; }
  std::size_t steps() const noexcept { return n_; }
  double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
  double horizon() const noexcept { return static_cast<double>(n_) * dt_; }

private:
  double t0_;
  double dt_;
  std::size_t n_;
};

//! A sampled d-dimensional fBm path. Values and increments are stored
//! row-major (one row of d coordinates per grid point / step); values are
//! the running sums of the increments, starting from 0.
struct FbmPath {
  HurstParameter hurst;
  UniformGrid grid;
  std::size_t dim;
  std::vector<double> values;
  std::vector<double> increments;

  double value(std::size_t k, std::size_t i) const { return values[k * dim + i]; }
  double increment(std::size_t k, std::size_t i) const { return increments[k * dim + i]; }
  std::span<const double> increment_row(std::size_t k) const { return {increments.data() + k * dim, dim}; }
};

//! Covariance of fBm increments over steps of length dt at lag k.
inline double fgn_autocov(HurstParameter hurst, std::size_t k, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const double two_h = 2.0 * hurst.value();
  const double kk = static_cast<double>(k);
  const double unit = 0.5 * (std::pow(kk + 1.0, two_h) - 2.0 * std::pow(kk, two_h) + std::pow(std::abs(kk - 1.0), two_h));
  return std::pow(dt, two_h) * unit;
}

/// Circulant-embedding (Davies-Harte) sampler of fractional Gaussian noise.
///
/// The Toeplitz covariance of n increments is embedded into a circulant of
/// size 2m with m = bit_ceil(n), so the FFT stays radix-2. Eigenvalues are
/// computed once at construction; each sample costs one FFT of length 2m.
/// Eigenvalues down to -1e-10 * max_eig are clamped to zero, anything
/// below raises NegativeEigenvalue.
class CirculantFgn {
public:
  static constexpr double eigen_tolerance = 1e-10;

  CirculantFgn(HurstParameter hurst, std::size_t n, double dt) : hurst_(hurst), n_(n), dt_(dt) {
    if (n < 1) throw std::invalid_argument("need at least one increment");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    const std::size_t m = std::bit_ceil(n);
    const std::size_t size = 2 * m;
    std::vector<std::complex<double>> row(size);
    for (std::size_t k = 0; k <= m; ++k) row[k] = fgn_autocov(hurst, k, 1.0);
    for (std::size_t k = m + 1; k < size; ++k) row[k] = row[size - k];
    fft::forward(row);

    double max_eig = 0.0;
    min_eig_ = row[0].real();
    for (const auto& v : row) {
      max_eig = std::max(max_eig, v.real());
      min_eig_ = std::min(min_eig_, v.real());
    }
    if (min_eig_ < -eigen_tolerance * max_eig) throw NegativeEigenvalue(min_eig_);

    scale_.resize(size);
    for (std::size_t k = 0; k < size; ++k)
      scale_[k] = std::sqrt(std::max(row[k].real(), 0.0) / static_cast<double>(size));
    step_scale_ = std::pow(dt, hurst.value());
  }

  std::size_t length() const noexcept { return n_; }
  double dt() const noexcept { return dt_; }
  HurstParameter hurst() const noexcept { return hurst_; }
  std::size_t embedding_size() const noexcept { return scale_.size(); }
  double min_eigenvalue() const noexcept { return min_eig_; }

  std::vector<double> sample(Seed seed) const {
    Engine eng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::complex<double>> work(scale_.size());
    for (std::size_t k = 0; k < work.size(); ++k) {
      const double re = normal(eng);
      const double im = normal(eng);
      work[k] = {scale_[k] * re, scale_[k] * im};
    }
    fft::forward(work);
    std::vector<double> out(n_);
    for (std::size_t j = 0; j < n_; ++j) out[j] = step_scale_ * work[j].real();
    return out;
  }

private:
  HurstParameter hurst_;
  std::size_t n_;
  double dt_;
  double min_eig_ = 0.0;
  double step_scale_ = 1.0;
  std::vector<double> scale_;
};

inline std::vector<double> sample_fgn_circulant(HurstParameter hurst, std::size_t n, double dt, Seed seed) {
  return CirculantFgn(hurst, n, dt).sample(seed);
}

//! Dense Cholesky sampler; O(n^2) memory. Serves as the independent
//! oracle for the circulant path.
class CholeskyFgn {
public:
  CholeskyFgn(HurstParameter hurst, std::size_t n, double dt) {
    if (n < 1) throw std::invalid_argument("need at least one increment");
    Eigen::MatrixXd cov(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            fgn_autocov(hurst, i > j ? i - j : j - i, dt);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("fGn covariance factorization failed");
    factor_ = llt.matrixL();
    for (Eigen::Index i = 0; i < factor_.rows(); ++i)
      if (!(factor_(i, i) > 0.0)) throw NotPositiveDefinite("non-positive pivot in fGn covariance");
  }

  const Eigen::MatrixXd& factor() const noexcept { return factor_; }

  std::vector<double> sample(Seed seed) const {
    Engine eng(seed);
    const auto n = static_cast<std::size_t>(factor_.rows());
    const auto z = standard_normals(eng, n);
    const Eigen::VectorXd x = factor_.triangularView<Eigen::Lower>() * Eigen::Map<const Eigen::VectorXd>(z.data(), factor_.rows());
    return {x.data(), x.data() + x.size()};
  }

private:
  Eigen::MatrixXd factor_;
};

inline std::vector<double> sample_fgn_cholesky(HurstParameter hurst, std::size_t n, double dt, Seed seed) {
  return CholeskyFgn(hurst, n, dt).sample(seed);
}

//! d independent fBm coordinates; coordinate i uses derive_seed(seed, component, {i}).
inline FbmPath sample_fbm_path(const CirculantFgn& gen, const UniformGrid& grid, std::size_t d, Seed seed) {
  if (d < 1) throw std::invalid_argument("dimension must be at least 1");
  if (gen.length() != grid.steps() || gen.dt() != grid.dt())
    throw std::invalid_argument("generator does not match the grid");
  const std::size_t n = grid.steps();
  FbmPath path{gen.hurst(), grid, d, std::vector<double>((n + 1) * d, 0.0), std::vector<double>(n * d)};
  for (std::size_t i = 0; i < d; ++i) {
    const auto inc = gen.sample(derive_seed(seed, SeedDomain::component, {i}));
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      path.increments[k * d + i] = inc[k];
      acc += inc[k];
      path.values[(k + 1) * d + i] = acc;
    }
  }
  return path;
}

inline FbmPath sample_fbm_path(HurstParameter hurst, const UniformGrid& grid, std::size_t d, Seed seed) {
  return sample_fbm_path(CirculantFgn(hurst, grid.steps(), grid.dt()), grid, d, seed);
}

//! Normalising constant of the Mandelbrot-van Ness representation,
//! [2H sin(pi H) Gamma(2H)]^{1/2} / Gamma(H + 1/2).
inline double mvn_constant(HurstParameter hurst) {
  const double h = hurst.value();
  return std::sqrt(2.0 * h * std::sin(std::numbers::pi * h) * std::tgamma(2.0 * h)) / std::tgamma(h + 0.5);
}

enum class LiouvilleRule {
  left_point,         //!< every cell weighted at its left endpoint
  analytic_last_cell, //!< singular cell integrated exactly, others left-point
};

/// Riemann-sum approximation of the Liouville process
/// int_0^t (t-u)^{H-1/2} dW_u at every grid node, from one Brownian
/// increment per step. Cost is quadratic in the number of steps. The
/// discretisation bias is of order dt^{min(H,1/2)}.
inline std::vector<double> liouville_path(HurstParameter hurst, const UniformGrid& grid,
                                          std::span<const double> brownian_increments,
                                          LiouvilleRule rule = LiouvilleRule::analytic_last_cell) {
  const std::size_t n = grid.steps();
  if (brownian_increments.size() != n) throw std::invalid_argument("need one Brownian increment per grid step");
  const double expo = hurst.value() - 0.5;
  const double dt = grid.dt();
  const double last_cell = rule == LiouvilleRule::analytic_last_cell
                               ? std::pow(dt, expo) / (hurst.value() + 0.5)
                               : std::pow(dt, expo);
  // weights depend only on k - j on a uniform grid
  std::vector<double> weight(n + 1, 0.0);
  weight[1] = last_cell;
  for (std::size_t lag = 2; lag <= n; ++lag) weight[lag] = std::pow(static_cast<double>(lag) * dt, expo);

  std::vector<double> out(n + 1, 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += weight[k - j] * brownian_increments[j];
    out[k] = acc;
  }
  return out;
}

inline std::vector<double> liouville_path(HurstParameter hurst, const UniformGrid& grid, Seed seed,
                                          LiouvilleRule rule = LiouvilleRule::analytic_last_cell) {
  Engine eng(derive_seed(seed, SeedDomain::brownian));
  auto dw = standard_normals(eng, grid.steps());
  const double sd = std::sqrt(grid.dt());
  for (auto& v : dw) v *= sd;
  return liouville_path(hurst, grid, dw, rule);
}

} // namespace fbmkde
