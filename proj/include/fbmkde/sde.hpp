#pragma once

// Additive-noise SDEs dX = b(X) dt + sigma dB driven by fBm.

#include "fbmkde/error.hpp"
#include "fbmkde/fbm.hpp"
#include "fbmkde/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fbmkde {

using DriftFn = std::function<void(std::span<const double> x, std::span<double> out)>;

/// A drift field together with the constants it declares for the
/// semi-contraction condition
///   <b(x)-b(y), x-y> <= -kappa |x-y|^2   if |x|,|y| >= R,
///                    <=  lambda |x-y|^2  otherwise,
/// and a Lipschitz constant `lip` (on the working region for drifts that are
/// only locally Lipschitz).
struct DriftSpec {
  std::string id;
  std::size_t dim = 1;
  DriftFn eval;
  double kappa = 0.0;
  double R = 0.0;
  double lambda = 0.0;
  double lip = 0.0;

  void operator()(std::span<const double> x, std::span<double> out) const { eval(x, out); }
  std::vector<double> at(std::span<const double> x) const {
    std::vector<double> out(dim);
    eval(x, out);
    return out;
  }
};

inline DriftSpec fou_drift(double kappa, std::size_t d) {
  if (!(kappa > 0.0)) throw std::invalid_argument("fou drift needs kappa > 0");
  if (d < 1) throw std::invalid_argument("dimension must be at least 1");
  DriftSpec s;
  s.id = "fou(kappa=" + std::to_string(kappa) + ")";
  s.dim = d;
  s.eval = [kappa](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = -kappa * x[i];
  };
  s.kappa = kappa;
  s.R = 0.0;
  s.lambda = 0.0;
  s.lip = kappa;
  return s;
}

struct SemiContractiveConstants {
  double kappa;
  double R;
  double lambda;
};

/// (A1) constants of b(x) = -a(|x|^2 - b)x from its radial profile.
///
/// With V(x) = a(|x|^2-b)^2/4 and b = -grad V, the radial profile of the
/// smallest Hessian eigenvalue is mu(r) = a(r^2 - b) (a(3r^2 - b) when d = 1),
/// so the worst expansion anywhere is lambda = max_r -mu(r). For |x|,|y| >= r
/// the pair inequality <|x|^2 x - |y|^2 y, x-y> >= (|x|^2+|y|^2)|x-y|^2 / 2
/// gives the contraction profile kappa(r) = a(r^2 - b). R is the first radius
/// of a 1e-3 grid at which kappa(R) >= lambda.
inline SemiContractiveConstants double_well_constants(double a, double b, std::size_t d) {
  constexpr double step = 1e-3;
  const double r_max = 10.0 * std::sqrt(b) + 10.0;
  const auto mu = [&](double r) { return d == 1 ? a * (3.0 * r * r - b) : a * (r * r - b); };
  double lambda = 0.0;
  for (double r = 0.0; r <= r_max; r += step) lambda = std::max(lambda, -mu(r));
  for (std::size_t k = 0;; ++k) {
    const double r = static_cast<double>(k) * step;
    if (r > r_max) throw std::logic_error("radial search did not find R");
    const double kappa = a * (r * r - b);
    if (kappa >= lambda && kappa > 0.0) return {kappa, r, lambda};
  }
}

//! Radius of the region on which the double-well drift's Lipschitz constant is declared.
inline constexpr double double_well_lip_radius = 3.0;

inline DriftSpec double_well_drift(double a, double b, std::size_t d) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("double_well needs a, b > 0");
  if (d < 1) throw std::invalid_argument("dimension must be at least 1");
  const auto c = double_well_constants(a, b, d);
  DriftSpec s;
  s.id = "double_well(a=" + std::to_string(a) + ",b=" + std::to_string(b) + ")";
  s.dim = d;
  s.eval = [a, b](std::span<const double> x, std::span<double> out) {
    double r2 = 0.0;
    for (double v : x) r2 += v * v;
    const double f = -a * (r2 - b);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f * x[i];
  };
  s.kappa = c.kappa;
  s.R = c.R;
  s.lambda = c.lambda;
  const double r = double_well_lip_radius;
  s.lip = std::max(a * b, a * (3.0 * r * r - b));
  return s;
}

//! Drift by name: "fou" (kappa) or "double_well" (a, b).
inline DriftSpec builtin_drift(const std::string& name, const std::map<std::string, double>& params, std::size_t d) {
  const auto get = [&](const char* key) {
    auto it = params.find(key);
    if (it == params.end()) throw std::invalid_argument(name + " drift needs parameter " + key);
    return it->second;
  };
  if (name == "fou") return fou_drift(get("kappa"), d);
  if (name == "double_well") return double_well_drift(get("a"), get("b"), d);
  throw UnknownDrift("unknown drift '" + name + "'");
}

struct ContractionReport {
  std::size_t violations = 0;
  //! max over pairs of (<b(x)-b(y),x-y> - bound) / |x-y|^2; negative when every pair has slack
  double worst_margin = -std::numeric_limits<double>::infinity();
  std::size_t lipschitz_violations = 0;
};

/// Samples pairs uniformly in [-radius, radius]^{2d} and checks the
/// applicable branch of the semi-contraction condition for each.
inline ContractionReport check_semi_contractive(const DriftSpec& drift, std::size_t n_pairs, double radius, Seed seed) {
  if (n_pairs < 1) throw std::invalid_argument("need at least one pair");
  const std::size_t d = drift.dim;
  Engine eng(derive_seed(seed, SeedDomain::sampling));
  std::uniform_real_distribution<double> unif(-radius, radius);
  std::vector<double> x(d), y(d), bx(d), by(d);
  const double tol = 1e-9 * std::max(1.0, drift.lip);
  ContractionReport rep;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    for (auto& v : x) v = unif(eng);
    for (auto& v : y) v = unif(eng);
    drift(x, bx);
    drift(y, by);
    double inner = 0.0, dist2 = 0.0, nx = 0.0, ny = 0.0, db2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double dx = x[i] - y[i];
      inner += (bx[i] - by[i]) * dx;
      dist2 += dx * dx;
      db2 += (bx[i] - by[i]) * (bx[i] - by[i]);
      nx += x[i] * x[i];
      ny += y[i] * y[i];
    }
    if (dist2 == 0.0) continue;
    const bool outside = std::sqrt(nx) >= drift.R && std::sqrt(ny) >= drift.R;
    const double rate = outside ? -drift.kappa : drift.lambda;
    const double margin = inner / dist2 - rate;
    rep.worst_margin = std::max(rep.worst_margin, margin);
    if (margin > tol) ++rep.violations;
    if (std::sqrt(db2) > drift.lip * std::sqrt(dist2) * (1.0 + 1e-12)) ++rep.lipschitz_violations;
  }
  return rep;
}

//! Nondegenerate d x d diffusion coefficient, identity by default.
class DiffusionMatrix {
public:
  explicit DiffusionMatrix(std::size_t d) : m_(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))) {}
  explicit DiffusionMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) throw std::invalid_argument("sigma must be square");
    if (!(std::abs(m_.determinant()) > 1e-12)) throw std::invalid_argument("sigma is degenerate");
  }
  static DiffusionMatrix scalar(double s, std::size_t d) {
    return DiffusionMatrix(Eigen::MatrixXd(s * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))));
  }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  const Eigen::MatrixXd& matrix() const noexcept { return m_; }

private:
  Eigen::MatrixXd m_;
};

struct TrajectoryMeta {
  double hurst = 0.5;
  std::string drift_id;
  std::vector<double> sigma; // row-major
  double burn_in = 0.0;
  Seed seed = 0;
};

//! Discretised SDE solution on [0, T]; states are row-major, n+1 rows of d.
struct Trajectory {
  UniformGrid grid;
  std::size_t dim;
  std::vector<double> states;
  TrajectoryMeta meta;

  std::size_t size() const noexcept { return dim == 0 ? 0 : states.size() / dim; }
  std::span<const double> state(std::size_t k) const { return {states.data() + k * dim, dim}; }
  double horizon() const noexcept { return grid.horizon(); }
};

/// Euler-Maruyama scheme X_{k+1} = X_k + b(X_k) dt + sigma (B_{k+1} - B_k),
/// using the stored fBm increments. Throws NonFinite on overflow.
inline Trajectory euler_maruyama(const DriftSpec& drift, const DiffusionMatrix& sigma, const FbmPath& noise,
                                 std::span<const double> x0) {
  const std::size_t d = drift.dim;
  if (noise.dim != d || sigma.dim() != d || x0.size() != d) throw std::invalid_argument("dimension mismatch");
  const std::size_t n = noise.grid.steps();
  const double dt = noise.grid.dt();
  const auto& s = sigma.matrix();

  Trajectory traj{noise.grid, d, std::vector<double>((n + 1) * d), {}};
  std::copy(x0.begin(), x0.end(), traj.states.begin());
  std::vector<double> b(d);
  for (std::size_t k = 0; k < n; ++k) {
    const double* cur = traj.states.data() + k * d;
    double* next = traj.states.data() + (k + 1) * d;
    drift(std::span<const double>(cur, d), b);
    const auto inc = noise.increment_row(k);
    for (std::size_t i = 0; i < d; ++i) {
      double noise_term = 0.0;
      for (std::size_t j = 0; j < d; ++j) noise_term += s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * inc[j];
      next[i] = cur[i] + b[i] * dt + noise_term;
      if (!std::isfinite(next[i])) throw NonFinite(k + 1);
    }
  }
  traj.meta.hurst = noise.hurst.value();
  traj.meta.drift_id = drift.id;
  traj.meta.sigma.assign(s.data(), s.data() + s.size());
  return traj;
}

//! Number of steps and the adjusted step so that steps * dt == horizon.
struct ResolvedStep {
  std::size_t steps;
  double dt;
};

inline ResolvedStep resolve_step(double horizon, double dt_max) {
  if (!(horizon > 0.0) || !(dt_max > 0.0)) throw std::invalid_argument("horizon and dt must be positive");
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt_max - 1e-9));
  return {std::max<std::size_t>(steps, 1), horizon / static_cast<double>(std::max<std::size_t>(steps, 1))};
}

//! max(50, 10 / kappa)
inline double default_burn_in(double kappa) { return std::max(50.0, 10.0 / kappa); }

/// Approximate stationary sampler: simulates from x0 = 0 on
/// [-burn_in, T] and keeps [0, T]. The circulant generator for the full
/// window is built once and reused across replicates.
class StationarySimulator {
public:
  StationarySimulator(DriftSpec drift, DiffusionMatrix sigma, HurstParameter hurst, double horizon, double dt_max,
                      double burn_in)
      : drift_(std::move(drift)), sigma_(std::move(sigma)), hurst_(hurst), burn_in_(burn_in) {
    if (!(burn_in >= 0.0)) throw std::invalid_argument("burn-in must be nonnegative");
    const auto rs = resolve_step(horizon, dt_max);
    steps_ = rs.steps;
    dt_ = rs.dt;
    burn_steps_ = static_cast<std::size_t>(std::llround(burn_in / dt_));
    gen_ = std::make_shared<CirculantFgn>(hurst, burn_steps_ + steps_, dt_);
  }

  double dt() const noexcept { return dt_; }
  std::size_t steps() const noexcept { return steps_; }
  std::size_t burn_steps() const noexcept { return burn_steps_; }
  const DriftSpec& drift() const noexcept { return drift_; }

  Trajectory run(Seed seed) const {
    const std::size_t d = drift_.dim;
    const UniformGrid full(-static_cast<double>(burn_steps_) * dt_, dt_, burn_steps_ + steps_);
    const auto noise = sample_fbm_path(*gen_, full, d, seed);
    const std::vector<double> x0(d, 0.0);
    auto all = euler_maruyama(drift_, sigma_, noise, x0);
    Trajectory out{UniformGrid(0.0, dt_, steps_), d,
                   std::vector<double>(all.states.begin() + static_cast<std::ptrdiff_t>(burn_steps_ * d), all.states.end()),
                   std::move(all.meta)};
    out.meta.burn_in = static_cast<double>(burn_steps_) * dt_;
    out.meta.seed = seed;
    return out;
  }

private:
  DriftSpec drift_;
  DiffusionMatrix sigma_;
  HurstParameter hurst_;
  double burn_in_;
  std::size_t steps_ = 0;
  std::size_t burn_steps_ = 0;
  double dt_ = 0.0;
  std::shared_ptr<const CirculantFgn> gen_;
};

inline Trajectory simulate_stationary(const DriftSpec& drift, const DiffusionMatrix& sigma, HurstParameter hurst,
                                      double horizon, double dt, double burn_in, Seed seed) {
  return StationarySimulator(drift, sigma, hurst, horizon, dt, burn_in).run(seed);
}

} // namespace fbmkde
