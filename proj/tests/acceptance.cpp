// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "fbmkde/harness.hpp"
#include "fbmkde/io.hpp"
#include "fbmkde/theory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace fbmkde;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double z_bound = 3.0;                 // per-entry standard errors
constexpr double family_alpha = 1e-3;           // for the multiple-comparison guard
constexpr double moment_tol = 1e-10;
constexpr double bias_slope_lo = 1.8, bias_slope_hi = 2.2;
constexpr double short_var_lo = -1.25, short_var_hi = -0.75;
constexpr double long_var_floor = -1.0, long_var_target = -0.5, long_var_band = 0.25;
constexpr double mse_slack = 0.2;
constexpr double improved_ratio_max = 1.1;
constexpr double rho_terminal = 1e-6;
constexpr double gap_ratio_min = 1.5;
constexpr double c_stability_factor = 2.0;
constexpr Seed base_seed = 20240601;

struct Outcome {
  bool pass;
  std::string detail;
};

unsigned threads() { return default_threads(); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double normal_quantile_upper(double p) {
  // bisection on erfc; p is a one-sided tail probability
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(mid / std::numbers::sqrt2) > p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

//! Smallest k with P(Binomial(n, p) > k) <= alpha.
std::size_t binomial_upper(std::size_t n, double p, double alpha) {
  double cdf = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    cdf += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                    (n - k) * std::log1p(-p));
    if (1.0 - cdf <= alpha) return k;
  }
  return n;
}

/// Many simultaneous "within 3 standard errors" comparisons: every |z| <= 3
/// passes outright; otherwise the number of exceedances must be within the
/// binomial range expected under the null and no |z| may exceed the
/// Bonferroni bound for the whole family.
struct ZSummary {
  std::size_t tests = 0, exceed = 0, allowed = 0;
  double max_z = 0.0, bonferroni = 0.0;
  bool pass() const { return exceed == 0 || (exceed <= allowed && max_z <= bonferroni); }
  std::string str() const {
    return std::to_string(exceed) + "/" + std::to_string(tests) + " entries beyond " + fmt(z_bound, 2) +
           " SE (allowed " + std::to_string(allowed) + "), max|z|=" + fmt(max_z, 3) + " (bound " + fmt(bonferroni, 3) + ")";
  }
};

ZSummary summarize_z(const std::vector<double>& zs) {
  ZSummary s;
  s.tests = zs.size();
  for (double z : zs) {
    s.max_z = std::max(s.max_z, std::abs(z));
    if (std::abs(z) > z_bound) ++s.exceed;
  }
  const double p = std::erfc(z_bound / std::numbers::sqrt2);
  s.allowed = binomial_upper(s.tests, p, family_alpha);
  s.bonferroni = normal_quantile_upper(family_alpha / (2.0 * static_cast<double>(s.tests)));
  return s;
}

// ---- 1 ----
Outcome fgn_law() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t n = std::size_t{1} << 14, reps = 200, lags = 10;
  std::vector<double> zs;
  std::string worst;
  const std::vector<double> hursts{0.1, 0.25, 0.5, 0.75, 0.9};
  for (std::size_t hi = 0; hi < hursts.size(); ++hi) {
    const HurstParameter hurst(hursts[hi]);
    const CirculantFgn gen(hurst, n, 1.0);
    std::vector<std::vector<double>> est(lags + 1, std::vector<double>(reps));
    parallel_for(reps, threads(), [&](std::size_t r) {
      const auto x = gen.sample(derive_seed(base_seed, SeedDomain::component, {1, hi, r}));
      for (std::size_t k = 0; k <= lags; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i + k < n; ++i) s += x[i] * x[i + k];
        est[k][r] = s / static_cast<double>(n - k);
      }
    });
    for (std::size_t k = 0; k <= lags; ++k) {
      const auto mv = mean_variance(est[k]);
      const double se = std::sqrt(mv.variance / reps);
      zs.push_back((mv.mean - fgn_autocov(hurst, k, 1.0)) / se);
    }
  }
  const auto s = summarize_z(zs);
  const double secs = seconds_since(t0);
  return {s.pass() && secs < 120.0, s.str() + ", " + fmt(secs, 3) + " s"};
}

// ---- 2 ----
Outcome generator_cross() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t n = 64, reps = 5000;
  const HurstParameter hurst(0.75);
  const CirculantFgn circ(hurst, n, 1.0);
  const CholeskyFgn chol(hurst, n, 1.0);
  const std::size_t pairs = n * (n + 1) / 2;
  std::vector<double> sa(pairs, 0.0), qa(pairs, 0.0), sb(pairs, 0.0), qb(pairs, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    const auto a = circ.sample(derive_seed(base_seed, SeedDomain::component, {2, 0, r}));
    const auto b = chol.sample(derive_seed(base_seed, SeedDomain::component, {2, 1, r}));
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j, ++p) {
        const double va = a[i] * a[j], vb = b[i] * b[j];
        sa[p] += va;
        qa[p] += va * va;
        sb[p] += vb;
        qb[p] += vb * vb;
      }
  }
  std::vector<double> zs(pairs);
  const double R = reps;
  for (std::size_t p = 0; p < pairs; ++p) {
    const double ma = sa[p] / R, mb = sb[p] / R;
    const double va = (qa[p] / R - ma * ma) * R / (R - 1.0), vb = (qb[p] / R - mb * mb) * R / (R - 1.0);
    zs[p] = (ma - mb) / std::sqrt(va / R + vb / R);
  }
  const auto s = summarize_z(zs);
  const double secs = seconds_since(t0);
  return {s.pass() && secs < 60.0, s.str() + ", " + fmt(secs, 3) + " s"};
}

// ---- 3 ----
Outcome kernel_order() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::size_t M = 0; M <= 8; ++M) {
    const auto k = legendre_kernel(M);
    for (std::size_t i = 0; i <= M; ++i) worst = std::max(worst, std::abs(kernel_moment(k, i, 64) - (i == 0 ? 1.0 : 0.0)));
  }
  const double secs = seconds_since(t0);
  return {worst < moment_tol && secs < 1.0, "max moment deviation " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

// ---- 4 ----
Outcome bias_order() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto k = legendre_kernel(1);
  const DensityFn phi = [](std::span<const double> y) { return std::exp(-0.5 * y[0] * y[0]) / std::sqrt(2.0 * std::numbers::pi); };
  std::vector<std::pair<double, double>> pts;
  const std::vector<double> x{0.0};
  for (double h : {0.4, 0.2, 0.1, 0.05}) pts.emplace_back(h, std::abs(bias_convolution_oracle(phi, k, h, x)));
  const auto fit = fit_loglog_slope(pts);
  const double secs = seconds_since(t0);
  return {fit.slope >= bias_slope_lo && fit.slope <= bias_slope_hi && secs < 1.0,
          "slope " + fmt(fit.slope, 5) + ", " + fmt(secs, 3) + " s"};
}

ExperimentConfig fou_config(double H) {
  ExperimentConfig cfg;
  cfg.drift_name = "fou";
  cfg.drift_params = {{"kappa", 1.0}};
  cfg.hurst = H;
  cfg.sigma = 1.0;
  cfg.dim = 1;
  cfg.T_grid = {64, 128, 256, 512, 1024, 2048};
  cfg.seed = base_seed;
  cfg.threads = threads();
  return cfg;
}

// ---- 5, 6 ----
// Query point off the symmetry centre: at x = 0 the leading long-memory
// contribution to the variance cancels for an even stationary law.
constexpr double variance_query = 0.5;

Outcome variance_scaling(double H) {
  auto cfg = fou_config(H);
  cfg.replicates = 200;
  cfg.bandwidths = {BandwidthSpec::fixed(0.3)};
  cfg.query_points = {{variance_query}};
  const auto res = mc_variance_scaling(cfg);
  const auto& s = res.slopes.at(0);
  if (!s.fit) return {false, "fit failed: " + s.error};
  const double slope = s.fit->slope;
  const bool ok = H < 0.5 ? (slope >= short_var_lo && slope <= short_var_hi)
                          : (slope >= long_var_floor && std::abs(slope - long_var_target) <= long_var_band);
  return {ok && res.wall_seconds < 900.0,
          "slope " + fmt(slope, 4) + " +- " + fmt(s.fit->stderr_slope, 2) + ", " + fmt(res.wall_seconds, 3) + " s"};
}

// ---- 7, 8 share the oracle ----
struct MseSetup {
  ExperimentConfig cfg;
  OracleDensity oracle;
  double oracle_seconds = 0.0;
};

const MseSetup& mse_setup() {
  static const MseSetup setup = [] {
    MseSetup s;
    s.cfg = fou_config(0.25);
    s.cfg.beta_assumed = 2.0;
    s.cfg.kernel_order = 2;
    s.cfg.replicates = 100;
    s.cfg.query_points = {{0.0}};
    s.cfg.bandwidths = {BandwidthSpec::rule(RateVariant::basic), BandwidthSpec::rule(RateVariant::improved, 0.01)};
    OracleBudget b;
    b.replicates = 20;
    b.horizon = s.cfg.T_grid.back(); // 20 runs: 20x the largest experimental horizon
    b.dt = 0.01;
    b.bandwidth = 0.1;
    b.kernel_order = 2;
    b.burn_in = s.cfg.resolved_burn_in();
    const auto t0 = std::chrono::steady_clock::now();
    s.oracle = build_oracle(s.cfg.drift(), s.cfg.diffusion(), HurstParameter(0.25), b, s.cfg.seed, threads());
    s.oracle_seconds = seconds_since(t0);
    return s;
  }();
  return setup;
}

const ExperimentResult& mse_result() {
  static const ExperimentResult res = mc_mse(mse_setup().cfg, mse_setup().oracle);
  return res;
}

Outcome mse_rate() {
  const auto& setup = mse_setup();
  const auto& res = mse_result();
  const auto& cfg = setup.cfg;
  const std::size_t nb = cfg.bandwidths.size();
  const auto* s = res.slope("mse", "basic", 0);
  if (!s || !s->fit) return {false, "fit failed"};
  const double target = theoretical_mse_exponent(RateRegime(RateVariant::basic, HurstParameter(0.25), 2.0, 1));
  const double bound = -target + mse_slack;
  std::size_t bumps = 0;
  bool within_se = true;
  std::string series;
  for (std::size_t t = 0; t < cfg.T_grid.size(); ++t) {
    const auto& c = res.cell(t, 0, 0, nb, 1);
    series += (t ? " " : "") + fmt(c.mse, 3);
    if (t == 0) continue;
    const auto& p = res.cell(t - 1, 0, 0, nb, 1);
    if (c.mse >= p.mse) {
      ++bumps;
      within_se = within_se && c.mse - p.mse <= std::hypot(c.mse_stderr, p.mse_stderr);
    }
  }
  const bool decreasing = bumps == 0 || (bumps == 1 && within_se);
  const double secs = setup.oracle_seconds + res.wall_seconds;
  return {s->fit->slope <= bound && decreasing && secs < 1800.0,
          "slope " + fmt(s->fit->slope, 4) + " (bound " + fmt(bound, 4) + "), MSE " + series + ", oracle noise var " +
              fmt(setup.oracle.noise_variance, 2) + ", " + fmt(secs, 3) + " s"};
}

bool exponent_dominance(std::size_t& points, std::size_t& eps_points, std::size_t& eps_fail_band) {
  bool ok = true;
  points = eps_points = eps_fail_band = 0;
  for (int i = 1; i <= 20; ++i) {
    const double H = (i - 0.5) / 40.0;
    for (int j = 0; j < 17; ++j) {
      const double beta = 1.0 + 3.0 * j / 16.0;
      for (std::size_t d = 1; d <= 3; ++d) {
        ++points;
        const RateRegime imp(RateVariant::improved, HurstParameter(H), beta, d, 0.01);
        const RateRegime bas(RateVariant::basic, HurstParameter(H), beta, d, 0.01);
        ok = ok && mse_exponent_before_eps(imp) >= mse_exponent_before_eps(bas);
        const bool eps_ok = theoretical_mse_exponent(imp) >= theoretical_mse_exponent(bas);
        // Second branch of the improved exponent sits beta(1-2H)/(beta+d) above
        // the basic one; a fixed slack eps overturns it once that gap is < eps.
        if (1.0 - 2.0 * H >= 0.01 * (beta + static_cast<double>(d)) / beta) {
          ++eps_points;
          ok = ok && eps_ok;
        } else if (!eps_ok) {
          ++eps_fail_band;
        }
      }
    }
  }
  return ok;
}

Outcome improved_bandwidth() {
  const auto& setup = mse_setup();
  const auto& res = mse_result();
  const auto& cfg = setup.cfg;
  const std::size_t nb = cfg.bandwidths.size(), last = cfg.T_grid.size() - 1;
  const auto& basic = res.cell(last, 0, 0, nb, 1);
  const auto& improved = res.cell(last, 1, 0, nb, 1);
  const double ratio = improved.mse / basic.mse;
  // delta-method standard error of the paired ratio of mean squared errors
  const double n = static_cast<double>(basic.values.size());
  double caa = 0.0, cbb = 0.0, cab = 0.0;
  for (std::size_t r = 0; r < basic.values.size(); ++r) {
    const double ea = std::pow(improved.values[r] - improved.oracle_value, 2) - improved.mse;
    const double eb = std::pow(basic.values[r] - basic.oracle_value, 2) - basic.mse;
    caa += ea * ea;
    cbb += eb * eb;
    cab += ea * eb;
  }
  caa /= n - 1.0;
  cbb /= n - 1.0;
  cab /= n - 1.0;
  const double mb = basic.mse, ma = improved.mse;
  const double ratio_se =
      std::sqrt(std::max(0.0, (caa / (mb * mb) + ma * ma * cbb / std::pow(mb, 4) - 2.0 * ma * cab / std::pow(mb, 3)) / n));
  std::size_t points = 0, eps_points = 0, band = 0;
  const bool analytic = exponent_dominance(points, eps_points, band);
  return {ratio <= improved_ratio_max && analytic && points >= 1000,
          "MSE ratio improved/basic at T=2048 " + fmt(ratio, 4) + " +- " + fmt(ratio_se, 2) + " (h " + fmt(improved.h, 3) + " vs " + fmt(basic.h, 3) +
              "); dominance on " + std::to_string(points) + " grid points (eps=0.01 on " + std::to_string(eps_points) +
              ", " + std::to_string(band) + " eps-overturned near H=1/2)"};
}

// ---- 9 ----
Outcome control_ode() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t runs = 100;
  std::vector<double> finals(runs), ratios(runs), worst_excess(runs);
  std::vector<std::size_t> violations(runs);
  std::vector<int> analytic_ok(runs);
  parallel_for(runs, threads(), [&](std::size_t r) {
    Engine eng(derive_seed(base_seed, SeedDomain::component, {9, r}));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const std::size_t d = 1 + static_cast<std::size_t>(U(eng) * 3.0) % 3;
    ControlOdeRun run;
    run.drift = U(eng) < 0.5 ? fou_drift(0.2 + 2.0 * U(eng), d) : double_well_drift(0.5 + U(eng), 0.5 + U(eng), d);
    std::vector<double> centre(d), amp(d), freq(d), phase(d), sdot_amp(d), sfreq(d);
    for (std::size_t i = 0; i < d; ++i) {
      centre[i] = 2.0 * U(eng) - 1.0;
      amp[i] = U(eng);
      freq[i] = 1.0 + 5.0 * U(eng);
      phase[i] = 2.0 * std::numbers::pi * U(eng);
      sdot_amp[i] = U(eng) / std::sqrt(static_cast<double>(d)); // keeps |s'| <= 1
      sfreq[i] = 1.0 + 5.0 * U(eng);
    }
    run.background = [=](double t, std::span<double> out) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = centre[i] + amp[i] * std::sin(freq[i] * t + phase[i]);
    };
    run.perturbation_rate = [=](double t, std::span<double> out) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = sdot_amp[i] * std::cos(sfreq[i] * t);
    };
    const double radius = 0.1 * std::pow(100.0, U(eng)); // log-uniform on [0.1, 10]
    std::vector<double> dir(d);
    std::normal_distribution<double> N;
    double nn = 0.0;
    for (auto& v : dir) {
      v = N(eng);
      nn += v * v;
    }
    run.rho0.resize(d);
    for (std::size_t i = 0; i < d; ++i) run.rho0[i] = radius * dir[i] / std::sqrt(nn);
    run.steps = 10000;
    try {
      const auto res = control_ode_run(run);
      finals[r] = res.rho_final;
      violations[r] = res.envelope_violations;
      worst_excess[r] = res.worst_envelope_excess;
      ratios[r] = res.sup_phi / (radius + res.sup_perturbation_rate);
      analytic_ok[r] = res.sup_phi <= (2.0 + run.drift.lambda) * radius + res.sup_perturbation_rate + 1e-9;
    } catch (const Nonconvergence&) {
      finals[r] = 1.0;
    }
  });
  double worst_final = 0.0, worst_ex = -1e300;
  std::size_t total_viol = 0, analytic = 0;
  for (std::size_t r = 0; r < runs; ++r) {
    worst_final = std::max(worst_final, finals[r]);
    total_viol += violations[r];
    worst_ex = std::max(worst_ex, worst_excess[r]);
    analytic += analytic_ok[r];
  }
  // fitted C on each half of the suite
  const double c1 = *std::max_element(ratios.begin(), ratios.begin() + runs / 2);
  const double c2 = *std::max_element(ratios.begin() + runs / 2, ratios.end());
  const bool stable = std::max(c1, c2) <= c_stability_factor * std::min(c1, c2);
  const double secs = seconds_since(t0);
  return {worst_final < rho_terminal && total_viol == 0 && stable && analytic == runs && secs < 60.0,
          "max |rho_1| " + fmt(worst_final, 3) + ", envelope violations " + std::to_string(total_viol) +
              ", worst excess " + fmt(worst_ex, 3) + ", fitted C halves " + fmt(c1, 4) + "/" + fmt(c2, 4) + ", " +
              fmt(secs, 3) + " s"};
}

// ---- 10 ----
Outcome innovation() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (double H : {0.25, 0.75}) {
    const auto chk = innovation_decomposition_check(HurstParameter(H), 1.0, 1.0, 200.0, 200000,
                                                    derive_seed(base_seed, SeedDomain::component, {10}), 32);
    const double ratio = chk.max_gap / chk.max_gap_halved;
    ok = ok && ratio >= gap_ratio_min;
    detail += "H=" + fmt(H, 3) + ": max gap " + fmt(chk.max_gap, 3) + " -> " + fmt(chk.max_gap_halved, 3) + " (ratio " +
              fmt(ratio, 3) + ", rms ratio " + fmt(chk.rms_gap / chk.rms_gap_halved, 3) + ", gap/sd " +
              fmt(chk.max_gap / chk.increment_sd, 2) + "); ";
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 120.0, detail + fmt(secs, 3) + " s"};
}

// ---- 11 ----
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "fbmkde_acceptance_determinism";
  fs::remove_all(dir);
  auto cfg = fou_config(0.25);
  cfg.T_grid = {32, 64, 128};
  cfg.replicates = 8;
  cfg.query_points = {{0.0}, {0.5}};
  cfg.bandwidths = {BandwidthSpec::rule(RateVariant::basic), BandwidthSpec::rule(RateVariant::improved)};
  OracleBudget b;
  b.replicates = 4;
  b.horizon = 160;
  b.grid_spacing = 0.05;
  b.split_half_tolerance = 10.0; // determinism only; oracle quality is not under test here

  // run with a given thread count from a config that went through the manifest round trip
  const auto run_once = [&](const io::json& cfg_json, unsigned t, const std::string& tag) {
    auto c = io::config_from_json(cfg_json);
    c.threads = t;
    const auto oracle = build_oracle(c.drift(), c.diffusion(), HurstParameter(c.hurst), b, c.seed, t);
    const auto res = mc_mse(c, oracle);
    const auto sub = dir / tag;
    fs::create_directories(sub);
    io::write_replicate_csv(sub / "replicates.csv", res, c.dim);
    io::write_aggregate_csv(sub / "cells.csv", res, c.dim);
    io::RunManifest m("mse-rates", io::config_to_json(c), c.seed);
    m.write(sub);
    return sub;
  };
  const auto a = run_once(io::config_to_json(cfg), 1, "t1");
  const auto replay = io::read_json_file(a / "manifest.json");
  const auto bdir = run_once(replay, 4, "t4");
  const bool same = slurp(a / "replicates.csv") == slurp(bdir / "replicates.csv") &&
                    slurp(a / "cells.csv") == slurp(bdir / "cells.csv") && !slurp(a / "cells.csv").empty();
  fs::remove_all(dir);
  return {same, same ? "CSV bytes identical for 1 vs 4 threads after manifest replay" : "CSV bytes differ"};
}

} // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"fGn law (autocovariance lags 0-10, five H)", fgn_law},
      {"circulant vs Cholesky covariance (n=64)", generator_cross},
      {"kernel moments M=0..8", kernel_order},
      {"bias order of the M=1 kernel", bias_order},
      {"variance T-scaling, H=0.25", [] { return variance_scaling(0.25); }},
      {"variance T-scaling, H=0.75", [] { return variance_scaling(0.75); }},
      {"MSE rate upper bound, H=0.25", mse_rate},
      {"improved-rule bandwidth, H=0.25", improved_bandwidth},
      {"control ODE terminal condition and envelope", control_ode},
      {"innovation decomposition gap under step halving", innovation},
      {"determinism across thread counts", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %2d: %s | %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
