// fbmkde: command-line front end for simulation, kernel and drift checks,
// oracle construction, Monte Carlo rate experiments and the control ODE.

#include "fbmkde/harness.hpp"
#include "fbmkde/io.hpp"
#include "fbmkde/theory.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace fbmkde;
using io::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_check_failed = 1;
constexpr int exit_usage = 2;

struct Globals {
  std::string config;
  std::optional<Seed> seed;
  std::string out = "out";
  unsigned threads = 0;
};

struct ExperimentOverrides {
  std::optional<double> hurst;
  std::optional<std::size_t> replicates;
  std::optional<std::size_t> kernel_order;
  std::optional<double> fixed_h;
};

json load_raw(const Globals& g) { return g.config.empty() ? json::object() : io::read_json_file(g.config); }

ExperimentConfig load_experiment(const Globals& g, const json& raw, const ExperimentOverrides& o) {
  auto cfg = io::config_from_json(raw);
  if (g.seed) cfg.seed = *g.seed;
  if (o.hurst) cfg.hurst = *o.hurst;
  if (o.replicates) cfg.replicates = *o.replicates;
  if (o.kernel_order) cfg.kernel_order = *o.kernel_order;
  if (o.fixed_h) cfg.bandwidths = {BandwidthSpec::fixed(*o.fixed_h)};
  cfg.threads = g.threads ? g.threads : default_threads();
  return cfg;
}

fs::path prepare_out(const Globals& g) {
  fs::path dir(g.out);
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& p, const json& j) { io::write_text_atomic(p, j.dump(2) + "\n"); }

int finish(io::RunManifest& m, const fs::path& dir) {
  m.write(dir);
  return m.all_pass() ? exit_ok : exit_check_failed;
}

OracleDensity oracle_for(const ExperimentConfig& cfg, const json& raw, Seed seed, unsigned threads, json& info) {
  OracleBudget budget;
  budget.horizon = 20.0 * cfg.T_grid.back();
  budget.burn_in = cfg.resolved_burn_in();
  if (raw.contains("oracle")) budget = io::oracle_budget_from_json(raw.at("oracle"), budget);
  if (budget.horizon * static_cast<double>(budget.replicates) < 20.0 * cfg.T_grid.back())
    throw ConfigError("oracle budget must cover at least 20x the largest horizon");
  auto oracle = build_oracle(cfg.drift(), cfg.diffusion(), HurstParameter(cfg.hurst), budget, seed, threads);
  info = {{"budget", io::oracle_budget_to_json(budget)},
          {"provenance", to_string(oracle.provenance())},
          {"split_half_sup_diff", oracle.split_half_sup_diff},
          {"noise_variance", oracle.noise_variance},
          {"mass", oracle.mass()},
          {"outside_fraction", oracle.outside_fraction},
          {"gaussian_mean", oracle.gaussian_mean},
          {"gaussian_covariance", oracle.gaussian_covariance}};
  return oracle;
}

void write_oracle_csv(const fs::path& p, const OracleDensity& o) {
  io::CsvWriter w(p);
  std::vector<std::string> cols;
  for (std::size_t i = 0; i < o.dim(); ++i) cols.push_back("x" + std::to_string(i + 1));
  cols.push_back("pi");
  w.header(cols);
  const std::size_t n = o.per_axis();
  for (std::size_t c = 0; c < o.values().size(); ++c) {
    std::size_t rem = c;
    std::vector<double> x(o.dim());
    for (std::size_t i = o.dim(); i-- > 0;) {
      x[i] = o.node(rem % n);
      rem /= n;
    }
    for (double xi : x) w.cell(xi);
    w.cell(o.values()[c]);
    w.end_row();
  }
}

// ---- subcommands ----

int cmd_rates(double hurst, double beta, std::size_t d, double eps, const std::string& variant,
              const std::vector<double>& T_grid) {
  const RateRegime r(parse_rate_variant(variant), HurstParameter(hurst), beta, d, eps);
  const double a = optimal_exponent(r);
  json hs = json::array();
  bool warn = false;
  for (double T : T_grid) {
    const double h = bandwidth(T, a);
    warn = warn || bandwidth_warns(h);
    hs.push_back({{"T", T}, {"h", h}});
  }
  json out{{"variant", variant},
           {"H", hurst},
           {"beta", beta},
           {"d", d},
           {"eps", eps},
           {"a", a},
           {"mse_exponent", theoretical_mse_exponent(r)},
           {"mse_exponent_before_eps", mse_exponent_before_eps(r)},
           {"bandwidths", hs}};
  if (r.hurst() < 0.5) out["alpha_dH"] = alpha_dH(d, HurstParameter(hurst));
  const auto vb = variance_bound_exponents(HurstParameter(hurst), d, eps);
  out["variance_bound"] = {{"T_exponent", vb.basic_T}, {"h_exponent", vb.basic_h}};
  if (vb.has_improved)
    out["variance_bound"]["refined"] = {{"h_inv_hurst", vb.improved_h_inv_hurst},
                                        {"h_dimension", vb.improved_h_dimension},
                                        {"T", vb.improved_T},
                                        {"binding_h", vb.binding_h}};
  if (warn) std::cerr << "warning: some bandwidths are >= 1\n";
  std::cout << out.dump(2) << "\n";
  return exit_ok;
}

int cmd_kernel_check(const Globals& g, std::optional<std::size_t> M_flag, std::optional<std::size_t> nodes_flag) {
  const json raw = load_raw(g);
  const std::size_t M = M_flag.value_or(raw.contains("kernel") ? raw["kernel"].value("M", std::size_t{2}) : 2);
  const std::size_t nodes = nodes_flag.value_or(raw.value("nodes", std::size_t{64}));
  const auto k = legendre_kernel(M);
  json moments = json::array();
  double worst = 0.0;
  for (std::size_t i = 0; i <= M; ++i) {
    const double m = kernel_moment(k, i, std::max(nodes, (k.degree() + i + 2) / 2));
    const double dev = std::abs(m - (i == 0 ? 1.0 : 0.0));
    worst = std::max(worst, dev);
    moments.push_back({{"i", i}, {"moment", m}});
  }
  double sup = 0.0;
  for (int j = 0; j <= 10000; ++j) sup = std::max(sup, std::abs(k(-1.0 + 2.0 * j / 10000.0)));
  const bool pass = worst < 1e-10;
  const json out{{"M", M}, {"moments", moments}, {"max_abs_moment_deviation", worst}, {"sup_abs_K", sup},
                 {"K_at_0", k.peak()}, {"pass", pass}};
  std::cout << out.dump(2) << "\n";
  const auto dir = prepare_out(g);
  write_json(dir / "kernel_check.json", out);
  io::RunManifest m("kernel-check", {{"kernel", {{"family", "legendre"}, {"M", M}}}, {"nodes", nodes}}, 0);
  m.add_output("kernel_check.json");
  m.add_check("moments", pass);
  return finish(m, dir);
}

int cmd_drift_check(const Globals& g, std::size_t pairs, double radius) {
  const json raw = load_raw(g);
  const auto cfg = load_experiment(g, raw, {});
  const auto drift = cfg.drift();
  const auto rep = check_semi_contractive(drift, pairs, radius, derive_seed(cfg.seed, SeedDomain::sampling, {}));
  const bool pass = rep.violations == 0 && rep.lipschitz_violations == 0;
  const json out{{"drift", drift.id},   {"kappa", drift.kappa},          {"R", drift.R},
                 {"lambda", drift.lambda}, {"lip", drift.lip},          {"pairs", pairs},
                 {"violations", rep.violations}, {"lipschitz_violations", rep.lipschitz_violations},
                 {"worst_margin", rep.worst_margin}, {"pass", pass}};
  std::cout << out.dump(2) << "\n";
  const auto dir = prepare_out(g);
  write_json(dir / "drift_check.json", out);
  io::RunManifest m("drift-check", io::config_to_json(cfg), cfg.seed);
  m.add_output("drift_check.json");
  m.add_check("semi_contractive", pass);
  return finish(m, dir);
}

int cmd_simulate(const Globals& g, std::optional<double> T_flag, std::optional<double> dt_flag) {
  const json raw = load_raw(g);
  const auto cfg = load_experiment(g, raw, {});
  const json section = raw.value("simulate", json::object());
  const double horizon = T_flag.value_or(section.value("T", 100.0));
  const double dt = dt_flag.value_or(section.value("dt", 0.01));
  const auto traj = simulate_stationary(cfg.drift(), cfg.diffusion(), HurstParameter(cfg.hurst), horizon, dt,
                                        cfg.resolved_burn_in(), derive_seed(cfg.seed, SeedDomain::experiment, {0, 0}));
  const auto dir = prepare_out(g);
  io::CsvWriter w(dir / "trajectory.csv");
  std::vector<std::string> cols{"t"};
  for (std::size_t i = 0; i < cfg.dim; ++i) cols.push_back("x" + std::to_string(i + 1));
  w.header(cols);
  bool finite = true;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    w.cell(traj.grid.time(k));
    for (double v : traj.state(k)) {
      finite = finite && std::isfinite(v);
      w.cell(v);
    }
    w.end_row();
  }
  auto resolved = io::config_to_json(cfg);
  resolved["simulate"] = {{"T", horizon}, {"dt", dt}};
  io::RunManifest m("simulate", resolved, cfg.seed);
  m.add_output("trajectory.csv");
  m.add_check("finite", finite);
  return finish(m, dir);
}

int cmd_oracle_build(const Globals& g) {
  const json raw = load_raw(g);
  const auto cfg = load_experiment(g, raw, {});
  json info;
  const auto dir = prepare_out(g);
  auto resolved = io::config_to_json(cfg);
  io::RunManifest m("oracle-build", resolved, cfg.seed);
  try {
    const auto oracle = oracle_for(cfg, raw, cfg.seed, cfg.threads, info);
    write_oracle_csv(dir / "oracle.csv", oracle);
    m.add_output("oracle.csv");
    m.add_check("split_half", true);
    m.add_check("mass_within_1pct", std::abs(oracle.mass() - 1.0) < 0.01);
  } catch (const BudgetTooSmall& e) {
    info["error"] = e.what();
    m.add_check("split_half", false);
  }
  write_json(dir / "oracle.json", info);
  m.add_output("oracle.json");
  return finish(m, dir);
}

void write_experiment(const fs::path& dir, const ExperimentConfig& cfg, const ExperimentResult& res, io::RunManifest& m,
                      json summary) {
  io::write_replicate_csv(dir / "replicates.csv", res, cfg.dim);
  io::write_aggregate_csv(dir / "cells.csv", res, cfg.dim);
  summary["slopes"] = io::slopes_to_json(res.slopes);
  summary["config_hash"] = m.config_hash();
  summary["tool_version"] = io::tool_version;
  summary["wall_seconds"] = res.wall_seconds;
  write_json(dir / "summary.json", summary);
  for (const char* f : {"replicates.csv", "cells.csv", "summary.json"}) m.add_output(f);
}

int cmd_mse_rates(const Globals& g, const ExperimentOverrides& o) {
  const json raw = load_raw(g);
  const auto cfg = load_experiment(g, raw, o);
  cfg.validate();
  json oracle_info;
  const auto oracle = oracle_for(cfg, raw, cfg.seed, cfg.threads, oracle_info);
  const auto res = mc_mse(cfg, oracle);
  auto resolved = io::config_to_json(cfg);
  resolved["oracle"] = oracle_info["budget"];
  io::RunManifest m("mse-rates", resolved, cfg.seed);
  json checks = json::object();
  const std::size_t nb = cfg.bandwidths.size(), nq = cfg.query_points.size();
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& bw = cfg.bandwidths[b];
    for (std::size_t q = 0; q < nq; ++q) {
      const auto* s = res.slope("mse", bw.label, q);
      const std::string key = bw.label + "/x" + std::to_string(q);
      if (bw.kind == BandwidthSpec::Kind::rule && s && s->fit) {
        const double target = theoretical_mse_exponent(RateRegime(bw.variant, HurstParameter(cfg.hurst), cfg.beta_assumed, cfg.dim, bw.eps));
        const bool pass = s->fit->slope <= -target + 0.2;
        checks[key + "/slope"] = {{"slope", s->fit->slope}, {"bound", -target + 0.2}, {"pass", pass}};
        m.add_check(key + "/slope", pass);
      }
      std::size_t bumps = 0;
      bool decreasing = true;
      for (std::size_t t = 1; t < cfg.T_grid.size(); ++t) {
        const auto& prev = res.cell(t - 1, b, q, nb, nq);
        const auto& cur = res.cell(t, b, q, nb, nq);
        if (cur.mse >= prev.mse) {
          ++bumps;
          if (cur.mse - prev.mse > std::hypot(cur.mse_stderr, prev.mse_stderr)) decreasing = false;
        }
      }
      decreasing = decreasing && bumps <= 1;
      checks[key + "/decreasing"] = decreasing;
      m.add_check(key + "/decreasing", decreasing);
    }
  }
  write_experiment(prepare_out(g), cfg, res, m, {{"oracle", oracle_info}, {"checks", checks}});
  return finish(m, prepare_out(g));
}

int cmd_variance_scaling(const Globals& g, const ExperimentOverrides& o) {
  const json raw = load_raw(g);
  const auto cfg = load_experiment(g, raw, o);
  const auto res = mc_variance_scaling(cfg);
  io::RunManifest m("variance-scaling", io::config_to_json(cfg), cfg.seed);
  const auto vb = variance_bound_exponents(HurstParameter(cfg.hurst), cfg.dim, 0.01);
  json checks = json::object();
  for (const auto& s : res.slopes) {
    const std::string key = s.bandwidth_label + "/x" + std::to_string(s.query);
    bool pass = false;
    if (s.fit) {
      pass = cfg.hurst < 0.5 ? (s.fit->slope >= -1.25 && s.fit->slope <= -0.75)
                             : (s.fit->slope >= -1.0 && std::abs(s.fit->slope - (2.0 * cfg.hurst - 2.0)) <= 0.25);
    }
    checks[key] = {{"slope", s.fit ? json(s.fit->slope) : json(nullptr)}, {"bound_exponent", vb.basic_T}, {"pass", pass}};
    m.add_check(key, pass);
  }
  write_experiment(prepare_out(g), cfg, res, m, {{"checks", checks}});
  return finish(m, prepare_out(g));
}

int cmd_variance_h(const Globals& g, const ExperimentOverrides& o) {
  const json raw = load_raw(g);
  const auto cfg = load_experiment(g, raw, o);
  const auto hs = variance_h_scaling(cfg);
  const auto dir = prepare_out(g);
  io::CsvWriter w(dir / "variance_h.csv");
  std::vector<std::string> cols{"T", "h"};
  for (std::size_t i = 0; i < cfg.dim; ++i) cols.push_back("x" + std::to_string(i + 1));
  cols.insert(cols.end(), {"variance", "scaled_variance"});
  w.header(cols);
  for (std::size_t q = 0; q < hs.rows.size(); ++q)
    for (const auto& r : hs.rows[q]) {
      w.cell(cfg.T_grid[0]).cell(r.h);
      for (double xi : cfg.query_points[q]) w.cell(xi);
      w.cell(r.variance).cell(r.scaled);
      w.end_row();
    }
  io::RunManifest m("variance-h", io::config_to_json(cfg), cfg.seed);
  const json summary{{"predicted_binding_exponent", hs.predicted_binding_exponent},
                     {"T_term", hs.T_term},
                     {"degenerate", hs.degenerate},
                     {"slopes", io::slopes_to_json(hs.slopes)},
                     {"config_hash", m.config_hash()}};
  write_json(dir / "summary.json", summary);
  m.add_output("variance_h.csv");
  m.add_output("summary.json");
  m.add_check("h_grid_not_degenerate", !hs.degenerate);
  return finish(m, dir);
}

int cmd_control_ode(const Globals& g, std::vector<double> rho0, std::optional<double> amp_flag,
                    std::optional<std::size_t> steps_flag) {
  const json raw = load_raw(g);
  const auto cfg = load_experiment(g, raw, {});
  const json section = raw.value("control_ode", json::object());
  if (rho0.empty() && section.contains("rho0")) rho0 = section["rho0"].get<std::vector<double>>();
  const double amplitude = amp_flag.value_or(section.value("amplitude", 0.1));
  const std::size_t steps = steps_flag.value_or(section.value("steps", std::size_t{10000}));
  if (rho0.empty()) rho0.assign(cfg.dim, 1.0);
  ControlOdeRun run;
  run.drift = cfg.drift();
  run.background = [](double, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  run.perturbation_rate = [amplitude](double t, std::span<double> out) {
    for (auto& v : out) v = amplitude * 2.0 * std::numbers::pi * std::cos(2.0 * std::numbers::pi * t);
  };
  run.rho0 = rho0;
  run.steps = steps;
  const auto dir = prepare_out(g);
  auto resolved = io::config_to_json(cfg);
  resolved["control_ode"] = {{"rho0", rho0}, {"amplitude", amplitude}, {"steps", steps}};
  io::RunManifest m("control-ode", resolved, cfg.seed);
  json verdict;
  try {
    const auto res = control_ode_run(run);
    io::CsvWriter w(dir / "control_ode.csv");
    w.header({"t", "rho_norm", "phi_norm"});
    for (std::size_t k = 0; k < res.times.size(); ++k) {
      w.cell(res.times[k]).cell(res.rho_norm[k]).cell(res.phi_norm[k]);
      w.end_row();
    }
    m.add_output("control_ode.csv");
    verdict = {{"rho_final", res.rho_final}, {"sup_phi", res.sup_phi}, {"sup_phi_dot", res.sup_phi_dot},
               {"varpi", res.varpi}, {"envelope_violations", res.envelope_violations}, {"converged", true}};
    m.add_check("terminal", true);
    m.add_check("envelope", res.envelope_violations == 0);
  } catch (const Nonconvergence& e) {
    verdict = {{"converged", false}, {"error", e.what()}};
    m.add_check("terminal", false);
  }
  std::cout << verdict.dump(2) << "\n";
  write_json(dir / "control_ode.json", verdict);
  m.add_output("control_ode.json");
  return finish(m, dir);
}

void add_experiment_flags(CLI::App* sub, ExperimentOverrides& o) {
  sub->add_option("--H", o.hurst, "Hurst index override");
  sub->add_option("--replicates", o.replicates, "replicates per horizon");
  sub->add_option("--M", o.kernel_order, "kernel order");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"fbmkde: kernel density estimation for fractional SDEs"};
  app.require_subcommand(1);
  app.fallthrough(); // global flags may follow the subcommand
  Globals g;
  app.add_option("--config", g.config, "JSON config or a previous run's manifest.json")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "base seed (overrides config)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads (default: FBMKDE_THREADS or hardware)");

  double rH = 0.25, rbeta = 2.0, reps = 0.01;
  std::size_t rd = 1;
  std::string rvariant = "basic";
  std::vector<double> rT{64, 128, 256, 512, 1024, 2048};
  auto* rates = app.add_subcommand("rates", "bandwidth and rate exponents");
  rates->add_option("--H", rH)->required();
  rates->add_option("--beta", rbeta);
  rates->add_option("--d", rd);
  rates->add_option("--eps", reps);
  rates->add_option("--variant", rvariant)->check(CLI::IsMember({"basic", "improved"}));
  rates->add_option("--T", rT, "horizons for h(T)");

  std::optional<std::size_t> kM, knodes;
  auto* kcheck = app.add_subcommand("kernel-check", "moment conditions of a Legendre kernel");
  kcheck->add_option("--M", kM);
  kcheck->add_option("--nodes", knodes);

  std::size_t dpairs = 100000;
  double dradius = 3.0;
  auto* dcheck = app.add_subcommand("drift-check", "sample the semi-contractivity condition");
  dcheck->add_option("--pairs", dpairs);
  dcheck->add_option("--radius", dradius);

  std::optional<double> sT, sdt;
  auto* sim = app.add_subcommand("simulate", "one stationary trajectory to CSV");
  sim->add_option("--T", sT);
  sim->add_option("--dt", sdt);

  auto* oracle = app.add_subcommand("oracle-build", "long-run empirical density oracle");

  ExperimentOverrides mse_o, var_o, vh_o;
  auto* mse = app.add_subcommand("mse-rates", "Monte Carlo MSE against the oracle over T_grid");
  add_experiment_flags(mse, mse_o);
  auto* var = app.add_subcommand("variance-scaling", "replicate variance over T_grid");
  add_experiment_flags(var, var_o);
  var->add_option("--bandwidth", var_o.fixed_h, "fixed bandwidth");
  auto* vh = app.add_subcommand("variance-h", "scaled variance over h_grid at the first T");
  add_experiment_flags(vh, vh_o);

  std::vector<double> crho;
  std::optional<double> camp;
  std::optional<std::size_t> csteps;
  auto* code = app.add_subcommand("control-ode", "finite-time control ODE");
  code->add_option("--rho0", crho);
  code->add_option("--amplitude", camp, "perturbation amplitude a in a*sin(2 pi t)");
  code->add_option("--steps", csteps);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (*rates) return cmd_rates(rH, rbeta, rd, reps, rvariant, rT);
    if (*kcheck) return cmd_kernel_check(g, kM, knodes);
    if (*dcheck) return cmd_drift_check(g, dpairs, dradius);
    if (*sim) return cmd_simulate(g, sT, sdt);
    if (*oracle) return cmd_oracle_build(g);
    if (*mse) return cmd_mse_rates(g, mse_o);
    if (*var) return cmd_variance_scaling(g, var_o);
    if (*vh) return cmd_variance_h(g, vh_o);
    if (*code) return cmd_control_ode(g, crho, camp, csteps);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_usage;
  } catch (const InvalidRegime& e) {
    std::cerr << "invalid regime: " << e.what() << "\n";
    return exit_usage;
  } catch (const UnknownDrift& e) {
    std::cerr << e.what() << "\n";
    return exit_usage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_check_failed;
  }
  return exit_usage;
}
