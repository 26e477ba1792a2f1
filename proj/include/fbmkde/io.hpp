#pragma once

// Experiment configuration as JSON, CSV output and run manifests.

#include "fbmkde/error.hpp"
#include "fbmkde/harness.hpp"
#include "fbmkde/sde.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace fbmkde::io {

using json = nlohmann::json;

inline constexpr const char* tool_version = "0.1.0";

//! 17 significant digits: enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return {buf, res.ptr};
}

class CsvWriter {
public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open " + path.string() + " for writing");
  }
  CsvWriter& header(const std::vector<std::string>& cols) {
    for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
    out_ << '\n';
    return *this;
  }
  CsvWriter& cell(double v) { return raw(format_double(v)); }
  CsvWriter& cell(std::size_t v) { return raw(std::to_string(v)); }
  CsvWriter& cell(const std::string& s) { return raw(s); }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }

private:
  CsvWriter& raw(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }
  std::ofstream out_;
  bool first_ = true;
};

//! 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    auto j = json::parse(in);
    // a manifest embeds the resolved config it ran with
    if (j.contains("manifest_version") && j.contains("config")) return j.at("config");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

inline json bandwidth_to_json(const BandwidthSpec& b) {
  switch (b.kind) {
  case BandwidthSpec::Kind::fixed:
    return {{"fixed", b.values.at(0)}, {"label", b.label}};
  case BandwidthSpec::Kind::explicit_list:
    return {{"explicit", b.values}, {"label", b.label}};
  case BandwidthSpec::Kind::rule:
  default:
    return {{"rule", to_string(b.variant)}, {"eps", b.eps}, {"label", b.label}};
  }
}

inline BandwidthSpec bandwidth_from_json(const json& j) {
  BandwidthSpec b;
  if (j.contains("fixed")) {
    b = BandwidthSpec::fixed(j.at("fixed").get<double>());
  } else if (j.contains("explicit")) {
    b = BandwidthSpec::explicit_list(j.at("explicit").get<std::vector<double>>());
  } else if (j.contains("rule")) {
    b = BandwidthSpec::rule(parse_rate_variant(j.at("rule").get<std::string>()), j.value("eps", 0.01));
  } else {
    throw ConfigError("bandwidth entry needs one of rule, fixed, explicit");
  }
  if (j.contains("label")) b.label = j.at("label").get<std::string>();
  return b;
}

inline json config_to_json(const ExperimentConfig& c) {
  json bws = json::array();
  for (const auto& b : c.bandwidths) bws.push_back(bandwidth_to_json(b));
  return {
      {"drift", {{"name", c.drift_name}, {"params", c.drift_params}}},
      {"sigma", c.sigma},
      {"hurst", c.hurst},
      {"beta_assumed", c.beta_assumed},
      {"dim", c.dim},
      {"kernel", {{"family", "legendre"}, {"M", c.kernel_order}}},
      {"T_grid", c.T_grid},
      {"replicates", c.replicates},
      {"query_points", c.query_points},
      {"bandwidths", bws},
      {"h_grid", c.h_grid},
      {"dt", {{"max", c.dt_max}, {"h_fraction", c.dt_h_fraction}}},
      {"burn_in", c.resolved_burn_in()},
      {"seed", c.seed},
      {"identical_replicate_seeds", c.identical_replicate_seeds},
  };
}

/// Missing keys keep their defaults. Thread count is deliberately not part
/// of the config since results do not depend on it.
inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("drift")) {
      const auto& d = j.at("drift");
      c.drift_name = d.value("name", c.drift_name);
      if (d.contains("params")) c.drift_params = d.at("params").get<std::map<std::string, double>>();
    }
    c.sigma = j.value("sigma", c.sigma);
    c.hurst = j.value("hurst", c.hurst);
    c.beta_assumed = j.value("beta_assumed", c.beta_assumed);
    c.dim = j.value("dim", c.dim);
    if (j.contains("kernel")) {
      const auto& k = j.at("kernel");
      if (k.value("family", std::string("legendre")) != "legendre") throw ConfigError("only the legendre kernel family exists");
      c.kernel_order = k.value("M", c.kernel_order);
    }
    if (j.contains("T_grid")) c.T_grid = j.at("T_grid").get<std::vector<double>>();
    c.replicates = j.value("replicates", c.replicates);
    if (j.contains("query_points")) c.query_points = j.at("query_points").get<std::vector<std::vector<double>>>();
    if (j.contains("bandwidths")) {
      c.bandwidths.clear();
      for (const auto& b : j.at("bandwidths")) c.bandwidths.push_back(bandwidth_from_json(b));
    }
    if (j.contains("h_grid")) c.h_grid = j.at("h_grid").get<std::vector<double>>();
    if (j.contains("dt")) {
      c.dt_max = j.at("dt").value("max", c.dt_max);
      c.dt_h_fraction = j.at("dt").value("h_fraction", c.dt_h_fraction);
    }
    c.burn_in = j.value("burn_in", c.burn_in);
    c.seed = j.value("seed", c.seed);
    c.identical_replicate_seeds = j.value("identical_replicate_seeds", false);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

inline json oracle_budget_to_json(const OracleBudget& b) {
  return {{"horizon", b.horizon},           {"dt", b.dt},     {"replicates", b.replicates},
          {"bandwidth", b.bandwidth},       {"M", b.kernel_order}, {"box", b.box},
          {"grid_spacing", b.grid_spacing}, {"burn_in", b.burn_in}, {"split_half_tolerance", b.split_half_tolerance}};
}

inline OracleBudget oracle_budget_from_json(const json& j, OracleBudget b = {}) {
  b.horizon = j.value("horizon", b.horizon);
  b.dt = j.value("dt", b.dt);
  b.replicates = j.value("replicates", b.replicates);
  b.bandwidth = j.value("bandwidth", b.bandwidth);
  b.kernel_order = j.value("M", b.kernel_order);
  b.box = j.value("box", b.box);
  b.grid_spacing = j.value("grid_spacing", b.grid_spacing);
  b.burn_in = j.value("burn_in", b.burn_in);
  b.split_half_tolerance = j.value("split_half_tolerance", b.split_half_tolerance);
  return b;
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class RunManifest {
public:
  RunManifest(std::string subcommand, json config, Seed seed)
      : subcommand_(std::move(subcommand)), config_(std::move(config)), seed_(seed), start_(utc_now()) {}

  void add_output(const std::filesystem::path& p) { outputs_.push_back(p.filename().string()); }
  void add_check(const std::string& name, bool pass) { checks_[name] = pass; }
  bool all_pass() const {
    for (const auto& [_, v] : checks_.items())
      if (!v.get<bool>()) return false;
    return true;
  }
  std::string config_hash() const { return fnv1a_hex(config_.dump()); }

  void write(const std::filesystem::path& dir) const {
    const json j{{"manifest_version", 1},
                 {"subcommand", subcommand_},
                 {"tool_version", tool_version},
                 {"config", config_},
                 {"config_hash", config_hash()},
                 {"seed", seed_},
                 {"seed_domains", {{"experiment", "experiment"}, {"oracle", "oracle"}, {"disjoint", true}}},
                 {"start", start_},
                 {"end", utc_now()},
                 {"outputs", outputs_},
                 {"checks", checks_}};
    write_text_atomic(dir / "manifest.json", j.dump(2) + "\n");
  }

private:
  std::string subcommand_;
  json config_;
  Seed seed_;
  std::string start_;
  std::vector<std::string> outputs_;
  json checks_ = json::object();
};

//! Long table (T, h, bandwidth, x..., replicate, pi_hat) in cell order.
inline void write_replicate_csv(const std::filesystem::path& path, const ExperimentResult& res, std::size_t dim) {
  CsvWriter w(path);
  std::vector<std::string> cols{"T", "h", "bandwidth"};
  for (std::size_t i = 0; i < dim; ++i) cols.push_back("x" + std::to_string(i + 1));
  cols.insert(cols.end(), {"replicate", "pi_hat"});
  w.header(cols);
  for (const auto& c : res.cells) {
    for (std::size_t r = 0; r < c.values.size(); ++r) {
      w.cell(c.T).cell(c.h).cell(c.bandwidth_label);
      for (double xi : res.query_points[c.query]) w.cell(xi);
      w.cell(r).cell(c.values[r]);
      w.end_row();
    }
  }
}

inline void write_aggregate_csv(const std::filesystem::path& path, const ExperimentResult& res, std::size_t dim) {
  CsvWriter w(path);
  std::vector<std::string> cols{"T", "h", "dt", "bandwidth"};
  for (std::size_t i = 0; i < dim; ++i) cols.push_back("x" + std::to_string(i + 1));
  cols.insert(cols.end(), {"mean", "variance", "variance_se", "oracle", "bias", "mse", "mse_se", "failed"});
  w.header(cols);
  for (const auto& c : res.cells) {
    w.cell(c.T).cell(c.h).cell(c.dt).cell(c.bandwidth_label);
    for (double xi : res.query_points[c.query]) w.cell(xi);
    w.cell(c.mean).cell(c.variance).cell(c.variance_stderr).cell(c.oracle_value).cell(c.bias_estimate).cell(c.mse).cell(c.mse_stderr);
    w.cell(std::string(c.failed ? "1" : "0"));
    w.end_row();
  }
}

inline json slopes_to_json(const std::vector<SlopeRecord>& slopes) {
  json arr = json::array();
  for (const auto& s : slopes) {
    json e{{"quantity", s.quantity}, {"bandwidth", s.bandwidth_label}, {"query", s.query}};
    if (s.fit) {
      e["slope"] = s.fit->slope;
      e["stderr"] = s.fit->stderr_slope;
      e["r2"] = s.fit->r2;
    } else {
      e["error"] = s.error;
    }
    arr.push_back(e);
  }
  return arr;
}

} // namespace fbmkde::io
