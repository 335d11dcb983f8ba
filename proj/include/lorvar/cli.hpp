#ifndef LORVAR_CLI_HPP
#define LORVAR_CLI_HPP

// Run configuration in the line format `section.key = value`, its echo, and
// command dispatch with atomic artifact output.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lorvar/core/error.hpp"
#include "lorvar/core/io.hpp"
#include "lorvar/experiments.hpp"
#include "lorvar/lorenzode.hpp"
#include "lorvar/onedmap.hpp"
#include "lorvar/skewmap.hpp"
#include "lorvar/suspension.hpp"

namespace lorvar::cli {

using skewmap::SkewProduct;
using suspension::SuspensionFlow;

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"ulam",  "map-variance", "flow-variance",  "ode-returns",
                                          "sweep", "modulus",      "relation-check", "report"};
  return c;
}

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::string out = "lorvar-out";
  std::string format = "csv";

  std::string family = "geometric";  // or doubling
  double eps = 0.0;
  std::size_t ulam_cells = 1024;
  experiments::ModelParams model;

  std::string observable = "x";
  std::optional<double> expected;

  experiments::Budget budget;

  std::vector<double> eps_grid{0.04, 0.02, 0.01, 0.005, 0.0};
  std::vector<std::string> sweep_observables{"x"};
  std::string tier = "geometric";
  bool mc_oracle = true;
  bool repeat_zero = true;

  std::vector<double> modulus_scales{0.1, 0.05, 0.025, 0.0125};
  bool modulus_crosscheck = true;

  double ode_eps = 0.0;
  std::size_t n_returns = 100000;
  double ode_tol = 1e-10;
  std::size_t ode_bins = 512;
  double ode_transient = 50.0;

  std::vector<double> truncation_levels{3, 4, 5, 6, 7, 8, 9, 10};

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(d)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return d;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t u = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), u);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return u;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(parse_double(key, s));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline std::string show(bool b) { return b ? "true" : "false"; }

inline std::string show(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + io::format_double(v[i]);
  return s;
}

inline std::string show(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
  return s;
}

inline std::string show(const std::optional<double>& v) { return v ? io::format_double(*v) : "none"; }

inline std::optional<double> parse_optional(const std::string& key, const std::string& v) {
  if (v == "none") return std::nullopt;
  return parse_double(key, v);
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

inline const std::vector<Key>& keys() {
  using C = RunConfig;
  using S = const std::string&;
  auto fmt = [](double d) { return io::format_double(d); };
  auto num = [](std::size_t n) { return std::to_string(n); };
  auto size = [](S k, S v) { return static_cast<std::size_t>(parse_u64(k, v)); };
  static const std::vector<Key> k{
      {"run.command", [](const C& c) { return c.command.empty() ? std::string("none") : c.command; },
       [](C& c, S v) { c.command = v == "none" ? "" : v; }},
      {"run.seed", [](const C& c) { return std::to_string(c.seed); }, [](C& c, S v) { c.seed = parse_u64("run.seed", v); }},
      {"run.out", [](const C& c) { return c.out; }, [](C& c, S v) { c.out = v; }},
      {"run.format", [](const C& c) { return c.format; }, [](C& c, S v) { c.format = v; }},
      {"onedmap.family", [](const C& c) { return c.family; }, [](C& c, S v) { c.family = v; }},
      {"onedmap.gamma", [=](const C& c) { return fmt(c.model.gamma0); },
       [](C& c, S v) { c.model.gamma0 = parse_double("onedmap.gamma", v); }},
      {"onedmap.eps", [=](const C& c) { return fmt(c.eps); }, [](C& c, S v) { c.eps = parse_double("onedmap.eps", v); }},
      {"ulam.cells", [=](const C& c) { return num(c.ulam_cells); }, [=](C& c, S v) { c.ulam_cells = size("ulam.cells", v); }},
      {"skewmap.rho", [=](const C& c) { return fmt(c.model.rho); },
       [](C& c, S v) { c.model.rho = parse_double("skewmap.rho", v); }},
      {"skewmap.offset", [=](const C& c) { return fmt(c.model.offset); },
       [](C& c, S v) { c.model.offset = parse_double("skewmap.offset", v); }},
      {"roof.tau2", [=](const C& c) { return fmt(c.model.tau2); },
       [](C& c, S v) { c.model.tau2 = parse_double("roof.tau2", v); }},
      {"roof.constant", [](const C& c) { return show(c.model.constant_roof); },
       [](C& c, S v) { c.model.constant_roof = parse_optional("roof.constant", v); }},
      {"observable.name", [](const C& c) { return c.observable; }, [](C& c, S v) { c.observable = v; }},
      {"observable.expected", [](const C& c) { return show(c.expected); },
       [](C& c, S v) { c.expected = parse_optional("observable.expected", v); }},
      {"budget.samples", [=](const C& c) { return num(c.budget.samples); },
       [=](C& c, S v) { c.budget.samples = size("budget.samples", v); }},
      {"budget.burn_in", [=](const C& c) { return num(c.budget.burn_in); },
       [=](C& c, S v) { c.budget.burn_in = size("budget.burn_in", v); }},
      {"budget.block_time", [=](const C& c) { return fmt(c.budget.block_time); },
       [](C& c, S v) { c.budget.block_time = parse_double("budget.block_time", v); }},
      {"budget.blocks", [=](const C& c) { return num(c.budget.blocks); },
       [=](C& c, S v) { c.budget.blocks = size("budget.blocks", v); }},
      {"budget.map_block", [=](const C& c) { return num(c.budget.map_block); },
       [=](C& c, S v) { c.budget.map_block = size("budget.map_block", v); }},
      {"budget.map_reps", [=](const C& c) { return num(c.budget.map_reps); },
       [=](C& c, S v) { c.budget.map_reps = size("budget.map_reps", v); }},
      {"budget.ode_block_time", [=](const C& c) { return fmt(c.budget.ode_block_time); },
       [](C& c, S v) { c.budget.ode_block_time = parse_double("budget.ode_block_time", v); }},
      {"budget.ode_blocks", [=](const C& c) { return num(c.budget.ode_blocks); },
       [=](C& c, S v) { c.budget.ode_blocks = size("budget.ode_blocks", v); }},
      {"budget.ode_tol", [=](const C& c) { return fmt(c.budget.ode_tol); },
       [](C& c, S v) { c.budget.ode_tol = parse_double("budget.ode_tol", v); }},
      {"sweep.eps_grid", [](const C& c) { return show(c.eps_grid); },
       [](C& c, S v) { c.eps_grid = parse_doubles("sweep.eps_grid", v); }},
      {"sweep.observables", [](const C& c) { return show(c.sweep_observables); },
       [](C& c, S v) { c.sweep_observables = split_list(v); }},
      {"sweep.tier", [](const C& c) { return c.tier; }, [](C& c, S v) { c.tier = v; }},
      {"sweep.mc_oracle", [](const C& c) { return show(c.mc_oracle); },
       [](C& c, S v) { c.mc_oracle = parse_bool("sweep.mc_oracle", v); }},
      {"sweep.repeat_zero", [](const C& c) { return show(c.repeat_zero); },
       [](C& c, S v) { c.repeat_zero = parse_bool("sweep.repeat_zero", v); }},
      {"modulus.scales", [](const C& c) { return show(c.modulus_scales); },
       [](C& c, S v) { c.modulus_scales = parse_doubles("modulus.scales", v); }},
      {"modulus.crosscheck", [](const C& c) { return show(c.modulus_crosscheck); },
       [](C& c, S v) { c.modulus_crosscheck = parse_bool("modulus.crosscheck", v); }},
      {"ode.eps", [=](const C& c) { return fmt(c.ode_eps); }, [](C& c, S v) { c.ode_eps = parse_double("ode.eps", v); }},
      {"ode.n_returns", [=](const C& c) { return num(c.n_returns); },
       [=](C& c, S v) { c.n_returns = size("ode.n_returns", v); }},
      {"ode.tol", [=](const C& c) { return fmt(c.ode_tol); }, [](C& c, S v) { c.ode_tol = parse_double("ode.tol", v); }},
      {"ode.bins", [=](const C& c) { return num(c.ode_bins); }, [=](C& c, S v) { c.ode_bins = size("ode.bins", v); }},
      {"ode.transient", [=](const C& c) { return fmt(c.ode_transient); },
       [](C& c, S v) { c.ode_transient = parse_double("ode.transient", v); }},
      {"truncation.levels", [](const C& c) { return show(c.truncation_levels); },
       [](C& c, S v) { c.truncation_levels = parse_doubles("truncation.levels", v); }},
  };
  return k;
}

inline const Key& find_key(const std::string& name) {
  for (const auto& k : keys()) {
    if (k.name == name) return k;
  }
  throw ConfigError("unknown key '" + name + "'");
}

inline std::string invariant(const std::string& key, const std::string& what) { return key + ": " + what; }

}  // namespace detail

/// Sets one key from its text value (no validation).
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  detail::find_key(key).set(c, value);
}

/// `key=value` override as given on the command line.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  set_key(c, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

/// Checks every parameter against the invariant of the module that consumes it.
inline void validate(const RunConfig& c) {
  using detail::invariant;
  if (!c.command.empty() && std::find(commands().begin(), commands().end(), c.command) == commands().end()) {
    throw ConfigError(invariant("run.command", "unknown command '" + c.command + "'"));
  }
  if (c.format != "csv" && c.format != "json") throw ConfigError(invariant("run.format", "must be csv or json"));
  if (c.out.empty()) throw ConfigError(invariant("run.out", "must not be empty"));
  if (c.family != "geometric" && c.family != "doubling") {
    throw ConfigError(invariant("onedmap.family", "must be geometric or doubling"));
  }
  if (!(c.model.gamma0 > 0.55 && c.model.gamma0 < 1.0)) {
    throw ConfigError(invariant("onedmap.gamma", "expansion invariant requires gamma in (0.55, 1)"));
  }
  if (!(c.eps >= 0.0)) throw ConfigError(invariant("onedmap.eps", "must be >= 0"));
  std::vector<double> all_eps{c.eps};
  all_eps.insert(all_eps.end(), c.eps_grid.begin(), c.eps_grid.end());
  for (double e : all_eps) {
    try {
      onedmap::MapFamily::geometric(e, c.model.gamma0);
    } catch (const ModelViolation& m) {
      throw ConfigError(invariant("onedmap.gamma + eps = " + io::format_double(c.model.gamma0 + e), m.what()));
    }
  }
  try {
    SkewProduct(onedmap::MapFamily::geometric(0.0, c.model.gamma0), c.model.rho, c.model.offset);
  } catch (const ModelViolation& m) {
    throw ConfigError(invariant("skewmap.rho/skewmap.offset", m.what()));
  }
  if (!(c.model.tau2 > 0.0)) throw ConfigError(invariant("roof.tau2", "must be positive"));
  if (c.model.constant_roof && !(*c.model.constant_roof > 0.0)) {
    throw ConfigError(invariant("roof.constant", "must be positive or none"));
  }
  if (c.ulam_cells < 2) throw ConfigError(invariant("ulam.cells", "need at least 2 cells"));
  const auto& b = c.budget;
  if (b.samples < 1000) throw ConfigError(invariant("budget.samples", "need at least 1000 samples"));
  if (!(b.block_time > 0.0)) throw ConfigError(invariant("budget.block_time", "must be positive"));
  if (b.blocks < 8) throw ConfigError(invariant("budget.blocks", "need at least 8 blocks"));
  if (b.map_block < 1) throw ConfigError(invariant("budget.map_block", "must be positive"));
  if (b.map_reps < 8) throw ConfigError(invariant("budget.map_reps", "need at least 8 replicas"));
  if (!(b.ode_block_time > 0.0)) throw ConfigError(invariant("budget.ode_block_time", "must be positive"));
  if (b.ode_blocks < 8) throw ConfigError(invariant("budget.ode_blocks", "need at least 8 blocks"));
  if (!(b.ode_tol >= 1e-12 && b.ode_tol <= 1e-6)) throw ConfigError(invariant("budget.ode_tol", "must lie in [1e-12, 1e-6]"));

  experiments::SweepConfig sc;
  sc.eps_grid = c.eps_grid;
  sc.observables = c.sweep_observables;
  try {
    sc.validate();
    experiments::parse_tier(c.tier);
    for (const auto& o : c.sweep_observables) suspension::observable_by_name(o);
  } catch (const DomainError& e) {
    throw ConfigError(invariant("sweep", e.what()));
  }
  if (c.tier == "ode" && c.eps_grid.front() > 1.0) throw ConfigError(invariant("sweep.eps_grid", "ODE tier needs eps <= 1"));
  static const std::set<std::string> names{"x", "z", "cos_z", "cos2pix", "mixed", "coboundary"};
  if (!names.count(c.observable)) {
    throw ConfigError(invariant("observable.name", "expected x, z, cos_z, cos2pix, mixed or coboundary"));
  }
  if (c.modulus_scales.size() < 4) throw ConfigError(invariant("modulus.scales", "need at least 4 scales"));
  for (double s : c.modulus_scales) {
    if (!(s > 0.0)) throw ConfigError(invariant("modulus.scales", "scales must be positive"));
  }
  if (!(c.ode_eps >= 0.0 && c.ode_eps <= 1.0)) throw ConfigError(invariant("ode.eps", "must lie in [0, 1]"));
  if (c.n_returns < 1) throw ConfigError(invariant("ode.n_returns", "must be positive"));
  if (!(c.ode_tol >= 1e-12 && c.ode_tol <= 1e-6)) throw ConfigError(invariant("ode.tol", "must lie in [1e-12, 1e-6]"));
  if (c.ode_bins < 8) throw ConfigError(invariant("ode.bins", "need at least 8 bins"));
  if (!(c.ode_transient >= 0.0)) throw ConfigError(invariant("ode.transient", "must be >= 0"));
  for (double n : c.truncation_levels) {
    if (!(n > c.model.tau2)) throw ConfigError(invariant("truncation.levels", "levels must exceed roof.tau2"));
  }
}

/// Parses a document of `section.key = value` lines.  Text after '#' is a
/// comment.  Unknown and repeated keys are errors.  The result is validated.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'section.key = value'");
    }
    const auto key = detail::trim(t.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    set_key(base, key, detail::trim(t.substr(eq + 1)));
  }
  validate(base);
  return base;
}

/// Every key with its effective value, plus derived quantities as comments.
inline std::string echo(const RunConfig& c) {
  std::string out = "# effective configuration\n";
  for (const auto& k : detail::keys()) out += k.name + " = " + k.get(c) + "\n";
  const auto lf = suspension::LinearizedLocalFlow::lorenz(c.eps);
  out += "# derived: flow.lambda1 = " + io::format_double(lf.lambda1) + "\n";
  out += "# derived: flow.lambda2 = " + io::format_double(lf.lambda2) + "\n";
  out += "# derived: flow.lambda3 = " + io::format_double(lf.lambda3) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch.

namespace detail {

class Output {
 public:
  Output(const RunConfig& c) : dir_(c.out), json_(c.format == "json") {}

  void text(const std::string& name, const std::string& content) const { io::write_atomic(dir_ / name, content); }
  void table(const std::string& stem, const io::Table& t) const {
    json_ ? text(stem + ".json", t.to_json()) : text(stem + ".csv", t.to_csv());
  }
  const std::filesystem::path& dir() const noexcept { return dir_; }
  bool json() const noexcept { return json_; }

 private:
  std::filesystem::path dir_;
  bool json_;
};

inline onedmap::MapFamily base_family(const RunConfig& c) {
  return c.family == "doubling" ? onedmap::MapFamily::doubling() : onedmap::MapFamily::geometric(c.eps, c.model.gamma0);
}

inline SuspensionFlow flow_of(const RunConfig& c) {
  if (c.family == "doubling") throw ConfigError("onedmap.family: flow commands need the geometric family");
  return experiments::make_flow(c.model, c.eps);
}

inline experiments::Verdict run_ulam(const RunConfig& c, const Output& out) {
  const auto T = base_family(c);
  const onedmap::Partition part(onedmap::MapFamily::kDomain, c.ulam_cells);
  const auto op = onedmap::build_ulam(T, part);
  double row_error = 0.0;
  for (std::size_t i = 0; i < op.size(); ++i) row_error = std::max(row_error, std::abs(op.row_sum(i) - 1.0));
  const auto h = onedmap::invariant_density(op);
  const double min_w = *std::min_element(h.weights.begin(), h.weights.end());
  const bool ok = row_error <= 1e-12 && std::abs(h.integral() - 1.0) <= 1e-10 && min_w >= 0.0;
  const auto v = ok ? experiments::Verdict::Pass : experiments::Verdict::Fail;
  io::JsonObject o;
  o.add("family", c.family)
      .add("eps", c.eps)
      .add("cells", static_cast<std::uint64_t>(c.ulam_cells))
      .add("max_row_sum_error", row_error)
      .add("mass", h.integral())
      .add("min_density", min_w)
      .add("sup_density", h.sup())
      .add("verdict", experiments::to_string(v));
  out.table("density", onedmap::density_table(h));
  out.text("ulam.json", o.str());
  return v;
}

inline experiments::Verdict run_map_variance(const RunConfig& c, const Output& out) {
  const auto T = base_family(c);
  const SkewProduct F(T, c.model.rho, c.model.offset);
  const auto flow =
      SuspensionFlow(F, suspension::LinearizedLocalFlow::lorenz(c.eps), c.model.tau2, c.model.constant_roof);
  const auto r = experiments::map_variance_check(F, experiments::map_observable_by_name(c.observable, flow),
                                                 c.observable, c.budget, c.seed, c.expected);
  out.text("map_variance.json", r.to_json().str());
  return r.verdict;
}

inline experiments::Verdict run_flow_variance(const RunConfig& c, const Output& out) {
  const auto flow = flow_of(c);
  const auto obs = suspension::observable_by_name(c.observable);
  const auto e = skewmap::sample_srb(flow.map(), c.budget.samples, c.budget.burn_in, c.seed);
  const auto r = suspension::flow_variance(flow, obs, e);
  out.text("flow_variance.json", r.to_json().str());
  auto v = experiments::Verdict::Pass;
  io::JsonObject checks;
  checks.add("observable", c.observable).add("roof_unstable", r.roof_unstable).add("tail_unbounded", r.map.tail_unbounded);
  if (!flow.constant_roof()) {
    const auto t = experiments::truncation_check(flow, obs, e, c.truncation_levels);
    out.table("truncation", t.curve.table());
    checks.add("truncation_slope", t.curve.fit.slope).add("truncation_r2", t.curve.fit.r2);
    v = t.verdict;
  }
  if (r.roof_unstable || r.map.tail_unbounded) v = experiments::worst(v, experiments::Verdict::Inconclusive);
  checks.add("verdict", experiments::to_string(v));
  out.text("flow_checks.json", checks.str());
  return v;
}

inline experiments::Verdict run_ode_returns(const RunConfig& c, const Output& out) {
  const auto p = lorenzode::OdeParams::from_eps(c.ode_eps);
  lorenzode::SectionOptions opt;
  opt.tol = c.ode_tol;
  opt.transient = c.ode_transient;
  const auto crossings = lorenzode::section_returns(p, c.n_returns, c.seed, opt);
  out.table("crossings", lorenzode::crossings_table(crossings));
  const auto r = experiments::ode_check(crossings, p, c.ode_bins, std::min<std::size_t>(c.n_returns, 100000));
  if (!r.quotient.bin_center.empty()) out.table("quotient", r.quotient.table());
  out.text("ode.json", r.to_json().str());
  return r.verdict;
}

inline experiments::Verdict run_sweep(const RunConfig& c, const Output& out) {
  experiments::SweepConfig sc;
  sc.eps_grid = c.eps_grid;
  sc.observables = c.sweep_observables;
  sc.seed = c.seed;
  sc.budget = c.budget;
  sc.model = c.model;
  sc.mc_oracle = c.mc_oracle;
  sc.repeat_zero = c.repeat_zero;
  const auto r = experiments::continuity_sweep(sc, experiments::parse_tier(c.tier));
  r.write(out.dir(), out.json());
  return r.verdict;
}

inline experiments::Verdict run_modulus(const RunConfig& c, const Output& out) {
  const auto r = experiments::modulus_experiment(flow_of(c), c.modulus_scales, c.budget, c.seed, c.modulus_crosscheck);
  out.table("modulus", r.table());
  out.text("modulus.json", r.to_json().str());
  return r.verdict;
}

inline experiments::Verdict run_relation(const RunConfig& c, const Output& out) {
  const auto r = experiments::relation_check(flow_of(c), suspension::observable_by_name(c.observable), c.budget, c.seed);
  out.text("relation.json", r.to_json().str());
  return r.verdict;
}

/// Collects the verdicts of the JSON artifacts already in the output
/// directory into verdicts.txt.
inline experiments::Verdict run_report(const RunConfig&, const Output& out) {
  if (!std::filesystem::is_directory(out.dir())) throw Error("report: no output directory " + out.dir().string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(out.dir())) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  auto v = experiments::Verdict::Pass;
  std::string text;
  std::size_t found = 0;
  for (const auto& f : files) {
    std::ifstream in(f);
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("verdict") || !j["verdict"].is_string()) continue;
    const auto s = j["verdict"].get<std::string>();
    text += f.filename().string() + ": " + s + "\n";
    ++found;
    if (s == "fail") {
      v = experiments::Verdict::Fail;
    } else if (s != "pass") {
      v = experiments::worst(v, experiments::Verdict::Inconclusive);
    }
  }
  if (found == 0) v = experiments::Verdict::Inconclusive;
  text += "overall: " + experiments::to_string(v) + "\n";
  out.text("verdicts.txt", text);
  return v;
}

}  // namespace detail

/// Runs the configured command.  Exit status 0 on pass, 2 on inconclusive,
/// 1 on failure or error (diagnostic on err).
inline int run(const RunConfig& c, std::ostream& err) {
  try {
    validate(c);
    if (c.command.empty()) throw ConfigError("no command given");
    const detail::Output out(c);
    if (c.command != "report") out.text("config.txt", echo(c));
    experiments::Verdict v = experiments::Verdict::Fail;
    if (c.command == "ulam") v = detail::run_ulam(c, out);
    if (c.command == "map-variance") v = detail::run_map_variance(c, out);
    if (c.command == "flow-variance") v = detail::run_flow_variance(c, out);
    if (c.command == "ode-returns") v = detail::run_ode_returns(c, out);
    if (c.command == "sweep") v = detail::run_sweep(c, out);
    if (c.command == "modulus") v = detail::run_modulus(c, out);
    if (c.command == "relation-check") v = detail::run_relation(c, out);
    if (c.command == "report") v = detail::run_report(c, out);
    return experiments::exit_code(v);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lorvar::cli

#endif  // LORVAR_CLI_HPP
