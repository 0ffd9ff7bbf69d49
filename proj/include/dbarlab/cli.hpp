#pragma once

// Batch driver: run configuration, INI loading, and the analyze / verify /
// spectrum / solve / list-weights commands. Argument parsing lives in tools/.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dbarlab/calculus.hpp"
#include "dbarlab/identity.hpp"
#include "dbarlab/io.hpp"
#include "dbarlab/levi.hpp"
#include "dbarlab/spectral.hpp"
#include "dbarlab/weights.hpp"

namespace dbarlab::cli {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_check_failed = 2 };

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  // [weight]
  std::string weight = "gaussian"; // built-in name; ignored when expr is set
  std::string expr;
  std::size_t n = 1;
  // [grid]
  double radius = 6.0;
  std::size_t m = 32;
  std::vector<double> radii;
  double m_per_R = 4.0;
  std::string shape = "ball";
  // [run]
  std::size_t q = 1;
  std::uint64_t seed = 1;
  std::optional<double> tol;
  std::string out = "-";
  std::size_t threads = 1;
  std::size_t trials = 4;
  std::size_t k = 4;
  std::size_t max_iter = 400;
  std::size_t directions = 64;
  double growth = 1.3;
  double plateau = 0.05;
};

inline std::string trim(std::string s) {
  auto const b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto const e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_real(std::string const& key, std::string const& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (std::exception const&) {
    throw ConfigError("invalid number for " + key + ": '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("invalid number for " + key + ": '" + v + "'");
  return d;
}

inline std::uint64_t parse_unsigned(std::string const& key, std::string const& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("invalid non-negative integer for " + key + ": '" + v + "'");
  try {
    return std::stoull(v);
  } catch (std::exception const&) {
    throw ConfigError("integer out of range for " + key + ": '" + v + "'");
  }
}

inline std::vector<double> parse_list(std::string const& key, std::string const& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_real(key, trim(item)));
  return out;
}

/// Applies one `section.key = value` setting; unknown keys are rejected.
inline void apply_setting(RunConfig& c, std::string const& section, std::string const& key, std::string const& value) {
  std::string const full = section + "." + key;
  if (section == "weight") {
    if (key == "name") c.weight = value;
    else if (key == "expr") c.expr = value;
    else if (key == "n") c.n = parse_unsigned(full, value);
    else throw ConfigError("unknown key '" + full + "'");
  } else if (section == "grid") {
    if (key == "radius" || key == "R") c.radius = parse_real(full, value);
    else if (key == "m") c.m = parse_unsigned(full, value);
    else if (key == "radii") c.radii = parse_list(full, value);
    else if (key == "m_per_R") c.m_per_R = parse_real(full, value);
    else if (key == "shape") c.shape = value;
    else throw ConfigError("unknown key '" + full + "'");
  } else if (section == "run") {
    if (key == "q") c.q = parse_unsigned(full, value);
    else if (key == "seed") c.seed = parse_unsigned(full, value);
    else if (key == "tol") c.tol = parse_real(full, value);
    else if (key == "out") c.out = value;
    else if (key == "threads") c.threads = parse_unsigned(full, value);
    else if (key == "trials") c.trials = parse_unsigned(full, value);
    else if (key == "k") c.k = parse_unsigned(full, value);
    else if (key == "max_iter") c.max_iter = parse_unsigned(full, value);
    else if (key == "directions") c.directions = parse_unsigned(full, value);
    else if (key == "growth") c.growth = parse_real(full, value);
    else if (key == "plateau") c.plateau = parse_real(full, value);
    else throw ConfigError("unknown key '" + full + "'");
  } else {
    throw ConfigError("unknown section '[" + section + "]'");
  }
}

/// INI text: `[section]` headers, `key = value` lines, `#` or `;` comments.
inline void load_ini(RunConfig& c, std::istream& is) {
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string const t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section != "weight" && section != "grid" && section != "run")
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section '[" + section + "]'");
      continue;
    }
    auto const eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside of a section");
    apply_setting(c, section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

inline void load_ini_file(RunConfig& c, std::string const& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  load_ini(c, f);
}

inline double default_tol(std::string const& command) {
  if (command == "verify") return 5e-2;
  if (command == "solve") return 1e-8;
  return 1e-6;
}

inline std::vector<double> default_radii(std::string const& command) {
  if (command == "spectrum") return {3.0, 4.0, 5.0};
  return {1.0, 2.0, 4.0, 8.0, 16.0};
}

/// Fills defaults and checks every field before any computation starts.
inline void validate(RunConfig& c) {
  static std::vector<std::string> const commands{"analyze", "verify", "spectrum", "solve", "list-weights"};
  if (std::find(commands.begin(), commands.end(), c.command) == commands.end())
    throw ConfigError("unknown command '" + c.command + "'");
  if (c.n < 1 || c.n > 16) throw ConfigError("n must be in [1, 16]");
  if (c.q < 1 || c.q > c.n) throw ConfigError("q must satisfy 1 <= q <= n");
  if (!(c.radius > 0.0)) throw ConfigError("radius must be positive");
  if (c.m < 8) throw ConfigError("m must be >= 8");
  if (!(c.m_per_R > 0.0)) throw ConfigError("m_per_R must be positive");
  if (c.shape != "ball" && c.shape != "box") throw ConfigError("shape must be 'ball' or 'box'");
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  if (c.trials < 1) throw ConfigError("trials must be >= 1");
  if (c.k < 1 || c.k > 32) throw ConfigError("k must be in [1, 32]");
  if (c.max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (c.directions < 8) throw ConfigError("directions must be >= 8");
  if (!(c.growth > 1.0)) throw ConfigError("growth must exceed 1");
  if (!(c.plateau > 0.0)) throw ConfigError("plateau must be positive");
  if (!c.tol) c.tol = default_tol(c.command);
  if (!(*c.tol > 0.0)) throw ConfigError("tol must be positive");
  if (c.radii.empty()) c.radii = default_radii(c.command);
  if (c.command == "analyze" || c.command == "spectrum") {
    if (c.radii.size() < 3) throw ConfigError("radii needs at least three values");
    for (std::size_t i = 0; i < c.radii.size(); ++i)
      if (!(c.radii[i] > 0.0) || (i > 0 && !(c.radii[i] > c.radii[i - 1])))
        throw ConfigError("radii must be positive and strictly increasing");
  }
  if (c.command != "list-weights") {
    if (c.expr.empty()) {
      auto const& table = builtin_weights();
      auto it = std::find_if(table.begin(), table.end(), [&](auto const& b) { return b.name == c.weight; });
      if (it == table.end()) throw ConfigError("unknown built-in weight '" + c.weight + "'");
      if (c.n < it->min_dim || c.n > it->max_dim)
        throw ConfigError("weight '" + c.weight + "' is defined for n in [" + std::to_string(it->min_dim) + ", " +
                          std::to_string(it->max_dim) + "]");
    }
  }
}

inline std::string weight_id(RunConfig const& c) { return c.expr.empty() ? c.weight : "expr"; }

inline WeightExpr resolve_weight(RunConfig const& c) {
  try {
    return c.expr.empty() ? builtin_weight(c.weight, c.n) : parse_weight(c.expr, c.n);
  } catch (std::exception const& e) {
    throw ConfigError(std::string("weight: ") + e.what());
  }
}

inline std::string join(std::vector<double> const& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

/// The resolved configuration as `#` comment lines.
inline void write_config_header(std::ostream& os, RunConfig const& c) {
  os << "# command = " << c.command << '\n';
  os << "# [weight] name = " << c.weight << '\n';
  os << "# [weight] expr = " << c.expr << '\n';
  os << "# [weight] n = " << c.n << '\n';
  os << "# [grid] radius = " << format_double(c.radius) << '\n';
  os << "# [grid] m = " << c.m << '\n';
  os << "# [grid] radii = " << join(c.radii) << '\n';
  os << "# [grid] m_per_R = " << format_double(c.m_per_R) << '\n';
  os << "# [grid] shape = " << c.shape << '\n';
  os << "# [run] q = " << c.q << '\n';
  os << "# [run] seed = " << c.seed << '\n';
  os << "# [run] tol = " << format_double(*c.tol) << '\n';
  os << "# [run] out = " << c.out << '\n';
  os << "# [run] threads = " << c.threads << '\n';
  os << "# [run] trials = " << c.trials << '\n';
  os << "# [run] k = " << c.k << '\n';
  os << "# [run] max_iter = " << c.max_iter << '\n';
  os << "# [run] directions = " << c.directions << '\n';
  os << "# [run] growth = " << format_double(c.growth) << '\n';
  os << "# [run] plateau = " << format_double(c.plateau) << '\n';
}

// ---------------------------------------------------------------------------
// commands; each writes its CSV to `os` and returns an exit code

inline int cmd_list_weights(std::ostream& os) {
  os << "name,min_n,max_n,source_n2,description\n";
  for (auto const& b : builtin_weights()) {
    std::size_t const n = std::clamp<std::size_t>(2, b.min_dim, b.max_dim);
    os << b.name << ',' << b.min_dim << ',' << b.max_dim << ",\"" << builtin_source(b.name, n) << "\",\"" << b.description << "\"\n";
  }
  return exit_ok;
}

inline int cmd_analyze(RunConfig const& c, std::ostream& os) {
  auto const w = resolve_weight(c);
  auto const rep = criterion_scan(w, c.q, c.radii, c.directions, c.seed);
  write_config_header(os, c);
  write_csv(os, rep);
  return exit_ok;
}

inline int cmd_verify(RunConfig const& c, std::ostream& os) {
  auto const w = resolve_weight(c);
  Grid const g(c.n, c.radius, c.m);
  auto const reps = kohn_morrey_trials(w, c.q, g, c.trials, c.seed);
  write_config_header(os, c);
  write_csv(os, reps);
  write_summary(os, reps);
  bool ok = true;
  for (auto const& r : reps)
    if (!(r.rel_err <= *c.tol)) ok = false;
  os << "# status: " << (ok ? "pass" : "fail: rel_err above tol") << '\n';
  return ok ? exit_ok : exit_check_failed;
}

inline int cmd_spectrum(RunConfig const& c, std::ostream& os) {
  auto const w = resolve_weight(c);
  DiagnosticOptions opt;
  opt.m_per_R = c.m_per_R;
  opt.k = c.k;
  opt.max_iter = c.max_iter;
  opt.seed = c.seed;
  opt.growth = c.growth;
  opt.plateau = c.plateau;
  opt.tol = *c.tol;
  opt.shape = c.shape == "box" ? DomainShape::box : DomainShape::ball;
  auto const rep = compactness_diagnostic(w, weight_id(c), c.q, c.radii, opt);
  write_config_header(os, c);
  write_csv(os, rep);
  bool ok = true;
  for (auto const& r : rep.records)
    if (!r.converged) ok = false;
  os << "# status: " << (ok ? "pass" : "fail: eigensolver did not converge") << '\n';
  return ok ? exit_ok : exit_check_failed;
}

/// Solves box u = f for a seeded bump f; the solution goes to `out` in the
/// binary grid-form layout, the residual summary to `os`.
inline int cmd_solve(RunConfig const& c, std::ostream& os) {
  auto const w = resolve_weight(c);
  Grid const g(c.n, c.radius, c.m);
  GridForm const f = make_bump_form(g, c.q, {0.0, 1, c.seed});
  BoxOperator const box = assemble_box(w, SpectralDomain(g, DomainShape::box), c.q);
  write_config_header(os, c);
  os << "dimension,iterations,relative_residual,norm_f,norm_u\n";
  try {
    auto const res = solve_neumann(box, f, *c.tol);
    WeightField const wf = tabulate_weight(w, g);
    os << box.dimension() << ',' << res.iterations << ',' << format_double(res.relative_residual) << ','
       << format_double(std::sqrt(norm_sq(f, wf))) << ',' << format_double(std::sqrt(norm_sq(res.u, wf))) << '\n';
    if (c.out != "-") {
      std::ofstream file(c.out, std::ios::binary);
      if (!file) throw ConfigError("cannot write '" + c.out + "'");
      write_grid_form(file, res.u);
    }
    os << "# status: pass\n";
    return exit_ok;
  } catch (StagnationError const& e) {
    os << "# status: fail: " << e.what() << '\n';
    return exit_check_failed;
  }
}

/// Runs a validated config. CSV goes to `out` (or to `os` when out is "-"
/// or the command is solve); reasons for failures go to `err`.
inline int run(RunConfig c, std::ostream& os, std::ostream& err) {
  try {
    validate(c);
    if (c.command == "list-weights") return cmd_list_weights(os);
    std::ofstream file;
    std::ostream* target = &os;
    if (c.command != "solve" && c.out != "-") {
      file.open(c.out);
      if (!file) throw ConfigError("cannot write '" + c.out + "'");
      target = &file;
    }
    if (c.command == "analyze") return cmd_analyze(c, *target);
    if (c.command == "verify") return cmd_verify(c, *target);
    if (c.command == "spectrum") return cmd_spectrum(c, *target);
    return cmd_solve(c, *target);
  } catch (ConfigError const& e) {
    err << "error: config: " << e.what() << '\n';
    return exit_usage;
  } catch (std::invalid_argument const& e) {
    err << "error: usage: " << e.what() << '\n';
    return exit_usage;
  } catch (std::exception const& e) {
    err << "error: check: " << e.what() << '\n';
    return exit_check_failed;
  }
}

} // namespace dbarlab::cli
