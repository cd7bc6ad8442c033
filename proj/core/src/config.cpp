#include "sbridge/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "sbridge/families.hpp"

namespace sbridge {

namespace {

/// Canonical key order for the effective config write-back.
const std::vector<std::string>& schema() {
  static const std::vector<std::string> keys = {
      "format_version", "dim", "lower", "upper", "cells", "t0", "t1", "steps",
      "m", "p", "drift", "g", "sigma", "q", "rho0", "rho1", "lambda",
      "scheme", "cfl_safety", "tol", "marginal_tol", "max_iter", "damping",
      "initial_guess", "particles", "substeps", "seed", "threads", "force_nonlinear"};
  return keys;
}

bool known_key(const std::string& k) {
  const auto& s = schema();
  return std::find(s.begin(), s.end(), k) != s.end();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_reals(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    try {
      out.push_back(std::stod(trim(item)));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': cannot parse number '" + item + "'");
    }
  }
  return out;
}

}  // namespace

const std::string& Config::get(const std::string& key) const {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

double Config::get_real(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not a number: '" + get(key) + "'");
  }
}

long Config::get_int(const std::string& key) const {
  try {
    return std::stol(get(key));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': not an integer: '" + get(key) + "'");
  }
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

Config default_config() {
  Config c;
  c.kv = {{"format_version", "1"},
          {"dim", "1"},
          {"lower", "-8"},
          {"upper", "8"},
          {"cells", "256"},
          {"t0", "0"},
          {"t1", "4"},
          {"steps", "200"},
          {"m", "1"},
          {"p", "1"},
          {"drift", "zero"},
          {"g", "constant:1"},
          {"sigma", "constant:1"},
          {"q", "zero"},
          {"rho0", "gaussian:-1;0.25"},
          {"rho1", "gaussian:1;0.25"},
          {"lambda", "auto"},
          {"scheme", "imex-cn"},
          {"cfl_safety", "0.5"},
          {"tol", "1e-8"},
          {"marginal_tol", "1e-6"},
          {"max_iter", "auto"},
          {"damping", "1"},
          {"initial_guess", "ones"},
          {"particles", "100000"},
          {"substeps", "1"},
          {"seed", "0"},
          {"threads", "1"},
          {"force_nonlinear", "false"}};
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  Config c = default_config();
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known_key(key))
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key +
                        "'");
    c.kv[key] = value;
  }
  if (c.get("format_version") != "1")
    throw ConfigError(path.string() + ": unsupported format_version " + c.get("format_version"));
  return c;
}

void apply_override(Config& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (!known_key(key)) throw ConfigError("override: unknown key '" + key + "'");
  config.kv[key] = value;
}

void write_config(const std::filesystem::path& path, const Config& config) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "# sbridge effective config (format v1)\n";
  for (const auto& key : schema()) {
    auto it = config.kv.find(key);
    if (it != config.kv.end()) os << key << " = " << it->second << "\n";
  }
}

BuiltProblem build_from_config(const Config& c) {
  Grid g;
  g.dim = static_cast<int>(c.get_int("dim"));
  auto lower = parse_reals(c.get("lower"), "lower");
  auto upper = parse_reals(c.get("upper"), "upper");
  auto cells = parse_reals(c.get("cells"), "cells");
  auto expand = [&](std::vector<double>& v, const char* key) {
    if (v.size() == 1 && g.dim == 2) v.push_back(v[0]);
    if (static_cast<int>(v.size()) != g.dim)
      throw ConfigError(std::string("config key '") + key + "' needs 1 or dim entries");
  };
  expand(lower, "lower");
  expand(upper, "upper");
  expand(cells, "cells");
  for (int a = 0; a < g.dim; ++a) {
    g.lower[a] = lower[static_cast<std::size_t>(a)];
    g.upper[a] = upper[static_cast<std::size_t>(a)];
    g.cells[a] = static_cast<int>(cells[static_cast<std::size_t>(a)]);
  }
  g.t0 = c.get_real("t0");
  g.t1 = c.get_real("t1");
  g.num_steps = static_cast<int>(c.get_int("steps"));
  auto grid = make_grid(g);

  const int n = g.dim;
  const int m = static_cast<int>(c.get_int("m"));
  const int p = static_cast<int>(c.get_int("p"));

  std::optional<double> lambda;
  if (c.get("lambda") != "auto") {
    lambda = c.get_real("lambda");
  }

  BuiltProblem out{
      make_problem(m, p, make_vector_family(c.get("drift"), n),
                   make_matrix_family(c.get("g"), n, m), make_matrix_family(c.get("sigma"), n, p),
                   make_scalar_family(c.get("q"), n), make_density(c.get("rho0"), grid),
                   make_density(c.get("rho1"), grid), lambda, grid),
      StepScheme{},
      SolveOptions{},
      SimulateOptions{},
      false};

  const std::string scheme = c.get("scheme");
  if (scheme == "imex-cn")
    out.scheme.kind = SchemeKind::ImexCn;
  else if (scheme == "explicit-rk2")
    out.scheme.kind = SchemeKind::ExplicitRk2;
  else
    throw ConfigError("config key 'scheme': unknown scheme '" + scheme + "'");
  out.scheme.cfl_safety = c.get_real("cfl_safety");
  if (!(out.scheme.cfl_safety > 0.0) || out.scheme.cfl_safety > 1.0)
    throw ConfigError("config key 'cfl_safety': must be in (0, 1]");

  out.solve.tol = c.get_real("tol");
  out.solve.marginal_tol = c.get_real("marginal_tol");
  out.solve.max_iter = c.get("max_iter") == "auto" ? 0 : static_cast<int>(c.get_int("max_iter"));
  out.solve.damping = c.get_real("damping");
  if (!(out.solve.damping > 0.0) || out.solve.damping > 1.0)
    throw ConfigError("config key 'damping': must be in (0, 1]");
  const std::string guess = c.get("initial_guess");
  if (guess == "ones")
    out.solve.guess = SolveOptions::Guess::Ones;
  else if (guess == "sqrt-rho1")
    out.solve.guess = SolveOptions::Guess::SqrtRho1;
  else
    throw ConfigError("config key 'initial_guess': unknown value '" + guess + "'");

  out.mc.particles = c.get_int("particles");
  out.mc.substeps = static_cast<int>(c.get_int("substeps"));
  out.mc.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  out.mc.threads = static_cast<int>(c.get_int("threads"));
  out.force_nonlinear = c.get_bool("force_nonlinear");
  return out;
}

}  // namespace sbridge
