#pragma once

#include <map>

#include "sbridge/fixedpoint.hpp"
#include "sbridge/montecarlo.hpp"

namespace sbridge {

/// Flat key-value config ("key = value", '#' comments). Unknown keys are
/// rejected; the full schema lives in docs/formats.md. write_config emits
/// the effective config in canonical key order, suitable for exact re-runs.
struct Config {
  std::map<std::string, std::string> kv;

  bool has(const std::string& key) const { return kv.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double get_real(const std::string& key) const;
  long get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
};

Config load_config(const std::filesystem::path& path);
Config default_config();

/// Applies "key=value" strings on top of a config. Unknown keys are rejected.
void apply_override(Config& config, const std::string& assignment);

void write_config(const std::filesystem::path& path, const Config& config);

struct BuiltProblem {
  BridgeProblem problem;
  StepScheme scheme;
  SolveOptions solve;
  SimulateOptions mc;
  bool force_nonlinear = false;
};

BuiltProblem build_from_config(const Config& config);

}  // namespace sbridge
