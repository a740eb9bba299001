#pragma once

#include <cstdint>
#include <string>

#include "endico/coordinator.hpp"

namespace endico {

// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNotConverged = 1;
inline constexpr int kExitInputError = 2;

struct RunConfig {
  std::string feeder_path;
  ObjectiveKind objective = ObjectiveKind::loss;
  Variant variant = Variant::plain;
  double delta0 = 1.5;
  double tol = 1e-3;
  int max_rounds = 200;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  bool record_certificates = false;
};

struct GenerateConfig {
  std::string kind = "line";  // line | randomized-tree | tree
  int n = 10;
  int branching = 2;
  int depth = 3;
  FeederGenParams params;
  std::string out_path;
};

/// Execute a distributed run; writes trace.csv and summary.json (and
/// certificates.csv when requested) under config.output_dir.
int cmd_run(const RunConfig& config);

/// Run distributed and central on the same feeder; writes comparison.json.
int cmd_compare(const RunConfig& config);

/// Re-derive line flows from a recorded trace and evaluate every certificate
/// family over it; writes certificates.csv and certify_summary.json.
int cmd_certify(const std::string& trace_path, const std::string& feeder_path,
                const std::string& output_dir);

int cmd_generate(const GenerateConfig& config);

/// Config echo embedded in every artifact.
std::string config_to_json(const RunConfig& config);

bool verbose_enabled();  // ENDICO_VERBOSE=1

}  // namespace endico
