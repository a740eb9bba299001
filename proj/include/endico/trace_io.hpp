#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "endico/central.hpp"
#include "endico/coordinator.hpp"

namespace endico {

/// Parsed trace file: the config echo plus one parsed row per round.
struct TraceFile {
  std::string config_json;
  int format_version = 0;
  std::vector<int> bus_columns;   // ascending bus ids of the v columns
  std::vector<int> der_columns;   // ascending bus ids of the q columns
  struct Row {
    int round = 0;
    double residual_max = 0.0;
    double objective = 0.0;
    std::vector<double> v;    // magnitudes, pu, by bus_columns order
    std::vector<double> q_d;  // by der_columns order
  };
  std::vector<Row> rows;
};

/// One CSV per run: round, residual, objective, then per-bus voltage
/// magnitude and per-DER dispatch, ascending bus id. The config echo rides in
/// '#'-prefixed header lines.
void write_trace_csv(const std::filesystem::path& path, const FeederModel& model,
                     const RunResult& result, const std::string& config_json);

TraceFile read_trace_csv(const std::filesystem::path& path);

/// Run summary document: outcome, dispatch, objective, final voltages.
void write_summary_json(const std::filesystem::path& path, const FeederModel& model,
                        const RunResult& result, const std::string& config_json);

/// Central solution document mirroring the run summary schema for diffing.
void write_central_json(const std::filesystem::path& path, const FeederModel& model,
                        const CentralSolution& sol, ObjectiveKind kind,
                        const std::string& config_json);

/// Certificate rows: round, bus, condition name, holds, margin.
void write_certificates_csv(const std::filesystem::path& path,
                            const std::vector<CertificateReport>& reports);

}  // namespace endico
