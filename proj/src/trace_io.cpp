#include "endico/trace_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace endico {

using nlohmann::json;

namespace {

constexpr int kTraceFormatVersion = 1;

// Shortest round-trippable decimal form.
std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<int> sorted_bus_ids(const FeederModel& model) {
  std::vector<int> ids;
  for (const Bus& b : model.buses()) ids.push_back(b.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

void write_trace_csv(const std::filesystem::path& path, const FeederModel& model,
                     const RunResult& result, const std::string& config_json) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
  out << "# endico-trace format_version=" << kTraceFormatVersion << "\n";
  out << "# config " << config_json << "\n";

  const std::vector<int> buses = sorted_bus_ids(model);
  const std::vector<int> ders = model.der_buses();
  out << "round,residual_max,objective";
  for (int id : buses) out << ",v_" << id;
  for (int id : ders) out << ",q_" << id;
  out << "\n";

  for (const RoundTrace& tr : result.traces) {
    out << tr.round << "," << num(tr.residual_max) << "," << num(tr.objective);
    for (int id : buses) out << "," << num(std::sqrt(tr.node_states.at(id).v_sq));
    for (int id : ders) out << "," << num(tr.node_states.at(id).q_der);
    out << "\n";
  }
}

TraceFile read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  TraceFile tf;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# endico-trace", 0) == 0) {
      const auto pos = line.find("format_version=");
      if (pos != std::string::npos)
        tf.format_version = std::stoi(line.substr(pos + 15));
      continue;
    }
    if (line.rfind("# config ", 0) == 0) {
      tf.config_json = line.substr(9);
      continue;
    }
    if (line.rfind('#', 0) == 0) continue;

    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);

    if (!header_seen) {
      for (const std::string& c : cells) {
        if (c.rfind("v_", 0) == 0) tf.bus_columns.push_back(std::stoi(c.substr(2)));
        if (c.rfind("q_", 0) == 0) tf.der_columns.push_back(std::stoi(c.substr(2)));
      }
      header_seen = true;
      continue;
    }
    if (cells.size() != 3 + tf.bus_columns.size() + tf.der_columns.size())
      throw std::runtime_error("trace row has wrong column count");
    TraceFile::Row row;
    row.round = std::stoi(cells[0]);
    row.residual_max = std::stod(cells[1]);
    row.objective = std::stod(cells[2]);
    for (std::size_t i = 0; i < tf.bus_columns.size(); ++i)
      row.v.push_back(std::stod(cells[3 + i]));
    for (std::size_t i = 0; i < tf.der_columns.size(); ++i)
      row.q_d.push_back(std::stod(cells[3 + tf.bus_columns.size() + i]));
    tf.rows.push_back(std::move(row));
  }
  if (!header_seen) throw std::runtime_error("trace file has no header row");
  return tf;
}

namespace {

json result_to_json(const FeederModel& model, const RunResult& result,
                    const std::string& config_json) {
  json doc;
  doc["format_version"] = kTraceFormatVersion;
  doc["config"] = json::parse(config_json);
  doc["converged"] = result.converged;
  doc["aborted"] = result.aborted;
  if (!result.error.empty()) doc["error"] = result.error;
  doc["rounds"] = result.rounds;
  const double obj = result.traces.empty()
                         ? network_objective(model, result.initial_states,
                                             result.objective)
                         : result.traces.back().objective;
  doc["objective"] = obj;
  if (result.objective == ObjectiveKind::loss)
    doc["objective_kw"] = obj * model.base_kva();
  json dispatch = json::object();
  for (const auto& [id, q] : result.dispatch) dispatch[std::to_string(id)] = q;
  doc["dispatch"] = dispatch;
  json v = json::object();
  for (const auto& [id, s] : result.final_states)
    v[std::to_string(id)] = std::sqrt(s.v_sq);
  doc["final_v"] = v;
  return doc;
}

}  // namespace

void write_summary_json(const std::filesystem::path& path, const FeederModel& model,
                        const RunResult& result, const std::string& config_json) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write summary: " + path.string());
  out << result_to_json(model, result, config_json).dump(2) << "\n";
}

void write_central_json(const std::filesystem::path& path, const FeederModel& model,
                        const CentralSolution& sol, ObjectiveKind kind,
                        const std::string& config_json) {
  json doc;
  doc["format_version"] = kTraceFormatVersion;
  doc["config"] = json::parse(config_json);
  doc["converged"] = sol.report.converged;
  doc["objective"] = sol.objective;
  if (kind == ObjectiveKind::loss) doc["objective_kw"] = sol.objective * model.base_kva();
  json dispatch = json::object();
  for (const auto& [id, q] : sol.dispatch) dispatch[std::to_string(id)] = q;
  doc["dispatch"] = dispatch;
  json v = json::object();
  for (const auto& [id, vsq] : sol.v_sq) v[std::to_string(id)] = std::sqrt(vsq);
  doc["final_v"] = v;
  doc["kkt"] = {{"stationarity", sol.report.kkt_stationarity},
                {"feasibility", sol.report.kkt_feasibility},
                {"complementarity", sol.report.kkt_complementarity},
                {"c_final", sol.report.c_final}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write central summary: " + path.string());
  out << doc.dump(2) << "\n";
}

void write_certificates_csv(const std::filesystem::path& path,
                            const std::vector<CertificateReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write certificates: " + path.string());
  out << "round,bus,condition,holds,margin\n";
  for (const CertificateReport& rep : reports)
    for (const auto& [bus, conds] : rep.per_node)
      for (const ConditionResult& c : conds)
        out << rep.round << "," << bus << "," << c.name << ","
            << (c.holds ? 1 : 0) << "," << num(c.margin) << "\n";
}

}  // namespace endico
