#include "endico/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "endico/central.hpp"
#include "endico/powerflow.hpp"
#include "endico/trace_io.hpp"

namespace endico {

namespace fs = std::filesystem;
using nlohmann::json;

bool verbose_enabled() {
  const char* v = std::getenv("ENDICO_VERBOSE");
  return v != nullptr && std::string(v) == "1";
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["feeder"] = c.feeder_path;
  j["objective"] = c.objective == ObjectiveKind::loss ? "loss" : "dv";
  j["variant"] = c.variant == Variant::plain ? "plain" : "delta";
  j["delta0"] = c.delta0;
  j["tol"] = c.tol;
  j["max_rounds"] = c.max_rounds;
  j["seed"] = c.seed;
  j["out"] = c.output_dir;
  j["certify"] = c.record_certificates;
  return j.dump();
}

namespace {

RunOptions to_run_options(const RunConfig& c) {
  RunOptions opts;
  opts.tol = c.tol;
  opts.max_rounds = c.max_rounds;
  opts.variant = c.variant;
  opts.delta0 = c.delta0;
  opts.objective = c.objective;
  opts.record_certificates = c.record_certificates;
  return opts;
}

int validate_config(const RunConfig& c) {
  if (c.tol <= 0.0) {
    std::cerr << "error: --tol must be positive\n";
    return kExitInputError;
  }
  if (c.max_rounds < 1) {
    std::cerr << "error: --max-rounds must be >= 1\n";
    return kExitInputError;
  }
  if (c.variant == Variant::delta && c.delta0 <= 1.0) {
    std::cerr << "error: --delta0 must exceed 1\n";
    return kExitInputError;
  }
  return kExitOk;
}

}  // namespace

int cmd_run(const RunConfig& config) {
  if (int rc = validate_config(config); rc != kExitOk) return rc;
  try {
    const FeederModel model = load_feeder(config.feeder_path);
    const RunResult result = run_endico(model, to_run_options(config));
    const std::string echo = config_to_json(config);

    fs::create_directories(config.output_dir);
    write_trace_csv(fs::path(config.output_dir) / "trace.csv", model, result, echo);
    write_summary_json(fs::path(config.output_dir) / "summary.json", model, result, echo);
    if (config.record_certificates) {
      std::vector<CertificateReport> reports;
      for (const RoundTrace& tr : result.traces)
        if (tr.certificates) reports.push_back(*tr.certificates);
      write_certificates_csv(fs::path(config.output_dir) / "certificates.csv", reports);
    }
    if (verbose_enabled())
      std::cerr << "run: " << result.rounds << " rounds, converged="
                << (result.converged ? "yes" : "no") << "\n";
    return result.converged ? kExitOk : kExitNotConverged;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  }
}

int cmd_compare(const RunConfig& config) {
  if (int rc = validate_config(config); rc != kExitOk) return rc;
  try {
    const FeederModel model = load_feeder(config.feeder_path);
    const std::string echo = config_to_json(config);
    fs::create_directories(config.output_dir);

    json doc;
    doc["format_version"] = 1;
    doc["config"] = json::parse(echo);

    bool dist_ok = false, central_ok = false;
    RunResult dist;
    CentralSolution central;
    try {
      dist = run_endico(model, to_run_options(config));
      dist_ok = dist.converged;
      write_summary_json(fs::path(config.output_dir) / "summary.json", model, dist, echo);
    } catch (const std::exception& e) {
      doc["distributed_error"] = e.what();
    }
    try {
      CentralOptions copts;
      central = solve_central(model, config.objective, copts);
      central_ok = central.report.converged;
      write_central_json(fs::path(config.output_dir) / "central.json", model, central,
                         config.objective, echo);
    } catch (const std::exception& e) {
      doc["central_error"] = e.what();
    }

    doc["distributed_converged"] = dist_ok;
    doc["central_converged"] = central_ok;
    if (dist_ok && central_ok) {
      const double obj_d = dist.traces.back().objective;
      const double obj_c = central.objective;
      doc["objective_distributed"] = obj_d;
      doc["objective_central"] = obj_c;
      doc["objective_gap_rel"] =
          std::abs(obj_d - obj_c) / std::max(std::abs(obj_c), 1e-9);
      double dv = 0.0;
      for (const auto& [id, s] : dist.final_states)
        dv = std::max(dv, std::abs(std::sqrt(s.v_sq) - std::sqrt(central.v_sq.at(id))));
      doc["max_voltage_diff_pu"] = dv;
      json dq = json::object();
      for (const auto& [id, q] : dist.dispatch)
        dq[std::to_string(id)] = q - central.dispatch.at(id);
      doc["dispatch_diff"] = dq;
    }

    std::ofstream out(fs::path(config.output_dir) / "comparison.json");
    out << doc.dump(2) << "\n";
    return dist_ok && central_ok ? kExitOk : kExitNotConverged;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  }
}

int cmd_certify(const std::string& trace_path, const std::string& feeder_path,
                const std::string& output_dir) {
  try {
    const FeederModel model = load_feeder(feeder_path);
    const TraceFile tf = read_trace_csv(trace_path);

    std::vector<int> model_buses;
    for (const Bus& b : model.buses()) model_buses.push_back(b.id);
    std::sort(model_buses.begin(), model_buses.end());
    if (tf.bus_columns != model_buses || tf.der_columns != model.der_buses()) {
      std::cerr << "input error: trace/feeder mismatch (bus sets differ)\n";
      return kExitInputError;
    }

    json cfg = tf.config_json.empty() ? json::object() : json::parse(tf.config_json);
    const bool delta_variant = cfg.value("variant", "plain") == std::string("delta");
    const double delta0 = cfg.value("delta0", 1.5);
    const double eps_v = 1e-6;
    const double tol = cfg.value("tol", 1e-3);

    // Rebuild the state sequence from the file. Voltages and dispatches are
    // authoritative from the trace; flows are re-derived bottom-up from the
    // same fixed point the protocol uses, so an inconsistent row surfaces as
    // failed certificates rather than being silently repaired.
    RunResult rebuilt;
    rebuilt.objective = cfg.value("objective", "loss") == std::string("dv")
                            ? ObjectiveKind::voltage_deviation
                            : ObjectiveKind::loss;
    const PowerFlowSolution sweep0 = sweep_solve(model);
    for (const Bus& b : model.buses()) {
      NodeState ns;
      ns.v_sq = b.v_init_sq();
      if (b.id != model.root()) {
        ns.p_flow = sweep0.flows.at(b.id).first;
        ns.q_flow = sweep0.flows.at(b.id).second;
        ns.l_sq = sweep0.l_sq.at(b.id);
      }
      rebuilt.initial_states[b.id] = ns;
    }

    double max_v_mismatch = 0.0;
    int reconstruction_failures = 0;
    std::map<int, NodeState> prev = rebuilt.initial_states;
    for (const TraceFile::Row& row : tf.rows) {
      std::map<int, NodeState> cur;
      std::map<int, double> v_trace, q_trace;
      for (std::size_t i = 0; i < tf.bus_columns.size(); ++i)
        v_trace[tf.bus_columns[i]] = row.v[i] * row.v[i];
      for (std::size_t i = 0; i < tf.der_columns.size(); ++i)
        q_trace[tf.der_columns[i]] = row.q_d[i];

      cur[model.root()] = NodeState{0, 0, v_trace.at(model.root()), 0, 0};
      for (const Bus& b : model.buses()) {
        if (b.id == model.root()) continue;
        SubproblemContext ctx;
        ctx.v_parent_prev = prev.at(*b.parent).v_sq;
        ctx.child_p_sum = 0.0;
        ctx.child_q_sum = 0.0;
        for (int k : model.children_of(b.id)) {
          ctx.child_p_sum += prev.at(k).p_flow;
          ctx.child_q_sum += prev.at(k).q_flow;
        }
        ctx.line = *model.line_to(b.id);
        ctx.bus = b;
        const double q = q_trace.count(b.id) ? q_trace.at(b.id) : 0.0;
        const auto ns = resolve_at_q(ctx, q);
        // An unreconstructable row (divergent fixed point) gets NaN flows so
        // every downstream condition reads "not certified" rather than a
        // silently repaired pass.
        const double nan = std::numeric_limits<double>::quiet_NaN();
        NodeState s = ns.value_or(NodeState{nan, nan, v_trace.at(b.id), nan, q});
        if (ns)
          max_v_mismatch =
              std::max(max_v_mismatch, std::abs(s.v_sq - v_trace.at(b.id)));
        else
          ++reconstruction_failures;
        s.v_sq = v_trace.at(b.id);  // trace stays authoritative
        s.q_der = q;
        cur[b.id] = s;
      }

      RoundTrace tr;
      tr.round = row.round;
      tr.residual_max = row.residual_max;
      tr.objective = row.objective;
      tr.node_states = cur;
      rebuilt.traces.push_back(std::move(tr));
      prev = std::move(cur);
    }
    rebuilt.rounds = static_cast<int>(rebuilt.traces.size());
    rebuilt.converged =
        !tf.rows.empty() && tf.rows.back().residual_max < tol;
    rebuilt.final_states = prev;

    // Delta sequences replayed from the recorded voltages.
    std::map<int, double> delta;
    std::map<int, bool> settled;
    for (const Bus& b : model.buses())
      if (b.id != model.root()) {
        delta[b.id] = delta0;
        settled[b.id] = false;
      }

    std::vector<CertificateReport> reports;
    bool theorem1_all_rounds = true;
    const std::map<int, NodeState>* prev_states = &rebuilt.initial_states;
    for (std::size_t ti = 0; ti < rebuilt.traces.size(); ++ti) {
      const RoundTrace& tr = rebuilt.traces[ti];
      CertificateReport rep;
      rep.round = tr.round;
      rep.theorem1_all = true;
      bool any_window = false;
      bool window_all = true;
      for (const Bus& b : model.buses()) {
        if (b.id == model.root()) continue;
        std::vector<ConditionResult> conds;
        conds.push_back(check_theorem1(tr.node_states.at(b.id),
                                       prev_states->at(*b.parent).v_sq,
                                       *model.line_to(b.id)));
        rep.theorem1_all = rep.theorem1_all && conds.back().holds;
        if (delta_variant) {
          const double d_now = settled[b.id] ? 1.0 : delta[b.id];
          conds.push_back(check_delta_condition(tr.node_states.at(b.id).v_sq,
                                                prev_states->at(b.id).v_sq, d_now));
          if (!settled[b.id]) {
            const DeltaDecision dd =
                delta_update(delta[b.id], tr.node_states.at(b.id).v_sq,
                             prev_states->at(b.id).v_sq, eps_v);
            if (dd.stop)
              settled[b.id] = true;
            else
              delta[b.id] = dd.delta_next;
          }
        }
        // Theorem-2 window for single-child middle nodes.
        if (ti + 1 < rebuilt.traces.size() &&
            model.children_of(b.id).size() == 1) {
          const int k = model.children_of(b.id).front();
          const RoundTrace& tr_next = rebuilt.traces[ti + 1];
          Theorem2Snapshot snap;
          snap.v_i_prev = prev_states->at(*b.parent).v_sq;
          snap.v_j_prev = prev_states->at(b.id).v_sq;
          snap.p_ij_t = tr.node_states.at(b.id).p_flow;
          snap.p_ij_t1 = tr_next.node_states.at(b.id).p_flow;
          snap.q_ij_t = tr.node_states.at(b.id).q_flow;
          snap.p_jk_t = tr.node_states.at(k).p_flow;
          snap.line_ij = *model.line_to(b.id);
          snap.line_jk = *model.line_to(k);
          snap.v_j_t = tr.node_states.at(b.id).v_sq;
          snap.v_j_t1 = tr_next.node_states.at(b.id).v_sq;
          snap.eps_v = eps_v;
          any_window = true;
          for (ConditionResult& c : check_theorem2(snap)) {
            window_all = window_all && c.holds;
            conds.push_back(std::move(c));
          }
        }
        rep.per_node[b.id] = std::move(conds);
      }
      if (any_window) rep.theorem2_all = window_all;
      theorem1_all_rounds = theorem1_all_rounds && rep.theorem1_all;
      reports.push_back(std::move(rep));
      prev_states = &rebuilt.traces[ti].node_states;
    }

    const Theorem3Schedule t3 = check_theorem3_schedule(rebuilt, model, eps_v);

    fs::create_directories(output_dir);
    write_certificates_csv(fs::path(output_dir) / "certificates.csv", reports);

    json doc;
    doc["format_version"] = 1;
    doc["trace"] = trace_path;
    doc["feeder"] = feeder_path;
    doc["rounds"] = rebuilt.rounds;
    doc["converged"] = rebuilt.converged;
    doc["theorem1_all_rounds"] = theorem1_all_rounds;
    doc["max_flow_reconstruction_mismatch"] = max_v_mismatch;
    doc["reconstruction_failures"] = reconstruction_failures;
    json jt3;
    jt3["applicable"] = t3.applicable;
    jt3["schedule_found"] = t3.schedule_found;
    jt3["earliest_round"] = t3.earliest_round;
    jt3["schedule"] = t3.schedule;
    if (!t3.note.empty()) jt3["note"] = t3.note;
    doc["theorem3"] = jt3;
    std::ofstream out(fs::path(output_dir) / "certify_summary.json");
    out << doc.dump(2) << "\n";
    return kExitOk;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const ValidationError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::runtime_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  }
}

int cmd_generate(const GenerateConfig& config) {
  try {
    FeederModel model = [&] {
      if (config.kind == "line") return generate_line_feeder(config.n, config.params);
      if (config.kind == "tree")
        return generate_tree_feeder(config.branching, config.depth, config.params);
      if (config.kind == "randomized-tree")
        return generate_random_tree_feeder(config.n, config.params);
      throw std::invalid_argument("unknown feeder kind: " + config.kind);
    }();
    if (config.out_path.empty())
      throw std::invalid_argument("generate: output path required");
    save_feeder(model, config.out_path);
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  }
}

}  // namespace endico
