#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace endico {

/// Malformed feeder document (bad JSON, missing/ill-typed fields).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structurally invalid feeder (cycles, duplicate ids, bad ratings, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// DER (PV + smart inverter) connected at a bus. Reactive output is the
/// dispatchable quantity; active output p_out is a measured constant.
struct DerSpec {
  double s_rating = 0.0;  // kVA rating, pu
  double p_out = 0.0;     // measured active output, pu

  /// Half-width of the admissible reactive interval: sqrt(s_rating^2 - p_out^2).
  double q_max() const;

  bool operator==(const DerSpec&) const = default;
};

struct Bus {
  int id = 0;
  std::optional<int> parent;  // absent only at the root / substation
  double p_load = 0.0;        // pu
  double q_load = 0.0;        // pu
  std::optional<DerSpec> der;
  double v_init = 1.02;  // flat-start voltage magnitude, pu

  double v_init_sq() const { return v_init * v_init; }

  bool operator==(const Bus&) const = default;
};

struct Line {
  int from_bus = 0;  // parent side
  int to_bus = 0;
  double r = 0.0;       // pu
  double x = 0.0;       // pu
  double i_rated = 0.0;  // thermal current limit, pu

  /// Zero-impedance jumpers are legal but flagged: the voltage-drop equation
  /// no longer constrains l, which is then pinned by the current equation only.
  bool is_jumper() const { return r == 0.0 && x == 0.0; }

  bool operator==(const Line&) const = default;
};

/// Immutable rooted radial feeder. All electrical quantities are per-unit on
/// the declared bases; voltages are stored as magnitudes and exposed squared.
class FeederModel {
 public:
  FeederModel(std::vector<Bus> buses, std::vector<Line> lines, double base_kva,
              double base_kv, double v_min = 0.95, double v_max = 1.05,
              double v_ref = 1.0);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }

  double base_kva() const { return base_kva_; }
  double base_kv() const { return base_kv_; }
  double v_min_sq() const { return v_min_ * v_min_; }
  double v_max_sq() const { return v_max_ * v_max_; }
  double v_ref_sq() const { return v_ref_ * v_ref_; }
  double v_min() const { return v_min_; }
  double v_max() const { return v_max_; }
  double v_ref() const { return v_ref_; }

  int root() const { return root_; }
  bool has_bus(int id) const { return index_.count(id) != 0; }
  const Bus& bus(int id) const;

  /// Children of `id` in ascending id order.
  const std::vector<int>& children_of(int id) const;

  /// Upstream line of a non-root bus; nullptr for the root.
  const Line* line_to(int id) const;

  /// Root-first traversal order (parents always precede children).
  const std::vector<int>& bfs_order() const { return bfs_order_; }

  /// Hop count from the root.
  int depth_of(int id) const;

  /// True when the feeder is a path graph 1 parent / <=1 child everywhere.
  bool is_line_network() const;

  /// Non-root bus ids carrying a DER, ascending.
  std::vector<int> der_buses() const;

  bool operator==(const FeederModel& o) const;

 private:
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  double base_kva_, base_kv_;
  double v_min_, v_max_, v_ref_;
  int root_ = 0;
  std::map<int, std::size_t> index_;          // bus id -> position in buses_
  std::map<int, std::size_t> line_index_;     // to-bus id -> position in lines_
  std::map<int, std::vector<int>> children_;  // sorted ascending
  std::vector<int> bfs_order_;
  std::map<int, int> depth_;
};

/// Load and validate a feeder document (see README for the schema).
FeederModel load_feeder(const std::filesystem::path& path);

/// Serialize a model so that load_feeder(save_feeder(m)) == m.
void save_feeder(const FeederModel& model, const std::filesystem::path& path);

/// Shared knobs for the synthetic feeder generators. With randomized=true the
/// per-bus/per-line quantities are scaled by U[0.5, 1.5) draws from `seed`.
struct FeederGenParams {
  double r = 0.01;
  double x = 0.02;
  double p_load = 0.1;
  double q_load = 0.05;
  double der_density = 1.0;  // fraction of non-root buses carrying a DER
  double s_rating = 0.2;
  double p_out = 0.1;
  double i_rated = 2.0;
  double v_init = 1.02;
  double v_ref = 1.02;  // deviation objective regulates to the operating profile
  double base_kva = 1000.0;
  double base_kv = 4.16;
  bool randomized = false;
  std::uint64_t seed = 0;
};

/// Path feeder 1-2-...-n. Deterministic for a fixed seed.
FeederModel generate_line_feeder(int n, const FeederGenParams& params = {});

/// Complete radial tree: `depth` levels with `branching` children per node
/// (depth 3, branching 3 -> 13 buses).
FeederModel generate_tree_feeder(int branching, int depth,
                                 const FeederGenParams& params = {});

/// Random radial tree on n buses: each new bus attaches to a uniformly drawn
/// existing bus. Deterministic for a fixed seed.
FeederModel generate_random_tree_feeder(int n, const FeederGenParams& params = {});

}  // namespace endico
