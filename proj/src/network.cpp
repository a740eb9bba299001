#include "endico/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

namespace endico {

using nlohmann::json;

double DerSpec::q_max() const {
  const double head = s_rating * s_rating - p_out * p_out;
  return head > 0.0 ? std::sqrt(head) : 0.0;
}

namespace {

// Portable uniform double in [lo, hi): avoids std::uniform_real_distribution,
// whose output is implementation-defined.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = std::ldexp(static_cast<double>(rng() >> 11), -53);
  return lo + u * (hi - lo);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace

FeederModel::FeederModel(std::vector<Bus> buses, std::vector<Line> lines,
                         double base_kva, double base_kv, double v_min,
                         double v_max, double v_ref)
    : buses_(std::move(buses)),
      lines_(std::move(lines)),
      base_kva_(base_kva),
      base_kv_(base_kv),
      v_min_(v_min),
      v_max_(v_max),
      v_ref_(v_ref) {
  require(!buses_.empty(), "feeder has no buses");
  require(base_kva_ > 0.0 && base_kv_ > 0.0, "per-unit bases must be positive");
  require(v_min_ > 0.0 && v_max_ >= v_min_, "invalid voltage band");

  for (std::size_t i = 0; i < buses_.size(); ++i) {
    const Bus& b = buses_[i];
    require(index_.emplace(b.id, i).second,
            "duplicate bus id " + std::to_string(b.id));
    require(std::isfinite(b.p_load) && std::isfinite(b.q_load),
            "non-finite load at bus " + std::to_string(b.id));
    require(b.v_init > 0.0, "v_init must be positive at bus " + std::to_string(b.id));
    if (b.der) {
      require(b.der->s_rating > 0.0,
              "DER rating must be positive at bus " + std::to_string(b.id));
      require(b.der->p_out >= 0.0 && b.der->p_out <= b.der->s_rating,
              "DER p_out outside [0, s_rating] at bus " + std::to_string(b.id));
    }
  }

  int root_count = 0;
  for (const Bus& b : buses_) {
    if (!b.parent) {
      ++root_count;
      root_ = b.id;
    }
  }
  require(root_count != 0, "not a tree: no root bus");
  require(root_count == 1, "multiple roots");

  require(lines_.size() + 1 == buses_.size(), "not a tree: |lines| != |buses| - 1");

  for (std::size_t i = 0; i < lines_.size(); ++i) {
    const Line& l = lines_[i];
    require(index_.count(l.from_bus) && index_.count(l.to_bus),
            "line references unknown bus");
    require(l.r >= 0.0 && l.x >= 0.0, "negative line impedance");
    require(l.i_rated > 0.0, "line thermal rating must be positive");
    require(line_index_.emplace(l.to_bus, i).second,
            "bus " + std::to_string(l.to_bus) + " fed by more than one line");
    const Bus& to = bus(l.to_bus);
    require(to.parent && *to.parent == l.from_bus,
            "line (" + std::to_string(l.from_bus) + "," + std::to_string(l.to_bus) +
                ") does not match bus parent");
    children_[l.from_bus].push_back(l.to_bus);
  }
  for (auto& [id, kids] : children_) std::sort(kids.begin(), kids.end());

  // Connectivity; with |E| = |V|-1 this also rules out cycles.
  std::deque<int> queue{root_};
  depth_[root_] = 0;
  while (!queue.empty()) {
    const int id = queue.front();
    queue.pop_front();
    bfs_order_.push_back(id);
    for (int k : children_of(id)) {
      depth_[k] = depth_[id] + 1;
      queue.push_back(k);
    }
  }
  require(bfs_order_.size() == buses_.size(), "not a tree: disconnected bus");
}

const Bus& FeederModel::bus(int id) const {
  auto it = index_.find(id);
  if (it == index_.end())
    throw ValidationError("unknown bus id " + std::to_string(id));
  return buses_[it->second];
}

const std::vector<int>& FeederModel::children_of(int id) const {
  bus(id);  // bounds check
  static const std::vector<int> kEmpty;
  auto it = children_.find(id);
  return it == children_.end() ? kEmpty : it->second;
}

const Line* FeederModel::line_to(int id) const {
  auto it = line_index_.find(id);
  return it == line_index_.end() ? nullptr : &lines_[it->second];
}

int FeederModel::depth_of(int id) const {
  bus(id);
  return depth_.at(id);
}

bool FeederModel::is_line_network() const {
  for (const Bus& b : buses_)
    if (children_of(b.id).size() > 1) return false;
  return true;
}

std::vector<int> FeederModel::der_buses() const {
  std::vector<int> out;
  for (const Bus& b : buses_)
    if (b.der && b.id != root_) out.push_back(b.id);
  std::sort(out.begin(), out.end());
  return out;
}

bool FeederModel::operator==(const FeederModel& o) const {
  return buses_ == o.buses_ && lines_ == o.lines_ && base_kva_ == o.base_kva_ &&
         base_kv_ == o.base_kv_ && v_min_ == o.v_min_ && v_max_ == o.v_max_ &&
         v_ref_ == o.v_ref_;
}

namespace {

double get_num(const json& j, const char* key, const char* where) {
  if (!j.contains(key) || !j[key].is_number())
    throw ParseError(std::string("missing or non-numeric '") + key + "' in " + where);
  return j[key].get<double>();
}

}  // namespace

FeederModel load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feeder file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("malformed feeder document: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw ParseError("feeder document is not an object");
  if (!doc.contains("base_kva") || !doc.contains("base_kv"))
    throw ParseError("feeder header must declare base_kva and base_kv");

  const double base_kva = get_num(doc, "base_kva", "header");
  const double base_kv = get_num(doc, "base_kv", "header");
  const double v_min = doc.value("v_min", 0.95);
  const double v_max = doc.value("v_max", 1.05);
  const double v_ref = doc.value("v_ref", 1.0);

  if (!doc.contains("buses") || !doc["buses"].is_array())
    throw ParseError("missing 'buses' array");
  if (!doc.contains("lines") || !doc["lines"].is_array())
    throw ParseError("missing 'lines' array");

  std::vector<Bus> buses;
  for (const json& jb : doc["buses"]) {
    Bus b;
    if (!jb.contains("id") || !jb["id"].is_number_integer())
      throw ParseError("bus without integer id");
    b.id = jb["id"].get<int>();
    if (jb.contains("parent")) b.parent = jb["parent"].get<int>();
    b.p_load = jb.value("p_load", 0.0);
    b.q_load = jb.value("q_load", 0.0);
    b.v_init = jb.value("v_init", 1.02);
    if (jb.contains("der")) {
      const json& jd = jb["der"];
      b.der = DerSpec{get_num(jd, "s_rating", "der"), get_num(jd, "p_out", "der")};
    }
    buses.push_back(b);
  }

  std::vector<Line> lines;
  for (const json& jl : doc["lines"]) {
    Line l;
    l.from_bus = static_cast<int>(get_num(jl, "from", "line"));
    l.to_bus = static_cast<int>(get_num(jl, "to", "line"));
    l.r = get_num(jl, "r", "line");
    l.x = get_num(jl, "x", "line");
    l.i_rated = jl.value("i_rated", 2.0);
    lines.push_back(l);
  }

  // Parents may be omitted in the file; derive them from the lines, and check
  // consistency when both are present.
  std::map<int, int> derived_parent;
  for (const Line& l : lines) {
    if (derived_parent.count(l.to_bus))
      throw ValidationError("bus " + std::to_string(l.to_bus) +
                            " fed by more than one line");
    derived_parent[l.to_bus] = l.from_bus;
  }
  for (Bus& b : buses) {
    auto it = derived_parent.find(b.id);
    if (b.parent) {
      if (it != derived_parent.end() && it->second != *b.parent)
        throw ValidationError("bus " + std::to_string(b.id) +
                              " parent field contradicts line topology");
    } else if (it != derived_parent.end()) {
      b.parent = it->second;
    }
  }

  return FeederModel(std::move(buses), std::move(lines), base_kva, base_kv,
                     v_min, v_max, v_ref);
}

void save_feeder(const FeederModel& model, const std::filesystem::path& path) {
  json doc;
  doc["format_version"] = 1;
  doc["base_kva"] = model.base_kva();
  doc["base_kv"] = model.base_kv();
  doc["v_min"] = model.v_min();
  doc["v_max"] = model.v_max();
  doc["v_ref"] = model.v_ref();
  doc["buses"] = json::array();
  for (const Bus& b : model.buses()) {
    json jb;
    jb["id"] = b.id;
    if (b.parent) jb["parent"] = *b.parent;
    jb["p_load"] = b.p_load;
    jb["q_load"] = b.q_load;
    jb["v_init"] = b.v_init;
    if (b.der) jb["der"] = {{"s_rating", b.der->s_rating}, {"p_out", b.der->p_out}};
    doc["buses"].push_back(jb);
  }
  doc["lines"] = json::array();
  for (const Line& l : model.lines()) {
    doc["lines"].push_back({{"from", l.from_bus},
                            {"to", l.to_bus},
                            {"r", l.r},
                            {"x", l.x},
                            {"i_rated", l.i_rated}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write feeder file: " + path.string());
  out << doc.dump(2) << "\n";
}

namespace {

FeederModel build_generated(const std::vector<std::optional<int>>& parent_of,
                            const FeederGenParams& p) {
  const int n = static_cast<int>(parent_of.size());
  if (!(p.r >= 0 && p.x >= 0 && p.p_load >= 0 && p.q_load >= 0 &&
        p.der_density >= 0 && p.der_density <= 1 && p.s_rating > 0 &&
        p.p_out >= 0 && p.p_out <= p.s_rating && p.i_rated > 0 && p.v_init > 0))
    throw std::invalid_argument("invalid feeder generator parameters");

  std::mt19937_64 rng(p.seed);
  auto jitter = [&]() { return p.randomized ? uniform(rng, 0.5, 1.5) : 1.0; };

  std::vector<Bus> buses;
  std::vector<Line> lines;
  // DER placement: seeded shuffle of non-root buses, first ceil(density * m) get one.
  std::vector<int> order;
  for (int i = 2; i <= n; ++i) order.push_back(i);
  if (p.der_density < 1.0) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(i)))]);
  }
  const std::size_t n_der = static_cast<std::size_t>(
      std::ceil(p.der_density * static_cast<double>(order.size())));
  std::set<int> der_set(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_der));

  for (int id = 1; id <= n; ++id) {
    Bus b;
    b.id = id;
    b.parent = parent_of[static_cast<std::size_t>(id - 1)];
    b.v_init = p.v_init;
    if (id != 1) {
      b.p_load = p.p_load * jitter();
      b.q_load = p.q_load * jitter();
      if (der_set.count(id))
        b.der = DerSpec{p.s_rating * jitter(), p.p_out * jitter()};
      if (b.der && b.der->p_out > b.der->s_rating) b.der->p_out = b.der->s_rating;
    }
    buses.push_back(b);
  }
  for (int id = 2; id <= n; ++id) {
    Line l;
    l.from_bus = *parent_of[static_cast<std::size_t>(id - 1)];
    l.to_bus = id;
    l.r = p.r * jitter();
    l.x = p.x * jitter();
    l.i_rated = p.i_rated;
    lines.push_back(l);
  }
  return FeederModel(std::move(buses), std::move(lines), p.base_kva, p.base_kv,
                     0.95, 1.05, p.v_ref);
}

}  // namespace

FeederModel generate_line_feeder(int n, const FeederGenParams& params) {
  if (n < 2) throw std::invalid_argument("line feeder needs n >= 2");
  std::vector<std::optional<int>> parent(static_cast<std::size_t>(n));
  for (int id = 2; id <= n; ++id) parent[static_cast<std::size_t>(id - 1)] = id - 1;
  return build_generated(parent, params);
}

FeederModel generate_tree_feeder(int branching, int depth,
                                 const FeederGenParams& params) {
  if (branching < 1 || depth < 1)
    throw std::invalid_argument("tree feeder needs branching >= 1, depth >= 1");
  std::vector<std::optional<int>> parent{std::nullopt};
  std::vector<int> frontier{1};
  int next_id = 2;
  for (int level = 1; level < depth; ++level) {
    std::vector<int> next_frontier;
    for (int pid : frontier) {
      for (int c = 0; c < branching; ++c) {
        parent.push_back(pid);
        next_frontier.push_back(next_id++);
      }
    }
    frontier = std::move(next_frontier);
  }
  return build_generated(parent, params);
}

FeederModel generate_random_tree_feeder(int n, const FeederGenParams& params) {
  if (n < 2) throw std::invalid_argument("tree feeder needs n >= 2");
  std::mt19937_64 shape_rng(params.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::optional<int>> parent{std::nullopt};
  for (int id = 2; id <= n; ++id)
    parent.push_back(1 + static_cast<int>(uniform(shape_rng, 0.0, static_cast<double>(id - 1))));
  return build_generated(parent, params);
}

}  // namespace endico
