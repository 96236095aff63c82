#include "gridloop/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <string>

#include "gridloop/error.hpp"
#include "gridloop/keyed_random.hpp"

namespace gridloop {

namespace {

constexpr double kFeasibleTol = 1e-12;

std::string line_label(std::size_t index, const Line& line) {
  std::ostringstream os;
  os << "line " << index << " (" << line.from << "->" << line.to << ")";
  return os.str();
}

void check_feasible_set(int id, const FeasibleSet& fs) {
  auto fail = [id](const std::string& why) {
    throw Error(ErrorCode::invalid_argument,
                "empty feasible set at node " + std::to_string(id) + ": " + why);
  };
  if (std::isnan(fs.p_min) || std::isnan(fs.p_max) || std::isnan(fs.q_min) || std::isnan(fs.q_max))
    fail("NaN bound");
  if (fs.p_min > fs.p_max) fail("pmin > pmax");
  if (fs.q_min > fs.q_max) fail("qmin > qmax");
  if (fs.s_max) {
    if (!(*fs.s_max > 0.0) || !std::isfinite(*fs.s_max)) fail("smax must be positive and finite");
    // The box point closest to the origin must reach the disk.
    const double p = std::clamp(0.0, fs.p_min, fs.p_max);
    const double q = std::clamp(0.0, fs.q_min, fs.q_max);
    if (std::hypot(p, q) > *fs.s_max) fail("box does not meet the apparent-power disk");
  }
}

double json_bound(const nlohmann::json& obj, const char* key, double fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  return it->get<double>();
}

nlohmann::json bound_to_json(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

std::vector<std::string> split_csv_row(const std::string& row) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(row);
  while (std::getline(is, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? std::string() : cell.substr(first, last - first + 1));
  }
  if (!row.empty() && row.back() == ',') cells.emplace_back();
  return cells;
}

// Header-addressed CSV table.
struct CsvTable {
  std::map<std::string, std::size_t> column;
  std::vector<std::vector<std::string>> rows;

  static CsvTable read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::parse, path.string() + ": missing header");
    const auto header = split_csv_row(line);
    for (std::size_t i = 0; i < header.size(); ++i) t.column[header[i]] = i;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      t.rows.push_back(split_csv_row(line));
    }
    return t;
  }

  bool has(const std::string& name) const { return column.count(name) != 0; }

  const std::string& cell(std::size_t row, const std::string& name, const std::filesystem::path& path) const {
    auto it = column.find(name);
    if (it == column.end()) throw Error(ErrorCode::parse, path.string() + ": missing column '" + name + "'");
    if (it->second >= rows[row].size())
      throw Error(ErrorCode::parse, path.string() + ": row " + std::to_string(row + 1) + " is short");
    return rows[row][it->second];
  }
};

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::parse, where + ": not a number: '" + s + "'");
  }
}

}  // namespace

bool FeasibleSet::contains(double p, double q, double tol) const {
  if (p < p_min - tol || p > p_max + tol || q < q_min - tol || q > q_max + tol) return false;
  if (s_max) return std::hypot(p, q) <= *s_max + tol;
  return true;
}

NetworkModel NetworkModel::create(double v0, std::vector<Node> nodes, std::vector<Line> lines,
                                  std::vector<FeasibleSet> feasible) {
  if (!(v0 > 0.0) || !std::isfinite(v0))
    throw Error(ErrorCode::invalid_argument, "slack voltage v0 must be positive");

  // A slack entry in the node list is allowed and dropped.
  std::erase_if(nodes, [](const Node& n) { return n.id == 0; });
  const int n = static_cast<int>(nodes.size());
  if (n < 1) throw Error(ErrorCode::invalid_argument, "network needs at least one non-slack node");
  if (feasible.empty()) feasible.assign(nodes.size(), FeasibleSet{});
  if (feasible.size() != nodes.size())
    throw Error(ErrorCode::invalid_argument, "one feasible set per node is required");

  std::vector<std::size_t> perm(nodes.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return nodes[a].id < nodes[b].id; });

  NetworkModel net;
  net.v0_ = v0;
  for (int k = 0; k < n; ++k) {
    const Node& nd = nodes[perm[k]];
    if (nd.id < 0) throw Error(ErrorCode::invalid_argument, "negative node id " + std::to_string(nd.id));
    if (k > 0 && nd.id == net.nodes_.back().id)
      throw Error(ErrorCode::invalid_argument, "duplicate node id " + std::to_string(nd.id));
    if (nd.id != k + 1)
      throw Error(ErrorCode::invalid_argument,
                  "node ids must be contiguous 1..N; missing node " + std::to_string(k + 1));
    if (!std::isfinite(nd.p0) || !std::isfinite(nd.q0))
      throw Error(ErrorCode::invalid_argument, "non-finite nominal injection at node " + std::to_string(nd.id));
    if (!std::isfinite(nd.shunt.real()) || !std::isfinite(nd.shunt.imag()))
      throw Error(ErrorCode::invalid_argument, "non-finite shunt at node " + std::to_string(nd.id));
    check_feasible_set(nd.id, feasible[perm[k]]);
    net.nodes_.push_back(nd);
    net.feasible_.push_back(feasible[perm[k]]);
  }

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const Line& ln = lines[i];
    for (int end : {ln.from, ln.to})
      if (end < 0 || end > n)
        throw Error(ErrorCode::topology, "dangling line endpoint: " + line_label(i, ln) + " references unknown node " +
                                             std::to_string(end));
    if (ln.from == ln.to) throw Error(ErrorCode::topology, "non-radial topology: " + line_label(i, ln) + " is a self-loop");
    if (!std::isfinite(ln.z.real()) || !std::isfinite(ln.z.imag()) || ln.z.real() < 0.0)
      throw Error(ErrorCode::invalid_argument, line_label(i, ln) + ": resistance must be finite and >= 0");
    if (std::abs(ln.z) == 0.0)
      throw Error(ErrorCode::invalid_argument, line_label(i, ln) + ": zero impedance");
  }

  // Breadth-first walk from the substation; each line may be used once.
  std::vector<std::vector<std::size_t>> incident(n + 1);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    incident[lines[i].from].push_back(i);
    incident[lines[i].to].push_back(i);
  }
  net.parent_.assign(n + 1, -1);
  net.children_.assign(n + 1, {});
  net.feeder_.assign(n, -1);
  std::vector<int> depth(n + 1, -1);
  std::vector<bool> used(lines.size(), false);
  depth[0] = 0;
  std::queue<int> frontier;
  frontier.push(0);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (std::size_t li : incident[u]) {
      if (used[li]) continue;
      used[li] = true;
      Line& ln = lines[li];
      const int v = ln.from == u ? ln.to : ln.from;
      if (depth[v] >= 0)
        throw Error(ErrorCode::topology, "non-radial topology: " + line_label(li, ln) + " closes a loop");
      ln.from = u;
      ln.to = v;
      depth[v] = depth[u] + 1;
      net.parent_[v] = u;
      net.children_[u].push_back(v);
      net.feeder_[v - 1] = static_cast<int>(li);
      net.order_.push_back(v);
      net.depth_ = std::max(net.depth_, depth[v]);
      frontier.push(v);
    }
  }
  for (int id = 1; id <= n; ++id)
    if (depth[id] < 0)
      throw Error(ErrorCode::topology, "disconnected network: node " + std::to_string(id) + " is not reachable from the substation");
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (!used[i]) throw Error(ErrorCode::topology, "non-radial topology: " + line_label(i, lines[i]) + " is not on the tree");
  net.lines_ = std::move(lines);
  return net;
}

Eigen::VectorXd NetworkModel::nominal_p() const {
  Eigen::VectorXd v(size());
  for (int i = 0; i < size(); ++i) v[i] = nodes_[i].p0;
  return v;
}

Eigen::VectorXd NetworkModel::nominal_q() const {
  Eigen::VectorXd v(size());
  for (int i = 0; i < size(); ++i) v[i] = nodes_[i].q0;
  return v;
}

NetworkModel network_from_json(const nlohmann::json& doc) {
  try {
    const double v0 = doc.value("v0", 1.0);
    std::vector<Node> nodes;
    std::vector<FeasibleSet> feasible;
    for (const auto& jn : doc.at("nodes")) {
      Node nd;
      nd.id = jn.at("id").get<int>();
      nd.p0 = jn.value("p0", 0.0);
      nd.q0 = jn.value("q0", 0.0);
      nd.shunt = Complex(jn.value("shunt_g", 0.0), jn.value("shunt_b", 0.0));
      FeasibleSet fs;
      fs.p_min = json_bound(jn, "pmin", fs.p_min);
      fs.p_max = json_bound(jn, "pmax", fs.p_max);
      fs.q_min = json_bound(jn, "qmin", fs.q_min);
      fs.q_max = json_bound(jn, "qmax", fs.q_max);
      if (auto it = jn.find("smax"); it != jn.end() && !it->is_null()) fs.s_max = it->get<double>();
      nodes.push_back(nd);
      feasible.push_back(fs);
    }
    std::vector<Line> lines;
    for (const auto& jl : doc.at("lines")) {
      Line ln;
      ln.from = jl.at("from").get<int>();
      ln.to = jl.at("to").get<int>();
      ln.z = Complex(jl.at("r").get<double>(), jl.at("x").get<double>());
      lines.push_back(ln);
    }
    // Drop feasible entries that belonged to a listed slack node.
    std::vector<FeasibleSet> fs_kept;
    std::vector<Node> kept;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].id == 0) continue;
      kept.push_back(nodes[i]);
      fs_kept.push_back(feasible[i]);
    }
    return NetworkModel::create(v0, std::move(kept), std::move(lines), std::move(fs_kept));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, std::string("network JSON: ") + e.what());
  }
}

nlohmann::json network_to_json(const NetworkModel& net) {
  nlohmann::json doc;
  doc["v0"] = net.v0();
  doc["nodes"] = nlohmann::json::array();
  for (int id = 1; id <= net.size(); ++id) {
    const Node& nd = net.node(id);
    const FeasibleSet& fs = net.feasible_set(id);
    doc["nodes"].push_back({{"id", nd.id},
                            {"p0", nd.p0},
                            {"q0", nd.q0},
                            {"shunt_g", nd.shunt.real()},
                            {"shunt_b", nd.shunt.imag()},
                            {"pmin", bound_to_json(fs.p_min)},
                            {"pmax", bound_to_json(fs.p_max)},
                            {"qmin", bound_to_json(fs.q_min)},
                            {"qmax", bound_to_json(fs.q_max)},
                            {"smax", fs.s_max ? nlohmann::json(*fs.s_max) : nlohmann::json(nullptr)}});
  }
  doc["lines"] = nlohmann::json::array();
  for (const Line& ln : net.lines())
    doc["lines"].push_back({{"from", ln.from}, {"to", ln.to}, {"r", ln.z.real()}, {"x", ln.z.imag()}});
  return doc;
}

NetworkModel load_network_csv(const std::filesystem::path& buses_csv, const std::filesystem::path& branches_csv,
                              double v0) {
  const CsvTable buses = CsvTable::read(buses_csv);
  const CsvTable branches = CsvTable::read(branches_csv);
  std::vector<Node> nodes;
  std::vector<FeasibleSet> feasible;
  for (std::size_t r = 0; r < buses.rows.size(); ++r) {
    const std::string where = buses_csv.string() + " row " + std::to_string(r + 1);
    auto num = [&](const std::string& col, double fallback) {
      if (!buses.has(col)) return fallback;
      const std::string& c = buses.cell(r, col, buses_csv);
      return c.empty() ? fallback : parse_double(c, where);
    };
    Node nd;
    nd.id = static_cast<int>(parse_double(buses.cell(r, "id", buses_csv), where));
    nd.p0 = parse_double(buses.cell(r, "p0", buses_csv), where);
    nd.q0 = parse_double(buses.cell(r, "q0", buses_csv), where);
    nd.shunt = Complex(num("shunt_g", 0.0), num("shunt_b", 0.0));
    FeasibleSet fs;
    fs.p_min = num("pmin", fs.p_min);
    fs.p_max = num("pmax", fs.p_max);
    fs.q_min = num("qmin", fs.q_min);
    fs.q_max = num("qmax", fs.q_max);
    if (buses.has("smax") && !buses.cell(r, "smax", buses_csv).empty()) fs.s_max = num("smax", 0.0);
    if (nd.id == 0) continue;
    nodes.push_back(nd);
    feasible.push_back(fs);
  }
  std::vector<Line> lines;
  for (std::size_t r = 0; r < branches.rows.size(); ++r) {
    const std::string where = branches_csv.string() + " row " + std::to_string(r + 1);
    Line ln;
    ln.from = static_cast<int>(parse_double(branches.cell(r, "from", branches_csv), where));
    ln.to = static_cast<int>(parse_double(branches.cell(r, "to", branches_csv), where));
    ln.z = Complex(parse_double(branches.cell(r, "r", branches_csv), where),
                   parse_double(branches.cell(r, "x", branches_csv), where));
    lines.push_back(ln);
  }
  return NetworkModel::create(v0, std::move(nodes), std::move(lines), std::move(feasible));
}

NetworkModel load_network(const std::filesystem::path& path, NetworkFormat format) {
  if (format == NetworkFormat::automatic)
    format = std::filesystem::is_directory(path) ? NetworkFormat::csv_pair : NetworkFormat::json;
  if (format == NetworkFormat::csv_pair) {
    const auto dir = std::filesystem::is_directory(path) ? path : path.parent_path();
    return load_network_csv(dir / "buses.csv", dir / "branches.csv");
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open network file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": " + e.what());
  }
  return network_from_json(doc);
}

NetworkModel synthetic_radial_feeder(int n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::invalid_argument, "synthetic feeder needs n >= 1");
  std::vector<Node> nodes;
  std::vector<Line> lines;
  std::vector<FeasibleSet> feasible;
  auto uniform = [seed](std::uint64_t stream, int id, double lo, double hi) {
    return lo + (hi - lo) * unit_uniform(mix_key(seed, stream, static_cast<std::uint64_t>(id)));
  };
  for (int id = 1; id <= n; ++id) {
    // Random recursive tree: logarithmic depth, heavy trunk near the root.
    const int parent = static_cast<int>(std::floor(unit_uniform(mix_key(seed, 1, id)) * id - 1e-12));
    const double r = uniform(2, id, 7e-3, 28e-3);
    const double x = r * uniform(3, id, 0.8, 1.6);
    const double p0 = -uniform(4, id, 0.2e-3, 1.0e-3);
    const double q0 = p0 * uniform(5, id, 0.3, 0.6);
    nodes.push_back({id, p0, q0, {0.0, 0.0}});
    lines.push_back({parent, id, {r, x}});
    FeasibleSet fs;
    fs.p_min = p0;
    fs.p_max = 0.0;
    fs.q_min = q0;
    fs.q_max = 0.0;
    feasible.push_back(fs);
  }
  return NetworkModel::create(1.0, std::move(nodes), std::move(lines), std::move(feasible));
}

AdmittanceMatrices build_admittance(const NetworkModel& net) {
  const int n = net.size();
  std::vector<Eigen::Triplet<Complex>> entries;
  entries.reserve(4 * net.lines().size() + n);
  AdmittanceMatrices out;
  out.y_bar = Eigen::VectorXcd::Zero(n);
  for (int id = 1; id <= n; ++id) entries.emplace_back(id - 1, id - 1, net.node(id).shunt);
  for (const Line& ln : net.lines()) {
    const Complex y = ln.admittance();
    if (ln.from == 0) {
      out.y00 += y;
      out.y_bar[ln.to - 1] -= y;
      entries.emplace_back(ln.to - 1, ln.to - 1, y);
      continue;
    }
    const int a = ln.from - 1;
    const int b = ln.to - 1;
    entries.emplace_back(a, a, y);
    entries.emplace_back(b, b, y);
    entries.emplace_back(a, b, -y);
    entries.emplace_back(b, a, -y);
  }
  out.Y.resize(n, n);
  out.Y.setFromTriplets(entries.begin(), entries.end());
  return out;
}

std::pair<double, double> project_feasible(double p, double q, const FeasibleSet& set) {
  if (set.contains(p, q, kFeasibleTol)) return {p, q};
  const double cp = std::clamp(p, set.p_min, set.p_max);
  const double cq = std::clamp(q, set.q_min, set.q_max);
  if (!set.s_max) return {cp, cq};

  // Box and disk are both convex, so the projection is the box clamp or the
  // radial point when either already lies in the other set; otherwise it sits
  // on a box edge, clipped to the disk.
  const double s = *set.s_max;
  if (std::hypot(cp, cq) <= s) return {cp, cq};
  const double norm = std::hypot(p, q);
  if (norm > 0.0) {
    const double rp = p * s / norm;
    const double rq = q * s / norm;
    if (rp >= set.p_min && rp <= set.p_max && rq >= set.q_min && rq <= set.q_max) return {rp, rq};
  }

  double best = std::numeric_limits<double>::infinity();
  std::pair<double, double> arg{cp, cq};
  auto consider = [&](double ep, double eq) {
    const double d = (ep - p) * (ep - p) + (eq - q) * (eq - q);
    if (d < best) {
      best = d;
      arg = {ep, eq};
    }
  };
  // Edges p = const: q ranges over [q_min, q_max] cut by the disk.
  for (double pe : {set.p_min, set.p_max}) {
    if (!std::isfinite(pe) || std::abs(pe) > s) continue;
    const double h = std::sqrt(s * s - pe * pe);
    const double lo = std::max(set.q_min, -h);
    const double hi = std::min(set.q_max, h);
    if (lo <= hi) consider(pe, std::clamp(q, lo, hi));
  }
  for (double qe : {set.q_min, set.q_max}) {
    if (!std::isfinite(qe) || std::abs(qe) > s) continue;
    const double h = std::sqrt(s * s - qe * qe);
    const double lo = std::max(set.p_min, -h);
    const double hi = std::min(set.p_max, h);
    if (lo <= hi) consider(std::clamp(p, lo, hi), qe);
  }
  if (!std::isfinite(best)) throw Error(ErrorCode::invalid_argument, "projection onto an empty feasible set");
  return arg;
}

}  // namespace gridloop
