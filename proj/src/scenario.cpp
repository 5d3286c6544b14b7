#include "noir/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

namespace noir {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

double DisturbanceConfig::forecast_mean() const
{
  if (kind == DisturbanceKind::uniform) {
    if (high <= 0.0)
      return 0.0;
    if (low >= 0.0)
      return 0.5 * (low + high);
    return high * high / (2.0 * (high - low));
  }
  if (std <= 0.0)
    return std::max(mean, 0.0);
  // E[max(X, 0)] for X ~ N(mean, std^2)
  const double a = mean / std;
  const double pdf = std::exp(-0.5 * a * a) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * std::erfc(-a / std::numbers::sqrt2);
  return mean * cdf + std * pdf;
}

namespace {

std::string line_column(std::string_view text, std::size_t byte)
{
  int line = 1, column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

// Field accessors that report the JSON path of the offending value.
class Reader
{
public:
  Reader(const json &node, std::string path) : node_(node), path_(std::move(path)) {}

  const std::string &path() const { return path_; }

  void expect_object(std::initializer_list<std::string_view> allowed) const
  {
    if (!node_.is_object())
      fail("expected an object");
    for (const auto &[key, value] : node_.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw ScenarioError(child_path(key), "unknown key");
    }
  }

  bool has(const std::string &key) const { return node_.contains(key); }

  Reader field(const std::string &key) const
  {
    if (!node_.contains(key))
      throw ScenarioError(child_path(key), "missing required field");
    return Reader(node_.at(key), child_path(key));
  }

  std::vector<Reader> array() const
  {
    if (!node_.is_array())
      fail("expected an array");
    std::vector<Reader> items;
    for (std::size_t i = 0; i < node_.size(); ++i)
      items.emplace_back(node_[i], path_ + "[" + std::to_string(i) + "]");
    return items;
  }

  int integer() const
  {
    if (!node_.is_number_integer())
      fail("expected an integer");
    const auto v = node_.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
      fail("integer out of range");
    return static_cast<int>(v);
  }

  std::uint64_t unsigned_integer() const
  {
    if (!node_.is_number_unsigned())
      fail("expected a non-negative integer");
    return node_.get<std::uint64_t>();
  }

  double number() const
  {
    if (!node_.is_number())
      fail("expected a number");
    const double v = node_.get<double>();
    if (!std::isfinite(v))
      fail("expected a finite number");
    return v;
  }

  std::string string() const
  {
    if (!node_.is_string())
      fail("expected a string");
    return node_.get<std::string>();
  }

  int road(int max_id) const
  {
    const int id = integer();
    if (id < 1 || id > max_id)
      fail("road id " + std::to_string(id) + " does not exist (valid ids 1.." + std::to_string(max_id) + ")");
    return id;
  }

  Edge edge(int max_id) const
  {
    const auto pair = array();
    if (pair.size() != 2)
      fail("expected an [from, to] pair");
    return Edge{pair[0].road(max_id), pair[1].road(max_id)};
  }

  [[noreturn]] void fail(const std::string &message) const { throw ScenarioError(path_, message); }

private:
  std::string child_path(std::string_view key) const
  {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  const json &node_;
  std::string path_;
};

std::vector<int> road_list(const Reader &r, int max_id)
{
  std::vector<int> roads;
  for (const auto &item : r.array()) {
    const int id = item.road(max_id);
    if (std::find(roads.begin(), roads.end(), id) != roads.end())
      item.fail("duplicate road id " + std::to_string(id));
    roads.push_back(id);
  }
  return roads;
}

Junction parse_junction(const Reader &r, int max_id)
{
  r.expect_object({"id", "incoming", "outgoing", "phases", "max_activation"});
  Junction j;
  j.id = r.field("id").integer();
  j.incoming = road_list(r.field("incoming"), max_id);
  j.outgoing = road_list(r.field("outgoing"), max_id);
  for (const auto &phase : r.field("phases").array()) {
    MovementPhase edges;
    for (const auto &e : phase.array())
      edges.push_back(e.edge(max_id));
    j.phases.push_back(std::move(edges));
  }
  j.max_activation = r.field("max_activation").integer();
  return j;
}

ControlConfig parse_control(const Reader &r)
{
  r.expect_object({"horizon", "u0", "rho_max", "u_max", "rho_margin"});
  ControlConfig c;
  c.horizon = r.field("horizon").integer();
  c.u0 = r.field("u0").number();
  c.rho_max = r.field("rho_max").number();
  c.u_max = r.has("u_max") ? r.field("u_max").number() : c.u0;
  c.rho_margin = r.has("rho_margin") ? r.field("rho_margin").number() : 0.0;
  return c;
}

DisturbanceConfig parse_disturbance(const Reader &r)
{
  if (!r.has("kind"))
    r.field("kind");  // raises the missing-field diagnostic
  DisturbanceConfig d;
  const auto kind = r.field("kind").string();
  if (kind == "uniform") {
    r.expect_object({"kind", "low", "high"});
    d.kind = DisturbanceKind::uniform;
    d.low = r.field("low").number();
    d.high = r.field("high").number();
  } else if (kind == "gaussian-truncated") {
    r.expect_object({"kind", "mean", "std"});
    d.kind = DisturbanceKind::gaussian_truncated;
    d.mean = r.field("mean").number();
    d.std = r.field("std").number();
  } else {
    r.field("kind").fail("unknown disturbance kind '" + kind + "'");
  }
  return d;
}

}  // namespace

Scenario parse_scenario(std::string_view text)
{
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error &e) {
    throw ScenarioError(line_column(text, e.byte > 0 ? e.byte - 1 : 0), "malformed JSON");
  }

  const Reader root(doc, "");
  root.expect_object({"roads", "inlets", "edges", "junctions", "turn_ratios", "outflow_probs", "control",
                      "disturbance", "seed", "steps"});

  Scenario s;
  auto &g = s.graph;
  g.n_roads = root.field("roads").integer();
  if (g.n_roads < 1)
    root.field("roads").fail("need at least one road");
  g.n_inlets = root.field("inlets").integer();
  if (g.n_inlets < 0 || g.n_inlets > g.n_roads)
    root.field("inlets").fail("inlet count must lie in 0..roads");
  const int max_id = g.state_size();

  std::set<Edge> seen_edges;
  for (const auto &item : root.field("edges").array()) {
    const Edge e = item.edge(max_id);
    if (!seen_edges.insert(e).second)
      item.fail("duplicate edge [" + std::to_string(e.from) + ", " + std::to_string(e.to) + "]");
    g.edges.push_back(e);
  }

  std::set<int> junction_ids;
  for (const auto &item : root.field("junctions").array()) {
    Junction j = parse_junction(item, max_id);
    if (!junction_ids.insert(j.id).second)
      item.field("id").fail("duplicate junction id " + std::to_string(j.id));
    g.junctions.push_back(std::move(j));
  }

  std::set<Edge> seen_ratios;
  for (const auto &item : root.field("turn_ratios").array()) {
    item.expect_object({"from", "to", "ratio"});
    TurnRatio t{item.field("from").road(max_id), item.field("to").road(max_id), item.field("ratio").number()};
    if (!seen_ratios.insert(Edge{t.from, t.to}).second)
      item.fail("duplicate turn ratio for edge [" + std::to_string(t.from) + ", " + std::to_string(t.to) + "]");
    s.turn_ratios.push_back(t);
  }

  std::set<int> seen_probs;
  for (const auto &item : root.field("outflow_probs").array()) {
    item.expect_object({"road", "p"});
    OutflowProb p{item.field("road").road(max_id), item.field("p").number()};
    if (!seen_probs.insert(p.road).second)
      item.field("road").fail("duplicate road id " + std::to_string(p.road));
    s.outflow_probs.push_back(p);
  }

  s.control = parse_control(root.field("control"));
  s.disturbance = parse_disturbance(root.field("disturbance"));
  s.seed = root.field("seed").unsigned_integer();
  s.steps = root.field("steps").integer();
  return s;
}

Scenario load_scenario(const std::string &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ScenarioError("", "cannot read scenario file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str());
}

std::string serialize_scenario(const Scenario &s)
{
  auto pair = [](Edge e) { return ordered_json::array({e.from, e.to}); };

  ordered_json doc;
  doc["roads"] = s.graph.n_roads;
  doc["inlets"] = s.graph.n_inlets;
  doc["edges"] = ordered_json::array();
  for (const auto &e : s.graph.edges)
    doc["edges"].push_back(pair(e));
  doc["junctions"] = ordered_json::array();
  for (const auto &j : s.graph.junctions) {
    ordered_json node;
    node["id"] = j.id;
    node["incoming"] = j.incoming;
    node["outgoing"] = j.outgoing;
    node["phases"] = ordered_json::array();
    for (const auto &phase : j.phases) {
      ordered_json edges = ordered_json::array();
      for (const auto &e : phase)
        edges.push_back(pair(e));
      node["phases"].push_back(std::move(edges));
    }
    node["max_activation"] = j.max_activation;
    doc["junctions"].push_back(std::move(node));
  }
  doc["turn_ratios"] = ordered_json::array();
  for (const auto &t : s.turn_ratios)
    doc["turn_ratios"].push_back({{"from", t.from}, {"to", t.to}, {"ratio", t.ratio}});
  doc["outflow_probs"] = ordered_json::array();
  for (const auto &p : s.outflow_probs)
    doc["outflow_probs"].push_back({{"road", p.road}, {"p", p.p}});
  doc["control"] = {{"horizon", s.control.horizon},
                    {"u0", s.control.u0},
                    {"rho_max", s.control.rho_max},
                    {"u_max", s.control.u_max},
                    {"rho_margin", s.control.rho_margin}};
  if (s.disturbance.kind == DisturbanceKind::uniform)
    doc["disturbance"] = {{"kind", "uniform"}, {"low", s.disturbance.low}, {"high", s.disturbance.high}};
  else
    doc["disturbance"] = {{"kind", "gaussian-truncated"}, {"mean", s.disturbance.mean}, {"std", s.disturbance.std}};
  doc["seed"] = s.seed;
  doc["steps"] = s.steps;
  return doc.dump(1) + "\n";
}

namespace {

// Breadth-first reachability over `edges` from `sources`, following edges
// forward (or backward when `reverse` is set).
std::vector<char> reachable(int size, const std::vector<Edge> &edges, const std::vector<int> &sources, bool reverse)
{
  std::vector<std::vector<int>> adj(size + 1);
  for (const auto &e : edges) {
    if (e.from < 1 || e.from > size || e.to < 1 || e.to > size)
      continue;
    if (reverse)
      adj[e.to].push_back(e.from);
    else
      adj[e.from].push_back(e.to);
  }
  std::vector<char> seen(size + 1, 0);
  std::queue<int> frontier;
  for (int s : sources) {
    seen[s] = 1;
    frontier.push(s);
  }
  while (!frontier.empty()) {
    const int v = frontier.front();
    frontier.pop();
    for (int w : adj[v])
      if (!seen[w]) {
        seen[w] = 1;
        frontier.push(w);
      }
  }
  return seen;
}

std::string edge_text(Edge e)
{
  return "(" + std::to_string(e.from) + "," + std::to_string(e.to) + ")";
}

}  // namespace

ValidationReport validate(const Scenario &s)
{
  ValidationReport report;
  auto &v = report.violations;
  const auto &g = s.graph;
  const int n = g.n_roads;
  const int exit = g.exit_node();

  if (g.n_inlets < 1)
    v.push_back("network has no inlet roads");

  for (const auto &e : g.edges) {
    if (e.from == e.to)
      v.push_back("self-loop edge " + edge_text(e));
    if (e.from == exit)
      v.push_back("exit node has out-neighbor: edge " + edge_text(e));
    if (e.from <= n && e.to <= n && e.from < e.to && g.has_edge(Edge{e.to, e.from}))
      v.push_back("bidirectional real road pair " + edge_text(e) + " and " + edge_text(Edge{e.to, e.from}));
  }

  for (int r = 1; r <= n; ++r) {
    const bool has_in = !g.in_neighbors(r).empty();
    const bool has_out = !g.out_neighbors(r).empty();
    if (g.is_inlet(r)) {
      if (has_in)
        v.push_back("inlet road " + std::to_string(r) + " has in-neighbors");
    } else if (!has_in) {
      v.push_back("non-inlet road " + std::to_string(r) + " has no in-neighbor");
    }
    if (!has_out)
      v.push_back("road " + std::to_string(r) + " has no out-neighbor (only the exit node may be a sink)");
  }
  report.exit_in_neighbors = g.in_neighbors(exit);
  if (report.exit_in_neighbors.empty())
    v.push_back("exit node has no in-neighbor");

  // Junction structure.
  for (std::size_t idx = 0; idx < g.junctions.size(); ++idx) {
    const auto &j = g.junctions[idx];
    const std::string name = "junction " + std::to_string(j.id);
    if (j.id != static_cast<int>(idx) + 1)
      v.push_back(name + ": junction ids must be 1..m in list order (found at position " +
                  std::to_string(idx + 1) + ")");
    if (j.max_activation < 1)
      v.push_back(name + ": max_activation must be >= 1");
    if (j.phases.empty())
      v.push_back(name + ": has no movement phases");
    for (int r : j.incoming) {
      if (r > n)
        v.push_back(name + ": incoming road " + std::to_string(r) + " is not a real road");
      if (std::find(j.outgoing.begin(), j.outgoing.end(), r) != j.outgoing.end())
        v.push_back(name + ": road " + std::to_string(r) + " is both incoming and outgoing");
    }
    for (int r : j.outgoing)
      if (r > n)
        v.push_back(name + ": outgoing road " + std::to_string(r) + " is not a real road");
    for (std::size_t k = 0; k < j.phases.size(); ++k) {
      const auto &phase = j.phases[k];
      const std::string pname = name + " phase " + std::to_string(k + 1);
      if (phase.empty())
        v.push_back(pname + ": empty edge set");
      for (const auto &e : phase) {
        const bool in_ok = std::find(j.incoming.begin(), j.incoming.end(), e.from) != j.incoming.end();
        const bool out_ok = std::find(j.outgoing.begin(), j.outgoing.end(), e.to) != j.outgoing.end();
        if (!in_ok || !out_ok)
          v.push_back(pname + ": edge " + edge_text(e) + " is not in incoming x outgoing");
        if (!g.has_edge(e))
          v.push_back(pname + ": edge " + edge_text(e) + " is not in the edge set");
      }
    }
  }

  // Reachability on the full edge set.
  std::vector<int> inlets;
  for (int r = 1; r <= g.n_inlets; ++r)
    inlets.push_back(r);
  const auto from_inlets = reachable(g.state_size(), g.edges, inlets, false);
  for (int r = g.n_inlets + 1; r <= n; ++r)
    if (!from_inlets[r])
      v.push_back("internal road " + std::to_string(r) + " is not reachable from any inlet");
  const auto to_exit = reachable(g.state_size(), g.edges, {exit}, true);
  for (int r = 1; r <= n; ++r)
    if (!to_exit[r])
      v.push_back("exit node is not reachable from road " + std::to_string(r));

  // Rate tables.
  std::vector<int> prob_count(g.state_size() + 1, 0);
  std::vector<double> prob(g.state_size() + 1, 0.0);
  for (const auto &p : s.outflow_probs) {
    if (p.road > n) {
      v.push_back("outflow probability given for the exit node");
      continue;
    }
    ++prob_count[p.road];
    prob[p.road] = p.p;
    if (p.p < 0.0 || p.p > 1.0)
      v.push_back("outflow probability of road " + std::to_string(p.road) + " outside [0,1]");
  }
  for (int r = 1; r <= n; ++r)
    if (prob_count[r] == 0)
      v.push_back("road " + std::to_string(r) + " has no outflow probability");

  std::set<Edge> ratio_edges;
  std::vector<std::pair<Edge, double>> ratio_of;
  for (const auto &t : s.turn_ratios) {
    const Edge e{t.from, t.to};
    if (!g.has_edge(e))
      v.push_back("turn ratio given for missing edge " + edge_text(e));
    if (t.ratio < 0.0)
      v.push_back("negative turn ratio on edge " + edge_text(e));
    ratio_edges.insert(e);
    ratio_of.emplace_back(e, t.ratio);
  }
  for (const auto &e : g.edges)
    if (!ratio_edges.count(e))
      v.push_back("edge " + edge_text(e) + " has no turn ratio");

  // Every road that can discharge must have positive total ratio over the
  // out-edges any single phase (plus the uncontrolled edges) opens for it.
  auto ratio = [&](Edge e) {
    for (const auto &[edge, value] : ratio_of)
      if (edge == e)
        return value;
    return 0.0;
  };
  const auto always = uncontrolled_edges(g);
  for (int r = 1; r <= n; ++r) {
    double base = 0.0;
    for (int to : always.out_neighbors(r))
      base += ratio(Edge{r, to});
    if (!always.out_neighbors(r).empty() && base <= 0.0 && prob[r] > 0.0)
      v.push_back("road " + std::to_string(r) + ": turn ratios of its uncontrolled edges sum to zero");
  }
  for (const auto &j : g.junctions)
    for (std::size_t k = 0; k < j.phases.size(); ++k) {
      std::set<int> sources;
      for (const auto &e : j.phases[k])
        sources.insert(e.from);
      for (int src : sources) {
        if (src > n || prob[src] <= 0.0)
          continue;
        double total = 0.0;
        for (const auto &e : j.phases[k])
          if (e.from == src)
            total += ratio(e);
        for (int to : always.out_neighbors(src))
          total += ratio(Edge{src, to});
        if (total <= 0.0)
          v.push_back("junction " + std::to_string(j.id) + " phase " + std::to_string(k + 1) + ": road " +
                      std::to_string(src) + " has zero total turn ratio over its green movements");
      }
    }

  // Control and disturbance parameters.
  const auto &c = s.control;
  if (c.horizon < 1)
    v.push_back("control.horizon must be >= 1");
  if (c.u0 < 0.0)
    v.push_back("control.u0 must be >= 0");
  if (!(c.rho_max > 0.0))
    v.push_back("control.rho_max must be > 0");
  if (c.u_max < 0.0)
    v.push_back("control.u_max must be >= 0");
  if (c.u0 > g.n_inlets * c.u_max)
    v.push_back("control.u0 exceeds n_inlets * u_max");
  if (c.rho_margin < 0.0 || c.rho_margin >= c.rho_max)
    v.push_back("control.rho_margin must lie in [0, rho_max)");
  const auto &d = s.disturbance;
  if (d.kind == DisturbanceKind::uniform && d.low > d.high)
    v.push_back("disturbance.low exceeds disturbance.high");
  if (d.kind == DisturbanceKind::gaussian_truncated && d.std < 0.0)
    v.push_back("disturbance.std must be >= 0");
  if (s.steps < 0)
    v.push_back("steps must be >= 0");

  return report;
}

}  // namespace noir
