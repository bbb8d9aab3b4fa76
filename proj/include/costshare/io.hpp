#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "costshare/dual.hpp"
#include "costshare/dynamics.hpp"
#include "costshare/errors.hpp"
#include "costshare/metric.hpp"
#include "costshare/rational.hpp"
#include "costshare/routing.hpp"

namespace costshare::io {

using nlohmann::json;

inline json rat(const Rational& x) { return to_string(x); }

/// Accepts "p/q" strings, decimal strings and JSON integers.
inline Rational parse_rat(const json& j) {
  if (j.is_string()) return parse_rational(j.get<std::string>());
  if (j.is_number_integer()) return Rational(mpz_class(std::to_string(j.get<long long>())));
  if (j.is_number_float()) throw ConfigError("floating-point cost " + j.dump() + "; write it as a \"p/q\" string");
  throw ConfigError("expected a rational, got " + j.dump());
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed " + what + ": " + e.what());
  }
}

// ---------------------------------------------------------------- instances

/// Instance file. "edges" holds [u, v, "p/q"] triples: graph edges for
/// kind "weighted-graph", every pair for kind "metric". Kind "euclidean" uses
/// "points" ([x, y] rationals, root first).
struct InstanceFile {
  std::string kind = "weighted-graph";
  std::size_t vertices = 1;
  std::vector<WeightedEdge> edges;
  std::vector<Point> points;
  std::string note;
};

inline json to_json(const InstanceFile& f) {
  json j;
  j["kind"] = f.kind;
  json vs = json::array();
  for (std::size_t v = 0; v < f.vertices; ++v) vs.push_back(v);
  j["vertices"] = vs;
  if (f.kind == "euclidean") {
    json ps = json::array();
    for (const Point& p : f.points) ps.push_back(json::array({rat(p.x), rat(p.y)}));
    j["points"] = ps;
  } else {
    json es = json::array();
    for (const auto& e : f.edges) es.push_back(json::array({e.u, e.v, rat(e.weight)}));
    j["edges"] = es;
  }
  if (!f.note.empty()) j["note"] = f.note;
  return j;
}

inline InstanceFile instance_file_from_json(const json& j) {
  try {
    InstanceFile f;
    f.kind = j.value("kind", std::string("weighted-graph"));
    if (f.kind != "weighted-graph" && f.kind != "metric" && f.kind != "euclidean")
      throw ConfigError("unknown instance kind '" + f.kind + "'");
    if (j.contains("points"))
      for (const auto& p : j.at("points")) {
        if (!p.is_array() || p.size() != 2) throw ConfigError("points must be [x, y] pairs");
        f.points.push_back({parse_rat(p[0]), parse_rat(p[1])});
      }
    if (j.contains("edges"))
      for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 3) throw ConfigError("edges must be [u, v, \"p/q\"] triples");
        f.edges.push_back({e[0].get<VertexId>(), e[1].get<VertexId>(), parse_rat(e[2])});
      }
    if (j.contains("vertices")) {
      const auto& vs = j.at("vertices");
      if (vs.is_number_unsigned()) {
        f.vertices = vs.get<std::size_t>();
      } else {
        f.vertices = vs.size();
        for (std::size_t i = 0; i < vs.size(); ++i)
          if (vs[i].get<std::size_t>() != i) throw ConfigError("vertex ids must be 0..n-1 in order");
      }
    } else {
      f.vertices = f.kind == "euclidean" ? f.points.size() : 1;
      for (const auto& e : f.edges) f.vertices = std::max<std::size_t>(f.vertices, std::max(e.u, e.v) + std::size_t{1});
    }
    if (f.kind == "euclidean" && f.points.size() != f.vertices)
      throw ConfigError("euclidean instance lists " + std::to_string(f.points.size()) + " points for " +
                        std::to_string(f.vertices) + " vertices");
    f.note = j.value("note", std::string());
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed instance: ") + e.what());
  }
}

inline MetricInstance build_instance(const InstanceFile& f) {
  if (f.vertices == 0) throw ConfigError("instance needs at least the root");
  for (const auto& e : f.edges)
    if (e.u >= f.vertices || e.v >= f.vertices)
      throw ConfigError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") names an unknown vertex");
  if (f.kind == "euclidean") return MetricInstance::from_points(f.points);
  if (f.kind == "weighted-graph") return metric_closure(f.vertices, f.edges);
  std::vector<Rational> costs(f.vertices * f.vertices);
  std::vector<char> given(f.vertices * f.vertices, 0);
  for (const auto& e : f.edges) {
    costs[e.u * f.vertices + e.v] = e.weight;
    costs[e.v * f.vertices + e.u] = e.weight;
    given[e.u * f.vertices + e.v] = given[e.v * f.vertices + e.u] = 1;
  }
  for (std::size_t a = 0; a < f.vertices; ++a)
    for (std::size_t b = a + 1; b < f.vertices; ++b)
      if (!given[a * f.vertices + b])
        throw MetricError("metric instance misses the cost of pair (" + std::to_string(a) + "," + std::to_string(b) + ")");
  return MetricInstance::from_matrix(f.vertices, std::move(costs));
}

/// Lossless description of an instance already built in memory.
inline InstanceFile describe(const MetricInstance& m) {
  InstanceFile f;
  f.vertices = m.size();
  if (m.provenance() == Provenance::euclidean) {
    f.kind = "euclidean";
    f.points = m.points();
    return f;
  }
  f.kind = "metric";
  for (VertexId a = 0; a < m.size(); ++a)
    for (VertexId b = a + 1; b < m.size(); ++b) f.edges.push_back({a, b, m.cost(a, b)});
  return f;
}

inline InstanceFile describe_graph(std::size_t vertices, std::vector<WeightedEdge> edges, std::string note = {}) {
  InstanceFile f;
  f.kind = "weighted-graph";
  f.vertices = vertices;
  f.edges = std::move(edges);
  f.note = std::move(note);
  return f;
}

// ---------------------------------------------------------------- schedules

inline json to_json(const ScheduleEvent& e) {
  if (const auto* a = std::get_if<Arrival>(&e)) {
    json agents = json::array();
    for (const auto& [v, c] : a->agents) agents.push_back(json::array({v, c}));
    return {{"kind", "arrive"}, {"agents", agents}};
  }
  return {{"kind", "depart"}, {"vertices", std::get<Departure>(e).vertices}};
}

inline json to_json(const Schedule& s) {
  json events = json::array();
  for (const auto& e : s) events.push_back(to_json(e));
  return {{"events", events}};
}

inline Schedule schedule_from_json(const json& j) {
  try {
    Schedule s;
    const json& events = j.is_array() ? j : j.at("events");
    for (const auto& e : events) {
      const std::string kind = e.at("kind").get<std::string>();
      if (kind == "arrive") {
        Arrival a;
        for (const auto& x : e.at("agents")) {
          if (x.is_array()) {
            if (x.size() != 2) throw ConfigError("arrival entries are [vertex, count]");
            a.agents.emplace_back(x[0].get<VertexId>(), x[1].get<std::uint64_t>());
          } else {
            a.agents.emplace_back(x.get<VertexId>(), 1);
          }
        }
        s.push_back(std::move(a));
      } else if (kind == "depart") {
        s.push_back(Departure{e.at("vertices").get<std::vector<VertexId>>()});
      } else {
        throw ConfigError("unknown event kind '" + kind + "'");
      }
    }
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed schedule: ") + e.what());
  }
}

// ---------------------------------------------------------------- snapshots

struct Snapshot {
  std::string mode = "eqp";
  InstanceFile instance;
  std::vector<VertexId> revealed;
  std::map<VertexId, TerminalGroup> terminals;
  std::map<Edge, std::uint64_t> usage;
  std::optional<Rational> potential;
  std::optional<VertexId> last_mover;
};

inline json snapshot_json(const RoutingState& s, Mode mode, const InstanceFile& instance) {
  json j;
  j["format"] = "costshare-snapshot";
  j["mode"] = to_string(mode);
  j["instance"] = to_json(instance);
  j["revealed"] = s.view().order();
  json ts = json::array();
  for (const auto& [v, g] : s.terminals()) ts.push_back({{"vertex", v}, {"agents", g.agents}, {"path", g.path}});
  j["terminals"] = ts;
  json us = json::array();
  for (const auto& [e, n] : s.usage()) us.push_back(json::array({e.a, e.b, n}));
  j["usage"] = us;
  j["potential"] = rat(potential(s));
  j["total_cost"] = rat(total_cost(s));
  j["last_mover"] = s.last_mover() ? json(*s.last_mover()) : json(nullptr);
  return j;
}

inline json snapshot_json(const RoutingState& s, Mode mode) { return snapshot_json(s, mode, describe(s.metric())); }

inline Snapshot snapshot_from_json(const json& j) {
  try {
    Snapshot snap;
    snap.mode = j.value("mode", std::string("eqp"));
    snap.instance = instance_file_from_json(j.at("instance"));
    if (j.contains("revealed")) snap.revealed = j.at("revealed").get<std::vector<VertexId>>();
    for (const auto& t : j.at("terminals")) {
      const auto v = t.at("vertex").get<VertexId>();
      TerminalGroup g{t.value("agents", std::uint64_t{1}), t.at("path").get<Path>()};
      if (!snap.terminals.emplace(v, std::move(g)).second)
        throw ConfigError("terminal " + std::to_string(v) + " listed twice");
    }
    for (const auto& u : j.at("usage")) {
      if (!u.is_array() || u.size() != 3) throw ConfigError("usage entries are [a, b, count]");
      snap.usage[Edge::of(u[0].get<VertexId>(), u[1].get<VertexId>())] += u[2].get<std::uint64_t>();
    }
    if (j.contains("potential")) snap.potential = parse_rat(j.at("potential"));
    if (j.contains("last_mover") && !j.at("last_mover").is_null()) snap.last_mover = j.at("last_mover").get<VertexId>();
    return snap;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed snapshot: ") + e.what());
  }
}

inline RoutingState restore(const Snapshot& snap) {
  auto metric = std::make_shared<const MetricInstance>(build_instance(snap.instance));
  MetricView view(metric, snap.revealed.empty() ? MetricView::Reveal::all : MetricView::Reveal::root_only);
  for (VertexId v : snap.revealed) view.reveal(v);
  return RoutingState::from_parts(std::move(view), snap.terminals, snap.usage, snap.last_mover);
}

// ---------------------------------------------------------------- event logs

inline json to_json(const LogEntry& e) {
  json j;
  j["epoch"] = e.epoch;
  j["kind"] = to_string(e.kind);
  switch (e.kind) {
    case EntryKind::arrival: {
      j["agents"] = to_json(ScheduleEvent{e.arrival})["agents"];
      json paths = json::array();
      for (const auto& [v, p] : e.arrival_paths) paths.push_back({{"vertex", v}, {"path", p}});
      j["paths"] = paths;
      break;
    }
    case EntryKind::departure: j["vertices"] = e.departure.vertices; break;
    case EntryKind::move:
      j["u"] = e.move.u;
      j["v"] = e.move.v;
      j["rule"] = to_string(e.move.tag);
      break;
  }
  j["phi_before"] = rat(e.phi_before);
  j["phi_after"] = rat(e.phi_after);
  j["cost"] = rat(e.cost_after);
  if (e.class_before) j["class_before"] = to_string(*e.class_before);
  if (e.class_after) j["class_after"] = to_string(*e.class_after);
  return j;
}

inline StateKind parse_state_kind(const std::string& s) {
  for (StateKind k : {StateKind::balanced_equilibrium, StateKind::balanced, StateKind::leaf_unbalanced,
                      StateKind::non_leaf_unbalanced})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown state class '" + s + "'");
}

inline LogEntry log_entry_from_json(const json& j) {
  try {
    LogEntry e;
    e.epoch = j.at("epoch").get<std::size_t>();
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "arrival") {
      e.kind = EntryKind::arrival;
      e.arrival = std::get<Arrival>(schedule_from_json(json::array({{{"kind", "arrive"}, {"agents", j.at("agents")}}}))[0]);
      for (const auto& p : j.at("paths")) e.arrival_paths.emplace_back(p.at("vertex").get<VertexId>(), p.at("path").get<Path>());
    } else if (kind == "departure") {
      e.kind = EntryKind::departure;
      e.departure.vertices = j.at("vertices").get<std::vector<VertexId>>();
    } else if (kind == "move") {
      e.kind = EntryKind::move;
      e.move = TreeMove{j.at("u").get<VertexId>(), j.at("v").get<VertexId>(), parse_rule_tag(j.at("rule").get<std::string>())};
    } else {
      throw ConfigError("unknown log entry kind '" + kind + "'");
    }
    e.phi_before = parse_rat(j.at("phi_before"));
    e.phi_after = parse_rat(j.at("phi_after"));
    e.cost_after = parse_rat(j.at("cost"));
    if (j.contains("class_before")) e.class_before = parse_state_kind(j.at("class_before").get<std::string>());
    if (j.contains("class_after")) e.class_after = parse_state_kind(j.at("class_after").get<std::string>());
    return e;
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed log entry: ") + ex.what());
  }
}

/// JSON lines: a header object with the run configuration, then one entry per line.
inline std::string log_jsonl(const json& header, const EventLog& log) {
  std::string out = json{{"header", header}}.dump() + "\n";
  for (const auto& e : log.entries) out += to_json(e).dump() + "\n";
  return out;
}

struct ParsedLog {
  json header;
  EventLog log;
};

inline ParsedLog parse_log_jsonl(const std::string& text) {
  ParsedLog out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = parse_json(line, "log line");
    if (j.contains("header"))
      out.header = j.at("header");
    else
      out.log.entries.push_back(log_entry_from_json(j));
  }
  return out;
}

// ---------------------------------------------------------------- reports

inline json to_json(const AccountingReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"level", row.level},
                    {"components", row.components},
                    {"charged_cuts", row.charged_cuts},
                    {"charging_edges", row.charging_edges},
                    {"charged_cost", rat(row.charged_cost)},
                    {"bound", rat(row.bound)},
                    {"lower_bound", rat(row.lower_bound)}});
  return {{"vertices", r.vertices},
          {"total_cost", rat(r.total_cost)},
          {"opt", rat(r.opt)},
          {"max_edge", rat(r.max_edge)},
          {"ignored_cost", rat(r.ignored_cost)},
          {"ignored_edges", r.ignored_edges},
          {"window_levels", r.window_levels},
          {"charged_levels", r.charged_levels},
          {"certificate", rat(r.certificate)},
          {"ratio", rat(r.ratio)},
          {"ratio_decimal", to_decimal(r.ratio)},
          {"ratio_gate", r.ratio_gate},
          {"each_cut_once", r.each_cut_once},
          {"certified", r.certified},
          {"failures", r.failures},
          {"levels", rows}};
}

inline std::string accounting_csv(const AccountingReport& r) {
  std::string out = "level,components,charged_cuts,charged_cost,bound,lower_bound\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.level) + "," + std::to_string(row.components) + "," + std::to_string(row.charged_cuts) + "," +
           to_string(row.charged_cost) + "," + to_string(row.bound) + "," + to_string(row.lower_bound) + "\n";
  return out;
}

inline json to_json(const EquilibriumVerdict& v) {
  json j{{"equilibrium", v.equilibrium()},
         {"terminal_equilibrium", v.terminal_equilibrium},
         {"steiner_equilibrium", v.steiner_equilibrium}};
  if (v.witness)
    j["witness"] = {{"vertex", v.witness->vertex},
                    {"terminal", v.witness->terminal},
                    {"route", v.witness->route},
                    {"current_share", rat(v.witness->current_share)},
                    {"improved_share", rat(v.witness->improved_share)}};
  return j;
}

}  // namespace costshare::io
