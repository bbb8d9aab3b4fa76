#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "costshare/dual.hpp"
#include "costshare/dynamics.hpp"
#include "costshare/errors.hpp"
#include "costshare/instances.hpp"
#include "costshare/io.hpp"
#include "costshare/metric.hpp"
#include "costshare/rational.hpp"
#include "costshare/routing.hpp"

namespace costshare::experiment {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kInvariantError = 3, kVerificationFailure = 4 };

inline Mode parse_mode(const std::string& s) {
  if (s == "eqp") return Mode::eqp;
  if (s == "noneqp") return Mode::noneqp;
  throw ConfigError("unknown mode '" + s + "' (expected eqp or noneqp)");
}

inline BatchOrder parse_batch_order(const std::string& s) {
  for (BatchOrder b : {BatchOrder::snapshot, BatchOrder::sequential})
    if (to_string(b) == s) return b;
  throw ConfigError("unknown batch order '" + s + "'");
}

inline EquilibriumCheck parse_equilibrium_check(const std::string& s) {
  for (EquilibriumCheck c : {EquilibriumCheck::every_epoch, EquilibriumCheck::final_only, EquilibriumCheck::off})
    if (to_string(c) == s) return c;
  throw ConfigError("unknown equilibrium check '" + s + "'");
}

/// Everything that determines a run. Output location and tracing do not
/// affect results and are left out of the serialized form.
struct ExperimentConfig {
  Mode mode = Mode::eqp;
  /// Empty: read instance_path / schedule_path. Otherwise gm, euclidean or steiner-gap.
  std::string generator;
  std::string instance_path;
  std::string schedule_path;
  int m = 3;
  std::uint64_t n = 50;
  std::uint64_t seed = 1;
  EpochProfile profile = EpochProfile::churn;
  SigmaOrder order = SigmaOrder::lexicographic;
  std::uint64_t denominator = 10000;
  BatchOrder batch_order = BatchOrder::snapshot;
  std::uint64_t move_ceiling = 0;
  EquilibriumCheck equilibrium_check = EquilibriumCheck::every_epoch;

  std::string out_dir;
  int trace = 0;
};

inline json to_json(const ExperimentConfig& c) {
  json j{{"mode", to_string(c.mode)}, {"generator", c.generator}};
  if (c.generator.empty()) {
    j["instance"] = c.instance_path;
  } else if (c.generator == "gm") {
    j["m"] = c.m;
    j["order"] = to_string(c.order);
    if (c.order == SigmaOrder::shuffled) j["seed"] = c.seed;
  } else if (c.generator == "euclidean") {
    j["n"] = c.n;
    j["seed"] = c.seed;
    j["profile"] = to_string(c.profile);
    j["denominator"] = c.denominator;
  } else {
    j["n"] = c.n;
  }
  j["schedule"] = c.schedule_path;
  if (c.mode == Mode::eqp) {
    j["batch_order"] = to_string(c.batch_order);
    j["move_ceiling"] = c.move_ceiling;
    j["equilibrium_check"] = to_string(c.equilibrium_check);
  }
  return j;
}

/// Overlays the fields present in `j` on `base`.
inline ExperimentConfig config_from_json(const json& j, ExperimentConfig base = {}) {
  try {
    if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
    if (j.contains("mode")) base.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("generator")) base.generator = j.at("generator").get<std::string>();
    if (j.contains("instance")) base.instance_path = j.at("instance").get<std::string>();
    if (j.contains("schedule")) base.schedule_path = j.at("schedule").get<std::string>();
    if (j.contains("m")) base.m = j.at("m").get<int>();
    if (j.contains("n")) base.n = j.at("n").get<std::uint64_t>();
    if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("profile")) base.profile = parse_profile(j.at("profile").get<std::string>());
    if (j.contains("order")) base.order = parse_sigma_order(j.at("order").get<std::string>());
    if (j.contains("denominator")) base.denominator = j.at("denominator").get<std::uint64_t>();
    if (j.contains("batch_order")) base.batch_order = parse_batch_order(j.at("batch_order").get<std::string>());
    if (j.contains("move_ceiling")) base.move_ceiling = j.at("move_ceiling").get<std::uint64_t>();
    if (j.contains("equilibrium_check"))
      base.equilibrium_check = parse_equilibrium_check(j.at("equilibrium_check").get<std::string>());
    return base;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run configuration: ") + e.what());
  }
}

inline SimulationConfig simulation_config(const ExperimentConfig& c) {
  SimulationConfig s;
  s.batch_order = c.batch_order;
  s.move_ceiling = c.move_ceiling;
  s.equilibrium_check = c.equilibrium_check;
  return s;
}

// ---------------------------------------------------------------- workloads

struct Workload {
  std::shared_ptr<const MetricInstance> metric;
  io::InstanceFile instance;
  Schedule schedule;
  /// Set for G_m: the expected canonical segment of every arrival.
  std::optional<SigmaSchedule> sigma;
};

inline Workload load_workload(const ExperimentConfig& c) {
  Workload w;
  const std::string& g = c.generator;
  if (g.empty()) {
    if (!c.instance_path.empty())
      w.instance = io::instance_file_from_json(io::parse_json(io::read_file(c.instance_path), "instance"));
    w.metric = std::make_shared<const MetricInstance>(io::build_instance(w.instance));
  } else if (g == "gm") {
    if (c.m < 1) throw ConfigError("G_m needs m >= 1");
    GmInstance gm = build_gm(c.m);
    w.metric = gm.metric;
    w.instance = io::describe_graph(gm.vertex_count(), gm.edges(),
                                    "G_m lower-bound graph, m = " + std::to_string(c.m) + "; expected final cost " +
                                        to_string(gm_final_cost(c.m)));
    w.sigma = build_sigma(gm, sigma_order(c.m, c.order, c.seed));
    w.schedule = w.sigma->events;
  } else if (g == "euclidean") {
    EuclideanWorkload e = build_random_euclidean(c.n, c.seed, c.profile, c.denominator);
    w.metric = e.metric;
    w.instance = io::describe(*e.metric);
    w.schedule = std::move(e.schedule);
  } else if (g == "steiner-gap") {
    SteinerGapFixture f = build_steiner_gap_fixture(c.n);
    w.metric = f.metric;
    w.instance = io::describe_graph(f.n + 2, f.edges,
                                    "unit chain 0..n-1, half edges n-1 -> q=n -> u=n+1, unit shortcut u -> 0; expected "
                                    "final cost n against Steiner optimum 1");
    w.schedule = std::move(f.schedule);
  } else if (g == "poa") {
    throw ConfigError("the PoA fixture is a state, not a schedule: write it with 'gen poa' and check it with 'verify'");
  } else {
    throw ConfigError("unknown generator '" + g + "'");
  }
  if (!c.schedule_path.empty()) {
    w.schedule = io::schedule_from_json(io::parse_json(io::read_file(c.schedule_path), "schedule"));
    w.sigma.reset();
  }
  return w;
}

// ---------------------------------------------------------------- runs

inline std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

struct Summary {
  std::string mode;
  std::string source;
  std::size_t vertices = 0;
  std::uint64_t agent_arrivals = 0;
  std::size_t events = 0;
  Rational final_cost;
  Rational mst;
  Rational ratio;
  std::size_t moves = 0;
  std::size_t levels = 0;
  std::optional<bool> certified;
  bool equilibrium = false;
  std::string final_class;

  /// ratio / n^{1/3} with n the instance size.
  double per_n_cuberoot() const { return vertices ? to_double(ratio) / std::cbrt(double(vertices)) : 0.0; }
  /// ratio / N^{1/6} with N the number of arriving agents.
  double per_agents_sixthroot() const {
    return agent_arrivals ? to_double(ratio) / std::pow(double(agent_arrivals), 1.0 / 6.0) : 0.0;
  }
};

inline std::string summary_header() {
  return "mode,source,n,N_events,events,final_cost,mst,ratio,ratio_decimal,ratio_per_n13,ratio_per_N16,moves,levels,"
         "certified,equilibrium,final_class";
}

inline std::string summary_cells(const Summary& s) {
  std::string out = s.mode + "," + s.source + "," + std::to_string(s.vertices) + "," + std::to_string(s.agent_arrivals) +
                    "," + std::to_string(s.events) + "," + to_string(s.final_cost) + "," + to_string(s.mst) + "," +
                    to_string(s.ratio) + "," + to_decimal(s.ratio) + "," + fixed6(s.per_n_cuberoot()) + "," +
                    fixed6(s.per_agents_sixthroot()) + "," + std::to_string(s.moves) + "," + std::to_string(s.levels) + ",";
  out += s.certified ? (*s.certified ? "true" : "false") : "";
  out += std::string(",") + (s.equilibrium ? "true" : "false") + "," + s.final_class;
  return out;
}

inline std::string source_label(const ExperimentConfig& c) {
  if (c.generator.empty()) return c.instance_path.empty() ? "root-only" : "file";
  if (c.generator == "gm") return "gm:m=" + std::to_string(c.m);
  if (c.generator == "euclidean") return "euclidean:n=" + std::to_string(c.n) + ":seed=" + std::to_string(c.seed);
  return c.generator + ":n=" + std::to_string(c.n);
}

struct RunResult {
  json config;
  Workload workload;
  EventLog log;
  std::optional<RoutingState> state;
  std::optional<RunStats> stats;
  std::optional<EquilibriumVerdict> verdict;
  std::optional<AccountingReport> accounting;
  std::optional<StateKind> final_kind;
  Summary summary;
  int exit_code = kOk;
  std::string error;
  /// Snapshot of the state where an invariant or closure check failed.
  std::optional<json> failure_state;
  bool closure_violation = false;
};

namespace detail {

inline void finish_summary(RunResult& r, const ExperimentConfig& c) {
  const RoutingState& s = *r.state;
  Summary& sm = r.summary;
  sm.mode = to_string(c.mode);
  sm.source = source_label(c);
  sm.vertices = s.metric().size();
  sm.events = r.workload.schedule.size();
  for (const auto& e : r.workload.schedule)
    if (const auto* a = std::get_if<Arrival>(&e))
      for (const auto& [v, k] : a->agents) sm.agent_arrivals += k;
  sm.final_cost = total_cost(s);
  sm.mst = mst_cost(s.metric(), s.view().sorted());
  sm.ratio = sgn(sm.mst) > 0 ? Rational(sm.final_cost / sm.mst) : Rational(0);
  sm.equilibrium = r.verdict && r.verdict->equilibrium();
  if (r.stats) sm.moves = r.stats->moves;
  if (r.accounting) {
    sm.levels = r.accounting->charged_levels;
    sm.certified = r.accounting->certified;
  }
  if (r.final_kind) sm.final_class = to_string(*r.final_kind);
}

}  // namespace detail

/// Runs one configuration. Configuration errors propagate as exceptions;
/// invariant and closure violations are captured in the result with exit code 3.
inline RunResult execute(const ExperimentConfig& c, std::ostream* trace = nullptr) {
  RunResult r;
  r.config = to_json(c);
  r.workload = load_workload(c);
  const Workload& w = r.workload;

  if (c.mode == Mode::eqp) {
    EqpSimulation sim(w.metric, simulation_config(c));
    try {
      for (std::size_t i = 0; i < w.schedule.size(); ++i) {
        const bool last = i + 1 == w.schedule.size();
        const bool full = c.equilibrium_check == EquilibriumCheck::every_epoch ||
                          (c.equilibrium_check == EquilibriumCheck::final_only && last);
        const EpochReport rep = sim.run_epoch(w.schedule[i], full);
        if (trace && c.trace > 0)
          *trace << "epoch " << rep.epoch << ": " << rep.moves << " moves after a " << to_string(rep.after_event)
                 << " state, cost " << to_decimal(total_cost(sim.state())) << "\n";
      }
      r.state = sim.state();
      r.log = sim.log();
      r.stats = sim.stats();
      r.verdict = verify_equilibrium(sim.state());
      TreeAnalysis a(sim.state(), sim.family());
      r.final_kind = a.klass.kind;
      const Rational opt = mst_cost(sim.state().metric(), sim.state().view().sorted());
      r.accounting = logn_accounting(sim.state(), a.tree, sim.family(), a.charges, opt);
    } catch (const InvariantViolation& e) {
      r.exit_code = kInvariantError;
      r.error = e.what();
      r.closure_violation = dynamic_cast<const ClosureViolation*>(&e) != nullptr;
      r.failure_state = io::snapshot_json(sim.state(), c.mode, w.instance);
      r.state = sim.state();
      r.log = sim.log();
      r.stats = sim.stats();
    }
  } else {
    try {
      ArrivalObserver obs;
      if (w.sigma) obs = w.sigma->observer();
      NoneqpResult res = run_noneqp(w.metric, w.schedule, obs);
      r.state = std::move(res.state);
      r.log = std::move(res.log);
      r.verdict = std::move(res.verdict);
    } catch (const InvariantViolation& e) {
      r.exit_code = kInvariantError;
      r.error = e.what();
    }
  }
  if (r.state) detail::finish_summary(r, c);
  if (r.exit_code == kOk && c.mode == Mode::eqp) {
    std::vector<std::string> problems;
    if (!r.verdict->equilibrium()) problems.push_back("final state is not an equilibrium");
    if (*r.final_kind != StateKind::balanced_equilibrium) problems.push_back("final class is " + to_string(*r.final_kind));
    if (!r.accounting->certified) problems.push_back("accounting not certified");
    if (!problems.empty()) {
      r.exit_code = kVerificationFailure;
      for (const auto& p : problems) r.error += (r.error.empty() ? "" : "; ") + p;
    }
  }
  return r;
}

inline json verdict_json(const RunResult& r) {
  json j{{"config", r.config}, {"exit_code", r.exit_code}, {"error", r.error}};
  if (r.verdict) j["equilibrium"] = io::to_json(*r.verdict);
  if (r.final_kind) j["final_class"] = to_string(*r.final_kind);
  if (r.stats) {
    json classes = json::object();
    for (const auto& [k, n] : r.stats->classes) classes[to_string(k)] = n;
    json tags = json::object();
    for (const auto& [t, n] : r.stats->tags) tags[to_string(t)] = n;
    j["dynamics"] = {{"epochs", r.stats->epochs},
                     {"moves", r.stats->moves},
                     {"max_epoch_moves", r.stats->max_epoch_moves},
                     {"intermediate_states", r.stats->intermediate_states},
                     {"classes", classes},
                     {"rules", tags},
                     {"full_equilibrium_checks", r.stats->full_checks}};
  }
  return j;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

/// Writes the report files of a finished run into c.out_dir.
inline void write_run(const ExperimentConfig& c, const RunResult& r) {
  namespace fs = std::filesystem;
  const fs::path dir = c.out_dir.empty() ? fs::path(".") : fs::path(c.out_dir);
  fs::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) { io::write_file((dir / name).string(), text); };
  put("config.json", r.config.dump(2) + "\n");
  put("instance.json", io::to_json(r.workload.instance).dump(2) + "\n");
  put("schedule.json", io::to_json(r.workload.schedule).dump() + "\n");
  put("events.jsonl", io::log_jsonl(r.config, r.log));
  put("verdict.json", verdict_json(r).dump(2) + "\n");
  if (r.exit_code == kInvariantError) {
    json bundle{{"config", r.config},
                {"error", r.error},
                {"closure_violation", r.closure_violation},
                {"log_entries", r.log.entries.size()}};
    if (r.failure_state) bundle["state"] = *r.failure_state;
    if (!r.log.entries.empty()) bundle["last_entry"] = io::to_json(r.log.entries.back());
    put("diagnostic.json", bundle.dump(2) + "\n");
    return;
  }
  json snap = io::snapshot_json(*r.state, c.mode, r.workload.instance);
  snap["config"] = r.config;
  put("final_state.json", snap.dump(2) + "\n");
  if (r.accounting) {
    json acc = io::to_json(*r.accounting);
    acc["config"] = r.config;
    put("accounting.json", acc.dump(2) + "\n");
    put("accounting.csv", io::accounting_csv(*r.accounting));
  }
  put("summary.csv", summary_header() + "\n" + summary_cells(r.summary) + "\n");
}

inline int cmd_run(const ExperimentConfig& c, std::ostream& out, std::ostream& err) {
  RunResult r = execute(c, &err);
  write_run(c, r);
  if (r.exit_code == kInvariantError) {
    err << (r.closure_violation ? "closure violation: " : "invariant violation: ") << r.error << "\n"
        << "diagnostic bundle written to " << (std::filesystem::path(c.out_dir.empty() ? "." : c.out_dir) / "diagnostic.json").string()
        << "\n";
    return r.exit_code;
  }
  out << summary_header() << "\n" << summary_cells(r.summary) << "\n";
  if (r.exit_code != kOk) err << "verification failed: " << r.error << "\n";
  return r.exit_code;
}

// ---------------------------------------------------------------- verify

struct VerifyReport {
  bool conservation = false;
  bool tree = false;
  bool equilibrium = false;
  bool potential_matches = true;
  /// Gated for eq-p snapshots only; non-eq-p states need not be balanced.
  bool classification = false;
  bool classification_gated = true;
  std::string final_class;
  std::vector<std::string> problems;
  json verdict;

  bool passed() const {
    return conservation && tree && equilibrium && potential_matches && (classification || !classification_gated);
  }
};

inline VerifyReport verify_snapshot(const io::Snapshot& snap) {
  VerifyReport rep;
  const Mode mode = parse_mode(snap.mode);
  rep.classification_gated = mode == Mode::eqp;
  RoutingState s = io::restore(snap);

  rep.conservation = s.usage_consistent();
  if (!rep.conservation) {
    rep.problems.push_back("usage counts do not match the terminal paths");
  } else if (total_shares(s) != total_cost(s)) {
    rep.conservation = false;
    rep.problems.push_back("shares do not sum to the total cost");
  }
  if (!rep.conservation) return rep;

  if (snap.potential && *snap.potential != potential(s)) {
    rep.potential_matches = false;
    rep.problems.push_back("recorded potential " + to_string(*snap.potential) + " differs from " + to_string(potential(s)));
  }
  const EquilibriumVerdict v = verify_equilibrium(s);
  rep.equilibrium = v.equilibrium();
  rep.verdict = io::to_json(v);
  if (!rep.equilibrium) rep.problems.push_back("an improving move exists");

  rep.tree = RoutingTree::build(s).has_value();
  if (!rep.tree) {
    rep.problems.push_back("routing paths do not form a tree");
    return rep;
  }
  DualFamily family(s.view().shared_metric());
  for (VertexId x : s.view().order()) family.insert(x);
  try {
    TreeAnalysis a(s, family);
    rep.final_class = to_string(a.klass.kind);
    rep.classification = a.klass.kind == StateKind::balanced_equilibrium;
  } catch (const ClosureViolation& e) {
    rep.final_class = std::string("unclassifiable: ") + e.what();
  }
  if (!rep.classification && rep.classification_gated) rep.problems.push_back("class is " + rep.final_class);
  return rep;
}

inline json to_json(const VerifyReport& r) {
  return {{"passed", r.passed()},
          {"conservation", r.conservation},
          {"tree", r.tree},
          {"equilibrium", r.equilibrium},
          {"potential_matches", r.potential_matches},
          {"classification", r.classification},
          {"classification_gated", r.classification_gated},
          {"class", r.final_class},
          {"verdict", r.verdict},
          {"problems", r.problems}};
}

inline int cmd_verify(const std::string& snapshot_path, std::ostream& out) {
  const io::Snapshot snap = io::snapshot_from_json(io::parse_json(io::read_file(snapshot_path), "snapshot"));
  const VerifyReport rep = verify_snapshot(snap);
  out << to_json(rep).dump(2) << "\n";
  return rep.passed() ? kOk : kVerificationFailure;
}

// ---------------------------------------------------------------- replay

/// Checks a run directory written by cmd_run: replays the logged events
/// against the instance, compares the result with the stored final state, then
/// reruns the configuration and requires an identical event log.
inline int cmd_replay(const std::string& run_dir, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  const fs::path dir(run_dir);
  auto load = [&](const char* name) { return io::read_file((dir / name).string()); };

  const ExperimentConfig stored = config_from_json(io::parse_json(load("config.json"), "config"));
  const io::InstanceFile inst = io::instance_file_from_json(io::parse_json(load("instance.json"), "instance"));
  const std::string log_text = load("events.jsonl");
  const io::ParsedLog parsed = io::parse_log_jsonl(log_text);
  auto metric = std::make_shared<const MetricInstance>(io::build_instance(inst));

  std::vector<std::string> problems;
  try {
    RoutingState s = replay_log(metric, parsed.log, stored.mode);
    json expect = io::parse_json(load("final_state.json"), "snapshot");
    expect.erase("config");
    if (io::snapshot_json(s, stored.mode, inst) != expect) problems.push_back("replayed state differs from final_state.json");
  } catch (const Error& e) {
    problems.push_back(std::string("log replay failed: ") + e.what());
  }

  ExperimentConfig rerun = stored;
  rerun.generator.clear();
  rerun.instance_path = (dir / "instance.json").string();
  rerun.schedule_path = (dir / "schedule.json").string();
  const RunResult r = execute(rerun);
  std::string fresh;
  for (const auto& e : r.log.entries) fresh += io::to_json(e).dump() + "\n";
  std::string logged = log_text.substr(std::min(log_text.size(), log_text.find('\n') + 1));
  if (fresh != logged) problems.push_back("rerun produced a different event log");

  json verdict{{"entries", parsed.log.entries.size()}, {"passed", problems.empty()}, {"problems", problems}};
  out << verdict.dump(2) << "\n";
  for (const auto& p : problems) err << p << "\n";
  return problems.empty() ? kOk : kVerificationFailure;
}

// ---------------------------------------------------------------- sweep

inline std::size_t sweep_threads(std::size_t runs) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("COSTSHARE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError(std::string("COSTSHARE_THREADS must be a positive integer, got '") + env + "'");
    cap = std::min<std::size_t>(cap, static_cast<std::size_t>(v));
  }
  return std::max<std::size_t>(1, std::min(cap, runs));
}

struct SweepRow {
  ExperimentConfig config;
  std::optional<Summary> summary;
  double wall_ms = 0;
  int exit_code = kOk;
  std::string error;
};

inline std::string sweep_header() { return "run," + summary_header() + ",wall_ms,exit_code,error"; }

inline std::string sweep_line(std::size_t index, const SweepRow& row) {
  std::string cells;
  if (row.summary) {
    cells = summary_cells(*row.summary);
  } else {
    // mode and source, then one empty cell per remaining summary column.
    const std::string header = summary_header();
    const auto columns = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
    cells = to_string(row.config.mode) + "," + source_label(row.config) + std::string(columns - 2, ',');
  }
  return std::to_string(index) + "," + cells + "," + fixed6(row.wall_ms) + "," + std::to_string(row.exit_code) + "," +
         csv_field(row.error);
}

/// Runs every configuration, in parallel; a failing run is recorded in its row.
inline std::vector<SweepRow> run_sweep(const std::vector<ExperimentConfig>& grid) {
  std::vector<SweepRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      SweepRow& row = rows[i];
      row.config = grid[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        RunResult r = execute(grid[i]);
        row.exit_code = r.exit_code;
        row.error = r.error;
        if (r.state) row.summary = r.summary;
      } catch (const Error& e) {
        row.exit_code = kConfigError;
        row.error = e.what();
      } catch (const std::exception& e) {
        row.exit_code = kInvariantError;
        row.error = e.what();
      }
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const std::size_t threads = sweep_threads(grid.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return rows;
}

inline int cmd_sweep(const std::vector<ExperimentConfig>& grid, std::ostream& out) {
  const auto rows = run_sweep(grid);
  out << sweep_header() << "\n";
  int code = kOk;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << sweep_line(i, rows[i]) << "\n";
    if (rows[i].exit_code != kOk) code = kVerificationFailure;
  }
  return code;
}

/// Grid file: {"base": {...}, "runs": [{...}, ...]}, each run overlaying base.
inline std::vector<ExperimentConfig> grid_from_json(const json& j, const ExperimentConfig& base = {}) {
  try {
    const ExperimentConfig b = j.contains("base") ? config_from_json(j.at("base"), base) : base;
    std::vector<ExperimentConfig> grid;
    for (const auto& run : j.is_array() ? j : j.at("runs")) grid.push_back(config_from_json(run, b));
    return grid;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed grid: ") + e.what());
  }
}

// ---------------------------------------------------------------- gen

/// Writes a generated fixture as instance.json plus schedule.json, or
/// state.json for the PoA fixture.
inline int cmd_gen(const ExperimentConfig& c, std::uint64_t poa_agents, std::ostream& out) {
  namespace fs = std::filesystem;
  const fs::path dir = c.out_dir.empty() ? fs::path(".") : fs::path(c.out_dir);
  fs::create_directories(dir);
  auto put = [&](const char* name, const std::string& text) {
    io::write_file((dir / name).string(), text);
    out << (dir / name).string() << "\n";
  };
  if (c.generator == "poa") {
    PoaFixture f = build_poa_fixture(c.n, poa_agents);
    const io::InstanceFile inst = io::describe_graph(
        3, f.edges,
        "r=0, u=1, midpoint=2: direct edge r-u of cost 1 and a detour u-midpoint-r of two edges n/2; the state puts the "
        "agents of u on the detour; optimum " + to_string(f.optimum));
    put("instance.json", io::to_json(inst).dump(2) + "\n");
    put("state.json", io::snapshot_json(f.state, Mode::noneqp, inst).dump(2) + "\n");
    return kOk;
  }
  ExperimentConfig g = c;
  g.schedule_path.clear();
  const Workload w = load_workload(g);
  put("instance.json", io::to_json(w.instance).dump(2) + "\n");
  put("schedule.json", io::to_json(w.schedule).dump() + "\n");
  return kOk;
}

}  // namespace costshare::experiment
