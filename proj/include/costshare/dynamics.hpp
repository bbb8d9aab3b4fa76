#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "costshare/dual.hpp"
#include "costshare/errors.hpp"
#include "costshare/metric.hpp"
#include "costshare/rational.hpp"
#include "costshare/routing.hpp"

namespace costshare {

enum class RuleTag { equil, balanced, lu_a, lu_b, lu_c, lu_d, nlu };

inline std::string to_string(RuleTag t) {
  switch (t) {
    case RuleTag::equil: return "equil";
    case RuleTag::balanced: return "balanced";
    case RuleTag::lu_a: return "lu-a";
    case RuleTag::lu_b: return "lu-b";
    case RuleTag::lu_c: return "lu-c";
    case RuleTag::lu_d: return "lu-d";
    case RuleTag::nlu: return "nlu";
  }
  return "?";
}

inline RuleTag parse_rule_tag(const std::string& s) {
  for (RuleTag t : {RuleTag::equil, RuleTag::balanced, RuleTag::lu_a, RuleTag::lu_b, RuleTag::lu_c, RuleTag::lu_d, RuleTag::nlu})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown rule tag '" + s + "'");
}

/// Class a move with this tag must start from.
inline StateKind rule_source(RuleTag t) {
  switch (t) {
    case RuleTag::equil: return StateKind::balanced_equilibrium;
    case RuleTag::balanced: return StateKind::balanced;
    case RuleTag::nlu: return StateKind::non_leaf_unbalanced;
    default: return StateKind::leaf_unbalanced;
  }
}

/// Loosest class allowed after a move with this tag: leaf-to-non-leaf and
/// leaf-to-leaf moves keep leaf-unbalanced; every other step may create one
/// doubly non-leaf-charged cut.
inline StateKind rule_target_bound(RuleTag t) {
  switch (t) {
    case RuleTag::lu_a:
    case RuleTag::lu_d: return StateKind::leaf_unbalanced;
    default: return StateKind::non_leaf_unbalanced;
  }
}

struct TreeMove {
  VertexId u = 0;
  VertexId v = 0;
  RuleTag tag = RuleTag::balanced;
  bool operator==(const TreeMove&) const = default;
};

struct Arrival {
  std::vector<std::pair<VertexId, std::uint64_t>> agents;
  bool operator==(const Arrival&) const = default;
};

struct Departure {
  std::vector<VertexId> vertices;
  bool operator==(const Departure&) const = default;
};

using ScheduleEvent = std::variant<Arrival, Departure>;
using Schedule = std::vector<ScheduleEvent>;

enum class EntryKind { arrival, departure, move };

inline std::string to_string(EntryKind k) {
  switch (k) {
    case EntryKind::arrival: return "arrival";
    case EntryKind::departure: return "departure";
    case EntryKind::move: return "move";
  }
  return "?";
}

struct LogEntry {
  std::size_t epoch = 0;
  EntryKind kind = EntryKind::arrival;
  Arrival arrival;
  Departure departure;
  TreeMove move;
  /// Path chosen by each arriving vertex, in event order.
  std::vector<std::pair<VertexId, Path>> arrival_paths;
  Rational phi_before;
  Rational phi_after;
  Rational cost_after;
  std::optional<StateKind> class_before;
  std::optional<StateKind> class_after;
  bool operator==(const LogEntry&) const = default;
};

struct EventLog {
  std::vector<LogEntry> entries;
  bool operator==(const EventLog&) const = default;
};

namespace detail {

inline RoutingTree require_tree(const RoutingState& s) {
  auto tree = RoutingTree::build(s);
  if (!tree) throw InvariantViolation("routing paths do not form a tree");
  return std::move(*tree);
}

}  // namespace detail

/// Tree, charges and class of one tree state. Pinned in memory because the
/// evaluator refers to the tree.
struct TreeAnalysis {
  /// Throws InvariantViolation if the paths do not form a tree and
  /// ClosureViolation if no class applies.
  TreeAnalysis(const RoutingState& s, DualFamily& family)
      : tree(detail::require_tree(s)),
        charges(ChargeMap::build(s, tree, family)),
        eval(s, tree),
        klass(classify(s, charges, eval)) {}
  TreeAnalysis(const TreeAnalysis&) = delete;
  TreeAnalysis& operator=(const TreeAnalysis&) = delete;

  RoutingTree tree;
  ChargeMap charges;
  TreeMoveEvaluator eval;
  StateClass klass;
};

/// Priority rule choosing the next tree-follow move; nullopt only at
/// balanced-equilibrium. Throws InvariantViolation when an unbalanced state has
/// no move the rule can justify.
inline std::optional<TreeMove> select_tree_move([[maybe_unused]] const RoutingState& s, const TreeAnalysis& a) {
  const RoutingTree& t = a.tree;
  const TreeMoveEvaluator& ev = a.eval;
  auto non_leaf = [&](VertexId x) { return !t.is_leaf(x); };

  switch (a.klass.kind) {
    case StateKind::balanced_equilibrium: return std::nullopt;

    case StateKind::balanced:
      for (VertexId u : t.vertices())
        if (auto v = ev.closest_improving(u)) return TreeMove{u, *v, RuleTag::balanced};
      throw InvariantViolation("balanced state without an improving tree move");

    case StateKind::leaf_unbalanced: {
      for (VertexId u : t.vertices())
        if (u != kRoot && t.is_leaf(u))
          if (auto v = ev.closest_improving(u, non_leaf)) return TreeMove{u, *v, RuleTag::lu_a};
      for (VertexId u : t.vertices())
        if (u != kRoot && !t.is_leaf(u))
          if (auto v = ev.closest_improving(u, non_leaf)) return TreeMove{u, *v, RuleTag::lu_b};
      std::optional<std::pair<VertexId, VertexId>> pair;
      for (const auto& [cut, chargers] : a.charges.by_cut())
        for (const Charger& x : chargers) {
          if (x.leaf) continue;
          for (const Charger& y : chargers) {
            if (!y.leaf) continue;
            if (!pair || std::pair{x.vertex, y.vertex} < *pair) pair = std::pair{x.vertex, y.vertex};
          }
        }
      if (pair) {
        const auto [u, v] = *pair;
        if (!ev.is_improving(u, v))
          throw InvariantViolation("non-leaf " + std::to_string(u) + " and leaf " + std::to_string(v) +
                                   " charge one cut but neither direction is an improving move");
        return TreeMove{u, v, RuleTag::lu_c};
      }
      for (VertexId u : t.vertices())
        if (auto v = ev.closest_improving(u)) return TreeMove{u, *v, RuleTag::lu_d};
      throw InvariantViolation("leaf-unbalanced state without an improving tree move");
    }

    case StateKind::non_leaf_unbalanced: {
      const auto [x, y] = *a.klass.special_chargers;
      if (ev.is_improving(x, y)) return TreeMove{x, *ev.closest_improving(x), RuleTag::nlu};
      if (ev.is_improving(y, x)) return TreeMove{y, *ev.closest_improving(y), RuleTag::nlu};
      throw InvariantViolation("non-leaf chargers " + std::to_string(x) + " and " + std::to_string(y) + " of cut " +
                               to_string(*a.klass.special_cut) + " have no improving move to each other");
    }
  }
  return std::nullopt;
}

enum class BatchOrder { snapshot, sequential };

inline std::string to_string(BatchOrder b) { return b == BatchOrder::snapshot ? "snapshot" : "sequential"; }

/// How often the full best-response sweep confirms the tree-move scan.
enum class EquilibriumCheck { every_epoch, final_only, off };

inline std::string to_string(EquilibriumCheck c) {
  switch (c) {
    case EquilibriumCheck::every_epoch: return "every-epoch";
    case EquilibriumCheck::final_only: return "final";
    case EquilibriumCheck::off: return "off";
  }
  return "?";
}

struct SimulationConfig {
  BatchOrder batch_order = BatchOrder::snapshot;
  /// 0 selects 10 n^3 with n the instance size.
  std::uint64_t move_ceiling = 0;
  EquilibriumCheck equilibrium_check = EquilibriumCheck::every_epoch;
  bool check_decomposition = true;
  bool check_incremental_charges = true;
  bool check_conservation = true;
};

/// Per-epoch outcome of eq-p dynamics.
struct EpochReport {
  std::size_t epoch = 0;
  std::size_t moves = 0;
  StateKind after_event = StateKind::balanced_equilibrium;
  std::map<RuleTag, std::size_t> tags;
  bool full_equilibrium_checked = false;
};

/// Aggregate counters over a whole run.
struct RunStats {
  std::size_t epochs = 0;
  std::size_t moves = 0;
  std::size_t max_epoch_moves = 0;
  std::size_t intermediate_states = 0;
  std::map<StateKind, std::size_t> classes;
  std::map<RuleTag, std::size_t> tags;
  std::map<std::pair<StateKind, RuleTag>, std::size_t> transitions;
  std::size_t full_checks = 0;
};

/// eq-p dynamics: each epoch is one arrival or departure event followed by
/// tree-follow moves until balanced-equilibrium. Vertices are revealed on
/// arrival and enter the dual family in event order.
class EqpSimulation {
 public:
  EqpSimulation(std::shared_ptr<const MetricInstance> metric, SimulationConfig cfg = {})
      : cfg_(cfg), state_(MetricView(metric, MetricView::Reveal::root_only)), family_(metric) {
    family_.insert(kRoot);
    const auto n = static_cast<std::uint64_t>(metric->size());
    ceiling_ = cfg_.move_ceiling ? cfg_.move_ceiling : 10 * n * n * n;
  }

  const RoutingState& state() const noexcept { return state_; }
  const DualFamily& family() const noexcept { return family_; }
  DualFamily& family() noexcept { return family_; }
  const EventLog& log() const noexcept { return log_; }
  const RunStats& stats() const noexcept { return stats_; }
  const SimulationConfig& config() const noexcept { return cfg_; }
  std::uint64_t move_ceiling() const noexcept { return ceiling_; }

  EpochReport run_epoch(const ScheduleEvent& event, bool full_check) {
    EpochReport rep;
    rep.epoch = stats_.epochs++;
    state_.set_last_mover(std::nullopt);

    LogEntry head;
    head.epoch = rep.epoch;
    head.phi_before = potential(state_);
    head.class_before = kind_;
    if (const auto* arr = std::get_if<Arrival>(&event)) {
      head.kind = EntryKind::arrival;
      head.arrival = *arr;
      head.arrival_paths = apply_arrival(*arr);
    } else {
      const auto& dep = std::get<Departure>(event);
      head.kind = EntryKind::departure;
      head.departure = dep;
      apply_departure(dep);
    }
    std::optional<TreeAnalysis> a;
    a.emplace(state_, family_);
    head.phi_after = potential(state_);
    head.cost_after = total_cost(state_);
    head.class_after = a->klass.kind;
    rep.after_event = a->klass.kind;
    check_conservation();
    const StateKind bound = head.kind == EntryKind::arrival ? StateKind::leaf_unbalanced : StateKind::balanced;
    if (!at_most(a->klass.kind, bound))
      throw ClosureViolation("state after " + to_string(head.kind) + " is " + to_string(a->klass.kind) + ", expected at most " +
                             to_string(bound));
    log_.entries.push_back(std::move(head));
    note_class(a->klass.kind);

    std::size_t epoch_moves = 0;
    while (a->klass.kind != StateKind::balanced_equilibrium) {
      if (stats_.moves >= ceiling_)
        throw InvariantViolation("move ceiling of " + std::to_string(ceiling_) + " reached in epoch " + std::to_string(rep.epoch));
      auto mv = select_tree_move(state_, *a);
      if (!mv) throw InvariantViolation("no tree move selected in a " + to_string(a->klass.kind) + " state");
      const std::string name = std::to_string(mv->u) + "->" + std::to_string(mv->v);
      if (rule_source(mv->tag) != a->klass.kind)
        throw InvariantViolation("rule " + to_string(mv->tag) + " fired in a " + to_string(a->klass.kind) + " state");
      if (!a->eval.is_improving(mv->u, mv->v)) throw InvariantViolation("selected move " + name + " is not improving");
      if (cfg_.check_decomposition && !tree_follow_decomposes(state_, a->tree, mv->u, mv->v))
        throw InvariantViolation("move " + name + " does not decompose into improving single-agent moves");

      LogEntry e;
      e.epoch = rep.epoch;
      e.kind = EntryKind::move;
      e.move = *mv;
      e.phi_before = potential(state_);
      e.class_before = a->klass.kind;

      const RoutingTree old_tree = a->tree;
      ChargeMap incremental = a->charges;
      tree_follow_move(state_, old_tree, mv->u, mv->v);
      a.emplace(state_, family_);
      if (cfg_.check_incremental_charges) {
        incremental.update(state_, a->tree, family_, follow_move_touched(old_tree, a->tree, mv->u, mv->v));
        if (!(incremental == a->charges))
          throw InvariantViolation("incremental charge map diverged from recomputation after move " + name);
      }

      e.phi_after = potential(state_);
      e.cost_after = total_cost(state_);
      e.class_after = a->klass.kind;
      if (!(e.phi_after < e.phi_before)) throw InvariantViolation("potential did not decrease on move " + name);
      if (!at_most(a->klass.kind, rule_target_bound(mv->tag)))
        throw ClosureViolation("move " + name + " tagged " + to_string(mv->tag) + " led to " + to_string(a->klass.kind));
      check_conservation();

      ++stats_.moves;
      ++epoch_moves;
      ++stats_.tags[mv->tag];
      ++rep.tags[mv->tag];
      ++stats_.transitions[{*e.class_before, mv->tag}];
      note_class(a->klass.kind);
      log_.entries.push_back(std::move(e));
    }
    kind_ = a->klass.kind;
    rep.moves = epoch_moves;
    stats_.max_epoch_moves = std::max(stats_.max_epoch_moves, epoch_moves);

    if (full_check) {
      const EquilibriumVerdict v = verify_equilibrium(state_);
      ++stats_.full_checks;
      rep.full_equilibrium_checked = true;
      if (v.terminal_equilibrium && !v.steiner_equilibrium)
        throw InvariantViolation("terminals are in equilibrium but Steiner vertex " + std::to_string(v.witness->vertex) +
                                 " has an improving move");
      if (!v.equilibrium())
        throw InvariantViolation("tree scan found no improving move but vertex " + std::to_string(v.witness->vertex) +
                                 " can improve via " + to_string(v.witness->route));
    }
    return rep;
  }

  /// Current class; balanced-equilibrium between epochs.
  StateKind kind() const noexcept { return kind_; }

 private:
  std::vector<std::pair<VertexId, Path>> apply_arrival(const Arrival& arr) {
    std::set<VertexId> seen;
    for (const auto& [v, count] : arr.agents) {
      if (!state_.metric().contains(v)) throw ConfigError("arrival at unknown vertex " + std::to_string(v));
      if (v == kRoot) throw ConfigError("arrival at the root");
      if (count != 1)
        throw ConfigError("eq-p dynamics needs exactly one agent per arrival (vertex " + std::to_string(v) + " has " +
                          std::to_string(count) + ")");
      if (state_.is_active(v)) throw ConfigError("arrival at already active vertex " + std::to_string(v));
      if (!seen.insert(v).second) throw ConfigError("vertex " + std::to_string(v) + " arrives twice in one event");
    }
    for (const auto& [v, count] : arr.agents)
      if (state_.reveal(v)) family_.insert(v);

    std::vector<std::pair<VertexId, Path>> chosen;
    auto tree = RoutingTree::build(state_);
    if (!tree) throw InvariantViolation("pre-arrival state is not a tree");
    auto choose = [&](const RoutingState& basis, const RoutingTree& t, VertexId v) {
      if (t.contains(v)) return t.root_path(v);
      BestResponse br = best_response(basis, v, Perspective::newcomer);
      if (br.path.size() < 2 || !t.contains(br.path[1]) || Path(br.path.begin() + 1, br.path.end()) != t.root_path(br.path[1]))
        throw InvariantViolation("arrival at " + std::to_string(v) + " chose " + to_string(br.path) +
                                 ", not a single edge into the routing tree");
      return std::move(br.path);
    };
    if (cfg_.batch_order == BatchOrder::snapshot) {
      for (const auto& [v, count] : arr.agents) chosen.emplace_back(v, choose(state_, *tree, v));
      for (const auto& [v, p] : chosen) state_.add_agents(v, 1, p);
    } else {
      for (const auto& [v, count] : arr.agents) {
        auto t = RoutingTree::build(state_);
        if (!t) throw InvariantViolation("sequential arrivals broke the tree before vertex " + std::to_string(v));
        chosen.emplace_back(v, choose(state_, *t, v));
        state_.add_agents(v, 1, chosen.back().second);
      }
    }
    return chosen;
  }

  void apply_departure(const Departure& dep) {
    std::set<VertexId> seen;
    for (VertexId v : dep.vertices) {
      if (!state_.is_active(v)) throw ConfigError("departure of inactive vertex " + std::to_string(v));
      if (!seen.insert(v).second) throw ConfigError("vertex " + std::to_string(v) + " departs twice in one event");
    }
    prune_departures(state_, dep.vertices);
  }

  void check_conservation() const {
    if (!cfg_.check_conservation) return;
    if (!state_.usage_consistent()) throw InvariantViolation("usage counts diverged from the paths");
    if (total_shares(state_) != total_cost(state_)) throw InvariantViolation("cost shares do not add up to the tree cost");
  }

  void note_class(StateKind k) {
    ++stats_.intermediate_states;
    ++stats_.classes[k];
  }

  SimulationConfig cfg_;
  RoutingState state_;
  DualFamily family_;
  EventLog log_;
  RunStats stats_;
  StateKind kind_ = StateKind::balanced_equilibrium;
  std::uint64_t ceiling_ = 0;
};

/// Observer called after each eq-p epoch with the simulation in its
/// balanced-equilibrium state.
using EpochObserver = std::function<void(const EqpSimulation&, const EpochReport&)>;

struct EqpResult {
  RoutingState state;
  EventLog log;
  RunStats stats;
  EquilibriumVerdict verdict;
  StateKind final_kind = StateKind::balanced_equilibrium;
};

inline EqpResult run_eqp(std::shared_ptr<const MetricInstance> metric, const Schedule& schedule, SimulationConfig cfg = {},
                         const EpochObserver& observer = {}) {
  EqpSimulation sim(std::move(metric), cfg);
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const bool last = i + 1 == schedule.size();
    const bool full = cfg.equilibrium_check == EquilibriumCheck::every_epoch ||
                      (cfg.equilibrium_check == EquilibriumCheck::final_only && last);
    const EpochReport rep = sim.run_epoch(schedule[i], full);
    if (observer) observer(sim, rep);
  }
  EqpResult out{sim.state(), sim.log(), sim.stats(), verify_equilibrium(sim.state()), sim.kind()};
  return out;
}

/// Called for every arrival in non-eq-p dynamics with the chosen path, before
/// the agents are added. May throw to reject the choice.
using ArrivalObserver = std::function<void(std::size_t event, VertexId v, const Path& chosen)>;

struct NoneqpResult {
  RoutingState state;
  EventLog log;
  EquilibriumVerdict verdict;
};

/// Best response on arrival only; no moves. Every vertex is revealed up front.
inline NoneqpResult run_noneqp(std::shared_ptr<const MetricInstance> metric, const Schedule& schedule,
                               const ArrivalObserver& observer = {}) {
  RoutingState s(MetricView(std::move(metric), MetricView::Reveal::all));
  EventLog log;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    LogEntry e;
    e.epoch = i;
    e.phi_before = potential(s);
    if (const auto* arr = std::get_if<Arrival>(&schedule[i])) {
      e.kind = EntryKind::arrival;
      e.arrival = *arr;
      for (const auto& [v, count] : arr->agents) {
        if (!s.metric().contains(v)) throw ConfigError("arrival at unknown vertex " + std::to_string(v));
        if (v == kRoot) throw ConfigError("arrival at the root");
        if (count == 0) throw ConfigError("arrival with zero agents at vertex " + std::to_string(v));
        BestResponse br = best_response(s, v, Perspective::newcomer);
        if (observer) observer(i, v, br.path);
        s.add_agents(v, count, br.path);
        e.arrival_paths.emplace_back(v, std::move(br.path));
      }
    } else {
      const auto& dep = std::get<Departure>(schedule[i]);
      e.kind = EntryKind::departure;
      e.departure = dep;
      for (VertexId v : dep.vertices)
        if (!s.is_active(v)) throw ConfigError("departure of inactive vertex " + std::to_string(v));
      prune_departures(s, dep.vertices);
    }
    e.phi_after = potential(s);
    e.cost_after = total_cost(s);
    log.entries.push_back(std::move(e));
  }
  EquilibriumVerdict verdict = verify_equilibrium(s);
  return NoneqpResult{std::move(s), std::move(log), std::move(verdict)};
}

enum class Mode { eqp, noneqp };

inline std::string to_string(Mode m) { return m == Mode::eqp ? "eqp" : "noneqp"; }

/// Rebuilds the final state from a log without recomputing any choice, checking
/// every recorded potential on the way.
inline RoutingState replay_log(std::shared_ptr<const MetricInstance> metric, const EventLog& log, Mode mode) {
  RoutingState s(MetricView(std::move(metric), mode == Mode::eqp ? MetricView::Reveal::root_only : MetricView::Reveal::all));
  std::optional<std::size_t> epoch;
  for (const LogEntry& e : log.entries) {
    if (potential(s) != e.phi_before) throw InvariantViolation("replay diverged before a logged " + to_string(e.kind));
    if (e.kind != EntryKind::move && epoch != e.epoch) {
      epoch = e.epoch;
      s.set_last_mover(std::nullopt);
    }
    switch (e.kind) {
      case EntryKind::arrival: {
        if (e.arrival_paths.size() != e.arrival.agents.size())
          throw ConfigError("logged arrival lists " + std::to_string(e.arrival_paths.size()) + " paths for " +
                            std::to_string(e.arrival.agents.size()) + " vertices");
        for (const auto& [v, count] : e.arrival.agents) s.reveal(v);
        for (std::size_t i = 0; i < e.arrival_paths.size(); ++i)
          s.add_agents(e.arrival_paths[i].first, e.arrival.agents[i].second, e.arrival_paths[i].second);
        break;
      }
      case EntryKind::departure: prune_departures(s, e.departure.vertices); break;
      case EntryKind::move: tree_follow_move(s, e.move.u, e.move.v); break;
    }
    if (potential(s) != e.phi_after) throw InvariantViolation("replay diverged after a logged " + to_string(e.kind));
  }
  return s;
}

}  // namespace costshare
