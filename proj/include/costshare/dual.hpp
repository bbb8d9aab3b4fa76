#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "costshare/errors.hpp"
#include "costshare/metric.hpp"
#include "costshare/rational.hpp"
#include "costshare/routing.hpp"

namespace costshare {

/// Level-j partition built by greedy center insertion. Every member lies within
/// 2^{j-1} of its center, so components have diameter < 2^j; centers are
/// pairwise at least 2^{j-1} apart.
struct LevelPartition {
  int level = 0;
  std::vector<std::vector<VertexId>> components;
  std::vector<VertexId> centers;
  /// Component index per vertex id; npos for vertices not inserted yet.
  std::vector<std::size_t> component_of;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t size() const noexcept { return components.size(); }
};

/// One LevelPartition per maintained level, all fed the same insertion order.
class DualFamily {
 public:
  /// Level window from floor(log2 dmin) - 4 to floor(log2 dmax) + 2; the top
  /// level then holds a single component.
  explicit DualFamily(std::shared_ptr<const MetricInstance> metric) : metric_(std::move(metric)) {
    if (auto range = metric_->distance_range()) {
      lo_ = floor_log2(range->first) - 4;
      hi_ = floor_log2(range->second) + 2;
    }
    for (int j = lo_; j <= hi_; ++j) levels_.emplace(j, empty_level(j));
  }

  DualFamily(std::shared_ptr<const MetricInstance> metric, int lo, int hi) : metric_(std::move(metric)), lo_(lo), hi_(hi) {
    if (lo > hi) throw ConfigError("empty dual level window");
    for (int j = lo_; j <= hi_; ++j) levels_.emplace(j, empty_level(j));
  }

  /// Inserts v at every maintained level. Re-inserting is a no-op.
  void insert(VertexId v) {
    if (!metric_->contains(v)) throw ConfigError("dual insert of unknown vertex " + std::to_string(v));
    if (inserted(v)) return;
    order_.push_back(v);
    for (auto& [j, part] : levels_) place(part, v);
  }

  bool inserted(VertexId v) const {
    const auto& any = levels_.begin()->second;
    return v < any.component_of.size() && any.component_of[v] != LevelPartition::npos;
  }

  /// Materializes level j by replaying the insertion order.
  const LevelPartition& ensure_level(int j) {
    auto it = levels_.find(j);
    if (it != levels_.end()) return it->second;
    LevelPartition part = empty_level(j);
    for (VertexId v : order_) place(part, v);
    lo_ = std::min(lo_, j);
    hi_ = std::max(hi_, j);
    return levels_.emplace(j, std::move(part)).first->second;
  }

  const LevelPartition& level(int j) const {
    auto it = levels_.find(j);
    if (it == levels_.end()) throw Error("dual level " + std::to_string(j) + " is not maintained");
    return it->second;
  }
  bool has_level(int j) const { return levels_.contains(j); }
  const std::map<int, LevelPartition>& levels() const noexcept { return levels_; }
  const std::vector<VertexId>& order() const noexcept { return order_; }
  const MetricInstance& metric() const noexcept { return *metric_; }
  int lowest() const noexcept { return lo_; }
  int highest() const noexcept { return hi_; }

 private:
  LevelPartition empty_level(int j) const {
    LevelPartition p;
    p.level = j;
    p.component_of.assign(metric_->size(), LevelPartition::npos);
    return p;
  }

  void place(LevelPartition& part, VertexId v) const {
    const Rational radius = pow2(part.level - 1);
    for (std::size_t i = 0; i < part.centers.size(); ++i)
      if (metric_->cost(part.centers[i], v) < radius) {
        part.components[i].push_back(v);
        part.component_of[v] = i;
        return;
      }
    part.component_of[v] = part.components.size();
    part.components.push_back({v});
    part.centers.push_back(v);
  }

  std::shared_ptr<const MetricInstance> metric_;
  int lo_ = 0;
  int hi_ = 0;
  std::map<int, LevelPartition> levels_;
  std::vector<VertexId> order_;
};

inline DualFamily dual_insert(DualFamily family, VertexId v) {
  family.insert(v);
  return family;
}

/// The unique j with 2^{j+2} <= c < 2^{j+3}.
inline int charge_level(const Rational& c) {
  if (sgn(c) <= 0) throw Error("charge level of a non-positive edge cost " + to_string(c));
  return floor_log2(c) - 2;
}

/// 2^{j-1} (|P_j| - 1): the centers are pairwise at least 2^{j-1} apart, so this
/// bounds the MST over the centers alone. It does not bound the MST over all
/// inserted vertices; a hub at distance 1 from three centers is a counterexample.
inline Rational center_mst_bound(const DualFamily& family, int level) {
  const auto& p = family.level(level);
  if (p.size() == 0) return 0;
  return pow2(level - 1) * static_cast<unsigned long>(p.size() - 1);
}

/// 2^{j-2} (|P_j| - 1) <= MST of the inserted vertices: that MST spans the
/// centers, and doubling any tree spanning them bounds their MST.
inline Rational dual_lower_bound(const DualFamily& family, int level) {
  return center_mst_bound(family, level) / 2;
}

struct CutId {
  int level = 0;
  std::size_t component = 0;
  auto operator<=>(const CutId&) const = default;
};

inline std::string to_string(const CutId& c) {
  return "(level " + std::to_string(c.level) + ", cut " + std::to_string(c.component) + ")";
}

struct Charger {
  VertexId vertex = 0;
  bool leaf = false;
  auto operator<=>(const Charger&) const = default;
};

struct Charge {
  CutId cut;
  bool leaf = false;
  Rational cost;
  bool operator==(const Charge&) const = default;
};

/// Each non-root tree vertex charges the cost of its parent edge to the cut of
/// level charge_level(cost) that contains it.
class ChargeMap {
 public:
  static ChargeMap build(const RoutingState& s, const RoutingTree& t, DualFamily& family) {
    ChargeMap m;
    for (VertexId v : t.vertices())
      if (v != kRoot) m.set(v, charge_of(s, t, family, v));
    return m;
  }

  /// Recomputes only the listed vertices and drops vertices that left the tree.
  void update(const RoutingState& s, const RoutingTree& t, DualFamily& family, const std::set<VertexId>& touched) {
    std::vector<VertexId> gone;
    for (const auto& [v, c] : by_vertex_)
      if (!t.contains(v)) gone.push_back(v);
    for (VertexId v : gone) erase(v);
    for (VertexId v : touched)
      if (v != kRoot && t.contains(v)) set(v, charge_of(s, t, family, v));
    for (VertexId v : t.vertices())
      if (v != kRoot && !by_vertex_.contains(v)) set(v, charge_of(s, t, family, v));
  }

  const std::map<VertexId, Charge>& by_vertex() const noexcept { return by_vertex_; }
  const std::map<CutId, std::set<Charger>>& by_cut() const noexcept { return by_cut_; }

  bool operator==(const ChargeMap& o) const { return by_vertex_ == o.by_vertex_ && by_cut_ == o.by_cut_; }

 private:
  static Charge charge_of(const RoutingState& s, const RoutingTree& t, DualFamily& family, VertexId v) {
    const VertexId p = *t.parent(v);
    const Rational& c = s.cost(v, p);
    const int j = charge_level(c);
    const auto& part = family.ensure_level(j);
    const std::size_t comp = part.component_of[v];
    if (comp == LevelPartition::npos)
      throw InvariantViolation("tree vertex " + std::to_string(v) + " is missing from the dual family");
    return Charge{CutId{j, comp}, t.is_leaf(v), c};
  }

  void set(VertexId v, Charge c) {
    erase(v);
    by_cut_[c.cut].insert(Charger{v, c.leaf});
    by_vertex_.emplace(v, std::move(c));
  }

  void erase(VertexId v) {
    auto it = by_vertex_.find(v);
    if (it == by_vertex_.end()) return;
    auto cut = by_cut_.find(it->second.cut);
    cut->second.erase(Charger{v, it->second.leaf});
    if (cut->second.empty()) by_cut_.erase(cut);
    by_vertex_.erase(it);
  }

  std::map<VertexId, Charge> by_vertex_;
  std::map<CutId, std::set<Charger>> by_cut_;
};

/// Vertices whose charge can change under the tree-follow move u -> v: u (new
/// parent edge), v (no longer a leaf), u's old parent, and every vertex that
/// left the tree together with its old parent (which may have become a leaf).
inline std::set<VertexId> follow_move_touched(const RoutingTree& before, const RoutingTree& after, VertexId u, VertexId v) {
  std::set<VertexId> touched{u, v};
  if (auto p = before.parent(u)) touched.insert(*p);
  for (VertexId x : before.vertices())
    if (!after.contains(x)) {
      touched.insert(x);
      if (auto p = before.parent(x)) touched.insert(*p);
    }
  return touched;
}

/// Ordered from tightest to loosest; each class implies the looser ones.
enum class StateKind { balanced_equilibrium = 0, balanced = 1, leaf_unbalanced = 2, non_leaf_unbalanced = 3 };

inline std::string to_string(StateKind k) {
  switch (k) {
    case StateKind::balanced_equilibrium: return "balanced-equilibrium";
    case StateKind::balanced: return "balanced";
    case StateKind::leaf_unbalanced: return "leaf-unbalanced";
    case StateKind::non_leaf_unbalanced: return "non-leaf-unbalanced";
  }
  return "?";
}

inline bool at_most(StateKind k, StateKind bound) { return static_cast<int>(k) <= static_cast<int>(bound); }

struct StateClass {
  StateKind kind = StateKind::balanced_equilibrium;
  /// Set for non-leaf-unbalanced: the doubly charged cut and its two non-leaf
  /// chargers in increasing id order.
  std::optional<CutId> special_cut;
  std::optional<std::pair<VertexId, VertexId>> special_chargers;
};

/// Classification from the charge structure plus an improving-move scan over
/// tree-follow moves (which decides equilibrium on tree states).
inline StateClass classify(const RoutingState& s, const ChargeMap& charges, const TreeMoveEvaluator& eval) {
  StateClass out;
  bool balanced = true;
  std::vector<CutId> doubled;
  std::string detail;
  for (const auto& [cut, chargers] : charges.by_cut()) {
    std::vector<VertexId> nonleaf;
    for (const Charger& c : chargers)
      if (!c.leaf) nonleaf.push_back(c.vertex);
    if (chargers.size() > 1) balanced = false;
    if (nonleaf.size() >= 3) throw ClosureViolation("cut " + to_string(cut) + " has " + std::to_string(nonleaf.size()) + " non-leaf chargers");
    if (nonleaf.size() == 2) {
      doubled.push_back(cut);
      out.special_cut = cut;
      out.special_chargers = std::pair{nonleaf[0], nonleaf[1]};
    }
  }
  if (doubled.size() > 1) {
    std::string cuts;
    for (const auto& c : doubled) cuts += " " + to_string(c);
    throw ClosureViolation("more than one cut charged by two non-leaf vertices:" + cuts);
  }
  if (doubled.size() == 1) {
    const auto lm = s.last_mover();
    const auto [x, y] = *out.special_chargers;
    if (!lm || (*lm != x && *lm != y))
      throw ClosureViolation("cut " + to_string(*out.special_cut) + " is charged by non-leaf vertices " + std::to_string(x) +
                             " and " + std::to_string(y) + ", neither of which moved last");
    out.kind = StateKind::non_leaf_unbalanced;
    return out;
  }
  if (!balanced) {
    out.kind = StateKind::leaf_unbalanced;
    return out;
  }
  out.kind = eval.any_improving() ? StateKind::balanced : StateKind::balanced_equilibrium;
  return out;
}

struct AccountingRow {
  int level = 0;
  std::size_t components = 0;
  std::size_t charged_cuts = 0;
  std::size_t charging_edges = 0;
  Rational charged_cost;
  /// 2^{j+3} |P_j|
  Rational bound;
  /// dual_lower_bound at level j
  Rational lower_bound;
};

struct AccountingReport {
  std::size_t vertices = 0;
  Rational total_cost;
  Rational opt;
  /// Longest tree edge.
  Rational max_edge;
  Rational ignored_cost;
  std::size_t ignored_edges = 0;
  std::vector<AccountingRow> rows;
  std::size_t window_levels = 0;
  std::size_t charged_levels = 0;
  /// ignored_cost + Σ_j 2^{j+3} · charged_cuts_j, an upper bound on total_cost.
  Rational certificate;
  /// total_cost / opt (0 when opt is 0).
  Rational ratio;
  /// 32 (log2 n + 1), the acceptance gate on ratio.
  double ratio_gate = 0;
  bool each_cut_once = true;
  bool certified = false;
  std::vector<std::string> failures;
};

/// O(log n) accounting of a balanced-equilibrium tree against opt (the MST of
/// the revealed vertices). Edges no longer than D/n are ignored; every other
/// edge charges a level j with 2^{j+3} > D/n and 2^{j+2} <= D.
inline AccountingReport logn_accounting(const RoutingState& s, const RoutingTree& t, DualFamily& family,
                                        const ChargeMap& charges, const Rational& opt) {
  if (charges.by_vertex().size() + 1 != t.size())
    throw InvariantViolation("charge map does not cover the routing tree");
  AccountingReport r;
  r.vertices = s.view().size();
  r.total_cost = total_cost(s);
  r.opt = opt;
  r.ratio = sgn(opt) > 0 ? Rational(r.total_cost / opt) : Rational(0);
  r.ratio_gate = 32.0 * (std::log2(static_cast<double>(std::max<std::size_t>(r.vertices, 1))) + 1.0);

  for (const auto& [v, c] : charges.by_vertex())
    if (c.cost > r.max_edge) r.max_edge = c.cost;

  if (charges.by_vertex().empty()) {
    r.certified = true;
    r.certificate = 0;
    return r;
  }

  const Rational threshold = r.max_edge / static_cast<unsigned long>(r.vertices);
  const int j_hi = floor_log2(r.max_edge) - 2;
  const int j_lo = floor_log2(threshold) - 2;
  r.window_levels = static_cast<std::size_t>(j_hi - j_lo + 1);

  std::map<int, AccountingRow> rows;
  for (int j = j_lo; j <= j_hi; ++j) {
    const auto& part = family.ensure_level(j);
    AccountingRow row;
    row.level = j;
    row.components = part.size();
    row.bound = pow2(j + 3) * static_cast<unsigned long>(part.size());
    row.lower_bound = dual_lower_bound(family, j);
    rows.emplace(j, row);
  }

  Rational certificate = 0;
  for (const auto& [cut, chargers] : charges.by_cut()) {
    if (chargers.size() > 1) {
      r.each_cut_once = false;
      r.failures.push_back("cut " + to_string(cut) + " charged " + std::to_string(chargers.size()) + " times");
    }
    std::size_t counted = 0;
    for (const Charger& c : chargers) {
      const Rational& cost = charges.by_vertex().at(c.vertex).cost;
      if (cost <= threshold) {
        r.ignored_cost += cost;
        r.ignored_edges += 1;
        continue;
      }
      auto& row = rows.at(cut.level);
      row.charged_cost += cost;
      row.charging_edges += 1;
      ++counted;
    }
    if (counted > 0) rows.at(cut.level).charged_cuts += 1;
  }

  for (auto& [j, row] : rows) {
    if (row.charged_cuts == 0) {
      r.rows.push_back(row);
      continue;
    }
    ++r.charged_levels;
    certificate += pow2(j + 3) * static_cast<unsigned long>(row.charged_cuts);
    if (row.charged_cost >= pow2(j + 3) * static_cast<unsigned long>(row.charged_cuts))
      r.failures.push_back("level " + std::to_string(j) + " charged cost exceeds 2^{j+3} per cut");
    // Charged levels have |P_j| >= 2, where 2^{j+3} |P_j| <= 64 · 2^{j-2} (|P_j| - 1).
    if (row.bound > 64 * row.lower_bound)
      r.failures.push_back("level " + std::to_string(j) + " bound exceeds 64 times its dual lower bound");
    if (row.lower_bound > opt) r.failures.push_back("level " + std::to_string(j) + " dual lower bound exceeds opt");
    r.rows.push_back(row);
  }
  r.certificate = certificate + r.ignored_cost;

  const double log2n = std::log2(static_cast<double>(r.vertices));
  if (static_cast<double>(r.window_levels) > std::ceil(log2n) + 1)
    r.failures.push_back("accounting window spans " + std::to_string(r.window_levels) + " levels");
  if (r.ignored_cost > r.max_edge) r.failures.push_back("ignored edges exceed the longest edge");
  if (r.max_edge > opt) r.failures.push_back("longest tree edge exceeds opt");
  if (r.total_cost > r.certificate) r.failures.push_back("total cost exceeds the charging certificate");
  if (to_double(r.ratio) > r.ratio_gate) r.failures.push_back("ratio exceeds 32 (log2 n + 1)");
  r.certified = r.failures.empty();
  return r;
}

}  // namespace costshare
