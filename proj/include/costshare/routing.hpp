#pragma once

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "costshare/errors.hpp"
#include "costshare/metric.hpp"
#include "costshare/rational.hpp"

namespace costshare {

/// Undirected metric edge, stored with a < b.
struct Edge {
  VertexId a = 0;
  VertexId b = 0;

  static Edge of(VertexId u, VertexId v) { return u < v ? Edge{u, v} : Edge{v, u}; }
  auto operator<=>(const Edge&) const = default;
};

/// Vertex sequence from a terminal to the root, both included.
using Path = std::vector<VertexId>;

inline std::string to_string(const Path& p) {
  std::string s = "[";
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(p[i]);
  }
  return s + "]";
}

/// Co-located agents at one vertex. All of them share one routing path.
struct TerminalGroup {
  std::uint64_t agents = 0;
  Path path;
  bool operator==(const TerminalGroup&) const = default;
};

/// Terminals, their paths and per-edge usage counts N_e over a revealed metric.
/// Usage is maintained incrementally; recount() rebuilds it from the paths.
class RoutingState {
 public:
  explicit RoutingState(MetricView view)
      : view_(std::move(view)), dense_(view_.universe_size() * view_.universe_size(), 0) {}

  /// Trusts `usage` as given so that a tampered snapshot stays detectable.
  static RoutingState from_parts(MetricView view, std::map<VertexId, TerminalGroup> terminals,
                                 std::map<Edge, std::uint64_t> usage, std::optional<VertexId> last_mover) {
    RoutingState s(std::move(view));
    for (const auto& [v, g] : terminals) s.check_path(v, g.path);
    s.terminals_ = std::move(terminals);
    for (const auto& [e, n] : usage) {
      if (!s.view_.metric().contains(e.a) || !s.view_.metric().contains(e.b))
        throw ConfigError("usage entry names a vertex outside the instance");
      if (n > 0) s.set_usage(e, n);
    }
    s.last_mover_ = last_mover;
    return s;
  }

  const MetricView& view() const noexcept { return view_; }
  const MetricInstance& metric() const noexcept { return view_.metric(); }
  const Rational& cost(VertexId u, VertexId v) const { return view_.cost(u, v); }
  bool reveal(VertexId v) { return view_.reveal(v); }

  const std::map<VertexId, TerminalGroup>& terminals() const noexcept { return terminals_; }
  const std::map<Edge, std::uint64_t>& usage() const noexcept { return usage_; }
  std::uint64_t usage(VertexId u, VertexId v) const { return dense_[index(u, v)]; }
  bool is_active(VertexId v) const { return terminals_.contains(v); }
  std::uint64_t agents_at(VertexId v) const {
    auto it = terminals_.find(v);
    return it == terminals_.end() ? 0 : it->second.agents;
  }
  const Path& path(VertexId v) const {
    auto it = terminals_.find(v);
    if (it == terminals_.end()) throw ModelError("vertex " + std::to_string(v) + " is not an active terminal");
    return it->second.path;
  }
  std::uint64_t total_agents() const {
    std::uint64_t n = 0;
    for (const auto& [v, g] : terminals_) n += g.agents;
    return n;
  }
  bool empty() const noexcept { return terminals_.empty(); }

  std::optional<VertexId> last_mover() const noexcept { return last_mover_; }
  void set_last_mover(std::optional<VertexId> v) noexcept { last_mover_ = v; }

  /// Adds `count` agents at v routed along `p`. Joining an existing group
  /// requires the group's path.
  void add_agents(VertexId v, std::uint64_t count, const Path& p) {
    if (count == 0) throw ConfigError("arrival at vertex " + std::to_string(v) + " has zero agents");
    check_path(v, p);
    auto it = terminals_.find(v);
    if (it != terminals_.end()) {
      if (it->second.path != p)
        throw ModelError("agents joining vertex " + std::to_string(v) + " chose " + to_string(p) +
                         " but the co-located group routes along " + to_string(it->second.path));
      it->second.agents += count;
    } else {
      terminals_.emplace(v, TerminalGroup{count, p});
    }
    apply(p, static_cast<std::int64_t>(count));
  }

  /// Removes every agent at v.
  void remove_terminal(VertexId v) {
    auto it = terminals_.find(v);
    if (it == terminals_.end()) throw ModelError("departure of inactive vertex " + std::to_string(v));
    apply(it->second.path, -static_cast<std::int64_t>(it->second.agents));
    terminals_.erase(it);
  }

  void reroute(VertexId v, Path p) {
    auto it = terminals_.find(v);
    if (it == terminals_.end()) throw ModelError("reroute of inactive vertex " + std::to_string(v));
    check_path(v, p);
    const auto k = static_cast<std::int64_t>(it->second.agents);
    apply(it->second.path, -k);
    apply(p, k);
    it->second.path = std::move(p);
  }

  /// Usage counts rebuilt from the terminal paths.
  std::map<Edge, std::uint64_t> recount() const {
    std::map<Edge, std::uint64_t> out;
    for (const auto& [v, g] : terminals_)
      for (std::size_t i = 0; i + 1 < g.path.size(); ++i) out[Edge::of(g.path[i], g.path[i + 1])] += g.agents;
    return out;
  }
  bool usage_consistent() const { return recount() == usage_; }

  /// Union of all path vertices plus the root, sorted.
  std::vector<VertexId> tree_vertices() const {
    std::set<VertexId> vs{kRoot};
    for (const auto& [v, g] : terminals_) vs.insert(g.path.begin(), g.path.end());
    return {vs.begin(), vs.end()};
  }

  /// Checks simplicity, endpoints and revelation of a candidate path.
  void check_path(VertexId v, const Path& p) const {
    if (p.empty() || p.front() != v || p.back() != kRoot)
      throw ModelError("path " + to_string(p) + " must run from " + std::to_string(v) + " to the root");
    if (v == kRoot) throw ModelError("the root cannot host a terminal");
    std::vector<VertexId> seen(p);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      throw ModelError("path " + to_string(p) + " is not simple");
    for (VertexId x : p)
      if (!view_.revealed(x))
        throw ModelError("path " + to_string(p) + " uses unrevealed vertex " + std::to_string(x));
  }

 private:
  std::size_t index(VertexId u, VertexId v) const { return static_cast<std::size_t>(u) * view_.universe_size() + v; }

  void set_usage(Edge e, std::uint64_t n) {
    dense_[index(e.a, e.b)] = n;
    dense_[index(e.b, e.a)] = n;
    if (n == 0)
      usage_.erase(e);
    else
      usage_[e] = n;
  }

  void apply(const Path& p, std::int64_t delta) {
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      const Edge e = Edge::of(p[i], p[i + 1]);
      const auto cur = static_cast<std::int64_t>(dense_[index(e.a, e.b)]);
      if (cur + delta < 0) throw InvariantViolation("negative usage on edge " + std::to_string(e.a) + "-" + std::to_string(e.b));
      set_usage(e, static_cast<std::uint64_t>(cur + delta));
    }
  }

  MetricView view_;
  std::map<VertexId, TerminalGroup> terminals_;
  std::map<Edge, std::uint64_t> usage_;
  std::vector<std::uint64_t> dense_;
  std::optional<VertexId> last_mover_;
};

/// Σ_{e ∈ p_v} c_e / N_e for one agent at v.
inline Rational shared_cost(const RoutingState& s, VertexId v) {
  const Path& p = s.path(v);
  Rational share = 0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) share += s.cost(p[i], p[i + 1]) / s.usage(p[i], p[i + 1]);
  return share;
}

/// Φ = Σ_e c_e · H(N_e).
inline Rational potential(const RoutingState& s) {
  Rational phi = 0;
  for (const auto& [e, n] : s.usage()) phi += s.cost(e.a, e.b) * harmonic(n);
  return phi;
}

inline Rational total_cost(const RoutingState& s) {
  Rational c = 0;
  for (const auto& [e, n] : s.usage()) c += s.cost(e.a, e.b);
  return c;
}

/// Σ over agents of their shares; equals total_cost() whenever usage is consistent.
inline Rational total_shares(const RoutingState& s) {
  Rational sum = 0;
  for (const auto& [v, g] : s.terminals()) sum += shared_cost(s, v) * Rational(mpz_class(g.agents));
  return sum;
}

/// How an agent evaluates edges: a member already routes along its group's
/// path, a newcomer uses nothing yet.
enum class Perspective { automatic, member, newcomer };

struct BestResponse {
  Path path;
  Rational share;
  std::size_t fresh = 0;
};

namespace detail {

/// Lexicographic (share, fresh edges) distance label.
struct Label {
  Rational share;
  std::size_t fresh = 0;
  bool reached = false;
};

inline bool less(const Rational& sa, std::size_t fa, const Rational& sb, std::size_t fb) {
  const int c = cmp(sa, sb);
  return c < 0 || (c == 0 && fa < fb);
}

/// Dense Dijkstra toward the root over the revealed vertices, with per-edge
/// weights from the point of view of one agent whose own path is `own`.
/// Returns the optimal path from `source` that is lexicographically smallest
/// as a vertex sequence. Vertices flagged in `excluded` are never visited.
class LexShortestPath {
 public:
  LexShortestPath(const RoutingState& s, const Path* own, const std::vector<char>* excluded)
      : s_(s), excluded_(excluded) {
    const std::size_t n = s.view().universe_size();
    own_pos_.assign(n, -1);
    if (own)
      for (std::size_t i = 0; i < own->size(); ++i) own_pos_[(*own)[i]] = static_cast<int>(i);
  }

  BestResponse run(VertexId source) {
    const auto& verts = s_.view().sorted();
    const std::size_t k = verts.size();
    std::vector<Label> label(k);
    std::vector<char> settled(k, 0);
    std::vector<std::size_t> local(s_.view().universe_size(), k);
    for (std::size_t i = 0; i < k; ++i) local[verts[i]] = i;
    if (local[source] == k) throw ModelError("vertex " + std::to_string(source) + " is not revealed");

    label[local[kRoot]] = Label{Rational(0), 0, true};
    Rational w;
    Rational cand;
    const std::size_t target = local[source];
    while (true) {
      std::size_t best = k;
      for (std::size_t i = 0; i < k; ++i) {
        if (settled[i] || !label[i].reached) continue;
        if (best == k || less(label[i].share, label[i].fresh, label[best].share, label[best].fresh)) best = i;
      }
      if (best == k) throw InvariantViolation("root unreachable from vertex " + std::to_string(source));
      settled[best] = 1;
      if (best == target) break;
      const VertexId x = verts[best];
      for (std::size_t j = 0; j < k; ++j) {
        if (settled[j]) continue;
        const VertexId y = verts[j];
        if (blocked(y) && j != target) continue;
        const std::size_t f = weight(x, y, w);
        cand = label[best].share;
        cand += w;
        const std::size_t cf = label[best].fresh + f;
        if (!label[j].reached || less(cand, cf, label[j].share, label[j].fresh)) {
          label[j].share = cand;
          label[j].fresh = cf;
          label[j].reached = true;
        }
      }
    }

    BestResponse out;
    out.share = label[target].share;
    out.fresh = label[target].fresh;
    out.path.push_back(source);
    std::size_t cur = target;
    while (verts[cur] != kRoot) {
      std::size_t next = k;
      for (std::size_t j = 0; j < k && next == k; ++j) {
        if (j == cur || !settled[j] || !label[j].reached) continue;
        if (blocked(verts[j]) || std::find(out.path.begin(), out.path.end(), verts[j]) != out.path.end()) continue;
        const std::size_t f = weight(verts[cur], verts[j], w);
        cand = label[j].share;
        cand += w;
        if (cand == label[cur].share && label[j].fresh + f == label[cur].fresh) next = j;
      }
      if (next == k) throw InvariantViolation("path reconstruction failed from vertex " + std::to_string(source));
      cur = next;
      out.path.push_back(verts[cur]);
    }
    return out;
  }

 private:
  bool blocked(VertexId y) const { return excluded_ && (*excluded_)[y]; }

  /// Writes the share weight of edge (x,y) into `w`; returns 1 if the edge is fresh.
  std::size_t weight(VertexId x, VertexId y, Rational& w) const {
    const std::uint64_t n = s_.usage(x, y);
    const int px = own_pos_[x];
    const int py = own_pos_[y];
    const bool own = px >= 0 && py >= 0 && (px - py == 1 || py - px == 1);
    const Rational& c = s_.cost(x, y);
    if (own) {
      w = c / n;
      return n == 1 ? 1 : 0;
    }
    if (n == 0) {
      w = c;
      return 1;
    }
    w = c / (n + 1);
    return 0;
  }

  const RoutingState& s_;
  const std::vector<char>* excluded_;
  std::vector<int> own_pos_;
};

}  // namespace detail

/// Minimum (share, fresh-edge count) path for one agent at v; remaining ties go
/// to the lexicographically smallest vertex sequence.
inline BestResponse best_response(const RoutingState& s, VertexId v, Perspective who = Perspective::automatic) {
  if (v == kRoot) throw ModelError("the root has no route to choose");
  if (who == Perspective::automatic) who = s.is_active(v) ? Perspective::member : Perspective::newcomer;
  const Path* own = nullptr;
  if (who == Perspective::member) own = &s.path(v);
  detail::LexShortestPath sp(s, own, nullptr);
  return sp.run(v);
}

struct ImprovingWitness {
  VertexId vertex = 0;
  /// Terminal whose share drops; equals `vertex` for terminals.
  VertexId terminal = 0;
  /// Replacement route from `vertex` to the root.
  Path route;
  Rational current_share;
  Rational improved_share;
};

/// Strictly improving deviation for a terminal, or for a Steiner vertex w on
/// behalf of the smallest-id terminal routing through w.
inline std::optional<ImprovingWitness> has_improving_move(const RoutingState& s, VertexId w) {
  if (s.is_active(w)) {
    BestResponse br = best_response(s, w, Perspective::member);
    Rational cur = shared_cost(s, w);
    if (br.share < cur) return ImprovingWitness{w, w, std::move(br.path), std::move(cur), std::move(br.share)};
    return std::nullopt;
  }
  for (const auto& [v, g] : s.terminals()) {
    auto pos = std::find(g.path.begin(), g.path.end(), w);
    if (pos == g.path.end()) continue;
    if (w == kRoot) return std::nullopt;
    std::vector<char> excluded(s.view().universe_size(), 0);
    for (auto it = g.path.begin(); it != pos; ++it) excluded[*it] = 1;
    Rational cur = 0;
    for (auto it = pos; it + 1 != g.path.end(); ++it) cur += s.cost(*it, *(it + 1)) / s.usage(*it, *(it + 1));
    detail::LexShortestPath sp(s, &g.path, &excluded);
    BestResponse br = sp.run(w);
    if (br.share < cur) return ImprovingWitness{w, v, std::move(br.path), std::move(cur), std::move(br.share)};
    return std::nullopt;
  }
  throw ModelError("vertex " + std::to_string(w) + " is neither a terminal nor on a routing path");
}

struct EquilibriumVerdict {
  bool terminal_equilibrium = true;
  bool steiner_equilibrium = true;
  std::optional<ImprovingWitness> witness;
  bool equilibrium() const { return terminal_equilibrium && steiner_equilibrium; }
};

/// Sweeps every terminal, then every non-terminal path vertex.
inline EquilibriumVerdict verify_equilibrium(const RoutingState& s) {
  EquilibriumVerdict out;
  for (const auto& [v, g] : s.terminals())
    if (auto w = has_improving_move(s, v)) {
      out.terminal_equilibrium = false;
      out.witness = std::move(w);
      break;
    }
  for (VertexId x : s.tree_vertices()) {
    if (x == kRoot || s.is_active(x)) continue;
    if (auto w = has_improving_move(s, x)) {
      out.steiner_equilibrium = false;
      if (!out.witness) out.witness = std::move(w);
      break;
    }
  }
  return out;
}

/// Rooted view of a state whose paths form a tree, with O(1) subtree tests and
/// LCA queries. Local indices follow increasing vertex id.
class RoutingTree {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  /// nullopt when two paths disagree on the parent of a shared vertex.
  static std::optional<RoutingTree> build(const RoutingState& s) {
    RoutingTree t;
    t.vertices_ = s.tree_vertices();
    const std::size_t k = t.vertices_.size();
    t.local_.assign(s.view().universe_size(), npos);
    for (std::size_t i = 0; i < k; ++i) t.local_[t.vertices_[i]] = i;
    t.parent_.assign(k, npos);
    for (const auto& [v, g] : s.terminals())
      for (std::size_t i = 0; i + 1 < g.path.size(); ++i) {
        const std::size_t x = t.local_[g.path[i]];
        const std::size_t y = t.local_[g.path[i + 1]];
        if (t.parent_[x] == npos)
          t.parent_[x] = y;
        else if (t.parent_[x] != y)
          return std::nullopt;
      }
    t.children_.assign(k, {});
    for (std::size_t i = 0; i < k; ++i)
      if (t.parent_[i] != npos) t.children_[t.parent_[i]].push_back(i);
    t.agents_below_.assign(k, 0);
    t.terminal_.assign(k, 0);
    for (const auto& [v, g] : s.terminals()) {
      t.terminal_[t.local_[v]] = 1;
      t.agents_below_[t.local_[v]] = g.agents;
    }
    t.index_euler();
    for (auto it = t.preorder_.rbegin(); it != t.preorder_.rend(); ++it)
      if (t.parent_[*it] != npos) t.agents_below_[t.parent_[*it]] += t.agents_below_[*it];
    return t;
  }

  std::size_t size() const noexcept { return vertices_.size(); }
  VertexId vertex(std::size_t i) const { return vertices_[i]; }
  const std::vector<VertexId>& vertices() const noexcept { return vertices_; }
  bool contains(VertexId v) const { return v < local_.size() && local_[v] != npos; }
  std::size_t local(VertexId v) const { return v < local_.size() ? local_[v] : npos; }

  std::optional<VertexId> parent(VertexId v) const {
    const std::size_t p = parent_[at(v)];
    if (p == npos) return std::nullopt;
    return vertices_[p];
  }
  std::vector<VertexId> children(VertexId v) const {
    std::vector<VertexId> out;
    for (std::size_t c : children_[at(v)]) out.push_back(vertices_[c]);
    return out;
  }
  /// The root is a leaf only in the empty tree.
  bool is_leaf(VertexId v) const { return children_[at(v)].empty(); }
  bool is_terminal(VertexId v) const { return terminal_[at(v)] != 0; }
  /// Agents whose path passes through v; equals N of v's parent edge.
  std::uint64_t agents_below(VertexId v) const { return agents_below_[at(v)]; }

  /// True when x lies in the subtree rooted at u (u included).
  bool in_subtree(VertexId x, VertexId u) const {
    const std::size_t a = at(x), b = at(u);
    return tin_[b] <= tin_[a] && tout_[a] <= tout_[b];
  }

  VertexId lca(VertexId x, VertexId y) const { return vertices_[lca_local(at(x), at(y))]; }
  std::size_t lca_local(std::size_t a, std::size_t b) const {
    std::size_t l = first_[a], r = first_[b];
    if (l > r) std::swap(l, r);
    const std::size_t span = r - l + 1;
    const std::size_t lg = std::bit_width(span) - 1;
    const std::size_t p = sparse_[lg][l];
    const std::size_t q = sparse_[lg][r + 1 - (std::size_t{1} << lg)];
    return depth_[p] <= depth_[q] ? p : q;
  }

  /// Vertex sequence from v up to the root.
  Path root_path(VertexId v) const {
    Path p;
    for (std::size_t i = at(v); i != npos; i = parent_[i]) p.push_back(vertices_[i]);
    return p;
  }

  /// Parents before children.
  const std::vector<std::size_t>& preorder() const noexcept { return preorder_; }
  std::size_t parent_local(std::size_t i) const { return parent_[i]; }
  std::size_t tin(std::size_t i) const { return tin_[i]; }
  std::size_t tout(std::size_t i) const { return tout_[i]; }
  bool leaf_local(std::size_t i) const { return children_[i].empty(); }

 private:
  std::size_t at(VertexId v) const {
    const std::size_t i = local(v);
    if (i == npos) throw ModelError("vertex " + std::to_string(v) + " is not in the routing tree");
    return i;
  }

  void index_euler() {
    const std::size_t k = vertices_.size();
    tin_.assign(k, 0);
    tout_.assign(k, 0);
    depth_.assign(k, 0);
    first_.assign(k, 0);
    std::vector<std::size_t> euler;
    std::size_t clock = 0;
    // iterative DFS from the root (local index 0 since the root has id 0)
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    tin_[0] = clock++;
    first_[0] = 0;
    euler.push_back(0);
    preorder_.push_back(0);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < children_[node].size()) {
        const std::size_t c = children_[node][next++];
        depth_[c] = depth_[node] + 1;
        tin_[c] = clock++;
        first_[c] = euler.size();
        euler.push_back(c);
        preorder_.push_back(c);
        stack.emplace_back(c, 0);
      } else {
        tout_[node] = clock++;
        stack.pop_back();
        if (!stack.empty()) euler.push_back(stack.back().first);
      }
    }
    const std::size_t m = euler.size();
    const std::size_t levels = std::bit_width(m);
    sparse_.assign(levels, std::vector<std::size_t>(m));
    sparse_[0] = euler;
    for (std::size_t l = 1; l < levels; ++l)
      for (std::size_t i = 0; i + (std::size_t{1} << l) <= m; ++i) {
        const std::size_t p = sparse_[l - 1][i];
        const std::size_t q = sparse_[l - 1][i + (std::size_t{1} << (l - 1))];
        sparse_[l][i] = depth_[p] <= depth_[q] ? p : q;
      }
  }

  std::vector<VertexId> vertices_;
  std::vector<std::size_t> local_;
  std::vector<std::size_t> parent_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<std::uint64_t> agents_below_;
  std::vector<char> terminal_;
  std::vector<std::size_t> tin_, tout_, depth_, first_, preorder_;
  std::vector<std::vector<std::size_t>> sparse_;
};

/// Prefix sums along root paths: A(x) = Σ c/N and B(x) = Σ c/(N+1) over the
/// edges from x up to the root. A tree-follow move u→v is improving for every
/// agent below u iff c_uv + B(v) - B(l) < A(u) - A(l), with l = lca(u,v).
class TreeMoveEvaluator {
 public:
  TreeMoveEvaluator(const RoutingState& s, const RoutingTree& t) : s_(s), t_(t) {
    const std::size_t k = t.size();
    a_.assign(k, Rational(0));
    b_.assign(k, Rational(0));
    for (std::size_t i : t.preorder()) {
      const std::size_t p = t.parent_local(i);
      if (p == RoutingTree::npos) continue;
      const Rational& c = s.cost(t.vertex(i), t.vertex(p));
      const std::uint64_t n = t.agents_below(t.vertex(i));
      a_[i] = a_[p] + c / n;
      b_[i] = b_[p] + c / (n + 1);
    }
  }

  const RoutingTree& tree() const noexcept { return t_; }

  /// Valid targets: v in the tree, outside subtree(u), not u's parent.
  bool valid_target(VertexId u, VertexId v) const {
    if (u == kRoot || !t_.contains(u) || !t_.contains(v)) return false;
    if (t_.in_subtree(v, u)) return false;
    return t_.parent(u) != v;
  }

  bool is_improving(VertexId u, VertexId v) const {
    if (!valid_target(u, v)) return false;
    return improving_local(t_.local(u), t_.local(v));
  }

  /// Share change of every agent below u, as (new share above u, old share above u).
  std::pair<Rational, Rational> segment_shares(VertexId u, VertexId v) const {
    const std::size_t iu = t_.local(u), iv = t_.local(v);
    const std::size_t l = t_.lca_local(iu, iv);
    return {s_.cost(u, v) + b_[iv] - b_[l] + a_[l], a_[iu]};
  }

  bool improving_local(std::size_t iu, std::size_t iv) const {
    const std::size_t l = t_.lca_local(iu, iv);
    lhs_ = s_.cost(t_.vertex(iu), t_.vertex(iv));
    lhs_ += b_[iv];
    lhs_ += a_[l];
    rhs_ = a_[iu];
    rhs_ += b_[l];
    return lhs_ < rhs_;
  }

  /// Improving targets of u, sorted by (c(u,v), id).
  std::vector<VertexId> improving_targets(VertexId u) const {
    std::vector<VertexId> out;
    if (u == kRoot || !t_.contains(u)) return out;
    const std::size_t iu = t_.local(u);
    const std::size_t pu = t_.parent_local(iu);
    for (std::size_t iv = 0; iv < t_.size(); ++iv) {
      if (iv == pu || (t_.tin(iu) <= t_.tin(iv) && t_.tout(iv) <= t_.tout(iu))) continue;
      if (improving_local(iu, iv)) out.push_back(t_.vertex(iv));
    }
    sort_by_distance(u, out);
    return out;
  }

  /// Closest improving target satisfying `accept`, ties by smallest id.
  template <class Pred>
  std::optional<VertexId> closest_improving(VertexId u, Pred accept) const {
    if (u == kRoot || !t_.contains(u)) return std::nullopt;
    const std::size_t iu = t_.local(u);
    const std::size_t pu = t_.parent_local(iu);
    std::optional<VertexId> best;
    for (std::size_t iv = 0; iv < t_.size(); ++iv) {
      if (iv == pu || (t_.tin(iu) <= t_.tin(iv) && t_.tout(iv) <= t_.tout(iu))) continue;
      const VertexId v = t_.vertex(iv);
      if (!accept(v)) continue;
      if (best && s_.cost(u, v) >= s_.cost(u, *best)) continue;
      if (improving_local(iu, iv)) best = v;
    }
    return best;
  }
  std::optional<VertexId> closest_improving(VertexId u) const {
    return closest_improving(u, [](VertexId) { return true; });
  }

  bool any_improving() const {
    for (std::size_t iu = 1; iu < t_.size(); ++iu)
      if (closest_any(iu)) return true;
    return false;
  }

 private:
  bool closest_any(std::size_t iu) const {
    const std::size_t pu = t_.parent_local(iu);
    for (std::size_t iv = 0; iv < t_.size(); ++iv) {
      if (iv == pu || (t_.tin(iu) <= t_.tin(iv) && t_.tout(iv) <= t_.tout(iu))) continue;
      if (improving_local(iu, iv)) return true;
    }
    return false;
  }

  void sort_by_distance(VertexId u, std::vector<VertexId>& vs) const {
    std::sort(vs.begin(), vs.end(), [&](VertexId x, VertexId y) {
      const int c = cmp(s_.cost(u, x), s_.cost(u, y));
      return c < 0 || (c == 0 && x < y);
    });
  }

  const RoutingState& s_;
  const RoutingTree& t_;
  std::vector<Rational> a_, b_;
  mutable Rational lhs_, rhs_;
};

/// Replaces u's parent edge by (u,v); every terminal below u keeps its path to u
/// and then follows v's tree path. Sets last_mover to u.
inline void tree_follow_move(RoutingState& s, const RoutingTree& t, VertexId u, VertexId v) {
  if (u == kRoot) throw InvalidMove("the root cannot move");
  if (!t.contains(u) || !t.contains(v))
    throw InvalidMove("tree-follow move " + std::to_string(u) + "->" + std::to_string(v) + " leaves the tree");
  if (t.in_subtree(v, u))
    throw InvalidMove("target " + std::to_string(v) + " lies in the subtree of " + std::to_string(u));
  const Path tail = t.root_path(v);
  std::vector<std::pair<VertexId, Path>> updates;
  for (const auto& [x, g] : s.terminals()) {
    if (!t.in_subtree(x, u)) continue;
    auto pos = std::find(g.path.begin(), g.path.end(), u);
    Path p(g.path.begin(), pos + 1);
    p.insert(p.end(), tail.begin(), tail.end());
    updates.emplace_back(x, std::move(p));
  }
  for (auto& [x, p] : updates) s.reroute(x, std::move(p));
  s.set_last_mover(u);
}

inline void tree_follow_move(RoutingState& s, VertexId u, VertexId v) {
  auto t = RoutingTree::build(s);
  if (!t) throw InvalidMove("tree-follow move on a state that is not a tree");
  tree_follow_move(s, *t, u, v);
}

inline bool is_improving_tree_move(const RoutingState& s, VertexId u, VertexId v) {
  auto t = RoutingTree::build(s);
  if (!t) throw InvalidMove("tree move query on a state that is not a tree");
  if (u == kRoot || !t->contains(u) || !t->contains(v)) throw InvalidMove("tree move endpoints must lie in the tree");
  if (t->in_subtree(v, u)) throw InvalidMove("target lies in the subtree of the mover");
  return TreeMoveEvaluator(s, *t).is_improving(u, v);
}

/// Removes every agent at the given vertices. Vertices left on surviving paths
/// become Steiner vertices.
inline void prune_departures(RoutingState& s, const std::vector<VertexId>& departing) {
  for (VertexId v : departing) s.remove_terminal(v);
}

/// Replays the tree-follow move u→v one agent at a time (terminals by id) and
/// checks that each single reroute strictly lowers that agent's share.
inline bool tree_follow_decomposes(const RoutingState& s, const RoutingTree& t, VertexId u, VertexId v) {
  std::map<Edge, std::int64_t> n;
  for (const auto& [e, c] : s.usage()) n[e] = static_cast<std::int64_t>(c);
  const Path tail = t.root_path(v);
  auto share = [&](const Path& p) {
    Rational r = 0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) r += s.cost(p[i], p[i + 1]) / n[Edge::of(p[i], p[i + 1])];
    return r;
  };
  for (const auto& [x, g] : s.terminals()) {
    if (!t.in_subtree(x, u)) continue;
    auto pos = std::find(g.path.begin(), g.path.end(), u);
    Path next(g.path.begin(), pos + 1);
    next.insert(next.end(), tail.begin(), tail.end());
    for (std::uint64_t a = 0; a < g.agents; ++a) {
      const Rational before = share(g.path);
      for (std::size_t i = 0; i + 1 < g.path.size(); ++i) --n[Edge::of(g.path[i], g.path[i + 1])];
      for (std::size_t i = 0; i + 1 < next.size(); ++i) ++n[Edge::of(next[i], next[i + 1])];
      if (!(share(next) < before)) return false;
    }
  }
  return true;
}

}  // namespace costshare
