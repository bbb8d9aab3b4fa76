#pragma once

// Hand-rolled generators and brute-force oracles shared by the test binaries.
// Oracles recompute everything from terminal paths and the cost matrix; they
// never call the routines under test.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "costshare/costshare.hpp"

namespace testing_support {

using namespace costshare;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  /// Uniform in [lo, hi].
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) { return lo + rng_() % (hi - lo + 1); }
  bool coin(unsigned percent = 50) { return range(0, 99) < percent; }
  template <class T>
  const T& pick(const std::vector<T>& xs) {
    return xs[range(0, xs.size() - 1)];
  }
  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[range(0, i - 1)]);
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Closure of a random connected graph. Small weight alphabet so that ties in
/// shares are common.
inline std::shared_ptr<const MetricInstance> random_graph_metric(Gen& g, std::size_t n) {
  std::vector<WeightedEdge> edges;
  auto weight = [&] { return rational(static_cast<long>(g.range(1, 6)), static_cast<long>(g.range(1, 2))); };
  for (VertexId v = 1; v < n; ++v) edges.push_back({static_cast<VertexId>(g.range(0, v - 1)), v, weight()});
  const std::size_t extra = g.range(0, n);
  for (std::size_t i = 0; i < extra; ++i) {
    const auto a = static_cast<VertexId>(g.range(0, n - 1));
    const auto b = static_cast<VertexId>(g.range(0, n - 1));
    if (a != b) edges.push_back({a, b, weight()});
  }
  return std::make_shared<const MetricInstance>(metric_closure(n, edges));
}

/// n distinct points on a coarse grid.
inline std::shared_ptr<const MetricInstance> random_euclidean_metric(Gen& g, std::size_t n, long grid = 40) {
  std::set<std::pair<long, long>> seen;
  std::vector<Point> pts;
  while (pts.size() < n) {
    const long x = static_cast<long>(g.range(0, grid)), y = static_cast<long>(g.range(0, grid));
    if (!seen.insert({x, y}).second) continue;
    pts.push_back({rational(x, grid), rational(y, grid)});
  }
  return std::make_shared<const MetricInstance>(MetricInstance::from_points(std::move(pts)));
}

inline std::shared_ptr<const MetricInstance> random_metric(Gen& g, std::size_t n) {
  return g.coin() ? random_graph_metric(g, n) : random_euclidean_metric(g, n);
}

/// Random simple path from v to the root through distinct revealed vertices.
inline Path random_simple_path(Gen& g, VertexId v, std::size_t n) {
  std::vector<VertexId> pool;
  for (VertexId x = 1; x < n; ++x)
    if (x != v) pool.push_back(x);
  g.shuffle(pool);
  Path p{v};
  const std::size_t mid = g.range(0, std::min<std::size_t>(pool.size(), 3));
  p.insert(p.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(mid));
  p.push_back(kRoot);
  return p;
}

/// Arbitrary (not necessarily tree) state with every vertex revealed.
inline RoutingState random_state(Gen& g, std::shared_ptr<const MetricInstance> metric) {
  RoutingState s(MetricView(metric, MetricView::Reveal::all));
  const std::size_t n = metric->size();
  for (VertexId v = 1; v < n; ++v)
    if (g.coin(60)) s.add_agents(v, g.range(1, 3), random_simple_path(g, v, n));
  return s;
}

/// Random routing tree on a random vertex subset: every tree leaf is a
/// terminal, internal vertices are terminals with probability 1/2.
inline RoutingState random_tree_state(Gen& g, std::shared_ptr<const MetricInstance> metric, bool single_agents = false) {
  RoutingState s(MetricView(metric, MetricView::Reveal::all));
  const std::size_t n = metric->size();
  std::vector<VertexId> in{kRoot};
  std::map<VertexId, VertexId> parent;
  std::vector<VertexId> order;
  for (VertexId v = 1; v < n; ++v) order.push_back(v);
  g.shuffle(order);
  const std::size_t k = g.range(1, order.size());
  for (std::size_t i = 0; i < k; ++i) {
    parent[order[i]] = g.pick(in);
    in.push_back(order[i]);
  }
  std::set<VertexId> internal;
  for (const auto& [v, p] : parent) internal.insert(p);
  for (const auto& [v, p] : parent) {
    if (internal.contains(v) && g.coin()) continue;
    Path path{v};
    while (path.back() != kRoot) path.push_back(parent.at(path.back()));
    s.add_agents(v, single_agents ? 1 : g.range(1, 3), path);
  }
  return s;
}

// ---------------------------------------------------------------- oracles

/// Usage counts recomputed from terminal paths.
inline std::map<Edge, std::uint64_t> oracle_usage(const RoutingState& s) {
  std::map<Edge, std::uint64_t> n;
  for (const auto& [v, grp] : s.terminals())
    for (std::size_t i = 0; i + 1 < grp.path.size(); ++i) n[Edge::of(grp.path[i], grp.path[i + 1])] += grp.agents;
  return n;
}

/// Minimum spanning tree weight by enumerating every labelled tree via its
/// Prüfer sequence. Exponential; k <= 7.
inline Rational prufer_mst(const MetricInstance& m, const std::vector<VertexId>& vs) {
  const std::size_t k = vs.size();
  if (k <= 1) return 0;
  if (k == 2) return m.cost(vs[0], vs[1]);
  std::optional<Rational> best;
  std::vector<std::size_t> seq(k - 2, 0);
  while (true) {
    std::vector<std::size_t> degree(k, 1);
    for (std::size_t x : seq) ++degree[x];
    Rational w = 0;
    for (std::size_t x : seq) {
      std::size_t leaf = 0;
      while (degree[leaf] != 1) ++leaf;
      w += m.cost(vs[leaf], vs[x]);
      --degree[leaf];
      --degree[x];
    }
    std::vector<std::size_t> last;
    for (std::size_t i = 0; i < k; ++i)
      if (degree[i] == 1) last.push_back(i);
    w += m.cost(vs[last[0]], vs[last[1]]);
    if (!best || w < *best) best = w;
    std::size_t pos = 0;
    while (pos < seq.size() && ++seq[pos] == k) seq[pos++] = 0;
    if (pos == seq.size()) break;
  }
  return *best;
}

struct OracleChoice {
  Path path;
  Rational share;
  std::size_t fresh = 0;
};

/// Best response by enumerating every simple path from v to the root.
/// Key: (share, fresh edges, vertex sequence).
inline OracleChoice oracle_best_response(const RoutingState& s, VertexId v, bool member) {
  const auto usage = oracle_usage(s);
  std::set<Edge> own;
  if (member) {
    const Path& p = s.terminals().at(v).path;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) own.insert(Edge::of(p[i], p[i + 1]));
  }
  const std::vector<VertexId>& verts = s.view().sorted();
  std::optional<OracleChoice> best;
  Path cur{v};
  std::vector<char> used(s.view().universe_size(), 0);
  used[v] = 1;
  std::function<void()> dfs = [&] {
    const VertexId x = cur.back();
    if (x == kRoot) {
      OracleChoice c{cur, 0, 0};
      for (std::size_t i = 0; i + 1 < cur.size(); ++i) {
        const Edge e = Edge::of(cur[i], cur[i + 1]);
        auto it = usage.find(e);
        const std::uint64_t n = it == usage.end() ? 0 : it->second;
        const Rational& cost = s.metric().cost(e.a, e.b);
        if (own.contains(e)) {
          c.share += cost / Rational(mpz_class(n));
          c.fresh += n == 1;
        } else {
          c.share += cost / Rational(mpz_class(n + 1));
          c.fresh += n == 0;
        }
      }
      auto key = [](const OracleChoice& o) { return std::tie(o.share, o.fresh, o.path); };
      if (!best || key(c) < key(*best)) best = c;
      return;
    }
    for (VertexId y : verts) {
      if (used[y]) continue;
      used[y] = 1;
      cur.push_back(y);
      dfs();
      cur.pop_back();
      used[y] = 0;
    }
  };
  dfs();
  return *best;
}

/// Whether one agent of terminal x (below u) lowers its share by leaving its
/// path at u for the edge (u,v) followed by v's current path to the root.
/// Shares are recomputed from scratch on the modified usage.
inline bool oracle_tree_move_improves(const RoutingState& s, VertexId x, VertexId u, VertexId v) {
  auto usage = oracle_usage(s);
  const Path& old = s.terminals().at(x).path;
  auto share = [&](const Path& p) {
    Rational r = 0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
      r += s.metric().cost(p[i], p[i + 1]) / Rational(mpz_class(usage.at(Edge::of(p[i], p[i + 1]))));
    return r;
  };
  const Rational before = share(old);
  // v's route to the root: the path of any terminal passing through v.
  Path tail;
  if (v == kRoot) tail = {kRoot};
  for (const auto& [t, grp] : s.terminals()) {
    auto it = std::find(grp.path.begin(), grp.path.end(), v);
    if (it != grp.path.end()) {
      tail.assign(it, grp.path.end());
      break;
    }
  }
  if (tail.empty()) throw std::logic_error("tree-move target " + std::to_string(v) + " is not on any routing path");
  Path next(old.begin(), std::find(old.begin(), old.end(), u) + 1);
  next.insert(next.end(), tail.begin(), tail.end());
  for (std::size_t i = 0; i + 1 < old.size(); ++i) --usage[Edge::of(old[i], old[i + 1])];
  for (std::size_t i = 0; i + 1 < next.size(); ++i) ++usage[Edge::of(next[i], next[i + 1])];
  return share(next) < before;
}

/// Any terminal whose path passes through u.
inline std::optional<VertexId> terminal_through(const RoutingState& s, VertexId u) {
  for (const auto& [t, grp] : s.terminals())
    if (std::find(grp.path.begin(), grp.path.end(), u) != grp.path.end()) return t;
  return std::nullopt;
}

/// Parent map and subtree test recomputed from terminal paths.
struct OracleTree {
  std::map<VertexId, VertexId> parent;
  bool below(VertexId x, VertexId u) const {
    while (true) {
      if (x == u) return true;
      auto it = parent.find(x);
      if (it == parent.end()) return false;
      x = it->second;
    }
  }
};

inline std::optional<OracleTree> oracle_tree(const RoutingState& s) {
  OracleTree t;
  for (const auto& [v, grp] : s.terminals())
    for (std::size_t i = 0; i + 1 < grp.path.size(); ++i) {
      auto [it, fresh] = t.parent.emplace(grp.path[i], grp.path[i + 1]);
      if (!fresh && it->second != grp.path[i + 1]) return std::nullopt;
    }
  return t;
}

/// Checks every partition invariant of every maintained level against the
/// inserted vertex set. Returns an empty string on success.
inline std::string partition_problems(const DualFamily& f) {
  std::set<VertexId> inserted(f.order().begin(), f.order().end());
  const MetricInstance& m = f.metric();
  for (const auto& [j, part] : f.levels()) {
    const Rational diam = pow2(j);
    const Rational sep = pow2(j - 1);
    std::set<VertexId> covered;
    if (part.centers.size() != part.components.size()) return "level " + std::to_string(j) + ": center count";
    for (std::size_t c = 0; c < part.components.size(); ++c) {
      const auto& comp = part.components[c];
      if (std::find(comp.begin(), comp.end(), part.centers[c]) == comp.end())
        return "level " + std::to_string(j) + ": center outside its component";
      for (VertexId a : comp) {
        if (!covered.insert(a).second) return "level " + std::to_string(j) + ": vertex in two components";
        if (part.component_of[a] != c) return "level " + std::to_string(j) + ": component_of mismatch";
        if (!(m.cost(a, part.centers[c]) < sep)) return "level " + std::to_string(j) + ": member too far from center";
        for (VertexId b : comp)
          if (!(m.cost(a, b) < diam)) return "level " + std::to_string(j) + ": diameter";
      }
    }
    if (covered != inserted) return "level " + std::to_string(j) + ": not a partition of the inserted vertices";
    for (std::size_t a = 0; a < part.centers.size(); ++a)
      for (std::size_t b = a + 1; b < part.centers.size(); ++b)
        if (m.cost(part.centers[a], part.centers[b]) < sep) return "level " + std::to_string(j) + ": centers too close";
  }
  return {};
}

/// Schedule for eq-p: random single-agent arrivals and departures, ending
/// with an arrival. Every vertex arrives at most once.
inline Schedule random_eqp_schedule(Gen& g, std::size_t n, bool batches) {
  std::vector<VertexId> pending;
  for (VertexId v = 1; v < n; ++v) pending.push_back(v);
  g.shuffle(pending);
  std::vector<VertexId> active;
  Schedule out;
  while (!pending.empty()) {
    if (!active.empty() && g.coin(25)) {
      Departure d;
      const std::size_t k = batches ? g.range(1, std::max<std::size_t>(1, active.size() / 2)) : 1;
      g.shuffle(active);
      d.vertices.assign(active.end() - static_cast<std::ptrdiff_t>(k), active.end());
      active.resize(active.size() - k);
      out.push_back(d);
      continue;
    }
    Arrival a;
    const std::size_t k = batches ? g.range(1, std::min<std::size_t>(pending.size(), 3)) : 1;
    for (std::size_t i = 0; i < k; ++i) {
      a.agents.emplace_back(pending.back(), 1);
      active.push_back(pending.back());
      pending.pop_back();
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace testing_support
