#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "costshare/dynamics.hpp"
#include "costshare/errors.hpp"
#include "costshare/metric.hpp"
#include "costshare/rational.hpp"
#include "costshare/routing.hpp"

namespace costshare {

/// Layered lower-bound graph: root, auxiliary layer V^0 and m clique layers
/// V^1..V^m of m clusters each. Vertex v^i_{j,k} has id 1 + i m^2 + (j-1) m + (k-1).
struct GmInstance {
  int m = 1;
  std::vector<WeightedEdge> inter_layer;
  std::vector<WeightedEdge> intra_cluster;
  std::shared_ptr<const MetricInstance> metric;
  /// P_{j,k}: the all-inter-layer path from v^m_{j,k} to the root.
  std::map<std::pair<int, int>, Path> canonical;

  std::size_t vertex_count() const { return static_cast<std::size_t>(m) * m * (m + 1) + 1; }
  VertexId id(int i, int j, int k) const {
    return static_cast<VertexId>(1 + i * m * m + (j - 1) * m + (k - 1));
  }
  std::vector<WeightedEdge> edges() const {
    std::vector<WeightedEdge> all = inter_layer;
    all.insert(all.end(), intra_cluster.begin(), intra_cluster.end());
    return all;
  }
};

namespace detail {

inline std::shared_ptr<const MetricInstance> cached_gm_closure(int m, const std::vector<WeightedEdge>& edges,
                                                               std::size_t n) {
  static std::mutex mu;
  static std::map<int, std::shared_ptr<const MetricInstance>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(m);
  if (it != cache.end()) return it->second;
  auto closure = std::make_shared<const MetricInstance>(metric_closure(n, edges));
  cache.emplace(m, closure);
  return closure;
}

}  // namespace detail

inline GmInstance build_gm(int m) {
  if (m < 1) throw ConfigError("G_m needs m >= 1");
  GmInstance g;
  g.m = m;
  const Rational one = 1;
  const Rational short_edge = rational(1, m);
  for (int j = 1; j <= m; ++j)
    for (int k = 1; k <= m; ++k) {
      g.inter_layer.push_back({kRoot, g.id(0, j, k), one});
      g.inter_layer.push_back({g.id(0, j, k), g.id(1, j, k), one});
    }
  for (int i = 1; i <= m - 1; ++i)
    for (int j = 1; j <= m; ++j)
      for (int k = 1; k <= m; ++k) g.inter_layer.push_back({g.id(i, j, k), g.id(i + 1, k, j), one});
  for (int i = 1; i <= m; ++i)
    for (int j = 1; j <= m; ++j)
      for (int a = 1; a <= m; ++a)
        for (int b = a + 1; b <= m; ++b) g.intra_cluster.push_back({g.id(i, j, a), g.id(i, j, b), short_edge});

  for (int j = 1; j <= m; ++j)
    for (int k = 1; k <= m; ++k) {
      Path p;
      int a = j, b = k;
      for (int i = m; i >= 1; --i) {
        p.push_back(g.id(i, a, b));
        if (i > 1) std::swap(a, b);
      }
      p.push_back(g.id(0, a, b));
      p.push_back(kRoot);
      g.canonical.emplace(std::pair{j, k}, std::move(p));
    }
  g.metric = detail::cached_gm_closure(m, g.edges(), g.vertex_count());
  return g;
}

enum class SigmaOrder { lexicographic, reverse, shuffled };

inline std::string to_string(SigmaOrder o) {
  switch (o) {
    case SigmaOrder::lexicographic: return "lexicographic";
    case SigmaOrder::reverse: return "reverse";
    case SigmaOrder::shuffled: return "shuffled";
  }
  return "?";
}

inline SigmaOrder parse_sigma_order(const std::string& s) {
  for (SigmaOrder o : {SigmaOrder::lexicographic, SigmaOrder::reverse, SigmaOrder::shuffled})
    if (to_string(o) == s) return o;
  throw ConfigError("unknown round order '" + s + "'");
}

/// Total order on the pairs (j,k) used for the rounds of every phase.
inline std::vector<std::pair<int, int>> sigma_order(int m, SigmaOrder kind, std::uint64_t seed = 0) {
  std::vector<std::pair<int, int>> out;
  for (int j = 1; j <= m; ++j)
    for (int k = 1; k <= m; ++k) out.emplace_back(j, k);
  if (kind == SigmaOrder::reverse) std::reverse(out.begin(), out.end());
  if (kind == SigmaOrder::shuffled) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1], out[rng() % i]);
  }
  return out;
}

/// The arrival/departure sequence driving every end vertex onto its canonical
/// path, with the path each arrival is expected to pick.
struct SigmaSchedule {
  Schedule events;
  std::vector<std::pair<int, int>> order;
  /// Expected path per arrival event index.
  std::map<std::size_t, Path> expected;
  std::size_t agent_arrivals = 0;

  /// Throws InvariantViolation when an arrival deviates from its canonical segment.
  void check_arrival(std::size_t event, VertexId v, const Path& chosen) const {
    auto it = expected.find(event);
    if (it == expected.end()) throw InvariantViolation("unexpected arrival event " + std::to_string(event));
    if (it->second.front() != v || it->second != chosen)
      throw InvariantViolation("arrival at " + std::to_string(v) + " in event " + std::to_string(event) + " chose " +
                               to_string(chosen) + " instead of its canonical segment " + to_string(it->second));
  }
  ArrivalObserver observer() const {
    return [this](std::size_t event, VertexId v, const Path& chosen) { check_arrival(event, v, chosen); };
  }
};

/// m phases of m^2 rounds. Round (j,k) adds m^2 agents at v^0..v^{m-1} of
/// P_{j,k} in turn, then one agent at v^m_{j,k}, then removes the m^2 m helpers.
inline SigmaSchedule build_sigma(const GmInstance& g, std::vector<std::pair<int, int>> order = {}) {
  const int m = g.m;
  if (order.empty()) order = sigma_order(m, SigmaOrder::lexicographic);
  if (order.size() != static_cast<std::size_t>(m * m)) throw ConfigError("round order must list every (j,k) once");
  SigmaSchedule s;
  s.order = order;
  const auto helpers = static_cast<std::uint64_t>(m) * m;
  for (int phase = 1; phase <= m; ++phase)
    for (const auto& jk : order) {
      const Path& p = g.canonical.at(jk);
      // p[0] = v^m, p[m - i] = v^i, p[m + 1] = r
      Departure dep;
      for (int i = 0; i <= m; ++i) {
        const auto pos = static_cast<std::size_t>(m - i);
        const VertexId v = p[pos];
        const std::uint64_t count = i < m ? helpers : 1;
        s.expected.emplace(s.events.size(), Path(p.begin() + static_cast<std::ptrdiff_t>(pos), p.end()));
        s.events.push_back(Arrival{{{v, count}}});
        s.agent_arrivals += count;
        if (i < m) dep.vertices.push_back(v);
      }
      s.events.push_back(std::move(dep));
    }
  return s;
}

/// Cost of the state where every end vertex routes m agents along its canonical path.
inline Rational gm_final_cost(int m) { return Rational(static_cast<long>(m) * m * (m + 1)); }

/// Two routes from u to the root: the direct edge of cost 1 and a detour of
/// cost n through an auxiliary midpoint (two edges of n/2). The bad
/// equilibrium puts `agents` agents on the detour.
struct PoaFixture {
  std::uint64_t n = 2;
  std::vector<WeightedEdge> edges;
  std::shared_ptr<const MetricInstance> metric;
  VertexId u = 1;
  VertexId midpoint = 2;
  RoutingState state;
  /// Cheapest way to connect {r,u}.
  Rational optimum;
};

inline PoaFixture build_poa_fixture(std::uint64_t n, std::uint64_t agents = 0) {
  if (n < 2) throw ConfigError("PoA fixture needs n >= 2");
  if (agents == 0) agents = n + 1;
  Rational half{mpz_class(static_cast<unsigned long>(n)), mpz_class(2)};
  half.canonicalize();
  std::vector<WeightedEdge> edges{{kRoot, 1, Rational(1)}, {1, 2, half}, {2, kRoot, half}};
  auto metric = std::make_shared<const MetricInstance>(metric_closure(3, edges));
  RoutingState s(MetricView(metric, MetricView::Reveal::all));
  s.add_agents(1, agents, Path{1, 2, kRoot});
  const std::vector<VertexId> pair{kRoot, 1};
  return PoaFixture{n, std::move(edges), metric, 1, 2, std::move(s), mst_cost(*metric, pair)};
}

/// Path r - p_1 - ... - p_{n-1} - q - u of unit edges except the last two
/// (1/2 each), plus a unit shortcut u - r. Waves of n agents arrive at
/// p_1, ..., p_{n-1}, q, u; then all but u's agents leave. u's agents keep the
/// long path (cost n) although the shortcut alone costs 1.
struct SteinerGapFixture {
  std::uint64_t n = 2;
  std::vector<WeightedEdge> edges;
  std::shared_ptr<const MetricInstance> metric;
  Schedule schedule;
  VertexId q = 0;
  VertexId u = 0;
  Rational expected_cost;
  /// Steiner optimum over the surviving terminals {r, u}.
  Rational steiner_optimum;
};

inline SteinerGapFixture build_steiner_gap_fixture(std::uint64_t n) {
  if (n < 2) throw ConfigError("Steiner-gap fixture needs n >= 2");
  SteinerGapFixture f;
  f.n = n;
  f.q = static_cast<VertexId>(n);
  f.u = static_cast<VertexId>(n + 1);
  const Rational half = rational(1, 2);
  for (VertexId i = 1; i < n; ++i) f.edges.push_back({i - 1, i, Rational(1)});
  f.edges.push_back({static_cast<VertexId>(n - 1), f.q, half});
  f.edges.push_back({f.q, f.u, half});
  f.edges.push_back({f.u, kRoot, Rational(1)});
  f.metric = std::make_shared<const MetricInstance>(metric_closure(n + 2, f.edges));
  Departure dep;
  for (VertexId v = 1; v <= f.u; ++v) {
    f.schedule.push_back(Arrival{{{v, n}}});
    if (v != f.u) dep.vertices.push_back(v);
  }
  f.schedule.push_back(std::move(dep));
  f.expected_cost = Rational(mpz_class(n));
  f.steiner_optimum = f.metric->cost(f.u, kRoot);
  return f;
}

enum class EpochProfile { online, batch, churn };

inline std::string to_string(EpochProfile p) {
  switch (p) {
    case EpochProfile::online: return "online";
    case EpochProfile::batch: return "batch";
    case EpochProfile::churn: return "churn";
  }
  return "?";
}

inline EpochProfile parse_profile(const std::string& s) {
  for (EpochProfile p : {EpochProfile::online, EpochProfile::batch, EpochProfile::churn})
    if (to_string(p) == s) return p;
  throw ConfigError("unknown epoch profile '" + s + "'");
}

struct EuclideanWorkload {
  std::shared_ptr<const MetricInstance> metric;
  Schedule schedule;
};

/// n distinct points (root included) with coordinates a/denominator in the unit
/// square, drawn from mt19937_64(seed). Non-root vertices arrive once each in
/// id order; the profile sets the batching:
///   online - one arrival per epoch
///   batch  - everything in one epoch
///   churn  - arrivals of ceil(n/10) alternate with departures of floor(n/20)
///            random active terminals, ending with the last arrival
inline EuclideanWorkload build_random_euclidean(std::size_t n, std::uint64_t seed, EpochProfile profile,
                                                std::uint64_t denominator = 10000) {
  if (n < 1) throw ConfigError("euclidean instance needs n >= 1");
  if (denominator < 1 || denominator * denominator < n) throw ConfigError("coordinate denominator too small for n points");
  std::mt19937_64 rng(seed);
  std::vector<Point> pts;
  std::set<std::pair<std::uint64_t, std::uint64_t>> used;
  const mpz_class den(static_cast<unsigned long>(denominator));
  while (pts.size() < n) {
    const std::uint64_t x = rng() % (denominator + 1);
    const std::uint64_t y = rng() % (denominator + 1);
    if (!used.insert({x, y}).second) continue;
    Rational px{mpz_class(static_cast<unsigned long>(x)), den};
    Rational py{mpz_class(static_cast<unsigned long>(y)), den};
    px.canonicalize();
    py.canonicalize();
    pts.push_back({px, py});
  }
  EuclideanWorkload w;
  w.metric = std::make_shared<const MetricInstance>(MetricInstance::from_points(std::move(pts)));

  std::vector<VertexId> pending;
  for (std::size_t v = 1; v < n; ++v) pending.push_back(static_cast<VertexId>(v));
  switch (profile) {
    case EpochProfile::online:
      for (VertexId v : pending) w.schedule.push_back(Arrival{{{v, 1}}});
      break;
    case EpochProfile::batch: {
      Arrival a;
      for (VertexId v : pending) a.agents.emplace_back(v, 1);
      if (!a.agents.empty()) w.schedule.push_back(std::move(a));
      break;
    }
    case EpochProfile::churn: {
      const std::size_t up = std::max<std::size_t>(1, (n + 9) / 10);
      const std::size_t down = n / 20;
      std::vector<VertexId> active;
      std::size_t next = 0;
      while (next < pending.size()) {
        Arrival a;
        for (std::size_t i = 0; i < up && next < pending.size(); ++i, ++next) {
          a.agents.emplace_back(pending[next], 1);
          active.push_back(pending[next]);
        }
        w.schedule.push_back(std::move(a));
        if (next >= pending.size() || down == 0 || active.size() <= down) continue;
        for (std::size_t i = active.size(); i > 1; --i) std::swap(active[i - 1], active[rng() % i]);
        Departure d;
        d.vertices.assign(active.end() - static_cast<std::ptrdiff_t>(down), active.end());
        active.resize(active.size() - down);
        std::sort(d.vertices.begin(), d.vertices.end());
        w.schedule.push_back(std::move(d));
      }
      break;
    }
  }
  return w;
}

}  // namespace costshare
