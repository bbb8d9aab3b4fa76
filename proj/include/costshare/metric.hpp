#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "costshare/errors.hpp"
#include "costshare/rational.hpp"

namespace costshare {

/// Dense vertex index. Vertex 0 is always the root r.
using VertexId = std::uint32_t;
inline constexpr VertexId kRoot = 0;

enum class Provenance { explicit_metric, graph_closure, euclidean };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::explicit_metric: return "metric";
    case Provenance::graph_closure: return "weighted-graph";
    case Provenance::euclidean: return "euclidean";
  }
  return "metric";
}

struct WeightedEdge {
  VertexId u = 0;
  VertexId v = 0;
  Rational weight;
};

struct Point {
  Rational x;
  Rational y;
  bool operator==(const Point&) const = default;
};

/// Fixed denominator of the rational square-root approximation used for
/// Euclidean distances.
inline constexpr long kEuclideanScale = 1'000'000;

/// ceil(|a - b| * 10^6) / 10^6. Rounding up keeps the triangle inequality
/// exact: ceil(x) <= ceil(y) + ceil(z) whenever x <= y + z.
inline Rational euclidean_distance(const Point& a, const Point& b) {
  const Rational dx = a.x - b.x;
  const Rational dy = a.y - b.y;
  const Rational sq = dx * dx + dy * dy;
  // smallest k with k^2 * den >= num * scale^2
  mpz_class scale2 = mpz_class(kEuclideanScale) * kEuclideanScale;
  mpz_class target = sq.get_num() * scale2;
  const mpz_class& den = sq.get_den();
  mpz_class approx;
  mpz_class quotient;
  mpz_fdiv_q(quotient.get_mpz_t(), target.get_mpz_t(), den.get_mpz_t());
  mpz_sqrt(approx.get_mpz_t(), quotient.get_mpz_t());
  while (approx * approx * den < target) ++approx;
  Rational d{approx, mpz_class(kEuclideanScale)};
  d.canonicalize();
  return d;
}

class MetricInstance;
MetricInstance metric_closure(std::size_t vertex_count, std::span<const WeightedEdge> edges);
MetricInstance reveal_vertices(const MetricInstance& instance, std::span<const VertexId> new_vertices,
                               const std::map<std::pair<VertexId, VertexId>, Rational>& new_costs);

/// Complete metric over vertices 0..size()-1, stored as a dense matrix.
/// Immutable once built; revealing vertices produces a new value.
class MetricInstance {
 public:
  /// The root alone.
  MetricInstance() : n_(1), costs_(1, Rational(0)) {}

  /// Validates symmetry, zero diagonal, strict positivity off the diagonal and
  /// the triangle inequality over every triple.
  static MetricInstance from_matrix(std::size_t n, std::vector<Rational> costs,
                                    Provenance provenance = Provenance::explicit_metric) {
    MetricInstance m(n, std::move(costs), provenance);
    m.check_structure();
    m.check_triangles(0);
    return m;
  }

  /// Euclidean instance, distances from euclidean_distance(). Points must be distinct.
  static MetricInstance from_points(std::vector<Point> points) {
    if (points.empty()) throw MetricError("euclidean instance needs at least the root point");
    const std::size_t n = points.size();
    std::vector<Rational> costs(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        Rational d = euclidean_distance(points[i], points[j]);
        if (sgn(d) == 0)
          throw MetricError("euclidean points " + std::to_string(i) + " and " + std::to_string(j) + " coincide");
        costs[i * n + j] = d;
        costs[j * n + i] = std::move(d);
      }
    MetricInstance m(n, std::move(costs), Provenance::euclidean);
    m.points_ = std::move(points);
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  bool contains(VertexId v) const noexcept { return v < n_; }
  const Rational& cost(VertexId u, VertexId v) const { return costs_[static_cast<std::size_t>(u) * n_ + v]; }
  Provenance provenance() const noexcept { return provenance_; }
  const std::vector<Point>& points() const noexcept { return points_; }

  /// Largest and smallest positive pairwise distance; nullopt for a single vertex.
  std::optional<std::pair<Rational, Rational>> distance_range() const {
    if (n_ < 2) return std::nullopt;
    Rational lo = cost(0, 1);
    Rational hi = lo;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j) {
        const Rational& c = costs_[i * n_ + j];
        if (c < lo) lo = c;
        if (c > hi) hi = c;
      }
    return std::pair{lo, hi};
  }

  /// Full O(n^3) re-check; generators that are metric by construction skip it.
  void check_metric() const {
    check_structure();
    check_triangles(0);
  }

 private:
  MetricInstance(std::size_t n, std::vector<Rational> costs, Provenance provenance)
      : n_(n), costs_(std::move(costs)), provenance_(provenance) {
    if (n_ == 0) throw MetricError("metric instance needs at least the root");
    if (costs_.size() != n_ * n_) throw MetricError("cost matrix has the wrong size");
  }

  void check_structure() const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (sgn(costs_[i * n_ + i]) != 0)
        throw MetricError("cost(" + std::to_string(i) + "," + std::to_string(i) + ") must be 0");
      for (std::size_t j = i + 1; j < n_; ++j) {
        const Rational& a = costs_[i * n_ + j];
        if (a != costs_[j * n_ + i])
          throw MetricError("cost is not symmetric for pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
        if (sgn(a) <= 0)
          throw MetricError("cost(" + std::to_string(i) + "," + std::to_string(j) +
                            ") must be positive; co-locate agents with agent counts instead");
      }
    }
  }

  /// Checks every triple that touches a vertex with index >= first_new.
  void check_triangles(std::size_t first_new) const {
    Rational sum;
    for (std::size_t a = 0; a < n_; ++a)
      for (std::size_t b = 0; b < n_; ++b) {
        if (b == a) continue;
        for (std::size_t c = a + 1; c < n_; ++c) {
          if (c == b) continue;
          if (a < first_new && b < first_new && c < first_new) continue;
          sum = costs_[a * n_ + b] + costs_[b * n_ + c];
          if (costs_[a * n_ + c] > sum)
            throw MetricError("triangle inequality violated for triple (" + std::to_string(a) + "," +
                              std::to_string(b) + "," + std::to_string(c) + "): cost(" + std::to_string(a) +
                              "," + std::to_string(c) + ")=" + to_string(costs_[a * n_ + c]) + " > " +
                              to_string(sum));
        }
      }
  }

  friend MetricInstance metric_closure(std::size_t, std::span<const WeightedEdge>);
  friend MetricInstance reveal_vertices(const MetricInstance&, std::span<const VertexId>,
                                        const std::map<std::pair<VertexId, VertexId>, Rational>&);

  std::size_t n_;
  std::vector<Rational> costs_;
  Provenance provenance_ = Provenance::explicit_metric;
  std::vector<Point> points_;
};

/// All-pairs shortest paths of an undirected weighted graph on vertices
/// 0..vertex_count-1 (Dijkstra from every source, exact).
inline MetricInstance metric_closure(std::size_t vertex_count, std::span<const WeightedEdge> edges) {
  std::size_t n = std::max<std::size_t>(vertex_count, 1);
  for (const auto& e : edges) n = std::max<std::size_t>(n, std::max(e.u, e.v) + std::size_t{1});

  std::vector<std::vector<std::pair<VertexId, const Rational*>>> adj(n);
  for (const auto& e : edges) {
    if (sgn(e.weight) < 0)
      throw MetricError("negative weight on edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ")");
    if (e.u == e.v) continue;
    adj[e.u].emplace_back(e.v, &e.weight);
    adj[e.v].emplace_back(e.u, &e.weight);
  }

  std::vector<Rational> dist(n * n);
  std::vector<char> reach(n * n, 0);
  using Item = std::pair<Rational, VertexId>;
  auto later = [](const Item& a, const Item& b) { return a.first > b.first; };
  Rational via;
  for (std::size_t src = 0; src < n; ++src) {
    Rational* d = dist.data() + src * n;
    char* seen = reach.data() + src * n;
    std::vector<char> done(n, 0);
    std::priority_queue<Item, std::vector<Item>, decltype(later)> heap(later);
    seen[src] = 1;
    heap.emplace(Rational(0), static_cast<VertexId>(src));
    while (!heap.empty()) {
      const VertexId x = heap.top().second;
      heap.pop();
      if (done[x]) continue;
      done[x] = 1;
      for (const auto& [y, w] : adj[x]) {
        if (done[y]) continue;
        via = d[x] + *w;
        if (!seen[y] || via < d[y]) {
          d[y] = via;
          seen[y] = 1;
          heap.emplace(via, y);
        }
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (!reach[i * n + j])
        throw MetricError("graph is disconnected: no path between " + std::to_string(i) + " and " +
                          std::to_string(j));

  MetricInstance m(n, std::move(dist), Provenance::graph_closure);
  m.check_structure();
  return m;
}

/// Extends `instance` by vertices with ids size(), size()+1, ... in order.
/// `new_costs` must cover every pair between a new vertex and any other vertex
/// (either orientation). Triangles touching a new vertex are re-verified.
inline MetricInstance reveal_vertices(const MetricInstance& instance, std::span<const VertexId> new_vertices,
                                      const std::map<std::pair<VertexId, VertexId>, Rational>& new_costs) {
  const std::size_t old_n = instance.size();
  const std::size_t n = old_n + new_vertices.size();
  for (std::size_t i = 0; i < new_vertices.size(); ++i)
    if (new_vertices[i] != old_n + i)
      throw MetricError("revealed vertex ids must continue the dense range at " + std::to_string(old_n + i));

  std::vector<Rational> costs(n * n);
  for (std::size_t i = 0; i < old_n; ++i)
    for (std::size_t j = 0; j < old_n; ++j) costs[i * n + j] = instance.cost(VertexId(i), VertexId(j));

  auto lookup = [&](VertexId a, VertexId b) -> const Rational& {
    if (auto it = new_costs.find({a, b}); it != new_costs.end()) return it->second;
    if (auto it = new_costs.find({b, a}); it != new_costs.end()) return it->second;
    throw MetricError("missing cost for pair (" + std::to_string(a) + "," + std::to_string(b) + ")");
  };
  for (std::size_t i = old_n; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const Rational& c = lookup(VertexId(i), VertexId(j));
      costs[i * n + j] = c;
      costs[j * n + i] = c;
    }

  MetricInstance m(n, std::move(costs), instance.provenance());
  m.check_structure();
  m.check_triangles(old_n);
  return m;
}

/// Exact minimum spanning tree cost over the induced complete submetric
/// (Prim, O(k^2)). The subset must contain the root.
inline Rational mst_cost(const MetricInstance& instance, std::span<const VertexId> subset) {
  if (subset.empty()) throw Error("mst_cost: empty vertex subset");
  std::vector<VertexId> vs(subset.begin(), subset.end());
  std::sort(vs.begin(), vs.end());
  vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
  if (vs.front() != kRoot) throw Error("mst_cost: subset must contain the root");
  for (VertexId v : vs)
    if (!instance.contains(v)) throw Error("mst_cost: vertex " + std::to_string(v) + " is not in the instance");

  const std::size_t k = vs.size();
  std::vector<Rational> best(k);
  std::vector<char> in_tree(k, 0);
  in_tree[0] = 1;
  for (std::size_t i = 1; i < k; ++i) best[i] = instance.cost(vs[0], vs[i]);
  Rational total = 0;
  for (std::size_t step = 1; step < k; ++step) {
    std::size_t pick = k;
    for (std::size_t i = 0; i < k; ++i)
      if (!in_tree[i] && (pick == k || best[i] < best[pick])) pick = i;
    in_tree[pick] = 1;
    total += best[pick];
    for (std::size_t i = 0; i < k; ++i)
      if (!in_tree[i] && instance.cost(vs[pick], vs[i]) < best[i]) best[i] = instance.cost(vs[pick], vs[i]);
  }
  return total;
}

inline Rational mst_cost(const MetricInstance& instance) {
  std::vector<VertexId> all(instance.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = VertexId(i);
  return mst_cost(instance, all);
}

/// The revealed part of a metric, in reveal order (root first). Shares the
/// underlying instance; cheap to copy.
class MetricView {
 public:
  enum class Reveal { root_only, all };

  explicit MetricView(std::shared_ptr<const MetricInstance> metric, Reveal reveal = Reveal::all)
      : metric_(std::move(metric)), mask_(metric_->size(), 0) {
    this->reveal(kRoot);
    if (reveal == Reveal::all)
      for (std::size_t v = 1; v < metric_->size(); ++v) this->reveal(VertexId(v));
  }
  explicit MetricView(MetricInstance metric, Reveal reveal = Reveal::all)
      : MetricView(std::make_shared<const MetricInstance>(std::move(metric)), reveal) {}

  const MetricInstance& metric() const noexcept { return *metric_; }
  const std::shared_ptr<const MetricInstance>& shared_metric() const noexcept { return metric_; }
  const Rational& cost(VertexId u, VertexId v) const { return metric_->cost(u, v); }
  std::size_t universe_size() const noexcept { return metric_->size(); }

  bool revealed(VertexId v) const noexcept { return v < mask_.size() && mask_[v]; }
  /// Reveal order, root first.
  const std::vector<VertexId>& order() const noexcept { return order_; }
  /// Revealed vertices sorted by id.
  const std::vector<VertexId>& sorted() const noexcept { return sorted_; }
  std::size_t size() const noexcept { return order_.size(); }

  /// Returns true when v was not revealed before.
  bool reveal(VertexId v) {
    if (!metric_->contains(v)) throw ConfigError("vertex " + std::to_string(v) + " is not in the instance");
    if (mask_[v]) return false;
    mask_[v] = 1;
    order_.push_back(v);
    sorted_.insert(std::upper_bound(sorted_.begin(), sorted_.end(), v), v);
    return true;
  }

 private:
  std::shared_ptr<const MetricInstance> metric_;
  std::vector<char> mask_;
  std::vector<VertexId> order_;
  std::vector<VertexId> sorted_;
};

}  // namespace costshare
