#include <gtest/gtest.h>

#include "support.hpp"

using namespace costshare;
using namespace testing_support;

namespace {

std::shared_ptr<const MetricInstance> points(std::vector<std::pair<Rational, Rational>> xy) {
  std::vector<Point> ps;
  for (auto& [x, y] : xy) ps.push_back({x, y});
  return std::make_shared<const MetricInstance>(MetricInstance::from_points(std::move(ps)));
}

DualFamily family_of(const std::shared_ptr<const MetricInstance>& m) {
  DualFamily f(m);
  for (VertexId v = 0; v < m->size(); ++v) f.insert(v);
  return f;
}

const Rational hundredth = rational(1, 100);

}  // namespace

TEST(ChargeLevel, Examples) {
  EXPECT_EQ(charge_level(Rational(9)), 1);
  EXPECT_EQ(charge_level(Rational(8)), 1);
  EXPECT_EQ(charge_level(rational(1, 3)), -4);
  EXPECT_EQ(charge_level(Rational(4)), 0);
  EXPECT_THROW(charge_level(Rational(0)), Error);
  Gen g(1);
  for (int i = 0; i < 500; ++i) {
    const Rational c = rational(static_cast<long>(g.range(1, 1 << 20)), static_cast<long>(g.range(1, 1 << 12)));
    const int j = charge_level(c);
    EXPECT_LE(pow2(j + 2), c);
    EXPECT_LT(c, pow2(j + 3));
  }
}

TEST(DualFamily, PartitionInvariantsAfterEveryInsertion) {
  Gen g(123);
  for (int trial = 0; trial < 60; ++trial) {
    auto m = random_metric(g, g.range(2, 14));
    DualFamily f(m);
    std::vector<VertexId> order;
    for (VertexId v = 1; v < m->size(); ++v) order.push_back(v);
    g.shuffle(order);
    order.insert(order.begin(), kRoot);
    for (VertexId v : order) {
      f.insert(v);
      ASSERT_EQ(partition_problems(f), "") << "trial " << trial;
    }
  }
}

TEST(DualFamily, TopLevelIsOneComponentAndBottomIsSingletons) {
  Gen g(5);
  for (int trial = 0; trial < 40; ++trial) {
    auto m = random_metric(g, g.range(2, 10));
    DualFamily f = family_of(m);
    EXPECT_EQ(f.level(f.highest()).size(), 1u);
    EXPECT_EQ(f.level(f.lowest()).size(), m->size());
  }
}

TEST(DualFamily, FirstCreatedCenterWins) {
  // Centers 0 and 2 are 3/4 apart; vertex 1 sits at 3/8 from both. At level 0
  // (radius 1/2) it may join either and must join the first.
  auto m = points({{0, 0}, {rational(3, 8), 0}, {rational(3, 4), 0}});
  DualFamily f(m, 0, 0);
  f.insert(0);
  f.insert(2);
  f.insert(1);
  const auto& p = f.level(0);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p.component_of[1], p.component_of[0]);
  EXPECT_EQ(p.centers, (std::vector<VertexId>{0, 2}));
}

TEST(DualFamily, LazyLevelsReplayInsertionOrder) {
  Gen g(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = random_metric(g, g.range(3, 10));
    DualFamily f = family_of(m);
    const int extra = f.highest() + 3;
    const auto& lazy = f.ensure_level(extra);
    DualFamily direct(m, extra, extra);
    for (VertexId v = 0; v < m->size(); ++v) direct.insert(v);
    EXPECT_EQ(lazy.components, direct.level(extra).components);
    EXPECT_EQ(partition_problems(f), "");
    const DualFamily copy = dual_insert(DualFamily(m), 0);
    EXPECT_TRUE(copy.inserted(0));
  }
}

TEST(DualFamily, CenterBoundCanExceedTheMstOfAllVertices) {
  // Hub 0 at distance 1 from leaves 1, 2, 3 (pairwise 2). Inserting the leaves
  // first makes them three level-2 centers, yet the whole MST costs 3.
  auto m = std::make_shared<const MetricInstance>(metric_closure(
      4, std::vector<WeightedEdge>{{0, 1, Rational(1)}, {0, 2, Rational(1)}, {0, 3, Rational(1)}}));
  DualFamily f(m, 2, 2);
  for (VertexId v : {1u, 2u, 3u, 0u}) f.insert(v);
  ASSERT_EQ(f.level(2).size(), 3u);
  EXPECT_EQ(center_mst_bound(f, 2), Rational(4));
  EXPECT_GT(center_mst_bound(f, 2), mst_cost(*m));
  EXPECT_LE(dual_lower_bound(f, 2), mst_cost(*m));
}

TEST(DualFamily, LowerBoundNeverExceedsMst) {
  Gen g(31);
  for (int trial = 0; trial < 80; ++trial) {
    auto m = random_metric(g, g.range(2, 12));
    DualFamily f(m);
    const int lo = f.lowest() - 2, hi = f.highest() + 2;
    std::vector<VertexId> inserted;
    for (VertexId v = 0; v < m->size(); ++v) {
      f.insert(v);
      inserted.push_back(v);
      const Rational opt = mst_cost(*m, inserted);
      for (int j = lo; j <= hi; ++j) {
        f.ensure_level(j);
        ASSERT_LE(dual_lower_bound(f, j), opt) << "trial " << trial << " level " << j;
        // The root is inserted first, so it centers its component on every level.
        ASSERT_LE(center_mst_bound(f, j), mst_cost(*m, f.level(j).centers)) << "trial " << trial << " level " << j;
      }
    }
  }
}

TEST(ChargeMap, IncrementalUpdateMatchesRebuild) {
  Gen g(17);
  int moves = 0;
  for (int trial = 0; trial < 120; ++trial) {
    auto m = random_metric(g, g.range(3, 10));
    RoutingState s = random_tree_state(g, m);
    DualFamily f = family_of(m);
    for (int step = 0; step < 4; ++step) {
      auto t = *RoutingTree::build(s);
      ChargeMap cm = ChargeMap::build(s, t, f);
      TreeMoveEvaluator ev(s, t);
      std::optional<std::pair<VertexId, VertexId>> mv;
      for (VertexId u : t.vertices())
        if (auto v = ev.closest_improving(u)) {
          mv = std::pair{u, *v};
          break;
        }
      if (!mv) break;
      tree_follow_move(s, t, mv->first, mv->second);
      auto t2 = *RoutingTree::build(s);
      cm.update(s, t2, f, follow_move_touched(t, t2, mv->first, mv->second));
      ASSERT_TRUE(cm == ChargeMap::build(s, t2, f)) << "trial " << trial;
      ++moves;
    }
  }
  EXPECT_GT(moves, 30);
}

TEST(ChargeMap, EveryNonRootVertexChargesItsParentEdge) {
  Gen g(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = random_metric(g, g.range(2, 10));
    RoutingState s = random_tree_state(g, m);
    DualFamily f = family_of(m);
    auto t = *RoutingTree::build(s);
    ChargeMap cm = ChargeMap::build(s, t, f);
    EXPECT_EQ(cm.by_vertex().size(), t.size() - 1);
    for (const auto& [v, c] : cm.by_vertex()) {
      EXPECT_EQ(c.cost, m->cost(v, *t.parent(v)));
      EXPECT_EQ(c.cut.level, charge_level(c.cost));
      EXPECT_EQ(c.cut.component, f.level(c.cut.level).component_of[v]);
      EXPECT_EQ(c.leaf, t.is_leaf(v));
      EXPECT_TRUE(cm.by_cut().at(c.cut).contains(Charger{v, c.leaf}));
    }
  }
}

namespace {

struct Classified {
  RoutingState state;
  std::optional<StateKind> kind;
  bool closure_violation = false;
};

Classified classify_paths(const std::shared_ptr<const MetricInstance>& m, const std::vector<Path>& paths,
                          std::optional<VertexId> last_mover = std::nullopt) {
  Classified out{RoutingState(MetricView(m)), std::nullopt, false};
  for (const Path& p : paths) out.state.add_agents(p.front(), 1, p);
  out.state.set_last_mover(last_mover);
  DualFamily f = family_of(m);
  auto t = *RoutingTree::build(out.state);
  ChargeMap cm = ChargeMap::build(out.state, t, f);
  TreeMoveEvaluator ev(out.state, t);
  try {
    out.kind = classify(out.state, cm, ev).kind;
  } catch (const ClosureViolation&) {
    out.closure_violation = true;
  }
  return out;
}

}  // namespace

TEST(Classify, SingleTerminalIsBalancedEquilibrium) {
  auto m = points({{0, 0}, {1, 0}});
  EXPECT_EQ(classify_paths(m, {{1, 0}}).kind, StateKind::balanced_equilibrium);
}

TEST(Classify, TwoLeavesOnOneCutAreLeafUnbalanced) {
  auto m = points({{0, 0}, {1, 0}, {1, hundredth}});
  EXPECT_EQ(classify_paths(m, {{1, 0}, {2, 0}}).kind, StateKind::leaf_unbalanced);
}

TEST(Classify, TwoNonLeavesNeedTheLastMover) {
  // a=1 and b=2 are close non-leaves; their children 3 and 4 are close leaves.
  auto m = points({{0, 0}, {1, 0}, {1, hundredth}, {2, 0}, {2, hundredth}});
  const std::vector<Path> paths{{3, 1, 0}, {4, 2, 0}};
  EXPECT_TRUE(classify_paths(m, paths).closure_violation);
  EXPECT_TRUE(classify_paths(m, paths, 3).closure_violation);
  EXPECT_EQ(classify_paths(m, paths, 2).kind, StateKind::non_leaf_unbalanced);
}

TEST(Classify, TwoDoublyChargedCutsViolateClosure) {
  auto m = points({{0, 0}, {1, 0}, {1, hundredth}, {2, 0}, {2, hundredth}, {-1, 0}, {-1, hundredth}, {-2, 0}, {-2, hundredth}});
  EXPECT_TRUE(classify_paths(m, {{3, 1, 0}, {4, 2, 0}, {7, 5, 0}, {8, 6, 0}}, 1).closure_violation);
}

TEST(Classify, ThreeNonLeavesOnOneCutViolateClosure) {
  const Rational two_hundredths = rational(2, 100);
  auto m = points({{0, 0}, {1, 0}, {1, hundredth}, {1, two_hundredths}, {2, 0}, {2, hundredth}, {2, two_hundredths}});
  EXPECT_TRUE(classify_paths(m, {{4, 1, 0}, {5, 2, 0}, {6, 3, 0}}, 1).closure_violation);
}

TEST(Accounting, CertifiesEqpEquilibria) {
  Gen g(55);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = g.range(4, 30);
    auto w = build_random_euclidean(n, g.range(0, 1000), EpochProfile::churn);
    EqpSimulation sim(w.metric);
    for (const auto& e : w.schedule) sim.run_epoch(e, false);
    TreeAnalysis a(sim.state(), sim.family());
    ASSERT_EQ(a.klass.kind, StateKind::balanced_equilibrium);
    const Rational opt = mst_cost(sim.state().metric(), sim.state().view().sorted());
    const AccountingReport r = logn_accounting(sim.state(), a.tree, sim.family(), a.charges, opt);
    EXPECT_TRUE(r.certified) << (r.failures.empty() ? "" : r.failures.front());
    EXPECT_TRUE(r.each_cut_once);
    EXPECT_LE(r.total_cost, r.certificate);
    EXPECT_LE(r.max_edge, opt);
    for (const auto& row : r.rows) EXPECT_LE(row.lower_bound, opt);
    EXPECT_LE(r.window_levels, static_cast<std::size_t>(std::ceil(std::log2(double(r.vertices)))) + 1);
  }
}

TEST(Accounting, FlagsCutsChargedTwice) {
  auto m = points({{0, 0}, {1, 0}, {1, hundredth}});
  RoutingState s{MetricView(m)};
  s.add_agents(1, 1, {1, 0});
  s.add_agents(2, 1, {2, 0});
  DualFamily f = family_of(m);
  auto t = *RoutingTree::build(s);
  ChargeMap cm = ChargeMap::build(s, t, f);
  const AccountingReport r = logn_accounting(s, t, f, cm, mst_cost(*m));
  EXPECT_FALSE(r.each_cut_once);
  EXPECT_FALSE(r.certified);
}

TEST(Accounting, EmptyTreeIsTriviallyCertified) {
  auto m = points({{0, 0}, {1, 0}});
  RoutingState s{MetricView(m, MetricView::Reveal::root_only)};
  DualFamily f(m);
  f.insert(0);
  auto t = *RoutingTree::build(s);
  ChargeMap cm = ChargeMap::build(s, t, f);
  const AccountingReport r = logn_accounting(s, t, f, cm, Rational(0));
  EXPECT_TRUE(r.certified);
  EXPECT_EQ(r.total_cost, Rational(0));
}
