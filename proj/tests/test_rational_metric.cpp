#include <gtest/gtest.h>

#include "support.hpp"

using namespace costshare;
using namespace testing_support;

TEST(Rational, ParsesFractionsIntegersAndDecimals) {
  EXPECT_EQ(parse_rational("3/6"), rational(1, 2));
  EXPECT_EQ(parse_rational("-4"), Rational(-4));
  EXPECT_EQ(parse_rational("0.125"), rational(1, 8));
  EXPECT_EQ(parse_rational("2.5"), rational(5, 2));
  EXPECT_THROW(parse_rational("1/0"), ConfigError);
  EXPECT_THROW(parse_rational("abc"), ConfigError);
  EXPECT_THROW(parse_rational(""), ConfigError);
}

TEST(Rational, PrintsCanonicalFractions) {
  EXPECT_EQ(to_string(rational(6, 4)), "3/2");
  EXPECT_EQ(to_string(Rational(5)), "5/1");
  EXPECT_EQ(parse_rational(to_string(rational(-7, 3))), rational(-7, 3));
}

TEST(Rational, DecimalsHaveSixDigits) {
  EXPECT_EQ(to_decimal(rational(1, 3)), "0.333333");
  EXPECT_EQ(to_decimal(rational(2, 3)), "0.666667");
  EXPECT_EQ(to_decimal(Rational(80)), "80.000000");
}

TEST(Rational, FloorAndCeilLog2AreExact) {
  EXPECT_EQ(floor_log2(Rational(1)), 0);
  EXPECT_EQ(floor_log2(Rational(9)), 3);
  EXPECT_EQ(floor_log2(Rational(8)), 3);
  EXPECT_EQ(floor_log2(rational(1, 3)), -2);
  EXPECT_EQ(floor_log2(rational(1, 4)), -2);
  EXPECT_EQ(ceil_log2(Rational(9)), 4);
  EXPECT_EQ(ceil_log2(Rational(8)), 3);
  EXPECT_EQ(ceil_log2(rational(1, 3)), -1);
  Gen g(11);
  for (int i = 0; i < 300; ++i) {
    const Rational x = rational(static_cast<long>(g.range(1, 100000)), static_cast<long>(g.range(1, 100000)));
    const int f = floor_log2(x);
    EXPECT_LE(pow2(f), x);
    EXPECT_LT(x, pow2(f + 1));
    const int c = ceil_log2(x);
    EXPECT_LE(x, pow2(c));
    EXPECT_LT(pow2(c - 1), x);
  }
}

TEST(Rational, HarmonicNumbers) {
  EXPECT_EQ(harmonic(0), Rational(0));
  EXPECT_EQ(harmonic(1), Rational(1));
  EXPECT_EQ(harmonic(4), rational(25, 12));
  Rational h = 0;
  for (long i = 1; i <= 40; ++i) h += rational(1, i);
  EXPECT_EQ(harmonic(40), h);
}

TEST(Metric, RejectsNonMetrics) {
  std::vector<Rational> asym{0, 1, 2, 0};
  EXPECT_THROW(MetricInstance::from_matrix(2, asym), MetricError);
  std::vector<Rational> zero{0, 0, 0, 0};
  EXPECT_THROW(MetricInstance::from_matrix(2, zero), MetricError);
  // 0-1: 1, 1-2: 1, 0-2: 3 breaks the triangle inequality.
  std::vector<Rational> tri{0, 1, 3, 1, 0, 1, 3, 1, 0};
  try {
    MetricInstance::from_matrix(3, tri);
    FAIL() << "triangle violation accepted";
  } catch (const MetricError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('0'), std::string::npos);
    EXPECT_NE(msg.find('2'), std::string::npos);
  }
}

TEST(Metric, ClosureOfWeightedGraph) {
  std::vector<WeightedEdge> edges{{0, 1, Rational(2)}, {1, 2, Rational(3)}, {0, 2, Rational(10)}};
  const MetricInstance m = metric_closure(3, edges);
  EXPECT_EQ(m.cost(0, 2), Rational(5));
  EXPECT_EQ(m.cost(2, 0), Rational(5));
  EXPECT_EQ(m.provenance(), Provenance::graph_closure);
  std::vector<WeightedEdge> split{{0, 1, Rational(1)}};
  EXPECT_THROW(metric_closure(3, split), MetricError);
}

TEST(Metric, RevealChecksNewTriangles) {
  const MetricInstance base = metric_closure(2, std::vector<WeightedEdge>{{0, 1, Rational(2)}});
  std::vector<VertexId> fresh{2};
  std::map<std::pair<VertexId, VertexId>, Rational> ok{{{0, 2}, Rational(1)}, {{1, 2}, Rational(1)}};
  const MetricInstance grown = reveal_vertices(base, fresh, ok);
  EXPECT_EQ(grown.size(), 3u);
  EXPECT_EQ(grown.cost(1, 2), Rational(1));
  std::map<std::pair<VertexId, VertexId>, Rational> bad{{{0, 2}, Rational(1)}, {{1, 2}, Rational(4)}};
  EXPECT_THROW(reveal_vertices(base, fresh, bad), MetricError);
}

TEST(Metric, EuclideanDistancesRoundUpToMillionths) {
  const Point a{0, 0}, b{1, 1};
  const Rational d = euclidean_distance(a, b);
  EXPECT_EQ(d, rational(1414214, 1000000));
  EXPECT_EQ(euclidean_distance(a, Point{rational(3, 10), rational(4, 10)}), rational(1, 2));
  // The rounded distances still satisfy the triangle inequality.
  Gen g(5);
  for (int i = 0; i < 20; ++i) {
    auto m = random_euclidean_metric(g, 8, 1000);
    EXPECT_NO_THROW(m->check_metric());
  }
  EXPECT_THROW(MetricInstance::from_points({Point{0, 0}, Point{0, 0}}), MetricError);
}

TEST(Metric, MstMatchesPruferEnumeration) {
  Gen g(42);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = g.range(2, 7);
    auto m = random_metric(g, n);
    std::vector<VertexId> all(n);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(mst_cost(*m), prufer_mst(*m, all)) << "trial " << trial;
    std::vector<VertexId> subset{kRoot};
    for (VertexId v = 1; v < n; ++v)
      if (g.coin()) subset.push_back(v);
    EXPECT_EQ(mst_cost(*m, subset), prufer_mst(*m, subset)) << "trial " << trial;
  }
}

TEST(Metric, MstRequiresTheRoot) {
  const MetricInstance m = metric_closure(3, std::vector<WeightedEdge>{{0, 1, Rational(1)}, {1, 2, Rational(1)}});
  std::vector<VertexId> no_root{1, 2};
  EXPECT_THROW(mst_cost(m, no_root), Error);
  std::vector<VertexId> only_root{0};
  EXPECT_EQ(mst_cost(m, only_root), Rational(0));
}

TEST(Metric, ViewRevealsInOrder) {
  auto m = std::make_shared<const MetricInstance>(
      metric_closure(4, std::vector<WeightedEdge>{{0, 1, Rational(1)}, {1, 2, Rational(1)}, {2, 3, Rational(1)}}));
  MetricView view(m, MetricView::Reveal::root_only);
  EXPECT_EQ(view.size(), 1u);
  EXPECT_TRUE(view.reveal(3));
  EXPECT_TRUE(view.reveal(1));
  EXPECT_FALSE(view.reveal(3));
  EXPECT_EQ(view.order(), (std::vector<VertexId>{0, 3, 1}));
  EXPECT_EQ(view.sorted(), (std::vector<VertexId>{0, 1, 3}));
  EXPECT_THROW(view.reveal(9), ConfigError);
}
