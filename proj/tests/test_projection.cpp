#include "corpora.hpp"

#include "shortcutlens/miner.hpp"
#include "shortcutlens/projection.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace shortcutlens;

namespace {

double gap(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::vector<Circle> random_circles(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> pos(0.2, 0.8), rad(0.01, 0.05);
  std::vector<Circle> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({pos(rng), pos(rng), rad(rng)});
  return c;
}

}  // namespace

TEST(Distance, IdenticalStatsAreZero) {
  StatPoint a{0.7, 0.3, 1};
  EXPECT_EQ(shortcut_distance(a, a), 0.0);
}

TEST(Distance, ProductivityDifferenceOnly) {
  EXPECT_NEAR(shortcut_distance(StatPoint{0.8, 0.2, 0}, StatPoint{0.6, 0.2, 0}), 0.04, 1e-15);
}

TEST(Distance, LabelIndicatorAddsExactlyOne) {
  StatPoint a{0.8, 0.1, 0}, b{0.6, 0.9, 0}, c{0.6, 0.9, 1};
  EXPECT_EQ(shortcut_distance(a, c) - shortcut_distance(a, b), 1.0);
  EXPECT_EQ(shortcut_distance(b, c), 1.0);
}

TEST(Distance, MatchesDirectSubstitutionAndIsSymmetric) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> label(0, 2);
  for (int i = 0; i < 10000; ++i) {
    StatPoint a{u(rng), u(rng), label(rng)}, b{u(rng), u(rng), label(rng)};
    const double direct = std::pow(std::abs(a.productivity - b.productivity), 2) +
                          std::pow(std::abs(a.norm_coverage - b.norm_coverage), 2) + (a.label != b.label ? 1 : 0);
    ASSERT_NEAR(shortcut_distance(a, b), direct, 1e-12);
    ASSERT_EQ(shortcut_distance(a, b), shortcut_distance(b, a));
    ASSERT_GE(shortcut_distance(a, b), 0.0);
  }
}

TEST(Distance, NormalizesCoverageOverTheSet) {
  std::vector<LabelCounts> s{{{8, 2}}, {{3, 1}}, {{20, 0}}};
  auto norm = NormContext::of(s);
  EXPECT_EQ(norm.min_coverage, 4u);
  EXPECT_EQ(norm.max_coverage, 20u);
  EXPECT_DOUBLE_EQ(norm(12), 0.5);
  // (0.8 vs 0.75)^2 + (6/16 vs 0)^2, same label.
  EXPECT_NEAR(shortcut_distance(s[0], s[1], norm), 0.0025 + 0.140625, 1e-15);
  NormContext flat = NormContext::of(std::vector<LabelCounts>{{{2, 3}}, {{4, 1}}});
  EXPECT_EQ(flat(5), 0.0);
}

TEST(Glyph, RadiusRangeAndArc) {
  NormContext norm{10, 50};
  EXPECT_DOUBLE_EQ(glyph_geometry({{10, 0}}, norm).radius, 0.01);
  EXPECT_DOUBLE_EQ(glyph_geometry({{0, 50}}, norm).radius, 0.05);
  auto g = glyph_geometry({{5, 15}}, norm);
  EXPECT_DOUBLE_EQ(g.arc, 0.75);
  EXPECT_EQ(g.label, 1u);
  EXPECT_DOUBLE_EQ(g.radius, 0.01 + 0.04 * std::sqrt(0.25));
  EXPECT_LT(glyph_geometry({{20, 0}}, norm).radius, glyph_geometry({{30, 0}}, norm).radius);
}

TEST(Embed, TwoNodesSitOnOppositeSides) {
  auto p = embed(2, {0, 0.3, 0.3, 0});
  EXPECT_NEAR(gap(p[0], p[1]), 1.0, 1e-12);
  EXPECT_NEAR(p[0].y, p[1].y, 1e-12);
  EXPECT_NEAR((p[0].x + p[1].x) / 2, 0.5, 1e-12);
}

TEST(Embed, EqualDistancesGiveAnEquilateralTriangle) {
  auto p = embed(3, {0, 1, 1, 1, 0, 1, 1, 1, 0});
  const double ab = gap(p[0], p[1]), ac = gap(p[0], p[2]), bc = gap(p[1], p[2]);
  EXPECT_NEAR(ab, ac, 1e-9);
  EXPECT_NEAR(ab, bc, 1e-9);
  EXPECT_GT(ab, 0.5);
}

TEST(Embed, RecoversPlanarConfigurationsUpToScale) {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int round = 0; round < 20; ++round) {
    const std::size_t n = 4 + round;
    std::vector<Vec2> truth;
    for (std::size_t i = 0; i < n; ++i) truth.push_back({u(rng), u(rng)});
    std::vector<double> dist(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = gap(truth[i], truth[j]);
    auto p = embed(n, dist);
    const double scale = gap(p[0], p[1]) / dist[1];
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_GE(p[i].x, -1e-12);
      ASSERT_LE(p[i].x, 1 + 1e-12);
      ASSERT_GE(p[i].y, -1e-12);
      ASSERT_LE(p[i].y, 1 + 1e-12);
      for (std::size_t j = 0; j < n; ++j) ASSERT_NEAR(gap(p[i], p[j]), scale * dist[i * n + j], 1e-8);
    }
  }
}

TEST(Embed, DeterministicAndBounded) {
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  const std::size_t n = 40;
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = u(rng);
  auto a = embed(n, dist), b = embed(n, dist);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].y, b[i].y);
  }
  EXPECT_THROW(embed(301, std::vector<double>(301 * 301, 1.0)), LayoutLimitError);
  EXPECT_NO_THROW(embed(300, std::vector<double>(300 * 300, 0.0)));
}

TEST(Collisions, CoincidentPointsSeparate) {
  auto r = resolve_collisions({{0.5, 0.5, 0.05}, {0.5, 0.5, 0.05}});
  EXPECT_GE(std::hypot(r.circles[0].x - r.circles[1].x, r.circles[0].y - r.circles[1].y), 0.1 - kOverlapTolerance);
  EXPECT_EQ(r.max_residual, 0.0);
}

TEST(Collisions, SeparatedLayoutIsAFixpoint) {
  std::vector<Circle> in{{0.1, 0.1, 0.05}, {0.5, 0.5, 0.05}, {0.9, 0.2, 0.02}};
  auto r = resolve_collisions(in);
  EXPECT_EQ(r.iterations, 0u);
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(r.circles[i].x, in[i].x);
    EXPECT_EQ(r.circles[i].y, in[i].y);
  }
}

TEST(Collisions, RandomLayoutsEndOverlapFree) {
  std::mt19937_64 rng(54);
  for (int round = 0; round < 200; ++round) {
    auto circles = random_circles(rng, 2 + static_cast<std::size_t>(round % 60));
    auto r = resolve_collisions(circles, {500, static_cast<std::uint64_t>(round)});
    ASSERT_EQ(r.max_residual, 0.0) << "round " << round;
    ASSERT_EQ(max_overlap(r.circles), 0.0);
    auto again = resolve_collisions(circles, {500, static_cast<std::uint64_t>(round)});
    for (std::size_t i = 0; i < circles.size(); ++i) ASSERT_EQ(again.circles[i].x, r.circles[i].x);
  }
}

TEST(Collisions, CapReportsResidual) {
  std::vector<Circle> pile(30, Circle{0.5, 0.5, 0.05});
  auto r = resolve_collisions(pile, {1, 1});
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_GT(r.max_residual, 0.0);
}

TEST(Collisions, FitKeepsSeparation) {
  std::mt19937_64 rng(55);
  for (int round = 0; round < 50; ++round) {
    auto r = resolve_collisions(random_circles(rng, 80));
    fit_unit_square(r.circles);
    EXPECT_EQ(max_overlap(r.circles), 0.0);
    for (const auto& c : r.circles) {
      EXPECT_GE(c.x - c.r, -1e-12);
      EXPECT_LE(c.x + c.r, 1 + 1e-12);
      EXPECT_GE(c.y - c.r, -1e-12);
      EXPECT_LE(c.y + c.r, 1 + 1e-12);
    }
  }
}

TEST(Project, MiniSpaceLayout) {
  auto ds = load_dataset(testsupport::fixture("mini_space.jsonl"));
  MiningConfig c;
  c.min_coverage = 5;
  auto art = mine(ds, c);
  std::vector<const ShortcutNode*> nodes;
  for (const auto& n : art.nodes) {
    if (n.selected && !n.is_root()) nodes.push_back(&n);
  }
  ASSERT_EQ(nodes.size(), 5u);
  auto a = project(art, nodes);
  auto b = project(art, nodes);
  ASSERT_EQ(a.points.size(), 5u);
  EXPECT_EQ(a.max_residual, 0.0);
  std::vector<Circle> circles;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& p = a.points[i];
    EXPECT_EQ(p.id, nodes[i]->id);
    EXPECT_DOUBLE_EQ(p.arc, 0.8);
    EXPECT_EQ(p.label, ds.labels()[*nodes[i]->whole.prediction()]);
    EXPECT_EQ(p.x, b.points[i].x);
    EXPECT_EQ(p.y, b.points[i].y);
    circles.push_back({p.x, p.y, p.radius});
    for (std::size_t j = 0; j < 5; ++j) {
      if (nodes[i]->whole.coverage() < nodes[j]->whole.coverage()) EXPECT_LT(p.radius, a.points[j].radius);
    }
  }
  EXPECT_EQ(max_overlap(circles), 0.0);
}

TEST(Project, EmptyAndSingle) {
  auto ds = load_dataset(testsupport::fixture("mini_space.jsonl"));
  MiningConfig c;
  c.min_coverage = 5;
  auto art = mine(ds, c);
  EXPECT_TRUE(project(art, {}).points.empty());
  const ShortcutNode* one[] = {&art.nodes.front()};
  auto single = project(art, one);
  EXPECT_DOUBLE_EQ(single.points[0].x, 0.5);
  EXPECT_DOUBLE_EQ(single.points[0].radius, 0.01);
}
