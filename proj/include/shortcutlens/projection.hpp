#pragma once

// Statistics-view layout: shortcut-to-shortcut distance over (productivity,
// normalized coverage, prediction label), a 2D metric embedding, circle
// glyph geometry and collision removal.

#include "shortcutlens/artifact.hpp"
#include "shortcutlens/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace shortcutlens {

inline constexpr std::size_t kMaxProjectedShortcuts = 300;

/// Raised when more shortcuts survive the filters than the view can place.
class LayoutLimitError : public Error {
public:
  explicit LayoutLimitError(std::size_t count)
      : Error("too many shortcuts to project (" + std::to_string(count) + " > " +
              std::to_string(kMaxProjectedShortcuts) + "); tighten filters"),
        count_(count) {}
  std::size_t count() const noexcept { return count_; }

private:
  std::size_t count_;
};

/// Min-max coverage normalization over the currently filtered set. All-equal
/// coverage maps to 0.
struct NormContext {
  std::uint32_t min_coverage = 0;
  std::uint32_t max_coverage = 0;

  double operator()(std::uint32_t coverage) const {
    if (max_coverage <= min_coverage) return 0.0;
    return static_cast<double>(coverage - min_coverage) / static_cast<double>(max_coverage - min_coverage);
  }

  static NormContext of(std::span<const LabelCounts> stats) {
    NormContext n;
    if (stats.empty()) return n;
    n.min_coverage = n.max_coverage = stats.front().coverage();
    for (const auto& s : stats) {
      n.min_coverage = std::min(n.min_coverage, s.coverage());
      n.max_coverage = std::max(n.max_coverage, s.coverage());
    }
    return n;
  }
};

/// The statistics a shortcut is placed by.
struct StatPoint {
  double productivity = 0.0;
  double norm_coverage = 0.0;
  std::size_t label = 0;

  static StatPoint of(const LabelCounts& s, const NormContext& norm) {
    return {s.productivity().value_or(0.0), norm(s.coverage()), s.prediction().value_or(0)};
  }
};

/// |dProd|^2 + |dNorm(Cover)|^2 + [labels differ].
inline double shortcut_distance(const StatPoint& a, const StatPoint& b) {
  const double dp = a.productivity - b.productivity;
  const double dc = a.norm_coverage - b.norm_coverage;
  return dp * dp + dc * dc + (a.label != b.label ? 1.0 : 0.0);
}

inline double shortcut_distance(const LabelCounts& a, const LabelCounts& b, const NormContext& norm) {
  return shortcut_distance(StatPoint::of(a, norm), StatPoint::of(b, norm));
}

struct GlyphScale {
  double r_min = 0.01;
  double r_max = 0.05;
};

struct Glyph {
  double radius;
  double arc;  // fraction of the full ring
  std::size_t label;
};

/// Square-root radius scaling so glyph area tracks coverage.
inline Glyph glyph_geometry(const LabelCounts& s, const NormContext& norm, GlyphScale scale = {}) {
  return {scale.r_min + (scale.r_max - scale.r_min) * std::sqrt(norm(s.coverage())), s.productivity().value_or(0.0),
          s.prediction().value_or(0)};
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Classical metric scaling of a row-major distance matrix into 2D, scaled
/// uniformly into [0,1]^2 and centred. Axis signs are fixed so the result is
/// deterministic.
inline std::vector<Vec2> embed(std::size_t n, const std::vector<double>& dist) {
  if (n > kMaxProjectedShortcuts) throw LayoutLimitError(n);
  std::vector<Vec2> out(n, Vec2{0.5, 0.5});
  if (n < 2) return out;
  Eigen::MatrixXd d2(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) d2(i, j) = dist[i * n + j] * dist[i * n + j];
  }
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd gram = -0.5 * centering * d2 * centering;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  const auto& values = solver.eigenvalues();  // ascending
  const auto& vectors = solver.eigenvectors();
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(n, 2);
  for (int axis = 0; axis < 2; ++axis) {
    const Eigen::Index k = static_cast<Eigen::Index>(n) - 1 - axis;
    const double lambda = values(k);
    if (lambda <= 1e-12) continue;
    Eigen::VectorXd v = vectors.col(k) * std::sqrt(lambda);
    Eigen::Index pivot = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
      if (std::abs(v(i)) > std::abs(v(pivot)) + 1e-12) pivot = i;
    }
    if (v(pivot) < 0) v = -v;
    coords.col(axis) = v;
  }
  const double min_x = coords.col(0).minCoeff(), max_x = coords.col(0).maxCoeff();
  const double min_y = coords.col(1).minCoeff(), max_y = coords.col(1).maxCoeff();
  const double extent = std::max(max_x - min_x, max_y - min_y);
  if (extent < 1e-12) return out;
  const double off_x = (1.0 - (max_x - min_x) / extent) / 2.0;
  const double off_y = (1.0 - (max_y - min_y) / extent) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = {(coords(static_cast<Eigen::Index>(i), 0) - min_x) / extent + off_x,
              (coords(static_cast<Eigen::Index>(i), 1) - min_y) / extent + off_y};
  }
  return out;
}

struct Circle {
  double x = 0.0;
  double y = 0.0;
  double r = 0.0;
};

inline constexpr double kOverlapTolerance = 1e-6;

/// Overlap depth of the worst pair, 0 when every pair is separated within
/// tolerance.
inline double max_overlap(std::span<const Circle> c) {
  double worst = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      const double d = std::hypot(c[i].x - c[j].x, c[i].y - c[j].y);
      const double depth = c[i].r + c[j].r - d;
      if (depth > kOverlapTolerance) worst = std::max(worst, depth);
    }
  }
  return worst;
}

struct CollisionOptions {
  std::size_t max_iterations = 5000;
  std::uint64_t seed = 1;
};

struct CollisionResult {
  std::vector<Circle> circles;
  std::size_t iterations = 0;
  double max_residual = 0.0;  // > 0 only if the iteration cap was reached
};

/// Pairwise relaxation: every overlapping pair is pushed apart along the line
/// of centres, each circle moving half the overlap. Coincident centres get a
/// seeded direction.
inline CollisionResult resolve_collisions(std::vector<Circle> circles, CollisionOptions opt = {}) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  CollisionResult res;
  const std::size_t n = circles.size();
  // Aim slightly past contact so floating-point error cannot leave a pair
  // inside the tolerance band.
  constexpr double kSlack = kOverlapTolerance * 0.25;
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        auto& a = circles[i];
        auto& b = circles[j];
        double dx = b.x - a.x, dy = b.y - a.y;
        double d = std::hypot(dx, dy);
        const double target = a.r + b.r;
        if (d >= target - kSlack) continue;
        if (d < 1e-12) {
          const double t = angle(rng);
          dx = std::cos(t);
          dy = std::sin(t);
          d = 0.0;
        } else {
          dx /= d;
          dy /= d;
        }
        const double push = (target + kSlack - d) / 2.0;
        a.x -= dx * push;
        a.y -= dy * push;
        b.x += dx * push;
        b.y += dy * push;
        moved = true;
      }
    }
    if (!moved) break;
  }
  res.max_residual = max_overlap(circles);
  res.circles = std::move(circles);
  return res;
}

/// Uniformly shrinks and recentres the layout, radii included, when any
/// circle pokes outside the unit square. Overlap-free layouts stay so.
inline void fit_unit_square(std::vector<Circle>& circles) {
  if (circles.empty()) return;
  double lo_x = circles[0].x - circles[0].r, hi_x = circles[0].x + circles[0].r;
  double lo_y = circles[0].y - circles[0].r, hi_y = circles[0].y + circles[0].r;
  for (const auto& c : circles) {
    lo_x = std::min(lo_x, c.x - c.r);
    hi_x = std::max(hi_x, c.x + c.r);
    lo_y = std::min(lo_y, c.y - c.r);
    hi_y = std::max(hi_y, c.y + c.r);
  }
  if (lo_x >= 0.0 && lo_y >= 0.0 && hi_x <= 1.0 && hi_y <= 1.0) return;
  const double s = std::min(1.0, 1.0 / std::max(hi_x - lo_x, hi_y - lo_y));
  const double cx = (lo_x + hi_x) / 2.0, cy = (lo_y + hi_y) / 2.0;
  for (auto& c : circles) {
    c.x = (c.x - cx) * s + 0.5;
    c.y = (c.y - cy) * s + 0.5;
    c.r *= s;
  }
}

struct ProjectionPoint {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
  double arc = 0.0;
  std::string label;
};

struct LayoutOptions {
  GlyphScale glyph;
  CollisionOptions collisions;
};

struct ProjectionLayout {
  std::vector<ProjectionPoint> points;
  std::size_t iterations = 0;
  double max_residual = 0.0;
};

/// Places the given shortcuts (whole-dataset statistics) for the statistics
/// view. Output order follows the input order.
inline ProjectionLayout project(const MinedArtifact& art, std::span<const ShortcutNode* const> nodes,
                                LayoutOptions opt = {}) {
  const std::size_t n = nodes.size();
  if (n > kMaxProjectedShortcuts) throw LayoutLimitError(n);
  std::vector<LabelCounts> stats;
  for (const auto* node : nodes) stats.push_back(node->whole);
  const auto norm = NormContext::of(stats);
  std::vector<StatPoint> pts;
  for (const auto& s : stats) pts.push_back(StatPoint::of(s, norm));
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = shortcut_distance(pts[i], pts[j]);
  }
  auto pos = embed(n, dist);
  std::vector<Circle> circles;
  std::vector<Glyph> glyphs;
  for (std::size_t i = 0; i < n; ++i) {
    glyphs.push_back(glyph_geometry(stats[i], norm, opt.glyph));
    circles.push_back({pos[i].x, pos[i].y, glyphs.back().radius});
  }
  auto resolved = resolve_collisions(std::move(circles), opt.collisions);
  fit_unit_square(resolved.circles);
  ProjectionLayout out;
  out.iterations = resolved.iterations;
  out.max_residual = max_overlap(resolved.circles);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = resolved.circles[i];
    const auto pred = stats[i].prediction();
    out.points.push_back({nodes[i]->id, c.x, c.y, c.r, glyphs[i].arc, pred ? art.dataset.labels[*pred] : std::string{}});
  }
  return out;
}

}  // namespace shortcutlens
