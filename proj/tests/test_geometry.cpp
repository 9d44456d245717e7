#include "layerpot/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace layerpot;

namespace {

GraphFunction sampled(const std::function<double(double)>& f, double lo, double hi, int n) {
  std::vector<double> xs, ys;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    xs.push_back(x);
    ys.push_back(f(x));
  }
  return GraphFunction::from_samples(xs, ys);
}

// brute-force distance to the boundary polyline of a closed polygon
double polygon_distance(const std::vector<Vec2>& v, const Vec2& p) {
  double best = 1e300;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i], b = v[(i + 1) % v.size()];
    const double t = std::clamp((p - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
    best = std::min(best, (a + t * (b - a) - p).norm());
  }
  return best;
}

}  // namespace

TEST(SpecialDomain, FlatGraphHasZeroLipschitzConstant) {
  const auto g = build_special_domain(GraphFunction::flat(), Vec2(0, 1), 10.0);
  EXPECT_EQ(g->kind, DomainKind::SpecialGraph);
  EXPECT_DOUBLE_EQ(g->lipschitz_k1, 0.0);
  EXPECT_TRUE(g->contains(Vec2(0.3, 0.1)));
  EXPECT_FALSE(g->contains(Vec2(0.3, -0.1)));
}

TEST(SpecialDomain, AbsoluteValueWedgeSlope) {
  const auto g = build_special_domain(sampled([](double x) { return std::abs(x) / 2; }, -6, 6, 120), Vec2(0, 1), 4.0);
  EXPECT_NEAR(g->lipschitz_k1, 0.5, 1e-12);
}

TEST(SpecialDomain, SineGraphSlopeFromSamples) {
  const int n = 400;
  const auto phi = sampled([](double x) { return 0.3 * std::sin(x); }, -2 * pi, 2 * pi, n);
  const auto g = build_special_domain(phi, Vec2(0, 1), pi);
  // oracle: the largest finite-difference slope on the sample grid
  double k = 0.0;
  const double h = 4 * pi / n;
  for (int i = 0; i < n; ++i) {
    const double x = -2 * pi + h * i;
    k = std::max(k, std::abs(0.3 * std::sin(x + h) - 0.3 * std::sin(x)) / h);
  }
  EXPECT_NEAR(g->lipschitz_k1, k, 1e-12);
  EXPECT_NEAR(g->lipschitz_k1, 0.3, 1e-3);
}

TEST(SpecialDomain, DirectionMustBeUnit) {
  EXPECT_THROW(build_special_domain(GraphFunction::flat(), Vec2(0, 2), 4.0), GeometryError);
}

TEST(ClosedCurve, InscribedPolygonPerimeter) {
  std::vector<Vec2> v;
  for (int k = 0; k < 128; ++k) v.emplace_back(std::cos(2 * pi * k / 128), std::sin(2 * pi * k / 128));
  const auto g = build_closed_curve(v);
  EXPECT_NEAR(g->perimeter(), 2 * pi, 1e-3);
  EXPECT_NEAR(g->perimeter(), 256 * std::sin(pi / 128), 1e-12);
}

TEST(ClosedCurve, SquarePerimeter) {
  const auto g = build_closed_curve({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  EXPECT_NEAR(g->perimeter(), 4.0, 1e-14);
  EXPECT_EQ(g->corners().size(), 4u);
}

TEST(ClosedCurve, ClockwiseInputIsReoriented) {
  const auto g = build_closed_curve({{0, 0}, {0, 1}, {1, 1}, {1, 0}});
  const auto mesh = make_mesh(g, 16);
  // outward normal at a node on the bottom edge points down
  for (std::size_t j = 0; j < mesh->size(); ++j) {
    if (std::abs(mesh->nodes[j].y()) < 1e-14 && mesh->nodes[j].x() > 0.1 && mesh->nodes[j].x() < 0.9) {
      EXPECT_NEAR(mesh->normals[j].y(), -1.0, 1e-14);
    }
  }
}

TEST(ClosedCurve, ReentrantCornerIsFlagged) {
  const auto g = build_closed_curve({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}});
  const auto mesh = make_mesh(g, 24);
  int reentrant = 0;
  for (const auto& p : mesh->panels) reentrant += p.reentrant ? 1 : 0;
  EXPECT_EQ(reentrant, 2);  // the two panels meeting at (1,1)
}

TEST(ClosedCurve, SelfIntersectionRejected) {
  EXPECT_THROW(build_closed_curve({{0, 0}, {1, 1}, {1, 0}, {0, 1}}), GeometryError);
}

TEST(ClosedCurve, DegenerateInputRejected) {
  EXPECT_THROW(build_closed_curve({{0, 0}, {1, 0}}), GeometryError);
  EXPECT_THROW(build_closed_curve({{0, 0}, {1, 0}, {2, 0}}), GeometryError);
}

TEST(Mesh, CircleWeightsSumToPerimeter) {
  const auto mesh = make_mesh(build_circle(Vec2(0, 0), 1.0), 32, 1.0);
  EXPECT_NEAR(mesh->total_length(), 2 * pi, 1e-10);
}

TEST(Mesh, FramesAreOrthonormal) {
  for (const auto& g : {build_circle(Vec2(0.2, -0.1), 0.7), build_ellipse(Vec2(0, 0), 2.0, 0.5),
                        build_closed_curve({{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}})}) {
    const auto mesh = make_mesh(g, 24);
    for (std::size_t j = 0; j < mesh->size(); ++j) {
      EXPECT_NEAR(mesh->normals[j].norm(), 1.0, 1e-12);
      EXPECT_NEAR(mesh->tangents[j].norm(), 1.0, 1e-12);
      EXPECT_NEAR(mesh->normals[j].dot(mesh->tangents[j]), 0.0, 1e-12);
    }
  }
}

TEST(Mesh, GradedSquareConcentratesNodesAtCorners) {
  const auto mesh = make_mesh(build_closed_curve({{0, 0}, {1, 0}, {1, 1}, {0, 1}}), 16, 3.0);
  // nodes per unit length, counted over each panel's arclength extent
  auto density = [&](int panel) {
    int n = 0;
    for (std::size_t j = 0; j < mesh->size(); ++j) n += mesh->panel_index[j] == panel ? 1 : 0;
    return n / mesh->panels[panel].length;
  };
  double corner = 0.0, mid = 1e300;
  for (int k = 0; k < static_cast<int>(mesh->panels.size()); ++k) {
    const auto& p = mesh->panels[k];
    if (p.corner_start || p.corner_end) {
      corner = std::max(corner, density(k));
    } else {
      mid = std::min(mid, density(k));
    }
  }
  EXPECT_GE(corner / mid, 10.0);
}

TEST(Mesh, FlatGraphNormalPointsDown) {
  const auto mesh = make_mesh(build_special_domain(GraphFunction::flat(), Vec2(0, 1), 1.0), 8);
  for (const auto& n : mesh->normals) {
    EXPECT_NEAR(n.x(), 0.0, 1e-15);
    EXPECT_NEAR(n.y(), -1.0, 1e-15);
  }
}

TEST(Mesh, GraphNormalMatchesSlopeFormula) {
  const auto phi = GraphFunction::smooth([](double x) { return 0.3 * std::sin(x); },
                                         [](double x) { return 0.3 * std::cos(x); },
                                         [](double x) { return -0.3 * std::sin(x); });
  const Vec2 e(0, 1);
  const auto g = build_special_domain(phi, e, 3.0);
  const auto mesh = make_mesh(g, 16);
  for (std::size_t j = 0; j < mesh->size(); ++j) {
    const double x = mesh->nodes[j].x();
    const double d = phi.slope(x);
    const Vec2 nu = (d * g->e_perp() - e) / std::sqrt(1 + d * d);
    EXPECT_NEAR((mesh->normals[j] - nu).norm(), 0.0, 1e-12);
  }
}

TEST(Mesh, ArclengthConvergesAtHighOrder) {
  // ellipse perimeter via a fine reference mesh
  const auto g = build_ellipse(Vec2(0, 0), 2.0, 1.0);
  const double ref = make_mesh(g, 256)->total_length();
  const double e1 = std::abs(make_mesh(g, 8, 1.0)->total_length() - ref);
  const double e2 = std::abs(make_mesh(g, 16, 1.0)->total_length() - ref);
  ASSERT_GT(e1, 0.0);
  EXPECT_GE(std::log2(e1 / std::max(e2, 1e-16)), 4.0);
}

TEST(Mesh, TooFewPanelsRejected) { EXPECT_THROW(make_mesh(build_circle(Vec2(0, 0), 1.0), 4), GeometryError); }

TEST(Mesh, TangentialDerivativeOfSmoothFunction) {
  const auto mesh = make_mesh(build_circle(Vec2(0, 0), 1.0), 16);
  CVector f(static_cast<Eigen::Index>(mesh->size())), df(f.size());
  for (std::size_t j = 0; j < mesh->size(); ++j) {
    const double th = std::atan2(mesh->nodes[j].y(), mesh->nodes[j].x());
    f[j] = std::cos(3 * th);
    df[j] = -3 * std::sin(3 * th);  // d/ds = d/dtheta on the unit circle
  }
  EXPECT_LT((mesh->tangential_derivative(f) - df).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Cone, FlatGraphPointsSatisfyConeCondition) {
  const auto mesh = make_mesh(build_special_domain(GraphFunction::flat(), Vec2(0, 1), 4.0), 32);
  std::size_t j0 = 0;
  for (std::size_t j = 0; j < mesh->size(); ++j)
    if (std::abs(mesh->nodes[j].x()) < std::abs(mesh->nodes[j0].x())) j0 = j;
  ConeSampler s;
  s.aperture = 1.0;
  s.height_cap = 1.0;
  const auto pts = cone_points(*mesh, j0, s);
  ASSERT_FALSE(pts.empty());
  for (const auto& p : pts) {
    EXPECT_GT(p.pos.y(), 0.0);
    EXPECT_LT((p.pos - mesh->nodes[j0]).norm(), 2.0 * p.pos.y());
    EXPECT_LE(p.pos.y(), 1.0 + 1e-12);
  }
}

TEST(Cone, MembershipVerifiedByBruteForceDistance) {
  const std::vector<Vec2> v{{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}};
  const auto mesh = make_mesh(build_closed_curve(v), 32);
  ConeSampler s;
  for (std::size_t j = 0; j < mesh->size(); j += 7) {
    std::vector<ConePoint> pts;
    try {
      pts = cone_points(*mesh, j, s);
    } catch (const GeometryError&) {
      continue;
    }
    for (const auto& p : pts) {
      const double d = polygon_distance(v, p.pos);
      EXPECT_NEAR(d, p.dist, 1e-9);
      EXPECT_LT((p.pos - mesh->nodes[j]).norm(), (1 + s.aperture) * d);
    }
  }
}

TEST(Cone, BlockedAtSquareCornerForSmallAperture) {
  const auto mesh = make_mesh(build_closed_curve({{0, 0}, {1, 0}, {1, 1}, {0, 1}}), 16, 3.0);
  ConeSampler s;
  s.aperture = 0.2;
  s.height_cap = 0.5;  // default floor: half the local panel length
  // first node of the panel that starts at a corner
  std::size_t j = 0;
  for (const auto& p : mesh->panels)
    if (p.corner_start) {
      j = p.first_node;
      break;
    }
  EXPECT_THROW(cone_points(*mesh, j, s), GeometryError);
}

TEST(Cone, CircleHasAllLevels) {
  const auto mesh = make_mesh(build_circle(Vec2(0, 0), 1.0), 32);
  ConeSampler s;
  s.levels = 6;
  const auto pts = cone_points(*mesh, 5, s);
  std::set<int> levels;
  for (const auto& p : pts) levels.insert(p.level);
  EXPECT_EQ(levels.size(), 6u);
}

TEST(Cone, NarrowConeLiesInsideWideCone) {
  const auto mesh = make_mesh(build_circle(Vec2(0, 0), 1.0), 32);
  const auto& geom = *mesh->geometry;
  ConeSampler narrow;
  narrow.aperture = 0.5;
  const double wide = 1.0;
  for (std::size_t j = 0; j < mesh->size(); j += 3)
    for (const auto& p : cone_points(*mesh, j, narrow))
      EXPECT_LT((p.pos - mesh->nodes[j]).norm(), (1 + wide) * geom.distance(p.pos));
}
