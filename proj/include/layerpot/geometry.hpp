#ifndef LAYERPOT_GEOMETRY_HPP
#define LAYERPOT_GEOMETRY_HPP

#include "layerpot/common.hpp"
#include "layerpot/quadrature.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>

namespace layerpot {

/// Real graph height phi of a special Lipschitz domain, with slope and
/// curvature callables. Kinks are abscissae where the slope jumps.
struct GraphFunction {
  std::function<double(double)> value;
  std::function<double(double)> slope;
  std::function<double(double)> second;  // zero for piecewise-linear graphs
  std::vector<double> kinks;
  std::vector<double> sample_x;  // empty for closed-form graphs
  std::vector<double> sample_y;

  /// Piecewise-linear interpolant of samples (x ascending); constant outside.
  static GraphFunction from_samples(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
      throw GeometryError("graph samples need matching x/y arrays with at least two entries");
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw GeometryError("non-finite graph sample");
      if (i > 0 && !(xs[i] > xs[i - 1])) throw GeometryError("graph sample abscissae must increase");
    }
    GraphFunction g;
    auto x = std::make_shared<std::vector<double>>(xs);
    auto y = std::make_shared<std::vector<double>>(ys);
    auto locate = [x](double t) {
      auto it = std::upper_bound(x->begin(), x->end(), t);
      auto k = static_cast<std::size_t>(std::distance(x->begin(), it));
      return std::clamp<std::size_t>(k, 1, x->size() - 1) - 1;
    };
    g.value = [x, y, locate](double t) {
      if (t <= x->front()) return y->front();
      if (t >= x->back()) return y->back();
      const auto k = locate(t);
      const double w = (t - (*x)[k]) / ((*x)[k + 1] - (*x)[k]);
      return (1.0 - w) * (*y)[k] + w * (*y)[k + 1];
    };
    g.slope = [x, y, locate](double t) {
      if (t < x->front() || t > x->back()) return 0.0;
      const auto k = locate(t);
      return ((*y)[k + 1] - (*y)[k]) / ((*x)[k + 1] - (*x)[k]);
    };
    g.second = [](double) { return 0.0; };
    for (std::size_t k = 1; k + 1 < xs.size(); ++k) {
      const double s0 = (ys[k] - ys[k - 1]) / (xs[k] - xs[k - 1]);
      const double s1 = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k]);
      if (std::abs(s1 - s0) > 1e-12 * (1.0 + std::abs(s0))) g.kinks.push_back(xs[k]);
    }
    g.sample_x = std::move(xs);
    g.sample_y = std::move(ys);
    return g;
  }

  static GraphFunction smooth(std::function<double(double)> f, std::function<double(double)> df,
                              std::function<double(double)> d2f) {
    GraphFunction g;
    g.value = std::move(f);
    g.slope = std::move(df);
    g.second = std::move(d2f);
    return g;
  }

  static GraphFunction flat() {
    return smooth([](double) { return 0.0; }, [](double) { return 0.0; }, [](double) { return 0.0; });
  }
};

/// A smooth parametric arc on s in [0, 1]. Pieces meet at corners or at
/// smooth joints; orientation keeps the domain on the left.
struct BoundaryPiece {
  std::function<Vec2(double)> pos;
  std::function<Vec2(double)> d1;
  std::function<Vec2(double)> d2;
  bool corner_start = false;
  bool corner_end = false;
  bool straight = false;
  double length = 0.0;
  double interior_angle_start = pi;  // interior angle of the domain at s = 0
  double interior_angle_end = pi;
};

enum class DomainKind { SpecialGraph, ClosedCurve };

/// Closest boundary point found by DomainGeometry::nearest.
struct BoundaryFoot {
  double distance = std::numeric_limits<double>::infinity();
  Vec2 point = Vec2::Zero();
  int piece = -1;
  double s = 0.0;
};

class DomainGeometry {
 public:
  DomainKind kind = DomainKind::ClosedCurve;
  Vec2 e{0.0, 1.0};  // graph direction (SpecialGraph)
  std::optional<GraphFunction> phi;
  std::vector<Vec2> vertices;  // polygon vertices, CCW (empty for smooth curves)
  std::vector<BoundaryPiece> pieces;
  double lipschitz_k1 = 0.0;
  double truncation = 0.0;
  std::string label;

  Vec2 e_perp() const { return {e.y(), -e.x()}; }

  double perimeter() const {
    return std::accumulate(pieces.begin(), pieces.end(), 0.0,
                           [](double acc, const BoundaryPiece& p) { return acc + p.length; });
  }

  bool bounded() const { return kind == DomainKind::ClosedCurve; }

  std::vector<Vec2> corners() const {
    std::vector<Vec2> out;
    for (const auto& p : pieces) {
      if (p.corner_start) out.push_back(p.pos(0.0));
    }
    if (kind == DomainKind::SpecialGraph) {
      for (const auto& p : pieces)
        if (p.corner_end) out.push_back(p.pos(1.0));
      std::sort(out.begin(), out.end(), [](const Vec2& a, const Vec2& b) { return a.x() < b.x(); });
      out.erase(std::unique(out.begin(), out.end(), [](const Vec2& a, const Vec2& b) { return (a - b).norm() < 1e-14; }),
                out.end());
    }
    return out;
  }

  /// Nearest point of the boundary, by brute-force search over a fine
  /// polyline followed by Newton polishing on the piece parameter.
  BoundaryFoot nearest(const Vec2& p) const {
    BoundaryFoot best;
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      const auto& pc = pieces[k];
      const auto& samples = polyline_[k];
      const int m = static_cast<int>(samples.size()) - 1;
      for (int i = 0; i < m; ++i) {
        const Vec2 a = samples[i], b = samples[i + 1];
        const Vec2 ab = b - a;
        const double len2 = ab.squaredNorm();
        double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const double d = (a + t * ab - p).norm();
        if (d < best.distance) {
          best.distance = d;
          best.piece = static_cast<int>(k);
          best.s = (i + t) / m;
          best.point = a + t * ab;
        }
      }
      (void)pc;
    }
    if (best.piece >= 0 && !pieces[best.piece].straight) {
      const auto& pc = pieces[best.piece];
      double s = best.s;
      for (int it = 0; it < 30; ++it) {
        const Vec2 r = pc.pos(s) - p;
        const Vec2 t1 = pc.d1(s), t2 = pc.d2(s);
        const double g = r.dot(t1);
        const double h = t1.squaredNorm() + r.dot(t2);
        if (h <= 0) break;
        const double sn = std::clamp(s - g / h, 0.0, 1.0);
        if (std::abs(sn - s) < 1e-15) {
          s = sn;
          break;
        }
        s = sn;
      }
      const Vec2 q = pc.pos(s);
      if ((q - p).norm() <= best.distance) {
        best.distance = (q - p).norm();
        best.point = q;
        best.s = s;
      }
    }
    return best;
  }

  double distance(const Vec2& p) const { return nearest(p).distance; }

  /// Membership in the open domain V (the region above the graph, or the
  /// interior of the closed curve).
  bool contains(const Vec2& p) const {
    if (kind == DomainKind::SpecialGraph) return p.dot(e) > phi->value(p.dot(e_perp()));
    const BoundaryFoot foot = nearest(p);
    if (foot.distance == 0.0) return false;
    const auto& pc = pieces[foot.piece];
    const bool at_end = foot.s <= 1e-12 || foot.s >= 1.0 - 1e-12;
    if (!at_end || (!pc.corner_start && !pc.corner_end)) {
      if (foot.distance < 16.0 * sag_) {
        const Vec2 t = pc.d1(foot.s).normalized();
        const Vec2 nu(t.y(), -t.x());
        return (p - foot.point).dot(nu) < 0.0;
      }
    }
    return winding(p) != 0;
  }

  /// Supremum over sampled balls centred on the boundary of sigma(B cap dV)/r.
  double ahlfors_david(int centres = 64, int radii = 12) const {
    const double diam = diameter_estimate();
    double best = 0.0;
    std::vector<Vec2> pts;
    std::vector<double> wts;
    fine_quadrature(pts, wts);
    for (int c = 0; c < centres; ++c) {
      const Vec2 x0 = point_at_fraction((c + 0.5) / centres);
      for (int k = 0; k < radii; ++k) {
        const double r = diam * std::pow(0.5, k);
        double mass = 0.0;
        for (std::size_t j = 0; j < pts.size(); ++j)
          if ((pts[j] - x0).norm() < r) mass += wts[j];
        best = std::max(best, mass / r);
      }
    }
    return best;
  }

  Vec2 point_at_fraction(double frac) const {
    double target = std::clamp(frac, 0.0, 1.0) * perimeter();
    for (const auto& pc : pieces) {
      if (target <= pc.length) return pc.pos(target / pc.length);
      target -= pc.length;
    }
    return pieces.back().pos(1.0);
  }

  double diameter_estimate() const {
    double d = 0.0;
    for (const auto& poly : polyline_)
      for (const auto& a : poly)
        for (const auto& other : polyline_)
          for (std::size_t j = 0; j < other.size(); j += 7) d = std::max(d, (a - other[j]).norm());
    return d;
  }

  /// Called once after the pieces are set: measures lengths and builds the
  /// search polyline.
  void finalize() {
    const auto& gl = quad::gauss_legendre(16);
    polyline_.clear();
    sag_ = 0.0;
    for (auto& pc : pieces) {
      const int sub = pc.straight ? 1 : 64;
      double len = 0.0;
      for (int k = 0; k < sub; ++k) {
        const double a = static_cast<double>(k) / sub, b = static_cast<double>(k + 1) / sub;
        for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
          const double s = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[q];
          len += 0.5 * (b - a) * gl.weights[q] * pc.d1(s).norm();
        }
      }
      pc.length = len;
      const int m = pc.straight ? 1 : 2048;
      std::vector<Vec2> poly(m + 1);
      for (int i = 0; i <= m; ++i) poly[i] = pc.pos(static_cast<double>(i) / m);
      if (!pc.straight) {
        double max_curv = 0.0;
        for (int i = 0; i <= 64; ++i) {
          const double s = i / 64.0;
          const Vec2 t1 = pc.d1(s), t2 = pc.d2(s);
          const double n1 = t1.norm();
          max_curv = std::max(max_curv, std::abs(t1.x() * t2.y() - t1.y() * t2.x()) / (n1 * n1 * n1));
        }
        const double h = pc.length / m;
        sag_ = std::max(sag_, 0.125 * max_curv * h * h);
      }
      polyline_.push_back(std::move(poly));
    }
  }

  void fine_quadrature(std::vector<Vec2>& pts, std::vector<double>& wts, int per_piece = 512) const {
    const auto& gl = quad::gauss_legendre(4);
    for (const auto& pc : pieces) {
      const int sub = per_piece;
      for (int k = 0; k < sub; ++k) {
        const double a = static_cast<double>(k) / sub, b = static_cast<double>(k + 1) / sub;
        for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
          const double s = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[q];
          pts.push_back(pc.pos(s));
          wts.push_back(0.5 * (b - a) * gl.weights[q] * pc.d1(s).norm());
        }
      }
    }
  }

  const std::vector<std::vector<Vec2>>& polyline() const { return polyline_; }

 private:
  int winding(const Vec2& p) const {
    int wn = 0;
    for (const auto& poly : polyline_) {
      for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[i + 1];
        const double cross = (b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y());
        if (a.y() <= p.y()) {
          if (b.y() > p.y() && cross > 0) ++wn;
        } else if (b.y() <= p.y() && cross < 0) {
          --wn;
        }
      }
    }
    return wn;
  }

  std::vector<std::vector<Vec2>> polyline_;
  double sag_ = 0.0;
};

using GeometryPtr = std::shared_ptr<const DomainGeometry>;

namespace detail {

inline bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const double v = (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
    return (v > 0) - (v < 0);
  };
  auto on_segment = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return std::min(p.x(), r.x()) <= q.x() && q.x() <= std::max(p.x(), r.x()) && std::min(p.y(), r.y()) <= q.y() &&
           q.y() <= std::max(p.y(), r.y());
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(a, c, b)) return true;
  if (o2 == 0 && on_segment(a, d, b)) return true;
  if (o3 == 0 && on_segment(c, a, d)) return true;
  if (o4 == 0 && on_segment(c, b, d)) return true;
  return false;
}

inline BoundaryPiece segment_piece(const Vec2& a, const Vec2& b) {
  BoundaryPiece p;
  p.pos = [a, b](double s) -> Vec2 { return a + s * (b - a); };
  p.d1 = [a, b](double) -> Vec2 { return b - a; };
  p.d2 = [](double) -> Vec2 { return Vec2::Zero(); };
  p.straight = true;
  return p;
}

}  // namespace detail

/// Special Lipschitz domain {X : phi(X.e_perp) < X.e}, truncated to the
/// parameter window [-truncation, truncation] for computation.
inline GeometryPtr build_special_domain(GraphFunction phi, const Vec2& e, double truncation) {
  if (!(truncation > 0.0) || !std::isfinite(truncation)) throw GeometryError("truncation must be positive");
  if (std::abs(e.norm() - 1.0) > 1e-12) throw GeometryError("graph direction e must be a unit vector");
  auto g = std::make_shared<DomainGeometry>();
  g->kind = DomainKind::SpecialGraph;
  g->e = e;
  g->truncation = truncation;

  // Lipschitz constant: max slope between adjacent samples (or over a dense
  // grid for closed-form graphs).
  double k1 = 0.0;
  if (!phi.sample_x.empty()) {
    for (std::size_t i = 1; i < phi.sample_x.size(); ++i) {
      const double slope = (phi.sample_y[i] - phi.sample_y[i - 1]) / (phi.sample_x[i] - phi.sample_x[i - 1]);
      k1 = std::max(k1, std::abs(slope));
    }
  } else {
    const int m = 4096;
    double prev = phi.value(-truncation);
    if (!std::isfinite(prev)) throw GeometryError("non-finite graph sample");
    for (int i = 1; i <= m; ++i) {
      const double x0 = -truncation + 2.0 * truncation * (i - 1) / m;
      const double x1 = -truncation + 2.0 * truncation * i / m;
      const double y1 = phi.value(x1);
      if (!std::isfinite(y1)) throw GeometryError("non-finite graph sample");
      k1 = std::max(k1, std::abs(y1 - prev) / (x1 - x0));
      prev = y1;
    }
  }
  g->lipschitz_k1 = k1;

  std::vector<double> breaks{-truncation};
  for (double k : phi.kinks)
    if (k > -truncation && k < truncation) breaks.push_back(k);
  breaks.push_back(truncation);
  const Vec2 ep = g->e_perp();
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double x0 = breaks[i], x1 = breaks[i + 1];
    BoundaryPiece p;
    const auto f = phi;
    p.pos = [f, e, ep, x0, x1](double s) -> Vec2 {
      const double x = x0 + s * (x1 - x0);
      return x * ep + f.value(x) * e;
    };
    // slopes are evaluated just inside the piece so kinks resolve one-sidedly
    p.d1 = [f, e, ep, x0, x1](double s) -> Vec2 {
      const double x = std::clamp(x0 + s * (x1 - x0), x0 + 1e-13 * (x1 - x0), x1 - 1e-13 * (x1 - x0));
      return (x1 - x0) * (ep + f.slope(x) * e);
    };
    p.d2 = [f, e, x0, x1](double s) -> Vec2 {
      const double x = x0 + s * (x1 - x0);
      return (x1 - x0) * (x1 - x0) * f.second(x) * e;
    };
    p.straight = phi.sample_x.size() > 0;
    p.corner_start = i > 0;
    p.corner_end = i + 2 < breaks.size();
    g->pieces.push_back(std::move(p));
  }
  // interior angles at the kinks
  for (std::size_t i = 0; i + 1 < g->pieces.size(); ++i) {
    const Vec2 t0 = g->pieces[i].d1(1.0).normalized();
    const Vec2 t1 = g->pieces[i + 1].d1(0.0).normalized();
    const double turn = std::atan2(t0.x() * t1.y() - t0.y() * t1.x(), t0.dot(t1));
    g->pieces[i].interior_angle_end = pi - turn;
    g->pieces[i + 1].interior_angle_start = pi - turn;
  }
  g->phi = std::move(phi);
  g->finalize();
  g->label = "special";
  return g;
}

/// Bounded domain with a simple polygonal boundary. Orientation is made
/// counter-clockwise.
inline GeometryPtr build_closed_curve(std::vector<Vec2> vertices) {
  if (vertices.size() < 3) throw GeometryError("closed curve needs at least 3 vertices");
  for (const auto& v : vertices)
    if (!std::isfinite(v.x()) || !std::isfinite(v.y())) throw GeometryError("non-finite vertex");
  const std::size_t n = vertices.size();
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = vertices[i];
    const Vec2& b = vertices[(i + 1) % n];
    area2 += a.x() * b.y() - a.y() * b.x();
  }
  if (std::abs(area2) < 1e-14) throw GeometryError("degenerate polygon (zero area)");
  if (area2 < 0) std::reverse(vertices.begin(), vertices.end());
  for (std::size_t i = 0; i < n; ++i) {
    if ((vertices[(i + 1) % n] - vertices[i]).norm() == 0.0) throw GeometryError("repeated vertex");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (detail::segments_cross(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]))
        throw GeometryError("polygon self-intersection between edges " + std::to_string(i) + " and " +
                            std::to_string(j));
    }
  }
  auto g = std::make_shared<DomainGeometry>();
  g->kind = DomainKind::ClosedCurve;
  g->vertices = vertices;
  double k1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = detail::segment_piece(vertices[i], vertices[(i + 1) % n]);
    g->pieces.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& cur = g->pieces[i];
    auto& nxt = g->pieces[(i + 1) % n];
    const Vec2 t0 = cur.d1(1.0).normalized();
    const Vec2 t1 = nxt.d1(0.0).normalized();
    const double turn = std::atan2(t0.x() * t1.y() - t0.y() * t1.x(), t0.dot(t1));
    const bool corner = std::abs(turn) > 1e-9;
    cur.corner_end = corner;
    nxt.corner_start = corner;
    cur.interior_angle_end = pi - turn;
    nxt.interior_angle_start = pi - turn;
    if (corner) k1 = std::max(k1, std::tan(std::min(std::abs(turn), 0.999 * pi) / 2.0));
  }
  g->lipschitz_k1 = k1;
  g->finalize();
  g->label = "polygon";
  return g;
}

/// Smooth closed curve given by a periodic parametrisation on [0, 1]
/// (counter-clockwise).
inline GeometryPtr build_smooth_closed(std::function<Vec2(double)> pos, std::function<Vec2(double)> d1,
                                       std::function<Vec2(double)> d2, std::string label = "smooth") {
  auto g = std::make_shared<DomainGeometry>();
  g->kind = DomainKind::ClosedCurve;
  BoundaryPiece p;
  p.pos = std::move(pos);
  p.d1 = std::move(d1);
  p.d2 = std::move(d2);
  g->pieces.push_back(std::move(p));
  g->finalize();
  g->label = std::move(label);
  return g;
}

inline GeometryPtr build_circle(const Vec2& centre, double radius) {
  if (!(radius > 0)) throw GeometryError("circle radius must be positive");
  const double w = 2.0 * pi;
  return build_smooth_closed(
      [=](double s) -> Vec2 { return centre + radius * Vec2(std::cos(w * s), std::sin(w * s)); },
      [=](double s) -> Vec2 { return radius * w * Vec2(-std::sin(w * s), std::cos(w * s)); },
      [=](double s) -> Vec2 { return -radius * w * w * Vec2(std::cos(w * s), std::sin(w * s)); }, "circle");
}

inline GeometryPtr build_ellipse(const Vec2& centre, double a, double b) {
  const double w = 2.0 * pi;
  return build_smooth_closed(
      [=](double s) -> Vec2 { return centre + Vec2(a * std::cos(w * s), b * std::sin(w * s)); },
      [=](double s) -> Vec2 { return w * Vec2(-a * std::sin(w * s), b * std::cos(w * s)); },
      [=](double s) -> Vec2 { return -w * w * Vec2(a * std::cos(w * s), b * std::sin(w * s)); }, "ellipse");
}

// ---------------------------------------------------------------------------
// Quadrature mesh

struct Panel {
  int piece = 0;
  double s0 = 0.0, s1 = 1.0;  // parameter interval on the piece
  int first_node = 0;
  double length = 0.0;
  bool corner_start = false;  // the panel touches a corner at s0
  bool corner_end = false;
  bool reentrant = false;     // touches a corner with interior angle > pi
};

/// Boundary point with its frame, as produced by panel sampling.
struct BoundaryPoint {
  Vec2 pos;
  Vec2 normal;
  Vec2 tangent;
  double jac = 0.0;  // |dX/du| for the panel-local parameter u in [-1, 1]
};

class QuadratureMesh {
 public:
  std::vector<Vec2> nodes;
  std::vector<double> weights;
  std::vector<Vec2> normals;
  std::vector<Vec2> tangents;
  std::vector<double> curvature;
  std::vector<int> panel_index;
  std::vector<Panel> panels;
  int order = 8;
  double grading_exponent = 1.0;
  GeometryPtr geometry;

  std::size_t size() const { return nodes.size(); }

  double total_length() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

  double panel_length(std::size_t node) const { return panels[panel_index[node]].length; }

  /// Local parameter u in [-1, 1] of a node inside its panel.
  double local_u(std::size_t node) const {
    const auto& gl = quad::gauss_legendre(order);
    return gl.nodes[node - panels[panel_index[node]].first_node];
  }

  BoundaryPoint sample(const Panel& p, double u) const {
    const auto& pc = geometry->pieces[p.piece];
    const double s = 0.5 * (p.s0 + p.s1) + 0.5 * (p.s1 - p.s0) * u;
    const Vec2 d = pc.d1(s);
    const double speed = d.norm();
    BoundaryPoint b;
    b.pos = pc.pos(s);
    b.tangent = d / speed;
    b.normal = Vec2(b.tangent.y(), -b.tangent.x());
    b.jac = 0.5 * (p.s1 - p.s0) * speed;
    return b;
  }

  /// Distance from a node to the nearest corner along the boundary chain
  /// (infinity when the boundary has none).
  double corner_distance(std::size_t node) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : corners_) best = std::min(best, (nodes[node] - c).norm());
    return best;
  }

  void set_corners(std::vector<Vec2> c) { corners_ = std::move(c); }

  /// Interior approach direction at a node: -nu on closed curves, +e on
  /// special graphs (which lies inside every cone with aperture above k1).
  Vec2 inward(std::size_t node) const {
    if (geometry->kind == DomainKind::SpecialGraph) return geometry->e;
    return -normals[node];
  }

  /// Weighted discrete L^p norm on the boundary.
  double norm(const CVector& f, double p = 2.0) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < size(); ++j) acc += weights[j] * std::pow(std::abs(f[j]), p);
    return std::pow(acc, 1.0 / p);
  }

  /// Bilinear pairing sum_j w_j g_j f_j.
  cplx pair(const CVector& g, const CVector& f) const {
    cplx acc = 0.0;
    for (std::size_t j = 0; j < size(); ++j) acc += weights[j] * g[j] * f[j];
    return acc;
  }

  cplx integral(const CVector& f) const { return pair(CVector::Ones(static_cast<Eigen::Index>(size())), f); }

  /// Tangential derivative d/ds along arclength, by differentiating the panel
  /// interpolants.
  CVector tangential_derivative(const CVector& f) const {
    const auto& gl = quad::gauss_legendre(order);
    const Eigen::MatrixXd dm = quad::differentiation_matrix(gl);
    CVector out(static_cast<Eigen::Index>(size()));
    for (const auto& p : panels) {
      for (int i = 0; i < order; ++i) {
        cplx acc = 0.0;
        for (int j = 0; j < order; ++j) acc += dm(i, j) * f[p.first_node + j];
        const auto b = sample(p, gl.nodes[i]);
        out[p.first_node + i] = acc / b.jac;
      }
    }
    return out;
  }

  /// Cumulative arclength integral of f from the first node's panel start.
  CVector cumulative_integral(const CVector& f) const {
    const auto& gl = quad::gauss_legendre(order);
    CVector out(static_cast<Eigen::Index>(size()));
    cplx running = 0.0;
    std::vector<double> basis(order);
    const auto& sub = quad::gauss_legendre(order);
    for (const auto& p : panels) {
      for (int i = 0; i < order; ++i) {
        // integral over [-1, u_i] of the panel interpolant times the jacobian
        const double ui = gl.nodes[i];
        cplx acc = 0.0;
        for (int q = 0; q < order; ++q) {
          const double u = -1.0 + 0.5 * (ui + 1.0) * (sub.nodes[q] + 1.0);
          quad::lagrange_basis(gl, u, basis.data());
          cplx fu = 0.0;
          for (int j = 0; j < order; ++j) fu += basis[j] * f[p.first_node + j];
          acc += 0.5 * (ui + 1.0) * sub.weights[q] * fu * sample(p, u).jac;
        }
        out[p.first_node + i] = running + acc;
      }
      cplx whole = 0.0;
      for (int j = 0; j < order; ++j) whole += weights[p.first_node + j] * f[p.first_node + j];
      running += whole;
    }
    return out;
  }

 private:
  std::vector<Vec2> corners_;
};

using MeshPtr = std::shared_ptr<const QuadratureMesh>;

namespace detail {

inline double grade(double u, double q, bool start, bool end) {
  if (q == 1.0 || (!start && !end)) return u;
  if (start && end) {
    const double a = std::pow(u, q), b = std::pow(1.0 - u, q);
    return a / (a + b);
  }
  if (start) return std::pow(u, q);
  return 1.0 - std::pow(1.0 - u, q);
}

}  // namespace detail

/// Composite Gauss-Legendre mesh with panels graded toward corners.
inline MeshPtr make_mesh(const GeometryPtr& geom, int n_panels, double grading_exponent = 3.0, int order = 8) {
  if (n_panels < 8) throw GeometryError("a mesh needs at least 8 panels");
  if (!(grading_exponent >= 1.0)) throw GeometryError("grading exponent must be >= 1");
  if (order < 2) throw GeometryError("panel order must be at least 2");
  const auto& pieces = geom->pieces;
  const int np = static_cast<int>(pieces.size());
  if (n_panels < np) throw GeometryError("fewer panels than boundary pieces");

  // largest-remainder split of panels proportional to piece length
  const double total = geom->perimeter();
  std::vector<int> count(np, 1);
  int assigned = np;
  std::vector<std::pair<double, int>> rem;
  for (int k = 0; k < np; ++k) {
    const double ideal = n_panels * pieces[k].length / total;
    const int extra = std::max(0, static_cast<int>(std::floor(ideal)) - 1);
    count[k] += extra;
    assigned += extra;
    rem.emplace_back(ideal - std::floor(ideal), k);
  }
  std::sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  for (std::size_t i = 0; assigned < n_panels; i = (i + 1) % rem.size()) {
    ++count[rem[i].second];
    ++assigned;
  }

  auto mesh = std::make_shared<QuadratureMesh>();
  mesh->geometry = geom;
  mesh->order = order;
  mesh->grading_exponent = grading_exponent;
  const auto& gl = quad::gauss_legendre(order);
  for (int k = 0; k < np; ++k) {
    const auto& pc = pieces[k];
    const int m = count[k];
    for (int i = 0; i < m; ++i) {
      Panel p;
      p.piece = k;
      p.s0 = detail::grade(static_cast<double>(i) / m, grading_exponent, pc.corner_start, pc.corner_end);
      p.s1 = detail::grade(static_cast<double>(i + 1) / m, grading_exponent, pc.corner_start, pc.corner_end);
      p.corner_start = (i == 0) && pc.corner_start;
      p.corner_end = (i == m - 1) && pc.corner_end;
      p.reentrant = (p.corner_start && pc.interior_angle_start > pi + 1e-9) ||
                    (p.corner_end && pc.interior_angle_end > pi + 1e-9);
      p.first_node = static_cast<int>(mesh->nodes.size());
      double len = 0.0;
      for (int q = 0; q < order; ++q) {
        const auto b = mesh->sample(p, gl.nodes[q]);
        const double w = gl.weights[q] * b.jac;
        if (!(w > 0.0)) throw GeometryError("degenerate panel (zero length) on piece " + std::to_string(k));
        mesh->nodes.push_back(b.pos);
        mesh->normals.push_back(b.normal);
        mesh->tangents.push_back(b.tangent);
        mesh->weights.push_back(w);
        mesh->panel_index.push_back(static_cast<int>(mesh->panels.size()));
        const double s = 0.5 * (p.s0 + p.s1) + 0.5 * (p.s1 - p.s0) * gl.nodes[q];
        const Vec2 t1 = pc.d1(s), t2 = pc.d2(s);
        const double sp = t1.norm();
        mesh->curvature.push_back((t1.x() * t2.y() - t1.y() * t2.x()) / (sp * sp * sp));
        len += w;
      }
      p.length = len;
      mesh->panels.push_back(p);
    }
  }
  mesh->set_corners(geom->corners());
  return mesh;
}

// ---------------------------------------------------------------------------
// Nontangential cones

struct ConeSampler {
  double aperture = 1.0;
  double height_cap = 0.5;
  int levels = 6;
  int samples_per_level = 5;
  double h_min = -1.0;  // negative: half the local panel length

  void validate() const {
    if (!(aperture > 0)) throw GeometryError("cone aperture must be positive");
    if (!(height_cap > 0)) throw GeometryError("cone height cap must be positive");
    if (levels < 4) throw GeometryError("cone sampler needs at least 4 levels");
    if (samples_per_level < 3) throw GeometryError("cone sampler needs at least 3 samples per level");
  }
};

struct ConePoint {
  Vec2 pos;
  int level = 0;
  double dist = 0.0;
};

/// Interior points of the truncated cone gamma_a(X) at a mesh node. Every
/// returned point is checked against |X-Y| < (1+a) dist(Y, dV).
inline std::vector<ConePoint> cone_points(const QuadratureMesh& mesh, std::size_t node, const ConeSampler& sampler) {
  sampler.validate();
  const auto& geom = *mesh.geometry;
  const double floor = sampler.h_min > 0 ? sampler.h_min : 0.5 * mesh.panel_length(node);
  if (sampler.height_cap <= floor)
    throw GeometryError("cone height cap " + std::to_string(sampler.height_cap) + " is below the resolution floor");
  const Vec2 x = mesh.nodes[node];
  const Vec2 axis = -mesh.normals[node];
  const Vec2 side = rot90(axis);
  const double half_angle = 0.8 * std::acos(1.0 / (1.0 + sampler.aperture));
  std::vector<ConePoint> out;
  const double ratio = std::pow(floor / sampler.height_cap, 1.0 / (sampler.levels - 1));
  for (int k = 0; k < sampler.levels; ++k) {
    const double d = sampler.height_cap * std::pow(ratio, k);
    for (int j = 0; j < sampler.samples_per_level; ++j) {
      const double th = -half_angle + 2.0 * half_angle * j / (sampler.samples_per_level - 1);
      const double rho = d / std::cos(th);
      const Vec2 y = x + rho * (std::cos(th) * axis + std::sin(th) * side);
      if (!geom.contains(y)) continue;
      const double dy = geom.distance(y);
      if (dy > sampler.height_cap * (1.0 + 1e-12)) continue;
      if (!((x - y).norm() < (1.0 + sampler.aperture) * dy)) continue;
      out.push_back({y, k, dy});
    }
  }
  if (out.empty())
    throw GeometryError("empty nontangential cone at node " + std::to_string(node) + " (aperture too small)");
  return out;
}

}  // namespace layerpot

#endif  // LAYERPOT_GEOMETRY_HPP
