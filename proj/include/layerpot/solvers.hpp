#ifndef LAYERPOT_SOLVERS_HPP
#define LAYERPOT_SOLVERS_HPP

#include "layerpot/potentials.hpp"

#include <map>
#include <mutex>
#include <optional>

namespace layerpot {

enum class Problem { Dirichlet, Neumann, Regularity };

inline const char* problem_name(Problem p) {
  switch (p) {
    case Problem::Dirichlet: return "dirichlet";
    case Problem::Neumann: return "neumann";
    case Problem::Regularity: return "regularity";
  }
  return "?";
}

struct SolveStats {
  double residual = 0.0;        // linear-system residual
  double trace_residual = 0.0;  // boundary condition mismatch, weighted L^p relative
  double condition = 1.0;
  int iterations = 0;
};

struct Solution {
  Problem problem = Problem::Dirichlet;
  double p = 2.0;
  BoundaryDensity density;  // layer density
  InteriorField field;
  SolveStats stats;
  CVector trace;     // u on the boundary
  CVector conormal;  // nu . A grad u on the boundary (interior side)
  cplx constant{0.0, 0.0};
  EvaluatorPtr evaluator;
  MeshPtr mesh;
};

/// Layer-potential solver for one (field, mesh) pair. Operators are
/// assembled on first use and kept.
class BoundarySolver {
 public:
  BoundarySolver(EvaluatorPtr ev, MeshPtr mesh, LinearSolveOptions lin = {}, TraceOptions trace = {})
      : ev_(std::move(ev)), evt_(ev_->transposed()), mesh_(std::move(mesh)), lin_(lin), trace_(trace) {}

  const GreenEvaluator& evaluator() const { return *ev_; }
  const EvaluatorPtr& evaluator_ptr() const { return ev_; }
  const MeshPtr& mesh() const { return mesh_; }
  const LinearSolveOptions& linear_options() const { return lin_; }

  const BoundaryOperator& K_plus() { return get("Kp", [&] { return assemble_K(*ev_, mesh_, Side::Interior, trace_); }); }
  const BoundaryOperator& K_minus() {
    return get("Km", [&] { return assemble_K(*ev_, mesh_, Side::Exterior, trace_); });
  }
  /// Neumann operator nu . A grad S h traced from inside (K^t_- of A^T).
  const BoundaryOperator& neumann_operator() {
    return get("KtmT", [&] { return assemble_Kt(*evt_, mesh_, false, trace_); });
  }
  /// Regularity operator tau . grad S h (L^t of A^T).
  const BoundaryOperator& regularity_operator() {
    return get("LtT", [&] { return assemble_Lt(*evt_, mesh_, Side::Interior, trace_); });
  }
  const BoundaryOperator& S_trace() {
    return get("S", [&] { return assemble_S_trace(*ev_, mesh_, Side::Interior, trace_); });
  }
  const BoundaryOperator& conormal_D() {
    return get("ND", [&] { return assemble_conormal_D(*ev_, mesh_, Side::Interior, trace_); });
  }

  Solution dirichlet(const BoundaryDensity& f, double p = 2.0) {
    f.validate(*mesh_);
    const auto& kp = K_plus();
    auto lr = solve_linear(kp.matrix, f.values, lin_);
    Solution s = base(Problem::Dirichlet, p, lr);
    s.density = BoundaryDensity::lp(lr.x, p);
    s.trace = kp.matrix * lr.x;
    s.conormal = conormal_D().matrix * lr.x;
    s.stats.trace_residual = relative(s.trace - f.values, f.values, p);
    s.field = double_field(s.density, "D(K+^-1 f)");
    return s;
  }

  Solution neumann(const BoundaryDensity& g, double p = 2.0) {
    g.validate(*mesh_);
    const bool closed = mesh_->geometry->bounded();
    if (closed) {
      const cplx mean = mesh_->integral(g.values);
      const double scale = std::max(1.0, mesh_->norm(g.values, 1.0));
      if (std::abs(mean) > 1e-8 * scale)
        throw DataError("Neumann data is incompatible: boundary integral " + std::to_string(std::abs(mean)));
    }
    const auto& op = neumann_operator();
    auto lr = closed ? solve_rank_deficient(op.matrix, g.values) : solve_linear(op.matrix, g.values, lin_);
    Solution s = base(Problem::Neumann, p, lr);
    s.density = BoundaryDensity::lp(lr.x, p);
    const CVector st = S_trace().matrix * lr.x;
    if (closed) s.constant = -mesh_->integral(st) / mesh_->total_length();
    s.trace = st.array() + s.constant;
    s.conormal = op.matrix * lr.x;
    s.stats.trace_residual = relative(s.conormal - g.values, g.values, p);
    s.field = single_field(s.density, s.constant, "S(Kt-^-1 g)");
    return s;
  }

  Solution regularity(const BoundaryDensity& f, double p = 2.0) {
    f.validate(*mesh_);
    if (!f.differentiable) throw DataError("regularity data must be differentiable along the boundary");
    const bool closed = mesh_->geometry->bounded();
    const CVector df = mesh_->tangential_derivative(f.values);
    const auto& op = regularity_operator();
    auto lr = closed ? solve_rank_deficient(op.matrix, df) : solve_linear(op.matrix, df, lin_);
    Solution s = base(Problem::Regularity, p, lr);
    s.density = BoundaryDensity::lp(lr.x, p);
    const CVector st = S_trace().matrix * lr.x;
    s.constant = f.values[0] - st[0];
    s.trace = st.array() + s.constant;
    s.conormal = neumann_operator().matrix * lr.x;
    s.stats.trace_residual = relative(s.trace - f.values, f.values, p);
    s.field = single_field(s.density, s.constant, "S(Lt^-1 d_tau f)");
    return s;
  }

  InteriorField double_field(const BoundaryDensity& h, std::string prov) const {
    auto ev = ev_;
    auto mesh = mesh_;
    return {[ev, mesh, h](const Vec2& x, bool grad) { return eval_double(*ev, *mesh, h, x, grad); }, std::move(prov)};
  }

  InteriorField single_field(const BoundaryDensity& h, cplx c, std::string prov) const {
    auto ev = ev_;
    auto mesh = mesh_;
    return {[ev, mesh, h, c](const Vec2& x, bool grad) {
              FieldSample s = eval_single(*ev, *mesh, h.values, x, grad);
              s.u += c;
              return s;
            },
            std::move(prov)};
  }

 private:
  template <class Build>
  const BoundaryOperator& get(const std::string& key, Build&& build) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = ops_.find(key);
    if (it == ops_.end()) it = ops_.emplace(key, build()).first;
    return it->second;
  }

  Solution base(Problem pr, double p, const LinearSolveResult& lr) const {
    Solution s;
    s.problem = pr;
    s.p = p;
    s.stats.residual = lr.residual;
    s.stats.condition = lr.condition;
    s.stats.iterations = lr.iterations;
    s.evaluator = ev_;
    s.mesh = mesh_;
    return s;
  }

  double relative(const CVector& diff, const CVector& ref, double p) const {
    const double r = mesh_->norm(ref, p);
    const double d = mesh_->norm(diff, p);
    return r > 0 ? d / r : d;
  }

  EvaluatorPtr ev_, evt_;
  MeshPtr mesh_;
  LinearSolveOptions lin_;
  TraceOptions trace_;
  std::map<std::string, BoundaryOperator> ops_;
  std::mutex mu_;
};

inline Solution solve_dirichlet(BoundarySolver& s, const BoundaryDensity& f, double p = 2.0) { return s.dirichlet(f, p); }
inline Solution solve_neumann(BoundarySolver& s, const BoundaryDensity& g, double p = 2.0) { return s.neumann(g, p); }
inline Solution solve_regularity(BoundarySolver& s, const BoundaryDensity& f, double p = 2.0) {
  return s.regularity(f, p);
}

// ---------------------------------------------------------------------------
// Green representation

/// D f(X) - S g(X) from a solution's own trace and conormal.
inline cplx green_representation(const Solution& s, const Vec2& x) {
  BoundaryDensity f = BoundaryDensity::lp(s.trace);
  const cplx d = eval_double(*s.evaluator, *s.mesh, f, x, false).u;
  const cplx sg = eval_single(*s.evaluator, *s.mesh, s.conormal, x, false).u;
  return d - sg;
}

// ---------------------------------------------------------------------------
// Conjugate solutions

/// Flux of A grad u through the circle |X - c| = r (outward normal).
inline cplx loop_flux(const InteriorField& u, const CoefficientField& a, const Vec2& c, double r, int n = 64) {
  cplx acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const double th = 2.0 * pi * k / n;
    const Vec2 nu(std::cos(th), std::sin(th));
    const Vec2 x = c + r * nu;
    const FieldSample s = u.evaluate(x, true);
    acc += (2.0 * pi * r / n) * cplx((nu.cast<cplx>().transpose() * (a(x.x()) * s.grad))(0));
  }
  return acc;
}

struct ConjugateField {
  InteriorField field;
  Vec2 anchor;
  double loop_residual = 0.0;
};

namespace detail {

inline bool segment_inside(const DomainGeometry& g, const Vec2& a, const Vec2& b, double margin) {
  const int n = std::max(8, static_cast<int>(std::ceil((b - a).norm() / std::max(margin, 1e-3))));
  for (int k = 0; k <= n; ++k) {
    const Vec2 p = a + (b - a) * (static_cast<double>(k) / n);
    if (!g.contains(p) || g.distance(p) < margin) return false;
  }
  return true;
}

}  // namespace detail

/// Conjugate u~ with grad u~ = R A grad u (R the rotation by +90 degrees), by
/// integrating along straight paths from an anchor (through one hub point
/// when the direct segment leaves the domain).
inline ConjugateField conjugate_solution(const Solution& sol, int gl_order = 16) {
  const auto& mesh = *sol.mesh;
  const auto& geom = *mesh.geometry;
  const FieldPtr field = sol.evaluator->field_ptr();
  // anchor and hubs: inward offsets of panel midpoints
  std::vector<Vec2> hubs;
  for (const auto& p : mesh.panels) {
    const BoundaryPoint b = mesh.sample(p, 0.0);
    const Vec2 in = geom.kind == DomainKind::SpecialGraph ? geom.e : Vec2(-b.normal);
    for (double f : {0.5, 2.0}) {
      const Vec2 h = b.pos + f * p.length * in;
      if (geom.contains(h) && geom.distance(h) > 0.25 * p.length) hubs.push_back(h);
    }
  }
  Vec2 anchor;
  if (geom.bounded()) {
    Vec2 c = Vec2::Zero();
    for (const auto& x : mesh.nodes) c += x;
    c /= static_cast<double>(mesh.size());
    if (geom.contains(c) && geom.distance(c) > 0.05 * geom.diameter_estimate()) {
      anchor = c;
    } else {
      double best = -1;
      for (const auto& h : hubs) {
        const double d = geom.distance(h);
        if (d > best) {
          best = d;
          anchor = h;
        }
      }
    }
  } else {
    anchor = mesh.nodes[mesh.size() / 2] + 0.5 * geom.e;
  }
  auto u = sol.field;
  const auto& gl = quad::gauss_legendre(gl_order);
  auto integrate_segment = [u, field, &gl](const Vec2& a, const Vec2& b, double margin) {
    const double len = (b - a).norm();
    const int panels = std::max(1, static_cast<int>(std::ceil(len / std::max(0.5 * margin, 1e-3))));
    cplx acc = 0.0;
    const Vec2 t = (b - a) / std::max(len, 1e-300);
    for (int k = 0; k < panels; ++k) {
      const double s0 = len * k / panels, s1 = len * (k + 1) / panels;
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double s = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * gl.nodes[q];
        const Vec2 x = a + s * t;
        const FieldSample fs = u.evaluate(x, true);
        const CVec2 g = rot90_matrix().cast<cplx>() * ((*field)(x.x()) * fs.grad);
        acc += 0.5 * (s1 - s0) * gl.weights[q] * cplx((t.cast<cplx>().transpose() * g)(0));
      }
    }
    return acc;
  };
  auto meshp = sol.mesh;
  auto geomp = mesh.geometry;
  ConjugateField out;
  out.anchor = anchor;
  out.field.provenance = "conjugate of " + u.provenance;
  out.field.evaluate = [=](const Vec2& y, bool grad) {
    FieldSample s;
    const double margin = std::min(geomp->distance(y), geomp->distance(anchor));
    std::optional<cplx> val;
    if (detail::segment_inside(*geomp, anchor, y, 0.5 * margin)) {
      val = integrate_segment(anchor, y, margin);
    } else {
      for (const auto& h : hubs) {
        const double m2 = std::min(margin, geomp->distance(h));
        if (detail::segment_inside(*geomp, anchor, h, 0.5 * m2) && detail::segment_inside(*geomp, h, y, 0.5 * m2)) {
          val = integrate_segment(anchor, h, m2) + integrate_segment(h, y, m2);
          break;
        }
      }
    }
    if (!val) throw GeometryError("no interior path from the conjugate anchor");
    s.u = *val;
    if (grad) {
      const FieldSample fs = u.evaluate(y, true);
      s.grad = rot90_matrix().cast<cplx>() * ((*field)(y.x()) * fs.grad);
      s.has_grad = true;
    }
    return s;
  };
  // path independence on a small loop around the anchor
  const double r = 0.5 * geom.distance(anchor);
  const cplx flux = loop_flux(u, *field, anchor, r);
  const double scale = std::abs(u.evaluate(anchor, true).grad.norm()) * 2.0 * pi * r + 1e-300;
  out.loop_residual = std::abs(flux) / std::max(scale, 1.0);
  if (out.loop_residual > 1e-6)
    throw ConvergenceError("conjugate path integral is not path-independent (loop flux " + std::to_string(std::abs(flux)) +
                           ")");
  return out;
}

// ---------------------------------------------------------------------------
// Domain Green function

/// G_X = Gamma^{A^T}_X - Phi_X, Phi_X solving the A^T Dirichlet problem with
/// the data Gamma^{A^T}_X, so that u(X) = int f nu . A^T grad G_X dsigma for
/// every solution of div A grad u = 0 (this is nu . A grad G_X for symmetric A).
struct DomainGreen {
  Vec2 pole;
  Solution corrector;
  CVector weights;  // representation weights per node
  EvaluatorPtr transposed;

  cplx operator()(const Vec2& y) const {
    return transposed->eval(pole, y, kValue).value - corrector.field.evaluate(y, false).u;
  }

  cplx represent(const CVector& f) const { return corrector.mesh->pair(weights, f); }

  double l1_norm() const {
    double acc = 0.0;
    for (std::size_t j = 0; j < corrector.mesh->size(); ++j)
      acc += corrector.mesh->weights[j] * std::abs(weights[static_cast<Eigen::Index>(j)]);
    return acc;
  }
};

/// `transposed_solver` must be built on the transposed evaluator of the
/// field whose Green function is wanted.
inline DomainGreen domain_green(BoundarySolver& transposed_solver, const Vec2& x) {
  const auto& mesh = *transposed_solver.mesh();
  if (!mesh.geometry->bounded()) throw GeometryError("domain Green function needs a bounded domain");
  if (!mesh.geometry->contains(x)) throw GeometryError("pole is not inside the domain");
  detail::check_resolution(mesh, x);
  const GreenEvaluator& evt = transposed_solver.evaluator();
  DomainGreen g;
  g.pole = x;
  g.transposed = transposed_solver.evaluator_ptr();
  CVector data(static_cast<Eigen::Index>(mesh.size()));
  CVector direct(static_cast<Eigen::Index>(mesh.size()));
  for (std::size_t j = 0; j < mesh.size(); ++j) {
    const GreenValue v = evt.eval(x, mesh.nodes[j], kValue | kGradY);
    data[j] = v.value;
    // nu . B grad with B = A^T the transposed solver's field
    const CVec2 p = evt.A(mesh.nodes[j]).transpose() * mesh.normals[j].cast<cplx>();
    direct[j] = (p.transpose() * v.grad_y)(0);
  }
  g.corrector = transposed_solver.dirichlet(BoundaryDensity::lp(data));
  g.weights = direct - g.corrector.conormal;
  return g;
}

}  // namespace layerpot

#endif  // LAYERPOT_SOLVERS_HPP
