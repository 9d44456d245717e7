#include "layerpot/solvers.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace layerpot;

namespace {

Mat2c mat(cplx a, cplx b, cplx c, cplx d) {
  Mat2c m;
  m << a, b, c, d;
  return m;
}

CVector nodal(const QuadratureMesh& m, const std::function<cplx(const Vec2&)>& f) {
  CVector v(static_cast<Eigen::Index>(m.size()));
  for (std::size_t j = 0; j < m.size(); ++j) v[j] = f(m.nodes[j]);
  return v;
}

EvaluatorPtr identity_ev() { return std::make_shared<ConstantGreen>(Mat2c::Identity()); }

MeshPtr disk_mesh(int panels = 32) { return make_mesh(build_circle(Vec2::Zero(), 1.0), panels); }

MeshPtr square_mesh(int panels = 32) {
  return make_mesh(build_closed_curve({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}), panels);
}

// complex perturbation of the identity, ||Im A|| = 0.05
Mat2c complex_a() { return Mat2c::Identity() + 0.05 * I_unit * mat(0, 1, 1, 0); }

double angle(const Vec2& p) { return std::atan2(p.y(), p.x()); }

}  // namespace

// ---------------------------------------------------------------------------

TEST(LinearSolve, IdentityAndScaledIdentity) {
  const CMatrix eye = CMatrix::Identity(10, 10);
  CVector b = CVector::LinSpaced(10, 1.0, 10.0);
  EXPECT_LT((solve_linear(eye, b).x - b).norm(), 1e-15);
  EXPECT_LT((solve_linear(0.5 * eye, b).x - 2.0 * b).norm(), 1e-13);
}

TEST(LinearSolve, RandomSystemResidual) {
  std::mt19937 rng(5);
  std::normal_distribution<double> g;
  CMatrix a(64, 64);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = cplx(g(rng), g(rng));
  a += 16.0 * CMatrix::Identity(64, 64);
  CVector b(64);
  for (auto& v : b) v = cplx(g(rng), g(rng));
  const auto lu = solve_linear(a, b);
  EXPECT_LT((a * lu.x - b).norm() / b.norm(), 1e-12);
  EXPECT_LT(lu.residual, 1e-12);
  EXPECT_GT(lu.condition, 1.0);
  LinearSolveOptions it;
  it.method = SolveMethod::Iterative;
  const auto gm = solve_linear(a, b, it);
  EXPECT_LT((gm.x - lu.x).norm() / lu.x.norm(), 1e-8);
  EXPECT_GT(gm.iterations, 0);
}

TEST(LinearSolve, SingularMatrixIsReported) {
  CMatrix a = CMatrix::Identity(4, 4);
  a(3, 3) = 0.0;
  EXPECT_THROW(solve_linear(a, CVector::Ones(4)), ConvergenceError);
}

TEST(LinearSolve, RankDeficientConsistentSystem) {
  // rank 3: the last row repeats the first
  CMatrix a = CMatrix::Identity(4, 4);
  a(3, 0) = 1.0;
  a(3, 3) = 0.0;
  CVector x0(4);
  x0 << 1.0, 2.0, 3.0, 0.0;
  const auto r = solve_rank_deficient(a, a * x0);
  EXPECT_LT((a * r.x - a * x0).norm(), 1e-12);
}

// ---------------------------------------------------------------------------

TEST(Dirichlet, DiskFirstHarmonic) {
  BoundarySolver s(identity_ev(), disk_mesh());
  const auto sol = s.dirichlet(BoundaryDensity::lp(nodal(*s.mesh(), [](const Vec2& p) { return std::cos(angle(p)); })));
  EXPECT_LT(std::abs(sol.field.evaluate({0.5, 0.0}, false).u - 0.5), 1e-5);
  for (const Vec2& x : {Vec2(-0.3, 0.6), Vec2(0.1, -0.8), Vec2(0.0, 0.0)})
    EXPECT_LT(std::abs(sol.field.evaluate(x, false).u - x.x()), 1e-5);
  EXPECT_LT(sol.stats.trace_residual, 1e-6);
  EXPECT_LT(sol.stats.residual, 1e-12);
  EXPECT_EQ(sol.problem, Problem::Dirichlet);
}

TEST(Dirichlet, ConstantDataGivesConstant) {
  BoundarySolver s(identity_ev(), disk_mesh());
  const auto sol = s.dirichlet(BoundaryDensity::lp(CVector::Ones(static_cast<Eigen::Index>(s.mesh()->size()))));
  for (const Vec2& x : {Vec2(0.2, 0.3), Vec2(-0.5, 0.1), Vec2(0.0, -0.7)}) {
    const auto v = sol.field.evaluate(x, true);
    EXPECT_LT(std::abs(v.u - 1.0), 1e-6);
    EXPECT_LT(v.grad.norm(), 1e-6);
  }
}

TEST(Dirichlet, ComplexSquareResiduals) {
  const auto field = CoefficientField::constant(complex_a());
  BoundarySolver s(make_evaluator(field), square_mesh());
  const auto sol = s.dirichlet(BoundaryDensity::lp(nodal(*s.mesh(), [](const Vec2& p) { return cplx(p.x()); })));
  EXPECT_LT(sol.stats.trace_residual, 1e-3);
  const auto wr = weak_residual(sol.field, field, *s.mesh()->geometry);
  EXPECT_EQ(wr.bumps, 4);
  EXPECT_LT(wr.max_relative, 1e-3);
  // x is itself a solution for a constant coefficient matrix
  for (const Vec2& x : {Vec2(0.3, 0.2), Vec2(-0.5, 0.4)}) EXPECT_LT(std::abs(sol.field.evaluate(x, false).u - x.x()), 1e-4);
}

TEST(Dirichlet, WrongSizeDataRejected) {
  BoundarySolver s(identity_ev(), disk_mesh());
  EXPECT_THROW(s.dirichlet(BoundaryDensity::lp(CVector::Ones(7))), DataError);
}

// ---------------------------------------------------------------------------

TEST(Neumann, DiskFirstHarmonic) {
  BoundarySolver s(identity_ev(), disk_mesh());
  const auto sol = s.neumann(BoundaryDensity::lp(nodal(*s.mesh(), [](const Vec2& p) { return std::cos(angle(p)); })));
  const auto v = sol.field.evaluate({0.3, 0.2}, true);
  EXPECT_LT((v.grad - CVec2(1.0, 0.0)).norm(), 1e-4);
  // mean of the trace fixed to zero
  EXPECT_LT(std::abs(s.mesh()->integral(sol.trace)), 1e-10);
  EXPECT_LT(sol.stats.trace_residual, 1e-6);
}

TEST(Neumann, ZeroDataGivesConstant) {
  BoundarySolver s(identity_ev(), disk_mesh());
  const auto sol = s.neumann(BoundaryDensity::lp(CVector::Zero(static_cast<Eigen::Index>(s.mesh()->size()))));
  for (const Vec2& x : {Vec2(0.2, 0.3), Vec2(-0.6, 0.1), Vec2(0.0, 0.0)}) EXPECT_LE(sol.field.evaluate(x, true).grad.norm(), 1e-8);
}

TEST(Neumann, IncompatibleDataRejected) {
  BoundarySolver s(identity_ev(), disk_mesh());
  EXPECT_THROW(s.neumann(BoundaryDensity::lp(CVector::Ones(static_cast<Eigen::Index>(s.mesh()->size())))), DataError);
}

TEST(Neumann, ComplexSquareConormal) {
  const auto field = CoefficientField::constant(complex_a());
  BoundarySolver s(make_evaluator(field), square_mesh());
  // nu . A grad x, compatible by construction
  const auto& m = *s.mesh();
  CVector g(static_cast<Eigen::Index>(m.size()));
  for (std::size_t j = 0; j < m.size(); ++j) g[j] = (m.normals[j].cast<cplx>().transpose() * (complex_a() * CVec2(1, 0)))(0);
  const auto sol = s.neumann(BoundaryDensity::lp(g));
  for (const Vec2& x : {Vec2(0.3, 0.2), Vec2(-0.4, -0.5)})
    EXPECT_LT((sol.field.evaluate(x, true).grad - CVec2(1, 0)).norm(), 1e-3);
  EXPECT_LT(sol.stats.trace_residual, 1e-3);
}

TEST(Neumann, AtomDataHasFiniteGradient) {
  BoundarySolver s(identity_ev(), disk_mesh(64));
  const auto atom = make_h1_atom(*s.mesh(), 1.0, 0.4);
  const auto sol = s.neumann(atom);
  for (const Vec2& x : {Vec2(0.0, 0.0), Vec2(0.5, 0.5), Vec2(-0.7, 0.2)}) {
    const auto v = sol.field.evaluate(x, true);
    EXPECT_TRUE(finite(v.u));
    EXPECT_TRUE(std::isfinite(v.grad.norm()));
  }
  EXPECT_LT(sol.stats.trace_residual, 1e-3);
}

// ---------------------------------------------------------------------------

TEST(Regularity, MatchesDirichletOnTheDisk) {
  BoundarySolver s(identity_ev(), disk_mesh());
  const auto f = BoundaryDensity::lp(nodal(*s.mesh(), [](const Vec2& p) { return std::cos(angle(p)); }));
  const auto reg = s.regularity(f);
  const auto dir = s.dirichlet(f);
  for (const Vec2& x : {Vec2(0.5, 0.0), Vec2(-0.2, 0.4), Vec2(0.1, -0.6), Vec2(0.0, 0.0)})
    EXPECT_LT(std::abs(reg.field.evaluate(x, false).u - dir.field.evaluate(x, false).u), 1e-4);
  EXPECT_LT(reg.stats.trace_residual, 1e-5);
}

TEST(Regularity, ConstantDataHasZeroGradient) {
  BoundarySolver s(identity_ev(), disk_mesh());
  const auto sol = s.regularity(BoundaryDensity::lp(CVector::Constant(static_cast<Eigen::Index>(s.mesh()->size()), 2.5)));
  for (const Vec2& x : {Vec2(0.2, 0.3), Vec2(-0.5, -0.1)}) {
    const auto v = sol.field.evaluate(x, true);
    EXPECT_LT(std::abs(v.u - 2.5), 1e-8);
    EXPECT_LT(v.grad.norm(), 1e-8);
  }
}

TEST(Regularity, NonDifferentiableDataRejected) {
  BoundarySolver s(identity_ev(), disk_mesh());
  auto f = BoundaryDensity::lp(CVector::Ones(static_cast<Eigen::Index>(s.mesh()->size())));
  f.differentiable = false;
  EXPECT_THROW(s.regularity(f), DataError);
}

// Wedge phi(x) = |x|/2 with a diagonal profile. The full-line density of
// generic data decays too slowly for the truncated window, so the data is the
// trace of a compactly supported zero-mean density.
TEST(Regularity, WedgeWithDiagonalProfile) {
  const auto geom = build_special_domain(GraphFunction::from_samples({-4, 0, 4}, {2, 0, 2}), Vec2(0, 1), 4.0);
  EXPECT_NEAR(geom->lipschitz_k1, 0.5, 1e-12);
  const auto mesh = make_mesh(geom, 16);
  const auto field = CoefficientField::profile(
      [](double x) -> Mat2c {
        Mat2c m = Mat2c::Zero();
        m(0, 0) = 1.0 + 0.5 * std::exp(-x * x);
        m(1, 1) = 1.0;
        return m;
      },
      -6, 6);
  const auto ev = make_evaluator(field);
  ASSERT_EQ(ev->route(), GreenRoute::FourierODE);
  BoundarySolver s(ev, mesh);
  const CVector g = nodal(*mesh, [](const Vec2& p) {
    const double x = p.x() / 3.0;
    return cplx(std::abs(x) < 1.0 ? std::pow(1.0 - x * x, 6) : 0.0);
  });
  const CVector h = mesh->tangential_derivative(g);
  const CVector f = s.S_trace().matrix * h;
  const auto sol = s.regularity(BoundaryDensity::lp(f));
  EXPECT_LT(sol.stats.trace_residual, 1e-3);
  EXPECT_LT((sol.density.values - h).norm() / h.norm(), 1e-3);
  const auto wr = weak_residual(sol.field, field, *geom, 2, 11, 8);
  EXPECT_EQ(wr.bumps, 2);
  EXPECT_LT(wr.max_relative, 1e-3);
}

// ---------------------------------------------------------------------------

TEST(GreenRepresentation, HoldsForEverySolverOutput) {
  const auto field = CoefficientField::constant(complex_a());
  BoundarySolver s(make_evaluator(field), square_mesh());
  const auto& m = *s.mesh();
  const CVector f = nodal(m, [](const Vec2& p) { return cplx(p.x() * p.x() - p.y() * p.y(), 0.3 * p.y()); });
  CVector g(static_cast<Eigen::Index>(m.size()));
  for (std::size_t j = 0; j < m.size(); ++j) g[j] = (m.normals[j].cast<cplx>().transpose() * (complex_a() * CVec2(1, 2)))(0);
  std::vector<Solution> sols{s.dirichlet(BoundaryDensity::lp(f)), s.neumann(BoundaryDensity::lp(g)),
                             s.regularity(BoundaryDensity::lp(f))};
  for (const auto& sol : sols) {
    double scale = 0.0;
    for (const auto& v : sol.trace) scale = std::max(scale, std::abs(v));
    for (const Vec2& x : {Vec2(0.1, 0.2), Vec2(-0.5, 0.4), Vec2(0.6, -0.6)})
      EXPECT_LT(std::abs(sol.field.evaluate(x, false).u - green_representation(sol, x)), 1e-3 * scale)
          << problem_name(sol.problem);
  }
}

// ---------------------------------------------------------------------------

TEST(DomainGreen, DiskCentreIsUniform) {
  BoundarySolver s(identity_ev(), disk_mesh());
  const auto g = domain_green(s, Vec2::Zero());
  for (const auto& w : g.weights) EXPECT_NEAR(w.real(), 1.0 / (2.0 * pi), 1e-4);
  EXPECT_NEAR(g.l1_norm(), 1.0, 1e-4);
  // G vanishes on the boundary and is the free-space kernel minus a constant
  EXPECT_LT(std::abs(g(Vec2(0.999, 0.0))), 1e-3);
}

TEST(DomainGreen, ReproducesSolutions) {
  const auto field = CoefficientField::constant(complex_a());
  const auto ev = make_evaluator(field);
  BoundarySolver st(ev->transposed(), square_mesh(48));
  const Vec2 x(0.3, -0.2);
  const auto g = domain_green(st, x);
  const auto& m = *st.mesh();
  EXPECT_LT(std::abs(g.represent(CVector::Ones(static_cast<Eigen::Index>(m.size()))) - 1.0), 1e-4);
  // u = x and u = y are A-harmonic for constant A
  EXPECT_LT(std::abs(g.represent(nodal(m, [](const Vec2& p) { return cplx(p.x()); })) - x.x()), 1e-4);
  EXPECT_LT(std::abs(g.represent(nodal(m, [](const Vec2& p) { return cplx(p.y()); })) - x.y()), 1e-4);
}

TEST(DomainGreen, PoleOutsideRejected) {
  BoundarySolver s(identity_ev(), disk_mesh());
  EXPECT_THROW(domain_green(s, Vec2(2, 0)), GeometryError);
}

// ---------------------------------------------------------------------------

TEST(Conjugate, OfTheFirstCoordinate) {
  BoundarySolver s(identity_ev(), disk_mesh());
  const auto sol = s.neumann(BoundaryDensity::lp(nodal(*s.mesh(), [](const Vec2& p) { return std::cos(angle(p)); })));
  const auto c = conjugate_solution(sol);
  EXPECT_LT(c.loop_residual, 1e-6);
  // grad u~ = R grad x = (0, 1)
  const Vec2 p(0.4, -0.3), q(-0.2, 0.5);
  EXPECT_LT(std::abs(c.field.evaluate(q, false).u - c.field.evaluate(p, false).u - (q.y() - p.y())), 1e-6);
  EXPECT_LT((c.field.evaluate(p, true).grad - CVec2(0, 1)).norm(), 1e-4);
}

// u = x + a22 x^2 - a11 y^2 solves the constant-coefficient equation, so
// nu . A grad u on the circle of radius rho is known in closed form.
TEST(Conjugate, TangentialDerivativeIsTheConormal) {
  const Mat2c a = complex_a();
  const auto field = CoefficientField::constant(a);
  BoundarySolver s(make_evaluator(field), disk_mesh());
  auto grad_u = [&a](const Vec2& p) { return CVec2(1.0 + 2.0 * a(1, 1) * p.x(), -2.0 * a(0, 0) * p.y()); };
  auto conormal = [&](const Vec2& p, const Vec2& nu) { return cplx((nu.cast<cplx>().transpose() * (a * grad_u(p)))(0)); };
  const auto& m = *s.mesh();
  CVector g(static_cast<Eigen::Index>(m.size()));
  for (std::size_t j = 0; j < m.size(); ++j) g[j] = conormal(m.nodes[j], m.normals[j]);
  const auto sol = s.neumann(BoundaryDensity::lp(g));
  const auto c = conjugate_solution(sol);
  EXPECT_LT(c.loop_residual, 1e-6);
  // u~ on the circle of radius rho, differentiated as a trigonometric interpolant
  const int n = 16;
  const double rho = 0.8;
  std::vector<cplx> vals(n);
  for (int k = 0; k < n; ++k) {
    const double t = 2.0 * pi * k / n;
    vals[k] = c.field.evaluate(rho * Vec2(std::cos(t), std::sin(t)), false).u;
  }
  double num = 0.0, den = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = 2.0 * pi * k / n;
    cplx d = 0.0;
    for (int q = -n / 2 + 1; q < n / 2; ++q) {
      cplx coef = 0.0;
      for (int l = 0; l < n; ++l) coef += vals[l] * std::polar(1.0, -q * 2.0 * pi * l / n);
      d += (I_unit * static_cast<double>(q)) * coef / static_cast<double>(n) * std::polar(1.0, q * t);
    }
    const Vec2 nu(std::cos(t), std::sin(t));
    const cplx expect = conormal(rho * nu, nu);
    num += std::norm(d / rho - expect);
    den += std::norm(expect);
  }
  EXPECT_LT(std::sqrt(num / den), 1e-3);
}

TEST(Conjugate, EnclosedSourceIsDetected) {
  const auto mesh = disk_mesh();
  const auto ev = identity_ev();
  Solution sol;
  sol.mesh = mesh;
  sol.evaluator = ev;
  sol.field.evaluate = [ev](const Vec2& x, bool grad) {
    const auto g = ev->eval(Vec2(0.1, 0.05), x, kValue | kGradY);
    FieldSample s;
    s.u = g.value;
    s.grad = g.grad_y;
    s.has_grad = grad;
    return s;
  };
  EXPECT_THROW(conjugate_solution(sol), ConvergenceError);
}
