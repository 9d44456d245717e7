#ifndef LAYERPOT_POTENTIALS_HPP
#define LAYERPOT_POTENTIALS_HPP

#include "layerpot/geometry.hpp"
#include "layerpot/greens.hpp"
#include "layerpot/linalg.hpp"
#include "layerpot/quadrature.hpp"

#include <functional>
#include <random>

namespace layerpot {

// ---------------------------------------------------------------------------
// Densities

enum class SpaceTag { Lp, H1Atom, BMO };

struct BoundaryDensity {
  CVector values;
  SpaceTag tag = SpaceTag::Lp;
  double p = 2.0;
  Vec2 center = Vec2::Zero();  // atoms only
  double radius = 0.0;
  bool differentiable = true;

  static BoundaryDensity lp(CVector v, double p = 2.0) {
    BoundaryDensity d;
    d.values = std::move(v);
    d.p = p;
    return d;
  }

  /// Throws DataError when a tagged atom violates its defining conditions.
  void validate(const QuadratureMesh& mesh) const {
    if (static_cast<std::size_t>(values.size()) != mesh.size())
      throw DataError("density has " + std::to_string(values.size()) + " values for a mesh of " +
                      std::to_string(mesh.size()) + " nodes");
    for (Eigen::Index j = 0; j < values.size(); ++j)
      if (!finite(values[j])) throw DataError("non-finite density value at node " + std::to_string(j));
    if (tag != SpaceTag::H1Atom) return;
    if (!(radius > 0)) throw DataError("atom radius must be positive");
    const cplx mean = mesh.integral(values);
    if (std::abs(mean) > 1e-10) throw DataError("atom is not mean-zero");
    for (Eigen::Index j = 0; j < values.size(); ++j) {
      if (std::abs(values[j]) > (1.0 + 1e-10) / radius) throw DataError("atom exceeds 1/radius");
      if (values[j] != 0.0 && (mesh.nodes[j] - center).norm() > radius * (1.0 + 1e-12))
        throw DataError("atom support leaves its ball at node " + std::to_string(j));
    }
  }
};

/// Arclength coordinate of every node measured from the start of the first
/// panel.
inline std::vector<double> node_arclength(const QuadratureMesh& mesh) {
  const CVector ones = CVector::Ones(static_cast<Eigen::Index>(mesh.size()));
  const CVector s = mesh.cumulative_integral(ones);
  std::vector<double> out(mesh.size());
  for (std::size_t j = 0; j < mesh.size(); ++j) out[j] = s[j].real();
  return out;
}

/// H^1 atom a(s) = (1/(2r)) sin(pi x) cos^4(pi x / 2), x = (s - s_c) / r, on
/// the arc |s - s_c| < r, with the discrete mean removed on the support. The
/// profile vanishes to fifth order at the arc ends so the near-field rules
/// see a smooth density.
inline BoundaryDensity make_h1_atom(const QuadratureMesh& mesh, double s_center, double r) {
  if (!(r > 0)) throw DataError("atom radius must be positive");
  const auto s = node_arclength(mesh);
  const double len = mesh.total_length();
  const bool periodic = mesh.geometry->bounded();
  if (periodic && 2.0 * r >= len) throw DataError("atom arc longer than the boundary");
  BoundaryDensity d;
  d.tag = SpaceTag::H1Atom;
  d.p = 1.0;
  d.radius = r;
  d.values = CVector::Zero(static_cast<Eigen::Index>(mesh.size()));
  double mass = 0.0, support = 0.0;
  std::vector<std::size_t> inside;
  for (std::size_t j = 0; j < mesh.size(); ++j) {
    double ds = s[j] - s_center;
    if (periodic) ds = std::remainder(ds, len);
    if (std::abs(ds) >= r) continue;
    const double v = std::sin(pi * ds / r) * std::pow(std::cos(0.5 * pi * ds / r), 4) / (2.0 * r);
    d.values[j] = v;
    mass += mesh.weights[j] * v;
    support += mesh.weights[j];
    inside.push_back(j);
  }
  if (inside.empty()) throw DataError("atom support contains no mesh node");
  for (auto j : inside) d.values[j] -= mass / support;
  // centre of the support arc
  std::size_t jc = inside.front();
  double best = std::numeric_limits<double>::infinity();
  for (auto j : inside) {
    double ds = s[j] - s_center;
    if (periodic) ds = std::remainder(ds, len);
    if (std::abs(ds) < best) {
      best = std::abs(ds);
      jc = j;
    }
  }
  d.center = mesh.nodes[jc];
  double reach = 0.0;
  for (auto j : inside) reach = std::max(reach, (mesh.nodes[j] - d.center).norm());
  d.radius = std::max(r, reach);
  return d;
}

// ---------------------------------------------------------------------------
// Near-field quadrature

namespace detail {

/// Integrates kern(Y) * density over one panel for a target z, calling
/// add(node, weight * kern) for every panel node the density interpolant
/// touches. Far targets use the native nodes; near ones recursive bisection
/// with 16-point leaves.
template <class Kern, class Add>
void panel_quadrature(const QuadratureMesh& mesh, int panel_id, const Vec2& z, Kern&& kern, Add&& add,
                      int max_depth = 48, int leaf_order = 16) {
  const Panel& p = mesh.panels[panel_id];
  const int m = mesh.order;
  const Vec2 mid = mesh.sample(p, 0.0).pos;
  if ((z - mid).norm() >= 2.0 * p.length) {
    for (int j = 0; j < m; ++j) {
      const int n = p.first_node + j;
      BoundaryPoint b{mesh.nodes[n], mesh.normals[n], mesh.tangents[n], 0.0};
      add(n, mesh.weights[n] * kern(b));
    }
    return;
  }
  const auto& base = quad::gauss_legendre(m);
  const auto& leaf = quad::gauss_legendre(leaf_order);
  std::vector<double> basis(m);
  const double scale = p.length / 2.0;  // rough arclength per unit of u
  std::function<void(double, double, int)> rec = [&](double a, double b, int depth) {
    const double len = scale * (b - a);
    const Vec2 c = mesh.sample(p, 0.5 * (a + b)).pos;
    if ((z - c).norm() < 1.0 * len && depth < max_depth) {
      const double mm = 0.5 * (a + b);
      rec(a, mm, depth + 1);
      rec(mm, b, depth + 1);
      return;
    }
    for (std::size_t q = 0; q < leaf.nodes.size(); ++q) {
      const double u = 0.5 * (a + b) + 0.5 * (b - a) * leaf.nodes[q];
      const BoundaryPoint y = mesh.sample(p, u);
      if ((y.pos - z).norm() < 1e-14) continue;
      const auto kv = kern(y);
      const decltype(kv) val = (0.5 * (b - a) * leaf.weights[q] * y.jac) * kv;
      quad::lagrange_basis(base, u, basis.data());
      for (int j = 0; j < m; ++j) add(p.first_node + j, basis[j] * val);
    }
  };
  rec(-1.0, 1.0, 0);
}

/// Integral of kern against a density over the whole mesh.
template <class T, class Kern>
T integrate(const QuadratureMesh& mesh, const CVector& f, const Vec2& z, Kern&& kern) {
  T acc = T();
  if constexpr (!std::is_same_v<T, cplx>) acc.setZero();
  for (int k = 0; k < static_cast<int>(mesh.panels.size()); ++k)
    panel_quadrature(mesh, k, z, kern, [&](int n, const T& v) { acc += v * f[n]; });
  return acc;
}

/// Nearest-panel resolution floor for evaluation points.
inline void check_resolution(const QuadratureMesh& mesh, const Vec2& x) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t at = 0;
  for (std::size_t j = 0; j < mesh.size(); ++j) {
    const double d = (mesh.nodes[j] - x).norm();
    if (d < best) {
      best = d;
      at = j;
    }
  }
  const double d = mesh.geometry->distance(x);
  const double floor = 1e-3 * mesh.panel_length(at);
  if (d < floor)
    throw ResolutionError("point at distance " + std::to_string(d) + " from the boundary is below the resolution floor " +
                          std::to_string(floor));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Potentials at points off the boundary

struct FieldSample {
  cplx u{0.0, 0.0};
  CVec2 grad = CVec2::Zero();
  bool has_grad = false;
};

/// S f(X) = int Gamma_Y(X) f(Y) dsigma(Y) and its gradient in X.
inline FieldSample eval_single(const GreenEvaluator& ev, const QuadratureMesh& mesh, const CVector& f, const Vec2& x,
                               bool gradient = true, bool check = true) {
  if (check) detail::check_resolution(mesh, x);
  FieldSample out;
  const unsigned parts = gradient ? (kValue | kGradY) : kValue;
  using V3 = Eigen::Matrix<cplx, 3, 1>;
  const V3 r = detail::integrate<V3>(mesh, f, x, [&](const BoundaryPoint& y) {
    const GreenValue g = ev.eval(y.pos, x, parts);
    return V3(g.value, g.grad_y(0), g.grad_y(1));
  });
  out.u = r(0);
  if (gradient) {
    out.grad = r.tail<2>();
    out.has_grad = true;
  }
  return out;
}

enum class DoubleGradRoute { Auto, Conjugate, Direct };

/// D f(X) = int nu . A^T(Y) grad_Y Gamma^T_X(Y) f dsigma. The gradient uses
/// the conjugate-kernel identity with the tangential derivative of f, or the
/// mixed Hessian of Gamma when asked (Auto picks the conjugate form when it
/// is closed, the direct form otherwise).
inline FieldSample eval_double(const GreenEvaluator& ev, const QuadratureMesh& mesh, const BoundaryDensity& f,
                               const Vec2& x, bool gradient = true, DoubleGradRoute route = DoubleGradRoute::Auto,
                               bool check = true) {
  if (check) detail::check_resolution(mesh, x);
  FieldSample out;
  out.u = detail::integrate<cplx>(mesh, f.values, x, [&](const BoundaryPoint& y) {
    const CVec2 an = ev.A(y.pos) * y.normal.cast<cplx>();
    return cplx((an.transpose() * ev.eval(y.pos, x, kGradX).grad_x)(0));
  });
  if (!gradient) return out;
  if (!f.differentiable) return out;  // gradient declined
  const auto evt = ev.transposed();
  if (route == DoubleGradRoute::Auto)
    route = evt->has_closed_conjugate() ? DoubleGradRoute::Conjugate : DoubleGradRoute::Direct;
  if (route == DoubleGradRoute::Conjugate) {
    const CVector df = mesh.tangential_derivative(f.values);
    out.grad = -detail::integrate<CVec2>(mesh, df, x, [&](const BoundaryPoint& y) {
      return conjugate_green_gradient(*evt, x, y.pos);
    });
  } else {
    out.grad = detail::integrate<CVec2>(mesh, f.values, x, [&](const BoundaryPoint& y) {
      const Mat2c h = ev.mixed_hessian(y.pos, x);
      return CVec2(h.transpose() * (ev.A(y.pos) * y.normal.cast<cplx>()));
    });
  }
  out.has_grad = true;
  return out;
}

// ---------------------------------------------------------------------------
// Boundary operators

enum class OpTag { Kplus, Kminus, KtPlus, KtMinus, Lt, Strace, ConormalD };

inline const char* op_name(OpTag t) {
  switch (t) {
    case OpTag::Kplus: return "Kplus";
    case OpTag::Kminus: return "Kminus";
    case OpTag::KtPlus: return "KtPlus";
    case OpTag::KtMinus: return "KtMinus";
    case OpTag::Lt: return "Lt";
    case OpTag::Strace: return "Strace";
    case OpTag::ConormalD: return "ConormalD";
  }
  return "?";
}

/// Interior (V_+) or exterior (V_-) approach.
enum class Side { Interior, Exterior };

struct BoundaryOperator {
  CMatrix matrix;
  OpTag tag = OpTag::Kplus;
  MeshPtr mesh;
  std::vector<double> limit_offsets;  // ladder as fractions of the per-node h0
  double tolerance = 0.0;             // max row-sum change when the coarsest offset is dropped
  int worst_node = -1;

  CVector apply(const CVector& f) const { return matrix * f; }
};

struct TraceOptions {
  int ladder = 6;
  double h_fraction = 0.25;     // h0 = h_fraction * panel length ...
  double corner_fraction = 0.5;  // ... capped by corner_fraction * corner distance
  double fail_threshold = 0.5;   // ConvergenceError above this estimate
  // Evaluators without a closed form: the ladder runs on the kernel frozen at
  // A(X_i) and the bounded remainder is integrated on the boundary itself.
  bool split = true;
  int remainder_depth = 10;
  int remainder_leaf = 8;
};

namespace detail {

/// Nontangential traces of sum_j K(Z, Y_j) f_j: Z = X_i + side*h_k*inward_i,
/// h_k = h0 2^{-k}, polynomial extrapolation to h = 0. kernel_for(e, i)
/// returns the kernel for target row i built on evaluator e, as a function
/// of (Z, Y). weak marks kernels whose frozen remainder is integrable.
template <class KernelFor>
BoundaryOperator assemble_trace(const GreenEvaluator& ev, const MeshPtr& meshp, Side side, OpTag tag,
                                KernelFor&& kernel_for, const TraceOptions& opt = {}, bool weak = true) {
  const QuadratureMesh& mesh = *meshp;
  if (mesh.panels.size() < 8) throw ResolutionError("assembly needs at least 8 panels");
  const int n = static_cast<int>(mesh.size());
  const int np = static_cast<int>(mesh.panels.size());
  BoundaryOperator op;
  op.tag = tag;
  op.mesh = meshp;
  op.matrix = CMatrix::Zero(n, n);
  for (int k = 0; k < opt.ladder; ++k) op.limit_offsets.push_back(std::pow(0.5, k));
  const std::vector<double> c_all = quad::extrapolation_weights(op.limit_offsets);
  const std::vector<double> c_fine =
      quad::extrapolation_weights(std::vector<double>(op.limit_offsets.begin() + 1, op.limit_offsets.end()));
  std::vector<Vec2> centres(np);
  for (int k = 0; k < np; ++k) centres[k] = mesh.sample(mesh.panels[k], 0.0).pos;
  // smooth probe densities (low-degree monomials) for the error estimate:
  // the ladder estimate is only meaningful on resolved densities
  Eigen::MatrixXd probes(6, n);
  {
    Vec2 c = Vec2::Zero();
    for (const auto& x : mesh.nodes) c += x;
    c /= n;
    double r = 0.0;
    for (const auto& x : mesh.nodes) r = std::max(r, (x - c).norm());
    for (int j = 0; j < n; ++j) {
      const Vec2 q = (mesh.nodes[j] - c) / r;
      probes.col(j) << 1.0, q.x(), q.y(), q.x() * q.x(), q.x() * q.y(), q.y() * q.y();
      if (!mesh.geometry->bounded()) probes.col(j) *= std::pow(std::max(0.0, 1.0 - q.squaredNorm()), 4);
    }
  }
  const CMatrix probes_c = probes.cast<cplx>();
  std::vector<double> est(n, 0.0);
  const double sgn = side == Side::Interior ? 1.0 : -1.0;
  const bool split = opt.split && weak && ev.route() == GreenRoute::FourierODE;

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const Vec2 x = mesh.nodes[i];
    const auto kern = kernel_for(ev, i);
    const ConstantGreen frozen(split ? ev.A(x) : Mat2c(Mat2c::Identity()));
    const auto fkern = kernel_for(frozen, i);
    const double h0 = std::min(opt.h_fraction * mesh.panel_length(i), opt.corner_fraction * mesh.corner_distance(i));
    const Vec2 dir = sgn * mesh.inward(i);
    CMatrix rows = CMatrix::Zero(opt.ladder, n);
    for (int k = 0; k < np; ++k) {
      const Panel& p = mesh.panels[k];
      const bool near = (x - centres[k]).norm() < 2.0 * p.length + h0;
      if (!near) {
        for (int j = p.first_node; j < p.first_node + mesh.order; ++j) {
          BoundaryPoint b{mesh.nodes[j], mesh.normals[j], mesh.tangents[j], 0.0};
          op.matrix(i, j) += mesh.weights[j] * kern(x, b);
        }
        continue;
      }
      for (int l = 0; l < opt.ladder; ++l) {
        const Vec2 z = x + (h0 * op.limit_offsets[l]) * dir;
        if (split)
          panel_quadrature(mesh, k, z, [&](const BoundaryPoint& y) { return fkern(z, y); },
                           [&](int node, cplx v) { rows(l, node) += v; });
        else
          panel_quadrature(mesh, k, z, [&](const BoundaryPoint& y) { return kern(z, y); },
                           [&](int node, cplx v) { rows(l, node) += v; });
      }
      if (split)
        panel_quadrature(
            mesh, k, x, [&](const BoundaryPoint& y) { return kern(x, y) - fkern(x, y); },
            [&](int node, cplx v) { op.matrix(i, node) += v; }, opt.remainder_depth, opt.remainder_leaf);
    }
    CVector diff(n);
    for (int j = 0; j < n; ++j) {
      cplx all = 0.0, fine = 0.0;
      for (int l = 0; l < opt.ladder; ++l) all += c_all[l] * rows(l, j);
      for (int l = 1; l < opt.ladder; ++l) fine += c_fine[l - 1] * rows(l, j);
      op.matrix(i, j) += all;
      diff[j] = all - fine;
    }
    est[i] = (probes_c * diff).cwiseAbs().maxCoeff();
  }
  for (int i = 0; i < n; ++i)
    if (est[i] > op.tolerance) {
      op.tolerance = est[i];
      op.worst_node = i;
    }
  if (op.tolerance > opt.fail_threshold)
    throw ConvergenceError("nontangential extrapolation did not converge at node " + std::to_string(op.worst_node) +
                           " (estimate " + std::to_string(op.tolerance) + ")");
  return op;
}

}  // namespace detail

/// K_+ (interior trace, side Interior) or K_- of the double layer.
inline BoundaryOperator assemble_K(const GreenEvaluator& ev, const MeshPtr& mesh, Side side,
                                   const TraceOptions& opt = {}) {
  return detail::assemble_trace(ev, mesh, side, side == Side::Interior ? OpTag::Kplus : OpTag::Kminus,
                                [](const GreenEvaluator& e, int) {
                                  return [&e](const Vec2& z, const BoundaryPoint& y) {
                                    const CVec2 an = e.A(y.pos) * y.normal.cast<cplx>();
                                    return cplx((an.transpose() * e.eval(y.pos, z, kGradX).grad_x)(0));
                                  };
                                },
                                opt);
}

/// K^t_+ is traced from the exterior, K^t_- from the interior:
/// nu . A^T grad S^T f.
inline BoundaryOperator assemble_Kt(const GreenEvaluator& ev, const MeshPtr& mesh, bool plus,
                                    const TraceOptions& opt = {}) {
  const QuadratureMesh& m = *mesh;
  return detail::assemble_trace(ev, mesh, plus ? Side::Exterior : Side::Interior,
                                plus ? OpTag::KtPlus : OpTag::KtMinus,
                                [&](const GreenEvaluator& e, int i) {
                                  const CVec2 p = ev.A(m.nodes[i]) * m.normals[i].cast<cplx>();
                                  return [&e, p](const Vec2& z, const BoundaryPoint& y) {
                                    return cplx((p.transpose() * e.eval(z, y.pos, kGradX).grad_x)(0));
                                  };
                                },
                                opt);
}

/// L^t f = tau . grad S^T f, traced from the chosen side.
inline BoundaryOperator assemble_Lt(const GreenEvaluator& ev, const MeshPtr& mesh, Side side = Side::Interior,
                                    const TraceOptions& opt = {}) {
  const QuadratureMesh& m = *mesh;
  return detail::assemble_trace(ev, mesh, side, OpTag::Lt,
                                [&](const GreenEvaluator& e, int i) {
                                  const CVec2 t = m.tangents[i].cast<cplx>();
                                  return [&e, t](const Vec2& z, const BoundaryPoint& y) {
                                    return cplx((t.transpose() * e.eval(z, y.pos, kGradX).grad_x)(0));
                                  };
                                },
                                opt);
}

/// Boundary values of S f (continuous across the boundary).
inline BoundaryOperator assemble_S_trace(const GreenEvaluator& ev, const MeshPtr& mesh, Side side = Side::Interior,
                                         const TraceOptions& opt = {}) {
  return detail::assemble_trace(ev, mesh, side, OpTag::Strace,
                                [](const GreenEvaluator& e, int) {
                                  return [&e](const Vec2& z, const BoundaryPoint& y) {
                                    return e.eval(y.pos, z, kValue).value;
                                  };
                                },
                                opt);
}

/// Conormal trace nu . A grad (D f) from the chosen side. Uses the conjugate
/// kernel against d/ds f when it is closed-form, the mixed Hessian otherwise.
inline BoundaryOperator assemble_conormal_D(const GreenEvaluator& ev, const MeshPtr& mesh, Side side = Side::Interior,
                                            const TraceOptions& opt = {}) {
  const QuadratureMesh& m = *mesh;
  const auto evt = ev.transposed();
  if (evt->has_closed_conjugate()) {
    BoundaryOperator op = detail::assemble_trace(
        *evt, mesh, side, OpTag::ConormalD,
        [&](const GreenEvaluator&, int i) {
          const CVec2 p = ev.A(m.nodes[i]).transpose() * m.normals[i].cast<cplx>();
          return [&evt, p](const Vec2& z, const BoundaryPoint& y) {
            return cplx(-(p.transpose() * evt->closed_conjugate(z, y.pos))(0));
          };
        },
        opt);
    // right-multiply by the panel differentiation matrix
    const auto& gl = quad::gauss_legendre(m.order);
    const Eigen::MatrixXd dm = quad::differentiation_matrix(gl);
    CMatrix out = CMatrix::Zero(op.matrix.rows(), op.matrix.cols());
    for (const auto& p : m.panels) {
      CMatrix blk(m.order, m.order);
      for (int a = 0; a < m.order; ++a) {
        const double jac = m.sample(p, gl.nodes[a]).jac;
        for (int b = 0; b < m.order; ++b) blk(a, b) = dm(a, b) / jac;
      }
      out.middleCols(p.first_node, m.order) = op.matrix.middleCols(p.first_node, m.order) * blk;
    }
    op.matrix = std::move(out);
    return op;
  }
  // the mixed Hessian is hypersingular: no frozen split
  return detail::assemble_trace(ev, mesh, side, OpTag::ConormalD,
                                [&](const GreenEvaluator&, int i) {
                                  const CVec2 p = ev.A(m.nodes[i]).transpose() * m.normals[i].cast<cplx>();
                                  return [&ev, p](const Vec2& z, const BoundaryPoint& y) {
                                    const Mat2c h = ev.mixed_hessian(y.pos, z);
                                    const CVec2 an = ev.A(y.pos) * y.normal.cast<cplx>();
                                    return cplx((p.transpose() * (h.transpose() * an))(0));
                                  };
                                },
                                opt, false);
}

/// Analytic split K_+ = I/2 + K_pv for a constant symmetric A on a smooth
/// closed curve: the kernel c nu_Y.(Y-X)/q(Y-X) is smooth with diagonal
/// limit c kappa / (2 tau^T S^{-1} tau).
inline CMatrix analytic_K_plus(const Mat2c& a, const QuadratureMesh& mesh) {
  if ((a - a.transpose()).norm() > 1e-14) throw CoefficientError("analytic split needs a symmetric matrix");
  if (!mesh.geometry->bounded() || !mesh.geometry->corners().empty())
    throw GeometryError("analytic split needs a smooth closed curve");
  const ConstantForm form(a);
  const int n = static_cast<int>(mesh.size());
  CMatrix k(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        const Vec2& t = mesh.tangents[i];
        k(i, i) = 0.5 + mesh.weights[i] * form.c * mesh.curvature[i] / (2.0 * form.quad(t));
        continue;
      }
      const Vec2 d = mesh.nodes[j] - mesh.nodes[i];
      k(i, j) = mesh.weights[j] * form.c * mesh.normals[j].dot(d) / form.quad(d);
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct JumpReport {
  double max_residual = 0.0;
  int worst = -1;
};

/// max over densities of ||(K_+ - K_-) f - f|| / ||f|| in the weighted norm.
inline JumpReport jump_check(const BoundaryOperator& kp, const BoundaryOperator& km,
                             const std::vector<CVector>& densities) {
  if (kp.mesh != km.mesh) throw DataError("jump check needs operators on one mesh");
  JumpReport r;
  for (std::size_t k = 0; k < densities.size(); ++k) {
    const CVector& f = densities[k];
    const double fn = kp.mesh->norm(f);
    if (fn == 0.0) continue;
    const double res = kp.mesh->norm(CVector(kp.matrix * f - km.matrix * f - f)) / fn;
    if (res > r.max_residual) {
      r.max_residual = res;
      r.worst = static_cast<int>(k);
    }
  }
  return r;
}

/// Smooth test densities: trig modes on closed curves, modulated bumps on
/// graphs (compactly supported well inside the truncation window).
inline std::vector<CVector> test_densities(const QuadratureMesh& mesh, int count = 16) {
  std::vector<CVector> out;
  const auto s = node_arclength(mesh);
  const double len = mesh.total_length();
  const auto n = static_cast<Eigen::Index>(mesh.size());
  const bool closed = mesh.geometry->bounded();
  for (int k = 0; k < count; ++k) {
    CVector f(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (closed) {
        const double th = 2.0 * pi * s[j] / len;
        const int mode = k / 2;
        f[j] = (k % 2 == 0) ? std::cos(mode * th) : std::sin((mode + 1) * th);
        if (k % 4 == 3) f[j] *= cplx(1.0, 0.5);
      } else {
        const double x = mesh.nodes[j].dot(mesh.geometry->e_perp());
        const double w = 0.3 * mesh.geometry->truncation;
        const double c = -0.2 * w + 0.4 * w * (k % 5) / 4.0;
        const double b = std::abs(x - c) < w ? std::pow(std::cos(0.5 * pi * (x - c) / w), 4) : 0.0;
        f[j] = b * std::exp(I_unit * (0.5 * k * x / w));
      }
    }
    out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interior fields

struct InteriorField {
  std::function<FieldSample(const Vec2&, bool)> evaluate;
  std::string provenance;
};

struct WeakResidual {
  double max_relative = 0.0;
  int bumps = 0;
};

/// Weak-form residual int A grad u . grad eta over random interior bumps
/// eta = (1 - |X-c|^2/rho^2)^3, relative to int |A grad u| |grad eta|.
inline WeakResidual weak_residual(const InteriorField& u, const CoefficientField& a, const DomainGeometry& geom,
                                  int bumps = 4, unsigned seed = 11, int order = 24) {
  std::mt19937 rng(seed);
  WeakResidual out;
  // bounding box from the polyline
  Vec2 lo(1e300, 1e300), hi(-1e300, -1e300);
  for (const auto& pl : geom.polyline())
    for (const auto& p : pl) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  if (!geom.bounded()) {
    lo.y() = std::max(lo.y(), -2.0);
    hi.y() = lo.y() + 2.0;
    const double c = 0.5 * (lo.x() + hi.x());
    lo.x() = c - 1.0;
    hi.x() = c + 1.0;
  }
  std::uniform_real_distribution<double> ux(lo.x(), hi.x()), uy(lo.y(), hi.y());
  const auto& gl = quad::gauss_legendre(order);
  int tries = 0;
  while (out.bumps < bumps && tries < 10000) {
    ++tries;
    const Vec2 c(ux(rng), uy(rng));
    if (!geom.contains(c)) continue;
    const double d = geom.distance(c);
    const double rho = 0.5 * d;
    if (rho < 0.05 * (hi - lo).norm() * 0.2) continue;
    cplx num = 0.0;
    double den = 0.0;
    for (std::size_t a1 = 0; a1 < gl.nodes.size(); ++a1) {
      const double r = 0.5 * rho * (gl.nodes[a1] + 1.0);
      for (int a2 = 0; a2 < 2 * order; ++a2) {
        const double th = 2.0 * pi * (a2 + 0.5) / (2 * order);
        const Vec2 off(r * std::cos(th), r * std::sin(th));
        const Vec2 x = c + off;
        const double w = 0.5 * rho * gl.weights[a1] * r * (2.0 * pi / (2 * order));
        const double g = 1.0 - r * r / (rho * rho);
        const Vec2 grad_eta = -6.0 * g * g / (rho * rho) * off;
        const FieldSample s = u.evaluate(x, true);
        const CVec2 flux = a(x.x()) * s.grad;
        const cplx v = (flux.transpose() * grad_eta.cast<cplx>())(0);
        num += w * v;
        den += w * flux.norm() * grad_eta.norm();
      }
    }
    if (den > 1e-300) out.max_relative = std::max(out.max_relative, std::abs(num) / den);
    ++out.bumps;
  }
  return out;
}

}  // namespace layerpot

#endif  // LAYERPOT_POTENTIALS_HPP
