#ifndef LAYERPOT_GREENS_HPP
#define LAYERPOT_GREENS_HPP

#include "layerpot/coefficients.hpp"
#include "layerpot/geometry.hpp"
#include "layerpot/quadrature.hpp"

#include <memory>
#include <mutex>

namespace layerpot {

enum class GreenRoute { ConstantClosedForm, GraphPullback, FourierODE };

inline const char* route_name(GreenRoute r) {
  switch (r) {
    case GreenRoute::ConstantClosedForm: return "constant";
    case GreenRoute::GraphPullback: return "graph_pullback";
    case GreenRoute::FourierODE: return "fourier_ode";
  }
  return "?";
}

/// Gamma_X(Y) with X the pole and Y the point, with both gradients.
struct GreenValue {
  cplx value{0.0, 0.0};
  CVec2 grad_y = CVec2::Zero();
  CVec2 grad_x = CVec2::Zero();
};

enum GreenPart : unsigned { kValue = 1u, kGradY = 2u, kGradX = 4u, kAll = 7u };

class GreenEvaluator : public std::enable_shared_from_this<GreenEvaluator> {
 public:
  virtual ~GreenEvaluator() = default;

  /// Fundamental solution of div A grad with pole X, evaluated at Y:
  /// integral of A grad(Gamma_X) . grad(eta) = -eta(X).
  virtual GreenValue eval(const Vec2& x, const Vec2& y, unsigned parts = kAll) const = 0;

  virtual GreenRoute route() const = 0;

  /// Evaluator for the transposed field A^T.
  virtual std::shared_ptr<const GreenEvaluator> transposed() const = 0;

  /// H(i, j) = d/dX_i d/dY_j Gamma_X(Y). Default: central differences of
  /// grad_x in Y.
  virtual Mat2c mixed_hessian(const Vec2& x, const Vec2& y) const {
    const double h = 1e-4 * (y - x).norm();
    Mat2c out;
    for (int j = 0; j < 2; ++j) {
      Vec2 e = Vec2::Zero();
      e[j] = h;
      const CVec2 gp = eval(x, y + e, kGradX).grad_x;
      const CVec2 gm = eval(x, y - e, kGradX).grad_x;
      out.col(j) = (gp - gm) / (2.0 * h);
    }
    return out;
  }

  /// Closed-form grad_X of the conjugate kernel, when the route has one.
  virtual bool has_closed_conjugate() const { return false; }
  virtual CVec2 closed_conjugate(const Vec2&, const Vec2&) const {
    throw ConfigError("no closed-form conjugate kernel for this route");
  }

  /// Advertised accuracy of values relative to max(1, |Gamma|).
  virtual double tolerance() const { return 1e-13; }

  const CoefficientField& field() const { return *field_; }
  const FieldPtr& field_ptr() const { return field_; }
  Mat2c A(const Vec2& p) const { return (*field_)(p.x()); }

 protected:
  FieldPtr field_;
};

using EvaluatorPtr = std::shared_ptr<const GreenEvaluator>;

// ---------------------------------------------------------------------------
// Constant coefficients

/// sqrt(det S) continued from the positive root at Re S along Re S + i th Im S.
inline cplx continued_sqrt_det(const Mat2c& s) {
  const Mat2 re = s.real(), im = s.imag();
  if (!(re(0, 0) > 0.0 && re.determinant() > 0.0))
    throw CoefficientError("real part of the symmetric coefficient matrix is not positive definite");
  cplx root = std::sqrt(re.determinant());
  const int steps = 64;
  for (int k = 1; k <= steps; ++k) {
    const Mat2c m = re.cast<cplx>() + I_unit * (static_cast<double>(k) / steps) * im.cast<cplx>();
    const cplx d = m.determinant();
    if (std::abs(d) < 1e-14) throw CoefficientError("det S vanishes along the ellipticity path");
    const cplx r = std::sqrt(d);
    root = (std::abs(r - root) <= std::abs(r + root)) ? r : -r;
  }
  return root;
}

/// Closed form Gamma(Z) = (1 / (4 pi sqrt(det S))) log(Z^T S^{-1} Z),
/// S = (A + A^T) / 2.
struct ConstantForm {
  Mat2c a, s, sinv;
  cplx sqrt_det{1.0, 0.0};
  cplx c{0.0, 0.0};      // 1 / (2 pi sqrt det S)
  cplx k_log{0.0, 0.0};  // (c/2) log (S^{-1})_22, the Fourier-normalisation offset

  ConstantForm() = default;
  explicit ConstantForm(const Mat2c& m) : a(m) {
    if (!m.allFinite()) throw CoefficientError("non-finite coefficient matrix");
    s = 0.5 * (m + m.transpose());
    sqrt_det = continued_sqrt_det(s);
    const cplx d = s.determinant();
    if (std::abs(std::arg(d)) > pi - 1e-6) throw CoefficientError("det S on the negative real axis: unsupported branch");
    sinv = s.inverse();
    c = 1.0 / (2.0 * pi * sqrt_det);
    k_log = 0.5 * c * std::log(sinv(1, 1));
  }

  cplx quad(const Vec2& z) const { return z.x() * z.x() * sinv(0, 0) + z.x() * z.y() * (sinv(0, 1) + sinv(1, 0)) + z.y() * z.y() * sinv(1, 1); }

  cplx value(const Vec2& z) const {
    const cplx q = quad(z);
    if (q.real() <= 0.0) throw CoefficientError("quadratic form left the right half-plane");
    return 0.5 * c * std::log(q);
  }

  CVec2 grad(const Vec2& z) const { return c * (sinv * z.cast<cplx>()) / quad(z); }

  Mat2c hess(const Vec2& z) const {
    const cplx q = quad(z);
    const CVec2 w = sinv * z.cast<cplx>();
    return c * (sinv / q - 2.0 * (w * w.transpose()) / (q * q));
  }

  /// Roots lambda_+ (decaying to the right) and lambda_- of
  /// a11 l^2 + i xi (a12 + a21) l - xi^2 a22 = 0.
  std::pair<cplx, cplx> roots(double xi) const {
    const cplx b = s(0, 1);
    const cplx lp = (-I_unit * xi * b - std::abs(xi) * sqrt_det) / s(0, 0);
    const cplx lm = (-I_unit * xi * b + std::abs(xi) * sqrt_det) / s(0, 0);
    return {lp, lm};
  }
};

class ConstantGreen final : public GreenEvaluator {
 public:
  explicit ConstantGreen(const Mat2c& a) : form_(a) {
    field_ = std::make_shared<const CoefficientField>(CoefficientField::constant(a));
  }
  explicit ConstantGreen(FieldPtr f) : form_(f->left_end()) {
    if (!f->is_constant()) throw ConfigError("ConstantGreen needs a constant field");
    field_ = std::move(f);
  }

  GreenValue eval(const Vec2& x, const Vec2& y, unsigned parts = kAll) const override {
    const Vec2 z = y - x;
    if (z.norm() == 0.0) throw DataError("Green function evaluated at its pole");
    GreenValue g;
    if (parts & kValue) g.value = form_.value(z);
    if (parts & (kGradY | kGradX)) {
      g.grad_y = form_.grad(z);
      g.grad_x = -g.grad_y;
    }
    return g;
  }

  GreenRoute route() const override { return GreenRoute::ConstantClosedForm; }

  std::shared_ptr<const GreenEvaluator> transposed() const override {
    std::call_once(tflag_, [this] { transposed_ = std::make_shared<ConstantGreen>(Mat2c(form_.a.transpose())); });
    return transposed_;
  }

  Mat2c mixed_hessian(const Vec2& x, const Vec2& y) const override { return -form_.hess(y - x); }

  bool has_closed_conjugate() const override { return true; }
  /// grad_X of the conjugate: R A grad_X Gamma (R the quarter turn).
  CVec2 closed_conjugate(const Vec2& x, const Vec2& y) const override {
    const CVec2 gx = -form_.grad(y - x);
    return rot90_matrix().cast<cplx>() * (form_.a * gx);
  }

  const ConstantForm& form() const { return form_; }

 private:
  ConstantForm form_;
  mutable std::once_flag tflag_;
  mutable std::shared_ptr<const GreenEvaluator> transposed_;
};

inline cplx green_constant_value(const Mat2c& a, const Vec2& x, const Vec2& y) {
  return ConstantGreen(a).eval(x, y, kValue).value;
}

// ---------------------------------------------------------------------------
// Graph pullback: B = [[1, phi'], [phi', 1 + phi'^2]] is the pullback of the
// identity by J(y, s) = (y, s - phi(y)), so Gamma^B_X(Y) = Gamma^I(J(Y) - J(X)).

inline Mat2c pullback_matrix(double slope) {
  Mat2c b;
  b << 1.0, slope, slope, 1.0 + slope * slope;
  return b;
}

class GraphPullbackGreen final : public GreenEvaluator {
 public:
  GraphPullbackGreen(GraphFunction phi, double lo, double hi) : phi_(std::move(phi)) {
    auto p = phi_;
    field_ = std::make_shared<const CoefficientField>(CoefficientField::profile(
        [p](double x) { return pullback_matrix(p.slope(x)); }, lo, hi, p.kinks));
  }

  GreenValue eval(const Vec2& x, const Vec2& y, unsigned parts = kAll) const override {
    const Vec2 w = warp(y) - warp(x);
    const double r2 = w.squaredNorm();
    if (r2 == 0.0) throw DataError("Green function evaluated at its pole");
    GreenValue g;
    if (parts & kValue) g.value = std::log(r2) / (4.0 * pi);
    if (parts & kGradY) {
      const double py = phi_.slope(y.x());
      g.grad_y = CVec2(w.x() - py * w.y(), w.y()) / (2.0 * pi * r2);
    }
    if (parts & kGradX) {
      const double px = phi_.slope(x.x());
      g.grad_x = CVec2(-w.x() + px * w.y(), -w.y()) / (2.0 * pi * r2);
    }
    return g;
  }

  GreenRoute route() const override { return GreenRoute::GraphPullback; }

  std::shared_ptr<const GreenEvaluator> transposed() const override { return shared_from_this(); }

  Mat2c mixed_hessian(const Vec2& x, const Vec2& y) const override {
    const Vec2 w = warp(y) - warp(x);
    const double r2 = w.squaredNorm();
    Mat2 jy = jac(y), jx = -jac(x);
    Mat2c h;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        h(i, j) = (jx.col(i).dot(jy.col(j)) / r2 - 2.0 * w.dot(jy.col(j)) * w.dot(jx.col(i)) / (r2 * r2)) / (2.0 * pi);
    return h;
  }

  bool has_closed_conjugate() const override { return true; }
  CVec2 closed_conjugate(const Vec2& x, const Vec2& y) const override {
    const Vec2 w = warp(y) - warp(x);
    const Vec2 gp = -w / (2.0 * pi * w.squaredNorm());  // gradient of Gamma^I in the pole
    const Vec2 out = jac(x).transpose() * (rot90_matrix() * gp);
    return out.cast<cplx>();
  }

  const GraphFunction& phi() const { return phi_; }

 private:
  Vec2 warp(const Vec2& p) const { return {p.x(), p.y() - phi_.value(p.x())}; }
  Mat2 jac(const Vec2& p) const {
    Mat2 j;
    j << 1.0, 0.0, -phi_.slope(p.x()), 1.0;
    return j;
  }

  GraphFunction phi_;
};

}  // namespace layerpot

#include "layerpot/fourier_green.hpp"

namespace layerpot {

/// Constant fields get the closed form; everything else the Fourier-ODE route.
inline EvaluatorPtr make_evaluator(const CoefficientField& field, FourierParams params = {}) {
  if (field.is_constant()) return std::make_shared<ConstantGreen>(std::make_shared<const CoefficientField>(field));
  return std::make_shared<FourierGreen>(std::make_shared<const CoefficientField>(field), params);
}

// ---------------------------------------------------------------------------
// Conjugate kernel

/// grad_X of the conjugate kernel: the function of Y whose gradient is
/// R A(Y) grad_Y grad_X Gamma_X(Y), vanishing at infinity. Computed by
/// integrating nu . A grad(grad_X Gamma_X) along the ray from Y in direction
/// `dir` out to infinity. A zero `dir` picks a ray pointing away from X.
inline CVec2 conjugate_green_gradient_path(const GreenEvaluator& ev, const Vec2& x, const Vec2& y,
                                           Vec2 dir = Vec2::Zero()) {
  const double r = (y - x).norm();
  if (r == 0.0) throw DataError("conjugate kernel evaluated at its pole");
  if (dir.norm() == 0.0) {
    // horizontal rays keep the translation-invariant coordinate fixed
    dir = Vec2((y.x() >= x.x()) ? 1.0 : -1.0, 0.0);
    if (ev.route() != GreenRoute::FourierODE) dir = (y - x) / r;
  }
  dir.normalize();
  // closest approach of the ray to the pole
  const double along = (x - y).dot(dir);
  const double miss = along > 0 ? (x - y - along * dir).norm() : r;
  if (miss < 1e-3 * r) {
    const Vec2 alt = rot90(dir);
    return conjugate_green_gradient_path(ev, x, y, (alt.dot(y - x) >= 0 ? alt : Vec2(-alt)));
  }
  const Vec2 nu(dir.y(), -dir.x());  // R^T dir
  const auto& gl = quad::gauss_legendre(10);
  auto integrand = [&](double s) -> CVec2 {
    const Vec2 z = y + s * dir;
    const Mat2c h = ev.mixed_hessian(x, z);
    return h * (ev.A(z).transpose() * nu.cast<cplx>());
  };
  CVec2 acc = CVec2::Zero();
  double a = 0.0, b = 0.25 * std::max(miss, 1e-3 * r);
  const double s_max = 256.0 * std::max(r, 1.0);
  while (a < s_max) {
    for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
      const double s = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[q];
      acc += 0.5 * (b - a) * gl.weights[q] * integrand(s);
    }
    a = b;
    b *= 2.0;
  }
  // tail beyond a from the fit c/s^2 + d/s^3 + e/s^4 through s = a, a/2, a/4
  acc += a * (16.0 / 9.0 * integrand(a) - 11.0 / 48.0 * integrand(0.5 * a) + 5.0 / 576.0 * integrand(0.25 * a));
  return -acc;
}

inline CVec2 conjugate_green_gradient(const GreenEvaluator& ev, const Vec2& x, const Vec2& y) {
  if (ev.has_closed_conjugate()) return ev.closed_conjugate(x, y);
  return conjugate_green_gradient_path(ev, x, y);
}

// ---------------------------------------------------------------------------
// Calderon-Zygmund regularity probe

struct CZReport {
  double alpha_x = 0.0, c_x = 0.0;  // Hoelder exponent and constant in the first variable
  double alpha_y = 0.0, c_y = 0.0;
  bool monotone = true;  // halving |X - X'| never pushed the ratio above C (1 + tol)
  std::size_t samples = 0;
};

struct CZPair {
  Vec2 x;
  Vec2 y;
  Vec2 direction;  // unit direction of the perturbation X -> X'
};

/// Kernel B6(Y) grad Gamma^T_X(Y), with grad Gamma^T_X(Y) = grad of Gamma^A_Y(X) in the pole.
inline CVec2 cz_kernel(const GreenEvaluator& ev, const Vec2& x, const Vec2& y) {
  const CVec2 g = ev.eval(y, x, kGradX).grad_x;
  return b6(ev.field(), y.x()) * g;
}

inline CZReport cz_regularity_probe(const GreenEvaluator& ev, const std::vector<CZPair>& pairs, int ladder = 6,
                                    double tol = 0.05) {
  CZReport rep;
  for (int var = 0; var < 2; ++var) {
    std::vector<double> lx, ly;
    std::vector<std::vector<std::pair<double, double>>> runs;
    for (const auto& p : pairs) {
      const double r = (p.x - p.y).norm();
      const CVec2 k0 = cz_kernel(ev, p.x, p.y);
      std::vector<std::pair<double, double>> run;
      for (int k = 1; k <= ladder; ++k) {
        const double dlt = r * std::pow(0.5, k + 1);
        const Vec2 shift = dlt * p.direction.normalized();
        const CVec2 k1 = var == 0 ? cz_kernel(ev, p.x + shift, p.y) : cz_kernel(ev, p.x, p.y + shift);
        const double diff = (k1 - k0).norm();
        if (!(diff > 0)) continue;
        lx.push_back(std::log(dlt / r));
        ly.push_back(std::log(diff * r));
        run.emplace_back(dlt / r, diff * r);
      }
      runs.push_back(std::move(run));
    }
    const std::size_t n = lx.size();
    rep.samples += n;
    double alpha = 0.0, cst = 0.0;
    if (n >= 2) {
      const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
      const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
      }
      alpha = sxx > 0 ? sxy / sxx : 0.0;
      const double a_used = std::clamp(alpha, 1e-3, 1.0);
      for (const auto& run : runs)
        for (const auto& [t, v] : run) cst = std::max(cst, v / std::pow(t, a_used));
      for (const auto& run : runs)
        for (std::size_t i = 1; i < run.size(); ++i)
          if (run[i].second / std::pow(run[i].first, a_used) > cst * (1.0 + tol)) rep.monotone = false;
    }
    if (var == 0) {
      rep.alpha_x = alpha;
      rep.c_x = cst;
    } else {
      rep.alpha_y = alpha;
      rep.c_y = cst;
    }
  }
  return rep;
}

}  // namespace layerpot

#endif  // LAYERPOT_GREENS_HPP
