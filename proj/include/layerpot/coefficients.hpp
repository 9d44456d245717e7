#ifndef LAYERPOT_COEFFICIENTS_HPP
#define LAYERPOT_COEFFICIENTS_HPP

#include "layerpot/common.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>

namespace layerpot {

/// Complex coefficient matrix A(x), independent of the second coordinate.
/// Inside the core window [lo, hi] the matrix comes from a closed form or a
/// cubic interpolant of samples; outside it is frozen at the end values.
class CoefficientField {
 public:
  using Profile = std::function<Mat2c(double)>;

  static CoefficientField constant(const Mat2c& a) {
    CoefficientField f;
    f.constant_ = true;
    f.left_ = f.right_ = a;
    f.lo_ = f.hi_ = 0.0;
    f.fn_ = [a](double) { return a; };
    f.finish();
    return f;
  }

  /// Closed-form profile on [lo, hi]. `breaks` lists abscissae where A (or a
  /// derivative) jumps; the ODE solvers put mesh nodes there.
  static CoefficientField profile(Profile fn, double lo, double hi, std::vector<double> breaks = {},
                                  int grid_points = 2001) {
    if (!(hi > lo)) throw CoefficientError("profile window must satisfy lo < hi");
    CoefficientField f;
    f.fn_ = std::move(fn);
    f.lo_ = lo;
    f.hi_ = hi;
    f.left_ = f.fn_(lo);
    f.right_ = f.fn_(hi);
    f.breaks_ = std::move(breaks);
    std::sort(f.breaks_.begin(), f.breaks_.end());
    f.grid_points_ = grid_points;
    f.finish();
    return f;
  }

  /// Samples on an increasing grid, joined by C^1 cubic Hermite pieces with
  /// finite-difference slopes.
  static CoefficientField sampled(std::vector<double> xs, std::vector<Mat2c> as) {
    if (xs.size() != as.size() || xs.empty()) throw CoefficientError("coefficient grid and samples differ in length");
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!std::isfinite(xs[i]) || !as[i].allFinite()) throw CoefficientError("non-finite coefficient sample");
      if (i > 0 && !(xs[i] > xs[i - 1])) throw CoefficientError("coefficient grid must increase");
    }
    if (xs.size() == 1) return constant(as[0]);
    CoefficientField f;
    auto x = std::make_shared<const std::vector<double>>(xs);
    auto a = std::make_shared<const std::vector<Mat2c>>(as);
    const std::size_t n = xs.size();
    auto slopes = std::make_shared<std::vector<Mat2c>>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t l = i == 0 ? 0 : i - 1;
      const std::size_t r = i + 1 == n ? n - 1 : i + 1;
      (*slopes)[i] = (as[r] - as[l]) / (xs[r] - xs[l]);
    }
    f.fn_ = [x, a, slopes](double t) -> Mat2c {
      if (t <= x->front()) return a->front();
      if (t >= x->back()) return a->back();
      auto it = std::upper_bound(x->begin(), x->end(), t);
      const std::size_t k = static_cast<std::size_t>(it - x->begin()) - 1;
      const double h = (*x)[k + 1] - (*x)[k];
      const double s = (t - (*x)[k]) / h;
      const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
      const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
      return h00 * (*a)[k] + h10 * h * (*slopes)[k] + h01 * (*a)[k + 1] + h11 * h * (*slopes)[k + 1];
    };
    f.lo_ = xs.front();
    f.hi_ = xs.back();
    f.left_ = as.front();
    f.right_ = as.back();
    f.samples_x_ = std::move(xs);
    f.finish();
    return f;
  }

  Mat2c operator()(double x) const {
    if (constant_) return left_;
    if (x <= lo_) return left_;
    if (x >= hi_) return right_;
    return fn_(x);
  }

  bool is_constant() const { return constant_; }
  bool is_real() const { return real_; }
  bool is_symmetric() const { return symmetric_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const Mat2c& left_end() const { return left_; }
  const Mat2c& right_end() const { return right_; }
  const std::vector<double>& breakpoints() const { return breaks_; }

  /// Grid on which sup-type quantities (ellipticity, eps) are measured.
  std::vector<double> grid() const {
    if (constant_) return {0.0};
    if (!samples_x_.empty()) return samples_x_;
    std::vector<double> g(grid_points_);
    for (int i = 0; i < grid_points_; ++i) g[i] = lo_ + (hi_ - lo_) * i / (grid_points_ - 1);
    for (double b : breaks_) {
      const double d = 1e-9 * (hi_ - lo_);
      g.push_back(b - d);
      g.push_back(b + d);
    }
    std::sort(g.begin(), g.end());
    return g;
  }

  CoefficientField map(std::function<Mat2c(const Mat2c&)> op) const {
    CoefficientField out = *this;
    auto inner = fn_;
    out.fn_ = [inner, op](double x) { return op(inner(x)); };
    out.left_ = op(left_);
    out.right_ = op(right_);
    out.finish();
    out.reference_.reset();
    out.eps_ = 0.0;
    return out;
  }

  CoefficientField transposed() const {
    return map([](const Mat2c& a) -> Mat2c { return a.transpose(); });
  }

  double lambda() const { return lambda_; }
  double Lambda() const { return Lambda_; }
  void set_ellipticity(double lam, double Lam) {
    lambda_ = lam;
    Lambda_ = Lam;
  }

  const std::shared_ptr<const CoefficientField>& reference() const { return reference_; }
  double eps() const { return eps_; }

  /// Attach a real reference field A0 and measure eps = sup ||A - A0||_2 on
  /// the union of both grids.
  void set_reference(const CoefficientField& ref) {
    if (!ref.is_real()) throw CoefficientError("reference field must be real");
    reference_ = std::make_shared<const CoefficientField>(ref);
    eps_ = distance(*this, ref);
  }

  static double distance(const CoefficientField& a, const CoefficientField& b) {
    auto g = a.grid();
    auto gb = b.grid();
    g.insert(g.end(), gb.begin(), gb.end());
    g.push_back(std::min(a.lo_, b.lo_) - 1.0);
    g.push_back(std::max(a.hi_, b.hi_) + 1.0);
    double e = 0.0;
    for (double x : g) {
      Eigen::JacobiSVD<Mat2c> svd(a(x) - b(x));
      e = std::max(e, svd.singularValues()(0));
    }
    return e;
  }

  /// Short string identifying the sampled field, used as a cache key.
  std::string fingerprint() const {
    std::ostringstream os;
    os.precision(17);
    os << lo_ << ',' << hi_;
    auto g = grid();
    std::vector<double> probe{lo_ - 1.0, hi_ + 1.0};
    for (std::size_t i = 0; i < g.size(); i += std::max<std::size_t>(1, g.size() / 97)) probe.push_back(g[i]);
    for (double b : breaks_) probe.push_back(b);
    for (double x : probe) {
      const Mat2c a = (*this)(x);
      for (int k = 0; k < 4; ++k) os << ',' << a(k).real() << ',' << a(k).imag();
    }
    return os.str();
  }

  std::string label;

 private:
  void finish() {
    real_ = true;
    symmetric_ = true;
    for (double x : grid()) {
      const Mat2c a = (*this)(x);
      if (!a.allFinite()) throw CoefficientError("non-finite coefficient value");
      if (a.imag().cwiseAbs().maxCoeff() > 0.0) real_ = false;
      if (std::abs(a(0, 1) - a(1, 0)) > 0.0) symmetric_ = false;
    }
    for (const Mat2c* a : {&left_, &right_}) {
      if (a->imag().cwiseAbs().maxCoeff() > 0.0) real_ = false;
      if (std::abs((*a)(0, 1) - (*a)(1, 0)) > 0.0) symmetric_ = false;
    }
  }

  Profile fn_;
  bool constant_ = false;
  bool real_ = true;
  bool symmetric_ = true;
  double lo_ = 0.0, hi_ = 0.0;
  Mat2c left_ = Mat2c::Identity(), right_ = Mat2c::Identity();
  std::vector<double> breaks_;
  std::vector<double> samples_x_;
  int grid_points_ = 2001;
  double lambda_ = 0.0, Lambda_ = 0.0;
  std::shared_ptr<const CoefficientField> reference_;
  double eps_ = 0.0;
};

using FieldPtr = std::shared_ptr<const CoefficientField>;

inline Mat2c real_matrix(const Mat2& a) { return a.cast<cplx>(); }

namespace detail {

inline CVec2 probe_vector(double alpha, double beta) {
  return CVec2(std::cos(alpha), std::sin(alpha) * std::exp(I_unit * beta));
}

/// Minimise (sign=+1) or maximise (sign=-1) q over complex unit vectors
/// (cos a, sin a e^{ib}) by a probe grid followed by pattern refinement.
template <class Q>
double probe_extremum(const Q& q, int probe_count, double sign) {
  const int side = std::max(8, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(probe_count)))));
  double best = std::numeric_limits<double>::infinity();
  double ba = 0.0, bb = 0.0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double a = 0.5 * pi * i / (side - 1);
      const double b = 2.0 * pi * j / side;
      const double v = sign * q(probe_vector(a, b));
      if (v < best) {
        best = v;
        ba = a;
        bb = b;
      }
    }
  }
  double step_a = 0.5 * pi / side, step_b = 2.0 * pi / side;
  while (step_a > 1e-9) {
    bool moved = false;
    for (int da = -1; da <= 1; ++da) {
      for (int db = -1; db <= 1; ++db) {
        if (da == 0 && db == 0) continue;
        const double a = ba + da * step_a, b = bb + db * step_b;
        const double v = sign * q(probe_vector(a, b));
        if (v < best) {
          best = v;
          ba = a;
          bb = b;
          moved = true;
        }
      }
    }
    if (!moved) {
      step_a *= 0.5;
      step_b *= 0.5;
    }
  }
  return sign * best;
}

}  // namespace detail

struct Ellipticity {
  double lambda = 0.0;
  double Lambda = 0.0;
};

/// lambda = min Re conj(eta).A eta, Lambda = max |xi.A eta| over unit
/// vectors and grid abscissae, by probing with local refinement.
inline Ellipticity check_ellipticity(const CoefficientField& field, int probe_count = 256) {
  if (probe_count < 64) throw ConfigError("check_ellipticity needs at least 64 probes");
  Ellipticity e{std::numeric_limits<double>::infinity(), 0.0};
  auto xs = field.grid();
  if (!field.is_constant()) {
    xs.push_back(field.lo() - 1.0);
    xs.push_back(field.hi() + 1.0);
  }
  for (double x : xs) {
    const Mat2c a = field(x);
    auto re_form = [&a](const CVec2& eta) { return (eta.adjoint() * a * eta)(0).real(); };
    // for fixed eta the best xi is conj(A eta)/|A eta|, so the bilinear sup is |A eta|
    auto bound = [&a](const CVec2& eta) { return (a * eta).norm(); };
    e.lambda = std::min(e.lambda, detail::probe_extremum(re_form, probe_count, 1.0));
    e.Lambda = std::max(e.Lambda, detail::probe_extremum(bound, probe_count, -1.0));
  }
  if (!(e.lambda > 0.0))
    throw CoefficientError("coefficient field is not elliptic (lambda = " + std::to_string(e.lambda) + ")");
  return e;
}

/// Field with measured ellipticity constants stored on it.
inline CoefficientField certify(CoefficientField field, int probe_count = 256) {
  const auto e = check_ellipticity(field, probe_count);
  field.set_ellipticity(e.lambda, e.Lambda);
  return field;
}

/// Pointwise A^T / det A.
inline CoefficientField conjugate_matrix(const CoefficientField& field) {
  auto xs = field.grid();
  xs.push_back(field.lo() - 1.0);
  xs.push_back(field.hi() + 1.0);
  for (double x : xs)
    if (std::abs(field(x).determinant()) < 1e-12)
      throw CoefficientError("near-singular determinant at x = " + std::to_string(x));
  return field.map([](const Mat2c& a) -> Mat2c { return a.transpose() / a.determinant(); });
}

inline Mat2c b6(const CoefficientField& field, double x) {
  if (!std::isfinite(x)) throw CoefficientError("b6 evaluated at non-finite x");
  const Mat2c a = field(x);
  Mat2c b;
  b << a(0, 0), a(1, 0), 0.0, 1.0;
  return b;
}

/// Change of variables J(y, s) = (f(y), s + g(y)) with f' = a11(f),
/// g' = a21(f), sampled on a uniform y grid.
struct Triangularization {
  std::vector<double> y;
  std::vector<double> f;
  std::vector<double> g;
  CoefficientField transformed;

  double f_at(double t) const { return interp(f, t); }
  double g_at(double t) const { return interp(g, t); }

 private:
  double interp(const std::vector<double>& v, double t) const {
    if (t <= y.front()) return v.front() + (t - y.front()) * (v[1] - v[0]) / (y[1] - y[0]);
    if (t >= y.back()) {
      const auto n = y.size();
      return v.back() + (t - y.back()) * (v[n - 1] - v[n - 2]) / (y[n - 1] - y[n - 2]);
    }
    auto it = std::upper_bound(y.begin(), y.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - y.begin()) - 1;
    const double w = (t - y[k]) / (y[k + 1] - y[k]);
    return (1 - w) * v[k] + w * v[k + 1];
  }
};

inline Triangularization triangularize(const CoefficientField& a0, int steps = 4000) {
  if (!a0.is_real()) throw CoefficientError("triangularize needs a real field");
  auto a = [&a0](double x) -> Mat2 { return a0(x).real(); };
  // cover f^{-1}([lo-1, hi+1]) : the y-range of x in that window
  const double xlo = a0.is_constant() ? -1.0 : a0.lo() - 1.0;
  const double xhi = a0.is_constant() ? 1.0 : a0.hi() + 1.0;
  auto y_of_x = [&](double x) {
    // integral_0^x ds / a11(s), Simpson with 2000 intervals
    const int m = 2000;
    const double h = x / m;
    double acc = 0.0;
    for (int i = 0; i <= m; ++i) {
      const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w / a(i * h)(0, 0);
    }
    return acc * h / 3.0;
  };
  const double ylo = y_of_x(xlo), yhi = y_of_x(xhi);
  if (!std::isfinite(ylo) || !std::isfinite(yhi)) throw CoefficientError("triangularize: non-finite profile");

  Triangularization t;
  t.y.resize(steps + 1);
  t.f.resize(steps + 1);
  t.g.resize(steps + 1);
  const double h = (yhi - ylo) / steps;
  // integrate from y = 0 outward in both directions (f(0) = 0, g(0) = 0)
  const int i0 = static_cast<int>(std::lround(-ylo / h));
  for (int i = 0; i <= steps; ++i) t.y[i] = (i - i0) * h;  // y = 0 sits on node i0
  auto rhs = [&](double fv) { return std::array<double, 2>{a(fv)(0, 0), a(fv)(1, 0)}; };
  auto sweep = [&](int dir) {
    double fv = 0.0, gv = 0.0;
    t.f[i0] = 0.0;
    t.g[i0] = 0.0;
    const double hh = dir * h;
    for (int i = i0; dir > 0 ? i < steps : i > 0; i += dir) {
      const auto k1 = rhs(fv);
      const auto k2 = rhs(fv + 0.5 * hh * k1[0]);
      const auto k3 = rhs(fv + 0.5 * hh * k2[0]);
      const auto k4 = rhs(fv + hh * k3[0]);
      fv += hh / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
      gv += hh / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
      if (!std::isfinite(fv) || !std::isfinite(gv)) throw CoefficientError("triangularize: ODE integration failed");
      t.f[i + dir] = fv;
      t.g[i + dir] = gv;
    }
  };
  sweep(+1);
  sweep(-1);
  std::vector<Mat2c> samples(t.y.size());
  for (std::size_t i = 0; i < t.y.size(); ++i) {
    const Mat2 m = a(t.f[i]);
    Mat2 c;
    c << 1.0, m(0, 1) - m(1, 0), 0.0, m.determinant();
    samples[i] = c.cast<cplx>();
  }
  t.transformed = a0.is_constant() ? CoefficientField::constant(samples[0]) : CoefficientField::sampled(t.y, samples);
  return t;
}

/// Inverse of the triangularization at grid node i: rebuilds A0(f(y_i))
/// from the transformed matrix with f', g' taken from the sampled maps by a
/// five-point stencil.
inline Mat2 untriangularize(const Triangularization& t, std::size_t i) {
  if (i < 2 || i + 2 >= t.y.size()) throw CoefficientError("untriangularize: node too close to the grid end");
  const double h = t.y[i + 1] - t.y[i];
  auto d = [&](const std::vector<double>& v) {
    return (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h);
  };
  const double fp = d(t.f), gp = d(t.g);
  Mat2 m, n;
  m << 1.0, 0.0, -gp, fp;
  n << 1.0, -gp, 0.0, fp;
  return fp * m.inverse() * t.transformed(t.y[i]).real() * n.inverse();
}

}  // namespace layerpot

#endif  // LAYERPOT_COEFFICIENTS_HPP
