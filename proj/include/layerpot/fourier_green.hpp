#ifndef LAYERPOT_FOURIER_GREEN_HPP
#define LAYERPOT_FOURIER_GREEN_HPP

// Fundamental solution for x-dependent coefficients by partial Fourier
// transform in the translation-invariant coordinate t. For each frequency xi
// the transform g(y; x0, xi) solves
//   (a11 g')' + i xi (a12 g)' + i xi a21 g' - xi^2 a22 g = delta(y - x0).
// With q = a11 g' + i xi a12 g the system [g; q]' = M [g; q] is swept once per
// frequency from each end of the coefficient window, storing the Riccati
// ratios rho = q/g of the decaying solutions and their log-amplitudes; these
// tables do not depend on the pole.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>

namespace layerpot {

struct FourierParams {
  double xi_min = 1e-7;
  double xi_max = 320.0;
  double panel_ratio = 2.5;
  int panel_order = 12;
  double h_max = 0.02;      // largest table cell
  double step_scale = 1.0;  // cells satisfy h |xi| <= step_scale
  double filon_phase = 6.0;
  double skip_tol = 1e-15;
  bool use_cache = true;

  std::string key() const {
    std::ostringstream os;
    os.precision(17);
    os << xi_min << ',' << xi_max << ',' << panel_ratio << ',' << panel_order << ',' << h_max << ',' << step_scale;
    return os.str();
  }
};

namespace fourier {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Coefficients of M / xi-powers: M = [[xi m11, m12], [xi^2 m21, xi m22]].
struct MCoef {
  cplx m11, m12, m21, m22;
  MCoef() = default;
  explicit MCoef(const Mat2c& a) {
    m11 = -I_unit * a(0, 1) / a(0, 0);
    m12 = 1.0 / a(0, 0);
    m21 = a.determinant() / a(0, 0);
    m22 = -I_unit * a(1, 0) / a(0, 0);
  }
  Mat2c at(double xi) const {
    Mat2c m;
    m << xi * m11, m12, xi * xi * m21, xi * m22;
    return m;
  }
  cplx drho(double xi, cplx rho) const { return xi * xi * m21 + xi * (m22 - m11) * rho - m12 * rho * rho; }
  cplx dlog(double xi, cplx rho) const { return xi * m11 + m12 * rho; }
};

/// One projective step of [g; q] by exp(omega), tracking rho = q/g and the
/// increment of log g without overflow.
inline void projective_step(const Mat2c& omega, cplx& rho, cplx& dlog) {
  const cplx tau = 0.5 * (omega(0, 0) + omega(1, 1));
  const cplx d11 = omega(0, 0) - tau, d12 = omega(0, 1), d21 = omega(1, 0), d22 = omega(1, 1) - tau;
  cplx delta = std::sqrt(d11 * d11 + d12 * d21);
  if (delta.real() < 0.0) delta = -delta;
  const cplx e = std::exp(-2.0 * delta);
  const cplx ch = 0.5 * (1.0 + e);
  cplx sh;  // (1 - e^{-2 delta}) / (2 delta)
  if (std::abs(delta) < 1e-3) {
    const cplx d2 = delta * delta;
    sh = 1.0 - delta + (2.0 / 3.0) * d2 - (1.0 / 3.0) * d2 * delta + (2.0 / 15.0) * d2 * d2;
  } else {
    sh = (1.0 - e) / (2.0 * delta);
  }
  const cplx v0 = ch + sh * (d11 + d12 * rho);
  const cplx v1 = ch * rho + sh * (d21 + d22 * rho);
  dlog = tau + delta + std::log(v0);
  rho = v1 / v0;
}

/// Fourth-order Magnus exponent for the step from x to x + h with the
/// coefficient matrices at the two Gauss points, in order of traversal.
inline Mat2c magnus(const Mat2c& m1, const Mat2c& m2, double h) {
  return 0.5 * h * (m1 + m2) + (std::sqrt(3.0) / 12.0) * h * h * (m2 * m1 - m1 * m2);
}

struct Level {
  std::vector<double> x;             // nodes
  std::vector<MCoef> gauss1, gauss2;  // per cell, at x_c + c1 h and x_c + c2 h
  std::vector<MCoef> left, right;     // per cell, just inside each end
};

struct Table {
  int level = 0;
  std::vector<cplx> rho_p, log_p, rho_m, log_m;
};

struct Locator {
  int cell = -1;  // -1 left of the window, -2 right of it
  double theta = 0.0;
  double h = 0.0;
};

}  // namespace fourier

class FourierGreen final : public GreenEvaluator {
 public:
  FourierGreen(FieldPtr f, FourierParams params = {}, bool build_transposed_lazily = true)
      : params_(params), lazy_(build_transposed_lazily) {
    field_ = std::move(f);
    if (params_.xi_max <= params_.xi_min || params_.panel_ratio <= 1.0)
      throw ConfigError("invalid Fourier frequency grid");
    setup_ends();
    setup_xi_grid();
    setup_levels();
    if (!load_cache()) {
      build_tables();
      save_cache();
    }
  }

  GreenRoute route() const override { return GreenRoute::FourierODE; }

  std::shared_ptr<const GreenEvaluator> transposed() const override {
    if (field_->is_symmetric()) return shared_from_this();
    std::call_once(tflag_, [this] {
      transposed_ = std::make_shared<FourierGreen>(std::make_shared<const CoefficientField>(field_->transposed()), params_);
    });
    return transposed_;
  }

  double tolerance() const override { return 1e-6; }

  const FourierParams& params() const { return params_; }
  std::size_t frequency_count() const { return xi_.size(); }
  double window_lo() const { return xa_; }
  double window_hi() const { return xb_; }

  /// The small-frequency coefficients c_+ and c_- (g ~ -c/|xi|).
  cplx c_plus() const { return c_end_[0]; }
  cplx c_minus() const { return c_end_[1]; }

  /// Transform g(y; x0, xi) and dg/dy at one frequency (diagnostics).
  std::pair<cplx, cplx> transform(double y, double x0, double xi) const {
    const auto tab = solve_single(xi);
    auto [rp0, lp0] = lookup(tab, true, x0, xi);
    auto [rm0, lm0] = lookup(tab, false, x0, xi);
    const bool up = y >= x0;
    auto [ry, ly] = lookup(tab, up, y, xi);
    const cplx g = std::exp(ly - (up ? lp0 : lm0)) / (rp0 - rm0);
    const fourier::MCoef my((*field_)(y));
    return {g, g * my.dlog(xi, ry)};
  }

  GreenValue eval(const Vec2& x, const Vec2& y, unsigned parts = kAll) const override {
    if ((y - x).norm() == 0.0) throw DataError("Green function evaluated at its pole");
    GreenValue out;
    if (parts & (kValue | kGradY)) {
      const auto own = point_eval(x, y, (parts & kValue) != 0, (parts & kGradY) != 0);
      out.value = own.value;
      out.grad_y = own.grad_y;
    }
    if (parts & kGradX) {
      const auto t = transposed();
      const auto* ft = static_cast<const FourierGreen*>(t.get());
      out.grad_x = ft->point_eval(y, x, false, true).grad_y;
    }
    return out;
  }

 private:
  struct Partial {
    cplx value{0.0, 0.0};
    CVec2 grad_y = CVec2::Zero();
  };

  // ---- setup -------------------------------------------------------------

  void setup_ends() {
    const auto& f = *field_;
    xa_ = f.is_constant() ? 0.0 : f.lo();
    xb_ = f.is_constant() ? 0.0 : f.hi();
    left_form_ = ConstantForm(f.left_end());
    right_form_ = ConstantForm(f.right_end());
    left_coef_ = fourier::MCoef(f.left_end());
    right_coef_ = fourier::MCoef(f.right_end());
    for (int sg = 0; sg < 2; ++sg) {
      const double xi = sg == 0 ? 1.0 : -1.0;
      const cplx rp = rho_root(right_form_, xi, true);
      const cplx rm = rho_root(left_form_, xi, false);
      c_end_[sg] = -1.0 / (rp - rm);
    }
    const Mat2c mean = 0.5 * (f.left_end() + f.right_end());
    const Mat2c sbar = 0.5 * (mean + mean.transpose());
    k_ref_ = (c_end_[0] + c_end_[1]) / (4.0 * pi) * std::log(cplx(sbar.inverse()(1, 1)));
  }

  static cplx rho_root(const ConstantForm& form, double xi, bool plus) {
    const auto [lp, lm] = form.roots(xi);
    const cplx lam = plus ? lp : lm;
    if (xi != 0.0 && (plus ? lam.real() >= 0.0 : lam.real() <= 0.0))
      throw CoefficientError("frozen-coefficient exponents do not split into decaying pairs");
    return form.a(0, 0) * lam + I_unit * xi * form.a(0, 1);
  }

  void setup_xi_grid() {
    const auto& gl = quad::gauss_legendre(params_.panel_order);
    std::vector<std::pair<double, double>> pos;
    double a = params_.xi_min;
    while (a < params_.xi_max * (1.0 - 1e-12)) {
      double b = std::min(a * params_.panel_ratio, params_.xi_max);
      if (params_.xi_max - b < 0.3 * (b - a)) b = params_.xi_max;
      pos.emplace_back(a, b);
      a = b;
    }
    for (int sg = 0; sg < 2; ++sg) {
      for (const auto& [lo, hi] : pos) {
        Panel p;
        p.a = sg == 0 ? lo : -hi;
        p.b = sg == 0 ? hi : -lo;
        p.first = static_cast<int>(xi_.size());
        for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
          xi_.push_back(0.5 * (p.a + p.b) + 0.5 * (p.b - p.a) * gl.nodes[q]);
          wxi_.push_back(0.5 * (p.b - p.a) * gl.weights[q]);
        }
        panels_.push_back(p);
      }
    }
    for (double xi : xi_) decay_.push_back(std::exp(-std::abs(xi)) / std::abs(xi));
    // Legendre coefficients of the nodal basis: l_j = sum_k leg_(k, j) P_k
    const int n = params_.panel_order;
    leg_ = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < n; ++j) {
      const double u = gl.nodes[j];
      double p0 = 1.0, p1 = u;
      for (int k = 0; k < n; ++k) {
        const double pk = k == 0 ? 1.0 : (k == 1 ? u : ((2.0 * k - 1.0) * u * p1 - (k - 1.0) * p0) / k);
        if (k >= 2) {
          p0 = p1;
          p1 = pk;
        }
        leg_(k, j) = 0.5 * (2.0 * k + 1.0) * gl.weights[j] * pk;
      }
    }
  }

  void setup_levels() {
    if (xb_ <= xa_) {
      levels_.resize(1);
      levels_[0].x = {xa_};
      return;
    }
    std::vector<double> cuts{xa_};
    for (double b : field_->breakpoints())
      if (b > xa_ && b < xb_) cuts.push_back(b);
    cuts.push_back(xb_);
    base_.clear();
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const int n = std::max(1, static_cast<int>(std::ceil((cuts[k + 1] - cuts[k]) / params_.h_max)));
      for (int i = 0; i < n; ++i) base_.push_back(cuts[k] + (cuts[k + 1] - cuts[k]) * i / n);
    }
    base_.push_back(xb_);
    double hb = 0.0;
    for (std::size_t i = 0; i + 1 < base_.size(); ++i) hb = std::max(hb, base_[i + 1] - base_[i]);
    base_h_ = hb;
    const int max_level =
        std::max(0, static_cast<int>(std::ceil(std::log2(hb * params_.xi_max / params_.step_scale))));
    levels_.resize(max_level + 1);
    const double c1 = 0.5 - std::sqrt(3.0) / 6.0, c2 = 0.5 + std::sqrt(3.0) / 6.0;
    for (int l = 0; l <= max_level; ++l) {
      auto& lv = levels_[l];
      const int sub = 1 << l;
      for (std::size_t i = 0; i + 1 < base_.size(); ++i)
        for (int j = 0; j < sub; ++j) lv.x.push_back(base_[i] + (base_[i + 1] - base_[i]) * j / sub);
      lv.x.push_back(xb_);
      const std::size_t cells = lv.x.size() - 1;
      lv.gauss1.resize(cells);
      lv.gauss2.resize(cells);
      lv.left.resize(cells);
      lv.right.resize(cells);
      for (std::size_t c = 0; c < cells; ++c) {
        const double x0 = lv.x[c], x1 = lv.x[c + 1], h = x1 - x0;
        lv.gauss1[c] = fourier::MCoef((*field_)(x0 + c1 * h));
        lv.gauss2[c] = fourier::MCoef((*field_)(x0 + c2 * h));
        lv.left[c] = fourier::MCoef((*field_)(x0 + 1e-9 * h));
        lv.right[c] = fourier::MCoef((*field_)(x1 - 1e-9 * h));
      }
    }
  }

  int level_for(double xi) const {
    if (levels_.size() <= 1) return 0;
    const double need = base_h_ * std::abs(xi) / params_.step_scale;
    const int l = need <= 1.0 ? 0 : static_cast<int>(std::ceil(std::log2(need)));
    return std::min<int>(l, static_cast<int>(levels_.size()) - 1);
  }

  fourier::Table solve_single(double xi) const {
    fourier::Table t;
    t.level = level_for(xi);
    const auto& lv = levels_[t.level];
    const std::size_t n = lv.x.size();
    t.rho_p.resize(n);
    t.log_p.resize(n);
    t.rho_m.resize(n);
    t.log_m.resize(n);
    // decaying-to-the-right solution, swept leftwards from xb
    cplx rho = rho_root(right_form_, xi, true), lg = 0.0;
    t.rho_p[n - 1] = rho;
    t.log_p[n - 1] = lg;
    for (std::size_t c = n - 1; c-- > 0;) {
      const double h = lv.x[c] - lv.x[c + 1];
      const Mat2c om = fourier::magnus(lv.gauss2[c].at(xi), lv.gauss1[c].at(xi), h);
      cplx dl;
      fourier::projective_step(om, rho, dl);
      lg += dl;
      t.rho_p[c] = rho;
      t.log_p[c] = lg;
    }
    rho = rho_root(left_form_, xi, false);
    lg = 0.0;
    t.rho_m[0] = rho;
    t.log_m[0] = lg;
    for (std::size_t c = 0; c + 1 < n; ++c) {
      const double h = lv.x[c + 1] - lv.x[c];
      const Mat2c om = fourier::magnus(lv.gauss1[c].at(xi), lv.gauss2[c].at(xi), h);
      cplx dl;
      fourier::projective_step(om, rho, dl);
      lg += dl;
      t.rho_m[c + 1] = rho;
      t.log_m[c + 1] = lg;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!finite(t.rho_p[i]) || !finite(t.rho_m[i]) || !finite(t.log_p[i]) || !finite(t.log_m[i]))
        throw ConvergenceError("Riccati sweep produced non-finite values at xi = " + std::to_string(xi));
    return t;
  }

  void build_tables() {
    tables_.resize(xi_.size());
    for (std::size_t k = 0; k < xi_.size(); ++k) tables_[k] = solve_single(xi_[k]);
  }

  // ---- cache ---------------------------------------------------------------

  std::filesystem::path cache_path() const {
    const char* dir = std::getenv("LAYERPOT_CACHE_DIR");
    if (!params_.use_cache || dir == nullptr || *dir == '\0') return {};
    std::ostringstream os;
    os << "fourier_" << std::hex << std::setw(16) << std::setfill('0')
       << fourier::fnv1a(field_->fingerprint() + "|" + params_.key()) << ".csv";
    return std::filesystem::path(dir) / os.str();
  }

  bool load_cache() {
    const auto path = cache_path();
    if (path.empty() || !std::filesystem::exists(path)) return false;
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line)) return false;
    std::vector<fourier::Table> tabs(xi_.size());
    for (std::size_t k = 0; k < xi_.size(); ++k) {
      tabs[k].level = level_for(xi_[k]);
      const std::size_t n = levels_[tabs[k].level].x.size();
      tabs[k].rho_p.resize(n);
      tabs[k].log_p.resize(n);
      tabs[k].rho_m.resize(n);
      tabs[k].log_m.resize(n);
    }
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string cell;
      std::vector<double> v;
      while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
      if (v.size() != 10) return false;
      const auto k = static_cast<std::size_t>(v[0]);
      const auto i = static_cast<std::size_t>(v[1]);
      if (k >= tabs.size() || i >= tabs[k].rho_p.size()) return false;
      tabs[k].rho_p[i] = {v[2], v[3]};
      tabs[k].log_p[i] = {v[4], v[5]};
      tabs[k].rho_m[i] = {v[6], v[7]};
      tabs[k].log_m[i] = {v[8], v[9]};
      ++rows;
    }
    std::size_t expected = 0;
    for (const auto& t : tabs) expected += t.rho_p.size();
    if (rows != expected) return false;
    tables_ = std::move(tabs);
    return true;
  }

  void save_cache() const {
    const auto path = cache_path();
    if (path.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path);
    if (!out) return;
    out << "xi_index,node,re_rho_p,im_rho_p,re_log_p,im_log_p,re_rho_m,im_rho_m,re_log_m,im_log_m\n";
    out.precision(17);
    for (std::size_t k = 0; k < tables_.size(); ++k) {
      const auto& t = tables_[k];
      for (std::size_t i = 0; i < t.rho_p.size(); ++i)
        out << k << ',' << i << ',' << t.rho_p[i].real() << ',' << t.rho_p[i].imag() << ',' << t.log_p[i].real() << ','
            << t.log_p[i].imag() << ',' << t.rho_m[i].real() << ',' << t.rho_m[i].imag() << ','
            << t.log_m[i].real() << ',' << t.log_m[i].imag() << '\n';
    }
  }

  // ---- lookups ------------------------------------------------------------

  fourier::Locator locate(int level, double y) const {
    fourier::Locator loc;
    if (y < xa_) {
      loc.cell = -1;
      return loc;
    }
    if (y > xb_ || xb_ <= xa_) {
      loc.cell = -2;
      return loc;
    }
    const auto& x = levels_[level].x;
    auto it = std::upper_bound(x.begin(), x.end(), y);
    int c = static_cast<int>(it - x.begin()) - 1;
    c = std::clamp(c, 0, static_cast<int>(x.size()) - 2);
    loc.cell = c;
    loc.h = x[c + 1] - x[c];
    loc.theta = (y - x[c]) / loc.h;
    return loc;
  }

  /// rho and log-amplitude of the decaying-right (plus) or decaying-left
  /// solution at y.
  std::pair<cplx, cplx> lookup(const fourier::Table& t, bool plus, double y, double xi) const {
    return lookup(t, plus, locate(t.level, y), y, xi);
  }

  std::pair<cplx, cplx> lookup(const fourier::Table& t, bool plus, const fourier::Locator& loc, double y,
                               double xi) const {
    const auto& rho = plus ? t.rho_p : t.rho_m;
    const auto& lg = plus ? t.log_p : t.log_m;
    if (loc.cell < 0) {
      // frozen end coefficients: one exact exponential step from the window end
      const bool left = loc.cell == -1;
      const std::size_t i = left ? 0 : rho.size() - 1;
      const double x_end = left ? xa_ : xb_;
      cplx r = rho[i], dl = 0.0;
      const double h = y - x_end;
      if (plus != left) {
        // decaying direction: the stored end value is the frozen root itself
        const auto [lp, lm] = (left ? left_form_ : right_form_).roots(xi);
        return {r, lg[i] + (plus ? lp : lm) * h};
      }
      if (h != 0.0) {
        const Mat2c om = h * (left ? left_coef_ : right_coef_).at(xi);
        fourier::projective_step(om, r, dl);
      }
      return {r, lg[i] + dl};
    }
    const auto& lv = levels_[t.level];
    const int c = loc.cell;
    const double s = loc.theta, h = loc.h;
    const auto& cl = lv.left[c];
    const auto& cr = lv.right[c];
    const cplx r0 = rho[c], r1 = rho[c + 1];
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    const cplx r = h00 * r0 + h10 * h * cl.drho(xi, r0) + h01 * r1 + h11 * h * cr.drho(xi, r1);
    const cplx l = h00 * lg[c] + h10 * h * cl.dlog(xi, r0) + h01 * lg[c + 1] + h11 * h * cr.dlog(xi, r1);
    (void)y;
    return {r, l};
  }

  // ---- evaluation -----------------------------------------------------------

  /// Filon-type weights: integral over the panel of each Lagrange basis
  /// function times exp(i xi s).
  std::vector<cplx> filon_weights(double a, double b, double s) const {
    const int n = params_.panel_order;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const double om = s * half;
    // int_{-1}^{1} P_k(u) e^{i om u} du = 2 i^k j_k(om)
    std::vector<cplx> mom(n);
    cplx ik = 1.0;
    for (int k = 0; k < n; ++k) {
      double jk = std::sph_bessel(static_cast<unsigned>(k), std::abs(om));
      if (om < 0.0 && (k % 2 == 1)) jk = -jk;
      mom[k] = 2.0 * ik * jk;
      ik *= I_unit;
    }
    const cplx ph = half * std::exp(I_unit * mid * s);
    std::vector<cplx> w(n, 0.0);
    for (int j = 0; j < n; ++j) {
      cplx acc = 0.0;
      for (int k = 0; k < n; ++k) acc += leg_(k, j) * mom[k];
      w[j] = ph * acc;
    }
    return w;
  }

  Partial point_eval(const Vec2& pole, const Vec2& pt, bool want_value, bool want_grad) const {
    const double x0 = pole.x(), y = pt.x();
    const double d = y - x0, s = pt.y() - pole.y();
    const Vec2 z = pt - pole;
    const Mat2c a0 = (*field_)(x0), ay = (*field_)(y);
    const ConstantForm loc(a0);
    const cplx det0 = loc.s.determinant();
    auto det_s = [this](double t) {
      const Mat2c m = (*field_)(t);
      return (0.5 * (m + m.transpose())).determinant();
    };
    const cplx dety = det_s(y);
    const cplx ratio = std::pow(det0 / dety, 0.25);
    cplx ratio_d = 0.0;
    if (!field_->is_constant() && y > xa_ && y < xb_) {
      const double hh = 1e-5 * std::max(1.0, std::abs(y));
      const cplx dd = (det_s(y + hh) - det_s(y - hh)) / (2.0 * hh);
      ratio_d = -0.25 * ratio * dd / dety;
    }
    const cplx c_loc = 1.0 / (2.0 * loc.sqrt_det);
    const cplx p_val = loc.value(z);
    const CVec2 p_grad = loc.grad(z);
    const fourier::MCoef my(ay);
    const bool up = y >= x0;
    // effective oscillation rate of the frozen transform
    const double s_eff = s - d * (loc.s(0, 1) / loc.s(0, 0)).real();

    std::vector<fourier::Locator> loc_x(levels_.size()), loc_y(levels_.size());
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      loc_x[l] = locate(static_cast<int>(l), x0);
      loc_y[l] = locate(static_cast<int>(l), y);
    }

    cplx sum_v = 0.0, sum_y = 0.0, sum_t = 0.0;
    const int n = params_.panel_order;
    // frozen roots are linear in xi: lambda = xi rb -+ |xi| rs
    const cplx rb = -I_unit * loc.s(0, 1) / loc.s(0, 0), rs = loc.sqrt_det / loc.s(0, 0);
    const cplx half_inv = -ratio / (2.0 * loc.sqrt_det);
    const cplx cv = c_end_[0] - ratio * c_loc, cv_neg = c_end_[1] - ratio * c_loc;
    const cplx cg = -ratio_d * c_loc;
    std::vector<cplx> fv(n), fy(n), ft(n);
    for (const auto& p : panels_) {
      const double width = p.b - p.a;
      const bool filon = std::abs(s_eff) * width > params_.filon_phase;
      double amp = 0.0;
      for (int j = 0; j < n; ++j) {
        const int k = p.first + j;
        const double xi = xi_[k];
        const auto& tab = tables_[k];
        const auto [rp0, lp0] = lookup(tab, true, loc_x[tab.level], x0, xi);
        const auto [rm0, lm0] = lookup(tab, false, loc_x[tab.level], x0, xi);
        const auto [ry, ly] = lookup(tab, up, loc_y[tab.level], y, xi);
        const cplx g = std::exp(ly - (up ? lp0 : lm0)) * inverse(rp0 - rm0);
        const cplx lam = xi * rb + (up ? -1.0 : 1.0) * std::abs(xi) * rs;
        // ratio times the frozen transform
        const cplx gc = std::exp(lam * d) * (half_inv / std::abs(xi));
        const cplx f = g - gc;
        const double w = wxi_[k];
        if (want_value) sum_v += (w * decay_[k]) * (xi > 0 ? cv : cv_neg);
        if (want_grad) sum_y += (w * decay_[k]) * cg;
        // filon panels carry the residual phase only, the rest the full one
        const cplx rot = std::polar(filon ? 1.0 : w, xi * (filon ? s - s_eff : s));
        fv[j] = f * rot;
        fy[j] = (g * my.dlog(xi, ry) - (ratio_d / ratio) * gc - lam * gc) * rot;
        ft[j] = (I_unit * xi) * fv[j];
      }
      if (!filon) {
        for (int j = 0; j < n; ++j) {
          sum_v += fv[j];
          sum_y += fy[j];
          sum_t += ft[j];
        }
        continue;
      }
      for (int j = 0; j < n; ++j) amp = std::max({amp, std::abs(fv[j]), std::abs(fy[j]), std::abs(ft[j])});
      if (amp * width < params_.skip_tol) continue;
      const auto w = filon_weights(p.a, p.b, s_eff);
      for (int j = 0; j < n; ++j) {
        sum_v += w[j] * fv[j];
        sum_y += w[j] * fy[j];
        sum_t += w[j] * ft[j];
      }
    }
    Partial out;
    if (want_value) out.value = ratio * (p_val - loc.k_log) + k_ref_ + sum_v / (2.0 * pi);
    if (want_grad) {
      out.grad_y.x() = ratio_d * (p_val - loc.k_log) + ratio * p_grad.x() + sum_y / (2.0 * pi);
      out.grad_y.y() = ratio * p_grad.y() + sum_t / (2.0 * pi);
    }
    return out;
  }

  struct Panel {
    double a = 0.0, b = 0.0;
    int first = 0;
  };

  FourierParams params_;
  bool lazy_ = true;
  double xa_ = 0.0, xb_ = 0.0;
  ConstantForm left_form_, right_form_;
  fourier::MCoef left_coef_, right_coef_;
  cplx c_end_[2];
  cplx k_ref_{0.0, 0.0};
  std::vector<double> xi_, wxi_;
  std::vector<Panel> panels_;
  Eigen::MatrixXd leg_;
  std::vector<double> decay_;  // exp(-|xi|) / |xi|
  std::vector<double> base_;
  double base_h_ = 0.0;
  std::vector<fourier::Level> levels_;
  std::vector<fourier::Table> tables_;
  mutable std::once_flag tflag_;
  mutable std::shared_ptr<const GreenEvaluator> transposed_;
};

}  // namespace layerpot

#endif  // LAYERPOT_FOURIER_GREEN_HPP
