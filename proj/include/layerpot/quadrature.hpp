#ifndef LAYERPOT_QUADRATURE_HPP
#define LAYERPOT_QUADRATURE_HPP

#include "layerpot/common.hpp"

#include <map>
#include <mutex>

namespace layerpot::quad {

struct Rule {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;  // sum to 2
  std::vector<double> bary;     // barycentric interpolation weights for the nodes
};

namespace detail {

inline Rule compute_gauss_legendre(int n) {
  Rule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = (n == 1) ? x : p1;
      const double pnm1 = (n == 1) ? 1.0 : p0;
      dp = n * (x * pn - pnm1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = (n == 1) ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    r.nodes[n - 1 - i] = x;
    r.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  r.bary.resize(n);
  for (int j = 0; j < n; ++j) {
    double prod = 1.0;
    for (int k = 0; k < n; ++k)
      if (k != j) prod *= (r.nodes[j] - r.nodes[k]);
    r.bary[j] = 1.0 / prod;
  }
  return r;
}

}  // namespace detail

/// Gauss-Legendre rule of order n on [-1, 1]. Rules are cached; the returned
/// reference stays valid for the life of the program.
inline const Rule& gauss_legendre(int n) {
  if (n < 1 || n > 64) throw ConfigError("Gauss-Legendre order must lie in [1, 64]");
  static std::mutex mu;
  static std::map<int, Rule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_legendre(n)).first;
  return it->second;
}

/// Values of the Lagrange basis polynomials of `rule` at u.
inline void lagrange_basis(const Rule& rule, double u, double* out) {
  const auto n = rule.nodes.size();
  for (std::size_t j = 0; j < n; ++j) {
    if (u == rule.nodes[j]) {
      for (std::size_t k = 0; k < n; ++k) out[k] = (k == j) ? 1.0 : 0.0;
      return;
    }
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = rule.bary[j] / (u - rule.nodes[j]);
    denom += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= denom;
}

/// Differentiation matrix D with (D f)_i = p'(u_i), p the interpolant of f.
inline Eigen::MatrixXd differentiation_matrix(const Rule& rule) {
  const auto n = static_cast<Eigen::Index>(rule.nodes.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double diag = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      d(i, j) = (rule.bary[j] / rule.bary[i]) / (rule.nodes[i] - rule.nodes[j]);
      diag -= d(i, j);
    }
    d(i, i) = diag;
  }
  return d;
}

/// Weights c_k with sum_k c_k F(h_k) equal to the value at 0 of the
/// polynomial interpolating F at the distinct abscissae h_k.
inline std::vector<double> extrapolation_weights(const std::vector<double>& h) {
  const auto m = h.size();
  std::vector<double> c(m, 1.0);
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t j = 0; j < m; ++j)
      if (j != k) c[k] *= (0.0 - h[j]) / (h[k] - h[j]);
  return c;
}

}  // namespace layerpot::quad

#endif  // LAYERPOT_QUADRATURE_HPP
