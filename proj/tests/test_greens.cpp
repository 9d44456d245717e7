#include "layerpot/greens.hpp"

#include <gtest/gtest.h>

#include <random>

#include "fd_oracle.hpp"

using namespace layerpot;

namespace {

Mat2c mat(cplx a, cplx b, cplx c, cplx d) {
  Mat2c m;
  m << a, b, c, d;
  return m;
}

GraphFunction linear_graph(double k) {
  GraphFunction g;
  g.value = [k](double x) { return k * x; };
  g.slope = [k](double) { return k; };
  g.second = [](double) { return 0.0; };
  return g;
}

GraphFunction sine_graph(double amp) {
  GraphFunction g;
  g.value = [amp](double x) { return amp * std::sin(x); };
  g.slope = [amp](double x) { return amp * std::cos(x); };
  g.second = [amp](double x) { return -amp * std::sin(x); };
  return g;
}

// int A grad Gamma_X . grad eta over the plane, eta a bump of radius R centred at X,
// in polar coordinates about the pole so the 1/r singularity is absorbed.
cplx weak_pairing(const GreenEvaluator& ev, const Vec2& x, double R, int panels = 24, int ntheta = 96) {
  auto grad_eta = [&](const Vec2& y) -> Vec2 {
    const double s = (y - x).squaredNorm() / (R * R);
    if (s >= 1.0) return Vec2::Zero();
    const double e = std::exp(-1.0 / (1.0 - s));
    return -e / ((1.0 - s) * (1.0 - s)) * 2.0 * (y - x) / (R * R);
  };
  const auto& gl = quad::gauss_legendre(8);
  cplx acc = 0.0;
  for (int k = 0; k < ntheta; ++k) {
    const double th = 2 * pi * k / ntheta;
    const Vec2 d(std::cos(th), std::sin(th));
    for (int p = 0; p < panels; ++p) {
      const double a = R * p / panels, b = R * (p + 1) / panels;
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double r = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[q];
        const Vec2 y = x + r * d;
        const CVec2 g = ev.eval(x, y, kGradY).grad_y;
        const CVec2 flux = ev.A(y) * g;
        acc += 0.5 * (b - a) * gl.weights[q] * r * (2 * pi / ntheta) * flux.dot(grad_eta(y).cast<cplx>());
      }
    }
  }
  return acc;
}

}  // namespace

TEST(ConstantGreen, IdentityUnitDistance) {
  const auto g = ConstantGreen(Mat2c::Identity()).eval({0, 0}, {1, 0});
  EXPECT_NEAR(std::abs(g.value), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(g.grad_y(0) - 1.0 / (2 * pi)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(g.grad_y(1)), 0.0, 1e-15);
  EXPECT_LT((g.grad_x + g.grad_y).norm(), 1e-15);
}

TEST(ConstantGreen, DistanceEGivesOneOverTwoPi) {
  const Vec2 x(0.3, -0.2);
  const Vec2 y = x + std::exp(1.0) * Vec2(std::cos(0.7), std::sin(0.7));
  EXPECT_NEAR(std::abs(green_constant_value(Mat2c::Identity(), x, y) - 1.0 / (2 * pi)), 0.0, 1e-14);
}

TEST(ConstantGreen, AnisotropicMatchesFiniteDifference) {
  const Mat2c a = mat(4, 0, 0, 1);
  const double value = green_constant_value(a, {0, 0}, {1, 0}).real();
  fd::Profile p{[](double) { return 4.0; }, [](double) { return 1.0; }, 4.0, 1.0};
  const double oracle = fd::green(p, 0.0, 0.0, {{1.0, 0.0}})[0];
  EXPECT_LT(std::abs(value - oracle), 1e-3 * std::max(1.0, std::abs(oracle)));
  EXPECT_NEAR(value, std::log(0.25) / (8 * pi), 1e-14);
}

TEST(ConstantGreen, GradientsMatchCentralDifferences) {
  const Mat2c a = mat(1.2 + 0.05 * I_unit, 0.3, 0.1 * I_unit, 0.9);
  ConstantGreen ev(a);
  const Vec2 x(0.1, 0.4), y(-0.6, 1.1);
  const auto g = ev.eval(x, y);
  const double h = 1e-5;
  for (int j = 0; j < 2; ++j) {
    Vec2 e = Vec2::Zero();
    e[j] = h;
    const cplx dy = (ev.eval(x, y + e).value - ev.eval(x, y - e).value) / (2 * h);
    const cplx dx = (ev.eval(x + e, y).value - ev.eval(x - e, y).value) / (2 * h);
    EXPECT_LT(std::abs(dy - g.grad_y(j)), 1e-8);
    EXPECT_LT(std::abs(dx - g.grad_x(j)), 1e-8);
  }
}

TEST(ConstantGreen, SolvesTheEquationAwayFromThePole) {
  const Mat2c a = mat(1.5, 0.2 + 0.1 * I_unit, -0.3, 0.8);
  ConstantGreen ev(a);
  const Vec2 x(0, 0), y(0.7, -0.4);
  // div A grad Gamma = sum_ij a_ij d_i d_j Gamma, second derivatives from the Hessian
  const Mat2c h = -ev.mixed_hessian(x, y);
  const cplx lap = (a.cwiseProduct(h)).sum();
  EXPECT_LT(std::abs(lap), 1e-12);
}

TEST(ConstantGreen, PoleAndBranchErrors) {
  EXPECT_THROW(ConstantGreen(Mat2c::Identity()).eval({1, 1}, {1, 1}), DataError);
  EXPECT_THROW(ConstantGreen(mat(-1, 0, 0, -1)), CoefficientError);
  EXPECT_THROW(ConstantGreen(mat(1, 0, 0, -1)), CoefficientError);
}

TEST(GraphPullback, FlatGraphIsTheIdentityKernel) {
  GraphPullbackGreen gp(linear_graph(0.0), -4, 4);
  ConstantGreen gi(Mat2c::Identity());
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 20; ++k) {
    const Vec2 x(u(rng), u(rng)), y(u(rng), u(rng));
    const auto a = gp.eval(x, y), b = gi.eval(x, y);
    EXPECT_LT(std::abs(a.value - b.value), 1e-15);
    EXPECT_LT((a.grad_y - b.grad_y).norm(), 1e-15);
    EXPECT_LT((a.grad_x - b.grad_x).norm(), 1e-15);
  }
}

TEST(GraphPullback, LinearGraphValue) {
  GraphPullbackGreen gp(linear_graph(0.5), -4, 4);
  const auto g = gp.eval({0, 1}, {1, 0.5});
  EXPECT_NEAR(std::abs(g.value - std::log(std::sqrt(2.0)) / (2 * pi)), 0.0, 1e-15);
  EXPECT_EQ(gp.route(), GreenRoute::GraphPullback);
}

TEST(GraphPullback, SymmetricUnderSwap) {
  GraphPullbackGreen gp(sine_graph(0.3), -6, 6);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int k = 0; k < 20; ++k) {
    const Vec2 x(u(rng), u(rng)), y(u(rng), u(rng));
    EXPECT_NEAR(std::abs(gp.eval(x, y).value - gp.eval(y, x).value), 0.0, 1e-15);
  }
}

TEST(GraphPullback, GradientsMatchCentralDifferences) {
  GraphPullbackGreen gp(sine_graph(0.3), -6, 6);
  const Vec2 x(0.2, 0.5), y(1.3, -0.4);
  const auto g = gp.eval(x, y);
  const double h = 1e-6;
  for (int j = 0; j < 2; ++j) {
    Vec2 e = Vec2::Zero();
    e[j] = h;
    EXPECT_LT(std::abs((gp.eval(x, y + e).value - gp.eval(x, y - e).value) / (2 * h) - g.grad_y(j)), 1e-8);
    EXPECT_LT(std::abs((gp.eval(x + e, y).value - gp.eval(x - e, y).value) / (2 * h) - g.grad_x(j)), 1e-8);
  }
}

TEST(GraphPullback, WeakFormAgainstABump) {
  GraphPullbackGreen gp(sine_graph(0.3), -6, 6);
  const Vec2 x(0.4, 0.1);
  EXPECT_LT(std::abs(weak_pairing(gp, x, 0.8) + std::exp(-1.0)), 1e-3);
}

TEST(ConstantGreen, WeakFormAgainstABump) {
  ConstantGreen ev(mat(1.3, 0.2 * I_unit, -0.1, 0.9));
  EXPECT_LT(std::abs(weak_pairing(ev, {0.2, -0.3}, 0.5) + std::exp(-1.0)), 1e-3);
}

TEST(ConstantGreen, TransposeSymmetry) {
  ConstantGreen ev(mat(1.3, 0.4 + 0.1 * I_unit, -0.2, 0.9));
  const auto tr = ev.transposed();
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 20; ++k) {
    const Vec2 x(u(rng), u(rng)), y(u(rng), u(rng));
    EXPECT_LT(std::abs(tr->eval(x, y).value - ev.eval(y, x).value), 1e-13);
  }
}

TEST(ConstantGreen, GradientAndMixedHessianDecay) {
  ConstantGreen ev(mat(2.0, 0.3, 0.1, 0.7));
  const Vec2 x(0, 0), d = Vec2(1, 2).normalized();
  double c1 = 0.0, c2 = 0.0, c1_lo = 1e300, c2_lo = 1e300;
  for (int k = -6; k <= 6; ++k) {
    const double r = std::pow(2.0, k);
    const double a = ev.eval(x, x + r * d).grad_y.norm() * r;
    const double b = ev.mixed_hessian(x, x + r * d).norm() * r * r;
    c1 = std::max(c1, a);
    c2 = std::max(c2, b);
    c1_lo = std::min(c1_lo, a);
    c2_lo = std::min(c2_lo, b);
  }
  // homogeneity: the scaled quantities are constant along a ray
  EXPECT_NEAR(c1 / c1_lo, 1.0, 1e-12);
  EXPECT_NEAR(c2 / c2_lo, 1.0, 1e-10);
}

TEST(Conjugate, IdentityIsQuarterTurnOfGradient) {
  ConstantGreen ev(Mat2c::Identity());
  const Vec2 x(0.3, -0.1), y(1.2, 0.8);
  const CVec2 gx = ev.eval(x, y).grad_x;
  EXPECT_LT((conjugate_green_gradient(ev, x, y) - rot90(gx)).norm(), 1e-15);
  // the ray integral reproduces the closed form
  EXPECT_LT((conjugate_green_gradient_path(ev, x, y) - rot90(gx)).norm(), 1e-8);
}

TEST(Conjugate, PathIndependence) {
  ConstantGreen ev(mat(1.4, 0.3, -0.2, 0.8));
  const Vec2 x(0, 0), y(0.9, 0.4);
  const CVec2 a = conjugate_green_gradient_path(ev, x, y, Vec2(1, 0));
  const CVec2 b = conjugate_green_gradient_path(ev, x, y, Vec2(0.6, 0.8));
  const CVec2 c = conjugate_green_gradient_path(ev, x, y, Vec2(-0.2, 1.0));
  EXPECT_LT((a - b).norm(), 1e-6);
  EXPECT_LT((a - c).norm(), 1e-6);
  EXPECT_LT((a - ev.closed_conjugate(x, y)).norm(), 1e-6);
}

TEST(Conjugate, RayThroughThePoleIsRerouted) {
  ConstantGreen ev(Mat2c::Identity());
  const Vec2 x(1, 0), y(0, 0);
  const CVec2 a = conjugate_green_gradient_path(ev, x, y, Vec2(1, 0));
  EXPECT_LT((a - ev.closed_conjugate(x, y)).norm(), 1e-6);
}

TEST(Conjugate, PullbackClosedFormMatchesPath) {
  GraphPullbackGreen gp(sine_graph(0.3), -8, 8);
  const Vec2 x(0.2, 0.3), y(-0.5, 1.1);
  // a vertical ray keeps the path inside the coefficient window
  EXPECT_LT((conjugate_green_gradient_path(gp, x, y, Vec2(0, 1)) - gp.closed_conjugate(x, y)).norm(), 1e-6);
}

TEST(GraphPullback, MixedHessianMatchesDifferences) {
  GraphPullbackGreen gp(sine_graph(0.3), -8, 8);
  const Vec2 x(0.2, 0.3), y(-0.5, 1.1);
  const Mat2c h = gp.mixed_hessian(x, y);
  const double d = 1e-5;
  for (int j = 0; j < 2; ++j) {
    Vec2 e = Vec2::Zero();
    e[j] = d;
    const CVec2 col = (gp.eval(x, y + e, kGradX).grad_x - gp.eval(x, y - e, kGradX).grad_x) / (2 * d);
    EXPECT_LT((col - h.col(j)).norm(), 1e-7);
  }
}

TEST(Conjugate, DecaysLikeOneOverDistance) {
  ConstantGreen ev(mat(1.4, 0.3, -0.2, 0.8));
  const Vec2 x(0, 0), d = Vec2(0.6, -0.8);
  double hi = 0.0, lo = 1e300;
  for (int k = -5; k <= 5; ++k) {
    const double r = std::pow(2.0, k);
    const double v = conjugate_green_gradient(ev, x, x + r * d).norm() * r;
    hi = std::max(hi, v);
    lo = std::min(lo, v);
  }
  EXPECT_LT(hi / lo, 1.0 + 1e-10);
}

TEST(CZProbe, IdentityKernelIsLipschitz) {
  ConstantGreen ev(Mat2c::Identity());
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-1, 1), ang(0, 2 * pi);
  std::vector<CZPair> pairs;
  for (int k = 0; k < 30; ++k) {
    const double th = ang(rng);
    pairs.push_back({Vec2(u(rng), u(rng)), Vec2(u(rng), u(rng)) * 3, Vec2(std::cos(th), std::sin(th))});
  }
  const auto rep = cz_regularity_probe(ev, pairs);
  EXPECT_GE(rep.alpha_x, 0.99);
  EXPECT_GE(rep.alpha_y, 0.99);
  EXPECT_TRUE(std::isfinite(rep.c_x));
  EXPECT_TRUE(rep.monotone);
  EXPECT_GT(rep.samples, 0u);
}

TEST(CZProbe, OneJumpProfile) {
  const auto field = CoefficientField::profile(
      [](double x) -> Mat2c { return Mat2c::Identity() * (x < 0 ? 1.0 : 2.0); }, -2, 2, {0.0});
  const auto ev = make_evaluator(field);
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> u(-1.5, 1.5), ang(0, 2 * pi);
  std::vector<CZPair> pairs;
  while (pairs.size() < 40) {
    const Vec2 x(u(rng), u(rng)), y(u(rng), u(rng));
    if ((x - y).norm() < 0.3) continue;
    const double th = ang(rng);
    pairs.push_back({x, y, Vec2(std::cos(th), std::sin(th))});
  }
  const auto rep = cz_regularity_probe(*ev, pairs, 5);
  EXPECT_GT(rep.alpha_x, 0.0);
  EXPECT_GT(rep.alpha_y, 0.0);
  EXPECT_TRUE(std::isfinite(rep.c_x) && std::isfinite(rep.c_y));
  EXPECT_GT(rep.c_x, 0.0);
}
