#ifndef LAYERPOT_COMMON_HPP
#define LAYERPOT_COMMON_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace layerpot {

using cplx = std::complex<double>;
using Vec2 = Eigen::Vector2d;
using CVec2 = Eigen::Vector2cd;
using Mat2 = Eigen::Matrix2d;
using Mat2c = Eigen::Matrix2cd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I_unit{0.0, 1.0};

/// 1 / z without the libgcc special-value handling of complex division.
inline cplx inverse(cplx z) { return std::conj(z) / std::norm(z); }

// Error kinds. Every failure the library signals is one of these.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class GeometryError : public Error {
 public:
  using Error::Error;
};
class CoefficientError : public Error {
 public:
  using Error::Error;
};
class ResolutionError : public Error {
 public:
  using Error::Error;
};
class ConvergenceError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Counter-clockwise quarter turn.
inline Vec2 rot90(const Vec2& v) { return {-v.y(), v.x()}; }
inline CVec2 rot90(const CVec2& v) { return {-v.y(), v.x()}; }

/// Matrix [[0,-1],[1,0]], the same quarter turn as rot90.
inline Mat2 rot90_matrix() {
  Mat2 r;
  r << 0.0, -1.0, 1.0, 0.0;
  return r;
}

/// Bilinear (non-conjugated) product of a real and a complex 2-vector.
inline cplx dot(const Vec2& a, const CVec2& b) { return a.x() * b.x() + a.y() * b.y(); }

inline CVec2 to_complex(const Vec2& v) { return v.cast<cplx>(); }

inline bool finite(const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

inline bool finite(const CVec2& v) { return finite(v.x()) && finite(v.y()); }

}  // namespace layerpot

#endif  // LAYERPOT_COMMON_HPP
