// Common numeric aliases and small value types shared by every module.
//
// Units throughout the library: hbar = c = 1, lengths in lattice periods a,
// frequencies and wavevectors in units of 1/a.  The CLI is the only place
// that converts to SI.
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace chiralcasimir {

using cplx = std::complex<double>;

using Vec3 = Eigen::Vector3d;
using CVec3 = Eigen::Vector3cd;
using Mat3 = Eigen::Matrix3d;
using MatX = Eigen::MatrixXd;
using CMatX = Eigen::MatrixXcd;
using CVecX = Eigen::VectorXcd;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

/// Transverse (in-plane) wavevector, units 1/a.
struct Wavevector2 {
  double x = 0.0;
  double y = 0.0;

  Wavevector2 operator+(const Wavevector2& o) const { return {x + o.x, y + o.y}; }
  Wavevector2 operator-(const Wavevector2& o) const { return {x - o.x, y - o.y}; }
  double norm() const { return std::hypot(x, y); }
};

/// Transverse displacement (dx, dy), units a.
struct Shift2 {
  double x = 0.0;
  double y = 0.0;
};

enum class Polarization { s = 0, p = 1 };

/// Propagation direction of an evanescent planewave on the imaginary axis.
/// up: amplitude ~ exp(-kappa z); down: amplitude ~ exp(+kappa z).
enum class Direction { up, down };

inline int sign_of(Direction d) { return d == Direction::up ? 1 : -1; }
inline Direction opposite(Direction d) {
  return d == Direction::up ? Direction::down : Direction::up;
}

/// Multipole type: magnetic (M) or electric (E).
enum class MultipoleKind { M = 0, E = 1 };

/// Thrown for malformed configuration, schema or parameter-domain errors.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a numerical tolerance cannot be met.
class ToleranceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chiralcasimir
