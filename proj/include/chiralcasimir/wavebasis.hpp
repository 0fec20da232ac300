// Basis machinery on the imaginary frequency axis: decay constants,
// modified spherical Bessel functions, rotations and Wigner matrices,
// real solid harmonics, and the spherical <-> planewave conversion used to
// turn multipole T-matrices into planewave reflection operators.
//
// See docs/CONVENTIONS.md for the phase and normalization conventions.
#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "chiralcasimir/types.hpp"

namespace chiralcasimir::wavebasis {

/// Identifier written into and checked against T-matrix files.
inline constexpr std::string_view kConventionId =
    "ccas-imag-v1:real-racah-solid-harmonics:grad-projection:outgoing=-1/(2*xi*kz)";

/// kappa_z = sqrt(xi^2 + |k|^2).
double decay_constant(double xi, Wavevector2 k);

/// Modified spherical Bessel functions stored with their exponential
/// behaviour factored out:
///   i_l(x) = i_scaled * exp(+x),   k_l(x) = k_scaled * exp(-x),
/// with i_0(x) = sinh(x)/x and k_0(x) = exp(-x)/x.
struct ModifiedSphericalBessel {
  double x = 0.0;
  double i_scaled = 0.0;
  double k_scaled = 0.0;

  double i() const { return i_scaled * std::exp(x); }
  double k() const { return k_scaled * std::exp(-x); }
};

ModifiedSphericalBessel modified_spherical_bessel(int l, double x);

// ---------------------------------------------------------------------------
// Rotations

/// A proper rotation of R^3 (orthogonal, det = +1), active convention.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}
  /// Throws ConfigError if the matrix is not a proper rotation.
  explicit Rotation(const Mat3& m);

  static Rotation identity() { return Rotation(); }
  static Rotation axis_angle(const Vec3& axis, double angle);
  /// R = Rz(alpha) * Ry(beta) * Rz(gamma).
  static Rotation euler_zyz(double alpha, double beta, double gamma);

  const Mat3& matrix() const { return m_; }
  Vec3 apply(const Vec3& v) const { return m_ * v; }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_, 0); }
  Rotation inverse() const { return Rotation(m_.transpose(), 0); }

  /// Euler angles (alpha, beta, gamma) in the z-y-z convention.
  std::array<double, 3> euler_angles() const;

 private:
  Rotation(const Mat3& m, int) : m_(m) {}
  Mat3 m_;
};

enum class MirrorPlane { xy, yz, zx };

/// Reflection matrix through the given coordinate plane.
Mat3 mirror_matrix(MirrorPlane plane);

/// Wigner small-d matrix d^l_{m'm}(beta), indices (m'+l, m+l).
MatX wigner_small_d(int l, double beta);

/// Complex Wigner matrix D^l_{m'm}(R) = exp(-i m' alpha) d^l_{m'm}(beta)
/// exp(-i m gamma).  Acting on complex spherical harmonics:
///   Y_lm(R^-1 x) = sum_m' Y_lm'(x) D_{m'm}(R).
/// A rotation by phi about z is diagonal with entries exp(-i m phi).
CMatX wigner_rotation(int l, const Rotation& r);

/// The same rotation in the real (tesseral) harmonic basis:
///   S_lm(R^-1 x) = sum_m' S_lm'(x) Dreal_{m'm}(R).
/// Real orthogonal.
MatX real_wigner_rotation(int l, const Rotation& r);

/// Unitary change of basis from complex (Racah, Condon-Shortley) to real
/// solid harmonics: S = U * C, indices m + l.
CMatX complex_to_real_harmonics(int l);

// ---------------------------------------------------------------------------
// Solid harmonics

/// Racah-normalized real regular solid harmonics S_lm and their gradients,
/// evaluated at a complex point (polynomial continuation).  Index l*l + l + m
/// for 0 <= l <= l_max.  S_1,{-1,0,1} = (y, z, x).
struct SolidHarmonics {
  std::vector<cplx> value;
  std::vector<CVec3> gradient;
};

SolidHarmonics real_solid_harmonics(int l_max, const CVec3& v);

/// Diagonal sign of S_lm under a coordinate-plane mirror, index m + l.
std::vector<int> mirror_parity(int l, MirrorPlane plane);

// ---------------------------------------------------------------------------
// Multipole bookkeeping

/// Number of (l, m) pairs with 1 <= l <= l_max.
inline int multipole_count(int l_max) { return l_max * (l_max + 2); }
/// Side of a T-matrix: both multipole kinds.
inline int tmatrix_dimension(int l_max) { return 2 * multipole_count(l_max); }
/// Index of (kind, l, m): all M-type entries first, then E-type.
inline int multipole_index(MultipoleKind kind, int l, int m, int l_max) {
  return static_cast<int>(kind) * multipole_count(l_max) + (l * l - 1) + (l + m);
}

// ---------------------------------------------------------------------------
// Planewaves

/// An evanescent planewave exp(i K . r) with K = (qx, qy, +-i kappa).
/// e and h are the E and H polarization vectors; the triad (s, p, K/(i xi))
/// is orthonormal under the bilinear (unconjugated) dot product.
struct PlanewaveMode {
  double kappa = 0.0;
  CVec3 K;
  CVec3 e;
  CVec3 h;
};

PlanewaveMode planewave_mode(double xi, Wavevector2 q, Polarization pol, Direction dir);

/// Row block (2 x tmatrix_dimension) mapping multipole amplitudes of an
/// outgoing field to planewave amplitudes for waves leaving in `dir`.
/// Rows: s, p.  Planewave amplitudes are per d^2q/(2 pi)^2.
CMatX outgoing_conversion(double xi, Wavevector2 q, Direction dir, int l_max);

/// Column block (tmatrix_dimension x 2) giving the regular multipole
/// content of a unit-amplitude planewave travelling in `dir`.
CMatX incident_conversion(double xi, Wavevector2 q, Direction dir, int l_max);

// ---------------------------------------------------------------------------
// Reciprocal lattice

/// Reciprocal vectors G = 2 pi (nx, ny) of the unit square lattice with
/// |n| <= radius, ordered by |n|^2 then nx then ny.
class GSet {
 public:
  GSet() = default;
  static GSet within(double radius);
  /// Explicit list, kept in the given order.
  static GSet from_indices(std::vector<std::array<int, 2>> n, double radius);

  std::size_t size() const { return n_.size(); }
  const std::array<int, 2>& index(std::size_t i) const { return n_[i]; }
  Wavevector2 vector(std::size_t i) const {
    return {2.0 * pi * n_[i][0], 2.0 * pi * n_[i][1]};
  }
  /// Position of -G in the set, or size() if absent.
  std::size_t negated(std::size_t i) const;
  double radius() const { return radius_; }

 private:
  std::vector<std::array<int, 2>> n_;
  double radius_ = 0.0;
};

/// Diagonal of the planewave translation operator for displacement
/// d = (dx, dy, dz), entry order 2*g + polarization:
///   exp(i (k+G).(dx,dy)) * exp(-kappa_z(k+G) * dz).
CVecX planewave_translation(double xi, Wavevector2 k, const GSet& gset, const Vec3& d);

}  // namespace chiralcasimir::wavebasis
