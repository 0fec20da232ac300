// Particle-level scattering: the analytic omega-particle point scatterer,
// T-matrices in the library's multipole convention, T-matrix files, and
// rotation / mirror transforms.
#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "chiralcasimir/types.hpp"
#include "chiralcasimir/wavebasis.hpp"

namespace chiralcasimir::scatterers {

/// Single-resonance omega particle.  Strengths are rationalized volume
/// polarizabilities in units of a^3 (p = alpha E).
struct OmegaParticleParams {
  double A_e = 0.02;
  double A_m = 0.01;
  double A_c = 0.012;
  double A_s = 0.005;
  double omega0 = 3.0;
  double t_perp = 0.3;
  Vec3 axis = Vec3::UnitZ();
  int handedness = +1;

  /// Throws ConfigError on A_e, A_m, omega0 <= 0, A_s < 0,
  /// A_c^2 > A_e A_m, t_perp outside [0, 1], |handedness| != 1, zero axis.
  void validate() const;
};

/// Dipole polarizability blocks:  p = ee E + em H,  m = me E + mm H.
struct Polarizability {
  Mat3 ee = Mat3::Zero();
  Mat3 em = Mat3::Zero();
  Mat3 me = Mat3::Zero();
  Mat3 mm = Mat3::Zero();
};

Polarizability omega_polarizability(const OmegaParticleParams& params, double xi);

/// Multipole T-matrix at one imaginary frequency.  Index layout is
/// wavebasis::multipole_index; outgoing amplitudes = T * regular amplitudes.
class TMatrix {
 public:
  TMatrix() = default;
  TMatrix(double xi, int l_max, MatX entries);
  static TMatrix zero(double xi, int l_max);

  double xi() const { return xi_; }
  int l_max() const { return l_max_; }
  int dimension() const { return static_cast<int>(entries_.rows()); }
  const MatX& entries() const { return entries_; }

  /// Copy embedded into (or truncated to) a different l_max.
  TMatrix resized(int l_max) const;

 private:
  double xi_ = 0.0;
  int l_max_ = 1;
  MatX entries_;
};

/// l = 1 T-matrix of a point scatterer: T = xi^3 * alpha, with Cartesian
/// components in (y, z, x) order inside each dipole block.
TMatrix tmatrix_from_polarizability(const Polarizability& alpha, double xi);

/// Inverse of tmatrix_from_polarizability on the l = 1 block.
Polarizability polarizability_from_tmatrix(const TMatrix& t);

/// Block-diagonal real rotation operator acting on multipole amplitudes.
MatX rotation_operator(int l_max, const wavebasis::Rotation& r);
/// Diagonal mirror operator (polar E-type, axial M-type amplitudes).
MatX mirror_operator(int l_max, wavebasis::MirrorPlane plane);

/// T' = D T D^T.
TMatrix rotate_tmatrix(const TMatrix& t, const wavebasis::Rotation& r);
/// T' = M T M; flips the handedness of a chiral particle.
TMatrix mirror_tmatrix(const TMatrix& t, wavebasis::MirrorPlane plane);

/// max |T^T - S T S| / max |T| with S = diag(-1 on M, +1 on E); zero for a
/// reciprocal scatterer.
double reciprocity_defect(const TMatrix& t);

struct LoadOptions {
  double realness_tolerance = 1e-9;
  bool check_reciprocity = false;
  double reciprocity_tolerance = 1e-8;
};

/// Reads a T-matrix JSON file.  Throws ConfigError with a field diagnostic.
TMatrix load_tmatrix(const std::filesystem::path& path, const LoadOptions& opts = {});
TMatrix parse_tmatrix(const std::string& json_text, const LoadOptions& opts = {});
void save_tmatrix(const TMatrix& t, const std::filesystem::path& path);
std::string serialize_tmatrix(const TMatrix& t);

// ---------------------------------------------------------------------------
// Particle models: T(xi) as a function of imaginary frequency.

class ParticleModel {
 public:
  virtual ~ParticleModel() = default;
  virtual TMatrix tmatrix(double xi) const = 0;
  virtual int l_max() const = 0;
};

class OmegaParticleModel final : public ParticleModel {
 public:
  explicit OmegaParticleModel(OmegaParticleParams params);
  TMatrix tmatrix(double xi) const override;
  int l_max() const override { return 1; }
  const OmegaParticleParams& params() const { return params_; }

 private:
  OmegaParticleParams params_;
};

/// T-matrices tabulated at several frequencies.  Each entry of T / xi^3 is
/// interpolated with a monotone cubic in xi; outside the table the nearest
/// sample is scaled by (xi / xi_edge)^3.
class TabulatedParticleModel final : public ParticleModel {
 public:
  explicit TabulatedParticleModel(std::vector<TMatrix> samples);
  TMatrix tmatrix(double xi) const override;
  int l_max() const override { return l_max_; }

 private:
  std::vector<TMatrix> samples_;
  std::vector<MatX> slopes_;
  int l_max_ = 1;
};

}  // namespace chiralcasimir::scatterers
