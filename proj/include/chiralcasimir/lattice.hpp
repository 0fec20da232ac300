// Unit cells of placed particles, their 2D-periodic planewave reflection
// matrices in the dilute approximation, semi-infinite stacking and
// transverse displacement.
//
// Geometry: particle positions live in the unit cube [0,1)^3.  A body that
// reflects upward (the lower body) occupies z < 0 with its first cell at
// z - 1; a body that reflects downward (the upper body) occupies z > 0 with
// its first cell at z.  Planewave amplitudes refer to the plane z = 0 of
// the body's own frame.
#pragma once

#include <memory>
#include <vector>

#include "chiralcasimir/scatterers.hpp"
#include "chiralcasimir/types.hpp"
#include "chiralcasimir/wavebasis.hpp"

namespace chiralcasimir::lattice {

/// A particle model placed in the cell.  The orientation maps body-frame
/// vectors to cell-frame vectors; it may be improper (a mirror image).
struct PlacedParticle {
  std::shared_ptr<const scatterers::ParticleModel> model;
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();
};

struct UnitCell {
  std::vector<PlacedParticle> particles;

  /// Largest multipole order among the particles (1 for an empty cell).
  int l_max() const;
};

/// Twelve omega particles: three orientations (axes x, y, z) times four
/// sites, arranged so the lattice is invariant under the cubic rotations
/// and the coordinate mirrors.  Sites (z-axis particles) are
/// (1/4,1/4), (3/4,1/4), (3/4,3/4), (1/4,3/4) at height 1/8; the x- and
/// y-axis quartets are their images under the cyclic map (x,y,z) -> (z,x,y)
/// before the height offset.
UnitCell standard_omega_cell(int handedness, scatterers::OmegaParticleParams base = {});

/// Mirror image of the cell through a coordinate plane of the cell frame;
/// positions wrap back into [0,1)^3.
UnitCell mirror_cell(const UnitCell& cell, wavebasis::MirrorPlane plane);

/// Rotate positions and orientations about the origin; positions wrap
/// back into [0,1)^3.  Only lattice-preserving rotations keep the period.
UnitCell rotate_cell(const UnitCell& cell, const wavebasis::Rotation& r);

/// Rigid translation of the cell contents, wrapped into [0,1)^3.
UnitCell translate_cell(const UnitCell& cell, const Vec3& shift);

/// T-matrix of a placed particle in the cell frame.
scatterers::TMatrix placed_tmatrix(const PlacedParticle& p, double xi, int l_max);

/// Per-frequency cache of the cell-frame T-matrices.
class FrequencyCell {
 public:
  /// l_max = 0 uses the cell's natural order.
  FrequencyCell(const UnitCell& cell, double xi, int l_max = 0);

  double xi() const { return xi_; }
  int l_max() const { return l_max_; }
  std::size_t size() const { return positions_.size(); }
  const Vec3& position(std::size_t i) const { return positions_[i]; }
  const MatX& tmatrix(std::size_t i) const { return tmatrices_[i]; }

 private:
  double xi_;
  int l_max_;
  std::vector<Vec3> positions_;
  std::vector<MatX> tmatrices_;
};

/// Reflection operator indexed by (G, polarization), entry 2*g + P.
struct ReflectionMatrix {
  double xi = 0.0;
  Wavevector2 k;
  wavebasis::GSet gset;
  Direction out = Direction::up;
  CMatX m;
};

/// Dilute single-layer reflection: incident waves travel opposite to `out`,
/// reflected waves travel along `out`.  Lattice normalization 1/a^2.
ReflectionMatrix cell_reflection(const FrequencyCell& cell, Wavevector2 k,
                                 const wavebasis::GSet& gset, Direction out);
ReflectionMatrix cell_reflection(const UnitCell& cell, double xi, Wavevector2 k,
                                 const wavebasis::GSet& gset, Direction out, int l_max = 0);

/// Closed-form sum over all layers n = 0, 1, ... spaced by a = 1:
/// R(G,G') / (1 - exp(-(kappa_G + kappa_G'))).
ReflectionMatrix stack_semi_infinite(const ReflectionMatrix& r);

/// Explicit sum over the first n_layers layers.
ReflectionMatrix stack_layers(const ReflectionMatrix& r, int n_layers);

/// Reflection of the same body rigidly translated by (dx, dy):
/// entries times exp(-i (G - G') . shift).
ReflectionMatrix displace_transverse(const ReflectionMatrix& r, Shift2 shift);

}  // namespace chiralcasimir::lattice
