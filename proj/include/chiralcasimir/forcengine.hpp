// Casimir energy and force between two 2D-periodic bodies across a gap.
//
// The lower body reflects upward and fills z < 0; the upper body reflects
// downward and fills z > gap.  Per (xi, k) the round trip is
//   M = R_lower X R_upper X,   X = diag(exp(-kappa_G z)),
// and the energy per unit cell (a = 1) is
//   E = 1/(2 pi) Int dxi 1/(2 pi)^2 Int_BZ d^2k  log det(I - M).
// The force is F = dE/dz from the trace formula; F > 0 is attraction and
// E < 0 for attracting bodies.
//
// Two kernels evaluate the same quadrature: an OpenMP kernel that prunes
// negligible diffraction channels and reuses reflection matrices across
// shifts and chirality pairings, and a plain serial reference used in
// tests and benchmarks.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "chiralcasimir/ema.hpp"
#include "chiralcasimir/lattice.hpp"
#include "chiralcasimir/quadrature.hpp"
#include "chiralcasimir/types.hpp"

namespace chiralcasimir::forcengine {

/// One side of the gap: a particle lattice or a homogeneous slab.
struct Body {
  enum class Kind { lattice, slab };

  Kind kind = Kind::lattice;
  lattice::UnitCell cell;
  int layers = 0;  // lattice only; 0 = semi-infinite stack
  std::shared_ptr<const ema::ChiralSlabModel> slab;

  static Body from_cell(lattice::UnitCell cell, int layers = 0);
  static Body from_slab(std::shared_ptr<const ema::ChiralSlabModel> slab);
};

/// Mirror image through the yz plane (lattice) or kappa -> -kappa (slab).
Body mirrored(const Body& body);

enum class Chirality { SC, OC };
const char* to_string(Chirality c);

struct LatticePairConfig {
  Body lower;
  Body upper;
  double z = 2.0;
  Shift2 shift;           // transverse displacement of the upper body
  int l_max = 3;          // caps each particle's natural order
  double g_max = 3.0;     // G-set radius in units of 2 pi / a
  double prune_tol = 1e-12;  // drop channels with exp(-2 (kappa_G - kappa_min) z) below; 0 keeps all
  QuadratureSettings quadrature;

  /// Throws ConfigError unless z > 0, orders >= 4, l_max >= 1, g_max >= 0.
  void validate() const;
};

/// The OC partner: the same configuration with the lower body mirrored.
LatticePairConfig opposite_pairing(const LatticePairConfig& c);

struct ForceResult {
  IntegralResult energy;
  IntegralResult force;
};

enum class Kernel { parallel, serial_reference };

ForceResult casimir(const LatticePairConfig& config, Kernel kernel = Kernel::parallel);
IntegralResult casimir_energy(const LatticePairConfig& config);
IntegralResult casimir_force(const LatticePairConfig& config);

/// Round-trip operator for reflection matrices sharing (xi, k, G-set).
CMatX roundtrip(const lattice::ReflectionMatrix& r_lower, const lattice::ReflectionMatrix& r_upper,
                double z);

/// log det(I - M) and d/dz of it at one (xi, k), full G-set, no pruning.
struct PointValue {
  cplx log_det;
  double dz_log_det;
};
PointValue point_integrand(const LatticePairConfig& config, double xi, Wavevector2 k);

// ---------------------------------------------------------------------------
// Sweeps

enum class Normalization { global, per_chirality };

struct SweepConfig {
  LatticePairConfig base;  // z and shift are overridden by the grids
  std::vector<double> z_grid;
  std::vector<double> x_grid;  // shifts along the lattice x axis
  Normalization normalization = Normalization::global;
};

/// 16 geometric points in [1.5, 6] and 8 even points in [0, 1/2].
std::vector<double> default_z_grid();
std::vector<double> default_x_grid();

struct ForceRow {
  double z = 0.0;
  double x = 0.0;
  Chirality chirality = Chirality::SC;
  IntegralResult force;
  IntegralResult energy;
};

struct SweepSummaryRow {
  double z = 0.0;
  double f_min_sc = 0.0, f_max_sc = 0.0;
  double f_min_oc = 0.0, f_max_oc = 0.0;
  double mean_sc = 0.0, mean_oc = 0.0;  // averages over the x grid
  /// (mean_OC - mean_SC) / F_min with F_min over all x and both pairings
  /// (global), or mean_OC/min_OC - mean_SC/min_SC (per_chirality).
  double rel_diff = 0.0;
  double spread() const;  // largest x-range of either pairing
};

struct SweepResult {
  std::vector<ForceRow> rows;  // z-major, then x, then SC before OC
  std::vector<SweepSummaryRow> summary;
  Normalization normalization = Normalization::global;
  bool all_converged() const;
};

SweepResult sweep_sc_oc(const SweepConfig& config, Kernel kernel = Kernel::parallel);

// ---------------------------------------------------------------------------
// Frequency integrands

/// dF/dxi for the SC and OC pairings of one configuration on a xi list.
struct IntegrandTrace {
  std::vector<double> xi;
  std::vector<double> sc;
  std::vector<double> oc;
  /// xi -> 0 limits, Richardson from xi_min, 2 xi_min, 4 xi_min.
  double zero_limit = 0.0;  // of oc - sc
  double zero_sc = 0.0, zero_oc = 0.0;
  double xi_min = 0.0;

  double difference(std::size_t i) const { return oc[i] - sc[i]; }
  double peak_difference() const;  // max |oc - sc| over the list
};

/// xi list defaults to 40 geometric points in [0.01, 12] / z.  Slab pairs
/// use the radial k-integral of the homogeneous engine.
IntegrandTrace difference_integrand(const LatticePairConfig& config,
                                    std::vector<double> xi = {});

/// dF/dxi of the configuration itself.
std::vector<double> force_integrand(const LatticePairConfig& config, const std::vector<double>& xi);

// ---------------------------------------------------------------------------
// Pairwise Casimir-Polder estimate

struct PairwiseOptions {
  bool periodic = true;      // false: one layer, no lattice images
  double rel_tol = 1e-10;    // layer-sum truncation
  double xi_static = 1e-6;   // frequency used to read static polarizabilities
};

struct PairwiseResult {
  double force = 0.0;   // attraction > 0
  double energy = 0.0;
  double error = 0.0;   // truncation estimate
};

/// Sum of the retarded two-dipole energy -23 a1 a2 / (64 pi^3 r^7) over
/// cross-gap pairs, with each particle's isotropic static electric
/// polarizability.  Per lower unit cell.  Lattice bodies only.
PairwiseResult pairwise_estimator(const LatticePairConfig& config, const PairwiseOptions& opts = {});

// ---------------------------------------------------------------------------
// Effective-medium bridge

/// Specular reflection of a lattice body at G = 0 for waves from above.
ema::ReflectionSource lattice_reflection_source(const Body& body, int l_max = 3);

/// Retrieves (eps, mu, kappa) on a xi grid and returns them as a table.
struct RetrievedTable {
  std::vector<ema::RetrievedParams> rows;
  std::shared_ptr<ema::TabulatedSlab> slab;
};
RetrievedTable retrieve_table(const ema::ReflectionSource& source, const std::vector<double>& xi,
                              const ema::RetrievalOptions& opts = {});

/// 24 geometric points in [0.02, 40].
std::vector<double> default_retrieval_grid();

}  // namespace chiralcasimir::forcengine
