// Homogeneous chiral media on the imaginary frequency axis: half-space
// reflection, the specular Lifshitz energy/force between two half-spaces,
// effective-parameter retrieval from low-|k| reflection data, and
// Clausius-Mossotti homogenization.
//
// Constitutive relations (imaginary axis, all parameters real):
//   D = eps E + kappa H,   B = mu H - kappa E.
// The Beltrami eigenwaves have complex indices sqrt(eps mu) -+ i kappa.
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "chiralcasimir/quadrature.hpp"
#include "chiralcasimir/scatterers.hpp"
#include "chiralcasimir/types.hpp"

namespace chiralcasimir::ema {

using Mat2c = Eigen::Matrix2cd;

struct MediumParams {
  double eps = 1.0;
  double mu = 1.0;
  double kappa = 0.0;
};

/// Material parameters as functions of xi >= 0.
class ChiralSlabModel {
 public:
  virtual ~ChiralSlabModel() = default;
  virtual MediumParams at(double xi) const = 0;
  /// Perfect conductor: reflection fixed at r_ss = -1, r_pp = +1.
  virtual bool ideal_mirror() const { return false; }
};

class IdealMirror final : public ChiralSlabModel {
 public:
  MediumParams at(double) const override { return {}; }
  bool ideal_mirror() const override { return true; }
};

/// Frequency-independent parameters (test fixtures).
class ConstantSlab final : public ChiralSlabModel {
 public:
  explicit ConstantSlab(MediumParams p) : p_(p) {}
  MediumParams at(double) const override { return p_; }

 private:
  MediumParams p_;
};

/// Single-resonance chiral medium:
///   eps = 1 + de w_e^2/(w_e^2 + xi^2)
///   mu  = 1 - dm_s - dm xi^2/(w_m^2 + xi^2)
///   kappa = k0 xi w_c/(w_c^2 + xi^2)
/// so kappa ~ xi and mu - mu(0) ~ -xi^2 at low frequency.
struct LorentzChiralParams {
  double d_eps = 0.1, w_e = 3.0;
  double d_mu_static = 0.005, d_mu = 0.01, w_m = 3.0;
  double k0 = 0.05, w_c = 3.0;
};

class LorentzChiralSlab final : public ChiralSlabModel {
 public:
  explicit LorentzChiralSlab(LorentzChiralParams p) : p_(p) {}
  MediumParams at(double xi) const override;
  const LorentzChiralParams& params() const { return p_; }

 private:
  LorentzChiralParams p_;
};

/// Tabulated parameters, monotone cubic in xi.  Below the table kappa is
/// continued linearly to 0 and eps, mu are held; above it all are held.
class TabulatedSlab final : public ChiralSlabModel {
 public:
  TabulatedSlab(std::vector<double> xi, std::vector<double> eps, std::vector<double> mu,
                std::vector<double> kappa);
  MediumParams at(double xi) const override;

 private:
  std::vector<double> xi_;
  std::vector<std::vector<double>> y_, slope_;
};

/// Reads {"xi": [...], "eps": [...], "mu": [...], "kappa": [...]}.
std::shared_ptr<TabulatedSlab> load_slab_table(const std::filesystem::path& path);

/// Throws ConfigError unless eps, mu > 0 and |kappa| < sqrt(eps mu).
void validate(const MediumParams& p);

/// Reflection matrix [[r_ss, r_sp], [r_ps, r_pp]] of a half-space.  For
/// out = up the medium fills z < 0 and the incident wave travels down; for
/// out = down the medium fills z > 0.  Columns: incident polarization.
Mat2c chiral_fresnel(const MediumParams& p, double xi, Wavevector2 k, Direction out = Direction::up);
Mat2c chiral_fresnel(const ChiralSlabModel& slab, double xi, Wavevector2 k,
                     Direction out = Direction::up);

/// Energy and force per unit area between a lower half-space (z < 0) and an
/// upper one (z > gap).  F > 0 is attraction.
struct EmaResult {
  IntegralResult energy;
  IntegralResult force;
};

EmaResult ema_force(const ChiralSlabModel& lower, const ChiralSlabModel& upper, double z,
                    const QuadratureSettings& q = {});

/// Per-frequency force integrand dF/dxi (the k-integral done), on the given
/// xi nodes.
std::vector<double> ema_force_integrand(const ChiralSlabModel& lower, const ChiralSlabModel& upper,
                                        double z, const std::vector<double>& xi,
                                        const QuadratureSettings& q = {});

/// Slab with the same parameters but kappa -> -kappa (mirror image).
class MirroredSlab final : public ChiralSlabModel {
 public:
  explicit MirroredSlab(std::shared_ptr<const ChiralSlabModel> base) : base_(std::move(base)) {}
  MediumParams at(double xi) const override {
    MediumParams p = base_->at(xi);
    p.kappa = -p.kappa;
    return p;
  }
  bool ideal_mirror() const override { return base_->ideal_mirror(); }

 private:
  std::shared_ptr<const ChiralSlabModel> base_;
};

// ---------------------------------------------------------------------------
// Retrieval

/// Specular reflection [[R_ss, R_sp], [R_ps, R_pp]] of some body at (xi, k),
/// for waves incident from above.
using ReflectionSource = std::function<Mat2c(double xi, Wavevector2 k)>;

struct RetrievalOptions {
  int n_samples = 8;             // total, including one diagonal sample
  double max_k_over_xi = 0.1;    // samples obey |k| < max_k_over_xi * xi
  double newton_tol = 1e-13;
  int max_iterations = 60;
};

struct RetrievedParams {
  double xi = 0.0;
  MediumParams params;
  double residual = 0.0;            // RMS misfit of the quadratic model
  double anisotropy_indicator = 0.0;  // diagonal-sample deviation from the axis fit
};

/// Fits R_ss = a0 + a2 |k|^2 and R_sp = b2 |k|^2 over the samples and
/// inverts (a0, a2, b2) for (eps, mu, kappa) by matching the same fit of
/// chiral_fresnel.  Throws ToleranceError when the fit is rank deficient or
/// the inversion does not converge.
RetrievedParams retrieve_ema(const ReflectionSource& source, double xi,
                             const RetrievalOptions& opts = {});

// ---------------------------------------------------------------------------
// Clausius-Mossotti

/// Isotropic (orientation-averaged) dipole polarizabilities of one particle.
struct IsotropicPolarizability {
  double electric = 0.0;
  double magnetic = 0.0;
  double chiral = 0.0;  // p = electric E + chiral H,  m = -chiral E + magnetic H
};

IsotropicPolarizability isotropic_average(const scatterers::Polarizability& a);

enum class CMMode { full, dilute };

/// (eps, mu, kappa) of n particles per unit volume.  Throws ConfigError
/// when the local-field denominator vanishes.
MediumParams clausius_mossotti(double density, const IsotropicPolarizability& a,
                               CMMode mode = CMMode::full);
/// Inverse of the full map.
IsotropicPolarizability clausius_mossotti_inverse(double density, const MediumParams& p);

/// EMA slab of omega particles at the given density via Clausius-Mossotti.
class OmegaMixtureSlab final : public ChiralSlabModel {
 public:
  OmegaMixtureSlab(scatterers::OmegaParticleParams particle, double density, CMMode mode);
  MediumParams at(double xi) const override;

 private:
  scatterers::OmegaParticleParams particle_;
  double density_;
  CMMode mode_;
};

}  // namespace chiralcasimir::ema
