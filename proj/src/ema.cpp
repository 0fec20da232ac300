#include "chiralcasimir/ema.hpp"

#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "chiralcasimir/wavebasis.hpp"
#include "json.hpp"
#include "monotone_cubic.hpp"

namespace chiralcasimir::ema {

namespace {

CVec3 bcross(const CVec3& a, const CVec3& b) {
  return {a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2), a(0) * b(1) - a(1) * b(0)};
}

}  // namespace

MediumParams LorentzChiralSlab::at(double xi) const {
  const auto& p = p_;
  MediumParams m;
  m.eps = 1.0 + p.d_eps * p.w_e * p.w_e / (p.w_e * p.w_e + xi * xi);
  m.mu = 1.0 - p.d_mu_static - p.d_mu * xi * xi / (p.w_m * p.w_m + xi * xi);
  m.kappa = p.k0 * xi * p.w_c / (p.w_c * p.w_c + xi * xi);
  return m;
}

TabulatedSlab::TabulatedSlab(std::vector<double> xi, std::vector<double> eps, std::vector<double> mu,
                             std::vector<double> kappa)
    : xi_(std::move(xi)) {
  const std::size_t n = xi_.size();
  if (n == 0 || eps.size() != n || mu.size() != n || kappa.size() != n)
    throw ConfigError("slab table: xi, eps, mu, kappa must be non-empty and of equal length");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xi_[i] > 0.0)) throw ConfigError("slab table: xi values must be positive");
    if (i > 0 && !(xi_[i] > xi_[i - 1])) throw ConfigError("slab table: xi must increase strictly");
    validate({eps[i], mu[i], kappa[i]});
  }
  y_ = {std::move(eps), std::move(mu), std::move(kappa)};
  for (const auto& y : y_) slope_.push_back(detail::monotone_slopes(xi_, y));
}

MediumParams TabulatedSlab::at(double xi) const {
  if (xi <= xi_.front())
    return {y_[0].front(), y_[1].front(), y_[2].front() * xi / xi_.front()};
  if (xi >= xi_.back()) return {y_[0].back(), y_[1].back(), y_[2].back()};
  return {detail::monotone_eval(xi_, y_[0], slope_[0], xi),
          detail::monotone_eval(xi_, y_[1], slope_[1], xi),
          detail::monotone_eval(xi_, y_[2], slope_[2], xi)};
}

std::shared_ptr<TabulatedSlab> load_slab_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open slab table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto column = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array())
      throw ConfigError(path.string() + ": field '" + key + "' must be an array of numbers");
    std::vector<double> v;
    for (const auto& e : j[key]) {
      if (!e.is_number()) throw ConfigError(path.string() + ": field '" + key + "' must hold numbers");
      v.push_back(e.get<double>());
    }
    return v;
  };
  for (const auto& [key, _] : j.items())
    if (key != "xi" && key != "eps" && key != "mu" && key != "kappa")
      throw ConfigError(path.string() + ": unknown field '" + key + "'");
  return std::make_shared<TabulatedSlab>(column("xi"), column("eps"), column("mu"), column("kappa"));
}

void validate(const MediumParams& p) {
  if (!(p.eps > 0.0) || !(p.mu > 0.0))
    throw ConfigError("medium parameters: eps and mu must be positive");
  if (!(std::abs(p.kappa) < std::sqrt(p.eps * p.mu)))
    throw ConfigError("medium parameters: |kappa| must be below sqrt(eps mu)");
}

// ---------------------------------------------------------------------------
// Half-space reflection from the tangential boundary conditions.

Mat2c chiral_fresnel(const MediumParams& p, double xi, Wavevector2 k, Direction out) {
  validate(p);
  if (!(xi > 0.0)) throw ConfigError("chiral_fresnel: xi must be > 0");
  using wavebasis::planewave_mode;
  const Direction in = opposite(out);
  const double sig = sign_of(in);  // transmitted waves continue along the incident direction
  const double qn = k.norm();
  const double qx = qn > 0.0 ? k.x / qn : 1.0, qy = qn > 0.0 ? k.y / qn : 0.0;
  const CVec3 s_hat(-qy, qx, 0.0);
  const double n = std::sqrt(p.eps * p.mu);
  const cplx imp = I * std::sqrt(p.mu / p.eps);  // i s with s = sqrt(mu/eps)

  // Beltrami eigenwaves Q = E +- i s H with curl Q = lambda Q.
  CVec3 qv[2];
  for (int b = 0; b < 2; ++b) {
    const double pm = b == 0 ? 1.0 : -1.0;
    const cplx lambda = xi * (p.kappa + pm * I * n);
    const cplx gamma = std::sqrt(cplx(qn * qn) - lambda * lambda);
    const CVec3 kvec(k.x, k.y, I * sig * gamma);
    qv[b] = lambda * s_hat + I * bcross(kvec, s_hat);
    qv[b] /= qv[b].cwiseAbs().maxCoeff();
  }

  Eigen::Matrix4cd a;
  Eigen::Matrix<cplx, 4, 2> rhs;
  for (int pol = 0; pol < 2; ++pol) {
    const auto r = planewave_mode(xi, k, static_cast<Polarization>(pol), out);
    const auto inc = planewave_mode(xi, k, static_cast<Polarization>(pol), in);
    for (int c = 0; c < 2; ++c) {
      a(c, pol) = r.e(c);
      a(2 + c, pol) = r.h(c);
      rhs(c, pol) = -inc.e(c);
      rhs(2 + c, pol) = -inc.h(c);
    }
  }
  for (int c = 0; c < 2; ++c) {
    a(c, 2) = -0.5 * qv[0](c);
    a(c, 3) = -0.5 * qv[1](c);
    a(2 + c, 2) = -0.5 * qv[0](c) / imp;
    a(2 + c, 3) = 0.5 * qv[1](c) / imp;
  }
  const Eigen::Matrix<cplx, 4, 2> x = a.partialPivLu().solve(rhs);
  return x.topRows<2>();
}

Mat2c chiral_fresnel(const ChiralSlabModel& slab, double xi, Wavevector2 k, Direction out) {
  if (slab.ideal_mirror()) {
    Mat2c r = Mat2c::Zero();
    r(0, 0) = -1.0;
    r(1, 1) = 1.0;
    return r;
  }
  return chiral_fresnel(slab.at(xi), xi, k, out);
}

// ---------------------------------------------------------------------------
// Specular Lifshitz integral

namespace {

struct Pair {
  double log_det;
  double dz_log_det;
};

Pair specular_integrand(const ChiralSlabModel& lower, const ChiralSlabModel& upper, double z,
                        double xi, double kappa0) {
  const double q = std::sqrt(std::max(0.0, kappa0 * kappa0 - xi * xi));
  const Wavevector2 k{q, 0.0};
  const Mat2c r1 = chiral_fresnel(lower, xi, k, Direction::up);
  const Mat2c r2 = chiral_fresnel(upper, xi, k, Direction::down);
  const double x = std::exp(-2.0 * kappa0 * z);
  const Mat2c m = r2 * r1 * x;
  const Mat2c a = Mat2c::Identity() - m;
  const cplx det = a.determinant();
  const Mat2c s = a.inverse();
  return {std::log(std::abs(det)), (s * m).trace().real() * 2.0 * kappa0};
}

struct Sums {
  double e = 0.0, f = 0.0;
};

Sums integrate_fixed(const ChiralSlabModel& lower, const ChiralSlabModel& upper, double z,
                     int n_xi, int n_r, double xi_scale) {
  const auto xr = quadrature::semi_infinite(n_xi, xi_scale);
  const auto rr = quadrature::semi_infinite(n_r, 0.5 / z);
  Sums s;
  for (std::size_t i = 0; i < xr.size(); ++i) {
    double ei = 0.0, fi = 0.0;
    for (std::size_t j = 0; j < rr.size(); ++j) {
      const double kap = xr.x[i] + rr.x[j];
      const auto v = specular_integrand(lower, upper, z, xr.x[i], kap);
      ei += rr.w[j] * kap * v.log_det;
      fi += rr.w[j] * kap * v.dz_log_det;
    }
    s.e += xr.w[i] * ei;
    s.f += xr.w[i] * fi;
  }
  const double norm = 1.0 / (4.0 * pi * pi);
  s.e *= norm;
  s.f *= norm;
  return s;
}

}  // namespace

EmaResult ema_force(const ChiralSlabModel& lower, const ChiralSlabModel& upper, double z,
                    const QuadratureSettings& q) {
  if (!(z > 0.0)) throw ConfigError("ema_force: separation must be > 0");
  int n_xi = q.xi_order, n_r = q.radial_order;
  const double scale = q.xi_scale_factor / z;
  Sums coarse = integrate_fixed(lower, upper, z, n_xi / 2, n_r / 2, scale);
  for (int level = 0;; ++level) {
    const Sums fine = integrate_fixed(lower, upper, z, n_xi, n_r, scale);
    EmaResult r;
    r.energy = {fine.e, std::abs(fine.e - coarse.e), true};
    r.force = {fine.f, std::abs(fine.f - coarse.f), true};
    const bool ok = r.force.error <= q.rel_tol * std::abs(fine.f) &&
                    r.energy.error <= q.rel_tol * std::abs(fine.e);
    if (ok || level >= q.max_refinements) {
      r.energy.converged = r.force.converged = ok;
      return r;
    }
    coarse = fine;
    n_xi *= 2;
    n_r *= 2;
  }
}

std::vector<double> ema_force_integrand(const ChiralSlabModel& lower, const ChiralSlabModel& upper,
                                        double z, const std::vector<double>& xi,
                                        const QuadratureSettings& q) {
  const auto rr = quadrature::semi_infinite(q.radial_order, 0.5 / z);
  std::vector<double> out;
  for (double x : xi) {
    double f = 0.0;
    for (std::size_t j = 0; j < rr.size(); ++j) {
      const double kap = x + rr.x[j];
      f += rr.w[j] * kap * specular_integrand(lower, upper, z, x, kap).dz_log_det;
    }
    out.push_back(f / (4.0 * pi * pi));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Retrieval

namespace {

struct Coefficients {
  double a0, a2, b2;
  double residual;
  double anisotropy;
};

struct Samples {
  std::vector<Wavevector2> k;
  std::size_t n_axis;
  double qmax;
};

Samples make_samples(double xi, const RetrievalOptions& o) {
  if (o.n_samples < 4) throw ConfigError("retrieve_ema: need at least 4 samples");
  Samples s;
  s.n_axis = static_cast<std::size_t>(o.n_samples - 1);
  s.qmax = o.max_k_over_xi * xi;
  for (std::size_t j = 0; j < s.n_axis; ++j) s.k.push_back({s.qmax * j / s.n_axis, 0.0});
  const double qd = s.qmax * (s.n_axis - 1) / s.n_axis / std::sqrt(2.0);
  s.k.push_back({qd, qd});
  return s;
}

// Least squares of R_ss = a0 + a2 q^2, R_sp = b2 q^2 over the given rows.
Coefficients fit(const std::vector<Mat2c>& r, const Samples& s, std::size_t rows) {
  Eigen::MatrixXd d(rows, 2);
  Eigen::VectorXcd yss(rows), ysp(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double t = (s.k[i].x * s.k[i].x + s.k[i].y * s.k[i].y) / (s.qmax * s.qmax);
    d(i, 0) = 1.0;
    d(i, 1) = t;
    yss(i) = r[i](0, 0);
    ysp(i) = r[i](0, 1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto sv = svd.singularValues();
  if (sv(1) < 1e-10 * sv(0))
    throw ToleranceError("retrieve_ema: rank-deficient fit (k samples too close)");
  const Eigen::VectorXcd css = svd.solve(yss);
  const Eigen::VectorXd col = d.col(1);
  const cplx b2 = col.cast<cplx>().dot(ysp) / col.squaredNorm();
  double res = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    res += std::norm(yss(i) - css(0) - css(1) * d(i, 1));
    res += std::norm(ysp(i) - b2 * d(i, 1));
  }
  Coefficients c;
  c.a0 = css(0).real();
  c.a2 = css(1).real() / (s.qmax * s.qmax);
  c.b2 = b2.real() / (s.qmax * s.qmax);
  c.residual = std::sqrt(res / (2.0 * rows));
  c.anisotropy = 0.0;
  return c;
}

Coefficients full_fit(const ReflectionSource& src, double xi, const Samples& s) {
  std::vector<Mat2c> r;
  for (const auto& k : s.k) r.push_back(src(xi, k));
  Coefficients all = fit(r, s, s.k.size());
  const Coefficients axis = fit(r, s, s.n_axis);
  const auto& kd = s.k.back();
  const double qd2 = kd.x * kd.x + kd.y * kd.y;
  const double pred = axis.a0 + axis.a2 * qd2;
  const double scale = std::max(std::abs(axis.a2) * qd2, 1e-300);
  all.anisotropy = std::abs(r.back()(0, 0).real() - pred) / scale;
  return all;
}

}  // namespace

RetrievedParams retrieve_ema(const ReflectionSource& source, double xi, const RetrievalOptions& opts) {
  if (!(xi > 0.0)) throw ConfigError("retrieve_ema: xi must be > 0");
  const Samples s = make_samples(xi, opts);
  const Coefficients target = full_fit(source, xi, s);

  auto model = [&](const Eigen::Vector3d& th) {
    const MediumParams p{th(0), th(1), th(2)};
    const auto c = full_fit([&](double x, Wavevector2 k) { return chiral_fresnel(p, x, k); }, xi, s);
    return Eigen::Vector3d(c.a0, c.a2 * xi * xi, c.b2 * xi * xi);
  };
  const Eigen::Vector3d goal(target.a0, target.a2 * xi * xi, target.b2 * xi * xi);

  // Start from the impedance implied by normal incidence, r = (Z - 1)/(Z + 1).
  const double z0 = (1.0 + target.a0) / (1.0 - target.a0);
  Eigen::Vector3d th(1.0 / (z0 * z0), 1.0, 0.0);
  if (!(th(0) > 0.0) || !std::isfinite(th(0))) th(0) = 1.0;
  bool converged = false;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const Eigen::Vector3d f = model(th) - goal;
    if (f.cwiseAbs().maxCoeff() < opts.newton_tol) {
      converged = true;
      break;
    }
    Eigen::Matrix3d jac;
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6 * std::max(1.0, std::abs(th(c)));
      Eigen::Vector3d tp = th, tm = th;
      tp(c) += h;
      tm(c) -= h;
      jac.col(c) = (model(tp) - model(tm)) / (2.0 * h);
    }
    Eigen::Vector3d step = jac.fullPivLu().solve(-f);
    // Damp to keep the trial point inside the valid domain.
    double lam = 1.0;
    for (int k = 0; k < 30; ++k) {
      const Eigen::Vector3d trial = th + lam * step;
      if (trial(0) > 0.0 && trial(1) > 0.0 && std::abs(trial(2)) < std::sqrt(trial(0) * trial(1)) &&
          (model(trial) - goal).norm() < f.norm())
        break;
      lam *= 0.5;
    }
    th += lam * step;
  }
  if (!converged) throw ToleranceError("retrieve_ema: parameter inversion did not converge");
  RetrievedParams out;
  out.xi = xi;
  out.params = {th(0), th(1), th(2)};
  out.residual = target.residual;
  out.anisotropy_indicator = target.anisotropy;
  return out;
}

// ---------------------------------------------------------------------------
// Clausius-Mossotti

IsotropicPolarizability isotropic_average(const scatterers::Polarizability& a) {
  return {a.ee.trace() / 3.0, a.mm.trace() / 3.0, a.em.trace() / 3.0};
}

MediumParams clausius_mossotti(double density, const IsotropicPolarizability& a, CMMode mode) {
  Eigen::Matrix2d al;
  al << a.electric, a.chiral, -a.chiral, a.magnetic;
  Eigen::Matrix2d c;
  if (mode == CMMode::dilute) {
    c = Eigen::Matrix2d::Identity() + density * al;
  } else {
    const Eigen::Matrix2d den = Eigen::Matrix2d::Identity() - (density / 3.0) * al;
    if (std::abs(den.determinant()) < 1e-12)
      throw ConfigError("clausius_mossotti: local-field denominator vanishes (resonant density)");
    c = Eigen::Matrix2d::Identity() + den.inverse() * (density * al);
  }
  return {c(0, 0), c(1, 1), c(0, 1)};
}

IsotropicPolarizability clausius_mossotti_inverse(double density, const MediumParams& p) {
  if (!(density > 0.0)) throw ConfigError("clausius_mossotti_inverse: density must be > 0");
  Eigen::Matrix2d c;
  c << p.eps, p.kappa, -p.kappa, p.mu;
  const Eigen::Matrix2d id = Eigen::Matrix2d::Identity();
  const Eigen::Matrix2d den = c + 2.0 * id;
  if (std::abs(den.determinant()) < 1e-12)
    throw ConfigError("clausius_mossotti_inverse: singular parameters");
  const Eigen::Matrix2d al = (3.0 / density) * (c - id) * den.inverse();
  return {al(0, 0), al(1, 1), al(0, 1)};
}

OmegaMixtureSlab::OmegaMixtureSlab(scatterers::OmegaParticleParams particle, double density, CMMode mode)
    : particle_(std::move(particle)), density_(density), mode_(mode) {
  particle_.validate();
  if (!(density > 0.0)) throw ConfigError("omega mixture: density must be > 0");
}

MediumParams OmegaMixtureSlab::at(double xi) const {
  return clausius_mossotti(density_, isotropic_average(scatterers::omega_polarizability(particle_, xi)),
                           mode_);
}

}  // namespace chiralcasimir::ema
