#include "chiralcasimir/wavebasis.hpp"

#include <algorithm>
#include <cmath>

namespace chiralcasimir::wavebasis {

double decay_constant(double xi, Wavevector2 k) {
  return std::sqrt(xi * xi + k.x * k.x + k.y * k.y);
}

ModifiedSphericalBessel modified_spherical_bessel(int l, double x) {
  if (!(x > 0.0)) throw std::domain_error("modified_spherical_bessel: x must be > 0");
  if (l < 0) throw std::domain_error("modified_spherical_bessel: l must be >= 0");

  ModifiedSphericalBessel out;
  out.x = x;

  // k_l: upward recurrence k_{n+1} = k_{n-1} + (2n+1)/x k_n is stable.
  double km = 1.0 / x;
  double kc = 1.0 / x + 1.0 / (x * x);
  if (l == 0) {
    out.k_scaled = km;
  } else {
    for (int n = 1; n < l; ++n) {
      const double kn = km + (2.0 * n + 1.0) / x * kc;
      km = kc;
      kc = kn;
    }
    out.k_scaled = kc;
  }

  // i_l: power series for moderate x, upward recurrence once x > l.
  if (x <= 12.0 || x <= 2.0 * l) {
    double pref = 1.0;
    for (int n = 1; n <= l; ++n) pref *= x / (2.0 * n + 1.0);
    double term = 1.0, sum = 1.0;
    const double h = 0.5 * x * x;
    for (int k = 1; k < 500; ++k) {
      term *= h / (k * (2.0 * l + 2.0 * k + 1.0));
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    out.i_scaled = pref * sum * std::exp(-x);
  } else {
    const double e2 = std::exp(-2.0 * x);
    double im = (1.0 - e2) / (2.0 * x);
    double ic = (1.0 + e2) / (2.0 * x) - (1.0 - e2) / (2.0 * x * x);
    if (l == 0) {
      out.i_scaled = im;
    } else {
      for (int n = 1; n < l; ++n) {
        const double in = im - (2.0 * n + 1.0) / x * ic;
        im = ic;
        ic = in;
      }
      out.i_scaled = ic;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Rotation::Rotation(const Mat3& m) : m_(m) {
  const double orth = (m * m.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (orth > 1e-9) throw ConfigError("rotation matrix is not orthogonal");
  if (m.determinant() < 0.0)
    throw ConfigError("improper rotation (det = -1); use a mirror operation instead");
}

Rotation Rotation::axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw ConfigError("rotation axis must be nonzero");
  return Rotation(Eigen::AngleAxisd(angle, axis / n).toRotationMatrix(), 0);
}

Rotation Rotation::euler_zyz(double alpha, double beta, double gamma) {
  const Mat3 m = (Eigen::AngleAxisd(alpha, Vec3::UnitZ()) * Eigen::AngleAxisd(beta, Vec3::UnitY()) *
                  Eigen::AngleAxisd(gamma, Vec3::UnitZ()))
                     .toRotationMatrix();
  return Rotation(m, 0);
}

std::array<double, 3> Rotation::euler_angles() const {
  const Mat3& r = m_;
  const double sb = std::hypot(r(0, 2), r(1, 2));
  const double beta = std::atan2(sb, r(2, 2));
  if (sb > 1e-12) {
    return {std::atan2(r(1, 2), r(0, 2)), beta, std::atan2(r(2, 1), -r(2, 0))};
  }
  if (r(2, 2) > 0.0) return {std::atan2(r(1, 0), r(0, 0)), 0.0, 0.0};
  return {std::atan2(-r(1, 0), -r(0, 0)), pi, 0.0};
}

Mat3 mirror_matrix(MirrorPlane plane) {
  Mat3 m = Mat3::Identity();
  switch (plane) {
    case MirrorPlane::xy: m(2, 2) = -1.0; break;
    case MirrorPlane::yz: m(0, 0) = -1.0; break;
    case MirrorPlane::zx: m(1, 1) = -1.0; break;
  }
  return m;
}

namespace {

double factorial(int n) { return std::tgamma(n + 1.0); }

}  // namespace

MatX wigner_small_d(int l, double beta) {
  const int n = 2 * l + 1;
  MatX d = MatX::Zero(n, n);
  const double c = std::cos(0.5 * beta);
  const double s = std::sin(0.5 * beta);
  for (int mp = -l; mp <= l; ++mp) {
    for (int m = -l; m <= l; ++m) {
      const double pref = std::sqrt(factorial(l + mp) * factorial(l - mp) * factorial(l + m) *
                                    factorial(l - m));
      double sum = 0.0;
      const int kmin = std::max(0, m - mp);
      const int kmax = std::min(l + m, l - mp);
      for (int k = kmin; k <= kmax; ++k) {
        const double denom =
            factorial(l + m - k) * factorial(k) * factorial(l - k - mp) * factorial(k - m + mp);
        const double sign = ((k - m + mp) % 2 == 0) ? 1.0 : -1.0;
        sum += sign / denom * std::pow(c, 2 * l - 2 * k + m - mp) * std::pow(s, 2 * k - m + mp);
      }
      d(mp + l, m + l) = pref * sum;
    }
  }
  return d;
}

CMatX wigner_rotation(int l, const Rotation& r) {
  const auto [alpha, beta, gamma] = r.euler_angles();
  const MatX d = wigner_small_d(l, beta);
  CMatX out(2 * l + 1, 2 * l + 1);
  for (int mp = -l; mp <= l; ++mp)
    for (int m = -l; m <= l; ++m)
      out(mp + l, m + l) = std::exp(-I * double(mp) * alpha) * d(mp + l, m + l) *
                           std::exp(-I * double(m) * gamma);
  return out;
}

CMatX complex_to_real_harmonics(int l) {
  const int n = 2 * l + 1;
  CMatX u = CMatX::Zero(n, n);
  const double r2 = 1.0 / std::sqrt(2.0);
  u(l, l) = 1.0;
  for (int mu = 1; mu <= l; ++mu) {
    const double sg = (mu % 2 == 0) ? 1.0 : -1.0;
    u(l + mu, l + mu) = sg * r2;
    u(l + mu, l - mu) = r2;
    u(l - mu, l + mu) = -I * sg * r2;
    u(l - mu, l - mu) = I * r2;
  }
  return u;
}

MatX real_wigner_rotation(int l, const Rotation& r) {
  const CMatX u = complex_to_real_harmonics(l);
  const CMatX dr = u.conjugate() * wigner_rotation(l, r) * u.transpose();
  return dr.real();
}

// ---------------------------------------------------------------------------

namespace {

// First-order forward-mode jet over three complex variables.
struct Jet {
  cplx v;
  CVec3 d;
};

Jet operator+(const Jet& a, const Jet& b) { return {a.v + b.v, a.d + b.d}; }
Jet operator-(const Jet& a, const Jet& b) { return {a.v - b.v, a.d - b.d}; }
Jet operator*(const Jet& a, const Jet& b) { return {a.v * b.v, a.d * b.v + b.d * a.v}; }
Jet operator*(double c, const Jet& a) { return {c * a.v, c * a.d}; }

}  // namespace

SolidHarmonics real_solid_harmonics(int l_max, const CVec3& v) {
  const int total = (l_max + 1) * (l_max + 1);
  std::vector<Jet> s(total, Jet{0.0, CVec3::Zero()});
  auto at = [&](int l, int m) -> Jet& { return s[l * l + l + m]; };

  const Jet x{v(0), CVec3(1.0, 0.0, 0.0)};
  const Jet y{v(1), CVec3(0.0, 1.0, 0.0)};
  const Jet z{v(2), CVec3(0.0, 0.0, 1.0)};
  const Jet r2 = x * x + y * y + z * z;

  at(0, 0) = Jet{1.0, CVec3::Zero()};
  for (int l = 0; l < l_max; ++l) {
    const double c = std::sqrt((l == 0 ? 2.0 : 1.0) * (2.0 * l + 1.0) / (2.0 * l + 2.0));
    if (l == 0) {
      at(1, 1) = c * (x * at(0, 0));
      at(1, -1) = c * (y * at(0, 0));
    } else {
      at(l + 1, l + 1) = c * (x * at(l, l) - y * at(l, -l));
      at(l + 1, -l - 1) = c * (y * at(l, l) + x * at(l, -l));
    }
    for (int m = -l; m <= l; ++m) {
      Jet next = double(2 * l + 1) * (z * at(l, m));
      if (l >= 1 && std::abs(m) <= l - 1)
        next = next - std::sqrt(double(l + m) * double(l - m)) * (r2 * at(l - 1, m));
      at(l + 1, m) = (1.0 / std::sqrt(double(l + m + 1) * double(l - m + 1))) * next;
    }
  }

  SolidHarmonics out;
  out.value.resize(total);
  out.gradient.resize(total);
  for (int i = 0; i < total; ++i) {
    out.value[i] = s[i].v;
    out.gradient[i] = s[i].d;
  }
  return out;
}

std::vector<int> mirror_parity(int l, MirrorPlane plane) {
  const Vec3 x0(0.3137, -0.7071, 0.5531);
  const Vec3 x1 = mirror_matrix(plane) * x0;
  const auto a = real_solid_harmonics(l, x0.cast<cplx>());
  const auto b = real_solid_harmonics(l, x1.cast<cplx>());
  std::vector<int> sign(2 * l + 1);
  for (int m = -l; m <= l; ++m) {
    const int i = l * l + l + m;
    sign[m + l] = (b.value[i].real() * a.value[i].real() >= 0.0) ? 1 : -1;
  }
  return sign;
}

// ---------------------------------------------------------------------------

PlanewaveMode planewave_mode(double xi, Wavevector2 q, Polarization pol, Direction dir) {
  const double qn = q.norm();
  const double qx = qn > 0.0 ? q.x / qn : 1.0;
  const double qy = qn > 0.0 ? q.y / qn : 0.0;
  const double sigma = sign_of(dir);

  PlanewaveMode mode;
  mode.kappa = std::sqrt(xi * xi + qn * qn);
  mode.K = CVec3(q.x, q.y, I * sigma * mode.kappa);
  const CVec3 s(-qy, qx, 0.0);
  const CVec3 p = CVec3(sigma * mode.kappa * qx, sigma * mode.kappa * qy, I * qn) / xi;
  if (pol == Polarization::s) {
    mode.e = s;
    mode.h = -p;
  } else {
    mode.e = p;
    mode.h = s;
  }
  return mode;
}

// Eigen's dot() conjugates its first argument for complex vectors, so the
// bilinear product is written out explicitly.
namespace {

cplx bilinear(const CVec3& a, const CVec3& b) {
  return a(0) * b(0) + a(1) * b(1) + a(2) * b(2);
}

}  // namespace

CMatX outgoing_conversion(double xi, Wavevector2 q, Direction dir, int l_max) {
  CMatX c(2, tmatrix_dimension(l_max));
  for (int ip = 0; ip < 2; ++ip) {
    const auto mode = planewave_mode(xi, q, static_cast<Polarization>(ip), dir);
    const double pref = -1.0 / (2.0 * xi * mode.kappa);
    const CVec3 khat = mode.K / (I * xi);
    const auto sh = real_solid_harmonics(l_max, khat);
    for (int l = 1; l <= l_max; ++l) {
      for (int m = -l; m <= l; ++m) {
        const CVec3& g = sh.gradient[l * l + l + m];
        c(ip, multipole_index(MultipoleKind::M, l, m, l_max)) = pref * bilinear(mode.h, g);
        c(ip, multipole_index(MultipoleKind::E, l, m, l_max)) = pref * bilinear(mode.e, g);
      }
    }
  }
  return c;
}

CMatX incident_conversion(double xi, Wavevector2 q, Direction dir, int l_max) {
  CMatX w(tmatrix_dimension(l_max), 2);
  for (int ip = 0; ip < 2; ++ip) {
    const auto mode = planewave_mode(xi, q, static_cast<Polarization>(ip), dir);
    const CVec3 khat = mode.K / (I * xi);
    const auto sh = real_solid_harmonics(l_max, khat);
    for (int l = 1; l <= l_max; ++l) {
      for (int m = -l; m <= l; ++m) {
        const CVec3& g = sh.gradient[l * l + l + m];
        w(multipole_index(MultipoleKind::M, l, m, l_max), ip) = bilinear(mode.h, g);
        w(multipole_index(MultipoleKind::E, l, m, l_max), ip) = bilinear(mode.e, g);
      }
    }
  }
  return w;
}

// ---------------------------------------------------------------------------

GSet GSet::within(double radius) {
  GSet g;
  g.radius_ = radius;
  const int nmax = static_cast<int>(std::floor(radius + 1e-9));
  for (int nx = -nmax; nx <= nmax; ++nx)
    for (int ny = -nmax; ny <= nmax; ++ny)
      if (nx * nx + ny * ny <= radius * radius + 1e-9) g.n_.push_back({nx, ny});
  std::stable_sort(g.n_.begin(), g.n_.end(), [](const auto& a, const auto& b) {
    const int ra = a[0] * a[0] + a[1] * a[1];
    const int rb = b[0] * b[0] + b[1] * b[1];
    if (ra != rb) return ra < rb;
    if (a[0] != b[0]) return a[0] < b[0];
    return a[1] < b[1];
  });
  return g;
}

GSet GSet::from_indices(std::vector<std::array<int, 2>> n, double radius) {
  GSet g;
  g.n_ = std::move(n);
  g.radius_ = radius;
  return g;
}

std::size_t GSet::negated(std::size_t i) const {
  const auto target = std::array<int, 2>{-n_[i][0], -n_[i][1]};
  const auto it = std::find(n_.begin(), n_.end(), target);
  return static_cast<std::size_t>(it - n_.begin());
}

CVecX planewave_translation(double xi, Wavevector2 k, const GSet& gset, const Vec3& d) {
  CVecX x(2 * gset.size());
  for (std::size_t g = 0; g < gset.size(); ++g) {
    const Wavevector2 q = k + gset.vector(g);
    const double kz = decay_constant(xi, q);
    const cplx v = std::exp(I * (q.x * d(0) + q.y * d(1))) * std::exp(-kz * d(2));
    x(2 * g) = v;
    x(2 * g + 1) = v;
  }
  return x;
}

}  // namespace chiralcasimir::wavebasis
