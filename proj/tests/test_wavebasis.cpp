#include "doctest.h"

#include <cmath>
#include <random>

#include "chiralcasimir/wavebasis.hpp"

using namespace chiralcasimir;
using namespace chiralcasimir::wavebasis;

namespace {

Rotation random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-pi, pi);
  std::uniform_real_distribution<double> b(0.0, pi);
  return Rotation::euler_zyz(u(rng), b(rng), u(rng));
}

cplx bdot(const CVec3& a, const CVec3& b) { return a(0) * b(0) + a(1) * b(1) + a(2) * b(2); }

// Eigen 3.4 conjugates complex operands in cross(); spell it out instead.
CVec3 bcross(const CVec3& a, const CVec3& b) {
  return {a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2), a(0) * b(1) - a(1) * b(0)};
}

// Field of a point electric dipole p at the origin (rationalized units):
// E = (grad grad - xi^2) p exp(-xi r) / (4 pi r).
Vec3 dipole_field(double xi, const Vec3& p, const Vec3& r) {
  const double rn = r.norm();
  const Vec3 rh = r / rn;
  const double f = std::exp(-xi * rn) / (4.0 * pi * rn);
  const double f1 = -f * (xi + 1.0 / rn);
  const double f2 = f * (xi * xi + 2.0 * xi / rn + 2.0 / (rn * rn));
  const Mat3 rr = rh * rh.transpose();
  const Mat3 g = rr * f2 + (Mat3::Identity() - rr) * (f1 / rn) - xi * xi * f * Mat3::Identity();
  return g * p;
}

// Gauss-Legendre nodes on [-1, 1] via Newton iteration (test-local).
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-16) break;
    }
    double p0 = 1.0, p1 = t;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    const double dp = n * (t * p1 - p0) / (t * t - 1.0);
    x[i] = t;
    w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
}

// Synthesize the field of multipole amplitudes b at point r by integrating
// the planewave spectrum.  Returns (E, H).
std::pair<CVec3, CVec3> synthesize(double xi, const CVecX& b, int l_max, const Vec3& r) {
  const Direction dir = r(2) > 0 ? Direction::up : Direction::down;
  const double z = std::abs(r(2));
  const double qmax = 45.0 / z;
  const int panels = 80, order = 16, nphi = 160;
  std::vector<double> gx, gw;
  gauss_legendre(order, gx, gw);
  CVec3 e = CVec3::Zero(), h = CVec3::Zero();
  for (int pnl = 0; pnl < panels; ++pnl) {
    const double a = qmax * pnl / panels, bb = qmax * (pnl + 1) / panels;
    for (int i = 0; i < order; ++i) {
      const double q = 0.5 * (a + bb) + 0.5 * (bb - a) * gx[i];
      const double wq = 0.5 * (bb - a) * gw[i] * q / (4.0 * pi * pi);
      for (int j = 0; j < nphi; ++j) {
        const double phi = 2.0 * pi * j / nphi;
        const Wavevector2 qv{q * std::cos(phi), q * std::sin(phi)};
        const CMatX c = outgoing_conversion(xi, qv, dir, l_max);
        const CVecX amp = c * b;
        for (int ip = 0; ip < 2; ++ip) {
          const auto mode = planewave_mode(xi, qv, static_cast<Polarization>(ip), dir);
          const cplx ph = std::exp(I * bdot(mode.K, r.cast<cplx>()));
          const double w = wq * 2.0 * pi / nphi;
          e += w * amp(ip) * ph * mode.e;
          h += w * amp(ip) * ph * mode.h;
        }
      }
    }
  }
  return {e, h};
}

}  // namespace

TEST_CASE("decay constant") {
  CHECK(decay_constant(0.0, {0.0, 0.0}) == 0.0);
  CHECK(decay_constant(1.0, {0.0, 0.0}) == 1.0);
  CHECK(decay_constant(3.0, {4.0, 0.0}) == doctest::Approx(5.0).epsilon(1e-15));
  for (double kx : {0.1, 1.0, 7.0}) CHECK(decay_constant(0.5, {kx, -0.3}) >= 0.5);
}

TEST_CASE("modified spherical Bessel functions") {
  // Independent power-series oracle for i_0(1) = sinh(1).
  double series = 0.0, term = 1.0;
  for (int k = 0; k < 30; ++k) {
    series += term;
    term /= (2.0 * k + 2.0) * (2.0 * k + 3.0);
  }
  const auto b0 = modified_spherical_bessel(0, 1.0);
  CHECK(b0.i() == doctest::Approx(series).epsilon(1e-14));
  CHECK(b0.i() == doctest::Approx(1.1752011936438014).epsilon(1e-14));
  CHECK(b0.k() == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));

  SUBCASE("small argument limit i_l ~ x^l/(2l+1)!!") {
    for (int l = 0; l <= 5; ++l) {
      const double x = 1e-4;
      double dfact = 1.0;
      for (int n = 1; n <= 2 * l + 1; n += 2) dfact *= n;
      const double ratio = modified_spherical_bessel(l, x).i() / (std::pow(x, l) / dfact);
      CHECK(ratio == doctest::Approx(1.0).epsilon(1e-7));
    }
  }
  SUBCASE("Wronskian i_l k_{l+1} + i_{l+1} k_l = 1/x^2 on both branches") {
    for (double x : {0.01, 0.7, 3.0, 11.9, 12.5, 40.0, 300.0}) {
      for (int l = 0; l <= 4; ++l) {
        const auto a = modified_spherical_bessel(l, x);
        const auto b = modified_spherical_bessel(l + 1, x);
        const double w = (a.i_scaled * b.k_scaled + b.i_scaled * a.k_scaled) * x * x;
        CHECK(w == doctest::Approx(1.0).epsilon(1e-11));
      }
    }
  }
  SUBCASE("scaled values survive large arguments") {
    const auto b = modified_spherical_bessel(3, 2000.0);
    CHECK(std::isfinite(b.i_scaled));
    CHECK(std::isfinite(b.k_scaled));
    CHECK(b.i_scaled == doctest::Approx(1.0 / 4000.0).epsilon(1e-2));
  }
  CHECK_THROWS(modified_spherical_bessel(1, 0.0));
}

TEST_CASE("rotations and Euler angles") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    const Rotation r = random_rotation(rng);
    const auto [a, b, g] = r.euler_angles();
    const Rotation back = Rotation::euler_zyz(a, b, g);
    CHECK((back.matrix() - r.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
  for (double beta : {0.0, pi}) {
    const Rotation r = Rotation::euler_zyz(0.4, beta, 0.0);
    const auto [a, b, g] = r.euler_angles();
    CHECK((Rotation::euler_zyz(a, b, g).matrix() - r.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(Rotation(mirror_matrix(MirrorPlane::xy)), ConfigError);
}

TEST_CASE("Wigner rotation matrices") {
  std::mt19937_64 rng(11);
  for (int l = 1; l <= 4; ++l) {
    const int n = 2 * l + 1;
    CHECK((wigner_rotation(l, Rotation::identity()) - CMatX::Identity(n, n)).cwiseAbs().maxCoeff() <
          1e-14);

    const double phi = 0.37;
    const CMatX dz = wigner_rotation(l, Rotation::axis_angle(Vec3::UnitZ(), phi));
    for (int mp = -l; mp <= l; ++mp)
      for (int m = -l; m <= l; ++m) {
        const cplx expect = (m == mp) ? std::exp(-I * double(m) * phi) : cplx(0.0);
        CHECK(std::abs(dz(mp + l, m + l) - expect) < 1e-13);
      }

    for (int t = 0; t < 10; ++t) {
      const Rotation r1 = random_rotation(rng), r2 = random_rotation(rng);
      const CMatX d1 = wigner_rotation(l, r1), d2 = wigner_rotation(l, r2);
      const CMatX d12 = wigner_rotation(l, r1 * r2);
      CHECK((d12 - d1 * d2).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((d1 * d1.adjoint() - CMatX::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("rotation matrices act on solid harmonics as documented") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int l = 1; l <= 4; ++l) {
    const int n = 2 * l + 1;
    const CMatX u = complex_to_real_harmonics(l);
    CHECK((u * u.adjoint() - CMatX::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-14);
    for (int t = 0; t < 5; ++t) {
      const Rotation r = random_rotation(rng);
      const MatX dr = real_wigner_rotation(l, r);
      const CMatX dc = wigner_rotation(l, r);
      CHECK((dr * dr.transpose() - MatX::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
      const Vec3 x(nd(rng), nd(rng), nd(rng));
      const Vec3 xr = r.inverse().apply(x);
      const auto sx = real_solid_harmonics(l, x.cast<cplx>());
      const auto sr = real_solid_harmonics(l, xr.cast<cplx>());
      CVecX s0(n), s1(n);
      for (int m = -l; m <= l; ++m) {
        s0(m + l) = sx.value[l * l + l + m];
        s1(m + l) = sr.value[l * l + l + m];
      }
      // real basis
      CHECK((s1 - dr.transpose().cast<cplx>() * s0).cwiseAbs().maxCoeff() < 1e-11);
      // complex basis: C = U^dagger S
      const CVecX c0 = u.adjoint() * s0, c1 = u.adjoint() * s1;
      CHECK((c1 - dc.transpose() * c0).cwiseAbs().maxCoeff() < 1e-11);
    }
  }
  SUBCASE("l = 1 real Wigner matrix is the Cartesian rotation in (y, z, x) order") {
    const Rotation r = random_rotation(rng);
    const MatX d = real_wigner_rotation(1, r);
    const int perm[3] = {1, 2, 0};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(d(i, j) == doctest::Approx(r.matrix()(perm[i], perm[j])));
  }
}

TEST_CASE("solid harmonics values, gradients and mirror parity") {
  const CVec3 v(cplx(0.3, 0.1), cplx(-0.2, 0.4), cplx(1.1, -0.3));
  const auto s = real_solid_harmonics(4, v);
  CHECK(std::abs(s.value[1] - v(1)) < 1e-15);
  CHECK(std::abs(s.value[2] - v(2)) < 1e-15);
  CHECK(std::abs(s.value[3] - v(0)) < 1e-15);
  const double h = 1e-6;
  for (int c = 0; c < 3; ++c) {
    CVec3 vp = v, vm = v;
    vp(c) += h;
    vm(c) -= h;
    const auto sp = real_solid_harmonics(4, vp), sm = real_solid_harmonics(4, vm);
    for (std::size_t i = 0; i < s.value.size(); ++i)
      CHECK(std::abs((sp.value[i] - sm.value[i]) / (2 * h) - s.gradient[i](c)) < 1e-8);
  }
  for (auto plane : {MirrorPlane::xy, MirrorPlane::yz, MirrorPlane::zx}) {
    for (int l = 1; l <= 4; ++l) {
      const auto par = mirror_parity(l, plane);
      const Vec3 x(0.8, 0.25, -0.6);
      const auto a = real_solid_harmonics(l, x.cast<cplx>());
      const auto b = real_solid_harmonics(l, (mirror_matrix(plane) * x).cast<cplx>());
      for (int m = -l; m <= l; ++m)
        CHECK(std::abs(b.value[l * l + l + m] - double(par[m + l]) * a.value[l * l + l + m]) <
              1e-13);
    }
  }
}

TEST_CASE("planewave modes form a bilinear-orthonormal transverse triad") {
  for (auto dir : {Direction::up, Direction::down}) {
    for (Wavevector2 q : {Wavevector2{0.0, 0.0}, Wavevector2{0.4, -1.3}}) {
      const double xi = 0.8;
      const auto s = planewave_mode(xi, q, Polarization::s, dir);
      const auto p = planewave_mode(xi, q, Polarization::p, dir);
      const CVec3 khat = s.K / (I * xi);
      CHECK(std::abs(bdot(s.e, s.e) - 1.0) < 1e-14);
      CHECK(std::abs(bdot(p.e, p.e) - 1.0) < 1e-14);
      CHECK(std::abs(bdot(s.e, p.e)) < 1e-14);
      CHECK(std::abs(bdot(khat, p.e)) < 1e-14);
      CHECK(std::abs(bdot(khat, khat) - 1.0) < 1e-14);
      CHECK((s.h - bcross(khat, s.e)).cwiseAbs().maxCoeff() < 1e-14);
      CHECK((p.h - bcross(khat, p.e)).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
}

TEST_CASE("dipole selection rules") {
  const double xi = 1.0;
  const int iz = multipole_index(MultipoleKind::E, 1, 0, 1);
  const int ix = multipole_index(MultipoleKind::E, 1, 1, 1);
  const int iy = multipole_index(MultipoleKind::E, 1, -1, 1);
  const CMatX c0 = outgoing_conversion(xi, {0.0, 0.0}, Direction::up, 1);
  // A dipole along the propagation axis does not radiate along it.
  CHECK(std::abs(c0(0, iz)) < 1e-15);
  CHECK(std::abs(c0(1, iz)) < 1e-15);
  CHECK(std::abs(c0(0, ix)) < 1e-15);
  CHECK(std::abs(c0(1, iy)) < 1e-15);
  // Off normal incidence the z-dipole (m = 0) couples only to p.
  const CMatX c1 = outgoing_conversion(xi, {0.3, 0.0}, Direction::up, 1);
  CHECK(std::abs(c1(0, iz)) < 1e-15);
  CHECK(std::abs(c1(1, iz)) > 1e-3);
}

TEST_CASE("planewave spectrum of a point dipole matches the dyadic Green function") {
  const double xi = 0.9;
  const Vec3 p(0.3, -0.5, 0.8);
  CVecX b = CVecX::Zero(tmatrix_dimension(1));
  // Outgoing amplitudes are xi^3 times the Cartesian dipole moment.
  b(multipole_index(MultipoleKind::E, 1, -1, 1)) = std::pow(xi, 3) * p(1);
  b(multipole_index(MultipoleKind::E, 1, 0, 1)) = std::pow(xi, 3) * p(2);
  b(multipole_index(MultipoleKind::E, 1, 1, 1)) = std::pow(xi, 3) * p(0);
  for (const Vec3 r : {Vec3(0.4, -0.2, 0.7), Vec3(-0.3, 0.5, -0.9)}) {
    const auto [e, h] = synthesize(xi, b, 1, r);
    const Vec3 exact = dipole_field(xi, p, r);
    CHECK(e.imag().norm() < 1e-9 * exact.norm());
    CHECK((e.real() - exact).norm() < 1e-8 * exact.norm());
  }
  SUBCASE("magnetic dipole by duality") {
    CVecX bm = CVecX::Zero(tmatrix_dimension(1));
    bm(multipole_index(MultipoleKind::M, 1, -1, 1)) = std::pow(xi, 3) * p(1);
    bm(multipole_index(MultipoleKind::M, 1, 0, 1)) = std::pow(xi, 3) * p(2);
    bm(multipole_index(MultipoleKind::M, 1, 1, 1)) = std::pow(xi, 3) * p(0);
    const Vec3 r(0.2, 0.1, 0.6);
    const auto [e, h] = synthesize(xi, bm, 1, r);
    const Vec3 exact = dipole_field(xi, p, r);
    CHECK((h.real() - exact).norm() < 1e-8 * exact.norm());
  }
}

TEST_CASE("incident coefficients rotate with the real Wigner matrices") {
  const int l_max = 3;
  const double xi = 0.7;
  const Wavevector2 q{0.5, -0.2};
  const Rotation rz = Rotation::axis_angle(Vec3::UnitZ(), 0.83);
  const Vec3 qr = rz.apply(Vec3(q.x, q.y, 0.0));
  for (auto dir : {Direction::up, Direction::down}) {
    const CMatX w0 = incident_conversion(xi, q, dir, l_max);
    const CMatX w1 = incident_conversion(xi, {qr(0), qr(1)}, dir, l_max);
    for (int kind = 0; kind < 2; ++kind) {
      for (int l = 1; l <= l_max; ++l) {
        const MatX d = real_wigner_rotation(l, rz);
        const int off = multipole_index(static_cast<MultipoleKind>(kind), l, -l, l_max);
        const CMatX expect = d.cast<cplx>() * w0.block(off, 0, 2 * l + 1, 2);
        CHECK((w1.block(off, 0, 2 * l + 1, 2) - expect).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
  SUBCASE("general rotations of the underlying polynomial fields") {
    std::mt19937_64 rng(3);
    const auto mode = planewave_mode(xi, q, Polarization::p, Direction::down);
    const CVec3 khat = mode.K / (I * xi);
    const Rotation r = random_rotation(rng);
    const CMatX rm = r.matrix().cast<cplx>();
    const auto s0 = real_solid_harmonics(l_max, khat);
    const auto s1 = real_solid_harmonics(l_max, rm * khat);
    for (int l = 1; l <= l_max; ++l) {
      const MatX d = real_wigner_rotation(l, r);
      CVecX a0(2 * l + 1), a1(2 * l + 1);
      for (int m = -l; m <= l; ++m) {
        a0(m + l) = bdot(mode.e, s0.gradient[l * l + l + m]);
        a1(m + l) = bdot(rm * mode.e, s1.gradient[l * l + l + m]);
      }
      CHECK((a1 - d.cast<cplx>() * a0).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("up/down conversion is the z-mirror image") {
  const int l_max = 3;
  const double xi = 0.6;
  const Wavevector2 q{0.9, 0.4};
  const int nm = multipole_count(l_max);
  MatX mir = MatX::Zero(2 * nm, 2 * nm);
  for (int l = 1; l <= l_max; ++l) {
    const auto par = mirror_parity(l, MirrorPlane::xy);
    for (int m = -l; m <= l; ++m) {
      mir(multipole_index(MultipoleKind::E, l, m, l_max), multipole_index(MultipoleKind::E, l, m, l_max)) = par[m + l];
      mir(multipole_index(MultipoleKind::M, l, m, l_max), multipole_index(MultipoleKind::M, l, m, l_max)) = -par[m + l];
    }
  }
  const CMatX up = outgoing_conversion(xi, q, Direction::up, l_max);
  const CMatX dn = outgoing_conversion(xi, q, Direction::down, l_max);
  CMatX flip = CMatX::Identity(2, 2);
  flip(1, 1) = -1.0;
  CHECK((dn * mir.cast<cplx>() - flip * up).cwiseAbs().maxCoeff() < 1e-13 * up.cwiseAbs().maxCoeff());
}

TEST_CASE("planewave translation operator") {
  const GSet g = GSet::within(3.0);
  CHECK(g.size() == 29);
  CHECK(g.index(0) == std::array<int, 2>{0, 0});
  const Wavevector2 k{0.3, -0.1};
  const CVecX id = planewave_translation(0.7, k, g, Vec3::Zero());
  CHECK((id - CVecX::Ones(id.size())).cwiseAbs().maxCoeff() == 0.0);
  const Vec3 d1(0.2, -0.4, 0.3), d2(-0.7, 0.1, 0.45);
  const CVecX x1 = planewave_translation(0.7, k, g, d1);
  const CVecX x2 = planewave_translation(0.7, k, g, d2);
  const CVecX x12 = planewave_translation(0.7, k, g, d1 + d2);
  CHECK((x1.cwiseProduct(x2) - x12).cwiseAbs().maxCoeff() < 1e-14);
  const CVecX e2 = planewave_translation(1.0, {0.0, 0.0}, g, Vec3(0.0, 0.0, 2.0));
  CHECK(e2(0).real() == doctest::Approx(0.1353352832366127).epsilon(1e-15));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.index(g.negated(i))[0] == -g.index(i)[0]);
}
