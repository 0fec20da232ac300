#include "doctest.h"

#include <filesystem>
#include <random>

#include "chiralcasimir/scatterers.hpp"

using namespace chiralcasimir;
using namespace chiralcasimir::scatterers;
using wavebasis::MirrorPlane;
using wavebasis::Rotation;

namespace {

double maxabs(const MatX& m) { return m.cwiseAbs().maxCoeff(); }

OmegaParticleParams tilted() {
  OmegaParticleParams p;
  p.axis = Vec3(0.3, -0.5, 0.8).normalized();
  return p;
}

}  // namespace

TEST_CASE("omega polarizability limits") {
  OmegaParticleParams p;
  const auto a0 = omega_polarizability(p, 0.0);
  CHECK(maxabs(a0.em) == 0.0);
  CHECK(maxabs(a0.me) == 0.0);
  CHECK(a0.mm(2, 2) == doctest::Approx(-p.A_s));
  CHECK(a0.ee(2, 2) == doctest::Approx(p.A_e));
  CHECK(a0.ee(0, 0) == doctest::Approx(p.t_perp * p.A_e));

  const double xi = 1.7;
  const auto a = omega_polarizability(p, xi);
  const double den = p.omega0 * p.omega0 + xi * xi;
  CHECK(a.em(2, 2) == doctest::Approx(p.A_c * xi * p.omega0 / den));
  CHECK(maxabs(a.me + a.em) == 0.0);
  CHECK(a.mm(2, 2) == doctest::Approx(-p.A_s - p.A_m * xi * xi / den));

  SUBCASE("handedness flips only the magnetoelectric blocks") {
    OmegaParticleParams q = p;
    q.handedness = -1;
    const auto b = omega_polarizability(q, xi);
    CHECK(maxabs(b.em + a.em) == 0.0);
    CHECK(maxabs(b.ee - a.ee) == 0.0);
    CHECK(maxabs(b.mm - a.mm) == 0.0);
  }
  SUBCASE("linear chirality law and magnetic monotonicity") {
    const double r1 = omega_polarizability(p, 1e-4).em(2, 2) / 1e-4;
    const double r2 = omega_polarizability(p, 1e-6).em(2, 2) / 1e-6;
    CHECK(r1 == doctest::Approx(p.A_c / p.omega0).epsilon(1e-6));
    CHECK(r2 == doctest::Approx(p.A_c / p.omega0).epsilon(1e-10));
    double prev = 0.0;
    for (double x = 0.0; x < 100.0; x += 0.37) {
      const double m = -omega_polarizability(p, x).mm(2, 2);
      CHECK(m >= prev);
      CHECK(m <= p.A_s + p.A_m);
      prev = m;
    }
  }
  SUBCASE("parameter validation") {
    OmegaParticleParams q = p;
    q.A_c = 0.02;  // 4e-4 > A_e A_m = 2e-4
    CHECK_THROWS_AS(q.validate(), ConfigError);
    q = p;
    q.A_s = -1.0;
    CHECK_THROWS_AS(q.validate(), ConfigError);
    q = p;
    q.handedness = 0;
    CHECK_THROWS_AS(q.validate(), ConfigError);
    CHECK_THROWS_AS(omega_polarizability(p, -1.0), ConfigError);
  }
}

TEST_CASE("dipole T-matrix") {
  const double xi = 0.8;
  CHECK(maxabs(tmatrix_from_polarizability(Polarizability{}, xi).entries()) == 0.0);

  Polarizability iso;
  iso.ee = 0.05 * Mat3::Identity();
  const TMatrix t = tmatrix_from_polarizability(iso, xi);
  CHECK(t.dimension() == 6);
  const MatX& e = t.entries();
  CHECK(maxabs(e - MatX(e.diagonal().asDiagonal())) == 0.0);
  for (int m = -1; m <= 1; ++m) {
    const int i = wavebasis::multipole_index(MultipoleKind::E, 1, m, 1);
    CHECK(e(i, i) == doctest::Approx(0.05 * xi * xi * xi));
  }
  SUBCASE("Cartesian ordering and round trip") {
    const auto a = omega_polarizability(tilted(), xi);
    const auto back = polarizability_from_tmatrix(tmatrix_from_polarizability(a, xi));
    CHECK(maxabs(back.ee - a.ee) < 1e-16);
    CHECK(maxabs(back.em - a.em) < 1e-16);
    CHECK(maxabs(back.me - a.me) < 1e-16);
    CHECK(maxabs(back.mm - a.mm) < 1e-16);
    // x-x element lands on the m = +1 electric slot
    Polarizability px;
    px.ee(0, 0) = 1.0;
    const int ix = wavebasis::multipole_index(MultipoleKind::E, 1, 1, 1);
    CHECK(tmatrix_from_polarizability(px, 1.0).entries()(ix, ix) == 1.0);
  }
  CHECK(reciprocity_defect(OmegaParticleModel(tilted()).tmatrix(xi)) < 1e-15);
}

TEST_CASE("rotations and mirrors of T-matrices") {
  const double xi = 1.3;
  const OmegaParticleParams p = tilted();
  const TMatrix t = OmegaParticleModel(p).tmatrix(xi);
  CHECK(maxabs(rotate_tmatrix(t, Rotation::identity()).entries() - t.entries()) < 1e-15);

  for (auto plane : {MirrorPlane::xy, MirrorPlane::yz, MirrorPlane::zx}) {
    const TMatrix m1 = mirror_tmatrix(t, plane);
    CHECK(maxabs(mirror_tmatrix(m1, plane).entries() - t.entries()) < 1e-15);
    // Mirror image: axis reflected and handedness flipped.
    OmegaParticleParams q = p;
    q.axis = wavebasis::mirror_matrix(plane) * p.axis;
    q.handedness = -p.handedness;
    CHECK(maxabs(m1.entries() - OmegaParticleModel(q).tmatrix(xi).entries()) < 1e-12);
  }

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-pi, pi);
  for (int trial = 0; trial < 5; ++trial) {
    const Rotation r = Rotation::euler_zyz(u(rng), std::abs(u(rng)), u(rng));
    OmegaParticleParams q = p;
    q.axis = r.apply(p.axis);
    const TMatrix rt = rotate_tmatrix(t, r);
    CHECK(maxabs(rt.entries() - OmegaParticleModel(q).tmatrix(xi).entries()) < 1e-14);
  }

  SUBCASE("per-l block Frobenius norms are rotation invariant") {
    const int l_max = 3;
    std::normal_distribution<double> nd;
    const int n = wavebasis::tmatrix_dimension(l_max);
    MatX raw(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) raw(i, j) = nd(rng);
    const TMatrix big(xi, l_max, raw);
    const Rotation r = Rotation::euler_zyz(0.3, 1.1, -2.0);
    const TMatrix rb = rotate_tmatrix(big, r);
    for (int ka = 0; ka < 2; ++ka)
      for (int la = 1; la <= l_max; ++la)
        for (int kb = 0; kb < 2; ++kb)
          for (int lb = 1; lb <= l_max; ++lb) {
            const int ia = wavebasis::multipole_index(static_cast<MultipoleKind>(ka), la, -la, l_max);
            const int ib = wavebasis::multipole_index(static_cast<MultipoleKind>(kb), lb, -lb, l_max);
            const double n0 = big.entries().block(ia, ib, 2 * la + 1, 2 * lb + 1).norm();
            const double n1 = rb.entries().block(ia, ib, 2 * la + 1, 2 * lb + 1).norm();
            CHECK(n1 == doctest::Approx(n0).epsilon(1e-13));
          }
    CHECK(maxabs(mirror_tmatrix(mirror_tmatrix(big, MirrorPlane::zx), MirrorPlane::zx).entries() -
                 raw) == 0.0);
  }
}

TEST_CASE("T-matrix files") {
  const auto dir = std::filesystem::temp_directory_path() / "ccas_test_scatterers";
  std::filesystem::create_directories(dir);
  const TMatrix t = OmegaParticleModel(tilted()).tmatrix(0.731);

  SUBCASE("round trip is bit-identical") {
    save_tmatrix(t, dir / "t.json");
    const TMatrix back = load_tmatrix(dir / "t.json");
    CHECK(back.xi() == t.xi());
    CHECK(back.l_max() == 1);
    CHECK((back.entries().array() == t.entries().array()).all());
  }
  SUBCASE("l_max = 3 accepted with side 30") {
    const TMatrix big = t.resized(3);
    const TMatrix back = parse_tmatrix(serialize_tmatrix(big));
    CHECK(back.dimension() == 30);
    CHECK((back.entries().array() == big.entries().array()).all());
  }
  SUBCASE("validation errors") {
    std::string txt = serialize_tmatrix(t);
    const auto pos = txt.find("[", txt.find("entries") + 10);
    std::string bad = txt;
    bad.insert(bad.find(']', pos), ",1e-3");
    CHECK_THROWS_AS(parse_tmatrix(bad), ConfigError);
    std::string tiny = txt;
    tiny.insert(tiny.find(']', pos), ",1e-12");
    CHECK_NOTHROW(parse_tmatrix(tiny));

    std::string wrong_id = txt;
    wrong_id.replace(wrong_id.find("ccas-imag-v1"), 12, "other-conv-1");
    CHECK_THROWS_AS(parse_tmatrix(wrong_id), ConfigError);

    CHECK_THROWS_AS(parse_tmatrix("{\"xi\": 1.0"), ConfigError);
    CHECK_THROWS_AS(parse_tmatrix(R"({"xi":1,"l_max":1,"entries":[]})"), ConfigError);
    const std::string id = std::string(wavebasis::kConventionId);
    CHECK_THROWS_AS(parse_tmatrix(R"({"xi":1,"l_max":1,"entries":[1,2],"convention_id":")" + id + "\"}"),
                    ConfigError);
    CHECK_THROWS_AS(parse_tmatrix(R"({"xi":1,"l_max":5,"entries":[],"convention_id":")" + id + "\"}"),
                    ConfigError);
    CHECK_THROWS_AS(load_tmatrix(dir / "missing.json"), ConfigError);

    MatX nonrec = t.entries();
    nonrec(0, 3) += 0.1;
    const std::string nr = serialize_tmatrix(TMatrix(t.xi(), 1, nonrec));
    CHECK_NOTHROW(parse_tmatrix(nr));
    LoadOptions strict;
    strict.check_reciprocity = true;
    CHECK_THROWS_AS(parse_tmatrix(nr, strict), ConfigError);
  }
}

TEST_CASE("tabulated particle model") {
  const OmegaParticleModel omega(tilted());
  std::vector<TMatrix> samples;
  for (int i = 0; i <= 40; ++i) samples.push_back(omega.tmatrix(0.05 + 0.1 * i));
  const TabulatedParticleModel tab(samples);

  for (const auto& s : samples) CHECK(maxabs(tab.tmatrix(s.xi()).entries() - s.entries()) < 1e-15);
  for (double xi : {0.1, 0.77, 2.33, 3.91}) {
    const MatX exact = omega.tmatrix(xi).entries();
    CHECK(maxabs(tab.tmatrix(xi).entries() - exact) < 2e-4 * maxabs(exact));
  }
  // Below the table the xi^3 law of a dipole takes over.
  const TMatrix lo = tab.tmatrix(0.01);
  CHECK(maxabs(lo.entries() - samples[0].entries() * std::pow(0.2, 3)) < 1e-18);

  SUBCASE("monotone data stays monotone") {
    std::vector<TMatrix> steps;
    const double xs[] = {0.1, 0.2, 0.3, 1.0, 1.1};
    const double ys[] = {0.0, 0.0, 1.0, 1.0, 2.0};
    for (int i = 0; i < 5; ++i)
      steps.emplace_back(xs[i], 1, MatX::Constant(6, 6, ys[i] * std::pow(xs[i], 3)));
    const TabulatedParticleModel st(steps);
    double prev = -1.0;
    for (double x = 0.1; x <= 1.1; x += 0.005) {
      const double v = st.tmatrix(x).entries()(0, 0) / std::pow(x, 3);
      CHECK(v >= prev - 1e-14);
      CHECK(v <= 2.0 + 1e-14);
      prev = v;
    }
  }
  CHECK_THROWS_AS(TabulatedParticleModel({}), ConfigError);
}
