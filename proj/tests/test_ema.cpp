#include "doctest.h"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include <Eigen/Eigenvalues>

#include "chiralcasimir/ema.hpp"
#include "chiralcasimir/wavebasis.hpp"

using namespace chiralcasimir;
using namespace chiralcasimir::ema;

namespace {

// Independent boundary-matching solver: eliminate Ez, Hz from Maxwell's
// equations in the medium, integrate psi = (Ex, Ey, Hx, Hy) as psi' = A psi,
// keep the two eigenvectors that decay away from the interface and match
// tangential fields against the vacuum planewaves.
Mat2c berreman_reflection(const MediumParams& p, double xi, Wavevector2 k, Direction out) {
  const double e = p.eps, m = p.mu, c = p.kappa;
  auto derivative = [&](const Eigen::Vector4cd& psi) {
    const cplx ex = psi(0), ey = psi(1), hx = psi(2), hy = psi(3);
    const cplx a = I * k.x * ey - I * k.y * ex;  // (curl E)_z = -xi B_z
    const cplx b = I * k.x * hy - I * k.y * hx;  // (curl H)_z = xi D_z
    Eigen::Matrix2cd sys;
    sys << xi * c, -xi * m, xi * e, xi * c;
    const Eigen::Vector2cd zz = sys.inverse() * Eigen::Vector2cd(a, b);
    const cplx ez = zz(0), hz = zz(1);
    Eigen::Vector4cd d;
    d(0) = I * k.x * ez - xi * (m * hy - c * ey);
    d(1) = I * k.y * ez + xi * (m * hx - c * ex);
    d(2) = I * k.x * hz + xi * (e * ey + c * hy);
    d(3) = I * k.y * hz - xi * (e * ex + c * hx);
    return d;
  };
  Eigen::Matrix4cd a;
  for (int j = 0; j < 4; ++j) a.col(j) = derivative(Eigen::Vector4cd::Unit(j));
  Eigen::ComplexEigenSolver<Eigen::Matrix4cd> es(a);
  // Medium below (out = up) needs growth with z (decay towards -inf).
  const double want = out == Direction::up ? 1.0 : -1.0;
  std::vector<int> keep;
  for (int j = 0; j < 4; ++j)
    if (es.eigenvalues()(j).real() * want > 0.0) keep.push_back(j);
  REQUIRE(keep.size() == 2);

  Eigen::Matrix4cd sys;
  Eigen::Matrix<cplx, 4, 2> rhs;
  for (int pol = 0; pol < 2; ++pol) {
    const auto r = wavebasis::planewave_mode(xi, k, static_cast<Polarization>(pol), out);
    const auto i = wavebasis::planewave_mode(xi, k, static_cast<Polarization>(pol), opposite(out));
    sys.col(pol) << r.e(0), r.e(1), r.h(0), r.h(1);
    rhs.col(pol) << -i.e(0), -i.e(1), -i.h(0), -i.h(1);
  }
  sys.col(2) = -es.eigenvectors().col(keep[0]);
  sys.col(3) = -es.eigenvectors().col(keep[1]);
  return sys.fullPivLu().solve(rhs).topRows<2>();
}

double maxabs(const Mat2c& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("achiral reduction and perfect-conductor limit") {
  for (auto dir : {Direction::up, Direction::down}) {
    const MediumParams p{2.3, 1.4, 0.0};
    const double xi = 0.7;
    const Wavevector2 k{0.5, -0.9};
    const double k0 = wavebasis::decay_constant(xi, k);
    const double k1 = std::sqrt(k.x * k.x + k.y * k.y + p.eps * p.mu * xi * xi);
    const Mat2c r = chiral_fresnel(p, xi, k, dir);
    CHECK(std::abs(r(0, 0) - (p.mu * k0 - k1) / (p.mu * k0 + k1)) < 1e-13);
    CHECK(std::abs(r(1, 1) - (p.eps * k0 - k1) / (p.eps * k0 + k1)) < 1e-13);
    CHECK(std::abs(r(0, 1)) < 1e-14);
    CHECK(std::abs(r(1, 0)) < 1e-14);

    const Mat2c pec = chiral_fresnel(MediumParams{1e10, 1.0, 0.0}, xi, k, dir);
    CHECK(std::abs(pec(0, 0) + 1.0) < 1e-4);
    CHECK(std::abs(pec(1, 1) - 1.0) < 1e-4);
    const Mat2c ideal = chiral_fresnel(IdealMirror{}, xi, k, dir);
    CHECK(ideal(0, 0) == -1.0);
    CHECK(ideal(1, 1) == 1.0);
  }
  CHECK_THROWS_AS(chiral_fresnel(MediumParams{1.0, 1.0, 1.0}, 1.0, {}), ConfigError);
  CHECK_THROWS_AS(chiral_fresnel(MediumParams{-1.0, 1.0, 0.0}, 1.0, {}), ConfigError);
}

TEST_CASE("chiral Fresnel agrees with the independent solver") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0, worst_recip = 0.0, worst_sv = 0.0, worst_imag = 0.0;
  for (int t = 0; t < 300; ++t) {
    const double eps = 1.0 + 4.0 * u(rng), mu = 0.3 + 2.0 * u(rng);
    const double kappa = (2.0 * u(rng) - 1.0) * 0.95 * std::sqrt(eps * mu);
    const double xi = std::pow(10.0, -2.0 + 3.0 * u(rng));
    const Wavevector2 k{3.0 * (2.0 * u(rng) - 1.0), 3.0 * (2.0 * u(rng) - 1.0)};
    const Direction dir = t % 2 ? Direction::up : Direction::down;
    const MediumParams p{eps, mu, kappa};
    const Mat2c r = chiral_fresnel(p, xi, k, dir);
    const Mat2c b = berreman_reflection(p, xi, k, dir);
    worst = std::max(worst, maxabs(r - b));
    worst_recip = std::max(worst_recip, std::abs(r(0, 1) + r(1, 0)));
    worst_imag = std::max(worst_imag, r.imag().cwiseAbs().maxCoeff());
    Eigen::JacobiSVD<Mat2c> svd(r);
    worst_sv = std::max(worst_sv, svd.singularValues()(0));
  }
  CHECK(worst < 1e-10);
  CHECK(worst_recip < 1e-12);
  CHECK(worst_imag < 1e-12);
  CHECK(worst_sv <= 1.0);
}

TEST_CASE("ideal-mirror Lifshitz limit") {
  IdealMirror pec;
  for (double z : {1.0, 2.0, 4.0}) {
    const auto r = ema_force(pec, pec, z);
    CHECK(r.force.value == doctest::Approx(pi * pi / 240.0 / std::pow(z, 4)).epsilon(1e-6));
    CHECK(r.energy.value == doctest::Approx(-pi * pi / 720.0 / std::pow(z, 3)).epsilon(1e-6));
    CHECK(r.force.converged);
  }
}

TEST_CASE("chiral slab forces") {
  auto base = std::make_shared<LorentzChiralSlab>(LorentzChiralParams{});
  const MirroredSlab mirrored(base);
  const double z = 1.5;
  const auto sc = ema_force(*base, *base, z);
  const auto oc = ema_force(mirrored, *base, z);
  CHECK(sc.force.value > 0.0);
  CHECK(oc.force.value > sc.force.value);
  // swapping the bodies is exact
  const auto ocs = ema_force(*base, mirrored, z);
  CHECK(ocs.force.value == oc.force.value);

  LorentzChiralParams achiral;
  achiral.k0 = 0.0;
  auto a = std::make_shared<LorentzChiralSlab>(achiral);
  const MirroredSlab am(a);
  CHECK(ema_force(*a, *a, z).force.value == ema_force(am, *a, z).force.value);

  SUBCASE("trace formula matches the energy derivative") {
    for (double z0 : {0.8, 1.2, 2.0, 3.0, 5.0}) {
      const double h = 1e-3 * z0;
      const double ep = ema_force(mirrored, *base, z0 + h).energy.value;
      const double em = ema_force(mirrored, *base, z0 - h).energy.value;
      const double f = ema_force(mirrored, *base, z0).force.value;
      CHECK((ep - em) / (2.0 * h) == doctest::Approx(f).epsilon(1e-5));
    }
  }
  SUBCASE("zero-frequency difference vanishes for pure chirality") {
    const std::vector<double> xs{1e-4 / z, 2e-4 / z, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0};
    const auto fsc = ema_force_integrand(*base, *base, z, xs);
    const auto foc = ema_force_integrand(mirrored, *base, z, xs);
    double peak = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) peak = std::max(peak, std::abs(foc[i] - fsc[i]));
    const double d1 = foc[0] - fsc[0], d2 = foc[1] - fsc[1];
    const double extrap = (4.0 * d1 - d2) / 3.0;
    CHECK(std::abs(extrap) < 1e-8 * peak);
  }
}

TEST_CASE("effective-medium retrieval") {
  const MediumParams truth{1.35, 0.93, 0.04};
  const ReflectionSource src = [&](double xi, Wavevector2 k) { return chiral_fresnel(truth, xi, k); };
  for (double xi : {0.05, 0.5, 3.0}) {
    const auto r = retrieve_ema(src, xi);
    CHECK(r.params.eps == doctest::Approx(truth.eps).epsilon(1e-6));
    CHECK(r.params.mu == doctest::Approx(truth.mu).epsilon(1e-6));
    CHECK(r.params.kappa == doctest::Approx(truth.kappa).epsilon(1e-6));
    CHECK(r.anisotropy_indicator < 1e-3);
  }
  const MediumParams flipped{truth.eps, truth.mu, -truth.kappa};
  const auto rf = retrieve_ema([&](double xi, Wavevector2 k) { return chiral_fresnel(flipped, xi, k); }, 0.5);
  CHECK(rf.params.kappa == doctest::Approx(-truth.kappa).epsilon(1e-6));
  CHECK(rf.params.eps == doctest::Approx(truth.eps).epsilon(1e-6));

  SUBCASE("residual is the deterministic quartic truncation of the fit") {
    // Noise-free data: the misfit comes from the |k|^4 terms alone, so it
    // scales as (k/xi)^4 and does not depend on the sample count.
    RetrievalOptions o8, o16, narrow;
    o16.n_samples = 16;
    narrow.max_k_over_xi = 0.05;
    const double r8 = retrieve_ema(src, 0.5, o8).residual;
    const double r16 = retrieve_ema(src, 0.5, o16).residual;
    const double rn = retrieve_ema(src, 0.5, narrow).residual;
    CHECK(r8 < 1e-5);
    CHECK(r16 == doctest::Approx(r8).epsilon(0.5));
    CHECK(rn / r8 == doctest::Approx(1.0 / 16.0).epsilon(0.1));
  }
  RetrievalOptions bad;
  bad.n_samples = 2;
  CHECK_THROWS_AS(retrieve_ema(src, 0.5, bad), ConfigError);
}

TEST_CASE("Clausius-Mossotti") {
  const auto zero = clausius_mossotti(12.0, {});
  CHECK(zero.eps == 1.0);
  CHECK(zero.mu == 1.0);
  CHECK(zero.kappa == 0.0);
  const double n = 12.0, a = 0.02;
  const auto e = clausius_mossotti(n, {a, 0.0, 0.0});
  CHECK((e.eps - 1.0) / (e.eps + 2.0) == doctest::Approx(n * a / 3.0).epsilon(1e-14));
  CHECK(e.mu == 1.0);
  const auto d = clausius_mossotti(n, {a, 0.0, 0.0}, CMMode::dilute);
  CHECK(d.eps == doctest::Approx(1.0 + n * a));

  const IsotropicPolarizability chi{0.011, -0.004, 0.003};
  const auto p = clausius_mossotti(n, chi);
  const auto back = clausius_mossotti_inverse(n, p);
  CHECK(back.electric == doctest::Approx(chi.electric).epsilon(1e-13));
  CHECK(back.magnetic == doctest::Approx(chi.magnetic).epsilon(1e-13));
  CHECK(back.chiral == doctest::Approx(chi.chiral).epsilon(1e-13));
  CHECK_THROWS_AS(clausius_mossotti(3.0, {1.0, 0.0, 0.0}), ConfigError);

  SUBCASE("omega mixture obeys the stated low-frequency laws") {
    const OmegaMixtureSlab slab(scatterers::OmegaParticleParams{}, 12.0, CMMode::full);
    CHECK(slab.at(0.0).kappa == 0.0);
    CHECK(slab.at(0.0).mu < 1.0);
    CHECK(slab.at(1e-3).kappa / 1e-3 == doctest::Approx(slab.at(1e-4).kappa / 1e-4).epsilon(1e-5));
  }
}

TEST_CASE("tabulated slab") {
  const std::vector<double> xs{0.1, 0.5, 1.0, 2.0, 5.0};
  LorentzChiralSlab ref(LorentzChiralParams{});
  std::vector<double> e, m, k;
  for (double x : xs) {
    const auto p = ref.at(x);
    e.push_back(p.eps);
    m.push_back(p.mu);
    k.push_back(p.kappa);
  }
  const auto path = std::filesystem::temp_directory_path() / "ccas_slab.json";
  {
    nlohmann::json j{{"xi", xs}, {"eps", e}, {"mu", m}, {"kappa", k}};
    std::ofstream(path) << j.dump();
  }
  const auto slab = load_slab_table(path);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(slab->at(xs[i]).eps == e[i]);
    CHECK(slab->at(xs[i]).kappa == k[i]);
  }
  CHECK(slab->at(0.05).kappa == doctest::Approx(k[0] * 0.5));
  CHECK(slab->at(9.0).mu == m.back());
  {
    std::ofstream(path) << R"({"xi":[1,2],"eps":[1,1],"mu":[1,1],"kappa":[0,0],"extra":1})";
  }
  CHECK_THROWS_AS(load_slab_table(path), ConfigError);
}
