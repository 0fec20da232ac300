#include "chiralcasimir/lattice.hpp"

#include <algorithm>

namespace chiralcasimir::lattice {

using scatterers::TMatrix;
using wavebasis::GSet;
using wavebasis::MirrorPlane;
using wavebasis::Rotation;

int UnitCell::l_max() const {
  int l = 1;
  for (const auto& p : particles) l = std::max(l, p.model->l_max());
  return l;
}

namespace {

double wrap_unit(double x) {
  double w = x - std::floor(x);
  if (w > 1.0 - 1e-12) w = 0.0;
  if (w < 1e-15) w = 0.0;
  return w;
}

Vec3 wrap(const Vec3& v) { return {wrap_unit(v(0)), wrap_unit(v(1)), wrap_unit(v(2))}; }

}  // namespace

UnitCell standard_omega_cell(int handedness, scatterers::OmegaParticleParams base) {
  base.handedness = handedness;
  base.axis = Vec3::UnitZ();
  auto model = std::make_shared<const scatterers::OmegaParticleModel>(base);

  Mat3 q;
  q << 0, 0, 1, 1, 0, 0, 0, 1, 0;  // (x, y, z) -> (z, x, y); takes the z axis to x
  const Vec3 sites[4] = {{0.25, 0.25, 0.0}, {0.75, 0.25, 0.0}, {0.75, 0.75, 0.0}, {0.25, 0.75, 0.0}};
  const Vec3 lift(0.0, 0.0, 0.125);

  UnitCell cell;
  Mat3 o = Mat3::Identity();
  for (int orient = 0; orient < 3; ++orient) {
    for (const auto& s : sites) cell.particles.push_back({model, wrap(o * s + lift), o});
    o = q * o;
  }
  return cell;
}

UnitCell mirror_cell(const UnitCell& cell, MirrorPlane plane) {
  const Mat3 p = wavebasis::mirror_matrix(plane);
  UnitCell out;
  for (const auto& part : cell.particles)
    out.particles.push_back({part.model, wrap(p * part.position), p * part.orientation});
  return out;
}

UnitCell rotate_cell(const UnitCell& cell, const Rotation& r) {
  UnitCell out;
  for (const auto& part : cell.particles)
    out.particles.push_back(
        {part.model, wrap(r.apply(part.position)), r.matrix() * part.orientation});
  return out;
}

UnitCell translate_cell(const UnitCell& cell, const Vec3& shift) {
  UnitCell out = cell;
  for (auto& part : out.particles) part.position = wrap(part.position + shift);
  return out;
}

TMatrix placed_tmatrix(const PlacedParticle& p, double xi, int l_max) {
  TMatrix t = p.model->tmatrix(xi).resized(l_max);
  if (p.orientation.determinant() < 0.0) {
    // O = R * P_yz with R proper.
    const Mat3 pyz = wavebasis::mirror_matrix(MirrorPlane::yz);
    return scatterers::rotate_tmatrix(scatterers::mirror_tmatrix(t, MirrorPlane::yz),
                                      Rotation(p.orientation * pyz));
  }
  return scatterers::rotate_tmatrix(t, Rotation(p.orientation));
}

FrequencyCell::FrequencyCell(const UnitCell& cell, double xi, int l_max)
    : xi_(xi), l_max_(l_max > 0 ? l_max : cell.l_max()) {
  if (!(xi > 0.0)) throw ConfigError("cell reflection requires xi > 0");
  for (const auto& p : cell.particles) {
    positions_.push_back(p.position);
    tmatrices_.push_back(placed_tmatrix(p, xi, l_max_).entries());
  }
}

ReflectionMatrix cell_reflection(const FrequencyCell& cell, Wavevector2 k, const GSet& gset,
                                 Direction out) {
  const int n = static_cast<int>(gset.size());
  const int l_max = cell.l_max();
  const int d = wavebasis::tmatrix_dimension(l_max);
  const double xi = cell.xi();
  const Direction in = opposite(out);
  const double s_out = sign_of(out);

  CMatX c(2 * n, d), w(d, 2 * n);
  std::vector<Wavevector2> q(n);
  std::vector<double> kz(n);
  for (int g = 0; g < n; ++g) {
    q[g] = k + gset.vector(g);
    kz[g] = wavebasis::decay_constant(xi, q[g]);
    c.middleRows(2 * g, 2) = wavebasis::outgoing_conversion(xi, q[g], out, l_max);
    w.middleCols(2 * g, 2) = wavebasis::incident_conversion(xi, q[g], in, l_max);
  }

  ReflectionMatrix r{xi, k, gset, out, CMatX::Zero(2 * n, 2 * n)};
  const double zoff = out == Direction::up ? -1.0 : 0.0;
  CVecX po(2 * n), pi_(2 * n);
  for (std::size_t j = 0; j < cell.size(); ++j) {
    const Vec3 rj = cell.position(j) + Vec3(0.0, 0.0, zoff);
    for (int g = 0; g < n; ++g) {
      const double rho = q[g].x * rj(0) + q[g].y * rj(1);
      // exp(-i K_out . r) and exp(+i K_in . r); both decay into the body.
      const double vert = std::exp(s_out * kz[g] * rj(2));
      po(2 * g) = po(2 * g + 1) = std::exp(-I * rho) * vert;
      pi_(2 * g) = pi_(2 * g + 1) = std::exp(I * rho) * vert;
    }
    const CMatX ct = po.asDiagonal() * (c * cell.tmatrix(j).cast<cplx>());
    r.m.noalias() += ct * (w * pi_.asDiagonal());
  }
  return r;
}

ReflectionMatrix cell_reflection(const UnitCell& cell, double xi, Wavevector2 k, const GSet& gset,
                                 Direction out, int l_max) {
  return cell_reflection(FrequencyCell(cell, xi, l_max), k, gset, out);
}

namespace {

template <class F>
ReflectionMatrix scale_by_layers(const ReflectionMatrix& r, F factor) {
  ReflectionMatrix out = r;
  const int n = static_cast<int>(r.gset.size());
  std::vector<double> kz(n);
  for (int g = 0; g < n; ++g) kz[g] = wavebasis::decay_constant(r.xi, r.k + r.gset.vector(g));
  for (int g = 0; g < n; ++g)
    for (int h = 0; h < n; ++h) out.m.block(2 * g, 2 * h, 2, 2) *= factor(kz[g] + kz[h]);
  return out;
}

}  // namespace

ReflectionMatrix stack_semi_infinite(const ReflectionMatrix& r) {
  return scale_by_layers(r, [](double s) { return 1.0 / -std::expm1(-s); });
}

ReflectionMatrix stack_layers(const ReflectionMatrix& r, int n_layers) {
  if (n_layers < 1) throw ConfigError("stack_layers: n_layers must be >= 1");
  return scale_by_layers(r, [n_layers](double s) {
    double sum = 0.0;
    for (int i = n_layers - 1; i >= 0; --i) sum += std::exp(-s * i);
    return sum;
  });
}

ReflectionMatrix displace_transverse(const ReflectionMatrix& r, Shift2 shift) {
  ReflectionMatrix out = r;
  const int n = static_cast<int>(r.gset.size());
  for (int g = 0; g < n; ++g)
    for (int h = 0; h < n; ++h) {
      const Wavevector2 dg = r.gset.vector(g) - r.gset.vector(h);
      out.m.block(2 * g, 2 * h, 2, 2) *= std::exp(-I * (dg.x * shift.x + dg.y * shift.y));
    }
  return out;
}

}  // namespace chiralcasimir::lattice
