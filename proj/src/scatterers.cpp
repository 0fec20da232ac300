#include "chiralcasimir/scatterers.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace chiralcasimir::scatterers {

using wavebasis::MirrorPlane;
using wavebasis::Rotation;
using wavebasis::multipole_count;
using wavebasis::multipole_index;
using wavebasis::tmatrix_dimension;

void OmegaParticleParams::validate() const {
  if (!(A_e > 0.0)) throw ConfigError("omega particle: A_e must be > 0");
  if (!(A_m > 0.0)) throw ConfigError("omega particle: A_m must be > 0");
  if (!(A_s >= 0.0)) throw ConfigError("omega particle: A_s must be >= 0");
  if (!(omega0 > 0.0)) throw ConfigError("omega particle: omega0 must be > 0");
  if (!(t_perp >= 0.0 && t_perp <= 1.0))
    throw ConfigError("omega particle: t_perp must lie in [0, 1]");
  if (A_c * A_c > A_e * A_m)
    throw ConfigError("omega particle: A_c^2 must not exceed A_e * A_m");
  if (handedness != 1 && handedness != -1)
    throw ConfigError("omega particle: handedness must be +1 or -1");
  if (!(axis.norm() > 0.0) || !axis.allFinite())
    throw ConfigError("omega particle: axis must be a nonzero vector");
}

Polarizability omega_polarizability(const OmegaParticleParams& params, double xi) {
  params.validate();
  if (xi < 0.0) throw ConfigError("omega_polarizability: xi must be >= 0");
  const Vec3 u = params.axis.normalized();
  const Mat3 uu = u * u.transpose();
  const double w2 = params.omega0 * params.omega0;
  const double den = w2 + xi * xi;
  const double lor = w2 / den;

  Polarizability a;
  a.ee = params.A_e * lor * (uu + params.t_perp * (Mat3::Identity() - uu));
  a.mm = (-params.A_s - params.A_m * xi * xi / den) * uu;
  a.em = (params.handedness * params.A_c * xi * params.omega0 / den) * uu;
  a.me = -a.em;
  return a;
}

// ---------------------------------------------------------------------------

TMatrix::TMatrix(double xi, int l_max, MatX entries)
    : xi_(xi), l_max_(l_max), entries_(std::move(entries)) {
  if (l_max < 1) throw ConfigError("TMatrix: l_max must be >= 1");
  const int n = tmatrix_dimension(l_max);
  if (entries_.rows() != n || entries_.cols() != n)
    throw ConfigError("TMatrix: entries must be " + std::to_string(n) + "x" + std::to_string(n) +
                      " for l_max = " + std::to_string(l_max));
}

TMatrix TMatrix::zero(double xi, int l_max) {
  const int n = tmatrix_dimension(l_max);
  return TMatrix(xi, l_max, MatX::Zero(n, n));
}

TMatrix TMatrix::resized(int l_max) const {
  TMatrix out = zero(xi_, l_max);
  const int lm = std::min(l_max, l_max_);
  for (int ka = 0; ka < 2; ++ka)
    for (int la = 1; la <= lm; ++la)
      for (int ma = -la; ma <= la; ++ma)
        for (int kb = 0; kb < 2; ++kb)
          for (int lb = 1; lb <= lm; ++lb)
            for (int mb = -lb; mb <= lb; ++mb) {
              const auto kA = static_cast<MultipoleKind>(ka);
              const auto kB = static_cast<MultipoleKind>(kb);
              out.entries_(multipole_index(kA, la, ma, l_max), multipole_index(kB, lb, mb, l_max)) =
                  entries_(multipole_index(kA, la, ma, l_max_), multipole_index(kB, lb, mb, l_max_));
            }
  return out;
}

namespace {

// Cartesian (x, y, z) -> dipole slot m = (-1, 0, 1) holds (y, z, x).
constexpr int kCart[3] = {1, 2, 0};

void put_block(MatX& t, MultipoleKind row, MultipoleKind col, const Mat3& a, double scale) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      t(multipole_index(row, 1, i - 1, 1), multipole_index(col, 1, j - 1, 1)) =
          scale * a(kCart[i], kCart[j]);
}

Mat3 get_block(const MatX& t, MultipoleKind row, MultipoleKind col, int l_max, double scale) {
  Mat3 a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      a(kCart[i], kCart[j]) =
          scale * t(multipole_index(row, 1, i - 1, l_max), multipole_index(col, 1, j - 1, l_max));
  return a;
}

}  // namespace

TMatrix tmatrix_from_polarizability(const Polarizability& alpha, double xi) {
  if (!(xi > 0.0)) throw ConfigError("tmatrix_from_polarizability: xi must be > 0");
  const double s = xi * xi * xi;
  MatX t = MatX::Zero(6, 6);
  put_block(t, MultipoleKind::E, MultipoleKind::E, alpha.ee, s);
  put_block(t, MultipoleKind::E, MultipoleKind::M, alpha.em, s);
  put_block(t, MultipoleKind::M, MultipoleKind::E, alpha.me, s);
  put_block(t, MultipoleKind::M, MultipoleKind::M, alpha.mm, s);
  return TMatrix(xi, 1, std::move(t));
}

Polarizability polarizability_from_tmatrix(const TMatrix& t) {
  const double s = 1.0 / std::pow(t.xi(), 3);
  Polarizability a;
  a.ee = get_block(t.entries(), MultipoleKind::E, MultipoleKind::E, t.l_max(), s);
  a.em = get_block(t.entries(), MultipoleKind::E, MultipoleKind::M, t.l_max(), s);
  a.me = get_block(t.entries(), MultipoleKind::M, MultipoleKind::E, t.l_max(), s);
  a.mm = get_block(t.entries(), MultipoleKind::M, MultipoleKind::M, t.l_max(), s);
  return a;
}

MatX rotation_operator(int l_max, const Rotation& r) {
  const int n = tmatrix_dimension(l_max);
  MatX d = MatX::Zero(n, n);
  for (int l = 1; l <= l_max; ++l) {
    const MatX dl = wavebasis::real_wigner_rotation(l, r);
    for (int kind = 0; kind < 2; ++kind) {
      const int off = multipole_index(static_cast<MultipoleKind>(kind), l, -l, l_max);
      d.block(off, off, 2 * l + 1, 2 * l + 1) = dl;
    }
  }
  return d;
}

MatX mirror_operator(int l_max, MirrorPlane plane) {
  const int n = tmatrix_dimension(l_max);
  MatX m = MatX::Zero(n, n);
  for (int l = 1; l <= l_max; ++l) {
    const auto par = wavebasis::mirror_parity(l, plane);
    for (int mm = -l; mm <= l; ++mm) {
      const int ie = multipole_index(MultipoleKind::E, l, mm, l_max);
      const int im = multipole_index(MultipoleKind::M, l, mm, l_max);
      m(ie, ie) = par[mm + l];
      m(im, im) = -par[mm + l];
    }
  }
  return m;
}

TMatrix rotate_tmatrix(const TMatrix& t, const Rotation& r) {
  const MatX d = rotation_operator(t.l_max(), r);
  return TMatrix(t.xi(), t.l_max(), d * t.entries() * d.transpose());
}

TMatrix mirror_tmatrix(const TMatrix& t, MirrorPlane plane) {
  const MatX m = mirror_operator(t.l_max(), plane);
  return TMatrix(t.xi(), t.l_max(), m * t.entries() * m);
}

double reciprocity_defect(const TMatrix& t) {
  const int nm = multipole_count(t.l_max());
  MatX st = t.entries();
  st.topRightCorner(nm, nm) *= -1.0;
  st.bottomLeftCorner(nm, nm) *= -1.0;
  const double scale = t.entries().cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return (t.entries().transpose() - st).cwiseAbs().maxCoeff() / scale;
}

// ---------------------------------------------------------------------------
// Files

namespace {

using nlohmann::json;

const json& require(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("T-matrix file: missing field '") + key + "'");
  return j.at(key);
}

double entry_value(const json& e, std::size_t idx, double tol) {
  auto where = [&] { return "T-matrix file: entries[" + std::to_string(idx) + "]"; };
  if (e.is_number()) return e.get<double>();
  if (!e.is_array() || e.empty() || e.size() > 2)
    throw ConfigError(where() + ": expected a number, [re] or [re, im]");
  for (const auto& c : e)
    if (!c.is_number()) throw ConfigError(where() + ": components must be numbers");
  if (e.size() == 2) {
    const double im = e[1].get<double>();
    if (std::abs(im) > tol)
      throw ConfigError(where() + ": imaginary part " + std::to_string(im) +
                        " exceeds realness tolerance");
  }
  return e[0].get<double>();
}

}  // namespace

TMatrix parse_tmatrix(const std::string& text, const LoadOptions& opts) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("T-matrix file: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("T-matrix file: top level must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "xi" && key != "l_max" && key != "convention_id" && key != "entries")
      throw ConfigError("T-matrix file: unknown field '" + key + "'");

  const auto& cid = require(j, "convention_id");
  if (!cid.is_string() || cid.get<std::string>() != wavebasis::kConventionId)
    throw ConfigError("T-matrix file: field 'convention_id' does not match '" +
                      std::string(wavebasis::kConventionId) + "'");
  const auto& jxi = require(j, "xi");
  if (!jxi.is_number() || !(jxi.get<double>() > 0.0))
    throw ConfigError("T-matrix file: field 'xi' must be a positive number");
  const auto& jl = require(j, "l_max");
  if (!jl.is_number_integer() || jl.get<int>() < 1 || jl.get<int>() > 4)
    throw ConfigError("T-matrix file: field 'l_max' must be an integer in [1, 4]");
  const int l_max = jl.get<int>();
  const auto& je = require(j, "entries");
  const int n = tmatrix_dimension(l_max);
  if (!je.is_array() || je.size() != static_cast<std::size_t>(n) * n)
    throw ConfigError("T-matrix file: field 'entries' must hold " + std::to_string(n * n) +
                      " values for l_max = " + std::to_string(l_max));
  MatX m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * n + c;
      m(r, c) = entry_value(je[idx], idx, opts.realness_tolerance);
    }
  TMatrix t(jxi.get<double>(), l_max, std::move(m));
  if (opts.check_reciprocity) {
    const double d = reciprocity_defect(t);
    if (d > opts.reciprocity_tolerance)
      throw ConfigError("T-matrix file: reciprocity defect " + std::to_string(d) +
                        " exceeds tolerance");
  }
  return t;
}

TMatrix load_tmatrix(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open T-matrix file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_tmatrix(ss.str(), opts);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_tmatrix(const TMatrix& t) {
  json j;
  j["convention_id"] = std::string(wavebasis::kConventionId);
  j["xi"] = t.xi();
  j["l_max"] = t.l_max();
  json entries = json::array();
  const MatX& m = t.entries();
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) entries.push_back(json::array({m(r, c)}));
  j["entries"] = std::move(entries);
  return j.dump();
}

void save_tmatrix(const TMatrix& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write T-matrix file " + path.string());
  out << serialize_tmatrix(t) << '\n';
}

// ---------------------------------------------------------------------------
// Models

OmegaParticleModel::OmegaParticleModel(OmegaParticleParams params) : params_(std::move(params)) {
  params_.validate();
}

TMatrix OmegaParticleModel::tmatrix(double xi) const {
  return tmatrix_from_polarizability(omega_polarizability(params_, xi), xi);
}

TabulatedParticleModel::TabulatedParticleModel(std::vector<TMatrix> samples)
    : samples_(std::move(samples)) {
  if (samples_.empty()) throw ConfigError("tabulated particle: no samples");
  std::sort(samples_.begin(), samples_.end(),
            [](const TMatrix& a, const TMatrix& b) { return a.xi() < b.xi(); });
  l_max_ = 1;
  for (const auto& s : samples_) l_max_ = std::max(l_max_, s.l_max());
  // Interpolate the reduced matrix T / xi^3, which tends to the static
  // polarizability and varies far less than T itself.
  for (auto& s : samples_)
    s = TMatrix(s.xi(), l_max_, s.resized(l_max_).entries() / std::pow(s.xi(), 3));
  for (std::size_t i = 1; i < samples_.size(); ++i)
    if (!(samples_[i].xi() > samples_[i - 1].xi()))
      throw ConfigError("tabulated particle: duplicate frequency samples");

  // Monotone cubic (Fritsch-Butland) slopes, entry by entry.
  const std::size_t n = samples_.size();
  const int dim = samples_[0].dimension();
  slopes_.assign(n, MatX::Zero(dim, dim));
  if (n < 2) return;
  std::vector<MatX> delta(n - 1);
  std::vector<double> h(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = samples_[i + 1].xi() - samples_[i].xi();
    delta[i] = (samples_[i + 1].entries() - samples_[i].entries()) / h[i];
  }
  if (n == 2) {
    slopes_[0] = slopes_[1] = delta[0];
    return;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double w1 = 2.0 * h[i] + h[i - 1], w2 = h[i] + 2.0 * h[i - 1];
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) {
        const double d0 = delta[i - 1](r, c), d1 = delta[i](r, c);
        slopes_[i](r, c) = (d0 * d1 > 0.0) ? (w1 + w2) / (w1 / d0 + w2 / d1) : 0.0;
      }
  }
  auto end_slope = [&](double h0, double h1, const MatX& d0, const MatX& d1) {
    MatX m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    for (int r = 0; r < dim; ++r)
      for (int c = 0; c < dim; ++c) {
        if (m(r, c) * d0(r, c) <= 0.0)
          m(r, c) = 0.0;
        else if (d0(r, c) * d1(r, c) <= 0.0 && std::abs(m(r, c)) > 3.0 * std::abs(d0(r, c)))
          m(r, c) = 3.0 * d0(r, c);
      }
    return m;
  };
  slopes_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
  slopes_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

TMatrix TabulatedParticleModel::tmatrix(double xi) const {
  if (!(xi > 0.0)) throw ConfigError("tabulated particle: xi must be > 0");
  const auto& lo = samples_.front();
  const auto& hi = samples_.back();
  const double xi3 = xi * xi * xi;
  if (xi <= lo.xi()) return TMatrix(xi, l_max_, lo.entries() * xi3);
  if (xi >= hi.xi()) return TMatrix(xi, l_max_, hi.entries() * xi3);
  const auto it = std::upper_bound(samples_.begin(), samples_.end(), xi,
                                   [](double x, const TMatrix& t) { return x < t.xi(); });
  const std::size_t i = static_cast<std::size_t>(it - samples_.begin()) - 1;
  const double h = samples_[i + 1].xi() - samples_[i].xi();
  const double t = (xi - samples_[i].xi()) / h;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  MatX m = h00 * samples_[i].entries() + h10 * h * slopes_[i] + h01 * samples_[i + 1].entries() +
           h11 * h * slopes_[i + 1];
  return TMatrix(xi, l_max_, m * xi3);
}

}  // namespace chiralcasimir::scatterers
