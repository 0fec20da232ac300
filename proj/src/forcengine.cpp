#include "chiralcasimir/forcengine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>

#include <Eigen/LU>

namespace chiralcasimir::forcengine {

using lattice::ReflectionMatrix;
using wavebasis::GSet;

Body Body::from_cell(lattice::UnitCell cell, int layers) {
  if (layers < 0) throw ConfigError("lattice body: layers must be >= 0");
  Body b;
  b.kind = Kind::lattice;
  b.cell = std::move(cell);
  b.layers = layers;
  return b;
}

Body Body::from_slab(std::shared_ptr<const ema::ChiralSlabModel> slab) {
  if (!slab) throw ConfigError("slab body: model missing");
  Body b;
  b.kind = Kind::slab;
  b.slab = std::move(slab);
  return b;
}

Body mirrored(const Body& body) {
  Body out = body;
  if (body.kind == Body::Kind::lattice)
    out.cell = lattice::mirror_cell(body.cell, wavebasis::MirrorPlane::yz);
  else
    out.slab = std::make_shared<ema::MirroredSlab>(body.slab);
  return out;
}

const char* to_string(Chirality c) { return c == Chirality::SC ? "SC" : "OC"; }

void LatticePairConfig::validate() const {
  if (!(z > 0.0) || !std::isfinite(z)) throw ConfigError("separation z must be > 0");
  if (l_max < 1) throw ConfigError("l_max must be >= 1");
  if (!(g_max >= 0.0)) throw ConfigError("g_max must be >= 0");
  if (!(prune_tol >= 0.0 && prune_tol < 1.0)) throw ConfigError("prune_tol must lie in [0, 1)");
  const auto& q = quadrature;
  if (q.xi_order < 4 || q.k_order < 4 || q.radial_order < 4)
    throw ConfigError("quadrature orders must be >= 4");
  if (!(q.xi_scale_factor > 0.0)) throw ConfigError("xi_scale_factor must be > 0");
  if (!(q.rel_tol > 0.0)) throw ConfigError("rel_tol must be > 0");
  if (q.max_refinements < 0) throw ConfigError("max_refinements must be >= 0");
  for (const Body* b : {&lower, &upper})
    if (b->kind == Body::Kind::slab && !b->slab) throw ConfigError("slab body: model missing");
}

LatticePairConfig opposite_pairing(const LatticePairConfig& c) {
  LatticePairConfig o = c;
  o.lower = mirrored(c.lower);
  return o;
}

namespace {

// ---------------------------------------------------------------------------
// A body frozen at one frequency.

class Prepared {
 public:
  Prepared(const Body& body, double xi, int l_max) : body_(&body), xi_(xi) {
    if (body.kind == Body::Kind::lattice) {
      cell_.emplace(body.cell, xi, std::min(l_max, body.cell.l_max()));
    } else {
      ideal_ = body.slab->ideal_mirror();
      if (!ideal_) {
        medium_ = body.slab->at(xi);
        ema::validate(medium_);
      }
    }
  }

  CMatX reflection(Wavevector2 k, const GSet& g, Direction out) const {
    const int n = static_cast<int>(g.size());
    if (cell_) {
      ReflectionMatrix r = lattice::cell_reflection(*cell_, k, g, out);
      if (body_->layers == 0) return lattice::stack_semi_infinite(r).m;
      if (body_->layers == 1) return r.m;
      return lattice::stack_layers(r, body_->layers).m;
    }
    CMatX m = CMatX::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) {
      if (ideal_) {
        m(2 * i, 2 * i) = -1.0;
        m(2 * i + 1, 2 * i + 1) = 1.0;
      } else {
        m.block(2 * i, 2 * i, 2, 2) = ema::chiral_fresnel(medium_, xi_, k + g.vector(i), out);
      }
    }
    return m;
  }

 private:
  const Body* body_;
  double xi_;
  std::optional<lattice::FrequencyCell> cell_;
  ema::MediumParams medium_;
  bool ideal_ = false;
};

// ---------------------------------------------------------------------------
// Brillouin-zone rule in polar form about k = 0, halved by k -> -k.
// Angular panels end at the square's corners; radial panels are graded
// from 0.5 min(xi, 1/z) so the cone of kappa at small xi is resolved.

struct KNode {
  Wavevector2 k;
  double w;
};

std::vector<std::vector<KNode>> bz_rule(double xi, double z, int order) {
  std::vector<std::vector<KNode>> rays;
  const double first = 0.5 * std::min(xi, 1.0 / z);
  for (int panel = 0; panel < 4; ++panel) {
    const auto th = quadrature::gauss_legendre(order, panel * pi / 4, (panel + 1) * pi / 4);
    for (std::size_t a = 0; a < th.size(); ++a) {
      const double c = std::cos(th.x[a]), s = std::sin(th.x[a]);
      const double rmax = pi / std::max(std::abs(c), std::abs(s));
      const auto rr = quadrature::graded_half_line(rmax, std::min(first, 0.5 * rmax), order);
      std::vector<KNode> ray;
      for (std::size_t b = 0; b < rr.size(); ++b)
        ray.push_back({{rr.x[b] * c, rr.x[b] * s}, 2.0 * th.w[a] * rr.w[b] * rr.x[b]});
      rays.push_back(std::move(ray));
    }
  }
  return rays;
}

// Channels whose round trip is suppressed by more than prune_tol relative
// to the slowest-decaying one are dropped.
GSet active_channels(const GSet& full, double xi, Wavevector2 k, double z, double prune_tol) {
  if (prune_tol <= 0.0) return full;
  std::vector<double> kz(full.size());
  double kmin = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < full.size(); ++g) {
    kz[g] = wavebasis::decay_constant(xi, k + full.vector(g));
    kmin = std::min(kmin, kz[g]);
  }
  const double cut = -std::log(prune_tol) / (2.0 * z);
  std::vector<std::array<int, 2>> keep;
  for (std::size_t g = 0; g < full.size(); ++g)
    if (kz[g] - kmin <= cut) keep.push_back(full.index(g));
  if (keep.size() == full.size()) return full;
  return GSet::from_indices(std::move(keep), full.radius());
}

constexpr double kNegligibleExponent = 46.0;

struct Variant {
  bool mirrored_lower = false;
  Shift2 shift;
};

struct LogDetForce {
  double log_det = 0.0;  // log |det(I - M)|
  double dz = 0.0;       // d/dz of it
};

// Reduced round trip with the trace formula.  A reflects up at z = 0,
// B reflects down at z = 0 of its own frame.
LogDetForce evaluate(const CMatX& a, const CMatX& b, const Eigen::VectorXd& kz, double z) {
  const Eigen::ArrayXd x = (-kz.array() * z).exp();
  const CMatX p = x.matrix().asDiagonal() * b * x.matrix().asDiagonal();
  const auto n = a.rows();
  const CMatX lhs = CMatX::Identity(n, n) - a * p;
  const Eigen::PartialPivLU<CMatX> lu(lhs);
  const CMatX& f = lu.matrixLU();
  double ld = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) ld += std::log(std::abs(f(i, i)));
  const CMatX q = lu.solve(a);
  double tr = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    tr += kz(i) * (p.row(i).transpose().cwiseProduct(q.col(i)).sum() +
                   q.row(i).transpose().cwiseProduct(p.col(i)).sum())
                      .real();
  // d/dz log det(I - M) = tr[(I - M)^-1 A (K P + P K)]
  return {ld, tr};
}

CMatX displaced(const CMatX& r, const GSet& g, Shift2 s) {
  if (s.x == 0.0 && s.y == 0.0) return r;
  CMatX out = r;
  const int n = static_cast<int>(g.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Wavevector2 d = g.vector(i) - g.vector(j);
      out.block(2 * i, 2 * j, 2, 2) *= std::exp(-I * (d.x * s.x + d.y * s.y));
    }
  return out;
}

Eigen::VectorXd channel_decay(const GSet& g, double xi, Wavevector2 k) {
  Eigen::VectorXd kz(2 * g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    kz(2 * i) = kz(2 * i + 1) = wavebasis::decay_constant(xi, k + g.vector(i));
  return kz;
}

// All variants at one (xi, k).  Output layout: [e0, f0, e1, f1, ...].
void point_variants(const Prepared& lower, const Prepared* lower_m, const Prepared& upper,
                    const LatticePairConfig& c, double xi, Wavevector2 k, const GSet& full,
                    const std::vector<Variant>& variants, double w, std::vector<double>& acc) {
  // Every channel has kappa >= xi; past exp(-46) the round trip is noise.
  if (2.0 * xi * c.z > kNegligibleExponent) return;
  const GSet g = active_channels(full, xi, k, c.z, c.prune_tol);
  const Eigen::VectorXd kz = channel_decay(g, xi, k);
  const CMatX ra = lower.reflection(k, g, Direction::up);
  std::optional<CMatX> ra_m;
  if (lower_m) ra_m = lower_m->reflection(k, g, Direction::up);
  const CMatX rb = upper.reflection(k, g, Direction::down);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const CMatX& a = variants[v].mirrored_lower ? *ra_m : ra;
    const auto r = evaluate(a, displaced(rb, g, variants[v].shift), kz, c.z);
    acc[2 * v] += w * r.log_det;
    acc[2 * v + 1] += w * r.dz;
  }
}

// k-integrals of every variant at each xi node; rows indexed by xi.
// Work is split over (xi, ray) pairs; each pair writes its own slot and
// the reduction runs serially in index order, so the result does not
// depend on the thread count.
std::vector<std::vector<double>> k_integrals(const LatticePairConfig& c,
                                             const std::vector<Variant>& variants,
                                             const std::vector<double>& xi_nodes, int k_order) {
  const bool need_mirror =
      std::any_of(variants.begin(), variants.end(), [](const Variant& v) { return v.mirrored_lower; });
  const Body lower_m = need_mirror ? mirrored(c.lower) : Body{};
  const GSet full = GSet::within(c.g_max);
  const std::size_t nx = xi_nodes.size();

  std::vector<std::vector<std::vector<KNode>>> rules(nx);
  std::vector<std::size_t> offset(nx + 1, 0);
  for (std::size_t i = 0; i < nx; ++i) {
    rules[i] = bz_rule(xi_nodes[i], c.z, k_order);
    offset[i + 1] = offset[i] + rules[i].size();
  }

  std::vector<std::unique_ptr<Prepared>> low(nx), low_m(nx), up(nx);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < nx; ++i) {
    try {
      low[i] = std::make_unique<Prepared>(c.lower, xi_nodes[i], c.l_max);
      if (need_mirror) low_m[i] = std::make_unique<Prepared>(lower_m, xi_nodes[i], c.l_max);
      up[i] = std::make_unique<Prepared>(c.upper, xi_nodes[i], c.l_max);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  const std::size_t n_tasks = offset[nx];
  std::vector<std::vector<double>> slots(n_tasks, std::vector<double>(2 * variants.size(), 0.0));
  std::vector<std::size_t> task_xi(n_tasks);
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t t = offset[i]; t < offset[i + 1]; ++t) task_xi[t] = i;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t t = 0; t < n_tasks; ++t) {
    try {
      const std::size_t i = task_xi[t];
      for (const auto& node : rules[i][t - offset[i]])
        point_variants(*low[i], low_m[i].get(), *up[i], c, xi_nodes[i], node.k, full, variants,
                       node.w, slots[t]);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  std::vector<std::vector<double>> out(nx, std::vector<double>(2 * variants.size(), 0.0));
  for (std::size_t t = 0; t < n_tasks; ++t)
    for (std::size_t j = 0; j < out[task_xi[t]].size(); ++j) out[task_xi[t]][j] += slots[t][j];
  return out;
}

// Error estimate: compare with two thirds of the xi order and two fewer
// points per k panel.
int embedded(int n_xi) { return (2 * n_xi + 2) / 3; }

constexpr double kNorm = 1.0 / (8.0 * pi * pi * pi);  // 1/(2 pi) * 1/(2 pi)^2

std::vector<double> fixed_rule(const LatticePairConfig& c, const std::vector<Variant>& variants,
                               int xi_order, int k_order) {
  const auto xr = quadrature::semi_infinite(xi_order, c.quadrature.xi_scale_factor / c.z);
  const auto per_xi = k_integrals(c, variants, xr.x, k_order);
  std::vector<double> total(2 * variants.size(), 0.0);
  for (std::size_t i = 0; i < xr.size(); ++i)
    for (std::size_t j = 0; j < total.size(); ++j) total[j] += xr.w[i] * per_xi[i][j] * kNorm;
  return total;
}

std::vector<ForceResult> integrate_variants(const LatticePairConfig& c,
                                            const std::vector<Variant>& variants) {
  const auto& q = c.quadrature;
  int n_xi = q.xi_order, n_k = q.k_order;
  std::vector<double> coarse = fixed_rule(c, variants, embedded(n_xi), n_k - 2);
  for (int level = 0;; ++level) {
    const std::vector<double> fine = fixed_rule(c, variants, n_xi, n_k);
    std::vector<ForceResult> out(variants.size());
    bool ok = true;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      out[v].energy = {fine[2 * v], std::abs(fine[2 * v] - coarse[2 * v]), true};
      out[v].force = {fine[2 * v + 1], std::abs(fine[2 * v + 1] - coarse[2 * v + 1]), true};
      const double scale_f = std::abs(out[v].force.value), scale_e = std::abs(out[v].energy.value);
      // An identically vanishing integral (e.g. an empty cell) is converged.
      if (out[v].force.error > q.rel_tol * scale_f && scale_f > 0.0) ok = false;
      if (out[v].energy.error > q.rel_tol * scale_e && scale_e > 0.0) ok = false;
    }
    if (ok || level >= q.max_refinements) {
      for (auto& r : out) {
        r.force.converged = r.force.error <= q.rel_tol * std::abs(r.force.value);
        r.energy.converged = r.energy.error <= q.rel_tol * std::abs(r.energy.value);
      }
      return out;
    }
    n_xi *= 2;
    n_k *= 2;
    coarse = fixed_rule(c, variants, embedded(n_xi), n_k - 2);
  }
}

// ---------------------------------------------------------------------------
// Serial reference: full G-set, explicit dM/dz, determinant and inverse
// taken directly.  Shares only the quadrature rules with the fast kernel.

std::vector<double> reference_fixed(const LatticePairConfig& c, int xi_order, int k_order) {
  const auto xr = quadrature::semi_infinite(xi_order, c.quadrature.xi_scale_factor / c.z);
  const GSet g = GSet::within(c.g_max);
  const int n = 2 * static_cast<int>(g.size());
  double e = 0.0, f = 0.0;
  for (std::size_t i = 0; i < xr.size(); ++i) {
    const double xi = xr.x[i];
    const Prepared low(c.lower, xi, c.l_max), up(c.upper, xi, c.l_max);
    double ei = 0.0, fi = 0.0;
    for (const auto& ray : bz_rule(xi, c.z, k_order))
      for (const auto& node : ray) {
        const CMatX a = low.reflection(node.k, g, Direction::up);
        const CMatX b = displaced(up.reflection(node.k, g, Direction::down), g, c.shift);
        Eigen::VectorXcd x(n), kx(n);
        for (int j = 0; j < n; ++j) {
          const double kz = wavebasis::decay_constant(xi, node.k + g.vector(j / 2));
          x(j) = std::exp(-kz * c.z);
          kx(j) = kz * x(j);
        }
        const CMatX m = a * x.asDiagonal() * b * x.asDiagonal();
        const CMatX dm = -(a * kx.asDiagonal() * b * x.asDiagonal()) -
                         (a * x.asDiagonal() * b * kx.asDiagonal());
        const CMatX lhs = CMatX::Identity(n, n) - m;
        ei += node.w * std::log(std::abs(lhs.determinant()));
        fi += node.w * -(lhs.inverse() * dm).trace().real();
      }
    e += xr.w[i] * ei * kNorm;
    f += xr.w[i] * fi * kNorm;
  }
  return {e, f};
}

ForceResult reference(const LatticePairConfig& c) {
  const auto& q = c.quadrature;
  int n_xi = q.xi_order, n_k = q.k_order;
  std::vector<double> coarse = reference_fixed(c, embedded(n_xi), n_k - 2);
  for (int level = 0;; ++level) {
    const std::vector<double> fine = reference_fixed(c, n_xi, n_k);
    ForceResult r;
    r.energy = {fine[0], std::abs(fine[0] - coarse[0]), true};
    r.force = {fine[1], std::abs(fine[1] - coarse[1]), true};
    r.energy.converged = r.energy.error <= q.rel_tol * std::abs(r.energy.value);
    r.force.converged = r.force.error <= q.rel_tol * std::abs(r.force.value);
    const bool ok = (r.energy.converged || fine[0] == 0.0) && (r.force.converged || fine[1] == 0.0);
    if (ok || level >= q.max_refinements) return r;
    n_xi *= 2;
    n_k *= 2;
    coarse = reference_fixed(c, embedded(n_xi), n_k - 2);
  }
}

}  // namespace

ForceResult casimir(const LatticePairConfig& config, Kernel kernel) {
  config.validate();
  if (kernel == Kernel::serial_reference) return reference(config);
  return integrate_variants(config, {Variant{false, config.shift}}).front();
}

IntegralResult casimir_energy(const LatticePairConfig& config) { return casimir(config).energy; }
IntegralResult casimir_force(const LatticePairConfig& config) { return casimir(config).force; }

CMatX roundtrip(const ReflectionMatrix& r_lower, const ReflectionMatrix& r_upper, double z) {
  if (r_lower.m.rows() != r_upper.m.rows() || r_lower.gset.size() != r_upper.gset.size() ||
      r_lower.xi != r_upper.xi || r_lower.k.x != r_upper.k.x || r_lower.k.y != r_upper.k.y)
    throw std::invalid_argument("roundtrip: reflection matrices do not share (xi, k, G-set)");
  const Eigen::VectorXd kz = channel_decay(r_lower.gset, r_lower.xi, r_lower.k);
  const Eigen::VectorXcd x = (-kz.array() * z).exp().cast<cplx>().matrix();
  return r_lower.m * x.asDiagonal() * r_upper.m * x.asDiagonal();
}

PointValue point_integrand(const LatticePairConfig& c, double xi, Wavevector2 k) {
  c.validate();
  const GSet g = GSet::within(c.g_max);
  const Prepared low(c.lower, xi, c.l_max), up(c.upper, xi, c.l_max);
  ReflectionMatrix a{xi, k, g, Direction::up, low.reflection(k, g, Direction::up)};
  ReflectionMatrix b{xi, k, g, Direction::down,
                     displaced(up.reflection(k, g, Direction::down), g, c.shift)};
  const int n = static_cast<int>(a.m.rows());
  const CMatX lhs = CMatX::Identity(n, n) - roundtrip(a, b, c.z);
  const Eigen::VectorXd kz = channel_decay(g, xi, k);
  return {std::log(lhs.determinant()), evaluate(a.m, b.m, kz, c.z).dz};
}

// ---------------------------------------------------------------------------

std::vector<double> default_z_grid() {
  std::vector<double> z(16);
  for (int i = 0; i < 16; ++i) z[i] = 1.5 * std::pow(4.0, i / 15.0);
  z.back() = 6.0;
  return z;
}

std::vector<double> default_x_grid() {
  std::vector<double> x(8);
  for (int i = 0; i < 8; ++i) x[i] = 0.5 * i / 7.0;
  return x;
}

double SweepSummaryRow::spread() const {
  return std::max(f_max_sc - f_min_sc, f_max_oc - f_min_oc);
}

bool SweepResult::all_converged() const {
  return std::all_of(rows.begin(), rows.end(), [](const ForceRow& r) {
    return r.force.converged && r.energy.converged;
  });
}

SweepResult sweep_sc_oc(const SweepConfig& config, Kernel kernel) {
  if (config.z_grid.empty() || config.x_grid.empty())
    throw ConfigError("sweep: z and x grids must be non-empty");
  SweepResult out;
  out.normalization = config.normalization;
  for (double z : config.z_grid) {
    LatticePairConfig c = config.base;
    c.z = z;
    c.validate();
    std::vector<Variant> variants;
    for (double x : config.x_grid) {
      variants.push_back({false, {x, 0.0}});
      variants.push_back({true, {x, 0.0}});
    }
    std::vector<ForceResult> res;
    if (kernel == Kernel::parallel) {
      res = integrate_variants(c, variants);
    } else {
      for (const auto& v : variants) {
        LatticePairConfig cv = v.mirrored_lower ? opposite_pairing(c) : c;
        cv.shift = v.shift;
        res.push_back(reference(cv));
      }
    }

    SweepSummaryRow s;
    s.z = z;
    s.f_min_sc = s.f_min_oc = std::numeric_limits<double>::infinity();
    s.f_max_sc = s.f_max_oc = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const Chirality ch = variants[v].mirrored_lower ? Chirality::OC : Chirality::SC;
      out.rows.push_back({z, variants[v].shift.x, ch, res[v].force, res[v].energy});
      const double f = res[v].force.value;
      if (ch == Chirality::SC) {
        s.f_min_sc = std::min(s.f_min_sc, f);
        s.f_max_sc = std::max(s.f_max_sc, f);
        s.mean_sc += f;
      } else {
        s.f_min_oc = std::min(s.f_min_oc, f);
        s.f_max_oc = std::max(s.f_max_oc, f);
        s.mean_oc += f;
      }
    }
    const double nx = static_cast<double>(config.x_grid.size());
    s.mean_sc /= nx;
    s.mean_oc /= nx;
    if (config.normalization == Normalization::global)
      s.rel_diff = (s.mean_oc - s.mean_sc) / std::min(s.f_min_sc, s.f_min_oc);
    else
      s.rel_diff = s.mean_oc / s.f_min_oc - s.mean_sc / s.f_min_sc;
    out.summary.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------

double IntegrandTrace::peak_difference() const {
  double p = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) p = std::max(p, std::abs(difference(i)));
  return p;
}

namespace {

bool slab_pair(const LatticePairConfig& c) {
  return c.lower.kind == Body::Kind::slab && c.upper.kind == Body::Kind::slab;
}

// dF/dxi of SC and OC at the given nodes, interleaved [sc0, oc0, sc1, ...].
std::vector<double> pair_integrands(const LatticePairConfig& c, const std::vector<double>& xi) {
  std::vector<double> out;
  if (slab_pair(c)) {
    const auto& up = *c.upper.slab;
    const auto sc = ema::ema_force_integrand(*c.lower.slab, up, c.z, xi, c.quadrature);
    const ema::MirroredSlab lm(c.lower.slab);
    const auto oc = ema::ema_force_integrand(lm, up, c.z, xi, c.quadrature);
    for (std::size_t i = 0; i < xi.size(); ++i) {
      out.push_back(sc[i]);
      out.push_back(oc[i]);
    }
    return out;
  }
  const auto per_xi = k_integrals(c, {{false, c.shift}, {true, c.shift}}, xi, c.quadrature.k_order);
  for (const auto& row : per_xi) {
    out.push_back(row[1] * kNorm);
    out.push_back(row[3] * kNorm);
  }
  return out;
}

}  // namespace

IntegrandTrace difference_integrand(const LatticePairConfig& config, std::vector<double> xi) {
  config.validate();
  const double z = config.z;
  if (xi.empty()) {
    for (int i = 0; i < 40; ++i) xi.push_back(0.01 / z * std::pow(1200.0, i / 39.0));
  }
  for (double x : xi)
    if (!(x > 0.0)) throw ConfigError("integrand: xi values must be > 0");
  IntegrandTrace t;
  t.xi = xi;
  t.xi_min = 1e-4 / z;
  std::vector<double> nodes = xi;
  for (double f : {1.0, 2.0, 4.0}) nodes.push_back(f * t.xi_min);
  const auto v = pair_integrands(config, nodes);
  for (std::size_t i = 0; i < xi.size(); ++i) {
    t.sc.push_back(v[2 * i]);
    t.oc.push_back(v[2 * i + 1]);
  }
  // Cancels the linear and quadratic terms in xi.
  const std::size_t m = xi.size();
  auto extrapolate = [&](auto f) { return (8.0 * f(0) - 6.0 * f(1) + f(2)) / 3.0; };
  t.zero_limit = extrapolate([&](std::size_t j) { return v[2 * (m + j) + 1] - v[2 * (m + j)]; });
  t.zero_sc = extrapolate([&](std::size_t j) { return v[2 * (m + j)]; });
  t.zero_oc = extrapolate([&](std::size_t j) { return v[2 * (m + j) + 1]; });
  return t;
}

std::vector<double> force_integrand(const LatticePairConfig& config, const std::vector<double>& xi) {
  config.validate();
  if (slab_pair(config))
    return ema::ema_force_integrand(*config.lower.slab, *config.upper.slab, config.z, xi,
                                    config.quadrature);
  const auto per_xi = k_integrals(config, {{false, config.shift}}, xi, config.quadrature.k_order);
  std::vector<double> out;
  for (const auto& row : per_xi) out.push_back(row[1] * kNorm);
  return out;
}

// ---------------------------------------------------------------------------
// Pairwise estimator

namespace {

struct Dipole {
  Vec3 r;
  double alpha;
};

std::vector<Dipole> static_dipoles(const lattice::UnitCell& cell, double xi) {
  std::vector<Dipole> out;
  for (const auto& p : cell.particles) {
    const auto t = p.model->tmatrix(xi).resized(1);
    const auto a = scatterers::polarizability_from_tmatrix(t);
    out.push_back({p.position, ema::isotropic_average(a).electric});
  }
  return out;
}

struct EF {
  double e = 0.0, f = 0.0, err = 0.0;
};

// One layer pair at vertical distance dz with transverse offset d.
EF layer_pair(double c, double dz, Wavevector2 d) {
  EF s;
  if (dz > 4.0) {
    // Poisson summation: lattice corrections ~ exp(-2 pi dz).
    s.e = -2.0 * pi * c / (5.0 * std::pow(dz, 5));
    s.f = 2.0 * pi * c / std::pow(dz, 6);
    return s;
  }
  const double ox = d.x - std::round(d.x), oy = d.y - std::round(d.y);
  const double rc = std::max(8.0, 8.0 * dz);
  const int n = static_cast<int>(std::ceil(rc)) + 1;
  for (int u = -n; u <= n; ++u)
    for (int v = -n; v <= n; ++v) {
      const double rho2 = (ox + u) * (ox + u) + (oy + v) * (oy + v);
      if (rho2 >= rc * rc) continue;
      const double r2 = rho2 + dz * dz;
      const double r7 = std::pow(r2, 3.5);
      s.e += -c / r7;
      s.f += 7.0 * c * dz / (r7 * r2);
    }
  const double t2 = rc * rc + dz * dz;
  const double tail_e = -2.0 * pi * c / (5.0 * std::pow(t2, 2.5));
  const double tail_f = 2.0 * pi * c * dz / std::pow(t2, 3.5);
  s.e += tail_e;
  s.f += tail_f;
  s.err = std::abs(tail_f);
  return s;
}

}  // namespace

PairwiseResult pairwise_estimator(const LatticePairConfig& config, const PairwiseOptions& opts) {
  config.validate();
  if (config.lower.kind != Body::Kind::lattice || config.upper.kind != Body::Kind::lattice)
    throw ConfigError("pairwise estimator needs two lattice bodies");
  const auto lo = static_dipoles(config.lower.cell, opts.xi_static);
  const auto hi = static_dipoles(config.upper.cell, opts.xi_static);
  const double z = config.z;
  const double pref = 23.0 / (64.0 * pi * pi * pi);
  PairwiseResult out;
  if (lo.empty() || hi.empty()) return out;

  if (!opts.periodic) {
    for (const auto& a : lo)
      for (const auto& b : hi) {
        const Vec3 d(b.r.x() + config.shift.x - a.r.x(), b.r.y() + config.shift.y - a.r.y(),
                     z + b.r.z() - (a.r.z() - 1.0));
        const double r = d.norm(), c = pref * a.alpha * b.alpha;
        out.energy += -c / std::pow(r, 7);
        out.force += 7.0 * c * d.z() / std::pow(r, 9);
      }
    return out;
  }

  double cmax = 0.0;
  for (const auto& a : lo)
    for (const auto& b : hi) cmax = std::max(cmax, std::abs(pref * a.alpha * b.alpha));
  const int n_lo = config.lower.layers, n_hi = config.upper.layers;
  const double pairs = static_cast<double>(lo.size() * hi.size());
  for (int s = 0;; ++s) {
    if (z + s > 4.0) {
      // Every layer pair at this s is in the continuum regime (dz > z + s)
      // and contributes the same amount; count them instead.
      int mult = 0;
      for (int n = 0; n <= s; ++n)
        if (!((n_lo > 0 && n >= n_lo) || (n_hi > 0 && s - n >= n_hi))) ++mult;
      for (const auto& a : lo)
        for (const auto& b : hi) {
          const double dz = z + b.r.z() + s - (a.r.z() - 1.0);
          const EF v = layer_pair(pref * a.alpha * b.alpha, dz, {});
          out.energy += mult * v.e;
          out.force += mult * v.f;
        }
    } else {
      for (int n = 0; n <= s; ++n) {
        const int m = s - n;
        if ((n_lo > 0 && n >= n_lo) || (n_hi > 0 && m >= n_hi)) continue;
        for (const auto& a : lo)
          for (const auto& b : hi) {
            const double dz = z + b.r.z() + m - (a.r.z() - 1.0 - n);
            const Wavevector2 d{b.r.x() + config.shift.x - a.r.x(), b.r.y() + config.shift.y - a.r.y()};
            const EF v = layer_pair(pref * a.alpha * b.alpha, dz, d);
            out.energy += v.e;
            out.force += v.f;
            out.error += v.err;
          }
      }
    }
    const bool finite_stack = n_lo > 0 && n_hi > 0;
    if (finite_stack && s >= n_lo + n_hi - 2) break;
    // Remaining layer pairs: sum_{s' > s} (s' + 1) 2 pi C / (z + s')^6.
    const double u = z + s;
    const double tail = pairs * 2.0 * pi * cmax * (1.0 / (4.0 * std::pow(u, 4)) +
                                                   (2.0 - z) / (5.0 * std::pow(u, 5)));
    if (tail <= opts.rel_tol * std::abs(out.force)) {
      out.error += std::abs(tail);
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ema::ReflectionSource lattice_reflection_source(const Body& body, int l_max) {
  if (body.kind != Body::Kind::lattice) throw ConfigError("reflection source needs a lattice body");
  const GSet g = GSet::from_indices({{0, 0}}, 0.0);
  return [body, l_max, g](double xi, Wavevector2 k) -> ema::Mat2c {
    const Prepared p(body, xi, l_max);
    return p.reflection(k, g, Direction::up);
  };
}

std::vector<double> default_retrieval_grid() {
  std::vector<double> x(24);
  for (int i = 0; i < 24; ++i) x[i] = 0.02 * std::pow(2000.0, i / 23.0);
  return x;
}

RetrievedTable retrieve_table(const ema::ReflectionSource& source, const std::vector<double>& xi,
                              const ema::RetrievalOptions& opts) {
  if (xi.empty()) throw ConfigError("retrieval grid must be non-empty");
  for (std::size_t i = 1; i < xi.size(); ++i)
    if (!(xi[i] > xi[i - 1])) throw ConfigError("retrieval grid must increase");
  RetrievedTable t;
  t.rows.resize(xi.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < xi.size(); ++i) {
    try {
      t.rows[i] = ema::retrieve_ema(source, xi[i], opts);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  std::vector<double> e, m, k;
  for (const auto& r : t.rows) {
    e.push_back(r.params.eps);
    m.push_back(r.params.mu);
    k.push_back(r.params.kappa);
  }
  t.slab = std::make_shared<ema::TabulatedSlab>(xi, e, m, k);
  return t;
}

}  // namespace chiralcasimir::forcengine
