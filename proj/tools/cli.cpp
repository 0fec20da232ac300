#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <omp.h>
#include <openssl/evp.h>

#ifndef CHIRALCASIMIR_VERSION
#define CHIRALCASIMIR_VERSION "0.0.0"
#endif

namespace chiralcasimir::cli {

using nlohmann::json;
namespace fs = std::filesystem;
using forcengine::Body;
using forcengine::Chirality;

const char* library_version() { return CHIRALCASIMIR_VERSION; }

namespace {

constexpr double kHbarC = 3.161526773e-26;  // J m
constexpr double kLightSpeed = 299792458.0;  // m/s

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------
// Strict object reader: every key must be consumed; values read are echoed
// (with defaults) into the resolved form.

class Obj {
 public:
  Obj(const json& j, std::string where, json& out) : j_(j), where_(std::move(where)), out_(out) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
    out_ = json::object();
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  double number(const std::string& k, std::optional<double> def = {}) {
    const json* v = find(k, def.has_value());
    double x = def.value_or(0.0);
    if (v) {
      if (!v->is_number()) throw ConfigError(path(k) + ": expected a number");
      x = v->get<double>();
    }
    if (!std::isfinite(x)) throw ConfigError(path(k) + ": must be finite");
    out_[k] = x;
    return x;
  }

  int integer(const std::string& k, std::optional<int> def = {}) {
    const json* v = find(k, def.has_value());
    int x = def.value_or(0);
    if (v) {
      if (!v->is_number_integer()) throw ConfigError(path(k) + ": expected an integer");
      x = v->get<int>();
    }
    out_[k] = x;
    return x;
  }

  bool boolean(const std::string& k, std::optional<bool> def = {}) {
    const json* v = find(k, def.has_value());
    bool x = def.value_or(false);
    if (v) {
      if (!v->is_boolean()) throw ConfigError(path(k) + ": expected true or false");
      x = v->get<bool>();
    }
    out_[k] = x;
    return x;
  }

  std::string string(const std::string& k, std::optional<std::string> def = {}) {
    const json* v = find(k, def.has_value());
    std::string x = def.value_or("");
    if (v) {
      if (!v->is_string()) throw ConfigError(path(k) + ": expected a string");
      x = v->get<std::string>();
    }
    out_[k] = x;
    return x;
  }

  /// A number or a list of numbers; "default" selects `def`.
  std::vector<double> numbers(const std::string& k, const std::vector<double>& def) {
    const json* v = find(k, true);
    std::vector<double> x = def;
    if (v) {
      if (v->is_string() && v->get<std::string>() == "default") {
        x = def;
      } else if (v->is_number()) {
        x = {v->get<double>()};
      } else if (v->is_array()) {
        x.clear();
        for (const auto& e : *v) {
          if (!e.is_number()) throw ConfigError(path(k) + ": expected numbers");
          x.push_back(e.get<double>());
        }
      } else {
        throw ConfigError(path(k) + ": expected a number, a list or \"default\"");
      }
    }
    if (x.empty()) throw ConfigError(path(k) + ": must not be empty");
    for (double e : x)
      if (!std::isfinite(e)) throw ConfigError(path(k) + ": must be finite");
    out_[k] = x;
    return x;
  }

  Vec3 vec3(const std::string& k, std::optional<Vec3> def = {}) {
    const json* v = find(k, def.has_value());
    Vec3 x = def.value_or(Vec3::Zero());
    if (v) {
      if (!v->is_array() || v->size() != 3) throw ConfigError(path(k) + ": expected [x, y, z]");
      for (int i = 0; i < 3; ++i) {
        if (!(*v)[i].is_number()) throw ConfigError(path(k) + ": expected numbers");
        x(i) = (*v)[i].get<double>();
      }
    }
    out_[k] = {x(0), x(1), x(2)};
    return x;
  }

  const json& child(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }
  json& out(const std::string& k) { return out_[k]; }
  std::string path(const std::string& k) const { return where_ + "." + k; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json* find(const std::string& k, bool optional) {
    used_.insert(k);
    if (!j_.contains(k)) {
      if (!optional) throw ConfigError(path(k) + ": required");
      return nullptr;
    }
    return &j_.at(k);
  }

  const json& j_;
  std::string where_;
  json& out_;
  std::set<std::string> used_;
};

scatterers::OmegaParticleParams parse_omega(const json& j, const std::string& where, json& out,
                                             int handedness_default) {
  Obj o(j, where, out);
  scatterers::OmegaParticleParams p;
  p.A_e = o.number("A_e", p.A_e);
  p.A_m = o.number("A_m", p.A_m);
  p.A_c = o.number("A_c", p.A_c);
  p.A_s = o.number("A_s", p.A_s);
  p.omega0 = o.number("omega0", p.omega0);
  p.t_perp = o.number("t_perp", p.t_perp);
  p.axis = o.vec3("axis", p.axis);
  p.handedness = o.integer("handedness", handedness_default);
  o.finish();
  p.validate();
  return p;
}

lattice::PlacedParticle parse_particle(const json& j, const std::string& where, json& out,
                                       const fs::path& base) {
  Obj o(j, where, out);
  lattice::PlacedParticle p;
  p.position = o.vec3("position");
  for (int i = 0; i < 3; ++i)
    if (p.position(i) < 0.0 || p.position(i) >= 1.0)
      throw ConfigError(o.path("position") + ": components must lie in [0, 1)");
  Mat3 r = Mat3::Identity();
  if (o.has("axis_angle")) {
    const auto aa = o.numbers("axis_angle", {});
    if (aa.size() != 4) throw ConfigError(o.path("axis_angle") + ": expected [ax, ay, az, angle]");
    const Vec3 ax(aa[0], aa[1], aa[2]);
    if (!(ax.norm() > 0.0)) throw ConfigError(o.path("axis_angle") + ": zero axis");
    r = wavebasis::Rotation::axis_angle(ax, aa[3]).matrix();
  }
  if (o.boolean("mirror", false)) r = r * wavebasis::mirror_matrix(wavebasis::MirrorPlane::yz);
  p.orientation = r;

  const bool has_omega = o.has("omega"), has_files = o.has("tmatrix_files");
  if (has_omega == has_files)
    throw ConfigError(where + ": give exactly one of 'omega' or 'tmatrix_files'");
  if (has_omega) {
    p.model = std::make_shared<scatterers::OmegaParticleModel>(
        parse_omega(o.child("omega"), o.path("omega"), o.out("omega"), 1));
  } else {
    const json& files = o.child("tmatrix_files");
    if (!files.is_array() || files.empty())
      throw ConfigError(o.path("tmatrix_files") + ": expected a non-empty list of paths");
    std::vector<scatterers::TMatrix> samples;
    json& rec = o.out("tmatrix_files");
    rec = json::array();
    for (const auto& f : files) {
      if (!f.is_string()) throw ConfigError(o.path("tmatrix_files") + ": expected paths");
      const fs::path fp = base / f.get<std::string>();
      samples.push_back(scatterers::parse_tmatrix(read_file(fp)));
      rec.push_back({{"path", f.get<std::string>()}, {"sha256", sha256_hex(read_file(fp))}});
    }
    p.model = std::make_shared<scatterers::TabulatedParticleModel>(std::move(samples));
  }
  o.finish();
  return p;
}

Body parse_body(const json& j, const std::string& where, json& out, const fs::path& base) {
  Obj o(j, where, out);
  const std::string type = o.string("type");
  Body b;
  if (type == "omega_lattice" || type == "cell") {
    lattice::UnitCell cell;
    if (type == "omega_lattice") {
      const int hand = o.integer("handedness", 1);
      json tmp;
      const auto p = parse_omega(o.has("particle") ? o.child("particle") : json::object(),
                                 o.path("particle"), tmp, hand);
      o.out("particle") = tmp;
      cell = lattice::standard_omega_cell(hand, p);
    } else {
      const json& parts = o.child("particles");
      if (!parts.is_array()) throw ConfigError(o.path("particles") + ": expected a list");
      json& rec = o.out("particles");
      rec = json::array();
      for (std::size_t i = 0; i < parts.size(); ++i) {
        json r;
        cell.particles.push_back(
            parse_particle(parts[i], o.path("particles") + "[" + std::to_string(i) + "]", r, base));
        rec.push_back(r);
      }
    }
    const int layers = o.integer("layers", 0);
    b = Body::from_cell(std::move(cell), layers);
  } else if (type == "ideal_mirror") {
    b = Body::from_slab(std::make_shared<ema::IdealMirror>());
  } else if (type == "slab") {
    ema::MediumParams m;
    m.eps = o.number("eps");
    m.mu = o.number("mu", 1.0);
    m.kappa = o.number("kappa", 0.0);
    ema::validate(m);
    b = Body::from_slab(std::make_shared<ema::ConstantSlab>(m));
  } else if (type == "lorentz_slab") {
    ema::LorentzChiralParams p;
    p.d_eps = o.number("d_eps", p.d_eps);
    p.w_e = o.number("w_e", p.w_e);
    p.d_mu_static = o.number("d_mu_static", p.d_mu_static);
    p.d_mu = o.number("d_mu", p.d_mu);
    p.w_m = o.number("w_m", p.w_m);
    p.k0 = o.number("k0", p.k0);
    p.w_c = o.number("w_c", p.w_c);
    b = Body::from_slab(std::make_shared<ema::LorentzChiralSlab>(p));
  } else if (type == "slab_table") {
    const std::string rel = o.string("path");
    o.out("sha256") = sha256_hex(read_file(base / rel));
    b = Body::from_slab(ema::load_slab_table(base / rel));
  } else if (type == "omega_mixture") {
    const double density = o.number("density");
    if (!(density > 0.0)) throw ConfigError(o.path("density") + ": must be > 0");
    const std::string mode = o.string("cm", "full");
    if (mode != "full" && mode != "dilute") throw ConfigError(o.path("cm") + ": full or dilute");
    json tmp;
    const auto p = parse_omega(o.has("particle") ? o.child("particle") : json::object(),
                               o.path("particle"), tmp, 1);
    o.out("particle") = tmp;
    b = Body::from_slab(std::make_shared<ema::OmegaMixtureSlab>(
        p, density, mode == "full" ? ema::CMMode::full : ema::CMMode::dilute));
  } else {
    throw ConfigError(o.path("type") + ": unknown body type '" + type + "'");
  }
  if (o.boolean("mirror", false)) b = forcengine::mirrored(b);
  o.finish();
  return b;
}

std::vector<Chirality> parse_pairings(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a list of \"SC\"/\"OC\"");
  std::vector<Chirality> out;
  for (const auto& e : j) {
    if (e == "SC")
      out.push_back(Chirality::SC);
    else if (e == "OC")
      out.push_back(Chirality::OC);
    else
      throw ConfigError(where + ": expected \"SC\" or \"OC\"");
  }
  return out;
}

void require_positive(const std::vector<double>& v, const std::string& what) {
  for (double x : v)
    if (!(x > 0.0)) throw ConfigError(what + ": values must be > 0");
}

}  // namespace

RunConfig parse_config(const json& j, const fs::path& base, const RunOptions& opts) {
  RunConfig c;
  json& r = c.resolved;
  Obj top(j, "config", r);
  const int version = top.integer("schema_version");
  if (version != kSchemaVersion)
    throw ConfigError("config.schema_version: expected " + std::to_string(kSchemaVersion));

  if (!top.has("lower")) throw ConfigError("config.lower: required");
  c.pair.lower = parse_body(top.child("lower"), "config.lower", top.out("lower"), base);
  if (top.has("upper"))
    c.pair.upper = parse_body(top.child("upper"), "config.upper", top.out("upper"), base);
  else
    c.pair.upper = c.pair.lower, top.out("upper") = "same as lower";

  c.z = top.numbers("z", {2.0});
  require_positive(c.z, "config.z");
  c.x = top.numbers("x", {0.0});
  if (top.has("pairings")) {
    c.pairings = parse_pairings(top.child("pairings"), "config.pairings");
    json& rec = top.out("pairings");
    rec = json::array();
    for (auto p : c.pairings) rec.push_back(forcengine::to_string(p));
  } else {
    c.pairings = {Chirality::SC};
    top.out("pairings") = {"SC"};
  }
  c.pair.l_max = top.integer("l_max", 3);
  c.pair.g_max = top.number("g_max", 3.0);
  c.pair.prune_tol = top.number("prune_tol", 1e-12);

  {
    json tmp = top.has("quadrature") ? top.child("quadrature") : json::object();
    Obj q(tmp, "config.quadrature", top.out("quadrature"));
    auto& s = c.pair.quadrature;
    s.xi_order = q.integer("xi_order", s.xi_order);
    s.k_order = q.integer("k_order", s.k_order);
    s.radial_order = q.integer("radial_order", s.radial_order);
    s.xi_scale_factor = q.number("xi_scale_factor", s.xi_scale_factor);
    s.rel_tol = q.number("rel_tol", s.rel_tol);
    s.max_refinements = q.integer("max_refinements", s.max_refinements);
    q.finish();
    if (opts.tolerance) {
      if (!(*opts.tolerance > 0.0)) throw ConfigError("--tolerance must be > 0");
      s.rel_tol = *opts.tolerance;
      top.out("quadrature")["rel_tol"] = s.rel_tol;
    }
  }
  {
    json tmp = top.has("sweep") ? top.child("sweep") : json::object();
    Obj s(tmp, "config.sweep", top.out("sweep"));
    c.sweep.z_grid = s.numbers("z_grid", forcengine::default_z_grid());
    require_positive(c.sweep.z_grid, "config.sweep.z_grid");
    c.sweep.x_grid = s.numbers("x_grid", forcengine::default_x_grid());
    const std::string norm = s.string("normalization", "global");
    if (norm == "global")
      c.sweep.normalization = forcengine::Normalization::global;
    else if (norm == "per_chirality")
      c.sweep.normalization = forcengine::Normalization::per_chirality;
    else
      throw ConfigError("config.sweep.normalization: global or per_chirality");
    s.finish();
  }
  {
    json tmp = top.has("retrieve") ? top.child("retrieve") : json::object();
    Obj s(tmp, "config.retrieve", top.out("retrieve"));
    c.retrieve_xi = s.numbers("xi", forcengine::default_retrieval_grid());
    require_positive(c.retrieve_xi, "config.retrieve.xi");
    c.retrieval.n_samples = s.integer("n_samples", c.retrieval.n_samples);
    c.retrieval.max_k_over_xi = s.number("max_k_over_xi", c.retrieval.max_k_over_xi);
    if (c.retrieval.n_samples < 4) throw ConfigError("config.retrieve.n_samples: must be >= 4");
    if (!(c.retrieval.max_k_over_xi > 0.0))
      throw ConfigError("config.retrieve.max_k_over_xi: must be > 0");
    s.finish();
  }
  {
    json tmp = top.has("integrand") ? top.child("integrand") : json::object();
    Obj s(tmp, "config.integrand", top.out("integrand"));
    c.integrand_z = s.number("z", c.integrand_z);
    if (!(c.integrand_z > 0.0)) throw ConfigError("config.integrand.z: must be > 0");
    std::vector<double> def;
    for (int i = 0; i < 40; ++i) def.push_back(0.01 / c.integrand_z * std::pow(1200.0, i / 39.0));
    c.integrand_xi = s.numbers("xi", def);
    require_positive(c.integrand_xi, "config.integrand.xi");
    s.finish();
  }
  {
    json tmp = top.has("pairwise") ? top.child("pairwise") : json::object();
    Obj s(tmp, "config.pairwise", top.out("pairwise"));
    c.pairwise.periodic = s.boolean("periodic", c.pairwise.periodic);
    c.pairwise.rel_tol = s.number("rel_tol", c.pairwise.rel_tol);
    if (!(c.pairwise.rel_tol > 0.0)) throw ConfigError("config.pairwise.rel_tol: must be > 0");
    s.finish();
  }
  {
    json tmp = top.has("units") ? top.child("units") : json::object();
    Obj s(tmp, "config.units", top.out("units"));
    c.a_si = s.number("a_si", c.a_si);
    c.plasma_frequency = s.number("plasma_frequency", c.plasma_frequency);
    if (!(c.a_si > 0.0)) throw ConfigError("config.units.a_si: must be > 0");
    s.finish();
  }
  top.finish();

  c.si = opts.si;
  r["si_columns"] = c.si;
  r["command"] = opts.command;
  // Validate the pair at every separation before any work starts.
  for (double z : c.z) {
    auto p = c.pair;
    p.z = z;
    p.validate();
  }
  return c;
}

RunConfig load_config(const RunOptions& opts) {
  const std::string text = read_file(opts.config);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j, opts.config.parent_path(), opts);
}

std::string config_hash(const RunConfig& c) { return sha256_hex(c.resolved.dump()); }

// ---------------------------------------------------------------------------
// Commands

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

struct Table {
  std::vector<std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::string render(const RunConfig& c, const Table& t) {
  std::ostringstream s;
  s << "# chiralcasimir " << library_version() << "\n";
  s << "# command: " << c.resolved.at("command").get<std::string>() << "\n";
  s << "# config_sha256: " << config_hash(c) << "\n";
  s << "# units: hbar = c = 1, lengths in lattice periods a";
  if (c.si) s << "; SI columns with a = " << num(c.a_si) << " m";
  s << "\n";
  for (const auto& m : t.meta) s << "# " << m << "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) s << (i ? "," : "") << t.columns[i];
  s << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s << (i ? "," : "") << row[i];
    s << "\n";
  }
  return s.str();
}

void write(const fs::path& dir, const std::string& name, const std::string& text) {
  fs::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  out << text;
}

bool slab_pair(const forcengine::LatticePairConfig& p) {
  return p.lower.kind == Body::Kind::slab && p.upper.kind == Body::Kind::slab;
}

forcengine::ForceResult evaluate_force(forcengine::LatticePairConfig p, Chirality ch) {
  if (ch == Chirality::OC) p = forcengine::opposite_pairing(p);
  if (slab_pair(p)) {
    const auto r = ema::ema_force(*p.lower.slab, *p.upper.slab, p.z, p.quadrature);
    return {r.energy, r.force};
  }
  return forcengine::casimir(p);
}

std::vector<std::string> force_columns(bool si) {
  std::vector<std::string> c{"z", "x", "chirality", "F", "E", "err"};
  if (si) c.insert(c.end(), {"F_Pa", "E_J_per_m2"});
  c.push_back("status");
  return c;
}

std::vector<std::string> force_row(const RunConfig& c, double z, double x, Chirality ch,
                                   double f, double e, double err, bool ok) {
  std::vector<std::string> row{num(z), num(x), forcengine::to_string(ch), num(f), num(e), num(err)};
  if (c.si) {
    row.push_back(num(f * kHbarC / std::pow(c.a_si, 4)));
    row.push_back(num(e * kHbarC / std::pow(c.a_si, 3)));
  }
  row.push_back(ok ? "ok" : "unconverged");
  return row;
}

int cmd_force(const RunConfig& c, const fs::path& out) {
  Table t;
  t.columns = force_columns(c.si);
  t.meta.push_back(slab_pair(c.pair) ? "engine: homogeneous (specular Lifshitz)"
                                     : "engine: lattice scattering");
  bool ok = true;
  for (double z : c.z)
    for (double x : c.x)
      for (Chirality ch : c.pairings) {
        auto p = c.pair;
        p.z = z;
        p.shift = {x, 0.0};
        const auto r = evaluate_force(p, ch);
        const bool good = r.force.converged && r.energy.converged;
        ok = ok && good;
        t.rows.push_back(force_row(c, z, x, ch, r.force.value, r.energy.value, r.force.error, good));
      }
  write(out, "force.csv", render(c, t));
  return ok ? kExitOk : kExitTolerance;
}

int cmd_sweep(const RunConfig& c, const fs::path& out) {
  auto cfg = c.sweep;
  cfg.base = c.pair;
  forcengine::SweepResult res;
  if (slab_pair(c.pair)) {
    // Homogeneous pairs do not depend on x; the grid is kept for the schema.
    res.normalization = cfg.normalization;
    for (double z : cfg.z_grid) {
      auto p = cfg.base;
      p.z = z;
      const auto sc = evaluate_force(p, Chirality::SC), oc = evaluate_force(p, Chirality::OC);
      for (double x : cfg.x_grid) {
        res.rows.push_back({z, x, Chirality::SC, sc.force, sc.energy});
        res.rows.push_back({z, x, Chirality::OC, oc.force, oc.energy});
      }
      forcengine::SweepSummaryRow s;
      s.z = z;
      s.f_min_sc = s.f_max_sc = s.mean_sc = sc.force.value;
      s.f_min_oc = s.f_max_oc = s.mean_oc = oc.force.value;
      s.rel_diff = cfg.normalization == forcengine::Normalization::global
                       ? (s.mean_oc - s.mean_sc) / std::min(s.f_min_sc, s.f_min_oc)
                       : s.mean_oc / s.f_min_oc - s.mean_sc / s.f_min_sc;
      res.summary.push_back(s);
    }
  } else {
    res = forcengine::sweep_sc_oc(cfg);
  }

  const std::string norm = cfg.normalization == forcengine::Normalization::global
                               ? "normalization: global (minimum over x and both pairings)"
                               : "normalization: per_chirality";
  Table rows;
  rows.columns = force_columns(c.si);
  rows.meta.push_back(norm);
  bool ok = true;
  for (const auto& r : res.rows) {
    const bool good = r.force.converged && r.energy.converged;
    ok = ok && good;
    rows.rows.push_back(
        force_row(c, r.z, r.x, r.chirality, r.force.value, r.energy.value, r.force.error, good));
  }
  Table sum;
  sum.meta.push_back(norm);
  sum.meta.push_back("rel_diff = (mean_x F_OC - mean_x F_SC) / F_min");
  sum.columns = {"z", "F_min_SC", "F_max_SC", "F_min_OC", "F_max_OC", "rel_diff"};
  for (const auto& s : res.summary)
    sum.rows.push_back({num(s.z), num(s.f_min_sc), num(s.f_max_sc), num(s.f_min_oc), num(s.f_max_oc),
                        num(s.rel_diff)});
  write(out, "sweep.csv", render(c, rows));
  write(out, "sweep_summary.csv", render(c, sum));
  return ok ? kExitOk : kExitTolerance;
}

int cmd_retrieve(const RunConfig& c, const fs::path& out) {
  ema::ReflectionSource src;
  if (c.pair.lower.kind == Body::Kind::lattice) {
    src = forcengine::lattice_reflection_source(c.pair.lower, c.pair.l_max);
  } else {
    const auto slab = c.pair.lower.slab;
    src = [slab](double xi, Wavevector2 k) { return ema::chiral_fresnel(*slab, xi, k, Direction::up); };
  }
  const std::size_t n = c.retrieve_xi.size();
  std::vector<ema::RetrievedParams> rows(n);
  std::vector<char> good(n, 1);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      rows[i] = ema::retrieve_ema(src, c.retrieve_xi[i], c.retrieval);
    } catch (const ToleranceError&) {
      good[i] = 0;
    }
  }
  Table t;
  t.meta.push_back("source: lower body, specular reflection for waves from above");
  t.columns = {"xi", "eps", "mu", "kappa", "residual", "anisotropy_indicator"};
  if (c.si) t.columns.push_back("xi_rad_per_s");
  t.columns.push_back("status");
  bool ok = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i];
    const double nan = std::nan("");
    std::vector<std::string> row{num(c.retrieve_xi[i]),
                                 num(good[i] ? r.params.eps : nan),
                                 num(good[i] ? r.params.mu : nan),
                                 num(good[i] ? r.params.kappa : nan),
                                 num(good[i] ? r.residual : nan),
                                 num(good[i] ? r.anisotropy_indicator : nan)};
    if (c.si) row.push_back(num(c.retrieve_xi[i] * kLightSpeed / c.a_si));
    row.push_back(good[i] ? "ok" : "fit_failed");
    ok = ok && good[i];
    t.rows.push_back(row);
  }
  write(out, "retrieve.csv", render(c, t));
  return ok ? kExitOk : kExitTolerance;
}

int cmd_integrand(const RunConfig& c, const fs::path& out) {
  auto p = c.pair;
  p.z = c.integrand_z;
  p.shift = {c.x.front(), 0.0};
  const auto tr = forcengine::difference_integrand(p, c.integrand_xi);
  Table t;
  t.meta.push_back("z: " + num(p.z));
  t.meta.push_back("dF/dxi per unit area; first row: xi -> 0 limit extrapolated from xi_min = " +
                   num(tr.xi_min));
  t.columns = {"xi", "dF_SC", "dF_OC", "difference"};
  if (c.si) t.columns.push_back("xi_rad_per_s");
  t.columns.push_back("source");
  auto row = [&](double xi, double sc, double oc, double d, const char* src) {
    std::vector<std::string> r{num(xi), num(sc), num(oc), num(d)};
    if (c.si) r.push_back(num(xi * kLightSpeed / c.a_si));
    r.push_back(src);
    t.rows.push_back(r);
  };
  row(0.0, tr.zero_sc, tr.zero_oc, tr.zero_limit, "extrapolated");
  for (std::size_t i = 0; i < tr.xi.size(); ++i)
    row(tr.xi[i], tr.sc[i], tr.oc[i], tr.difference(i), "quadrature");
  write(out, "integrand.csv", render(c, t));
  return kExitOk;
}

int cmd_pairwise(const RunConfig& c, const fs::path& out) {
  Table t;
  t.columns = force_columns(c.si);
  t.meta.push_back(std::string("pairwise Casimir-Polder estimate; periodic: ") +
                   (c.pairwise.periodic ? "true" : "false"));
  for (double z : c.z)
    for (double x : c.x)
      for (Chirality ch : c.pairings) {
        auto p = c.pair;
        p.z = z;
        p.shift = {x, 0.0};
        if (ch == Chirality::OC) p = forcengine::opposite_pairing(p);
        const auto r = forcengine::pairwise_estimator(p, c.pairwise);
        t.rows.push_back(force_row(c, z, x, ch, r.force, r.energy, r.error, true));
      }
  write(out, "pairwise.csv", render(c, t));
  return kExitOk;
}

}  // namespace

int run(const RunOptions& opts) {
  RunConfig c;
  try {
    static const std::set<std::string> commands{"force", "sweep", "retrieve", "integrand", "pairwise"};
    if (!commands.count(opts.command)) throw ConfigError("unknown command '" + opts.command + "'");
    if (opts.workers < 0) throw ConfigError("--workers must be >= 0");
    c = load_config(opts);
    if (opts.command == "pairwise" && (c.pair.lower.kind != Body::Kind::lattice ||
                                       c.pair.upper.kind != Body::Kind::lattice))
      throw ConfigError("pairwise: both bodies must be lattices");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (opts.workers > 0) omp_set_num_threads(opts.workers);
  try {
    if (opts.command == "force") return cmd_force(c, opts.out);
    if (opts.command == "sweep") return cmd_sweep(c, opts.out);
    if (opts.command == "retrieve") return cmd_retrieve(c, opts.out);
    if (opts.command == "integrand") return cmd_integrand(c, opts.out);
    return cmd_pairwise(c, opts.out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ToleranceError& e) {
    std::cerr << "tolerance failure: " << e.what() << "\n";
    return kExitTolerance;
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Casimir forces between chiral metamaterials"};
  app.set_version_flag("--version", std::string(library_version()));
  app.require_subcommand(1);
  RunOptions opts;
  double tol = 0.0;
  const std::vector<std::pair<const char*, const char*>> subs{
      {"force", "F and E over the configured (z, x) grid"},
      {"sweep", "SC/OC sweep over z and x with min/max summary"},
      {"retrieve", "effective-medium parameters of the lower body"},
      {"integrand", "frequency integrand of the SC/OC force difference"},
      {"pairwise", "pairwise Casimir-Polder estimate"}};
  for (const auto& [name, help] : subs) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", opts.config, "run configuration (JSON)")->required();
    s->add_option("--out", opts.out, "output directory");
    s->add_option("--workers", opts.workers, "OpenMP threads (0: default)");
    s->add_option("--tolerance", tol, "override quadrature rel_tol");
    s->add_flag("--si", opts.si, "add SI-unit columns");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  for (auto* s : app.get_subcommands()) {
    opts.command = s->get_name();
    if (s->count("--tolerance")) opts.tolerance = tol;
  }
  return run(opts);
}

}  // namespace chiralcasimir::cli
