#pragma once

// Instance files, run reports and CSV output.

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "mvlift/analysis.hpp"

namespace mvlift {

using Json = nlohmann::json;

namespace detail {

/// Strict reader over a JSON object: every key must be consumed by `finish`.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) throw SchemaError(field(key), "required field missing");
    return *it;
  }

  double number(const std::string& key, std::optional<double> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      get(key);
    }
    const Json& v = get(key);
    if (!v.is_number()) throw SchemaError(field(key), "expected a number");
    return v.get<double>();
  }

  double positive(const std::string& key, std::optional<double> def = std::nullopt) {
    const double v = number(key, def);
    if (!(v > 0.0) || !std::isfinite(v)) throw SchemaError(field(key), "must be a positive finite number");
    return v;
  }

  std::size_t count(const std::string& key, std::optional<std::size_t> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      get(key);
    }
    return as_count(get(key), field(key));
  }

  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const Json& v = get(key);
    if (!v.is_boolean()) throw SchemaError(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, std::optional<std::string> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      get(key);
    }
    const Json& v = get(key);
    if (!v.is_string()) throw SchemaError(field(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) {
    const Json& v = get(key);
    if (!v.is_array()) throw SchemaError(field(key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw SchemaError(field(key), "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::vector<std::vector<double>> matrix(const std::string& key) {
    const Json& v = get(key);
    if (!v.is_array()) throw SchemaError(field(key), "expected an array of arrays");
    std::vector<std::vector<double>> out;
    for (std::size_t r = 0; r < v.size(); ++r) {
      const std::string f = field(key) + "[" + std::to_string(r) + "]";
      if (!v[r].is_array()) throw SchemaError(f, "expected an array of numbers");
      std::vector<double> row;
      for (const auto& x : v[r]) {
        if (!x.is_number()) throw SchemaError(f, "expected an array of numbers");
        row.push_back(x.get<double>());
      }
      out.push_back(std::move(row));
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw SchemaError(field(it.key()), "unknown field");
  }

  static std::size_t as_count(const Json& v, const std::string& f) {
    if (!v.is_number_integer()) throw SchemaError(f, "expected a non-negative integer");
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    const auto s = v.get<std::int64_t>();
    if (s < 0) throw SchemaError(f, "must be non-negative");
    return static_cast<std::size_t>(s);
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

struct DomainSpec {
  std::string kind = "interval";  // interval | circle | grid2d
  std::vector<std::size_t> nodes;  // [n] or [nx, ny]
  std::vector<double> length;      // [L] or [lx, ly]
};

struct IntegrandSpec {
  std::string kind = "quadratic";  // quadratic | p_power | tv | table
  double coeff = 0.5;
  double p = 2.0;
  std::vector<double> v, w;        // table points
};

struct DataTermSpec {
  std::string kind = "none";       // none | table | fidelity
  std::vector<std::vector<double>> table;
  std::vector<std::vector<double>> targets;
  double coeff = 1.0;
};

/// Inline rows, or a builtin generator with its parameters (defaults filled).
struct MeasureSpec {
  std::string generator;           // empty: inline rows
  std::vector<std::vector<double>> rows;
  Json params = Json::object();
  double mollify = 0.0;
  std::optional<std::array<double, 2>> regularize;  // (lambda, sigma)
};

struct SolverSpec {
  double tol = 1e-6;
  std::size_t max_iter = 20000;
  std::vector<double> eps{0.05, 0.02, 0.01};
  std::size_t budget = std::size_t{1} << 16;
  bool deterministic = true;
  std::uint64_t seed = 0;
};

/// A parsed instance: the declarative specs and the objects built from them.
struct Instance {
  std::optional<DomainSpec> domain_spec;   // absent for generators that fix the domain
  std::optional<std::vector<GridAxis>> target_spec;
  IntegrandSpec integrand_spec;
  DataTermSpec data_spec;
  MeasureSpec measure_spec;
  std::optional<std::vector<std::size_t>> mask_spec;
  SolverSpec solver;

  SpatialDomain domain;
  TargetGrid grid;
  MeasureField mu;
  Integrand W;
  DataTerm data;
  SubdomainMask mask;

  const DataTerm* data_ptr() const { return data.active() ? &data : nullptr; }
  EdgeCostTable costs() const { return make_costs(domain, grid, W, data_ptr()); }
  EulerianOptions eulerian_options() const {
    EulerianOptions o;
    o.tol = solver.tol;
    o.max_iter = solver.max_iter;
    if (solver.deterministic) o.threads = 1;
    return o;
  }
};

/// Generators that build their own domain and target grid.
inline bool generator_fixes_domain(const std::string& g) {
  return g == "sqrt_circle" || g == "sqrt_disk" || g == "geodesic";
}

inline const std::vector<std::string>& builtin_generators() {
  static const std::vector<std::string> g{"geodesic", "map", "sqrt_circle", "sqrt_disk", "step_mixture"};
  return g;
}

namespace detail {

inline DomainSpec read_domain(const Json& j) {
  ObjectReader r(j, "domain");
  DomainSpec s;
  s.kind = r.text("kind", "interval");
  if (s.kind == "interval" || s.kind == "circle") {
    s.nodes = {r.count("nodes")};
    s.length = {r.positive("length", s.kind == "circle" ? 2.0 * std::numbers::pi : 1.0)};
  } else if (s.kind == "grid2d") {
    const Json& n = r.get("nodes");
    if (!n.is_array() || n.size() != 2) throw SchemaError("domain.nodes", "expected [nx, ny]");
    s.nodes = {ObjectReader::as_count(n[0], "domain.nodes"), ObjectReader::as_count(n[1], "domain.nodes")};
    s.length = r.has("length") ? r.numbers("length") : std::vector<double>{1.0, 1.0};
    if (s.length.size() != 2 || !(s.length[0] > 0) || !(s.length[1] > 0))
      throw SchemaError("domain.length", "expected two positive lengths");
  } else {
    throw SchemaError("domain.kind", "unknown domain kind '" + s.kind + "'");
  }
  r.finish();
  return s;
}

inline std::vector<GridAxis> read_target(const Json& j) {
  ObjectReader r(j, "target");
  const Json& axes = r.get("axes");
  if (!axes.is_array() || axes.empty() || axes.size() > 2) throw SchemaError("target.axes", "expected one or two axes");
  std::vector<GridAxis> out;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    ObjectReader ax(axes[a], "target.axes[" + std::to_string(a) + "]");
    GridAxis g;
    g.cells = ax.count("cells");
    if (g.cells < 2) throw SchemaError(ax.field("cells"), "need at least 2 cells");
    g.min = ax.number("min", 0.0);
    g.max = ax.number("max", 1.0);
    if (!(g.max > g.min)) throw SchemaError(ax.field("max"), "must exceed min");
    g.periodic = ax.flag("periodic", false);
    ax.finish();
    out.push_back(g);
  }
  r.finish();
  return out;
}

inline IntegrandSpec read_integrand(const Json& j) {
  ObjectReader r(j, "integrand");
  IntegrandSpec s;
  s.kind = r.text("kind", "quadratic");
  if (s.kind == "quadratic") {
    s.coeff = r.positive("coeff", 0.5);
  } else if (s.kind == "p_power") {
    s.p = r.number("p");
    if (!(s.p >= 1.0)) throw SchemaError("integrand.p", "must be >= 1");
    s.coeff = r.positive("coeff", 1.0);
  } else if (s.kind == "tv") {
    s.coeff = r.positive("coeff", 1.0);
  } else if (s.kind == "table") {
    s.v = r.numbers("v");
    s.w = r.numbers("w");
  } else {
    throw SchemaError("integrand.kind", "unknown integrand kind '" + s.kind + "'");
  }
  r.finish();
  return s;
}

inline DataTermSpec read_data_term(const Json& j) {
  ObjectReader r(j, "data_term");
  DataTermSpec s;
  s.kind = r.text("kind", "none");
  if (s.kind == "table") {
    s.table = r.matrix("table");
  } else if (s.kind == "fidelity") {
    s.targets = r.matrix("targets");
    s.coeff = r.number("coeff", 1.0);
  } else if (s.kind != "none") {
    throw SchemaError("data_term.kind", "unknown data term kind '" + s.kind + "'");
  }
  r.finish();
  return s;
}

/// Validates generator parameters and returns them with defaults filled.
inline Json read_params(const std::string& gen, const Json& j) {
  ObjectReader r(j, "measure.params");
  Json out = Json::object();
  if (gen == "sqrt_circle") {
    out["N"] = r.count("N");
  } else if (gen == "sqrt_disk") {
    const std::size_t n = r.count("n");
    out["n"] = n;
    out["cells"] = r.count("cells", std::max<std::size_t>(5, (n / 2) | 1));
  } else if (gen == "geodesic") {
    out["N"] = r.count("N");
    out["M"] = r.count("M");
    out["sigma"] = r.number("sigma", 1.0);
  } else if (gen == "step_mixture") {
    out["maps"] = r.count("maps", 3);
  } else if (gen == "map") {
    const Json& v = r.get("values");
    if (!v.is_array()) throw SchemaError("measure.params.values", "expected an array");
    for (const auto& x : v)
      if (!x.is_number() && !(x.is_array() && x.size() == 2 && x[0].is_number() && x[1].is_number()))
        throw SchemaError("measure.params.values", "entries must be numbers or [y0, y1]");
    out["values"] = v;
    const std::string mode = r.text("embed", "multilinear");
    if (mode != "multilinear" && mode != "nearest") throw SchemaError("measure.params.embed", "expected multilinear or nearest");
    out["embed"] = mode;
  }
  r.finish();
  return out;
}

inline MeasureSpec read_measure(const Json& j) {
  ObjectReader r(j, "measure");
  MeasureSpec s;
  if (r.has("rows") == r.has("generator")) throw SchemaError("measure", "give exactly one of rows or generator");
  if (r.has("rows")) {
    s.rows = r.matrix("rows");
  } else {
    s.generator = r.text("generator");
    const auto& gens = builtin_generators();
    if (std::find(gens.begin(), gens.end(), s.generator) == gens.end())
      throw SchemaError("measure.generator", "unknown generator '" + s.generator + "'");
    s.params = read_params(s.generator, r.has("params") ? r.get("params") : Json::object());
  }
  s.mollify = r.number("mollify", 0.0);
  if (!(s.mollify >= 0.0)) throw SchemaError("measure.mollify", "must be >= 0");
  if (r.has("regularize")) {
    ObjectReader g(r.get("regularize"), "measure.regularize");
    const double lambda = g.number("lambda");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw SchemaError("measure.regularize.lambda", "must lie in [0, 1]");
    s.regularize = std::array<double, 2>{lambda, g.positive("sigma", 1.0)};
    g.finish();
  }
  r.finish();
  return s;
}

inline SolverSpec read_solver(const Json& j) {
  ObjectReader r(j, "solver");
  SolverSpec s;
  s.tol = r.positive("tol", s.tol);
  s.max_iter = r.count("max_iter", s.max_iter);
  if (r.has("eps")) {
    s.eps = r.numbers("eps");
    for (double e : s.eps)
      if (!(e > 0.0)) throw SchemaError("solver.eps", "entries must be positive");
  }
  s.budget = r.count("budget", s.budget);
  s.deterministic = r.flag("deterministic", s.deterministic);
  s.seed = r.count("seed", 0);
  r.finish();
  return s;
}

template <class F>
auto as_schema(const std::string& field, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(field, e.what());
  }
}

}  // namespace detail

namespace detail {

inline Integrand build_integrand(const IntegrandSpec& s, int q, int d) {
  return as_schema("integrand", [&] {
    if (s.kind == "quadratic") return Integrand::quadratic(s.coeff, q, d);
    if (s.kind == "p_power") return Integrand::p_power(s.p, s.coeff, q, d);
    if (s.kind == "tv") return Integrand::tv(s.coeff, q, d);
    if (q != 1 || d != 1) throw SchemaError("integrand.kind", "table integrands need scalar source and target");
    return Integrand::custom(s.v, s.w);
  });
}

inline MeasureField build_measure(Instance& I) {
  const MeasureSpec& s = I.measure_spec;
  const Json& p = s.params;
  if (s.generator.empty()) {
    if (s.rows.size() != I.domain.size()) throw SchemaError("measure.rows", "need one row per domain node");
    Eigen::MatrixXd r(static_cast<Eigen::Index>(s.rows.size()), static_cast<Eigen::Index>(I.grid.size()));
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
      if (s.rows[i].size() != I.grid.size())
        throw SchemaError("measure.rows[" + std::to_string(i) + "]", "need one entry per target cell");
      for (std::size_t j = 0; j < s.rows[i].size(); ++j)
        r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.rows[i][j];
    }
    MeasureField mu(I.grid, std::move(r));
    as_schema("measure.rows", [&] { mu.validate(1e-9); });
    return mu;
  }
  if (s.generator == "step_mixture") {
    std::mt19937_64 rng(I.solver.seed);
    return as_schema("measure.params", [&] { return random_step_mixture(I.domain, I.grid, p["maps"].get<std::size_t>(), rng); });
  }
  // map
  ClassicalMap u;
  u.q = I.grid.q();
  const Json& v = p["values"];
  if (v.size() != I.domain.size()) throw SchemaError("measure.params.values", "need one value per domain node");
  for (const auto& x : v) {
    if (x.is_number() != (u.q == 1)) throw SchemaError("measure.params.values", "entry shape does not match the target dimension");
    u.values.push_back(x.is_number() ? std::array<double, 2>{x.get<double>(), 0.0}
                                     : std::array<double, 2>{x[0].get<double>(), x[1].get<double>()});
  }
  const EmbedMode mode = p["embed"] == "nearest" ? EmbedMode::nearest : EmbedMode::multilinear;
  return as_schema("measure.params.values", [&] { return embed(u, I.grid, mode); });
}

inline void build_instance(Instance& I) {
  const std::string& gen = I.measure_spec.generator;
  const Json& p = I.measure_spec.params;
  if (generator_fixes_domain(gen)) {
    if (I.domain_spec) throw SchemaError("domain", "not allowed with generator '" + gen + "'");
    if (I.target_spec) throw SchemaError("target", "not allowed with generator '" + gen + "'");
    GalleryInstance g = as_schema("measure.params", [&] {
      if (gen == "sqrt_circle") return build_sqrt_circle(p["N"].get<std::size_t>());
      if (gen == "sqrt_disk") return build_sqrt_disk(p["n"].get<std::size_t>(), p["cells"].get<std::size_t>());
      return build_geodesic(p["N"].get<std::size_t>(), p["M"].get<std::size_t>(), p["sigma"].get<double>());
    });
    I.domain = std::move(g.domain);
    I.grid = std::move(g.grid);
    I.mu = std::move(g.mu);
  } else {
    if (!I.domain_spec) throw SchemaError("domain", "required field missing");
    if (!I.target_spec) throw SchemaError("target", "required field missing");
    const DomainSpec& d = *I.domain_spec;
    I.domain = as_schema("domain.nodes", [&] {
      if (d.kind == "interval") return build_interval(d.nodes[0], d.length[0]);
      if (d.kind == "circle") return build_circle(d.nodes[0], d.length[0]);
      return build_grid2d(d.nodes[0], d.nodes[1], {d.length[0], d.length[1]});
    });
    I.grid = as_schema("target", [&] { return TargetGrid(*I.target_spec); });
    I.mu = build_measure(I);
  }
  if (I.measure_spec.mollify > 0.0) I.mu = mollify_y(I.mu, I.measure_spec.mollify);
  if (I.measure_spec.regularize)
    I.mu = regularize(I.mu, (*I.measure_spec.regularize)[0], (*I.measure_spec.regularize)[1]);

  I.W = build_integrand(I.integrand_spec, I.grid.q(), I.domain.dim);

  const DataTermSpec& f = I.data_spec;
  if (f.kind == "table") {
    if (f.table.size() != I.domain.size()) throw SchemaError("data_term.table", "need one row per domain node");
    for (std::size_t i = 0; i < f.table.size(); ++i)
      if (f.table[i].size() != I.grid.size())
        throw SchemaError("data_term.table[" + std::to_string(i) + "]", "need one entry per target cell");
    I.data = as_schema("data_term.table", [&] { return DataTerm::from_table(f.table); });
  } else if (f.kind == "fidelity") {
    if (f.targets.size() != I.domain.size()) throw SchemaError("data_term.targets", "need one target per domain node");
    std::vector<std::array<double, 2>> g;
    for (const auto& t : f.targets) {
      if (t.size() != static_cast<std::size_t>(I.grid.q())) throw SchemaError("data_term.targets", "entry length must equal the target dimension");
      g.push_back({t[0], t.size() > 1 ? t[1] : 0.0});
    }
    I.data = as_schema("data_term.coeff", [&] { return DataTerm::fidelity(std::move(g), f.coeff); });
  } else {
    I.data = DataTerm{};
  }

  if (I.mask_spec) {
    if (I.mask_spec->empty()) throw SchemaError("mask", "must not be empty");
    I.mask = as_schema("mask", [&] { return SubdomainMask(I.domain, *I.mask_spec); });
  } else {
    I.mask = SubdomainMask::full(I.domain);
  }
}

}  // namespace detail

inline Instance instance_from_json(const Json& j) {
  detail::ObjectReader r(j, "");
  Instance I;
  if (r.has("domain")) I.domain_spec = detail::read_domain(r.get("domain"));
  if (r.has("target")) I.target_spec = detail::read_target(r.get("target"));
  if (r.has("integrand")) I.integrand_spec = detail::read_integrand(r.get("integrand"));
  if (r.has("data_term")) I.data_spec = detail::read_data_term(r.get("data_term"));
  I.measure_spec = detail::read_measure(r.get("measure"));
  if (r.has("mask")) {
    const Json& m = r.get("mask");
    if (!m.is_array()) throw SchemaError("mask", "expected an array of node indices");
    std::vector<std::size_t> nodes;
    for (const auto& x : m) nodes.push_back(detail::ObjectReader::as_count(x, "mask"));
    I.mask_spec = std::move(nodes);
  }
  if (r.has("solver")) I.solver = detail::read_solver(r.get("solver"));
  r.finish();
  detail::build_instance(I);
  return I;
}

inline Json parse_json_text(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::string msg = e.what();
    if (auto k = msg.find("syntax error"); k != std::string::npos) msg = msg.substr(k);
    throw ParseError(msg, line, col);
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write file '" + path + "'");
  out << text;
}

inline Instance parse_instance_text(const std::string& text) { return instance_from_json(parse_json_text(text)); }
inline Instance parse_instance(const std::string& path) { return parse_instance_text(read_file(path)); }

/// Full specification with defaults filled; keys come out sorted.
inline Json instance_to_json(const Instance& I) {
  Json j = Json::object();
  if (I.domain_spec) {
    const DomainSpec& d = *I.domain_spec;
    Json o{{"kind", d.kind}};
    if (d.kind == "grid2d") {
      o["nodes"] = d.nodes;
      o["length"] = d.length;
    } else {
      o["nodes"] = d.nodes[0];
      o["length"] = d.length[0];
    }
    j["domain"] = o;
  }
  if (I.target_spec) {
    Json axes = Json::array();
    for (const auto& a : *I.target_spec)
      axes.push_back({{"cells", a.cells}, {"min", a.min}, {"max", a.max}, {"periodic", a.periodic}});
    j["target"] = {{"axes", axes}};
  }
  const IntegrandSpec& w = I.integrand_spec;
  Json wi{{"kind", w.kind}};
  if (w.kind == "table") {
    wi["v"] = w.v;
    wi["w"] = w.w;
  } else {
    wi["coeff"] = w.coeff;
    if (w.kind == "p_power") wi["p"] = w.p;
  }
  j["integrand"] = wi;
  const DataTermSpec& f = I.data_spec;
  Json fi{{"kind", f.kind}};
  if (f.kind == "table") fi["table"] = f.table;
  if (f.kind == "fidelity") {
    fi["targets"] = f.targets;
    fi["coeff"] = f.coeff;
  }
  j["data_term"] = fi;
  const MeasureSpec& m = I.measure_spec;
  Json mi{{"mollify", m.mollify}};
  if (m.generator.empty()) {
    mi["rows"] = m.rows;
  } else {
    mi["generator"] = m.generator;
    mi["params"] = m.params;
  }
  if (m.regularize) mi["regularize"] = {{"lambda", (*m.regularize)[0]}, {"sigma", (*m.regularize)[1]}};
  j["measure"] = mi;
  if (I.mask_spec) j["mask"] = *I.mask_spec;
  const SolverSpec& s = I.solver;
  j["solver"] = {{"tol", s.tol}, {"max_iter", s.max_iter}, {"eps", s.eps}, {"budget", s.budget},
                 {"deterministic", s.deterministic}, {"seed", s.seed}};
  return j;
}

inline std::string canonical_dump(const Json& j) { return j.dump(2) + "\n"; }
inline std::string write_instance(const Instance& I) { return canonical_dump(instance_to_json(I)); }

/// 64-bit FNV-1a, hex.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h;
  return o.str();
}

inline std::string instance_digest(const Instance& I) { return fnv1a_hex(write_instance(I)); }

// ---- reports ---------------------------------------------------------------

/// Finite numbers as JSON numbers, others as the strings "inf", "-inf", "nan".
inline Json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

inline double to_double(const Json& j, const std::string& field) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw SchemaError(field, "expected a number");
}

/// lhs (relation) rhs within tol; both sides are kept.
struct Assertion {
  std::string name;
  std::string relation;  // "<=", ">=", "~="
  double lhs = 0.0, rhs = 0.0, tol = 0.0;
  bool passed = false;
};

struct RunReport {
  std::string command;
  std::string digest;
  Json results = Json::object();
  Json diagnostics = Json::object();
  std::map<std::string, double> wall_times;  // seconds
  std::vector<Assertion> assertions;
  bool converged = true;

  bool check(const std::string& name, double lhs, const std::string& rel, double rhs, double tol) {
    bool ok = false;
    if (rel == "<=") ok = lhs <= rhs + tol;
    else if (rel == ">=") ok = lhs + tol >= rhs;
    else if (rel == "~=") ok = std::abs(lhs - rhs) <= tol || lhs == rhs;
    else throw InvalidParameter("report: unknown relation " + rel);
    assertions.push_back({name, rel, lhs, rhs, tol, ok});
    return ok;
  }
  bool check_le(const std::string& name, double lhs, double rhs, double tol) { return check(name, lhs, "<=", rhs, tol); }
  bool check_ge(const std::string& name, double lhs, double rhs, double tol) { return check(name, lhs, ">=", rhs, tol); }
  bool check_near(const std::string& name, double lhs, double rhs, double tol) { return check(name, lhs, "~=", rhs, tol); }

  std::vector<const Assertion*> failures() const {
    std::vector<const Assertion*> out;
    for (const auto& a : assertions)
      if (!a.passed) out.push_back(&a);
    return out;
  }

  /// 0 all assertions pass, 1 an assertion failed, 2 a solver did not converge.
  int exit_code() const {
    if (!converged) return 2;
    return failures().empty() ? 0 : 1;
  }

  Json to_json(bool with_times = true) const {
    Json a = Json::array();
    for (const auto& x : assertions)
      a.push_back({{"name", x.name}, {"relation", x.relation}, {"lhs", num(x.lhs)}, {"rhs", num(x.rhs)},
                   {"tol", num(x.tol)}, {"passed", x.passed}});
    Json j{{"command", command}, {"instance_digest", digest}, {"results", results}, {"diagnostics", diagnostics},
           {"assertions", a}, {"converged", converged}, {"exit_code", exit_code()}};
    if (with_times) {
      Json t = Json::object();
      for (const auto& [k, v] : wall_times) t[k] = v;
      j["wall_times"] = t;
    }
    return j;
  }
};

class ScopedTimer {
 public:
  ScopedTimer(RunReport& r, std::string key) : r_(r), key_(std::move(key)), t0_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    r_.wall_times[key_] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  RunReport& r_;
  std::string key_;
  std::chrono::steady_clock::time_point t0_;
};

// ---- CSV -------------------------------------------------------------------

inline std::string fmt_double(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  std::ostringstream o;
  o << std::setprecision(17) << x;
  return o.str();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw InvalidParameter("csv: row width differs from the header");
    rows.push_back(std::move(row));
  }
  std::string str() const {
    std::ostringstream o;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t k = 0; k < r.size(); ++k) o << (k ? "," : "") << r[k];
      o << "\n";
    };
    line(header);
    for (const auto& r : rows) line(r);
    return o.str();
  }
};

inline CsvTable study_csv(const RefinementStudy& s) {
  CsvTable t;
  t.header.push_back("resolution");
  for (const auto& [k, v] : s.quantities) t.header.push_back(k);
  for (std::size_t r = 0; r < s.resolutions.size(); ++r) {
    std::vector<std::string> row{fmt_double(s.resolutions[r])};
    for (const auto& [k, v] : s.quantities) row.push_back(fmt_double(v[r]));
    t.add(std::move(row));
  }
  return t;
}

inline CsvTable gap_csv(const GapReport& g) {
  CsvTable t;
  t.header = {"mask", "te", "te_lower", "te_upper", "te_method", "teul", "teul_gap", "gap"};
  for (const auto& r : g.rows)
    t.add({r.mask, fmt_double(r.te.value), fmt_double(r.te.lower), fmt_double(r.te.upper), r.te.method,
           fmt_double(r.teul), fmt_double(r.teul_gap), fmt_double(r.gap)});
  return t;
}

inline Json study_to_json(const RefinementStudy& s) {
  Json q = Json::object();
  for (const auto& [k, v] : s.quantities) {
    Json a = Json::array();
    for (double x : v) a.push_back(num(x));
    q[k] = a;
  }
  Json sl = Json::object();
  for (const auto& [k, v] : s.slopes) sl[k] = num(v);
  return {{"name", s.name}, {"resolutions", s.resolutions}, {"quantities", q}, {"slopes", sl}, {"flags", s.flags}};
}

// ---- solver payloads -------------------------------------------------------

inline Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(num(m(i, j)));
    rows.push_back(r);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw SchemaError(field, "wrong number of rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) throw SchemaError(field, "wrong row length");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = to_double(r[static_cast<std::size_t>(k)], field);
  }
  return m;
}

inline Json vectors_to_json(const std::vector<Eigen::VectorXd>& v) {
  Json out = Json::array();
  for (const auto& x : v) {
    Json a = Json::array();
    for (Eigen::Index k = 0; k < x.size(); ++k) a.push_back(num(x[k]));
    out.push_back(a);
  }
  return out;
}

/// Arrays of per-edge vectors; an empty array stands for the zero vector.
inline std::vector<Eigen::VectorXd> vectors_from_json(const Json& j, std::size_t count, Eigen::Index len,
                                                      const std::string& field) {
  if (!j.is_array() || j.size() != count) throw SchemaError(field, "wrong number of entries");
  std::vector<Eigen::VectorXd> out;
  for (const auto& a : j) {
    if (!a.is_array() || (!a.empty() && static_cast<Eigen::Index>(a.size()) != len)) throw SchemaError(field, "wrong entry length");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(a.empty() ? 0 : len);
    for (std::size_t k = 0; k < a.size(); ++k) v[static_cast<Eigen::Index>(k)] = to_double(a[k], field);
    out.push_back(std::move(v));
  }
  return out;
}

inline Json coupling_to_json(const Coupling& Q) {
  Json atoms = Json::array();
  for (const auto& a : Q.atoms) atoms.push_back({{"cells", a.cells}, {"mass", a.mass}});
  return {{"nodes", Q.nodes}, {"atoms", atoms}};
}

inline Coupling coupling_from_json(const Json& j, const std::string& field) {
  detail::ObjectReader r(j, field);
  Coupling Q;
  for (const auto& x : r.get("nodes")) Q.nodes.push_back(detail::ObjectReader::as_count(x, field + ".nodes"));
  for (const auto& a : r.get("atoms")) {
    detail::ObjectReader ar(a, field + ".atoms");
    Atom at;
    for (const auto& c : ar.get("cells")) at.cells.push_back(detail::ObjectReader::as_count(c, field + ".atoms.cells"));
    if (at.cells.size() != Q.nodes.size()) throw SchemaError(field + ".atoms.cells", "one cell per coupling node");
    at.mass = ar.number("mass");
    ar.finish();
    Q.atoms.push_back(std::move(at));
  }
  r.finish();
  return Q;
}

}  // namespace mvlift
