// Command-line front end: solvers, verification, galleries and refinement studies.
//
// Exit codes: 0 all assertions pass, 1 an assertion failed, 2 a solver did not
// converge, 3 invalid input or usage.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "mvlift/io.hpp"

using namespace mvlift;

namespace {

constexpr double kExactTol = 1e-8;

struct Common {
  std::string out;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

unsigned env_threads() {
  if (const char* s = std::getenv("MVLIFT_THREADS")) return static_cast<unsigned>(std::strtoul(s, nullptr, 10));
  return 0;
}

Instance load(const std::string& path, const Common& c) {
  Instance I = parse_instance(path);
  if (c.seed && *c.seed != I.solver.seed) {
    I.solver.seed = *c.seed;
    detail::build_instance(I);
  }
  if (c.deterministic) I.solver.deterministic = true;
  return I;
}

EulerianOptions eulerian_options(const Instance& I) {
  EulerianOptions o = I.eulerian_options();
  if (!I.solver.deterministic) o.threads = env_threads();
  return o;
}

AnalysisOptions analysis_options(const Common& c, double tol, std::size_t max_iter) {
  AnalysisOptions o;
  o.eulerian.tol = tol;
  o.eulerian.max_iter = max_iter;
  o.eulerian.threads = c.deterministic ? 1 : env_threads();
  return o;
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    std::size_t pos = 0;
    const unsigned long v = std::stoul(tok, &pos);
    if (pos != tok.size()) throw InvalidParameter("bad list entry '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidParameter("empty list");
  return out;
}

std::vector<double> parse_real_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) out.push_back(std::stod(tok));
  if (out.empty()) throw InvalidParameter("empty list");
  return out;
}

/// Writes <out>.json (and <out>.csv), or prints CSV / JSON to stdout.
int emit(const RunReport& r, const Common& c, const std::optional<CsvTable>& csv = std::nullopt) {
  if (!c.out.empty()) {
    write_file(c.out + ".json", canonical_dump(r.to_json()));
    if (csv) write_file(c.out + ".csv", csv->str());
  } else if (csv) {
    std::cout << csv->str();
  } else {
    std::cout << canonical_dump(r.to_json());
  }
  for (const Assertion* a : r.failures())
    std::cerr << "FAILED " << a->name << ": " << fmt_double(a->lhs) << " " << a->relation << " "
              << fmt_double(a->rhs) << " (tol " << fmt_double(a->tol) << ")\n";
  if (!r.converged) std::cerr << "solver did not converge: " << r.diagnostics.dump() << "\n";
  const int code = r.exit_code();
  std::cerr << r.command << ": " << (code == 0 ? "pass" : code == 1 ? "assertion failure" : "non-convergence") << "\n";
  return code;
}

void add_certificate_checks(RunReport& r, const Instance& I, const EdgeCostTable& costs,
                            const LagrangianCertificate& cert, double value, bool exact) {
  const CertificateCheck chk = check_certificate(cert, I.mu, I.domain, I.mask, costs);
  r.results["lower_bound"] = num(chk.lower_bound);
  r.diagnostics["certificate_method"] = chk.method;
  r.check_le("certificate feasible: max violation <= 0", chk.max_violation, 0.0, kExactTol);
  r.check_le("certificate bound <= value", chk.lower_bound, value, kExactTol);
  if (exact) r.check_near("certificate bound = value", chk.lower_bound, value, kExactTol);
}

RunReport solve_lagrangian(const Instance& I, const std::string& method, std::optional<std::size_t> x0) {
  RunReport r;
  r.command = "solve-lagrangian";
  r.digest = instance_digest(I);
  r.results["method"] = method;
  ScopedTimer t(r, "solve");
  const EdgeCostTable costs = I.costs();
  if (method == "exact" || method == "path") {
    Coupling Q;
    LagrangianCertificate cert;
    double value = 0.0;
    if (method == "exact") {
      ExactResult e = solve_exact(I.mu, I.domain, I.mask, costs, I.solver.budget);
      value = e.value;
      Q = std::move(e.coupling);
      cert = std::move(e.certificate);
      r.diagnostics["atoms"] = e.atoms;
      r.diagnostics["iterations"] = e.iterations;
    } else {
      PathResult p = solve_path(I.mu, I.domain, I.mask, costs);
      value = p.value;
      Q = std::move(p.coupling);
      cert = std::move(p.certificate);
    }
    r.results["value"] = num(value);
    r.results["coupling"] = coupling_to_json(Q);
    r.results["certificate"] = matrix_to_json(cert.phi);
    r.check_le("coupling marginal deviation <= 0", check_marginals(Q, I.mu), 0.0, kExactTol);
    r.check_near("coupling cost = value", coupling_cost(Q, I.domain, I.mask, costs), value, kExactTol * (1 + std::abs(value)));
    add_certificate_checks(r, I, costs, cert, value, true);
  } else if (method == "comonotone") {
    const Coupling Q = comonotone_coupling(I.mu, I.mask);
    const double value = coupling_cost(Q, I.domain, I.mask, costs);
    r.results["value"] = num(value);
    r.results["coupling"] = coupling_to_json(Q);
    r.check_le("coupling marginal deviation <= 0", check_marginals(Q, I.mu), 0.0, kExactTol);
  } else if (method == "cycle-entropic") {
    const auto res = solve_cycle_entropic_schedule(I.mu, I.domain, I.mask, costs, I.solver.eps, I.solver.tol, I.solver.max_iter);
    Json rows = Json::array();
    for (std::size_t k = 0; k < res.size(); ++k) {
      rows.push_back({{"eps", res[k].eps}, {"value", num(res[k].value)}, {"marginal_error", num(res[k].marginal_error)},
                      {"iterations", res[k].iterations}, {"converged", res[k].converged}});
      r.converged = r.converged && res[k].converged;
      if (k > 0 && res[k].eps < res[k - 1].eps)
        r.check_le("entropic value nonincreasing as eps decreases (eps=" + fmt_double(res[k].eps) + ")", res[k].value,
                   res[k - 1].value, kExactTol);
    }
    r.results["schedule"] = rows;
    double worst = 0.0;
    for (const auto& x : res) worst = std::max(worst, x.marginal_error);
    r.diagnostics["max_marginal_error"] = num(worst);
    r.diagnostics["marginal_tol"] = I.solver.tol;
    r.results["value"] = num(res.back().value);
  } else if (method == "flow") {
    const EulerianReport e = solve_eulerian(I.mu, I.domain, I.mask, I.W, eulerian_options(I));
    r.converged = e.converged;
    const std::size_t centre = x0 ? *x0 : I.mask.nodes()[I.mask.size() / 2];
    const FlowFamily fam = parametric_flow_coupling(I.mu, FlowVelocity::from_momentum(I.mu, e.J, I.domain), I.domain,
                                                    I.mask, centre, I.W);
    const double bw = eval_BW(I.mu, e.J, I.domain, I.mask, I.W);
    r.results["value"] = num(fam.value);
    r.results["centre"] = centre;
    r.results["B_W"] = num(bw);
    r.results["marginal_deviation"] = num(fam.marginal_deviation);
    r.results["normalized_error"] = num(std::abs(fam.value - bw) / I.mask.measure(I.domain));
    r.diagnostics["samples"] = fam.weights.size();
    r.diagnostics["clamped"] = fam.clamped;
    r.diagnostics["eulerian_iterations"] = e.iterations;
    r.check_le("flow coupling marginal deviation <= 1e-3", fam.marginal_deviation, 1e-3, 0.0);
  } else {
    throw InvalidParameter("unknown method '" + method + "'");
  }
  return r;
}

Json eulerian_certificate_json(const EulerianCertificate& c) {
  return {{"psi", vectors_to_json(c.psi)}, {"b", vectors_to_json(c.b)}};
}

RunReport solve_eulerian_cmd(const Instance& I, const EulerianOptions& opt) {
  RunReport r;
  r.command = "solve-eulerian";
  r.digest = instance_digest(I);
  ScopedTimer t(r, "solve");
  const EulerianReport e = solve_eulerian(I.mu, I.domain, I.mask, I.W, opt);
  r.converged = e.converged || e.infeasible;
  r.results["value"] = num(e.value);
  r.results["lower_bound"] = num(e.lower_bound);
  r.results["gap"] = num(e.gap);
  r.results["residual"] = num(e.residual);
  r.results["infeasible"] = e.infeasible;
  r.results["momentum"] = vectors_to_json(e.J.flux);
  r.results["certificate"] = eulerian_certificate_json(e.certificate);
  r.diagnostics["method"] = e.method;
  r.diagnostics["iterations"] = e.iterations;
  r.diagnostics["consensus"] = num(e.consensus);
  r.diagnostics["tol"] = opt.tol;
  if (!e.infeasible) {
    r.check_le("certificate bound <= value", e.lower_bound, e.value, kExactTol);
    r.check_le("duality gap <= tol (1 + |value|)", e.gap, opt.tol * (1.0 + std::abs(e.value)), 0.0);
  }
  return r;
}

/// Re-checks a stored solve report against its instance.
RunReport verify(const Instance& I, const Json& res) {
  RunReport r;
  r.command = "verify";
  r.digest = instance_digest(I);
  ScopedTimer t(r, "verify");
  const std::string cmd = res.at("command").get<std::string>();
  r.results["verified_command"] = cmd;
  const bool same = res.at("instance_digest").get<std::string>() == r.digest;
  r.check_near("instance digest matches", same ? 1.0 : 0.0, 1.0, 0.0);
  const Json& out = res.at("results");
  const double value = to_double(out.at("value"), "results.value");
  r.results["value"] = num(value);
  if (cmd == "solve-lagrangian") {
    const EdgeCostTable costs = I.costs();
    if (out.contains("coupling")) {
      const Coupling Q = coupling_from_json(out["coupling"], "results.coupling");
      r.check_near("coupling mass = 1", Q.total_mass(), 1.0, kExactTol);
      r.check_le("coupling marginal deviation <= 0", check_marginals(Q, I.mu), 0.0, kExactTol);
      r.check_near("coupling cost = value", coupling_cost(Q, I.domain, I.mask, costs), value, kExactTol * (1 + std::abs(value)));
    }
    if (out.contains("certificate")) {
      LagrangianCertificate cert{matrix_from_json(out["certificate"], static_cast<Eigen::Index>(I.domain.size()),
                                                  static_cast<Eigen::Index>(I.grid.size()), "results.certificate")};
      add_certificate_checks(r, I, costs, cert, value, false);
      if (out.contains("lower_bound"))
        r.check_near("reported bound = recomputed bound", to_double(out["lower_bound"], "results.lower_bound"),
                     r.results["lower_bound"].get<double>(), kExactTol);
    }
  } else if (cmd == "solve-eulerian") {
    if (out.at("infeasible").get<bool>()) {
      r.check_near("infeasible report has value inf", value, kInf, 0.0);
      return r;
    }
    const double tol = to_double(res.at("diagnostics").at("tol"), "diagnostics.tol");
    MomentumField J(I.domain, I.grid);
    J.flux = vectors_from_json(out.at("momentum"), I.domain.edges.size(),
                               static_cast<Eigen::Index>(I.grid.q() * I.grid.size()), "results.momentum");
    for (auto& f : J.flux)
      if (f.size() == 0) f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(I.grid.q() * I.grid.size()));
    const double bw = eval_BW(I.mu, J, I.domain, I.mask, I.W);
    const double res_c = continuity_residual(I.mu, J, I.domain, I.mask);
    r.results["B_W"] = num(bw);
    r.results["continuity_residual"] = num(res_c);
    r.check_near("B_W(J) = value", bw, value, kExactTol * (1 + std::abs(value)));
    r.check_le("continuity residual <= tol", res_c, tol, 0.0);
    const Json& c = out.at("certificate");
    EulerianCertificate cert;
    cert.psi = vectors_from_json(c.at("psi"), I.domain.edges.size(), static_cast<Eigen::Index>(I.grid.size()), "results.certificate.psi");
    cert.b = vectors_from_json(c.at("b"), I.domain.edges.size(), static_cast<Eigen::Index>(I.grid.q() * I.grid.size()), "results.certificate.b");
    const EulerianCertificateCheck chk = check_eulerian_certificate(cert, I.mu, I.domain, I.mask, I.W);
    r.results["lower_bound"] = num(chk.lower_bound);
    r.check_near("certificate feasible", chk.feasible ? 1.0 : 0.0, 1.0, 0.0);
    r.check_le("certificate bound <= value", chk.lower_bound, value, kExactTol);
    r.check_le("certificate bound <= B_W(J)", chk.lower_bound, bw, kExactTol);
  } else {
    throw InvalidInput("verify: unsupported result command '" + cmd + "'");
  }
  return r;
}

RunReport gap_cmd(const Instance& I, std::optional<CsvTable>& csv) {
  RunReport r;
  r.command = "gap";
  r.digest = instance_digest(I);
  ScopedTimer t(r, "gap");
  AnalysisOptions o;
  o.W = I.W;
  o.eulerian = eulerian_options(I);
  o.budget = I.solver.budget;
  if (I.data.active()) throw Unsupported("gap: data terms are not supported");
  const GapReport g = gap_report(GalleryInstance{"instance", I.domain, I.grid, I.mu}, {{"mask", I.mask}}, o);
  const GapRow& row = g.rows[0];
  r.results["te"] = {{"value", num(row.te.value)}, {"lower", num(row.te.lower)}, {"upper", num(row.te.upper)},
                     {"method", row.te.method}, {"exact", row.te.exact}};
  r.results["teul"] = num(row.teul);
  r.results["teul_gap"] = num(row.teul_gap);
  r.results["gap"] = num(row.gap);
  r.converged = row.teul_converged;
  const double eul_tol = o.eulerian.tol * (1.0 + std::abs(row.teul));
  r.check_ge("T_E lower >= T_Eul", row.te.lower, row.teul, eul_tol + kExactTol);
  csv = gap_csv(g);
  return r;
}

RunReport study_report(const std::string& command, const RefinementStudy& s, std::optional<CsvTable>& csv) {
  RunReport r;
  r.command = command;
  r.results = study_to_json(s);
  for (const auto& f : s.flags) r.check_near(f, 0.0, 1.0, 0.0);
  if (s.flags.empty()) r.check_near("all study assertions hold", 1.0, 1.0, 0.0);
  csv = study_csv(s);
  return r;
}

RunReport gallery_disk(const std::vector<std::size_t>& ns, const AnalysisOptions& o, std::optional<CsvTable>& csv) {
  RunReport r;
  r.command = "gallery disk";
  csv = CsvTable{{"n", "sector_measure", "teul", "bound"}, {}};
  Json rows = Json::array();
  for (std::size_t n : ns) {
    ScopedTimer t(r, "n=" + std::to_string(n));
    const GalleryInstance g = build_sqrt_disk(n);
    const SubdomainMask S = sector_mask(g.domain, 0.0, std::numbers::pi);
    const EulerianReport e = solve_eulerian(g.mu, g.domain, S, o.W, o.eulerian);
    r.converged = r.converged && e.converged;
    const double m = S.measure(g.domain), bound = 5.0 * m / 8.0;
    r.check_le("T_Eul(upper sector, n=" + std::to_string(n) + ") <= 1.1 * 5 m/8", e.value, 1.1 * bound, 0.0);
    rows.push_back({{"n", n}, {"sector_measure", m}, {"teul", num(e.value)}, {"bound", bound}, {"iterations", e.iterations}});
    csv->add({std::to_string(n), fmt_double(m), fmt_double(e.value), fmt_double(bound)});
  }
  r.results["rows"] = rows;
  return r;
}

RunReport smoothing_cmd(std::size_t N, const std::vector<double>& sigmas, const AnalysisOptions& o, std::optional<CsvTable>& csv) {
  RunReport r;
  r.command = "study smoothing";
  ScopedTimer t(r, "study");
  const GalleryInstance g = build_sqrt_circle(N);
  const SubdomainMask arc = SubdomainMask::arc(g.domain, 0, N - 1);
  const auto rows = smoothing_check(g, arc, sigmas, o);
  csv = CsvTable{{"sigma", "te", "te_smoothed", "teul", "teul_smoothed"}, {}};
  Json out = Json::array();
  for (const auto& row : rows) {
    const std::string s = fmt_double(row.sigma);
    r.check_le("T_E(mollified, sigma=" + s + ") <= T_E", row.te_smoothed, row.te, kExactTol);
    r.check_le("T_Eul(mollified, sigma=" + s + ") <= T_Eul", row.teul_smoothed, row.teul, 2.0 * o.eulerian.tol * (1.0 + row.teul));
    out.push_back({{"sigma", row.sigma}, {"te", row.te}, {"te_smoothed", row.te_smoothed}, {"teul", row.teul},
                   {"teul_smoothed", row.teul_smoothed}});
    csv->add({s, fmt_double(row.te), fmt_double(row.te_smoothed), fmt_double(row.teul), fmt_double(row.teul_smoothed)});
  }
  r.results["rows"] = out;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lagrangian and Eulerian liftings of measure-valued maps"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", common.out, "write <out>.json and <out>.csv instead of printing");
    sub->add_option("--seed", seed, "override the instance seed");
    sub->add_flag("--deterministic", common.deterministic, "single-threaded, bit-reproducible solves");
  };

  std::string inst_path, result_path, method = "exact", nodes, levels, sigmas = "0.5,1,2";
  double tol = 1e-6, lambda = 0.05, sigma0 = 1.0;
  std::size_t max_iter = 20000, half_width = 2, circle_n = 8;
  std::optional<std::size_t> x0;
  std::optional<double> tol_override;
  std::optional<std::size_t> iter_override;

  auto* sl = app.add_subcommand("solve-lagrangian", "Lagrangian lifting T_E");
  sl->add_option("instance", inst_path)->required()->check(CLI::ExistingFile);
  sl->add_option("--method", method)->check(CLI::IsMember({"exact", "path", "cycle-entropic", "comonotone", "flow"}));
  sl->add_option("--x0", x0, "flow: centre node");
  add_common(sl);

  auto* se = app.add_subcommand("solve-eulerian", "Eulerian lifting T_Eul");
  se->add_option("instance", inst_path)->required()->check(CLI::ExistingFile);
  se->add_option("--tol", tol_override);
  se->add_option("--max-iter", iter_override);
  add_common(se);

  auto* ve = app.add_subcommand("verify", "re-check a stored solve report");
  ve->add_option("instance", inst_path)->required()->check(CLI::ExistingFile);
  ve->add_option("result", result_path)->required()->check(CLI::ExistingFile);
  add_common(ve);

  auto* ga = app.add_subcommand("gap", "T_E against T_Eul on the instance mask");
  ga->add_option("instance", inst_path)->required()->check(CLI::ExistingFile);
  add_common(ga);

  auto* gl = app.add_subcommand("gallery", "counterexample galleries");
  std::string gallery;
  gl->add_option("which", gallery)->required()->check(CLI::IsMember({"circle", "disk"}));
  gl->add_option("--nodes", nodes, "comma-separated node counts");
  gl->add_option("--tol", tol);
  gl->add_option("--max-iter", max_iter);
  add_common(gl);

  auto* st = app.add_subcommand("study", "refinement studies");
  std::string study;
  st->add_option("which", study)->required()->check(CLI::IsMember({"superposition", "divergence", "smoothing", "flow-rate"}));
  st->add_option("--nodes", nodes, "comma-separated resolutions");
  st->add_option("--sigmas", sigmas, "smoothing: comma-separated mollifier widths");
  st->add_option("--circle-nodes", circle_n, "smoothing: sqrt-circle node count");
  st->add_option("--lambda", lambda, "flow-rate: regularization weight");
  st->add_option("--sigma", sigma0, "flow-rate: mollifier width at the coarsest level (cells)");
  st->add_option("--half-width", half_width, "flow-rate: arc half-width in nodes");
  st->add_option("--tol", tol);
  st->add_option("--max-iter", max_iter);
  add_common(st);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }
  for (auto* sub : {sl, se, ve, ga, gl, st})
    if (sub->parsed() && sub->count("--seed")) common.seed = seed;

  try {
    std::optional<CsvTable> csv;
    if (sl->parsed()) return emit(solve_lagrangian(load(inst_path, common), method, x0), common);
    if (se->parsed()) {
      const Instance I = load(inst_path, common);
      EulerianOptions o = eulerian_options(I);
      if (tol_override) o.tol = *tol_override;
      if (iter_override) o.max_iter = *iter_override;
      return emit(solve_eulerian_cmd(I, o), common);
    }
    if (ve->parsed()) return emit(verify(load(inst_path, common), parse_json_text(read_file(result_path))), common);
    if (ga->parsed()) {
      RunReport r = gap_cmd(load(inst_path, common), csv);
      return emit(r, common, csv);
    }
    const AnalysisOptions o = analysis_options(common, tol, max_iter);
    if (gl->parsed()) {
      if (gallery == "circle") {
        RunReport r = study_report("gallery circle", divergence_study(parse_list(nodes.empty() ? "6,8,10,12" : nodes), o), csv);
        return emit(r, common, csv);
      }
      RunReport r = gallery_disk(parse_list(nodes.empty() ? "9,11" : nodes), o, csv);
      return emit(r, common, csv);
    }
    RunReport r;
    if (study == "superposition") {
      std::vector<std::pair<std::size_t, std::size_t>> lv;
      for (std::size_t n : parse_list(nodes.empty() ? "16,32,64" : nodes)) lv.emplace_back(n, n);
      r = study_report("study superposition", superposition_study(lv, o), csv);
    } else if (study == "divergence") {
      r = study_report("study divergence", divergence_study(parse_list(nodes.empty() ? "6,8,10,12" : nodes), o), csv);
    } else if (study == "smoothing") {
      r = smoothing_cmd(circle_n, parse_real_list(sigmas), o, csv);
    } else {
      r = study_report("study flow-rate",
                       flow_rate_study(parse_list(nodes.empty() ? "16,32,64" : nodes), lambda, sigma0, half_width, o), csv);
    }
    return emit(r, common, csv);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
  } catch (const SchemaError& e) {
    std::cerr << "schema error at " << e.field() << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return 3;
}
