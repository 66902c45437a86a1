#pragma once

// Comparison harness for the two liftings: gallery instances (square root on
// the circle and on the disk), gap reports, additivity probes and the
// refinement studies.

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvlift/domain.hpp"
#include "mvlift/entropic.hpp"
#include "mvlift/error.hpp"
#include "mvlift/eulerian.hpp"
#include "mvlift/fields.hpp"
#include "mvlift/flow.hpp"
#include "mvlift/integrand.hpp"
#include "mvlift/lagrangian.hpp"

namespace mvlift {

struct GalleryInstance {
  std::string id;
  SpatialDomain domain;
  TargetGrid grid;
  MeasureField mu;
};

/// Circle of N nodes, 2N-cell periodic target with centres at pi k / N; row i
/// holds 1/2 at the two square roots of exp(2 pi i i / N).
inline GalleryInstance build_sqrt_circle(std::size_t N) {
  if (N < 4 || N % 2) throw InvalidParameter("build_sqrt_circle: N must be even and at least 4");
  const double h = std::numbers::pi / static_cast<double>(N);
  GalleryInstance g{"sqrt-circle-" + std::to_string(N), build_circle(N, 2.0 * std::numbers::pi),
                    TargetGrid::line(2 * N, -0.5 * h, 2.0 * std::numbers::pi - 0.5 * h, true), {}};
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(2 * N));
  for (std::size_t i = 0; i < N; ++i)
    r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + N)) = 0.5;
  g.mu = MeasureField(g.grid, r);
  return g;
}

/// The two branches on the sqrt circle: angle t/2 and t/2 + pi.
inline std::array<ClassicalMap, 2> sqrt_circle_branches(std::size_t N) {
  std::array<ClassicalMap, 2> u;
  for (int b = 0; b < 2; ++b) {
    u[b].q = 1;
    for (std::size_t i = 0; i < N; ++i)
      u[b].values.push_back({std::numbers::pi * static_cast<double>(i) / static_cast<double>(N) + b * std::numbers::pi, 0.0});
  }
  return u;
}

/// Nodes of an n x n grid on [-1,1]^2 (spacing 2/(n-1)) inside the closed unit
/// disk; odd target grid of `cells` per axis with centres spanning [-1,1].
/// Row at x = r exp(it), t in [0, 2 pi): 1/2 (delta_{r exp(it/2)} + delta_{-r exp(it/2)}), split multilinearly.
inline GalleryInstance build_sqrt_disk(std::size_t n, std::size_t cells = 0) {
  if (n < 8) throw InvalidParameter("build_sqrt_disk: n must be at least 8");
  if (cells == 0) cells = std::max<std::size_t>(5, (n / 2) | 1);
  if (cells % 2 == 0) throw InvalidParameter("build_sqrt_disk: target cells per axis must be odd");
  const double hx = 2.0 / static_cast<double>(n - 1);
  const SpatialDomain square = build_grid2d(n, n, {n * hx, n * hx}, {-1.0 - 0.5 * hx, -1.0 - 0.5 * hx});
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < square.size(); ++i)
    if (std::hypot(square.positions[i][0], square.positions[i][1]) <= 1.0 + 1e-12) inside.push_back(i);
  GalleryInstance g;
  g.id = "sqrt-disk-" + std::to_string(n);
  g.domain = restrict(square, SubdomainMask(square, inside));
  const double R = static_cast<double>(cells) / static_cast<double>(cells - 1);
  g.grid = TargetGrid({GridAxis{cells, -R, R, false}, GridAxis{cells, -R, R, false}});
  ClassicalMap u1{2, {}, {}}, u2{2, {}, {}};
  for (const auto& p : g.domain.positions) {
    const double r = std::min(1.0, std::hypot(p[0], p[1]));
    double t = std::atan2(p[1], p[0]);
    if (t < 0) t += 2.0 * std::numbers::pi;
    u1.values.push_back({r * std::cos(t / 2), r * std::sin(t / 2)});
    u2.values.push_back({-r * std::cos(t / 2), -r * std::sin(t / 2)});
  }
  g.mu = MeasureField(g.grid, 0.5 * (embed(u1, g.grid).rho + embed(u2, g.grid).rho));
  return g;
}

/// Nodes of the disk instance whose angle lies in [t0, t1] (radians); the
/// centre node is included when `with_centre`.
inline SubdomainMask sector_mask(const SpatialDomain& D, double t0, double t1, bool with_centre = true) {
  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < D.size(); ++i) {
    const auto& p = D.positions[i];
    if (std::hypot(p[0], p[1]) < 1e-12) {
      if (with_centre) nodes.push_back(i);
      continue;
    }
    double t = std::atan2(p[1], p[0]);
    if (t < 0) t += 2.0 * std::numbers::pi;
    if (t >= t0 - 1e-12 && t <= t1 + 1e-12) nodes.push_back(i);
  }
  return SubdomainMask(D, nodes);
}

/// Least-squares slope of log y against log x.
inline double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3) throw InvalidParameter("fit_loglog_slope: need at least 3 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0) || !(y[k] > 0)) throw InvalidInput("fit_loglog_slope: values must be positive");
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw InvalidInput("fit_loglog_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / den;
}

struct RefinementStudy {
  std::string name;
  std::vector<double> resolutions;                        // strictly increasing
  std::map<std::string, std::vector<double>> quantities;  // one value per resolution
  std::map<std::string, double> slopes;
  std::vector<std::string> flags;                         // failed assertions, empty when all pass

  void add(double resolution, const std::map<std::string, double>& values) {
    if (!resolutions.empty() && !(resolution > resolutions.back()))
      throw InvalidParameter("RefinementStudy: resolutions must be strictly increasing");
    resolutions.push_back(resolution);
    for (const auto& [k, v] : values) quantities[k].push_back(v);
  }
  bool passed() const { return flags.empty(); }
};

inline bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] > v[k - 1])) return false;
  return true;
}
inline bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) return false;
  return true;
}

struct AnalysisOptions {
  Integrand W = Integrand::quadratic(0.5);
  EulerianOptions eulerian{};
  std::size_t budget = 1u << 16;  // atoms for the exact support LP
};

/// T_E by the best available method: path solver on forests, exact LP within
/// budget, otherwise brackets (edge-wise OT lower bound, comonotone upper bound
/// for scalar targets).
struct LagrangianValue {
  double value = kInf, lower = -kInf, upper = kInf;
  std::string method;
  bool exact = false;
};

inline double edgewise_lower_bound(const MeasureField& mu, const SpatialDomain& D, const SubdomainMask& A,
                                   const EdgeCostTable& costs) {
  double s = 0.0;
  for (std::size_t e : A.edges())
    s += solve_ot2(mu.rho.row(static_cast<Eigen::Index>(D.edges[e].tail)).transpose(),
                   mu.rho.row(static_cast<Eigen::Index>(D.edges[e].head)).transpose(), costs.edge[e]).value;
  for (std::size_t i : A.nodes())
    for (std::size_t j = 0; j < mu.cells(); ++j) s += mu.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * costs.node_cost(i, j);
  return s;
}

inline LagrangianValue lagrangian_value(const MeasureField& mu, const SpatialDomain& D, const SubdomainMask& A,
                                        const EdgeCostTable& costs, std::size_t budget) {
  LagrangianValue out;
  bool forest = true;
  for (const auto& c : components(D, A)) forest = forest && (c.shape == ComponentShape::path || c.shape == ComponentShape::isolated);
  if (forest) {
    out.value = out.lower = out.upper = solve_path(mu, D, A, costs).value;
    out.method = "path";
    out.exact = true;
    return out;
  }
  try {
    out.value = out.lower = out.upper = solve_exact(mu, D, A, costs, budget).value;
    out.method = "exact";
    out.exact = true;
    return out;
  } catch (const CapacityError&) {
  }
  out.method = "brackets";
  out.lower = edgewise_lower_bound(mu, D, A, costs);
  if (mu.grid.q() == 1) out.upper = coupling_cost(comonotone_coupling(mu, A), D, A, costs);
  return out;
}

struct GapRow {
  std::string mask;
  LagrangianValue te;
  double teul = kInf, teul_gap = kInf;
  bool teul_converged = false;
  double gap = kInf;  // T_E - T_Eul (upper bracket when T_E is not exact)
};

struct GapReport {
  std::string id;
  std::vector<GapRow> rows;
  double eulerian_tol = 0.0, exact_tol = 1e-8;
  std::vector<std::string> flags;
  bool passed() const { return flags.empty(); }
};

inline GapReport gap_report(const GalleryInstance& inst, const std::vector<std::pair<std::string, SubdomainMask>>& masks,
                            const AnalysisOptions& opt = {}) {
  GapReport rep;
  rep.id = inst.id;
  rep.eulerian_tol = opt.eulerian.tol;
  const EdgeCostTable costs = make_costs(inst.domain, inst.grid, opt.W);
  for (const auto& [name, A] : masks) {
    GapRow row;
    row.mask = name;
    row.te = lagrangian_value(inst.mu, inst.domain, A, costs, opt.budget);
    const EulerianReport e = solve_eulerian(inst.mu, inst.domain, A, opt.W, opt.eulerian);
    row.teul = e.value;
    row.teul_gap = e.gap;
    row.teul_converged = e.converged;
    row.gap = (row.te.exact ? row.te.value : row.te.upper) - row.teul;
    const double ref = row.te.exact ? row.te.value : row.te.upper;
    if (row.teul > ref + 0.02 * std::max(1.0, std::abs(ref)))
      rep.flags.push_back(name + ": T_Eul " + std::to_string(row.teul) + " > T_E " + std::to_string(ref) + " + 2%");
    if (!e.converged) rep.flags.push_back(name + ": Eulerian solve did not converge");
    rep.rows.push_back(row);
  }
  return rep;
}

/// Masks are compared through their edge sets: both liftings are sums over
/// induced edges, so "disjoint" means no shared edge and no edge of the union
/// outside A1 and A2.
struct AdditivityReport {
  double te1 = 0, te2 = 0, te12 = 0, teul1 = 0, teul2 = 0, teul12 = 0;
  bool edge_disjoint = false;
  bool te_exact = false;
  bool superadditive = false;     // te1 + te2 <= te12 + 1e-8
  bool eulerian_additive = false; // |teul1 + teul2 - teul12| <= 2 tol
  bool violation_certified = false;  // te1 + te2 < te12 - 1e-8: subadditivity fails
  double superadditivity_gap = 0.0;  // te12 - te1 - te2
};

inline AdditivityReport additivity_probe(const GalleryInstance& inst, const SubdomainMask& A1, const SubdomainMask& A2,
                                         const AnalysisOptions& opt = {}) {
  const auto& D = inst.domain;
  const SubdomainMask U = mask_union(D, A1, A2);
  AdditivityReport r;
  std::vector<std::size_t> e1 = A1.edges(), e2 = A2.edges(), both;
  std::set_intersection(e1.begin(), e1.end(), e2.begin(), e2.end(), std::back_inserter(both));
  r.edge_disjoint = both.empty() && U.edges().size() == e1.size() + e2.size();
  const EdgeCostTable costs = make_costs(D, inst.grid, opt.W);
  const auto l1 = lagrangian_value(inst.mu, D, A1, costs, opt.budget), l2 = lagrangian_value(inst.mu, D, A2, costs, opt.budget),
             l12 = lagrangian_value(inst.mu, D, U, costs, opt.budget);
  r.te_exact = l1.exact && l2.exact && l12.exact;
  r.te1 = l1.value;
  r.te2 = l2.value;
  r.te12 = l12.value;
  const auto E = solve_eulerian_localized(inst.mu, D, {A1, A2, U}, opt.W, opt.eulerian);
  r.teul1 = E[0].value;
  r.teul2 = E[1].value;
  r.teul12 = E[2].value;
  r.superadditivity_gap = r.te12 - r.te1 - r.te2;
  r.superadditive = r.te_exact && r.superadditivity_gap >= -1e-8;
  r.violation_certified = r.te_exact && r.superadditivity_gap > 1e-8;
  r.eulerian_additive = std::abs(r.teul1 + r.teul2 - r.teul12) <= 2.0 * opt.eulerian.tol;
  return r;
}

/// interval(N, 1), M cells on [0,1]; rows: the Dirac at u(x) = x split onto
/// the grid and mollified with sigma (cells).
inline GalleryInstance build_geodesic(std::size_t N, std::size_t M, double sigma = 1.0) {
  GalleryInstance g{"geodesic-" + std::to_string(N) + "x" + std::to_string(M), build_interval(N, 1.0),
                    TargetGrid::line(M, 0.0, 1.0), {}};
  ClassicalMap u{1, {}, {}};
  for (const auto& p : g.domain.positions) u.values.push_back({p[0], 0.0});
  g.mu = mollify_y(embed(u, g.grid), sigma);
  return g;
}

/// Both liftings of the mollified geodesic per level; they should approach 1/2
/// with a shrinking relative gap.
inline RefinementStudy superposition_study(const std::vector<std::pair<std::size_t, std::size_t>>& levels,
                                           const AnalysisOptions& opt = {}) {
  RefinementStudy s;
  s.name = "superposition";
  for (const auto& [N, M] : levels) {
    const GalleryInstance g = build_geodesic(N, M);
    const auto A = SubdomainMask::full(g.domain);
    const double te = solve_path(g.mu, g.domain, A, make_costs(g.domain, g.grid, opt.W)).value;
    const EulerianReport e = solve_eulerian(g.mu, g.domain, A, opt.W, opt.eulerian);
    if (!e.converged) s.flags.push_back("level " + std::to_string(N) + ": Eulerian solve did not converge");
    s.add(static_cast<double>(N), {{"T_E", te}, {"T_Eul", e.value}, {"rel_gap", std::abs(te - e.value) / te}});
  }
  const auto& te = s.quantities["T_E"];
  const auto& tu = s.quantities["T_Eul"];
  if (!te.empty() && (std::abs(te.back() - 0.5) > 0.025 || std::abs(tu.back() - 0.5) > 0.025))
    s.flags.push_back("finest level not within 5% of 1/2");
  if (!strictly_decreasing(s.quantities["rel_gap"])) s.flags.push_back("relative gap not strictly decreasing");
  return s;
}

/// Exact T_E and T_Eul on the full sqrt circle per N. T_E must increase
/// strictly; T_Eul stays near pi/4.
inline RefinementStudy divergence_study(const std::vector<std::size_t>& Ns, const AnalysisOptions& opt = {},
                                        std::size_t cap = 14) {
  RefinementStudy s;
  s.name = "divergence";
  for (std::size_t N : Ns) {
    if (N > cap) throw CapacityError("divergence_study: N = " + std::to_string(N) + " exceeds the cap " + std::to_string(cap));
    const GalleryInstance g = build_sqrt_circle(N);
    const auto A = SubdomainMask::full(g.domain);
    const double te = solve_exact(g.mu, g.domain, A, make_costs(g.domain, g.grid, opt.W), std::max<std::size_t>(opt.budget, std::size_t{1} << N)).value;
    const EulerianReport e = solve_eulerian(g.mu, g.domain, A, opt.W, opt.eulerian);
    if (!e.converged) s.flags.push_back("N=" + std::to_string(N) + ": Eulerian solve did not converge");
    s.add(static_cast<double>(N), {{"T_E", te}, {"T_Eul", e.value}, {"ratio", te / e.value}});
    if (N >= 12 && (e.value < 0.9 * std::numbers::pi / 4 || e.value > 1.05 * std::numbers::pi / 4))
      s.flags.push_back("N=" + std::to_string(N) + ": T_Eul outside [0.9, 1.05] pi/4");
  }
  if (!strictly_increasing(s.quantities["T_E"])) s.flags.push_back("T_E not strictly increasing");
  return s;
}

struct SmoothingRow {
  double sigma = 0, te = 0, te_smoothed = 0, teul = 0, teul_smoothed = 0;
  bool te_ok = false, teul_ok = false;
};

/// T(mollify_y(mu, sigma)) <= T(mu) for each sigma, both liftings. T_E must be
/// exact (path masks or small cycles).
inline std::vector<SmoothingRow> smoothing_check(const GalleryInstance& inst, const SubdomainMask& A,
                                                 const std::vector<double>& sigmas, const AnalysisOptions& opt = {}) {
  const auto& D = inst.domain;
  const EdgeCostTable costs = make_costs(D, inst.grid, opt.W);
  auto te_of = [&](const MeasureField& m) {
    const auto v = lagrangian_value(m, D, A, costs, opt.budget);
    if (!v.exact) throw CapacityError("smoothing_check: exact T_E not available within the budget");
    return v.value;
  };
  const double te0 = te_of(inst.mu);
  const double teul0 = solve_eulerian(inst.mu, D, A, opt.W, opt.eulerian).value;
  std::vector<SmoothingRow> out;
  for (double s : sigmas) {
    SmoothingRow r;
    r.sigma = s;
    r.te = te0;
    r.teul = teul0;
    const MeasureField m = s > 0 ? mollify_y(inst.mu, s) : inst.mu;
    r.te_smoothed = te_of(m);
    r.teul_smoothed = solve_eulerian(m, D, A, opt.W, opt.eulerian).value;
    r.te_ok = r.te_smoothed <= r.te + 1e-8;
    r.teul_ok = r.teul_smoothed <= r.teul + 2.0 * opt.eulerian.tol * (1.0 + std::abs(r.teul));
    out.push_back(r);
  }
  return out;
}

/// Flow coupling against B_W on shrinking star-shaped arcs of the regularized
/// sqrt circle. Per N: mu = regularize(sqrt circle, lambda, sigma0 * N / N0)
/// (fixed physical width), J the Eulerian tangent, arc of half_width edges on
/// each side of x0 = N/2. Error = |sum_y w_y E(u_y, A) - B_W(mu, J, A)| / m(A).
inline RefinementStudy flow_rate_study(const std::vector<std::size_t>& Ns, double lambda = 0.05, double sigma0 = 1.0,
                                       std::size_t half_width = 2, const AnalysisOptions& opt = {}) {
  RefinementStudy s;
  s.name = "flow-rate";
  if (Ns.empty()) return s;
  const double N0 = static_cast<double>(Ns.front());
  std::vector<double> diam, err;
  for (std::size_t N : Ns) {
    const GalleryInstance g = build_sqrt_circle(N);
    const MeasureField mu = regularize(g.mu, lambda, sigma0 * static_cast<double>(N) / N0);
    const EulerianReport e = solve_eulerian(mu, g.domain, SubdomainMask::full(g.domain), opt.W, opt.eulerian);
    if (!e.converged) s.flags.push_back("N=" + std::to_string(N) + ": Eulerian solve did not converge");
    const std::size_t x0 = N / 2;
    const SubdomainMask arc = SubdomainMask::arc(g.domain, x0 - half_width, 2 * half_width + 1);
    const FlowFamily fam = parametric_flow_coupling(mu, FlowVelocity::from_momentum(mu, e.J, g.domain), g.domain, arc, x0, opt.W);
    const double bw = eval_BW(mu, e.J, g.domain, arc, opt.W);
    const double d = 2.0 * static_cast<double>(half_width) * g.domain.edges[0].length;
    const double ne = std::abs(fam.value - bw) / arc.measure(g.domain);
    s.add(static_cast<double>(N), {{"diameter", d}, {"flow_energy", fam.value}, {"B_W", bw}, {"normalized_error", ne},
                                   {"marginal_deviation", fam.marginal_deviation}});
    diam.push_back(d);
    err.push_back(ne);
    if (fam.marginal_deviation > 1e-3) s.flags.push_back("N=" + std::to_string(N) + ": marginal deviation above 1e-3");
  }
  if (diam.size() >= 3) {
    s.slopes["normalized_error"] = fit_loglog_slope(diam, err);
    if (s.slopes["normalized_error"] < 0.8) s.flags.push_back("error slope below 0.8");
  }
  return s;
}

/// Random mixture of `maps` classical maps on an interval or circle whose
/// consecutive values differ by at most one cell (the closing edge of a cycle
/// included), with Dirichlet weights.
inline MeasureField random_step_mixture(const SpatialDomain& D, const TargetGrid& g, std::size_t maps, std::mt19937_64& rng) {
  if (g.q() != 1 || D.dim != 1) throw Unsupported("random_step_mixture: scalar targets on 1-D domains only");
  const auto M = static_cast<long>(g.size());
  const bool closed = D.kind == DomainKind::circle;
  const bool wrap = g.axis(0).periodic;
  std::uniform_int_distribution<long> cell(0, M - 1), step(-1, 1);
  std::gamma_distribution<double> gam(1.0, 1.0);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D.size()), M);
  std::vector<double> w(maps);
  double tot = 0;
  for (double& x : w) tot += (x = gam(rng));
  for (std::size_t k = 0; k < maps; ++k) {
    std::vector<long> u;
    for (int attempt = 0;; ++attempt) {
      u.assign(1, cell(rng));
      for (std::size_t i = 1; i < D.size(); ++i) {
        long v = u.back() + step(rng);
        v = wrap ? (v + M) % M : std::clamp(v, 0L, M - 1);
        u.push_back(v);
      }
      if (!closed) break;
      long d = std::abs(u.back() - u.front());
      if (wrap) d = std::min(d, M - d);
      if (d <= 1) break;
      if (attempt > 10000) throw NumericalError("random_step_mixture: could not close the loop");
    }
    for (std::size_t i = 0; i < D.size(); ++i) r(static_cast<Eigen::Index>(i), u[i]) += w[k] / tot;
  }
  return MeasureField(g, r);
}

struct ConvexityReport {
  double te_violation = 0.0, teul_violation = 0.0;  // max of T(mix) - mix of T, clipped at 0
  std::size_t samples = 0;
};

/// T((1-l) mu1 + l mu2) <= (1-l) T(mu1) + l T(mu2) for l in {1/4, 1/2, 3/4}.
inline ConvexityReport convexity_probe(const SpatialDomain& D, const SubdomainMask& A, const TargetGrid& g,
                                       std::size_t pairs, std::uint64_t seed, const AnalysisOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  const EdgeCostTable costs = make_costs(D, g, opt.W);
  ConvexityReport rep;
  auto te = [&](const MeasureField& m) { return lagrangian_value(m, D, A, costs, opt.budget).value; };
  auto tu = [&](const MeasureField& m) { return solve_eulerian(m, D, A, opt.W, opt.eulerian).value; };
  for (std::size_t p = 0; p < pairs; ++p) {
    const MeasureField m1 = random_step_mixture(D, g, 3, rng), m2 = random_step_mixture(D, g, 3, rng);
    const double a1 = te(m1), a2 = te(m2), b1 = tu(m1), b2 = tu(m2);
    for (double l : {0.25, 0.5, 0.75}) {
      const MeasureField m(g, (1 - l) * m1.rho + l * m2.rho);
      rep.te_violation = std::max(rep.te_violation, te(m) - ((1 - l) * a1 + l * a2));
      rep.teul_violation = std::max(rep.teul_violation, tu(m) - ((1 - l) * b1 + l * b2));
      ++rep.samples;
    }
  }
  return rep;
}

}  // namespace mvlift
