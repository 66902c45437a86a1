// Acceptance run: one PASS/FAIL line per criterion, measured values alongside
// their tolerances. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "mvlift/analysis.hpp"
#include "mvlift/entropic.hpp"

using namespace mvlift;

namespace {

constexpr double kExact = 1e-8;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [violated: " << what << "]";
    }
  }
};

/// Largest (certificate bound - primal) over every certificate checked in the run.
double g_cert_excess = -kInf;
std::size_t g_cert_count = 0;

void log_certificate(double bound, double primal) {
  g_cert_excess = std::max(g_cert_excess, bound - primal);
  ++g_cert_count;
}

AnalysisOptions eul_opts(double tol = 1e-7) {
  AnalysisOptions o;
  o.eulerian.tol = tol;
  o.eulerian.max_iter = 400000;
  return o;
}

MeasureField random_rows(const TargetGrid& g, std::size_t n, std::mt19937_64& rng, double sparsity = 0.0) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = U(rng) < sparsity ? 0.0 : U(rng);
    if (m.row(i).sum() == 0.0) m(i, 0) = 1.0;
    m.row(i) /= m.row(i).sum();
  }
  return MeasureField(g, m);
}

/// Random walk over target cells with steps in {-1, 0, 1}, reflected at the ends.
std::vector<std::size_t> random_walk(std::size_t n, std::size_t M, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> step(-1, 1);
  std::uniform_int_distribution<std::size_t> start(0, M - 1);
  std::vector<std::size_t> c{start(rng)};
  while (c.size() < n) {
    long k = static_cast<long>(c.back()) + step(rng);
    if (k < 0) k = 1;
    if (k >= static_cast<long>(M)) k = static_cast<long>(M) - 2;
    c.push_back(static_cast<std::size_t>(k));
  }
  return c;
}

// ---- 1 ---------------------------------------------------------------------

Outcome lifting_identity() {
  Outcome o;
  const auto D = build_interval(32, 1.0);
  const auto g = TargetGrid::line(16, 0, 1);
  const auto A = SubdomainMask::full(D);
  const auto W = Integrand::quadratic(0.5);
  const auto costs = make_costs(D, g, W);
  const auto opt = eul_opts();
  std::mt19937_64 rng(101);
  double worst_abs = 0.0, worst_rel = 0.0;
  for (int t = 0; t < 20; ++t) {
    const ClassicalMap u = map_from_cells(g, random_walk(32, 16, rng));
    const MeasureField mu = embed(u, g, EmbedMode::nearest);
    const double E = eval_energy(u, D, A, W);
    const double te = solve_path(mu, D, A, costs).value;
    const EulerianReport e = solve_eulerian(mu, D, A, W, opt.eulerian);
    worst_abs = std::max(worst_abs, std::abs(te - E));
    if (E > 0) worst_rel = std::max(worst_rel, std::abs(e.value - E) / E);
    o.require(e.converged, "Eulerian solve converged");
  }
  const MeasureField flat = embed(map_from_cells(g, std::vector<std::size_t>(32, 7)), g, EmbedMode::nearest);
  const double te0 = solve_path(flat, D, A, costs).value;
  const double teul0 = solve_eulerian(flat, D, A, W, opt.eulerian).value;
  o.require(worst_abs <= kExact, "|T_E - E| <= 1e-8");
  o.require(worst_rel <= 0.05, "|T_Eul - E|/E <= 5%");
  o.require(te0 == 0.0 && std::abs(teul0) <= 1e-12, "constant map gives 0");
  o.detail << "20 maps on interval(32): max|T_E-E| = " << worst_abs << " (tol 1e-8), max|T_Eul-E|/E = " << worst_rel
           << " (tol 0.05); constant map T_E = " << te0 << ", T_Eul = " << teul0;
  return o;
}

// ---- 2 ---------------------------------------------------------------------

struct EnvelopeInstance {
  SpatialDomain D;
  TargetGrid g;
  MeasureField mu;
};

std::vector<EnvelopeInstance> envelope_instances() {
  std::vector<EnvelopeInstance> out;
  std::mt19937_64 rng(202);
  for (int t = 0; t < 10; ++t) {
    const bool cyc = t % 2 == 1;
    const std::size_t N = 4 + static_cast<std::size_t>(t / 2) % 3, M = 3 + static_cast<std::size_t>(t % 4 >= 2);
    EnvelopeInstance I{cyc ? build_circle(N, 1.0) : build_interval(N, 1.0), TargetGrid::line(M, 0, 1, cyc), {}};
    I.mu = random_step_mixture(I.D, I.g, 2 + static_cast<std::size_t>(t % 3), rng);
    out.push_back(std::move(I));
  }
  return out;
}

Outcome envelope_ordering() {
  Outcome o;
  const auto W = Integrand::quadratic(0.5);
  const auto opt = eul_opts();
  double l1 = -kInf, l2 = -kInf, l3 = -kInf;
  for (const auto& I : envelope_instances()) {
    const auto A = SubdomainMask::full(I.D);
    const auto costs = make_costs(I.D, I.g, W);
    const ExactResult te = solve_exact(I.mu, I.D, A, costs);
    const EulerianReport e = solve_eulerian(I.mu, I.D, A, W, opt.eulerian);
    const auto chk = check_eulerian_certificate(e.certificate, I.mu, I.D, A, W);
    const double como = coupling_cost(comonotone_coupling(I.mu, A), I.D, A, costs);
    o.require(e.converged && chk.feasible, "Eulerian solve converged with a feasible certificate");
    log_certificate(chk.lower_bound, e.value);
    l1 = std::max(l1, chk.lower_bound - e.value);
    l2 = std::max(l2, (e.value - te.value) / std::max(te.value, 1e-12));
    l3 = std::max(l3, te.value - como);
  }
  o.require(l1 <= kExact, "certificate bound <= T_Eul + 1e-8");
  o.require(l2 <= 0.02, "T_Eul <= T_E within 2%");
  o.require(l3 <= kExact, "T_E <= comonotone + 1e-8");
  o.detail << "10 instances (intervals/cycles N<=6, M<=4): max(bound - T_Eul) = " << l1
           << " (tol 1e-8), max (T_Eul - T_E)/T_E = " << l2 << " (tol 0.02), max(T_E - comonotone) = " << l3
           << " (tol 1e-8)";
  return o;
}

// ---- 3 ---------------------------------------------------------------------

Outcome superposition() {
  Outcome o;
  const RefinementStudy s = superposition_study({{16, 16}, {32, 32}, {64, 64}}, eul_opts(1e-6));
  const auto& te = s.quantities.at("T_E");
  const auto& tu = s.quantities.at("T_Eul");
  const auto& gap = s.quantities.at("rel_gap");
  const double e1 = std::abs(te.back() - 0.5) / 0.5, e2 = std::abs(tu.back() - 0.5) / 0.5;
  o.require(e1 <= 0.05, "T_E within 5% of 0.5 at (64,64)");
  o.require(e2 <= 0.05, "T_Eul within 5% of 0.5 at (64,64)");
  o.require(strictly_decreasing(gap), "relative gap strictly decreasing");
  o.detail << "T_E = " << te[0] << ", " << te[1] << ", " << te[2] << "; T_Eul = " << tu[0] << ", " << tu[1] << ", "
           << tu[2] << "; rel_gap = " << gap[0] << ", " << gap[1] << ", " << gap[2]
           << "; finest errors vs 0.5: " << e1 << ", " << e2 << " (tol 0.05)";
  return o;
}

// ---- 4 ---------------------------------------------------------------------

Outcome circle_counterexample() {
  Outcome o;
  const auto opt = eul_opts(1e-6);
  const std::vector<std::size_t> Ns{6, 8, 10, 12};
  const RefinementStudy s = divergence_study(Ns, opt);
  const auto& te = s.quantities.at("T_E");
  const auto& tu = s.quantities.at("T_Eul");
  double worst_arc = -kInf, worst_violation = kInf;
  for (std::size_t N : Ns) {
    const GalleryInstance g = build_sqrt_circle(N);
    const auto costs = make_costs(g.domain, g.grid, opt.W);
    const SubdomainMask arc = SubdomainMask::arc(g.domain, 1, N - 1);
    worst_arc = std::max(worst_arc, solve_path(g.mu, g.domain, arc, costs).value / (arc.measure(g.domain) / 8.0));
    const std::size_t k = N / 2;
    const AdditivityReport r =
        additivity_probe(g, SubdomainMask::arc(g.domain, 0, k + 1), SubdomainMask::arc(g.domain, k, N - k + 1), opt);
    o.require(r.te_exact && r.edge_disjoint, "covering arcs solved exactly");
    worst_violation = std::min(worst_violation, r.te12 - r.te1 - r.te2);
    o.require(r.violation_certified, "T_E(A1) + T_E(A2) < T_E(S1) for N=" + std::to_string(N));
  }
  const double ratio = te.back() / tu.back();
  const double worst_eul = *std::max_element(tu.begin(), tu.end());
  o.require(worst_arc <= 1.05, "(a) T_E(arc) <= 1.05 m(A)/8");
  o.require(strictly_increasing(te), "(b) T_E(S1) strictly increasing in N");
  o.require(ratio >= 3.0, "(b) T_E(12)/T_Eul(12) >= 3");
  o.require(worst_eul <= 1.05 * std::numbers::pi / 4, "(c) T_Eul(S1) <= 1.05 pi/4");
  o.detail << "N = 6,8,10,12: (a) max T_E(arc)/(m(A)/8) = " << worst_arc << " (tol 1.05); (b) T_E(S1) = " << te[0]
           << ", " << te[1] << ", " << te[2] << ", " << te[3] << ", T_E/T_Eul at 12 = " << ratio
           << " (need >= 3); (c) max T_Eul(S1) = " << worst_eul << " (bound " << 1.05 * std::numbers::pi / 4
           << "); (d) min T_E(S1) - T_E(A1) - T_E(A2) = " << worst_violation << " (need > 1e-8)";
  return o;
}

// ---- 5 ---------------------------------------------------------------------

Outcome additivity_dichotomy() {
  Outcome o;
  const auto opt = eul_opts(1e-6);
  std::vector<std::tuple<GalleryInstance, SubdomainMask, SubdomainMask, bool>> pairs;
  for (std::size_t N : {8u, 10u, 12u}) {
    GalleryInstance g = build_sqrt_circle(N);
    const std::size_t k = N / 2;
    auto A1 = SubdomainMask::arc(g.domain, 0, k + 1), A2 = SubdomainMask::arc(g.domain, k, N - k + 1);
    pairs.emplace_back(std::move(g), std::move(A1), std::move(A2), true);
  }
  std::mt19937_64 rng(505);
  for (int t = 0; t < 7; ++t) {
    const bool cyc = t % 2 == 1;
    const std::size_t N = 9 + static_cast<std::size_t>(t % 3);
    GalleryInstance g{"random", cyc ? build_circle(N, 1.0) : build_interval(N, 1.0), TargetGrid::line(4, 0, 1, cyc), {}};
    g.mu = random_step_mixture(g.domain, g.grid, 3, rng);
    // Either node-disjoint with a separating node, or arcs sharing one endpoint.
    SubdomainMask A1 = SubdomainMask::arc(g.domain, 0, 4);
    SubdomainMask A2 = t % 3 == 0 ? SubdomainMask::arc(g.domain, 3, 4) : SubdomainMask::arc(g.domain, 5, N - 6 + (cyc ? 0 : 1));
    pairs.emplace_back(std::move(g), std::move(A1), std::move(A2), false);
  }
  double worst_super = -kInf, worst_add = 0.0, best_gap = 0.0;
  for (const auto& [g, A1, A2, circle] : pairs) {
    const AdditivityReport r = additivity_probe(g, A1, A2, opt);
    o.require(r.edge_disjoint && r.te_exact, "pair is edge-disjoint and T_E exact");
    worst_super = std::max(worst_super, r.te1 + r.te2 - r.te12);
    worst_add = std::max(worst_add, std::abs(r.teul1 + r.teul2 - r.teul12));
    if (circle) best_gap = std::max(best_gap, r.superadditivity_gap);
  }
  o.require(worst_super <= kExact, "T_E superadditive within 1e-8");
  o.require(worst_add <= 2 * opt.eulerian.tol, "T_Eul additive within 2 tol");
  o.require(best_gap >= 0.5, "a circle pair has superadditivity gap >= 0.5");
  o.detail << "10 edge-disjoint pairs: max(T_E(A1)+T_E(A2)-T_E(A1uA2)) = " << worst_super
           << " (tol 1e-8), max|T_Eul additivity defect| = " << worst_add << " (tol " << 2 * opt.eulerian.tol
           << "), largest circle gap = " << best_gap << " (need >= 0.5)";
  return o;
}

// ---- 6 ---------------------------------------------------------------------

Outcome duality() {
  Outcome o;
  const auto W = Integrand::quadratic(0.5);
  double worst_phi = 0.0, worst_gap = 0.0;
  for (const auto& I : envelope_instances()) {
    const auto A = SubdomainMask::full(I.D);
    const auto costs = make_costs(I.D, I.g, W);
    const ExactResult te = solve_exact(I.mu, I.D, A, costs);
    const CertificateCheck chk = check_certificate(te.certificate, I.mu, I.D, A, costs);
    o.require(chk.feasible, "LP dual is a feasible certificate");
    log_certificate(chk.lower_bound, te.value);
    worst_phi = std::max(worst_phi, std::abs(chk.lower_bound - te.value));
  }
  std::mt19937_64 rng(606);
  const auto opt = eul_opts(1e-6);
  for (int t = 0; t < 6; ++t) {
    const std::size_t N = 6 + 2 * static_cast<std::size_t>(t);
    const auto D = build_interval(N, 1.0);
    const auto A = SubdomainMask::full(D);
    const auto mu = random_rows(TargetGrid::line(5 + static_cast<std::size_t>(t), 0, 1), N, rng, t % 2 ? 0.0 : 0.3);
    const EulerianReport e = solve_eulerian(mu, D, A, W, opt.eulerian);
    if (e.infeasible) continue;
    const auto chk = check_eulerian_certificate(e.certificate, mu, D, A, W);
    o.require(e.converged && chk.feasible, "interval Eulerian solve converged with a feasible certificate");
    log_certificate(chk.lower_bound, e.value);
    worst_gap = std::max(worst_gap, (e.value - chk.lower_bound) / std::max(std::abs(e.value), 1e-12));
  }
  o.require(g_cert_excess <= kExact, "every certificate bound <= primal + 1e-8");
  o.require(worst_gap <= 1e-4, "Eulerian relative duality gap <= 1e-4");
  o.require(worst_phi <= kExact, "LP dual reproduces the primal within 1e-8");
  o.detail << g_cert_count << " certificates: max(bound - primal) = " << g_cert_excess
           << " (tol 1e-8); interval Eulerian max relative gap = " << worst_gap
           << " (tol 1e-4); max|phi bound - T_E| = " << worst_phi << " (tol 1e-8)";
  return o;
}

// ---- 7 ---------------------------------------------------------------------

Outcome smoothing() {
  Outcome o;
  const auto opt = eul_opts(1e-7);
  const std::vector<double> sigmas{0.5, 1.0, 2.0};
  std::vector<std::pair<GalleryInstance, SubdomainMask>> cases;
  for (std::size_t N : {6u, 8u, 10u}) {
    GalleryInstance g = build_sqrt_circle(N);
    SubdomainMask A = SubdomainMask::arc(g.domain, 0, N - 1);
    cases.emplace_back(std::move(g), std::move(A));
  }
  std::mt19937_64 rng(707);
  for (int t = 0; t < 3; ++t) {
    GalleryInstance g{"random", build_circle(6, 1.0), TargetGrid::line(6, 0, 1, true), {}};
    g.mu = random_step_mixture(g.domain, g.grid, 3, rng);
    SubdomainMask A = SubdomainMask::arc(g.domain, static_cast<std::size_t>(t), 5);
    cases.emplace_back(std::move(g), std::move(A));
  }
  double worst_te = -kInf, worst_eul = -kInf;
  for (const auto& [g, A] : cases)
    for (const SmoothingRow& r : smoothing_check(g, A, sigmas, opt)) {
      worst_te = std::max(worst_te, r.te_smoothed - r.te);
      worst_eul = std::max(worst_eul, (r.teul_smoothed - r.teul) / (1.0 + r.teul));
    }
  o.require(worst_te <= kExact, "T_E(mollified) <= T_E + 1e-8");
  o.require(worst_eul <= 2 * opt.eulerian.tol, "T_Eul(mollified) <= T_Eul within solver tolerance");
  o.detail << "6 periodic arc instances, sigma in {0.5, 1, 2}: max(T_E(smoothed) - T_E) = " << worst_te
           << " (tol 1e-8), max(T_Eul(smoothed) - T_Eul)/(1+T_Eul) = " << worst_eul << " (tol "
           << 2 * opt.eulerian.tol << ")";
  return o;
}

// ---- 8 ---------------------------------------------------------------------

Outcome flow_rate() {
  Outcome o;
  const RefinementStudy s = flow_rate_study({16, 32, 64}, 0.05, 1.0, 2, eul_opts(1e-7));
  const double slope = s.slopes.at("normalized_error");
  const auto& dev = s.quantities.at("marginal_deviation");
  const auto& err = s.quantities.at("normalized_error");
  const double worst_dev = *std::max_element(dev.begin(), dev.end());
  o.require(slope >= 0.8, "log-log slope >= 0.8");
  o.require(worst_dev <= 1e-3, "marginal deviation <= 1e-3");
  o.detail << "regularized sqrt-circle N = 16, 32, 64: normalized error = " << err[0] << ", " << err[1] << ", " << err[2]
           << ", slope = " << slope << " (need >= 0.8); max marginal deviation = " << worst_dev << " (tol 1e-3)";
  return o;
}

// ---- 9 ---------------------------------------------------------------------

Outcome entropic_consistency() {
  Outcome o;
  const auto D = build_circle(5, 1.0);
  const auto g = TargetGrid::line(3, 0, 1);
  const auto A = SubdomainMask::full(D);
  const auto costs = make_costs(D, g, Integrand::quadratic(0.5));
  std::mt19937_64 rng(909);
  double worst_mono = -kInf, worst_dist = 0.0;
  for (int t = 0; t < 5; ++t) {
    const MeasureField mu = random_rows(g, 5, rng);
    const auto res = solve_cycle_entropic_schedule(mu, D, A, costs, {0.05, 0.02, 0.01}, 1e-9, 20000);
    for (const auto& r : res) o.require(r.converged, "entropic solve converged");
    for (std::size_t k = 1; k < res.size(); ++k) worst_mono = std::max(worst_mono, res[k].value - res[k - 1].value);
    worst_dist = std::max(worst_dist, std::abs(res.back().value - solve_exact(mu, D, A, costs).value));
  }
  o.require(worst_mono <= kExact, "values nonincreasing as eps decreases");
  o.require(worst_dist <= 0.15, "|value(0.01) - exact| <= 0.15");
  o.detail << "5 instances on cycle(5), M=3, eps = 0.05, 0.02, 0.01: max increase = " << worst_mono
           << " (tol 1e-8), max|value(0.01) - T_E| = " << worst_dist << " (tol 0.15)";
  return o;
}

// ---- 10 --------------------------------------------------------------------

Outcome bw_structure() {
  Outcome o;
  const auto D = build_circle(5, 1.0);
  const auto g = TargetGrid::line(6, 0, 1, true);
  const auto A = SubdomainMask::full(D);
  const std::vector<Integrand> Ws{Integrand::quadratic(0.5), Integrand::p_power(1.5, 1.0), Integrand::p_power(3.0, 0.2),
                                  Integrand::tv(0.7)};
  std::mt19937_64 rng(1010);
  std::normal_distribution<double> N(0.0, 1.0);
  auto momentum = [&] {
    MomentumField J(D, g);
    for (auto& f : J.flux)
      for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = 0.1 * N(rng);
    return J;
  };
  double coer = -kInf, conv = -kInf, dual = -kInf;
  for (int s = 0; s < 1000; ++s) {
    const Integrand& W = Ws[static_cast<std::size_t>(s) % Ws.size()];
    const MeasureField m1 = random_rows(g, 5, rng, s % 2 ? 0.0 : 0.2), m2 = random_rows(g, 5, rng);
    const MomentumField J1 = momentum(), J2 = momentum();
    const double b1 = eval_BW(m1, J1, D, A, W), b2 = eval_BW(m2, J2, D, A, W);

    const auto [c1, c2] = W.linear_coercivity();
    double mass = 0.0;
    for (std::size_t e : A.edges())
      for (std::size_t c = 0; c < g.size(); ++c) mass += D.edges[e].weight * std::abs(J1.centered(e, c)[0]);
    coer = std::max(coer, c1 * mass - c2 * A.edge_weight(D) - b1);

    MomentumField Jm = J1;
    for (std::size_t e = 0; e < J1.flux.size(); ++e) Jm.flux[e] = 0.5 * (J1.flux[e] + J2.flux[e]);
    const double mid = eval_BW(MeasureField(g, 0.5 * (m1.rho + m2.rho)), Jm, D, A, W);
    if (std::isfinite(b1) && std::isfinite(b2)) conv = std::max(conv, mid - 0.5 * (b1 + b2));

    // Pairs (a, b) with a + W*(b) <= 0 give sum w (a rho-bar + b J-bar) <= B_W.
    double lin = 0.0;
    for (std::size_t e : A.edges()) {
      const Eigen::VectorXd rb = edge_average(m1, D.edges[e]);
      for (std::size_t c = 0; c < g.size(); ++c) {
        double b = N(rng);
        if (W.one_homogeneous()) b = std::clamp(b, -W.coeff(), W.coeff());
        const double a = -W.conjugate(b) - std::abs(N(rng));
        lin += D.edges[e].weight * (a * rb[static_cast<Eigen::Index>(c)] + b * J1.centered(e, c)[0]);
      }
    }
    if (std::isfinite(b1)) dual = std::max(dual, lin - b1);
  }
  o.require(coer <= kExact, "coercivity");
  o.require(conv <= kExact, "joint convexity");
  o.require(dual <= kExact, "dual-pair inequality");
  o.detail << "1000 samples over 4 integrands: max coercivity defect = " << coer << ", max convexity defect = " << conv
           << ", max dual-pair defect = " << dual << " (tol 1e-8 each)";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"lifting identity", lifting_identity},
      {"envelope ordering", envelope_ordering},
      {"superposition equality on curves", superposition},
      {"circle counterexample", circle_counterexample},
      {"additivity dichotomy", additivity_dichotomy},
      {"duality", duality},
      {"smoothing monotonicity", smoothing},
      {"flow-construction rate", flow_rate},
      {"entropic consistency", entropic_consistency},
      {"B_W structure", bw_structure},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    std::printf("%s criterion %zu (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                o.detail.str().c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed ? 1 : 0;
}
