#pragma once

// Lagrangian lifting: couplings of maps with prescribed node marginals.
// Exact support-restricted LP, two-marginal plans glued along paths,
// quantile couplings and exact certificate checks by dynamic programming.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mvlift/domain.hpp"
#include "mvlift/error.hpp"
#include "mvlift/fields.hpp"
#include "mvlift/integrand.hpp"
#include "mvlift/lp.hpp"

namespace mvlift {

/// Per-edge cost matrices c_e(j, j') (indexed by domain edge), plus optional
/// per-node linear costs n_i(j) = m_i f(x_i, y_j).
struct EdgeCostTable {
  std::vector<Eigen::MatrixXd> edge;
  std::vector<Eigen::VectorXd> node;  // empty: no data term

  double node_cost(std::size_t i, std::size_t j) const {
    return node.empty() ? 0.0 : node[i][static_cast<Eigen::Index>(j)];
  }
  double max_entry() const {
    double s = 0.0;
    for (const auto& c : edge) s = std::max(s, c.size() ? c.maxCoeff() : 0.0);
    for (const auto& n : node) s = std::max(s, n.size() ? n.maxCoeff() : 0.0);
    return s;
  }
};

/// c_e(j,j') = w_e W(column (y_j' - y_j) / l_e), shortest representative on periodic axes.
inline EdgeCostTable make_costs(const SpatialDomain& D, const TargetGrid& g, const Integrand& W,
                                const DataTerm* f = nullptr) {
  EdgeCostTable t;
  const std::size_t C = g.size();
  const auto per = g.periods();
  const Integrand Wc = W.kind() == IntegrandKind::custom_table ? W : W.with_shape(g.q(), 1);
  for (const Edge& e : D.edges) {
    Eigen::MatrixXd c(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(C));
    for (std::size_t j = 0; j < C; ++j)
      for (std::size_t k = 0; k < C; ++k) {
        Mat v(g.q(), 1);
        const auto a = g.center(j), b = g.center(k);
        for (int ax = 0; ax < g.q(); ++ax) v(ax, 0) = wrap_delta(b[ax] - a[ax], per[ax]) / e.length;
        c(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = e.weight * Wc.value(v);
      }
    t.edge.push_back(std::move(c));
  }
  if (f && f->active()) {
    for (std::size_t i = 0; i < D.size(); ++i) {
      Eigen::VectorXd n(static_cast<Eigen::Index>(C));
      for (std::size_t j = 0; j < C; ++j) n[static_cast<Eigen::Index>(j)] = D.node_weights[i] * f->at_cell(i, j, g.center(j), g.q());
      t.node.push_back(std::move(n));
    }
  }
  return t;
}

struct Atom {
  std::vector<std::size_t> cells;  // one target cell per coupling node
  double mass = 0.0;
};

/// Finitely supported probability over maps on `nodes`.
struct Coupling {
  std::vector<std::size_t> nodes;
  std::vector<Atom> atoms;

  double total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.mass;
    return s;
  }
};

/// Expected energy of a map drawn from Q, over the edges induced by A.
inline double coupling_cost(const Coupling& Q, const SpatialDomain& D, const SubdomainMask& A,
                            const EdgeCostTable& costs) {
  std::vector<std::size_t> pos(D.size(), D.size());
  for (std::size_t k = 0; k < Q.nodes.size(); ++k) pos[Q.nodes[k]] = k;
  for (std::size_t i : A.nodes())
    if (pos[i] == D.size()) throw InvalidInput("coupling_cost: coupling misses a mask node");
  double total = 0.0;
  for (const auto& a : Q.atoms) {
    double c = 0.0;
    for (std::size_t e : A.edges())
      c += costs.edge[e](static_cast<Eigen::Index>(a.cells[pos[D.edges[e].tail]]),
                         static_cast<Eigen::Index>(a.cells[pos[D.edges[e].head]]));
    for (std::size_t i : A.nodes()) c += costs.node_cost(i, a.cells[pos[i]]);
    total += a.mass * c;
  }
  return total;
}

/// Max over coupling nodes of sum_j |pushforward_j - mu_ij|.
inline double check_marginals(const Coupling& Q, const MeasureField& mu) {
  double worst = 0.0;
  for (std::size_t k = 0; k < Q.nodes.size(); ++k) {
    Eigen::VectorXd push = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mu.cells()));
    for (const auto& a : Q.atoms) push[static_cast<Eigen::Index>(a.cells[k])] += a.mass;
    worst = std::max(worst, (push - mu.rho.row(static_cast<Eigen::Index>(Q.nodes[k])).transpose()).lpNorm<1>());
  }
  return worst;
}

/// phi(i, j) over (node, cell); the lower bound is sum_i m_i sum_j phi(i,j) mu_ij.
struct LagrangianCertificate {
  Eigen::MatrixXd phi;
};

struct ExactResult {
  double value = 0.0;
  Coupling coupling;
  LagrangianCertificate certificate;
  std::size_t atoms = 0;
  std::size_t iterations = 0;
};

namespace detail {

inline void check_rows(const MeasureField& mu, const std::vector<std::size_t>& nodes) {
  for (std::size_t i : nodes) {
    const auto row = mu.rho.row(static_cast<Eigen::Index>(i));
    if ((row.array() < 0.0).any() || std::abs(row.sum() - 1.0) > 1e-9)
      throw InvalidInput("marginal row " + std::to_string(i) + " is not a probability vector");
  }
}

// Certificate values off the row supports: negative enough that any map
// through such a cell is dominated by the zero energy lower bound.
inline void fill_off_support(Eigen::MatrixXd& phi, const MeasureField& mu, const SpatialDomain& D,
                             const std::vector<std::size_t>& nodes, double cost_scale) {
  double s = cost_scale;
  for (std::size_t i : nodes) {
    double mx = 0.0;
    for (Eigen::Index j = 0; j < phi.cols(); ++j)
      if (mu.rho(static_cast<Eigen::Index>(i), j) > 0.0) mx = std::max(mx, std::abs(phi(static_cast<Eigen::Index>(i), j)));
    s += D.node_weights[i] * mx;
  }
  for (std::size_t i : nodes)
    for (Eigen::Index j = 0; j < phi.cols(); ++j)
      if (!(mu.rho(static_cast<Eigen::Index>(i), j) > 0.0)) phi(static_cast<Eigen::Index>(i), j) = -(s + 1.0) / D.node_weights[i];
}

}  // namespace detail

/// Exact T_E on A by the LP over the product of row supports.
inline ExactResult solve_exact(const MeasureField& mu, const SpatialDomain& D, const SubdomainMask& A,
                               const EdgeCostTable& costs, std::size_t budget = 1u << 16) {
  const std::vector<std::size_t>& nodes = A.nodes();
  if (nodes.empty()) throw InvalidParameter("solve_exact: empty mask");
  detail::check_rows(mu, nodes);
  std::vector<std::vector<std::size_t>> supp;
  double count = 1.0;
  for (std::size_t i : nodes) {
    supp.push_back(mu.support(i));
    count *= static_cast<double>(supp.back().size());
  }
  if (count > static_cast<double>(budget))
    throw CapacityError("solve_exact: " + std::to_string(static_cast<long long>(count)) +
                        " support atoms exceed the budget " + std::to_string(budget) +
                        "; use the entropic or path solver");
  const std::size_t K = nodes.size();
  std::vector<std::size_t> pos(D.size(), D.size());
  for (std::size_t k = 0; k < K; ++k) pos[nodes[k]] = k;

  // Row layout: node 0 keeps every support cell; later nodes drop their last.
  std::vector<std::size_t> row_base(K);
  std::size_t rows = 0;
  for (std::size_t k = 0; k < K; ++k) {
    row_base[k] = rows;
    rows += k == 0 ? supp[k].size() : supp[k].size() - 1;
  }
  LinearProgram lp;
  lp.rows = rows;
  lp.rhs.resize(rows);
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t keep = k == 0 ? supp[k].size() : supp[k].size() - 1;
    for (std::size_t t = 0; t < keep; ++t)
      lp.rhs[row_base[k] + t] = mu.rho(static_cast<Eigen::Index>(nodes[k]), static_cast<Eigen::Index>(supp[k][t]));
  }
  const std::size_t n_atoms = static_cast<std::size_t>(count);
  std::vector<std::size_t> digit(K, 0);
  std::vector<std::vector<std::size_t>> assignment;
  assignment.reserve(n_atoms);
  for (std::size_t a = 0; a < n_atoms; ++a) {
    std::vector<std::size_t> cells(K);
    SparseColumn col;
    for (std::size_t k = 0; k < K; ++k) {
      cells[k] = supp[k][digit[k]];
      if (k == 0 || digit[k] + 1 < supp[k].size()) col.entries.push_back({row_base[k] + digit[k], 1.0});
    }
    double c = 0.0;
    for (std::size_t e : A.edges())
      c += costs.edge[e](static_cast<Eigen::Index>(cells[pos[D.edges[e].tail]]),
                         static_cast<Eigen::Index>(cells[pos[D.edges[e].head]]));
    for (std::size_t k = 0; k < K; ++k) c += costs.node_cost(nodes[k], cells[k]);
    lp.add_column(c, std::move(col));
    assignment.push_back(std::move(cells));
    for (std::size_t k = K; k-- > 0;) {
      if (++digit[k] < supp[k].size()) break;
      digit[k] = 0;
    }
  }
  const LpResult r = solve_lp(lp);
  if (r.status != LpStatus::optimal)
    throw NumericalError("solve_exact: LP finished with status " + to_string(r.status));

  ExactResult out;
  out.value = r.value;
  out.atoms = n_atoms;
  out.iterations = r.iterations;
  out.coupling.nodes = nodes;
  for (std::size_t a = 0; a < n_atoms; ++a)
    if (r.x[a] > 1e-14) out.coupling.atoms.push_back({assignment[a], r.x[a]});
  out.certificate.phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D.size()), static_cast<Eigen::Index>(mu.cells()));
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t keep = k == 0 ? supp[k].size() : supp[k].size() - 1;
    for (std::size_t t = 0; t < keep; ++t)
      out.certificate.phi(static_cast<Eigen::Index>(nodes[k]), static_cast<Eigen::Index>(supp[k][t])) =
          r.duals[row_base[k] + t] / D.node_weights[nodes[k]];
  }
  double cmax = 0.0;
  for (double c : lp.cost) cmax = std::max(cmax, c);
  detail::fill_off_support(out.certificate.phi, mu, D, nodes, cmax);
  return out;
}

struct PlanEntry {
  std::size_t from, to;
  double mass;
};

struct Ot2Result {
  double value = 0.0;
  std::vector<PlanEntry> plan;
  Eigen::VectorXd alpha, beta;  // c(j,k) - alpha_j - beta_k >= 0 on the support product
};

/// Exact two-marginal transport between probability rows a and b.
inline Ot2Result solve_ot2(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& c) {
  if (a.size() != c.rows() || b.size() != c.cols()) throw InvalidInput("solve_ot2: shape mismatch");
  for (const auto* r : {&a, &b})
    if ((r->array() < 0.0).any() || std::abs(r->sum() - 1.0) > 1e-9)
      throw InvalidInput("solve_ot2: rows must be probability vectors");
  std::vector<std::size_t> sa, sb;
  for (Eigen::Index j = 0; j < a.size(); ++j)
    if (a[j] > 0) sa.push_back(static_cast<std::size_t>(j));
  for (Eigen::Index j = 0; j < b.size(); ++j)
    if (b[j] > 0) sb.push_back(static_cast<std::size_t>(j));
  LinearProgram lp;
  lp.rows = sa.size() + sb.size() - 1;
  for (std::size_t j : sa) lp.rhs.push_back(a[static_cast<Eigen::Index>(j)]);
  for (std::size_t t = 0; t + 1 < sb.size(); ++t) lp.rhs.push_back(b[static_cast<Eigen::Index>(sb[t])]);
  for (std::size_t s = 0; s < sa.size(); ++s)
    for (std::size_t t = 0; t < sb.size(); ++t) {
      SparseColumn col;
      col.entries.push_back({s, 1.0});
      if (t + 1 < sb.size()) col.entries.push_back({sa.size() + t, 1.0});
      lp.add_column(c(static_cast<Eigen::Index>(sa[s]), static_cast<Eigen::Index>(sb[t])), std::move(col));
    }
  const LpResult r = solve_lp(lp);
  if (r.status != LpStatus::optimal) throw NumericalError("solve_ot2: LP finished with status " + to_string(r.status));
  Ot2Result out;
  out.value = r.value;
  out.alpha = Eigen::VectorXd::Zero(a.size());
  out.beta = Eigen::VectorXd::Zero(b.size());
  for (std::size_t s = 0; s < sa.size(); ++s) out.alpha[static_cast<Eigen::Index>(sa[s])] = r.duals[s];
  for (std::size_t t = 0; t + 1 < sb.size(); ++t) out.beta[static_cast<Eigen::Index>(sb[t])] = r.duals[sa.size() + t];
  for (std::size_t s = 0; s < sa.size(); ++s)
    for (std::size_t t = 0; t < sb.size(); ++t) {
      const double x = r.x[s * sb.size() + t];
      if (x > 1e-14) out.plan.push_back({sa[s], sb[t], x});
    }
  return out;
}

namespace detail {

// Split `atoms` (all with cell `j` at the last node) against plan entries
// out of j, north-west style, appending the plan's target cell.
inline void nw_extend(std::vector<Atom>& out, std::vector<Atom> atoms, std::vector<PlanEntry> entries) {
  std::size_t a = 0, p = 0;
  double ra = atoms.empty() ? 0.0 : atoms[0].mass, rp = entries.empty() ? 0.0 : entries[0].mass;
  while (a < atoms.size() && p < entries.size()) {
    const double m = std::min(ra, rp);
    if (m > 0.0) {
      Atom x = atoms[a];
      x.cells.push_back(entries[p].to);
      x.mass = m;
      out.push_back(std::move(x));
    }
    ra -= m;
    rp -= m;
    if (ra <= 1e-15 * (1.0 + m) && a < atoms.size()) { if (++a < atoms.size()) ra = atoms[a].mass; }
    if (rp <= 1e-15 * (1.0 + m) && p < entries.size()) { if (++p < entries.size()) rp = entries[p].mass; }
  }
}

// Common refinement of several couplings on disjoint node sets, each read as a
// partition of the unit latent interval in atom order.
inline Coupling refine_product(const std::vector<Coupling>& parts) {
  Coupling out;
  std::vector<double> cuts{0.0, 1.0};
  for (const auto& q : parts) {
    for (std::size_t k : q.nodes) out.nodes.push_back(k);
    double z = 0.0;
    for (const auto& a : q.atoms) {
      z += a.mass;
      cuts.push_back(std::min(z, 1.0));
    }
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::size_t> idx(parts.size(), 0);
  std::vector<double> upper(parts.size(), 0.0);
  for (std::size_t p = 0; p < parts.size(); ++p) upper[p] = parts[p].atoms.empty() ? 1.0 : parts[p].atoms[0].mass;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double lo = cuts[c], hi = cuts[c + 1];
    if (hi - lo <= 1e-15) continue;
    const double mid = 0.5 * (lo + hi);
    Atom at;
    at.mass = hi - lo;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto& q = parts[p];
      while (idx[p] + 1 < q.atoms.size() && upper[p] < mid) upper[p] += q.atoms[++idx[p]].mass;
      for (std::size_t cell : q.atoms[idx[p]].cells) at.cells.push_back(cell);
    }
    out.atoms.push_back(std::move(at));
  }
  return out;
}

}  // namespace detail

struct PathResult {
  double value = 0.0;
  Coupling coupling;
  std::vector<std::size_t> edges;       // induced edges in solve order
  std::vector<Ot2Result> plans;         // oriented tail -> head
  LagrangianCertificate certificate;
};

/// T_E on a mask whose induced graph is a union of paths: sum of exact
/// two-marginal values, glued into one coupling.
inline PathResult solve_path(const MeasureField& mu, const SpatialDomain& D, const SubdomainMask& A,
                             const EdgeCostTable& costs) {
  detail::check_rows(mu, A.nodes());
  const auto comps = components(D, A);
  for (const auto& c : comps)
    if (c.shape == ComponentShape::cycle || c.shape == ComponentShape::other)
      throw StructureError("solve_path: induced graph is not a union of paths");
  PathResult out;
  const auto C = static_cast<Eigen::Index>(mu.cells());
  out.certificate.phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(D.size()), C);
  auto row = [&](std::size_t i) -> Eigen::VectorXd { return mu.rho.row(static_cast<Eigen::Index>(i)).transpose(); };
  std::vector<Coupling> parts;
  for (const auto& comp : comps) {
    Coupling q;
    q.nodes.push_back(comp.nodes[0]);
    for (Eigen::Index j = 0; j < C; ++j)
      if (mu.rho(static_cast<Eigen::Index>(comp.nodes[0]), j) > 0) q.atoms.push_back({{static_cast<std::size_t>(j)}, mu.rho(static_cast<Eigen::Index>(comp.nodes[0]), j)});
    for (std::size_t k = 0; k < comp.edges.size(); ++k) {
      const std::size_t e = comp.edges[k];
      const Edge& ed = D.edges[e];
      Ot2Result r = solve_ot2(row(ed.tail), row(ed.head), costs.edge[e]);
      out.value += r.value;
      for (Eigen::Index j = 0; j < C; ++j) {
        out.certificate.phi(static_cast<Eigen::Index>(ed.tail), j) += r.alpha[j] / D.node_weights[ed.tail];
        out.certificate.phi(static_cast<Eigen::Index>(ed.head), j) += r.beta[j] / D.node_weights[ed.head];
      }
      // Orient the plan along the traversal and extend the glued coupling.
      std::vector<PlanEntry> plan = r.plan;
      if (!comp.forward[k])
        for (auto& p : plan) std::swap(p.from, p.to);
      std::map<std::size_t, std::vector<PlanEntry>> by_from;
      for (const auto& p : plan) by_from[p.from].push_back(p);
      std::map<std::size_t, std::vector<Atom>> by_cell;
      for (auto& a : q.atoms) by_cell[a.cells.back()].push_back(std::move(a));
      std::vector<Atom> next;
      for (auto& [cell, atoms] : by_cell) detail::nw_extend(next, std::move(atoms), by_from[cell]);
      q.atoms = std::move(next);
      q.nodes.push_back(comp.nodes[k + 1]);
      out.edges.push_back(e);
      out.plans.push_back(std::move(r));
    }
    parts.push_back(std::move(q));
  }
  for (std::size_t i : A.nodes()) {
    for (Eigen::Index j = 0; j < C; ++j) {
      const double nc = costs.node_cost(i, static_cast<std::size_t>(j));
      out.value += mu.rho(static_cast<Eigen::Index>(i), j) * nc;
      out.certificate.phi(static_cast<Eigen::Index>(i), j) += nc / D.node_weights[i];
    }
  }
  out.coupling = detail::refine_product(parts);
  detail::fill_off_support(out.certificate.phi, mu, D, A.nodes(), costs.max_entry() * static_cast<double>(A.edges().size() + A.size()));
  return out;
}

/// Quantile coupling: latent z in [0,1) maps node i to the cell where its row CDF passes z.
inline Coupling comonotone_coupling(const MeasureField& mu, const SubdomainMask& A) {
  if (mu.grid.q() != 1) throw Unsupported("comonotone_coupling: only scalar targets are supported");
  detail::check_rows(mu, A.nodes());
  std::vector<double> cuts{0.0, 1.0};
  std::vector<std::vector<double>> cdf;
  for (std::size_t i : A.nodes()) {
    std::vector<double> F(mu.cells());
    double s = 0.0;
    for (std::size_t j = 0; j < mu.cells(); ++j) F[j] = s += mu.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    for (double& x : F) x /= s;
    for (double x : F) cuts.push_back(x);
    cdf.push_back(std::move(F));
  }
  std::sort(cuts.begin(), cuts.end());
  Coupling Q;
  Q.nodes = A.nodes();
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double lo = cuts[c], hi = std::min(cuts[c + 1], 1.0);
    if (hi - lo <= 1e-15) continue;
    const double z = 0.5 * (lo + hi);
    Atom a;
    a.mass = hi - lo;
    for (const auto& F : cdf) {
      const auto it = std::lower_bound(F.begin(), F.end(), z);
      a.cells.push_back(std::min<std::size_t>(static_cast<std::size_t>(it - F.begin()), F.size() - 1));
    }
    Q.atoms.push_back(std::move(a));
  }
  return Q;
}

struct CertificateCheck {
  bool feasible = false;
  double lower_bound = 0.0;
  double max_violation = 0.0;  // max over maps of sum m_i phi(i,u_i) - E(u)
  std::string method;
};

/// Decides sum_i m_i phi(i,u_i) <= E(u, A) for all maps u exactly; paths by
/// forward DP, cycles by conditioning on the first cell, otherwise enumeration.
inline CertificateCheck check_certificate(const LagrangianCertificate& cert, const MeasureField& mu,
                                          const SpatialDomain& D, const SubdomainMask& A,
                                          const EdgeCostTable& costs, std::size_t budget = 1u << 20) {
  const auto C = static_cast<Eigen::Index>(mu.cells());
  if (cert.phi.rows() != static_cast<Eigen::Index>(D.size()) || cert.phi.cols() != C)
    throw InvalidInput("check_certificate: certificate shape mismatch");
  auto gain = [&](std::size_t i, Eigen::Index j) {
    return D.node_weights[i] * cert.phi(static_cast<Eigen::Index>(i), j) - costs.node_cost(i, static_cast<std::size_t>(j));
  };
  auto cost = [&](std::size_t e, std::size_t from, bool forward, Eigen::Index j, Eigen::Index k) {
    (void)from;
    return forward ? costs.edge[e](j, k) : costs.edge[e](k, j);
  };
  const auto comps = components(D, A);
  CertificateCheck out;
  out.method = "dp";
  double worst = 0.0, scale = 0.0;
  for (const auto& comp : comps) {
    double best = -kInf;
    if (comp.shape == ComponentShape::isolated || comp.shape == ComponentShape::path ||
        comp.shape == ComponentShape::cycle) {
      const bool cyc = comp.shape == ComponentShape::cycle;
      const Eigen::Index starts = cyc ? C : 1;
      for (Eigen::Index s = 0; s < starts; ++s) {
        Eigen::VectorXd v(C);
        for (Eigen::Index j = 0; j < C; ++j) v[j] = (cyc && j != s) ? -kInf : gain(comp.nodes[0], j);
        const std::size_t steps = cyc ? comp.edges.size() - 1 : comp.edges.size();
        for (std::size_t k = 0; k < steps; ++k) {
          Eigen::VectorXd w = Eigen::VectorXd::Constant(C, -kInf);
          for (Eigen::Index k2 = 0; k2 < C; ++k2) {
            for (Eigen::Index j = 0; j < C; ++j)
              if (v[j] > -kInf) w[k2] = std::max(w[k2], v[j] - cost(comp.edges[k], comp.nodes[k], comp.forward[k], j, k2));
            w[k2] += gain(comp.nodes[k + 1], k2);
          }
          v = std::move(w);
        }
        if (cyc) {
          const std::size_t last = comp.edges.size() - 1;
          for (Eigen::Index j = 0; j < C; ++j)
            if (v[j] > -kInf) best = std::max(best, v[j] - cost(comp.edges[last], comp.nodes[last], comp.forward[last], j, s));
        } else {
          best = std::max(best, v.maxCoeff());
        }
      }
    } else {
      out.method = "enumeration";
      const double count = std::pow(static_cast<double>(C), static_cast<double>(comp.nodes.size()));
      if (count > static_cast<double>(budget))
        throw Unsupported("check_certificate: component is neither a path nor a cycle and exceeds the enumeration budget");
      std::vector<std::size_t> pos(D.size(), 0);
      for (std::size_t k = 0; k < comp.nodes.size(); ++k) pos[comp.nodes[k]] = k;
      std::vector<Eigen::Index> u(comp.nodes.size(), 0);
      for (std::size_t t = 0; t < static_cast<std::size_t>(count); ++t) {
        double val = 0.0;
        for (std::size_t k = 0; k < comp.nodes.size(); ++k) val += gain(comp.nodes[k], u[k]);
        for (std::size_t e : comp.edges) val -= costs.edge[e](u[pos[D.edges[e].tail]], u[pos[D.edges[e].head]]);
        best = std::max(best, val);
        for (std::size_t k = comp.nodes.size(); k-- > 0;) {
          if (++u[k] < C) break;
          u[k] = 0;
        }
      }
    }
    worst += best;
  }
  for (std::size_t i : A.nodes())
    for (Eigen::Index j = 0; j < C; ++j)
      if (mu.rho(static_cast<Eigen::Index>(i), j) > 0) scale = std::max(scale, std::abs(D.node_weights[i] * cert.phi(static_cast<Eigen::Index>(i), j)));
  scale = std::max(scale, costs.max_entry());
  out.max_violation = worst;
  out.feasible = worst <= 1e-10 * (1.0 + scale * static_cast<double>(A.size()));
  for (std::size_t i : A.nodes())
    for (Eigen::Index j = 0; j < C; ++j) {
      const double r = mu.rho(static_cast<Eigen::Index>(i), j);
      if (r > 0) out.lower_bound += D.node_weights[i] * cert.phi(static_cast<Eigen::Index>(i), j) * r;
    }
  return out;
}

}  // namespace mvlift
