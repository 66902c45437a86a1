#pragma once

// Eulerian lifting: minimise B_W(mu, J) over momenta J with
// (rho_head - rho_tail)/l + div_y J = 0 on every induced edge. With mu fixed the
// problem splits into one convex program per edge, solved independently.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "mvlift/domain.hpp"
#include "mvlift/error.hpp"
#include "mvlift/fields.hpp"
#include "mvlift/integrand.hpp"
#include "mvlift/lp.hpp"

namespace mvlift {

namespace detail {

inline Integrand column_integrand(const Integrand& W, int q) {
  return W.kind() == IntegrandKind::custom_table ? W : W.with_shape(q, 1);
}

inline Mat column(const Eigen::VectorXd& z, std::size_t c, std::size_t cells, int q) {
  Mat m(q, 1);
  for (int a = 0; a < q; ++a) m(a, 0) = z[static_cast<Eigen::Index>(static_cast<std::size_t>(a) * cells + c)];
  return m;
}

}  // namespace detail

/// sum over induced edges of w_e * sum_c perspective(rho-bar_c, J-at-cell_c).
inline double eval_BW(const MeasureField& mu, const MomentumField& J, const SpatialDomain& D, const SubdomainMask& A,
                      const Integrand& W) {
  if (mu.nodes() != D.size() || J.flux.size() != D.edges.size() || !(mu.grid == J.grid))
    throw InvalidInput("eval_BW: shape mismatch");
  const Integrand Wq = detail::column_integrand(W, mu.grid.q());
  double total = 0.0;
  for (std::size_t e : A.edges()) {
    const Eigen::VectorXd rb = edge_average(mu, D.edges[e]);
    double s = 0.0;
    for (std::size_t c = 0; c < mu.grid.size(); ++c) {
      const auto jc = J.centered(e, c);
      Mat z(mu.grid.q(), 1);
      for (int a = 0; a < mu.grid.q(); ++a) z(a, 0) = jc[a];
      s += Wq.perspective(std::max(rb[static_cast<Eigen::Index>(c)], 0.0), z);
      if (s == kInf) return kInf;
    }
    total += D.edges[e].weight * s;
  }
  return total;
}

/// Dual certificate on the staggered layout: per induced edge a potential
/// psi[e] over cells and a field b[e] over (axis, cell) with M^T b = D^T psi,
/// M the face-to-cell averaging and D the discrete y-divergence.
struct EulerianCertificate {
  std::vector<Eigen::VectorXd> psi;
  std::vector<Eigen::VectorXd> b;
};

struct TracePoint {
  std::size_t iteration = 0;
  double value = 0.0, residual = 0.0, gap = 0.0;
};

struct EulerianReport {
  double value = 0.0;
  double lower_bound = 0.0;
  MomentumField J;
  double residual = 0.0;     // continuity residual of J (max norm)
  double consensus = 0.0;    // splitting residual at exit
  double gap = 0.0;          // value - lower_bound
  std::size_t iterations = 0;
  bool converged = false;
  bool infeasible = false;
  std::string method;
  EulerianCertificate certificate;
  std::vector<TracePoint> trace;
};

struct EulerianOptions {
  double tol = 1e-6;
  std::size_t max_iter = 20000;
  std::size_t check_every = 10;
  unsigned threads = 0;  // 0: MVLIFT_THREADS or hardware concurrency
  bool trace = false;
  bool use_lp = true;    // LP route for one-homogeneous W on scalar targets
};

namespace detail {

// Face list, averaging and divergence operators for one target grid.
struct StaggeredOps {
  std::size_t cells = 0;
  int q = 1;
  std::vector<std::pair<int, std::size_t>> faces;  // (axis, lower cell)
  Eigen::MatrixXd M;  // (q*cells) x F
  Eigen::MatrixXd Dv; // cells x F

  explicit StaggeredOps(const TargetGrid& g) : cells(g.size()), q(g.q()) {
    for (int a = 0; a < q; ++a)
      for (std::size_t c = 0; c < cells; ++c)
        if (g.neighbor(c, a, +1) != cells) faces.push_back({a, c});
    const auto F = static_cast<Eigen::Index>(faces.size());
    M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(q * cells), F);
    Dv = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cells), F);
    for (Eigen::Index f = 0; f < F; ++f) {
      const auto [a, c0] = faces[static_cast<std::size_t>(f)];
      const std::size_t c1 = g.neighbor(c0, a, +1);
      const auto off = static_cast<Eigen::Index>(static_cast<std::size_t>(a) * cells);
      M(off + static_cast<Eigen::Index>(c0), f) += 0.5;
      M(off + static_cast<Eigen::Index>(c1), f) += 0.5;
      Dv(static_cast<Eigen::Index>(c0), f) += 1.0 / g.h(a);
      Dv(static_cast<Eigen::Index>(c1), f) -= 1.0 / g.h(a);
    }
  }
};

inline Eigen::MatrixXd null_space(const Eigen::MatrixXd& A, double rel = 1e-11) {
  if (A.rows() == 0) return Eigen::MatrixXd::Identity(A.cols(), A.cols());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double thr = rel * std::max(1.0, s.size() ? s[0] : 0.0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > thr) ++rank;
  return svd.matrixV().rightCols(A.cols() - rank);
}

// Orthonormal basis of range(A) and the pseudo-inverse factors A = U S V^T.
struct RangeBasis {
  Eigen::MatrixXd U, VSinv;
  explicit RangeBasis(const Eigen::MatrixXd& A, double rel = 1e-11) {
    if (A.cols() == 0) {
      U.resize(A.rows(), 0);
      VSinv.resize(0, 0);
      return;
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double thr = rel * std::max(1.0, s.size() ? s[0] : 0.0);
    Eigen::Index rank = 0;
    while (rank < s.size() && s[rank] > thr) ++rank;
    U = svd.matrixU().leftCols(rank);
    VSinv = svd.matrixV().leftCols(rank) * s.head(rank).cwiseInverse().asDiagonal();
  }
};

inline unsigned thread_count(unsigned requested, std::size_t jobs) {
  unsigned n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("MVLIFT_THREADS")) n = static_cast<unsigned>(std::max(1L, std::atol(env)));
    else n = std::max(1u, std::thread::hardware_concurrency());
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

// Runs job(k) for k < n on a small pool; results must be written per k.
template <class Job>
void parallel_for(std::size_t n, unsigned threads, Job&& job) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t k = 0; k < n; ++k) job(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::atomic<bool> failed{false};
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t k; (k = next++) < n;) {
        try {
          job(k);
        } catch (...) {
          if (!failed.exchange(true)) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace detail

namespace detail {

struct EdgeOutcome {
  double value = 0.0, bound = 0.0, consensus = 0.0;
  Eigen::VectorXd J, psi, b;
  std::size_t iterations = 0;
  bool converged = false, infeasible = false;
  std::vector<TracePoint> trace;
};

// Largest t in [0,1] with W*(t b_c) finite for every cell (0 is in dom W*).
inline double domain_scale(const Integrand& Wq, const Eigen::VectorXd& b, std::size_t cells, int q) {
  auto ok = [&](double t) {
    for (std::size_t c = 0; c < cells; ++c)
      if (!std::isfinite(Wq.conjugate(Mat(t * column(b, c, cells, q))))) return false;
    return true;
  };
  if (ok(1.0)) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int k = 0; k < 60; ++k) (ok(0.5 * (lo + hi)) ? lo : hi) = 0.5 * (lo + hi);
  return lo;
}

inline double dual_bound(const Integrand& Wq, const Eigen::VectorXd& b, const Eigen::VectorXd& zp,
                         const Eigen::VectorXd& rbar, std::size_t cells, int q) {
  double s = b.dot(zp);
  for (std::size_t c = 0; c < cells; ++c) {
    const double r = rbar[static_cast<Eigen::Index>(c)];
    if (r > 0.0) s -= r * Wq.conjugate(column(b, c, cells, q));
  }
  return s;
}

inline double primal_value(const Integrand& Wq, const Eigen::VectorXd& z, const Eigen::VectorXd& rbar,
                           std::size_t cells, int q) {
  double s = 0.0;
  for (std::size_t c = 0; c < cells; ++c)
    s += Wq.perspective(std::max(rbar[static_cast<Eigen::Index>(c)], 0.0), column(z, c, cells, q));
  return s;
}

// A massless cell has zero momentum, so its two faces along an axis cancel; a
// face opposite a boundary or an already-zero face is zero exactly. Removes the
// roundoff the least-squares recovery leaves there.
inline void snap_massless(const StaggeredOps& ops, const std::vector<Eigen::Index>& S, Eigen::VectorXd& J) {
  const std::size_t C = ops.cells;
  std::vector<std::array<long, 2>> face_of(static_cast<std::size_t>(ops.q) * C, {-1, -1});  // (lower, upper) per (axis, cell)
  for (std::size_t f = 0; f < ops.faces.size(); ++f) {
    const auto [a, c0] = ops.faces[f];
    const auto fi = static_cast<Eigen::Index>(f);
    for (std::size_t c = 0; c < C; ++c) {
      const auto k = static_cast<Eigen::Index>(static_cast<std::size_t>(a) * C + c);
      if (ops.M(k, fi) == 0.0) continue;
      face_of[static_cast<std::size_t>(k)][c == c0 ? 1 : 0] = static_cast<long>(f);
    }
  }
  std::vector<char> zero(ops.faces.size(), 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (Eigen::Index k : S) {
      const auto [lo, hi] = face_of[static_cast<std::size_t>(k)];
      const bool lz = lo < 0 || zero[static_cast<std::size_t>(lo)], hz = hi < 0 || zero[static_cast<std::size_t>(hi)];
      if (lz == hz) continue;
      const long f = lz ? hi : lo;
      if (std::abs(J[f]) > 1e-12 * (1.0 + J.lpNorm<Eigen::Infinity>())) continue;
      J[f] = 0.0;
      zero[static_cast<std::size_t>(f)] = 1;
      changed = true;
    }
  }
}

// ADMM on min f(sigma, z) s.t. (sigma, z) in {sigma = rho-bar, z = M J, D J = r}.
inline EdgeOutcome solve_edge_admm(const StaggeredOps& ops, const Eigen::VectorXd& rbar, const Eigen::VectorXd& r,
                                   const Integrand& Wq, double gap_scale, const EulerianOptions& opt) {
  EdgeOutcome out;
  const std::size_t C = ops.cells;
  const int q = ops.q;
  const Eigen::Index nz = static_cast<Eigen::Index>(q * C);
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> dcod(ops.Dv);
  const Eigen::VectorXd Jp = dcod.solve(r);
  const double rscale = 1.0 + r.lpNorm<Eigen::Infinity>();
  if ((ops.Dv * Jp - r).lpNorm<Eigen::Infinity>() > 1e-10 * rscale) {
    out.infeasible = true;
    return out;
  }
  const Eigen::MatrixXd N = null_space(ops.Dv);
  const Eigen::MatrixXd MN = ops.M * N;
  const RangeBasis full(MN);

  // Cells without mass carry no momentum when W is superlinear.
  std::vector<Eigen::Index> S;
  if (Wq.superlinear())
    for (std::size_t c = 0; c < C; ++c)
      if (!(rbar[static_cast<Eigen::Index>(c)] > 0.0))
        for (int a = 0; a < q; ++a) S.push_back(static_cast<Eigen::Index>(static_cast<std::size_t>(a) * C + c));
  Eigen::VectorXd Jq = Jp;
  Eigen::MatrixXd Nf = N;
  Eigen::MatrixXd GS;  // (M_S N)
  if (!S.empty()) {
    GS.resize(static_cast<Eigen::Index>(S.size()), N.cols());
    Eigen::VectorXd g(static_cast<Eigen::Index>(S.size()));
    const Eigen::VectorXd MJp = ops.M * Jp;
    for (std::size_t k = 0; k < S.size(); ++k) {
      GS.row(static_cast<Eigen::Index>(k)) = MN.row(S[k]);
      g[static_cast<Eigen::Index>(k)] = -MJp[S[k]];
    }
    if (N.cols() > 0) {
      const Eigen::VectorXd t0 = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(GS).solve(g);
      if ((GS * t0 - g).lpNorm<Eigen::Infinity>() > 1e-10 * rscale) {
        out.infeasible = true;
        return out;
      }
      Jq = Jp + N * t0;
      Nf = N * null_space(GS);
    } else if (g.lpNorm<Eigen::Infinity>() > 1e-10 * rscale) {
      out.infeasible = true;
      return out;
    }
  }
  const Eigen::VectorXd z0 = ops.M * Jq;
  const RangeBasis red(ops.M * Nf);
  auto project = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    Eigen::VectorXd out = red.U.cols() == 0 ? z0 : Eigen::VectorXd(z0 + red.U * (red.U.transpose() * (z - z0)));
    for (Eigen::Index k : S) out[k] = 0.0;
    return out;
  };
  const Eigen::VectorXd zp = ops.M * Jp;
  std::optional<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>> gsT;
  if (!S.empty() && N.cols() > 0) gsT.emplace(Eigen::MatrixXd(GS.transpose()));

  // Dual field from the scaled multiplier, repaired to satisfy the adjoint relation.
  auto repair = [&](Eigen::VectorXd b) {
    if (full.U.cols() > 0) {
      if (gsT) {
        const Eigen::VectorXd d = gsT->solve(Eigen::VectorXd(-(MN.transpose() * b)));
        for (std::size_t k = 0; k < S.size(); ++k) b[S[k]] += d[static_cast<Eigen::Index>(k)];
      }
      b -= full.U * (full.U.transpose() * b);
    }
    return Eigen::VectorXd(b * domain_scale(Wq, b, C, q));
  };

  Eigen::VectorXd z2 = project(z0), z1(nz), sig1(static_cast<Eigen::Index>(C));
  Eigen::VectorXd us = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(C)), uz = Eigen::VectorXd::Zero(nz);
  double rho = 1.0;
  Eigen::VectorXd best_b = Eigen::VectorXd::Zero(nz);
  double best_bound = -kInf, value = primal_value(Wq, z2, rbar, C, q);
  double rp = 0.0, rd = 0.0;
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    const double tau = 1.0 / rho;
    for (std::size_t c = 0; c < C; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      Mat zh(q, 1);
      for (int a = 0; a < q; ++a) {
        const auto k = static_cast<Eigen::Index>(static_cast<std::size_t>(a) * C + c);
        zh(a, 0) = z2[k] - uz[k];
      }
      const auto [s, z] = Wq.prox_perspective(tau, rbar[ci] - us[ci], zh);
      sig1[ci] = s;
      for (int a = 0; a < q; ++a) z1[static_cast<Eigen::Index>(static_cast<std::size_t>(a) * C + c)] = z(a, 0);
    }
    const Eigen::VectorXd zold = z2;
    z2 = project(z1 + uz);
    us += sig1 - rbar;
    uz += z1 - z2;
    if (it % opt.check_every != 0 && it != opt.max_iter) continue;
    rp = std::sqrt((sig1 - rbar).squaredNorm() + (z1 - z2).squaredNorm());
    rd = rho * (z2 - zold).norm();
    value = primal_value(Wq, z2, rbar, C, q);
    const Eigen::VectorXd b = repair(Eigen::VectorXd(-rho * uz));
    const double bound = dual_bound(Wq, b, zp, rbar, C, q);
    if (bound > best_bound) {
      best_bound = bound;
      best_b = b;
    }
    out.iterations = it;
    const double gap = value - best_bound;
    if (opt.trace) out.trace.push_back({it, value, rp, gap});
    if (gap <= gap_scale * (1.0 + std::abs(value))) {
      out.converged = true;
      break;
    }
    if (rp > 10.0 * rd && rho < 1e6) {
      rho *= 2.0;
      us *= 0.5;
      uz *= 0.5;
    } else if (rd > 10.0 * rp && rho > 1e-6) {
      rho *= 0.5;
      us *= 2.0;
      uz *= 2.0;
    }
  }
  if (best_bound == -kInf) {
    best_b = repair(Eigen::VectorXd(-rho * uz));
    best_bound = dual_bound(Wq, best_b, zp, rbar, C, q);
  }
  out.value = value;
  out.bound = best_bound;
  out.consensus = rp;
  out.b = best_b;
  out.psi = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(Eigen::MatrixXd(ops.Dv.transpose()))
                .solve(Eigen::VectorXd(ops.M.transpose() * best_b));
  out.J = red.U.cols() == 0 ? Jq : Eigen::VectorXd(Jq + Nf * (red.VSinv * (red.U.transpose() * (z2 - z0))));
  if (!S.empty()) snap_massless(ops, S, out.J);
  return out;
}

// One-homogeneous W on a scalar target: min coeff * sum_c |(M J)_c| s.t. D J = r as an LP.
inline EdgeOutcome solve_edge_lp(const StaggeredOps& ops, const Eigen::VectorXd& r, double coeff) {
  EdgeOutcome out;
  const std::size_t C = ops.cells, F = ops.faces.size();
  LinearProgram lp;
  lp.rows = 2 * C;
  lp.rhs.assign(2 * C, 0.0);
  for (std::size_t c = 0; c < C; ++c) lp.rhs[c] = r[static_cast<Eigen::Index>(c)];
  for (int sgn : {+1, -1})
    for (std::size_t f = 0; f < F; ++f) {
      SparseColumn col;
      const auto fi = static_cast<Eigen::Index>(f);
      for (std::size_t c = 0; c < C; ++c) {
        const auto ci = static_cast<Eigen::Index>(c);
        if (ops.Dv(ci, fi) != 0.0) col.entries.push_back({c, sgn * ops.Dv(ci, fi)});
        if (ops.M(ci, fi) != 0.0) col.entries.push_back({C + c, sgn * ops.M(ci, fi)});
      }
      lp.add_column(0.0, col);
    }
  for (double sgn : {-1.0, +1.0})
    for (std::size_t c = 0; c < C; ++c) lp.add_column(coeff, SparseColumn{{{C + c, sgn}}});
  const LpResult res = solve_lp(lp);
  if (res.status == LpStatus::infeasible) {
    out.infeasible = true;
    return out;
  }
  if (res.status != LpStatus::optimal) throw NumericalError("solve_eulerian: LP " + to_string(res.status));
  out.J.resize(static_cast<Eigen::Index>(F));
  for (std::size_t f = 0; f < F; ++f) out.J[static_cast<Eigen::Index>(f)] = res.x[f] - res.x[F + f];
  out.psi.resize(static_cast<Eigen::Index>(C));
  out.b.resize(static_cast<Eigen::Index>(C));
  for (std::size_t c = 0; c < C; ++c) {
    out.psi[static_cast<Eigen::Index>(c)] = res.duals[c];
    out.b[static_cast<Eigen::Index>(c)] = std::clamp(-res.duals[C + c], -coeff, coeff);
  }
  out.value = coeff * (ops.M * out.J).lpNorm<1>();
  out.bound = out.psi.dot(r);
  out.iterations = res.iterations;
  out.converged = true;
  return out;
}

}  // namespace detail

/// Right-hand side of the per-edge constraint D J = -(rho_head - rho_tail) / l.
inline Eigen::VectorXd continuity_rhs(const MeasureField& mu, const Edge& e) {
  return -(mu.rho.row(static_cast<Eigen::Index>(e.head)) - mu.rho.row(static_cast<Eigen::Index>(e.tail))).transpose() /
         e.length;
}

inline EulerianReport solve_eulerian(const MeasureField& mu, const SpatialDomain& D, const SubdomainMask& A,
                                     const Integrand& W, const EulerianOptions& opt = {}) {
  if (A.empty()) throw InvalidInput("solve_eulerian: empty mask");
  if (mu.nodes() != D.size()) throw InvalidInput("solve_eulerian: measure rows do not match the domain");
  if (!(opt.tol > 0.0) || opt.check_every == 0) throw InvalidParameter("solve_eulerian: tol and check_every must be positive");
  mu.validate(1e-9);
  const TargetGrid& g = mu.grid;
  const Integrand Wq = detail::column_integrand(W, g.q());
  const detail::StaggeredOps ops(g);
  const std::vector<std::size_t> edges = A.edges();
  const bool lp = opt.use_lp && g.q() == 1 && Wq.one_homogeneous();
  double wtot = 0.0;
  for (std::size_t e : edges) wtot += D.edges[e].weight;
  const double gap_scale = 0.5 * opt.tol / std::max(1.0, wtot);

  std::vector<detail::EdgeOutcome> res(edges.size());
  detail::parallel_for(edges.size(), detail::thread_count(opt.threads, edges.size()), [&](std::size_t k) {
    const Edge& ed = D.edges[edges[k]];
    const Eigen::VectorXd r = continuity_rhs(mu, ed);
    res[k] = lp ? detail::solve_edge_lp(ops, r, Wq.coeff())
                : detail::solve_edge_admm(ops, edge_average(mu, ed), r, Wq, gap_scale, opt);
  });

  EulerianReport rep;
  rep.method = lp ? "lp" : "admm";
  rep.J = MomentumField(D, g);
  rep.certificate.psi.assign(D.edges.size(), Eigen::VectorXd());
  rep.certificate.b.assign(D.edges.size(), Eigen::VectorXd());
  bool all = true;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& o = res[k];
    const std::size_t e = edges[k];
    if (o.infeasible) {
      rep.infeasible = true;
      continue;
    }
    const double w = D.edges[e].weight;
    rep.value += w * o.value;
    rep.lower_bound += w * o.bound;
    rep.consensus = std::max(rep.consensus, o.consensus);
    rep.iterations = std::max(rep.iterations, o.iterations);
    all = all && o.converged;
    for (std::size_t f = 0; f < ops.faces.size(); ++f)
      rep.J.at(e, ops.faces[f].first, ops.faces[f].second) = o.J[static_cast<Eigen::Index>(f)];
    rep.certificate.psi[e] = o.psi;
    rep.certificate.b[e] = o.b;
  }
  if (rep.infeasible) {
    rep.value = kInf;
    rep.lower_bound = -kInf;
    rep.gap = kInf;
    rep.residual = kInf;
    rep.converged = false;
    return rep;
  }
  rep.gap = std::max(0.0, rep.value - rep.lower_bound);
  rep.residual = continuity_residual(mu, rep.J, D, A);
  rep.converged = all && rep.residual < opt.tol && rep.gap < opt.tol * (1.0 + std::abs(rep.value));

  if (opt.trace && !lp) {
    // Aggregate the per-edge checkpoints; finished edges keep their last entry.
    std::size_t longest = 0;
    for (const auto& o : res) longest = std::max(longest, o.trace.size());
    for (std::size_t t = 0; t < longest; ++t) {
      TracePoint p{(t + 1) * opt.check_every, 0.0, 0.0, 0.0};
      for (std::size_t k = 0; k < res.size(); ++k) {
        if (res[k].trace.empty()) continue;
        const auto& tp = res[k].trace[std::min(t, res[k].trace.size() - 1)];
        const double w = D.edges[edges[k]].weight;
        p.value += w * tp.value;
        p.gap += w * tp.gap;
        p.residual = std::max(p.residual, tp.residual);
      }
      rep.trace.push_back(p);
    }
  }
  return rep;
}

inline EulerianReport solve_eulerian(const MeasureField& mu, const SpatialDomain& D, const SubdomainMask& A,
                                     const Integrand& W, double tol, std::size_t max_iter) {
  EulerianOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return solve_eulerian(mu, D, A, W, opt);
}

struct EulerianCertificateCheck {
  bool feasible = false;
  double lower_bound = -kInf;
  double max_adjoint_residual = 0.0;
};

/// Feasible iff W*(b) is finite on every cell and M^T b = D^T psi on every face;
/// then sum_e w_e (psi . r_e - sum_c rho-bar_c W*(b_c)) <= T_Eul(mu, A).
/// Edges with an empty entry count as psi = b = 0.
inline EulerianCertificateCheck check_eulerian_certificate(const EulerianCertificate& cert, const MeasureField& mu,
                                                           const SpatialDomain& D, const SubdomainMask& A,
                                                           const Integrand& W, double tol = 1e-8) {
  const TargetGrid& g = mu.grid;
  const Integrand Wq = detail::column_integrand(W, g.q());
  const detail::StaggeredOps ops(g);
  const auto C = static_cast<Eigen::Index>(g.size());
  double hmin = kInf;
  for (int a = 0; a < g.q(); ++a) hmin = std::min(hmin, g.h(a));
  EulerianCertificateCheck out;
  out.feasible = true;
  double bound = 0.0;
  for (std::size_t e : A.edges()) {
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(C), b = Eigen::VectorXd::Zero(C * g.q());
    if (e < cert.psi.size() && cert.psi[e].size() > 0) psi = cert.psi[e];
    if (e < cert.b.size() && cert.b[e].size() > 0) b = cert.b[e];
    if (psi.size() != C || b.size() != C * g.q()) throw InvalidInput("check_eulerian_certificate: shape mismatch");
    if (!psi.allFinite() || !b.allFinite()) {
      out.feasible = false;
      continue;
    }
    const double res = (ops.M.transpose() * b - ops.Dv.transpose() * psi).lpNorm<Eigen::Infinity>();
    out.max_adjoint_residual = std::max(out.max_adjoint_residual, res);
    if (res > tol * (1.0 + b.lpNorm<Eigen::Infinity>() + 2.0 * psi.lpNorm<Eigen::Infinity>() / hmin))
      out.feasible = false;
    const Eigen::VectorXd rb = edge_average(mu, D.edges[e]);
    double s = psi.dot(continuity_rhs(mu, D.edges[e]));
    for (Eigen::Index c = 0; c < C; ++c) {
      const double wc = Wq.conjugate(detail::column(b, static_cast<std::size_t>(c), g.size(), g.q()));
      if (!std::isfinite(wc)) {
        out.feasible = false;
        break;
      }
      if (rb[c] > 0.0) s -= rb[c] * wc;
    }
    bound += D.edges[e].weight * s;
  }
  out.lower_bound = out.feasible ? bound : -kInf;
  return out;
}

/// b from a potential: minimum-norm solution of M^T b = D^T psi on each induced edge.
inline EulerianCertificate certificate_from_potential(const TargetGrid& g, const SpatialDomain& D,
                                                      const SubdomainMask& A, const std::vector<Eigen::VectorXd>& psi) {
  const detail::StaggeredOps ops(g);
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Eigen::MatrixXd(ops.M.transpose()));
  EulerianCertificate cert;
  cert.psi.assign(D.edges.size(), Eigen::VectorXd());
  cert.b.assign(D.edges.size(), Eigen::VectorXd());
  for (std::size_t e : A.edges()) {
    cert.psi[e] = psi.at(e);
    cert.b[e] = cod.solve(Eigen::VectorXd(ops.Dv.transpose() * psi[e]));
  }
  return cert;
}

/// Independent solves, one per mask.
inline std::vector<EulerianReport> solve_eulerian_localized(const MeasureField& mu, const SpatialDomain& D,
                                                            const std::vector<SubdomainMask>& masks,
                                                            const Integrand& W, const EulerianOptions& opt = {}) {
  std::vector<EulerianReport> out;
  out.reserve(masks.size());
  for (const auto& A : masks) out.push_back(solve_eulerian(mu, D, A, W, opt));
  return out;
}

}  // namespace mvlift
