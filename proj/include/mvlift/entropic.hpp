#pragma once

// Entropic relaxation of the Lagrangian lifting on a single cycle: Sinkhorn-type
// scaling of node potentials, marginals from log-domain transfer-matrix
// products around the loop.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mvlift/lagrangian.hpp"

namespace mvlift {

struct EntropicResult {
  double value = 0.0;            // expected cost, entropy excluded
  double marginal_error = 0.0;   // max_i sum_j |P_i(j) - mu_ij|
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<Eigen::VectorXd> log_potentials;  // per cycle position, warm start
  double eps = 0.0;
};

namespace detail {

inline double lse(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// (A B) in the log semiring.
inline Eigen::MatrixXd log_matmul(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows(), m = B.cols(), k = A.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, m, -kInf);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      double mx = -kInf;
      for (Eigen::Index t = 0; t < k; ++t) mx = std::max(mx, A(i, t) + B(t, j));
      if (mx == -kInf) continue;
      double s = 0.0;
      for (Eigen::Index t = 0; t < k; ++t) {
        const double v = A(i, t) + B(t, j);
        if (v > -kInf) s += std::exp(v - mx);
      }
      out(i, j) = mx + std::log(s);
    }
  return out;
}

}  // namespace detail

/// Entropic cycle solve at one epsilon. `warm` (optional) seeds the log potentials.
inline EntropicResult solve_cycle_entropic(const MeasureField& mu, const SpatialDomain& D, const SubdomainMask& A,
                                           const EdgeCostTable& costs, double eps, double tol = 1e-9,
                                           std::size_t max_iter = 5000,
                                           const std::vector<Eigen::VectorXd>* warm = nullptr) {
  if (!(eps > 0.0)) throw InvalidParameter("solve_cycle_entropic: epsilon must be positive");
  detail::check_rows(mu, A.nodes());
  const auto comps = components(D, A);
  if (comps.size() != 1 || comps[0].shape != ComponentShape::cycle)
    throw StructureError("solve_cycle_entropic: induced graph must be a single cycle");
  const Component& cyc = comps[0];
  const std::size_t N = cyc.nodes.size();
  const auto C = static_cast<Eigen::Index>(mu.cells());

  // Log kernels oriented along the traversal, cost matrices likewise.
  std::vector<Eigen::MatrixXd> logK(N), cost(N);
  for (std::size_t k = 0; k < N; ++k) {
    cost[k] = cyc.forward[k] ? costs.edge[cyc.edges[k]] : Eigen::MatrixXd(costs.edge[cyc.edges[k]].transpose());
    logK[k] = -cost[k] / eps;
  }
  std::vector<Eigen::VectorXd> logmu(N), loga(N);
  for (std::size_t k = 0; k < N; ++k) {
    logmu[k] = mu.rho.row(static_cast<Eigen::Index>(cyc.nodes[k])).transpose().array().log();
    loga[k] = (warm && warm->size() == N) ? (*warm)[k] : Eigen::VectorXd::Zero(C);
    for (Eigen::Index j = 0; j < C; ++j)
      if (logmu[k][j] == -kInf) loga[k][j] = -kInf;
  }
  // S_k = diag(a_k) K_k in log form.
  auto S = [&](std::size_t k) {
    Eigen::MatrixXd s = logK[k];
    for (Eigen::Index j = 0; j < C; ++j) s.row(j).array() += loga[k][j];
    return s;
  };
  // K_k S_{k+1} ... S_{k-1}: the loop from position k without its own potential.
  auto loop_from = [&](std::size_t k) {
    Eigen::MatrixXd T = logK[k];
    for (std::size_t t = 1; t < N; ++t) T = detail::log_matmul(T, S((k + t) % N));
    return T;
  };
  auto marginals = [&](std::size_t k, const Eigen::MatrixXd& T) {
    Eigen::VectorXd lp(C);
    double z = -kInf;
    for (Eigen::Index j = 0; j < C; ++j) {
      lp[j] = loga[k][j] + T(j, j);
      if (std::isnan(lp[j])) lp[j] = -kInf;
      z = detail::lse(z, lp[j]);
    }
    return Eigen::VectorXd((lp.array() - z).exp());
  };

  EntropicResult out;
  for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
    for (std::size_t k = 0; k < N; ++k) {
      const Eigen::MatrixXd T = loop_from(k);
      for (Eigen::Index j = 0; j < C; ++j)
        loga[k][j] = logmu[k][j] == -kInf || T(j, j) == -kInf ? -kInf : logmu[k][j] - T(j, j);
    }
    double err = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const Eigen::VectorXd p = marginals(k, loop_from(k));
      err = std::max(err, (p - mu.rho.row(static_cast<Eigen::Index>(cyc.nodes[k])).transpose()).lpNorm<1>());
    }
    out.marginal_error = err;
    if (err < tol) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) out.iterations = max_iter;

  // Expected cost from pairwise marginals P_{k,k+1}(j,l) = S_k(j,l) R_k(l,j) / Z.
  out.value = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    Eigen::MatrixXd R = S((k + 1) % N);
    for (std::size_t t = 2; t < N; ++t) R = detail::log_matmul(R, S((k + t) % N));
    const Eigen::MatrixXd Sk = S(k);
    Eigen::MatrixXd lp(C, C);
    double z = -kInf;
    for (Eigen::Index j = 0; j < C; ++j)
      for (Eigen::Index l = 0; l < C; ++l) {
        const double v = Sk(j, l) + R(l, j);
        lp(j, l) = std::isnan(v) ? -kInf : v;
        z = detail::lse(z, lp(j, l));
      }
    for (Eigen::Index j = 0; j < C; ++j)
      for (Eigen::Index l = 0; l < C; ++l)
        if (lp(j, l) > -kInf) out.value += std::exp(lp(j, l) - z) * cost[k](j, l);
  }
  for (std::size_t i : A.nodes())
    for (Eigen::Index j = 0; j < C; ++j) out.value += mu.rho(static_cast<Eigen::Index>(i), j) * costs.node_cost(i, static_cast<std::size_t>(j));
  out.log_potentials = std::move(loga);
  out.eps = eps;
  return out;
}

/// Geometric epsilon schedule with warm starts; one result per epsilon.
inline std::vector<EntropicResult> solve_cycle_entropic_schedule(const MeasureField& mu, const SpatialDomain& D,
                                                                 const SubdomainMask& A, const EdgeCostTable& costs,
                                                                 const std::vector<double>& eps, double tol = 1e-9,
                                                                 std::size_t max_iter = 5000) {
  std::vector<EntropicResult> out;
  for (double e : eps) {
    if (out.empty()) {
      out.push_back(solve_cycle_entropic(mu, D, A, costs, e, tol, max_iter));
      continue;
    }
    // log a ~ potential / eps: rescale the previous potentials.
    std::vector<Eigen::VectorXd> warm = out.back().log_potentials;
    for (auto& v : warm) v *= out.back().eps / e;
    out.push_back(solve_cycle_entropic(mu, D, A, costs, e, tol, max_iter, &warm));
  }
  return out;
}

}  // namespace mvlift
