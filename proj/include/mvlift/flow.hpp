#pragma once

// Parametric couplings generated by a flow in the target variable: starting
// points y at the centre node x0 are transported along the source path by
// dy/dx = v(x, y), giving one map u_y per starting point.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "mvlift/domain.hpp"
#include "mvlift/error.hpp"
#include "mvlift/fields.hpp"
#include "mvlift/integrand.hpp"

namespace mvlift {

/// Velocity along a source edge: v(e, s, y) at fraction s in [0,1] from tail to head.
/// Two sources: the conservative reconstruction from (mu, J) or a constant.
class FlowVelocity {
 public:
  static FlowVelocity constant(double V) {
    FlowVelocity f;
    f.constant_ = V;
    f.is_constant_ = true;
    return f;
  }

  /// Inside cell c on edge e: flux density linear in y between the face values,
  /// mass density linear in x between the endpoint rows; v = flux / mass. This
  /// field solves the continuity equation exactly, so the flow transports the
  /// piecewise-constant density of row x0 onto the other rows.
  static FlowVelocity from_momentum(const MeasureField& mu, const MomentumField& J, const SpatialDomain& D) {
    if (mu.grid.q() != 1) throw Unsupported("flow coupling: scalar targets only");
    if (mu.rho.minCoeff() <= 0.0) throw InvalidInput("flow coupling: measure must be strictly positive (regularize first)");
    FlowVelocity f;
    f.mu_ = &mu;
    f.J_ = &J;
    f.D_ = &D;
    return f;
  }

  double operator()(std::size_t e, double s, double y) const {
    if (is_constant_) return constant_;
    const GridAxis& ax = mu_->grid.axis(0);
    const double h = ax.h();
    const auto m = static_cast<long>(ax.cells);
    double t = (y - ax.min) / h;
    long c = static_cast<long>(std::floor(t));
    if (ax.periodic) {
      const long w = ((c % m) + m) % m;
      t -= static_cast<double>(c - w);
      c = w;
    } else {
      c = std::clamp(c, 0L, m - 1);
      t = std::clamp(t, 0.0, static_cast<double>(m));
    }
    const double theta = t - static_cast<double>(c);
    const auto cc = static_cast<std::size_t>(c);
    const std::size_t prev = mu_->grid.neighbor(cc, 0, -1);
    const double jm = prev == mu_->grid.size() ? 0.0 : J_->at(e, 0, prev);
    const double jp = mu_->grid.neighbor(cc, 0, +1) == mu_->grid.size() ? 0.0 : J_->at(e, 0, cc);
    const Edge& ed = D_->edges[e];
    const double ra = mu_->rho(static_cast<Eigen::Index>(ed.tail), c), rb = mu_->rho(static_cast<Eigen::Index>(ed.head), c);
    return ((1.0 - theta) * jm + theta * jp) / ((1.0 - s) * ra + s * rb);
  }

 private:
  const MeasureField* mu_ = nullptr;
  const MomentumField* J_ = nullptr;
  const SpatialDomain* D_ = nullptr;
  double constant_ = 0.0;
  bool is_constant_ = false;
};

struct FlowFamily {
  std::vector<std::size_t> nodes;                  // mask nodes, traversal order
  std::vector<std::vector<double>> trajectories;   // per sample: unwrapped y at each node
  std::vector<double> weights;
  double value = 0.0;                              // sum_y weight_y E(u_y, A)
  double marginal_deviation = 0.0;                 // max_x sum_c |binned_x(c) - mu_x(c)|
  std::size_t clamped = 0;                         // samples pushed back into a non-periodic range
};

struct FlowOptions {
  int substeps = 1024;    // RK4 steps per source edge (v has kinks at cell faces: first-order in practice)
  int gauss_points = 4;   // starting points per target cell at x0
};

namespace detail {

inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  // Nodes/weights on [0,1] from the symmetric tridiagonal Jacobi matrix.
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) T(k, k - 1) = T(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  x.resize(static_cast<std::size_t>(n));
  w.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    x[k] = 0.5 * (es.eigenvalues()[k] + 1.0);
    w[k] = es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
  }
}

// Integrate along edge e in the traversal direction (forward: s from 0 to 1).
inline double flow_edge(const FlowVelocity& v, std::size_t e, double length, bool forward, double y, int steps) {
  const double ds = (forward ? 1.0 : -1.0) / steps;
  double s = forward ? 0.0 : 1.0;
  for (int k = 0; k < steps; ++k) {
    auto f = [&](double ss, double yy) { return length * v(e, ss, yy); };
    const double k1 = f(s, y);
    const double k2 = f(s + 0.5 * ds, y + 0.5 * ds * k1);
    const double k3 = f(s + 0.5 * ds, y + 0.5 * ds * k2);
    const double k4 = f(s + ds, y + ds * k3);
    y += ds * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0;
    s += ds;
  }
  return y;
}

}  // namespace detail

/// Flow family on a path mask containing x0. The marginal deviation uses the
/// exact pushforward of the piecewise-constant density of row x0: cell
/// boundaries at x are flowed back to x0 and the enclosed x0-mass is binned.
inline FlowFamily parametric_flow_coupling(const MeasureField& mu, const FlowVelocity& v, const SpatialDomain& D,
                                           const SubdomainMask& A, std::size_t x0, const Integrand& W,
                                           const FlowOptions& opt = {}) {
  if (mu.grid.q() != 1 || D.dim != 1) throw Unsupported("flow coupling: one-dimensional source and target only");
  if (!A.contains(x0)) throw StructureError("flow coupling: mask must contain the centre node");
  if (mu.rho.minCoeff() <= 0.0) throw InvalidInput("flow coupling: measure must be strictly positive (regularize first)");
  const auto comps = components(D, A);
  if (comps.size() != 1 || comps[0].shape != ComponentShape::path)
    throw StructureError("flow coupling: mask must be a single path (star-shaped around x0)");
  const Component& path = comps[0];
  const std::size_t K = path.nodes.size();
  const std::size_t c0 = static_cast<std::size_t>(std::find(path.nodes.begin(), path.nodes.end(), x0) - path.nodes.begin());
  const GridAxis& ax = mu.grid.axis(0);
  const double h = ax.h();

  // Flow one starting value to every path position.
  std::size_t clamped = 0;
  auto trajectory = [&](double y0) {
    std::vector<double> y(K);
    y[c0] = y0;
    for (std::size_t k = c0; k + 1 < K; ++k) {  // outward, increasing position
      const std::size_t e = path.edges[k];
      y[k + 1] = detail::flow_edge(v, e, D.edges[e].length, path.forward[k], y[k], opt.substeps);
    }
    for (std::size_t k = c0; k-- > 0;) {  // outward, decreasing position
      const std::size_t e = path.edges[k];
      y[k] = detail::flow_edge(v, e, D.edges[e].length, !path.forward[k], y[k + 1], opt.substeps);
    }
    if (!ax.periodic)
      for (double& t : y)
        if (t < ax.min || t > ax.max) {
          t = std::clamp(t, ax.min, ax.max);
          ++clamped;
        }
    return y;
  };

  FlowFamily out;
  out.nodes = path.nodes;
  std::vector<double> gx, gw;
  detail::gauss_legendre(opt.gauss_points, gx, gw);
  const Eigen::RowVectorXd r0 = mu.rho.row(static_cast<Eigen::Index>(x0));
  for (std::size_t c = 0; c < mu.cells(); ++c)
    for (int g = 0; g < opt.gauss_points; ++g) {
      out.trajectories.push_back(trajectory(ax.min + (static_cast<double>(c) + gx[g]) * h));
      out.weights.push_back(r0[static_cast<Eigen::Index>(c)] * gw[g]);
    }
  const Integrand W1 = W.kind() == IntegrandKind::custom_table ? W : W.with_shape(1, 1);
  for (std::size_t s = 0; s < out.trajectories.size(); ++s) {
    double e = 0.0;
    for (std::size_t k = 0; k + 1 < K; ++k) {
      const Edge& ed = D.edges[path.edges[k]];
      const double dy = out.trajectories[s][k + 1] - out.trajectories[s][k];
      e += ed.weight * W1.value((path.forward[k] ? dy : -dy) / ed.length);
    }
    out.value += out.weights[s] * e;
  }

  // Unwrapped CDF of the x0 density (piecewise constant per cell).
  const auto M = static_cast<long>(mu.cells());
  auto cdf0 = [&](double y) {
    const double t = (y - ax.min) / h;
    const double fl = std::floor(t);
    long c = static_cast<long>(fl);
    double base = 0.0;
    if (ax.periodic) {
      const long wraps = c >= 0 ? c / M : -((-c + M - 1) / M);
      base = static_cast<double>(wraps);
      c -= wraps * M;
    } else if (c < 0) {
      return 0.0;
    } else if (c >= M) {
      return 1.0;
    }
    double s = base;
    for (long k = 0; k < c; ++k) s += r0[k];
    return s + (t - fl) * r0[c];
  };
  out.clamped = clamped;
  for (std::size_t k = 0; k < K; ++k) {
    if (k == c0) continue;
    // Flow boundaries at position k back to x0.
    std::vector<double> pre(static_cast<std::size_t>(M) + 1);
    for (long b = 0; b <= M; ++b) {
      double y = ax.min + static_cast<double>(b) * h;
      if (k > c0) {
        for (std::size_t t = k; t-- > c0;) y = detail::flow_edge(v, path.edges[t], D.edges[path.edges[t]].length, !path.forward[t], y, opt.substeps);
      } else {
        for (std::size_t t = k; t < c0; ++t) y = detail::flow_edge(v, path.edges[t], D.edges[path.edges[t]].length, path.forward[t], y, opt.substeps);
      }
      pre[static_cast<std::size_t>(b)] = y;
    }
    double dev = 0.0;
    for (long c = 0; c < M; ++c)
      dev += std::abs(cdf0(pre[static_cast<std::size_t>(c) + 1]) - cdf0(pre[static_cast<std::size_t>(c)]) -
                      mu.rho(static_cast<Eigen::Index>(path.nodes[k]), c));
    out.marginal_deviation = std::max(out.marginal_deviation, dev);
  }
  return out;
}

}  // namespace mvlift
