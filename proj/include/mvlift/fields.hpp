#pragma once

// Target grids, discretized measure-valued maps (row-stochastic tables),
// staggered momenta and the discrete generalized continuity equation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "mvlift/domain.hpp"
#include "mvlift/error.hpp"
#include "mvlift/integrand.hpp"

namespace mvlift {

struct GridAxis {
  std::size_t cells = 2;
  double min = 0.0;
  double max = 1.0;
  bool periodic = false;

  double h() const { return (max - min) / static_cast<double>(cells); }
  double center(std::size_t k) const { return min + (static_cast<double>(k) + 0.5) * h(); }
  double period() const { return periodic ? max - min : 0.0; }
};

/// Cell j has axis indices (j % M0, j / M0).
class TargetGrid {
 public:
  TargetGrid() = default;
  explicit TargetGrid(std::vector<GridAxis> axes) : axes_(std::move(axes)) {
    if (axes_.empty() || axes_.size() > 2) throw InvalidParameter("target grid: q must be 1 or 2");
    for (const auto& a : axes_) {
      if (a.cells < 2) throw InvalidParameter("target grid: need at least 2 cells per axis");
      if (!(a.max > a.min)) throw InvalidParameter("target grid: empty axis range");
    }
  }
  static TargetGrid line(std::size_t m, double lo, double hi, bool periodic = false) {
    return TargetGrid({GridAxis{m, lo, hi, periodic}});
  }

  int q() const noexcept { return static_cast<int>(axes_.size()); }
  const GridAxis& axis(int a) const { return axes_.at(static_cast<std::size_t>(a)); }
  const std::vector<GridAxis>& axes() const noexcept { return axes_; }
  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes_) n *= a.cells;
    return n;
  }
  double h(int a) const { return axis(a).h(); }
  std::array<double, 2> periods() const {
    std::array<double, 2> p{0.0, 0.0};
    for (int a = 0; a < q(); ++a) p[a] = axis(a).period();
    return p;
  }

  std::array<std::size_t, 2> split(std::size_t j) const {
    if (q() == 1) return {j, 0};
    return {j % axes_[0].cells, j / axes_[0].cells};
  }
  std::size_t join(std::array<std::size_t, 2> k) const {
    return q() == 1 ? k[0] : k[0] + axes_[0].cells * k[1];
  }
  std::array<double, 2> center(std::size_t j) const {
    const auto k = split(j);
    std::array<double, 2> y{0.0, 0.0};
    for (int a = 0; a < q(); ++a) y[a] = axes_[a].center(k[a]);
    return y;
  }

  /// Neighbour along axis a in direction +1/-1, or size() if it crosses a
  /// non-periodic boundary.
  std::size_t neighbor(std::size_t j, int a, int dir) const {
    auto k = split(j);
    const auto m = static_cast<long>(axes_[a].cells);
    long t = static_cast<long>(k[a]) + dir;
    if (t < 0 || t >= m) {
      if (!axes_[a].periodic) return size();
      t = (t + m) % m;
    }
    k[a] = static_cast<std::size_t>(t);
    return join(k);
  }

  bool operator==(const TargetGrid& o) const {
    if (axes_.size() != o.axes_.size()) return false;
    for (std::size_t a = 0; a < axes_.size(); ++a)
      if (axes_[a].cells != o.axes_[a].cells || axes_[a].min != o.axes_[a].min ||
          axes_[a].max != o.axes_[a].max || axes_[a].periodic != o.axes_[a].periodic)
        return false;
    return true;
  }

 private:
  std::vector<GridAxis> axes_;
};

/// rho(i, j): mass of the probability mu_{x_i} in target cell j.
struct MeasureField {
  TargetGrid grid;
  Eigen::MatrixXd rho;

  MeasureField() = default;
  MeasureField(TargetGrid g, Eigen::MatrixXd r) : grid(std::move(g)), rho(std::move(r)) {}

  std::size_t nodes() const { return static_cast<std::size_t>(rho.rows()); }
  std::size_t cells() const { return static_cast<std::size_t>(rho.cols()); }

  void validate(double tol = 1e-10) const {
    if (static_cast<std::size_t>(rho.cols()) != grid.size())
      throw InvalidInput("measure field: row length does not match the grid");
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
      if ((rho.row(i).array() < 0.0).any() || !rho.row(i).allFinite())
        throw InvalidInput("measure field: negative or non-finite entry in row " + std::to_string(i));
      if (std::abs(rho.row(i).sum() - 1.0) > tol)
        throw InvalidInput("measure field: row " + std::to_string(i) + " is not stochastic");
    }
  }

  /// Support of row i (cells with positive mass), increasing.
  std::vector<std::size_t> support(std::size_t i, double floor = 0.0) const {
    std::vector<std::size_t> s;
    for (Eigen::Index j = 0; j < rho.cols(); ++j)
      if (rho(static_cast<Eigen::Index>(i), j) > floor) s.push_back(static_cast<std::size_t>(j));
    return s;
  }

  /// Mean of row i per axis (plain coordinates, no periodic unwrapping).
  std::array<double, 2> row_mean(std::size_t i) const {
    std::array<double, 2> m{0.0, 0.0};
    for (std::size_t j = 0; j < cells(); ++j) {
      const auto y = grid.center(j);
      for (int a = 0; a < grid.q(); ++a) m[a] += rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * y[a];
    }
    return m;
  }
};

enum class EmbedMode { multilinear, nearest };

/// Row i = hat-function split of the Dirac at u_i onto the surrounding cells
/// (nearest: one-hot at the closest centre).
inline MeasureField embed(const ClassicalMap& u, const TargetGrid& grid,
                          EmbedMode mode = EmbedMode::multilinear) {
  if (u.q != grid.q()) throw InvalidInput("embed: map dimension differs from the grid");
  MeasureField mu(grid, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(u.values.size()),
                                             static_cast<Eigen::Index>(grid.size())));
  for (std::size_t i = 0; i < u.values.size(); ++i) {
    // Per axis: up to two (index, weight) pairs.
    std::array<std::array<std::pair<std::size_t, double>, 2>, 2> parts{};
    std::array<int, 2> count{1, 1};
    for (int a = 0; a < grid.q(); ++a) {
      const GridAxis& ax = grid.axis(a);
      double y = u.values[i][a];
      if (!std::isfinite(y)) throw InvalidInput("embed: non-finite map value");
      if (ax.periodic) {
        y = ax.min + std::fmod(std::fmod(y - ax.min, ax.period()) + ax.period(), ax.period());
      } else if (y < ax.min - 1e-12 || y > ax.max + 1e-12) {
        throw InvalidInput("embed: value " + std::to_string(y) + " outside the target range on axis " + std::to_string(a));
      }
      const double t = (y - ax.min) / ax.h() - 0.5;  // fractional cell coordinate
      const auto m = static_cast<long>(ax.cells);
      if (mode == EmbedMode::nearest) {
        long k = std::lround(t);
        k = ax.periodic ? ((k % m) + m) % m : std::clamp(k, 0L, m - 1);
        parts[a][0] = {static_cast<std::size_t>(k), 1.0};
        count[a] = 1;
        continue;
      }
      const double fl = std::floor(t);
      const double w = t - fl;
      long k0 = static_cast<long>(fl), k1 = k0 + 1;
      if (ax.periodic) {
        k0 = ((k0 % m) + m) % m;
        k1 = ((k1 % m) + m) % m;
      } else {
        if (k0 < 0) { k0 = 0; k1 = 0; }
        if (k1 > m - 1) { k1 = m - 1; k0 = std::min(k0, m - 1); }
      }
      parts[a][0] = {static_cast<std::size_t>(k0), 1.0 - w};
      parts[a][1] = {static_cast<std::size_t>(k1), w};
      count[a] = 2;
    }
    for (int p0 = 0; p0 < count[0]; ++p0)
      for (int p1 = 0; p1 < (grid.q() == 2 ? count[1] : 1); ++p1) {
        std::array<std::size_t, 2> k{parts[0][p0].first, grid.q() == 2 ? parts[1][p1].first : 0};
        const double w = parts[0][p0].second * (grid.q() == 2 ? parts[1][p1].second : 1.0);
        mu.rho(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(grid.join(k))) += w;
      }
  }
  return mu;
}

/// Map whose value at node i is the centre of cell[i].
inline ClassicalMap map_from_cells(const TargetGrid& grid, const std::vector<std::size_t>& cell) {
  ClassicalMap u;
  u.q = grid.q();
  u.cells = cell;
  for (std::size_t j : cell) u.values.push_back(grid.center(j));
  return u;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int r = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double s = 0.0;
  for (int t = -r; t <= r; ++t) s += k[static_cast<std::size_t>(t + r)] = std::exp(-0.5 * t * t / (sigma * sigma));
  for (double& x : k) x /= s;
  return k;
}

inline long reflect_index(long k, long m) {
  while (k < 0 || k >= m) k = k < 0 ? -k - 1 : 2 * m - 1 - k;
  return k;
}

}  // namespace detail

/// Row-wise separable convolution with the truncated (4 sigma) discrete
/// Gaussian of std sigma cells; periodic axes wrap, others reflect.
inline MeasureField mollify_y(const MeasureField& mu, double sigma) {
  if (!(sigma >= 0.0)) throw InvalidParameter("mollify_y: sigma must be >= 0");
  if (sigma == 0.0) return mu;
  const auto ker = detail::gaussian_kernel(sigma);
  const long r = static_cast<long>(ker.size() / 2);
  MeasureField out = mu;
  for (int a = 0; a < mu.grid.q(); ++a) {
    const GridAxis& ax = mu.grid.axis(a);
    const auto m = static_cast<long>(ax.cells);
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(out.rho.rows(), out.rho.cols());
    for (std::size_t j = 0; j < mu.grid.size(); ++j) {
      auto k = mu.grid.split(j);
      const long base = static_cast<long>(k[a]);
      for (long t = -r; t <= r; ++t) {
        long dst = base + t;
        dst = ax.periodic ? ((dst % m) + m) % m : detail::reflect_index(dst, m);
        auto kk = k;
        kk[a] = static_cast<std::size_t>(dst);
        next.col(static_cast<Eigen::Index>(mu.grid.join(kk))) +=
            ker[static_cast<std::size_t>(t + r)] * out.rho.col(static_cast<Eigen::Index>(j));
      }
    }
    out.rho = std::move(next);
  }
  return out;
}

/// Largest per-axis change of a row mean between two fields.
inline double max_row_mean_shift(const MeasureField& a, const MeasureField& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.nodes(); ++i) {
    const auto ma = a.row_mean(i), mb = b.row_mean(i);
    for (int k = 0; k < a.grid.q(); ++k) s = std::max(s, std::abs(ma[k] - mb[k]));
  }
  return s;
}

/// (1 - lambda) mollify_y(mu, sigma) + lambda * uniform.
inline MeasureField regularize(const MeasureField& mu, double lambda, double sigma) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidParameter("regularize: lambda must lie in [0,1]");
  MeasureField out = mollify_y(mu, sigma);
  const double u = 1.0 / static_cast<double>(mu.grid.size());
  out.rho = ((1.0 - lambda) * out.rho.array() + lambda * u).matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Momenta

/// flux[e](a * C + c): flux through the + face of cell c along target axis a,
/// for every domain edge e. Faces crossing a non-periodic boundary are zero.
struct MomentumField {
  TargetGrid grid;
  std::vector<Eigen::VectorXd> flux;

  MomentumField() = default;
  MomentumField(const SpatialDomain& D, const TargetGrid& g)
      : grid(g), flux(D.edges.size(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.q() * g.size()))) {}

  double& at(std::size_t e, int a, std::size_t c) {
    return flux[e][static_cast<Eigen::Index>(static_cast<std::size_t>(a) * grid.size() + c)];
  }
  double at(std::size_t e, int a, std::size_t c) const {
    return flux[e][static_cast<Eigen::Index>(static_cast<std::size_t>(a) * grid.size() + c)];
  }

  /// Cell-centred value: mean of the two faces of cell c along each axis.
  std::array<double, 2> centered(std::size_t e, std::size_t c) const {
    std::array<double, 2> v{0.0, 0.0};
    for (int a = 0; a < grid.q(); ++a) {
      const std::size_t prev = grid.neighbor(c, a, -1);
      const double lower = prev == grid.size() ? 0.0 : at(e, a, prev);
      v[a] = 0.5 * (at(e, a, c) + lower);
    }
    return v;
  }

  /// Zero the faces that cross a non-periodic boundary.
  void enforce_boundary() {
    for (auto& f : flux)
      for (int a = 0; a < grid.q(); ++a)
        for (std::size_t c = 0; c < grid.size(); ++c)
          if (grid.neighbor(c, a, +1) == grid.size())
            f[static_cast<Eigen::Index>(static_cast<std::size_t>(a) * grid.size() + c)] = 0.0;
  }
};

/// Edge-averaged row: (rho_tail + rho_head) / 2.
inline Eigen::VectorXd edge_average(const MeasureField& mu, const Edge& e) {
  return 0.5 * (mu.rho.row(static_cast<Eigen::Index>(e.tail)) + mu.rho.row(static_cast<Eigen::Index>(e.head))).transpose();
}

/// max over induced edges and cells of |(rho_head - rho_tail)/l + sum_a (J+ - J-)/h_a|.
inline double continuity_residual(const MeasureField& mu, const MomentumField& J, const SpatialDomain& D,
                                  const SubdomainMask& A) {
  if (mu.nodes() != D.size() || J.flux.size() != D.edges.size() || !(mu.grid == J.grid))
    throw InvalidInput("continuity_residual: shape mismatch");
  const TargetGrid& g = mu.grid;
  double worst = 0.0;
  for (std::size_t e : A.edges()) {
    const Edge& ed = D.edges[e];
    for (std::size_t c = 0; c < g.size(); ++c) {
      double r = (mu.rho(static_cast<Eigen::Index>(ed.head), static_cast<Eigen::Index>(c)) -
                  mu.rho(static_cast<Eigen::Index>(ed.tail), static_cast<Eigen::Index>(c))) / ed.length;
      for (int a = 0; a < g.q(); ++a) {
        const std::size_t prev = g.neighbor(c, a, -1);
        const double plus = g.neighbor(c, a, +1) == g.size() ? 0.0 : J.at(e, a, c);
        const double minus = prev == g.size() ? 0.0 : J.at(e, a, prev);
        r += (plus - minus) / g.h(a);
      }
      worst = std::max(worst, std::abs(r));
    }
  }
  return worst;
}

struct VelocityField {
  /// v[e][c] per target axis; zero where the edge-averaged mass is below the floor.
  std::vector<std::vector<std::array<double, 2>>> v;
  double singular_mass = 0.0;
};

/// v = J-at-cell / rho-bar where rho-bar > floor; the rest of |J| (weighted by w_e)
/// is the singular mass.
inline VelocityField extract_velocity(const MeasureField& mu, const MomentumField& J, const SpatialDomain& D,
                                      double floor = 0.0) {
  VelocityField out;
  out.v.assign(D.edges.size(), std::vector<std::array<double, 2>>(mu.grid.size(), {0.0, 0.0}));
  for (std::size_t e = 0; e < D.edges.size(); ++e) {
    const Eigen::VectorXd rb = edge_average(mu, D.edges[e]);
    for (std::size_t c = 0; c < mu.grid.size(); ++c) {
      const auto jc = J.centered(e, c);
      if (rb[static_cast<Eigen::Index>(c)] > floor) {
        for (int a = 0; a < mu.grid.q(); ++a) out.v[e][c][a] = jc[a] / rb[static_cast<Eigen::Index>(c)];
      } else {
        out.singular_mass += D.edges[e].weight * std::hypot(jc[0], jc[1]);
      }
    }
  }
  return out;
}

}  // namespace mvlift
