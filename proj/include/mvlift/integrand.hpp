#pragma once

// Convex integrands W : R^{q x d} -> [0, inf) with conjugate, recession,
// perspective and perspective prox, plus the classical localized energy.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mvlift/domain.hpp"
#include "mvlift/error.hpp"

namespace mvlift {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class IntegrandKind { quadratic, p_power, operator_norm_tv, custom_table };

inline std::string to_string(IntegrandKind k) {
  switch (k) {
    case IntegrandKind::quadratic: return "quadratic";
    case IntegrandKind::p_power: return "p-power";
    case IntegrandKind::operator_norm_tv: return "operator-norm-tv";
    case IntegrandKind::custom_table: return "custom-convex-table";
  }
  return "?";
}

namespace detail {

inline Eigen::Vector2d singular_values(const Mat& v) {
  Eigen::JacobiSVD<Mat> svd(v);
  Eigen::Vector2d s = Eigen::Vector2d::Zero();
  for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) s[k] = svd.singularValues()[k];
  return s;
}

inline double spectral_norm(const Mat& v) { return singular_values(v)[0]; }
inline double nuclear_norm(const Mat& v) { return singular_values(v).sum(); }

// Euclidean projection of a nonnegative vector onto {s >= 0, sum s <= r}.
inline Eigen::VectorXd project_l1_ball_nonneg(const Eigen::VectorXd& s, double r) {
  if (s.sum() <= r) return s;
  std::vector<double> sorted(s.data(), s.data() + s.size());
  std::sort(sorted.rbegin(), sorted.rend());
  double cum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cum += sorted[k];
    const double t = (cum - r) / static_cast<double>(k + 1);
    if (k + 1 == sorted.size() || sorted[k + 1] <= t) {
      theta = t;
      break;
    }
  }
  return (s.array() - theta).max(0.0).matrix();
}

inline Mat project_nuclear_ball(const Mat& v, double r) {
  Eigen::JacobiSVD<Mat> svd(v, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd s = svd.singularValues();
  if (s.sum() <= r) return v;
  const Eigen::VectorXd t = project_l1_ball_nonneg(s, r);
  const Eigen::Index k = s.size();
  return svd.matrixU().leftCols(k) * t.asDiagonal() * svd.matrixV().leftCols(k).transpose();
}

// Largest root of a monotone increasing scalar function on [lo, hi] by
// safeguarded Newton; g(lo) <= 0 <= g(hi) assumed.
template <class F, class DF>
double bracketed_newton(F g, DF dg, double lo, double hi, double tol, int cap, const char* what) {
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < cap; ++it) {
    const double gx = g(x);
    if (gx > 0) hi = x; else lo = x;
    if (std::abs(gx) <= tol * (1.0 + std::abs(x)) || hi - lo <= tol * (1.0 + std::abs(x))) return x;
    const double d = dg(x);
    double nx = d > 0 ? x - gx / d : 0.5 * (lo + hi);
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    x = nx;
  }
  throw NumericalError(std::string(what) + ": root search did not converge in " +
                       std::to_string(cap) + " iterations (bracket [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "])");
}

}  // namespace detail

/// W with its shape (q rows = target dims, d columns = source dims).
///   quadratic:         coeff * |v|_F^2
///   p-power:           coeff * |v|_F^p
///   operator-norm-tv:  coeff * spectral norm of v (Euclidean norms on both sides)
///   custom table:      scalar piecewise-linear interpolation of (table_v, table_w)
///                      with linear extrapolation past the end points
class Integrand {
 public:
  Integrand() = default;

  static Integrand quadratic(double coeff = 0.5, int q = 1, int d = 1) {
    Integrand w(IntegrandKind::quadratic, 2.0, coeff, q, d);
    return w;
  }
  static Integrand p_power(double p, double coeff = 1.0, int q = 1, int d = 1) {
    if (!(p >= 1.0)) throw InvalidParameter("p-power integrand: p must be >= 1");
    return Integrand(IntegrandKind::p_power, p, coeff, q, d);
  }
  static Integrand tv(double coeff = 1.0, int q = 1, int d = 1) {
    return Integrand(IntegrandKind::operator_norm_tv, 1.0, coeff, q, d);
  }
  static Integrand custom(std::vector<double> v, std::vector<double> w) {
    if (v.size() != w.size() || v.size() < 2)
      throw InvalidParameter("custom integrand: need at least 2 matching table points");
    Integrand out(IntegrandKind::custom_table, 1.0, 1.0, 1, 1);
    for (std::size_t k = 0; k + 1 < v.size(); ++k)
      if (!(v[k + 1] > v[k])) throw InvalidParameter("custom integrand: abscissae must increase");
    for (double x : w)
      if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidParameter("custom integrand: values must be finite and >= 0");
    out.tv_ = std::move(v);
    out.tw_ = std::move(w);
    for (std::size_t k = 0; k + 1 < out.tv_.size(); ++k)
      out.slopes_.push_back((out.tw_[k + 1] - out.tw_[k]) / (out.tv_[k + 1] - out.tv_[k]));
    for (std::size_t k = 0; k + 1 < out.slopes_.size(); ++k)
      if (out.slopes_[k + 1] < out.slopes_[k] - 1e-12)
        throw InvalidParameter("custom integrand: table is not convex");
    if (!(out.slopes_.front() < 0.0) || !(out.slopes_.back() > 0.0))
      throw InvalidParameter("custom integrand: end slopes must have opposite signs (coercivity)");
    return out;
  }

  IntegrandKind kind() const noexcept { return kind_; }
  double p() const noexcept { return p_; }
  double coeff() const noexcept { return coeff_; }
  int q() const noexcept { return q_; }
  int d() const noexcept { return d_; }
  bool one_homogeneous() const noexcept {
    return kind_ == IntegrandKind::operator_norm_tv || (kind_ == IntegrandKind::p_power && p_ == 1.0);
  }
  bool superlinear() const noexcept { return kind_ != IntegrandKind::custom_table && p_ > 1.0; }
  /// W depends on |v|_F only.
  bool radial() const noexcept {
    return kind_ == IntegrandKind::quadratic || kind_ == IntegrandKind::p_power ||
           (kind_ == IntegrandKind::operator_norm_tv && std::min(q_, d_) == 1);
  }
  const std::vector<double>& table_v() const noexcept { return tv_; }
  const std::vector<double>& table_w() const noexcept { return tw_; }

  /// Returns a copy with another matrix shape (tables stay scalar).
  Integrand with_shape(int q, int d) const {
    if (kind_ == IntegrandKind::custom_table && (q != 1 || d != 1))
      throw Unsupported("custom integrand tables are scalar");
    Integrand w = *this;
    w.q_ = q;
    w.d_ = d;
    return w;
  }

  double value(const Mat& v) const {
    switch (kind_) {
      case IntegrandKind::quadratic: return coeff_ * v.squaredNorm();
      case IntegrandKind::p_power: return coeff_ * std::pow(v.norm(), p_);
      case IntegrandKind::operator_norm_tv: return coeff_ * detail::spectral_norm(v);
      case IntegrandKind::custom_table: return table_value(v(0, 0));
    }
    return kInf;
  }
  double value(double v) const { return value(scalar(v)); }

  double conjugate(const Mat& b) const {
    switch (kind_) {
      case IntegrandKind::quadratic: return b.squaredNorm() / (4.0 * coeff_);
      case IntegrandKind::p_power: {
        const double n = b.norm();
        if (p_ == 1.0) return n <= coeff_ * (1.0 + 1e-12) ? 0.0 : kInf;
        return (p_ - 1.0) * coeff_ * std::pow(n / (p_ * coeff_), p_ / (p_ - 1.0));
      }
      case IntegrandKind::operator_norm_tv:
        return detail::nuclear_norm(b) <= coeff_ * (1.0 + 1e-12) ? 0.0 : kInf;
      case IntegrandKind::custom_table: {
        const double s = b(0, 0);
        if (s < slopes_.front() - 1e-12 || s > slopes_.back() + 1e-12) return kInf;
        double best = -kInf;
        for (std::size_t k = 0; k < tv_.size(); ++k) best = std::max(best, s * tv_[k] - tw_[k]);
        return best;
      }
    }
    return kInf;
  }
  double conjugate(double b) const { return conjugate(scalar(b)); }

  double recession(const Mat& v) const {
    const double n = v.norm();
    if (n == 0.0) return 0.0;
    switch (kind_) {
      case IntegrandKind::quadratic: return kInf;
      case IntegrandKind::p_power: return p_ > 1.0 ? kInf : coeff_ * n;
      case IntegrandKind::operator_norm_tv: return value(v);
      case IntegrandKind::custom_table: {
        const double x = v(0, 0);
        return x > 0 ? slopes_.back() * x : slopes_.front() * x;
      }
    }
    return kInf;
  }
  double recession(double v) const { return recession(scalar(v)); }

  /// rho * W(J / rho) for rho > 0, recession(J) at rho = 0, +inf for rho < 0.
  double perspective(double rho, const Mat& J) const {
    if (rho < 0.0) return kInf;
    if (rho == 0.0) return recession(J);
    if (kind_ == IntegrandKind::quadratic) return coeff_ * J.squaredNorm() / rho;
    return rho * value(Mat(J / rho));
  }
  double perspective(double rho, double J) const { return perspective(rho, scalar(J)); }

  /// argmin over rho >= 0 of perspective(rho,J) + ((rho-rh)^2 + |J-Jh|^2) / (2 tau).
  std::pair<double, Mat> prox_perspective(double tau, double rh, const Mat& Jh) const {
    if (!(tau > 0.0)) throw InvalidParameter("prox_perspective: tau must be positive");
    switch (kind_) {
      case IntegrandKind::quadratic: return prox_quadratic(tau, rh, Jh);
      case IntegrandKind::p_power:
        if (p_ == 1.0) {
          const double n = Jh.norm();
          const double shrink = n > tau * coeff_ ? 1.0 - tau * coeff_ / n : 0.0;
          return {std::max(rh, 0.0), Mat(Jh * shrink)};
        }
        return prox_radial(tau, rh, Jh);
      case IntegrandKind::operator_norm_tv:
        return {std::max(rh, 0.0), Mat(Jh - detail::project_nuclear_ball(Jh, tau * coeff_))};
      case IntegrandKind::custom_table: return prox_table(tau, rh, Jh);
    }
    return {0.0, Jh};
  }

  /// W(v) >= c1 |v|_F^p - c2 with p = growth().
  double growth() const noexcept { return kind_ == IntegrandKind::custom_table ? 1.0 : p_; }
  std::pair<double, double> growth_constants() const {
    if (kind_ == IntegrandKind::custom_table) return linear_coercivity();
    if (kind_ == IntegrandKind::operator_norm_tv)
      return {coeff_ / std::sqrt(static_cast<double>(std::min(q_, d_))), 0.0};
    return {coeff_, 0.0};
  }
  /// W(v) >= c1 |v|_F - c2.
  std::pair<double, double> linear_coercivity() const {
    switch (kind_) {
      case IntegrandKind::quadratic: return {1.0, 1.0 / (4.0 * coeff_)};
      case IntegrandKind::p_power: {
        if (p_ == 1.0) return {coeff_, 0.0};
        return {1.0, conjugate(scalar(1.0))};
      }
      case IntegrandKind::operator_norm_tv: return growth_constants();
      case IntegrandKind::custom_table: {
        const double c1 = 0.5 * std::min(slopes_.back(), -slopes_.front());
        double c2 = 0.0;
        for (std::size_t k = 0; k < tv_.size(); ++k) c2 = std::max(c2, c1 * std::abs(tv_[k]) - tw_[k]);
        return {c1, c2};
      }
    }
    return {0.0, 0.0};
  }

  Mat scalar(double v) const {
    Mat m(1, 1);
    m(0, 0) = v;
    return m;
  }

 private:
  Integrand(IntegrandKind k, double p, double coeff, int q, int d) : kind_(k), p_(p), coeff_(coeff), q_(q), d_(d) {
    if (!(coeff > 0.0)) throw InvalidParameter("integrand: coefficient must be positive");
    if (q < 1 || q > 2 || d < 1 || d > 2) throw InvalidParameter("integrand: shape must be at most 2x2");
  }

  double table_value(double x) const {
    const std::size_t n = tv_.size();
    if (x <= tv_.front()) return tw_.front() + slopes_.front() * (x - tv_.front());
    if (x >= tv_.back()) return tw_.back() + slopes_.back() * (x - tv_.back());
    const auto it = std::upper_bound(tv_.begin(), tv_.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - tv_.begin()) - 1;
    (void)n;
    return tw_[k] + slopes_[k] * (x - tv_[k]);
  }

  std::pair<double, Mat> prox_quadratic(double tau, double rh, const Mat& Jh) const {
    const double a2 = Jh.squaredNorm();
    const double k = 2.0 * tau * coeff_;
    if (rh + a2 / (2.0 * k) <= 0.0) return {0.0, Mat::Zero(Jh.rows(), Jh.cols())};
    if (a2 == 0.0) return {rh, Mat(Jh)};
    // (rho - rh)(rho + k)^2 - (k/2)|Jh|^2 = 0 has one root with rho > max(rh,0).
    auto g = [&](double r) { return (r - rh) * (r + k) * (r + k) - 0.5 * k * a2; };
    auto dg = [&](double r) { return (r + k) * (r + k) + 2.0 * (r - rh) * (r + k); };
    const double lo = std::max(rh, 0.0);
    double hi = lo + 1.0;
    while (g(hi) < 0.0) hi = lo + 2.0 * (hi - lo);
    const double rho = detail::bracketed_newton(g, dg, lo, hi, 1e-12, 200, "prox_perspective");
    return {rho, Mat(Jh * (rho / (rho + k)))};
  }

  // Isotropic superlinear W(v) = coeff |v|^p: reduce to (rho, s = |J|).
  std::pair<double, Mat> prox_radial(double tau, double rh, const Mat& Jh) const {
    const double a = Jh.norm();
    if (rh + tau * conjugate(Mat(Jh / tau)) <= 0.0) return {0.0, Mat::Zero(Jh.rows(), Jh.cols())};
    if (a == 0.0) return {rh, Mat(Jh)};
    const double p = p_, c = coeff_;
    // For fixed rho > 0: c p (s/rho)^{p-1} + (s - a)/tau = 0, s in (0, a).
    auto s_of = [&](double rho) {
      auto g = [&](double s) { return c * p * std::pow(s / rho, p - 1.0) + (s - a) / tau; };
      auto dg = [&](double s) { return c * p * (p - 1.0) * std::pow(s / rho, p - 2.0) / rho + 1.0 / tau; };
      return detail::bracketed_newton(g, dg, 0.0, a, 1e-14, 200, "prox_perspective");
    };
    // d/drho of the partially minimized objective (convex in rho).
    auto h = [&](double rho) { return c * (1.0 - p) * std::pow(s_of(rho) / rho, p) + (rho - rh) / tau; };
    double lo = std::max(rh, 0.0), hi = lo + 1.0;
    if (lo == 0.0) lo = 1e-300;
    while (h(hi) < 0.0) hi = lo + 2.0 * (hi - lo);
    for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (h(mid) > 0.0 ? hi : lo) = mid;
    }
    const double rho = 0.5 * (lo + hi);
    return {rho, Mat(Jh * (s_of(rho) / a))};
  }

  // Piecewise-linear W: perspective is a max of linear forms on rho >= 0;
  // the minimizer is a piece interior point, a breakpoint ray, or on rho = 0.
  std::pair<double, Mat> prox_table(double tau, double rh, const Mat& Jh) const {
    const double jh = Jh(0, 0);
    auto obj = [&](double r, double j) {
      return perspective(r, j) + ((r - rh) * (r - rh) + (j - jh) * (j - jh)) / (2.0 * tau);
    };
    double br = 0.0, bj = 0.0, bv = kInf;
    auto consider = [&](double r, double j) {
      if (r < 0.0) return;
      const double v = obj(r, j);
      if (v < bv) { bv = v; br = r; bj = j; }
    };
    // Pieces: W(v) = tw_[k] + slopes_[k] (v - tv_[k]), gradient of the
    // perspective is (tw_[k] - slopes_[k] tv_[k], slopes_[k]).
    for (std::size_t k = 0; k < slopes_.size(); ++k) {
      const double gr = tw_[k] - slopes_[k] * tv_[k];
      consider(rh - tau * gr, jh - tau * slopes_[k]);
    }
    for (std::size_t k = 0; k < tv_.size(); ++k) {
      const double v = tv_[k];
      const double r = std::max(0.0, (rh + v * jh - tau * tw_[k]) / (1.0 + v * v));
      consider(r, r * v);
    }
    consider(0.0, std::max(0.0, jh - tau * slopes_.back()));
    consider(0.0, std::min(0.0, jh - tau * slopes_.front()));
    consider(std::max(rh, 0.0), 0.0);
    return {br, scalar(bj)};
  }

  IntegrandKind kind_ = IntegrandKind::quadratic;
  double p_ = 2.0;
  double coeff_ = 0.5;
  int q_ = 1, d_ = 1;
  std::vector<double> tv_, tw_, slopes_;
};

// ---------------------------------------------------------------------------
// Classical maps and the data term

/// u_i in R^q per node; `cells` optionally records the target cell of each value
/// (filled by nearest-cell embedding, needed for tabulated data terms).
struct ClassicalMap {
  int q = 1;
  std::vector<std::array<double, 2>> values;
  std::vector<std::size_t> cells;
};

/// f(x_i, y) >= 0: either a node x cell table or coeff * |y - g_i|^2.
struct DataTerm {
  enum class Kind { none, table, quadratic_fidelity };
  Kind kind = Kind::none;
  std::vector<std::vector<double>> table;
  std::vector<std::array<double, 2>> targets;
  double coeff = 1.0;

  static DataTerm from_table(std::vector<std::vector<double>> t) {
    for (const auto& row : t)
      for (double x : row)
        if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidInput("data term: entries must be finite and >= 0");
    DataTerm f;
    f.kind = Kind::table;
    f.table = std::move(t);
    return f;
  }
  static DataTerm fidelity(std::vector<std::array<double, 2>> g, double coeff) {
    if (!(coeff >= 0.0)) throw InvalidInput("data term: coefficient must be >= 0");
    DataTerm f;
    f.kind = Kind::quadratic_fidelity;
    f.targets = std::move(g);
    f.coeff = coeff;
    return f;
  }

  bool active() const noexcept { return kind != Kind::none; }

  /// f at node i for target cell j with centre y.
  double at_cell(std::size_t i, std::size_t j, const std::array<double, 2>& y, int q) const {
    switch (kind) {
      case Kind::none: return 0.0;
      case Kind::table: return table.at(i).at(j);
      case Kind::quadratic_fidelity: {
        double s = 0.0;
        for (int a = 0; a < q; ++a) s += (y[a] - targets.at(i)[a]) * (y[a] - targets.at(i)[a]);
        return coeff * s;
      }
    }
    return 0.0;
  }
};

/// Shortest representative of dy modulo period (period 0 = not periodic).
inline double wrap_delta(double dy, double period) {
  if (period <= 0.0) return dy;
  dy = std::fmod(dy, period);
  if (dy > 0.5 * period) dy -= period;
  if (dy < -0.5 * period) dy += period;
  return dy;
}

/// Sum over nodes of A of m_i W(Du_i) + m_i f(x_i, u_i), where column a of Du_i
/// is the forward difference along the node's outgoing induced axis-a edge
/// (zero if it has none). `periods` wraps differences on periodic target axes.
inline double eval_energy(const ClassicalMap& u, const SpatialDomain& D, const SubdomainMask& A,
                          const Integrand& W, const DataTerm* f = nullptr,
                          std::array<double, 2> periods = {0.0, 0.0}) {
  if (u.values.size() != D.size()) throw InvalidInput("eval_energy: map is not defined on every node");
  for (std::size_t i : A.nodes())
    for (int a = 0; a < u.q; ++a)
      if (!std::isfinite(u.values[i][a])) throw InvalidInput("eval_energy: map value missing at node " + std::to_string(i));
  const int q = u.q, d = D.dim;
  std::vector<Mat> jac(D.size(), Mat::Zero(q, d));
  std::vector<bool> any(D.size(), false);
  for (std::size_t e : A.edges()) {
    const Edge& ed = D.edges[e];
    for (int a = 0; a < q; ++a)
      jac[ed.tail](a, ed.axis) =
          wrap_delta(u.values[ed.head][a] - u.values[ed.tail][a], periods[a]) / ed.length;
    any[ed.tail] = true;
  }
  const Integrand Wq = W.kind() == IntegrandKind::custom_table ? W : W.with_shape(q, d);
  double total = 0.0;
  for (std::size_t i : A.nodes()) {
    if (any[i]) total += D.node_weights[i] * Wq.value(jac[i]);
    if (f && f->active()) {
      if (f->kind == DataTerm::Kind::table) {
        if (u.cells.size() != D.size()) throw InvalidInput("eval_energy: tabulated data term needs map cells");
        total += D.node_weights[i] * f->table.at(i).at(u.cells[i]);
      } else {
        total += D.node_weights[i] * f->at_cell(i, 0, u.values[i], q);
      }
    }
  }
  return total;
}

}  // namespace mvlift
