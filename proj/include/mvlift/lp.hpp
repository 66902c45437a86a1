#pragma once

// Dense revised simplex for  min c'x  s.t.  A x = b, x >= 0  with sparse
// columns. Dantzig pricing (lowest index on ties), lexicographic ratio test,
// two phases with artificial columns, periodic reinversion of the basis.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mvlift/error.hpp"

namespace mvlift {

struct SparseColumn {
  std::vector<std::pair<std::size_t, double>> entries;
};

struct LinearProgram {
  std::size_t rows = 0;
  std::vector<SparseColumn> columns;
  std::vector<double> cost;
  std::vector<double> rhs;

  std::size_t add_column(double c, SparseColumn col) {
    cost.push_back(c);
    columns.push_back(std::move(col));
    return columns.size() - 1;
  }
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpResult {
  LpStatus status = LpStatus::iteration_limit;
  double value = 0.0;
  std::vector<double> x;
  std::vector<double> duals;  // y with c - A'y >= 0 at optimality
  std::size_t iterations = 0;
};

struct LpOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-11;
  std::size_t max_iterations = 0;  // 0: 50 (rows + columns)
  std::size_t reinvert_every = 64;
};

namespace detail {

class Simplex {
 public:
  Simplex(const LinearProgram& lp, const LpOptions& opt) : lp_(lp), opt_(opt), m_(lp.rows), n_(lp.columns.size()) {
    sign_.assign(m_, 1.0);
    for (std::size_t r = 0; r < m_; ++r)
      if (lp.rhs[r] < 0) sign_[r] = -1.0;
    basis_.resize(m_);
    for (std::size_t r = 0; r < m_; ++r) basis_[r] = n_ + r;  // artificial r
    binv_ = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
    xb_.resize(static_cast<Eigen::Index>(m_));
    for (std::size_t r = 0; r < m_; ++r) xb_[static_cast<Eigen::Index>(r)] = sign_[r] * lp.rhs[r];
    in_basis_.assign(n_ + m_, false);
    for (std::size_t k : basis_) in_basis_[k] = true;
  }

  LpResult solve() {
    LpResult res;
    const std::size_t cap = opt_.max_iterations ? opt_.max_iterations : 50 * (m_ + n_ + 1);
    // Phase 1: minimize the sum of artificials.
    LpStatus s = run(/*phase=*/1, cap, res.iterations);
    if (s == LpStatus::iteration_limit) { res.status = s; return res; }
    double infeas = 0.0;
    for (std::size_t r = 0; r < m_; ++r)
      if (basis_[r] >= n_) infeas += xb_[static_cast<Eigen::Index>(r)];
    if (infeas > opt_.feasibility_tol * (1.0 + rhs_scale())) { res.status = LpStatus::infeasible; return res; }
    s = run(/*phase=*/2, cap, res.iterations);
    res.status = s;
    res.x.assign(n_, 0.0);
    for (std::size_t r = 0; r < m_; ++r)
      if (basis_[r] < n_) res.x[basis_[r]] = std::max(0.0, xb_[static_cast<Eigen::Index>(r)]);
    res.value = 0.0;
    for (std::size_t j = 0; j < n_; ++j) res.value += lp_.cost[j] * res.x[j];
    const Eigen::VectorXd y = duals(2);
    res.duals.resize(m_);
    for (std::size_t r = 0; r < m_; ++r) res.duals[r] = sign_[r] * y[static_cast<Eigen::Index>(r)];
    return res;
  }

 private:
  double rhs_scale() const {
    double s = 0.0;
    for (double v : lp_.rhs) s = std::max(s, std::abs(v));
    return s;
  }

  double cost_of(std::size_t k, int phase) const {
    if (k >= n_) return phase == 1 ? 1.0 : 0.0;
    return phase == 1 ? 0.0 : lp_.cost[k];
  }

  // Column k in the sign-normalized system.
  Eigen::VectorXd column(std::size_t k) const {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m_));
    if (k >= n_) {
      a[static_cast<Eigen::Index>(k - n_)] = 1.0;
    } else {
      for (const auto& [r, v] : lp_.columns[k].entries) a[static_cast<Eigen::Index>(r)] += sign_[r] * v;
    }
    return a;
  }

  Eigen::VectorXd duals(int phase) const {
    Eigen::VectorXd cb(static_cast<Eigen::Index>(m_));
    for (std::size_t r = 0; r < m_; ++r) cb[static_cast<Eigen::Index>(r)] = cost_of(basis_[r], phase);
    return binv_.transpose() * cb;
  }

  double reduced_cost(std::size_t j, const Eigen::VectorXd& y, int phase) const {
    double d = cost_of(j, phase);
    for (const auto& [r, v] : lp_.columns[j].entries) d -= y[static_cast<Eigen::Index>(r)] * sign_[r] * v;
    return d;
  }

  void reinvert() {
    Eigen::MatrixXd B(static_cast<Eigen::Index>(m_), static_cast<Eigen::Index>(m_));
    for (std::size_t r = 0; r < m_; ++r) B.col(static_cast<Eigen::Index>(r)) = column(basis_[r]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    binv_ = lu.inverse();
    Eigen::VectorXd b(static_cast<Eigen::Index>(m_));
    for (std::size_t r = 0; r < m_; ++r) b[static_cast<Eigen::Index>(r)] = sign_[r] * lp_.rhs[r];
    xb_ = binv_ * b;
  }

  LpStatus run(int phase, std::size_t cap, std::size_t& iters) {
    std::size_t since_reinvert = 0;
    while (true) {
      if (iters >= cap) return LpStatus::iteration_limit;
      const Eigen::VectorXd y = duals(phase);
      std::size_t enter = n_;
      double best = -opt_.optimality_tol;
      for (std::size_t j = 0; j < n_; ++j) {
        if (in_basis_[j]) continue;
        const double d = reduced_cost(j, y, phase);
        if (d < best) { best = d; enter = j; }
      }
      if (enter == n_) return LpStatus::optimal;
      const Eigen::VectorXd dcol = binv_ * column(enter);
      std::size_t leave = m_;
      const double piv_tol = 1e-11;
      // Basic artificials at zero block any movement in phase 2.
      if (phase == 2) {
        for (std::size_t r = 0; r < m_ && leave == m_; ++r)
          if (basis_[r] >= n_ && std::abs(dcol[static_cast<Eigen::Index>(r)]) > piv_tol) leave = r;
      }
      if (leave == m_) {
        double best_ratio = 0.0;
        for (std::size_t r = 0; r < m_; ++r) {
          const double dr = dcol[static_cast<Eigen::Index>(r)];
          if (dr <= piv_tol) continue;
          const double ratio = std::max(0.0, xb_[static_cast<Eigen::Index>(r)]) / dr;
          if (leave == m_ || ratio < best_ratio - 1e-12 * (1.0 + best_ratio)) {
            leave = r;
            best_ratio = ratio;
          } else if (ratio <= best_ratio + 1e-12 * (1.0 + best_ratio) && lex_less(r, leave, dcol)) {
            leave = r;
            best_ratio = std::min(best_ratio, ratio);
          }
        }
      }
      if (leave == m_) return LpStatus::unbounded;
      pivot(enter, leave, dcol);
      ++iters;
      if (++since_reinvert >= opt_.reinvert_every) {
        reinvert();
        since_reinvert = 0;
      }
    }
  }

  // Row r of B^{-1}/d_r lexicographically smaller than row s of B^{-1}/d_s.
  bool lex_less(std::size_t r, std::size_t s, const Eigen::VectorXd& dcol) const {
    const double dr = dcol[static_cast<Eigen::Index>(r)], ds = dcol[static_cast<Eigen::Index>(s)];
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(m_); ++k) {
      const double a = binv_(static_cast<Eigen::Index>(r), k) / dr;
      const double b = binv_(static_cast<Eigen::Index>(s), k) / ds;
      if (a < b - 1e-12) return true;
      if (a > b + 1e-12) return false;
    }
    return r < s;
  }

  void pivot(std::size_t enter, std::size_t leave, const Eigen::VectorXd& dcol) {
    const auto L = static_cast<Eigen::Index>(leave);
    const double piv = dcol[L];
    const double step = xb_[L] / piv;
    xb_ -= step * dcol;
    xb_[L] = step;
    const Eigen::RowVectorXd prow = binv_.row(L) / piv;
    for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(m_); ++r) {
      if (r == L) continue;
      const double f = dcol[r];
      if (f != 0.0) binv_.row(r) -= f * prow;
    }
    binv_.row(L) = prow;
    in_basis_[basis_[leave]] = false;
    basis_[leave] = enter;
    in_basis_[enter] = true;
  }

  const LinearProgram& lp_;
  LpOptions opt_;
  std::size_t m_, n_;
  std::vector<double> sign_;
  std::vector<std::size_t> basis_;
  std::vector<bool> in_basis_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
};

}  // namespace detail

inline LpResult solve_lp(const LinearProgram& lp, const LpOptions& opt = {}) {
  if (lp.rhs.size() != lp.rows || lp.cost.size() != lp.columns.size())
    throw InvalidInput("solve_lp: inconsistent program dimensions");
  for (const auto& col : lp.columns)
    for (const auto& [r, v] : col.entries)
      if (r >= lp.rows || !std::isfinite(v)) throw InvalidInput("solve_lp: bad column entry");
  if (lp.rows == 0) {
    LpResult res;
    res.status = LpStatus::optimal;
    res.x.assign(lp.columns.size(), 0.0);
    for (std::size_t j = 0; j < lp.columns.size(); ++j)
      if (lp.cost[j] < 0) { res.status = LpStatus::unbounded; break; }
    return res;
  }
  detail::Simplex s(lp, opt);
  return s.solve();
}

inline std::string to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration-limit";
  }
  return "?";
}

}  // namespace mvlift
