#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mvlift/integrand.hpp"

using namespace mvlift;

namespace {

Mat m1(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return m;
}

Mat random_mat(std::mt19937_64& rng, int q, int d, double s = 2.0) {
  std::uniform_real_distribution<double> U(-s, s);
  Mat m(q, d);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = U(rng);
  return m;
}

// Independent oracle for the scalar prox: nested golden-section search on the
// jointly convex objective (inner over J, outer over rho >= 0).
template <class F>
double golden(F f, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1) / 2;
  double a = lo, b = hi, c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && b - a > 1e-13; ++it) {
    if (fc < fd) { b = d; d = c; fd = fc; c = b - g * (b - a); fc = f(c); }
    else { a = c; c = d; fc = fd; d = a + g * (b - a); fd = f(d); }
  }
  return 0.5 * (a + b);
}

std::pair<double, double> brute_prox(const Integrand& W, double tau, double rh, double jh) {
  auto obj = [&](double r, double j) {
    return W.perspective(r, j) + ((r - rh) * (r - rh) + (j - jh) * (j - jh)) / (2 * tau);
  };
  const double R = std::abs(rh) + std::abs(jh) + 2;
  auto inner = [&](double r) { return golden([&](double j) { return obj(r, j); }, -R, R); };
  const double r = golden([&](double rr) { return obj(rr, inner(rr)); }, 0.0, R);
  // rho = 0 is a boundary candidate the open search may miss.
  const double j0 = inner(0.0);
  if (obj(0.0, j0) <= obj(r, inner(r))) return {0.0, j0};
  return {r, inner(r)};
}

std::vector<Integrand> builtins() {
  return {Integrand::quadratic(0.5), Integrand::quadratic(1.3), Integrand::p_power(3.0, 0.7),
          Integrand::p_power(1.5, 1.0), Integrand::p_power(1.0, 2.0), Integrand::tv(1.0)};
}

}  // namespace

TEST(EvalW, Examples) {
  const auto q = Integrand::quadratic(0.5);
  EXPECT_EQ(q.value(0.0), 0.0);
  EXPECT_DOUBLE_EQ(q.value(2.0), 2.0);
  EXPECT_DOUBLE_EQ(Integrand::tv().value(3.0), 3.0);
  EXPECT_DOUBLE_EQ(Integrand::tv().value(-3.0), 3.0);
}

TEST(Conjugate, Examples) {
  EXPECT_DOUBLE_EQ(Integrand::quadratic(0.5).conjugate(1.0), 0.5);
  const auto tv = Integrand::tv();
  EXPECT_EQ(tv.conjugate(0.9), 0.0);
  EXPECT_EQ(tv.conjugate(1.1), kInf);
  for (const auto& W : builtins()) EXPECT_EQ(W.conjugate(0.0), 0.0);
}

TEST(Conjugate, CustomTableMatchesQuadraticClosedForm) {
  std::vector<double> v, w;
  for (int k = -3000; k <= 3000; ++k) {
    v.push_back(k * 1e-3);
    w.push_back(0.5 * v.back() * v.back());
  }
  const auto T = Integrand::custom(v, w);
  for (double b : {-2.0, -0.7, 0.0, 0.3, 1.0, 2.5}) EXPECT_NEAR(T.conjugate(b), 0.5 * b * b, 1e-6);
  EXPECT_EQ(T.conjugate(3.5), kInf);
}

TEST(Conjugate, MatchesBruteForceSupremum) {
  // sup over a dense scalar grid.
  for (const auto& W : {Integrand::quadratic(0.8), Integrand::p_power(3.0, 0.5), Integrand::p_power(1.5, 1.0)}) {
    for (double b : {-1.5, -0.2, 0.6, 2.0}) {
      double best = -kInf;
      for (int k = -200000; k <= 200000; ++k) {
        const double v = k * 1e-4;
        best = std::max(best, b * v - W.value(v));
      }
      EXPECT_NEAR(W.conjugate(b), best, 1e-6);
    }
  }
}

TEST(Conjugate, NuclearBallForSpectralNorm) {
  // The conjugate of the spectral norm is the indicator of the nuclear-norm ball.
  const auto W = Integrand::tv(1.0, 2, 2);
  Mat b(2, 2);
  b << 0.6, 0.0, 0.0, 0.6;  // spectral 0.6, nuclear 1.2
  EXPECT_EQ(W.conjugate(b), kInf);
  std::mt19937_64 rng(3);
  Mat v(2, 2);
  v << 1.0, 0.0, 0.0, 1.0;
  EXPECT_GT(b.cwiseProduct(v).sum() - W.value(v), 0.0);  // sup is unbounded along t v
  b << 0.5, 0.0, 0.0, 0.45;
  EXPECT_EQ(W.conjugate(b), 0.0);
  for (int s = 0; s < 2000; ++s) {
    const Mat x = random_mat(rng, 2, 2);
    EXPECT_LE(b.cwiseProduct(x).sum() - W.value(x), 1e-12);
  }
}

TEST(Recession, Examples) {
  for (const auto& W : builtins()) {
    EXPECT_EQ(W.recession(0.0), 0.0);
  }
  EXPECT_EQ(Integrand::quadratic().recession(0.1), kInf);
  EXPECT_EQ(Integrand::p_power(3.0).recession(-0.1), kInf);
  EXPECT_DOUBLE_EQ(Integrand::tv(2.0).recession(-1.5), 3.0);
  const auto T = Integrand::custom({-1, 0, 2}, {3, 0, 1});
  EXPECT_DOUBLE_EQ(T.recession(2.0), 1.0);
  EXPECT_DOUBLE_EQ(T.recession(-2.0), 6.0);
}

TEST(Perspective, Examples) {
  const auto q = Integrand::quadratic(0.5);
  EXPECT_EQ(q.perspective(1.0, 0.0), 0.0);
  EXPECT_EQ(q.perspective(0.0, 1.0), kInf);
  EXPECT_EQ(q.perspective(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(q.perspective(2.0, 2.0), 1.0);
  EXPECT_EQ(q.perspective(-1.0, 0.0), kInf);
  EXPECT_DOUBLE_EQ(Integrand::tv().perspective(0.0, -2.0), 2.0);
}

TEST(Properties, FenchelYoung) {
  std::mt19937_64 rng(11);
  for (const auto& W0 : builtins()) {
    for (int k = 0; k < 300; ++k) {
      const int q = 1 + static_cast<int>(rng() % 2), d = 1 + static_cast<int>(rng() % 2);
      const auto W = W0.with_shape(q, d);
      const Mat v = random_mat(rng, q, d), b = random_mat(rng, q, d);
      const double ws = W.conjugate(b);
      if (std::isfinite(ws)) {
        EXPECT_GE(W.value(v) + ws, v.cwiseProduct(b).sum() - 1e-9);
      }
    }
  }
  // Equality at b = grad W(v).
  const auto q = Integrand::quadratic(0.7, 2, 2);
  const auto p3 = Integrand::p_power(3.0, 0.4, 2, 1);
  for (int k = 0; k < 100; ++k) {
    const Mat v = random_mat(rng, 2, 2);
    const Mat b = 2 * 0.7 * v;
    EXPECT_NEAR(q.value(v) + q.conjugate(b), v.cwiseProduct(b).sum(), 1e-9);
    const Mat w = random_mat(rng, 2, 1);
    const Mat g = 0.4 * 3.0 * w.norm() * w;
    EXPECT_NEAR(p3.value(w) + p3.conjugate(g), w.cwiseProduct(g).sum(), 1e-9);
  }
}

TEST(Properties, ConvexityAndHomogeneity) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> R(0.0, 3.0);
  for (const auto& W0 : builtins()) {
    const auto W = W0.with_shape(2, 2);
    for (int k = 0; k < 500; ++k) {
      const Mat a = random_mat(rng, 2, 2), b = random_mat(rng, 2, 2);
      EXPECT_LE(W.value(Mat((a + b) / 2)), 0.5 * (W.value(a) + W.value(b)) + 1e-12);
      const double r1 = R(rng), r2 = R(rng);
      EXPECT_LE(W.perspective(0.5 * (r1 + r2), Mat((a + b) / 2)),
                0.5 * (W.perspective(r1, a) + W.perspective(r2, b)) + 1e-12);
    }
  }
  const auto tv = Integrand::tv(1.0, 2, 2);
  for (int k = 0; k < 100; ++k) {
    const Mat v = random_mat(rng, 2, 2);
    const double t = R(rng);
    EXPECT_NEAR(tv.value(Mat(t * v)), t * tv.value(v), 1e-12);
  }
}

TEST(Properties, GrowthConstants) {
  std::mt19937_64 rng(8);
  for (const auto& W0 : builtins()) {
    const auto W = W0.with_shape(2, 2);
    const auto [c1, c2] = W.growth_constants();
    const auto [l1, l2] = W.linear_coercivity();
    EXPECT_GT(c1, 0.0);
    for (int k = 0; k < 300; ++k) {
      const Mat v = random_mat(rng, 2, 2, 5.0);
      EXPECT_GE(W.value(v), c1 * std::pow(v.norm(), W.growth()) - c2 - 1e-12);
      EXPECT_GE(W.value(v), l1 * v.norm() - l2 - 1e-12);
    }
  }
}

TEST(Prox, Examples) {
  const auto q = Integrand::quadratic(0.5);
  auto [r1, j1] = q.prox_perspective(1.0, 1.0, m1(0.0));
  EXPECT_DOUBLE_EQ(r1, 1.0);
  EXPECT_DOUBLE_EQ(j1(0, 0), 0.0);
  auto [r2, j2] = q.prox_perspective(1.0, -1.0, m1(0.0));
  EXPECT_DOUBLE_EQ(r2, 0.0);
  EXPECT_DOUBLE_EQ(j2(0, 0), 0.0);
  auto [r3, j3] = q.prox_perspective(0.5, 1.0, m1(2.0));
  auto [br, bj] = brute_prox(q, 0.5, 1.0, 2.0);
  // Polish the search result with 2-d Newton on the stationarity system
  // -k J^2/r^2 + (r - 1)/t = 0, 2 k J/r + (J - 2)/t = 0.
  const double k = 0.5, t = 0.5;
  for (int it = 0; it < 50; ++it) {
    const double g1 = -k * bj * bj / (br * br) + (br - 1.0) / t;
    const double g2 = 2 * k * bj / br + (bj - 2.0) / t;
    const double h11 = 2 * k * bj * bj / (br * br * br) + 1 / t, h12 = -2 * k * bj / (br * br);
    const double h22 = 2 * k / br + 1 / t;
    const double det = h11 * h22 - h12 * h12;
    br -= (h22 * g1 - h12 * g2) / det;
    bj -= (h11 * g2 - h12 * g1) / det;
  }
  EXPECT_NEAR(r3, br, 1e-8);
  EXPECT_NEAR(j3(0, 0), bj, 1e-8);
  EXPECT_THROW(q.prox_perspective(0.0, 1.0, m1(0.0)), InvalidParameter);
}

TEST(Prox, MatchesBruteForceForAllKinds) {
  std::vector<Integrand> ws = builtins();
  ws.push_back(Integrand::custom({-1, 0, 0.5, 2}, {2, 0, 0.1, 1.5}));
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (const auto& W : ws)
    for (int k = 0; k < 6; ++k) {
      const double tau = 0.2 + std::abs(U(rng)), rh = U(rng), jh = U(rng);
      const auto [r, j] = W.prox_perspective(tau, rh, m1(jh));
      const auto [br, bj] = brute_prox(W, tau, rh, jh);
      EXPECT_NEAR(r, br, 1e-6) << to_string(W.kind()) << " " << tau << " " << rh << " " << jh;
      EXPECT_NEAR(j(0, 0), bj, 1e-6) << to_string(W.kind());
    }
}

TEST(Prox, BeatsRandomPerturbations) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> N(0.0, 1.0);
  for (const auto& W0 : builtins()) {
    const auto W = W0.with_shape(2, 2);
    const double tau = 0.7, rh = 0.3;
    const Mat jh = random_mat(rng, 2, 2);
    const auto [r, j] = W.prox_perspective(tau, rh, jh);
    auto obj = [&](double rr, const Mat& jj) {
      return W.perspective(rr, jj) + ((rr - rh) * (rr - rh) + (jj - jh).squaredNorm()) / (2 * tau);
    };
    const double best = obj(r, j);
    for (int s = 0; s < 10000; ++s) {
      const double sc = std::pow(10.0, -1 - static_cast<double>(s % 4));
      Mat jj = j;
      for (int a = 0; a < 4; ++a) jj(a / 2, a % 2) += sc * N(rng);
      EXPECT_LE(best, obj(std::max(0.0, r + sc * N(rng)), jj) + 1e-12);
    }
  }
}

TEST(EvalEnergy, Examples) {
  const auto W = Integrand::quadratic(0.5);
  const auto D = build_interval(8, 1.0);
  ClassicalMap c{1, std::vector<std::array<double, 2>>(8, {0.3, 0.0}), {}};
  EXPECT_EQ(eval_energy(c, D, SubdomainMask::full(D), W), 0.0);
  for (std::size_t n : {4u, 16u, 50u}) {
    const auto I = build_interval(n, 1.0);
    ClassicalMap u{1, {}, {}};
    for (const auto& p : I.positions) u.values.push_back({p[0], 0.0});
    EXPECT_NEAR(eval_energy(u, I, SubdomainMask::full(I), W), 0.5 * (1.0 - 1.0 / n), 1e-12);
  }
  // One branch of the square root on the circle minus the closing edge.
  const std::size_t n = 16;
  const auto C = build_circle(n, 2 * std::numbers::pi);
  ClassicalMap s{1, {}, {}};
  for (const auto& p : C.positions) s.values.push_back({p[0] / 2, 0.0});
  const SubdomainMask arc(C, [&] { std::vector<std::size_t> v; for (std::size_t i = 0; i < n; ++i) v.push_back(i); return v; }());
  std::vector<std::size_t> edges = arc.edges();
  ASSERT_EQ(edges.size(), n);  // full circle: the last edge jumps by -pi + pi/n
  double e_arc = 0.0;
  for (std::size_t e = 0; e + 1 < n; ++e) e_arc += C.edges[e].weight * 0.5 * 0.25;
  EXPECT_NEAR(e_arc, 2 * std::numbers::pi / 8 * (n - 1) / n, 1e-12);
  // Same value from eval_energy on the path mask (all nodes; drop edge n-1 by using a custom domain).
  SpatialDomain P = C;
  P.edges.pop_back();
  EXPECT_NEAR(eval_energy(s, P, SubdomainMask::full(P), W), e_arc, 1e-12);
}

TEST(EvalEnergy, DataTermAndAdditivity) {
  const auto W = Integrand::quadratic(0.5);
  const auto I = build_interval(10, 1.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ClassicalMap u{1, {}, {}};
  std::vector<std::array<double, 2>> g;
  for (std::size_t i = 0; i < 10; ++i) {
    u.values.push_back({U(rng), 0.0});
    g.push_back({U(rng), 0.0});
  }
  const auto f = DataTerm::fidelity(g, 2.0);
  double expect_f = 0.0;
  for (std::size_t i = 0; i < 10; ++i) expect_f += 0.1 * 2.0 * std::pow(u.values[i][0] - g[i][0], 2);
  const auto full = SubdomainMask::full(I);
  EXPECT_NEAR(eval_energy(u, I, full, W, &f) - eval_energy(u, I, full, W), expect_f, 1e-12);

  const SubdomainMask a1(I, {0, 1, 2, 3}), a2(I, {4, 5, 6, 7, 8, 9}), a3(I, {6, 7, 8, 9});
  const double e1 = eval_energy(u, I, a1, W), e2 = eval_energy(u, I, a2, W);
  EXPECT_LE(e1 + e2, eval_energy(u, I, mask_union(I, a1, a2), W) + 1e-15);
  EXPECT_NEAR(e1 + eval_energy(u, I, a3, W) + 0.1 * 0.5 * 0.0,
              eval_energy(u, I, mask_union(I, a1, a3), W), 1e-15);  // no cross edge
  ClassicalMap bad = u;
  bad.values.pop_back();
  EXPECT_THROW(eval_energy(bad, I, full, W), InvalidInput);
}
