#include <gtest/gtest.h>

#include <random>

#include "dynop/nlp.hpp"
#include "dynop/riccati.hpp"

using namespace dynop;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

Mat random_matrix(std::mt19937& rng, int r, int c, double s = 1.0) {
  std::normal_distribution<double> nd(0.0, s);
  Mat M(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) M(i, j) = nd(rng);
  return M;
}

// Brute-force LP oracle: enumerate all vertices of {A x <= b, x >= 0}.
double lp_vertex_oracle(const Vec& c, const Mat& A, const Vec& b) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(A.rows());
  Mat G(m + n, n);
  Vec h(m + n);
  G << A, -Mat::Identity(n, n);
  h << b, Vec::Zero(n);
  double best = kInf;
  std::vector<int> idx(n);
  std::vector<bool> pick(m + n, false);
  std::fill(pick.begin(), pick.begin() + n, true);
  do {
    int k = 0;
    for (int i = 0; i < m + n; ++i)
      if (pick[i]) idx[k++] = i;
    Mat S(n, n);
    Vec r(n);
    for (int i = 0; i < n; ++i) {
      S.row(i) = G.row(idx[i]);
      r[i] = h[idx[i]];
    }
    Eigen::FullPivLU<Mat> lu(S);
    if (lu.rank() < n) continue;
    const Vec x = lu.solve(r);
    if ((G * x - h).maxCoeff() <= 1e-9) best = std::min(best, c.dot(x));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

}  // namespace

TEST(Dare, ScalarGoldenRatio) {
  const auto s = solve_dare(m1(1), m1(1), m1(1), m1(1));
  EXPECT_NEAR(s.P(0, 0), (1.0 + std::sqrt(5.0)) / 2.0, 1e-9);
  EXPECT_NEAR(s.K(0, 0), -(std::sqrt(5.0) - 1.0) / 2.0, 1e-9);
}

TEST(Dare, DeadbeatPlant) {
  const auto s = solve_dare(m1(0), m1(1), m1(3), m1(1));
  EXPECT_NEAR(s.P(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(s.K(0, 0), 0.0, 1e-12);
}

TEST(Dare, NoInputStablePlant) {
  const auto s = solve_dare(m1(0.5), Mat(1, 0), m1(1), Mat(0, 0));
  EXPECT_NEAR(s.P(0, 0), 4.0 / 3.0, 1e-12);
  EXPECT_EQ(s.K.rows(), 0);
}

TEST(Dare, RejectsUnstabilizable) {
  EXPECT_THROW(solve_dare(m1(2.0), Mat::Zero(1, 1), m1(1), m1(1)), SynthesisError);
}

TEST(Dare, RandomInstancesResidual) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> dn(1, 6), dm(1, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = dn(rng), m = dm(rng);
    const Mat A = random_matrix(rng, n, n, 0.6), B = random_matrix(rng, n, m);
    const Mat Lq = random_matrix(rng, n, n), Lr = random_matrix(rng, m, m);
    const Mat Q = Lq * Lq.transpose() + 0.1 * Mat::Identity(n, n);
    const Mat R = Lr * Lr.transpose() + 0.1 * Mat::Identity(m, m);
    const auto s = solve_dare(A, B, Q, R);
    EXPECT_LE(dare_residual(A, B, Q, R, s.P).norm(), 1e-9 * std::max(1.0, s.P.norm()));
    EXPECT_LT(spectral_radius(A + B * s.K), 1.0);
    EXPECT_GT(lambda_min(s.P), 0.0);
  }
}

TEST(Lyapunov, MatchesSeries) {
  std::mt19937 rng(3);
  const Mat A = 0.3 * random_matrix(rng, 4, 4);
  const Mat Q = Mat::Identity(4, 4);
  const Mat X = solve_discrete_lyapunov(A, Q);
  EXPECT_LT((A.transpose() * X * A - X + Q).norm(), 1e-11);
  Mat big = 0.02 * random_matrix(rng, 30, 30);
  const Mat X2 = solve_discrete_lyapunov(big, Mat::Identity(30, 30));
  EXPECT_LT((big.transpose() * X2 * big - X2 + Mat::Identity(30, 30)).norm(), 1e-10);
}

TEST(TvRiccati, FixedPointAtDare) {
  const Mat A = (Mat(2, 2) << 1, 0.1, 0, 1).finished(), B = (Mat(2, 1) << 0.005, 0.1).finished();
  const Mat Q = Mat::Identity(2, 2), R = m1(0.1);
  const auto s = solve_dare(A, B, Q, R);
  const auto seq = solve_tv_riccati(std::vector<Mat>(10, A), std::vector<Mat>(10, B), Q, R, s.P);
  for (const auto& P : seq.P) EXPECT_LT((P - s.P).norm(), 1e-9);
}

TEST(TvRiccati, HorizonOneHand) {
  const auto seq = solve_tv_riccati({m1(1)}, {m1(1)}, m1(1), m1(1), m1(0));
  EXPECT_NEAR(seq.P[0](0, 0), 1.0, 1e-15);
  EXPECT_NEAR(seq.K[0](0, 0), 0.0, 1e-15);
}

TEST(TvRiccati, GridDynamicProgrammingOracle) {
  const int N = 20;
  std::vector<Mat> As, Bs;
  for (int t = 0; t < N; ++t) {
    As.push_back(m1(t % 2 == 0 ? 0.5 : 2.0));
    Bs.push_back(m1(1.0));
  }
  const double q = 1.0, r = 1.0, pT = 1.0;
  const auto seq = solve_tv_riccati(As, Bs, m1(q), m1(r), m1(pT));
  // value iteration on a state grid with golden-section minimization over u
  const int G = 4001;
  const double X = 4.0, h = 2.0 * X / (G - 1);
  std::vector<double> V(G), Vn(G);
  for (int i = 0; i < G; ++i) {
    const double x = -X + i * h;
    V[i] = pT * x * x;
  }
  auto interp = [&](const std::vector<double>& W, double x) {
    if (x <= -X || x >= X) return 1e12;
    const double s = (x + X) / h;
    const int i = std::min(G - 2, static_cast<int>(s));
    const double w = s - i;
    return (1 - w) * W[i] + w * W[i + 1];
  };
  for (int t = N - 1; t >= 0; --t) {
    const double a = As[t](0, 0);
    for (int i = 0; i < G; ++i) {
      const double x = -X + i * h;
      auto cost = [&](double u) { return q * x * x + r * u * u + interp(V, a * x + u); };
      double lo = -a * x - X + 1e-9, hi = -a * x + X - 1e-9;
      const double gr = (std::sqrt(5.0) - 1) / 2;
      double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
      double fc = cost(c), fd = cost(d);
      for (int it = 0; it < 80; ++it) {
        if (fc < fd) {
          hi = d;
          d = c;
          fd = fc;
          c = hi - gr * (hi - lo);
          fc = cost(c);
        } else {
          lo = c;
          c = d;
          fc = fd;
          d = lo + gr * (hi - lo);
          fd = cost(d);
        }
      }
      Vn[i] = std::min(fc, fd);
    }
    V.swap(Vn);
  }
  for (double x0 : {0.5, 1.0, 2.0}) {
    const double exact = seq.P[0](0, 0) * x0 * x0;
    EXPECT_LE(std::abs(interp(V, x0) - exact) / exact, 1e-3);
  }
}

TEST(PeriodicRiccati, PeriodOneEqualsDare) {
  const Mat A = (Mat(2, 2) << 1.1, 0.2, 0, 0.9).finished(), B = (Mat(2, 1) << 0, 1).finished();
  const Mat Q = Mat::Identity(2, 2), R = m1(1);
  const auto p = solve_periodic_riccati({A}, {B}, Q, R);
  const auto d = solve_dare(A, B, Q, R);
  ASSERT_EQ(p.P.size(), 1u);
  EXPECT_LT((p.P[0] - d.P).norm(), 1e-8);
  EXPECT_LT((p.K[0] - d.K).norm(), 1e-8);
}

TEST(PeriodicRiccati, UniqueFromTwoInitializations) {
  const std::vector<Mat> As = {m1(0.5), m1(2.0)}, Bs = {m1(1.0), m1(0.5)};
  const auto p1 = solve_periodic_riccati(As, Bs, m1(1), m1(1), m1(0));
  const auto p2 = solve_periodic_riccati(As, Bs, m1(1), m1(1), m1(100));
  for (int t = 0; t < 2; ++t) EXPECT_NEAR(p1.P[t](0, 0), p2.P[t](0, 0), 1e-8);
  // periodicity under the backward recursion
  const auto back = solve_tv_riccati(As, Bs, m1(1), m1(1), p1.P[0]);
  EXPECT_NEAR(back.P[0](0, 0), p1.P[0](0, 0), 1e-8);
  EXPECT_NEAR(back.P[1](0, 0), p1.P[1](0, 0), 1e-8);
  const double mono = (As[1] + Bs[1] * p1.K[1])(0, 0) * (As[0] + Bs[0] * p1.K[0])(0, 0);
  EXPECT_LT(std::abs(mono), 1.0);
}

TEST(Lp, BoxUpperBound) {
  LpProblem lp;
  lp.c = m1(-1);
  lp.ub = Vec::Constant(1, 3.0);
  const auto r = solve_lp(lp);
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.x[0], 3.0, 1e-12);
  EXPECT_NEAR(r.objective, -3.0, 1e-12);
}

TEST(Lp, DegenerateEquality) {
  LpProblem lp;
  lp.c = Vec::Zero(1);
  lp.A_eq = m1(1);
  lp.b_eq = Vec::Constant(1, 1.0);
  const auto r = solve_lp(lp);
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.x[0], 1.0, 1e-12);
}

TEST(Lp, InfeasibleAndUnbounded) {
  LpProblem inf;
  inf.c = Vec::Zero(1);
  inf.A_in = m1(1);
  inf.b_in = Vec::Constant(1, -1.0);
  EXPECT_EQ(solve_lp(inf).status, SolveStatus::Infeasible);
  LpProblem unb;
  unb.c = m1(-1);
  EXPECT_EQ(solve_lp(unb).status, SolveStatus::Unbounded);
}

TEST(Lp, RandomVersusVertexEnumeration) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ua(0.1, 2.0), ub(1.0, 5.0), uc(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    Mat A(5, 8);
    Vec b(5), c(8);
    for (int i = 0; i < 5; ++i) {
      b[i] = ub(rng);
      for (int j = 0; j < 8; ++j) A(i, j) = ua(rng);
    }
    for (int j = 0; j < 8; ++j) c[j] = uc(rng);
    LpProblem lp;
    lp.c = c;
    lp.A_in = A;
    lp.b_in = b;
    const auto r = solve_lp(lp);
    ASSERT_TRUE(r.optimal());
    EXPECT_NEAR(r.objective, lp_vertex_oracle(c, A, b), 1e-8);
    EXPECT_LE(r.constraint_violation, 1e-9);
  }
}

TEST(Qp, Unconstrained) {
  QpProblem qp{m1(1), Vec::Constant(1, -1.0), Mat(0, 1), Vec(), Mat(0, 1), Vec()};
  const auto r = solve_qp(qp);
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.x[0], 1.0, 1e-12);
}

TEST(Qp, LowerBoundMultiplier) {
  QpProblem qp{m1(1), Vec::Zero(1), Mat(0, 1), Vec(), m1(-1), Vec::Constant(1, -2.0)};
  const auto r = solve_qp(qp);
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.x[0], 2.0, 1e-12);
  EXPECT_NEAR(r.lambda_in[0], 2.0, 1e-12);
  ASSERT_EQ(r.active_set.size(), 1u);
  EXPECT_LE(r.kkt_residual, 1e-8);
}

TEST(Qp, InfeasibleReported) {
  Mat Ain(2, 1);
  Ain << 1, -1;
  QpProblem qp{m1(1), Vec::Zero(1), Mat(0, 1), Vec(), Ain, Vec::Constant(2, -1.0)};
  EXPECT_EQ(solve_qp(qp).status, SolveStatus::Infeasible);
}

TEST(Qp, RandomBoxVersusProjectedGradient) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Mat M = random_matrix(rng, 6, 6);
    const Mat H = M.transpose() * M + 0.5 * Mat::Identity(6, 6);
    const Vec g = 3.0 * random_matrix(rng, 6, 1);
    Mat Ain(12, 6);
    Ain << Mat::Identity(6, 6), -Mat::Identity(6, 6);
    const Vec bin = Vec::Ones(12);
    const auto r = solve_qp({H, g, Mat(0, 6), Vec(), Ain, bin});
    ASSERT_TRUE(r.optimal());
    EXPECT_LE(r.kkt_residual, 1e-8);
    // accelerated projected gradient oracle
    const double L = lambda_max(H);
    Vec x = Vec::Zero(6), y = x, xp = x;
    double tk = 1.0;
    for (int it = 0; it < 200000; ++it) {
      xp = x;
      x = (y - (H * y + g) / L).cwiseMax(-1.0).cwiseMin(1.0);
      const double tn = 0.5 * (1 + std::sqrt(1 + 4 * tk * tk));
      y = x + ((tk - 1) / tn) * (x - xp);
      tk = tn;
      if ((x - xp).norm() < 1e-14) break;
    }
    const double fo = 0.5 * x.dot(H * x) + g.dot(x);
    EXPECT_NEAR(r.objective, fo, 1e-6);
  }
}

TEST(Qp, EqualityAndInequality) {
  // min |x|^2 s.t. x0 + x1 = 1, x0 <= 0.2
  Mat Aeq(1, 2);
  Aeq << 1, 1;
  Mat Ain(1, 2);
  Ain << 1, 0;
  const auto r = solve_qp({2 * Mat::Identity(2, 2), Vec::Zero(2), Aeq, Vec::Ones(1), Ain, Vec::Constant(1, 0.2)});
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.x[0], 0.2, 1e-12);
  EXPECT_NEAR(r.x[1], 0.8, 1e-12);
  EXPECT_LE(r.kkt_residual, 1e-10);
}

TEST(Nlp, QpAsNlp) {
  std::mt19937 rng(9);
  const Mat M = random_matrix(rng, 4, 4);
  const Mat H = M.transpose() * M + Mat::Identity(4, 4);
  const Vec g = random_matrix(rng, 4, 1);
  Mat Ain(4, 4);
  Ain = Mat::Identity(4, 4);
  const Vec bin = Vec::Constant(4, 0.1);
  const auto rq = solve_qp({H, g, Mat(0, 4), Vec(), Ain, bin});
  NlpProblem p;
  p.n = 4;
  p.n_in = 4;
  p.x0 = Vec::Zero(4);
  p.eval = [&](const Vec& x, bool, NlpEval& e) {
    e.f = 0.5 * x.dot(H * x) + g.dot(x);
    e.g = H * x + g;
    e.ce = Vec(0);
    e.Je = Mat(0, 4);
    e.ci = Ain * x - bin;
    e.Ji = Ain;
  };
  p.hess_lag = [&](const Vec&, const Vec&, const Vec&) { return H; };
  const auto rn = solve_nlp(p);
  ASSERT_TRUE(rn.optimal());
  EXPECT_LT((rn.x - rq.x).norm(), 1e-6);
}

TEST(Nlp, Rosenbrock) {
  NlpProblem p;
  p.n = 2;
  p.x0 = (Vec(2) << -1.2, 1.0).finished();
  p.eval = [](const Vec& x, bool, NlpEval& e) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    e.f = a * a + 100 * b * b;
    e.g = (Vec(2) << -2 * a - 400 * x[0] * b, 200 * b).finished();
    e.ce = Vec(0);
    e.Je = Mat(0, 2);
    e.ci = Vec(0);
    e.Ji = Mat(0, 2);
  };
  const auto bfgs = solve_nlp(p);
  ASSERT_TRUE(bfgs.optimal()) << to_string(bfgs.status);
  EXPECT_LT((bfgs.x - Vec::Ones(2)).norm(), 1e-6);
  p.hess_lag = [](const Vec& x, const Vec&, const Vec&) {
    Mat H(2, 2);
    H << 2 - 400 * (x[1] - 3 * x[0] * x[0]), -400 * x[0], -400 * x[0], 200;
    return H;
  };
  const auto exact = solve_nlp(p);
  ASSERT_TRUE(exact.optimal()) << to_string(exact.status);
  EXPECT_LT((exact.x - Vec::Ones(2)).norm(), 1e-6);
}

TEST(Nlp, EqualityConstrained) {
  NlpProblem p;
  p.n = 2;
  p.n_eq = 1;
  p.x0 = (Vec(2) << 3.0, -1.0).finished();
  p.eval = [](const Vec& x, bool, NlpEval& e) {
    e.f = x.squaredNorm();
    e.g = 2 * x;
    e.ce = Vec::Constant(1, x[0] + x[1] - 1);
    e.Je = (Mat(1, 2) << 1, 1).finished();
    e.ci = Vec(0);
    e.Ji = Mat(0, 2);
  };
  const auto r = solve_nlp(p);
  ASSERT_TRUE(r.optimal());
  EXPECT_NEAR(r.x[0], 0.5, 1e-8);
  EXPECT_NEAR(r.x[1], 0.5, 1e-8);
  EXPECT_LE(r.kkt_residual, 1e-8);
}

TEST(Nlp, NonlinearConstraintsAndDeterminism) {
  // min x0 + x1 s.t. x0^2 + x1^2 <= 2 -> (-1,-1)
  NlpProblem p;
  p.n = 2;
  p.n_in = 1;
  p.x0 = (Vec(2) << 0.3, 0.1).finished();
  p.eval = [](const Vec& x, bool, NlpEval& e) {
    e.f = x[0] + x[1];
    e.g = Vec::Ones(2);
    e.ce = Vec(0);
    e.Je = Mat(0, 2);
    e.ci = Vec::Constant(1, x.squaredNorm() - 2);
    e.Ji = 2 * x.transpose();
  };
  p.hess_lag = [](const Vec&, const Vec&, const Vec& li) { return Mat(2 * li[0] * Mat::Identity(2, 2)); };
  const auto a = solve_nlp(p);
  const auto b = solve_nlp(p);
  ASSERT_TRUE(a.optimal());
  EXPECT_LT((a.x + Vec::Ones(2)).norm(), 1e-8);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Nlp, InfeasibleLinearizationRecovers) {
  // linearization at x0=0 of x^2 = 1 is degenerate; elastic mode must recover
  NlpProblem p;
  p.n = 1;
  p.n_eq = 1;
  p.x0 = Vec::Zero(1);
  p.eval = [](const Vec& x, bool, NlpEval& e) {
    e.f = (x[0] - 2) * (x[0] - 2);
    e.g = Vec::Constant(1, 2 * (x[0] - 2));
    e.ce = Vec::Constant(1, x[0] * x[0] - 1);
    e.Je = Mat::Constant(1, 1, 2 * x[0]);
    e.ci = Vec(0);
    e.Ji = Mat(0, 1);
  };
  const auto r = solve_nlp(p);
  ASSERT_TRUE(r.optimal()) << to_string(r.status);
  EXPECT_NEAR(r.x[0], 1.0, 1e-8);
}
