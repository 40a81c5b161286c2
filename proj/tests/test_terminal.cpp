#include <gtest/gtest.h>

#include <random>

#include "dynop/terminal.hpp"

using namespace dynop;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }
Vec v1(double v) { return Vec::Constant(1, v); }

DynamicalSystem scalar(std::function<double(double, double)> fn) {
  return DynamicalSystem(1, 1, 1, [fn](const Vec& x, const Vec& u) { return v1(fn(x[0], u[0])); });
}

ConstraintSet unit_box(int n, int m, double s = 1.0) {
  return ConstraintSet::box(Vec::Constant(n, -s), Vec::Constant(n, s), Vec::Constant(m, -s), Vec::Constant(m, s));
}

StageFn quad(const RefPoint& r, const Mat& Q, const Mat& R) {
  return [r, Q, R](const Vec& x, const Vec& u) {
    const Vec ex = x - r.x, eu = u - r.u;
    return ex.dot(Q * ex) + eu.dot(R * eu);
  };
}

DynamicalSystem double_integrator() {
  const Mat A = (Mat(2, 2) << 1, 1, 0, 1).finished();
  const Mat B = (Mat(2, 1) << 0.5, 1).finished();
  return DynamicalSystem::linear(A, B);
}

}  // namespace

TEST(LqrResidual, ZeroAtRiccatiPoint) {
  const Mat A = (Mat(2, 2) << 1.2, 0.3, 0, 0.8).finished(), B = (Mat(2, 1) << 0, 1).finished();
  const auto s = solve_dare(A, B, Mat::Identity(2, 2), m1(0.5));
  EXPECT_LT(lqr_residual(A, B, s.K, s.P, s.P, Mat::Identity(2, 2), m1(0.5)).norm(), 1e-9);
}

TEST(LqrResidual, HandArithmetic) {
  const Mat Q = (Mat(2, 2) << 2, 1, 1, 3).finished();
  const Mat r = lqr_residual(Mat::Zero(2, 2), Mat::Ones(2, 1), Mat::Zero(1, 2), Q, Q, Q, m1(1));
  EXPECT_LT(r.norm(), 1e-15);
}

TEST(LqrResidual, ScalarDirectFormula) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 50; ++k) {
    const double a = u(rng), b = u(rng), kk = u(rng), p = std::abs(u(rng)), pp = std::abs(u(rng)), q = std::abs(u(rng)),
                 rr = std::abs(u(rng));
    const double direct = (a + b * kk) * pp * (a + b * kk) - p + q + kk * rr * kk;
    EXPECT_NEAR(lqr_residual(m1(a), m1(b), m1(kk), m1(p), m1(pp), m1(q), m1(rr))(0, 0), direct, 1e-13);
  }
}

TEST(SetpointSynthesis, LinearIntegratorExactPolytopicAlpha) {
  const auto sys = DynamicalSystem::linear(m1(1), m1(1));
  const RefPoint r{v1(0), v1(0)};
  const auto ti = synth_terminal_setpoint(sys, unit_box(1, 1), r, m1(1), m1(1), 0.0);
  const double P = (1 + std::sqrt(5.0)) / 2, K = -(std::sqrt(5.0) - 1) / 2;
  EXPECT_NEAR(ti.P(0, 0), P, 1e-9);
  EXPECT_NEAR(ti.alpha, std::min(P, P / (K * K)), 1e-9);
}

TEST(SetpointSynthesis, AlphaMatchesGridOracleAndScalesQuadratically) {
  const auto sys = DynamicalSystem::linear(m1(1), m1(1));
  const RefPoint r{v1(0), v1(0)};
  const auto s = solve_dare(m1(1), m1(1), m1(1), m1(1));
  const Mat P = s.P, K = s.K;
  const auto a = compute_alpha(sys, unit_box(1, 1), r, P, K, m1(1), m1(1));
  // grid oracle: largest level with every |x| <= sqrt(alpha/P) satisfying both rows
  double best = 0.0;
  for (int i = 1; i <= 200000; ++i) {
    const double al = i * 1e-5;
    const double xm = std::sqrt(al / P(0, 0));
    if (xm <= 1.0 && std::abs(K(0, 0)) * xm <= 1.0) best = al;
  }
  EXPECT_NEAR(a.alpha2, best, 1e-5);
  EXPECT_EQ(a.alpha, a.alpha2);
  const auto half = compute_alpha(sys, unit_box(1, 1, 0.5), r, P, K, m1(1), m1(1));
  EXPECT_NEAR(half.alpha, a.alpha / 4.0, 1e-12);
}

TEST(SetpointSynthesis, CubicPlantSampledDecrease) {
  const auto sys = scalar([](double x, double u) { return x + u + x * x * x; });
  const RefPoint r{v1(0), v1(0)};
  const auto ti = synth_terminal_setpoint(sys, unit_box(1, 1), r, m1(1), m1(1), 0.1);
  EXPECT_GT(ti.alpha, 0.0);
  EXPECT_LT(ti.alpha, 1.0);
  const auto rep = verify_terminal(sys, unit_box(1, 1), ti, quad(r, m1(1), m1(1)));
  EXPECT_LE(rep.decrease, 1e-8);
  EXPECT_LE(rep.contraction, 1e-8);
  EXPECT_LE(rep.constraint, 1e-8);
  EXPECT_LE(rep.invariance, 1e-8);
}

TEST(SetpointSynthesis, BoundaryReferenceRejected) {
  const auto sys = DynamicalSystem::linear(m1(1), m1(1));
  EXPECT_THROW(synth_terminal_setpoint(sys, unit_box(1, 1), RefPoint{v1(1.0), v1(0)}, m1(1), m1(1), 0.0),
               SynthesisError);
}

TEST(SetpointSynthesis, DoubleIntegratorCertificate) {
  const auto sys = double_integrator();
  const auto z = ConstraintSet::box(Vec::Constant(2, -5), Vec::Constant(2, 5), v1(-1), v1(1));
  const RefPoint r{Vec::Zero(2), v1(0)};
  const Mat Q = Mat::Identity(2, 2), R = m1(0.1);
  const auto ti = synth_terminal_setpoint(sys, z, r, Q, R, 0.01);
  const auto rep = verify_terminal(sys, z, ti, quad(r, Q, R));
  EXPECT_LE(rep.decrease, 1e-8);
  EXPECT_LE(rep.contraction, 1e-8);
  EXPECT_LE(rep.constraint, 1e-8);
  EXPECT_LE(lambda_max(lqr_residual(sys.A(), sys.B(), ti.K, ti.P, ti.P, Q + 0.01 * Mat::Identity(2, 2), R)), 1e-8);
}

TEST(TrajectorySynthesis, ConstantReferenceReducesToSetpoint) {
  const auto sys = scalar([](double x, double u) { return x + u + 0.1 * x * x * x; });
  const RefPoint r{v1(0.2), v1(-0.1 * 0.008)};
  const auto z = unit_box(1, 1);
  const auto st = synth_terminal_setpoint(sys, z, r, m1(1), m1(1), 0.05);
  const auto tv = synth_terminal_trajectory(sys, z, Reference::trajectory({r, r, r, r}), m1(1), m1(1), 0.05);
  for (long t = 0; t < 6; ++t) {
    EXPECT_NEAR(tv.P_at(t)(0, 0), st.P(0, 0), 1e-9);
    EXPECT_NEAR(tv.K_at(t)(0, 0), st.K(0, 0), 1e-9);
  }
  EXPECT_NEAR(tv.alpha, st.alpha, 1e-6 * st.alpha);
}

TEST(TrajectorySynthesis, PeriodicScalarIsPeriodicAndSatisfiesResidual) {
  // x+ = x + u + 0.2 sin(x): 2-periodic orbit x = (0.5, -0.5)
  auto f = [](double x, double u) { return x + u + 0.2 * std::sin(x); };
  const auto sys = scalar(f);
  const double x0 = 0.5, x1 = -0.5;
  const double u0 = x1 - x0 - 0.2 * std::sin(x0), u1 = x0 - x1 - 0.2 * std::sin(x1);
  const auto ref = Reference::periodic({{v1(x0), v1(u0)}, {v1(x1), v1(u1)}});
  ASSERT_TRUE(ref.consistent(sys));
  const auto z = ConstraintSet::box(v1(-2), v1(2), v1(-2), v1(2));
  const double eps = 0.05;
  const auto ti = synth_terminal_trajectory(sys, z, ref, m1(1), m1(1), eps);
  EXPECT_NEAR(ti.P_at(0)(0, 0), ti.P_at(2)(0, 0), 1e-8);
  EXPECT_NEAR(ti.P_at(1)(0, 0), ti.P_at(3)(0, 0), 1e-8);
  for (long t = 0; t < 2; ++t) {
    const auto J = sys.jacobians(ref.at(t).x, ref.at(t).u);
    const Mat res = lqr_residual(J.A, J.B, ti.K_at(t), ti.P_at(t), ti.P_at(t + 1), m1(1 + eps), m1(1));
    EXPECT_LE(lambda_max(res), 1e-8);
    const auto rep = verify_terminal(sys, z, ti, quad(ref.at(t), m1(1), m1(1)), 1000, 7u, t);
    EXPECT_LE(rep.decrease, 1e-8);
    EXPECT_LE(rep.constraint, 1e-8);
    EXPECT_LE(rep.invariance, 1e-8);
  }
}

TEST(ParametrizedSynthesis, LinearNodesIdentical) {
  const auto sys = double_integrator();
  ParamGrid g;
  g.lo = v1(-2);
  g.hi = v1(2);
  g.nodes = {5};
  g.point = [](const Vec& th) { return RefPoint{(Vec(2) << th[0], 0).finished(), v1(0)}; };
  g.param_of = [](const RefPoint& r) { return v1(r.x[0]); };
  const auto z = ConstraintSet::box(Vec::Constant(2, -5), Vec::Constant(2, 5), v1(-1), v1(1));
  ParamSynthOptions o;
  o.verify_samples = 500;
  const auto ti = synth_terminal_parametrized(sys, z, g, Mat::Identity(2, 2), m1(1), 0.1, o);
  for (const auto& P : ti.P_nodes) EXPECT_LT((P - ti.P_nodes[0]).norm(), 1e-12);
  EXPECT_GT(ti.alpha1, 0.0);
}

TEST(ParametrizedSynthesis, SineSteadyStateManifoldVerifies) {
  const auto sys = scalar([](double x, double u) { return x + u + 0.1 * std::sin(x); });
  ParamGrid g;
  g.lo = v1(-2);
  g.hi = v1(2);
  g.nodes = {3};
  g.point = [](const Vec& th) { return RefPoint{v1(th[0]), v1(-0.1 * std::sin(th[0]))}; };
  g.param_of = [](const RefPoint& r) { return v1(r.x[0]); };
  const auto z = ConstraintSet::box(v1(-4), v1(4), v1(-2), v1(2));
  const auto ti = synth_terminal_parametrized(sys, z, g, m1(1), m1(1), 0.2);
  // exact at nodes
  for (int i = 0; i < ti.grid->count(); ++i) {
    const RefPoint rp = ti.grid->point(ti.grid->node(i));
    const auto J = sys.jacobians(rp.x, rp.u);
    const auto s = solve_dare(J.A, J.B, m1(1.2), m1(1));
    EXPECT_NEAR(ti.P_param(rp)(0, 0), s.P(0, 0), 1e-12);
  }
  // independent re-verification over 10^4 pairs
  std::mt19937 rng(123);
  std::uniform_real_distribution<double> ud(-2, 2);
  for (int k = 0; k < 10000; ++k) {
    const RefPoint rp = g.point(v1(ud(rng)));
    const auto J = sys.jacobians(rp.x, rp.u);
    const Mat P = ti.P_param(rp);
    EXPECT_LE(lambda_max(lqr_residual(J.A, J.B, ti.K_param(rp), P, P, m1(1.1), m1(1))), 0.0);
  }
}

TEST(ParametrizedSynthesis, FiveStateVehicleThreeDimensionalGrid) {
  // kinematic vehicle: (px, py, heading, speed, steering), inputs (accel, steering rate)
  const double dt = 0.1, Lw = 2.0;
  auto f = [=](const Vec& x, const Vec& u) {
    Vec n(5);
    n << x[0] + dt * x[3] * std::cos(x[2]), x[1] + dt * x[3] * std::sin(x[2]),
        x[2] + dt * x[3] * std::tan(x[4]) / Lw, x[3] + dt * u[0], x[4] + dt * u[1];
    return n;
  };
  const DynamicalSystem sys(5, 2, 5, f);
  ParamGrid g;
  g.lo = (Vec(3) << -0.5, 1.0, -0.02).finished();
  g.hi = (Vec(3) << 0.5, 3.0, 0.02).finished();
  g.nodes = {3, 3, 3};
  g.point = [](const Vec& th) {
    Vec x(5);
    x << 0, 0, th[0], th[1], th[2];
    return RefPoint{x, Vec::Zero(2)};
  };
  g.param_of = [](const RefPoint& r) { return (Vec(3) << r.x[2], r.x[3], r.x[4]).finished(); };
  g.successors = [=](const Vec& th, std::mt19937&) {
    return std::vector<Vec>{(Vec(3) << th[0] + dt * th[1] * std::tan(th[2]) / Lw, th[1], th[2]).finished()};
  };
  ParamSynthOptions o;
  o.verify_samples = 2000;
  const auto z = ConstraintSet::box(Vec::Constant(5, -100), Vec::Constant(5, 100), Vec::Constant(2, -10),
                                    Vec::Constant(2, 10));
  const auto ti = synth_terminal_parametrized(sys, z, g, Mat::Identity(5, 5), 0.1 * Mat::Identity(2, 2), 2.0, o);
  EXPECT_EQ(ti.P_common.rows(), 5);
  EXPECT_GE(ti.grid->count(), 27);
}

TEST(EconomicSynthesis, TrackingCostGivesZeroCorrection) {
  const auto sys = double_integrator();
  const auto z = ConstraintSet::box(Vec::Constant(2, -5), Vec::Constant(2, 5), v1(-1), v1(1));
  const RefPoint r{Vec::Zero(2), v1(0)};
  const Mat Q = Mat::Identity(2, 2), R = m1(0.1);
  const auto st = synth_terminal_setpoint(sys, z, r, Q, R, 0.01);
  EconomicSynthOptions o;
  o.epsilon = 0.01;
  const auto ec = synth_terminal_economic(sys, z, r, quad(r, Q, R), st.K, o);
  EXPECT_LT(ec.p.norm(), 1e-7);
  EXPECT_LT((ec.P - st.P).norm(), 1e-5 * st.P.norm());
}

TEST(EconomicSynthesis, LinearCorrectionAndFirstOrderCancellation) {
  const auto sys = DynamicalSystem::linear(m1(0.5), m1(1));
  const auto z = ConstraintSet::box(v1(-5), v1(5), v1(-3), v1(3));
  const RefPoint r{v1(-2), v1(-1)};  // minimizer of x + u^2 over steady states x = 2u
  StageFn ell = [](const Vec& x, const Vec& u) { return x[0] + u[0] * u[0]; };
  const auto tr = synth_terminal_setpoint(sys, z, r, m1(1), m1(1), 0.0);
  const auto ec = synth_terminal_economic(sys, z, r, ell, tr.K);
  const double acl = 0.5 + tr.K(0, 0);
  const double g = 1.0 + tr.K(0, 0) * 2.0 * r.u[0];
  EXPECT_NEAR(ec.p[0], -g / (acl - 1.0), 1e-8);
  const double lbar = ell(r.x, r.u);
  auto D = [&](double e) {
    const Vec x = r.x + v1(e);
    const Vec u = ec.law(x);
    return ec.value(sys.f(x, u)) - ec.value(x) + ell(x, u) - lbar;
  };
  const double h = 1e-5;
  EXPECT_NEAR((D(h) - D(-h)) / (2 * h), 0.0, 1e-8);
  // condition on samples of the terminal set
  const auto E = detail::unit_ball_samples(1, 1000, 3u);
  for (const auto& w : E) {
    const double e = w[0] * std::sqrt(ec.alpha / ec.P(0, 0));
    EXPECT_LE(D(e), 1e-8);
  }
}

TEST(ShiftTerminalCost, PeriodOneIsIdentity) {
  const auto ref = Reference::periodic({{v1(1), v1(0)}});
  EconFnT ell = [](const Vec& x, const Vec&, long) { return x[0] * 3; };
  auto V = [](const Vec& x, long) { return x[0] * x[0]; };
  const auto Vt = shift_terminal_cost(V, ref, ell);
  EXPECT_EQ(Vt(v1(2), 5), 4.0);
}

TEST(ShiftTerminalCost, TwoPeriodTelescoping) {
  const double a = 3.0, b = -1.0;
  const auto ref = Reference::periodic({{v1(0), v1(0)}, {v1(1), v1(0)}});
  EconFnT ell = [=](const Vec& x, const Vec&, long) { return x[0] == 0.0 ? a : b; };
  EXPECT_NEAR(shift_offset(ref, ell, 0) - shift_offset(ref, ell, 1), (a - b) / 2, 1e-15);
  // offset(t+1) - offset(t) + ell(r_t) = mean over the period
  for (long t = 0; t < 4; ++t) {
    const RefPoint& rt = ref.at(t);
    EXPECT_NEAR(shift_offset(ref, ell, t + 1) - shift_offset(ref, ell, t) + ell(rt.x, rt.u, t), (a + b) / 2, 1e-15);
  }
}

TEST(ShiftTerminalCost, SampledSlackOnPeriodicScalarExample) {
  const auto sys = DynamicalSystem::linear(m1(0.5), m1(1));
  const auto z = ConstraintSet::box(v1(-5), v1(5), v1(-5), v1(5));
  const auto ref = Reference::periodic({{v1(1), v1(-1.5)}, {v1(-1), v1(1.5)}});
  ASSERT_TRUE(ref.consistent(sys));
  EconFnT ell = [](const Vec& x, const Vec& u, long t) {
    const double y = (t % 2 == 0) ? 2.0 : -2.0;
    return (x[0] - y) * (x[0] - y) + 0.5 * u[0] * u[0] + x[0];
  };
  const auto ks = solve_periodic_riccati({m1(0.5), m1(0.5)}, {m1(1), m1(1)}, m1(1), m1(1));
  const auto ti = synth_terminal_economic_periodic(sys, z, ref, ell, ks.K);
  const auto Vt = shift_terminal_cost([&](const Vec& x, long t) { return ti.value(x, t); }, ref, ell);
  const double lbar = 0.5 * (ell(ref.at(0).x, ref.at(0).u, 0) + ell(ref.at(1).x, ref.at(1).u, 1));
  const auto ball = detail::unit_ball_samples(1, 1000, 5u);
  double worst = -kInf;
  for (long t = 0; t < 2; ++t)
    for (const auto& w : ball) {
      const Vec x = ref.at(t).x + w * std::sqrt(ti.alpha / ti.P_at(t)(0, 0));
      const Vec u = ti.law(x, t);
      worst = std::max(worst, Vt(sys.f(x, u), t + 1) - Vt(x, t) + ell(x, u, t) - lbar);
    }
  EXPECT_LE(worst, 1e-8);
}

TEST(TerminalEquality, Definitional) {
  const auto sys = double_integrator();
  const auto ti = terminal_equality({Vec::Zero(2), v1(0)}, &sys);
  EXPECT_EQ(ti.alpha, 0.0);
  EXPECT_EQ(ti.p.norm(), 0.0);
  EXPECT_EQ(ti.value(Vec::Ones(2)), 0.0);
  EXPECT_EQ(ti.controllability_index, 2);
  EXPECT_TRUE(ti.contains(Vec::Zero(2)));
  EXPECT_FALSE(ti.contains(Vec::Ones(2)));
}

TEST(EllipsoidInclusion, IntervalGeometry) {
  EXPECT_TRUE(ellipsoid_inclusion(v1(0), 1, v1(0), 2, m1(1)));
  EXPECT_TRUE(ellipsoid_inclusion(v1(0), 1, v1(1), 4, m1(1)));
  EXPECT_FALSE(ellipsoid_inclusion(v1(0), 1, v1(1), 3.9, m1(1)));
}

TEST(EllipsoidInclusion, NoFalsePositivesAgainstBoundarySampling) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-1, 1), ua(0.05, 2);
  const auto ball = detail::unit_ball_samples(2, 400, 1u);
  int positives = 0;
  for (int k = 0; k < 300; ++k) {
    Mat M(2, 2);
    M << u(rng), u(rng), u(rng), u(rng);
    const Mat P = M * M.transpose() + 0.2 * Mat::Identity(2, 2);
    const Vec c1 = (Vec(2) << u(rng), u(rng)).finished(), c2 = (Vec(2) << u(rng), u(rng)).finished();
    const double a1 = ua(rng), a2 = ua(rng) * 4;
    if (!ellipsoid_inclusion(c1, a1, c2, a2, P)) continue;
    ++positives;
    const auto E = detail::ellipsoid_samples(P, ball);
    for (const auto& e : E) {
      const Vec x = c1 + std::sqrt(a1) * e / std::max(1e-12, std::sqrt(e.dot(P * e)));
      const Vec d = x - c2;
      EXPECT_LE(d.dot(P * d), a2 * (1 + 1e-12));
    }
  }
  EXPECT_GT(positives, 10);
}
