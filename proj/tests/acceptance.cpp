// Acceptance suite: one PASS/FAIL line per criterion. Exit status 1 when any criterion fails.
//
//   acceptance [--scenarios DIR] [--only K]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "dynop/io.hpp"
#include "dynop/sim.hpp"

#ifndef DYNOP_SCENARIO_DIR
#define DYNOP_SCENARIO_DIR "scenarios"
#endif

using namespace dynop;

namespace {

std::filesystem::path g_dir = DYNOP_SCENARIO_DIR;
std::map<std::string, ClosedLoopTrace> g_runs;  // first run of each scenario file, re-checked for determinism

Mat m1(double v) { return Mat::Constant(1, 1, v); }
Vec v1(double v) { return Vec::Constant(1, v); }

LoadedScenario load(const std::string& name) { return load_scenario(g_dir / (name + ".json")); }

ClosedLoopTrace run(const Scenario& sc) { return run_closed_loop(sc); }

const ClosedLoopTrace& run(const std::string& name) {
  auto it = g_runs.find(name);
  if (it == g_runs.end()) it = g_runs.emplace(name, run_closed_loop(load(name).scenario)).first;
  return it->second;
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.6g", v);
  return b;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------------------------

Outcome c01_riccati() {
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double err = std::abs(solve_dare(m1(1), m1(1), m1(1), m1(1)).P(0, 0) - golden);
  std::mt19937 rng(2024);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> dn(1, 6), dm(1, 3);
  double worst = 0.0;
  int solved = 0;
  for (int k = 0; k < 100; ++k) {
    const int n = dn(rng), m = dm(rng);
    const Mat A = Mat::NullaryExpr(n, n, [&]() { return 0.6 * nd(rng); });
    const Mat B = Mat::NullaryExpr(n, m, [&]() { return nd(rng); });
    const Mat G = Mat::NullaryExpr(n, n, [&]() { return nd(rng); });
    const Mat Q = G * G.transpose() + 0.1 * Mat::Identity(n, n);
    const Mat R = Mat::Identity(m, m);
    const auto s = solve_dare(A, B, Q, R);
    worst = std::max(worst, dare_residual(A, B, Q, R, s.P).norm() / (1.0 + s.P.norm()));
    ++solved;
  }
  return {err <= 1e-9 && worst <= 1e-9 && solved == 100,
          "|P-(1+sqrt5)/2|=" + fmt(err) + ", worst relative residual over 100 instances " + fmt(worst)};
}

Outcome c02_terminal_certificate() {
  auto quad = [](const RefPoint& r, const Mat& Q, const Mat& R) -> StageFn {
    return [r, Q, R](const Vec& x, const Vec& u) {
      const Vec ex = x - r.x, eu = u - r.u;
      return ex.dot(Q * ex) + eu.dot(R * eu);
    };
  };
  double worst = -kInf;
  auto take = [&](const CertificateReport& c) {
    worst = std::max({worst, c.decrease, c.contraction, c.constraint, c.invariance});
  };
  {
    const auto sys = bench::scalar_cubic();
    const auto z = bench::scalar_cubic_box();
    const RefPoint r{v1(0), v1(0)};
    const auto ti = synth_terminal_setpoint(sys, z, r, m1(1), m1(1), 0.1);
    take(verify_terminal(sys, z, ti, quad(r, m1(1), m1(1)), 1000, 1u));
  }
  {
    const auto sys = bench::double_integrator();
    const auto z = bench::double_integrator_box();
    const RefPoint r{Vec::Zero(2), v1(0)};
    const auto ti = synth_terminal_setpoint(sys, z, r, Mat::Identity(2, 2), m1(0.1), 0.01);
    take(verify_terminal(sys, z, ti, quad(r, Mat::Identity(2, 2), m1(0.1)), 1000, 2u));
  }
  // time-varying design along a 2-periodic orbit of x+ = x + u + 0.2 sin x
  double tv_res = -kInf;
  {
    const DynamicalSystem sys(1, 1, 1, [](const Vec& x, const Vec& u) { return v1(x[0] + u[0] + 0.2 * std::sin(x[0])); });
    const double a = 0.5, b = -0.5;
    const auto ref = Reference::periodic({{v1(a), v1(b - a - 0.2 * std::sin(a))}, {v1(b), v1(a - b - 0.2 * std::sin(b))}});
    const auto z = ConstraintSet::box(v1(-2), v1(2), v1(-2), v1(2));
    const double eps = 0.05;
    const auto ti = synth_terminal_trajectory(sys, z, ref, m1(1), m1(1), eps);
    for (long t = 0; t < 4; ++t) {
      const auto J = sys.jacobians(ref.at(t).x, ref.at(t).u);
      tv_res = std::max(tv_res,
                        lambda_max(lqr_residual(J.A, J.B, ti.K_at(t), ti.P_at(t), ti.P_at(t + 1), m1(1 + eps), m1(1))));
      take(verify_terminal(sys, z, ti, quad(ref.at(t), m1(1), m1(1)), 1000, 3u, t));
    }
  }
  return {worst <= 1e-8 && tv_res <= 1e-8,
          "worst sampled violation " + fmt(worst) + " (cubic, double integrator, periodic), time-varying residual " +
              fmt(tv_res)};
}

Outcome c03_stabilizing() {
  std::ostringstream os;
  bool ok = true;
  for (const std::string name : {"di_stabilizing", "cubic_stabilizing"}) {
    const auto& tr = run(name);
    const bool feas = tr.status == "completed" && tr.records.size() == 500 && tr.metrics.infeasible_steps == 0;
    const double J0 = tr.records.front().J;
    const double gap = tr.metrics.J_cl - J0;
    ok = ok && feas && tr.metrics.max_decrease_residual <= 1e-6 && gap <= 1e-6;
    os << name << ": " << (feas ? "feasible" : tr.status) << ", max dJ+l " << fmt(tr.metrics.max_decrease_residual)
       << ", sum l - J0 " << fmt(gap) << "; ";
  }
  return {ok, os.str()};
}

// Tightened steady-state range of the double integrator setpoint scenarios: rows of Z at (theta, 0, 0)
// shrunk by the terminal tightening at the smallest admissible scaling.
struct SteadyOracle {
  ConstraintSet z;
  Vec cn;
  double sigma;
  double S;
  bool feasible(double th) const {
    Vec w = Vec::Zero(3);
    w[0] = th;
    return ((z.H() * w + cn * sigma - z.b_at(0)).array() <= 0.0).all();
  }
  // grid scan, then bisection on the interval ends and a ternary search on the offset
  double argmin(double yd) const {
    double lo = kInf, hi = -kInf;
    for (int i = 0; i <= 20000; ++i) {
      const double th = -10.0 + 20.0 * i / 20000;
      if (feasible(th)) {
        lo = std::min(lo, th);
        hi = std::max(hi, th);
      }
    }
    auto edge = [&](double in, double out) {
      for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (in + out);
        (feasible(mid) ? in : out) = mid;
      }
      return in;
    };
    lo = edge(lo, lo - 1e-3);
    hi = edge(hi, hi + 1e-3);
    double a = lo, b = hi;
    auto f = [&](double th) { return S * (th - yd) * (th - yd); };
    for (int k = 0; k < 300; ++k) {
      const double m1_ = a + (b - a) / 3, m2_ = b - (b - a) / 3;
      (f(m1_) <= f(m2_) ? b : a) = (f(m1_) <= f(m2_) ? m2_ : m1_);
    }
    return 0.5 * (a + b);
  }
};

SteadyOracle steady_oracle(const MpcProblemSpec& sp) {
  const auto& ti = *sp.terminal;
  return {sp.z, tightening_norms(sp.z, ti.P_common.size() ? ti.P_common : ti.P, ti.K), std::sqrt(sp.alpha_min),
          sp.S(0, 0)};
}

Outcome c04_setpoint() {
  const auto base = load("di_setpoint");
  const SteadyOracle orc = steady_oracle(base.scenario.spec);
  const json yd = base.resolved.at("yd");
  int infeasible = 0, misses = 0;
  double worst = 0.0;
  for (unsigned seed = 1; seed <= 100; ++seed) {
    json sig = yd;
    sig["random-steps"]["seed"] = seed;
    Scenario sc = base.scenario;
    sc.seed = seed;
    sc.ex.yd = signal_from_json(sig, base.plant, seed);
    const auto tr = run(sc);
    if (tr.status != "completed" || tr.metrics.infeasible_steps) {
      ++infeasible;
      continue;
    }
    const long every = yd["random-steps"]["every"].get<long>();
    for (long end = every; end <= static_cast<long>(tr.records.size()); end += every) {
      const auto& last = tr.records[end - 1];
      const double th = orc.argmin(last.yd[0]);
      const Vec xs = (Vec(2) << th, 0.0).finished();
      const double e = (last.x - xs).norm();
      worst = std::max(worst, e);
      if (e >= 1e-4) ++misses;
    }
  }
  return {infeasible == 0 && misses == 0, "100 target sequences: " + std::to_string(infeasible) +
                                              " infeasible runs, worst |x - x*| at segment ends " + fmt(worst)};
}

Outcome c05_lemma1() {
  const auto L = load("di_setpoint_const");
  const MpcProblemSpec sp = L.scenario.spec;
  const SteadyOracle orc = steady_oracle(sp);
  const Mat Q = sp.cost.Q();
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ux(-4, 4), uv(-1, 1), uy(-8, 8);
  int used = 0, tried = 0, skipped = 0;
  double c = kInf;
  while (used < 1000 && tried < 5000) {
    ++tried;
    const Vec x = (Vec(2) << ux(rng), uv(rng)).finished();
    const double yd = uy(rng);
    const auto s = solve_setpoint_tracking_mpc(sp, x, v1(yd));
    if (!s.feasible) continue;
    const Vec g = (Vec(3) << orc.argmin(yd), 0.0, 0.0).finished();
    const Vec rs = concat(s.r[0].x, s.r[0].u);
    const double den = (rs - g).squaredNorm();
    ++used;
    if (den < 1e-10) {
      ++skipped;
      continue;
    }
    const Vec e = x - s.r[0].x;
    c = std::min(c, e.dot(Q * e) / den);
  }
  return {used >= 1000 && std::isfinite(c) && c > 0.0,
          "c = " + fmt(c) + " over " + std::to_string(used) + " feasible samples (" + std::to_string(skipped) +
              " with r* = g(y*))"};
}

// Offset-optimal periodic orbit over the tightened set, as a direct QP on (x_j, u_j).
double periodic_offset_oracle(const MpcProblemSpec& sp, const std::vector<Vec>& yd) {
  const int n = sp.sys.n(), m = sp.sys.m(), T = sp.T, w = n + m;
  const auto& ti = *sp.terminal;
  const Vec cn = tightening_norms(sp.z, ti.P_common.size() ? ti.P_common : ti.P, ti.K);
  const Mat C = sp.sys.C(), S = sp.S;
  QpProblem qp;
  qp.H = Mat::Zero(T * w, T * w);
  qp.g = Vec::Zero(T * w);
  double cst = 0.0;
  const int rows = static_cast<int>(sp.z.H().rows());
  qp.A_eq = Mat::Zero(T * n, T * w);
  qp.b_eq = Vec::Zero(T * n);
  qp.A_in = Mat::Zero(T * rows, T * w);
  qp.b_in = Vec::Zero(T * rows);
  for (int j = 0; j < T; ++j) {
    qp.H.block(j * w, j * w, n, n) = 2.0 * C.transpose() * S * C;
    qp.g.segment(j * w, n) = -2.0 * C.transpose() * S * yd[j];
    cst += yd[j].dot(S * yd[j]);
    const int jn = (j + 1) % T;
    qp.A_eq.block(j * n, jn * w, n, n) += Mat::Identity(n, n);
    qp.A_eq.block(j * n, j * w, n, n) -= sp.sys.A();
    qp.A_eq.block(j * n, j * w + n, n, m) -= sp.sys.B();
    qp.A_in.block(j * rows, j * w, rows, w) = sp.z.H();
    qp.b_in.segment(j * rows, rows) = sp.z.b_at(j) - cn * std::sqrt(sp.alpha_min);
  }
  const auto rep = solve_qp(qp);
  if (!rep.optimal()) throw NumericalError("periodic offset oracle did not converge");
  return rep.objective + cst;
}

Outcome c06_periodic() {
  const auto L = load("di_periodic");
  const auto& tr = run("di_periodic");
  const MpcProblemSpec& sp = L.scenario.spec;
  const int T = sp.T;
  const double oracle = periodic_offset_oracle(sp, L.scenario.ex.yd.window(0, T));
  double vo = 0.0;
  const int K = static_cast<int>(tr.records.size());
  for (int k = K - T; k < K; ++k) {
    const auto& r = tr.records[k];
    const double e = (sp.sys.C() * r.r - r.yd)[0];
    vo += sp.S(0, 0) * e * e;
  }
  const double gap = std::abs(vo - oracle);
  const auto &a = run("di_periodic_t1"), &b = run("di_setpoint_const");
  const double red = compare_traces(a, b, TraceMetric::MaxStateDifference).difference;
  return {tr.status == "completed" && gap < 1e-4 && red <= 1e-8,
          "V_o closed loop " + fmt(vo) + " vs oracle " + fmt(oracle) + " (gap " + fmt(gap) +
              "), T=1 vs setpoint max state difference " + fmt(red)};
}

Outcome c07_planner() {
  const auto& mono = run("di_periodic");
  const int T = load("di_periodic").scenario.spec.T;
  const int K = static_cast<int>(mono.records.size());
  auto limit = [&](long t) {
    const long base = K - T;
    return mono.records[base + ((t - base) % T + T) % T].x;
  };
  auto transient = [&](const ClosedLoopTrace& tr) {
    double acc = 0.0;
    for (const auto& r : tr.records) acc += (r.x - limit(r.t)).norm();
    return acc;
  };
  bool ok = mono.status == "completed";
  std::ostringstream os;
  const double a0 = transient(mono);
  os << "transient sum |x - limit orbit|: monolithic " << fmt(a0);
  double prev = a0;
  for (int M : {2, 5}) {
    const auto& tr = run("di_planner_m" + std::to_string(M));
    int updates = 0, failed = 0;
    for (const auto& r : tr.records) {
      if (r.planner >= 0) ++updates;
      if (r.planner == 0) ++failed;
    }
    const double a = transient(tr);
    ok = ok && tr.status == "completed" && tr.records.size() == 500 && updates > 0 && failed == 0 && a > prev;
    os << ", M=" << M << " " << fmt(a) << " (" << tr.status << ", " << updates << " planner updates, " << failed
       << " candidate failures)";
    prev = a;
  }
  return {ok, os.str()};
}

Outcome c08_economic() {
  const auto L = load("econ_equality");
  const auto& sp = L.scenario.spec;
  const StageCost cost = sp.cost;
  const auto ss = optimal_steady_state(sp.sys, sp.z, [cost](const Vec& x, const Vec& u) {
    return cost.economic(x, u, Vec());
  });
  bool ok = true;
  std::ostringstream os;
  os << "l_bar = " << fmt(ss.value);
  for (const std::string name : {"econ_equality", "econ_terminal"}) {
    const auto& tr = run(name);
    ok = ok && tr.status == "completed" && tr.records.size() == 1000 && tr.metrics.tail_average <= ss.value + 1e-6;
    os << "; " << name << " tail average " << fmt(tr.metrics.tail_average) << " (full " << fmt(tr.metrics.average)
       << ")";
  }
  return {ok, os.str()};
}

Outcome c09_shifted() {
  // sampled slack of the shifted terminal cost on a 2-periodic scalar example
  const auto sys = DynamicalSystem::linear(m1(0.5), m1(1));
  const auto z = ConstraintSet::box(v1(-5), v1(5), v1(-5), v1(5));
  const auto ref = Reference::periodic({{v1(1), v1(-1.5)}, {v1(-1), v1(1.5)}});
  EconFnT ell = [](const Vec& x, const Vec& u, long t) {
    const double y = (t % 2 == 0) ? 2.0 : -2.0;
    return (x[0] - y) * (x[0] - y) + 0.5 * u[0] * u[0] + x[0];
  };
  const auto ks = solve_periodic_riccati({m1(0.5), m1(0.5)}, {m1(1), m1(1)}, m1(1), m1(1));
  const auto ti = synth_terminal_economic_periodic(sys, z, ref, ell, ks.K);
  const auto Vt = shift_terminal_cost([&](const Vec& x, long t) { return ti.value(x, t); }, ref, ell);
  const double lbar = 0.5 * (ell(ref.at(0).x, ref.at(0).u, 0) + ell(ref.at(1).x, ref.at(1).u, 1));
  double slack = kInf;
  for (long t = 0; t < 2; ++t)
    for (const auto& w : detail::unit_ball_samples(1, 1000, 5u)) {
      const Vec x = ref.at(t).x + w * std::sqrt(ti.alpha / ti.P_at(t)(0, 0));
      const Vec u = ti.law(x, t);
      slack = std::min(slack, -(Vt(sys.f(x, u), t + 1) - Vt(x, t) + ell(x, u, t) - lbar));
    }
  const auto &un = run("cx_unshifted"), &sh = run("cx_shifted");
  const int T = load("cx_shifted").scenario.spec.T;
  const double ref_avg = un.records.back().kappa / T, bound = sh.records.back().kappa / T;
  const bool ok = slack >= -1e-8 && un.status == "completed" && sh.status == "completed" &&
                  un.metrics.average > ref_avg + 1e-6 && sh.metrics.average <= bound + 1e-6;
  return {ok, "sampled slack " + fmt(slack) + "; unshifted average " + fmt(un.metrics.average) +
                  " vs reference average " + fmt(ref_avg) + "; shifted average " + fmt(sh.metrics.average) +
                  " vs kappa/T " + fmt(bound)};
}

Outcome c10_self_tuning() {
  const auto& tr = run("selftuning");
  double rise = -kInf;
  for (size_t k = 1; k < tr.records.size(); ++k) rise = std::max(rise, tr.records[k].kappa - tr.records[k - 1].kappa);
  const double kinf = tr.records.back().kappa;
  const auto& sw = run("selftuning_switch");
  const bool ok = tr.status == "completed" && rise <= 1e-9 && tr.metrics.tail_average <= kinf + 1e-6 &&
                  sw.status == "completed" && sw.records.size() == 1000 && sw.metrics.infeasible_steps == 0;
  return {ok, "max kappa increase " + fmt(rise) + ", tail average " + fmt(tr.metrics.tail_average) +
                  " vs kappa_inf " + fmt(kinf) + "; random y_e switches: " + sw.status + ", " +
                  std::to_string(sw.metrics.infeasible_steps) + " infeasible steps"};
}

// Minimum of c'z over the vertices of {G z <= h}.
double vertex_min(const Vec& c, const Mat& G, const Vec& h) {
  const int n = static_cast<int>(c.size()), m = static_cast<int>(G.rows());
  std::vector<bool> pick(m, false);
  std::fill(pick.begin(), pick.begin() + n, true);
  double best = kInf;
  do {
    Mat S(n, n);
    Vec r(n);
    int k = 0;
    for (int i = 0; i < m; ++i)
      if (pick[i]) {
        S.row(k) = G.row(i);
        r[k++] = h[i];
      }
    Eigen::FullPivLU<Mat> lu(S);
    if (lu.rank() < n) continue;
    const Vec z = lu.solve(r);
    if ((G * z - h).maxCoeff() <= 1e-10) best = std::min(best, c.dot(z));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

// Relaxed-DP constraints for N = 2..4 over (lambda_1..lambda_{N-1}, nu), written out by hand.
double brute_alpha(double g, int N) {
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
  if (N == 2) {
    rows = {{-1, 0}, {1, 0}, {-g, 1}};
    rhs = {0, g - 1, 0};
  } else if (N == 3) {
    rows = {{-1, 0, 0}, {0, -1, 0}, {1, 1, 0}, {1 - g, 1, 0}, {-g, 0, 1}, {-1, -g, 1}};
    rhs = {0, 0, g - 1, 0, 0, 0};
  } else {
    rows = {{-1, 0, 0, 0}, {0, -1, 0, 0}, {0, 0, -1, 0}, {1, 1, 1, 0},   {1 - g, 1, 1, 0},
            {0, 1 - g, 1, 0}, {-g, 0, 0, 1}, {-1, -g, 0, 1}, {-1, -1, -g, 1}};
    rhs = {0, 0, 0, g - 1, 0, 0, 0, 0, 0};
  }
  Mat G(rows.size(), N);
  Vec h(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < N; ++j) G(i, j) = rows[i][j];
    h[i] = rhs[i];
  }
  Vec c = Vec::Ones(N);
  c[N - 1] = -1.0;
  return 1.0 + vertex_min(c, G, h);
}

Outcome c11_horizon() {
  double oracle_err = 0.0, one_err = 0.0;
  for (double g : {1.3, 2.0, 3.0, 5.0, 7.5})
    for (int N = 2; N <= 4; ++N) oracle_err = std::max(oracle_err, std::abs(alpha_from_lp(g, N) - brute_alpha(g, N)));
  for (int N = 1; N <= 20; ++N) one_err = std::max(one_err, std::abs(alpha_from_lp(1.0, N) - 1.0));
  bool mono = true, order = true;
  std::ostringstream os;
  for (double g : {2.0, 3.0, 5.0, 10.0}) {
    double prev = -kInf;
    for (int N = 1; N <= 40; ++N) {
      const double a = alpha_from_lp(g, N);
      if (a < prev - 1e-10) mono = false;
      prev = a;
    }
    const int lp = min_stabilizing_horizon(g, HorizonMethod::Lp), dec = min_stabilizing_horizon(g, HorizonMethod::Decay),
              sim = min_stabilizing_horizon(g, HorizonMethod::Simple);
    if (!(lp <= dec && dec <= sim)) order = false;
    os << " g=" << g << ":" << lp << "/" << dec << "/" << sim;
  }
  return {oracle_err <= 1e-8 && one_err <= 1e-12 && mono && order,
          "vertex oracle error " + fmt(oracle_err) + ", gamma=1 error " + fmt(one_err) +
              ", monotone " + (mono ? "yes" : "no") + ", N lp/decay/simple" + os.str()};
}

Outcome c12_chain() {
  const auto shortL = load("chain_short");
  const auto& sh = run("chain_short");
  const auto cert = load("chain_certified");
  const auto& sys = cert.scenario.spec.sys;
  const int n = sys.n();
  const Mat Qs = 1e-3 * Mat::Identity(n, n);
  std::mt19937 rng(12);
  std::normal_distribution<double> nd;
  std::vector<Vec> x0s;
  for (int k = 0; k < 100; ++k) x0s.push_back(Vec::NullaryExpr(n, [&]() { return nd(rng); }));
  bool ok = sh.status == "diverged" && sh.first_divergence > 0;
  std::ostringstream os;
  os << "N=" << shortL.scenario.linear_mpc.N << " diverged at step " << sh.first_divergence << "; certified N:";
  long prev = std::numeric_limits<long>::max();
  int divergences = 0;
  for (double R : {1e-2, 1e-1, 1.0, 10.0}) {
    const auto h = certify_detectable_horizon(sys.A(), sys.B(), sys.C(), m1(1), m1(R), Qs);
    ok = ok && h.n_bar > 0 && h.n_bar <= prev;
    prev = h.n_bar;
    os << " R=" << R << ":" << h.n_bar;
    json doc = cert.resolved;
    doc["cost"]["R"] = R;
    doc["controller"]["N"] = h.n_bar;
    for (const Vec& x0 : x0s) {
      doc["x0"] = to_json(x0);
      const auto tr = run(scenario_from_json(doc, g_dir).scenario);
      if (tr.status == "diverged") ++divergences;
    }
  }
  ok = ok && divergences == 0;
  os << "; divergences over 100 initial conditions per R: " << divergences;
  return {ok, os.str()};
}

Outcome c13_relaxed_clf() {
  // x+ = 1.2x + u, l = x^2 + u^2, rollout terminal cost with u = -0.8x over M steps
  const double a = 1.2, k = -0.8, acl = a + k;
  auto f = [&](const Vec& x, const Vec& u) { return Vec(a * x + u); };
  auto ell = [](const Vec& x, const Vec& u) { return x.squaredNorm() + u.squaredNorm(); };
  const auto s = box_samples(v1(-2), v1(2), 20, Vec::Zero(1));
  std::ostringstream os;
  double prev = kInf;
  bool mono = true;
  for (int M = 1; M <= 6; ++M) {
    double p = 0.0;
    for (int j = 0; j < M; ++j) p += (1 + k * k) * std::pow(acl * acl, j);
    const double e = measure_epsilon_f(f, ell, [p](const Vec& x) { return p * x.squaredNorm(); }, s, v1(-10), v1(10));
    if (!(e < prev)) mono = false;
    os << (M > 1 ? ", " : "") << fmt(e);
    prev = e;
  }
  const double a1 = alpha_with_terminal_weight(50.0, 1, 0.0);
  return {mono && a1 > 0.0, "eps_f for M=1..6: " + os.str() + "; alpha_1 at eps_f=0, gamma=50: " + fmt(a1)};
}

Outcome c14_thermal() {
  const auto &art = run("thermal_artificial"), &per = run("thermal_periodicity");
  const auto L = load("thermal_artificial");
  const auto& sp = L.scenario.spec;
  const StageCost cost = sp.cost;
  const ExogenousSignal price = L.scenario.ex.ye;
  const auto orc = optimal_periodic_reference(sp.sys, sp.z, [cost, price](const Vec& x, const Vec& u, long t) {
    return cost.economic(x, u, price.at(t));
  }, sp.T);
  const double rel = std::abs(art.metrics.average - orc.value) / std::abs(orc.value);
  const auto cmp = compare_traces(art, per, TraceMetric::Average, 1e-6);
  const bool ok = art.status == "completed" && per.status == "completed" && art.records.size() == 240 && rel <= 0.05 &&
                  cmp.difference >= -1e-6 * std::max(1.0, std::abs(cmp.a));
  return {ok, "average " + fmt(art.metrics.average) + " vs oracle " + fmt(orc.value) + " (" + fmt(100 * rel) +
                  "%), N=0 average " + fmt(per.metrics.average) + " (" + cmp.verdict + ")"};
}

Outcome c15_determinism() {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(g_dir))
    if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
  std::sort(names.begin(), names.end());
  int mismatched = 0;
  for (const auto& nm : names) {
    const auto L = load(nm);
    const std::string first = trace_to_csv(run(nm));
    const std::string again = trace_to_csv(run_closed_loop(L.scenario));
    if (again != first) ++mismatched;
    const auto b = state_bounds(L.plant.z);
    if (render_svg(trace_from_csv(first), b, nm) != render_svg(trace_from_csv(again), b, nm)) ++mismatched;
  }
  // certificates
  if (certify_horizon(3.0, 20).csv() != certify_horizon(3.0, 20).csv()) ++mismatched;
  auto ingredients = [] {
    const auto L = load("di_setpoint_const");
    return ingredients_to_json(L.terminal->ti, L.terminal->grid ? &*L.terminal->grid : nullptr).dump();
  };
  if (ingredients() != ingredients()) ++mismatched;
  return {mismatched == 0, std::to_string(names.size()) + " scenarios re-run (CSV and SVG), horizon certificate and "
                               "ingredients re-synthesized: " + std::to_string(mismatched) + " mismatches"};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--scenarios" && i + 1 < argc) g_dir = argv[++i];
    else if (a == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--scenarios DIR] [--only K]\n";
      return 1;
    }
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> items = {
      {"riccati-oracles", c01_riccati},
      {"terminal-certificate", c02_terminal_certificate},
      {"stabilizing-mpc", c03_stabilizing},
      {"setpoint-tracking", c04_setpoint},
      {"incremental-reference-bound", c05_lemma1},
      {"periodic-tracking", c06_periodic},
      {"planner-tracker", c07_planner},
      {"economic-mpc", c08_economic},
      {"shifted-terminal-cost", c09_shifted},
      {"self-tuning-economic", c10_self_tuning},
      {"horizon-certification", c11_horizon},
      {"stability-frontier", c12_chain},
      {"relaxed-clf", c13_relaxed_clf},
      {"thermal-benchmark", c14_thermal},
      {"determinism", c15_determinism},
  };
  int failed = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only && id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = items[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    char head[96];
    std::snprintf(head, sizeof head, "[%s] %02d %-28s %6.1fs  ", o.pass ? "PASS" : "FAIL", id, items[i].first.c_str(),
                  sec);
    std::cout << head << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
