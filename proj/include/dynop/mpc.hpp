#pragma once
// MPC schemes as NLP transcriptions, candidate solutions, and the one-step controller.

#include <deque>
#include <optional>
#include <string>

#include "dynop/ocp.hpp"
#include "dynop/terminal.hpp"

namespace dynop {

enum class Scheme {
  Stabilizing,
  TrajectoryTracking,
  SetpointArtificial,
  PeriodicArtificial,
  PlannerTracker,
  Economic,
  PeriodicEconomic,
  EconomicSelfTuning,
  PeriodicEconomicArtificial,
  PeriodicityConstrained,
  Unconstrained
};

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::Stabilizing: return "stabilizing";
    case Scheme::TrajectoryTracking: return "trajectory-tracking";
    case Scheme::SetpointArtificial: return "setpoint-tracking-artificial";
    case Scheme::PeriodicArtificial: return "periodic-tracking-artificial";
    case Scheme::PlannerTracker: return "planner-tracker";
    case Scheme::Economic: return "economic";
    case Scheme::PeriodicEconomic: return "periodic-economic";
    case Scheme::EconomicSelfTuning: return "economic-self-tuning";
    case Scheme::PeriodicEconomicArtificial: return "periodic-economic-artificial";
    case Scheme::PeriodicityConstrained: return "periodicity-constrained";
    case Scheme::Unconstrained: return "unconstrained";
  }
  return "?";
}

inline Scheme scheme_from_string(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(Scheme::Unconstrained); ++k)
    if (s == to_string(static_cast<Scheme>(k))) return static_cast<Scheme>(k);
  throw SpecError("unknown scheme: " + s);
}

/// Terminal cost used when no terminal ingredients are present.
enum class FreeTerminal { None, ScaledStageCost, Rollout };

struct MpcProblemSpec {
  Scheme scheme = Scheme::Stabilizing;
  DynamicalSystem sys;
  ConstraintSet z;
  StageCost cost;
  int N = 10;
  int T = 1;
  Mat S;                                     ///< offset weight
  std::optional<TerminalIngredients> terminal;
  Reference ref;                             ///< fixed reference, or initial guess for artificial references
  double alpha_min = 1e-8;
  double alpha1 = 0.0;                       ///< 0: taken from the terminal ingredients
  double beta = 0.0;
  bool beta_adaptive = false;
  int beta_window = 10;
  int M = 1;
  int nu = 1;
  bool shifted_terminal = true;
  FreeTerminal free_terminal = FreeTerminal::None;
  double omega = 1.0;
  int rollout_steps = 0;
  Mat rollout_K;
  int max_iter = 100;
  bool candidate_fallback = true;
  bool phase_multistart = false;             ///< economic artificial: also start from every phase of the reference

  bool artificial() const {
    return scheme == Scheme::SetpointArtificial || scheme == Scheme::PeriodicArtificial ||
           scheme == Scheme::PlannerTracker;
  }
  bool economic_artificial() const {
    return scheme == Scheme::EconomicSelfTuning || scheme == Scheme::PeriodicEconomicArtificial ||
           scheme == Scheme::PeriodicityConstrained;
  }
  bool economic() const {
    return scheme == Scheme::Economic || scheme == Scheme::PeriodicEconomic || economic_artificial();
  }

  void validate() const {
    if (sys.n() <= 0) throw SpecError("MpcProblemSpec: system missing");
    if (z.n() != sys.n() || z.m() != sys.m()) throw SpecError("MpcProblemSpec: constraint set dimensions");
    if (T < 1) throw SpecError("MpcProblemSpec: period T must be >= 1");
    if (nu < 1) throw SpecError("MpcProblemSpec: nu must be >= 1");
    if (M < 1) throw SpecError("MpcProblemSpec: planner interval M must be >= 1");
    if (beta < 0.0) throw SpecError("MpcProblemSpec: beta must be non-negative");
    if (scheme == Scheme::PeriodicityConstrained) {
      if (N != 0) throw SpecError("periodicity-constrained scheme requires N = 0");
    } else if (N < 1) {
      throw SpecError("MpcProblemSpec: horizon N must be >= 1");
    }
    if (nu > std::max(N, 1)) throw SpecError("MpcProblemSpec: nu exceeds the horizon");
    if (scheme == Scheme::Unconstrained) {
      if (terminal) throw SpecError("unconstrained scheme forbids terminal ingredients");
      if (free_terminal == FreeTerminal::Rollout && rollout_K.size() == 0)
        throw SpecError("rollout terminal cost needs a gain");
    } else if (!economic_artificial() && !terminal) {
      throw SpecError(std::string(to_string(scheme)) + " scheme needs terminal ingredients");
    }
    if (artificial()) {
      if (S.rows() != sys.p()) throw SpecError("offset weight S dimension");
      const bool eq = terminal->variant == TerminalIngredients::Variant::Equality;
      if (!eq && !(alpha_min > 0.0)) throw SpecError("alpha_min must be positive");
      if (!eq && !(scaling_max() >= alpha_min)) throw SpecError("empty scaling range [alpha_min, alpha1]");
      if (scheme == Scheme::SetpointArtificial && T != 1) throw SpecError("setpoint scheme has T = 1");
    }
    if (economic() && cost.variant() != StageCost::Variant::Economic)
      throw SpecError("economic schemes need an economic stage cost");
    if (scheme == Scheme::EconomicSelfTuning && T != 1) throw SpecError("self-tuning scheme has T = 1");
  }

  double scaling_max() const {
    if (alpha1 > 0.0) return alpha1;
    if (!terminal) return 0.0;
    return terminal->alpha1 > 0.0 ? terminal->alpha1 : terminal->alpha;
  }
};

/// Position of every block inside the decision vector.
struct Layout {
  int n = 0, m = 0, N = 0, T = 0;
  bool sigma = false;
  int xo(int k) const { return k * (n + m); }
  int uo(int k) const { return k * (n + m) + n; }
  int ro(int j) const { return N * (n + m) + n + j * (n + m); }  ///< x_r of reference point j
  int so() const { return ro(T); }
  int size() const { return so() + (sigma ? 1 : 0); }
};

struct MpcSolution {
  bool feasible = false;
  long t = 0;
  std::vector<Vec> u;            ///< N inputs (one reference input for N = 0)
  std::vector<Vec> x;            ///< N+1 predicted states
  std::vector<RefPoint> r;       ///< artificial reference (T points)
  double alpha = kNaN;           ///< terminal scaling
  double offset = 0.0;           ///< offset cost (tracking) or reference cost sum (economic)
  double J = kNaN;               ///< optimal value
  double terminal_value = kNaN;  ///< V_f at the predicted terminal state
  bool used_candidate = false;
  SolveReport report;
  Vec z;                         ///< raw decision vector
  Vec candidate;                 ///< shifted decision vector for the nominal successor
};

namespace detail {

inline Vec dyn_residual(const DynamicalSystem& sys, const Vec& w, int n, int m) {
  return w.tail(n) - sys.f(w.head(n), w.segment(n, m));
}

/// x+ - f(x,u) = 0 on (x, u, x+).
inline Term dynamics_term(const DynamicalSystem& sys, std::vector<int> idx) {
  const int n = sys.n(), m = sys.m();
  if (sys.is_linear()) {
    Mat A(n, 2 * n + m);
    A << -sys.A(), -sys.B(), Mat::Identity(n, n);
    return linear_term(std::move(idx), A, Vec::Zero(n));
  }
  Term t;
  t.idx = std::move(idx);
  t.dim = n;
  t.fn = [sys, n, m](const Vec& w) { return dyn_residual(sys, w, n, m); };
  t.jac = [sys, n, m](const Vec& w) {
    const auto J = sys.jacobians(w.head(n), w.segment(n, m));
    Mat out(n, 2 * n + m);
    out << -J.A, -J.B, Mat::Identity(n, n);
    return out;
  };
  return t;
}

/// Rows H(x,u) <= b - margin; rows acting only on x are dropped when skip_state.
inline void add_stage_rows(Ocp& ocp, const ConstraintSet& z, std::vector<int> idx, long t, double margin,
                           bool skip_state) {
  const int n = z.n(), m = z.m();
  if (z.H().rows()) {
    const Vec b = z.b_at(t);
    std::vector<int> keep;
    for (int i = 0; i < z.H().rows(); ++i) {
      if (skip_state && (m == 0 || z.H().row(i).tail(m).cwiseAbs().maxCoeff() == 0.0)) continue;
      keep.push_back(i);
    }
    if (!keep.empty()) {
      Mat A(keep.size(), n + m);
      Vec bb(keep.size());
      for (size_t r = 0; r < keep.size(); ++r) {
        A.row(r) = z.H().row(keep[r]);
        bb[r] = b[keep[r]] - margin;
      }
      ocp.ins.push_back(linear_term(idx, A, bb));
    }
  }
  for (const auto& g : z.lipschitz_constraints()) {
    Term t2;
    t2.idx = idx;
    auto fn = g.g;
    const double off = margin * std::max(1.0, g.lipschitz);
    t2.fn = [fn, n, m, off](const Vec& w) { return Vec::Constant(1, fn(w.head(n), w.tail(m)) + off); };
    ocp.ins.push_back(t2);
  }
}

/// ||x-xr||_Q^2 + ||u-ur||_R^2 on (x, u, xr, ur).
inline Term tracking_term_artificial(std::vector<int> idx, const Mat& Q, const Mat& R) {
  const int n = static_cast<int>(Q.rows()), m = static_cast<int>(R.rows());
  Mat D = Mat::Zero(n + m, 2 * (n + m));
  D.leftCols(n + m) = Mat::Identity(n + m, n + m);
  D.rightCols(n + m) = -Mat::Identity(n + m, n + m);
  Mat W = Mat::Zero(n + m, n + m);
  W.topLeftCorner(n, n) = Q;
  W.bottomRightCorner(m, m) = R;
  return quadratic_term(std::move(idx), 2.0 * D.transpose() * W * D, Vec::Zero(2 * (n + m)));
}

/// ||h(x,u) - y||_S^2 on (x, u).
inline Term offset_term(const DynamicalSystem& sys, std::vector<int> idx, const Mat& S, const Vec& y) {
  const int n = sys.n(), m = sys.m();
  if (sys.is_linear()) {
    Mat Cd(sys.p(), n + m);
    Cd << sys.C(), sys.D();
    return quadratic_term(std::move(idx), 2.0 * Cd.transpose() * S * Cd, -2.0 * Cd.transpose() * S * y, y.dot(S * y));
  }
  return scalar_term(std::move(idx), [sys, S, y, n, m](const Vec& w) {
    const Vec e = sys.h(w.head(n), w.tail(m)) - y;
    return e.dot(S * e);
  });
}

inline void unpack_common(const Layout& L, const Vec& z, MpcSolution& s) {
  s.x.clear();
  s.u.clear();
  s.r.clear();
  for (int k = 0; k <= L.N; ++k) s.x.push_back(z.segment(L.xo(k), L.n));
  for (int k = 0; k < L.N; ++k) s.u.push_back(z.segment(L.uo(k), L.m));
  for (int j = 0; j < L.T; ++j) s.r.push_back({z.segment(L.ro(j), L.n), z.segment(L.ro(j) + L.n, L.m)});
  if (L.sigma) s.alpha = z[L.so()] * z[L.so()];
}

inline Vec pack(const Layout& L, const std::vector<Vec>& xs, const std::vector<Vec>& us,
                const std::vector<RefPoint>& r, double sigma) {
  Vec z = Vec::Zero(L.size());
  for (int k = 0; k <= L.N; ++k) z.segment(L.xo(k), L.n) = xs[k];
  for (int k = 0; k < L.N; ++k) z.segment(L.uo(k), L.m) = us[k];
  for (int j = 0; j < L.T; ++j) {
    z.segment(L.ro(j), L.n) = r[j].x;
    z.segment(L.ro(j) + L.n, L.m) = r[j].u;
  }
  if (L.sigma) z[L.so()] = sigma;
  return z;
}

/// Solves from the warm start; falls back to a feasible candidate when the solver does worse.
inline SolveReport solve_with_candidate(Ocp& ocp, const Vec& x0, const Layout& L, const Vec* candidate,
                                        int max_iter, bool fallback, bool& used_candidate) {
  used_candidate = false;
  Vec cand;
  bool cand_ok = false;
  double cand_obj = kInf;
  if (candidate && candidate->size() == L.size()) {
    cand = *candidate;
    cand.segment(L.xo(0), L.n) = x0;
    cand_ok = cand.allFinite() && ocp.violation(cand) <= 1e-7;
    if (cand_ok) cand_obj = ocp.objective(cand);
    ocp.z0 = cand;
  }
  ocp.z0.segment(L.xo(0), L.n) = x0;
  SolveReport rep = solve_nlp(ocp.problem(max_iter));
  const bool good = rep.x.size() == L.size() && rep.x.allFinite() && rep.constraint_violation <= 1e-7;
  if (fallback && cand_ok &&
      (!good || !rep.optimal() || rep.objective > cand_obj + 1e-10 * (1.0 + std::abs(cand_obj)))) {
    if (!good || rep.objective > cand_obj) {
      rep.x = cand;
      rep.objective = cand_obj;
      rep.constraint_violation = ocp.violation(cand);
      rep.status = SolveStatus::Optimal;
      used_candidate = true;
    }
  }
  return rep;
}

/// Forward simulation for an initial input guess.
inline std::vector<Vec> simulate_guess(const DynamicalSystem& sys, const Vec& x0, const std::vector<Vec>& us) {
  std::vector<Vec> xs{x0};
  for (const auto& u : us) {
    Vec xn = sys.f(xs.back(), u);
    if (!xn.allFinite()) xn = xs.back();
    xs.push_back(xn);
  }
  return xs;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Fixed-reference schemes: stabilizing, trajectory tracking, economic, periodic economic,
// unconstrained, and the tracker of the planner-tracker decomposition.

/// Terminal ingredients seen by a fixed-reference problem at one time instant.
struct TerminalView {
  enum class Kind { None, Ellipsoid, Equality };
  Kind kind = Kind::None;
  RefPoint center;
  Mat P;       ///< set metric
  double alpha = 0.0;
  Mat Pc;      ///< cost metric (empty: no quadratic cost)
  Vec p;       ///< linear cost term
  double c = 0.0;
  Mat K;       ///< terminal law gain
  std::function<double(const Vec&)> cost_fn;  ///< generic cost, overrides Pc/p

  double cost(const Vec& x) const {
    if (cost_fn) return cost_fn(x) + c;
    double v = c;
    const Vec e = x - center.x;
    if (Pc.size()) v += e.dot(Pc * e);
    if (p.size()) v += p.dot(e);
    return v;
  }
  Vec law(const Vec& x) const {
    if (kind == Kind::Equality || K.size() == 0) return center.u;
    return center.u + K * (x - center.x);
  }
};

/// Stage data of a fixed-reference problem.
struct StageView {
  std::function<RefPoint(int k)> ref;  ///< tracking reference at stage k
  std::function<Vec(int k)> ye;        ///< economic parameter at stage k
};

namespace detail {

inline MpcSolution solve_fixed(const MpcProblemSpec& spec, const Vec& x, long t, const StageView& sv,
                               const TerminalView& tv, const MpcSolution* prev) {
  const auto& sys = spec.sys;
  const int n = sys.n(), m = sys.m(), N = spec.N;
  Layout L{n, m, N, 0, false};
  Ocp ocp;
  // initial guess: previous candidate or reference inputs
  std::vector<Vec> ug(N);
  for (int k = 0; k < N; ++k) ug[k] = sv.ref ? sv.ref(k).u : Vec(Vec::Zero(m));
  ocp.add_vars(pack(L, simulate_guess(sys, x, ug), ug, {}, 0.0));
  ocp.eqs.push_back(linear_term(index_range(L.xo(0), n), Mat::Identity(n, n), x));
  const bool econ = spec.cost.variant() == StageCost::Variant::Economic;
  const bool quad = spec.cost.variant() == StageCost::Variant::QuadraticTracking;
  for (int k = 0; k < N; ++k) {
    const auto xu = index_range(L.xo(k), n + m);
    ocp.eqs.push_back(dynamics_term(sys, index_range(L.xo(k), 2 * n + m)));
    add_stage_rows(ocp, spec.z, xu, t + k, 0.0, k == 0);
    if (econ) {
      const Vec ye = sv.ye ? sv.ye(k) : Vec();
      const StageCost c = spec.cost;
      ocp.costs.push_back(scalar_term(xu, [c, ye, n, m](const Vec& w) { return c.economic(w.head(n), w.tail(m), ye); }));
    } else if (quad) {
      const RefPoint r = sv.ref(k);
      Mat H = Mat::Zero(n + m, n + m);
      H.topLeftCorner(n, n) = 2.0 * spec.cost.Q();
      H.bottomRightCorner(m, m) = 2.0 * spec.cost.R();
      const Vec w0 = concat(r.x, r.u);
      ocp.costs.push_back(quadratic_term(xu, H, -H * w0, 0.5 * w0.dot(H * w0)));
    } else {
      const RefPoint r = sv.ref(k);
      const StageCost c = spec.cost;
      ocp.costs.push_back(scalar_term(xu, [c, r, n, m](const Vec& w) { return c.value(w.head(n), w.tail(m), r); }));
    }
  }
  const auto xN = index_range(L.xo(N), n);
  if (tv.cost_fn) {
    auto fn = tv.cost_fn;
    ocp.costs.push_back(scalar_term(xN, [fn](const Vec& w) { return fn(w); }));
  } else if (tv.Pc.size() || tv.p.size()) {
    const Mat Pc = tv.Pc.size() ? tv.Pc : Mat::Zero(n, n);
    const Vec p = tv.p.size() ? tv.p : Vec::Zero(n);
    const Vec c = tv.center.x;
    ocp.costs.push_back(quadratic_term(xN, 2.0 * Pc, -2.0 * Pc * c + p, c.dot(Pc * c) - p.dot(c)));
  }
  ocp.cost_const = tv.c;
  if (tv.kind == TerminalView::Kind::Equality) {
    ocp.eqs.push_back(linear_term(xN, Mat::Identity(n, n), tv.center.x));
  } else if (tv.kind == TerminalView::Kind::Ellipsoid) {
    const Mat P = tv.P;
    const Vec c = tv.center.x;
    const double a = tv.alpha;
    Term tt;
    tt.idx = xN;
    tt.fn = [P, c, a](const Vec& w) { return Vec::Constant(1, (w - c).dot(P * (w - c)) - a); };
    tt.jac = [P, c](const Vec& w) { return Mat((2.0 * P * (w - c)).transpose()); };
    tt.hess = [P](const Vec&, const Vec& l) { return Mat(2.0 * l[0] * P); };
    ocp.ins.push_back(tt);
  }
  bool used = false;
  const Vec* cand = prev && prev->candidate.size() == L.size() ? &prev->candidate : nullptr;
  SolveReport rep = solve_with_candidate(ocp, x, L, cand, spec.max_iter,
                                         spec.candidate_fallback && spec.scheme != Scheme::Unconstrained, used);
  MpcSolution s;
  s.t = t;
  s.report = rep;
  s.used_candidate = used;
  s.feasible = rep.x.size() == L.size() && rep.constraint_violation <= 1e-7 &&
               (rep.optimal() || rep.status == SolveStatus::MaxIter);
  if (!s.feasible) return s;
  s.z = rep.x;
  s.J = ocp.objective(rep.x);
  unpack_common(L, rep.x, s);
  s.alpha = tv.kind == TerminalView::Kind::Ellipsoid ? tv.alpha : 0.0;
  s.terminal_value = tv.cost(s.x.back());
  return s;
}

/// Decision vector shifted by nu steps, extended with the terminal law.
inline Vec shift_fixed(const MpcProblemSpec& spec, const MpcSolution& s, int nu,
                       const std::function<Vec(const Vec&, int)>& law) {
  const int N = spec.N;
  std::vector<Vec> xs(s.x.begin() + nu, s.x.end()), us(s.u.begin() + nu, s.u.end());
  for (int j = 0; j < nu; ++j) {
    const Vec u = law(xs.back(), j);
    us.push_back(u);
    xs.push_back(spec.sys.f(xs.back(), u));
  }
  Layout L{spec.sys.n(), spec.sys.m(), N, 0, false};
  return pack(L, xs, us, {}, 0.0);
}

inline TerminalView view_of(const TerminalIngredients& ti, long tN) {
  TerminalView tv;
  tv.center = ti.ref_at(tN);
  if (ti.variant == TerminalIngredients::Variant::Equality) {
    tv.kind = TerminalView::Kind::Equality;
    return tv;
  }
  tv.kind = TerminalView::Kind::Ellipsoid;
  const bool param = ti.variant == TerminalIngredients::Variant::Parametrized;
  tv.P = param ? ti.P_common : ti.P_at(tN);
  tv.Pc = tv.P;
  tv.p = ti.p_at(tN);
  tv.K = param ? ti.K_param(tv.center) : ti.K_at(tN);
  tv.alpha = ti.alpha;
  return tv;
}

inline Vec ye_at(const ExogenousSignal& ye, long t) { return ye.empty() ? Vec() : ye.at(t); }

}  // namespace detail

inline MpcSolution solve_tracking_mpc(const MpcProblemSpec& spec, const Vec& x, long t,
                                      const MpcSolution* prev = nullptr) {
  const TerminalIngredients& ti = *spec.terminal;
  StageView sv;
  sv.ref = [&](int k) { return spec.ref.at(t + k); };
  TerminalView tv = detail::view_of(ti, t + spec.N);
  MpcSolution s = detail::solve_fixed(spec, x, t, sv, tv, prev);
  if (s.feasible)
    s.candidate = detail::shift_fixed(spec, s, spec.nu, [&](const Vec& xe, int j) { return ti.law(xe, t + spec.N + j); });
  return s;
}

inline MpcSolution solve_stabilizing_mpc(const MpcProblemSpec& spec, const Vec& x,
                                         const MpcSolution* prev = nullptr) {
  return solve_tracking_mpc(spec, x, 0, prev);
}

/// Economic MPC along a fixed steady state or periodic orbit; ye is the economic parameter signal.
inline MpcSolution solve_periodic_economic_mpc(const MpcProblemSpec& spec, const Vec& x, long t,
                                               const ExogenousSignal& ye = {}, const MpcSolution* prev = nullptr) {
  const TerminalIngredients& ti = *spec.terminal;
  StageView sv;
  sv.ref = [&](int k) { return ti.ref_at(t + k); };
  sv.ye = [&](int k) { return detail::ye_at(ye, t + k); };
  TerminalView tv = detail::view_of(ti, t + spec.N);
  if (spec.shifted_terminal && spec.T > 1) {
    EconFnT ell = [&](const Vec& xx, const Vec& uu, long tt) { return spec.cost.economic(xx, uu, detail::ye_at(ye, tt)); };
    Reference orbit = ti.r_seq.empty() ? Reference::periodic({ti.r}) : Reference::periodic(ti.r_seq);
    tv.c = shift_offset(orbit, ell, t + spec.N);
  }
  MpcSolution s = detail::solve_fixed(spec, x, t, sv, tv, prev);
  if (s.feasible)
    s.candidate = detail::shift_fixed(spec, s, spec.nu, [&](const Vec& xe, int j) { return ti.law(xe, t + spec.N + j); });
  return s;
}

inline MpcSolution solve_economic_mpc(const MpcProblemSpec& spec, const Vec& x, const ExogenousSignal& ye = {},
                                      const MpcSolution* prev = nullptr) {
  return solve_periodic_economic_mpc(spec, x, 0, ye, prev);
}

/// Value matrix of the rollout cost sum_{j<M} l(x_j, K x_j) for linear plants and quadratic costs.
inline Mat rollout_value_matrix(const Mat& A, const Mat& B, const Mat& K, const Mat& Q, const Mat& R, int M) {
  const Mat Acl = A + B * K;
  const Mat W = Q + K.transpose() * R * K;
  Mat P = Mat::Zero(A.rows(), A.rows());
  for (int j = 0; j < M; ++j) P = symmetrize(W + Acl.transpose() * P * Acl);
  return P;
}

/// MPC without terminal set; optional terminal weight omega * l_min or a finite rollout of a local gain.
inline MpcSolution solve_unconstrained_mpc(const MpcProblemSpec& spec, const Vec& x, long t = 0,
                                           const MpcSolution* prev = nullptr) {
  const int n = spec.sys.n();
  StageView sv;
  sv.ref = [&](int k) { return spec.ref.length() ? spec.ref.at(t + k) : RefPoint{Vec::Zero(n), Vec::Zero(spec.sys.m())}; };
  TerminalView tv;
  tv.center = sv.ref(spec.N);
  const bool lq = spec.sys.is_linear() && spec.cost.variant() == StageCost::Variant::QuadraticTracking;
  if (spec.free_terminal == FreeTerminal::ScaledStageCost) {
    if (spec.cost.variant() == StageCost::Variant::OutputTracking) {
      const Mat Cq = spec.sys.C().transpose() * spec.cost.Q() * spec.sys.C() + spec.cost.Qs();
      tv.Pc = spec.omega * Cq;
    } else {
      tv.Pc = spec.omega * spec.cost.Q();
    }
  } else if (spec.free_terminal == FreeTerminal::Rollout) {
    tv.K = spec.rollout_K;
    if (lq) {
      tv.Pc = rollout_value_matrix(spec.sys.A(), spec.sys.B(), spec.rollout_K, spec.cost.Q(), spec.cost.R(),
                                   spec.rollout_steps);
    } else {
      const MpcProblemSpec* sp = &spec;
      const RefPoint rc = tv.center;
      tv.cost_fn = [sp, rc](const Vec& x0) {
        Vec xx = x0;
        double v = 0.0;
        for (int j = 0; j < sp->rollout_steps; ++j) {
          const Vec u = rc.u + sp->rollout_K * (xx - rc.x);
          v += sp->cost.value(xx, u, rc);
          xx = sp->sys.f(xx, u);
        }
        return v;
      };
    }
  }
  MpcSolution s = detail::solve_fixed(spec, x, t, sv, tv, prev);
  if (s.feasible) {
    const Mat K = spec.rollout_K;
    const RefPoint rc = tv.center;
    s.candidate = detail::shift_fixed(spec, s, spec.nu, [&](const Vec& xe, int) {
      return K.size() ? Vec(rc.u + K * (xe - rc.x)) : Vec(s.u.back());
    });
  }
  return s;
}

// ---------------------------------------------------------------------------------------------
// Artificial periodic references (T = 1: artificial setpoints).

namespace detail {

/// Periodic reference constraints: r_j in Z (tightened by c*sigma when sig >= 0), x_{r,j+1} = f(r_j).
inline void add_reference_block(Ocp& ocp, const MpcProblemSpec& spec, const Layout& L, long t, const Vec& cnorm,
                                int sig, double margin) {
  const int n = L.n, m = L.m;
  const auto& z = spec.z;
  for (int j = 0; j < L.T; ++j) {
    const auto rj = index_range(L.ro(j), n + m);
    if (sig >= 0 && z.H().rows()) {
      const Vec b = z.b_at(t + j);
      Mat A(z.H().rows(), n + m + 1);
      A << z.H(), cnorm;
      ocp.ins.push_back(linear_term(join(rj, {sig}), A, b));
      for (const auto& g : z.lipschitz_constraints()) {
        Term t2;
        t2.idx = rj;
        auto fn = g.g;
        t2.fn = [fn, n, m](const Vec& w) { return Vec::Constant(1, fn(w.head(n), w.tail(m))); };
        ocp.ins.push_back(t2);
      }
    } else {
      add_stage_rows(ocp, z, rj, t + j, margin, false);
    }
    const int jn = (j + 1) % L.T;
    if (spec.sys.is_linear()) {
      Mat A(n, 2 * n + m);
      A << -spec.sys.A(), -spec.sys.B(), Mat::Identity(n, n);
      ocp.eqs.push_back(linear_term(join(rj, index_range(L.ro(jn), n)), A, Vec::Zero(n)));
    } else {
      ocp.eqs.push_back(dynamics_term(spec.sys, join(rj, index_range(L.ro(jn), n))));
    }
  }
}

inline std::vector<RefPoint> initial_reference(const MpcProblemSpec& spec, const Vec& x, int T) {
  std::vector<RefPoint> r;
  for (int j = 0; j < T; ++j) {
    if (spec.ref.length())
      r.push_back(spec.ref.at(j));
    else
      r.push_back({x, Vec::Zero(spec.sys.m())});
  }
  return r;
}

inline std::vector<RefPoint> rotate(const std::vector<RefPoint>& r, int s) {
  std::vector<RefPoint> out(r.size());
  const int T = static_cast<int>(r.size());
  for (int j = 0; j < T; ++j) out[j] = r[((j + s) % T + T) % T];
  return out;
}

}  // namespace detail

/// Tracking MPC with an artificial T-periodic reference and online terminal scaling.
inline MpcSolution solve_periodic_tracking_mpc(const MpcProblemSpec& spec, const Vec& x, long t,
                                               const std::vector<Vec>& yd, const MpcSolution* prev = nullptr) {
  const auto& sys = spec.sys;
  const TerminalIngredients& ti = *spec.terminal;
  const int n = sys.n(), m = sys.m(), N = spec.N, T = spec.T;
  if (static_cast<int>(yd.size()) != T) throw SpecError("periodic tracking: target length must equal T");
  const bool eq = ti.variant == TerminalIngredients::Variant::Equality;
  Layout L{n, m, N, T, !eq};
  const Mat P = eq ? Mat() : (ti.P_common.size() ? ti.P_common : ti.P);
  const Mat K = eq ? Mat() : ti.K;
  Ocp ocp;
  {
    const auto r0 = prev && prev->feasible ? prev->r : detail::initial_reference(spec, x, T);
    std::vector<Vec> ug(N);
    for (int k = 0; k < N; ++k) ug[k] = r0[k % T].u;
    const double s0 = std::sqrt(std::max(spec.alpha_min, 0.5 * spec.scaling_max()));
    ocp.add_vars(detail::pack(L, detail::simulate_guess(sys, x, ug), ug, r0, eq ? 0.0 : s0));
  }
  ocp.eqs.push_back(linear_term(index_range(L.xo(0), n), Mat::Identity(n, n), x));
  const bool quad = spec.cost.variant() == StageCost::Variant::QuadraticTracking;
  for (int k = 0; k < N; ++k) {
    const auto xu = index_range(L.xo(k), n + m);
    ocp.eqs.push_back(detail::dynamics_term(sys, index_range(L.xo(k), 2 * n + m)));
    detail::add_stage_rows(ocp, spec.z, xu, t + k, 0.0, k == 0);
    const auto idx = join(xu, index_range(L.ro(k % T), n + m));
    if (quad) {
      ocp.costs.push_back(detail::tracking_term_artificial(idx, spec.cost.Q(), spec.cost.R()));
    } else {
      const StageCost c = spec.cost;
      ocp.costs.push_back(scalar_term(idx, [c, n, m](const Vec& w) {
        return c.value(w.head(n), w.segment(n, m), RefPoint{w.segment(n + m, n), w.tail(m)});
      }));
    }
  }
  const auto xN = index_range(L.xo(N), n);
  const auto rN = index_range(L.ro(N % T), n);
  if (eq) {
    Mat A(n, 2 * n);
    A << Mat::Identity(n, n), -Mat::Identity(n, n);
    ocp.eqs.push_back(linear_term(join(xN, rN), A, Vec::Zero(n)));
    detail::add_reference_block(ocp, spec, L, t, Vec(), -1, spec.z.interior_margin());
  } else {
    // terminal cost |x_N - x_rN|_P^2 and set |x_N - x_rN|_P^2 <= sigma^2
    Mat D(n, 2 * n);
    D << Mat::Identity(n, n), -Mat::Identity(n, n);
    ocp.costs.push_back(quadratic_term(join(xN, rN), 2.0 * D.transpose() * P * D, Vec::Zero(2 * n)));
    Term tt;
    tt.idx = join(join(xN, rN), {L.so()});
    tt.fn = [P, n](const Vec& w) {
      const Vec e = w.head(n) - w.segment(n, n);
      return Vec::Constant(1, e.dot(P * e) - w[2 * n] * w[2 * n]);
    };
    tt.jac = [P, n](const Vec& w) {
      const Vec e = w.head(n) - w.segment(n, n);
      Mat J(1, 2 * n + 1);
      J.leftCols(n) = (2.0 * P * e).transpose();
      J.middleCols(n, n) = -(2.0 * P * e).transpose();
      J(0, 2 * n) = -2.0 * w[2 * n];
      return J;
    };
    tt.hess = [P, n](const Vec&, const Vec& l) {
      Mat H = Mat::Zero(2 * n + 1, 2 * n + 1);
      H.topLeftCorner(n, n) = 2.0 * l[0] * P;
      H.block(0, n, n, n) = -2.0 * l[0] * P;
      H.block(n, 0, n, n) = -2.0 * l[0] * P;
      H.block(n, n, n, n) = 2.0 * l[0] * P;
      H(2 * n, 2 * n) = -2.0 * l[0];
      return H;
    };
    ocp.ins.push_back(tt);
    Mat sb(2, 1);
    sb << 1.0, -1.0;
    ocp.ins.push_back(linear_term({L.so()}, sb, Vec(Eigen::Vector2d(std::sqrt(spec.scaling_max()), -std::sqrt(spec.alpha_min)))));
    detail::add_reference_block(ocp, spec, L, t, tightening_norms(spec.z, P, K), L.so(), 0.0);
  }
  for (int j = 0; j < T; ++j)
    ocp.costs.push_back(detail::offset_term(sys, index_range(L.ro(j), n + m), spec.S, yd[j]));
  bool used = false;
  const Vec* cand = prev && prev->candidate.size() == L.size() ? &prev->candidate : nullptr;
  SolveReport rep =
      detail::solve_with_candidate(ocp, x, L, cand, spec.max_iter, spec.candidate_fallback, used);
  MpcSolution s;
  s.t = t;
  s.report = rep;
  s.used_candidate = used;
  s.feasible = rep.x.size() == L.size() && rep.constraint_violation <= 1e-7 &&
               (rep.optimal() || rep.status == SolveStatus::MaxIter);
  if (!s.feasible) return s;
  s.z = rep.x;
  s.J = ocp.objective(rep.x);
  detail::unpack_common(L, rep.x, s);
  if (eq) s.alpha = 0.0;
  s.offset = 0.0;
  for (int j = 0; j < T; ++j) {
    const Vec e = sys.h(s.r[j].x, s.r[j].u) - yd[j];
    s.offset += e.dot(spec.S * e);
  }
  const RefPoint& rNp = s.r[N % T];
  s.terminal_value = eq ? 0.0 : (s.x.back() - rNp.x).dot(P * (s.x.back() - rNp.x));
  // candidate: shift by nu, rotate the reference, append the terminal law
  {
    std::vector<Vec> xs(s.x.begin() + spec.nu, s.x.end()), us(s.u.begin() + spec.nu, s.u.end());
    for (int j = 0; j < spec.nu; ++j) {
      const RefPoint& rc = s.r[(N + j) % T];
      const Vec u = eq ? rc.u : Vec(rc.u + K * (xs.back() - rc.x));
      us.push_back(u);
      xs.push_back(sys.f(xs.back(), u));
    }
    s.candidate = detail::pack(L, xs, us, detail::rotate(s.r, spec.nu), eq ? 0.0 : std::sqrt(s.alpha));
  }
  return s;
}

inline MpcSolution solve_setpoint_tracking_mpc(const MpcProblemSpec& spec, const Vec& x, const Vec& yd,
                                               const MpcSolution* prev = nullptr) {
  if (spec.T != 1) throw SpecError("setpoint tracking requires T = 1");
  return solve_periodic_tracking_mpc(spec, x, 0, {yd}, prev);
}

// ---------------------------------------------------------------------------------------------
// Planner-tracker decomposition.

struct PlannerState {
  std::vector<RefPoint> r;  ///< reference valid from t_i (index k refers to time t_i + k)
  double alpha = 0.0;
  long t_i = 0;
  double v_star = 0.0;      ///< V_f(x*_N(t_i), r_N(t_i))
  std::vector<RefPoint> next_r;
  double next_alpha = 0.0;
  bool has_next = false;
  int updates = 0;
  int candidate_failures = 0;
};

struct PlannerResult {
  std::vector<RefPoint> r;
  double alpha = 0.0;
  double objective = kNaN;            ///< V_{o,T} of the returned reference
  double candidate_objective = kNaN;  ///< V_{o,T} of the shifted previous reference
  bool candidate_feasible = false;
  bool used_candidate = false;
  SolveReport report;
};

namespace detail {

inline double periodic_offset(const MpcProblemSpec& spec, const std::vector<RefPoint>& r, const std::vector<Vec>& yd) {
  double v = 0.0;
  for (size_t j = 0; j < r.size(); ++j) {
    const Vec e = spec.sys.h(r[j].x, r[j].u) - yd[j];
    v += e.dot(spec.S * e);
  }
  return v;
}

}  // namespace detail

/// New periodic reference for t_{i+1} = t_i + M subject to the contracted terminal-set inclusion.
inline PlannerResult plan_reference_step(const MpcProblemSpec& spec, const PlannerState& ps,
                                         const std::vector<Vec>& yd_next) {
  const auto& sys = spec.sys;
  const TerminalIngredients& ti = *spec.terminal;
  const int n = sys.n(), m = sys.m(), T = spec.T, N = spec.N, M = spec.M;
  const Mat P = ti.P_common.size() ? ti.P_common : ti.P;
  const Vec cnorm = tightening_norms(spec.z, P, ti.K);
  const double a_in = std::pow(ti.rho, M) * ps.v_star;
  const Vec c_old = ps.r[(N + M) % T].x;
  const long t_next = ps.t_i + M;
  PlannerResult out;
  // candidate: previous reference shifted by M with unchanged scaling
  const std::vector<RefPoint> cand_r = detail::rotate(ps.r, M);
  Layout L{n, m, 0, T, true};
  // x_0 block is unused by the planner; keep the layout uniform and pin it to zero
  Ocp ocp;
  ocp.add_vars(detail::pack(L, {Vec::Zero(n)}, {}, cand_r, std::sqrt(ps.alpha)));
  ocp.eqs.push_back(linear_term(index_range(0, n), Mat::Identity(n, n), Vec::Zero(n)));
  detail::add_reference_block(ocp, spec, L, t_next, cnorm, L.so(), 0.0);
  Mat sb(2, 1);
  sb << 1.0, -1.0;
  ocp.ins.push_back(linear_term({L.so()}, sb, Vec(Eigen::Vector2d(std::sqrt(spec.scaling_max()), -std::sqrt(spec.alpha_min)))));
  // inclusion: sqrt(a_in) + |x_rN - c_old|_P <= sigma, as two smooth rows
  const double sa = std::sqrt(std::max(0.0, a_in));
  Mat ra(1, 1);
  ra << -1.0;
  ocp.ins.push_back(linear_term({L.so()}, ra, Vec::Constant(1, -sa)));
  {
    Term tt;
    tt.idx = join(index_range(L.ro(N % T), n), {L.so()});
    tt.fn = [P, c_old, sa, n](const Vec& w) {
      const Vec d = w.head(n) - c_old;
      const double g = w[n] - sa;
      return Vec::Constant(1, d.dot(P * d) - g * g);
    };
    tt.jac = [P, c_old, sa, n](const Vec& w) {
      Mat J(1, n + 1);
      J.leftCols(n) = (2.0 * P * (w.head(n) - c_old)).transpose();
      J(0, n) = -2.0 * (w[n] - sa);
      return J;
    };
    tt.hess = [P, n](const Vec&, const Vec& l) {
      Mat H = Mat::Zero(n + 1, n + 1);
      H.topLeftCorner(n, n) = 2.0 * l[0] * P;
      H(n, n) = -2.0 * l[0];
      return H;
    };
    ocp.ins.push_back(tt);
  }
  for (int j = 0; j < T; ++j)
    ocp.costs.push_back(detail::offset_term(sys, index_range(L.ro(j), n + m), spec.S, yd_next[j]));
  const Vec zc = ocp.z0;
  out.candidate_feasible = ocp.violation(zc) <= 1e-7 &&
                           ellipsoid_inclusion(c_old, a_in, cand_r[N % T].x, ps.alpha * (1.0 + 1e-12), P);
  out.candidate_objective = detail::periodic_offset(spec, cand_r, yd_next);
  bool used = false;
  SolveReport rep = detail::solve_with_candidate(ocp, Vec::Zero(n), L, out.candidate_feasible ? &zc : nullptr,
                                                 spec.max_iter, true, used);
  out.report = rep;
  const bool ok = rep.x.size() == L.size() && rep.constraint_violation <= 1e-7;
  const Vec zz = ok ? rep.x : zc;
  out.used_candidate = used || !ok;
  out.r.clear();
  for (int j = 0; j < T; ++j) out.r.push_back({zz.segment(L.ro(j), n), zz.segment(L.ro(j) + n, m)});
  out.alpha = zz[L.so()] * zz[L.so()];
  out.objective = detail::periodic_offset(spec, out.r, yd_next);
  return out;
}

/// Tracker of the planner-tracker scheme at time t with the planner's current reference.
inline MpcSolution solve_planner_tracker_step(const MpcProblemSpec& spec, const PlannerState& ps, const Vec& x,
                                              long t, const MpcSolution* prev = nullptr) {
  const TerminalIngredients& ti = *spec.terminal;
  const int T = spec.T, N = spec.N;
  const long k0 = t - ps.t_i;
  StageView sv;
  sv.ref = [&](int k) { return ps.r[(k0 + k) % T]; };
  TerminalView tv;
  tv.kind = TerminalView::Kind::Ellipsoid;
  tv.center = ps.r[(k0 + N) % T];
  tv.P = ti.P_common.size() ? ti.P_common : ti.P;
  tv.Pc = tv.P;
  tv.K = ti.K;
  tv.alpha = k0 == 0 ? ps.alpha : std::pow(ti.rho, static_cast<double>(k0)) * ps.v_star;
  MpcSolution s = detail::solve_fixed(spec, x, t, sv, tv, prev);
  if (s.feasible) {
    s.r = ps.r;
    s.candidate = detail::shift_fixed(spec, s, spec.nu, [&](const Vec& xe, int j) {
      const RefPoint& rc = ps.r[(k0 + N + j) % T];
      return Vec(rc.u + ti.K * (xe - rc.x));
    });
  }
  return s;
}

// ---------------------------------------------------------------------------------------------
// Economic schemes with artificial references.

namespace detail {

/// Economic MPC with a T-periodic artificial reference and terminal equality x_N = x_{r,N}.
inline MpcSolution solve_econ_artificial(const MpcProblemSpec& spec, const Vec& x, long t,
                                         const std::vector<Vec>& ye, double kappa, double beta, bool shifted,
                                         const MpcSolution* prev) {
  const auto& sys = spec.sys;
  const int n = sys.n(), m = sys.m(), N = spec.N, T = spec.T;
  if (static_cast<int>(ye.size()) != T) throw SpecError("economic artificial: parameter window length must equal T");
  Layout L{n, m, N, T, false};
  Ocp ocp;
  {
    const auto r0 = prev && prev->feasible ? prev->r : initial_reference(spec, x, T);
    std::vector<Vec> ug(N);
    for (int k = 0; k < N; ++k) ug[k] = r0[k % T].u;
    ocp.add_vars(pack(L, simulate_guess(sys, x, ug), ug, r0, 0.0));
  }
  ocp.eqs.push_back(linear_term(index_range(L.xo(0), n), Mat::Identity(n, n), x));
  const StageCost c = spec.cost;
  auto ell = [c, n, m](const Vec& yk) {
    return [c, yk, n, m](const Vec& w) { return c.economic(w.head(n), w.segment(n, m), yk); };
  };
  for (int k = 0; k < N; ++k) {
    const auto xu = index_range(L.xo(k), n + m);
    ocp.eqs.push_back(dynamics_term(sys, index_range(L.xo(k), 2 * n + m)));
    add_stage_rows(ocp, spec.z, xu, t + k, 0.0, k == 0);
    ocp.costs.push_back(scalar_term(xu, ell(ye[k % T])));
  }
  // terminal equality
  Mat A(n, 2 * n);
  A << Mat::Identity(n, n), -Mat::Identity(n, n);
  ocp.eqs.push_back(linear_term(join(index_range(L.xo(N), n), index_range(L.ro(N % T), n)), A, Vec::Zero(n)));
  add_reference_block(ocp, spec, L, t, Vec(), -1, spec.z.interior_margin());
  std::vector<int> rall;
  for (int j = 0; j < T; ++j) rall = join(rall, index_range(L.ro(j), n + m));
  auto ref_sum = [c, ye, n, m, T](const Vec& w) {
    double v = 0.0;
    for (int j = 0; j < T; ++j) v += c.economic(w.segment(j * (n + m), n), w.segment(j * (n + m) + n, m), ye[j]);
    return v;
  };
  if (beta > 0.0) ocp.costs.push_back(scalar_term(rall, [ref_sum, beta](const Vec& w) { return beta * ref_sum(w); }));
  if (shifted && T > 1) {
    for (int k = 0; k <= T - 2; ++k) {
      const int j = (k + N) % T;
      const double wgt = static_cast<double>(T - 1 - k) / T;
      auto fn = ell(ye[j]);
      ocp.costs.push_back(scalar_term(index_range(L.ro(j), n + m), [fn, wgt](const Vec& w) { return wgt * fn(w); }));
    }
  }
  if (std::isfinite(kappa)) {
    Term tk;
    tk.idx = rall;
    tk.fn = [ref_sum, kappa](const Vec& w) { return Vec::Constant(1, ref_sum(w) - kappa); };
    ocp.ins.push_back(tk);
  }
  bool used = false;
  const Vec* cand = prev && prev->candidate.size() == L.size() ? &prev->candidate : nullptr;
  const Vec z_init = ocp.z0;
  SolveReport rep = solve_with_candidate(ocp, x, L, cand, spec.max_iter, spec.candidate_fallback, used);
  auto usable = [&](const SolveReport& r) {
    return r.x.size() == L.size() && r.constraint_violation <= 1e-7 &&
           (r.optimal() || r.status == SolveStatus::MaxIter);
  };
  if (spec.phase_multistart && T > 1) {
    MpcSolution base;
    unpack_common(L, cand ? *cand : z_init, base);
    for (int sh = 1; sh < T; ++sh) {
      const auto rr = rotate(base.r, sh);
      std::vector<Vec> ug(N);
      for (int k = 0; k < N; ++k) ug[k] = rr[k % T].u;
      ocp.z0 = pack(L, simulate_guess(sys, x, ug), ug, rr, 0.0);
      const SolveReport alt = solve_nlp(ocp.problem(spec.max_iter));
      if (usable(alt) && (!usable(rep) || alt.objective < rep.objective - 1e-10 * (1.0 + std::abs(rep.objective)))) {
        rep = alt;
        used = false;
      }
    }
  }
  MpcSolution s;
  s.t = t;
  s.report = rep;
  s.used_candidate = used;
  s.feasible = usable(rep);
  if (!s.feasible) return s;
  s.z = rep.x;
  s.J = ocp.objective(rep.x);
  unpack_common(L, rep.x, s);
  s.alpha = 0.0;
  s.terminal_value = 0.0;
  s.offset = 0.0;
  for (int j = 0; j < T; ++j) s.offset += c.economic(s.r[j].x, s.r[j].u, ye[j]);
  if (N == 0) s.u.push_back(s.r[0].u);
  // candidate: shift by nu, append the reference inputs, rotate the reference
  const int nu = std::min(spec.nu, std::max(N, 1));
  std::vector<Vec> xs, us;
  if (N > 0) {
    xs.assign(s.x.begin() + nu, s.x.end());
    us.assign(s.u.begin() + nu, s.u.end());
    for (int j = 0; j < nu; ++j) {
      const RefPoint& rc = s.r[(N + j) % T];
      us.push_back(rc.u);
      xs.push_back(sys.f(xs.back(), rc.u));
    }
  } else {
    xs.push_back(s.r[nu % T].x);
  }
  s.candidate = pack(L, xs, us, rotate(s.r, nu), 0.0);
  return s;
}

}  // namespace detail

/// Controller memory; one per closed loop.
struct ControllerState {
  long t = 0;
  std::optional<MpcSolution> prev;
  double kappa = kInf;
  double beta = 0.0;
  int stationary = 0;
  PlannerState planner;
  bool planner_ready = false;
};

/// Self-tuning economic MPC (T = 1) step; updates kappa with the parameter at t+1.
inline MpcSolution solve_periodic_economic_artificial_mpc(const MpcProblemSpec& spec, ControllerState& st,
                                                          const Vec& x, const std::vector<Vec>& ye_now,
                                                          const std::vector<Vec>& ye_next) {
  const MpcSolution* prev = st.prev && st.prev->feasible ? &*st.prev : nullptr;
  MpcSolution s = detail::solve_econ_artificial(spec, x, st.t, ye_now, st.kappa, st.beta,
                                                spec.shifted_terminal, prev);
  if (!s.feasible) return s;
  const int T = spec.T;
  const int nu = std::min(spec.nu, std::max(spec.N, 1));
  double kn = 0.0;
  for (int k = 0; k < T; ++k) {
    const RefPoint& rk = s.r[(k + nu) % T];
    kn += spec.cost.economic(rk.x, rk.u, ye_next[k]);
  }
  st.kappa = kn;
  return s;
}

inline MpcSolution solve_self_tuning_economic_mpc(const MpcProblemSpec& spec, ControllerState& st, const Vec& x,
                                                  const Vec& ye_now, const Vec& ye_next) {
  if (spec.T != 1) throw SpecError("self-tuning economic MPC requires T = 1");
  return solve_periodic_economic_artificial_mpc(spec, st, x, {ye_now}, {ye_next});
}

/// Periodicity-constrained economic MPC: min sum l_e(r_k) over T-periodic orbits starting at x.
inline MpcSolution solve_periodicity_constrained_empc(const MpcProblemSpec& spec, const Vec& x,
                                                      const std::vector<Vec>& ye, long t = 0,
                                                      const MpcSolution* prev = nullptr) {
  MpcProblemSpec sp = spec;
  sp.N = 0;
  return detail::solve_econ_artificial(sp, x, t, ye, kInf, 1.0, false, prev);
}

// ---------------------------------------------------------------------------------------------
// Optimal steady states and periodic orbits.

struct OptimalReference {
  std::vector<RefPoint> r;
  double value = kNaN;  ///< average economic cost over the period
  SolveReport report;
  int starts_converged = 0;
};

namespace detail {

inline Vec halton(int index, int dim) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  Vec h(dim);
  for (int d = 0; d < dim; ++d) {
    const int b = primes[d % 16];
    double f = 1.0, r = 0.0;
    int i = index;
    while (i > 0) {
      f /= b;
      r += f * (i % b);
      i /= b;
    }
    h[d] = r;
  }
  return h;
}

}  // namespace detail

/// min (1/T) sum_k ell(r_k, k) over T-periodic orbits in Z (row k uses b(k)); 8 deterministic starts.
inline OptimalReference optimal_periodic_reference(const DynamicalSystem& sys, const ConstraintSet& z,
                                                   const EconFnT& ell, int T, int starts = 8,
                                                   const std::vector<RefPoint>& guess = {}) {
  if (T < 1) throw SpecError("optimal_periodic_reference: T must be >= 1");
  const int n = sys.n(), m = sys.m();
  MpcProblemSpec sp;
  sp.sys = sys;
  sp.z = z;
  sp.T = T;
  sp.N = 0;
  Layout L{n, m, 0, T, false};
  OptimalReference best;
  const Vec ctr = z.center();
  Vec span = Vec::Ones(n + m);
  if (z.has_box())
    for (int i = 0; i < n + m; ++i)
      if (std::isfinite(z.box_lo()[i]) && std::isfinite(z.box_hi()[i])) span[i] = z.box_hi()[i] - z.box_lo()[i];
  for (int s = 0; s < starts; ++s) {
    Ocp ocp;
    std::vector<RefPoint> r0;
    for (int j = 0; j < T; ++j) {
      if (s == 0 && static_cast<int>(guess.size()) == T) {
        r0.push_back(guess[j]);
        continue;
      }
      const Vec h = s == 0 ? Vec(Vec::Constant(n + m, 0.5)) : detail::halton(s * T + j + 1, n + m);
      const Vec w = ctr + 0.8 * (h.array() - 0.5).matrix().cwiseProduct(span);
      r0.push_back({w.head(n), w.tail(m)});
    }
    ocp.add_vars(detail::pack(L, {Vec::Zero(n)}, {}, r0, 0.0));
    ocp.eqs.push_back(linear_term(index_range(0, n), Mat::Identity(n, n), Vec::Zero(n)));
    detail::add_reference_block(ocp, sp, L, 0, Vec(), -1, 0.0);
    for (int j = 0; j < T; ++j) {
      const double invT = 1.0 / T;
      ocp.costs.push_back(scalar_term(index_range(L.ro(j), n + m), [ell, j, n, m, invT](const Vec& w) {
        return invT * ell(w.head(n), w.tail(m), j);
      }));
    }
    NlpProblem p = ocp.problem(300);
    SolveReport rep = solve_nlp(p);
    if (!(rep.optimal() && rep.constraint_violation <= 1e-8)) continue;
    ++best.starts_converged;
    if (!(rep.objective < best.value - 1e-12) && std::isfinite(best.value)) continue;
    best.value = rep.objective;
    best.report = rep;
    best.r.clear();
    for (int j = 0; j < T; ++j) best.r.push_back({rep.x.segment(L.ro(j), n), rep.x.segment(L.ro(j) + n, m)});
  }
  if (best.starts_converged == 0) throw InfeasibleError("optimal reference: no start converged");
  return best;
}

/// min ell(x,u) s.t. x = f(x,u), (x,u) in Z.
inline OptimalReference optimal_steady_state(const DynamicalSystem& sys, const ConstraintSet& z, const StageFn& ell,
                                             int starts = 8) {
  return optimal_periodic_reference(sys, z, [ell](const Vec& x, const Vec& u, long) { return ell(x, u); }, 1, starts);
}

// ---------------------------------------------------------------------------------------------
// One-step controller.

struct Exogenous {
  ExogenousSignal yd;  ///< output targets
  ExogenousSignal ye;  ///< economic parameters
};

struct Diagnostics {
  long t = 0;
  bool feasible = false;
  double J = kNaN;
  double alpha = kNaN;
  double kappa = kNaN;
  double beta = kNaN;
  int iterations = 0;
  bool used_candidate = false;
  bool planner_invoked = false;
  bool planner_candidate_feasible = true;
  double planner_objective = kNaN;
};

struct ControlOutput {
  std::vector<Vec> u;  ///< inputs to apply at t, ..., t + nu - 1
  MpcSolution sol;
  Diagnostics diag;
};

struct ControllerInfeasible : InfeasibleError {
  ControllerInfeasible(const std::string& what, ControllerState snap) : InfeasibleError(what), snapshot(std::move(snap)) {}
  ControllerState snapshot;
};

namespace detail {

/// Beta doubling when the reference is stationary but not a local steady-state optimum.
inline void adapt_beta(const MpcProblemSpec& spec, ControllerState& st, const MpcSolution& s, const Vec& ye) {
  if (!spec.beta_adaptive || spec.T != 1) return;
  if (st.prev && st.prev->feasible && !st.prev->r.empty() &&
      (st.prev->r[0].x - s.r[0].x).norm() + (st.prev->r[0].u - s.r[0].u).norm() <= 1e-9)
    ++st.stationary;
  else
    st.stationary = 0;
  if (st.stationary < spec.beta_window) return;
  st.stationary = 0;
  const StageCost c = spec.cost;
  const auto ref = optimal_periodic_reference(
      spec.sys, spec.z, [c, ye](const Vec& x, const Vec& u, long) { return c.economic(x, u, ye); }, 1, 1, s.r);
  if ((ref.r[0].x - s.r[0].x).norm() + (ref.r[0].u - s.r[0].u).norm() > 1e-6) st.beta *= 2.0;
}

}  // namespace detail

inline ControllerState init_controller(const MpcProblemSpec& spec) {
  spec.validate();
  ControllerState st;
  st.beta = spec.beta;
  return st;
}

/// Solves the scheme at state x and time st.t; returns the first nu inputs and advances st.t by nu.
inline ControlOutput apply_controller(const MpcProblemSpec& spec, ControllerState& st, const Vec& x,
                                      const Exogenous& ex = {}) {
  ControlOutput out;
  const long t = st.t;
  const int T = spec.T;
  const MpcSolution* prev = st.prev && st.prev->feasible ? &*st.prev : nullptr;
  MpcSolution s;
  switch (spec.scheme) {
    case Scheme::Stabilizing:
    case Scheme::TrajectoryTracking:
      s = solve_tracking_mpc(spec, x, spec.scheme == Scheme::Stabilizing ? 0 : t, prev);
      break;
    case Scheme::Economic:
      s = solve_periodic_economic_mpc(spec, x, 0, ex.ye, prev);
      break;
    case Scheme::PeriodicEconomic:
      s = solve_periodic_economic_mpc(spec, x, t, ex.ye, prev);
      break;
    case Scheme::Unconstrained:
      s = solve_unconstrained_mpc(spec, x, t, prev);
      break;
    case Scheme::SetpointArtificial:
    case Scheme::PeriodicArtificial:
      s = solve_periodic_tracking_mpc(spec, x, t, ex.yd.window(t, T), prev);
      break;
    case Scheme::PlannerTracker: {
      PlannerState& ps = st.planner;
      if (!st.planner_ready) {
        MpcProblemSpec mono = spec;
        mono.scheme = Scheme::PeriodicArtificial;
        const MpcSolution s0 = solve_periodic_tracking_mpc(mono, x, t, ex.yd.window(t, T), nullptr);
        if (!s0.feasible) throw ControllerInfeasible("planner-tracker: initial reference infeasible", st);
        ps = PlannerState{};
        ps.r = s0.r;
        ps.alpha = s0.alpha;
        ps.t_i = t;
        st.planner_ready = true;
        prev = nullptr;
      } else if (t >= ps.t_i + spec.M && ps.has_next) {
        ps.r = ps.next_r;
        ps.alpha = ps.next_alpha;
        ps.t_i += spec.M;
        ps.has_next = false;
      }
      s = solve_planner_tracker_step(spec, ps, x, t, prev);
      if (s.feasible && t == ps.t_i) {
        const Mat P = spec.terminal->P_common.size() ? spec.terminal->P_common : spec.terminal->P;
        const Vec e = s.x.back() - ps.r[spec.N % T].x;
        ps.v_star = std::min(e.dot(P * e), ps.alpha);
        // periodic continuation of the current target window
        const auto yd_now = ex.yd.window(t, T);
        std::vector<Vec> yd_next(T);
        for (int k = 0; k < T; ++k) yd_next[k] = yd_now[(k + spec.M) % T];
        const PlannerResult pr = plan_reference_step(spec, ps, yd_next);
        ps.next_r = pr.r;
        ps.next_alpha = pr.alpha;
        ps.has_next = true;
        ++ps.updates;
        if (!pr.candidate_feasible) ++ps.candidate_failures;
        out.diag.planner_invoked = true;
        out.diag.planner_candidate_feasible = pr.candidate_feasible;
        out.diag.planner_objective = pr.objective;
      }
      break;
    }
    case Scheme::EconomicSelfTuning:
    case Scheme::PeriodicEconomicArtificial:
    case Scheme::PeriodicityConstrained: {
      const int nu = std::min(spec.nu, std::max(spec.N, 1));
      const auto ye_now = ex.ye.empty() ? std::vector<Vec>(T, Vec()) : ex.ye.window(t, T);
      const auto ye_next = ex.ye.empty() ? std::vector<Vec>(T, Vec()) : ex.ye.window(t + nu, T);
      if (spec.scheme == Scheme::PeriodicityConstrained) {
        s = solve_periodicity_constrained_empc(spec, x, ye_now, t, prev);
      } else {
        s = solve_periodic_economic_artificial_mpc(spec, st, x, ye_now, ye_next);
        if (s.feasible) detail::adapt_beta(spec, st, s, ye_now[0]);
      }
      break;
    }
  }
  if (!s.feasible)
    throw ControllerInfeasible(std::string(to_string(spec.scheme)) + ": infeasible at t=" + std::to_string(t), st);
  const int nu = std::min<int>(spec.nu, static_cast<int>(s.u.size()));
  out.u.assign(s.u.begin(), s.u.begin() + nu);
  out.diag.t = t;
  out.diag.feasible = true;
  out.diag.J = s.J;
  out.diag.alpha = s.alpha;
  out.diag.kappa = st.kappa;
  out.diag.beta = st.beta;
  out.diag.iterations = s.report.iterations;
  out.diag.used_candidate = s.used_candidate;
  st.prev = s;
  st.t += nu;
  out.sol = std::move(s);
  return out;
}

}  // namespace dynop
