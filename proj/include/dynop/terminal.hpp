#pragma once
// Terminal costs, sets, and control laws; terminal-set scalings.

#include <memory>
#include <random>

#include "dynop/riccati.hpp"

namespace dynop {

using StageFn = std::function<double(const Vec& x, const Vec& u)>;

/// (A+BK)' P+ (A+BK) - P + Q + K'RK.
inline Mat lqr_residual(const Mat& A, const Mat& B, const Mat& K, const Mat& P, const Mat& Pplus, const Mat& Q,
                        const Mat& R) {
  const Mat Acl = A + B * K;
  return symmetrize(Acl.transpose() * Pplus * Acl - P + Q + K.transpose() * R * K);
}

/// Reference parametrization r(theta) over a box, with multilinear interpolation between nodes.
struct ParamGrid {
  Vec lo, hi;
  std::vector<int> nodes;                              ///< nodes per dimension (>= 2)
  std::function<RefPoint(const Vec& theta)> point;     ///< theta -> r
  std::function<Vec(const RefPoint& r)> param_of;      ///< r -> theta
  /// Successor parameters theta+ of theta to verify (r, r+) pairs; empty means r+ = r (steady states).
  std::function<std::vector<Vec>(const Vec& theta, std::mt19937& rng)> successors;

  int dim() const { return static_cast<int>(lo.size()); }
  int count() const {
    int c = 1;
    for (int k : nodes) c *= k;
    return c;
  }
  Vec node(int flat) const {
    Vec th(dim());
    for (int d = 0; d < dim(); ++d) {
      const int i = flat % nodes[d];
      flat /= nodes[d];
      th[d] = nodes[d] == 1 ? lo[d] : lo[d] + (hi[d] - lo[d]) * i / (nodes[d] - 1);
    }
    return th;
  }
  /// Corner indices and weights of the cell containing theta (clamped to the box).
  std::vector<std::pair<int, double>> weights(const Vec& theta) const {
    std::vector<std::pair<int, double>> out = {{0, 1.0}};
    int stride = 1;
    for (int d = 0; d < dim(); ++d) {
      int i0 = 0;
      double w = 0.0;
      if (nodes[d] > 1) {
        const double s = std::clamp((theta[d] - lo[d]) / (hi[d] - lo[d]), 0.0, 1.0) * (nodes[d] - 1);
        i0 = std::min(nodes[d] - 2, static_cast<int>(std::floor(s)));
        w = s - i0;
      }
      std::vector<std::pair<int, double>> nx;
      for (const auto& [idx, wt] : out) {
        nx.emplace_back(idx + i0 * stride, wt * (1.0 - w));
        if (nodes[d] > 1 && w > 0.0) nx.emplace_back(idx + (i0 + 1) * stride, wt * w);
      }
      out.swap(nx);
      stride *= nodes[d];
    }
    return out;
  }
  ParamGrid refined() const {
    ParamGrid g = *this;
    for (auto& k : g.nodes) k = 2 * k - 1;
    return g;
  }
};

/// Terminal cost V_f(x) = |x-x_r|_P^2 + p'(x-x_r), set {|x-x_r|_P^2 <= alpha}, law u_r + K(x-x_r).
struct TerminalIngredients {
  enum class Variant { Stationary, TimeVarying, Parametrized, Equality };
  Variant variant = Variant::Stationary;
  Mat P;
  Vec p;
  Mat K;
  double alpha = 0.0;
  double rho = 0.0;
  double epsilon = 0.0;
  RefPoint r;
  // time-varying: per-time data, periodic (mod T) or clamped to the last entry
  std::vector<Mat> P_seq, K_seq;
  std::vector<Vec> p_seq;
  std::vector<RefPoint> r_seq;
  bool periodic = false;
  // parametrized
  std::shared_ptr<ParamGrid> grid;
  std::vector<Mat> P_nodes, K_nodes;
  Mat P_common;       ///< eigenvalue-dominant node metric
  double alpha1 = 0;  ///< admissible scaling bound for parametrized sets
  // equality
  int controllability_index = 0;

  size_t index(long t) const {
    if (P_seq.empty()) return 0;
    const long L = static_cast<long>(P_seq.size());
    return static_cast<size_t>(periodic ? ((t % L) + L) % L : std::min(t, L - 1));
  }
  const RefPoint& ref_at(long t) const { return variant == Variant::TimeVarying ? r_seq[index(t)] : r; }
  const Mat& P_at(long t) const { return variant == Variant::TimeVarying ? P_seq[index(t)] : P; }
  const Mat& K_at(long t) const { return variant == Variant::TimeVarying ? K_seq[index(t)] : K; }
  Vec p_at(long t) const {
    if (variant == Variant::TimeVarying && !p_seq.empty()) return p_seq[index(t)];
    return p.size() ? p : Vec(Vec::Zero(P_at(t).rows()));
  }

  Mat P_param(const RefPoint& rp) const { return interp(P_nodes, rp); }
  Mat K_param(const RefPoint& rp) const { return interp(K_nodes, rp); }

  double value(const Vec& x, long t = 0) const {
    if (variant == Variant::Equality) return 0.0;
    const Vec e = x - ref_at(t).x;
    return e.dot(P_at(t) * e) + p_at(t).dot(e);
  }
  bool contains(const Vec& x, long t = 0, double tol = 1e-9) const {
    const Vec e = x - ref_at(t).x;
    if (variant == Variant::Equality) return e.lpNorm<Eigen::Infinity>() <= tol;
    return e.dot(P_at(t) * e) <= alpha * (1.0 + tol) + tol;
  }
  Vec law(const Vec& x, long t = 0) const {
    const RefPoint& rr = ref_at(t);
    if (variant == Variant::Equality || K_at(t).size() == 0) return rr.u;
    return rr.u + K_at(t) * (x - rr.x);
  }

 private:
  Mat interp(const std::vector<Mat>& nodes, const RefPoint& rp) const {
    if (!grid) throw SpecError("TerminalIngredients: not parametrized");
    Mat out;
    for (const auto& [idx, w] : grid->weights(grid->param_of(rp))) {
      if (out.size() == 0)
        out = w * nodes[idx];
      else
        out += w * nodes[idx];
    }
    return out;
  }
};

struct AlphaOptions {
  int samples = 1000;
  int bisection_iters = 40;
  unsigned seed = 20240607u;
  double alpha_floor = 1e-12;
  double alpha_cap = 1e6;  ///< used when no constraint row binds
};

struct AlphaResult {
  double alpha = 0.0;
  double alpha1 = kInf;  ///< sampled nonlinear decrease bound
  double alpha2 = kInf;  ///< exact polytopic constraint bound
};

namespace detail {

/// Deterministic samples in the closed unit ball of R^n (half on the sphere).
inline std::vector<Vec> unit_ball_samples(int n, int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<Vec> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    Vec w(n);
    for (int i = 0; i < n; ++i) w[i] = nd(rng);
    const double nr = w.norm();
    w /= (nr > 0 ? nr : 1.0);
    const double rad = (k % 2 == 0) ? 1.0 : std::pow(ud(rng), 1.0 / n);
    out.push_back(rad * w);
  }
  return out;
}

/// Maps unit-ball samples into {e : e'Pe <= 1}.
inline std::vector<Vec> ellipsoid_samples(const Mat& P, const std::vector<Vec>& ball) {
  Eigen::LLT<Mat> llt(symmetrize(P));
  if (llt.info() != Eigen::Success) throw SynthesisError("terminal weight is not positive definite");
  const Mat Lt = llt.matrixU();
  std::vector<Vec> out;
  out.reserve(ball.size());
  for (const auto& w : ball) out.push_back(Lt.triangularView<Eigen::Upper>().solve(w));
  return out;
}

/// Largest alpha in [floor, hi] with ok(alpha) by geometric bisection; returns 0 if ok(floor) fails.
inline double bisect_alpha(double floor, double hi, const std::function<bool(double)>& ok, int iters) {
  if (ok(hi)) return hi;
  if (!ok(floor)) return 0.0;
  double lo = floor;
  for (int it = 0; it < iters; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (ok(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace detail

/// Per-row tightening norms sqrt(c_i' P^{-1} c_i), c_i = h_x,i + K' h_u,i, for the linear rows of Z.
inline Vec tightening_norms(const ConstraintSet& z, const Mat& P, const Mat& K) {
  const int n = z.n(), m = z.m();
  const Mat& H = z.H();
  Vec out(H.rows());
  Eigen::LLT<Mat> llt(symmetrize(P));
  for (int i = 0; i < H.rows(); ++i) {
    Vec c = H.row(i).head(n).transpose();
    if (m > 0 && K.size()) c += K.transpose() * H.row(i).tail(m).transpose();
    out[i] = std::sqrt(std::max(0.0, c.dot(llt.solve(c))));
  }
  return out;
}

/// Exact polytopic bound: max alpha with (x, u_r + K(x-x_r)) in the linear rows of Z on {|x-x_r|_P^2 <= alpha}.
inline double alpha_polytopic(const ConstraintSet& z, const RefPoint& r, const Mat& P, const Mat& K, long t,
                              double cap) {
  if (z.H().rows() == 0) return cap;
  const Vec nrm = tightening_norms(z, P, K);
  const Vec slack = z.b_at(t) - z.H() * concat(r.x, r.u);
  double a = cap;
  for (int i = 0; i < slack.size(); ++i) {
    if (slack[i] <= 0.0) throw SynthesisError("(T.1) violated: reference not strictly inside Z (row " +
                                              std::to_string(i) + ")");
    if (nrm[i] > 0.0) a = std::min(a, (slack[i] / nrm[i]) * (slack[i] / nrm[i]));
  }
  return a;
}

/// Sampled (T.3) decrease slack: V(f(x,k(x))) - V(x) + ell(x,k(x)) on given samples at scaling alpha (max over samples).
struct DecreaseCheck {
  double worst = -kInf;
  double worst_constraint = -kInf;
};

/// alpha = min(alpha1, alpha2) for stationary ingredients; ell should already be offset for economic costs.
inline AlphaResult compute_alpha(const DynamicalSystem& sys, const ConstraintSet& z, const RefPoint& r, const Mat& P,
                                 const Mat& K, const Vec& p, const StageFn& ell, const AlphaOptions& opt = {}) {
  AlphaResult res;
  res.alpha2 = alpha_polytopic(z, r, P, K, 0, opt.alpha_cap);
  const auto ball = detail::unit_ball_samples(sys.n(), opt.samples, opt.seed);
  const auto E = detail::ellipsoid_samples(P, ball);
  const Vec pp = p.size() ? p : Vec(Vec::Zero(sys.n()));
  auto V = [&](const Vec& x) {
    const Vec e = x - r.x;
    return e.dot(P * e) + pp.dot(e);
  };
  const bool nonlinear_rows = !z.lipschitz_constraints().empty();
  auto ok = [&](double a) {
    const double s = std::sqrt(a);
    for (const auto& e : E) {
      const Vec x = r.x + s * e;
      const Vec u = K.size() ? Vec(r.u + K * (s * e)) : r.u;
      const Vec xn = sys.f(x, u);
      if (!xn.allFinite()) return false;
      const double d = V(xn) - V(x) + ell(x, u);
      if (!(d <= 1e-10 * (1.0 + std::abs(V(x))))) return false;
      if (nonlinear_rows && z.violation(x, u) > 0.0) return false;
    }
    return true;
  };
  if (sys.is_linear() && !nonlinear_rows && ok(res.alpha2)) {
    res.alpha1 = kInf;
    res.alpha = res.alpha2;
    return res;
  }
  res.alpha1 = detail::bisect_alpha(opt.alpha_floor, res.alpha2, ok, opt.bisection_iters);
  if (res.alpha1 < opt.alpha_floor)
    throw SynthesisError("alpha search collapsed: sampled decrease condition (T.3) fails at alpha=1e-12");
  res.alpha = std::min(res.alpha1, res.alpha2);
  return res;
}

/// Convenience overload with a quadratic tracking stage cost.
inline AlphaResult compute_alpha(const DynamicalSystem& sys, const ConstraintSet& z, const RefPoint& r, const Mat& P,
                                 const Mat& K, const Mat& Q, const Mat& R, const AlphaOptions& opt = {}) {
  StageFn ell = [&](const Vec& x, const Vec& u) {
    const Vec ex = x - r.x, eu = u - r.u;
    return ex.dot(Q * ex) + eu.dot(R * eu);
  };
  return compute_alpha(sys, z, r, P, K, Vec(), ell, opt);
}

inline double contraction_rate(double eps, const Mat& P) {
  return std::clamp(1.0 - eps / lambda_max(P), 1e-12, 1.0 - 1e-12);
}

/// Stationary ingredients at a strictly feasible setpoint: DARE with Q + eps I, then alpha.
inline TerminalIngredients synth_terminal_setpoint(const DynamicalSystem& sys, const ConstraintSet& z,
                                                   const RefPoint& r, const Mat& Q, const Mat& R, double eps,
                                                   const AlphaOptions& opt = {}) {
  const int n = sys.n();
  if (z.interior_margin() > 0.0 && !z.contains_strict(r.x, r.u))
    throw SynthesisError("(T.1) violated: setpoint not in Z_r");
  const auto J = sys.jacobians(r.x, r.u);
  const Mat Qe = Q + eps * Mat::Identity(n, n);
  const auto s = solve_dare(J.A, J.B, Qe, R);
  const Mat res = lqr_residual(J.A, J.B, s.K, s.P, s.P, Qe, R);
  if (lambda_max(res) > 1e-8 * std::max(1.0, s.P.norm())) throw NumericalError("LQR residual not negative semidefinite");
  TerminalIngredients ti;
  ti.variant = TerminalIngredients::Variant::Stationary;
  ti.P = s.P;
  ti.K = s.K;
  ti.p = Vec::Zero(n);
  ti.r = r;
  ti.epsilon = eps;
  ti.alpha = compute_alpha(sys, z, r, s.P, s.K, Q, R, opt).alpha;
  ti.rho = contraction_rate(eps, s.P);
  return ti;
}

/// Time-varying ingredients along a clamped trajectory or a periodic reference.
inline TerminalIngredients synth_terminal_trajectory(const DynamicalSystem& sys, const ConstraintSet& z,
                                                     const Reference& ref, const Mat& Q, const Mat& R, double eps,
                                                     const AlphaOptions& opt = {}) {
  const int n = sys.n();
  const int L = ref.length();
  const Mat Qe = Q + eps * Mat::Identity(n, n);
  std::vector<Mat> As, Bs;
  for (int t = 0; t < L; ++t) {
    const auto J = sys.jacobians(ref.points()[t].x, ref.points()[t].u);
    As.push_back(J.A);
    Bs.push_back(J.B);
  }
  TerminalIngredients ti;
  ti.variant = TerminalIngredients::Variant::TimeVarying;
  ti.epsilon = eps;
  ti.r_seq = ref.points();
  if (ref.kind() == Reference::Kind::Periodic) {
    const auto seq = solve_periodic_riccati(As, Bs, Qe, R);
    ti.P_seq = seq.P;
    ti.K_seq = seq.K;
    ti.periodic = true;
  } else {
    const auto tail = solve_dare(As.back(), Bs.back(), Qe, R);
    std::vector<Mat> Ah(As.begin(), As.end() - 1), Bh(Bs.begin(), Bs.end() - 1);
    const auto seq = solve_tv_riccati(Ah, Bh, Qe, R, tail.P);
    ti.P_seq = seq.P;
    ti.K_seq = seq.K;
    ti.K_seq.push_back(tail.K);
    ti.periodic = false;
  }
  ti.p_seq.assign(L, Vec::Zero(n));
  // constant alpha = min over t of admissible per-time scalings
  double alpha = opt.alpha_cap;
  double pmax = 0.0;
  const auto ball = detail::unit_ball_samples(n, opt.samples, opt.seed);
  for (int t = 0; t < L; ++t) {
    const RefPoint& rt = ti.r_seq[t];
    const Mat& Pt = ti.P_seq[t];
    const Mat& Pn = ti.P_seq[ti.index(t + 1)];
    const Mat& Kt = ti.K_seq[t];
    const RefPoint& rn = ti.r_seq[ti.index(t + 1)];
    const Mat res = lqr_residual(As[t], Bs[t], Kt, Pt, Pn, Qe, R);
    if (lambda_max(res) > 1e-8 * std::max(1.0, Pt.norm()))
      throw NumericalError("time-varying LQR residual not negative semidefinite at t=" + std::to_string(t));
    pmax = std::max(pmax, lambda_max(Pt));
    const double a2 = alpha_polytopic(z, rt, Pt, Kt, t, opt.alpha_cap);
    const auto E = detail::ellipsoid_samples(Pt, ball);
    auto ok = [&](double a) {
      const double s = std::sqrt(a);
      for (const auto& e : E) {
        const Vec x = rt.x + s * e;
        const Vec u = rt.u + Kt * (s * e);
        const Vec en = sys.f(x, u) - rn.x;
        const Vec eu = u - rt.u;
        const double vx = s * s * e.dot(Pt * e);
        const double d = en.dot(Pn * en) - vx + s * s * e.dot(Q * e) + eu.dot(R * eu);
        if (!(d <= 1e-10 * (1.0 + vx))) return false;
      }
      return true;
    };
    double a1 = detail::bisect_alpha(opt.alpha_floor, a2, ok, opt.bisection_iters);
    if (a1 < opt.alpha_floor) throw SynthesisError("alpha search collapsed (T.3) at t=" + std::to_string(t));
    alpha = std::min(alpha, std::min(a1, a2));
  }
  ti.alpha = alpha;
  ti.rho = std::clamp(1.0 - eps / pmax, 1e-12, 1.0 - 1e-12);
  ti.P = ti.P_seq.front();
  ti.K = ti.K_seq.front();
  ti.r = ti.r_seq.front();
  ti.p = Vec::Zero(n);
  return ti;
}

struct ParamSynthOptions {
  int verify_samples = 10000;
  int max_refinements = 3;
  unsigned seed = 99u;
  AlphaOptions alpha;
};

/// Reference-generic ingredients: pointwise DARE at grid nodes, multilinear interpolation, sampled verification.
inline TerminalIngredients synth_terminal_parametrized(const DynamicalSystem& sys, const ConstraintSet& z,
                                                       ParamGrid grid, const Mat& Q, const Mat& R, double eps,
                                                       const ParamSynthOptions& opt = {}) {
  const int n = sys.n();
  const Mat Qe = Q + eps * Mat::Identity(n, n);
  const Mat Qv = Q + 0.5 * eps * Mat::Identity(n, n);
  std::string worst_msg;
  for (int level = 0; level <= opt.max_refinements; ++level) {
    TerminalIngredients ti;
    ti.variant = TerminalIngredients::Variant::Parametrized;
    ti.epsilon = eps;
    ti.grid = std::make_shared<ParamGrid>(grid);
    const int cnt = grid.count();
    double lmax = 0.0;
    for (int i = 0; i < cnt; ++i) {
      const RefPoint rp = grid.point(grid.node(i));
      const auto J = sys.jacobians(rp.x, rp.u);
      const auto s = solve_dare(J.A, J.B, Qe, R);
      ti.P_nodes.push_back(s.P);
      ti.K_nodes.push_back(s.K);
      const double lm = lambda_max(s.P);
      if (lm > lmax) {
        lmax = lm;
        ti.P_common = s.P;
      }
    }
    // verification on sampled (r, r+) pairs
    std::mt19937 rng(opt.seed);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    double worst = -kInf;
    for (int k = 0; k < opt.verify_samples; ++k) {
      Vec th(grid.dim());
      for (int d = 0; d < grid.dim(); ++d) th[d] = grid.lo[d] + (grid.hi[d] - grid.lo[d]) * ud(rng);
      const RefPoint rp = grid.point(th);
      std::vector<Vec> succ = grid.successors ? grid.successors(th, rng) : std::vector<Vec>{th};
      const auto J = sys.jacobians(rp.x, rp.u);
      const Mat P = ti.P_param(rp), K = ti.K_param(rp);
      for (const auto& th2 : succ) {
        const Mat Pp = ti.P_param(grid.point(th2));
        const double lm = lambda_max(lqr_residual(J.A, J.B, K, P, Pp, Qv, R));
        if (lm > worst) {
          worst = lm;
          worst_msg = "worst residual " + std::to_string(lm) + " at theta[0]=" + std::to_string(th[0]);
        }
      }
    }
    if (worst <= 0.0) {
      ti.P = ti.P_common;
      ti.K = ti.K_nodes.front();
      ti.p = Vec::Zero(n);
      ti.rho = contraction_rate(eps, ti.P_common);
      // alpha1: sampled nonlinear decrease bound, uniform over references
      double a1 = opt.alpha.alpha_cap;
      std::mt19937 rng2(opt.seed + 1);
      const auto ball = detail::unit_ball_samples(n, std::max(50, opt.alpha.samples / 20), opt.alpha.seed);
      const int nref = sys.is_linear() ? 1 : 20;
      for (int k = 0; k < nref; ++k) {
        Vec th(grid.dim());
        for (int d = 0; d < grid.dim(); ++d)
          th[d] = nref == 1 ? 0.5 * (grid.lo[d] + grid.hi[d]) : grid.lo[d] + (grid.hi[d] - grid.lo[d]) * ud(rng2);
        const RefPoint rp = grid.point(th);
        const Mat P = ti.P_param(rp), K = ti.K_param(rp);
        double cap = opt.alpha.alpha_cap;
        try {
          cap = alpha_polytopic(z, rp, P, K, 0, opt.alpha.alpha_cap);
        } catch (const SynthesisError&) {
          continue;
        }
        if (sys.is_linear()) {
          a1 = std::min(a1, cap);
          continue;
        }
        const auto E = detail::ellipsoid_samples(P, ball);
        const RefPoint rn{sys.f(rp.x, rp.u), rp.u};
        const Mat Pn = ti.P_param(rn);
        auto ok = [&](double a) {
          const double s = std::sqrt(a);
          for (const auto& e : E) {
            const Vec u = rp.u + K * (s * e);
            const Vec en = sys.f(rp.x + s * e, u) - rn.x;
            const Vec eu = u - rp.u;
            const double vx = s * s * e.dot(P * e);
            if (!(en.dot(Pn * en) - vx + s * s * e.dot(Q * e) + eu.dot(R * eu) <= 1e-10 * (1.0 + vx))) return false;
          }
          return true;
        };
        a1 = std::min(a1, detail::bisect_alpha(opt.alpha.alpha_floor, cap, ok, opt.alpha.bisection_iters));
      }
      ti.alpha1 = a1;
      ti.alpha = a1;
      return ti;
    }
    grid = grid.refined();
  }
  throw SynthesisError("parametrized verification failed after refinement: " + worst_msg);
}

/// Economic terminal cost along a T-periodic reference (T=1: a steady state).
/// p_t solves the periodic first-order compensation; P_t a periodic Lyapunov recursion with a sampled Hessian bound.
struct EconomicSynthOptions {
  double epsilon = 1e-3;
  double hessian_radius = 0.5;  ///< half-width of the candidate set used to bound Hessians
  int hessian_samples = 200;
  double inflate = 1.1;
  AlphaOptions alpha;
};

using EconFnT = std::function<double(const Vec& x, const Vec& u, long t)>;

inline TerminalIngredients synth_terminal_economic_periodic(const DynamicalSystem& sys, const ConstraintSet& z,
                                                            const Reference& ref, const EconFnT& ell,
                                                            const std::vector<Mat>& K_seq,
                                                            const EconomicSynthOptions& opt = {}) {
  const int n = sys.n(), m = sys.m();
  const int T = ref.length();
  if (static_cast<int>(K_seq.size()) != T) throw SpecError("synth_terminal_economic: gain sequence length");
  std::vector<Mat> Acl(T);
  std::vector<Vec> g(T);
  for (int t = 0; t < T; ++t) {
    const RefPoint& r = ref.points()[t];
    const auto J = sys.jacobians(r.x, r.u);
    Acl[t] = J.A + J.B * K_seq[t];
    const Vec gr = fd_gradient([&](const Vec& w) { return ell(w.head(n), w.tail(m), t); }, concat(r.x, r.u));
    g[t] = gr.head(n) + K_seq[t].transpose() * gr.tail(m);
  }
  Mat mono = Mat::Identity(n, n);
  for (int t = 0; t < T; ++t) mono = Acl[t] * mono;
  if (spectral_radius(mono) >= 1.0) throw SynthesisError("synth_terminal_economic: closed loop not Schur");
  // p_t = Acl_t' p_{t+1} + g_t, periodic: p_0 = Phi' p_0 + c
  Vec c = Vec::Zero(n);
  Mat Phi = Mat::Identity(n, n);
  for (int t = 0; t < T; ++t) {
    c += Phi.transpose() * g[t];
    Phi = Acl[t] * Phi;
  }
  std::vector<Vec> p(T);
  p[0] = (Mat::Identity(n, n) - Phi.transpose()).partialPivLu().solve(c);
  for (int t = T - 1; t >= 1; --t) p[t] = Acl[t].transpose() * p[(t + 1) % T] + g[t];
  // Hessian bound of the nonlinear remainder along the terminal law
  std::vector<Mat> Hb(T);
  std::mt19937 rng(opt.alpha.seed + 7);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int t = 0; t < T; ++t) {
    const RefPoint& r = ref.points()[t];
    const Vec pn = p[(t + 1) % T];
    auto phi = [&](const Vec& e) {
      const Vec u = r.u + K_seq[t] * e;
      return ell(r.x + e, u, t) + pn.dot(sys.f(r.x + e, u));
    };
    const Mat H0 = symmetrize(0.5 * fd_hessian(phi, Vec::Zero(n)));
    Mat H = H0;
    for (int k = 0; k < opt.hessian_samples; ++k) {
      Vec e(n);
      for (int i = 0; i < n; ++i) e[i] = opt.hessian_radius * ud(rng);
      const Mat D = symmetrize(0.5 * fd_hessian(phi, e)) - H;
      if (lambda_max(D) > 0.0) {
        Eigen::SelfAdjointEigenSolver<Mat> ed(D);
        H += ed.eigenvectors() * ed.eigenvalues().cwiseMax(0.0).asDiagonal() * ed.eigenvectors().transpose();
      }
    }
    Eigen::SelfAdjointEigenSolver<Mat> eh(symmetrize(H0 + opt.inflate * (H - H0)));
    Hb[t] = symmetrize(eh.eigenvectors() * eh.eigenvalues().cwiseMax(0.0).asDiagonal() * eh.eigenvectors().transpose()) +
            opt.epsilon * Mat::Identity(n, n);
  }
  // periodic Lyapunov: P_t = Acl_t' P_{t+1} Acl_t + Hb_t
  std::vector<Mat> P(T, Mat::Zero(n, n));
  for (int sweep = 0; sweep < 100000; ++sweep) {
    const Mat P0 = P[0];
    for (int t = T - 1; t >= 0; --t) P[t] = symmetrize(Acl[t].transpose() * P[(t + 1) % T] * Acl[t] + Hb[t]);
    if ((P[0] - P0).norm() <= 1e-14 * std::max(1.0, P[0].norm())) break;
  }
  TerminalIngredients ti;
  ti.variant = T == 1 ? TerminalIngredients::Variant::Stationary : TerminalIngredients::Variant::TimeVarying;
  ti.epsilon = opt.epsilon;
  ti.P_seq = P;
  ti.K_seq = K_seq;
  ti.p_seq = p;
  ti.r_seq = ref.points();
  ti.periodic = true;
  ti.P = P[0];
  ti.K = K_seq[0];
  ti.p = p[0];
  ti.r = ref.points()[0];
  if (T == 1) {
    ti.P_seq.clear();
    ti.K_seq.clear();
    ti.p_seq.clear();
    ti.r_seq.clear();
  }
  // sampled condition: V(f(x,k(x)),t+1) - V(x,t) <= -ell(x,k(x),t) + ell(r_t,t)
  double alpha = opt.alpha.alpha_cap;
  const auto ball = detail::unit_ball_samples(n, opt.alpha.samples, opt.alpha.seed);
  for (int t = 0; t < T; ++t) {
    const RefPoint& r = ref.points()[t];
    const RefPoint& rn = ref.points()[(t + 1) % T];
    const double a2 = alpha_polytopic(z, r, P[t], K_seq[t], t, opt.alpha.alpha_cap);
    const auto E = detail::ellipsoid_samples(P[t], ball);
    const double lr = ell(r.x, r.u, t);
    const Vec pn = p[(t + 1) % T];
    auto ok = [&](double a) {
      const double s = std::sqrt(a);
      for (const auto& e : E) {
        const Vec x = r.x + s * e;
        const Vec u = r.u + K_seq[t] * (s * e);
        const Vec en = sys.f(x, u) - rn.x;
        const double vn = en.dot(P[(t + 1) % T] * en) + pn.dot(en);
        const double vx = s * s * e.dot(P[t] * e) + p[t].dot(s * e);
        if (!(vn - vx + ell(x, u, t) - lr <= 1e-10 * (1.0 + std::abs(vx)))) return false;
      }
      return true;
    };
    const double a1 = detail::bisect_alpha(opt.alpha.alpha_floor, a2, ok, opt.alpha.bisection_iters);
    if (a1 < opt.alpha.alpha_floor) throw SynthesisError("economic terminal condition fails on samples (Hessian bound)");
    alpha = std::min(alpha, std::min(a1, a2));
  }
  ti.alpha = alpha;
  double pmax = 0.0;
  for (const auto& Pt : P) pmax = std::max(pmax, lambda_max(Pt));
  ti.rho = std::clamp(1.0 - opt.epsilon / pmax, 1e-12, 1.0 - 1e-12);
  return ti;
}

/// Stationary economic terminal cost at a steady state r with tracking gain K.
inline TerminalIngredients synth_terminal_economic(const DynamicalSystem& sys, const ConstraintSet& z,
                                                   const RefPoint& r, const StageFn& ell, const Mat& K,
                                                   const EconomicSynthOptions& opt = {}) {
  EconFnT et = [&](const Vec& x, const Vec& u, long) { return ell(x, u); };
  return synth_terminal_economic_periodic(sys, z, Reference::periodic({r}), et, {K}, opt);
}

/// Phase offset of the shifted terminal cost: sum_{k=0}^{T-2} (T-1-k)/T * ell(r(t+k), t+k).
inline double shift_offset(const Reference& ref, const EconFnT& ell, long t) {
  const int T = ref.period();
  double c = 0.0;
  for (int k = 0; k <= T - 2; ++k) {
    const RefPoint& rk = ref.at(t + k);
    c += (static_cast<double>(T - 1 - k) / T) * ell(rk.x, rk.u, t + k);
  }
  return c;
}

/// Shifted terminal cost callable (x, t) -> V(x,t) + offset(t).
inline std::function<double(const Vec&, long)> shift_terminal_cost(std::function<double(const Vec&, long)> V,
                                                                   const Reference& ref, const EconFnT& ell) {
  return [V = std::move(V), ref, ell](const Vec& x, long t) { return V(x, t) + shift_offset(ref, ell, t); };
}

/// Terminal equality X_f = {x_r}; optionally records the controllability index of (A(r), B(r)).
inline TerminalIngredients terminal_equality(const RefPoint& r, const DynamicalSystem* sys = nullptr) {
  TerminalIngredients ti;
  ti.variant = TerminalIngredients::Variant::Equality;
  ti.r = r;
  ti.alpha = 0.0;
  ti.rho = 0.0;
  ti.p = Vec::Zero(r.x.size());
  ti.P = Mat::Zero(r.x.size(), r.x.size());
  if (sys) {
    const auto J = sys->jacobians(r.x, r.u);
    const int n = sys->n();
    Mat Ctrb(n, 0);
    Mat Ak = Mat::Identity(n, n);
    for (int k = 1; k <= n; ++k) {
      Ctrb.conservativeResize(n, Ctrb.cols() + J.B.cols());
      Ctrb.rightCols(J.B.cols()) = Ak * J.B;
      Ak = J.A * Ak;
      Eigen::FullPivLU<Mat> lu(Ctrb);
      if (lu.rank() == n) {
        ti.controllability_index = k;
        break;
      }
    }
  }
  return ti;
}

/// Sufficient inclusion {|x-c1|_P^2 <= a1} within {|x-c2|_P^2 <= a2}.
inline bool ellipsoid_inclusion(const Vec& c1, double a1, const Vec& c2, double a2, const Mat& P) {
  const Vec d = c1 - c2;
  return std::sqrt(a2) >= std::sqrt(a1) + std::sqrt(std::max(0.0, d.dot(P * d)));
}

/// Sampled check of (T.1)-(T.3) for stationary ingredients; returns worst slacks (<= 0 means satisfied).
struct CertificateReport {
  double decrease = -kInf;     ///< max of V+ - V + ell
  double contraction = -kInf;  ///< max of V+ - rho V
  double constraint = -kInf;   ///< max constraint residual
  double invariance = -kInf;   ///< max of V+ - alpha
};

inline CertificateReport verify_terminal(const DynamicalSystem& sys, const ConstraintSet& z,
                                         const TerminalIngredients& ti, const StageFn& ell, int samples = 1000,
                                         unsigned seed = 4242u, long t = 0) {
  CertificateReport rep;
  const RefPoint& r = ti.ref_at(t);
  const Mat& P = ti.P_at(t);
  const auto E = detail::ellipsoid_samples(P, detail::unit_ball_samples(sys.n(), samples, seed));
  const double s = std::sqrt(ti.alpha);
  for (const auto& e : E) {
    const Vec x = r.x + s * e;
    const Vec u = ti.law(x, t);
    const Vec xn = sys.f(x, u);
    const double v = ti.value(x, t), vn = ti.value(xn, t + 1);
    rep.decrease = std::max(rep.decrease, vn - v + ell(x, u));
    rep.contraction = std::max(rep.contraction, vn - ti.rho * v);
    rep.constraint = std::max(rep.constraint, z.violation(x, u, t));
    const Vec en = xn - ti.ref_at(t + 1).x;
    rep.invariance = std::max(rep.invariance, en.dot(ti.P_at(t + 1) * en) - ti.alpha);
  }
  return rep;
}

}  // namespace dynop
