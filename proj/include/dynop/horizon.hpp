#pragma once
// Horizon certificates for MPC without terminal ingredients: cost-controllability estimates,
// relaxed-dynamic-programming LPs, detectability storage, and sampled falsification.

#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "dynop/lp.hpp"
#include "dynop/nlp.hpp"
#include "dynop/riccati.hpp"

namespace dynop {

/// Sampled bound J_N(x) <= gamma * l_min(x).
struct CostControllabilityEstimate {
  double gamma = 1.0;
  int n_max = 0;
  std::vector<Vec> samples;
  std::vector<std::vector<double>> ratios;  ///< ratios[i][N-1]
  Vec worst_sample;
  int worst_horizon = 0;
};

/// Quadratic detectability storage W(x) = x' Sigma x.
struct DetectabilityStorage {
  Mat Sigma;
  double gamma_o = 0.0;
  double epsilon_o = 0.0;
  double tau = 0.0;
  double margin = 0.0;  ///< lambda_max of the block condition (<= 0 when certified)
};

enum class HorizonMethod { Simple, Decay, Lp, RelaxedClf, Detectable };

inline const char* to_string(HorizonMethod m) {
  switch (m) {
    case HorizonMethod::Simple: return "simple";
    case HorizonMethod::Decay: return "exponential-decay";
    case HorizonMethod::Lp: return "lp-tight";
    case HorizonMethod::RelaxedClf: return "relaxed-clf";
    case HorizonMethod::Detectable: return "lp-detectable";
  }
  return "?";
}

struct HorizonCertificate {
  HorizonMethod method = HorizonMethod::Lp;
  double gamma = 1.0;
  double epsilon_f = kInf;
  int n_bar = -1;  ///< -1 when no N up to the sweep limit is certified
  std::vector<double> alpha;  ///< alpha[N-1]

  std::string csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "N,alpha\n";
    for (size_t k = 0; k < alpha.size(); ++k) os << k + 1 << ',' << alpha[k] << '\n';
    return os.str();
  }
};

/// Deterministic Halton point in [0,1)^d.
inline Vec halton(int index, int d) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
  if (d > 20) throw SpecError("halton: dimension > 20");
  Vec p(d);
  for (int j = 0; j < d; ++j) {
    double f = 1.0, r = 0.0;
    for (int i = index + 1; i > 0; i /= primes[j]) {
      f /= primes[j];
      r += f * (i % primes[j]);
    }
    p[j] = r;
  }
  return p;
}

/// Low-discrepancy samples on [lo,hi] excluding the ball of radius `exclude` around `center`.
inline std::vector<Vec> box_samples(const Vec& lo, const Vec& hi, int count, const Vec& center, double exclude = 1e-6) {
  std::vector<Vec> out;
  for (int i = 0; static_cast<int>(out.size()) < count && i < 100 * count + 100; ++i) {
    const Vec x = lo + (hi - lo).cwiseProduct(halton(i, static_cast<int>(lo.size())));
    if ((x - center).norm() > exclude) out.push_back(x);
  }
  return out;
}

/// Generic estimate from a value oracle J(x, N) and l_min(x).
inline CostControllabilityEstimate estimate_gamma(const std::function<double(const Vec&, int)>& value,
                                                  const std::function<double(const Vec&)>& lmin,
                                                  const std::vector<Vec>& samples, int n_max = 50) {
  if (n_max < 1) throw SpecError("estimate_gamma: N_max < 1");
  CostControllabilityEstimate est;
  est.n_max = n_max;
  est.samples = samples;
  est.gamma = 1.0;
  for (const Vec& x : samples) {
    const double l = lmin(x);
    std::vector<double> row;
    for (int N = 1; N <= n_max; ++N) {
      const double r = value(x, N) / l;
      if (!std::isfinite(r) || !(l > 0.0)) {
        std::ostringstream os;
        os << "estimate_gamma: unbounded ratio at sample [" << x.transpose() << "], N=" << N;
        throw NumericalError(os.str());
      }
      row.push_back(r);
      if (r > est.gamma) {
        est.gamma = r;
        est.worst_sample = x;
        est.worst_horizon = N;
      }
    }
    est.ratios.push_back(std::move(row));
  }
  return est;
}

/// Finite-horizon Riccati values P_1..P_{N_max} with zero terminal weight: J_N(x) = x' P_N x.
inline std::vector<Mat> lq_value_matrices(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, int n_max) {
  std::vector<Mat> out;
  Mat P = Mat::Zero(A.rows(), A.rows());
  for (int N = 1; N <= n_max; ++N) {
    const auto step = solve_tv_riccati({A}, {B}, Q, R, P);
    P = step.P[0];
    out.push_back(P);
  }
  return out;
}

/// Linear-quadratic specialization with exact Riccati values and l_min(x) = x'Qx.
inline CostControllabilityEstimate estimate_gamma_lq(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                                                     const std::vector<Vec>& samples, int n_max = 50) {
  const auto Ps = lq_value_matrices(A, B, Q, R, n_max);
  return estimate_gamma([&](const Vec& x, int N) { return x.dot(Ps[N - 1] * x); },
                        [&](const Vec& x) { return x.dot(Q * x); }, samples, n_max);
}

namespace detail {

inline double lp_value_or(const LpProblem& lp, double constant) {
  const SolveReport r = solve_lp(lp);
  if (r.status == SolveStatus::Unbounded) return -kInf;
  if (!r.optimal()) throw NumericalError(std::string("horizon LP: ") + to_string(r.status));
  return constant + r.objective;
}

}  // namespace detail

/// Worst-case relaxed-DP index over stage-cost sequences with J_k <= gamma * lambda (normalized lambda_0 = 1).
/// Variables: lambda_1..lambda_{N-1} >= 0, nu free.
inline LpProblem grune_lp(double gamma, int N) {
  const int nl = N - 1;
  const int nv = nl + 1;
  LpProblem lp;
  lp.c = Vec::Ones(nv);
  lp.c[nl] = -1.0;
  std::vector<Vec> rows;
  std::vector<double> rhs;
  {
    Vec a = Vec::Zero(nv);
    a.head(nl).setOnes();
    rows.push_back(a);
    rhs.push_back(gamma - 1.0);
  }
  for (int k = 1; k <= N - 2; ++k) {
    Vec a = Vec::Zero(nv);
    for (int n = k; n <= N - 1; ++n) a[n - 1] = 1.0;
    a[k - 1] -= gamma;
    rows.push_back(a);
    rhs.push_back(0.0);
  }
  for (int j = 0; j <= N - 2; ++j) {
    Vec a = Vec::Zero(nv);
    a[nl] = 1.0;
    for (int n = 1; n <= j; ++n) a[n - 1] -= 1.0;
    a[j] -= gamma;
    rows.push_back(a);
    rhs.push_back(0.0);
  }
  lp.A_in = Mat(rows.size(), nv);
  lp.b_in = Vec(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    lp.A_in.row(i) = rows[i].transpose();
    lp.b_in[i] = rhs[i];
  }
  lp.lb = Vec::Zero(nv);
  lp.lb[nl] = -kInf;
  lp.ub = Vec::Constant(nv, kInf);
  return lp;
}

/// Tight suboptimality index alpha_N from the relaxed-DP LP.
inline double alpha_from_lp(double gamma, int N) {
  if (!(gamma >= 1.0)) throw SpecError("alpha_from_lp: gamma < 1");
  if (N < 1) throw SpecError("alpha_from_lp: N < 1");
  if (N == 1) return gamma == 1.0 ? 1.0 : -kInf;
  return detail::lp_value_or(grune_lp(gamma, N), 1.0);
}

/// Closed form of the same LP optimum.
inline double alpha_closed_form(double gamma, int N) {
  if (N == 1) return gamma == 1.0 ? 1.0 : -kInf;
  // divided through by gamma^(N-1) so large N does not overflow
  const double rk = std::pow((gamma - 1.0) / gamma, N - 1);
  return 1.0 - (gamma - 1.0) * rk / (1.0 - rk);
}

/// Smallest N with alpha_closed_form(gamma, N) > 0, i.e. ((gamma-1)/gamma)^(N-1) < 1/gamma.
inline long closed_form_horizon(double gamma) {
  if (!(gamma >= 1.0)) throw SpecError("closed_form_horizon: gamma < 1");
  if (gamma == 1.0) return 1;
  const double x = std::log(gamma) / -std::log1p(-1.0 / gamma);
  long n = static_cast<long>(std::floor(x)) + 2;
  while (n > 2 && alpha_closed_form(gamma, static_cast<int>(std::min<long>(n - 1, INT32_MAX))) > 0.0) --n;
  while (!(alpha_closed_form(gamma, static_cast<int>(std::min<long>(n, INT32_MAX))) > 0.0)) ++n;
  return n;
}

/// Bound from the exponential open-loop decay rho = (gamma-1)/gamma.
inline double alpha_decay(double gamma, int N) {
  if (N == 1) return gamma == 1.0 ? 1.0 : -kInf;
  return 1.0 - std::pow(gamma - 1.0, N) / std::pow(gamma, N - 2);
}

/// Averaging bound: some tail stage is at most (gamma-1)/(N-1).
inline double alpha_simple(double gamma, int N) {
  if (N == 1) return gamma == 1.0 ? 1.0 : -kInf;
  return 1.0 - (gamma - 1.0) * (gamma - 1.0) / (N - 1);
}

/// Relaxed-DP LP with a terminal cost satisfying min_u V_f(f) + l <= (1+eps_f) V_f.
/// Variables: lambda_1..lambda_{N-1}, terminal value lambda_N >= 0, nu free.
inline double alpha_with_terminal_weight(double gamma, int N, double eps_f) {
  if (!(gamma >= 1.0) || N < 1 || !(eps_f >= 0.0)) throw SpecError("alpha_with_terminal_weight: bad arguments");
  if (std::isinf(eps_f)) return alpha_from_lp(gamma, N);
  const int nv = N + 1;  // lambda_1..lambda_N, nu
  const int inu = N;
  std::vector<Vec> rows;
  std::vector<double> rhs;
  for (int k = 0; k <= N - 1; ++k) {
    Vec a = Vec::Zero(nv);
    for (int n = std::max(k, 1); n <= N; ++n) a[n - 1] = 1.0;
    double r = 0.0;
    if (k == 0) r = gamma - 1.0;
    else a[k - 1] -= gamma;
    rows.push_back(a);
    rhs.push_back(r);
  }
  for (int j = 0; j <= N - 2; ++j) {
    Vec a = Vec::Zero(nv);
    a[inu] = 1.0;
    for (int n = 1; n <= j; ++n) a[n - 1] -= 1.0;
    a[j] -= gamma;
    rows.push_back(a);
    rhs.push_back(0.0);
  }
  {
    Vec a = Vec::Zero(nv);
    a[inu] = 1.0;
    for (int n = 1; n <= N - 1; ++n) a[n - 1] -= 1.0;
    a[N - 1] -= 1.0 + eps_f;
    rows.push_back(a);
    rhs.push_back(0.0);
  }
  LpProblem lp;
  lp.c = Vec::Ones(nv);
  lp.c[inu] = -1.0;
  lp.A_in = Mat(rows.size(), nv);
  lp.b_in = Vec(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    lp.A_in.row(i) = rows[i].transpose();
    lp.b_in[i] = rhs[i];
  }
  lp.lb = Vec::Zero(nv);
  lp.lb[inu] = -kInf;
  lp.ub = Vec::Constant(nv, kInf);
  return detail::lp_value_or(lp, 1.0);
}

/// Relaxed-DP LP for semidefinite stage costs with storage W:
///   J_N(x) <= gamma |x|^2,  0 <= W <= gamma_o |x|^2,  W(x+) - W(x) <= -eps_o |x|^2 + l.
/// Returns the worst alpha with J(x1) + (1-a)W(x1) <= J(x0) + (1-a)W(x0) - a l(x0).
inline double alpha_detectable(double gamma, double gamma_o, double eps_o, int N) {
  if (!(gamma > 0.0) || !(gamma_o >= 0.0) || !(eps_o > 0.0) || N < 1)
    throw SpecError("alpha_detectable: bad arguments");
  // layout: lambda_0..lambda_{N-1} | s_0..s_N | w_0..w_N | nu
  const int il = 0, is = N, iw = 2 * N + 1, inu = 3 * N + 2, nv = 3 * N + 3;
  std::vector<Vec> rows;
  auto push = [&](const Vec& a) { rows.push_back(a); };
  for (int k = 0; k <= N; ++k) {
    Vec a = Vec::Zero(nv);
    a[iw + k] = 1.0;
    a[is + k] = -gamma_o;
    push(a);
  }
  for (int k = 0; k < N; ++k) {
    Vec a = Vec::Zero(nv);
    a[iw + k + 1] = 1.0;
    a[iw + k] = -1.0;
    a[is + k] = eps_o;
    a[il + k] = -1.0;
    push(a);
  }
  for (int k = 0; k < N; ++k) {
    Vec a = Vec::Zero(nv);
    for (int n = k; n < N; ++n) a[il + n] = 1.0;
    a[is + k] = -gamma;
    push(a);
  }
  for (int j = 0; j <= N - 1; ++j) {
    Vec a = Vec::Zero(nv);
    a[inu] = 1.0;
    for (int n = 1; n <= j; ++n) a[il + n] = -1.0;
    a[is + j + 1] = -gamma;
    push(a);
  }
  LpProblem lp;
  lp.c = Vec::Zero(nv);
  for (int n = 0; n < N; ++n) lp.c[il + n] = 1.0;
  lp.c[inu] = -1.0;
  lp.c[iw] = 1.0;
  lp.c[iw + 1] = -1.0;
  lp.A_in = Mat(rows.size(), nv);
  for (size_t i = 0; i < rows.size(); ++i) lp.A_in.row(i) = rows[i].transpose();
  lp.b_in = Vec::Zero(rows.size());
  lp.A_eq = Mat::Zero(1, nv);
  lp.A_eq(0, il) = 1.0;
  lp.A_eq(0, iw) = 1.0;
  lp.A_eq(0, iw + 1) = -1.0;
  lp.b_eq = Vec::Ones(1);
  lp.lb = Vec::Zero(nv);
  lp.lb[inu] = -kInf;
  lp.ub = Vec::Constant(nv, kInf);
  // an empty feasible set means no trajectory meets the hypotheses: the certificate is vacuous
  const SolveReport r = solve_lp(lp);
  if (r.status == SolveStatus::Infeasible) return 1.0;
  if (r.status == SolveStatus::Unbounded) return -kInf;
  if (!r.optimal()) throw NumericalError(std::string("horizon LP: ") + to_string(r.status));
  return r.objective;
}

/// Smallest N with alpha(N) > 0 assuming monotonicity in N (exponential search, then bisection).
inline int first_positive(const std::function<double(int)>& alpha, int n_cap) {
  int hi = 1;
  while (hi <= n_cap && !(alpha(hi) > 0.0)) hi *= 2;
  if (hi > n_cap) {
    if (!(alpha(n_cap) > 0.0)) return -1;
    hi = n_cap;
  }
  int lo = hi / 2;  // alpha(lo) <= 0 or lo == 0
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (alpha(mid) > 0.0) hi = mid;
    else lo = mid;
  }
  return hi;
}

/// Stabilizing horizon for a given method; Lp uses the LP certificate, the others their closed forms.
inline int min_stabilizing_horizon(double gamma, HorizonMethod method, int n_cap = 100000) {
  if (!(gamma >= 1.0)) throw SpecError("min_stabilizing_horizon: gamma < 1");
  switch (method) {
    case HorizonMethod::Simple:
      return first_positive([&](int N) { return alpha_simple(gamma, N); }, n_cap);
    case HorizonMethod::Decay:
      return first_positive([&](int N) { return alpha_decay(gamma, N); }, n_cap);
    case HorizonMethod::Lp:
      return first_positive([&](int N) { return alpha_from_lp(gamma, N); }, std::min(n_cap, 2000));
    default:
      throw SpecError("min_stabilizing_horizon: method needs extra data");
  }
}

/// Reference curves (approximations, not certificates).
inline double horizon_reference_curve(double gamma, HorizonMethod method, double eps_f = kInf) {
  const double lg = std::log(std::max(gamma, 1.0));
  switch (method) {
    case HorizonMethod::Simple: return gamma * gamma;
    case HorizonMethod::Decay: return 2.0 * gamma * lg;
    case HorizonMethod::Lp: return gamma * lg;
    case HorizonMethod::RelaxedClf: return gamma * (lg - std::log1p(1.0 / eps_f));
    default: return kNaN;
  }
}

/// alpha_N table and N_bar for N = 1..n_max.
inline HorizonCertificate certify_horizon(double gamma, int n_max, HorizonMethod method = HorizonMethod::Lp,
                                          double eps_f = kInf) {
  HorizonCertificate c;
  c.method = method;
  c.gamma = gamma;
  c.epsilon_f = eps_f;
  for (int N = 1; N <= n_max; ++N) {
    double a = 0.0;
    switch (method) {
      case HorizonMethod::Simple: a = alpha_simple(gamma, N); break;
      case HorizonMethod::Decay: a = alpha_decay(gamma, N); break;
      case HorizonMethod::Lp: a = alpha_from_lp(gamma, N); break;
      case HorizonMethod::RelaxedClf: a = alpha_with_terminal_weight(gamma, N, eps_f); break;
      default: throw SpecError("certify_horizon: unsupported method");
    }
    c.alpha.push_back(a);
    if (c.n_bar < 0 && a > 0.0) c.n_bar = N;
  }
  return c;
}

namespace detail {

// Block matrix of W(Ax+Bu) - W(x) + eps|x|^2 - l(x,u) for W = x'Sx.
inline Mat ioss_block(const Mat& A, const Mat& B, const Mat& S, const Mat& Lx, const Mat& R, double eps,
                      const Mat& E = Mat()) {
  const int n = static_cast<int>(A.rows()), m = static_cast<int>(B.cols());
  Mat M(n + m, n + m);
  M.topLeftCorner(n, n) = A.transpose() * S * A - S + eps * (E.size() ? E : Mat(Mat::Identity(n, n))) - Lx;
  M.topRightCorner(n, m) = A.transpose() * S * B;
  M.bottomLeftCorner(m, n) = B.transpose() * S * A;
  M.bottomRightCorner(m, m) = B.transpose() * S * B - R;
  return symmetrize(M);
}

}  // namespace detail

/// IOSS storage for l = |Cx|_Q^2 + |u|_R^2 + |x|_Qs^2 on a linear plant.
/// Sigma = tau * Sigma0 with Sigma0 the observer Lyapunov matrix; tau from a scalar search on the block condition.
inline DetectabilityStorage verify_ioss_storage(const Mat& A, const Mat& B, const Mat& C, const Mat& Q, const Mat& R,
                                                double eps_o, const Mat& Qs = Mat()) {
  const int n = static_cast<int>(A.rows());
  if (!(eps_o > 0.0)) throw SpecError("verify_ioss_storage: eps_o must be positive");
  const Mat Lx = C.transpose() * Q * C + (Qs.size() ? Qs : Mat(Mat::Zero(n, n)));
  DetectabilityStorage st;
  st.epsilon_o = eps_o;
  const double tol = 1e-12 * std::max(1.0, Lx.norm());
  {
    const double m0 = lambda_max(detail::ioss_block(A, B, Mat::Zero(n, n), Lx, R, eps_o));
    if (m0 <= tol) {
      st.Sigma = Mat::Zero(n, n);
      st.margin = m0;
      return st;
    }
  }
  // observer gain from the dual DARE, then Sigma0 from the closed-loop Lyapunov equation
  Mat Sigma0;
  try {
    const int p = static_cast<int>(C.rows());
    const auto dual = solve_dare(A.transpose(), C.transpose(), Mat::Identity(n, n), Mat::Identity(p, p));
    const Mat L = dual.K.transpose();
    const Mat Acl = A + L * C;
    Sigma0 = solve_discrete_lyapunov(Acl.transpose(), Mat::Identity(n, n));
  } catch (const Error&) {
    throw SynthesisError("verify_ioss_storage: (A,C) not detectable");
  }
  Sigma0 /= lambda_max(Sigma0);
  auto margin = [&](double tau) { return lambda_max(detail::ioss_block(A, B, tau * Sigma0, Lx, R, eps_o)); };
  // lambda_max of an affine family is convex in tau: golden-section search on log(tau)
  double a = -30.0, b = 30.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = margin(std::exp(c)), fd = margin(std::exp(d));
  for (int it = 0; it < 200 && b - a > 1e-10; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = margin(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = margin(std::exp(d));
    }
  }
  const double tau = std::exp(0.5 * (a + b));
  const double m = margin(tau);
  if (!(m <= tol)) {
    std::ostringstream os;
    os << "verify_ioss_storage: no admissible scaling (best block eigenvalue " << m << ")";
    throw SynthesisError(os.str());
  }
  st.tau = tau;
  st.Sigma = symmetrize(tau * Sigma0);
  st.gamma_o = lambda_max(st.Sigma);
  st.margin = m;
  return st;
}

/// Largest eps_o admitting a storage (bisection), or 0 if none.
inline double max_detectability_rate(const Mat& A, const Mat& B, const Mat& C, const Mat& Q, const Mat& R,
                                     const Mat& Qs = Mat(), int iters = 50) {
  double lo = 0.0, hi = 1.0;
  auto ok = [&](double e) {
    try {
      verify_ioss_storage(A, B, C, Q, R, e, Qs);
      return true;
    } catch (const SynthesisError&) {
      return false;
    }
  };
  while (ok(hi) && hi < 1e6) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (ok(mid)) lo = mid;
    else hi = mid;
  }
  return lo;
}

/// Least storage W = x'Sx >= 0 with W(Ax+Bu) - W(x) <= -eps x'Ex + l(x,u) for all u, from the
/// PSD-projected supremum iteration S <- [A'SA + eps E - Lx + A'SB (R - B'SB)^{-1} B'SA]_+.
/// Any fixed point satisfies the dissipation inequality; the result is re-checked on the block form.
inline std::optional<Mat> minimal_ioss_storage(const Mat& A, const Mat& B, const Mat& Lx, const Mat& R, const Mat& E,
                                               double eps, int max_iter = 20000) {
  const int n = static_cast<int>(A.rows());
  Mat S = Mat::Zero(n, n);
  const Mat base = eps * E - Lx;
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::LLT<Mat> llt(symmetrize(R - B.transpose() * S * B));
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Mat X = B.transpose() * S * A;
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(A.transpose() * S * A + base + X.transpose() * llt.solve(X)));
    const Vec ev = es.eigenvalues().cwiseMax(0.0);
    const Mat next = symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
    if (!next.allFinite() || next.norm() > 1e12) return std::nullopt;
    const double step = (next - S).norm();
    S = next;
    if (step <= 1e-12 * std::max(1.0, S.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged) return std::nullopt;
  // certify at a slightly smaller rate so the fixed-point residual is absorbed
  const double tol = 1e-12 * std::max(1.0, S.norm());
  if (lambda_max(detail::ioss_block(A, B, S, Lx, R, eps * (1.0 - 1e-6), E)) > tol) return std::nullopt;
  return S;
}

/// Rotated-cost certificate: with l~ = l + W(x) - W(x+) >= eps sigma(x) and terminal weight W >= 0,
/// J_N + W is bounded by (gamma + gamma_o) sigma, so the plain LP applies with gamma~ = (gamma + gamma_o) / eps.
inline double rotated_gamma(double gamma, double gamma_o, double eps_o) {
  if (!(eps_o > 0.0)) throw SpecError("rotated_gamma: eps_o must be positive");
  return std::max(1.0, (gamma + gamma_o) / eps_o);
}

/// Certified horizon for an unconstrained linear-quadratic plant with output cost.
struct DetectableHorizon {
  long n_bar = -1;
  double gamma = 0.0;        ///< cost controllability constant in the chosen metric
  double gamma_o = 0.0;      ///< storage bound in the chosen metric
  double epsilon_o = 0.0;
  double gamma_tilde = kNaN;
  double alpha = kNaN;       ///< alpha at n_bar
  std::string metric;        ///< "identity" or "value" (sigma(x) = x'P_inf x)
  std::string certificate;   ///< "rotated-closed-form" or "detectable-lp"
  Mat Sigma;
};

/// Detectable-cost pipeline. gamma from the infinite-horizon value (J_N increases in N); storage from
/// minimal_ioss_storage in two metrics sigma = |x|^2 and sigma = x'P_inf x; eps_o scanned below its
/// largest admissible value. N_bar from the rotated closed form, tightened by alpha_detectable when small.
inline DetectableHorizon certify_detectable_horizon(const Mat& A, const Mat& B, const Mat& C, const Mat& Q,
                                                    const Mat& R, const Mat& Qs, int lp_cap = 200,
                                                    int eps_grid = 10, int bisect_iters = 20) {
  const int n = static_cast<int>(A.rows());
  const Mat Lx = C.transpose() * Q * C + (Qs.size() ? Qs : Mat(Mat::Zero(n, n)));
  const auto dare = solve_dare(A, B, Lx, R);
  DetectableHorizon best;
  for (int metric = 0; metric < 2; ++metric) {
    const Mat E = metric == 0 ? Mat(Mat::Identity(n, n)) : Mat(dare.P);
    const double gamma = metric == 0 ? lambda_max(dare.P) : 1.0;
    auto storage = [&](double eps) { return minimal_ioss_storage(A, B, Lx, R, E, eps); };
    double lo = 0.0, hi = 1.0;
    while (storage(hi) && hi < 1e6) {
      lo = hi;
      hi *= 4.0;
    }
    if (lo == 0.0) {
      lo = hi * 1e-9;
      if (!storage(lo)) continue;
    }
    for (int i = 0; i < bisect_iters; ++i) {
      const double mid = std::sqrt(lo * hi);
      if (storage(mid)) lo = mid;
      else hi = mid;
    }
    const Eigen::LLT<Mat> Ell(E);
    const Mat Li = Ell.matrixL().solve(Mat::Identity(n, n));
    DetectableHorizon cand;
    for (int i = eps_grid; i >= 1; --i) {
      const double eps = lo * i / eps_grid;
      const auto S = storage(eps);
      if (!S) continue;
      // generalized eigenvalue: max x'Sx / x'Ex
      const double go = std::max(0.0, lambda_max(symmetrize(Li * *S * Li.transpose())));
      const double gt = rotated_gamma(gamma, go, eps);
      const long nb = closed_form_horizon(gt);
      if (cand.n_bar < 0 || nb < cand.n_bar) {
        cand.n_bar = nb;
        cand.gamma = gamma;
        cand.gamma_o = go;
        cand.epsilon_o = eps;
        cand.gamma_tilde = gt;
        cand.alpha = alpha_closed_form(gt, static_cast<int>(nb));
        cand.metric = metric == 0 ? "identity" : "value";
        cand.certificate = "rotated-closed-form";
        cand.Sigma = *S;
      }
    }
    if (cand.n_bar < 0) continue;
    if (cand.n_bar <= lp_cap) {
      const auto a = [&](int N) { return alpha_detectable(cand.gamma, cand.gamma_o, cand.epsilon_o, N); };
      const int nl = first_positive(a, static_cast<int>(cand.n_bar));
      if (nl > 0 && nl < cand.n_bar) {
        cand.n_bar = nl;
        cand.alpha = a(nl);
        cand.certificate = "detectable-lp";
      }
    }
    if (best.n_bar < 0 || cand.n_bar < best.n_bar) best = cand;
  }
  return best;
}

/// First-step gain of unconstrained LQ-MPC with horizon N and zero terminal weight, u = K x.
/// The Riccati recursion stops early once it has converged to machine precision.
inline Mat lq_mpc_gain(const Mat& A, const Mat& B, const Mat& Lx, const Mat& R, long N) {
  if (N < 1) throw SpecError("lq_mpc_gain: N < 1");
  Mat P = Mat::Zero(A.rows(), A.rows());
  auto gain = [&](const Mat& Pk) {
    return Mat(-(R + B.transpose() * Pk * B).ldlt().solve(B.transpose() * Pk * A));
  };
  for (long k = 1; k < N; ++k) {
    const Mat K = gain(P);
    const Mat next = symmetrize(A.transpose() * P * A + Lx + A.transpose() * P * B * K);
    const double step = (next - P).norm();
    P = next;
    if (step <= 1e-15 * std::max(1.0, P.norm())) break;
  }
  return gain(P);
}

/// Sampled relaxed-CLF constant: max over samples of (min_u V_f(f(x,u)) + l(x,u)) / V_f(x) - 1.
/// The inner minimization runs the SQP solver over the input box from a deterministic start.
inline double measure_epsilon_f(const std::function<Vec(const Vec&, const Vec&)>& f,
                                const std::function<double(const Vec&, const Vec&)>& ell,
                                const std::function<double(const Vec&)>& Vf, const std::vector<Vec>& samples,
                                const Vec& u_lo, const Vec& u_hi) {
  const int m = static_cast<int>(u_lo.size());
  double worst = -kInf;
  for (const Vec& x : samples) {
    const double v = Vf(x);
    if (!(v > 0.0)) continue;
    NlpProblem p;
    p.n = m;
    std::vector<int> rows;
    for (int i = 0; i < m; ++i) {
      if (std::isfinite(u_hi[i])) rows.push_back(i + 1);
      if (std::isfinite(u_lo[i])) rows.push_back(-(i + 1));
    }
    p.n_in = static_cast<int>(rows.size());
    auto obj = [&](const Vec& u) { return Vf(f(x, u)) + ell(x, u); };
    p.eval = [&](const Vec& u, bool deriv, NlpEval& e) {
      e.f = obj(u);
      e.ce = Vec();
      e.ci.resize(p.n_in);
      e.Je = Mat(0, m);
      e.Ji = Mat::Zero(p.n_in, m);
      for (int r = 0; r < p.n_in; ++r) {
        const int i = std::abs(rows[r]) - 1;
        if (rows[r] > 0) {
          e.ci[r] = u[i] - u_hi[i];
          e.Ji(r, i) = 1.0;
        } else {
          e.ci[r] = u_lo[i] - u[i];
          e.Ji(r, i) = -1.0;
        }
      }
      if (deriv) e.g = fd_gradient(obj, u);
    };
    p.hess_lag = [&](const Vec& u, const Vec&, const Vec&) { return fd_hessian(obj, u); };
    Vec u0 = Vec::Zero(m);
    for (int i = 0; i < m; ++i) u0[i] = std::clamp(0.0, u_lo[i], u_hi[i]);
    p.x0 = u0;
    p.kkt_tol = 1e-9;
    const auto r = solve_nlp(p);
    worst = std::max(worst, obj(r.x) / v - 1.0);
  }
  return worst;
}

/// Outcome of a sampled region-of-attraction check.
struct RegionReport {
  int samples = 0;
  int admitted = 0;  ///< samples with J_N <= V_bar
  int failures = 0;
  std::vector<int> failed_indices;
  std::vector<std::string> reasons;
  bool vacuous() const { return admitted == 0; }
};

/// Falsification harness: from each admitted sample, the closed loop must keep J_N <= V_bar and constraints.
inline RegionReport certify_region_of_attraction(const std::function<double(const Vec&)>& value,
                                                 const std::function<Vec(const Vec&)>& closed_loop_step,
                                                 const std::function<bool(const Vec&)>& admissible,
                                                 double v_bar, const std::vector<Vec>& samples, int steps) {
  RegionReport rep;
  rep.samples = static_cast<int>(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    Vec x = samples[i];
    if (!(value(x) <= v_bar)) continue;
    ++rep.admitted;
    std::string why;
    for (int t = 0; t < steps && why.empty(); ++t) {
      x = closed_loop_step(x);
      if (!x.allFinite()) why = "diverged at step " + std::to_string(t + 1);
      else if (!(value(x) <= v_bar * (1.0 + 1e-9) + 1e-12)) why = "left sublevel set at step " + std::to_string(t + 1);
      else if (admissible && !admissible(x)) why = "constraint violated at step " + std::to_string(t + 1);
    }
    if (!why.empty()) {
      ++rep.failures;
      rep.failed_indices.push_back(static_cast<int>(i));
      rep.reasons.push_back(why);
    }
  }
  return rep;
}

}  // namespace dynop
