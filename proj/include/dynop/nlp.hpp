#pragma once
// SQP with l1-merit line search, second-order correction, and elastic-mode restoration.

#include "dynop/qp.hpp"

namespace dynop {

/// Values (and optionally first derivatives) of an NLP at a point.
struct NlpEval {
  double f = 0.0;
  Vec g;   ///< objective gradient
  Vec ce;  ///< equality residuals (= 0)
  Mat Je;
  Vec ci;  ///< inequality residuals (<= 0)
  Mat Ji;
};

/// min f(x)  s.t.  ce(x) = 0,  ci(x) <= 0.
struct NlpProblem {
  int n = 0;
  int n_eq = 0;
  int n_in = 0;
  std::function<void(const Vec& x, bool derivatives, NlpEval& out)> eval;
  /// Optional Hessian of f + le'ce + li'ci; damped BFGS is used when absent.
  std::function<Mat(const Vec& x, const Vec& le, const Vec& li)> hess_lag;
  Vec x0;
  double kkt_tol = 1e-8;
  double cons_tol = 1e-8;
  int max_iter = 200;
};

namespace detail {

inline double l1_violation(const NlpEval& e) {
  double v = e.ce.size() ? e.ce.lpNorm<1>() : 0.0;
  for (int i = 0; i < e.ci.size(); ++i) v += std::max(0.0, e.ci[i]);
  return v;
}
inline double max_violation(const NlpEval& e) {
  double v = e.ce.size() ? e.ce.cwiseAbs().maxCoeff() : 0.0;
  if (e.ci.size()) v = std::max(v, e.ci.maxCoeff());
  return std::max(v, 0.0);
}

/// Makes a symmetric matrix positive definite (eigenvalue reflection/clamping) and adds a proximal shift.
inline Mat convexify(const Mat& H0) {
  const int n = static_cast<int>(H0.rows());
  Mat H = symmetrize(H0);
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  const double prox = 1e-6 * scale;
  Eigen::LLT<Mat> llt(H + 1e-10 * scale * Mat::Identity(n, n));
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Mat> es(H);
    Vec ev = es.eigenvalues().cwiseAbs();
    H = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    H = symmetrize(H);
  }
  H.diagonal().array() += prox;
  return H;
}

}  // namespace detail

/// Solves an NLP by SQP. Deterministic for identical inputs.
inline SolveReport solve_nlp(const NlpProblem& prob) {
  const int n = prob.n;
  SolveReport rep;
  if (prob.x0.size() != n || !prob.x0.allFinite()) throw SpecError("solve_nlp: bad initial guess");
  Vec x = prob.x0;
  NlpEval E;
  prob.eval(x, true, E);
  if (E.ce.size() != prob.n_eq || E.ci.size() != prob.n_in) throw SpecError("solve_nlp: callback dimension mismatch");
  auto finite_eval = [](const NlpEval& e) {
    return std::isfinite(e.f) && (e.ce.size() == 0 || e.ce.allFinite()) && (e.ci.size() == 0 || e.ci.allFinite());
  };
  if (!finite_eval(E) || !E.g.allFinite()) {
    rep.status = SolveStatus::Diverged;
    rep.x = x;
    return rep;
  }
  Vec le = Vec::Zero(prob.n_eq), li = Vec::Zero(prob.n_in);
  Mat B = Mat::Identity(n, n);
  double mu = 1.0;
  const bool exact = static_cast<bool>(prob.hess_lag);

  auto grad_lag = [&](const NlpEval& e, const Vec& a, const Vec& b) {
    Vec gl = e.g;
    if (a.size()) gl += e.Je.transpose() * a;
    if (b.size()) gl += e.Ji.transpose() * b;
    return gl;
  };
  auto kkt = [&](const NlpEval& e, const Vec& a, const Vec& b, double& stat, double& feas, double& compl_res) {
    stat = n ? grad_lag(e, a, b).cwiseAbs().maxCoeff() : 0.0;
    feas = detail::max_violation(e);
    compl_res = 0.0;
    for (int i = 0; i < b.size(); ++i) compl_res = std::max(compl_res, std::abs(b[i] * e.ci[i]));
  };

  auto solve_sub = [&](const Mat& H, const Vec& g, const Mat& Je, const Vec& beq, const Mat& Ji, const Vec& bin,
                       bool& elastic) -> SolveReport {
    QpProblem qp{H, g, Je, beq, Ji, bin};
    SolveReport r = solve_qp(qp);
    elastic = false;
    if (r.optimal()) return r;
    // elastic mode: d, v+ (eq), v- (eq), w (ineq) with l1 penalty
    elastic = true;
    const int me = static_cast<int>(beq.size()), mi = static_cast<int>(bin.size());
    const int ne = n + 2 * me + mi;
    const double rho = std::max(100.0, 10.0 * mu);
    QpProblem el;
    el.H = Mat::Zero(ne, ne);
    el.H.topLeftCorner(n, n) = H;
    el.H.diagonal().tail(ne - n).setConstant(1e-6);
    el.g = Vec::Zero(ne);
    el.g.head(n) = g;
    el.g.tail(ne - n).setConstant(rho);
    el.A_eq = Mat::Zero(me, ne);
    if (me) {
      el.A_eq.leftCols(n) = Je;
      el.A_eq.block(0, n, me, me) = -Mat::Identity(me, me);
      el.A_eq.block(0, n + me, me, me) = Mat::Identity(me, me);
    }
    el.b_eq = beq;
    el.A_in = Mat::Zero(mi + 2 * me + mi, ne);
    el.b_in = Vec::Zero(mi + 2 * me + mi);
    if (mi) {
      el.A_in.topLeftCorner(mi, n) = Ji;
      el.A_in.block(0, n + 2 * me, mi, mi) = -Mat::Identity(mi, mi);
      el.b_in.head(mi) = bin;
    }
    for (int k = 0; k < 2 * me + mi; ++k) el.A_in(mi + k, n + k) = -1.0;
    SolveReport re = solve_qp(el);
    SolveReport out = re;
    if (!re.x.size()) return re;
    out.x = re.x.head(n);
    out.lambda_eq = re.lambda_eq;
    out.lambda_in = re.lambda_in.size() ? Vec(re.lambda_in.head(mi)) : Vec(Vec::Zero(mi));
    return out;
  };

  Vec best_x = x;
  double best_merit = kInf;
  int it = 0;
  rep.status = SolveStatus::MaxIter;
  double stat = kInf, feas = kInf, compl_res = kInf;
  for (it = 0; it < prob.max_iter; ++it) {
    const double gscale = std::max(1.0, E.g.size() ? E.g.cwiseAbs().maxCoeff() : 0.0);
    Mat H = exact ? detail::convexify(prob.hess_lag(x, le, li)) : B;
    bool elastic = false;
    SolveReport qr = solve_sub(H, E.g, E.Je, -E.ce, E.Ji, -E.ci, elastic);
    if (!qr.x.size() || !qr.x.allFinite()) {
      rep.status = SolveStatus::Infeasible;
      break;
    }
    const Vec d = qr.x;
    const Vec qle = qr.lambda_eq.size() ? qr.lambda_eq : Vec(Vec::Zero(prob.n_eq));
    const Vec qli = qr.lambda_in.size() ? qr.lambda_in : Vec(Vec::Zero(prob.n_in));
    kkt(E, qle, qli, stat, feas, compl_res);
    if (!elastic && stat <= prob.kkt_tol * gscale && feas <= prob.cons_tol && compl_res <= prob.kkt_tol * gscale) {
      le = qle;
      li = qli;
      rep.status = SolveStatus::Optimal;
      break;
    }
    const double dnorm = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
    if (dnorm <= 1e-15 * (1.0 + (x.size() ? x.cwiseAbs().maxCoeff() : 0.0))) {
      le = qle;
      li = qli;
      rep.status = (feas <= prob.cons_tol && !elastic) ? SolveStatus::Optimal : SolveStatus::Infeasible;
      break;
    }
    double mreq = 0.0;
    if (qle.size()) mreq = std::max(mreq, qle.cwiseAbs().maxCoeff());
    if (qli.size()) mreq = std::max(mreq, qli.cwiseAbs().maxCoeff());
    if (mu < 2.0 * mreq) mu = std::max(2.0 * mreq, 1.5 * mu);
    const double v0 = detail::l1_violation(E);
    const double phi0 = E.f + mu * v0;
    if (phi0 < best_merit && feas <= prob.cons_tol) {
      best_merit = phi0;
      best_x = x;
    }
    double D = E.g.dot(d) - mu * v0;
    if (D >= 0.0) D = -d.dot(H * d);
    // predicted merit decrease below the resolution of the merit value: no measurable progress is possible
    if (!elastic && feas <= prob.cons_tol && -D <= 1e-14 * (1.0 + std::abs(phi0))) {
      le = qle;
      li = qli;
      rep.status = SolveStatus::Optimal;
      break;
    }
    double t = 1.0;
    bool accepted = false;
    Vec xn;
    NlpEval En;
    while (t >= 1e-12) {
      xn = x + t * d;
      prob.eval(xn, false, En);
      const double phin = finite_eval(En) ? En.f + mu * detail::l1_violation(En) : kInf;
      if (phin <= phi0 + 1e-4 * t * D) {
        accepted = true;
        break;
      }
      if (t == 1.0 && finite_eval(En)) {
        // second-order correction
        bool el2 = false;
        SolveReport sc = solve_sub(H, E.g, E.Je, -(En.ce - E.Je * d), E.Ji, -(En.ci - E.Ji * d), el2);
        if (sc.x.size() && sc.x.allFinite() && !el2) {
          const Vec xs = x + sc.x;
          NlpEval Es;
          prob.eval(xs, false, Es);
          const double phis = finite_eval(Es) ? Es.f + mu * detail::l1_violation(Es) : kInf;
          if (phis <= phi0 + 1e-4 * D) {
            xn = xs;
            accepted = true;
            break;
          }
        }
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!exact && (B - Mat::Identity(n, n)).norm() > 0.0) {
        B = Mat::Identity(n, n);
        continue;
      }
      le = qle;
      li = qli;
      rep.status = SolveStatus::MaxIter;
      break;
    }
    NlpEval Enew;
    prob.eval(xn, true, Enew);
    if (!finite_eval(Enew) || !Enew.g.allFinite()) {
      rep.status = SolveStatus::Diverged;
      x = xn;
      break;
    }
    if (!exact) {
      const Vec s = xn - x;
      const Vec y = grad_lag(Enew, qle, qli) - grad_lag(E, qle, qli);
      const Vec Bs = B * s;
      const double sBs = s.dot(Bs);
      double sy = s.dot(y);
      Vec yy = y;
      if (sy < 0.2 * sBs) {
        const double theta = 0.8 * sBs / (sBs - sy);
        yy = theta * y + (1.0 - theta) * Bs;
        sy = s.dot(yy);
      }
      if (sBs > 1e-300 && sy > 1e-300) B += yy * yy.transpose() / sy - Bs * Bs.transpose() / sBs;
    }
    x = xn;
    E = Enew;
    le = qle;
    li = qli;
  }
  if (rep.status == SolveStatus::MaxIter && best_merit < kInf) {
    const double cur = E.f + mu * detail::l1_violation(E);
    if (best_merit < cur) {
      x = best_x;
      prob.eval(x, true, E);
    }
  }
  kkt(E, le, li, stat, feas, compl_res);
  rep.x = x;
  rep.objective = E.f;
  rep.kkt_residual = std::max(stat, compl_res);
  rep.constraint_violation = feas;
  rep.lambda_eq = le;
  rep.lambda_in = li;
  rep.iterations = it;
  for (int i = 0; i < li.size(); ++i)
    if (li[i] > 0.0 || E.ci[i] >= -prob.cons_tol) rep.active_set.push_back(i);
  return rep;
}

}  // namespace dynop
