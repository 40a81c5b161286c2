#pragma once
// Dense two-phase simplex for small linear programs.

#include <string>
#include <vector>

#include "dynop/core.hpp"

namespace dynop {

enum class SolveStatus { Optimal, MaxIter, Infeasible, Unbounded, Diverged };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "optimal";
    case SolveStatus::MaxIter:
      return "max-iter";
    case SolveStatus::Infeasible:
      return "infeasible";
    case SolveStatus::Unbounded:
      return "unbounded";
    case SolveStatus::Diverged:
    default:
      return "diverged";
  }
}

/// Result of an LP, QP, or NLP solve.
struct SolveReport {
  SolveStatus status = SolveStatus::Diverged;
  Vec x;
  double objective = kInf;
  double kkt_residual = kInf;
  double constraint_violation = kInf;
  Vec lambda_eq;       ///< equality multipliers
  Vec lambda_in;       ///< inequality multipliers (>= 0 for rows A x <= b)
  std::vector<int> active_set;  ///< active inequality rows
  int iterations = 0;
  bool optimal() const { return status == SolveStatus::Optimal; }
};

/// min c'x  s.t.  A_in x <= b_in,  A_eq x = b_eq,  lb <= x <= ub (entries may be infinite).
struct LpProblem {
  Vec c;
  Mat A_in;
  Vec b_in;
  Mat A_eq;
  Vec b_eq;
  Vec lb;
  Vec ub;
};

namespace detail {

class Tableau {
 public:
  Tableau(Mat A, Vec b) : A_(std::move(A)), b_(std::move(b)) {}

  // Pivot-based simplex on rows of [A | b] with cost row c; basis indices in basis_.
  // Returns 0 optimal, 1 unbounded, 2 iteration limit.
  int run(const Vec& c, std::vector<int>& basis, const std::vector<bool>& allowed, int& iters, int max_iters) {
    const int m = static_cast<int>(A_.rows());
    const int nv = static_cast<int>(A_.cols());
    // reduced cost row: d = c - c_B' A (tableau already in canonical form for basis)
    Vec d = c;
    for (int i = 0; i < m; ++i) d -= c[basis[i]] * A_.row(i).transpose();
    int degenerate_run = 0;
    while (iters < max_iters) {
      const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
      int enter = -1;
      const bool bland = degenerate_run > 50;
      double best = -1e-11 * scale;
      for (int j = 0; j < nv; ++j) {
        if (!allowed[j]) continue;
        if (d[j] < best) {
          enter = j;
          if (bland) break;
          best = d[j];
        }
      }
      if (enter < 0) return 0;
      int leave = -1;
      double ratio = kInf;
      for (int i = 0; i < m; ++i) {
        const double a = A_(i, enter);
        if (a > 1e-11) {
          const double r = b_[i] / a;
          if (r < ratio - 1e-14 || (std::abs(r - ratio) <= 1e-14 && leave >= 0 && basis[i] < basis[leave])) {
            ratio = r;
            leave = i;
          }
        }
      }
      if (leave < 0) return 1;
      degenerate_run = (ratio <= 1e-14) ? degenerate_run + 1 : 0;
      pivot(leave, enter, d);
      basis[leave] = enter;
      ++iters;
    }
    return 2;
  }

  void pivot(int r, int col, Vec& d) {
    const double p = A_(r, col);
    A_.row(r) /= p;
    b_[r] /= p;
    for (int i = 0; i < A_.rows(); ++i) {
      if (i == r) continue;
      const double f = A_(i, col);
      if (f != 0.0) {
        A_.row(i) -= f * A_.row(r);
        b_[i] -= f * b_[r];
      }
    }
    const double f = d[col];
    if (f != 0.0) d -= f * A_.row(r).transpose();
  }

  Mat A_;
  Vec b_;
};

}  // namespace detail

/// Solves an LP by the two-phase simplex method (Dantzig pricing, Bland fallback on stalls).
/// The final basis is re-solved from the original data and certified by reduced costs.
inline SolveReport solve_lp(const LpProblem& lp, int max_iters = 50000) {
  const int n = static_cast<int>(lp.c.size());
  const Vec lb = lp.lb.size() ? lp.lb : Vec::Constant(n, 0.0);
  const Vec ub = lp.ub.size() ? lp.ub : Vec::Constant(n, kInf);
  const Mat A_in = lp.A_in.size() ? lp.A_in : Mat(0, n);
  const Mat A_eq = lp.A_eq.size() ? lp.A_eq : Mat(0, n);
  const Vec b_in = lp.b_in.size() ? lp.b_in : Vec(0);
  const Vec b_eq = lp.b_eq.size() ? lp.b_eq : Vec(0);
  if (!lp.c.allFinite() || !A_in.allFinite() || !A_eq.allFinite() || !b_in.allFinite() || !b_eq.allFinite())
    throw SpecError("solve_lp: non-finite data");

  // x = x_off + T y, y >= 0
  Vec x_off = Vec::Zero(n);
  std::vector<std::pair<int, double>> ycol;  // (original var, sign)
  std::vector<int> bounded;                  // y index with finite upper width
  std::vector<double> width;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(lb[j])) {
      x_off[j] = lb[j];
      ycol.emplace_back(j, 1.0);
      if (std::isfinite(ub[j])) {
        if (ub[j] < lb[j]) {
          SolveReport r;
          r.status = SolveStatus::Infeasible;
          return r;
        }
        bounded.push_back(static_cast<int>(ycol.size()) - 1);
        width.push_back(ub[j] - lb[j]);
      }
    } else if (std::isfinite(ub[j])) {
      x_off[j] = ub[j];
      ycol.emplace_back(j, -1.0);
    } else {
      ycol.emplace_back(j, 1.0);
      ycol.emplace_back(j, -1.0);
    }
  }
  const int ny = static_cast<int>(ycol.size());
  Mat T = Mat::Zero(n, ny);
  for (int k = 0; k < ny; ++k) T(ycol[k].first, k) = ycol[k].second;

  const int m_in = static_cast<int>(A_in.rows()) + static_cast<int>(bounded.size());
  const int m_eq = static_cast<int>(A_eq.rows());
  const int m = m_in + m_eq;
  const int ns = m_in;  // slack per inequality
  const int nstd = ny + ns;
  Mat S = Mat::Zero(m, nstd);
  Vec rhs(m);
  if (A_in.rows()) {
    S.topLeftCorner(A_in.rows(), ny) = A_in * T;
    rhs.head(A_in.rows()) = b_in - A_in * x_off;
  }
  for (size_t k = 0; k < bounded.size(); ++k) {
    const int r = static_cast<int>(A_in.rows() + k);
    S(r, bounded[k]) = 1.0;
    rhs[r] = width[k];
  }
  for (int i = 0; i < m_in; ++i) S(i, ny + i) = 1.0;
  if (m_eq) {
    S.block(m_in, 0, m_eq, ny) = A_eq * T;
    rhs.tail(m_eq) = b_eq - A_eq * x_off;
  }
  const Vec cstd = [&] {
    Vec c = Vec::Zero(nstd);
    c.head(ny) = T.transpose() * lp.c;
    return c;
  }();

  // sign-normalize rows, choose initial basis (slack where possible, else artificial)
  std::vector<int> basis(m, -1);
  int nart = 0;
  for (int i = 0; i < m; ++i) {
    if (rhs[i] < 0) {
      S.row(i) *= -1.0;
      rhs[i] *= -1.0;
    }
    if (i < m_in && S(i, ny + i) > 0)
      basis[i] = ny + i;
    else
      ++nart;
  }
  const int ntot = nstd + nart;
  Mat A = Mat::Zero(m, ntot);
  A.leftCols(nstd) = S;
  {
    int a = 0;
    for (int i = 0; i < m; ++i)
      if (basis[i] < 0) {
        A(i, nstd + a) = 1.0;
        basis[i] = nstd + a;
        ++a;
      }
  }
  detail::Tableau tab(A, rhs);
  int iters = 0;
  SolveReport rep;
  if (nart > 0) {
    Vec c1 = Vec::Zero(ntot);
    c1.tail(nart).setOnes();
    std::vector<bool> allowed(ntot, true);
    const int st = tab.run(c1, basis, allowed, iters, max_iters);
    if (st == 2) {
      rep.status = SolveStatus::MaxIter;
      rep.iterations = iters;
      return rep;
    }
    double infeas = 0.0;
    for (int i = 0; i < m; ++i)
      if (basis[i] >= nstd) infeas += tab.b_[i];
    if (infeas > 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff())) {
      rep.status = SolveStatus::Infeasible;
      rep.iterations = iters;
      return rep;
    }
    // drive artificials out of the basis
    Vec dummy = Vec::Zero(ntot);
    std::vector<int> redundant;
    for (int i = 0; i < m; ++i) {
      if (basis[i] < nstd) continue;
      int col = -1;
      double best = 1e-9;
      for (int j = 0; j < nstd; ++j)
        if (std::abs(tab.A_(i, j)) > best) {
          best = std::abs(tab.A_(i, j));
          col = j;
        }
      if (col >= 0) {
        tab.pivot(i, col, dummy);
        basis[i] = col;
      } else {
        redundant.push_back(i);
      }
    }
    if (!redundant.empty()) {
      std::vector<int> keep;
      for (int i = 0; i < m; ++i)
        if (std::find(redundant.begin(), redundant.end(), i) == redundant.end()) keep.push_back(i);
      Mat A2(keep.size(), ntot);
      Vec b2(keep.size());
      std::vector<int> basis2;
      for (size_t k = 0; k < keep.size(); ++k) {
        A2.row(k) = tab.A_.row(keep[k]);
        b2[k] = tab.b_[keep[k]];
        basis2.push_back(basis[keep[k]]);
      }
      tab = detail::Tableau(A2, b2);
      basis = basis2;
      Mat S2(keep.size(), nstd);
      Vec r2(keep.size());
      for (size_t k = 0; k < keep.size(); ++k) {
        S2.row(k) = S.row(keep[k]);
        r2[k] = rhs[keep[k]];
      }
      S = S2;
      rhs = r2;
    }
  }
  Vec c2 = Vec::Zero(ntot);
  c2.head(nstd) = cstd;
  std::vector<bool> allowed(ntot, false);
  for (int j = 0; j < nstd; ++j) allowed[j] = true;
  const int st = tab.run(c2, basis, allowed, iters, max_iters);
  rep.iterations = iters;
  if (st == 1) {
    rep.status = SolveStatus::Unbounded;
    return rep;
  }
  if (st == 2) {
    rep.status = SolveStatus::MaxIter;
    return rep;
  }
  const int mb = static_cast<int>(basis.size());
  // polish: re-solve the basic system from the original data
  Vec ystd = Vec::Zero(nstd);
  Mat Bm(mb, mb);
  for (int i = 0; i < mb; ++i) Bm.col(i) = S.col(basis[i]);
  Eigen::FullPivLU<Mat> lu(Bm);
  Vec xb = lu.solve(rhs);
  if (lu.isInvertible() && xb.allFinite() && xb.minCoeff() >= -1e-9 && (Bm * xb - rhs).norm() <= 1e-9 * (1 + rhs.norm())) {
    for (int i = 0; i < mb; ++i) ystd[basis[i]] = std::max(0.0, xb[i]);
  } else {
    for (int i = 0; i < mb; ++i) ystd[basis[i]] = tab.b_[i];
  }
  Vec cb(mb);
  for (int i = 0; i < mb; ++i) cb[i] = cstd[basis[i]];
  const Vec dual = lu.isInvertible() ? Vec(lu.transpose().solve(cb)) : Vec(Vec::Zero(mb));
  const Vec red = cstd - S.transpose() * dual;
  double kkt = 0.0;
  for (int j = 0; j < nstd; ++j) kkt = std::max(kkt, std::max(0.0, -red[j]));
  rep.x = x_off + T * ystd.head(ny);
  rep.objective = lp.c.dot(rep.x);
  rep.kkt_residual = kkt;
  double viol = 0.0;
  if (A_in.rows()) viol = std::max(viol, (A_in * rep.x - b_in).maxCoeff());
  if (A_eq.rows()) viol = std::max(viol, (A_eq * rep.x - b_eq).cwiseAbs().maxCoeff());
  for (int j = 0; j < n; ++j) viol = std::max({viol, lb[j] - rep.x[j], rep.x[j] - ub[j]});
  rep.constraint_violation = viol;
  for (int i = 0; i < A_in.rows(); ++i)
    if (std::abs(A_in.row(i).dot(rep.x) - b_in[i]) <= 1e-9 * (1 + std::abs(b_in[i]))) rep.active_set.push_back(i);
  rep.status = SolveStatus::Optimal;
  return rep;
}

}  // namespace dynop
