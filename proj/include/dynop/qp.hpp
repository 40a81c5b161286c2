#pragma once
// Dense convex QP: dual active-set method of Goldfarb and Idnani.

#include <Eigen/Cholesky>

#include "dynop/lp.hpp"
#include "dynop/riccati.hpp"

namespace dynop {

/// min 0.5 x'Hx + g'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
struct QpProblem {
  Mat H;
  Vec g;
  Mat A_eq;
  Vec b_eq;
  Mat A_in;
  Vec b_in;
};

struct QpOptions {
  double regularization = 1e-8;  ///< Tikhonov shift applied when H is not numerically PD
  int max_iter = 0;              ///< 0: 50*(n+rows)
};

namespace detail {

struct GiState {
  Mat J, R;
  int iq = 0;
  double R_norm = 1.0;
};

inline bool gi_add_constraint(GiState& s, Vec& d) {
  const int n = static_cast<int>(d.size());
  for (int j = n - 1; j >= s.iq + 1; --j) {
    double cc = d[j - 1], ss = d[j];
    const double h = std::hypot(cc, ss);
    if (h == 0.0) continue;
    d[j] = 0.0;
    ss /= h;
    cc /= h;
    if (cc < 0.0) {
      cc = -cc;
      ss = -ss;
      d[j - 1] = -h;
    } else {
      d[j - 1] = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = 0; k < n; ++k) {
      const double t1 = s.J(k, j - 1), t2 = s.J(k, j);
      s.J(k, j - 1) = t1 * cc + t2 * ss;
      s.J(k, j) = xny * (t1 + s.J(k, j - 1)) - t2;
    }
  }
  ++s.iq;
  for (int i = 0; i < s.iq; ++i) s.R(i, s.iq - 1) = d[i];
  if (std::abs(d[s.iq - 1]) <= std::numeric_limits<double>::epsilon() * s.R_norm) return false;
  s.R_norm = std::max(s.R_norm, std::abs(d[s.iq - 1]));
  return true;
}

inline void gi_delete_constraint(GiState& s, std::vector<int>& A, Vec& u, int p, int l) {
  const int n = static_cast<int>(s.J.rows());
  int qq = -1;
  for (int i = p; i < s.iq; ++i)
    if (A[i] == l) {
      qq = i;
      break;
    }
  if (qq < 0) return;
  for (int i = qq; i < s.iq - 1; ++i) {
    A[i] = A[i + 1];
    u[i] = u[i + 1];
    for (int j = 0; j < n; ++j) s.R(j, i) = s.R(j, i + 1);
  }
  A[s.iq - 1] = A[s.iq];
  u[s.iq - 1] = u[s.iq];
  A[s.iq] = 0;
  u[s.iq] = 0.0;
  for (int j = 0; j < s.iq; ++j) s.R(j, s.iq - 1) = 0.0;
  --s.iq;
  if (s.iq == 0) return;
  for (int j = qq; j < s.iq; ++j) {
    double cc = s.R(j, j), ss = s.R(j + 1, j);
    const double h = std::hypot(cc, ss);
    if (h == 0.0) continue;
    cc /= h;
    ss /= h;
    s.R(j + 1, j) = 0.0;
    if (cc < 0.0) {
      s.R(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      s.R(j, j) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < s.iq; ++k) {
      const double t1 = s.R(j, k), t2 = s.R(j + 1, k);
      s.R(j, k) = t1 * cc + t2 * ss;
      s.R(j + 1, k) = xny * (t1 + s.R(j, k)) - t2;
    }
    for (int k = 0; k < n; ++k) {
      const double t1 = s.J(k, j), t2 = s.J(k, j + 1);
      s.J(k, j) = t1 * cc + t2 * ss;
      s.J(k, j + 1) = xny * (s.J(k, j) + t1) - t2;
    }
  }
}

}  // namespace detail

/// Solves a strictly convex (after regularization) QP.
/// Multipliers follow H x + g + A_eq' lambda_eq + A_in' lambda_in = 0, lambda_in >= 0.
inline SolveReport solve_qp(const QpProblem& qp, const QpOptions& opt = {}) {
  const int n = static_cast<int>(qp.g.size());
  const int p = static_cast<int>(qp.A_eq.rows());
  const int m = static_cast<int>(qp.A_in.rows());
  if (qp.H.rows() != n || qp.H.cols() != n) throw SpecError("solve_qp: H dimension mismatch");
  if ((p && qp.A_eq.cols() != n) || (m && qp.A_in.cols() != n) || qp.b_eq.size() != p || qp.b_in.size() != m)
    throw SpecError("solve_qp: constraint dimension mismatch");
  SolveReport rep;
  // constraints in GI form: ce' x + ce0 = 0, ci' x + ci0 >= 0
  Mat CE = p ? Mat(qp.A_eq.transpose()) : Mat(n, 0);
  Vec ce0 = -qp.b_eq;
  Mat CI = m ? Mat(-qp.A_in.transpose()) : Mat(n, 0);
  Vec ci0 = qp.b_in;

  Mat G = symmetrize(qp.H);
  const double scale = std::max(1.0, G.diagonal().cwiseAbs().maxCoeff());
  Eigen::LLT<Mat> llt;
  double shift = 0.0;
  for (int attempt = 0; attempt < 20; ++attempt) {
    llt.compute(G + shift * Mat::Identity(n, n));
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
      const Vec dl = Mat(llt.matrixL()).diagonal();
      ok = dl.minCoeff() > std::sqrt(1e-14 * scale);
    }
    if (ok) break;
    shift = (shift == 0.0) ? opt.regularization * scale : shift * 10.0;
  }
  if (shift > 0.0) G += shift * Mat::Identity(n, n);
  const Mat L = llt.matrixL();

  const Mat J0 = L.transpose().triangularView<Eigen::Upper>().solve(Mat::Identity(n, n));
  const Vec x0 = -llt.solve(qp.g);
  const double eps = std::numeric_limits<double>::epsilon();
  const double tol = 1e-12;
  const double cscale = std::max(1.0, ci0.size() ? ci0.cwiseAbs().maxCoeff() : 1.0);
  // violations below this are treated as satisfied when the constraint is dependent on the active set
  const double degenerate_tol = 1e-9 * cscale;
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : 50 * (n + m + p) + 100;

  detail::GiState s;
  Vec x, u;
  std::vector<int> A;
  std::vector<bool> excluded(m, false);
  int iter = 0;
  Vec d(n), z(n), r;

  auto compute_z_r = [&](const Vec& dd, Vec& zz, Vec& rr) {
    zz = s.J.rightCols(n - s.iq) * dd.tail(n - s.iq);
    rr.resize(s.iq);
    for (int i = s.iq - 1; i >= 0; --i) {
      double sum = 0.0;
      for (int j = i + 1; j < s.iq; ++j) sum += s.R(i, j) * rr[j];
      rr[i] = (dd[i] - sum) / s.R(i, i);
    }
  };

  // returns -1 when finished (status set), otherwise the index of a degenerate constraint to exclude
  auto run = [&]() -> int {
    s.J = J0;
    s.R = Mat::Zero(n, n);
    s.iq = 0;
    s.R_norm = 1.0;
    x = x0;
    u = Vec::Zero(n + m + p);
    A.assign(n + m + p, 0);
    for (int i = 0; i < p; ++i) {
      const Vec np = CE.col(i);
      d = s.J.transpose() * np;
      compute_z_r(d, z, r);
      double t2 = 0.0;
      const double znp = z.dot(np);
      if (std::abs(znp) > eps) t2 = (-np.dot(x) - ce0[i]) / znp;
      x += t2 * z;
      u[s.iq] = t2;
      for (int k = 0; k < s.iq; ++k) u[k] -= t2 * r[k];
      A[i] = -i - 1;
      if (!detail::gi_add_constraint(s, d)) {
        rep.status = SolveStatus::Infeasible;  // linearly dependent equalities
        return -1;
      }
    }
    std::vector<bool> active(m, false);
    while (true) {
      if (++iter > max_iter) {
        rep.status = SolveStatus::MaxIter;
        return -1;
      }
      int ip = -1;
      double smin = -1e-13 * cscale;
      for (int i = 0; i < m; ++i) {
        const double si = CI.col(i).dot(x) + ci0[i];
        if (!active[i] && !excluded[i] && si < smin) {
          smin = si;
          ip = i;
        }
      }
      if (ip < 0) {
        rep.status = SolveStatus::Optimal;
        return -1;
      }
      const Vec np = CI.col(ip);
      u[s.iq] = 0.0;
      A[s.iq] = ip;
      double sp = smin;
      while (true) {
        d = s.J.transpose() * np;
        compute_z_r(d, z, r);
        double t1 = kInf;
        int l = -1;
        for (int k = p; k < s.iq; ++k) {
          if (r[k] > tol && u[k] / r[k] < t1) {
            t1 = u[k] / r[k];
            l = A[k];
          }
        }
        double t2 = kInf;
        const double znp = z.dot(np);
        if (z.squaredNorm() > eps * eps && std::abs(znp) > eps) t2 = -sp / znp;
        const double t = std::min(t1, t2);
        if (!std::isfinite(t)) {
          if (smin > -degenerate_tol) return ip;
          rep.status = SolveStatus::Infeasible;
          return -1;
        }
        if (!std::isfinite(t2)) {
          for (int k = 0; k < s.iq; ++k) u[k] -= t * r[k];
          u[s.iq] += t;
          active[l] = false;
          detail::gi_delete_constraint(s, A, u, p, l);
          continue;
        }
        x += t * z;
        for (int k = 0; k < s.iq; ++k) u[k] -= t * r[k];
        u[s.iq] += t;
        if (t == t2) {
          if (!detail::gi_add_constraint(s, d)) return ip;
          active[ip] = true;
          break;
        }
        active[l] = false;
        detail::gi_delete_constraint(s, A, u, p, l);
        sp = np.dot(x) + ci0[ip];
        if (++iter > max_iter) break;
      }
    }
  };

  for (int bad = run(); bad >= 0; bad = run()) excluded[bad] = true;

  rep.x = x;
  rep.iterations = iter;
  rep.objective = 0.5 * x.dot(qp.H * x) + qp.g.dot(x);
  rep.lambda_eq = Vec::Zero(p);
  rep.lambda_in = Vec::Zero(m);
  for (int k = 0; k < s.iq; ++k) {
    if (A[k] < 0)
      rep.lambda_eq[-A[k] - 1] = -u[k];
    else {
      rep.lambda_in[A[k]] = u[k];
      rep.active_set.push_back(A[k]);
    }
  }
  std::sort(rep.active_set.begin(), rep.active_set.end());
  Vec stat = qp.H * x + qp.g;
  if (p) stat += qp.A_eq.transpose() * rep.lambda_eq;
  if (m) stat += qp.A_in.transpose() * rep.lambda_in;
  double viol = 0.0;
  if (p) viol = std::max(viol, (qp.A_eq * x - qp.b_eq).cwiseAbs().maxCoeff());
  if (m) viol = std::max(viol, (qp.A_in * x - qp.b_in).maxCoeff());
  rep.constraint_violation = viol;
  double compl_res = 0.0;
  for (int i = 0; i < m; ++i)
    compl_res = std::max(compl_res, std::abs(rep.lambda_in[i] * (qp.A_in.row(i).dot(x) - qp.b_in[i])));
  rep.kkt_residual = std::max(stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0, compl_res);
  return rep;
}

}  // namespace dynop
