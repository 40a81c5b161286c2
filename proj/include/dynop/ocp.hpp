#pragma once
// Block-structured NLP assembly for multiple-shooting optimal control problems.

#include <vector>

#include "dynop/nlp.hpp"

namespace dynop {

/// Vector-valued function of a subset of the decision variables.
struct Term {
  std::vector<int> idx;
  int dim = 1;
  std::function<Vec(const Vec&)> fn;
  std::function<Mat(const Vec&)> jac;                   ///< optional; finite differences otherwise
  std::function<Mat(const Vec&, const Vec&)> hess;      ///< optional Hessian of w'fn
  bool linear = false;
};

inline std::vector<int> index_range(int off, int len) {
  std::vector<int> v(len);
  for (int i = 0; i < len; ++i) v[i] = off + i;
  return v;
}

inline std::vector<int> join(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// 0.5 w'Hw + g'w + c on the selected variables.
inline Term quadratic_term(std::vector<int> idx, Mat H, Vec g, double c = 0.0) {
  Term t;
  t.idx = std::move(idx);
  t.fn = [H, g, c](const Vec& w) { return Vec::Constant(1, 0.5 * w.dot(H * w) + g.dot(w) + c); };
  t.jac = [H, g](const Vec& w) { return Mat((H * w + g).transpose()); };
  t.hess = [H](const Vec&, const Vec& l) { return Mat(l[0] * H); };
  return t;
}

/// A w - b on the selected variables.
inline Term linear_term(std::vector<int> idx, Mat A, Vec b) {
  Term t;
  t.idx = std::move(idx);
  t.dim = static_cast<int>(A.rows());
  t.fn = [A, b](const Vec& w) { return Vec(A * w - b); };
  t.jac = [A](const Vec&) { return A; };
  t.linear = true;
  return t;
}

/// Scalar objective from a callable, derivatives by finite differences.
inline Term scalar_term(std::vector<int> idx, std::function<double(const Vec&)> f) {
  Term t;
  t.idx = std::move(idx);
  t.fn = [f = std::move(f)](const Vec& w) { return Vec::Constant(1, f(w)); };
  return t;
}

class Ocp {
 public:
  Vec z0;
  std::vector<Term> costs, eqs, ins;
  double cost_const = 0.0;

  int add_vars(const Vec& init) {
    const int off = static_cast<int>(z0.size());
    z0.conservativeResize(off + init.size());
    z0.tail(init.size()) = init;
    return off;
  }
  int size() const { return static_cast<int>(z0.size()); }
  int n_eq() const { return count(eqs); }
  int n_in() const { return count(ins); }

  double objective(const Vec& z) const {
    double f = cost_const;
    for (const auto& t : costs) f += t.fn(gather(z, t.idx))[0];
    return f;
  }
  /// max(|ce|_inf, max(ci)) at z.
  double violation(const Vec& z) const {
    double v = 0.0;
    for (const auto& t : eqs) v = std::max(v, t.fn(gather(z, t.idx)).cwiseAbs().maxCoeff());
    for (const auto& t : ins) v = std::max(v, t.fn(gather(z, t.idx)).maxCoeff());
    return v;
  }

  NlpProblem problem(int max_iter = 200) const {
    NlpProblem p;
    p.n = size();
    p.n_eq = n_eq();
    p.n_in = n_in();
    p.x0 = z0;
    p.max_iter = max_iter;
    p.eval = [this](const Vec& z, bool deriv, NlpEval& out) { eval(z, deriv, out); };
    p.hess_lag = [this](const Vec& z, const Vec& le, const Vec& li) { return hessian(z, le, li); };
    return p;
  }

  void eval(const Vec& z, bool deriv, NlpEval& out) const {
    const int n = size();
    out.f = cost_const;
    out.ce.resize(n_eq());
    out.ci.resize(n_in());
    if (deriv) {
      out.g = Vec::Zero(n);
      out.Je = Mat::Zero(out.ce.size(), n);
      out.Ji = Mat::Zero(out.ci.size(), n);
    }
    for (const auto& t : costs) {
      const Vec w = gather(z, t.idx);
      out.f += t.fn(w)[0];
      if (deriv) {
        const Mat J = jacobian(t, w);
        for (size_t j = 0; j < t.idx.size(); ++j) out.g[t.idx[j]] += J(0, j);
      }
    }
    fill(eqs, z, deriv, out.ce, out.Je);
    fill(ins, z, deriv, out.ci, out.Ji);
  }

  Mat hessian(const Vec& z, const Vec& le, const Vec& li) const {
    const int n = size();
    Mat H = Mat::Zero(n, n);
    auto add = [&](const Term& t, const Vec& l) {
      if (t.linear || l.cwiseAbs().maxCoeff() == 0.0) return;
      const Vec w = gather(z, t.idx);
      Mat h;
      if (t.hess) {
        h = t.hess(w, l);
      } else if (t.jac) {
        const int k = static_cast<int>(w.size());
        h.resize(k, k);
        for (int j = 0; j < k; ++j) {
          const double s = fd_step(w[j]);
          Vec wp = w, wm = w;
          wp[j] += s;
          wm[j] -= s;
          h.col(j) = (t.jac(wp).transpose() * l - t.jac(wm).transpose() * l) / (2.0 * s);
        }
        h = symmetrize(h);
      } else {
        h = fd_hessian([&](const Vec& v) { return l.dot(t.fn(v)); }, w);
      }
      for (size_t a = 0; a < t.idx.size(); ++a)
        for (size_t b = 0; b < t.idx.size(); ++b) H(t.idx[a], t.idx[b]) += h(a, b);
    };
    const Vec one = Vec::Ones(1);
    for (const auto& t : costs) add(t, one);
    int r = 0;
    for (const auto& t : eqs) {
      add(t, le.segment(r, t.dim));
      r += t.dim;
    }
    r = 0;
    for (const auto& t : ins) {
      add(t, li.segment(r, t.dim));
      r += t.dim;
    }
    return symmetrize(H);
  }

  static Vec gather(const Vec& z, const std::vector<int>& idx) {
    Vec w(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) w[j] = z[idx[j]];
    return w;
  }

 private:
  static int count(const std::vector<Term>& ts) {
    int c = 0;
    for (const auto& t : ts) c += t.dim;
    return c;
  }
  static Mat jacobian(const Term& t, const Vec& w) {
    if (t.jac) return t.jac(w);
    return fd_jacobian(t.fn, w, t.dim);
  }
  static void fill(const std::vector<Term>& ts, const Vec& z, bool deriv, Vec& c, Mat& J) {
    int r = 0;
    for (const auto& t : ts) {
      const Vec w = gather(z, t.idx);
      c.segment(r, t.dim) = t.fn(w);
      if (deriv) {
        const Mat Jt = jacobian(t, w);
        for (size_t j = 0; j < t.idx.size(); ++j) J.block(r, t.idx[j], t.dim, 1) += Jt.col(j);
      }
      r += t.dim;
    }
  }
};

}  // namespace dynop
