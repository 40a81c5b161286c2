#pragma once
// Riccati and Lyapunov solvers.

#include <Eigen/Eigenvalues>

#include "dynop/core.hpp"

namespace dynop {

inline Mat symmetrize(const Mat& M) { return 0.5 * (M + M.transpose()); }

inline double spectral_radius(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double lambda_max(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S), Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}
inline double lambda_min(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Solves A' X A - X + Q = 0 for Schur A.
inline Mat solve_discrete_lyapunov(const Mat& A, const Mat& Q) {
  const int n = static_cast<int>(A.rows());
  if (n <= 24) {
    // vec(A'XA) = (A' (x) A') vec(X)
    const Mat At = A.transpose();
    Mat K = Mat::Identity(n * n, n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) K.block(i * n, j * n, n, n) -= At(i, j) * At;
    const Vec q = Eigen::Map<const Vec>(Q.data(), n * n);
    Vec x = K.partialPivLu().solve(q);
    Mat X = Eigen::Map<Mat>(x.data(), n, n);
    return symmetrize(X);
  }
  // Smith doubling
  Mat X = Q, Ak = A;
  for (int it = 0; it < 200; ++it) {
    const Mat dX = Ak.transpose() * X * Ak;
    X += dX;
    Ak = Ak * Ak;
    if (dX.norm() <= 1e-15 * X.norm()) break;
  }
  return symmetrize(X);
}

struct RiccatiSolution {
  Mat P;
  Mat K;
};

/// A'PA - A'PB (R+B'PB)^{-1} B'PA + Q - P.
inline Mat dare_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P) {
  const Mat S = R + B.transpose() * P * B;
  const Mat BtPA = B.transpose() * P * A;
  Mat res = A.transpose() * P * A + Q - P;
  if (B.cols() > 0) res -= BtPA.transpose() * S.ldlt().solve(BtPA);
  return symmetrize(res);
}

inline Mat lqr_gain(const Mat& A, const Mat& B, const Mat& R, const Mat& P) {
  if (B.cols() == 0) return Mat::Zero(0, A.rows());
  const Mat S = R + B.transpose() * P * B;
  return -S.ldlt().solve(B.transpose() * P * A);
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
/// Structure-preserving doubling followed by Newton-Kleinman polishing.
inline RiccatiSolution solve_dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m)
    throw SpecError("solve_dare: dimension mismatch");
  const Mat I = Mat::Identity(n, n);
  Mat Ak = A;
  Mat G = m > 0 ? Mat(B * R.ldlt().solve(B.transpose())) : Mat(Mat::Zero(n, n));
  Mat Hk = symmetrize(Q);
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    const Mat W = I + G * Hk;
    Eigen::PartialPivLU<Mat> lu(W);
    const Mat WA = lu.solve(Ak);
    const Mat WG = lu.solve(G);
    const Mat Hn = symmetrize(Hk + Ak.transpose() * Hk * WA);
    const Mat Gn = symmetrize(G + Ak * WG * Ak.transpose());
    Ak = Ak * WA;
    const double dh = (Hn - Hk).norm();
    Hk = Hn;
    G = Gn;
    if (!Hk.allFinite()) break;
    if (dh <= 1e-15 * std::max(1.0, Hk.norm())) {
      converged = true;
      break;
    }
  }
  if (!Hk.allFinite() || !converged) throw SynthesisError("solve_dare: (A,B) not stabilizable or iteration diverged");
  Mat P = Hk;
  Mat K = lqr_gain(A, B, R, P);
  for (int it = 0; it < 3; ++it) {
    const Mat Acl = A + B * K;
    if (spectral_radius(Acl) >= 1.0) break;
    const Mat Pn = solve_discrete_lyapunov(Acl, Q + K.transpose() * R * K);
    const Mat Kn = lqr_gain(A, B, R, Pn);
    if (dare_residual(A, B, Q, R, Pn).norm() > dare_residual(A, B, Q, R, P).norm()) break;
    P = Pn;
    K = Kn;
  }
  if (spectral_radius(A + B * K) >= 1.0) throw SynthesisError("solve_dare: closed loop not Schur (not stabilizable)");
  const double res = dare_residual(A, B, Q, R, P).norm();
  if (!(res <= 1e-9 * std::max(1.0, P.norm()))) throw NumericalError("solve_dare: residual too large");
  return {P, K};
}

struct RiccatiSequence {
  std::vector<Mat> P;  ///< P_0..P_N (P_N is the terminal weight)
  std::vector<Mat> K;  ///< K_0..K_{N-1}
};

/// Backward time-varying Riccati recursion over N = A_seq.size() steps.
inline RiccatiSequence solve_tv_riccati(const std::vector<Mat>& A_seq, const std::vector<Mat>& B_seq, const Mat& Q,
                                        const Mat& R, const Mat& P_terminal) {
  if (A_seq.size() != B_seq.size()) throw SpecError("solve_tv_riccati: sequence length mismatch");
  const size_t N = A_seq.size();
  RiccatiSequence out;
  out.P.assign(N + 1, Mat());
  out.K.assign(N, Mat());
  out.P[N] = P_terminal;
  for (size_t t = N; t-- > 0;) {
    const Mat& A = A_seq[t];
    const Mat& B = B_seq[t];
    const Mat& Pn = out.P[t + 1];
    const Mat S = R + B.transpose() * Pn * B;
    Eigen::LDLT<Mat> ldlt(S);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
      throw NumericalError("solve_tv_riccati: singular R + B'PB");
    out.K[t] = -ldlt.solve(B.transpose() * Pn * A);
    const Mat Acl = A + B * out.K[t];
    out.P[t] = symmetrize(Q + out.K[t].transpose() * R * out.K[t] + Acl.transpose() * Pn * Acl);
  }
  return out;
}

/// T-periodic stabilizing solution by backward iteration to a periodic fixed point.
inline RiccatiSequence solve_periodic_riccati(const std::vector<Mat>& A_seq, const std::vector<Mat>& B_seq,
                                              const Mat& Q, const Mat& R, const Mat& P_init = Mat()) {
  const size_t T = A_seq.size();
  if (T == 0 || B_seq.size() != T) throw SpecError("solve_periodic_riccati: bad period");
  const int n = static_cast<int>(A_seq[0].rows());
  Mat P0 = P_init.size() ? P_init : Mat(Q);
  bool converged = false;
  RiccatiSequence seq;
  for (int sweep = 0; sweep * static_cast<int>(T) < 10000; ++sweep) {
    seq = solve_tv_riccati(A_seq, B_seq, Q, R, P0);
    const double d = (seq.P[0] - P0).norm();
    P0 = seq.P[0];
    if (!P0.allFinite()) break;
    if (d <= 1e-13 * std::max(1.0, P0.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged) throw SynthesisError("solve_periodic_riccati: no convergence within 10000 steps");
  seq = solve_tv_riccati(A_seq, B_seq, Q, R, P0);
  seq.P.pop_back();
  Mat mono = Mat::Identity(n, n);
  for (size_t t = 0; t < T; ++t) mono = (A_seq[t] + B_seq[t] * seq.K[t]) * mono;
  if (spectral_radius(mono) >= 1.0) throw SynthesisError("solve_periodic_riccati: monodromy not Schur");
  return seq;
}

}  // namespace dynop
