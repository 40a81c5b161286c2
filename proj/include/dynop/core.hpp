#pragma once
// Model layer: dynamics, constraints, stage costs, references, exogenous signals.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dynop {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Traj = std::vector<Vec>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Base class of all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SpecError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};
struct SynthesisError : Error {
  using Error::Error;
};
struct InfeasibleError : Error {
  using Error::Error;
};
struct DivergedRolloutError : Error {
  DivergedRolloutError(const std::string& what, int idx) : Error(what), index(idx) {}
  int index;
};

/// Central-difference step used for every finite-difference derivative.
inline double fd_step(double v) { return 1e-6 * (1.0 + std::abs(v)); }

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline Vec concat(const Vec& a, const Vec& b) {
  Vec z(a.size() + b.size());
  z << a, b;
  return z;
}

/// Jacobian of a vector map by central differences.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& z, int rows = -1) {
  Vec zp = z;
  Mat J;
  for (int j = 0; j < z.size(); ++j) {
    const double h = fd_step(z[j]);
    zp[j] = z[j] + h;
    Vec fp = fn(zp);
    zp[j] = z[j] - h;
    Vec fm = fn(zp);
    zp[j] = z[j];
    if (j == 0) J.resize(rows >= 0 ? rows : fp.size(), z.size());
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  if (z.size() == 0) J.resize(rows >= 0 ? rows : fn(z).size(), 0);
  return J;
}

inline Vec fd_gradient(const std::function<double(const Vec&)>& fn, const Vec& z) {
  Vec g(z.size());
  Vec zp = z;
  for (int j = 0; j < z.size(); ++j) {
    const double h = fd_step(z[j]);
    zp[j] = z[j] + h;
    const double fp = fn(zp);
    zp[j] = z[j] - h;
    const double fm = fn(zp);
    zp[j] = z[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Hessian by central differences of function values (step ~1e-4 relative).
inline Mat fd_hessian(const std::function<double(const Vec&)>& fn, const Vec& z) {
  const int n = static_cast<int>(z.size());
  Mat H(n, n);
  Vec h(n);
  for (int i = 0; i < n; ++i) h[i] = 1e-4 * (1.0 + std::abs(z[i]));
  Vec w = z;
  const double f0 = fn(z);
  for (int i = 0; i < n; ++i) {
    w[i] = z[i] + h[i];
    const double fp = fn(w);
    w[i] = z[i] - h[i];
    const double fm = fn(w);
    w[i] = z[i];
    H(i, i) = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    for (int j = 0; j < i; ++j) {
      double acc = 0.0;
      for (int si = -1; si <= 1; si += 2)
        for (int sj = -1; sj <= 1; sj += 2) {
          w[i] = z[i] + si * h[i];
          w[j] = z[j] + sj * h[j];
          acc += si * sj * fn(w);
        }
      w[i] = z[i];
      w[j] = z[j];
      H(i, j) = H(j, i) = acc / (4.0 * h[i] * h[j]);
    }
  }
  return H;
}

struct Jacobians {
  Mat A;
  Mat B;
};

/// Discrete-time model x+ = f(x,u), y = h(x,u).
class DynamicalSystem {
 public:
  using Map = std::function<Vec(const Vec&, const Vec&)>;
  using JacFn = std::function<Jacobians(const Vec&, const Vec&)>;

  DynamicalSystem() = default;
  DynamicalSystem(int n, int m, int p, Map f, Map h = {}, JacFn jac = {})
      : n_(n), m_(m), p_(p), f_(std::move(f)), h_(std::move(h)), jac_(std::move(jac)) {
    if (n <= 0 || m < 0 || p < 0) throw SpecError("DynamicalSystem: invalid dimensions");
    if (!f_) throw SpecError("DynamicalSystem: missing dynamics");
    if (!h_) {
      p_ = n_;
      h_ = [](const Vec& x, const Vec&) { return x; };
    }
  }

  /// Linear system x+ = A x + B u, y = C x + D u.
  static DynamicalSystem linear(const Mat& A, const Mat& B, Mat C = Mat(), Mat D = Mat()) {
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    if (C.size() == 0) C = Mat::Identity(n, n);
    if (D.size() == 0) D = Mat::Zero(C.rows(), m);
    DynamicalSystem s(
        n, m, static_cast<int>(C.rows()), [A, B](const Vec& x, const Vec& u) -> Vec { return A * x + B * u; },
        [C, D](const Vec& x, const Vec& u) -> Vec { return C * x + D * u; },
        [A, B](const Vec&, const Vec&) { return Jacobians{A, B}; });
    s.linear_ = true;
    s.A_ = A;
    s.B_ = B;
    s.C_ = C;
    s.D_ = D;
    return s;
  }

  int n() const { return n_; }
  int m() const { return m_; }
  int p() const { return p_; }
  bool is_linear() const { return linear_; }
  bool has_analytic_jacobians() const { return static_cast<bool>(jac_); }
  const Mat& A() const { return A_; }
  const Mat& B() const { return B_; }
  const Mat& C() const { return C_; }
  const Mat& D() const { return D_; }

  Vec f(const Vec& x, const Vec& u) const { return f_(x, u); }
  Vec h(const Vec& x, const Vec& u) const { return h_(x, u); }

  Jacobians jacobians(const Vec& x, const Vec& u) const {
    if (jac_) return jac_(x, u);
    return fd_jacobians(x, u);
  }

  Jacobians fd_jacobians(const Vec& x, const Vec& u) const {
    const Vec z = concat(x, u);
    Mat J = fd_jacobian([&](const Vec& w) { return f_(w.head(n_), w.tail(m_)); }, z, n_);
    return {J.leftCols(n_), J.rightCols(m_)};
  }

  /// Output Jacobians (dh/dx, dh/du), finite differences unless linear.
  Jacobians output_jacobians(const Vec& x, const Vec& u) const {
    if (linear_) return {C_, D_};
    const Vec z = concat(x, u);
    Mat J = fd_jacobian([&](const Vec& w) { return h_(w.head(n_), w.tail(m_)); }, z, p_);
    return {J.leftCols(n_), J.rightCols(m_)};
  }

  std::string name;

 private:
  int n_ = 0, m_ = 0, p_ = 0;
  Map f_, h_;
  JacFn jac_;
  bool linear_ = false;
  Mat A_, B_, C_, D_;
};

/// State sequence of length N+1 from x0 under useq.
inline Traj rollout(const DynamicalSystem& sys, const Vec& x0, const std::vector<Vec>& useq) {
  if (x0.size() != sys.n()) throw SpecError("rollout: state dimension mismatch");
  Traj xs;
  xs.reserve(useq.size() + 1);
  xs.push_back(x0);
  if (!all_finite(x0)) throw DivergedRolloutError("rollout: non-finite state", 0);
  for (size_t k = 0; k < useq.size(); ++k) {
    if (useq[k].size() != sys.m()) throw SpecError("rollout: input dimension mismatch");
    xs.push_back(sys.f(xs.back(), useq[k]));
    if (!all_finite(xs.back()))
      throw DivergedRolloutError("rollout: non-finite state", static_cast<int>(k + 1));
  }
  return xs;
}

/// Inequality g(x,u) <= 0 with a stated Lipschitz bound.
struct LipschitzConstraint {
  std::function<double(const Vec&, const Vec&)> g;
  double lipschitz = 0.0;
};

/// Pointwise constraint set Z on z=(x,u).
/// Linear part stored as H z <= b with unit-norm rows, so row residuals are distances.
class ConstraintSet {
 public:
  enum class Kind { Box, Polytope, Lipschitz };

  ConstraintSet() = default;

  static ConstraintSet box(const Vec& xlo, const Vec& xhi, const Vec& ulo, const Vec& uhi,
                           double interior_margin = 0.0) {
    ConstraintSet c;
    c.kind_ = Kind::Box;
    c.n_ = static_cast<int>(xlo.size());
    c.m_ = static_cast<int>(ulo.size());
    const Vec lo = concat(xlo, ulo), hi = concat(xhi, uhi);
    std::vector<std::pair<Vec, double>> rows;
    for (int i = 0; i < lo.size(); ++i) {
      if (std::isfinite(hi[i])) {
        Vec r = Vec::Zero(lo.size());
        r[i] = 1.0;
        rows.emplace_back(r, hi[i]);
      }
      if (std::isfinite(lo[i])) {
        Vec r = Vec::Zero(lo.size());
        r[i] = -1.0;
        rows.emplace_back(r, -lo[i]);
      }
    }
    c.set_rows(rows);
    c.lo_ = lo;
    c.hi_ = hi;
    c.margin_ = interior_margin;
    c.center_ = Vec::Zero(lo.size());
    for (int i = 0; i < lo.size(); ++i) {
      if (std::isfinite(lo[i]) && std::isfinite(hi[i]))
        c.center_[i] = 0.5 * (lo[i] + hi[i]);
      else if (std::isfinite(lo[i]))
        c.center_[i] = lo[i] + 1.0;
      else if (std::isfinite(hi[i]))
        c.center_[i] = hi[i] - 1.0;
    }
    return c;
  }

  /// Polytope H z <= b; rows are normalized to unit norm.
  static ConstraintSet polytope(int n, int m, const Mat& H, const Vec& b, double interior_margin = 0.0,
                                Vec center = Vec()) {
    ConstraintSet c;
    c.kind_ = Kind::Polytope;
    c.n_ = n;
    c.m_ = m;
    if (H.cols() != n + m || H.rows() != b.size()) throw SpecError("polytope: dimension mismatch");
    std::vector<std::pair<Vec, double>> rows;
    for (int i = 0; i < H.rows(); ++i) rows.emplace_back(H.row(i).transpose(), b[i]);
    c.set_rows(rows);
    c.margin_ = interior_margin;
    c.center_ = center.size() ? center : Vec::Zero(n + m);
    return c;
  }

  static ConstraintSet lipschitz(int n, int m, std::vector<LipschitzConstraint> g, double interior_margin = 0.0,
                                 Vec center = Vec()) {
    ConstraintSet c;
    c.kind_ = Kind::Lipschitz;
    c.n_ = n;
    c.m_ = m;
    c.H_.resize(0, n + m);
    c.b_.resize(0);
    c.lip_ = std::move(g);
    c.margin_ = interior_margin;
    c.center_ = center.size() ? center : Vec::Zero(n + m);
    return c;
  }

  /// Unconstrained set of the given dimensions.
  static ConstraintSet none(int n, int m) {
    ConstraintSet c;
    c.kind_ = Kind::Polytope;
    c.n_ = n;
    c.m_ = m;
    c.H_.resize(0, n + m);
    c.b_.resize(0);
    c.center_ = Vec::Zero(n + m);
    return c;
  }

  Kind kind() const { return kind_; }
  int n() const { return n_; }
  int m() const { return m_; }
  double interior_margin() const { return margin_; }
  const Mat& H() const { return H_; }
  const Vec& b() const { return b_; }
  const Vec& center() const { return center_; }
  const std::vector<LipschitzConstraint>& lipschitz_constraints() const { return lip_; }
  bool has_box() const { return kind_ == Kind::Box; }
  const Vec& box_lo() const { return lo_; }
  const Vec& box_hi() const { return hi_; }

  /// Optional time-varying right-hand side b(t) for the linear rows.
  void set_rhs_schedule(std::function<Vec(long)> sched) { rhs_schedule_ = std::move(sched); }
  bool time_varying() const { return static_cast<bool>(rhs_schedule_); }
  Vec b_at(long t) const { return rhs_schedule_ ? rhs_schedule_(t) : b_; }

  /// Largest constraint residual at z=(x,u); <= 0 iff z in Z (t selects b(t)).
  double violation(const Vec& x, const Vec& u, long t = 0, double margin = 0.0) const {
    const Vec z = concat(x, u);
    double v = -kInf;
    if (H_.rows()) v = (H_ * z - b_at(t)).maxCoeff() + margin;
    for (const auto& g : lip_) v = std::max(v, g.g(x, u) + margin * std::max(1.0, g.lipschitz));
    return v;
  }

  /// Residual of the pure-state rows at x (used for terminal states without input).
  double state_violation(const Vec& x, long t = 0) const {
    double v = -kInf;
    if (H_.rows()) {
      const Vec bt = b_at(t);
      for (int i = 0; i < H_.rows(); ++i) {
        if (m_ > 0 && H_.row(i).tail(m_).cwiseAbs().maxCoeff() > 0.0) continue;
        v = std::max(v, H_.row(i).head(n_).dot(x) - bt[i]);
      }
    }
    return v;
  }

  bool contains(const Vec& x, const Vec& u, long t = 0, double tol = 0.0) const {
    return violation(x, u, t) <= tol;
  }
  /// Membership in Z_r: every row satisfied with the interior margin.
  bool contains_strict(const Vec& x, const Vec& u, long t = 0) const {
    return violation(x, u, t, margin_) <= 0.0;
  }

  /// Linear rows scaled about the declared center by factor s (s<1 shrinks).
  ConstraintSet scaled(double s) const {
    ConstraintSet c = *this;
    c.b_ = s * b_ + (1.0 - s) * (H_ * center_);
    if (kind_ == Kind::Box) {
      c.lo_ = center_ + s * (lo_ - center_);
      c.hi_ = center_ + s * (hi_ - center_);
    }
    return c;
  }

 private:
  void set_rows(const std::vector<std::pair<Vec, double>>& rows) {
    H_.resize(static_cast<int>(rows.size()), n_ + m_);
    b_.resize(static_cast<int>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
      const double nr = rows[i].first.norm();
      if (nr == 0.0) throw SpecError("constraint row with zero normal");
      H_.row(i) = rows[i].first.transpose() / nr;
      b_[i] = rows[i].second / nr;
    }
  }

  Kind kind_ = Kind::Polytope;
  int n_ = 0, m_ = 0;
  Mat H_;
  Vec b_;
  Vec lo_, hi_;
  Vec center_;
  double margin_ = 0.0;
  std::vector<LipschitzConstraint> lip_;
  std::function<Vec(long)> rhs_schedule_;
};

struct ViolationReport {
  std::vector<double> per_step;  ///< max residual per index (state index k pairs with input k)
  double max_violation = -kInf;
  int worst_index = -1;
  bool feasible(double tol = 0.0) const { return max_violation <= tol; }
};

/// Constraint residuals of (x_k,u_k), k<N, and the pure-state rows at x_N.
inline ViolationReport check_constraints(const ConstraintSet& zset, const Traj& traj, const std::vector<Vec>& useq,
                                         long t0 = 0) {
  if (traj.size() != useq.size() + 1 && traj.size() != useq.size())
    throw SpecError("check_constraints: incompatible lengths");
  ViolationReport r;
  for (size_t k = 0; k < traj.size(); ++k) {
    double v;
    if (k < useq.size())
      v = zset.violation(traj[k], useq[k], t0 + static_cast<long>(k));
    else
      v = zset.state_violation(traj[k], t0 + static_cast<long>(k));
    r.per_step.push_back(v);
    if (v > r.max_violation || r.worst_index < 0) {
      r.max_violation = v;
      r.worst_index = static_cast<int>(k);
    }
  }
  return r;
}

/// Reference point r = (x_r, u_r).
struct RefPoint {
  Vec x;
  Vec u;
};

/// Setpoint, clamped trajectory, or T-periodic reference.
class Reference {
 public:
  enum class Kind { Setpoint, Trajectory, Periodic };

  Reference() = default;
  static Reference setpoint(const Vec& xr, const Vec& ur) {
    Reference r;
    r.kind_ = Kind::Setpoint;
    r.pts_ = {RefPoint{xr, ur}};
    return r;
  }
  static Reference trajectory(std::vector<RefPoint> pts) {
    if (pts.empty()) throw SpecError("trajectory reference: empty");
    Reference r;
    r.kind_ = Kind::Trajectory;
    r.pts_ = std::move(pts);
    return r;
  }
  static Reference periodic(std::vector<RefPoint> pts) {
    if (pts.empty()) throw SpecError("periodic reference: empty");
    Reference r;
    r.kind_ = Kind::Periodic;
    r.pts_ = std::move(pts);
    return r;
  }

  Kind kind() const { return kind_; }
  int length() const { return static_cast<int>(pts_.size()); }
  int period() const { return kind_ == Kind::Periodic ? length() : 1; }
  const std::vector<RefPoint>& points() const { return pts_; }

  /// r_k: constant for setpoints, k mod T for periodic, clamped for trajectories.
  const RefPoint& at(long k) const {
    if (k < 0) throw SpecError("reference_at: negative index");
    switch (kind_) {
      case Kind::Setpoint:
        return pts_.front();
      case Kind::Periodic:
        return pts_[static_cast<size_t>(k % length())];
      case Kind::Trajectory:
      default:
        return pts_[static_cast<size_t>(std::min<long>(k, length() - 1))];
    }
  }

  /// Max dynamic-consistency error |x_r(t+1) - f(x_r(t),u_r(t))| over the stored points.
  double consistency_error(const DynamicalSystem& sys) const {
    double e = 0.0;
    const int L = length();
    for (int k = 0; k < L; ++k) {
      const RefPoint& r = pts_[k];
      const Vec nxt = sys.f(r.x, r.u);
      const RefPoint* succ = nullptr;
      if (kind_ == Kind::Setpoint)
        succ = &pts_[0];
      else if (kind_ == Kind::Periodic)
        succ = &pts_[(k + 1) % L];
      else
        succ = &pts_[std::min(k + 1, L - 1)];
      e = std::max(e, (nxt - succ->x).lpNorm<Eigen::Infinity>());
    }
    return e;
  }
  bool consistent(const DynamicalSystem& sys, double tol = 1e-9) const { return consistency_error(sys) <= tol; }

  /// Validates consistency and strict feasibility; throws SpecError otherwise.
  void validate(const DynamicalSystem& sys, const ConstraintSet& z) const {
    if (!consistent(sys)) throw SpecError("reference is not dynamically consistent");
    for (int k = 0; k < length(); ++k)
      if (!z.contains_strict(pts_[k].x, pts_[k].u, k)) throw SpecError("reference point outside Z_r");
  }

 private:
  Kind kind_ = Kind::Setpoint;
  std::vector<RefPoint> pts_;
};

inline const RefPoint& reference_at(const Reference& ref, long k) { return ref.at(k); }

/// Stage cost: quadratic tracking, output tracking, or economic.
class StageCost {
 public:
  enum class Variant { QuadraticTracking, OutputTracking, Economic };
  using EconFn = std::function<double(const Vec& x, const Vec& u, const Vec& ye)>;

  StageCost() = default;
  static StageCost quadratic(const Mat& Q, const Mat& R) {
    StageCost c;
    c.variant_ = Variant::QuadraticTracking;
    c.Q_ = Q;
    c.R_ = R;
    return c;
  }
  /// ||h(x,u) - h(x_r,u_r)||_Q^2 + ||u-u_r||_R^2 (+ ||x-x_r||_Qs^2 when Qs given).
  static StageCost output(const DynamicalSystem& sys, const Mat& Qy, const Mat& R, Mat Qs = Mat()) {
    StageCost c;
    c.variant_ = Variant::OutputTracking;
    c.sys_ = std::make_shared<const DynamicalSystem>(sys);
    c.Q_ = Qy;
    c.R_ = R;
    c.Qs_ = Qs.size() ? Qs : Mat::Zero(sys.n(), sys.n());
    return c;
  }
  static StageCost economic(EconFn fn) {
    StageCost c;
    c.variant_ = Variant::Economic;
    c.econ_ = std::move(fn);
    return c;
  }

  Variant variant() const { return variant_; }
  const Mat& Q() const { return Q_; }
  const Mat& R() const { return R_; }
  const Mat& Qs() const { return Qs_; }
  const EconFn& economic_fn() const { return econ_; }

  /// Reference-centered value; economic variant ignores r and uses ye.
  double value(const Vec& x, const Vec& u, const RefPoint& r, const Vec& ye = Vec()) const {
    switch (variant_) {
      case Variant::QuadraticTracking: {
        const Vec ex = x - r.x, eu = u - r.u;
        return ex.dot(Q_ * ex) + eu.dot(R_ * eu);
      }
      case Variant::OutputTracking: {
        const Vec ey = sys_->h(x, u) - sys_->h(r.x, r.u);
        const Vec eu = u - r.u, ex = x - r.x;
        return ey.dot(Q_ * ey) + eu.dot(R_ * eu) + ex.dot(Qs_ * ex);
      }
      case Variant::Economic:
      default:
        return econ_(x, u, ye);
    }
  }

  /// Economic value (for economic variants) at (x,u) with parameter ye.
  double economic(const Vec& x, const Vec& u, const Vec& ye = Vec()) const { return econ_(x, u, ye); }

  /// Gradient w.r.t. (x,u) for a fixed reference.
  Vec gradient(const Vec& x, const Vec& u, const RefPoint& r, const Vec& ye = Vec()) const {
    if (variant_ == Variant::QuadraticTracking) return concat(2.0 * Q_ * (x - r.x), 2.0 * R_ * (u - r.u));
    const int n = static_cast<int>(x.size());
    const int m = static_cast<int>(u.size());
    return fd_gradient([&](const Vec& z) { return value(z.head(n), z.tail(m), r, ye); }, concat(x, u));
  }

  /// Hessian w.r.t. (x,u) for a fixed reference.
  Mat hessian(const Vec& x, const Vec& u, const RefPoint& r, const Vec& ye = Vec()) const {
    const int n = static_cast<int>(x.size());
    const int m = static_cast<int>(u.size());
    if (variant_ == Variant::QuadraticTracking) {
      Mat H = Mat::Zero(n + m, n + m);
      H.topLeftCorner(n, n) = 2.0 * Q_;
      H.bottomRightCorner(m, m) = 2.0 * R_;
      return H;
    }
    return fd_hessian([&](const Vec& z) { return value(z.head(n), z.tail(m), r, ye); }, concat(x, u));
  }

  /// l_min(x) = min over u of l(x,u); closed form for quadratic tracking with r.u admissible.
  double lmin_quadratic(const Vec& x, const RefPoint& r) const {
    const Vec ex = x - r.x;
    return ex.dot(Q_ * ex);
  }

 private:
  Variant variant_ = Variant::QuadraticTracking;
  Mat Q_, R_, Qs_;
  std::shared_ptr<const DynamicalSystem> sys_;
  EconFn econ_;
};

/// Piecewise-constant schedule of (time, value) pairs, optionally periodic.
class ExogenousSignal {
 public:
  ExogenousSignal() = default;
  explicit ExogenousSignal(Vec constant) { sched_[0] = std::move(constant); }
  ExogenousSignal(std::map<long, Vec> schedule, long period = 0, bool consistent = false)
      : sched_(std::move(schedule)), period_(period), consistent_(consistent) {
    if (sched_.empty()) throw SpecError("ExogenousSignal: empty schedule");
  }
  /// Periodic signal with values v_0..v_{T-1}.
  static ExogenousSignal periodic(const std::vector<Vec>& values) {
    std::map<long, Vec> s;
    for (size_t k = 0; k < values.size(); ++k) s[static_cast<long>(k)] = values[k];
    return ExogenousSignal(s, static_cast<long>(values.size()), true);
  }

  bool empty() const { return sched_.empty(); }
  long period() const { return period_; }
  bool consistent() const { return consistent_; }

  /// Most recent scheduled value at time t (t mod period for periodic signals).
  Vec at(long t) const {
    if (sched_.empty()) return Vec();
    if (period_ > 0) t = ((t % period_) + period_) % period_;
    auto it = sched_.upper_bound(t);
    if (it == sched_.begin()) return it->second;
    return std::prev(it)->second;
  }

  /// Window y_k(t) = at(t+k), k < len (periodic continuation of the schedule).
  std::vector<Vec> window(long t, int len) const {
    std::vector<Vec> w;
    for (int k = 0; k < len; ++k) w.push_back(at(t + k));
    return w;
  }

 private:
  std::map<long, Vec> sched_;
  long period_ = 0;
  bool consistent_ = false;
};

}  // namespace dynop
