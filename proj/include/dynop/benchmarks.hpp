#pragma once
// Benchmark plants with documented constraint sets.

#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "dynop/core.hpp"

namespace dynop::bench {

/// Zero-order-hold discretization of (Ac, Bc) via the exponential of the augmented matrix.
inline std::pair<Mat, Mat> discretize(const Mat& Ac, const Mat& Bc, double dt) {
  const int n = static_cast<int>(Ac.rows()), m = static_cast<int>(Bc.cols());
  Mat Mc = Mat::Zero(n + m, n + m);
  Mc.topLeftCorner(n, n) = Ac * dt;
  Mc.topRightCorner(n, m) = Bc * dt;
  const Mat E = Mc.exp();
  return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

/// x+ = [1 dt; 0 1] x + [dt^2/2; dt] u, y = position.
inline DynamicalSystem double_integrator(double dt = 1.0) {
  Mat A(2, 2), B(2, 1), C(1, 2);
  A << 1, dt, 0, 1;
  B << 0.5 * dt * dt, dt;
  C << 1, 0;
  return DynamicalSystem::linear(A, B, C);
}

/// Box |x_i| <= xmax, |u| <= umax.
inline ConstraintSet double_integrator_box(double xmax = 5.0, double umax = 1.0) {
  return ConstraintSet::box(Vec::Constant(2, -xmax), Vec::Constant(2, xmax), Vec::Constant(1, -umax),
                            Vec::Constant(1, umax));
}

/// x+ = x + u + c x^3 with analytic Jacobians.
inline DynamicalSystem scalar_cubic(double c = 1.0) {
  auto f = [c](const Vec& x, const Vec& u) { return Vec::Constant(1, x[0] + u[0] + c * x[0] * x[0] * x[0]); };
  auto h = [](const Vec& x, const Vec&) { return x; };
  auto jac = [c](const Vec& x, const Vec&) {
    Jacobians J;
    J.A = Mat::Constant(1, 1, 1.0 + 3.0 * c * x[0] * x[0]);
    J.B = Mat::Constant(1, 1, 1.0);
    return J;
  };
  return DynamicalSystem(1, 1, 1, f, h, jac);
}

/// |x| <= 1, |u| <= 1.
inline ConstraintSet scalar_cubic_box() {
  return ConstraintSet::box(Vec::Constant(1, -1), Vec::Constant(1, 1), Vec::Constant(1, -1), Vec::Constant(1, 1));
}

/// Chain of unit masses joined by springs and dampers, the first mass also tied to a wall.
/// State: positions then velocities; input: force on the first mass; output: position of the last mass.
struct ChainParams {
  int masses = 6;
  double mass = 1.0;
  double spring = 1.0;
  double damping = 0.1;
  double dt = 0.1;
};

inline DynamicalSystem mass_spring_chain(const ChainParams& p = {}) {
  const int nm = p.masses, n = 2 * nm;
  Mat Ac = Mat::Zero(n, n), Bc = Mat::Zero(n, 1);
  for (int i = 0; i < nm; ++i) {
    Ac(i, nm + i) = 1.0;
    double kk = p.spring, dd = p.damping;
    if (i > 0) {
      Ac(nm + i, i - 1) += p.spring / p.mass;
      Ac(nm + i, nm + i - 1) += p.damping / p.mass;
    }
    if (i < nm - 1) {
      kk += p.spring;
      dd += p.damping;
      Ac(nm + i, i + 1) += p.spring / p.mass;
      Ac(nm + i, nm + i + 1) += p.damping / p.mass;
    }
    Ac(nm + i, i) -= kk / p.mass;
    Ac(nm + i, nm + i) -= dd / p.mass;
  }
  Bc(nm, 0) = 1.0 / p.mass;
  const auto [A, B] = discretize(Ac, Bc, p.dt);
  Mat C = Mat::Zero(1, n);
  C(0, nm - 1) = 1.0;
  return DynamicalSystem::linear(A, B, C);
}

/// Scalar thermal balance in deviation from ambient: x+ = a x - b u, u = cooling power.
/// Comfort band and price follow a 24-step day.
struct ThermalParams {
  double a = 0.9;
  double b = 0.5;
  double u_max = 4.0;
  int period = 24;
  int occupied_from = 8;
  int occupied_to = 18;
  double occupied_lo = -6.0, occupied_hi = -4.0;
  double idle_lo = -10.0, idle_hi = 0.0;
  double price_base = 1.0, price_peak = 1.0;  ///< price(t) = base + peak * max(0, sin(2 pi (t - 6) / 24))
  double u_weight = 0.01;
};

inline DynamicalSystem thermal(const ThermalParams& p = {}) {
  return DynamicalSystem::linear(Mat::Constant(1, 1, p.a), Mat::Constant(1, 1, -p.b), Mat::Identity(1, 1));
}

inline double thermal_price(const ThermalParams& p, long t) {
  const long k = ((t % p.period) + p.period) % p.period;
  const double s = std::sin(2.0 * M_PI * static_cast<double>(k - 6) / p.period);
  return p.price_base + p.price_peak * std::max(0.0, s);
}

/// Comfort band and input range; the right-hand side repeats every period.
inline ConstraintSet thermal_constraints(const ThermalParams& p = {}) {
  auto z = ConstraintSet::box(Vec::Constant(1, p.idle_lo), Vec::Constant(1, p.idle_hi), Vec::Constant(1, 0.0),
                              Vec::Constant(1, p.u_max));
  z.set_rhs_schedule([p](long t) {
    const long k = ((t % p.period) + p.period) % p.period;
    const bool occ = k >= p.occupied_from && k < p.occupied_to;
    Vec b(4);
    b << (occ ? p.occupied_hi : p.idle_hi), -(occ ? p.occupied_lo : p.idle_lo), p.u_max, 0.0;
    return b;
  });
  return z;
}

/// Economic cost price * u + w u^2 with the price passed as the parameter.
inline StageCost thermal_cost(const ThermalParams& p = {}) {
  const double w = p.u_weight;
  return StageCost::economic([w](const Vec&, const Vec& u, const Vec& ye) { return ye[0] * u[0] + w * u[0] * u[0]; });
}

inline ExogenousSignal thermal_price_signal(const ThermalParams& p = {}) {
  std::vector<Vec> v;
  for (int k = 0; k < p.period; ++k) v.push_back(Vec::Constant(1, thermal_price(p, k)));
  return ExogenousSignal::periodic(v);
}

/// Kinematic unicycle (px, py, heading) with inputs (speed, turn rate), explicit Euler step dt.
inline DynamicalSystem unicycle(double dt = 0.1) {
  auto f = [dt](const Vec& x, const Vec& u) {
    Vec xn(3);
    xn << x[0] + dt * u[0] * std::cos(x[2]), x[1] + dt * u[0] * std::sin(x[2]), x[2] + dt * u[1];
    return xn;
  };
  auto h = [](const Vec& x, const Vec&) { return x; };
  auto jac = [dt](const Vec& x, const Vec& u) {
    Jacobians J;
    J.A = Mat::Identity(3, 3);
    J.A(0, 2) = -dt * u[0] * std::sin(x[2]);
    J.A(1, 2) = dt * u[0] * std::cos(x[2]);
    J.B = Mat::Zero(3, 2);
    J.B(0, 0) = dt * std::cos(x[2]);
    J.B(1, 0) = dt * std::sin(x[2]);
    J.B(2, 1) = dt;
    return J;
  };
  return DynamicalSystem(3, 2, 3, f, h, jac);
}

/// |v| <= 1, |w| <= 1, states unconstrained apart from a large box.
inline ConstraintSet unicycle_box() {
  return ConstraintSet::box(Vec::Constant(3, -10), Vec::Constant(3, 10), Vec::Constant(2, -1), Vec::Constant(2, 1));
}

}  // namespace dynop::bench
