#pragma once
// Closed-loop simulation, trace metrics, CSV traces, and SVG rendering.

#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dynop/horizon.hpp"
#include "dynop/mpc.hpp"

namespace dynop {

/// Closed-form unconstrained LQ-MPC gain instead of the NLP (linear plant, quadratic cost, no constraints).
struct LinearMpcOverride {
  bool enabled = false;
  long N = 0;
};

struct Scenario {
  std::string name = "scenario";
  MpcProblemSpec spec;
  Exogenous ex;
  Vec x0;
  int steps = 100;
  unsigned seed = 0;
  double divergence_threshold = 1e6;
  int tail = 0;  ///< steps used for the tail average (0: last half)
  LinearMpcOverride linear_mpc;
};

struct StepRecord {
  long t = 0;
  Vec x, u;
  Vec yd;     ///< output target (empty when none)
  Vec r;      ///< artificial or fixed reference state (empty when none)
  double ell = kNaN;
  double J = kNaN;
  double alpha = kNaN;
  double kappa = kNaN;
  double beta = kNaN;
  double violation = kNaN;
  double track_err = kNaN;
  bool feasible = true;
  bool solved = true;  ///< false on the intermediate steps of a multi-step (nu > 1) application
  int iterations = 0;
  bool used_candidate = false;
  int planner = -1;  ///< planner update at this step: -1 none, 1 shifted candidate feasible, 0 not
  double wall_time = 0.0;
};

struct TraceMetrics {
  double J_cl = 0.0;             ///< truncated sum of stage costs
  double average = kNaN;         ///< J_cl / K
  double tail_average = kNaN;    ///< average over the last `tail` steps
  int tail = 0;
  double max_decrease_residual = -kInf;  ///< max of J(t+1) - J(t) + ell(t) over consecutive solves
  double max_violation = -kInf;
  double max_track_err = kNaN;
  double final_track_err = kNaN;
  int infeasible_steps = 0;
};

struct ClosedLoopTrace {
  std::string scenario;
  std::vector<StepRecord> records;
  std::string status = "completed";  ///< completed | infeasible | diverged
  std::string reason;
  long first_divergence = -1;
  Vec x_final;
  TraceMetrics metrics;
};

/// Recomputes the aggregates from the raw per-step rows.
inline TraceMetrics compute_metrics(const std::vector<StepRecord>& rec, int tail = 0) {
  TraceMetrics m;
  const int K = static_cast<int>(rec.size());
  m.tail = tail > 0 ? std::min(tail, K) : K - K / 2;
  if (K == 0) return m;
  for (const auto& r : rec) m.J_cl += r.ell;
  m.average = m.J_cl / K;
  double s = 0.0;
  for (int k = K - m.tail; k < K; ++k) s += rec[k].ell;
  m.tail_average = m.tail > 0 ? s / m.tail : kNaN;
  for (int k = 0; k < K; ++k) {
    if (!rec[k].feasible) ++m.infeasible_steps;
    if (std::isfinite(rec[k].violation)) m.max_violation = std::max(m.max_violation, rec[k].violation);
    if (std::isfinite(rec[k].track_err)) {
      m.max_track_err = std::isfinite(m.max_track_err) ? std::max(m.max_track_err, rec[k].track_err) : rec[k].track_err;
      m.final_track_err = rec[k].track_err;
    }
    if (k + 1 < K && rec[k].solved && rec[k + 1].solved && std::isfinite(rec[k].J) && std::isfinite(rec[k + 1].J))
      m.max_decrease_residual = std::max(m.max_decrease_residual, rec[k + 1].J - rec[k].J + rec[k].ell);
  }
  return m;
}

namespace detail {

inline double stage_value(const MpcProblemSpec& spec, const Exogenous& ex, const Vec& x, const Vec& u, long t,
                          const MpcSolution* sol) {
  if (spec.cost.variant() == StageCost::Variant::Economic) return spec.cost.economic(x, u, ye_at(ex.ye, t));
  if (spec.artificial()) {
    if (sol && !sol->r.empty()) return spec.cost.value(x, u, sol->r[0]);
    return kNaN;
  }
  const long tr = spec.scheme == Scheme::Stabilizing ? 0 : t;
  const RefPoint r = spec.ref.length() ? spec.ref.at(tr) : RefPoint{Vec::Zero(spec.sys.n()), Vec::Zero(spec.sys.m())};
  return spec.cost.value(x, u, r);
}

inline bool diverged(const Vec& x, double thr) { return !x.allFinite() || x.lpNorm<Eigen::Infinity>() > thr; }

}  // namespace detail

/// Runs the nominal closed loop; stops early on infeasibility or divergence.
inline ClosedLoopTrace run_closed_loop(const Scenario& sc) {
  const MpcProblemSpec& spec = sc.spec;
  const auto& sys = spec.sys;
  if (sc.x0.size() != sys.n()) throw SpecError("scenario: x0 dimension mismatch");
  ClosedLoopTrace tr;
  tr.scenario = sc.name;
  Vec x = sc.x0;
  Mat K;
  ControllerState st;
  if (sc.linear_mpc.enabled) {
    if (!sys.is_linear() || spec.z.H().rows() || !spec.z.lipschitz_constraints().empty())
      throw SpecError("scenario: closed-form LQ-MPC needs a linear unconstrained plant");
    Mat Lx;
    if (spec.cost.variant() == StageCost::Variant::OutputTracking)
      Lx = sys.C().transpose() * spec.cost.Q() * sys.C() + spec.cost.Qs();
    else if (spec.cost.variant() == StageCost::Variant::QuadraticTracking)
      Lx = spec.cost.Q();
    else
      throw SpecError("scenario: closed-form LQ-MPC needs a quadratic cost");
    K = lq_mpc_gain(sys.A(), sys.B(), Lx, spec.cost.R(), sc.linear_mpc.N);
  } else {
    st = init_controller(spec);
  }
  const RefPoint origin{Vec::Zero(sys.n()), Vec::Zero(sys.m())};
  long t = 0;
  while (t < sc.steps) {
    std::vector<Vec> us;
    ControlOutput out;
    const auto t0 = std::chrono::steady_clock::now();
    if (sc.linear_mpc.enabled) {
      us.push_back(K * x);
      out.diag.feasible = true;
    } else {
      try {
        out = apply_controller(spec, st, x, sc.ex);
      } catch (const ControllerInfeasible& e) {
        if (t == 0) throw InfeasibleError(std::string("scenario: initial problem infeasible: ") + e.what());
        tr.status = "infeasible";
        tr.reason = e.what();
        break;
      }
      us = out.u;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (size_t j = 0; j < us.size() && t < sc.steps; ++j, ++t) {
      StepRecord r;
      r.t = t;
      r.x = x;
      r.u = us[j];
      r.solved = j == 0;
      if (!sc.ex.yd.empty()) {
        r.yd = sc.ex.yd.at(t);
        r.track_err = (sys.h(x, r.u) - r.yd).norm();
      }
      if (sc.linear_mpc.enabled) {
        r.ell = spec.cost.value(x, r.u, origin);
      } else {
        r.ell = detail::stage_value(spec, sc.ex, x, r.u, t, j == 0 ? &out.sol : nullptr);
        if (!std::isfinite(r.ell) && !out.sol.r.empty()) {
          const RefPoint& rr = out.sol.r[j % out.sol.r.size()];
          r.ell = spec.cost.value(x, r.u, rr);
        }
        if (!out.sol.r.empty()) r.r = out.sol.r[j % out.sol.r.size()].x;
        else if (spec.ref.length()) r.r = spec.ref.at(spec.scheme == Scheme::Stabilizing ? 0 : t).x;
        if (j == 0) {
          r.J = out.diag.J;
          r.alpha = out.diag.alpha;
          r.iterations = out.diag.iterations;
          r.used_candidate = out.diag.used_candidate;
          if (out.diag.planner_invoked) r.planner = out.diag.planner_candidate_feasible ? 1 : 0;
          r.wall_time = wall;
        }
        r.kappa = out.diag.kappa;
        r.beta = out.diag.beta;
      }
      r.feasible = out.diag.feasible;
      r.violation = spec.z.violation(x, r.u, t);
      tr.records.push_back(r);
      x = sys.f(x, r.u);
      if (detail::diverged(x, sc.divergence_threshold)) {
        tr.status = "diverged";
        tr.first_divergence = t + 1;
        tr.reason = "state norm exceeded " + std::to_string(sc.divergence_threshold);
        ++t;
        break;
      }
    }
    if (tr.status != "completed") break;
  }
  tr.x_final = x;
  tr.metrics = compute_metrics(tr.records, sc.tail);
  return tr;
}

// ---------------------------------------------------------------------------------------------
// Trace comparison.

enum class TraceMetric { Average, TailAverage, TotalCost, FinalTrackingError, MaxStateDifference };

inline TraceMetric trace_metric_from_string(const std::string& s) {
  if (s == "average") return TraceMetric::Average;
  if (s == "tail-average") return TraceMetric::TailAverage;
  if (s == "total-cost") return TraceMetric::TotalCost;
  if (s == "final-tracking-error") return TraceMetric::FinalTrackingError;
  if (s == "max-state-difference") return TraceMetric::MaxStateDifference;
  throw SpecError("unknown trace metric: " + s);
}

struct TraceComparison {
  double a = kNaN, b = kNaN;
  double difference = kNaN;  ///< b - a (or the distance for state differences)
  std::string verdict;       ///< "a-better", "b-better", "equal"
};

/// Compares two traces of equal length; lower metric values are better.
inline TraceComparison compare_traces(const ClosedLoopTrace& a, const ClosedLoopTrace& b, TraceMetric metric,
                                      double tol = 1e-9) {
  if (a.records.size() != b.records.size()) throw SpecError("compare_traces: traces differ in length");
  TraceComparison c;
  if (metric == TraceMetric::MaxStateDifference) {
    double d = 0.0;
    for (size_t k = 0; k < a.records.size(); ++k)
      d = std::max(d, (a.records[k].x - b.records[k].x).lpNorm<Eigen::Infinity>());
    c.a = c.b = 0.0;
    c.difference = d;
    c.verdict = d <= tol ? "equal" : "different";
    return c;
  }
  auto val = [metric](const ClosedLoopTrace& t) {
    switch (metric) {
      case TraceMetric::Average: return t.metrics.average;
      case TraceMetric::TailAverage: return t.metrics.tail_average;
      case TraceMetric::TotalCost: return t.metrics.J_cl;
      case TraceMetric::FinalTrackingError:
      default: return t.metrics.final_track_err;
    }
  };
  c.a = val(a);
  c.b = val(b);
  c.difference = c.b - c.a;
  const double scale = tol * std::max(1.0, std::max(std::abs(c.a), std::abs(c.b)));
  c.verdict = std::abs(c.difference) <= scale ? "equal" : (c.difference > 0.0 ? "a-better" : "b-better");
  return c;
}

// ---------------------------------------------------------------------------------------------
// CSV traces. Columns: t, x*, u*, yd*, r*, ell, J, alpha, kappa, beta, violation, track_err,
// feasible, solved, iterations, used_candidate, planner [, wall_time]. Doubles use 17 significant digits.

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return kNaN;
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

inline std::string trace_to_csv(const ClosedLoopTrace& tr, bool include_wall_time = false) {
  std::ostringstream os;
  if (tr.records.empty()) return "t\n";
  const auto& r0 = tr.records.front();
  const int n = static_cast<int>(r0.x.size()), m = static_cast<int>(r0.u.size());
  int p = 0, nr = 0;
  for (const auto& r : tr.records) {
    p = std::max(p, static_cast<int>(r.yd.size()));
    nr = std::max(nr, static_cast<int>(r.r.size()));
  }
  os << "t";
  for (int i = 0; i < n; ++i) os << ",x" << i;
  for (int i = 0; i < m; ++i) os << ",u" << i;
  for (int i = 0; i < p; ++i) os << ",yd" << i;
  for (int i = 0; i < nr; ++i) os << ",r" << i;
  os << ",ell,J,alpha,kappa,beta,violation,track_err,feasible,solved,iterations,used_candidate,planner";
  if (include_wall_time) os << ",wall_time";
  os << "\n";
  auto vec = [&](const Vec& v, int len) {
    for (int i = 0; i < len; ++i) os << "," << format_double(i < v.size() ? v[i] : kNaN);
  };
  for (const auto& r : tr.records) {
    os << r.t;
    vec(r.x, n);
    vec(r.u, m);
    vec(r.yd, p);
    vec(r.r, nr);
    for (double v : {r.ell, r.J, r.alpha, r.kappa, r.beta, r.violation, r.track_err}) os << "," << format_double(v);
    os << "," << int(r.feasible) << "," << int(r.solved) << "," << r.iterations << "," << int(r.used_candidate)
       << "," << r.planner;
    if (include_wall_time) os << "," << format_double(r.wall_time);
    os << "\n";
  }
  return os.str();
}

/// Parses a CSV produced by trace_to_csv; metrics are recomputed from the rows.
inline ClosedLoopTrace trace_from_csv(const std::string& text, int tail = 0) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty trace CSV");
  std::vector<std::string> head;
  {
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) head.push_back(c);
  }
  if (head.empty() || head[0] != "t") throw std::invalid_argument("trace CSV: missing t column");
  int n = 0, m = 0, p = 0, nr = 0;
  for (const auto& h : head) {
    if (h.size() > 1 && h[0] == 'x' && std::isdigit(static_cast<unsigned char>(h[1]))) ++n;
    if (h.size() > 1 && h[0] == 'u' && std::isdigit(static_cast<unsigned char>(h[1]))) ++m;
    if (h.size() > 2 && h.rfind("yd", 0) == 0 && std::isdigit(static_cast<unsigned char>(h[2]))) ++p;
    if (h.size() > 1 && h[0] == 'r' && std::isdigit(static_cast<unsigned char>(h[1]))) ++nr;
  }
  const size_t base = 1 + n + m + p + nr;
  const std::vector<std::string> tail_cols = {"ell",      "J",        "alpha",  "kappa",      "beta",
                                              "violation", "track_err", "feasible", "solved", "iterations",
                                              "used_candidate", "planner"};
  if (head.size() < base + tail_cols.size()) throw std::invalid_argument("trace CSV: header too short");
  for (size_t k = 0; k < tail_cols.size(); ++k)
    if (head[base + k] != tail_cols[k]) throw std::invalid_argument("trace CSV: unexpected column " + head[base + k]);
  const bool wall = head.size() > base + tail_cols.size() && head.back() == "wall_time";
  ClosedLoopTrace tr;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) c.push_back(f);
    if (c.size() != head.size()) throw std::invalid_argument("trace CSV: ragged row");
    StepRecord r;
    r.t = std::stol(c[0]);
    size_t k = 1;
    auto read = [&](int len) {
      Vec v(len);
      for (int i = 0; i < len; ++i) v[i] = parse_double(c[k++]);
      return v;
    };
    r.x = read(n);
    r.u = read(m);
    r.yd = read(p);
    r.r = read(nr);
    if (p && !r.yd.allFinite()) r.yd.resize(0);
    if (nr && !r.r.allFinite()) r.r.resize(0);
    r.ell = parse_double(c[k++]);
    r.J = parse_double(c[k++]);
    r.alpha = parse_double(c[k++]);
    r.kappa = parse_double(c[k++]);
    r.beta = parse_double(c[k++]);
    r.violation = parse_double(c[k++]);
    r.track_err = parse_double(c[k++]);
    r.feasible = std::stoi(c[k++]) != 0;
    r.solved = std::stoi(c[k++]) != 0;
    r.iterations = std::stoi(c[k++]);
    r.used_candidate = std::stoi(c[k++]) != 0;
    r.planner = std::stoi(c[k++]);
    if (wall) r.wall_time = parse_double(c[k++]);
    tr.records.push_back(std::move(r));
  }
  tr.metrics = compute_metrics(tr.records, tail);
  return tr;
}

// ---------------------------------------------------------------------------------------------
// SVG rendering: state trajectories, reference and target layers, constraint bounds.

struct PlotBounds {
  int state = -1;
  double lo = -kInf, hi = kInf;
};

/// Per-state bounds read off single-state rows of Z (at t = 0).
inline std::vector<PlotBounds> state_bounds(const ConstraintSet& z) {
  std::vector<PlotBounds> out;
  const Mat& H = z.H();
  const Vec b = z.b_at(0);
  for (int i = 0; i < z.n(); ++i) {
    PlotBounds pb;
    pb.state = i;
    for (int r = 0; r < H.rows(); ++r) {
      Vec row = H.row(r).transpose();
      const double c = row[i];
      row[i] = 0.0;
      if (row.cwiseAbs().maxCoeff() > 0.0 || c == 0.0) continue;
      if (c > 0)
        pb.hi = std::min(pb.hi, b[r] / c);
      else
        pb.lo = std::max(pb.lo, b[r] / c);
    }
    if (std::isfinite(pb.lo) || std::isfinite(pb.hi)) out.push_back(pb);
  }
  return out;
}

inline std::string render_svg(const ClosedLoopTrace& tr, const std::vector<PlotBounds>& bounds = {},
                              const std::string& title = "") {
  const double W = 800, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  std::ostringstream os;
  os << std::setprecision(6);
  const auto& rec = tr.records;
  double t0 = 0, t1 = 1, y0 = kInf, y1 = -kInf;
  if (!rec.empty()) {
    t0 = static_cast<double>(rec.front().t);
    t1 = std::max(t0 + 1.0, static_cast<double>(rec.back().t));
  }
  auto widen = [&](double v) {
    if (std::isfinite(v)) {
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  };
  for (const auto& r : rec) {
    for (int i = 0; i < r.x.size(); ++i) widen(r.x[i]);
    for (int i = 0; i < r.r.size(); ++i) widen(r.r[i]);
    for (int i = 0; i < r.yd.size(); ++i) widen(r.yd[i]);
  }
  for (const auto& b : bounds) {
    widen(b.lo);
    widen(b.hi);
  }
  if (!(y0 < y1)) {
    y0 = (std::isfinite(y0) ? y0 : 0.0) - 1.0;
    y1 = y0 + 2.0;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto X = [&](double t) { return ml + (t - t0) / (t1 - t0) * (W - ml - mr); };
  auto Y = [&](double y) { return mt + (y1 - y) / (y1 - y0) * (H - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
                                 "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  // axes and ticks
  os << "<g id=\"axes\" stroke=\"black\" fill=\"none\">\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\"/>\n";
  os << "</g>\n<g id=\"ticks\" font-size=\"11\" fill=\"black\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double tv = t0 + (t1 - t0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
    os << "<text x=\"" << X(tv) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << tv << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << Y(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">t</text>\n</g>\n";
  // constraints
  os << "<g id=\"constraints\" stroke-dasharray=\"6,4\" stroke-width=\"1\">\n";
  for (const auto& b : bounds) {
    const char* col = colors[b.state % 12];
    for (double v : {b.lo, b.hi})
      if (std::isfinite(v))
        os << "<line x1=\"" << X(t0) << "\" y1=\"" << Y(v) << "\" x2=\"" << X(t1) << "\" y2=\"" << Y(v)
           << "\" stroke=\"" << col << "\" opacity=\"0.6\"/>\n";
  }
  os << "</g>\n";
  auto poly = [&](const std::string& id, auto get, int count, const char* extra) {
    os << "<g id=\"" << id << "\" fill=\"none\">\n";
    for (int i = 0; i < count; ++i) {
      std::ostringstream pts;
      pts << std::setprecision(6);
      int npts = 0;
      for (const auto& r : rec) {
        const Vec& v = get(r);
        if (i >= v.size() || !std::isfinite(v[i])) continue;
        pts << (npts++ ? " " : "") << X(static_cast<double>(r.t)) << "," << Y(v[i]);
      }
      if (npts) os << "<polyline stroke=\"" << colors[i % 12] << "\" " << extra << " points=\"" << pts.str() << "\"/>\n";
    }
    os << "</g>\n";
  };
  int n = 0, nr = 0, p = 0;
  for (const auto& r : rec) {
    n = std::max(n, static_cast<int>(r.x.size()));
    nr = std::max(nr, static_cast<int>(r.r.size()));
    p = std::max(p, static_cast<int>(r.yd.size()));
  }
  poly("reference", [](const StepRecord& r) -> const Vec& { return r.r; }, nr, "stroke-width=\"1\" stroke-dasharray=\"2,3\"");
  poly("target", [](const StepRecord& r) -> const Vec& { return r.yd; }, p, "stroke-width=\"1.5\" opacity=\"0.5\"");
  poly("state", [](const StepRecord& r) -> const Vec& { return r.x; }, n, "stroke-width=\"1.8\"");
  os << "</svg>\n";
  return os.str();
}

/// Reads an (N, alpha) table as written by HorizonCertificate::csv().
inline HorizonCertificate certificate_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "N,alpha") throw SpecError("certificate csv: bad header");
  HorizonCertificate c;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw SpecError("certificate csv: bad row: " + line);
    if (std::stoi(line.substr(0, comma)) != static_cast<int>(c.alpha.size()) + 1)
      throw SpecError("certificate csv: rows must list N = 1, 2, ...");
    c.alpha.push_back(parse_double(line.substr(comma + 1)));
    if (c.n_bar < 0 && c.alpha.back() > 0.0) c.n_bar = static_cast<int>(c.alpha.size());
  }
  return c;
}

/// alpha_N against N with the zero line and the first certified horizon marked.
inline std::string render_certificate_svg(const HorizonCertificate& c, const std::string& title = "") {
  const double W = 800, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  const int K = static_cast<int>(c.alpha.size());
  double y0 = 0.0, y1 = 1.0;
  for (double a : c.alpha)
    if (std::isfinite(a)) {
      y0 = std::min(y0, a);
      y1 = std::max(y1, a);
    }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double n1 = std::max(2.0, static_cast<double>(K));
  auto X = [&](double n) { return ml + (n - 1.0) / (n1 - 1.0) * (W - ml - mr); };
  auto Y = [&](double y) { return mt + (y1 - y) / (y1 - y0) * (H - mt - mb); };
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << " " << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  os << "<g id=\"axes\" stroke=\"black\" fill=\"none\">\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb << "\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\"/>\n";
  os << "</g>\n<g id=\"ticks\" font-size=\"11\" fill=\"black\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double nv = 1.0 + (n1 - 1.0) * k / 5.0, yv = y0 + (y1 - y0) * k / 5.0;
    os << "<text x=\"" << X(nv) << "\" y=\"" << H - mb + 16 << "\" text-anchor=\"middle\">" << nv << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << Y(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">N</text>\n</g>\n";
  os << "<g id=\"zero\" stroke=\"#7f7f7f\" stroke-dasharray=\"6,4\">\n<line x1=\"" << X(1.0) << "\" y1=\"" << Y(0.0)
     << "\" x2=\"" << X(n1) << "\" y2=\"" << Y(0.0) << "\"/>\n</g>\n";
  os << "<g id=\"alpha\" fill=\"none\">\n<polyline stroke=\"#1f77b4\" stroke-width=\"1.8\" points=\"";
  int npts = 0;
  for (int k = 0; k < K; ++k)
    if (std::isfinite(c.alpha[k])) os << (npts++ ? " " : "") << X(k + 1.0) << "," << Y(c.alpha[k]);
  os << "\"/>\n</g>\n";
  if (c.n_bar > 0)
    os << "<g id=\"certified\" stroke=\"#d62728\">\n<line x1=\"" << X(c.n_bar) << "\" y1=\"" << mt << "\" x2=\""
       << X(c.n_bar) << "\" y2=\"" << H - mb << "\"/>\n</g>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace dynop
