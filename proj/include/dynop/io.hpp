#pragma once
// JSON serialization of terminal ingredients and scenario files.

#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "dynop/benchmarks.hpp"
#include "dynop/sim.hpp"

namespace dynop {

using json = nlohmann::json;

// ---------------------------------------------------------------------------------------------
// Matrices and vectors as nested arrays (rows first).

inline json to_json(const Vec& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

inline json to_json(const Mat& M) {
  json j = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    j.push_back(row);
  }
  return j;
}

inline double num(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw SpecError("expected a number, got " + j.dump());
}

inline Vec vec_of(const json& j) {
  if (j.is_number()) return Vec::Constant(1, j.get<double>());
  if (!j.is_array()) throw SpecError("expected an array, got " + j.dump());
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = num(j[i]);
  return v;
}

/// Accepts a nested array, a flat array (diagonal), or a number (scalar times identity of size n).
inline Mat mat_of(const json& j, int n = -1) {
  if (j.is_number()) {
    if (n < 0) return Mat::Constant(1, 1, j.get<double>());
    return j.get<double>() * Mat::Identity(n, n);
  }
  if (!j.is_array() || j.empty()) throw SpecError("expected a matrix, got " + j.dump());
  if (!j[0].is_array()) return vec_of(j).asDiagonal();
  Mat M(j.size(), j[0].size());
  for (size_t r = 0; r < j.size(); ++r) {
    if (j[r].size() != j[0].size()) throw SpecError("ragged matrix");
    for (size_t c = 0; c < j[r].size(); ++c) M(r, c) = num(j[r][c]);
  }
  return M;
}

inline json to_json(const RefPoint& r) { return {{"x", to_json(r.x)}, {"u", to_json(r.u)}}; }
inline RefPoint ref_point_of(const json& j) { return {vec_of(j.at("x")), vec_of(j.at("u"))}; }

// ---------------------------------------------------------------------------------------------
// Steady-state parametrization of linear plants.

/// Grid over theta with r(theta) = (x, u) = basis * theta, basis spanning the null space of [A - I, B].
inline ParamGrid linear_steady_grid(const Mat& basis, int n, const Vec& lo, const Vec& hi, std::vector<int> nodes) {
  if (basis.cols() != lo.size() || lo.size() != hi.size() || static_cast<int>(nodes.size()) != lo.size())
    throw SpecError("steady grid: dimension mismatch");
  ParamGrid g;
  g.lo = lo;
  g.hi = hi;
  g.nodes = std::move(nodes);
  const Mat pinv = basis.completeOrthogonalDecomposition().pseudoInverse();
  g.point = [basis, n](const Vec& th) {
    const Vec z = basis * th;
    return RefPoint{z.head(n), z.tail(basis.rows() - n)};
  };
  g.param_of = [pinv](const RefPoint& r) { return Vec(pinv * concat(r.x, r.u)); };
  return g;
}

/// Orthonormal basis of the steady-state manifold of a linear plant, or of its output-parametrized slice.
inline Mat steady_state_basis(const DynamicalSystem& sys) {
  if (!sys.is_linear()) throw SpecError("steady_state_basis: linear plant required");
  const int n = sys.n(), m = sys.m();
  Mat E(n, n + m);
  E << sys.A() - Mat::Identity(n, n), sys.B();
  Eigen::FullPivLU<Mat> lu(E);
  Mat K = lu.kernel();
  if (K.cols() == 1 && K.norm() == 0.0) throw SpecError("steady_state_basis: no steady states besides the origin");
  Eigen::HouseholderQR<Mat> qr(K);
  Mat Q = qr.householderQ() * Mat::Identity(n + m, K.cols());
  // fix signs so the first nonzero entry of each column is positive
  for (int c = 0; c < Q.cols(); ++c) {
    for (int r = 0; r < Q.rows(); ++r) {
      if (std::abs(Q(r, c)) > 1e-12) {
        if (Q(r, c) < 0) Q.col(c) *= -1.0;
        break;
      }
    }
  }
  return Q;
}

// ---------------------------------------------------------------------------------------------
// Terminal ingredients.

inline const char* to_string(TerminalIngredients::Variant v) {
  switch (v) {
    case TerminalIngredients::Variant::Stationary: return "stationary";
    case TerminalIngredients::Variant::TimeVarying: return "time-varying";
    case TerminalIngredients::Variant::Parametrized: return "parametrized";
    case TerminalIngredients::Variant::Equality: return "equality";
  }
  return "?";
}

struct GridRecipe {
  Mat basis;
  int n = 0;
};

inline json ingredients_to_json(const TerminalIngredients& ti, const GridRecipe* grid = nullptr) {
  json j;
  j["variant"] = to_string(ti.variant);
  j["alpha"] = ti.alpha;
  j["rho"] = ti.rho;
  j["epsilon"] = ti.epsilon;
  if (ti.P.size()) j["P"] = to_json(ti.P);
  if (ti.p.size()) j["p"] = to_json(ti.p);
  if (ti.K.size()) j["K"] = to_json(ti.K);
  if (ti.r.x.size()) j["r"] = to_json(ti.r);
  if (ti.variant == TerminalIngredients::Variant::TimeVarying) {
    j["periodic"] = ti.periodic;
    for (const auto& P : ti.P_seq) j["P_seq"].push_back(to_json(P));
    for (const auto& K : ti.K_seq) j["K_seq"].push_back(to_json(K));
    for (const auto& p : ti.p_seq) j["p_seq"].push_back(to_json(p));
    for (const auto& r : ti.r_seq) j["r_seq"].push_back(to_json(r));
  }
  if (ti.variant == TerminalIngredients::Variant::Parametrized) {
    if (!grid || !ti.grid) throw SpecError("parametrized ingredients need their grid recipe to be serialized");
    j["alpha1"] = ti.alpha1;
    j["P_common"] = to_json(ti.P_common);
    for (const auto& P : ti.P_nodes) j["P_nodes"].push_back(to_json(P));
    for (const auto& K : ti.K_nodes) j["K_nodes"].push_back(to_json(K));
    j["grid"] = {{"basis", to_json(grid->basis)},
                 {"n", grid->n},
                 {"lo", to_json(ti.grid->lo)},
                 {"hi", to_json(ti.grid->hi)},
                 {"nodes", ti.grid->nodes}};
  }
  if (ti.variant == TerminalIngredients::Variant::Equality) j["controllability_index"] = ti.controllability_index;
  return j;
}

inline TerminalIngredients ingredients_from_json(const json& j) {
  TerminalIngredients ti;
  const std::string v = j.at("variant").get<std::string>();
  if (v == "stationary")
    ti.variant = TerminalIngredients::Variant::Stationary;
  else if (v == "time-varying")
    ti.variant = TerminalIngredients::Variant::TimeVarying;
  else if (v == "parametrized")
    ti.variant = TerminalIngredients::Variant::Parametrized;
  else if (v == "equality")
    ti.variant = TerminalIngredients::Variant::Equality;
  else
    throw SpecError("unknown ingredients variant: " + v);
  ti.alpha = num(j.at("alpha"));
  ti.rho = j.value("rho", 0.0);
  ti.epsilon = j.value("epsilon", 0.0);
  if (j.contains("P")) ti.P = mat_of(j["P"]);
  if (j.contains("p")) ti.p = vec_of(j["p"]);
  if (j.contains("K")) ti.K = mat_of(j["K"]);
  if (j.contains("r")) ti.r = ref_point_of(j["r"]);
  if (ti.variant == TerminalIngredients::Variant::TimeVarying) {
    ti.periodic = j.value("periodic", false);
    for (const auto& e : j.at("P_seq")) ti.P_seq.push_back(mat_of(e));
    for (const auto& e : j.at("K_seq")) ti.K_seq.push_back(mat_of(e));
    if (j.contains("p_seq"))
      for (const auto& e : j["p_seq"]) ti.p_seq.push_back(vec_of(e));
    for (const auto& e : j.at("r_seq")) ti.r_seq.push_back(ref_point_of(e));
  }
  if (ti.variant == TerminalIngredients::Variant::Parametrized) {
    ti.alpha1 = num(j.at("alpha1"));
    ti.P_common = mat_of(j.at("P_common"));
    for (const auto& e : j.at("P_nodes")) ti.P_nodes.push_back(mat_of(e));
    for (const auto& e : j.at("K_nodes")) ti.K_nodes.push_back(mat_of(e));
    const json& g = j.at("grid");
    ti.grid = std::make_shared<ParamGrid>(linear_steady_grid(mat_of(g.at("basis")), g.at("n").get<int>(),
                                                             vec_of(g.at("lo")), vec_of(g.at("hi")),
                                                             g.at("nodes").get<std::vector<int>>()));
  }
  if (ti.variant == TerminalIngredients::Variant::Equality) ti.controllability_index = j.value("controllability_index", 0);
  return ti;
}

// ---------------------------------------------------------------------------------------------
// Scenario files.

struct Plant {
  DynamicalSystem sys;
  ConstraintSet z;
  std::optional<bench::ThermalParams> thermal;
};

/// Benchmark plant by id with parameters; "constraints" in the same object overrides the default set.
inline Plant plant_from_json(const json& j) {
  const std::string id = j.at("id").get<std::string>();
  const json p = j.value("params", json::object());
  Plant pl;
  if (id == "double-integrator") {
    pl.sys = bench::double_integrator(p.value("dt", 1.0));
    pl.z = bench::double_integrator_box(p.value("x_max", 5.0), p.value("u_max", 1.0));
  } else if (id == "scalar-cubic") {
    pl.sys = bench::scalar_cubic(p.value("c", 1.0));
    pl.z = bench::scalar_cubic_box();
  } else if (id == "mass-spring-chain") {
    bench::ChainParams c;
    c.masses = p.value("masses", c.masses);
    c.mass = p.value("mass", c.mass);
    c.spring = p.value("spring", c.spring);
    c.damping = p.value("damping", c.damping);
    c.dt = p.value("dt", c.dt);
    pl.sys = bench::mass_spring_chain(c);
    pl.z = ConstraintSet::none(pl.sys.n(), pl.sys.m());
  } else if (id == "thermal") {
    bench::ThermalParams t;
    t.a = p.value("a", t.a);
    t.b = p.value("b", t.b);
    t.u_max = p.value("u_max", t.u_max);
    t.period = p.value("period", t.period);
    t.occupied_from = p.value("occupied_from", t.occupied_from);
    t.occupied_to = p.value("occupied_to", t.occupied_to);
    t.occupied_lo = p.value("occupied_lo", t.occupied_lo);
    t.occupied_hi = p.value("occupied_hi", t.occupied_hi);
    t.idle_lo = p.value("idle_lo", t.idle_lo);
    t.idle_hi = p.value("idle_hi", t.idle_hi);
    t.price_base = p.value("price_base", t.price_base);
    t.price_peak = p.value("price_peak", t.price_peak);
    t.u_weight = p.value("u_weight", t.u_weight);
    pl.sys = bench::thermal(t);
    pl.z = bench::thermal_constraints(t);
    pl.thermal = t;
  } else if (id == "unicycle") {
    pl.sys = bench::unicycle(p.value("dt", 0.1));
    pl.z = bench::unicycle_box();
  } else if (id == "linear") {
    const Mat A = mat_of(p.at("A"));
    const Mat B = mat_of(p.at("B"));
    pl.sys = DynamicalSystem::linear(A, B, p.contains("C") ? mat_of(p["C"]) : Mat());
    pl.z = ConstraintSet::none(pl.sys.n(), pl.sys.m());
  } else {
    throw SpecError("unknown system id: " + id);
  }
  if (j.contains("constraints")) {
    const json& c = j["constraints"];
    const int n = pl.sys.n(), m = pl.sys.m();
    auto bound = [&](const char* key, int len, double dflt) {
      if (!c.contains(key)) return Vec(Vec::Constant(len, dflt));
      Vec v = vec_of(c[key]);
      if (v.size() == 1 && len > 1) v = Vec::Constant(len, v[0]);
      if (v.size() != len) throw SpecError(std::string("constraints: ") + key + " has the wrong length");
      return v;
    };
    pl.z = ConstraintSet::box(bound("x_lo", n, -kInf), bound("x_hi", n, kInf), bound("u_lo", m, -kInf),
                              bound("u_hi", m, kInf), c.value("margin", 0.0));
  }
  return pl;
}

inline StageCost cost_from_json(const json& j, const Plant& pl) {
  const std::string type = j.at("type").get<std::string>();
  const int n = pl.sys.n(), m = pl.sys.m();
  if (type == "quadratic") return StageCost::quadratic(mat_of(j.at("Q"), n), mat_of(j.at("R"), m));
  if (type == "output")
    return StageCost::output(pl.sys, mat_of(j.at("Qy"), pl.sys.p()), mat_of(j.at("R"), m),
                             j.contains("Qs") ? mat_of(j["Qs"], n) : Mat());
  if (type == "economic-quadratic") {
    // 0.5 z'Hz + g'z + ye'Gz with z = (x, u)
    const Mat H = mat_of(j.at("H"), n + m);
    const Vec g = j.contains("g") ? vec_of(j["g"]) : Vec(Vec::Zero(n + m));
    const Mat G = j.contains("G") ? mat_of(j["G"]) : Mat(0, n + m);
    if (H.rows() != n + m || g.size() != n + m || G.cols() != n + m) throw SpecError("economic-quadratic dimensions");
    return StageCost::economic([H, g, G](const Vec& x, const Vec& u, const Vec& ye) {
      const Vec z = concat(x, u);
      double v = 0.5 * z.dot(H * z) + g.dot(z);
      if (G.rows() && ye.size() == G.rows()) v += ye.dot(G * z);
      return v;
    });
  }
  if (type == "thermal") {
    if (!pl.thermal) throw SpecError("thermal cost needs the thermal plant");
    return bench::thermal_cost(*pl.thermal);
  }
  throw SpecError("unknown cost type: " + type);
}

/// constant | periodic | schedule | random-steps | thermal-price
inline ExogenousSignal signal_from_json(const json& j, const Plant& pl, unsigned seed) {
  if (j.contains("constant")) return ExogenousSignal(vec_of(j["constant"]));
  if (j.contains("periodic")) {
    std::vector<Vec> v;
    for (const auto& e : j["periodic"]) v.push_back(vec_of(e));
    return ExogenousSignal::periodic(v);
  }
  if (j.contains("schedule")) {
    std::map<long, Vec> s;
    for (const auto& e : j["schedule"]) s[e.at(0).get<long>()] = vec_of(e.at(1));
    return ExogenousSignal(s, j.value("period", 0L), false);
  }
  if (j.contains("random-steps")) {
    const json& r = j["random-steps"];
    const Vec lo = vec_of(r.at("lo")), hi = vec_of(r.at("hi"));
    const long every = r.at("every").get<long>(), until = r.at("until").get<long>();
    std::mt19937 rng(r.value("seed", seed));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::map<long, Vec> s;
    for (long t = 0; t < until; t += every) {
      Vec v(lo.size());
      for (int i = 0; i < v.size(); ++i) v[i] = lo[i] + (hi[i] - lo[i]) * U(rng);
      s[t] = v;
    }
    return ExogenousSignal(s);
  }
  if (j.contains("thermal-price")) {
    if (!pl.thermal) throw SpecError("thermal-price signal needs the thermal plant");
    return bench::thermal_price_signal(*pl.thermal);
  }
  throw SpecError("unknown signal: " + j.dump());
}

inline Reference reference_from_json(const json& j) {
  if (j.contains("setpoint")) {
    const RefPoint r = ref_point_of(j["setpoint"]);
    return Reference::setpoint(r.x, r.u);
  }
  std::vector<RefPoint> pts;
  const bool periodic = j.contains("periodic");
  for (const auto& e : periodic ? j["periodic"] : j.at("trajectory")) pts.push_back(ref_point_of(e));
  return periodic ? Reference::periodic(pts) : Reference::trajectory(pts);
}

struct LoadedTerminal {
  TerminalIngredients ti;
  std::optional<GridRecipe> grid;
};

/// Synthesizes or loads terminal ingredients from a controller's "terminal" block.
inline LoadedTerminal terminal_from_json(const json& j, const Plant& pl, const StageCost& cost,
                                         const std::filesystem::path& base) {
  const std::string type = j.at("type").get<std::string>();
  const int n = pl.sys.n(), m = pl.sys.m();
  LoadedTerminal out;
  AlphaOptions ao;
  ao.samples = j.value("samples", ao.samples);
  auto QR = [&](Mat& Q, Mat& R) {
    Q = j.contains("Q") ? mat_of(j["Q"], n) : cost.Q();
    R = j.contains("R") ? mat_of(j["R"], m) : cost.R();
  };
  if (type == "file") {
    std::filesystem::path p = j.at("path").get<std::string>();
    if (p.is_relative()) p = base / p;
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open ingredients file " + p.string());
    json ij = json::parse(in);
    out.ti = ingredients_from_json(ij);
    if (ij.contains("grid")) out.grid = GridRecipe{mat_of(ij["grid"]["basis"]), ij["grid"]["n"].get<int>()};
  } else if (type == "inline") {
    out.ti = ingredients_from_json(j.at("ingredients"));
  } else if (type == "setpoint") {
    Mat Q, R;
    QR(Q, R);
    out.ti = synth_terminal_setpoint(pl.sys, pl.z, ref_point_of(j.at("r")), Q, R, j.value("eps", 0.0), ao);
  } else if (type == "periodic") {
    Mat Q, R;
    QR(Q, R);
    out.ti = synth_terminal_trajectory(pl.sys, pl.z, reference_from_json(j.at("reference")), Q, R, j.value("eps", 0.0), ao);
  } else if (type == "steady-grid") {
    Mat Q, R;
    QR(Q, R);
    const Mat basis = steady_state_basis(pl.sys);
    const Vec lo = vec_of(j.at("lo")), hi = vec_of(j.at("hi"));
    std::vector<int> nodes = j.contains("nodes") ? j["nodes"].get<std::vector<int>>() : std::vector<int>(lo.size(), 2);
    ParamSynthOptions po;
    po.alpha = ao;
    po.verify_samples = j.value("verify_samples", po.verify_samples);
    out.ti = synth_terminal_parametrized(pl.sys, pl.z, linear_steady_grid(basis, n, lo, hi, nodes), Q, R,
                                         j.value("eps", 0.1), po);
    out.grid = GridRecipe{basis, n};
  } else if (type == "equality") {
    out.ti = terminal_equality(ref_point_of(j.at("r")), &pl.sys);
  } else if (type == "economic") {
    const RefPoint r = ref_point_of(j.at("r"));
    Mat Q, R;
    Q = mat_of(j.at("Q"), n);
    R = mat_of(j.at("R"), m);
    const auto Jr = pl.sys.jacobians(r.x, r.u);
    const Mat K = -solve_dare(Jr.A, Jr.B, Q, R).K;
    const Vec ye = j.contains("ye") ? vec_of(j["ye"]) : Vec();
    EconomicSynthOptions eo;
    eo.alpha = ao;
    eo.epsilon = j.value("eps", eo.epsilon);
    const StageCost c = cost;
    out.ti = synth_terminal_economic(pl.sys, pl.z, r, [c, ye](const Vec& x, const Vec& u) { return c.economic(x, u, ye); },
                                     K, eo);
  } else {
    throw SpecError("unknown terminal type: " + type);
  }
  return out;
}

struct LoadedScenario {
  Scenario scenario;
  json resolved;                  ///< input document with defaults filled in
  std::optional<LoadedTerminal> terminal;
  Plant plant;
};

inline LoadedScenario scenario_from_json(const json& doc, const std::filesystem::path& base = ".") {
  LoadedScenario L;
  json j = doc;
  Scenario& sc = L.scenario;
  sc.name = j.value("name", std::string("scenario"));
  sc.seed = j.value("seed", 0u);
  sc.steps = j.value("steps", 100);
  sc.divergence_threshold = j.value("divergence_threshold", 1e6);
  sc.tail = j.value("tail", 0);
  L.plant = plant_from_json(j.at("system"));
  const Plant& pl = L.plant;
  json& c = j.at("controller");
  MpcProblemSpec& sp = sc.spec;
  sp.sys = pl.sys;
  sp.z = pl.z;
  sp.cost = cost_from_json(j.at("cost"), pl);
  const std::string scheme = c.at("scheme").get<std::string>();
  if (scheme == "lq-mpc-gain") {
    sp.scheme = Scheme::Unconstrained;
    sc.linear_mpc.enabled = true;
    sc.linear_mpc.N = c.at("N").get<long>();
    sp.N = 1;
  } else {
    sp.scheme = scheme_from_string(scheme);
    sp.N = c.value("N", sp.N);
  }
  sp.T = c.value("T", sp.T);
  sp.M = c.value("M", sp.M);
  sp.nu = c.value("nu", sp.nu);
  sp.beta = c.value("beta", sp.beta);
  sp.beta_adaptive = c.value("beta_adaptive", sp.beta_adaptive);
  sp.beta_window = c.value("beta_window", sp.beta_window);
  sp.alpha_min = c.value("alpha_min", sp.alpha_min);
  sp.alpha1 = c.value("alpha1", sp.alpha1);
  sp.shifted_terminal = c.value("shifted_terminal", sp.shifted_terminal);
  sp.phase_multistart = c.value("phase_multistart", sp.phase_multistart);
  sp.max_iter = c.value("max_iter", sp.max_iter);
  sp.candidate_fallback = c.value("candidate_fallback", sp.candidate_fallback);
  if (c.contains("S")) sp.S = mat_of(c["S"], pl.sys.p());
  if (c.contains("reference")) sp.ref = reference_from_json(c["reference"]);
  if (c.contains("free_terminal")) {
    const json& f = c["free_terminal"];
    const std::string ft = f.at("type").get<std::string>();
    if (ft == "scaled-stage-cost") {
      sp.free_terminal = FreeTerminal::ScaledStageCost;
      sp.omega = f.value("omega", 1.0);
    } else if (ft == "rollout") {
      sp.free_terminal = FreeTerminal::Rollout;
      sp.rollout_steps = f.at("steps").get<int>();
      sp.rollout_K = mat_of(f.at("K"));
    } else if (ft != "none") {
      throw SpecError("unknown free terminal type: " + ft);
    }
  }
  if (c.contains("terminal")) {
    L.terminal = terminal_from_json(c["terminal"], pl, sp.cost, base);
    sp.terminal = L.terminal->ti;
  }
  if (j.contains("yd")) sc.ex.yd = signal_from_json(j["yd"], pl, sc.seed);
  if (j.contains("ye")) sc.ex.ye = signal_from_json(j["ye"], pl, sc.seed);
  sc.x0 = vec_of(j.at("x0"));
  if (!sc.linear_mpc.enabled) sp.validate();
  c["N"] = sc.linear_mpc.enabled ? sc.linear_mpc.N : sp.N;
  c["T"] = sp.T;
  c["M"] = sp.M;
  c["nu"] = sp.nu;
  c["beta"] = sp.beta;
  c["shifted_terminal"] = sp.shifted_terminal;
  j["steps"] = sc.steps;
  j["seed"] = sc.seed;
  j["divergence_threshold"] = sc.divergence_threshold;
  L.resolved = j;
  return L;
}

inline LoadedScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("scenario parse error in " + path.string() + ": " + e.what());
  }
  return scenario_from_json(j, path.parent_path());
}

}  // namespace dynop
