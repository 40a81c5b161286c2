// dynop: synthesize terminal ingredients, certify horizons, run scenarios, compare traces, and plot.
//
// Exit codes: 0 success, 1 I/O / parse / configuration error, 2 infeasibility or synthesis failure
// (a JSON error report is written to <out>/error.json and echoed on stderr).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dynop/io.hpp"

using namespace dynop;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary sibling and renames it into place.
void write_atomic(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError(what + ": " + e.what());
  }
}

struct Context {
  std::vector<std::string> argv;
  fs::path out = ".";
};

void write_manifest(const Context& ctx, const fs::path& artifact, const std::string& sub, const json& config,
                    const json& extra = json::object()) {
  json m;
  m["subcommand"] = sub;
  m["arguments"] = ctx.argv;
  m["config"] = config;
  m["artifact"] = artifact.filename().string();
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  fs::path mp = artifact;
  mp.replace_extension(".manifest.json");
  write_atomic(mp, m.dump(2) + "\n");
}

// --------------------------------------------------------------------------------------------- synth

struct SynthArgs {
  std::string system;
  std::string params = "{}";
  std::string constraints;
  std::string type = "setpoint";
  std::vector<double> setpoint;
  std::vector<double> u_ref;
  std::string Q = "1", R = "1";
  double eps = 0.0;
  int samples = 1000;
  std::string name = "ingredients";
};

/// Steady input for the state x_r by Gauss-Newton on f(x_r, u) = x_r.
Vec steady_input(const DynamicalSystem& sys, const Vec& xr, Vec u) {
  for (int it = 0; it < 50; ++it) {
    const Vec res = sys.f(xr, u) - xr;
    if (res.lpNorm<Eigen::Infinity>() <= 1e-13) break;
    const Mat B = sys.jacobians(xr, u).B;
    u -= B.completeOrthogonalDecomposition().solve(res);
  }
  return u;
}

int cmd_synth(const Context& ctx, const SynthArgs& a) {
  json sysj = {{"id", a.system}, {"params", parse_json_text(a.params, "--params")}};
  if (!a.constraints.empty()) sysj["constraints"] = parse_json_text(a.constraints, "--constraints");
  const Plant pl = plant_from_json(sysj);
  const int n = pl.sys.n(), m = pl.sys.m();
  auto broadcast = [](const std::vector<double>& v, int len, const char* flag) {
    if (v.empty()) return Vec(Vec::Zero(len));
    if (v.size() == 1) return Vec(Vec::Constant(len, v[0]));
    if (static_cast<int>(v.size()) != len) throw SpecError(std::string(flag) + " has the wrong length");
    return Vec(Eigen::Map<const Vec>(v.data(), len));
  };
  const Vec xr = broadcast(a.setpoint, n, "--setpoint");
  const Vec ur = a.u_ref.empty() ? steady_input(pl.sys, xr, Vec::Zero(m)) : broadcast(a.u_ref, m, "--u-ref");
  if ((pl.sys.f(xr, ur) - xr).lpNorm<Eigen::Infinity>() > 1e-9)
    throw SynthesisError("setpoint is not a steady state of the system");
  json tj = {{"type", a.type}, {"r", to_json(RefPoint{xr, ur})}};
  if (a.type == "setpoint") {
    tj["Q"] = parse_json_text(a.Q, "--Q");
    tj["R"] = parse_json_text(a.R, "--R");
    tj["eps"] = a.eps;
    tj["samples"] = a.samples;
  } else if (a.type != "equality") {
    throw SpecError("synth --type must be setpoint or equality");
  }
  const StageCost cost = StageCost::quadratic(mat_of(parse_json_text(a.Q, "--Q"), n), mat_of(parse_json_text(a.R, "--R"), m));
  const LoadedTerminal lt = terminal_from_json(tj, pl, cost, ".");
  const fs::path out = ctx.out / (a.name + ".json");
  write_atomic(out, ingredients_to_json(lt.ti).dump(2) + "\n");
  write_manifest(ctx, out, "synth", {{"system", sysj}, {"terminal", tj}});
  std::cout << out.string() << "\n";
  return 0;
}

// --------------------------------------------------------------------------------------------- certify

struct CertifyArgs {
  double gamma = 0.0;
  int nmax = 20;
  std::string method = "lp-tight";
  double eps_f = kInf;
  std::string name = "certificate";
};

int cmd_certify(const Context& ctx, const CertifyArgs& a) {
  if (!(a.gamma >= 1.0)) throw SpecError("--gamma must be >= 1");
  if (a.nmax < 1) throw SpecError("--nmax must be >= 1");
  HorizonMethod method = HorizonMethod::Lp;
  bool found = false;
  for (auto m : {HorizonMethod::Simple, HorizonMethod::Decay, HorizonMethod::Lp, HorizonMethod::RelaxedClf})
    if (a.method == to_string(m)) {
      method = m;
      found = true;
    }
  if (!found) throw SpecError("unknown --method " + a.method);
  const auto c = certify_horizon(a.gamma, a.nmax, method, a.eps_f);
  const fs::path out = ctx.out / (a.name + ".csv");
  write_atomic(out, c.csv());
  json cfg = {{"gamma", a.gamma}, {"nmax", a.nmax}, {"method", a.method}};
  if (std::isfinite(a.eps_f)) cfg["eps_f"] = a.eps_f;
  write_manifest(ctx, out, "certify", cfg, {{"n_bar", c.n_bar}});
  std::cout << "N_bar " << c.n_bar << "\n" << out.string() << "\n";
  return 0;
}

// --------------------------------------------------------------------------------------------- run

struct RunArgs {
  std::string scenario;
  std::optional<int> N, T, M, nu, steps;
  std::optional<unsigned> seed;
  std::optional<double> beta;
  std::string Q, R, S;
  bool wall_time = false;
  bool svg = false;
};

int cmd_run(const Context& ctx, const RunArgs& a) {
  const fs::path sp = a.scenario;
  json doc = parse_json_text(read_file(sp), sp.string());
  json& c = doc.at("controller");
  if (a.N) c["N"] = *a.N;
  if (a.T) c["T"] = *a.T;
  if (a.M) c["M"] = *a.M;
  if (a.nu) c["nu"] = *a.nu;
  if (a.beta) c["beta"] = *a.beta;
  if (!a.S.empty()) c["S"] = parse_json_text(a.S, "--S");
  if (!a.Q.empty()) doc.at("cost")[doc["cost"].contains("Qy") ? "Qy" : "Q"] = parse_json_text(a.Q, "--Q");
  if (!a.R.empty()) doc.at("cost")["R"] = parse_json_text(a.R, "--R");
  if (a.steps) doc["steps"] = *a.steps;
  if (a.seed) doc["seed"] = *a.seed;
  const auto L = scenario_from_json(doc, sp.has_parent_path() ? sp.parent_path() : fs::path("."));
  const auto tr = run_closed_loop(L.scenario);
  const std::string stem = L.scenario.name;
  const fs::path out = ctx.out / (stem + ".csv");
  write_atomic(out, trace_to_csv(tr, a.wall_time));
  json metrics = {{"J_cl", tr.metrics.J_cl},
                  {"average", tr.metrics.average},
                  {"tail_average", tr.metrics.tail_average},
                  {"tail", tr.metrics.tail},
                  {"max_violation", tr.metrics.max_violation},
                  {"infeasible_steps", tr.metrics.infeasible_steps}};
  for (auto it = metrics.begin(); it != metrics.end(); ++it)
    if (it->is_number_float() && !std::isfinite(it->get<double>())) *it = format_double(it->get<double>());
  json extra = {{"status", tr.status}, {"metrics", metrics}};
  if (!tr.reason.empty()) extra["reason"] = tr.reason;
  if (tr.first_divergence >= 0) extra["first_divergence"] = tr.first_divergence;
  write_manifest(ctx, out, "run", L.resolved, extra);
  if (a.svg) {
    fs::path svg = out;
    svg.replace_extension(".svg");
    write_atomic(svg, render_svg(tr, state_bounds(L.scenario.spec.z), stem));
  }
  std::cout << out.string() << " " << tr.status << " average " << format_double(tr.metrics.average) << "\n";
  if (tr.status == "infeasible") throw InfeasibleError(tr.reason.empty() ? "closed loop became infeasible" : tr.reason);
  return 0;
}

// --------------------------------------------------------------------------------------------- compare

struct CompareArgs {
  std::string a, b;
  std::string metric = "average";
  double tol = 1e-9;
  int tail = 0;
  std::string name = "comparison";
};

int cmd_compare(const Context& ctx, const CompareArgs& a) {
  const auto ta = trace_from_csv(read_file(a.a), a.tail);
  const auto tb = trace_from_csv(read_file(a.b), a.tail);
  const auto cmp = compare_traces(ta, tb, trace_metric_from_string(a.metric), a.tol);
  json r = {{"a", a.a}, {"b", a.b}, {"metric", a.metric}, {"value_a", cmp.a}, {"value_b", cmp.b},
            {"difference", cmp.difference}, {"verdict", cmp.verdict}};
  const fs::path out = ctx.out / (a.name + ".json");
  write_atomic(out, r.dump(2) + "\n");
  write_manifest(ctx, out, "compare", {{"a", a.a}, {"b", a.b}, {"metric", a.metric}, {"tol", a.tol}, {"tail", a.tail}});
  std::cout << cmp.verdict << " " << format_double(cmp.difference) << "\n";
  return 0;
}

// --------------------------------------------------------------------------------------------- plot

struct PlotArgs {
  std::string input;
  std::string scenario;
  std::string title;
};

int cmd_plot(const Context& ctx, const PlotArgs& a) {
  const std::string text = read_file(a.input);
  std::string svg;
  if (text.rfind("N,alpha", 0) == 0) {
    svg = render_certificate_svg(certificate_from_csv(text), a.title);
  } else {
    std::vector<PlotBounds> bounds;
    if (!a.scenario.empty()) {
      const fs::path sp = a.scenario;
      const json doc = parse_json_text(read_file(sp), sp.string());
      bounds = state_bounds(plant_from_json(doc.at("system")).z);
    }
    svg = render_svg(trace_from_csv(text), bounds, a.title);
  }
  fs::path out = ctx.out / fs::path(a.input).filename();
  out.replace_extension(".svg");
  write_atomic(out, svg);
  write_manifest(ctx, out, "plot", {{"input", a.input}, {"scenario", a.scenario}, {"title", a.title}});
  std::cout << out.string() << "\n";
  return 0;
}

int report_failure(const Context& ctx, const std::string& kind, const std::string& msg, const std::string& sub) {
  const json e = {{"error", kind}, {"message", msg}, {"subcommand", sub}, {"arguments", ctx.argv}};
  std::cerr << e.dump() << "\n";
  try {
    write_atomic(ctx.out / "error.json", e.dump(2) + "\n");
  } catch (const std::exception&) {
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.argv.assign(argv, argv + argc);
  CLI::App app{"dynop: model predictive control toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string out = ".";
  app.add_option("-o,--out", out, "output directory")->capture_default_str();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "synthesize terminal ingredients for a steady state");
  synth->add_option("--system", sa.system, "benchmark system id")->required();
  synth->add_option("--params", sa.params, "system parameters as JSON");
  synth->add_option("--constraints", sa.constraints, "box constraints as JSON (x_lo, x_hi, u_lo, u_hi)");
  synth->add_option("--type", sa.type, "setpoint | equality")->capture_default_str();
  synth->add_option("--setpoint", sa.setpoint, "steady state (one value is broadcast)")->delimiter(',');
  synth->add_option("--u-ref", sa.u_ref, "steady input (solved from the setpoint when omitted)")->delimiter(',');
  synth->add_option("--Q", sa.Q, "state weight (JSON scalar or matrix)")->capture_default_str();
  synth->add_option("--R", sa.R, "input weight (JSON scalar or matrix)")->capture_default_str();
  synth->add_option("--eps", sa.eps, "Riccati weight inflation")->capture_default_str();
  synth->add_option("--samples", sa.samples, "level-set samples for the sublevel search")->capture_default_str();
  synth->add_option("--name", sa.name, "output file stem")->capture_default_str();

  CertifyArgs ca;
  auto* certify = app.add_subcommand("certify", "alpha_N table for a cost-controllability constant");
  certify->add_option("--gamma", ca.gamma, "cost-controllability constant")->required();
  certify->add_option("--nmax", ca.nmax, "largest horizon")->capture_default_str();
  certify->add_option("--method", ca.method, "simple | exponential-decay | lp-tight | relaxed-clf")->capture_default_str();
  certify->add_option("--eps-f", ca.eps_f, "terminal-weight decrease constant (relaxed-clf)");
  certify->add_option("--name", ca.name, "output file stem")->capture_default_str();

  RunArgs ra;
  auto* run = app.add_subcommand("run", "closed-loop simulation of a scenario file");
  run->add_option("scenario", ra.scenario, "scenario JSON")->required();
  run->add_option("--N", ra.N, "prediction horizon");
  run->add_option("--T", ra.T, "reference period");
  run->add_option("--M", ra.M, "planner update interval");
  run->add_option("--nu", ra.nu, "inputs applied per solve");
  run->add_option("--beta", ra.beta, "reference cost weight");
  run->add_option("--Q", ra.Q, "state or output weight (JSON)");
  run->add_option("--R", ra.R, "input weight (JSON)");
  run->add_option("--S", ra.S, "offset weight (JSON)");
  run->add_option("--steps", ra.steps, "simulation length");
  run->add_option("--seed", ra.seed, "seed for randomized signals");
  run->add_flag("--wall-time", ra.wall_time, "add the wall_time column");
  run->add_flag("--svg", ra.svg, "also render the trace");

  CompareArgs cmpa;
  auto* compare = app.add_subcommand("compare", "compare two trace CSV files");
  compare->add_option("a", cmpa.a, "first trace")->required();
  compare->add_option("b", cmpa.b, "second trace")->required();
  compare->add_option("--metric", cmpa.metric, "average | tail-average | total-cost | final-tracking-error | max-state-difference")
      ->capture_default_str();
  compare->add_option("--tol", cmpa.tol, "relative tolerance for equality")->capture_default_str();
  compare->add_option("--tail", cmpa.tail, "tail length (0: last half)")->capture_default_str();
  compare->add_option("--name", cmpa.name, "output file stem")->capture_default_str();

  PlotArgs pa;
  auto* plot = app.add_subcommand("plot", "render a trace or certificate CSV as SVG");
  plot->add_option("input", pa.input, "trace or certificate CSV")->required();
  plot->add_option("--scenario", pa.scenario, "scenario JSON supplying constraint bounds");
  plot->add_option("--title", pa.title, "plot title");

  std::string sub;
  try {
    app.parse(argc, argv);
    ctx.out = out;
    sub = app.get_subcommands().front()->get_name();
    if (*synth) return cmd_synth(ctx, sa);
    if (*certify) return cmd_certify(ctx, ca);
    if (*run) return cmd_run(ctx, ra);
    if (*compare) return cmd_compare(ctx, cmpa);
    return cmd_plot(ctx, pa);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const InfeasibleError& e) {
    return report_failure(ctx, "infeasible", e.what(), sub);
  } catch (const SynthesisError& e) {
    return report_failure(ctx, "synthesis-failed", e.what(), sub);
  } catch (const NumericalError& e) {
    return report_failure(ctx, "synthesis-failed", e.what(), sub);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
