#include "nhaff/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "nhaff/analysis.hpp"
#include "nhaff/dynamics.hpp"
#include "nhaff/linalg.hpp"
#include "nhaff/model_io.hpp"
#include "nhaff/reaction.hpp"
#include "nhaff/report.hpp"

namespace nhaff::cli {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string model = "builtin:affine_particle";
  std::vector<std::string> params;
  std::optional<std::string> potential;
  std::string q0, v0;
  double t_end = 10.0;
  double dt = 1e-3;
  int stride = 10;
  std::string grid;
  int samples = 0;
  double speed = 1.0;
  double tol_rank = 1e-9;
  double tol_section = 1e-8;
  std::optional<std::uint64_t> seed;
  std::string out, summary;
  std::vector<std::string> observables;
  std::string field;
  bool no_project = false;
  bool off_constraint = false;
};

ParamMap parse_params(const std::vector<std::string>& items) {
  ParamMap out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--param expects name=value, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    try {
      out[name] = eval(parse(item.substr(eq + 1)), Bindings{{"pi", std::numbers::pi}});
    } catch (const std::exception& e) {
      throw UsageError("bad value for parameter '" + name + "': " + e.what());
    }
  }
  return out;
}

/// Comma-separated list of expressions in the model parameters (and pi).
Eigen::VectorXd parse_vector(const std::string& text, const Model& m, const char* flag) {
  if (text.empty()) throw UsageError(std::string(flag) + " is required");
  const VectorFieldSpec comps = parse_field(text);
  if (static_cast<int>(comps.components.size()) != m.n())
    throw UsageError(std::string(flag) + " needs " + std::to_string(m.n()) + " components");
  Bindings bind(m.spec().params.begin(), m.spec().params.end());
  bind.emplace("pi", std::numbers::pi);
  Eigen::VectorXd v(m.n());
  for (int i = 0; i < m.n(); ++i) v[i] = eval(comps.components[i], bind);
  return v;
}

std::uint64_t resolve_seed(const RunConfig& cfg) {
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("NHAFF_SEED")) {
    char* end = nullptr;
    const auto s = std::strtoull(env, &end, 10);
    if (end && *end == '\0') return s;
    throw UsageError("NHAFF_SEED must be an unsigned integer");
  }
  return 0;
}

SamplerOptions sampler_options(const RunConfig& cfg) {
  SamplerOptions o;
  o.samples = cfg.samples;
  o.speed = cfg.speed;
  o.tol_rank = cfg.tol_rank;
  o.tol_section = cfg.tol_section;
  o.seed = resolve_seed(cfg);
  return o;
}

Model load(const RunConfig& cfg) { return resolve_model(cfg.model, parse_params(cfg.params), cfg.potential); }

std::vector<Eigen::VectorXd> grid_points(const RunConfig& cfg, const Model& m) {
  if (!cfg.grid.empty()) {
    const auto axes = parse_grid(cfg.grid);
    auto pts = uniform_grid(m, axes);
    if (pts.empty()) throw UsageError("grid is empty after removing points near guard zeros");
    return pts;
  }
  if (!cfg.q0.empty()) return {parse_vector(cfg.q0, m, "--q0")};
  throw UsageError("either --grid or --q0 is required");
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : fallback_(fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw UsageError("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : fallback_; }

 private:
  std::ofstream file_;
  std::ostream& fallback_;
};

void add_model_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--model", cfg.model, "builtin:<name> or model JSON path");
  cmd->add_option("--param", cfg.params, "parameter override name=value (repeatable)");
  cmd->add_option("--potential", cfg.potential, "potential energy expression");
}

void add_sampler_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--grid", cfg.grid, "lo1:hi1:n1,... box grid");
  cmd->add_option("--q0", cfg.q0, "single configuration");
  cmd->add_option("--samples", cfg.samples, "velocity samples per configuration");
  cmd->add_option("--speed", cfg.speed, "half-width of the kernel-coordinate sampling box");
  cmd->add_option("--tol-rank", cfg.tol_rank, "relative singular-value threshold");
  cmd->add_option("--tol-section", cfg.tol_section, "section / gauge tolerance");
  cmd->add_option("--seed", cfg.seed, "64-bit RNG seed (fallback: NHAFF_SEED, then 0)");
  cmd->add_option("--out", cfg.out, "output path (default stdout)");
}

// ---------------------------------------------------------------- commands

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Model m = load(cfg);
  State s0{parse_vector(cfg.q0, m, "--q0"), parse_vector(cfg.v0, m, "--v0")};
  if (!m.guards_satisfied(s0.q)) throw UsageError("initial configuration violates a domain guard");
  if (!(cfg.dt > 0.0) || !(cfg.t_end >= 0.0)) throw UsageError("--dt must be positive and --t non-negative");

  std::vector<FieldEvaluator> fields;
  for (const auto& name : cfg.observables) fields.push_back(resolve_field(m, name));

  IntegrateOptions opts;
  opts.project = !cfg.no_project;
  opts.stride = cfg.stride;
  const Trajectory traj = integrate(m, s0, cfg.t_end, cfg.dt, opts);
  if (traj.initial_projection_delta > 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", traj.initial_projection_delta);
    err << "note: v0 projected onto the constraint manifold (max change " << buf << ")\n";
  }

  {
    Output csv(cfg.out, out);
    write_csv(csv.stream(), traj);
  }

  nlohmann::json summary;
  summary["model"] = cfg.model;
  summary["termination"] = std::string(to_string(traj.termination));
  if (!traj.message.empty()) summary["message"] = traj.message;
  summary["dt"] = traj.dt;
  summary["stride"] = traj.stride;
  summary["projected"] = traj.projected;
  summary["integrator"] = traj.integrator;
  summary["samples"] = traj.samples.size();
  summary["t_final"] = traj.samples.back().t;
  summary["projection_delta"] = traj.initial_projection_delta;
  const auto work = cumulative_work(traj);
  double max_res = 0.0, max_drift = 0.0;
  for (const auto& s : traj.samples) {
    max_res = std::max(max_res, s.residual);
    max_drift = std::max(max_drift, std::abs(s.E - traj.samples[0].E));
  }
  summary["energy"] = {{"E0", traj.samples.front().E},
                       {"E_final", traj.samples.back().E},
                       {"drift", traj.samples.back().E - traj.samples.front().E},
                       {"max_abs_drift", max_drift},
                       {"work_integral", work.back()},
                       {"balance_residual", energy_balance_residual(traj)}};
  summary["max_residual"] = max_res;
  summary["observables"] = nlohmann::json::object();
  for (std::size_t i = 0; i < fields.size(); ++i)
    summary["observables"][cfg.observables[i]] = report_json(momentum_drift(traj, m, fields[i]));

  if (!cfg.summary.empty()) {
    Output s(cfg.summary, out);
    s.stream() << dump_report(summary);
  } else {
    (cfg.out.empty() ? err : out) << dump_report(summary);
  }

  switch (traj.termination) {
    case Termination::Completed: return kOk;
    case Termination::GuardStop: return kGuardStop;
    case Termination::SolverError: return kSolverError;
  }
  return kOk;
}

int cmd_reaction(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Model m = load(cfg);
  const Eigen::VectorXd q = parse_vector(cfg.q0, m, "--q0");
  if (!m.guards_satisfied(q)) throw UsageError("configuration violates a domain guard");
  const EvaluatedFrame f = m.evaluate_frame(q);
  const Eigen::VectorXd v_in = cfg.v0.empty() ? Eigen::VectorXd::Zero(m.n()) : parse_vector(cfg.v0, m, "--v0");
  const Eigen::VectorXd v = project_velocity(f, v_in);
  const double delta = (v - v_in).cwiseAbs().maxCoeff();
  if (delta > 0.0) err << "note: velocity projected onto the constraint manifold\n";
  const ReactionSample rs = reaction_force(f, v);
  const Eigen::VectorXd x = xi(f);
  nlohmann::json j = {{"q", to_json_array(q)},
                      {"v", to_json_array(v)},
                      {"v_input", to_json_array(v_in)},
                      {"projection_delta", delta},
                      {"R", to_json_array(rs.R)},
                      {"lambda", to_json_array(rs.lambda)},
                      {"xi", to_json_array(x)},
                      {"E", energy(f, v)},
                      {"R_dot_xi", rs.R.dot(x)},
                      {"R_dot_v", rs.R.dot(v)},
                      {"residual", constraint_residual(f, v)}};
  Output o(cfg.out, out);
  o.stream() << dump_report(j);
  return kOk;
}

int cmd_rad(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const Model m = load(cfg);
  const auto grid = grid_points(cfg, m);
  SamplerOptions opts = sampler_options(cfg);
  Output o(cfg.out, out);
  auto& os = o.stream();
  for (int i = 1; i <= m.n(); ++i) os << (i > 1 ? "," : "") << "q" << i;
  os << ",d,fiber_dim,zero_reaction\n";
  char buf[40];
  for (std::size_t g = 0; g < grid.size(); ++g) {
    SamplerOptions po = opts;
    po.seed = point_seed(opts.seed, g);
    const FiberReport rep = rad_fiber(m, grid[g], po);
    for (int i = 0; i < m.n(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", grid[g][i]);
      os << (i ? "," : "") << buf;
    }
    os << ',' << rep.d << ',' << rep.rad_fiber.cols() << ',' << (rep.zero_reaction ? 1 : 0) << '\n';
  }
  return kOk;
}

int cmd_check(const std::string& which, const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const Model m = load(cfg);
  const SamplerOptions opts = sampler_options(cfg);
  nlohmann::json report;
  bool pass = false;
  if (which == "energy") {
    const auto grid = grid_points(cfg, m);
    const SectionVerdict v = energy_conservation_test(m, grid, opts);
    report = report_json(v);
    report["test"] = "energy_conservation";
    pass = v.section;
  } else if (which == "section") {
    if (cfg.field.empty()) throw UsageError("--field is required");
    const auto grid = grid_points(cfg, m);
    const SectionVerdict v = is_section_of_rad(m, resolve_field(m, cfg.field), grid, opts);
    report = report_json(v);
    pass = v.section;
  } else if (which == "gauge") {
    if (cfg.field.empty()) throw UsageError("--field is required");
    const FieldEvaluator Y = resolve_field(m, cfg.field);
    if (!Y.symbolic()) throw UsageError("gauge test needs a symbolic field");
    const auto grid = grid_points(cfg, m);
    const GaugeVerdict v = gauge_symmetry_test(m, Y, grid, opts, cfg.off_constraint);
    report = report_json(v);
    pass = v.gauge_symmetry;
  } else if (which == "projection") {
    if (cfg.field.empty()) throw UsageError("--field is required");
    const FieldEvaluator Y = resolve_field(m, cfg.field);
    const auto grid = grid_points(cfg, m);
    nlohmann::json points = nlohmann::json::array();
    pass = true;
    double worst = 0.0;
    for (const auto& q : grid) {
      const GeneratorProjection g = generator_projection(m, Y, q);
      points.push_back(report_json(g, q, opts.tol_section));
      pass = pass && std::abs(g.obstruction) <= opts.tol_section;
      worst = std::max(worst, std::abs(g.obstruction));
    }
    report = {{"test", "generator_projection"},
              {"field", Y.label()},
              {"verdict", pass ? "pass" : "fail"},
              {"max_violation", worst},
              {"grid_size", grid.size()},
              {"tolerances", {{"obstruction", opts.tol_section}}},
              {"points", points}};
  } else {
    throw UsageError("unknown check '" + which + "' (energy, section, gauge, projection)");
  }
  Output o(cfg.out, out);
  o.stream() << dump_report(report);
  return pass ? kOk : kCheckFailed;
}

int cmd_export(const RunConfig& cfg, std::ostream& out) {
  const Model m = load(cfg);
  Output o(cfg.out, out);
  o.stream() << model_to_json(m).dump(2) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulation and conservation analysis for systems with affine nonholonomic constraints", "nhaff"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto* sim = app.add_subcommand("simulate", "integrate the constrained equations of motion");
  add_model_options(sim, cfg);
  sim->add_option("--q0", cfg.q0, "initial configuration")->required();
  sim->add_option("--v0", cfg.v0, "initial velocity (projected onto M)")->required();
  sim->add_option("--t", cfg.t_end, "final time");
  sim->add_option("--dt", cfg.dt, "RK4 step");
  sim->add_option("--stride", cfg.stride, "record every N steps");
  sim->add_option("--out", cfg.out, "trajectory CSV path (default stdout)");
  sim->add_option("--summary", cfg.summary, "summary JSON path");
  sim->add_option("--observable", cfg.observables, "momentum generator: F, K, xi or expression list");
  sim->add_flag("--no-project", cfg.no_project, "disable velocity re-projection");

  auto* rea = app.add_subcommand("reaction", "reaction force, multiplier, xi and energy at one state");
  add_model_options(rea, cfg);
  rea->add_option("--q0", cfg.q0, "configuration")->required();
  rea->add_option("--v0", cfg.v0, "velocity (projected onto M; default 0)");
  rea->add_option("--out", cfg.out, "output path");

  auto* rad = app.add_subcommand("rad", "reaction-annihilator fiber ranks over a grid");
  add_model_options(rad, cfg);
  add_sampler_options(rad, cfg);

  auto* chk = app.add_subcommand("check", "conservation verdicts");
  chk->require_subcommand(1);
  std::string which;
  for (const char* name : {"energy", "section", "gauge", "projection"}) {
    auto* sub = chk->add_subcommand(name);
    add_model_options(sub, cfg);
    add_sampler_options(sub, cfg);
    sub->add_option("--field", cfg.field, "vector field: preset name or expression list");
    if (std::string(name) == "gauge")
      sub->add_flag("--off-constraint", cfg.off_constraint, "sample velocities off the constraint manifold");
    sub->callback([&which, name] { which = name; });
  }

  auto* exp = app.add_subcommand("export", "write a model as JSON");
  add_model_options(exp, cfg);
  exp->add_option("--out", cfg.out, "output path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(cfg, out, err);
    if (rea->parsed()) return cmd_reaction(cfg, out, err);
    if (rad->parsed()) return cmd_rad(cfg, out, err);
    if (chk->parsed()) return cmd_check(which, cfg, out, err);
    if (exp->parsed()) return cmd_export(cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace nhaff::cli
