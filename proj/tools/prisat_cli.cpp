// prisat: saturation points, prior-saturation lifts, certificates and
// syntheses for the fed-batch and Bloch models.
//
// exit codes: 0 ok, 2 no solution / no bracket, 3 invalid config, 4 numerical failure

#include "prisat/io.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace prisat;
using io::json;

namespace {

struct RunConfig {
  std::string command;
  std::string model;
  std::string params_file;
  std::string out = "out";
  double rtol = 0.0;  // 0 keeps the shooting defaults
  double atol = 0.0;
  std::string grid = "41x41";
  std::string branch;
  std::uint64_t seed = 1;
  std::string x0;
  std::string structure;
  int identity_samples = 1000;

  FedBatchParams fed;
  MriParams mri;
  ode::Options tol = shooting_tolerances();
  std::vector<std::string> outputs;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::NoBracket:
    case ErrorKind::Unclassified:
    case ErrorKind::EventNotFound: return 2;
    case ErrorKind::InvalidConfig:
    case ErrorKind::ParamInvariantViolated: return 3;
    default: return 4;
  }
}

void resolve(RunConfig& c) {
  json raw = json::object();
  if (!c.params_file.empty()) raw = io::read_json_file(c.params_file);
  const auto mc = io::parse_model_config(raw, c.model);
  c.model = mc.model;
  const json& p = mc.params;
  if (c.model == "fedbatch") {
    c.fed = io::fedbatch_params_from_json(p);
    c.fed.validate();
  } else {
    c.mri = io::mri_params_from_json(p);
    c.mri.validate();
  }
  if (c.rtol < 0 || c.atol < 0) throw Error(ErrorKind::InvalidConfig, "tolerances must be positive");
  if (c.rtol > 0) c.tol.rtol = c.rtol;
  if (c.atol > 0) c.tol.atol = c.atol;
  if (c.branch.empty()) c.branch = c.model == "fedbatch" ? "vertical" : "horizontal";
  if (c.model == "fedbatch" && c.branch != "vertical")
    throw Error(ErrorKind::InvalidConfig, "fedbatch has only the vertical branch");
  if (c.branch != "vertical" && c.branch != "horizontal")
    throw Error(ErrorKind::InvalidConfig, "--branch must be horizontal or vertical");
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw Error(ErrorKind::InvalidConfig, "cannot create " + c.out + ": " + ec.message());
}

std::pair<int, int> parse_grid(const std::string& g) {
  const auto x = g.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(g);
    const int a = std::stoi(g.substr(0, x)), b = std::stoi(g.substr(x + 1));
    if (a < 1 || b < 1) throw std::invalid_argument(g);
    return {a, b};
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "--grid expects n1xn2, got '" + g + "'");
  }
}

Vec2 parse_point(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) throw std::invalid_argument(s);
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidConfig, "--x0 expects a,b, got '" + s + "'");
  }
}

json params_json(const RunConfig& c) { return c.model == "fedbatch" ? io::to_json(c.fed) : io::to_json(c.mri); }

void emit(RunConfig& c, const std::string& name, const json& j) {
  io::write_json_file(fs::path(c.out) / name, j);
  c.outputs.push_back(name);
}

template <class Writer>
void emit_csv(RunConfig& c, const std::string& name, Writer&& w) {
  std::ofstream os(fs::path(c.out) / name);
  if (!os) throw Error(ErrorKind::InvalidConfig, "cannot write " + name);
  w(os);
  c.outputs.push_back(name);
}

void write_manifest(RunConfig& c, const json& extra) {
  json m = {{"program", "prisat"},
            {"command", c.command},
            {"model", c.model},
            {"params", params_json(c)},
            {"tolerances", io::to_json(c.tol)},
            {"seed", c.seed},
            {"branch", c.branch}};
  if (c.command == "synthesis") m["grid"] = c.grid;
  if (c.command == "certify") m["identity_samples"] = c.identity_samples;
  for (const auto& [k, v] : extra.items()) m[k] = v;
  m["outputs"] = c.outputs;
  io::write_json_file(fs::path(c.out) / "manifest.json", m);
}

void print_point(const char* label, const Vec2& x) {
  std::cout << label << " = (" << fmt17(x[0]) << ", " << fmt17(x[1]) << ")\n";
}

PlanarAffineSystem make_system(const RunConfig& c) {
  return c.model == "fedbatch" ? fedbatch_system(c.fed) : mri_system(c.mri);
}

PriorSaturationLift compute_lift(const RunConfig& c, const PlanarAffineSystem& sys, PriorLiftProblem& prob) {
  if (c.model == "fedbatch") {
    prob = f_bio_problem(sys, c.fed);
    return solve_prior_lift(sys, prob, fedbatch_guess(sys, c.fed, GuessStrategy::LocusSweep, c.tol), {}, c.tol);
  }
  prob = f_mri_problem(sys);
  return solve_prior_lift(sys, prob, mri_guess(sys, c.mri, c.tol), {}, c.tol);
}

// ---------------------------------------------------------------- commands

int cmd_saturation(RunConfig& c) {
  const auto sys = make_system(c);
  SingularLocus locus;
  Vec2 closed;
  if (c.model == "fedbatch") {
    locus = fedbatch_locus(c.fed);
    closed = Vec2(c.fed.s_star(), c.fed.v_star());
  } else {
    locus = c.branch == "horizontal" ? mri_horizontal_locus(c.mri) : mri_vertical_locus(c.mri);
    closed = mri_saturation_point(c.mri);
  }
  const auto sp = find_saturation_point(sys, locus);
  print_point("saturation", sp.x);
  json j = {{"model", c.model}, {"branch", locus.branch}, {"saturation", io::to_json(sp)}};
  if (c.model == "fedbatch" || c.branch == "horizontal") {
    j["closed_form"] = io::vec(closed);
    j["closed_form_error"] = (sp.x - closed).norm();
  }
  emit(c, "saturation.json", j);
  write_manifest(c, {});
  return 0;
}

int cmd_prior_lift(RunConfig& c) {
  const auto sys = make_system(c);
  PriorLiftProblem prob;
  const auto pl = compute_lift(c, sys, prob);
  json j = io::to_json(pl);
  if (c.model == "mri") j["admissibility"] = io::to_json(mri_admissibility(c.mri, state_of(pl.z_e)));
  print_point("x_e", state_of(pl.z_e));
  std::cout << "t_b* = " << fmt17(pl.t_b_star) << "\nu_s(z_e) = " << fmt17(pl.report.us_at_ze) << '\n';
  emit(c, "prior_lift.json", j);
  write_manifest(c, {{"converged", pl.solution.converged}});
  return pl.solution.converged ? 0 : 4;
}

int cmd_certify(RunConfig& c) {
  const auto sys = make_system(c);
  PriorLiftProblem prob;
  const auto pl = compute_lift(c, sys, prob);
  const auto curve = continue_switching_curve(sys, prob, pl, {}, c.tol);
  const auto tan = certify_tangency(sys, prob, pl, curve, TangencyThresholds::for_tolerance(c.tol));
  const auto tr = certify_transversality(sys, pl, tan);
  const auto setting = c.model == "fedbatch" ? certify_fedbatch_setting(c.fed) : certify_mri_setting(c.mri);
  const auto sampler = c.model == "fedbatch" ? fedbatch_sampler(c.fed) : mri_sampler();
  const auto ids = check_bracket_identities(sys, sampler, c.identity_samples, c.seed);
  const auto bridge = flow(sys, ControlLaw::bang(prob.bang_sign), pl.z_e, pl.t_b_star, c.tol);
  const auto checks = check_extremal(sys, bridge);

  json j = {{"model", c.model},
            {"prior_lift", io::to_json(pl)},
            {"tangency", io::to_json(tan)},
            {"transversality", io::to_json(tr)},
            {"bridge_checks",
             {{"hamiltonian_drift", checks.hamiltonian_drift},
              {"phi_ode_residual", checks.phi_ode_residual},
              {"samples", checks.samples}}},
            {"identities", io::to_json(ids)},
            {"setting", io::to_json(setting)}};
  if (c.model == "mri") j["admissibility"] = io::to_json(mri_admissibility(c.mri, state_of(pl.z_e)));
  emit(c, "certificate.json", j);
  emit_csv(c, "curve.csv", [&](std::ostream& os) { io::write_curve_csv(os, curve); });
  std::cout << "tangent = " << (tan.tangent ? "true" : "false") << " (angle " << fmt17(tan.angle) << ")\n"
            << "transverse = " << (tr.transverse ? "true" : "false") << " (rel error " << fmt17(tr.rel_error)
            << ")\n";
  write_manifest(c, {{"tangent", tan.tangent}, {"transverse", tr.transverse}});
  return tan.tangent && tr.transverse ? 0 : 4;
}

void summarize(const SynthesisDataset& d, json& j) {
  std::map<std::string, int> counts;
  for (const auto& r : d.rows) counts[(r.structure.empty() ? "-" : r.structure) + " | " + r.status]++;
  json cj = json::object();
  for (const auto& [k, v] : counts) {
    cj[k] = v;
    std::cout << k << ": " << v << '\n';
  }
  j["nodes"] = d.rows.size();
  j["counts"] = cj;
}

int cmd_synthesis(RunConfig& c) {
  const auto [n1, n2] = parse_grid(c.grid);
  json j = {{"model", c.model}, {"grid", c.grid}};
  auto write_layers = [&](const SynthesisDataset& d, const PlanarAffineSystem& sys) {
    emit_csv(c, "dataset.csv", [&](std::ostream& os) { io::write_dataset_csv(os, d); });
    emit_csv(c, "locus.csv", [&](std::ostream& os) { io::write_points_csv(os, d.locus); });
    emit_csv(c, "bridge.csv", [&](std::ostream& os) { write_trajectory_csv(os, sys, d.bridge); });
    emit_csv(c, "sigma.csv", [&](std::ostream& os) { io::write_curve_csv(os, *d.curve); });
    emit_csv(c, "points.csv", [&](std::ostream& os) { io::write_labeled_points_csv(os, d.points); });
    summarize(d, j);
  };
  if (c.model == "fedbatch") {
    const auto ctx = make_fedbatch_synthesis(c.fed, GuessStrategy::LocusSweep, c.tol);
    const auto d = synthesize_fedbatch_grid(ctx, n1, n2);
    j["prior_lift"] = io::to_json(ctx.lift);
    j["v_e"] = ctx.v_e();
    j["sigma_pi_v_range"] = {ctx.sigma_pi.front()[1], ctx.sigma_top()};
    write_layers(d, *ctx.sys);
  } else {
    const auto ctx = make_mri_synthesis(c.mri, c.tol);
    const auto d = synthesize_mri_grid(ctx, n1, n2);
    j["prior_lift"] = io::to_json(ctx.lift);
    j["x_e"] = io::vec(ctx.x_e());
    write_layers(d, *ctx.sys);
  }
  emit(c, "synthesis.json", j);
  write_manifest(c, {});
  return 0;
}

int cmd_simulate(RunConfig& c) {
  const Vec2 x0 = parse_point(c.x0);
  TrajectoryStructure st;
  std::shared_ptr<const PlanarAffineSystem> sys;
  std::string structure = c.structure;
  if (c.model == "fedbatch") {
    const auto ctx = make_fedbatch_synthesis(c.fed, GuessStrategy::LocusSweep, c.tol);
    auto cl = classify_fedbatch(ctx, x0);
    if (structure.empty()) {
      if (!cl.classified()) throw Error(ErrorKind::Unclassified, "initial condition outside the classified region");
      structure = cl.structure;
    }
    if (structure == "T") throw Error(ErrorKind::Unclassified, "initial condition already on the target");
    st = simulate_fedbatch(ctx, x0, structure, cl.switch_s);
    sys = ctx.sys;
  } else {
    const auto ctx = make_mri_synthesis(c.mri, c.tol);
    if (structure.empty()) {
      const auto cl = classify_mri(ctx, x0);
      if (!cl.classified()) throw Error(ErrorKind::Unclassified, "initial condition outside the classified region");
      structure = cl.structure;
    }
    st = simulate_mri(ctx, x0, structure);
    sys = ctx.sys;
  }
  std::cout << "structure = " << st.structure() << "\ntotal_time = " << fmt17(st.total_time)
            << "\nreached = " << (st.reached ? "true" : "false") << '\n';
  json j = io::to_json(st);
  j["x0"] = io::vec(x0);
  emit(c, "simulate.json", j);
  emit_csv(c, "trajectory.csv", [&](std::ostream& os) { io::write_structure_csv(os, *sys, st); });
  write_manifest(c, {{"x0", io::vec(x0)}, {"structure", st.structure()}});
  return st.reached ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prisat: prior-saturation geometry of planar time-optimal control"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "fedbatch | mri (or from the --params file)");
    sub->add_option("--params", cfg.params_file, "JSON file with model parameters");
    sub->add_option("--out", cfg.out, "output directory")->capture_default_str();
    sub->add_option("--rtol", cfg.rtol, "integrator relative tolerance");
    sub->add_option("--atol", cfg.atol, "integrator absolute tolerance");
    sub->add_option("--seed", cfg.seed, "seed for sampled checks")->capture_default_str();
    return sub;
  };

  auto* sat = common(app.add_subcommand("saturation", "saturation point on a singular branch"));
  sat->add_option("--branch", cfg.branch, "horizontal | vertical (mri)");
  common(app.add_subcommand("prior-lift", "solve for the prior-saturation lift"));
  auto* cert = common(app.add_subcommand("certify", "tangency, transversality and setting certificates"));
  cert->add_option("--identity-samples", cfg.identity_samples, "points for the bracket identity check")
      ->capture_default_str();
  auto* syn = common(app.add_subcommand("synthesis", "grid dataset and layers"));
  syn->add_option("--grid", cfg.grid, "n1xn2")->capture_default_str();
  auto* sim = common(app.add_subcommand("simulate", "simulate one classified trajectory"));
  sim->add_option("--x0", cfg.x0, "initial state a,b")->required();
  sim->add_option("--structure", cfg.structure, "arc sequence, e.g. \"S B+b B-\" (default: classify)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 3;
  }
  cfg.command = app.get_subcommands().front()->get_name();

  try {
    resolve(cfg);
    if (cfg.command == "saturation") return cmd_saturation(cfg);
    if (cfg.command == "prior-lift") return cmd_prior_lift(cfg);
    if (cfg.command == "certify") return cmd_certify(cfg);
    if (cfg.command == "synthesis") return cmd_synthesis(cfg);
    return cmd_simulate(cfg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
}
