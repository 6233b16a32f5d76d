#pragma once

// JSON configs and reports, CSV layers for the synthesis datasets.
// Needs the single-header nlohmann json on the include path.

#include "prisat/identities.hpp"
#include "prisat/synthesis.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace prisat::io {

using json = nlohmann::ordered_json;

// ----------------------------------------------------------------- params

namespace detail {

inline void read_number(const json& j, const std::string& key, double& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number()) throw Error(ErrorKind::InvalidConfig, "parameter '" + key + "' must be a number");
  out = v.get<double>();
}

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& model) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, model + " parameters must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw Error(ErrorKind::InvalidConfig, "unknown " + model + " parameter '" + k + "'");
}

}  // namespace detail

inline FedBatchParams fedbatch_params_from_json(const json& j) {
  detail::reject_unknown(j, {"mu_h", "K", "K_I", "s_in", "Q_max", "M", "v_max", "s_ref"}, "fedbatch");
  FedBatchParams P;
  detail::read_number(j, "mu_h", P.mu_h);
  detail::read_number(j, "K", P.K);
  detail::read_number(j, "K_I", P.K_I);
  detail::read_number(j, "s_in", P.s_in);
  detail::read_number(j, "Q_max", P.Q_max);
  detail::read_number(j, "M", P.M);
  detail::read_number(j, "v_max", P.v_max);
  detail::read_number(j, "s_ref", P.s_ref);
  return P;
}

inline MriParams mri_params_from_json(const json& j) {
  detail::reject_unknown(j, {"gamma", "Gamma"}, "mri");
  MriParams P;
  detail::read_number(j, "gamma", P.gamma);
  detail::read_number(j, "Gamma", P.Gamma);
  return P;
}

/// {"model": ..., "params": {...}} or a bare params object (model taken from `model`).
struct ModelConfig {
  std::string model;
  json params = json::object();
};

inline ModelConfig parse_model_config(const json& j, const std::string& model) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "model config must be a JSON object");
  ModelConfig c{model, j};
  if (j.contains("model") || j.contains("params")) {
    detail::reject_unknown(j, {"model", "params"}, "config");
    if (j.contains("model")) {
      if (!j["model"].is_string()) throw Error(ErrorKind::InvalidConfig, "'model' must be a string");
      const auto m = j["model"].get<std::string>();
      if (!model.empty() && m != model)
        throw Error(ErrorKind::InvalidConfig, "config is for model '" + m + "', not '" + model + "'");
      c.model = m;
    }
    c.params = j.value("params", json::object());
  }
  if (c.model != "fedbatch" && c.model != "mri")
    throw Error(ErrorKind::InvalidConfig, "model must be fedbatch or mri");
  return c;
}

inline json to_json(const FedBatchParams& P) {
  return {{"mu_h", P.mu_h}, {"K", P.K},     {"K_I", P.K_I},     {"s_in", P.s_in},
          {"Q_max", P.Q_max}, {"M", P.M}, {"v_max", P.v_max}, {"s_ref", P.s_ref}};
}

inline json to_json(const MriParams& P) { return {{"gamma", P.gamma}, {"Gamma", P.Gamma}}; }

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::InvalidConfig, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- reports

template <class Derived>
json vec(const Eigen::MatrixBase<Derived>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const ode::Options& o) {
  return {{"rtol", o.rtol}, {"atol", o.atol}, {"max_steps", o.max_steps}};
}

inline json to_json(const SaturationPoint& s) {
  return {{"tau", s.tau},
          {"x", vec(s.x)},
          {"residual", s.residual},
          {"monotone", s.monotone},
          {"sign_changes", s.sign_changes}};
}

inline json to_json(const AssumptionReport& r) {
  return {{"H_gfg_at_ze", r.h_gfg_at_ze},
          {"us_at_ze", r.us_at_ze},
          {"a", r.a},
          {"G_block_condition", r.G_block_condition},
          {"F_jacobian_condition", r.F_jacobian_condition},
          {"F_first_column", vec(r.F_first_column)},
          {"legendre_nonsaturating", r.a2},
          {"G_block_regular", r.a3}};
}

inline json to_json(const PriorSaturationLift& l) {
  return {{"label", l.label},
          {"t_b_star", l.t_b_star},
          {"z_b", vec(l.z_b_star)},
          {"z_e", vec(l.z_e)},
          {"x_e", vec(state_of(l.z_e))},
          {"lambda", vec(l.lambda)},
          {"newton",
           {{"converged", l.solution.converged},
            {"iterations", l.solution.iterations},
            {"residual_norm", l.solution.residual_norm},
            {"jacobian_condition", l.solution.jac_condition}}},
          {"assumptions", to_json(l.report)}};
}

inline json to_json(const TangencyCertificate& t) {
  return {{"tangent", t.tangent},
          {"angle", t.angle},
          {"angle_threshold", t.angle_threshold},
          {"state_angle", t.state_angle},
          {"mismatch", t.mismatch},
          {"curve_derivative", vec(t.dphi)},
          {"bang_field_at_ze", vec(t.hplus_at_ze)},
          {"sigma_prime_norm", t.sigma_prime_norm},
          {"sigma_scale", t.sigma_scale},
          {"sigma_flat", t.sigma_flat}};
}

inline json to_json(const TransversalityCertificate& t) {
  return {{"transverse", t.transverse},
          {"fd_vector", vec(t.fd_vector)},
          {"closed_form", vec(t.closed_form)},
          {"rel_error", t.rel_error},
          {"xi_singular_values", vec(t.xi_singular_values)}};
}

inline json to_json(const SettingReport& r) {
  json items = json::array();
  for (const auto& it : r.items)
    items.push_back(
        {{"id", it.id}, {"description", it.description}, {"pass", it.pass}, {"evidence", it.evidence}, {"note", it.note}});
  return {{"model", r.model}, {"all_pass", r.all_pass()}, {"items", items}};
}

inline json to_json(const IdentityReport& r) {
  return {{"samples", r.samples},
          {"locus_samples", r.locus_samples},
          {"skipped", r.skipped},
          {"bracket_fd_rel", r.bracket_fd_rel},
          {"alpha_delta_rel", r.alpha_delta_rel},
          {"gfg_sign_rel", r.gfg_sign_rel},
          {"ffg_sign_rel", r.ffg_sign_rel},
          {"exclusion_plus_rel", r.exclusion_plus_rel},
          {"exclusion_minus_rel", r.exclusion_minus_rel}};
}

inline json to_json(const MriAdmissibility& a) {
  auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
  return {{"delta", a.delta},
          {"alpha", a.alpha},
          {"beta", opt(a.beta)},
          {"t0", opt(a.t0)},
          {"third_value", opt(a.third_value)},
          {"gamma_positive", a.gamma_positive},
          {"third_pass", a.third_pass},
          {"regime_ok", a.regime_ok},
          {"xe_in_ball", opt(a.xe_in_ball)},
          {"note", a.note}};
}

inline json to_json(const TrajectoryStructure& t) {
  json arcs = json::array();
  for (const auto& a : t.arcs)
    arcs.push_back({{"tag", a.tag},
                    {"t0", a.t0},
                    {"t1", a.t1},
                    {"exit", a.exit},
                    {"start", vec(a.traj.z_samples().front())},
                    {"end", vec(a.traj.z_end())},
                    {"locus_drift", a.locus_drift}});
  return {{"structure", t.structure()},
          {"total_time", t.total_time},
          {"reached", t.reached},
          {"terminal", vec(t.terminal)},
          {"arcs", arcs}};
}

// -------------------------------------------------------------------- CSV

inline void write_dataset_csv(std::ostream& os, const SynthesisDataset& d) {
  std::size_t max_sw = 0;
  for (const auto& r : d.rows) max_sw = std::max(max_sw, r.switches.size());
  os << "x1_0,x2_0,structure,total_time,n_switches";
  for (std::size_t k = 0; k < max_sw; ++k) os << ",sw" << k + 1 << "_x1,sw" << k + 1 << "_x2";
  os << ",status\n";
  for (const auto& r : d.rows) {
    os << fmt17(r.x0[0]) << ',' << fmt17(r.x0[1]) << ',' << r.structure << ','
       << (std::isnan(r.total_time) ? "" : fmt17(r.total_time)) << ',' << r.switches.size();
    for (std::size_t k = 0; k < max_sw; ++k) {
      if (k < r.switches.size())
        os << ',' << fmt17(r.switches[k][0]) << ',' << fmt17(r.switches[k][1]);
      else
        os << ",,";
    }
    os << ',' << r.status << '\n';
  }
}

inline void write_points_csv(std::ostream& os, const std::vector<Vec2>& pts) {
  os << "x1,x2\n";
  for (const auto& p : pts) os << fmt17(p[0]) << ',' << fmt17(p[1]) << '\n';
}

inline void write_labeled_points_csv(std::ostream& os, const std::vector<LabeledPoint>& pts) {
  os << "name,x1,x2\n";
  for (const auto& p : pts) os << p.name << ',' << fmt17(p.x[0]) << ',' << fmt17(p.x[1]) << '\n';
}

/// One row per continuation sample: t_b, z_b, λ, the Σ point and its stratum.
inline void write_curve_csv(std::ostream& os, const SwitchingCurve& c) {
  const Eigen::Index k = c.samples.empty() ? 0 : c.samples.front().sigma.size() - 4;
  os << "t_b,zb_x1,zb_x2,zb_p1,zb_p2";
  for (Eigen::Index i = 0; i < k; ++i) os << ",lambda" << i + 1;
  os << ",Sig_x1,Sig_x2,Sig_p1,Sig_p2,stratum,g_residual\n";
  for (const auto& s : c.samples) {
    os << fmt17(s.t_b);
    for (Eigen::Index i = 0; i < s.sigma.size(); ++i) os << ',' << fmt17(s.sigma[i]);
    for (int i = 0; i < 4; ++i) os << ',' << fmt17(s.point[i]);
    os << ',' << to_string(s.stratum) << ',' << fmt17(s.g_residual) << '\n';
  }
}

/// Concatenated arcs: arc index and tag ahead of the trajectory columns.
inline void write_structure_csv(std::ostream& os, const PlanarAffineSystem& sys, const TrajectoryStructure& t) {
  os << "arc,tag,t,x1,x2,p1,p2,u,phi,phidot\n";
  for (std::size_t i = 0; i < t.arcs.size(); ++i) {
    std::ostringstream body;
    write_trajectory_csv(body, sys, t.arcs[i].traj, false);
    std::istringstream lines(body.str());
    std::string line;
    while (std::getline(lines, line)) {
      // shift the arc-local time to the global clock
      const auto comma = line.find(',');
      const double tl = std::stod(line.substr(0, comma));
      os << i << ',' << t.arcs[i].tag << ',' << fmt17(t.arcs[i].t0 + tl) << line.substr(comma) << '\n';
    }
  }
}

}  // namespace prisat::io
