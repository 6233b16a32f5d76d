#pragma once

// Arc-by-arc simulation of declared extremal structures and the
// case split for the fed-batch and Bloch syntheses.

#include "prisat/switching_geometry.hpp"

#include <memory>
#include <string>
#include <vector>

namespace prisat {

struct ArcSpec {
  ControlLaw law = ControlLaw::plus();
  std::string tag;
  std::vector<ZEvent> exits;
  std::vector<std::string> exit_names;
  double horizon = 100.0;
  /// replace the adjoint at entry by the canonical singular lift (H_g = 0, H_f = 1)
  bool reseed_singular = false;
};

struct Arc {
  std::string tag;
  ControlLaw law = ControlLaw::plus();
  double t0 = 0.0;
  double t1 = 0.0;
  std::string exit;
  ExtremalTrajectory traj;
  double locus_drift = 0.0;  ///< singular arcs: max |H_g|, |H_fg| over the samples

  double duration() const { return t1 - t0; }
};

struct TrajectoryStructure {
  std::vector<Arc> arcs;
  double total_time = 0.0;
  Vec4 terminal;
  bool reached = false;

  std::string structure() const {
    std::string s;
    for (const auto& a : arcs) s += (s.empty() ? "" : " ") + a.tag;
    return s;
  }
  std::vector<Vec2> switch_points() const {
    std::vector<Vec2> out;
    for (std::size_t i = 0; i + 1 < arcs.size(); ++i) out.push_back(state_of(arcs[i].traj.z_end()));
    return out;
  }
};

/// Singular arcs stop with SingularInadmissible once u_s passes 1 (plus a
/// 1e-9 margin so that an arc ending exactly at saturation is still legal).
inline TrajectoryStructure simulate_structure(const PlanarAffineSystem& sys, const Vec4& z0,
                                              const std::vector<ArcSpec>& seq,
                                              const std::function<bool(const Vec2&)>& target,
                                              const ode::Options& tol = shooting_tolerances()) {
  if (seq.empty()) throw Error(ErrorKind::InvalidConfig, "empty arc sequence");
  TrajectoryStructure out;
  Vec4 z = z0;
  double t = 0.0;
  for (const auto& spec : seq) {
    if (spec.reseed_singular) z = stack(state_of(z), singular_adjoint(sys, state_of(z)));
    std::vector<ZEvent> evs = spec.exits;
    const bool monitor = spec.law.is_singular();
    if (monitor) {
      ZEvent sat;
      sat.fn = [&sys](double, const Vec4& zz) { return singular_control_z(sys, zz) - (1.0 + 1e-9); };
      sat.direction = 1;
      evs.push_back(sat);
    }
    auto tr = flow(sys, spec.law, z, spec.horizon, tol, std::span<const ZEvent>(evs));
    if (!tr.t_event)
      throw Error(ErrorKind::EventNotFound, spec.tag + ": no exit event within horizon " + fmt17(spec.horizon));
    if (monitor && tr.event_index == static_cast<int>(evs.size()) - 1)
      throw Error(ErrorKind::SingularInadmissible,
                  "singular control saturates at x = (" + fmt17(tr.z_end()[0]) + ", " + fmt17(tr.z_end()[1]) + ")");
    Arc arc;
    arc.tag = spec.tag;
    arc.law = spec.law;
    arc.t0 = t;
    arc.t1 = t + *tr.t_event;
    arc.exit = tr.event_index < static_cast<int>(spec.exit_names.size()) ? spec.exit_names[tr.event_index] : "";
    if (monitor)
      for (const auto& zz : tr.z_samples())
        arc.locus_drift = std::max({arc.locus_drift, std::abs(lift(sys, Lift::G, zz)), std::abs(lift(sys, Lift::FG, zz))});
    if ((state_of(tr.z_samples().front()) - state_of(z)).norm() > 1e-9)
      throw Error(ErrorKind::ChainBroken, spec.tag + ": arc does not start where the previous one ended");
    z = tr.z_end();
    t = arc.t1;
    arc.traj = std::move(tr);
    out.arcs.push_back(std::move(arc));
  }
  out.total_time = t;
  out.terminal = z;
  out.reached = target(state_of(z));
  return out;
}

namespace detail {

inline ZEvent level_event(int component, double level, int direction) {
  ZEvent e;
  e.fn = [component, level](double, const Vec4& z) { return z[component] - level; };
  e.direction = direction;
  return e;
}

/// H_g at the far end of the bang flow from z to `terminal`: vanishes exactly
/// where a bridge leaves.
inline ZEvent bridge_event(const PlanarAffineSystem& sys, const ZEvent& terminal, double horizon,
                           const ode::Options& tol) {
  ZEvent e;
  e.fn = [&sys, terminal, horizon, tol](double, const Vec4& z) {
    auto tr = flow(sys, ControlLaw::plus(), z, horizon, tol, &terminal);
    if (!tr.t_event) return std::numeric_limits<double>::quiet_NaN();
    return lift(sys, Lift::G, tr.z_end());
  };
  return e;
}

inline ArcSpec arc(ControlLaw law, std::string tag, ZEvent exit, std::string exit_name, double horizon,
                   bool reseed = false) {
  ArcSpec a;
  a.law = law;
  a.tag = std::move(tag);
  a.exits = {std::move(exit)};
  a.exit_names = {std::move(exit_name)};
  a.horizon = horizon;
  a.reseed_singular = reseed;
  return a;
}

inline double interp_s_of_v(const std::vector<Vec2>& poly, double v) {
  for (std::size_t i = 1; i < poly.size(); ++i)
    if (v <= poly[i][1]) {
      const double w = (v - poly[i - 1][1]) / (poly[i][1] - poly[i - 1][1]);
      return poly[i - 1][0] + w * (poly[i][0] - poly[i - 1][0]);
    }
  return poly.back()[0];
}

}  // namespace detail

// ---------------------------------------------------------------- fed-batch

struct Classification {
  std::string structure;  ///< empty when unclassified
  double switch_s = 0.0;  ///< first switch abscissa for "B- B+ B-"

  bool classified() const { return !structure.empty(); }
};

struct FedBatchSynthesis {
  FedBatchParams P;
  std::shared_ptr<const PlanarAffineSystem> sys;
  PriorLiftProblem problem;
  PriorSaturationLift lift;
  SwitchingCurve curve;
  std::vector<Vec2> sigma_pi;  ///< projection of Σ₋ ∪ Σ₀, ascending in v
  ode::Options tol = shooting_tolerances();

  double v_e() const { return lift.z_e[1]; }
  double sigma_top() const { return sigma_pi.back()[1]; }
};

inline FedBatchSynthesis make_fedbatch_synthesis(const FedBatchParams& P,
                                                 GuessStrategy strategy = GuessStrategy::LocusSweep,
                                                 const ode::Options& tol = shooting_tolerances()) {
  FedBatchSynthesis c;
  c.P = P;
  c.tol = tol;
  c.sys = std::make_shared<const PlanarAffineSystem>(fedbatch_system(P));
  c.problem = f_bio_problem(*c.sys, P);
  c.lift = solve_prior_lift(*c.sys, c.problem, fedbatch_guess(*c.sys, P, strategy, c.tol), {}, c.tol);
  c.curve = continue_switching_curve(*c.sys, c.problem, c.lift, {}, c.tol);
  for (const auto& s : c.curve.samples)
    if (s.stratum != Stratum::Plus) c.sigma_pi.push_back(state_of(s.point));
  std::sort(c.sigma_pi.begin(), c.sigma_pi.end(), [](const Vec2& a, const Vec2& b) { return a[1] < b[1]; });
  return c;
}

inline Classification classify_fedbatch(const FedBatchSynthesis& c, const Vec2& x0) {
  const auto& P = c.P;
  const double s0 = x0[0], v0 = x0[1], ss = P.s_star(), ve = c.v_e();
  if (!(s0 > 0 && s0 <= P.s_in && v0 > 0 && v0 <= P.v_max)) return {};
  if (v0 >= P.v_max && s0 <= P.s_ref) return {"T"};
  // u = -1 cannot lower s here (s = s_in with no maintenance is an equilibrium)
  const bool minus_stalls = c.sys->velocity(x0, -1.0)[0] >= 0.0;
  if (v0 >= P.v_max) return minus_stalls ? Classification{} : Classification{"B-"};
  if (std::abs(s0 - ss) <= 1e-12 * P.s_in) return {v0 < ve ? "S B+b B-" : "B+ B-"};
  if (s0 < ss) return v0 >= ve ? Classification{"B+ B-"} : Classification{};
  if (v0 > c.sigma_top()) return {};
  if (minus_stalls) return {};
  if (v0 < ve) return {"B- S B+b B-"};
  const double s_sw = detail::interp_s_of_v(c.sigma_pi, v0);
  if (s0 > s_sw) return {"B- B+ B-", s_sw};
  return {"B+ B-"};
}

/// Arc sequence for a fed-batch structure string.
inline std::vector<ArcSpec> fedbatch_sequence(const FedBatchSynthesis& c, const std::string& structure,
                                              double switch_s = 0.0) {
  const auto& P = c.P;
  const double T = 100.0 * P.v_max / P.Q_max;
  using detail::arc;
  using detail::level_event;
  const ZEvent vmax = level_event(1, P.v_max, 1);
  const ZEvent sref = level_event(0, P.s_ref, -1);
  const ZEvent bridge = detail::bridge_event(*c.sys, vmax, T, c.tol);
  const ArcSpec last = arc(ControlLaw::minus(), "B-", sref, "s=s_ref", T);
  const ArcSpec sing = arc(ControlLaw::singular(), "S", bridge, "bridge", T, true);
  const ArcSpec br = arc(ControlLaw::plus(), "B+b", vmax, "v=v_max", T);
  if (structure == "S B+b B-") return {sing, br, last};
  if (structure == "B+ B-") return {arc(ControlLaw::plus(), "B+", vmax, "v=v_max", T), last};
  if (structure == "B- S B+b B-")
    return {arc(ControlLaw::minus(), "B-", level_event(0, P.s_star(), -1), "locus", T), sing, br, last};
  if (structure == "B- B+ B-")
    return {arc(ControlLaw::minus(), "B-", level_event(0, switch_s, -1), "switching curve", T),
            arc(ControlLaw::plus(), "B+", vmax, "v=v_max", T), last};
  if (structure == "B-") return {last};
  throw Error(ErrorKind::Unclassified, "no arc sequence for structure '" + structure + "'");
}

inline std::function<bool(const Vec2&)> fedbatch_target(const FedBatchParams& P) {
  return [P](const Vec2& x) { return x[1] >= P.v_max - 1e-9 && x[0] <= P.s_ref + 1e-9 && x[0] > 0; };
}

/// Bang-only starts carry a zero adjoint (state simulation); singular arcs
/// reseed with the canonical lift.
inline TrajectoryStructure simulate_fedbatch(const FedBatchSynthesis& c, const Vec2& x0, const std::string& structure,
                                             double switch_s = 0.0) {
  return simulate_structure(*c.sys, stack(x0, Vec2::Zero()), fedbatch_sequence(c, structure, switch_s),
                            fedbatch_target(c.P), c.tol);
}

/// Singular arc from (s*, v0) held to v_ext, then B+ to v_max and B- to s_ref.
inline TrajectoryStructure simulate_fedbatch_extension(const FedBatchSynthesis& c, double v0, double v_ext) {
  const auto& P = c.P;
  const double T = 100.0 * P.v_max / P.Q_max;
  using detail::arc;
  using detail::level_event;
  std::vector<ArcSpec> seq{arc(ControlLaw::singular(), "S", level_event(1, v_ext, 1), "v=v_ext", T, true),
                           arc(ControlLaw::plus(), "B+", level_event(1, P.v_max, 1), "v=v_max", T),
                           arc(ControlLaw::minus(), "B-", level_event(0, P.s_ref, -1), "s=s_ref", T)};
  return simulate_structure(*c.sys, stack(Vec2(P.s_star(), v0), Vec2::Zero()), seq, fedbatch_target(P), c.tol);
}

// ---------------------------------------------------------------------- MRI

struct MriSynthesis {
  MriParams P;
  std::shared_ptr<const PlanarAffineSystem> sys;
  PriorLiftProblem problem;
  PriorSaturationLift lift;
  SwitchingCurve curve;
  ode::Options tol = shooting_tolerances();

  Vec2 x_e() const { return state_of(lift.z_e); }
};

inline MriSynthesis make_mri_synthesis(const MriParams& P, const ode::Options& tol = shooting_tolerances()) {
  MriSynthesis c;
  c.P = P;
  c.tol = tol;
  c.sys = std::make_shared<const PlanarAffineSystem>(mri_system(P));
  c.problem = f_mri_problem(*c.sys);
  c.lift = solve_prior_lift(*c.sys, c.problem, mri_guess(*c.sys, P, c.tol), {}, c.tol);
  c.curve = continue_switching_curve(*c.sys, c.problem, c.lift, {}, c.tol);
  return c;
}

inline Classification classify_mri(const MriSynthesis& c, const Vec2& x0) {
  if (!in_bloch_ball(x0) || x0[0] > 0) return {};
  const double x2h = c.P.gamma / (2.0 * c.P.delta());
  if (std::abs(x0[1] - x2h) > 1e-10) return {};
  const double xe1 = c.x_e()[0];
  if (std::abs(x0[0] - xe1) <= 1e-9) return {"B+b S0"};
  if (x0[0] < xe1) return {"S B+b S0"};
  return {};
}

inline std::vector<ArcSpec> mri_sequence(const MriSynthesis& c, const std::string& structure) {
  using detail::arc;
  using detail::level_event;
  const double T = 200.0;
  const ZEvent axis = level_event(0, 0.0, 1);
  const ArcSpec br = arc(ControlLaw::plus(), "B+b", axis, "x1=0", T);
  const ArcSpec s0 = arc(ControlLaw::constant(0.0), "S0", level_event(1, 0.0, 1), "x2=0", T);
  if (structure == "S B+b S0")
    return {arc(ControlLaw::singular(), "S", detail::bridge_event(*c.sys, axis, T, c.tol), "bridge", T, true), br, s0};
  if (structure == "B+b S0") {
    auto b = br;
    b.reseed_singular = true;
    return {b, s0};
  }
  throw Error(ErrorKind::Unclassified, "no arc sequence for structure '" + structure + "'");
}

/// The origin is reached when |x| <= 1e-8 (it lies on Δ0, so an exact hit is not required).
inline TrajectoryStructure simulate_mri(const MriSynthesis& c, const Vec2& x0, const std::string& structure) {
  return simulate_structure(*c.sys, stack(x0, Vec2::Zero()), mri_sequence(c, structure),
                            [](const Vec2& x) { return x.norm() <= 1e-8; }, c.tol);
}

// ------------------------------------------------------------------ dataset

struct DatasetRow {
  Vec2 x0;
  std::string structure;
  std::string status;  ///< "ok", "unreached", "Unclassified" or an error kind
  double total_time = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vec2> switches;
};

struct LabeledPoint {
  std::string name;
  Vec2 x;
};

struct SynthesisDataset {
  std::string model;
  std::vector<DatasetRow> rows;
  std::vector<Vec2> locus;
  ExtremalTrajectory bridge;
  const SwitchingCurve* curve = nullptr;
  std::vector<LabeledPoint> points;
};

template <class Classify, class Simulate>
DatasetRow evaluate_node(const Vec2& x0, Classify&& classify, Simulate&& simulate) {
  DatasetRow row;
  row.x0 = x0;
  const Classification cl = classify(x0);
  if (!cl.classified()) {
    row.status = "Unclassified";
    return row;
  }
  row.structure = cl.structure;
  if (cl.structure == "T") {
    row.status = "ok";
    row.total_time = 0.0;
    return row;
  }
  try {
    const auto st = simulate(x0, cl);
    row.total_time = st.total_time;
    row.switches = st.switch_points();
    row.status = st.reached ? "ok" : "unreached";
  } catch (const Error& e) {
    row.status = std::string(to_string(e.kind()));
  }
  return row;
}

/// n1 x n2 nodes over (0, s_in] x (0, v_max], plus the locus nodes (s*, v_j).
inline SynthesisDataset synthesize_fedbatch_grid(const FedBatchSynthesis& c, int n1, int n2) {
  SynthesisDataset d;
  d.model = "fedbatch";
  const auto& P = c.P;
  std::vector<Vec2> nodes;
  for (int j = 1; j <= n2; ++j)
    for (int i = 1; i <= n1; ++i) nodes.emplace_back(P.s_in * i / n1, P.v_max * j / n2);
  for (int j = 1; j <= n2; ++j) nodes.emplace_back(P.s_star(), P.v_max * j / n2);
  auto classify = [&](const Vec2& x) { return classify_fedbatch(c, x); };
  auto simulate = [&](const Vec2& x, const Classification& cl) {
    return simulate_fedbatch(c, x, cl.structure, cl.switch_s);
  };
  for (const auto& x : nodes) d.rows.push_back(evaluate_node(x, classify, simulate));

  for (int k = 0; k <= 200; ++k) d.locus.emplace_back(P.s_star(), P.v_max * (k + 0.5) / 201.0);
  d.bridge = flow(*c.sys, ControlLaw::plus(), c.lift.z_e, c.lift.t_b_star, c.tol);
  d.curve = &c.curve;
  d.points = {{"saturation", Vec2(P.s_star(), P.v_star())},
              {"prior_saturation", state_of(c.lift.z_e)},
              {"bridge_end", state_of(c.lift.z_b_star)}};
  return d;
}

/// Grid over the half ball {x1 <= 0}, plus nodes on Δ_SA^h left of x_e.
inline SynthesisDataset synthesize_mri_grid(const MriSynthesis& c, int n1, int n2) {
  SynthesisDataset d;
  d.model = "mri";
  std::vector<Vec2> nodes;
  for (int j = 0; j <= n2; ++j)
    for (int i = 0; i <= n1; ++i) {
      const Vec2 x(-1.0 + static_cast<double>(i) / n1, -1.0 + 2.0 * j / n2);
      if (in_bloch_ball(x)) nodes.push_back(x);
    }
  const auto locus = mri_horizontal_locus(c.P);
  const double xe1 = c.x_e()[0];
  for (int k = 0; k < n1; ++k) nodes.push_back(locus.zeta(xe1 + (locus.lo - xe1) * k / n1));
  auto classify = [&](const Vec2& x) { return classify_mri(c, x); };
  auto simulate = [&](const Vec2& x, const Classification& cl) { return simulate_mri(c, x, cl.structure); };
  for (const auto& x : nodes) d.rows.push_back(evaluate_node(x, classify, simulate));

  for (int k = 0; k <= 200; ++k) d.locus.push_back(locus.zeta(locus.lo + locus.width() * k / 200.0));
  d.bridge = flow(*c.sys, ControlLaw::plus(), c.lift.z_e, c.lift.t_b_star, c.tol);
  d.curve = &c.curve;
  d.points = {{"saturation", mri_saturation_point(c.P)},
              {"prior_saturation", c.x_e()},
              {"bridge_end", state_of(c.lift.z_b_star)},
              {"target", Vec2::Zero()}};
  return d;
}

}  // namespace prisat
