#pragma once

// Shooting residuals (bang-singular-bang, prior-saturation lifts) and their
// Newton solution, plus the Assumption 2/3 certificate at the lift.

#include "prisat/hamiltonian.hpp"
#include "prisat/models.hpp"
#include "prisat/newton.hpp"

#include <boost/math/tools/roots.hpp>

#include <cstdint>
#include <vector>

namespace prisat {

/// Tighter than the flow defaults: residuals must be clean well below the
/// 1e-10 Newton threshold.
inline ode::Options shooting_tolerances() {
  ode::Options o;
  o.rtol = 1e-12;
  o.atol = 1e-14;
  return o;
}

// ------------------------------------------------------- bang-singular-bang

/// Unknowns y = (p0[2], t1, t2, tf, z1[4], z2[4]) for the sequence B- S B+
/// from x0 to xf. Returns the 13 residual blocks in the order
/// H_g(z1); H_fg(z1); H+(zf) - 1; π(zf) - xf; z1 - exp(t1 H-)(x0,p0);
/// z2 - exp((t2 - t1) Hs)(z1), where zf = exp((tf - t2) H+)(z2).
inline VecX residual_bsb(const PlanarAffineSystem& sys, const Vec2& x0, const Vec2& xf, const VecX& y,
                         const ode::Options& tol = shooting_tolerances()) {
  if (y.size() != 13) throw Error(ErrorKind::InvalidConfig, "residual_bsb expects 13 unknowns");
  const Vec2 p0 = y.segment<2>(0);
  const double t1 = y[2], t2 = y[3], tf = y[4];
  const Vec4 z1 = y.segment<4>(5), z2 = y.segment<4>(9);

  const Vec4 zf = exp_map(sys, ControlLaw::plus(), tf - t2, z2, tol);
  const Vec4 z1_hat = exp_map(sys, ControlLaw::minus(), t1, stack(x0, p0), tol);
  const Vec4 z2_hat = exp_map(sys, ControlLaw::singular(), t2 - t1, z1, tol);

  VecX r(13);
  r[0] = lift(sys, Lift::G, z1);
  r[1] = lift(sys, Lift::FG, z1);
  r[2] = lift(sys, Lift::Plus, zf) + kCostMultiplier;
  r.segment<2>(3) = state_of(zf) - xf;
  r.segment<4>(5) = z1 - z1_hat;
  r.segment<4>(9) = z2 - z2_hat;
  return r;
}

/// True when 0 <= t1 <= t2 <= tf fails; the residual is still defined.
inline bool bsb_times_disordered(const VecX& y) { return !(0.0 <= y[2] && y[2] <= y[3] && y[3] <= y[4]); }

// ----------------------------------------------------- prior-saturation lift

/// Closing conditions Ψ(z_b, λ) ∈ R^{2+k} of the bridge, plus the bang sign of
/// the bridge itself (+1 for H+, -1 for H-).
struct PriorLiftProblem {
  std::string label;
  int k = 0;
  std::function<VecX(const Vec4& zb, const VecX& lambda)> psi;
  int bang_sign = 1;

  int dim() const { return 5 + k; }
};

/// Stacks (H_fg(z_e); H_g(z_e); H±(z_b) - 1; Ψ(z_b, λ)) with
/// z_e = exp(-t_b H±)(z_b).
inline VecX residual_prior_lift(const PlanarAffineSystem& sys, const PriorLiftProblem& prob, double t_b,
                                const Vec4& z_b, const VecX& lambda, const ode::Options& tol = shooting_tolerances()) {
  const ControlLaw bang = ControlLaw::bang(prob.bang_sign);
  const Vec4 ze = exp_map(sys, bang, -t_b, z_b, tol);
  VecX r(prob.dim());
  r[0] = lift(sys, Lift::FG, ze);
  r[1] = lift(sys, Lift::G, ze);
  r[2] = lift(sys, prob.bang_sign >= 0 ? Lift::Plus : Lift::Minus, z_b) + kCostMultiplier;
  const VecX ps = prob.psi(z_b, lambda);
  if (ps.size() != 2 + prob.k) throw Error(ErrorKind::InvalidConfig, prob.label + ": Ψ has wrong dimension");
  r.tail(2 + prob.k) = ps;
  return r;
}

/// y = (t_b, z_b[4], λ[k]).
inline VecX residual_prior_lift(const PlanarAffineSystem& sys, const PriorLiftProblem& prob, const VecX& y,
                                const ode::Options& tol = shooting_tolerances()) {
  return residual_prior_lift(sys, prob, y[0], y.segment<4>(1), y.tail(prob.k), tol);
}

inline ResidualSystem as_residual_system(const PlanarAffineSystem& sys, const PriorLiftProblem& prob,
                                         const ode::Options& tol = shooting_tolerances()) {
  return {prob.label, prob.dim(), [&sys, prob, tol](const VecX& y) { return residual_prior_lift(sys, prob, y, tol); }};
}

/// Ψ = π(z_b) - x_f: fixed bridge endpoint, no extra parameters.
inline PriorLiftProblem f_ex_problem(const Vec2& x_f) {
  return {"F_ex", 0, [x_f](const Vec4& zb, const VecX&) { return VecX(state_of(zb) - x_f); }, 1};
}

/// Fed-batch bridge: ends on the switching set at v = v_max.
inline PriorLiftProblem f_bio_problem(const PlanarAffineSystem& sys, const FedBatchParams& P) {
  return {"F_bio", 0,
          [&sys, vmax = P.v_max](const Vec4& zb, const VecX&) {
            VecX r(2);
            r << lift(sys, Lift::G, zb), zb[1] - vmax;
            return r;
          },
          1};
}

/// MRI bridge: ends at a second non-ordinary switching point.
inline PriorLiftProblem f_mri_problem(const PlanarAffineSystem& sys) {
  return {"F_mri", 0,
          [&sys](const Vec4& zb, const VecX&) {
            VecX r(2);
            r << lift(sys, Lift::FG, zb), lift(sys, Lift::G, zb);
            return r;
          },
          1};
}

/// Fed-batch with k = 1: λ is the duration of the closing B- arc, which must
/// end at x_f = (s_ref, v_max); Ψ keeps the switching condition H_g(z_b) = 0.
inline PriorLiftProblem f_bio_k1_problem(const PlanarAffineSystem& sys, const FedBatchParams& P,
                                         const ode::Options& tol = shooting_tolerances()) {
  const Vec2 xf(P.s_ref, P.v_max);
  return {"F_bio_k1", 1,
          [&sys, xf, tol](const Vec4& zb, const VecX& lam) {
            const Vec4 zf = exp_map(sys, ControlLaw::minus(), lam[0], zb, tol);
            VecX r(3);
            r[0] = lift(sys, Lift::G, zb);
            r.tail<2>() = state_of(zf) - xf;
            return r;
          },
          1};
}

inline VecX residual_F_bio(const PlanarAffineSystem& sys, const FedBatchParams& P, double t_b, const Vec4& z_b,
                           const ode::Options& tol = shooting_tolerances()) {
  return residual_prior_lift(sys, f_bio_problem(sys, P), t_b, z_b, VecX(0), tol);
}

inline VecX residual_F_mri(const PlanarAffineSystem& sys, double t_b, const Vec4& z_b,
                           const ode::Options& tol = shooting_tolerances()) {
  return residual_prior_lift(sys, f_mri_problem(sys), t_b, z_b, VecX(0), tol);
}

// ---------------------------------------------------------- initial guesses

/// A point z on the locus lifted with H_g = 0, H_f = 1 and pushed along the
/// bang flow to the bridge's terminal event.
struct SweepSample {
  double tau;
  double t_event;
  Vec4 z_event;
  double hg;
};

inline std::optional<SweepSample> sweep_sample(const PlanarAffineSystem& sys, const SingularLocus& locus,
                                               const ZEvent& terminal, double tau, double horizon, int bang_sign,
                                               const ode::Options& tol) {
  try {
    const Vec2 x = locus.zeta(tau);
    const Vec4 z0 = stack(x, singular_adjoint(sys, x));
    auto tr = flow(sys, ControlLaw::bang(bang_sign), z0, horizon, tol, &terminal);
    if (!tr.t_event) return std::nullopt;
    const Vec4 ze = tr.z_end();
    return SweepSample{tau, *tr.t_event, ze, lift(sys, Lift::G, ze)};
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// Locus sweep: scans τ on (lo, τ_hi), brackets the sign change of H_g at
/// the bridge's far end closest to τ_hi and refines it with TOMS 748.
/// Returns y = (t_b, z_b) ready for Newton.
inline VecX locus_sweep_guess(const PlanarAffineSystem& sys, const SingularLocus& locus, double tau_hi,
                              const ZEvent& terminal, double horizon, int n_grid = 41, int bang_sign = 1,
                              const ode::Options& tol = shooting_tolerances()) {
  std::vector<SweepSample> samples;
  for (int i = 1; i <= n_grid; ++i) {
    const double tau = locus.lo + (tau_hi - locus.lo) * static_cast<double>(i) / (n_grid + 1);
    if (auto s = sweep_sample(sys, locus, terminal, tau, horizon, bang_sign, tol)) samples.push_back(*s);
  }
  for (std::size_t i = samples.size(); i-- > 1;) {
    const auto& a = samples[i - 1];
    const auto& b = samples[i];
    if ((a.hg < 0) == (b.hg < 0)) continue;
    auto fn = [&](double tau) {
      auto s = sweep_sample(sys, locus, terminal, tau, horizon, bang_sign, tol);
      if (!s) throw Error(ErrorKind::NoBracket, "sweep sample failed inside the bracket");
      return s->hg;
    };
    std::uintmax_t iters = 100;
    auto tolf = [w = locus.width()](double l, double r) { return std::abs(r - l) <= 1e-12 * w; };
    const auto [l, r] = boost::math::tools::toms748_solve(fn, a.tau, b.tau, a.hg, b.hg, tolf, iters);
    const auto s = sweep_sample(sys, locus, terminal, 0.5 * (l + r), horizon, bang_sign, tol);
    if (!s) break;
    VecX y(5);
    y << s->t_event, s->z_event;
    return y;
  }
  throw Error(ErrorKind::NoBracket, locus.branch + ": H_g at the bridge end never changes sign");
}

inline ZEvent fedbatch_terminal_event(const FedBatchParams& P) {
  ZEvent ev;
  ev.fn = [vmax = P.v_max](double, const Vec4& z) { return z[1] - vmax; };
  ev.direction = 1;
  return ev;
}

inline ZEvent mri_terminal_event() {
  ZEvent ev;
  ev.fn = [](double, const Vec4& z) { return z[0]; };
  ev.direction = 1;
  return ev;
}

enum class GuessStrategy { LocusSweep, MidVolume };

/// Fed-batch guesses. MidVolume lifts (s*, v*/2) and flows with u = +1 to
/// v = v_max; LocusSweep brackets v_e on (0, v*).
inline VecX fedbatch_guess(const PlanarAffineSystem& sys, const FedBatchParams& P, GuessStrategy strat,
                           const ode::Options& tol = shooting_tolerances()) {
  const auto locus = fedbatch_locus(P);
  const auto ev = fedbatch_terminal_event(P);
  const double horizon = 10.0 * P.v_max / P.Q_max;
  if (strat == GuessStrategy::LocusSweep) return locus_sweep_guess(sys, locus, P.v_star(), ev, horizon, 41, 1, tol);
  auto s = sweep_sample(sys, locus, ev, 0.5 * P.v_star(), horizon, 1, tol);
  if (!s) throw Error(ErrorKind::NoBracket, "fedbatch: mid-volume guess does not reach v_max");
  VecX y(5);
  y << s->t_event, s->z_event;
  return y;
}

/// Extends a (t_b, z_b) guess with λ = time for the B- arc from z_b to reach s = s_ref.
inline VecX fedbatch_k1_guess(const PlanarAffineSystem& sys, const FedBatchParams& P, const VecX& y5,
                              const ode::Options& tol = shooting_tolerances()) {
  ZEvent ev;
  ev.fn = [sref = P.s_ref](double, const Vec4& z) { return z[0] - sref; };
  ev.direction = -1;
  auto tr = flow(sys, ControlLaw::minus(), y5.segment<4>(1), 100.0, tol, &ev);
  if (!tr.t_event) throw Error(ErrorKind::EventNotFound, "fedbatch: B- arc never reaches s_ref");
  VecX y(6);
  y << y5, *tr.t_event;
  return y;
}

inline VecX mri_guess(const PlanarAffineSystem& sys, const MriParams& P, const ode::Options& tol = shooting_tolerances()) {
  const auto locus = mri_horizontal_locus(P);
  const double x_sat1 = mri_saturation_point(P)[0];
  return locus_sweep_guess(sys, locus, x_sat1, mri_terminal_event(), 50.0, 41, 1, tol);
}

// ---------------------------------------------------------- lift + report

struct AssumptionReport {
  double h_gfg_at_ze = 0.0;
  double us_at_ze = 0.0;  // NaN when H_gfg is degenerate
  double a = 0.0;         // H_ffg + H_gfg at z_e
  double G_block_condition = 0.0;
  double F_jacobian_condition = 0.0;
  VecX F_first_column;
  bool a2 = false;
  bool a3 = false;
};

struct PriorSaturationLift {
  std::string label;
  Vec4 z_e;
  double t_b_star = 0.0;
  Vec4 z_b_star;
  VecX lambda;
  ShootingSolution solution;
  AssumptionReport report;

  VecX unknowns() const {
    VecX y(5 + lambda.size());
    y << t_b_star, z_b_star, lambda;
    return y;
  }
};

/// Central-difference Jacobian; used for certificates, where the forward
/// differences of the Newton loop are too noisy.
inline MatX central_jacobian(const std::function<VecX(const VecX&)>& F, const VecX& y, double rel = 1e-5) {
  const VecX f0 = F(y);
  MatX j(f0.size(), y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const double h = rel * (1.0 + std::abs(y[k]));
    VecX yp = y, ym = y;
    yp[k] += h;
    ym[k] -= h;
    j.col(k) = (F(yp) - F(ym)) / (2.0 * h);
  }
  return j;
}

inline AssumptionReport check_assumptions(const PlanarAffineSystem& sys, const PriorLiftProblem& prob,
                                          const Vec4& z_e, const VecX& y,
                                          const ode::Options& tol = shooting_tolerances()) {
  constexpr double kNonzero = 1e-8, kMaxCond = 1e10;
  AssumptionReport r;
  r.h_gfg_at_ze = lift(sys, Lift::GFG, z_e);
  r.a = lift(sys, Lift::FFG, z_e) + r.h_gfg_at_ze;
  try {
    r.us_at_ze = singular_control_z(sys, z_e);
  } catch (const Error&) {
    r.us_at_ze = std::numeric_limits<double>::quiet_NaN();
  }
  r.a2 = std::abs(r.h_gfg_at_ze) > kNonzero && r.us_at_ze < 1.0 - kNonzero;

  if (y.size() == prob.dim()) {
    const MatX J = central_jacobian([&](const VecX& v) { return residual_prior_lift(sys, prob, v, tol); }, y);
    r.F_jacobian_condition = condition_number(J);
    r.G_block_condition = condition_number(J.bottomRightCorner(prob.dim() - 1, prob.dim() - 1));
    r.F_first_column = J.col(0);
    r.a3 = r.G_block_condition < kMaxCond;
  }
  return r;
}

/// Newton from y0, then z_e by backward flow and the assumption report.
inline PriorSaturationLift solve_prior_lift(const PlanarAffineSystem& sys, const PriorLiftProblem& prob,
                                            const VecX& y0, const NewtonConfig& cfg = {},
                                            const ode::Options& tol = shooting_tolerances()) {
  const auto F = as_residual_system(sys, prob, tol);
  PriorSaturationLift lift_out;
  lift_out.label = prob.label;
  lift_out.solution = newton_solve(F, y0, cfg);
  const VecX& y = lift_out.solution.y;
  lift_out.t_b_star = y[0];
  lift_out.z_b_star = y.segment<4>(1);
  lift_out.lambda = y.tail(prob.k);
  lift_out.z_e = exp_map(sys, ControlLaw::bang(prob.bang_sign), -lift_out.t_b_star, lift_out.z_b_star, tol);
  lift_out.report = check_assumptions(sys, prob, lift_out.z_e, y, tol);
  return lift_out;
}

}  // namespace prisat
