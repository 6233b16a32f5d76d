#pragma once

// Saturation points on singular loci, continuation of the switching curve
// around a prior-saturation lift, and the tangency / transversality checks.

#include "prisat/shooting.hpp"

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <numbers>
#include <vector>

namespace prisat {

// ------------------------------------------------------------- saturation

struct SaturationPoint {
  double tau = 0.0;
  Vec2 x;
  double residual = 0.0;  ///< ψ(ζ(τ)) - target
  bool monotone = true;   ///< sampled ψ∘ζ was increasing
  int sign_changes = 0;
};

namespace detail {

inline double psi_on_locus(const PlanarAffineSystem& sys, const SingularLocus& locus, double tau) {
  try {
    return singular_feedback(sys, locus.zeta(tau));
  } catch (const Error&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace detail

/// Root of ψ(ζ(τ)) = target_sign on the open locus interval, bracketed on a
/// 201-point scan and refined with TOMS 748 to |Δτ| <= 1e-12 |J|.
inline SaturationPoint find_saturation_point(const PlanarAffineSystem& sys, const SingularLocus& locus,
                                             int target_sign = 1, int n_scan = 201) {
  const double target = target_sign >= 0 ? 1.0 : -1.0;
  std::vector<double> taus, vals;
  for (int i = 0; i < n_scan; ++i) {
    const double tau = locus.lo + locus.width() * (i + 0.5) / n_scan;
    const double v = detail::psi_on_locus(sys, locus, tau);
    if (!std::isfinite(v)) continue;
    taus.push_back(tau);
    vals.push_back(v);
  }
  SaturationPoint out;
  int first = -1;
  for (std::size_t i = 1; i < vals.size(); ++i) {
    if (vals[i] < vals[i - 1]) out.monotone = false;
    if ((vals[i - 1] - target < 0) != (vals[i] - target < 0)) {
      ++out.sign_changes;
      if (first < 0) first = static_cast<int>(i);
    }
  }
  if (first < 0) throw Error(ErrorKind::NoBracket, locus.branch + ": ψ∘ζ never crosses " + fmt17(target));

  auto fn = [&](double tau) { return singular_feedback(sys, locus.zeta(tau)) - target; };
  std::uintmax_t iters = 200;
  auto tol = [w = locus.width()](double l, double r) { return std::abs(r - l) <= 1e-12 * w; };
  const double a = taus[first - 1], b = taus[first];
  const auto [l, r] = boost::math::tools::toms748_solve(fn, a, b, vals[first - 1] - target, vals[first] - target,
                                                         tol, iters);
  // keep whichever end has the smaller residual
  const double fl = std::abs(fn(l)), fr = std::abs(fn(r));
  out.tau = fl <= fr ? l : r;
  out.x = locus.zeta(out.tau);
  out.residual = fn(out.tau);
  return out;
}

// ----------------------------------------------------------- continuation

enum class Stratum { Minus = -1, Zero = 0, Plus = 1 };

inline const char* to_string(Stratum s) {
  switch (s) {
    case Stratum::Minus: return "minus";
    case Stratum::Zero: return "zero";
    case Stratum::Plus: return "plus";
  }
  return "?";
}

struct CurveSample {
  double t_b;
  VecX sigma;  ///< (z_b, λ)
  Vec4 point;  ///< exp(-t_b H±)(z_b), a point of Σ
  Stratum stratum;
  double g_residual;  ///< ||G||_inf after correction
};

struct SwitchingCurve {
  double t_b_star = 0.0;
  double eps = 0.0;
  double stencil_h = 0.0;
  std::vector<CurveSample> samples;  // sorted by t_b

  const CurveSample& at(double t) const {
    for (const auto& s : samples)
      if (s.t_b == t) return s;
    throw Error(ErrorKind::OutOfSpan, "no curve sample at t_b = " + fmt17(t));
  }
  std::size_t count(Stratum st) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [st](const CurveSample& s) { return s.stratum == st; }));
  }
};

struct ContinuationOptions {
  double eps = 0.0;  ///< 0 selects min(0.2 t_b*, 0.5)
  int n_samples = 41;
  double stencil_rel = 1e-4;
  int max_halvings = 10;
  NewtonConfig corrector{1e-11, 30, 1e14, 1e-4, 1.0 / 1024.0};
};

namespace detail {

/// G(t_b, σ): every component of F except the first.
inline VecX g_residual(const PlanarAffineSystem& sys, const PriorLiftProblem& prob, double t_b, const VecX& sigma,
                       const ode::Options& tol) {
  VecX y(prob.dim());
  y << t_b, sigma;
  return residual_prior_lift(sys, prob, y, tol).tail(prob.dim() - 1);
}

inline CurveSample correct(const PlanarAffineSystem& sys, const PriorLiftProblem& prob, double t_b,
                           const VecX& guess, double t_star, const ContinuationOptions& opt, const ode::Options& tol) {
  ResidualSystem G{prob.label + "/G", prob.dim() - 1,
                   [&](const VecX& s) { return g_residual(sys, prob, t_b, s, tol); }};
  ShootingSolution sol;
  try {
    sol = newton_solve(G, guess, opt.corrector);
  } catch (const Error& e) {
    throw Error(ErrorKind::CorrectorDiverged, std::string("at t_b = ") + fmt17(t_b) + ": " + e.what());
  }
  CurveSample cs;
  cs.t_b = t_b;
  cs.sigma = sol.y;
  cs.point = exp_map(sys, ControlLaw::bang(prob.bang_sign), -t_b, sol.y.head<4>(), tol);
  cs.stratum = t_b < t_star ? Stratum::Minus : (t_b > t_star ? Stratum::Plus : Stratum::Zero);
  cs.g_residual = sol.residual_norm;
  return cs;
}

}  // namespace detail

/// Traces σ(t_b) solving G(t_b, σ) = 0 on (t_b* - ε, t_b* + ε), outward from
/// the seed in both directions. Nodes are Chebyshev-clustered around t_b*,
/// plus the stencil t_b* ± h, ± 2h used for derivatives.
inline SwitchingCurve continue_switching_curve(const PlanarAffineSystem& sys, const PriorLiftProblem& prob,
                                               const PriorSaturationLift& lift, const ContinuationOptions& opt = {},
                                               const ode::Options& tol = shooting_tolerances()) {
  if (!lift.report.a3)
    throw Error(ErrorKind::AssumptionViolated, prob.label + ": G-block not invertible at the lift");
  SwitchingCurve c;
  c.t_b_star = lift.t_b_star;
  c.eps = opt.eps > 0 ? opt.eps : std::min(0.2 * lift.t_b_star, 0.5);
  c.stencil_h = opt.stencil_rel * lift.t_b_star;

  std::vector<double> offs;
  const int n = std::max(opt.n_samples, 5);
  for (int j = 0; j < n; ++j) {
    const double o = std::cos(std::numbers::pi * (2.0 * j + 1.0) / (2.0 * n));
    if (std::abs(o) > 1e-14) offs.push_back(c.eps * o);
  }
  for (double k : {-2.0, -1.0, 1.0, 2.0}) offs.push_back(k * c.stencil_h);

  VecX seed(prob.dim() - 1);
  seed << lift.z_b_star, lift.lambda;
  CurveSample s0;
  s0.t_b = c.t_b_star;
  s0.sigma = seed;
  s0.point = lift.z_e;
  s0.stratum = Stratum::Zero;
  s0.g_residual = detail::g_residual(sys, prob, c.t_b_star, seed, tol).lpNorm<Eigen::Infinity>();
  c.samples.push_back(s0);

  for (int side : {-1, 1}) {
    std::vector<double> targets;
    for (double o : offs)
      if (o * side > 0) targets.push_back(c.t_b_star + o);
    std::sort(targets.begin(), targets.end(), [side](double a, double b) { return side * a < side * b; });

    double t_prev = c.t_b_star, t_prev2 = c.t_b_star;
    VecX s_prev = seed, s_prev2 = seed;
    bool have_two = false;
    for (double target : targets) {
      double t_goal = target;
      int halvings = 0;
      while (true) {
        VecX guess = s_prev;
        if (have_two && t_prev != t_prev2)
          guess = s_prev + (s_prev - s_prev2) * ((t_goal - t_prev) / (t_prev - t_prev2));
        try {
          CurveSample cs = detail::correct(sys, prob, t_goal, guess, c.t_b_star, opt, tol);
          t_prev2 = t_prev;
          s_prev2 = s_prev;
          t_prev = t_goal;
          s_prev = cs.sigma;
          have_two = true;
          if (t_goal == target) {
            c.samples.push_back(std::move(cs));
            break;
          }
          t_goal = target;  // intermediate node reached, retry the real target
          halvings = 0;
        } catch (const Error& e) {
          if (++halvings > opt.max_halvings) throw;
          t_goal = 0.5 * (t_prev + t_goal);
        }
      }
    }
  }
  std::sort(c.samples.begin(), c.samples.end(), [](const CurveSample& a, const CurveSample& b) { return a.t_b < b.t_b; });
  return c;
}

// ------------------------------------------------------------ certificates

namespace detail {

/// Angle in [0, π] between nonzero vectors, accurate near 0.
inline double angle_between(const VecX& a, const VecX& b) {
  const VecX ua = a / a.norm(), ub = b / b.norm();
  return 2.0 * std::atan2((ua - ub).norm(), (ua + ub).norm());
}

template <class Get>
VecX five_point(const SwitchingCurve& c, Get&& get) {
  const double t = c.t_b_star, h = c.stencil_h;
  return (-get(c.at(t + 2 * h)) + 8.0 * get(c.at(t + h)) - 8.0 * get(c.at(t - h)) + get(c.at(t - 2 * h))) /
         (12.0 * h);
}

}  // namespace detail

struct TangencyCertificate {
  Vec4 dphi;        ///< FD derivative of t_b -> Σ point at t_b*
  Vec4 hplus_at_ze;  ///< H±-field at z_e
  double angle = 0.0;  ///< between dphi and -H±(z_e)
  double state_angle = 0.0;
  double mismatch = 0.0;  ///< ||dphi + H±(z_e)|| / ||H±(z_e)||
  double sigma_prime_norm = 0.0;
  double sigma_scale = 0.0;
  bool tangent = false;
  bool sigma_flat = false;
  double angle_threshold = 0.0;
};

/// Verdict thresholds. The defaults assume shooting-grade integration; a
/// coarser integrator widens them (the curve derivative inherits its error).
struct TangencyThresholds {
  double angle = 1e-5;
  double mismatch = 1e-4;
  double sigma_flat = 1e-5;

  static TangencyThresholds for_tolerance(const ode::Options& tol) {
    TangencyThresholds t;
    t.angle = std::max(t.angle, 10.0 * tol.rtol);
    t.mismatch = std::max(t.mismatch, 10.0 * tol.rtol);
    t.sigma_flat = std::max(t.sigma_flat, 10.0 * tol.rtol);
    return t;
  }
};

inline TangencyCertificate certify_tangency(const PlanarAffineSystem& sys, const PriorLiftProblem& prob,
                                            const PriorSaturationLift& lift, const SwitchingCurve& curve,
                                            const TangencyThresholds& thr = {}) {
  if (curve.count(Stratum::Minus) < 5 || curve.count(Stratum::Plus) < 5)
    throw Error(ErrorKind::InvalidConfig, "tangency check needs at least 5 curve samples on each side");
  TangencyCertificate t;
  t.dphi = detail::five_point(curve, [](const CurveSample& s) { return VecX(s.point); });
  const VecX dsigma = detail::five_point(curve, [](const CurveSample& s) { return s.sigma; });
  t.hplus_at_ze = hamiltonian_vector_field(sys, ControlLaw::bang(prob.bang_sign), lift.z_e);
  if (t.dphi.norm() < 1e-12 || t.hplus_at_ze.norm() < 1e-12)
    throw Error(ErrorKind::DegenerateDirection, "vanishing curve or orbit direction");
  t.angle = detail::angle_between(t.dphi, -t.hplus_at_ze);
  const VecX dx = t.dphi.head<2>(), hx = t.hplus_at_ze.head<2>();
  t.state_angle = detail::angle_between(dx, -hx);
  t.mismatch = (t.dphi + t.hplus_at_ze).norm() / t.hplus_at_ze.norm();
  t.sigma_prime_norm = dsigma.norm();
  t.sigma_scale = std::max(1.0, curve.at(curve.t_b_star).sigma.norm());
  t.angle_threshold = thr.angle;
  t.tangent = t.angle <= thr.angle && t.mismatch <= thr.mismatch;
  t.sigma_flat = t.sigma_prime_norm <= thr.sigma_flat * t.sigma_scale;
  return t;
}

/// -(H_fg(z), H_ffg(z) + H_gfg(z)).
inline Vec2 transversality_closed_form(const PlanarAffineSystem& sys, const Vec4& z) {
  return -Vec2(lift(sys, Lift::FG, z), lift(sys, Lift::FFG, z) + lift(sys, Lift::GFG, z));
}

struct TransversalityCertificate {
  Vec2 fd_vector;      ///< ξ'(z_e) φ'(t_b*)
  Vec2 closed_form;
  Vec2 xi_singular_values;
  double rel_error = 0.0;
  bool transverse = false;
};

inline TransversalityCertificate certify_transversality(const PlanarAffineSystem& sys, const PriorSaturationLift& pl,
                                                        const TangencyCertificate& tan) {
  auto xi = [&](const VecX& z) {
    VecX r(2);
    r << lift(sys, Lift::G, z), lift(sys, Lift::FG, z);
    return r;
  };
  const MatX J = central_jacobian(xi, pl.z_e, 1e-6);
  Eigen::JacobiSVD<MatX> svd(J);
  TransversalityCertificate t;
  t.xi_singular_values = svd.singularValues().head<2>();
  if (!(t.xi_singular_values[1] > 1e-10 * std::max(1.0, t.xi_singular_values[0])))
    throw Error(ErrorKind::NotSubmersion, "(H_g, H_fg) has rank < 2 at z_e");
  t.fd_vector = J * tan.dphi;
  t.closed_form = transversality_closed_form(sys, pl.z_e);
  t.rel_error = (t.fd_vector - t.closed_form).norm() / t.closed_form.norm();
  t.transverse = t.closed_form.norm() > 1e-8 && t.rel_error <= 1e-3;
  return t;
}

// --------------------------------------------------- setting (Assumption 1)

struct SettingItem {
  std::string id;
  std::string description;
  bool pass = false;
  double evidence = 0.0;
  std::string note;
};

struct SettingReport {
  std::string model;
  std::vector<SettingItem> items;

  bool all_pass() const {
    return std::all_of(items.begin(), items.end(), [](const SettingItem& i) { return i.pass; });
  }
  const SettingItem& item(const std::string& id) const {
    for (const auto& i : items)
      if (i.id == id) return i;
    throw Error(ErrorKind::InvalidConfig, "no setting item " + id);
  }
};

namespace detail {

inline SettingItem saturation_item(const PlanarAffineSystem& sys, const SingularLocus& locus,
                                   std::optional<SaturationPoint>& sat) {
  SettingItem it{"ii", "unique saturation point, psi along the locus increasing", false, 0.0, ""};
  try {
    sat = find_saturation_point(sys, locus, 1);
    it.evidence = sat->tau;
    it.pass = sat->sign_changes == 1 && sat->monotone;
    if (!sat->monotone) it.note = "NonMonotone";
    if (sat->sign_changes != 1) it.note += (it.note.empty() ? "" : "; ") + std::to_string(sat->sign_changes) + " roots";
  } catch (const Error& e) {
    it.note = std::string(to_string(e.kind()));
  }
  return it;
}

inline SettingItem legendre_item(const PlanarAffineSystem& sys, const SingularLocus& locus) {
  SettingItem it{"iii", "Legendre-Clebsch margin positive where |psi| <= 1 on the locus", true, INFINITY, ""};
  int used = 0;
  for (int i = 0; i < 201; ++i) {
    const double tau = locus.lo + locus.width() * (i + 0.5) / 201;
    const Vec2 x = locus.zeta(tau);
    double psi;
    try {
      psi = singular_feedback(sys, x);
    } catch (const Error&) {
      continue;
    }
    if (std::abs(psi) > 1.0) continue;
    ++used;
    it.evidence = std::min(it.evidence, legendre_clebsch_margin(sys, x));
  }
  it.pass = used > 0 && it.evidence > 0.0;
  it.note = std::to_string(used) + " admissible samples";
  return it;
}

/// Samples of the u = const state trajectory from x (adjoint unused).
inline ExtremalTrajectory state_flow(const PlanarAffineSystem& sys, double u, const Vec2& x, double horizon,
                                     const ZEvent* ev = nullptr) {
  return flow(sys, ControlLaw::constant(u), stack(x, Vec2::Zero()), horizon, {}, ev);
}

}  // namespace detail

/// Assumption 1 items (i)-(v) for the fed-batch model, checked on sample grids.
inline SettingReport certify_fedbatch_setting(const FedBatchParams& P) {
  SettingReport rep;
  rep.model = "fedbatch";
  const auto sys = fedbatch_system(P, false);

  // cell centres: on s = s_in itself δ0 vanishes when M = 0
  SettingItem i1{"i", "delta0 < 0 on a 50x50 grid of the domain", false, -INFINITY, ""};
  for (int a = 0; a < 50; ++a)
    for (int b = 0; b < 50; ++b)
      i1.evidence = std::max(i1.evidence,
                             collinearity_det(sys, Vec2(P.s_in * (a + 0.5) / 50.0, P.v_max * (b + 0.5) / 50.0)));
  i1.pass = i1.evidence < 0.0;
  rep.items.push_back(i1);

  std::optional<SaturationPoint> sat;
  rep.items.push_back(detail::saturation_item(sys, fedbatch_locus(P), sat));
  rep.items.push_back(detail::legendre_item(sys, fedbatch_locus(P)));

  SettingItem i4{"iv", "u = -1 semi-orbit from x* misses the target", false, 0.0, ""};
  SettingItem i5{"v", "target reachable from x* (u = +1 to v_max, then u = -1 to s_ref)", false, 0.0, ""};
  if (sat) {
    // target segment (0, s_ref] x {v_max}
    auto dist = [&P](const Vec2& x) {
      const double ds = std::max(0.0, x[0] - P.s_ref);
      return std::hypot(ds, x[1] - P.v_max);
    };
    const auto tr = detail::state_flow(sys, -1.0, sat->x, 20.0 * P.v_max / P.Q_max);
    double dmin = INFINITY;
    for (const auto& z : tr.z_samples()) dmin = std::min(dmin, dist(state_of(z)));
    i4.evidence = dmin;
    i4.pass = dmin > 1e-6;
    i4.note = "v stays at " + fmt17(tr.z_end()[1]);

    try {
      ZEvent up;
      up.fn = [&P](double, const Vec4& z) { return z[1] - P.v_max; };
      up.direction = 1;
      const auto a = detail::state_flow(sys, 1.0, sat->x, 100.0 * P.v_max / P.Q_max, &up);
      ZEvent down;
      down.fn = [&P](double, const Vec4& z) { return z[0] - P.s_ref; };
      down.direction = -1;
      const auto b = detail::state_flow(sys, -1.0, state_of(a.z_end()), 1e3, &down);
      i5.pass = a.t_event && b.t_event;
      if (i5.pass) i5.evidence = *a.t_event + *b.t_event;
    } catch (const Error& e) {
      i5.note = e.what();
    }
  } else {
    i4.note = i5.note = "no saturation point";
  }
  rep.items.push_back(i4);
  rep.items.push_back(i5);
  return rep;
}

/// Same items for the Bloch model; (i) is expected to fail since Δ0 meets the ball.
inline SettingReport certify_mri_setting(const MriParams& P) {
  SettingReport rep;
  rep.model = "mri";
  const auto sys = mri_system(P, false);

  SettingItem i1{"i", "delta0 of one strict sign on the Bloch ball", false, 0.0, ""};
  double lo = INFINITY, hi = -INFINITY;
  for (int a = 0; a <= 50; ++a)
    for (int b = 0; b <= 50; ++b) {
      const Vec2 x(-1.0 + 2.0 * a / 50.0, -1.0 + 2.0 * b / 50.0);
      if (!in_bloch_ball(x)) continue;
      const double d = collinearity_det(sys, x);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  i1.pass = hi < 0.0 || lo > 0.0;
  i1.evidence = hi;
  i1.note = "delta0 range [" + fmt17(lo) + ", " + fmt17(hi) + "]";
  rep.items.push_back(i1);

  const auto locus = mri_horizontal_locus(P);
  std::optional<SaturationPoint> sat;
  rep.items.push_back(detail::saturation_item(sys, locus, sat));
  rep.items.push_back(detail::legendre_item(sys, locus));

  SettingItem i4{"iv", "u = -1 semi-orbit from x_sat misses the origin", false, 0.0, ""};
  SettingItem i5{"v", "origin reachable from x_sat (u = +1 to the axis, then u = 0)", false, 0.0, ""};
  if (sat) {
    const auto tr = detail::state_flow(sys, -1.0, sat->x, 200.0);
    double dmin = INFINITY;
    for (const auto& z : tr.z_samples()) dmin = std::min(dmin, state_of(z).norm());
    i4.evidence = dmin;
    i4.pass = dmin > 1e-8;

    ZEvent axis;
    axis.fn = [](double, const Vec4& z) { return z[0]; };
    axis.direction = 1;
    const auto a = detail::state_flow(sys, 1.0, sat->x, 100.0, &axis);
    if (a.t_event && a.z_end()[1] < 0) {
      ZEvent origin;
      origin.fn = [](double, const Vec4& z) { return z[1]; };
      origin.direction = 1;
      const auto b = detail::state_flow(sys, 0.0, state_of(a.z_end()), 1e3, &origin);
      const double miss = state_of(b.z_end()).norm();
      i5.pass = b.t_event && miss <= 1e-8;
      i5.evidence = *a.t_event + b.t_end();
      i5.note = "final distance " + fmt17(miss);
    } else {
      i5.note = "u = +1 arc does not reach the lower half axis";
    }
  } else {
    i4.note = i5.note = "no saturation point";
  }
  rep.items.push_back(i4);
  rep.items.push_back(i5);
  return rep;
}

}  // namespace prisat
