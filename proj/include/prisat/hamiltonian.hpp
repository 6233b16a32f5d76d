#pragma once

// Hamiltonian lifts, extremal flows and switching functions on T*R^2.
// The cost multiplier is fixed to p0 = -1 (normal extremals), so the maximized
// Hamiltonian equals 1 along every extremal produced here.

#include "prisat/ode.hpp"
#include "prisat/planar_system.hpp"

#include <ostream>
#include <string>

namespace prisat {

/// z = (x1, x2, p1, p2).
using CotangentPoint = Vec4;

inline Vec2 state_of(const CotangentPoint& z) { return z.head<2>(); }
inline Vec2 adjoint_of(const CotangentPoint& z) { return z.tail<2>(); }

inline constexpr double kCostMultiplier = -1.0;

enum class Lift { F, G, FG, FFG, GFG, Plus, Minus, Sing };

class ControlLaw {
 public:
  enum class Kind { BangPlus, BangMinus, Singular, Constant };

  static ControlLaw plus() { return ControlLaw(Kind::BangPlus, 1.0); }
  static ControlLaw minus() { return ControlLaw(Kind::BangMinus, -1.0); }
  static ControlLaw singular() { return ControlLaw(Kind::Singular, 0.0); }
  static ControlLaw constant(double c) {
    if (!(std::abs(c) <= 1.0))
      throw Error(ErrorKind::InvalidConfig, "constant control " + std::to_string(c) + " violates |u| <= 1");
    return ControlLaw(Kind::Constant, c);
  }
  static ControlLaw bang(int sign) { return sign >= 0 ? plus() : minus(); }

  Kind kind() const { return kind_; }
  bool is_singular() const { return kind_ == Kind::Singular; }
  /// control value for the non-feedback laws
  double value() const { return c_; }

  std::string label() const {
    switch (kind_) {
      case Kind::BangPlus: return "B+";
      case Kind::BangMinus: return "B-";
      case Kind::Singular: return "S";
      case Kind::Constant: return c_ == 0.0 ? "S0" : "C(" + fmt17(c_) + ")";
    }
    return "?";
  }

 private:
  ControlLaw(Kind k, double c) : kind_(k), c_(c) {}
  Kind kind_;
  double c_;
};

namespace detail {

inline double legendre_guard(const PlanarAffineSystem& sys, const Vec2& p) {
  return sys.tol.legendre * std::max(1.0, p.norm());
}

inline double us_from(const PlanarAffineSystem& sys, const BracketData& b, const Vec2& p) {
  const double hgfg = p.dot(b.gfg);
  if (std::abs(hgfg) <= legendre_guard(sys, p))
    throw Error(ErrorKind::LegendreDegenerate, sys.name + ": H_[g,[f,g]] vanishes");
  return -p.dot(b.ffg) / hgfg;
}

}  // namespace detail

/// p . X(x) for the requested field; Plus/Minus/Sing are H_f +- H_g, H_f + u_s H_g.
inline double lift(const PlanarAffineSystem& sys, Lift which, const CotangentPoint& z) {
  const Vec2 x = state_of(z), p = adjoint_of(z);
  const bool nested = which == Lift::FFG || which == Lift::GFG || which == Lift::Sing;
  const auto b = bracket_data(sys, x, nested);
  switch (which) {
    case Lift::F: return p.dot(b.f);
    case Lift::G: return p.dot(b.g);
    case Lift::FG: return p.dot(b.fg);
    case Lift::FFG: return p.dot(b.ffg);
    case Lift::GFG: return p.dot(b.gfg);
    case Lift::Plus: return p.dot(b.f + b.g);
    case Lift::Minus: return p.dot(b.f - b.g);
    case Lift::Sing: return p.dot(b.f) + detail::us_from(sys, b, p) * p.dot(b.g);
  }
  return 0.0;
}

/// u_s(z) = -H_[f,[f,g]](z) / H_[g,[f,g]](z).
inline double singular_control_z(const PlanarAffineSystem& sys, const CotangentPoint& z) {
  const auto b = bracket_data(sys, state_of(z), true);
  return detail::us_from(sys, b, adjoint_of(z));
}

inline double control_value(const PlanarAffineSystem& sys, const ControlLaw& law, const CotangentPoint& z) {
  if (!law.is_singular()) return law.value();
  return singular_control_z(sys, z);
}

/// Maximized Hamiltonian H_f + u H_g under the given law (without p0).
inline double hamiltonian_value(const PlanarAffineSystem& sys, const ControlLaw& law, const CotangentPoint& z) {
  const double u = control_value(sys, law, z);
  return lift(sys, Lift::F, z) + u * lift(sys, Lift::G, z);
}

namespace detail {

inline Vec4 hvf_unchecked(const PlanarAffineSystem& sys, const ControlLaw& law, const Vec4& z) {
  const Vec2 x = z.head<2>(), p = z.tail<2>();
  const auto b = bracket_data_unchecked(sys, x, law.is_singular());
  // singular law: u frozen at u_s(z), derivative of the quotient dropped
  const double u = law.is_singular() ? us_from(sys, b, p) : law.value();
  Vec4 out;
  out.head<2>() = b.f + u * b.g;
  out.tail<2>() = -(b.df + u * b.dg).transpose() * p;
  return out;
}

}  // namespace detail

/// (dx/dt, dp/dt) = (f + u g, -(Df + u Dg)^T p).
inline Vec4 hamiltonian_vector_field(const PlanarAffineSystem& sys, const ControlLaw& law, const CotangentPoint& z) {
  sys.require_domain(state_of(z));
  return detail::hvf_unchecked(sys, law, z);
}

struct ExtremalTrajectory {
  ControlLaw law = ControlLaw::plus();
  ode::DenseSolution<4> sol;
  ode::Stats stats;
  ode::Options tol;
  std::optional<double> t_event;
  int event_index = -1;

  double t_begin() const { return sol.t_begin(); }
  double t_end() const { return sol.t_end(); }
  CotangentPoint z(double t) const { return sol(t); }
  CotangentPoint z_end() const { return sol.states().back(); }
  const std::vector<double>& t_grid() const { return sol.times(); }
  const std::vector<Vec4>& z_samples() const { return sol.states(); }
};

/// Scalar event on the cotangent trajectory.
using ZEvent = ode::Event<4>;

/// Integrates the extremal flow of `law` from z0 over time t (t < 0 runs
/// backward). Leaving the system domain raises DomainExit.
inline ExtremalTrajectory flow(const PlanarAffineSystem& sys, const ControlLaw& law, const CotangentPoint& z0,
                               double t, const ode::Options& tol, std::span<const ZEvent> events) {
  if (!sys.in_domain(state_of(z0))) sys.require_domain(state_of(z0));
  auto rhs = [&](double, const Vec4& z) { return detail::hvf_unchecked(sys, law, z); };
  std::function<bool(const Vec4&)> valid;
  if (sys.domain) valid = [&](const Vec4& z) { return sys.in_domain(z.head<2>()); };
  auto res = ode::integrate<4>(rhs, 0.0, z0, t, tol, events, valid);
  ExtremalTrajectory tr;
  tr.law = law;
  tr.sol = std::move(res.sol);
  tr.stats = res.stats;
  tr.tol = tol;
  tr.t_event = res.t_event;
  tr.event_index = res.event_index;
  return tr;
}

inline ExtremalTrajectory flow(const PlanarAffineSystem& sys, const ControlLaw& law, const CotangentPoint& z0,
                               double t, const ode::Options& tol = {}, const ZEvent* event = nullptr) {
  std::span<const ZEvent> evs;
  if (event) evs = std::span<const ZEvent>(event, 1);
  return flow(sys, law, z0, t, tol, evs);
}

/// exp(t H_law)(z0).
inline CotangentPoint exp_map(const PlanarAffineSystem& sys, const ControlLaw& law, double t,
                              const CotangentPoint& z0, const ode::Options& tol = {}) {
  if (t == 0.0) return z0;
  return flow(sys, law, z0, t, tol).z_end();
}

struct SwitchingValues {
  double phi;
  double phidot;
};

/// (H_g, H_[f,g]) at z(t).
inline SwitchingValues switching_data(const PlanarAffineSystem& sys, const ExtremalTrajectory& traj, double t) {
  const CotangentPoint z = traj.z(t);
  return {lift(sys, Lift::G, z), lift(sys, Lift::FG, z)};
}

/// β(x) - α(x) u, the coefficient of φ in the switching-function ODE.
inline double gamma_u(const PlanarAffineSystem& sys, const Vec2& x, double u) {
  const auto ab = alpha_beta(sys, x);
  return ab.beta - ab.alpha * u;
}

/// Adjoint with H_g = 0 and H_f = 1 over x; the canonical lift of a singular
/// point (on Δ_SA it also annihilates [f,g]).
inline Vec2 singular_adjoint(const PlanarAffineSystem& sys, const Vec2& x) {
  const auto b = bracket_data(sys, x, false);
  if (is_collinear(sys, b)) throw Error(ErrorKind::CollinearityDegenerate, sys.name + ": no singular lift at x");
  Mat2 a;
  a.row(0) = b.g.transpose();
  a.row(1) = b.f.transpose();
  return a.partialPivLu().solve(Vec2(0.0, 1.0));
}

struct ExtremalChecks {
  double hamiltonian_drift = 0.0;  ///< max |H_f + u H_g - 1|
  double phi_ode_residual = 0.0;   ///< max |φ' - (γ_u φ + α)|
  std::size_t samples = 0;
  std::size_t skipped_collinear = 0;
};

/// Evaluates the conservation and φ-ODE invariants at the trajectory's step
/// points. Samples with |δ0| below the collinearity guard are skipped.
inline ExtremalChecks check_extremal(const PlanarAffineSystem& sys, const ExtremalTrajectory& traj) {
  ExtremalChecks c;
  for (const Vec4& z : traj.z_samples()) {
    const Vec2 x = state_of(z), p = adjoint_of(z);
    const auto b = bracket_data_unchecked(sys, x, traj.law.is_singular());
    const double u = traj.law.is_singular() ? detail::us_from(sys, b, p) : traj.law.value();
    const double phi = p.dot(b.g), phidot = p.dot(b.fg);
    c.hamiltonian_drift = std::max(c.hamiltonian_drift, std::abs(p.dot(b.f) + u * phi + kCostMultiplier));
    ++c.samples;
    if (is_collinear(sys, b)) {
      ++c.skipped_collinear;
      continue;
    }
    const double d0 = det2(b.f, b.g);
    const double alpha = -det2(b.g, b.fg) / d0, beta = det2(b.f, b.fg) / d0;
    c.phi_ode_residual = std::max(c.phi_ode_residual, std::abs(phidot - ((beta - alpha * u) * phi + alpha)));
  }
  return c;
}

/// CSV with columns t,x1,x2,p1,p2,u,phi,phidot at the integrator's step points.
inline void write_trajectory_csv(std::ostream& os, const PlanarAffineSystem& sys, const ExtremalTrajectory& traj,
                                 bool header = true) {
  if (header) os << "t,x1,x2,p1,p2,u,phi,phidot\n";
  const auto& ts = traj.t_grid();
  const auto& zs = traj.z_samples();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Vec4& z = zs[i];
    const auto b = bracket_data_unchecked(sys, state_of(z), traj.law.is_singular());
    const double u = traj.law.is_singular() ? detail::us_from(sys, b, adjoint_of(z)) : traj.law.value();
    os << fmt17(ts[i]) << ',' << fmt17(z[0]) << ',' << fmt17(z[1]) << ',' << fmt17(z[2]) << ',' << fmt17(z[3])
       << ',' << fmt17(u) << ',' << fmt17(adjoint_of(z).dot(b.g)) << ',' << fmt17(adjoint_of(z).dot(b.fg))
       << '\n';
  }
}

}  // namespace prisat
