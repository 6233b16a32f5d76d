#pragma once

// Fed-batch bioreactor (Haldane kinetics) and two-level Bloch (MRI) models.

#include "prisat/ode.hpp"
#include "prisat/planar_system.hpp"

#include <optional>
#include <string>
#include <vector>

namespace prisat {

// ---------------------------------------------------------------- fed-batch

struct FedBatchParams {
  double mu_h = 1.0;
  double K = 0.1;
  double K_I = 10.0;
  double s_in = 10.0;
  double Q_max = 1.0;
  double M = 0.0;  // biomass offset
  double v_max = 2.0;
  double s_ref = 0.1;

  double denom(double s) const { return K + s + s * s / K_I; }
  double mu(double s) const { return mu_h * s / denom(s); }
  double dmu(double s) const {
    const double d = denom(s);
    return mu_h * (K - s * s / K_I) / (d * d);
  }
  double d2mu(double s) const {
    const double d = denom(s), n = K - s * s / K_I;
    return mu_h * (-2.0 * s / K_I * d - 2.0 * n * (1.0 + 2.0 * s / K_I)) / (d * d * d);
  }

  /// maximizer of the Haldane rate
  double s_star() const { return std::sqrt(K * K_I); }

  /// volume where the singular feedback reaches +1 on {s = s*}
  double v_star() const { return Q_max / mu(s_star()) - M / (s_in - s_star()); }

  /// Throws ParamInvariantViolated if any structural inequality fails.
  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::ParamInvariantViolated, "fedbatch: " + m); };
    if (!(mu_h > 0 && K > 0 && K_I > 0)) bad("kinetic constants must be positive");
    if (!(Q_max > 0)) bad("Q_max must be positive");
    if (!(v_max > 0)) bad("v_max must be positive");
    if (!(s_star() > 0 && s_star() < s_in)) bad("s* = sqrt(K K_I) must lie in (0, s_in)");
    if (!(s_ref > 0 && s_ref < s_in)) bad("s_ref must lie in (0, s_in)");
    const double vs = v_star();
    if (!(vs > 0 && vs < v_max)) bad("need 0 < v* < v_max, v* = " + fmt17(vs));
  }
};

/// f = (-μ(s)(M/v + s_in - s) + Q(s_in - s)/(2v), Q/2), g = (Q(s_in - s)/(2v), Q/2).
inline PlanarAffineSystem fedbatch_system(const FedBatchParams& P, bool validate = true) {
  if (validate) P.validate();
  PlanarAffineSystem sys;
  sys.name = "fedbatch";
  const double Q = P.Q_max;

  sys.f.eval = [P, Q](const Vec2& x) {
    const double s = x[0], v = x[1];
    return Vec2(-P.mu(s) * (P.M / v + P.s_in - s) + Q * (P.s_in - s) / (2.0 * v), Q / 2.0);
  };
  sys.f.jacobian = [P, Q](const Vec2& x) {
    const double s = x[0], v = x[1];
    const double X = P.M / v + P.s_in - s;
    Mat2 j;
    j << -P.dmu(s) * X + P.mu(s) - Q / (2.0 * v), P.mu(s) * P.M / (v * v) - Q * (P.s_in - s) / (2.0 * v * v), 0.0,
        0.0;
    return j;
  };
  sys.f.hessian = [P, Q](const Vec2& x) {
    const double s = x[0], v = x[1];
    const double X = P.M / v + P.s_in - s;
    const double hss = -P.d2mu(s) * X + 2.0 * P.dmu(s);
    const double hsv = P.dmu(s) * P.M / (v * v) + Q / (2.0 * v * v);
    const double hvv = -2.0 * P.mu(s) * P.M / (v * v * v) + Q * (P.s_in - s) / (v * v * v);
    Hessian2 h;
    h[0] << hss, hsv, hsv, hvv;
    h[1].setZero();
    return h;
  };

  sys.g.eval = [P, Q](const Vec2& x) { return Vec2(Q * (P.s_in - x[0]) / (2.0 * x[1]), Q / 2.0); };
  sys.g.jacobian = [P, Q](const Vec2& x) {
    const double s = x[0], v = x[1];
    Mat2 j;
    j << -Q / (2.0 * v), -Q * (P.s_in - s) / (2.0 * v * v), 0.0, 0.0;
    return j;
  };
  sys.g.hessian = [P, Q](const Vec2& x) {
    const double s = x[0], v = x[1];
    Hessian2 h;
    h[0] << 0.0, Q / (2.0 * v * v), Q / (2.0 * v * v), Q * (P.s_in - s) / (v * v * v);
    h[1].setZero();
    return h;
  };

  Box box;
  box.lo = Vec2(0.0, 0.0);
  box.hi = Vec2(P.s_in, std::numeric_limits<double>::infinity());
  box.lo_open = {true, true};
  sys.domain = box;
  return sys;
}

/// Singular control along {s = s*} as a function of the volume.
inline double fedbatch_singular_volume_feedback(const FedBatchParams& P, double v) {
  const double ss = P.s_star();
  return 2.0 * P.mu(ss) * (P.M + v * (P.s_in - ss)) / ((P.s_in - ss) * P.Q_max) - 1.0;
}

/// Δ_SA = {s*} x (0, v_max], parametrized by v.
inline SingularLocus fedbatch_locus(const FedBatchParams& P) {
  const double ss = P.s_star();
  return {"fedbatch-vertical", [ss](double v) { return Vec2(ss, v); }, 0.0, P.v_max};
}

/// ŝ(v): the u = +1 trajectory through (s*, v_max), integrated backward in v.
/// Returns the largest v in (0, v*) where ŝ(v) = s*, if any.
inline std::optional<double> fedbatch_backward_witness(const FedBatchParams& P, const ode::Options& tol = {}) {
  const double ss = P.s_star(), vs = P.v_star();
  using S1 = ode::State<1>;
  auto rhs = [&P](double v, const S1& s) {
    S1 d;
    d[0] = -P.mu(s[0]) / P.Q_max * (P.M / v + P.s_in - s[0]) + (P.s_in - s[0]) / v;
    return d;
  };
  ode::Event<1> ev;
  ev.fn = [ss](double, const S1& s) { return s[0] - ss; };
  ev.arm = 1e-9;
  auto valid = std::function<bool(const S1&)>([&P](const S1& s) { return s[0] > 0 && s[0] <= P.s_in; });
  double v = P.v_max;
  S1 s;
  s[0] = ss;
  const double v_floor = 1e-6 * P.v_max;
  while (v > v_floor) {
    ode::Result<1> r;
    try {
      r = ode::integrate<1>(rhs, v, s, v_floor, tol, &ev, valid);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::DomainExit) return std::nullopt;
      throw;
    }
    if (!r.t_event) return std::nullopt;
    v = *r.t_event;
    if (v < vs) return v;
    s = r.sol.states().back();
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------- MRI

struct MriParams {
  double gamma = 0.1;
  double Gamma = 0.5;

  double delta() const { return gamma - Gamma; }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::ParamInvariantViolated, "mri: " + m); };
    if (!(gamma > 0)) bad("gamma must be positive");
    if (!(gamma <= 2.0 * Gamma)) bad("physical constraint gamma <= 2 Gamma violated");
    if (!(3.0 * gamma <= 2.0 * Gamma)) bad("saturation regime needs 3 gamma <= 2 Gamma");
  }
};

inline bool in_bloch_ball(const Vec2& x) { return x.squaredNorm() <= 1.0; }

/// Bloch equations in the rotating frame: f = (-Γ x1, γ(1 - x2)), g = (-x2, x1).
/// The Bloch ball is not imposed as a hard domain (the fields are polynomial);
/// simulations test it through in_bloch_ball.
inline PlanarAffineSystem mri_system(const MriParams& P, bool validate = true) {
  if (validate) P.validate();
  PlanarAffineSystem sys;
  sys.name = "mri";
  const double g = P.gamma, G = P.Gamma;
  sys.f.eval = [g, G](const Vec2& x) { return Vec2(-G * x[0], g * (1.0 - x[1])); };
  sys.f.jacobian = [g, G](const Vec2&) {
    Mat2 j;
    j << -G, 0.0, 0.0, -g;
    return j;
  };
  sys.f.hessian = [](const Vec2&) { return Hessian2{Mat2::Zero(), Mat2::Zero()}; };
  sys.g.eval = [](const Vec2& x) { return Vec2(-x[1], x[0]); };
  sys.g.jacobian = [](const Vec2&) {
    Mat2 j;
    j << 0.0, -1.0, 1.0, 0.0;
    return j;
  };
  sys.g.hessian = [](const Vec2&) { return Hessian2{Mat2::Zero(), Mat2::Zero()}; };
  return sys;
}

/// (γ(2Γ - γ)/(2δ), γ/(2δ)).
inline Vec2 mri_saturation_point(const MriParams& P) {
  P.validate();
  const double d = P.delta();
  return Vec2(P.gamma * (2.0 * P.Gamma - P.gamma) / (2.0 * d), P.gamma / (2.0 * d));
}

/// Horizontal branch x2 = γ/(2δ) inside the ball, x1 < 0, parametrized by x1.
inline SingularLocus mri_horizontal_locus(const MriParams& P) {
  const double x2 = P.gamma / (2.0 * P.delta());
  const double r = std::sqrt(std::max(0.0, 1.0 - x2 * x2));
  return {"mri-horizontal", [x2](double t) { return Vec2(t, x2); }, -r, 0.0};
}

/// Vertical axis x1 = 0, parametrized by x2.
inline SingularLocus mri_vertical_locus(const MriParams&) {
  return {"mri-vertical", [](double t) { return Vec2(0.0, t); }, -1.0, 1.0};
}

struct MriAdmissibility {
  double delta = 0.0;
  double alpha = 0.0;
  std::optional<double> beta;  // empty when |alpha| > 1
  std::optional<double> t0;
  std::optional<double> third_value;
  bool gamma_positive = false;
  bool third_pass = false;
  bool regime_ok = false;  ///< 0 < 3γ <= 2Γ
  std::optional<bool> xe_in_ball;
  std::string note;
};

/// Evaluates the three admissibility bullets; the ball test needs the lift's x_e.
inline MriAdmissibility mri_admissibility(const MriParams& P, std::optional<Vec2> x_e = std::nullopt) {
  MriAdmissibility r;
  r.delta = P.delta();
  r.alpha = r.delta / 2.0;
  r.gamma_positive = P.gamma > 0;
  r.regime_ok = P.gamma > 0 && 3.0 * P.gamma <= 2.0 * P.Gamma;
  if (!r.regime_ok) r.note = "outside the saturation regime 0 < 3 gamma <= 2 Gamma";
  if (std::abs(r.alpha) > 1.0) {
    r.note += r.note.empty() ? "ComplexBeta: |alpha| > 1" : "; ComplexBeta: |alpha| > 1";
  } else {
    r.beta = std::sqrt(1.0 - r.alpha * r.alpha);
    if (r.alpha != 0.0) {
      r.t0 = std::atan(-*r.beta / r.alpha) / *r.beta;
      const double G = P.Gamma, g = P.gamma;
      r.third_value = (2.0 * G * G - g * G + 1.0) * std::exp((r.alpha - g) * *r.t0) - 2.0 * r.delta;
      r.third_pass = *r.third_value >= 0.0;
    }
  }
  if (x_e) r.xe_in_ball = in_bloch_ball(*x_e);
  return r;
}

}  // namespace prisat
