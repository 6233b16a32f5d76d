#pragma once

#include "prisat/core.hpp"

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <string>

namespace prisat {

/// Second derivatives of a planar field: hess[i] is the Hessian of component i.
using Hessian2 = std::array<Mat2, 2>;

/// Smooth planar vector field with derivative access up to second order.
/// `hessian` may be empty, in which case nested brackets are unavailable.
struct VectorField2 {
  std::function<Vec2(const Vec2&)> eval;
  std::function<Mat2(const Vec2&)> jacobian;
  std::function<Hessian2(const Vec2&)> hessian;

  bool has_hessian() const { return static_cast<bool>(hessian); }

  /// Builds jacobian and hessian by central differences of `fn` with step
  /// cbrt(eps) * (1 + |x_i|). Analytic derivatives are preferred where known.
  static VectorField2 from_eval(std::function<Vec2(const Vec2&)> fn) {
    VectorField2 vf;
    vf.eval = fn;
    vf.jacobian = [fn](const Vec2& x) { return central_jacobian(fn, x); };
    vf.hessian = [fn](const Vec2& x) {
      auto jac = [fn](const Vec2& y) { return central_jacobian(fn, y); };
      Hessian2 h;
      const double eps = std::cbrt(std::numeric_limits<double>::epsilon());
      std::array<Mat2, 2> djac;
      for (int k = 0; k < 2; ++k) {
        const double step = eps * (1.0 + std::abs(x[k]));
        Vec2 xp = x, xm = x;
        xp[k] += step;
        xm[k] -= step;
        djac[k] = (jac(xp) - jac(xm)) / (2.0 * step);
      }
      // h[i](j,k) = d^2 F_i / dx_j dx_k, symmetrized.
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j)
          for (int k = 0; k < 2; ++k) h[i](j, k) = djac[k](i, j);
        h[i] = 0.5 * (h[i] + h[i].transpose()).eval();
      }
      return h;
    };
    return vf;
  }

  static Mat2 central_jacobian(const std::function<Vec2(const Vec2&)>& fn, const Vec2& x) {
    const double eps = std::cbrt(std::numeric_limits<double>::epsilon());
    Mat2 j;
    for (int k = 0; k < 2; ++k) {
      const double step = eps * (1.0 + std::abs(x[k]));
      Vec2 xp = x, xm = x;
      xp[k] += step;
      xm[k] -= step;
      j.col(k) = (fn(xp) - fn(xm)) / (2.0 * step);
    }
    return j;
  }
};

/// Axis-aligned validity region; each bound may be open or closed.
struct Box {
  Vec2 lo{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  Vec2 hi{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  std::array<bool, 2> lo_open{false, false};
  std::array<bool, 2> hi_open{false, false};

  bool contains(const Vec2& x) const {
    for (int i = 0; i < 2; ++i) {
      if (!std::isfinite(x[i])) return false;
      if (lo_open[i] ? x[i] <= lo[i] : x[i] < lo[i]) return false;
      if (hi_open[i] ? x[i] >= hi[i] : x[i] > hi[i]) return false;
    }
    return true;
  }
};

/// Tolerances for the degeneracy guards around the bracket quotients.
struct Tolerances {
  double collinear = 1e-12;  ///< |δ₀| <= collinear * (1 + |f||g|) means collinear
  double legendre = 1e-12;   ///< |det(g,[g,[f,g]])| guard for ψ
  double locus = 1e-10;      ///< |δ_SA| <= locus means x lies on Δ_SA
};

/// Single-input planar control-affine system x' = f(x) + u g(x).
struct PlanarAffineSystem {
  std::string name;
  VectorField2 f;
  VectorField2 g;
  std::optional<Box> domain;
  Tolerances tol;

  bool in_domain(const Vec2& x) const { return !domain || domain->contains(x); }

  void require_domain(const Vec2& x) const {
    if (!in_domain(x))
      throw Error(ErrorKind::DomainError,
                  name + ": point (" + std::to_string(x[0]) + ", " + std::to_string(x[1]) +
                      ") outside the validity region");
  }

  Vec2 velocity(const Vec2& x, double u) const { return f.eval(x) + u * g.eval(x); }
};

enum class Bracket { FG, FFG, GFG };

/// Everything bracket-related at one point, evaluated once.
struct BracketData {
  Vec2 f, g;
  Mat2 df, dg;
  Vec2 fg;
  Mat2 dfg;  ///< Jacobian of [f,g]; only valid when `nested` is true
  Vec2 ffg, gfg;
  bool nested = false;
};

namespace detail {

/// Jacobian of x -> A(x) b(x) where A = Db, i.e. d/dx (Db * a).
inline Mat2 jac_of_product(const Hessian2& hb, const Mat2& db, const Vec2& a, const Mat2& da) {
  Mat2 out;
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 2; ++k) {
      double s = 0.0;
      for (int j = 0; j < 2; ++j) s += hb[i](j, k) * a[j] + db(i, j) * da(j, k);
      out(i, k) = s;
    }
  return out;
}

}  // namespace detail

/// Evaluates f, g, their Jacobians and the brackets [f,g], [f,[f,g]],
/// [g,[f,g]] at x. Nested brackets are computed only if `nested` is set.
/// The unchecked form skips the domain test (used inside ODE right-hand
/// sides, where Runge-Kutta stages may probe just outside the region).
inline BracketData bracket_data_unchecked(const PlanarAffineSystem& sys, const Vec2& x, bool nested = true) {
  BracketData b;
  b.f = sys.f.eval(x);
  b.g = sys.g.eval(x);
  b.df = sys.f.jacobian(x);
  b.dg = sys.g.jacobian(x);
  b.fg = b.dg * b.f - b.df * b.g;
  if (!nested) return b;
  if (!sys.f.has_hessian() || !sys.g.has_hessian())
    throw Error(ErrorKind::DerivativeUnavailable, sys.name + ": nested brackets need hessians");
  const Hessian2 hf = sys.f.hessian(x);
  const Hessian2 hg = sys.g.hessian(x);
  b.dfg = detail::jac_of_product(hg, b.dg, b.f, b.df) - detail::jac_of_product(hf, b.df, b.g, b.dg);
  b.ffg = b.dfg * b.f - b.df * b.fg;
  b.gfg = b.dfg * b.g - b.dg * b.fg;
  b.nested = true;
  return b;
}

inline BracketData bracket_data(const PlanarAffineSystem& sys, const Vec2& x, bool nested = true) {
  sys.require_domain(x);
  return bracket_data_unchecked(sys, x, nested);
}

/// [a,b](x) = Db(x) a(x) - Da(x) b(x), with FFG = [f,[f,g]] and GFG = [g,[f,g]].
inline Vec2 lie_bracket(const PlanarAffineSystem& sys, Bracket which, const Vec2& x) {
  const auto b = bracket_data(sys, x, which != Bracket::FG);
  switch (which) {
    case Bracket::FG: return b.fg;
    case Bracket::FFG: return b.ffg;
    case Bracket::GFG: return b.gfg;
  }
  return b.fg;
}

/// δ₀(x) = det(f(x), g(x)).
inline double collinearity_det(const PlanarAffineSystem& sys, const Vec2& x) {
  sys.require_domain(x);
  return det2(sys.f.eval(x), sys.g.eval(x));
}

/// δ_SA(x) = det(g(x), [f,g](x)).
inline double singular_det(const PlanarAffineSystem& sys, const Vec2& x) {
  const auto b = bracket_data(sys, x, false);
  return det2(b.g, b.fg);
}

inline bool is_collinear(const PlanarAffineSystem& sys, const BracketData& b) {
  return std::abs(det2(b.f, b.g)) <= sys.tol.collinear * (1.0 + b.f.norm() * b.g.norm());
}

struct AlphaBeta {
  double alpha;
  double beta;
};

/// Coefficients of [f,g] = α f + β g, defined off the collinearity set.
inline AlphaBeta alpha_beta(const PlanarAffineSystem& sys, const Vec2& x) {
  const auto b = bracket_data(sys, x, false);
  if (is_collinear(sys, b))
    throw Error(ErrorKind::CollinearityDegenerate, sys.name + ": f and g collinear");
  const double d0 = det2(b.f, b.g);
  return {-det2(b.g, b.fg) / d0, det2(b.f, b.fg) / d0};
}

/// det(g, [g,[f,g]]); positivity is the strict Legendre–Clebsch condition on Δ_SA.
inline double legendre_clebsch_margin(const PlanarAffineSystem& sys, const Vec2& x) {
  const auto b = bracket_data(sys, x, true);
  return det2(b.g, b.gfg);
}

/// State feedback ψ(x) = -det(g,[f,[f,g]]) / det(g,[g,[f,g]]).
inline double singular_feedback(const PlanarAffineSystem& sys, const Vec2& x) {
  const auto b = bracket_data(sys, x, true);
  const double den = det2(b.g, b.gfg);
  if (std::abs(den) <= sys.tol.legendre)
    throw Error(ErrorKind::LegendreDegenerate, sys.name + ": det(g,[g,[f,g]]) vanishes");
  return -det2(b.g, b.ffg) / den;
}

/// Central-difference gradient of a scalar field on the plane.
template <class Fn>
Vec2 fd_gradient(Fn&& fn, const Vec2& x, double rel_step = 1e-6) {
  Vec2 grad;
  for (int k = 0; k < 2; ++k) {
    const double step = rel_step * (1.0 + std::abs(x[k]));
    Vec2 xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    grad[k] = (fn(xp) - fn(xm)) / (2.0 * step);
  }
  return grad;
}

/// Newton projection of x onto Δ_SA along ∇δ_SA; returns nullopt when the
/// iteration leaves the domain or fails to reach |δ_SA| <= tol.locus.
inline std::optional<Vec2> project_to_locus(const PlanarAffineSystem& sys, Vec2 x, int max_iter = 50) {
  auto dsa = [&](const Vec2& y) { return singular_det(sys, y); };
  for (int it = 0; it < max_iter; ++it) {
    if (!sys.in_domain(x)) return std::nullopt;
    const double v = dsa(x);
    if (std::abs(v) <= sys.tol.locus) return x;
    const Vec2 grad = fd_gradient(dsa, x);
    const double n2 = grad.squaredNorm();
    if (n2 == 0.0 || !std::isfinite(n2)) return std::nullopt;
    x -= (v / n2) * grad;
  }
  if (sys.in_domain(x) && std::abs(dsa(x)) <= sys.tol.locus) return x;
  return std::nullopt;
}

/// One-to-one parametrization of a branch of Δ_SA over the open interval (lo, hi).
struct SingularLocus {
  std::string branch;
  std::function<Vec2(double)> zeta;
  double lo = 0.0;
  double hi = 1.0;

  double width() const { return hi - lo; }
};

}  // namespace prisat
